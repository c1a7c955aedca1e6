#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "rafa/image.hpp"
#include "rafa/rng.hpp"
#include "rafa/tensor.hpp"

namespace rafa::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

inline double relative_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central differences of a scalar function of `x`'s values, computed here
// rather than through the library's gradient checker so the two can be
// compared independently.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, Tensor& x,
                                            double eps = 1e-6) {
  auto v = x.mutable_data();
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + eps;
    const double up = f();
    v[i] = saved - eps;
    const double down = f();
    v[i] = saved;
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

/// Largest relative error between x.grad() and the numeric gradient.
inline double max_gradient_error(const std::vector<double>& numeric, const Tensor& x,
                                 double floor = 1e-3) {
  double worst = 0.0;
  auto g = x.grad();
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    worst = std::max(worst, relative_error(g[i], numeric[i], floor));
  }
  return worst;
}

inline double population_std(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double mean_of(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

}  // namespace rafa::test
