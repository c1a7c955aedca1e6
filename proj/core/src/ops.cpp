#include "rafa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "rafa/error.hpp"

namespace rafa {

using detail::grad_of;
using detail::make_result;
using detail::Node;

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + t.shape_str());
  }
}

enum class Broadcast { none, row_vector };

Broadcast binary_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (!b.defined()) throw ContractError(std::string(op) + ": missing right operand");
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.rank() == 1 && b.dim(0) == a.shape().back()) return Broadcast::row_vector;
  throw DimensionError(std::string(op) + ": cannot broadcast " + b.shape_str() + " onto " +
                       a.shape_str());
}

template <typename Fwd, typename Dfdx>
Tensor unary(const Tensor& a, Fwd fwd, Dfdx dfdx) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return make_result(a.shape(), std::move(out), {a}, [dfdx](Node& n) {
    auto ga = grad_of(*n.inputs[0]);
    const auto& x = n.inputs[0]->data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * dfdx(x[i], n.data[i]);
  });
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElementwiseOp::add:
      return add(a, b);
    case ElementwiseOp::mul:
      return mul(a, b);
    case ElementwiseOp::tanh:
      return tanh(a);
    case ElementwiseOp::sigmoid:
      return sigmoid(a);
    case ElementwiseOp::relu:
      return relu(a);
  }
  throw ContractError("elementwise: unknown op");
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast layout = binary_layout(a, b, "add");
  const std::size_t width = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i % width];
  return make_result(a.shape(), std::move(out), {a, b}, [width, layout](Node& n) {
    auto ga = grad_of(*n.inputs[0]);
    auto gb = grad_of(*n.inputs[1]);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (!ga.empty()) ga[i] += n.grad[i];
      if (!gb.empty()) gb[layout == Broadcast::none ? i : i % width] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Broadcast layout = binary_layout(a, b, "sub");
  const std::size_t width = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i % width];
  return make_result(a.shape(), std::move(out), {a, b}, [width, layout](Node& n) {
    auto ga = grad_of(*n.inputs[0]);
    auto gb = grad_of(*n.inputs[1]);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (!ga.empty()) ga[i] += n.grad[i];
      if (!gb.empty()) gb[layout == Broadcast::none ? i : i % width] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast layout = binary_layout(a, b, "mul");
  const std::size_t width = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i % width];
  return make_result(a.shape(), std::move(out), {a, b}, [width, layout](Node& n) {
    auto ga = grad_of(*n.inputs[0]);
    auto gb = grad_of(*n.inputs[1]);
    const auto& x = n.inputs[0]->data;
    const auto& y = n.inputs[1]->data;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const std::size_t j = layout == Broadcast::none ? i : i % width;
      if (!ga.empty()) ga[i] += n.grad[i] * y[j];
      if (!gb.empty()) gb[j] += n.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_clamped(const Tensor& a, double floor) {
  return unary(a, [floor](double x) { return std::log(std::max(x, floor)); },
               [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ between " + a.shape_str() + " and " +
                         b.shape_str());
  }
  std::vector<double> out(m * n, 0.0);
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = &y[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& nd) {
    auto ga = grad_of(*nd.inputs[0]);
    auto gb = grad_of(*nd.inputs[1]);
    const auto& x = nd.inputs[0]->data;
    const auto& y = nd.inputs[1]->data;
    const auto& g = nd.grad;
    if (!ga.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (!gb.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xv * g[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(rows * cols);
  auto x = a.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  }
  return make_result({cols, rows}, std::move(out), {a}, [rows, cols](Node& n) {
    auto ga = grad_of(*n.inputs[0]);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += n.grad[j * rows + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + a.shape_str() + " as " +
                         shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& n) {
    auto ga = grad_of(*n.inputs[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
  });
}

Tensor softmax(const Tensor& x) {
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  std::vector<double> out(x.numel());
  auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &v[r * width];
    double* o = &out[r * width];
    const double peak = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - peak);
      total += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) o[j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, width](Node& n) {
    auto gx = grad_of(*n.inputs[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = &n.data[r * width];
      const double* g = &n.grad[r * width];
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < width; ++j) gx[r * width + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, {x}, [](Node& n) {
    auto gx = grad_of(*n.inputs[0]);
    for (double& g : gx) g += n.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(cols, 0.0);
  auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += v[r * cols + c];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  for (double& o : out) o *= inv;
  return make_result({cols}, std::move(out), {x}, [rows, cols, inv](Node& n) {
    auto gx = grad_of(*n.inputs[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += n.grad[c] * inv;
    }
  });
}

Tensor pick(const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.numel()) {
    throw ContractError("pick: index " + std::to_string(flat_index) + " out of range for " +
                        x.shape_str());
  }
  return make_result({1}, {x.data()[flat_index]}, {x}, [flat_index](Node& n) {
    grad_of(*n.inputs[0])[flat_index] += n.grad[0];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_rank(x, 2, "gather_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  std::vector<double> out(indices.size() * cols);
  auto v = x.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw DimensionError("gather_rows: row " + std::to_string(indices[i]) +
                           " out of range for " + x.shape_str());
    }
    std::copy_n(&v[indices[i] * cols], cols, &out[i * cols]);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result({indices.size(), cols}, std::move(out), {x},
                     [idx = std::move(idx), cols](Node& n) {
                       auto gx = grad_of(*n.inputs[0]);
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           gx[idx[i] * cols + c] += n.grad[i * cols + c];
                         }
                       }
                     });
}

Tensor pool_rows(const Tensor& x, const std::vector<std::vector<std::size_t>>& groups,
                 PoolMode mode) {
  require_rank(x, 2, "pool_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (groups.empty()) throw DimensionError("pool_rows: no groups");
  auto v = x.data();
  std::vector<double> out(groups.size() * cols);
  // For max pooling, the winning source row per output element.
  std::vector<std::size_t> winner(mode == PoolMode::max ? out.size() : 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    if (members.empty()) throw DimensionError("pool_rows: empty group");
    for (std::size_t r : members) {
      if (r >= rows) {
        throw DimensionError("pool_rows: row " + std::to_string(r) + " out of range for " +
                             x.shape_str());
      }
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (mode == PoolMode::mean) {
        double acc = 0.0;
        for (std::size_t r : members) acc += v[r * cols + c];
        out[g * cols + c] = acc / static_cast<double>(members.size());
      } else {
        std::size_t best = members.front();
        for (std::size_t r : members) {
          if (v[r * cols + c] > v[best * cols + c]) best = r;
        }
        out[g * cols + c] = v[best * cols + c];
        winner[g * cols + c] = best;
      }
    }
  }
  return make_result({groups.size(), cols}, std::move(out), {x},
                     [groups, cols, mode, winner = std::move(winner)](Node& n) {
                       auto gx = grad_of(*n.inputs[0]);
                       for (std::size_t g = 0; g < groups.size(); ++g) {
                         const double share = 1.0 / static_cast<double>(groups[g].size());
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double go = n.grad[g * cols + c];
                           if (mode == PoolMode::mean) {
                             for (std::size_t r : groups[g]) gx[r * cols + c] += go * share;
                           } else {
                             gx[winner[g * cols + c] * cols + c] += go;
                           }
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t width = x.shape().back();
  if (gain.shape() != Shape{width} || bias.shape() != Shape{width}) {
    throw DimensionError("layer_norm: gain " + gain.shape_str() + " / bias " + bias.shape_str() +
                         " do not match last axis of " + x.shape_str());
  }
  const std::size_t rows = x.numel() / width;
  auto v = x.data();
  auto gm = gain.data();
  auto bs = bias.data();
  std::vector<double> out(x.numel());
  std::vector<double> normalized(x.numel());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &v[r * width];
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += in[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(width);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < width; ++j) {
      const double nv = (in[j] - mu) * rstd[r];
      normalized[r * width + j] = nv;
      out[r * width + j] = nv * gm[j] + bs[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, width, normalized = std::move(normalized), rstd = std::move(rstd)](Node& n) {
        auto gx = grad_of(*n.inputs[0]);
        auto ggain = grad_of(*n.inputs[1]);
        auto gbias = grad_of(*n.inputs[2]);
        const auto& gm = n.inputs[1]->data;
        std::vector<double> dn(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = &n.grad[r * width];
          const double* nv = &normalized[r * width];
          double mean_dn = 0.0, mean_dn_n = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            if (!gbias.empty()) gbias[j] += g[j];
            if (!ggain.empty()) ggain[j] += g[j] * nv[j];
            dn[j] = g[j] * gm[j];
            mean_dn += dn[j];
            mean_dn_n += dn[j] * nv[j];
          }
          if (gx.empty()) continue;
          mean_dn /= static_cast<double>(width);
          mean_dn_n /= static_cast<double>(width);
          for (std::size_t j = 0; j < width; ++j) {
            gx[r * width + j] += rstd[r] * (dn[j] - mean_dn - nv[j] * mean_dn_n);
          }
        }
      });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
  require_rank(x, 2, "depthwise_conv1d");
  const std::size_t len = x.dim(0), ch = x.dim(1);
  if (kernel.shape() != Shape{3, ch}) {
    throw DimensionError("depthwise_conv1d: kernel " + kernel.shape_str() +
                         " incompatible with input " + x.shape_str() + " (expected [3x" +
                         std::to_string(ch) + "])");
  }
  auto v = x.data();
  auto k = kernel.data();
  std::vector<double> out(len * ch, 0.0);
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t t = 0; t < 3; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + t) - 1;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        out[l * ch + c] += v[static_cast<std::size_t>(src) * ch + c] * k[t * ch + c];
      }
    }
  }
  return make_result({len, ch}, std::move(out), {x, kernel}, [len, ch](Node& n) {
    auto gx = grad_of(*n.inputs[0]);
    auto gk = grad_of(*n.inputs[1]);
    const auto& v = n.inputs[0]->data;
    const auto& k = n.inputs[1]->data;
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t t = 0; t < 3; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + t) - 1;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < ch; ++c) {
          const double g = n.grad[l * ch + c];
          if (!gx.empty()) gx[s * ch + c] += g * k[t * ch + c];
          if (!gk.empty()) gk[t * ch + c] += g * v[s * ch + c];
        }
      }
    }
  });
}

Tensor conv1d_separable(const Tensor& x, const Tensor& depthwise, const Tensor& pointwise,
                        const Tensor& bias) {
  require_rank(x, 2, "conv1d_separable");
  const std::size_t ch = x.dim(1);
  if (pointwise.shape() != Shape{ch, ch} || bias.shape() != Shape{ch}) {
    throw DimensionError("conv1d_separable: pointwise " + pointwise.shape_str() + " / bias " +
                         bias.shape_str() + " incompatible with input " + x.shape_str());
  }
  return relu(add(matmul(depthwise_conv1d(x, depthwise), pointwise), bias));
}

Tensor avgpool1d(const Tensor& x, std::size_t window, std::size_t stride, Padding padding) {
  require_rank(x, 2, "avgpool1d");
  if (window == 0 || stride == 0) {
    throw DimensionError("avgpool1d: window and stride must be positive");
  }
  const std::size_t len = x.dim(0), ch = x.dim(1);
  std::size_t out_len = 0;
  std::size_t pad_left = 0;
  if (padding == Padding::none) {
    if (window > len) {
      throw DimensionError("avgpool1d: window " + std::to_string(window) +
                           " exceeds length of " + x.shape_str() + " without padding");
    }
    out_len = (len - window) / stride + 1;
  } else {
    out_len = (len + stride - 1) / stride;
    const std::size_t span = (out_len - 1) * stride + window;
    pad_left = span > len ? (span - len) / 2 : 0;
  }
  // Window bounds in input coordinates, clipped to the valid range.
  std::vector<std::pair<std::size_t, std::size_t>> bounds(out_len);
  for (std::size_t o = 0; o < out_len; ++o) {
    const std::ptrdiff_t start =
        static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(pad_left);
    const std::ptrdiff_t stop = start + static_cast<std::ptrdiff_t>(window);
    bounds[o] = {static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0)),
                 static_cast<std::size_t>(std::min<std::ptrdiff_t>(stop, len))};
  }
  auto v = x.data();
  std::vector<double> out(out_len * ch, 0.0);
  for (std::size_t o = 0; o < out_len; ++o) {
    const auto [lo, hi] = bounds[o];
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t l = lo; l < hi; ++l) {
      for (std::size_t c = 0; c < ch; ++c) out[o * ch + c] += v[l * ch + c];
    }
    for (std::size_t c = 0; c < ch; ++c) out[o * ch + c] *= inv;
  }
  return make_result({out_len, ch}, std::move(out), {x},
                     [bounds = std::move(bounds), ch](Node& n) {
                       auto gx = grad_of(*n.inputs[0]);
                       for (std::size_t o = 0; o < bounds.size(); ++o) {
                         const auto [lo, hi] = bounds[o];
                         const double inv = 1.0 / static_cast<double>(hi - lo);
                         for (std::size_t l = lo; l < hi; ++l) {
                           for (std::size_t c = 0; c < ch; ++c) {
                             gx[l * ch + c] += n.grad[o * ch + c] * inv;
                           }
                         }
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t in_h = x.dim(0), in_w = x.dim(1), cin = x.dim(2);
  const std::size_t ksize = weight.dim(0);
  const std::size_t cout = weight.dim(3);
  if (weight.dim(1) != ksize || weight.dim(2) != cin || bias.shape() != Shape{cout}) {
    throw DimensionError("conv2d: weight " + weight.shape_str() + " / bias " + bias.shape_str() +
                         " incompatible with input " + x.shape_str());
  }
  if (stride == 0 || in_h + 2 * pad < ksize || in_w + 2 * pad < ksize) {
    throw DimensionError("conv2d: kernel " + std::to_string(ksize) + " with padding " +
                         std::to_string(pad) + " does not fit input " + x.shape_str());
  }
  const std::size_t out_h = (in_h + 2 * pad - ksize) / stride + 1;
  const std::size_t out_w = (in_w + 2 * pad - ksize) / stride + 1;
  auto v = x.data();
  auto w = weight.data();
  auto b = bias.data();
  std::vector<double> out(out_h * out_w * cout);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double* o = &out[(oy * out_w + ox) * cout];
      std::copy(b.begin(), b.end(), o);
      for (std::size_t ky = 0; ky < ksize; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
        for (std::size_t kx = 0; kx < ksize; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
          const double* px = &v[(static_cast<std::size_t>(iy) * in_w +
                                 static_cast<std::size_t>(ix)) * cin];
          const double* wk = &w[(ky * ksize + kx) * cin * cout];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = px[ci];
            const double* wrow = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += xv * wrow[co];
          }
        }
      }
    }
  }
  return make_result(
      {out_h, out_w, cout}, std::move(out), {x, weight, bias},
      [=](Node& n) {
        auto gx = grad_of(*n.inputs[0]);
        auto gw = grad_of(*n.inputs[1]);
        auto gb = grad_of(*n.inputs[2]);
        const auto& v = n.inputs[0]->data;
        const auto& w = n.inputs[1]->data;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const double* go = &n.grad[(oy * out_w + ox) * cout];
            if (!gb.empty()) {
              for (std::size_t co = 0; co < cout; ++co) gb[co] += go[co];
            }
            for (std::size_t ky = 0; ky < ksize; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
              for (std::size_t kx = 0; kx < ksize; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
                const std::size_t pix =
                    (static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix)) * cin;
                const std::size_t wbase = (ky * ksize + kx) * cin * cout;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  const double xv = v[pix + ci];
                  const double* wrow = &w[wbase + ci * cout];
                  double acc = 0.0;
                  if (!gw.empty()) {
                    double* gwrow = &gw[wbase + ci * cout];
                    for (std::size_t co = 0; co < cout; ++co) gwrow[co] += xv * go[co];
                  }
                  if (!gx.empty()) {
                    for (std::size_t co = 0; co < cout; ++co) acc += wrow[co] * go[co];
                    gx[pix + ci] += acc;
                  }
                }
              }
            }
          }
        }
      });
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "bilinear_resize");
  const std::size_t in_h = x.dim(0), in_w = x.dim(1), ch = x.dim(2);
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: empty target");

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const std::size_t lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      t[d] = {lo, hi, src - static_cast<double>(lo)};
    }
    return t;
  };
  auto ty = taps(in_h, out_h);
  auto tx = taps(in_w, out_w);

  auto v = x.data();
  std::vector<double> out(out_h * out_w * ch);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const Tap& a = ty[oy];
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const Tap& b = tx[ox];
      const double* p00 = &v[(a.lo * in_w + b.lo) * ch];
      const double* p01 = &v[(a.lo * in_w + b.hi) * ch];
      const double* p10 = &v[(a.hi * in_w + b.lo) * ch];
      const double* p11 = &v[(a.hi * in_w + b.hi) * ch];
      double* o = &out[(oy * out_w + ox) * ch];
      for (std::size_t c = 0; c < ch; ++c) {
        // Nested lerps reproduce a constant input exactly.
        const double top = p00[c] + b.frac * (p01[c] - p00[c]);
        const double bottom = p10[c] + b.frac * (p11[c] - p10[c]);
        o[c] = top + a.frac * (bottom - top);
      }
    }
  }
  return make_result(
      {out_h, out_w, ch}, std::move(out), {x},
      [ty = std::move(ty), tx = std::move(tx), in_w, out_w, ch](Node& n) {
        auto gx = grad_of(*n.inputs[0]);
        for (std::size_t oy = 0; oy < ty.size(); ++oy) {
          const Tap& a = ty[oy];
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const Tap& b = tx[ox];
            const double w00 = (1 - a.frac) * (1 - b.frac), w01 = (1 - a.frac) * b.frac;
            const double w10 = a.frac * (1 - b.frac), w11 = a.frac * b.frac;
            const double* g = &n.grad[(oy * out_w + ox) * ch];
            for (std::size_t c = 0; c < ch; ++c) {
              gx[(a.lo * in_w + b.lo) * ch + c] += w00 * g[c];
              gx[(a.lo * in_w + b.hi) * ch + c] += w01 * g[c];
              gx[(a.hi * in_w + b.lo) * ch + c] += w10 * g[c];
              gx[(a.hi * in_w + b.hi) * ch + c] += w11 * g[c];
            }
          }
        }
      });
}

}  // namespace rafa
