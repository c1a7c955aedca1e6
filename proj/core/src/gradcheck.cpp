#include "rafa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rafa/error.hpp"

namespace rafa {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_relative_error);
  return worst;
}

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> names;
  for (const auto& e : entries) {
    if (!e.passed) names.push_back(e.name);
  }
  return names;
}

namespace {

double eval_loss(const std::function<Tensor()>& loss_fn, const std::string& name) {
  NoGradGuard no_grad;
  const double value = loss_fn().item();
  if (!std::isfinite(value)) {
    throw NumericError("gradient_check: non-finite loss while perturbing " + name);
  }
  return value;
}

}  // namespace

GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               std::span<NamedTensor> params,
                               const GradCheckOptions& options) {
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  const Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) {
    std::string names;
    for (const auto& p : params) names += (names.empty() ? "" : ", ") + p.name;
    throw NumericError("gradient_check: non-finite loss at the unperturbed point (checking " + names +
                       ")");
  }
  loss.backward();

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    entry.size = p.tensor.numel();
    // A parameter unreachable from the loss has an all-zero analytic gradient.
    std::vector<double> analytic = p.tensor.has_grad()
                                       ? std::vector<double>(p.tensor.grad().begin(),
                                                             p.tensor.grad().end())
                                       : std::vector<double>(entry.size, 0.0);
    for (double g : analytic) {
      if (!std::isfinite(g)) {
        throw NumericError("gradient_check: non-finite analytic gradient in " + p.name);
      }
    }
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      const double up = eval_loss(loss_fn, p.name);
      values[i] = saved - options.eps;
      const double down = eval_loss(loss_fn, p.name);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double diff = std::abs(analytic[i] - numeric);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), options.relative_floor});
      const double rel = diff / denom;
      entry.max_absolute_error = std::max(entry.max_absolute_error, diff);
      if (rel > entry.max_relative_error) {
        entry.max_relative_error = rel;
        entry.worst_index = i;
      }
    }
    entry.passed = entry.max_relative_error <= options.tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace rafa
