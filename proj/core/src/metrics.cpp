#include "rafa/metrics.hpp"

#include <algorithm>
#include <string>

#include "rafa/error.hpp"

namespace rafa {

double compute_cir(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ContractError("compute_cir: no classes");
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*lo == 0) throw ContractError("compute_cir: class with zero samples");
  return static_cast<double>(*lo) / static_cast<double>(*hi);
}

bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[label] || (scores[j] == scores[label] && j < label)) ++rank;
  }
  return rank < k;
}

Metrics compute_metrics(std::span<const std::vector<double>> scores,
                        std::span<const std::size_t> labels, std::size_t classes,
                        std::size_t topk) {
  if (scores.empty()) throw ContractError("compute_metrics: empty dataset");
  if (scores.size() != labels.size()) {
    throw ContractError("compute_metrics: " + std::to_string(scores.size()) + " score rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  if (topk == 0) throw ContractError("compute_metrics: k must be positive");
  Metrics m;
  m.count = scores.size();
  m.topk = topk;
  m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t hit1 = 0, hitk = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& row = scores[i];
    if (row.size() != classes || labels[i] >= classes) {
      throw ContractError("compute_metrics: sample " + std::to_string(i) +
                          " does not match " + std::to_string(classes) + " classes");
    }
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) -
                                               row.begin());
    ++m.confusion[labels[i]][pred];
    if (pred == labels[i]) ++hit1;
    if (in_top_k(row, labels[i], topk)) ++hitk;
  }
  const double n = static_cast<double>(m.count);
  m.top1 = static_cast<double>(hit1) / n;
  m.topk_accuracy = static_cast<double>(hitk) / n;

  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  std::vector<std::size_t> present;
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t tp = m.confusion[k][k], predicted = 0, actual = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      predicted += m.confusion[j][k];
      actual += m.confusion[k][j];
    }
    const double p = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double r = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    p_sum += p;
    r_sum += r;
    f_sum += f;
    if (actual) present.push_back(actual);
  }
  m.precision = p_sum / static_cast<double>(classes);
  m.recall = r_sum / static_cast<double>(classes);
  m.f1 = f_sum / static_cast<double>(classes);
  m.cir = compute_cir(present);
  return m;
}

}  // namespace rafa
