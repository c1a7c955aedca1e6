#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rafa {

struct Metrics {
  std::size_t count = 0;
  std::size_t topk = 5;
  double top1 = 0.0;
  double topk_accuracy = 0.0;  // reported as "top5" when topk == 5
  double precision = 0.0;      // macro average over all classes
  double recall = 0.0;
  double f1 = 0.0;
  double cir = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Smallest over largest class count. ContractError on an empty list or a
/// zero count.
double compute_cir(std::span<const std::size_t> counts);

/// True when `label` is among the k highest scores; ties rank the lower
/// class index first.
bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k);

/// Metrics from per-sample class scores. Precision/recall of a class with
/// no predictions / no samples count as 0, as does F1 when both are 0.
/// CIR uses the classes that occur in `labels`.
Metrics compute_metrics(std::span<const std::vector<double>> scores,
                        std::span<const std::size_t> labels, std::size_t classes,
                        std::size_t topk = 5);

}  // namespace rafa
