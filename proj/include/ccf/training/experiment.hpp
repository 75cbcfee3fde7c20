#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ccf/attribution/attribution.hpp"
#include "ccf/data/dataset.hpp"
#include "ccf/model/classifier.hpp"
#include "ccf/numerics/rng.hpp"
#include "ccf/training/train.hpp"

namespace ccf {

/// Hidden widths and head layout of a ReLU MLP.
struct MlpSpec {
  std::vector<std::size_t> hidden{32, 32};
  bool head_bias = false;

  Classifier build(std::size_t input_dim, std::size_t classes, std::uint64_t seed) const {
    RngStream rng(seed, 0x6d6f64656c);
    return Classifier::mlp(input_dim, hidden, classes, rng, head_bias);
  }
};

/// One training run followed by attribution at its best and last checkpoints.
struct ExperimentCell {
  RunRecord run;
  AttributionMatrix best_matrix;
  AttributionMatrix last_matrix;
  double ra_best = 0.0, ra_last = 0.0;
  double cas_best = 0.0, cas_last = 0.0;
  double delta_cas = 0.0;
  double loss_best = 0.0, loss_last = 0.0;  // train robust loss
  std::optional<std::size_t> collapse_epoch;
  std::optional<double> cas_after_collapse;
};

/// The evaluation attack, or none when its epsilon is 0 (clean attribution).
inline std::optional<AttackConfig> attribution_attack(const TrainConfig& cfg) {
  const AttackConfig a = cfg.evaluation_attack();
  if (a.epsilon == 0.0) return std::nullopt;
  return a;
}

inline ExperimentCell run_experiment(const Dataset& train_set, const Dataset& test_set, const MlpSpec& model,
                                     const TrainConfig& cfg, const EpochObserver& observer = {}) {
  ExperimentCell cell;
  cell.run = train(model.build(train_set.dim(), train_set.class_count, cfg.seed), train_set, test_set, cfg,
                   observer);
  if (cell.run.rows.empty()) return cell;
  const auto attack = attribution_attack(cfg);
  const RngStream root(cfg.seed, 0x61747472);
  RngStream best_rng = root.split(0), last_rng = root.split(1);
  cell.best_matrix = class_attribution_matrix(cell.run.best, test_set, attack, best_rng);
  cell.last_matrix = class_attribution_matrix(cell.run.last, test_set, attack, last_rng);
  const auto& best = *cell.run.best_row();
  const auto& last = *cell.run.last_row();
  cell.ra_best = best.test_robust_acc;
  cell.ra_last = last.test_robust_acc;
  cell.loss_best = best.train_robust_loss;
  cell.loss_last = last.train_robust_loss;
  cell.cas_best = cas(cell.best_matrix);
  cell.cas_last = cas(cell.last_matrix);
  cell.delta_cas = matrix_diff(cell.best_matrix.c, cell.last_matrix.c).delta_cas;
  cell.collapse_epoch = detect_collapse(cell.run.rows);
  if (cell.collapse_epoch) cell.cas_after_collapse = cell.run.rows[*cell.collapse_epoch].cas;
  return cell;
}

/// Median; the mean of the two middle values for an even count.
inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidParameter("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace ccf
