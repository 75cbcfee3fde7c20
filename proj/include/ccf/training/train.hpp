#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ccf/attack/attack.hpp"
#include "ccf/attribution/attribution.hpp"
#include "ccf/data/dataset.hpp"
#include "ccf/errors.hpp"
#include "ccf/model/backward.hpp"
#include "ccf/model/classifier.hpp"
#include "ccf/model/sgd.hpp"
#include "ccf/numerics/rng.hpp"

namespace ccf {

enum class TrainMode { standard, at, at_ls, at_kd, fast_at };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::standard: return "standard";
    case TrainMode::at: return "at";
    case TrainMode::at_ls: return "at_ls";
    case TrainMode::at_kd: return "at_kd";
    case TrainMode::fast_at: return "fast_at";
  }
  return "?";
}

inline TrainMode parse_train_mode(const std::string& s) {
  for (TrainMode m : {TrainMode::standard, TrainMode::at, TrainMode::at_ls, TrainMode::at_kd,
                      TrainMode::fast_at}) {
    if (s == to_string(m)) return m;
  }
  throw InvalidParameter("unknown training mode '" + s + "'");
}

/// Step decay: lr = initial * factor^(number of boundaries passed), with
/// boundaries at fraction * epochs.
struct LrSchedule {
  double initial = 0.1;
  std::vector<double> decay_fractions{0.5, 0.75};
  double factor = 0.1;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  TrainMode mode = TrainMode::at;
  double ls_beta = 0.0;                // at_ls
  double kd_mix = 0.5;                 // at_kd: weight of the KL term
  double kd_temperature = 1.0;         // at_kd
  KlDirection kd_direction = KlDirection::teacher_reference;
  std::shared_ptr<const Classifier> teacher;  // at_kd, frozen
  AttackConfig attack = AttackConfig::pgd_default(Norm::linf, 8.0 / 255.0);
  std::optional<AttackConfig> eval_attack;
  std::uint64_t seed = 0;
  bool track_cas = true;
  double divergence_limit = 1e6;

  void validate() const {
    if (batch_size == 0) throw InvalidParameter("batch_size must be >= 1");
    if (!(lr.initial > 0.0)) throw InvalidParameter("initial learning rate must be > 0");
    if (!(lr.factor > 0.0)) throw InvalidParameter("lr decay factor must be > 0");
    double prev = 0.0;
    for (double f : lr.decay_fractions) {
      if (!(f > prev && f < 1.0)) {
        throw InvalidParameter("lr decay fractions must be strictly increasing in (0, 1)");
      }
      prev = f;
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidParameter("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidParameter("weight decay must be >= 0");
    if (!(ls_beta >= 0.0 && ls_beta < 1.0)) throw InvalidParameter("label smoothing beta must be in [0, 1)");
    if (!(kd_mix >= 0.0 && kd_mix <= 1.0)) throw InvalidParameter("kd mix must be in [0, 1]");
    if (!(kd_temperature > 0.0)) throw InvalidParameter("kd temperature must be > 0");
    if (mode == TrainMode::at_kd && !teacher) throw InvalidParameter("at_kd mode requires a teacher model");
    attack.validate();
    if (eval_attack) eval_attack->validate();
  }

  /// Attack used for per-epoch test robustness and attribution. Defaults to
  /// the training attack, except for fast_at, whose single-step random-start
  /// attack would hide catastrophic overfitting; that mode evaluates with
  /// 10-step PGD at the same epsilon.
  AttackConfig evaluation_attack() const {
    if (eval_attack) return *eval_attack;
    if (mode == TrainMode::fast_at) return AttackConfig::pgd_default(attack.norm, attack.epsilon);
    return attack;
  }

  LossSpec loss_spec() const {
    switch (mode) {
      case TrainMode::at_ls: return LabelSmoothing{ls_beta};
      case TrainMode::at_kd: return Distillation{kd_temperature, kd_mix, kd_direction};
      default: return CrossEntropy{};
    }
  }
};

inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  double lr = cfg.lr.initial;
  for (double f : cfg.lr.decay_fractions) {
    if (static_cast<double>(epoch) >= f * static_cast<double>(cfg.epochs)) lr *= cfg.lr.factor;
  }
  return lr;
}

struct EpochRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_robust_loss = 0.0;
  double train_robust_acc = 0.0;
  double test_clean_acc = 0.0;
  double test_robust_acc = 0.0;
  double cas = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const EpochRow& a, const EpochRow& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.epoch == b.epoch && same(a.lr, b.lr) && same(a.train_robust_loss, b.train_robust_loss) &&
           same(a.train_robust_acc, b.train_robust_acc) && same(a.test_clean_acc, b.test_clean_acc) &&
           same(a.test_robust_acc, b.test_robust_acc) && same(a.cas, b.cas);
  }
};

struct RunRecord {
  std::vector<EpochRow> rows;
  std::optional<std::size_t> best_epoch;  // argmax test_robust_acc, earliest on ties
  Classifier best;
  Classifier last;

  const EpochRow* best_row() const { return best_epoch ? &rows[*best_epoch] : nullptr; }
  const EpochRow* last_row() const { return rows.empty() ? nullptr : &rows.back(); }
};

struct EvalResult {
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double mean_loss = 0.0;  // cross-entropy at the attacked points (clean if no attack)
  std::size_t samples = 0;
};

namespace detail {

inline constexpr std::size_t kEvalChunk = 512;

struct DetailedEval {
  EvalResult result;
  Tensor attacked;  // inputs the robust numbers were measured on
};

/// A sample counts as robust only if it is classified correctly both at the
/// clean point and at the attack's output: the clean point lies in the ball,
/// so robust accuracy never exceeds clean accuracy.
inline DetailedEval evaluate_detailed(const Classifier& model, const Dataset& data,
                                      const std::optional<AttackConfig>& attack, RngStream rng) {
  if (data.empty()) throw InvalidParameter("evaluate: empty dataset");
  const std::size_t N = data.size();
  DetailedEval out;
  out.attacked = Tensor({N, data.dim()});
  std::size_t clean_ok = 0, robust_ok = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0, chunk = 0; start < N; start += kEvalChunk, ++chunk) {
    const std::size_t end = std::min(N, start + kEvalChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = data.inputs.gather_rows(idx);
    const std::vector<std::size_t> y(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                                     data.labels.begin() + static_cast<std::ptrdiff_t>(end));
    const auto clean_pred = argmax_rows(model.forward(x));
    Tensor adv = x;
    if (attack && attack->epsilon > 0.0) {
      RngStream chunk_rng = rng.split(chunk);
      adv = pgd(model, x, y, *attack, chunk_rng);
    }
    const Tensor adv_logits = model.forward(adv);
    const auto adv_pred = argmax_rows(adv_logits);
    const auto ll = logit_loss(adv_logits, Targets::hard(y), CrossEntropy{});
    for (std::size_t b = 0; b < y.size(); ++b) {
      const bool c = clean_pred[b] == y[b];
      clean_ok += c;
      robust_ok += c && adv_pred[b] == y[b];
      loss_sum += ll.losses[b];
      std::copy(adv.row(b).begin(), adv.row(b).end(), out.attacked.row(start + b).begin());
    }
  }
  out.result.samples = N;
  out.result.clean_acc = static_cast<double>(clean_ok) / static_cast<double>(N);
  out.result.robust_acc = static_cast<double>(robust_ok) / static_cast<double>(N);
  out.result.mean_loss = loss_sum / static_cast<double>(N);
  return out;
}

inline bool has_every_class(const Dataset& data) {
  const auto counts = data.class_counts();
  return std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
}

}  // namespace detail

/// Clean and robust accuracy; without an attack (or with epsilon 0) the
/// robust numbers equal the clean ones.
inline EvalResult evaluate(const Classifier& model, const Dataset& data,
                           const std::optional<AttackConfig>& attack, RngStream rng) {
  return detail::evaluate_detailed(model, data, attack, rng).result;
}

/// Per-epoch callback, e.g. for progress logging.
using EpochObserver = std::function<void(const EpochRow&, const Classifier&)>;

/// Runs `cfg.epochs` epochs of (adversarial) training on `train_set` and
/// evaluates on `test_set` after each epoch.
///
/// Random streams are derived from cfg.seed: one for shuffling, one per
/// (epoch, batch) for the training attack, one per epoch for evaluation. The
/// same config therefore reproduces the same RunRecord bit for bit, and modes
/// that do not use randomness in the attack (standard, or at with epsilon 0)
/// follow identical trajectories.
inline RunRecord train(Classifier model, const Dataset& train_set, const Dataset& test_set,
                       const TrainConfig& cfg, const EpochObserver& observer = {}) {
  cfg.validate();
  if (train_set.empty() || test_set.empty()) throw InvalidParameter("train: datasets must be nonempty");
  train_set.validate();
  test_set.validate();
  if (train_set.dim() != model.input_dim() || test_set.dim() != model.input_dim()) {
    throw ShapeError("train: dataset width does not match model input");
  }
  if (train_set.class_count != model.class_count() || test_set.class_count != model.class_count()) {
    throw ShapeError("train: dataset class count does not match model");
  }
  if (cfg.teacher && cfg.mode == TrainMode::at_kd &&
      (cfg.teacher->input_dim() != model.input_dim() ||
       cfg.teacher->class_count() != model.class_count())) {
    throw ShapeError("train: teacher shape does not match student");
  }

  const RngStream root(cfg.seed, 0x747261696e);
  RngStream shuffle_rng = root.split(1);
  const RngStream attack_root = root.split(2);
  const RngStream eval_root = root.split(3);
  const LossSpec spec = cfg.loss_spec();
  const AttackConfig eval_attack = cfg.evaluation_attack();
  const bool track_cas = cfg.track_cas && detail::has_every_class(test_set);

  SgdMomentum opt(cfg.momentum, cfg.weight_decay);
  RunRecord rec;
  rec.best = model;

  const std::size_t N = train_set.size();
  std::vector<std::size_t> order(N);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    const RngStream epoch_attack = attack_root.split(epoch);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < N; start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(N, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor xb = train_set.inputs.gather_rows(idx);
      std::vector<std::size_t> yb;
      yb.reserve(idx.size());
      for (std::size_t i : idx) yb.push_back(train_set.labels[i]);

      Tensor xin;
      if (cfg.mode == TrainMode::standard) {
        xin = xb;
      } else {
        RngStream batch_rng = epoch_attack.split(step);
        xin = cfg.mode == TrainMode::fast_at ? fgsm(model, xb, yb, cfg.attack, batch_rng)
                                             : pgd(model, xb, yb, cfg.attack, batch_rng);
      }
      Targets targets = Targets::hard(yb);
      if (cfg.mode == TrainMode::at_kd) targets.teacher_logits = cfg.teacher->forward(xin);

      const GradientBundle grads = backward(model, xin, targets, spec);
      if (!std::isfinite(grads.loss) || grads.loss > cfg.divergence_limit) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step) + " (loss " + std::to_string(grads.loss) + ")",
                              epoch, step);
      }
      loss_sum += grads.loss * static_cast<double>(yb.size());
      const auto pred = argmax_rows(grads.logits);
      for (std::size_t b = 0; b < yb.size(); ++b) correct += pred[b] == yb[b];
      opt.step(model, grads, lr);
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_robust_loss = loss_sum / static_cast<double>(N);
    row.train_robust_acc = static_cast<double>(correct) / static_cast<double>(N);
    const auto ev = detail::evaluate_detailed(model, test_set, eval_attack, eval_root.split(epoch));
    row.test_clean_acc = ev.result.clean_acc;
    row.test_robust_acc = ev.result.robust_acc;
    if (track_cas) row.cas = cas(class_attribution_matrix_at(model, ev.attacked, test_set.labels));

    if (!rec.best_epoch || row.test_robust_acc > rec.rows[*rec.best_epoch].test_robust_acc) {
      rec.best_epoch = rec.rows.size();
      rec.best = model;
    }
    rec.rows.push_back(row);
    if (observer) observer(row, model);
  }
  rec.last = std::move(model);
  return rec;
}

/// Catastrophic-overfitting signature: the first epoch whose test robust
/// accuracy is below `low` after some earlier epoch exceeded `high`.
inline std::optional<std::size_t> detect_collapse(const std::vector<EpochRow>& rows, double high = 0.2,
                                                  double low = 0.05) {
  bool was_high = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (was_high && rows[i].test_robust_acc < low) return i;
    if (rows[i].test_robust_acc > high) was_high = true;
  }
  return std::nullopt;
}

}  // namespace ccf
