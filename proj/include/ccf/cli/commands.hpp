#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ccf/attribution/attribution.hpp"
#include "ccf/cli/config.hpp"
#include "ccf/cli/report.hpp"
#include "ccf/data/tabular.hpp"
#include "ccf/model/checkpoint.hpp"
#include "ccf/synthetic/verify.hpp"
#include "ccf/training/experiment.hpp"
#include "ccf/training/records.hpp"
#include "ccf/training/train.hpp"

namespace ccf::cli {

enum ExitCode : int { kOk = 0, kAssertionFailed = 1, kConfigError = 2, kRuntimeError = 3 };

/// Everything a command needs besides its own config section.
struct Invocation {
  Json config = Json::object();
  std::filesystem::path config_dir;  // relative paths in the config resolve here
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;  // overrides the config's "seed"
  std::ostream* log = nullptr;        // progress lines; null for silence
};

namespace detail {

inline constexpr std::uint64_t kDefaultSeed = 1;
inline constexpr std::uint64_t kAttributionStream = 0x61747472;
inline constexpr std::uint64_t kInstanceStream = 0x69636173;
inline constexpr std::uint64_t kEvalStream = 0x6576616c;

/// Resolves the seed and stamps it into the effective config.
inline std::uint64_t effective_seed(Invocation& inv, ConfigObject& root) {
  const auto from_config = root.get<std::uint64_t>("seed", kDefaultSeed);
  const std::uint64_t s = inv.seed.value_or(from_config);
  inv.config["seed"] = s;
  return s;
}

inline const std::filesystem::path& require_out(const Invocation& inv, const std::string& command) {
  if (!inv.out) throw ConfigError("/", command + " needs an output directory (--out)");
  return *inv.out;
}

inline Report start(const std::string& command, const Invocation& inv, std::uint64_t seed) {
  Report r;
  r.command = command;
  r.config = inv.config;
  r.seed = seed;
  r.started = utc_now();
  return r;
}

inline void finish(Report& r, const Invocation& inv) {
  r.finished = utc_now();
  if (inv.out) write_report(*inv.out, r);
}

inline Json row_json(const EpochRow& row) {
  return Json{{"epoch", row.epoch},
              {"lr", row.lr},
              {"train_robust_loss", number_or_null(row.train_robust_loss)},
              {"train_robust_acc", row.train_robust_acc},
              {"test_clean_acc", row.test_clean_acc},
              {"test_robust_acc", row.test_robust_acc},
              {"cas", number_or_null(row.cas)}};
}

inline Json attack_json(const std::optional<AttackConfig>& a) { return describe(a); }

inline std::string file_id(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  return p.stem().string() + ":" + fnv1a_hex(buf.str());
}

inline void write_matrix_file(const std::filesystem::path& path, const Tensor& c, const std::string& comment) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  write_matrix(os, c, default_class_labels(c.rows()), comment);
}

inline std::optional<AttackConfig> optional_attack(ConfigObject& root) {
  auto a = root.optional_object("attack");
  if (!a) return std::nullopt;
  AttackConfig cfg = parse_attack(*a);
  if (cfg.epsilon == 0.0) return std::nullopt;
  return cfg;
}

inline EpochObserver progress(std::ostream* log, std::string prefix) {
  if (!log) return {};
  return [log, prefix = std::move(prefix)](const EpochRow& r, const Classifier&) {
    *log << prefix << "epoch " << r.epoch << "  loss " << r.train_robust_loss << "  test ra "
         << r.test_robust_acc << "  clean " << r.test_clean_acc << '\n';
  };
}

/// Training summary shared by `train` and `sweep` cells.
inline Json run_summary(const RunRecord& run) {
  Json s = Json::object();
  s["epochs"] = run.rows.size();
  if (const auto* b = run.best_row()) {
    s["best_epoch"] = b->epoch;
    s["ra_best"] = b->test_robust_acc;
    s["cas_best"] = number_or_null(b->cas);
  }
  if (const auto* l = run.last_row()) {
    s["last_epoch"] = l->epoch;
    s["ra_last"] = l->test_robust_acc;
    s["cas_last"] = number_or_null(l->cas);
  }
  const auto collapse = detect_collapse(run.rows);
  s["catastrophic_overfitting"] = collapse.has_value();
  s["collapse_epoch"] = collapse ? Json(*collapse) : Json(nullptr);
  if (collapse) s["cas_after_collapse"] = number_or_null(run.rows[*collapse].cas);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline Report run_synth_verify(Invocation inv) {
  ConfigObject root(inv.config, "");
  const std::uint64_t seed = detail::effective_seed(inv, root);
  const auto grid = parse_grid(root.optional_object("grid"));
  const auto opt = parse_oracle(root.optional_object("oracle"), seed);
  root.finish();

  Report r = detail::start("synth-verify", inv, seed);
  std::size_t failed = 0, boundary = 0;
  for (const auto& v : synthetic::verify_synthetic(grid, opt)) {
    Json params = Json::object();
    for (const auto& [k, x] : v.parameters) params[k] = x;
    r.records.push_back(Json{{"check", v.check},
                             {"quantity", v.quantity},
                             {"parameters", params},
                             {"closed_form", number_or_null(v.closed_form)},
                             {"oracle", number_or_null(v.oracle)},
                             {"spread", number_or_null(v.spread)},
                             {"tolerance", number_or_null(v.tolerance)},
                             {"kind", synthetic::to_string(v.kind)},
                             {"pass", v.pass},
                             {"boundary", v.boundary},
                             {"note", v.note}});
    if (!v.pass) ++failed;
    if (v.boundary) ++boundary;
  }
  r.summary = Json{{"checks", r.records.size()}, {"failed", failed}, {"boundary", boundary}};
  r.pass = failed == 0;
  detail::finish(r, inv);
  return r;
}

inline Report run_gen_data(Invocation inv) {
  ConfigObject root(inv.config, "");
  const std::uint64_t seed = detail::effective_seed(inv, root);
  auto data_cfg = root.object("data");
  const PlantedSpec spec = parse_planted(data_cfg.object("planted"), seed);
  data_cfg.finish();
  TabularFormat format = TabularFormat::delimited_text;
  try {
    format = parse_tabular_format(root.get<std::string>("format", "delimited-text"));
  } catch (const InvalidParameter& e) {
    throw ConfigError("/format", e.what());
  }
  root.finish();
  const auto& out = detail::require_out(inv, "gen-data");

  Report r = detail::start("gen-data", inv, seed);
  std::filesystem::create_directories(out);
  const PlantedData d = generate_planted(spec);
  for (const Dataset* ds : {&d.train, &d.test}) {
    const std::string file = ds->split + ".txt";
    save_tabular(out / file, *ds, format);
    r.records.push_back(Json{{"split", ds->split},
                             {"file", file},
                             {"samples", ds->size()},
                             {"dim", ds->dim()},
                             {"classes", ds->class_count},
                             {"spec_hash", ds->spec_hash}});
  }
  r.summary = Json{{"spec", spec.canonical()}, {"spec_hash", spec.hash()}};
  detail::finish(r, inv);
  return r;
}

inline Report run_train(Invocation inv) {
  ConfigObject root(inv.config, "");
  const std::uint64_t seed = detail::effective_seed(inv, root);
  const DataSpec data = parse_data(root.object("data"), seed, inv.config_dir);
  const MlpSpec model = parse_model(root.optional_object("model"));
  TrainSection ts = parse_train(root.object("train"), root.optional_object("attack"),
                                root.optional_object("eval_attack"), seed, inv.config_dir);
  root.finish();
  const auto& out = detail::require_out(inv, "train");
  if (ts.config.mode == TrainMode::at_kd) {
    if (!ts.teacher) throw ConfigError("/train/kd/teacher", "at_kd needs a teacher checkpoint");
    ts.config.teacher = std::make_shared<const Classifier>(load_checkpoint(*ts.teacher).model);
  }

  Report r = detail::start("train", inv, seed);
  const auto splits = data.load();
  RunRecord run;
  try {
    run = train(model.build(splits.train.dim(), splits.train.class_count, seed), splits.train, splits.test,
                ts.config, detail::progress(inv.log, ""));
  } catch (const DivergenceError& e) {
    throw Error("training diverged at epoch " + std::to_string(e.epoch()) + ", step " + std::to_string(e.step()) +
                ": " + e.what());
  }
  save_run(out, run);
  for (const auto& row : run.rows) r.records.push_back(detail::row_json(row));
  r.summary = detail::run_summary(run);
  r.summary["mode"] = to_string(ts.config.mode);
  r.summary["eval_attack"] = describe(ts.config.evaluation_attack());
  detail::finish(r, inv);
  return r;
}

inline Report run_eval(Invocation inv) {
  ConfigObject root(inv.config, "");
  const std::uint64_t seed = detail::effective_seed(inv, root);
  const DataSpec data = parse_data(root.object("data"), seed, inv.config_dir, false);
  const auto ckpt_path = resolve(inv.config_dir, root.require<std::string>("checkpoint"));
  const auto attack = detail::optional_attack(root);
  root.finish();

  Report r = detail::start("eval", inv, seed);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto splits = data.load();
  RngStream rng = RngStream(seed, detail::kEvalStream).split(0);
  const EvalResult e = evaluate(ckpt.model, splits.test, attack, rng);
  r.records.push_back(Json{{"checkpoint", detail::file_id(ckpt_path)},
                           {"checkpoint_epoch", ckpt.epoch},
                           {"samples", e.samples},
                           {"clean_acc", e.clean_acc},
                           {"robust_acc", e.robust_acc},
                           {"mean_loss", e.mean_loss},
                           {"attack", detail::attack_json(attack)}});
  r.summary = Json{{"clean_acc", e.clean_acc}, {"robust_acc", e.robust_acc}};
  detail::finish(r, inv);
  return r;
}

/// Attribution matrices for one or two checkpoints. Matrix k uses attack
/// stream k, matching the best (0) / last (1) streams of a training cell.
inline Report run_attribution(Invocation inv) {
  ConfigObject root(inv.config, "");
  const std::uint64_t seed = detail::effective_seed(inv, root);
  const DataSpec data = parse_data(root.object("data"), seed, inv.config_dir, false);
  const auto paths = root.require<std::vector<std::string>>("checkpoints");
  if (paths.empty() || paths.size() > 2) throw ConfigError("/checkpoints", "expected one or two checkpoint paths");
  const auto attack = detail::optional_attack(root);
  const bool instance = root.get<bool>("instance", true);
  root.finish();
  const auto& out = detail::require_out(inv, "attribution");

  Report r = detail::start("attribution", inv, seed);
  std::filesystem::create_directories(out);
  const auto splits = data.load();
  std::vector<Checkpoint> ckpts;
  for (const auto& p : paths) ckpts.push_back(load_checkpoint(resolve(inv.config_dir, p)));
  if (ckpts.size() == 2 && ckpts[0].model.class_count() != ckpts[1].model.class_count()) {
    throw Error("checkpoints disagree on class count: " + std::to_string(ckpts[0].model.class_count()) + " vs " +
                std::to_string(ckpts[1].model.class_count()));
  }

  std::vector<Tensor> matrices;
  for (std::size_t k = 0; k < ckpts.size(); ++k) {
    const auto& model = ckpts[k].model;
    const std::string id = detail::file_id(resolve(inv.config_dir, paths[k]));
    RngStream rng = RngStream(seed, detail::kAttributionStream).split(k);
    AttributionMatrix m = class_attribution_matrix(model, splits.test, attack, rng);
    m.provenance.checkpoint_id = id;
    const std::string file = "matrix_" + std::to_string(k) + ".txt";
    detail::write_matrix_file(out / file, m.c,
                              id + " " + m.provenance.attack + " " + m.provenance.dataset_id);
    RngStream erng = RngStream(seed, detail::kEvalStream).split(k);
    const EvalResult e = evaluate(model, splits.test, attack, erng);
    Json rec{{"index", k},         {"checkpoint", id},     {"checkpoint_epoch", ckpts[k].epoch},
             {"matrix", file},     {"cas", cas(m)},        {"robust_acc", e.robust_acc},
             {"clean_acc", e.clean_acc}, {"attack", m.provenance.attack}};
    if (instance) {
      RngStream irng = RngStream(seed, detail::kInstanceStream).split(k);
      const InstanceCas ic = instance_cas_matrix(model, splits.test, attack, irng);
      const std::string ifile = "instance_matrix_" + std::to_string(k) + ".txt";
      detail::write_matrix_file(out / ifile, ic.matrix.c, id + " instance-wise");
      rec["instance_matrix"] = ifile;
      rec["icas"] = ic.icas;
    }
    r.records.push_back(std::move(rec));
    matrices.push_back(m.c);
  }
  if (matrices.size() == 2) {
    const MatrixDiff d = matrix_diff(matrices[0], matrices[1]);
    detail::write_matrix_file(out / "diff.txt", d.diff, "matrix_0 - matrix_1");
    r.summary = Json{{"delta_cas", d.delta_cas}, {"diff", "diff.txt"}};
  } else {
    r.summary = Json{{"cas", r.records[0]["cas"]}};
  }
  detail::finish(r, inv);
  return r;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepAxes {
  std::vector<double> epsilons;
  std::vector<TrainMode> modes;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  Norm norm = Norm::linf;
};

inline SweepAxes parse_sweep(ConfigObject o) {
  SweepAxes a;
  a.epsilons = o.require<std::vector<double>>("epsilons");
  const auto modes = o.get<std::vector<std::string>>("modes", {"at"});
  a.seeds = o.get<std::vector<std::uint64_t>>("seeds", a.seeds);
  try {
    a.norm = parse_norm(o.get<std::string>("norm", "linf"));
  } catch (const InvalidParameter& e) {
    throw ConfigError(o.child("norm"), e.what());
  }
  o.finish();
  if (a.epsilons.empty()) throw ConfigError(o.child("epsilons"), "axis is empty");
  if (modes.empty()) throw ConfigError(o.child("modes"), "axis is empty");
  if (a.seeds.empty()) throw ConfigError(o.child("seeds"), "axis is empty");
  for (std::size_t i = 0; i < a.epsilons.size(); ++i) {
    if (!(a.epsilons[i] >= 0.0)) throw ConfigError(o.child("epsilons") + "/" + std::to_string(i), "must be >= 0");
  }
  bool seen_at = false;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    try {
      a.modes.push_back(parse_train_mode(modes[i]));
    } catch (const InvalidParameter& e) {
      throw ConfigError(o.child("modes") + "/" + std::to_string(i), e.what());
    }
    if (a.modes.back() == TrainMode::at) seen_at = true;
    if (a.modes.back() == TrainMode::at_kd && !seen_at) {
      throw ConfigError(o.child("modes") + "/" + std::to_string(i),
                        "at_kd distils from the at cell, so at must come earlier in the mode list");
    }
  }
  return a;
}

inline std::string cell_name(double eps, TrainMode mode, std::uint64_t seed) {
  std::ostringstream os;
  os << "eps" << eps << "_" << to_string(mode) << "_seed" << seed;
  return os.str();
}

/// Every (epsilon, mode, seed) cell: train, then attribution at the best and
/// last checkpoints. Planted data is regenerated with the cell seed. A failed
/// cell is recorded and the sweep continues; the report then fails.
inline Report run_sweep(Invocation inv) {
  ConfigObject root(inv.config, "");
  const std::uint64_t seed = detail::effective_seed(inv, root);
  auto data_obj = root.object("data");
  const bool planted = data_obj.has("planted");
  const DataSpec data = parse_data(data_obj, seed, inv.config_dir);
  const MlpSpec model = parse_model(root.optional_object("model"));
  const SweepAxes axes = parse_sweep(root.object("sweep"));
  // Per-cell attack and mode come from the axes.
  TrainSection base = parse_train(root.object("train"), std::nullopt, std::nullopt, seed, inv.config_dir, false);
  root.finish();
  if (base.teacher) throw ConfigError("/train/kd/teacher", "sweeps take the teacher from the at cell");
  const auto& out = detail::require_out(inv, "sweep");

  Report r = detail::start("sweep", inv, seed);
  std::optional<DataSpec::Splits> fixed;
  if (!planted) fixed = data.load();
  std::map<std::pair<double, std::uint64_t>, std::shared_ptr<const Classifier>> at_best;
  std::size_t failures = 0;
  const std::size_t total = axes.epsilons.size() * axes.modes.size() * axes.seeds.size();
  std::size_t index = 0;

  for (double eps : axes.epsilons) {
    for (TrainMode mode : axes.modes) {
      for (std::uint64_t s : axes.seeds) {
        ++index;
        const std::string name = cell_name(eps, mode, s);
        Json rec{{"epsilon", eps}, {"mode", to_string(mode)}, {"seed", s}, {"cell", name}};
        if (inv.log) *inv.log << "[" << index << "/" << total << "] " << name << '\n';
        try {
          TrainConfig cfg = base.config;
          cfg.mode = mode;
          cfg.seed = s;
          cfg.attack = mode == TrainMode::fast_at ? AttackConfig::fast_default(axes.norm, eps)
                                                  : AttackConfig::pgd_default(axes.norm, eps);
          if (mode == TrainMode::at_kd) {
            auto it = at_best.find({eps, s});
            if (it == at_best.end()) throw Error("no at teacher for this cell (the at cell failed)");
            cfg.teacher = it->second;
          }
          DataSpec::Splits cell_data;
          if (planted) {
            PlantedSpec ps = *data.planted;
            ps.seed = s;
            auto d = generate_planted(ps);
            cell_data = {std::move(d.train), std::move(d.test)};
          }
          const auto& split = planted ? cell_data : *fixed;
          const ExperimentCell cell = run_experiment(split.train, split.test, model, cfg, detail::progress(inv.log, "  "));
          const auto dir = out / name;
          save_run(dir, cell.run);
          if (cell.run.rows.empty()) throw Error("cell ran zero epochs");
          detail::write_matrix_file(dir / "best_matrix.txt", cell.best_matrix.c, "best " + cell.best_matrix.provenance.attack);
          detail::write_matrix_file(dir / "last_matrix.txt", cell.last_matrix.c, "last " + cell.last_matrix.provenance.attack);
          if (mode == TrainMode::at) at_best[{eps, s}] = std::make_shared<const Classifier>(cell.run.best);
          rec["status"] = "ok";
          rec["best_epoch"] = cell.run.best_row()->epoch;
          rec["last_epoch"] = cell.run.last_row()->epoch;
          rec["ra_best"] = cell.ra_best;
          rec["ra_last"] = cell.ra_last;
          rec["cas_best"] = cell.cas_best;
          rec["cas_last"] = cell.cas_last;
          rec["delta_cas"] = cell.delta_cas;
          rec["loss_best"] = cell.loss_best;
          rec["loss_last"] = cell.loss_last;
          rec["collapse_epoch"] = cell.collapse_epoch ? Json(*cell.collapse_epoch) : Json(nullptr);
        } catch (const std::exception& e) {
          ++failures;
          rec["status"] = "failed";
          rec["error"] = e.what();
          if (inv.log) *inv.log << "  failed: " << e.what() << '\n';
        }
        r.records.push_back(std::move(rec));
      }
    }
  }

  Json medians = Json::array();
  for (double eps : axes.epsilons) {
    for (TrainMode mode : axes.modes) {
      std::map<std::string, std::vector<double>> cols;
      for (const auto& rec : r.records) {
        if (rec["status"] != "ok" || rec["epsilon"].get<double>() != eps || rec["mode"] != to_string(mode)) continue;
        for (const char* k : {"ra_best", "ra_last", "cas_best", "cas_last", "delta_cas", "loss_best", "loss_last"}) {
          cols[k].push_back(rec[k].get<double>());
        }
      }
      Json row{{"epsilon", eps}, {"mode", to_string(mode)}, {"cells", cols.empty() ? 0 : cols["ra_best"].size()}};
      for (auto& [k, v] : cols) row["median_" + k] = median(v);
      medians.push_back(std::move(row));
    }
  }
  r.summary = Json{{"cells", total}, {"failures", failures}, {"medians", medians}};
  r.pass = failures == 0;
  detail::finish(r, inv);
  return r;
}

/// Re-renders a finished run directory.
inline Report run_report(const std::filesystem::path& dir) { return read_report(dir); }

}  // namespace ccf::cli
