#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ccf/attack/attack.hpp"
#include "ccf/data/planted.hpp"
#include "ccf/data/tabular.hpp"
#include "ccf/errors.hpp"
#include "ccf/synthetic/verify.hpp"
#include "ccf/training/experiment.hpp"
#include "ccf/training/train.hpp"

namespace ccf::cli {

using Json = nlohmann::ordered_json;

/// Read-only view of one JSON object that remembers which keys were read.
/// `finish()` rejects every key that was never asked for.
class ConfigObject {
 public:
  ConfigObject(const Json& j, std::string pointer) : j_(&j), pointer_(std::move(pointer)) {
    if (!j.is_object()) throw ConfigError(pointer_, "expected an object");
  }

  const std::string& pointer() const noexcept { return pointer_; }
  std::string child(std::string_view key) const { return pointer_ + "/" + std::string(key); }

  bool has(std::string_view key) const { return j_->contains(std::string(key)); }

  template <class T>
  T get(std::string_view key, T fallback) {
    if (!has(key)) {
      seen_.insert(std::string(key));
      return fallback;
    }
    return require<T>(key);
  }

  template <class T>
  std::optional<T> optional(std::string_view key) {
    seen_.insert(std::string(key));
    if (!has(key) || at(key).is_null()) return std::nullopt;
    return require<T>(key);
  }

  template <class T>
  T require(std::string_view key) {
    seen_.insert(std::string(key));
    if (!has(key)) throw ConfigError(child(key), "missing required key");
    return convert<T>(at(key), child(key));
  }

  ConfigObject object(std::string_view key) {
    seen_.insert(std::string(key));
    if (!has(key)) throw ConfigError(child(key), "missing required section");
    return ConfigObject(at(key), child(key));
  }

  std::optional<ConfigObject> optional_object(std::string_view key) {
    seen_.insert(std::string(key));
    if (!has(key) || at(key).is_null()) return std::nullopt;
    return ConfigObject(at(key), child(key));
  }

  void finish() const {
    for (const auto& item : j_->items()) {
      if (!seen_.count(item.key())) throw ConfigError(child(item.key()), "unknown key");
    }
  }

 private:
  const Json& at(std::string_view key) const { return (*j_)[std::string(key)]; }

  template <class T>
  static T convert(const Json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(where, "expected a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ConfigError(where, "expected a finite number");
      return d;
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(where, "expected a non-negative integer");
      }
      return static_cast<T>(v.get<std::uint64_t>());
    } else {
      // std::vector<U>
      using U = typename T::value_type;
      if (!v.is_array()) throw ConfigError(where, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<U>(v[i], where + "/" + std::to_string(i)));
      return out;
    }
  }

  const Json* j_;
  std::string pointer_;
  std::set<std::string> seen_;
};

/// Training or test data: a planted spec, or a pair of tabular files.
struct DataSpec {
  std::optional<PlantedSpec> planted;
  std::filesystem::path train_path, test_path;
  TabularFormat format = TabularFormat::delimited_text;
  std::optional<std::size_t> classes;

  struct Splits {
    Dataset train, test;
  };

  Splits load() const {
    if (planted) {
      auto d = generate_planted(*planted);
      return {std::move(d.train), std::move(d.test)};
    }
    Splits s{train_path.empty() ? Dataset{} : load_tabular(train_path, format, classes),
             load_tabular(test_path, format, classes)};
    if (!train_path.empty() && s.train.class_count != s.test.class_count) {
      // Raw-matrix files infer K from their own labels; use the larger.
      const std::size_t K = std::max(s.train.class_count, s.test.class_count);
      s.train.class_count = s.test.class_count = K;
    }
    return s;
  }
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline PlantedSpec parse_planted(ConfigObject o, std::uint64_t seed) {
  PlantedSpec s;
  s.classes = o.get<std::size_t>("classes", s.classes);
  s.replication = o.get<std::size_t>("replication", s.replication);
  s.noise_dims = o.get<std::size_t>("noise_dims", s.noise_dims);
  s.mu = o.get<double>("mu", s.mu);
  s.sigma = o.get<double>("sigma", s.sigma);
  s.rotate = o.get<bool>("rotate", s.rotate);
  s.n_train = o.get<std::size_t>("n_train", s.n_train);
  s.n_test = o.get<std::size_t>("n_test", s.n_test);
  s.seed = o.get<std::uint64_t>("seed", seed);
  o.finish();
  try {
    s.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(o.pointer(), e.what());
  }
  return s;
}

/// {"planted": {...}} or {"train": path, "test": path, "format": ..., "classes": K}.
/// `need_train` is false for commands that only read the test split.
inline DataSpec parse_data(ConfigObject o, std::uint64_t seed, const std::filesystem::path& base,
                           bool need_train = true) {
  DataSpec d;
  if (auto p = o.optional_object("planted")) {
    if (o.has("train") || o.has("test")) throw ConfigError(o.pointer(), "give either planted or files, not both");
    d.planted = parse_planted(*p, seed);
    o.finish();
    return d;
  }
  if (need_train) {
    d.train_path = resolve(base, o.require<std::string>("train"));
  } else if (auto t = o.optional<std::string>("train")) {
    d.train_path = resolve(base, *t);
  }
  d.test_path = resolve(base, o.require<std::string>("test"));
  try {
    d.format = parse_tabular_format(o.get<std::string>("format", "delimited-text"));
  } catch (const InvalidParameter& e) {
    throw ConfigError(o.child("format"), e.what());
  }
  d.classes = o.optional<std::size_t>("classes");
  o.finish();
  return d;
}

inline MlpSpec parse_model(std::optional<ConfigObject> o) {
  MlpSpec m;
  if (!o) return m;
  m.hidden = o->get<std::vector<std::size_t>>("hidden", m.hidden);
  m.head_bias = o->get<bool>("head_bias", m.head_bias);
  o->finish();
  for (std::size_t w : m.hidden) {
    if (w == 0) throw ConfigError(o->child("hidden"), "hidden widths must be >= 1");
  }
  return m;
}

/// Attack section. Missing step size and step count default to 10-step PGD
/// with alpha = eps/4 (linf) or eps/8 (l2); `single_step` selects the
/// one-step random-start defaults instead.
inline AttackConfig parse_attack(ConfigObject o, bool single_step = false) {
  Norm norm = Norm::linf;
  try {
    norm = parse_norm(o.get<std::string>("norm", "linf"));
  } catch (const InvalidParameter& e) {
    throw ConfigError(o.child("norm"), e.what());
  }
  const double eps = o.require<double>("epsilon");
  AttackConfig a = single_step ? AttackConfig::fast_default(norm, eps) : AttackConfig::pgd_default(norm, eps);
  a.step_size = o.get<double>("step_size", a.step_size);
  a.steps = static_cast<int>(o.get<std::size_t>("steps", static_cast<std::size_t>(a.steps)));
  a.random_start = o.get<bool>("random_start", a.random_start);
  if (auto b = o.optional<std::vector<double>>("bounds")) {
    if (b->size() != 2) throw ConfigError(o.child("bounds"), "expected [lo, hi]");
    a.input_bounds = std::pair<double, double>{(*b)[0], (*b)[1]};
  }
  o.finish();
  try {
    a.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(o.pointer(), e.what());
  }
  return a;
}

/// Training section plus the attack sections it refers to. The teacher for
/// at_kd is a checkpoint path, returned separately.
struct TrainSection {
  TrainConfig config;
  std::optional<std::filesystem::path> teacher;
};

inline TrainSection parse_train(ConfigObject o, std::optional<ConfigObject> attack,
                                std::optional<ConfigObject> eval_attack, std::uint64_t seed,
                                const std::filesystem::path& base, bool attack_required = true) {
  TrainSection out;
  TrainConfig& c = out.config;
  c.seed = seed;
  c.epochs = o.get<std::size_t>("epochs", c.epochs);
  c.batch_size = o.get<std::size_t>("batch_size", c.batch_size);
  if (auto lr = o.optional_object("lr")) {
    c.lr.initial = lr->get<double>("initial", c.lr.initial);
    c.lr.decay_fractions = lr->get<std::vector<double>>("decay_fractions", c.lr.decay_fractions);
    c.lr.factor = lr->get<double>("factor", c.lr.factor);
    lr->finish();
  }
  c.momentum = o.get<double>("momentum", c.momentum);
  c.weight_decay = o.get<double>("weight_decay", c.weight_decay);
  try {
    c.mode = parse_train_mode(o.get<std::string>("mode", to_string(c.mode)));
  } catch (const InvalidParameter& e) {
    throw ConfigError(o.child("mode"), e.what());
  }
  c.ls_beta = o.get<double>("beta", c.ls_beta);
  if (auto kd = o.optional_object("kd")) {
    if (auto t = kd->optional<std::string>("teacher")) out.teacher = resolve(base, *t);
    c.kd_mix = kd->get<double>("mix", c.kd_mix);
    c.kd_temperature = kd->get<double>("temperature", c.kd_temperature);
    const auto dir = kd->get<std::string>("direction", "teacher_reference");
    if (dir == "teacher_reference") {
      c.kd_direction = KlDirection::teacher_reference;
    } else if (dir == "student_reference") {
      c.kd_direction = KlDirection::student_reference;
    } else {
      throw ConfigError(kd->child("direction"), "expected teacher_reference or student_reference");
    }
    kd->finish();
  }
  c.track_cas = o.get<bool>("track_cas", c.track_cas);
  o.finish();

  if (attack) {
    c.attack = parse_attack(*attack, c.mode == TrainMode::fast_at);
  } else if (attack_required && c.mode != TrainMode::standard) {
    throw ConfigError("/attack", "missing required section for mode " + to_string(c.mode));
  } else {
    c.attack = AttackConfig::pgd_default(Norm::linf, 0.0);
  }
  if (eval_attack) c.eval_attack = parse_attack(*eval_attack);

  try {
    TrainConfig probe = c;
    if (probe.mode == TrainMode::at_kd) probe.mode = TrainMode::at;  // teacher is attached later
    probe.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(o.pointer(), e.what());
  }
  return out;
}

inline synthetic::SyntheticGrid parse_grid(std::optional<ConfigObject> o) {
  synthetic::SyntheticGrid g;
  if (!o) return g;
  g.mu = o->get<double>("mu", g.mu);
  g.sigma = o->get<double>("sigma", g.sigma);
  g.lambda = o->get<double>("lambda", g.lambda);
  g.robust_epsilons = o->get<std::vector<double>>("robust_epsilons", g.robust_epsilons);
  g.betas = o->get<std::vector<double>>("betas", g.betas);
  g.ls_epsilons = o->get<std::vector<double>>("ls_epsilons", g.ls_epsilons);
  g.pair_epsilon = o->get<double>("pair_epsilon", g.pair_epsilon);
  o->finish();
  try {
    g.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(o->pointer(), e.what());
  }
  return g;
}

inline synthetic::VerifyOptions parse_oracle(std::optional<ConfigObject> o, std::uint64_t seed) {
  synthetic::VerifyOptions v;
  v.seed = seed;
  if (!o) return v;
  const auto preset = o->get<std::string>("preset", "full");
  if (preset == "quick") {
    v = synthetic::VerifyOptions::quick(seed);
  } else if (preset != "full") {
    throw ConfigError(o->child("preset"), "expected quick or full");
  }
  v.mc_samples = o->get<std::size_t>("mc_samples", v.mc_samples);
  v.gd_samples = o->get<std::size_t>("gd_samples", v.gd_samples);
  v.gd_iterations = o->get<std::size_t>("gd_iterations", v.gd_iterations);
  v.delta_instances = o->get<std::size_t>("delta_instances", v.delta_instances);
  v.delta_tries = o->get<std::size_t>("delta_tries", v.delta_tries);
  o->finish();
  if (v.mc_samples < 2 || v.gd_samples == 0 || v.delta_tries == 0) {
    throw ConfigError(o->pointer(), "sample counts must be positive (mc_samples >= 2)");
  }
  return v;
}

/// Parses a config file. Empty path means an empty object (all defaults).
inline Json load_config(const std::filesystem::path& path) {
  if (path.empty()) return Json::object();
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config ") + path.string() + ": " + e.what());
  }
}

}  // namespace ccf::cli
