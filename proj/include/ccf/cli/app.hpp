#pragma once

#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "ccf/cli/commands.hpp"

namespace ccf::cli {

/// Command-line front end. Returns the process exit status.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Class-correlated feature experiments: theory checks, adversarial training, attribution"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(CCF_VERSION));

  std::string config_path, out_dir, format = "text", report_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  using Runner = std::function<Report(Invocation)>;
  const std::map<std::string, std::pair<std::string, Runner>> commands{
      {"synth-verify", {"check the synthetic model's closed forms against Monte Carlo oracles", run_synth_verify}},
      {"gen-data", {"write planted train/test splits as dataset files", run_gen_data}},
      {"train", {"train a classifier and save per-epoch records and best/last checkpoints", run_train}},
      {"eval", {"clean and robust accuracy of a checkpoint", run_eval}},
      {"attribution", {"attribution correlation matrices, CAS and I-CAS for one or two checkpoints", run_attribution}},
      {"sweep", {"train + attribution over epsilon x mode x seed", run_sweep}},
  };
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--format", format, "stdout format")->check(CLI::IsMember({"text", "records"}));
    sub->add_flag("--quiet", quiet, "no progress output");
  }
  auto* report = app.add_subcommand("report", "render a finished run directory");
  report->add_option("dir", report_dir, "run directory")->check(CLI::ExistingDirectory);
  report->add_option("--out", out_dir, "run directory (alternative to the positional argument)");
  report->add_option("--format", format, "stdout format")->check(CLI::IsMember({"text", "records"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kConfigError;
  }

  try {
    const OutputFormat fmt = parse_output_format(format);
    if (report->parsed()) {
      const std::string dir = report_dir.empty() ? out_dir : report_dir;
      if (dir.empty()) {
        err << "report: give a run directory\n";
        return kConfigError;
      }
      const Report r = run_report(dir);
      emit(out, r, fmt);
      return r.pass.value_or(true) ? kOk : kAssertionFailed;
    }
    for (const auto& [name, entry] : commands) {
      if (!app.got_subcommand(name)) continue;
      Invocation inv;
      if (!config_path.empty()) {
        inv.config = load_config(config_path);
        inv.config_dir = std::filesystem::path(config_path).parent_path();
      }
      if (!inv.config.is_object()) throw ConfigError("", "config must be a JSON object");
      if (!out_dir.empty()) inv.out = out_dir;
      inv.seed = seed;
      inv.log = quiet ? nullptr : &err;
      const Report r = entry.second(std::move(inv));
      emit(out, r, fmt);
      return r.pass.value_or(true) ? kOk : kAssertionFailed;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace ccf::cli
