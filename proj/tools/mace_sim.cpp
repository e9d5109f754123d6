/* Copyright 2026 The macesim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// mace-sim: trace generation, runs, comparisons, sweeps and calibration.
//
// Exit codes: 0 success, 2 config error, 3 simulation contract violation,
// 4 comparison mismatch, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "macesim/macesim.h"

namespace {

namespace fs = std::filesystem;

struct ConfigDeleter {
  void operator()(macesim_config* c) const { macesim_config_free(c); }
};
struct RunDeleter {
  void operator()(macesim_run* r) const { macesim_run_free(r); }
};
using ConfigPtr = std::unique_ptr<macesim_config, ConfigDeleter>;
using RunPtr = std::unique_ptr<macesim_run, RunDeleter>;

struct Failure {
  int code;
};

int exit_code(macesim_status s) {
  switch (s) {
    case MACESIM_OK: return 0;
    case MACESIM_ERR_CONFIG: return 2;
    case MACESIM_ERR_CONTRACT: return 3;
    case MACESIM_ERR_MISMATCH: return 4;
    default: return 1;
  }
}

void check(macesim_status s) {
  if (s == MACESIM_OK) return;
  std::cerr << "mace-sim: " << macesim_status_name(s) << ": " << macesim_last_error() << "\n";
  throw Failure{exit_code(s)};
}

template <typename F>
std::string text(F&& call) {
  size_t needed = 0;
  check(call(nullptr, 0, &needed));
  std::string out(needed, '\0');
  check(call(out.data(), out.size(), &needed));
  out.resize(needed - 1);
  return out;
}

struct Overrides {
  std::optional<unsigned long long> seed;
  std::string policy;
  std::vector<std::string> sets;  // section.key=value
};

// Any failure to obtain a usable config is a config error.
ConfigPtr load(const std::string& path, const Overrides& ov) {
  macesim_config* raw = nullptr;
  const macesim_status s = macesim_config_load(path.c_str(), &raw);
  if (s != MACESIM_OK) {
    std::cerr << "mace-sim: config error: " << macesim_last_error() << "\n";
    throw Failure{2};
  }
  ConfigPtr cfg(raw);
  auto set = [&](const std::string& key, const std::string& value) {
    const macesim_status st = macesim_config_set(cfg.get(), key.c_str(), value.c_str());
    if (st != MACESIM_OK) {
      std::cerr << "mace-sim: config error: " << macesim_last_error() << "\n";
      throw Failure{2};
    }
  };
  for (const std::string& kv : ov.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "mace-sim: config error: --set expects section.key=value, got '" << kv
                << "'\n";
      throw Failure{2};
    }
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (ov.seed) set("workload.seed", std::to_string(*ov.seed));
  if (!ov.policy.empty()) set("scheduler.policy", ov.policy);
  if (macesim_config_validate(cfg.get()) != MACESIM_OK) {
    std::cerr << "mace-sim: config error: " << macesim_last_error() << "\n";
    throw Failure{2};
  }
  return cfg;
}

std::string out_root(const macesim_config* cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  return text([&](char* b, size_t c, size_t* n) { return macesim_config_out_dir(cfg, b, c, n); });
}

// Runs one config and returns its output directory.
std::string run_one(const macesim_config* cfg, const std::string& root) {
  macesim_run* raw = nullptr;
  check(macesim_run_create(cfg, &raw));
  RunPtr run(raw);
  const std::string dir = text(
      [&](char* b, size_t c, size_t* n) { return macesim_run_write(run.get(), root.c_str(), b, c, n); });
  const std::string row = text(
      [&](char* b, size_t c, size_t* n) { return macesim_run_metrics_row(run.get(), b, c, n); });
  std::cout << dir << "\n" << row << "\n";
  return dir;
}

void add_overrides(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "Override workload.seed");
  cmd->add_option("--policy", ov.policy,
                  "Override scheduler.policy (hybrid, periodic, sync, hybrid-nobin, "
                  "hybrid-noprefix, hybrid-noprune)");
  cmd->add_option("--set", ov.sets, "Override any section.key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator for colocated LLM inference and continuous preference fine-tuning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(macesim_version()));

  Overrides ov;
  std::string config;
  std::string out;
  bool force = false;

  auto* gen = app.add_subcommand("gen-trace", "Generate a request trace from [workload]");
  gen->add_option("--config", config, "Config file")->required();
  gen->add_option("--out", out, "Trace file to write")->required();
  add_overrides(gen, ov);

  auto* run = app.add_subcommand("run", "Simulate one config");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--out", out, "Output root (default report.out_dir)");
  add_overrides(run, ov);

  std::vector<std::string> inputs;
  auto* cmp = app.add_subcommand(
      "compare", "Compare runs; inputs are run directories or config files (run first)");
  cmp->add_option("inputs", inputs, "Run directories or config files")->required();
  cmp->add_option("--out", out, "Directory for the table and charts")->required();
  cmp->add_flag("--force", force, "Compare even when the runs replayed different traces");
  add_overrides(cmp, ov);

  std::vector<std::string> axes;
  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid (MACE_SIM_THREADS caps workers)");
  sweep->add_option("--config", config, "Base config file")->required();
  sweep->add_option("--axis", axes, "Grid axis section.key=v1,v2,... (repeatable)");
  sweep->add_option("--out", out, "Output root (default report.out_dir)");
  add_overrides(sweep, ov);

  std::string profile_csv;
  auto* cal = app.add_subcommand("calibrate", "Fit a cost profile to measurements");
  cal->add_option("profile_csv", profile_csv, "workload,batch_size,tokens,latency_ms,memory_mb")
      ->required();
  cal->add_option("--out", out, "Profile file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      ConfigPtr cfg = load(config, ov);
      size_t n = 0;
      check(macesim_gen_trace(cfg.get(), out.c_str(), &n));
      std::cout << out << " (" << n << " requests)\n";
    } else if (*run) {
      ConfigPtr cfg = load(config, ov);
      run_one(cfg.get(), out_root(cfg.get(), out));
    } else if (*cmp) {
      std::vector<std::string> dirs;
      for (const std::string& in : inputs) {
        if (fs::is_directory(in)) {
          dirs.push_back(in);
        } else {
          ConfigPtr cfg = load(in, ov);
          dirs.push_back(run_one(cfg.get(), (fs::path(out) / "runs").string()));
        }
      }
      std::vector<const char*> ptrs;
      for (const std::string& d : dirs) ptrs.push_back(d.c_str());
      std::cout << text([&](char* b, size_t c, size_t* n) {
        return macesim_compare(ptrs.data(), ptrs.size(), out.c_str(), force ? 1 : 0, b, c, n);
      });
    } else if (*sweep) {
      ConfigPtr cfg = load(config, ov);
      const std::string root = out_root(cfg.get(), out);
      std::vector<const char*> ptrs;
      for (const std::string& a : axes) ptrs.push_back(a.c_str());
      size_t n = 0;
      check(macesim_sweep(cfg.get(), ptrs.data(), ptrs.size(), root.c_str(), 0, &n));
      std::cout << (fs::path(root) / "sweep_metrics.csv").string() << " (" << n << " runs)\n";
    } else if (*cal) {
      std::cout << text([&](char* b, size_t c, size_t* n) {
        return macesim_calibrate(profile_csv.c_str(), out.empty() ? nullptr : out.c_str(), b, c,
                                 n);
      });
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
