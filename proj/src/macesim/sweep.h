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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "macesim/config.h"
#include "macesim/report.h"

namespace macesim {

// One grid dimension: "section.key" and the values it takes.
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

// Parses "section.key=v1,v2,...". Throws ConfigError.
SweepAxis parse_axis(std::string_view spec);

// Cartesian product over `axes` applied to `base`, last axis fastest.
// Configs that serialize identically are kept once.
std::vector<RunConfig> expand_grid(const RunConfig& base, const std::vector<SweepAxis>& axes);

// Worker count: MACE_SIM_THREADS when set to a positive integer, otherwise
// the hardware concurrency; never more than `jobs`, never less than 1.
unsigned sweep_threads(std::size_t jobs);

struct SweepResult {
  std::vector<std::filesystem::path> run_dirs;  // config-hash order
  std::filesystem::path metrics_csv;            // merged rows, same order
};

// Runs every config (concurrently, up to `threads` workers; 0 picks
// sweep_threads) and writes each under out_root/<hash>/ plus a merged
// out_root/sweep_metrics.csv. Output bytes do not depend on `threads`.
// The first failure is rethrown after all workers stop.
SweepResult run_sweep(const std::vector<RunConfig>& configs, const std::filesystem::path& out_root,
                      unsigned threads = 0);

}  // namespace macesim
