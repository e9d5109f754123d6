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

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "macesim/config.h"
#include "macesim/engine.h"

namespace macesim {

// Column order of metrics.csv.
inline constexpr std::string_view kMetricsHeader =
    "run_id,policy,retrain_rate,arrival_rate,ttft_p50,ttft_p99,tbt_p50,tbt_p99,"
    "ft_lat_p50,throughput_tok_s,slo_attainment,utilization,fragmentation,"
    "total_iterations,avg_win_rate,avg_clpd";

struct RunArtifacts {
  RunConfig config;
  std::string hash;  // config_hash(config)
  std::string run_id;
  std::string trace_digest;
  std::size_t trace_requests = 0;
  SimResult result;
};

// Reads report.trace_file when set, else generates from [workload] with the
// tenants' margin models.
Trace load_or_generate_trace(const RunConfig& cfg);

// Simulates `cfg` without writing anything.
RunArtifacts run_config(const RunConfig& cfg);

// Writes metrics.csv, summary.json, alignment.csv, requests.csv and (when
// enabled) timeline.jsonl into out_root/<hash>/. Returns that directory.
std::filesystem::path write_run(const RunArtifacts& run, const std::filesystem::path& out_root);

// One metrics.csv data row (no trailing newline).
std::string metrics_row(const RunArtifacts& run);
std::string summary_json(const RunArtifacts& run);
void write_timeline(std::ostream& out, std::span<const TickRecord> ticks, bool with_tasks);

// A finished run as read back from its directory.
struct RunSummary {
  std::filesystem::path dir;
  std::string run_id;
  std::string policy;
  std::string trace_digest;
  std::string metrics_row;  // the run's metrics.csv data row
  double retrain_rate = 0.0;
  double arrival_rate = 0.0;
  std::map<std::string, double> metrics;
  // Alignment averaged over tenants: (t, win rate, clpd).
  std::vector<std::array<double, 3>> alignment;
};

RunSummary load_run(const std::filesystem::path& dir);

struct CompareOutput {
  std::string table;  // markdown, one row per run
  std::vector<std::filesystem::path> files;
};

// Side-by-side table plus SVG charts in out_dir. Throws MismatchError when
// the runs replayed different traces, unless `force`.
CompareOutput compare_runs(std::span<const RunSummary> runs,
                           const std::filesystem::path& out_dir, bool force);

}  // namespace macesim
