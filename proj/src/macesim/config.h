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

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "macesim/engine.h"
#include "macesim/workload.h"

namespace macesim {

struct ReportParams {
  std::string out_dir = "out";
  std::string run_id;      // defaults to the config hash
  std::string trace_file;  // replay this trace instead of generating one
  bool timeline = true;
  bool timeline_tasks = true;

  bool operator==(const ReportParams&) const = default;
};

struct RunConfig {
  TraceConfig workload;
  SimConfig sim;
  ReportParams report;

  bool operator==(const RunConfig&) const = default;

  // Throws ConfigError naming the field.
  void validate() const;
};

// Sectioned key=value text:
//
//   [workload]
//   arrival_rate = 4
//   ...
//   [tenant.0]
//   drift_rate = 0.004
//
// '#' and ';' start comments. workload.arrival_rate, workload.duration and
// workload.seed are required. Throws ConfigError (unknown or missing key, bad
// value) naming the key; `source` prefixes messages.
RunConfig parse_config(std::istream& in, std::string_view source = "config");
RunConfig load_config(const std::string& path);

// Sets one "section.key" to `value` as if it appeared in the file. Only the
// value itself is checked; cross-field rules are left to validate() so a
// series of overrides may pass through inconsistent states.
void apply_override(RunConfig& cfg, std::string_view key, std::string_view value);

// Canonical text with every key in a fixed order. parse_config of the result
// reproduces `cfg` (report.out_dir excepted when `with_output` is false).
std::string serialize_config(const RunConfig& cfg, bool with_output = true);

// 16 hex digits identifying the run: hash of the canonical text without the
// output directory.
std::string config_hash(const RunConfig& cfg);

// Every known "section.key" (tenant keys as "tenant.N.key" for N = 0).
std::vector<std::string> config_keys();

}  // namespace macesim
