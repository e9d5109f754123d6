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
#include <map>
#include <string>

#include "macesim/workload.h"

namespace macesim {

// Linear latency/memory model of one accelerator. Latencies in ms, memory in
// MB. The defaults are illustrative placeholders meant to be replaced by
// calibrate() on measured profiles.
struct CostProfile {
  double prefill_lat_per_token = 0.5;
  double prefill_mem_per_token = 0.25;  // activations, released after the step
  double decode_lat_per_step = 20.0;
  double decode_kv_mem_per_token = 0.13;
  double ft_lat_per_sample_step = 120.0;
  double ft_mem_fixed = 200.0;  // adapter + optimizer state
  double ft_mem_per_token = 1.0;
  double iter_overhead = 1.0;
  double capacity = 24576.0;
  double weights_resident = 14336.0;

  bool operator==(const CostProfile&) const = default;

  // Throws ConfigError naming the field.
  void validate() const;

  // Memory left for tasks and caches once weights are loaded.
  double task_capacity() const { return capacity - weights_resident; }
};

struct WorkloadEstimate {
  double mem = 0.0;  // MB
  double lat = 0.0;  // ms

  bool operator==(const WorkloadEstimate&) const = default;
};

// Prompt tokens a prefill has to compute: prompt plus any already decoded
// tokens (recompute after preemption) minus the cached shared prefix.
std::size_t prefill_effective_tokens(const Request& task,
                                     std::size_t cached_prefix_tokens);

// Memory/latency of one iteration's worth of `task`. For prefill,
// `cached_prefix_tokens` is the trie-cached prefix length; it is ignored for
// the other phases. Decode memory is the one new KV slot only; resident KV is
// accounted by the caller.
WorkloadEstimate get_workload(const Request& task, const CostProfile& profile,
                              std::size_t cached_prefix_tokens = 0);

struct CalibrationResult {
  CostProfile profile;
  // RMS residual of each fitted series, keyed e.g. "prefill.latency_ms".
  std::map<std::string, double> rms_residual;
};

// Least-squares fit of the linear coefficients from rows of
// (workload, batch_size, tokens, latency_ms, memory_mb). Workloads missing
// from the file keep the values of `base`. Throws CalibrationError.
CalibrationResult calibrate(std::istream& csv, const CostProfile& base = {});
CalibrationResult calibrate(const std::string& csv_path,
                            const CostProfile& base = {});

// Flat key=value serialization.
void write_profile(const CostProfile& p, std::ostream& out);
CostProfile read_profile(std::istream& in, const CostProfile& base = {});
// Applies one key; returns false when the key is not a profile field.
bool set_profile_field(CostProfile& p, std::string_view key, double value);

}  // namespace macesim
