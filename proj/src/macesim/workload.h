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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "macesim/rng.h"

namespace macesim {

enum class WorkloadType : uint8_t { kPrefill = 0, kDecode = 1, kFineTune = 2 };

inline constexpr std::size_t kNumWorkloadTypes = 3;

inline std::size_t index_of(WorkloadType w) { return static_cast<std::size_t>(w); }

std::string_view to_string(WorkloadType w);
std::optional<WorkloadType> workload_from_string(std::string_view s);

using Token = int32_t;

// Synthetic preference pair. initial_margin stands in for
// log pi(y+|x) - log pi(y-|x) at the time the pair was collected.
struct PreferencePair {
  double initial_margin = 0.0;
  uint32_t tokens_chosen = 1;
  uint32_t tokens_rejected = 1;

  bool operator==(const PreferencePair&) const = default;
};

struct PriorityState {
  double value = 0.0;
  double refreshed_at = 0.0;

  bool operator==(const PriorityState&) const = default;
};

struct Request {
  uint64_t id = 0;
  uint32_t tenant = 0;
  WorkloadType workload = WorkloadType::kPrefill;
  double arrival_time = 0.0;
  std::vector<Token> prompt_tokens;
  uint32_t target_output_len = 0;
  uint32_t decode_pos = 0;
  uint32_t ft_steps_done = 0;
  std::optional<PreferencePair> pair;
  PriorityState priority_state;

  bool operator==(const Request&) const = default;

  // Throws ContractViolation naming the broken invariant.
  void validate() const;
};

using Trace = std::vector<Request>;

// Token-count distribution, written as e.g. "geometric(256)",
// "geometric(256,2048)" (mean, cap), "uniform(64,512)", "const(128)",
// "lognormal(5.2,0.6)" or "normal(100,20)". Samples are rounded and clamped
// to >= 1.
struct DistSpec {
  enum class Family { kConstant, kUniform, kGeometric, kLogNormal, kNormal };
  Family family = Family::kConstant;
  double a = 1.0;
  double b = 0.0;

  bool operator==(const DistSpec&) const = default;

  static DistSpec parse(std::string_view field, std::string_view text);
  std::string to_string() const;
  double mean() const;
  uint32_t sample(Rng& rng) const;
};

// Random template tree controlling prompt overlap: every prompt starts with a
// root-to-leaf walk of `depth` segments, each node having `branching`
// children.
struct PrefixTreeSpec {
  uint32_t branching = 4;
  uint32_t depth = 3;
  DistSpec segment_len{DistSpec::Family::kGeometric, 40.0, 0.0};

  bool operator==(const PrefixTreeSpec&) const = default;
};

struct TraceConfig {
  double arrival_rate = 4.0;  // requests / s
  double retrain_rate = 0.2;  // fraction in [0, 0.5]
  double duration = 300.0;    // s
  uint64_t seed = 1;
  uint32_t tenants = 2;
  uint32_t vocab_size = 32000;
  DistSpec prompt_len_dist{DistSpec::Family::kGeometric, 256.0, 2048.0};
  DistSpec output_len_dist{DistSpec::Family::kGeometric, 128.0, 1024.0};
  PrefixTreeSpec prefix_tree;

  bool operator==(const TraceConfig&) const = default;

  // Throws ConfigError naming the field.
  void validate() const;
};

// Per-tenant margin process the generator samples FineTune pairs from:
// margin = (mu0 - drift_rate * t) + sigma * N(0, 1).
struct TenantMarginModel {
  double mu0 = 1.0;
  double drift_rate = 0.0;
  double sigma = 1.0;
};

Trace generate_trace(const TraceConfig& cfg,
                     std::span<const TenantMarginModel> tenants);
Trace generate_trace(const TraceConfig& cfg);

inline constexpr std::string_view kTraceSchema = "mace-trace-v1";

void write_trace(const Trace& trace, std::ostream& out);
void write_trace(const Trace& trace, const std::string& path);
Trace read_trace(std::istream& in);
Trace read_trace(const std::string& path);

// Content hash of the serialized trace (FNV-1a 64, hex).
std::string trace_digest(const Trace& trace);

uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace macesim
