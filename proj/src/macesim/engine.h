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
#include <span>
#include <string>
#include <vector>

#include "macesim/alignment.h"
#include "macesim/cache.h"
#include "macesim/cost_model.h"
#include "macesim/priority.h"
#include "macesim/scheduler.h"
#include "macesim/workload.h"

namespace macesim {

struct EngineParams {
  double metrics_interval = 5.0;        // s between alignment samples
  double scheduler_overhead_ms = 0.1;   // per tick, unless measured
  bool measure_overhead = false;        // time decisions on the wall clock
  double ft_interference_ms = 0.0;      // per fine-tune co-located with inference
  double batch_latency_factor = 1.0;    // scales bin max latency
  double slo_factor = 5.0;              // deadline = slo_factor * forward latency
  bool check_invariants = false;        // per-tick conservation + trie checks
  // Alignment samples are averaged over [0, horizon]; <= 0 means the last
  // arrival time.
  double metrics_horizon = 0.0;

  bool operator==(const EngineParams&) const = default;

  void validate() const;
};

struct SimConfig {
  CostProfile cost;
  PriorityParams priority;
  SchedulerConfig scheduler;
  CacheParams cache;
  AlignmentParams alignment;
  EngineParams engine;
  uint64_t seed = 1;

  bool operator==(const SimConfig&) const = default;

  // Throws ConfigError naming the field.
  void validate() const;
  // Cache flags after the policy's ablation overrides.
  bool prefix_sharing() const;
  bool pruning() const;
};

struct RequestMetrics {
  uint64_t id = 0;
  uint32_t tenant = 0;
  WorkloadType workload = WorkloadType::kPrefill;  // as it arrived
  double arrival = 0.0;
  double first_scheduled = -1.0;  // s; -1 if never
  double first_token = -1.0;
  double finish = -1.0;
  double ttft_ms = -1.0;
  double ft_latency_ms = -1.0;
  double slo_deadline_ms = 0.0;
  bool slo_met = false;
  bool rejected = false;
  bool skipped = false;  // fine-tune dropped because retraining is disabled
  uint32_t decoded = 0;
  uint32_t ft_steps = 0;
  uint32_t preemptions = 0;
  std::size_t prompt_len = 0;
  std::size_t cached_prompt_tokens = 0;  // prompt tokens served from the trie
};

struct TickRecord {
  uint64_t index = 0;
  double start = 0.0;        // s
  double duration_ms = 0.0;
  double bin_latency_ms = 0.0;
  double budget = 0.0;       // MB available to the bin
  double bin_memory = 0.0;   // estimated MB of the executed bin
  double resident_kv = 0.0;  // private KV after the tick
  double trie_residency = 0.0;
  double used_memory = 0.0;  // weights + resident + trie + bin, MB
  double utilization = 0.0;  // used_memory / capacity
  std::size_t queue_len = 0; // tasks waiting after the decision
  uint32_t prefill = 0;
  uint32_t decode = 0;
  uint32_t finetune = 0;
  std::size_t dequeued = 0;
  std::size_t bins_opened = 0;
  std::size_t score_evaluations = 0;
  std::size_t requeued = 0;
  std::size_t deferred = 0;  // too large for this tick's budget
  uint32_t preempted = 0;
  double evicted_mb = 0.0;
  double cached_mb = 0.0;    // newly materialized trie KV
  uint64_t shared_tokens = 0;
  double pruned_mb = 0.0;
  double decision_ms = 0.0;
  std::size_t metadata_bytes = 0;
  std::size_t live_requests = 0;
  bool retraining = false;
  std::vector<uint64_t> tasks;  // request ids in the bin
};

struct AlignmentSample {
  double t = 0.0;
  uint32_t tenant = 0;
  double win_rate = 0.0;
  double clpd = 0.0;
};

struct RunMetrics {
  double ttft_p50 = 0.0;  // ms
  double ttft_p99 = 0.0;
  double tbt_p50 = 0.0;
  double tbt_p99 = 0.0;
  double tbt_mean = 0.0;
  double ft_lat_p50 = 0.0;
  double throughput_tok_s = 0.0;
  double slo_attainment = 0.0;
  double utilization = 0.0;
  double fragmentation = 0.0;
  uint64_t total_iterations = 0;
  double avg_win_rate = 0.0;
  double avg_clpd = 0.0;
  double mean_iter_latency_ms = 0.0;
  double makespan = 0.0;  // s, clock at the last tick's end
  uint64_t decoded_tokens = 0;
  uint64_t completed = 0;
  uint64_t rejected = 0;
  uint64_t preemptions = 0;
  uint64_t ft_steps = 0;
  double evicted_mb = 0.0;
  double pruned_fraction = 0.0;
  double mean_decision_ms = 0.0;
  double sharing_ratio_mean = 0.0;
};

struct SimResult {
  RunMetrics metrics;
  std::vector<RequestMetrics> requests;  // trace order
  std::vector<TickRecord> ticks;
  std::vector<AlignmentSample> alignment;
  std::vector<double> tbt_ms;  // every inter-token gap
  Histogram sharing;
};

// Runs `trace` (sorted by arrival) to completion. Throws ContractViolation
// naming the invariant on an accounting failure and ConfigError on invalid
// configuration.
SimResult simulate(const Trace& trace, const SimConfig& cfg);

// Time-weighted mean of tick utilization; 0 with no ticks.
double utilization(std::span<const TickRecord> ticks);
// 1 - time-weighted utilization over ticks that left tasks waiting.
double fragmentation(std::span<const TickRecord> ticks);

// Linear-interpolated percentile, q in [0, 100]; 0 for an empty set.
double percentile(std::vector<double> values, double q);

// Prefill of the full prompt, one decode step and two ticks of overhead.
double forward_latency_ms(std::size_t prompt_len, const CostProfile& cost,
                          double scheduler_overhead_ms);

}  // namespace macesim
