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

#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "macesim/engine.h"
#include "macesim/errors.h"

namespace macesim {
namespace {

constexpr Policy kAllPolicies[] = {Policy::kHybrid,      Policy::kPeriodic,
                                   Policy::kSync,        Policy::kHybridNoBin,
                                   Policy::kHybridNoPrefix, Policy::kHybridNoPrune};

Request prefill(uint64_t id, double arrival, std::size_t prompt, uint32_t out) {
  Request r;
  r.id = id;
  r.workload = WorkloadType::kPrefill;
  r.arrival_time = arrival;
  r.prompt_tokens.resize(prompt);
  std::iota(r.prompt_tokens.begin(), r.prompt_tokens.end(), static_cast<Token>(id * 7919));
  r.target_output_len = out;
  return r;
}

SimConfig config_for(Policy p) {
  SimConfig cfg;
  cfg.scheduler.policy = p;
  cfg.engine.check_invariants = true;
  return cfg;
}

Trace small_trace(uint64_t seed, double rate = 4.0, double duration = 20.0) {
  TraceConfig tc;
  tc.arrival_rate = rate;
  tc.duration = duration;
  tc.seed = seed;
  return generate_trace(tc);
}

TEST(Simulate, EmptyTrace) {
  for (Policy p : kAllPolicies) {
    const SimResult r = simulate({}, config_for(p));
    EXPECT_TRUE(r.ticks.empty());
    EXPECT_EQ(r.metrics.total_iterations, 0u);
    EXPECT_EQ(r.metrics.throughput_tok_s, 0.0);
    EXPECT_TRUE(r.requests.empty());
  }
}

// Prefill tick, then one decode tick; each tick adds the iteration overhead
// and the configured decision time.
TEST(Simulate, SingleRequestTtftClosedForm) {
  for (Policy p : kAllPolicies) {
    SimConfig cfg = config_for(p);
    const std::size_t prompt = 120;
    const double want_ms = (cfg.cost.prefill_lat_per_token * prompt + cfg.cost.iter_overhead +
                            cfg.engine.scheduler_overhead_ms) +
                           (cfg.cost.decode_lat_per_step + cfg.cost.iter_overhead +
                            cfg.engine.scheduler_overhead_ms);
    const SimResult r = simulate({prefill(1, 2.5, prompt, 3)}, cfg);
    ASSERT_EQ(r.requests.size(), 1u);
    EXPECT_NEAR(r.requests[0].ttft_ms, want_ms, 1e-6) << to_string(p);
    EXPECT_NEAR(r.requests[0].ttft_ms,
                forward_latency_ms(prompt, cfg.cost, cfg.engine.scheduler_overhead_ms), 1e-6);
    EXPECT_EQ(r.requests[0].decoded, 3u);
    EXPECT_EQ(r.metrics.total_iterations, 1u + 3u);
    EXPECT_TRUE(r.requests[0].slo_met);
  }
}

TEST(Simulate, Deterministic) {
  const Trace t = small_trace(3);
  for (Policy p : kAllPolicies) {
    const SimResult a = simulate(t, config_for(p));
    const SimResult b = simulate(t, config_for(p));
    ASSERT_EQ(a.ticks.size(), b.ticks.size());
    EXPECT_EQ(a.metrics.ttft_p99, b.metrics.ttft_p99);
    EXPECT_EQ(a.metrics.avg_clpd, b.metrics.avg_clpd);
    EXPECT_EQ(a.tbt_ms, b.tbt_ms);
    for (std::size_t i = 0; i < a.ticks.size(); ++i) {
      ASSERT_EQ(a.ticks[i].tasks, b.ticks[i].tasks) << "tick " << i;
    }
  }
}

TEST(Simulate, EveryRequestRetiredAndTtftBounded) {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const Trace t = small_trace(seed, 8.0);
    for (Policy p : kAllPolicies) {
      const SimConfig cfg = config_for(p);
      const SimResult r = simulate(t, cfg);
      ASSERT_EQ(r.requests.size(), t.size());
      EXPECT_EQ(r.metrics.completed + r.metrics.rejected, t.size()) << to_string(p);
      for (std::size_t i = 0; i < t.size(); ++i) {
        const RequestMetrics& m = r.requests[i];
        if (m.workload == WorkloadType::kFineTune || m.rejected) continue;
        // No request can beat the cost of its own uncached prompt tokens.
        const double lower =
            cfg.cost.prefill_lat_per_token *
            static_cast<double>(m.prompt_len - m.cached_prompt_tokens);
        EXPECT_GE(m.ttft_ms + 1e-9, lower) << to_string(p) << " request " << m.id;
        EXPECT_GE(m.finish, m.first_token);
      }
    }
  }
}

TEST(Simulate, OversizedRequestIsRejected) {
  SimConfig cfg = config_for(Policy::kHybrid);
  const double per_token = cfg.cost.prefill_mem_per_token + cfg.cost.decode_kv_mem_per_token;
  const auto huge = static_cast<std::size_t>(cfg.cost.task_capacity() / per_token) + 100;
  const Trace t = {prefill(1, 0.0, 10, 2), prefill(2, 0.1, huge, 2), prefill(3, 0.2, 10, 2)};
  for (Policy p : kAllPolicies) {
    cfg.scheduler.policy = p;
    const SimResult r = simulate(t, cfg);
    EXPECT_TRUE(r.requests[1].rejected) << to_string(p);
    EXPECT_FALSE(r.requests[0].rejected);
    EXPECT_EQ(r.requests[2].decoded, 2u);
    EXPECT_EQ(r.metrics.rejected, 1u);
  }
}

TEST(Simulate, PruningDoesNotSlowDecoding) {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const Trace t = small_trace(seed, 8.0, 30.0);
    const SimResult on = simulate(t, config_for(Policy::kHybrid));
    const SimResult off = simulate(t, config_for(Policy::kHybridNoPrune));
    EXPECT_LE(on.metrics.tbt_mean, off.metrics.tbt_mean) << "seed " << seed;
  }
}

TEST(Simulate, TickRecordsAreConsistent) {
  const SimConfig cfg = config_for(Policy::kHybrid);
  const SimResult r = simulate(small_trace(5, 8.0), cfg);
  ASSERT_FALSE(r.ticks.empty());
  for (const TickRecord& t : r.ticks) {
    EXPECT_LE(t.bin_memory, t.budget + 1e-6);
    EXPECT_GT(t.duration_ms, 0.0);
    EXPECT_LE(t.used_memory, cfg.cost.capacity + 1e-6);
    EXPECT_NEAR(t.utilization, t.used_memory / cfg.cost.capacity, 1e-12);
    // Score work is bounded by dequeued tasks times open bins.
    EXPECT_LE(t.score_evaluations, t.dequeued * std::max<std::size_t>(t.bins_opened, 1));
  }
  EXPECT_EQ(r.metrics.total_iterations, r.ticks.size());
}

TEST(Simulate, MetadataGrowsWithLiveRequests) {
  SimConfig cfg = config_for(Policy::kHybrid);
  cfg.engine.measure_overhead = true;
  const SimResult r = simulate(small_trace(2, 12.0, 30.0), cfg);
  // Least-squares slope of metadata bytes against live requests.
  double sx = 0, sy = 0, n = 0;
  for (const TickRecord& t : r.ticks) {
    sx += static_cast<double>(t.live_requests);
    sy += static_cast<double>(t.metadata_bytes);
    ++n;
  }
  double sxx = 0, sxy = 0;
  for (const TickRecord& t : r.ticks) {
    const double dx = static_cast<double>(t.live_requests) - sx / n;
    sxx += dx * dx;
    sxy += dx * (static_cast<double>(t.metadata_bytes) - sy / n);
  }
  ASSERT_GT(sxx, 0.0);
  EXPECT_GT(sxy / sxx, 0.0);
  EXPECT_GE(r.metrics.mean_decision_ms, 0.0);
}

TEST(Utilization, WeightedMean) {
  std::vector<TickRecord> ticks(2);
  ticks[0].duration_ms = ticks[1].duration_ms = 10.0;
  ticks[0].utilization = 0.2;
  ticks[1].utilization = 0.4;
  EXPECT_NEAR(utilization(ticks), 0.3, 1e-15);
  for (TickRecord& t : ticks) t.utilization = 1.0;
  EXPECT_EQ(utilization(ticks), 1.0);
  EXPECT_EQ(utilization({}), 0.0);
}

TEST(Utilization, FragmentationOnlyCountsWaitingTicks) {
  std::vector<TickRecord> ticks(3);
  for (TickRecord& t : ticks) t.duration_ms = 1.0;
  ticks[0].utilization = 0.5;
  ticks[0].queue_len = 3;
  ticks[1].utilization = 0.9;
  ticks[1].queue_len = 0;
  ticks[2].utilization = 0.7;
  ticks[2].queue_len = 1;
  EXPECT_NEAR(fragmentation(ticks), 0.4, 1e-15);
}

TEST(Percentile, Interpolates) {
  EXPECT_EQ(percentile({}, 50), 0.0);
  EXPECT_EQ(percentile({3.0, 1.0, 2.0}, 50), 2.0);
  EXPECT_DOUBLE_EQ(percentile({0.0, 10.0}, 25), 2.5);
  EXPECT_EQ(percentile({5.0}, 99), 5.0);
}

TEST(SimConfig, ValidateRejectsBadEngineParams) {
  SimConfig cfg;
  cfg.engine.slo_factor = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// Tight memory with two dequeues per tick used to cycle forever: the top
// task preempted a victim without freeing enough, or freed enough for a
// victim that then outranked it as a prefill and took the memory back.
TEST(Simulate, PreemptionUnderPressureMakesProgress) {
  for (Policy p : {Policy::kHybrid, Policy::kHybridNoPrefix}) {
    TraceConfig tc;
    tc.arrival_rate = 22.0;
    tc.retrain_rate = 0.45;
    tc.duration = 16.0;
    tc.seed = 16;
    tc.prompt_len_dist = DistSpec::parse("prompt", "geometric(470,2048)");
    tc.output_len_dist = DistSpec::parse("output", "geometric(199,1024)");
    tc.prefix_tree.depth = 4;
    tc.prefix_tree.branching = 4;
    SimConfig cfg = config_for(p);
    cfg.cost.capacity = cfg.cost.weights_resident + 2736.0;
    cfg.scheduler.tau_mem = 0.53;
    cfg.scheduler.tau_task = 2;
    cfg.scheduler.max_decode_steps = 167;
    cfg.scheduler.max_ft_batch = 4;
    const Trace trace = generate_trace(tc);
    const SimResult r = simulate(trace, cfg);
    std::size_t retired = 0;
    for (const RequestMetrics& m : r.requests) retired += m.rejected || m.skipped || m.finish >= 0.0;
    EXPECT_EQ(retired, trace.size()) << to_string(p);
    EXPECT_LT(r.ticks.size(), 50 * trace.size()) << to_string(p);
  }
}

}  // namespace
}  // namespace macesim
