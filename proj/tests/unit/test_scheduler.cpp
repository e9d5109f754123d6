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

#include <random>
#include <set>

#include "macesim/errors.h"
#include "macesim/scheduler.h"
#include "oracles/oracles.h"

namespace macesim {
namespace {

struct Task {
  double mem;
  double lat;
};

// Queue whose priorities follow index order (task 0 dequeues first).
PriorityQueue queue_of(const std::vector<Task>& tasks) {
  PriorityQueue q;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    q.push({static_cast<double>(tasks.size() - i), 0.0, i, i});
  }
  return q;
}

EstimateFn estimate_of(const std::vector<Task>& tasks) {
  return [&tasks](const QueueEntry& e) {
    return WorkloadEstimate{tasks[e.slot].mem, tasks[e.slot].lat};
  };
}

Bin bin_with(double budget, double used, double max_lat) {
  Bin b;
  b.capacity_budget = budget;
  b.used_memory = used;
  b.max_latency = max_lat;
  return b;
}

TEST(FragmentationScore, PerfectFits) {
  EXPECT_EQ(fragmentation_score(bin_with(10, 5, 0), {5, 99}, 1.0, 0.0), 0.0);
  EXPECT_EQ(fragmentation_score(bin_with(10, 0, 30), {1, 30}, 0.0, 1.0), 0.0);
}

TEST(FragmentationScore, ArgminOverBins) {
  const std::vector<Bin> bins = {bin_with(10, 0, 0), bin_with(10, 4, 0), bin_with(10, 2, 0)};
  std::size_t best = 0;
  for (std::size_t i = 1; i < bins.size(); ++i) {
    if (fragmentation_score(bins[i], {5, 0}, 1, 0) < fragmentation_score(bins[best], {5, 0}, 1, 0)) {
      best = i;
    }
  }
  EXPECT_EQ(best, 1u);
  EXPECT_EQ(fragmentation_score(bins[1], {5, 0}, 1, 0), 1.0);
}

TEST(FragmentationScore, MatchesOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1000.0), l(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double budget = u(gen) + 1, used = std::min(budget, u(gen)), max_lat = u(gen);
    const double m = u(gen), lat = u(gen), l1 = l(gen), l2 = l(gen);
    const long double want = oracle::fragmentation_score(budget - used, max_lat, m, lat, l1, l2);
    const double got = fragmentation_score(bin_with(budget, used, max_lat), {m, lat}, l1, l2);
    EXPECT_NEAR(got, static_cast<double>(want), 1e-9 * std::max(1.0L, std::fabs(want)));
  }
}

TEST(ScheduleIteration, SingleTaskFits) {
  const std::vector<Task> tasks = {{10, 5}};
  PriorityQueue q = queue_of(tasks);
  const ScheduleResult r = schedule_iteration(q, 100, SchedulerConfig{}, estimate_of(tasks));
  EXPECT_EQ(r.executed.tasks, std::vector<std::size_t>{0});
  EXPECT_TRUE(r.requeued.empty());
  EXPECT_TRUE(q.empty());
}

TEST(ScheduleIteration, HandTracedBestFit) {
  // 60 -> B1; 50 does not fit B1 and opens B2; 40 fits both, scores
  // |40-40| = 0 in B1 against |50-40| = 10 in B2.
  const std::vector<Task> tasks = {{60, 1}, {50, 1}, {40, 1}};
  SchedulerConfig cfg;
  cfg.tau_mem = 1.0;
  cfg.tau_task = 3;
  cfg.lambda2 = 0.0;
  PriorityQueue q = queue_of(tasks);
  const ScheduleResult r = schedule_iteration(q, 100, cfg, estimate_of(tasks));
  EXPECT_EQ(r.executed.tasks, (std::vector<std::size_t>{0, 2}));
  ASSERT_EQ(r.requeued.size(), 1u);
  EXPECT_EQ(r.requeued[0].slot, 1u);
  EXPECT_EQ(q.size(), 1u);
  EXPECT_EQ(r.bins.size(), 2u);
}

TEST(ScheduleIteration, OversizedIsSetAside) {
  const std::vector<Task> tasks = {{150, 1}, {20, 1}};
  PriorityQueue q = queue_of(tasks);
  const ScheduleResult r = schedule_iteration(q, 100, SchedulerConfig{}, estimate_of(tasks));
  ASSERT_EQ(r.oversized.size(), 1u);
  EXPECT_EQ(r.oversized[0].slot, 0u);
  EXPECT_EQ(r.executed.tasks, std::vector<std::size_t>{1});
  EXPECT_TRUE(q.empty());
}

TEST(ScheduleIteration, ConcurrencyCaps) {
  std::vector<Task> tasks(6, Task{1, 1});
  SchedulerConfig cfg;
  cfg.bin_concurrency_caps = true;
  cfg.max_decode_batch = 2;
  cfg.max_ft_batch = 1;
  auto is_ft = [](const QueueEntry& e) { return e.slot >= 4; };
  PriorityQueue q = queue_of(tasks);
  const ScheduleResult r = schedule_iteration(q, 100, cfg, estimate_of(tasks), is_ft);
  EXPECT_EQ(r.executed.tasks, (std::vector<std::size_t>{0, 1, 4}));
  PriorityQueue q2 = queue_of(tasks);
  EXPECT_THROW(schedule_iteration(q2, 100, cfg, estimate_of(tasks)), ContractViolation);
}

// The packer against a literal replay of its rules on small random queues.
TEST(ScheduleIteration, MatchesReplayOracle) {
  std::mt19937_64 gen(21);
  std::uniform_int_distribution<int> n_tasks(1, 6), mem(1, 24), lat(1, 10), pr(0, 3), tt(1, 6);
  const double lambdas[] = {0.0, 0.5, 1.0, 2.0};
  const double taus[] = {0.5, 0.8, 0.95, 1.0};
  for (int inst = 0; inst < 2000; ++inst) {
    const int n = n_tasks(gen);
    std::vector<Task> tasks;
    std::vector<oracle::Task> otasks;
    PriorityQueue q;
    for (int i = 0; i < n; ++i) {
      const Task t{5.0 * mem(gen), 10.0 * lat(gen)};
      const double p = pr(gen);
      tasks.push_back(t);
      otasks.push_back({p, 0.0, static_cast<uint64_t>(i), t.mem, t.lat});
      q.push({p, 0.0, static_cast<uint64_t>(i), static_cast<std::size_t>(i)});
    }
    SchedulerConfig cfg;
    cfg.lambda1 = lambdas[gen() % 4];
    cfg.lambda2 = lambdas[gen() % 4];
    cfg.tau_mem = taus[gen() % 4];
    cfg.tau_task = tt(gen);
    const ScheduleResult r = schedule_iteration(q, 100.0, cfg, estimate_of(tasks));
    const oracle::PackResult want =
        oracle::pack(otasks, 100.0, cfg.tau_mem, cfg.tau_task, cfg.lambda1, cfg.lambda2);
    std::vector<uint64_t> b1(r.executed.tasks.begin(), r.executed.tasks.end());
    std::set<uint64_t> requeued, left;
    for (const QueueEntry& e : r.requeued) requeued.insert(e.id);
    for (const QueueEntry& e : q.raw()) left.insert(e.id);
    ASSERT_EQ(b1, want.b1) << "instance " << inst;
    ASSERT_EQ(requeued, want.requeued) << "instance " << inst;
    std::set<uint64_t> want_left = want.requeued;
    want_left.insert(want.untouched.begin(), want.untouched.end());
    ASSERT_EQ(left, want_left) << "instance " << inst;
  }
}

TEST(CheckEnd, Decode) {
  Request r;
  r.workload = WorkloadType::kDecode;
  r.target_output_len = 5;
  r.decode_pos = 5;
  EXPECT_TRUE(check_end(r, EndLimits{}, 0.0));
  r.decode_pos = 4;
  EXPECT_FALSE(check_end(r, EndLimits{}, 0.0));
  EXPECT_TRUE(check_end(r, EndLimits{4, 8, 0.3}, 0.0));
  r.workload = WorkloadType::kPrefill;
  EXPECT_FALSE(check_end(r, EndLimits{}, 0.0));
}

TEST(CheckEnd, FineTuneBelowThreshold) {
  Request r;
  r.workload = WorkloadType::kFineTune;
  EXPECT_TRUE(check_end(r, EndLimits{}, 0.1));
  EXPECT_FALSE(check_end(r, EndLimits{}, 0.5));
}

TEST(CheckEnd, FineTuneStepCapWithoutProgress) {
  AlignmentParams p;
  p.tenants.assign(1, TenantParams{});
  p.tenants[0].ft_gain = 0.0;
  AlignmentEnv env(p, 1);
  Request r;
  r.workload = WorkloadType::kFineTune;
  r.pair = PreferencePair{-1.0, 8, 8};  // loss well above threshold
  const EndLimits limits{1024, 8, 0.3};
  for (uint32_t step = 0; step < limits.max_ft_steps; ++step) {
    ASSERT_FALSE(check_end(r, env, limits)) << "step " << step;
    env.ft_step(r);
    ++r.ft_steps_done;
  }
  EXPECT_TRUE(check_end(r, env, limits));
}

std::vector<std::size_t> drain(std::size_t n, std::size_t c,
                               const TaskPredicate& backward = {}) {
  std::deque<std::size_t> q;
  for (std::size_t i = 0; i < n; ++i) q.push_back(i);
  ContinuousBatch b;
  std::vector<std::size_t> sizes;
  double now = 0.0;
  while (!q.empty()) {
    continuous_batch(q, b, c, std::numeric_limits<double>::infinity(), now, backward);
    if (b.members.empty()) break;
    sizes.push_back(b.members.size());
    filter_finished(b, [](std::size_t) { return true; });
    now += 1.0;
  }
  return sizes;
}

TEST(ContinuousBatch, SizeOne) {
  EXPECT_EQ(drain(5, 1), std::vector<std::size_t>(5, 1));
}

TEST(ContinuousBatch, TenRequestsBatchFour) {
  // Replay: full batches of C, then the remainder.
  std::vector<std::size_t> want;
  for (std::size_t left = 10; left > 0; left -= std::min<std::size_t>(left, 4)) {
    want.push_back(std::min<std::size_t>(left, 4));
  }
  EXPECT_EQ(drain(10, 4), want);
  EXPECT_EQ(want, (std::vector<std::size_t>{4, 4, 2}));
}

TEST(ContinuousBatch, BackwardHeadClosesBatch) {
  std::deque<std::size_t> q = {0, 1};
  ContinuousBatch b;
  EXPECT_EQ(continuous_batch(q, b, 4, 1e9, 0.0, [](std::size_t t) { return t == 0; }), 0u);
  EXPECT_TRUE(b.members.empty());
  EXPECT_EQ(q.size(), 2u);
}

TEST(ContinuousBatch, WindowExpiry) {
  std::deque<std::size_t> q = {0, 1, 2};
  ContinuousBatch b;
  continuous_batch(q, b, 1, 2.0, 0.0, {});
  EXPECT_EQ(b.members.size(), 1u);
  // Room opens up but the window [0, 2) has passed.
  b.members.clear();
  b.members.push_back(99);
  EXPECT_EQ(continuous_batch(q, b, 4, 2.0, 3.0, {}), 0u);
}

BaselineScheduler::Hooks hooks(const std::set<std::size_t>& ft) {
  return {[ft](std::size_t t) { return ft.count(t) > 0; },
          [](std::size_t) { return WorkloadEstimate{1.0, 10.0}; }};
}

TEST(Baseline, PeriodicWithoutFineTunesIsContinuousBatching) {
  SchedulerConfig cfg;
  cfg.max_decode_batch = 3;
  BaselineScheduler s(Policy::kPeriodic, cfg);
  for (std::size_t i = 0; i < 8; ++i) s.enqueue(i, false);
  std::vector<std::size_t> sizes;
  for (double now = 0.0; s.has_work(); now += 50.0) {
    const auto d = s.next_bin(now, 100.0, hooks({}));
    EXPECT_FALSE(d.retraining);
    sizes.push_back(d.bin.tasks.size());
    for (std::size_t t : d.bin.tasks) s.finished(t);
  }
  EXPECT_EQ(sizes, drain(8, 3));
}

TEST(Baseline, SyncRunsFineTuneNextThenResumes) {
  BaselineScheduler s(Policy::kSync, SchedulerConfig{});
  s.enqueue(0, false);
  s.enqueue(1, false);
  auto d = s.next_bin(0.0, 100.0, hooks({2}));
  EXPECT_EQ(d.bin.tasks, (std::vector<std::size_t>{0, 1}));
  s.enqueue(2, true);
  d = s.next_bin(0.1, 100.0, hooks({2}));
  EXPECT_TRUE(d.retraining);
  EXPECT_EQ(d.bin.tasks, std::vector<std::size_t>{2});
  s.finished(2);
  d = s.next_bin(0.2, 100.0, hooks({2}));
  EXPECT_FALSE(d.retraining);
  EXPECT_EQ(d.bin.tasks, (std::vector<std::size_t>{0, 1}));
}

TEST(Baseline, PeriodicHoldsFineTunesUntilWindow) {
  SchedulerConfig cfg;
  cfg.periodic_interval = 10.0;
  BaselineScheduler s(Policy::kPeriodic, cfg);
  s.enqueue(0, true);
  EXPECT_FALSE(s.runnable(5.0));
  EXPECT_EQ(*s.next_window(5.0), 10.0);
  EXPECT_TRUE(s.next_bin(5.0, 100.0, hooks({0})).bin.empty());
  const auto d = s.next_bin(10.0, 100.0, hooks({0}));
  EXPECT_TRUE(d.retraining);
  EXPECT_EQ(d.bin.tasks, std::vector<std::size_t>{0});
}

TEST(Baseline, NoBinFineTuneBlocksQueue) {
  BaselineScheduler s(Policy::kHybridNoBin, SchedulerConfig{});
  s.enqueue(0, false);
  s.enqueue(1, true);
  s.enqueue(2, false);
  auto d = s.next_bin(0.0, 100.0, hooks({1}));
  EXPECT_EQ(d.bin.tasks, std::vector<std::size_t>{0});
  s.finished(0);
  d = s.next_bin(1.0, 100.0, hooks({1}));
  EXPECT_TRUE(d.retraining);
  EXPECT_EQ(d.bin.tasks, std::vector<std::size_t>{1});
}

TEST(Baseline, RejectsPackingPolicies) {
  EXPECT_THROW(BaselineScheduler(Policy::kHybrid, SchedulerConfig{}), ContractViolation);
}

TEST(Policy, Names) {
  EXPECT_EQ(policy_from_string("hybrid-nobin"), Policy::kHybridNoBin);
  EXPECT_EQ(policy_from_string("HybridNoPrune"), Policy::kHybridNoPrune);
  EXPECT_EQ(policy_from_string("Periodic"), Policy::kPeriodic);
  EXPECT_FALSE(policy_from_string("fifo").has_value());
  for (Policy p : {Policy::kHybrid, Policy::kPeriodic, Policy::kSync, Policy::kHybridNoBin,
                   Policy::kHybridNoPrefix, Policy::kHybridNoPrune}) {
    EXPECT_EQ(policy_from_string(to_string(p)), p);
  }
}

}  // namespace
}  // namespace macesim
