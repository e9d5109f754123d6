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

#include "macesim/scheduler.h"

#include <algorithm>
#include <cctype>
#include <array>
#include <cmath>

#include "macesim/errors.h"

namespace macesim {

namespace {

struct PolicyName {
  Policy policy;
  std::string_view canonical;
  std::string_view camel;
};

constexpr PolicyName kPolicyNames[] = {
    {Policy::kHybrid, "hybrid", "Hybrid"},
    {Policy::kPeriodic, "periodic", "Periodic"},
    {Policy::kSync, "sync", "Sync"},
    {Policy::kHybridNoBin, "hybrid-nobin", "HybridNoBin"},
    {Policy::kHybridNoPrefix, "hybrid-noprefix", "HybridNoPrefix"},
    {Policy::kHybridNoPrune, "hybrid-noprune", "HybridNoPrune"},
};

std::string lower_alnum(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Policy p) {
  for (const auto& n : kPolicyNames) {
    if (n.policy == p) return n.canonical;
  }
  return "unknown";
}

std::optional<Policy> policy_from_string(std::string_view s) {
  const std::string key = lower_alnum(s);
  for (const auto& n : kPolicyNames) {
    if (lower_alnum(n.canonical) == key) return n.policy;
  }
  return std::nullopt;
}

bool uses_bin_packing(Policy p) {
  return p == Policy::kHybrid || p == Policy::kHybridNoPrefix ||
         p == Policy::kHybridNoPrune;
}

void SchedulerConfig::validate() const {
  if (!(tau_mem > 0.0 && tau_mem <= 1.0)) {
    throw ConfigError("scheduler.tau_mem: must be in (0, 1]");
  }
  if (tau_task < 1) throw ConfigError("scheduler.tau_task: must be >= 1");
  if (!(lambda1 >= 0.0)) throw ConfigError("scheduler.lambda1: must be >= 0");
  if (!(lambda2 >= 0.0)) throw ConfigError("scheduler.lambda2: must be >= 0");
  if (!(periodic_interval > 0.0)) {
    throw ConfigError("scheduler.periodic_interval: must be > 0");
  }
  if (max_decode_batch < 1) throw ConfigError("scheduler.max_decode_batch: must be >= 1");
  if (max_ft_batch < 1) throw ConfigError("scheduler.max_ft_batch: must be >= 1");
  if (!(max_wait >= 0.0)) throw ConfigError("scheduler.max_wait: must be >= 0");
  if (max_decode_steps < 1) throw ConfigError("scheduler.max_decode_steps: must be >= 1");
}

void Bin::add(std::size_t task, const WorkloadEstimate& est) {
  tasks.push_back(task);
  estimates.push_back(est);
  used_memory += est.mem;
  max_latency = std::max(max_latency, est.lat);
}

double fragmentation_score(const Bin& bin, const WorkloadEstimate& est,
                           double lambda1, double lambda2) {
  return lambda1 * std::fabs(bin.free_memory() - est.mem) +
         lambda2 * std::fabs(bin.max_latency - est.lat);
}

ScheduleResult schedule_iteration(PriorityQueue& queue, double capacity_budget,
                                  const SchedulerConfig& cfg,
                                  const EstimateFn& estimate,
                                  const std::function<bool(const QueueEntry&)>& is_finetune) {
  if (cfg.bin_concurrency_caps && !is_finetune) {
    throw ContractViolation("schedule_iteration: concurrency caps need a task classifier");
  }
  ScheduleResult r;
  // Per bin: inference and fine-tune counts (only consulted with caps).
  std::vector<std::array<std::size_t, 2>> counts;
  // Entries per bin, parallel to r.bins, so requeues keep their keys.
  std::vector<std::vector<QueueEntry>> members;
  const double close_at = cfg.tau_mem * capacity_budget;

  while (!queue.empty()) {
    if (!r.bins.empty() &&
        (r.bins.front().used_memory >= close_at || r.dequeued >= cfg.tau_task)) {
      break;
    }
    const QueueEntry e = queue.pop();
    ++r.dequeued;
    const WorkloadEstimate est = estimate(e);
    if (est.mem > capacity_budget) {
      r.oversized.push_back(e);
      continue;
    }
    const std::size_t kind = cfg.bin_concurrency_caps && is_finetune(e) ? 1 : 0;
    const std::size_t cap = kind ? cfg.max_ft_batch : cfg.max_decode_batch;
    std::size_t best = r.bins.size();
    double best_score = 0.0;
    for (std::size_t i = 0; i < r.bins.size(); ++i) {
      if (r.bins[i].free_memory() < est.mem) continue;
      if (cfg.bin_concurrency_caps && counts[i][kind] >= cap) continue;
      ++r.score_evaluations;
      const double f = fragmentation_score(r.bins[i], est, cfg.lambda1, cfg.lambda2);
      if (best == r.bins.size() || f < best_score) {
        best = i;
        best_score = f;
      }
    }
    if (best == r.bins.size()) {
      Bin b;
      b.capacity_budget = capacity_budget;
      r.bins.push_back(std::move(b));
      members.emplace_back();
      counts.push_back({0, 0});
    }
    ++counts[best][kind];
    r.bins[best].add(e.slot, est);
    members[best].push_back(e);
  }

  for (std::size_t i = 1; i < members.size(); ++i) {
    for (const QueueEntry& e : members[i]) {
      r.requeued.push_back(e);
      queue.push(e);
    }
  }
  if (!r.bins.empty()) {
    r.executed = r.bins.front();
  } else {
    r.executed.capacity_budget = capacity_budget;
  }
  return r;
}

bool check_end(const Request& task, const EndLimits& limits, double current_loss) {
  switch (task.workload) {
    case WorkloadType::kPrefill:
      return false;
    case WorkloadType::kDecode:
      return task.decode_pos >= task.target_output_len ||
             task.decode_pos >= limits.max_decode_steps;
    case WorkloadType::kFineTune:
      return current_loss <= limits.loss_threshold ||
             task.ft_steps_done >= limits.max_ft_steps;
  }
  return false;
}

bool check_end(const Request& task, const AlignmentEnv& env, const EndLimits& limits) {
  const double loss = task.workload == WorkloadType::kFineTune ? env.pair_loss(task) : 0.0;
  return check_end(task, limits, loss);
}

std::size_t continuous_batch(std::deque<std::size_t>& queue, ContinuousBatch& batch,
                             std::size_t max_batch, double max_wait, double now,
                             const TaskPredicate& requires_backward,
                             const TaskPredicate& admit) {
  if (max_batch < 1) throw ContractViolation("continuous_batch: C must be >= 1");
  if (!(max_wait >= 0.0)) throw ContractViolation("continuous_batch: T_w must be >= 0");
  if (batch.members.empty()) batch.batch_start = now;
  std::size_t added = 0;
  while (!queue.empty() && batch.members.size() < max_batch &&
         batch.batch_start + max_wait > now) {
    const std::size_t head = queue.front();
    if (requires_backward && requires_backward(head)) break;
    if (admit && !admit(head)) break;
    queue.pop_front();
    batch.members.push_back(head);
    ++added;
  }
  return added;
}

void filter_finished(ContinuousBatch& batch, const TaskPredicate& finished) {
  std::erase_if(batch.members, [&](std::size_t t) { return finished(t); });
}

BaselineScheduler::BaselineScheduler(Policy policy, const SchedulerConfig& cfg)
    : policy_(policy), cfg_(cfg), next_window_(cfg.periodic_interval) {
  if (uses_bin_packing(policy) && policy != Policy::kHybridNoBin) {
    throw ContractViolation("BaselineScheduler: policy " + std::string(to_string(policy)) +
                            " uses the bin packer");
  }
}

void BaselineScheduler::enqueue(std::size_t task, bool backward) {
  if (policy_ == Policy::kHybridNoBin || !backward) {
    inference_.push_back(task);
  } else {
    finetune_.push_back(task);
  }
}

BaselineScheduler::Decision BaselineScheduler::finetune_bin(
    double budget, const Hooks& hooks, std::deque<std::size_t>& source) {
  Decision d;
  d.retraining = true;
  d.bin.capacity_budget = budget;
  for (std::size_t t : ft_running_) d.bin.add(t, hooks.estimate(t));
  while (ft_running_.size() < cfg_.max_ft_batch && !source.empty()) {
    const std::size_t head = source.front();
    if (policy_ == Policy::kHybridNoBin && !hooks.requires_backward(head)) break;
    const WorkloadEstimate est = hooks.estimate(head);
    if (d.bin.used_memory + est.mem > budget) {
      if (d.bin.empty()) d.blocked = head;
      break;
    }
    source.pop_front();
    ft_running_.push_back(head);
    d.bin.add(head, est);
  }
  return d;
}

BaselineScheduler::Decision BaselineScheduler::inference_bin(double now, double budget,
                                                             const Hooks& hooks) {
  Decision d;
  d.bin.capacity_budget = budget;
  double used = 0.0;
  for (std::size_t t : batch_.members) used += hooks.estimate(t).mem;
  bool refused_empty = false;
  const TaskPredicate admit = [&](std::size_t t) {
    const double m = hooks.estimate(t).mem;
    if (used + m > budget) {
      refused_empty = batch_.members.empty();
      return false;
    }
    used += m;
    return true;
  };
  const TaskPredicate backward =
      policy_ == Policy::kHybridNoBin ? hooks.requires_backward : TaskPredicate{};
  continuous_batch(inference_, batch_, cfg_.max_decode_batch, cfg_.max_wait, now,
                   backward, admit);
  if (refused_empty) d.blocked = inference_.front();
  for (std::size_t t : batch_.members) d.bin.add(t, hooks.estimate(t));
  return d;
}

BaselineScheduler::Decision BaselineScheduler::next_bin(double now, double budget,
                                                        const Hooks& hooks) {
  switch (policy_) {
    case Policy::kSync:
      if (!ft_running_.empty() || !finetune_.empty()) {
        return finetune_bin(budget, hooks, finetune_);
      }
      return inference_bin(now, budget, hooks);

    case Policy::kPeriodic:
      if (!window_open_ && now >= next_window_) {
        // Windows are anchored to multiples of the interval; a window that
        // finds no pending fine-tunes is skipped.
        while (next_window_ <= now) next_window_ += cfg_.periodic_interval;
        if (!finetune_.empty()) {
          window_open_ = true;
          window_.assign(finetune_.begin(), finetune_.end());
          finetune_.clear();
        }
      }
      if (window_open_) {
        Decision d = finetune_bin(budget, hooks, window_);
        if (!d.bin.empty() || d.blocked) return d;
        window_open_ = false;
      }
      return inference_bin(now, budget, hooks);

    case Policy::kHybridNoBin: {
      if (!ft_running_.empty()) return finetune_bin(budget, hooks, inference_);
      Decision d = inference_bin(now, budget, hooks);
      // A backward request at the head of an idle batch would block forever;
      // it runs as its own fine-tune batch.
      if (d.bin.empty() && !d.blocked && !inference_.empty() &&
          hooks.requires_backward(inference_.front())) {
        return finetune_bin(budget, hooks, inference_);
      }
      return d;
    }

    default:
      break;
  }
  throw ContractViolation("BaselineScheduler::next_bin: unsupported policy");
}

void BaselineScheduler::finished(std::size_t task) {
  std::erase(batch_.members, task);
  std::erase(ft_running_, task);
}

void BaselineScheduler::preempt(std::size_t task) {
  auto it = std::find(batch_.members.begin(), batch_.members.end(), task);
  if (it == batch_.members.end()) {
    throw ContractViolation("BaselineScheduler::preempt: task is not running");
  }
  batch_.members.erase(it);
  inference_.push_front(task);
}

std::vector<std::size_t> BaselineScheduler::candidates() const {
  std::vector<std::size_t> out(batch_.members.begin(), batch_.members.end());
  out.insert(out.end(), ft_running_.begin(), ft_running_.end());
  const std::size_t cap = cfg_.max_decode_batch;
  const std::size_t room = cap - std::min(cap, batch_.members.size());
  for (std::size_t i = 0; i < inference_.size() && i < room; ++i) out.push_back(inference_[i]);
  const std::size_t ft_cap = cfg_.max_ft_batch;
  const std::size_t ft_room = ft_cap - std::min(ft_cap, ft_running_.size());
  const std::deque<std::size_t>& ft = window_open_ ? window_ : finetune_;
  if (policy_ != Policy::kPeriodic || window_open_) {
    for (std::size_t i = 0; i < ft.size() && i < ft_room; ++i) out.push_back(ft[i]);
  }
  return out;
}

bool BaselineScheduler::has_work() const {
  return !inference_.empty() || !finetune_.empty() || !ft_running_.empty() ||
         !batch_.members.empty() || !window_.empty();
}

bool BaselineScheduler::runnable(double now) const {
  if (!inference_.empty() || !ft_running_.empty() || !batch_.members.empty() ||
      !window_.empty()) {
    return true;
  }
  if (finetune_.empty()) return false;
  return policy_ != Policy::kPeriodic || now >= next_window_;
}

std::optional<double> BaselineScheduler::next_window(double now) const {
  if (policy_ != Policy::kPeriodic || finetune_.empty()) return std::nullopt;
  return std::max(now, next_window_);
}

}  // namespace macesim
