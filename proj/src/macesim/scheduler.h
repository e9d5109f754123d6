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
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "macesim/alignment.h"
#include "macesim/cost_model.h"
#include "macesim/priority.h"

namespace macesim {

enum class Policy : uint8_t {
  kHybrid,
  kPeriodic,
  kSync,
  kHybridNoBin,
  kHybridNoPrefix,
  kHybridNoPrune,
};

std::string_view to_string(Policy p);
// Accepts "hybrid", "Hybrid", "hybrid-nobin", "HybridNoBin", ...
std::optional<Policy> policy_from_string(std::string_view s);

// Policies that pack iterations with the best-fit packer (the others use
// continuous batching).
bool uses_bin_packing(Policy p);

struct SchedulerConfig {
  double tau_mem = 0.95;   // close B1 once it holds this fraction of budget
  uint32_t tau_task = 256; // max dequeues per iteration
  double lambda1 = 1.0;    // per MB of memory misfit
  double lambda2 = 1.0;    // per ms of latency misfit
  Policy policy = Policy::kHybrid;
  double periodic_interval = 60.0;  // s
  uint32_t max_decode_batch = 64;   // continuous batching C
  uint32_t max_ft_batch = 2;
  double max_wait = std::numeric_limits<double>::infinity();  // batch window, s
  uint32_t max_decode_steps = 1024;
  bool disable_retraining = false;
  // Packed bins also respect max_decode_batch inference tasks and
  // max_ft_batch fine-tunes, for comparisons under equal concurrency limits.
  bool bin_concurrency_caps = false;

  bool operator==(const SchedulerConfig&) const = default;

  void validate() const;
};

// One iteration's packed task set. Memory in MB, latency in ms.
struct Bin {
  double capacity_budget = 0.0;
  double used_memory = 0.0;
  double max_latency = 0.0;
  std::vector<std::size_t> tasks;  // caller task handles
  std::vector<WorkloadEstimate> estimates;

  double free_memory() const { return capacity_budget - used_memory; }
  bool empty() const { return tasks.empty(); }
  void add(std::size_t task, const WorkloadEstimate& est);
};

// lambda1 * |free_memory - m| + lambda2 * |max_latency - l|.
double fragmentation_score(const Bin& bin, const WorkloadEstimate& est,
                           double lambda1, double lambda2);

struct ScheduleResult {
  Bin executed;                       // B1 (empty when nothing fit)
  std::vector<Bin> bins;              // B1, B2, ... as built this tick
  std::vector<QueueEntry> requeued;   // members of B2.., pushed back
  std::vector<QueueEntry> oversized;  // m > budget; not placed, not requeued
  std::size_t dequeued = 0;
  std::size_t score_evaluations = 0;
};

using EstimateFn = std::function<WorkloadEstimate(const QueueEntry&)>;

// One scheduling decision of the best-fit packer. Dequeues in priority order
// until B1 holds tau_mem * budget or tau_task tasks have been dequeued; each
// task goes to the feasible bin with the lowest fragmentation score, or opens
// a new bin. Tasks of B2.. are pushed back into `queue` unchanged (their key
// is already current for this tick). Tasks that fit no bin even when empty
// are returned in `oversized` for the caller to defer or reject. With
// cfg.bin_concurrency_caps, a bin is also infeasible once it holds the
// configured number of tasks of the candidate's kind (`is_finetune` says
// which).
ScheduleResult schedule_iteration(PriorityQueue& queue, double capacity_budget,
                                  const SchedulerConfig& cfg,
                                  const EstimateFn& estimate,
                                  const std::function<bool(const QueueEntry&)>& is_finetune = {});

struct EndLimits {
  uint32_t max_decode_steps = 1024;
  uint32_t max_ft_steps = 8;
  double loss_threshold = 0.3;
};

// True when `task` just finished its last iteration. Decode ends at the
// hidden target length (EOS) or the step cap; fine-tune ends once the pair
// loss is at or below threshold or the step cap is hit; prefill never ends
// (it hands over to decode).
bool check_end(const Request& task, const EndLimits& limits, double current_loss);
bool check_end(const Request& task, const AlignmentEnv& env, const EndLimits& limits);

// Continuous batching state: running members persist across iterations and
// new requests only join while the batch window is open.
struct ContinuousBatch {
  std::vector<std::size_t> members;
  double batch_start = 0.0;
};

using TaskPredicate = std::function<bool(std::size_t)>;

// Accumulation step of continuous batching. Restarts the window when the
// batch is empty, then moves requests from the queue front into the batch
// while it has fewer than `max_batch` members, the head does not need a
// backward pass and batch_start + max_wait > now. `admit` (optional) can
// refuse the head, which also stops accumulation. Returns how many joined.
std::size_t continuous_batch(std::deque<std::size_t>& queue, ContinuousBatch& batch,
                             std::size_t max_batch, double max_wait, double now,
                             const TaskPredicate& requires_backward,
                             const TaskPredicate& admit = {});

void filter_finished(ContinuousBatch& batch, const TaskPredicate& finished);

// Continuous-batching policies: periodic retraining windows, synchronous
// fine-tune-first, and the FIFO fixed-batch ablation.
class BaselineScheduler {
 public:
  struct Hooks {
    TaskPredicate requires_backward;
    std::function<WorkloadEstimate(std::size_t)> estimate;
  };

  struct Decision {
    Bin bin;
    // Task that could not join an empty bin for lack of memory.
    std::optional<std::size_t> blocked;
    bool retraining = false;
  };

  BaselineScheduler(Policy policy, const SchedulerConfig& cfg);

  Policy policy() const { return policy_; }

  // New arrival, in arrival order.
  void enqueue(std::size_t task, bool backward);

  Decision next_bin(double now, double budget, const Hooks& hooks);

  // Retires a finished task from whichever structure holds it.
  void finished(std::size_t task);

  // Running inference members in admission order (oldest first).
  const std::vector<std::size_t>& running_inference() const {
    return batch_.members;
  }
  // Tasks the next bins could hold: running members, then queue heads up to
  // the batch limits. Used to size cache eviction ahead of admission.
  std::vector<std::size_t> candidates() const;
  // Removes a running inference member and puts it back at the queue front.
  void preempt(std::size_t task);

  bool has_work() const;
  // Whether any task can run at `now` (periodic mode may hold fine-tunes).
  bool runnable(double now) const;
  // Next time a held fine-tune window opens (periodic mode), if any.
  std::optional<double> next_window(double now) const;

  std::size_t queued() const { return inference_.size() + finetune_.size(); }
  std::size_t in_flight() const { return batch_.members.size() + ft_running_.size(); }
  // Every task the scheduler holds, waiting or running.
  std::size_t total() const { return queued() + in_flight() + window_.size(); }

 private:
  Decision finetune_bin(double budget, const Hooks& hooks,
                        std::deque<std::size_t>& source);
  Decision inference_bin(double now, double budget, const Hooks& hooks);

  Policy policy_;
  SchedulerConfig cfg_;
  std::deque<std::size_t> inference_;  // also holds fine-tunes for HybridNoBin
  std::deque<std::size_t> finetune_;
  std::vector<std::size_t> ft_running_;
  ContinuousBatch batch_;
  // Periodic windows.
  double next_window_ = 0.0;
  bool window_open_ = false;
  std::deque<std::size_t> window_;
};

}  // namespace macesim
