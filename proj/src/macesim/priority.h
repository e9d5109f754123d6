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
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "macesim/workload.h"

namespace macesim {

struct PriorityParams {
  // Indexed by WorkloadType: prefill, decode, finetune.
  std::array<double, kNumWorkloadTypes> base{2.0, 3.0, 1.0};
  std::array<double, kNumWorkloadTypes> growth{0.02, 0.01, 0.05};  // per second
  double gamma = 1.0;

  bool operator==(const PriorityParams&) const = default;

  double base_of(WorkloadType w) const { return base[index_of(w)]; }
  double growth_of(WorkloadType w) const { return growth[index_of(w)]; }

  // Enforces decode > prefill > finetune for base priority and the reverse
  // order for growth. Throws ConfigError.
  void validate() const;
};

// base_w + growth_w * (t - arrival). Throws ContractViolation when t precedes
// the request's arrival.
double dynamic_priority(const Request& req, double t, const PriorityParams& p);

// dynamic_priority + gamma * loss for FineTune requests. Throws
// ContractViolation for other workloads or a negative loss.
double ft_total_priority(const Request& req, double t, const PriorityParams& p,
                         double loss);

// Age at which a type-`a` request overtakes a type-`b` request that arrived
// at the same instant: (base_b - base_a) / (growth_a - growth_b). nullopt if
// `a` never overtakes.
std::optional<double> crossover_age(WorkloadType a, WorkloadType b,
                                    const PriorityParams& p);

struct QueueEntry {
  double priority = 0.0;
  double arrival_time = 0.0;
  uint64_t id = 0;
  std::size_t slot = 0;  // caller-owned task handle

  bool operator==(const QueueEntry&) const = default;
};

// Strict "a dequeues before b": higher priority, then earlier arrival, then
// lower id.
bool dequeues_before(const QueueEntry& a, const QueueEntry& b);

// Max-heap of tasks keyed by their last refreshed priority.
class PriorityQueue {
 public:
  using KeyFn = std::function<double(const QueueEntry&)>;

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

  void push(QueueEntry e);
  const QueueEntry& top() const;
  QueueEntry pop();

  // Recomputes every key and restores the heap property.
  void refresh(const KeyFn& key);

  // Removes the entry with `slot`; returns it if present.
  std::optional<QueueEntry> remove(std::size_t slot);

  // Entries in dequeue order (copy).
  std::vector<QueueEntry> sorted() const;
  const std::vector<QueueEntry>& raw() const { return heap_; }

 private:
  std::vector<QueueEntry> heap_;
};

}  // namespace macesim
