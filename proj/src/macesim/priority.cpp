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

#include "macesim/priority.h"

#include <algorithm>
#include <string>

#include "macesim/errors.h"

namespace macesim {

void PriorityParams::validate() const {
  const double bp = base_of(WorkloadType::kPrefill);
  const double bd = base_of(WorkloadType::kDecode);
  const double bf = base_of(WorkloadType::kFineTune);
  const double gp = growth_of(WorkloadType::kPrefill);
  const double gd = growth_of(WorkloadType::kDecode);
  const double gf = growth_of(WorkloadType::kFineTune);
  if (!(bd > bp && bp > bf)) {
    throw ConfigError("priority.base_*: need base_decode > base_prefill > base_finetune");
  }
  if (!(gf > gp && gp > gd)) {
    throw ConfigError(
        "priority.growth_*: need growth_finetune > growth_prefill > growth_decode");
  }
  if (!(gd >= 0.0)) throw ConfigError("priority.growth_decode: must be >= 0");
  if (!(gamma >= 0.0)) throw ConfigError("priority.gamma: must be >= 0");
}

double dynamic_priority(const Request& req, double t, const PriorityParams& p) {
  if (t < req.arrival_time) {
    throw ContractViolation("dynamic_priority: t precedes arrival of request " +
                            std::to_string(req.id));
  }
  return p.base_of(req.workload) + p.growth_of(req.workload) * (t - req.arrival_time);
}

double ft_total_priority(const Request& req, double t, const PriorityParams& p,
                         double loss) {
  if (req.workload != WorkloadType::kFineTune) {
    throw ContractViolation("ft_total_priority: request " + std::to_string(req.id) +
                            " is not a fine-tune task");
  }
  if (!(loss >= 0.0)) throw ContractViolation("ft_total_priority: loss must be >= 0");
  return dynamic_priority(req, t, p) + p.gamma * loss;
}

std::optional<double> crossover_age(WorkloadType a, WorkloadType b,
                                    const PriorityParams& p) {
  const double dg = p.growth_of(a) - p.growth_of(b);
  const double db = p.base_of(b) - p.base_of(a);
  if (db <= 0.0) return 0.0;  // already ahead (or tied) at age zero
  if (dg <= 0.0) return std::nullopt;
  return db / dg;
}

bool dequeues_before(const QueueEntry& a, const QueueEntry& b) {
  if (a.priority != b.priority) return a.priority > b.priority;
  if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
  return a.id < b.id;
}

namespace {

// std heap functions keep the "largest" element at the front; "largest" here
// is the one that dequeues first.
bool heap_less(const QueueEntry& a, const QueueEntry& b) { return dequeues_before(b, a); }

}  // namespace

void PriorityQueue::push(QueueEntry e) {
  heap_.push_back(e);
  std::push_heap(heap_.begin(), heap_.end(), heap_less);
}

const QueueEntry& PriorityQueue::top() const {
  if (heap_.empty()) throw ContractViolation("PriorityQueue::top on empty queue");
  return heap_.front();
}

QueueEntry PriorityQueue::pop() {
  if (heap_.empty()) throw ContractViolation("PriorityQueue::pop on empty queue");
  std::pop_heap(heap_.begin(), heap_.end(), heap_less);
  QueueEntry e = heap_.back();
  heap_.pop_back();
  return e;
}

void PriorityQueue::refresh(const KeyFn& key) {
  for (QueueEntry& e : heap_) e.priority = key(e);
  std::make_heap(heap_.begin(), heap_.end(), heap_less);
}

std::optional<QueueEntry> PriorityQueue::remove(std::size_t slot) {
  auto it = std::find_if(heap_.begin(), heap_.end(),
                         [slot](const QueueEntry& e) { return e.slot == slot; });
  if (it == heap_.end()) return std::nullopt;
  QueueEntry e = *it;
  *it = heap_.back();
  heap_.pop_back();
  std::make_heap(heap_.begin(), heap_.end(), heap_less);
  return e;
}

std::vector<QueueEntry> PriorityQueue::sorted() const {
  std::vector<QueueEntry> out = heap_;
  std::sort(out.begin(), out.end(), dequeues_before);
  return out;
}

}  // namespace macesim
