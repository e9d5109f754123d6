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

#include "macesim/engine.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "macesim/errors.h"
#include "macesim/rng.h"

namespace macesim {

void EngineParams::validate() const {
  if (!(metrics_interval > 0.0)) throw ConfigError("engine.metrics_interval: must be > 0");
  if (!(scheduler_overhead_ms >= 0.0)) {
    throw ConfigError("engine.scheduler_overhead_ms: must be >= 0");
  }
  if (!(ft_interference_ms >= 0.0)) {
    throw ConfigError("engine.ft_interference_ms: must be >= 0");
  }
  if (!(batch_latency_factor > 0.0)) {
    throw ConfigError("engine.batch_latency_factor: must be > 0");
  }
  if (!(slo_factor > 0.0)) throw ConfigError("engine.slo_factor: must be > 0");
}

void SimConfig::validate() const {
  cost.validate();
  priority.validate();
  scheduler.validate();
  cache.validate();
  alignment.validate();
  engine.validate();
}

bool SimConfig::prefix_sharing() const {
  return cache.prefix_sharing && scheduler.policy != Policy::kHybridNoPrefix;
}

bool SimConfig::pruning() const {
  return cache.pruning && scheduler.policy != Policy::kHybridNoPrune;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

double utilization(std::span<const TickRecord> ticks) {
  double num = 0.0;
  double den = 0.0;
  for (const TickRecord& t : ticks) {
    num += t.utilization * t.duration_ms;
    den += t.duration_ms;
  }
  return den > 0.0 ? num / den : 0.0;
}

double fragmentation(std::span<const TickRecord> ticks) {
  double num = 0.0;
  double den = 0.0;
  for (const TickRecord& t : ticks) {
    if (t.queue_len == 0) continue;
    num += t.utilization * t.duration_ms;
    den += t.duration_ms;
  }
  return den > 0.0 ? 1.0 - num / den : 0.0;
}

double forward_latency_ms(std::size_t prompt_len, const CostProfile& cost,
                          double scheduler_overhead_ms) {
  return cost.prefill_lat_per_token * static_cast<double>(prompt_len) +
         cost.decode_lat_per_step + 2.0 * (cost.iter_overhead + scheduler_overhead_ms);
}

namespace {

constexpr uint64_t kNormStream = 0x4E0F3A0000000000ULL;

enum class Phase : uint8_t { kQueued, kDone, kRejected, kSkipped };

struct Task {
  Request req;
  Phase phase = Phase::kQueued;
  bool prefilled = false;  // holds KV
  bool has_leaf = false;
  PrefixTrie::NodeId leaf = PrefixTrie::kRoot;
  uint64_t private_slots = 0;  // head-token KV slots outside the trie
  std::vector<uint64_t> head_tokens;
  HeadStats heads;
  Rng norm_rng{0};
  double last_token = -1.0;
  RequestMetrics m;
};

class Simulator {
 public:
  Simulator(const Trace& trace, const SimConfig& cfg)
      : trace_(trace),
        cfg_(cfg),
        sharing_(cfg.prefix_sharing()),
        pruning_(cfg.pruning()),
        bin_packing_(uses_bin_packing(cfg.scheduler.policy)),
        trie_(cfg.cost.decode_kv_mem_per_token, cfg.cache.reload_lat_per_token >= 0.0),
        env_(cfg.alignment, cfg.seed),
        slot_mb_(cfg.cost.decode_kv_mem_per_token / cfg.cache.heads),
        tau_(cfg.cache.tau()),
        limits_{cfg.scheduler.max_decode_steps, cfg.alignment.max_ft_steps,
                cfg.alignment.loss_threshold} {
    cfg_.alignment.gamma = cfg_.priority.gamma;
    if (!bin_packing_) {
      baseline_ = std::make_unique<BaselineScheduler>(cfg.scheduler.policy, cfg.scheduler);
    }
    for (std::size_t i = 1; i < trace.size(); ++i) {
      if (trace[i].arrival_time < trace[i - 1].arrival_time) {
        throw ContractViolation("simulate: trace not sorted by arrival_time");
      }
    }
    horizon_ = cfg.engine.metrics_horizon > 0.0
                   ? cfg.engine.metrics_horizon
                   : (trace.empty() ? 0.0 : trace.back().arrival_time);
    tasks_.reserve(trace.size());
  }

  SimResult run() {
    const std::vector<double> ratios = sharing_ratios(trace_);
    result_.sharing = make_histogram(ratios, 10);
    while (true) {
      admit_arrivals();
      if (live_ == 0) {
        if (next_arrival_ >= trace_.size()) break;
        advance_clock(trace_[next_arrival_].arrival_time);
        continue;
      }
      if (!bin_packing_ && !baseline_->runnable(clock_)) {
        double next = std::numeric_limits<double>::infinity();
        if (next_arrival_ < trace_.size()) next = trace_[next_arrival_].arrival_time;
        if (auto w = baseline_->next_window(clock_)) next = std::min(next, *w);
        if (!std::isfinite(next)) {
          throw ContractViolation("liveness: live tasks but nothing can ever run");
        }
        advance_clock(std::max(next, clock_));
        continue;
      }
      if (bin_packing_) {
        hybrid_tick();
      } else {
        baseline_tick();
      }
    }
    sample_until(std::numeric_limits<double>::infinity());
    finalize();
    return std::move(result_);
  }

 private:
  // ---- accounting -------------------------------------------------------

  double resident_mb() const { return static_cast<double>(slots_total_) * slot_mb_; }

  double budget() const {
    return cfg_.cost.task_capacity() - resident_mb() - trie_.residency();
  }

  WorkloadEstimate estimate(const Task& t) const {
    std::size_t cached = 0;
    if (sharing_ && t.req.workload == WorkloadType::kPrefill) {
      cached = trie_.lookup(t.req.prompt_tokens);
    }
    return get_workload(t.req, cfg_.cost, cached);
  }

  double priority(const Task& t) const {
    if (t.req.workload == WorkloadType::kFineTune) {
      return ft_total_priority(t.req, clock_, cfg_.priority, env_.pair_loss(t.req));
    }
    return dynamic_priority(t.req, clock_, cfg_.priority);
  }

  QueueEntry entry(std::size_t slot) const {
    const Task& t = tasks_[slot];
    return {priority(t), t.req.arrival_time, t.req.id, slot};
  }

  void add_slots(Task& t, uint64_t n) {
    t.private_slots += n;
    slots_total_ += n;
  }

  void drop_kv(Task& t) {
    slots_total_ -= t.private_slots;
    t.private_slots = 0;
    if (t.has_leaf) {
      trie_.release(t.leaf);
      t.has_leaf = false;
    }
    t.prefilled = false;
    t.head_tokens.assign(cfg_.cache.heads, 0);
  }

  // ---- clock and sampling -----------------------------------------------

  void sample_until(double t) {
    while (next_sample_ < t && next_sample_ <= horizon_) {
      if (pruning_) {
        env_.set_pruning_aggressiveness(
            generated_slots_ ? static_cast<double>(pruned_slots_) / generated_slots_ : 0.0);
      }
      for (uint32_t k = 0; k < env_.tenants(); ++k) {
        const EvalMetrics e = env_.eval_metrics(k, next_sample_);
        result_.alignment.push_back({next_sample_, k, e.win_rate, e.clpd});
      }
      ++samples_taken_;
      next_sample_ = static_cast<double>(samples_taken_) * cfg_.engine.metrics_interval;
    }
  }

  void advance_clock(double t) {
    sample_until(t);
    clock_ = t;
    env_.advance_to(t);
  }

  // ---- admission ----------------------------------------------------------

  void admit_arrivals() {
    while (next_arrival_ < trace_.size() && trace_[next_arrival_].arrival_time <= clock_) {
      admit(trace_[next_arrival_++]);
    }
  }

  void admit(const Request& r) {
    r.validate();
    const std::size_t slot = tasks_.size();
    tasks_.emplace_back();
    Task& t = tasks_.back();
    t.req = r;
    t.head_tokens.assign(cfg_.cache.heads, 0);
    t.norm_rng = Rng(derive_seed(cfg_.seed, kNormStream ^ r.id));
    RequestMetrics& m = t.m;
    m.id = r.id;
    m.tenant = r.tenant;
    m.workload = r.workload;
    m.arrival = r.arrival_time;
    m.prompt_len = r.prompt_tokens.size();
    m.slo_deadline_ms =
        cfg_.engine.slo_factor *
        forward_latency_ms(m.prompt_len, cfg_.cost, cfg_.engine.scheduler_overhead_ms);
    if (r.workload == WorkloadType::kFineTune && cfg_.scheduler.disable_retraining) {
      t.phase = Phase::kSkipped;
      m.skipped = true;
      return;
    }
    if (get_workload(r, cfg_.cost, 0).mem > cfg_.cost.task_capacity()) {
      t.phase = Phase::kRejected;
      m.rejected = true;
      return;
    }
    ++live_;
    if (bin_packing_) {
      queue_.push(entry(slot));
    } else {
      baseline_->enqueue(slot, r.workload == WorkloadType::kFineTune);
    }
  }

  // ---- memory recovery ----------------------------------------------------

  void preempt(std::size_t slot, TickRecord& rec) {
    Task& t = tasks_[slot];
    drop_kv(t);
    t.req.workload = WorkloadType::kPrefill;
    ++t.m.preemptions;
    ++rec.preempted;
  }

  bool offload(double mb, TickRecord& rec) {
    if (!sharing_ || !(mb > 0.0)) return false;
    const PrefixTrie::OffloadResult off = trie_.lru_offload(mb, clock_);
    rec.evicted_mb += off.freed;
    evicted_mb_ += off.freed;
    return off.freed > 0.0;
  }

  // Makes room for the highest-priority task: trie eviction first, then
  // lower-priority tasks that hold KV are preempted, lowest first.
  void recover_memory_hybrid(TickRecord& rec) {
    const std::vector<QueueEntry> order = queue_.sorted();
    if (order.empty()) return;
    if (sharing_) {
      double demand = 0.0;
      const std::size_t n = std::min<std::size_t>(order.size(), cfg_.scheduler.tau_task);
      for (std::size_t i = 0; i < n; ++i) demand += estimate(tasks_[order[i].slot]).mem;
      demand = std::min(demand, cfg_.cost.task_capacity());
      if (demand > budget()) offload(demand - budget(), rec);
    }
    const QueueEntry top = order.front();
    double need = estimate(tasks_[top.slot]).mem;
    while (need > budget() && offload(need - budget(), rec)) {
    }
    if (!(need > budget())) return;
    // Preempt only when the victims' private KV alone covers the shortfall.
    // A partial preemption frees nothing the top can use and the victim
    // re-prefills next tick, which can cycle forever.
    std::vector<std::size_t> victims;
    double reclaim = 0.0;
    for (std::size_t pos = order.size(); pos-- > 1 && budget() + reclaim < need;) {
      const std::size_t s = order[pos].slot;
      if (tasks_[s].prefilled && tasks_[s].private_slots > 0 && recompute_fits(tasks_[s]) &&
          dequeues_before(top, requeued_as_prefill(s))) {
        victims.push_back(s);
        reclaim += static_cast<double>(tasks_[s].private_slots) * slot_mb_;
      }
    }
    if (budget() + reclaim < need) return;
    for (std::size_t victim : victims) {
      if (!(need > budget())) break;
      preempt(victim, rec);
      queue_.remove(victim);
      queue_.push(entry(victim));
      need = estimate(tasks_[top.slot]).mem;
    }
  }

  // A victim's queue entry once it is back to prefill; it must still rank
  // below the task it made room for, or it takes the memory straight back.
  QueueEntry requeued_as_prefill(std::size_t slot) const {
    Request r = tasks_[slot].req;
    r.workload = WorkloadType::kPrefill;
    return {dynamic_priority(r, clock_, cfg_.priority), r.arrival_time, r.id, slot};
  }

  bool recompute_fits(const Task& t) const {
    Request r = t.req;
    r.workload = WorkloadType::kPrefill;
    return get_workload(r, cfg_.cost, 0).mem <= cfg_.cost.task_capacity();
  }

  // ---- ticks ----------------------------------------------------------------

  void hybrid_tick() {
    TickRecord rec;
    const auto t0 = std::chrono::steady_clock::now();
    queue_.refresh([this](const QueueEntry& e) { return priority(tasks_[e.slot]); });
    recover_memory_hybrid(rec);
    const double cap_budget = budget();
    const std::size_t before = queue_.size();
    ScheduleResult sr = schedule_iteration(
        queue_, cap_budget, cfg_.scheduler,
        [this](const QueueEntry& e) { return estimate(tasks_[e.slot]); },
        [this](const QueueEntry& e) {
          return tasks_[e.slot].req.workload == WorkloadType::kFineTune;
        });
    for (const QueueEntry& e : sr.oversized) queue_.push(e);
    const auto t1 = std::chrono::steady_clock::now();

    if (cfg_.engine.check_invariants) {
      check_conservation(sr, before);
    }
    if (sr.executed.empty()) {
      // Everything dequeued was too large for this tick. Run the best task
      // that does fit so resident KV keeps draining; with none, the top task
      // cannot fit at all.
      std::optional<QueueEntry> fallback;
      for (const QueueEntry& e : queue_.sorted()) {
        if (estimate(tasks_[e.slot]).mem <= cap_budget + kEps) {
          fallback = e;
          break;
        }
      }
      if (!fallback) {
        const QueueEntry top = queue_.pop();
        reject(top.slot);
        return;
      }
      queue_.remove(fallback->slot);
      sr.executed.capacity_budget = cap_budget;
      sr.executed.add(fallback->slot, estimate(tasks_[fallback->slot]));
    }
    rec.dequeued = sr.dequeued;
    rec.bins_opened = sr.bins.size();
    rec.score_evaluations = sr.score_evaluations;
    rec.requeued = sr.requeued.size();
    rec.deferred = sr.oversized.size();
    rec.decision_ms = decision_ms(t0, t1);
    rec.queue_len = queue_.size();
    execute(sr.executed, cap_budget, rec);
    for (std::size_t slot : sr.executed.tasks) {
      if (tasks_[slot].phase == Phase::kQueued) queue_.push(entry(slot));
    }
    finish_record(rec);
  }

  void baseline_tick() {
    TickRecord rec;
    const auto t0 = std::chrono::steady_clock::now();
    BaselineScheduler::Hooks hooks{
        [this](std::size_t s) { return tasks_[s].req.workload == WorkloadType::kFineTune; },
        [this](std::size_t s) { return estimate(tasks_[s]); }};
    if (sharing_) {
      // Same demand-driven eviction as the hybrid path, over the tasks the
      // next bin could admit.
      double demand = 0.0;
      for (std::size_t s : baseline_->candidates()) demand += estimate(tasks_[s]).mem;
      demand = std::min(demand, cfg_.cost.task_capacity());
      if (demand > budget()) offload(demand - budget(), rec);
    }
    BaselineScheduler::Decision d;
    for (;;) {
      d = baseline_->next_bin(clock_, budget(), hooks);
      const bool overflow = d.bin.used_memory > budget() + kEps;
      if (!overflow && !(d.bin.empty() && d.blocked)) break;
      const double need = d.bin.empty() ? estimate(tasks_[*d.blocked]).mem : d.bin.used_memory;
      if (offload(need - budget(), rec)) continue;
      const std::vector<std::size_t>& running = baseline_->running_inference();
      std::optional<std::size_t> victim;
      for (auto it = running.rbegin(); it != running.rend(); ++it) {
        // Overflow sheds the newest member; a blocked head needs memory back.
        if ((overflow || tasks_[*it].prefilled) && recompute_fits(tasks_[*it])) {
          victim = *it;
          break;
        }
      }
      if (!victim) {
        if (d.bin.empty() && d.blocked) {
          baseline_->finished(*d.blocked);
          reject(*d.blocked);
          return;
        }
        throw ContractViolation("capacity safety: running batch exceeds memory budget");
      }
      if (tasks_[*victim].prefilled) {
        preempt(*victim, rec);
      } else {
        ++rec.preempted;
      }
      baseline_->preempt(*victim);
    }
    const auto t1 = std::chrono::steady_clock::now();
    if (d.bin.empty()) {
      // Periodic window closing or continuous batch waiting; nothing to run.
      if (!baseline_->runnable(clock_)) return;
      throw ContractViolation("liveness: scheduler produced an empty bin with work pending");
    }
    if (cfg_.engine.check_invariants) check_baseline_conservation();
    rec.retraining = d.retraining;
    rec.dequeued = d.bin.tasks.size();
    rec.bins_opened = 1;
    rec.decision_ms = decision_ms(t0, t1);
    rec.queue_len = baseline_->queued();
    execute(d.bin, budget(), rec);
    for (std::size_t slot : d.bin.tasks) {
      if (tasks_[slot].phase != Phase::kQueued) baseline_->finished(slot);
    }
    finish_record(rec);
  }

  double decision_ms(std::chrono::steady_clock::time_point t0,
                     std::chrono::steady_clock::time_point t1) const {
    if (!cfg_.engine.measure_overhead) return cfg_.engine.scheduler_overhead_ms;
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  }

  void reject(std::size_t slot) {
    Task& t = tasks_[slot];
    drop_kv(t);
    t.phase = Phase::kRejected;
    t.m.rejected = true;
    t.m.finish = clock_;
    --live_;
  }

  // ---- execution ----------------------------------------------------------

  void execute(const Bin& bin, double cap_budget, TickRecord& rec) {
    if (bin.used_memory > cap_budget + kEps) {
      throw ContractViolation("capacity safety: bin uses " + std::to_string(bin.used_memory) +
                              " MB of a " + std::to_string(cap_budget) + " MB budget");
    }
    rec.index = result_.ticks.size();
    rec.start = clock_;
    rec.budget = cap_budget;
    rec.bin_memory = bin.used_memory;
    const double resident_before = resident_mb() + trie_.residency();

    // Prefills run in trie DFS order so a shared segment is computed once,
    // by the first request that reaches it.
    std::vector<std::size_t> prefills;
    std::vector<std::size_t> others;
    for (std::size_t slot : bin.tasks) {
      (tasks_[slot].req.workload == WorkloadType::kPrefill ? prefills : others).push_back(slot);
    }
    for (std::size_t slot : bin.tasks) {
      Task& t = tasks_[slot];
      if (t.m.first_scheduled < 0.0) t.m.first_scheduled = clock_;
      rec.tasks.push_back(t.req.id);
      switch (t.req.workload) {
        case WorkloadType::kPrefill: ++rec.prefill; break;
        case WorkloadType::kDecode: ++rec.decode; break;
        case WorkloadType::kFineTune: ++rec.finetune; break;
      }
    }
    double max_lat = 0.0;
    bool has_inference = false;
    uint32_t ft_count = 0;
    if (sharing_ && !prefills.empty()) {
      std::vector<PrefixTrie::NodeId> leaves;
      for (std::size_t slot : prefills) {
        Task& t = tasks_[slot];
        const auto ins = trie_.insert(t.req.prompt_tokens, clock_);
        t.leaf = ins.leaf;
        t.has_leaf = true;
        leaves.push_back(ins.leaf);
      }
      std::vector<std::size_t> ordered;
      for (std::size_t i : trie_.dfs_order(leaves)) ordered.push_back(prefills[i]);
      prefills = std::move(ordered);
    }
    for (std::size_t slot : prefills) {
      max_lat = std::max(max_lat, run_prefill(tasks_[slot], rec));
      has_inference = true;
    }
    for (std::size_t slot : others) {
      const Task& t = tasks_[slot];
      const WorkloadEstimate est = get_workload(t.req, cfg_.cost);
      max_lat = std::max(max_lat, est.lat);
      if (t.req.workload == WorkloadType::kFineTune) {
        ++ft_count;
      } else {
        has_inference = true;
      }
    }

    rec.bin_latency_ms = max_lat;
    double duration = max_lat * cfg_.engine.batch_latency_factor + cfg_.cost.iter_overhead +
                      rec.decision_ms;
    if (has_inference) duration += cfg_.engine.ft_interference_ms * ft_count;
    rec.duration_ms = duration;
    rec.used_memory = cfg_.cost.weights_resident + resident_before + bin.used_memory;
    rec.utilization = rec.used_memory / cfg_.cost.capacity;

    advance_clock(clock_ + duration / 1000.0);

    for (std::size_t slot : others) {
      Task& t = tasks_[slot];
      if (t.req.workload == WorkloadType::kDecode) {
        run_decode(t, rec);
      } else {
        run_finetune(t);
      }
    }
    const double resident_after = resident_mb() + trie_.residency();
    if (cfg_.cost.weights_resident + resident_after > cfg_.cost.capacity + kEps) {
      throw ContractViolation("memory conservation: resident memory exceeds capacity");
    }
    rec.resident_kv = resident_mb();
    rec.trie_residency = trie_.residency();
    rec.live_requests = live_;
  }

  double run_prefill(Task& t, TickRecord& rec) {
    const std::size_t prompt = t.req.prompt_tokens.size();
    std::size_t computed = prompt;
    double reload_ms = 0.0;
    if (sharing_) {
      const PrefixTrie::MaterializeResult mat = trie_.materialize(t.leaf, clock_);
      computed = mat.computed;
      reload_ms = cfg_.cache.reload_lat_per_token >= 0.0
                      ? cfg_.cache.reload_lat_per_token * static_cast<double>(mat.reloaded)
                      : 0.0;
      if (cfg_.cache.reload_lat_per_token < 0.0) computed += mat.reloaded;
      rec.cached_mb += static_cast<double>(mat.computed + mat.reloaded) *
                       cfg_.cost.decode_kv_mem_per_token;
      const std::size_t shared = prompt - mat.computed - mat.reloaded;
      rec.shared_tokens += shared;
      t.m.cached_prompt_tokens += shared;
      add_slots(t, static_cast<uint64_t>(t.req.decode_pos) * cfg_.cache.heads);
    } else {
      add_slots(t, static_cast<uint64_t>(prompt + t.req.decode_pos) * cfg_.cache.heads);
    }
    const std::size_t tokens = computed + t.req.decode_pos;
    t.head_tokens.assign(cfg_.cache.heads, t.req.decode_pos);
    t.heads = make_head_stats(cfg_.cache.heads, cfg_.cache.norm_window, t.req.decode_pos);
    t.prefilled = true;
    t.req.workload = WorkloadType::kDecode;
    return cfg_.cost.prefill_lat_per_token * static_cast<double>(tokens) + reload_ms;
  }

  void run_decode(Task& t, TickRecord& rec) {
    ++t.req.decode_pos;
    ++t.m.decoded;
    ++decoded_tokens_;
    if (t.m.first_token < 0.0) {
      t.m.first_token = clock_;
      t.m.ttft_ms = (clock_ - t.req.arrival_time) * 1000.0;
    } else {
      result_.tbt_ms.push_back((clock_ - t.last_token) * 1000.0);
    }
    t.last_token = clock_;
    const uint32_t heads = cfg_.cache.heads;
    add_slots(t, heads);
    for (auto& n : t.head_tokens) ++n;
    generated_slots_ += heads;
    if (pruning_) prune(t, rec);
    if (check_end(t.req, limits_, 0.0)) finish(t);
  }

  void prune(Task& t, TickRecord& rec) {
    const CacheParams& cp = cfg_.cache;
    const uint32_t weak = cp.weak_heads();
    std::vector<double> norms(cp.heads);
    for (uint32_t h = 0; h < cp.heads; ++h) {
      const double base = h < weak ? cp.weak_head_norm : cp.strong_head_norm;
      norms[h] = base * std::max(0.0, 1.0 + cp.norm_noise * t.norm_rng.normal());
    }
    const auto step = static_cast<int64_t>(t.req.decode_pos);
    update_head_stats(t.heads, norms, step, tau_);
    const std::vector<uint32_t> caps = allocate_capacity(t.heads, cp.total_slots);
    for (uint32_t h = 0; h < cp.heads; ++h) {
      if (!prune_decision(step, h, t.heads, cp.prune_window, tau_)) continue;
      const uint64_t keep = std::max<uint32_t>(caps[h], 1);
      if (t.head_tokens[h] <= keep) continue;
      const uint64_t drop = t.head_tokens[h] - keep;
      t.head_tokens[h] = keep;
      t.private_slots -= drop;
      slots_total_ -= drop;
      pruned_slots_ += drop;
      rec.pruned_mb += static_cast<double>(drop) * slot_mb_;
    }
  }

  void run_finetune(Task& t) {
    const double loss = env_.ft_step(t.req);
    ++t.req.ft_steps_done;
    ++t.m.ft_steps;
    ++ft_steps_;
    if (check_end(t.req, limits_, loss)) finish(t);
  }

  void finish(Task& t) {
    drop_kv(t);
    t.phase = Phase::kDone;
    t.m.finish = clock_;
    if (t.m.workload == WorkloadType::kFineTune) {
      t.m.ft_latency_ms = (clock_ - t.req.arrival_time) * 1000.0;
    } else {
      t.m.slo_met = t.m.ttft_ms >= 0.0 && t.m.ttft_ms <= t.m.slo_deadline_ms;
    }
    --live_;
  }

  void finish_record(TickRecord& rec) {
    if (cfg_.engine.measure_overhead) rec.metadata_bytes = metadata_bytes();
    if (cfg_.engine.check_invariants && sharing_) trie_.check_invariants();
    result_.ticks.push_back(std::move(rec));
  }

  std::size_t metadata_bytes() const {
    std::size_t bytes = trie_.metadata_bytes();
    bytes += bin_packing_ ? queue_.raw().capacity() * sizeof(QueueEntry)
                          : baseline_->queued() * sizeof(std::size_t);
    for (const Task& t : tasks_) {
      if (t.phase != Phase::kQueued || !t.prefilled) continue;
      bytes += t.heads.heads() * (t.heads.window + 4) * sizeof(double) +
               t.head_tokens.size() * sizeof(uint64_t);
    }
    return bytes;
  }

  // ---- invariant checks -----------------------------------------------------

  void check_conservation(const ScheduleResult& sr, std::size_t before) const {
    std::vector<std::size_t> seen;
    seen.insert(seen.end(), sr.executed.tasks.begin(), sr.executed.tasks.end());
    for (const QueueEntry& e : sr.requeued) seen.push_back(e.slot);
    for (const QueueEntry& e : sr.oversized) seen.push_back(e.slot);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
      throw ContractViolation("task conservation: a task was placed twice");
    }
    if (seen.size() != sr.dequeued) {
      throw ContractViolation("task conservation: dequeued tasks lost");
    }
    if (queue_.size() + sr.executed.tasks.size() != before) {
      throw ContractViolation("task conservation: queue size mismatch");
    }
    if (before != live_) throw ContractViolation("task conservation: live count mismatch");
    for (const Bin& b : sr.bins) {
      if (b.used_memory > b.capacity_budget + kEps) {
        throw ContractViolation("capacity safety: speculative bin over budget");
      }
    }
  }

  void check_baseline_conservation() const {
    if (baseline_->total() != live_) {
      throw ContractViolation("task conservation: scheduler holds " +
                              std::to_string(baseline_->total()) + " tasks, " +
                              std::to_string(live_) + " live");
    }
  }

  // ---- summary --------------------------------------------------------------

  void finalize() {
    RunMetrics& m = result_.metrics;
    std::vector<double> ttft;
    std::vector<double> ftl;
    uint64_t inference = 0;
    uint64_t slo_met = 0;
    for (const Task& t : tasks_) {
      result_.requests.push_back(t.m);
      const RequestMetrics& r = t.m;
      if (r.rejected) ++m.rejected;
      if (t.phase == Phase::kDone) ++m.completed;
      m.preemptions += r.preemptions;
      if (r.workload == WorkloadType::kFineTune) {
        if (r.ft_latency_ms >= 0.0) ftl.push_back(r.ft_latency_ms);
      } else {
        ++inference;
        if (r.slo_met) ++slo_met;
        if (r.ttft_ms >= 0.0) ttft.push_back(r.ttft_ms);
      }
    }
    m.ttft_p50 = percentile(ttft, 50);
    m.ttft_p99 = percentile(ttft, 99);
    m.tbt_p50 = percentile(result_.tbt_ms, 50);
    m.tbt_p99 = percentile(result_.tbt_ms, 99);
    double tbt_sum = 0.0;
    for (double x : result_.tbt_ms) tbt_sum += x;
    m.tbt_mean = result_.tbt_ms.empty() ? 0.0 : tbt_sum / result_.tbt_ms.size();
    m.ft_lat_p50 = percentile(ftl, 50);
    m.slo_attainment = inference ? static_cast<double>(slo_met) / inference : 0.0;
    m.utilization = utilization(result_.ticks);
    m.fragmentation = fragmentation(result_.ticks);
    m.total_iterations = result_.ticks.size();
    m.makespan = clock_;
    m.decoded_tokens = decoded_tokens_;
    m.throughput_tok_s = clock_ > 0.0 ? decoded_tokens_ / clock_ : 0.0;
    m.ft_steps = ft_steps_;
    m.evicted_mb = evicted_mb_;
    m.pruned_fraction =
        generated_slots_ ? static_cast<double>(pruned_slots_) / generated_slots_ : 0.0;
    double lat = 0.0;
    double dec = 0.0;
    for (const TickRecord& t : result_.ticks) {
      lat += t.duration_ms;
      dec += t.decision_ms;
    }
    if (!result_.ticks.empty()) {
      m.mean_iter_latency_ms = lat / result_.ticks.size();
      m.mean_decision_ms = dec / result_.ticks.size();
    }
    double wr = 0.0;
    double cl = 0.0;
    for (const AlignmentSample& s : result_.alignment) {
      wr += s.win_rate;
      cl += s.clpd;
    }
    if (!result_.alignment.empty()) {
      m.avg_win_rate = wr / result_.alignment.size();
      m.avg_clpd = cl / result_.alignment.size();
    }
    m.sharing_ratio_mean = result_.sharing.mean;
  }

  static constexpr double kEps = 1e-6;

  const Trace& trace_;
  SimConfig cfg_;
  bool sharing_;
  bool pruning_;
  bool bin_packing_;
  PrefixTrie trie_;
  AlignmentEnv env_;
  double slot_mb_;
  double tau_;
  EndLimits limits_;
  std::unique_ptr<BaselineScheduler> baseline_;
  PriorityQueue queue_;
  std::vector<Task> tasks_;
  std::size_t next_arrival_ = 0;
  std::size_t live_ = 0;
  double clock_ = 0.0;
  double horizon_ = 0.0;
  double next_sample_ = 0.0;
  uint64_t samples_taken_ = 0;
  uint64_t slots_total_ = 0;
  uint64_t generated_slots_ = 0;
  uint64_t pruned_slots_ = 0;
  uint64_t decoded_tokens_ = 0;
  uint64_t ft_steps_ = 0;
  double evicted_mb_ = 0.0;
  SimResult result_;
};

}  // namespace

SimResult simulate(const Trace& trace, const SimConfig& cfg) {
  cfg.validate();
  Simulator sim(trace, cfg);
  return sim.run();
}

}  // namespace macesim
