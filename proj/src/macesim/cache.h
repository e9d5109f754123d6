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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "macesim/workload.h"

namespace macesim {

struct CacheParams {
  bool prefix_sharing = true;
  bool pruning = true;
  uint32_t heads = 8;
  double weak_head_fraction = 0.25;
  double weak_head_norm = 0.05;
  double strong_head_norm = 1.0;
  double norm_noise = 0.2;     // relative sd of per-step norms
  uint32_t norm_window = 64;   // T, steps
  uint32_t prune_window = 128; // W, steps
  double tau_factor = 0.1;     // tau = tau_factor * mean initial norm
  uint32_t total_slots = 768;  // C_total per request
  // ms per token to reload an evicted prefix from host memory; < 0 means
  // evicted prefixes are recomputed at prefill cost.
  double reload_lat_per_token = -1.0;

  bool operator==(const CacheParams&) const = default;

  void validate() const;
  uint32_t weak_heads() const;
  double mean_initial_norm() const;
  double tau() const { return tau_factor * mean_initial_norm(); }
};

// Radix tree over prompt tokens. Memory in MB.
//
// Nodes are addressed by stable ids; a split keeps the existing id on the
// lower (suffix) half, so ids held by live requests stay valid. Invariants:
//  - concatenated labels root -> terminal node equal the inserted prompt;
//  - children of a node have distinct first tokens (map key);
//  - residency() == sum of kv_bytes over cached nodes;
//  - a node's ref_count >= each child's ref_count.
class PrefixTrie {
 public:
  using NodeId = std::size_t;
  static constexpr NodeId kRoot = 0;

  struct Node {
    std::vector<Token> label;
    NodeId parent = kRoot;
    std::map<Token, NodeId> children;
    bool cached = false;
    bool alive = false;
    bool offloaded = false;  // evicted while keep_offloaded is set
    double kv_bytes = 0.0;
    double last_used = 0.0;
    uint32_t ref_count = 0;
  };

  struct InsertResult {
    std::size_t shared_len = 0;  // cached prefix tokens reusable right now
    NodeId leaf = kRoot;
  };

  struct OffloadResult {
    std::vector<NodeId> evicted;
    std::size_t tokens = 0;
    double freed = 0.0;
    bool insufficient = false;
  };

  struct MaterializeResult {
    std::size_t computed = 0;  // tokens never cached before
    std::size_t reloaded = 0;  // tokens of offloaded nodes brought back
  };

  // With `keep_offloaded`, evicted nodes stay in the tree so a later
  // materialize can count them as reloaded instead of recomputed.
  explicit PrefixTrie(double kv_mem_per_token, bool keep_offloaded = false);

  // Adds the prompt path, splitting nodes where it diverges, and takes one
  // reference on every node along it. New nodes start uncached.
  InsertResult insert(std::span<const Token> prompt, double t);

  // Caches every node on the path to `leaf` and reports how many tokens that
  // took (labels of the previously uncached nodes).
  MaterializeResult materialize(NodeId leaf, double t);

  // Cached prefix `prompt` could reuse if inserted now. Read-only.
  std::size_t lookup(std::span<const Token> prompt) const;

  // Cached tokens contiguous from the root on the path to `leaf`.
  std::size_t cached_prefix_len(NodeId leaf) const;

  // Prefix length of `leaf`'s path (the inserted prompt length).
  std::size_t path_len(NodeId leaf) const;

  void touch(NodeId leaf, double t);

  // Drops one reference along the path; unreferenced uncached childless
  // nodes are removed.
  void release(NodeId leaf);

  // Orders `leaves` (indices into the argument) depth-first, children by
  // first token, so requests sharing a prefix are adjacent.
  std::vector<std::size_t> dfs_order(std::span<const NodeId> leaves) const;

  // Evicts unreferenced cached nodes, least recently used first (deeper
  // first on ties), until `mb_needed` is freed or no candidate is left.
  OffloadResult lru_offload(double mb_needed, double t);

  double residency() const { return residency_; }
  std::size_t node_count() const { return alive_; }
  // Sum of label lengths over live nodes.
  std::size_t stored_tokens() const;
  std::size_t cached_tokens() const;
  std::size_t metadata_bytes() const;
  const Node& node(NodeId id) const { return nodes_.at(id); }

  // Throws ContractViolation naming the first broken invariant.
  void check_invariants() const;

 private:
  NodeId new_node();
  void free_node(NodeId id);
  // Splits `id` after `k` label tokens; returns the new upper node.
  NodeId split(NodeId id, std::size_t k);
  std::vector<NodeId> path(NodeId leaf) const;
  std::size_t depth(NodeId id) const;
  void collect_garbage(NodeId from);

  double kv_mem_per_token_;
  bool keep_offloaded_;
  std::vector<Node> nodes_;
  std::vector<NodeId> free_;
  std::size_t alive_ = 0;
  double residency_ = 0.0;
};

// Per-head attention-norm statistics of one request.
struct HeadStats {
  std::size_t window = 64;                  // T
  std::vector<std::vector<double>> ring;    // per head, size <= window
  std::vector<std::size_t> next;            // ring write position
  std::vector<double> sum;                  // running window sum
  std::vector<double> mean;                 // a-bar
  std::vector<double> current;              // latest norm
  std::vector<int64_t> last_used;           // step of latest norm >= tau

  std::size_t heads() const { return mean.size(); }
};

HeadStats make_head_stats(std::size_t heads, std::size_t window, int64_t t0 = 0);

// Pushes one step of norms (>= 0, one per head). Throws ContractViolation on a
// head-count mismatch or a negative norm.
void update_head_stats(HeadStats& stats, std::span<const double> norms, int64_t t,
                       double tau);

// w_h = a_h / sum_j a_j; uniform when every a_h is 0.
std::vector<double> head_weights(std::span<const double> mean_norms);

// floor(w_h * c_total) per head, then one extra slot per head in descending
// weight (ties by lower index) until the total is reached. Requires
// c_total >= heads.
std::vector<uint32_t> allocate_capacity(std::span<const double> mean_norms,
                                        uint32_t c_total);
std::vector<uint32_t> allocate_capacity(const HeadStats& stats, uint32_t c_total);

// (t - last_used > W) || current norm < tau.
bool prune_decision(int64_t t, std::size_t head, const HeadStats& stats, int64_t W,
                    double tau);

// Longest prefix shared with any earlier prompt, divided by prompt length,
// for every request with a prompt, in trace order.
std::vector<double> sharing_ratios(const Trace& trace);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  double mean = 0.0;
};

// Equal-width bins over [lo, hi]; hi falls in the last bin.
Histogram make_histogram(std::span<const double> values, std::size_t bins,
                         double lo = 0.0, double hi = 1.0);

}  // namespace macesim
