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

#include "macesim/cache.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "macesim/errors.h"

namespace macesim {

void CacheParams::validate() const {
  if (heads < 1) throw ConfigError("cache.heads: must be >= 1");
  if (!(weak_head_fraction >= 0.0 && weak_head_fraction <= 1.0)) {
    throw ConfigError("cache.weak_head_fraction: must be in [0, 1]");
  }
  if (!(weak_head_norm >= 0.0)) throw ConfigError("cache.weak_head_norm: must be >= 0");
  if (!(strong_head_norm >= 0.0)) {
    throw ConfigError("cache.strong_head_norm: must be >= 0");
  }
  if (!(norm_noise >= 0.0)) throw ConfigError("cache.norm_noise: must be >= 0");
  if (norm_window < 1) throw ConfigError("cache.norm_window: must be >= 1");
  if (prune_window < 1) throw ConfigError("cache.prune_window: must be >= 1");
  if (!(tau_factor >= 0.0)) throw ConfigError("cache.tau_factor: must be >= 0");
  if (total_slots < heads) throw ConfigError("cache.total_slots: must be >= cache.heads");
}

uint32_t CacheParams::weak_heads() const {
  return static_cast<uint32_t>(std::lround(weak_head_fraction * heads));
}

double CacheParams::mean_initial_norm() const {
  const double weak = weak_heads();
  return (weak * weak_head_norm + (heads - weak) * strong_head_norm) / heads;
}

// ---------------------------------------------------------------------------
// PrefixTrie

PrefixTrie::PrefixTrie(double kv_mem_per_token, bool keep_offloaded)
    : kv_mem_per_token_(kv_mem_per_token), keep_offloaded_(keep_offloaded) {
  nodes_.emplace_back();
  nodes_[kRoot].alive = true;
  alive_ = 1;
}

PrefixTrie::NodeId PrefixTrie::new_node() {
  NodeId id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
    nodes_[id] = Node{};
  } else {
    id = nodes_.size();
    nodes_.emplace_back();
  }
  nodes_[id].alive = true;
  ++alive_;
  return id;
}

void PrefixTrie::free_node(NodeId id) {
  Node& n = nodes_[id];
  if (n.cached) residency_ -= n.kv_bytes;
  nodes_[n.parent].children.erase(n.label.front());
  n = Node{};
  free_.push_back(id);
  --alive_;
}

PrefixTrie::NodeId PrefixTrie::split(NodeId id, std::size_t k) {
  const NodeId upper = new_node();
  Node& lo = nodes_[id];
  Node& up = nodes_[upper];
  up.label.assign(lo.label.begin(), lo.label.begin() + static_cast<std::ptrdiff_t>(k));
  lo.label.erase(lo.label.begin(), lo.label.begin() + static_cast<std::ptrdiff_t>(k));
  up.parent = lo.parent;
  up.cached = lo.cached;
  up.offloaded = lo.offloaded;
  up.last_used = lo.last_used;
  up.ref_count = lo.ref_count;
  if (lo.cached) {
    up.kv_bytes = static_cast<double>(up.label.size()) * kv_mem_per_token_;
    lo.kv_bytes = static_cast<double>(lo.label.size()) * kv_mem_per_token_;
  }
  up.children.emplace(lo.label.front(), id);
  nodes_[up.parent].children[up.label.front()] = upper;
  lo.parent = upper;
  return upper;
}

PrefixTrie::InsertResult PrefixTrie::insert(std::span<const Token> prompt, double t) {
  if (prompt.empty()) throw ContractViolation("trie_insert: prompt must be non-empty");
  InsertResult r;
  NodeId node = kRoot;
  std::size_t pos = 0;
  bool contiguous = true;
  while (pos < prompt.size()) {
    auto it = nodes_[node].children.find(prompt[pos]);
    if (it == nodes_[node].children.end()) {
      const NodeId child = new_node();
      nodes_[child].label.assign(prompt.begin() + static_cast<std::ptrdiff_t>(pos),
                                 prompt.end());
      nodes_[child].parent = node;
      nodes_[node].children.emplace(prompt[pos], child);
      node = child;
      break;
    }
    NodeId child = it->second;
    const std::vector<Token>& lab = nodes_[child].label;
    std::size_t k = 0;
    while (k < lab.size() && pos + k < prompt.size() && lab[k] == prompt[pos + k]) ++k;
    if (k < lab.size()) child = split(child, k);
    if (contiguous && nodes_[child].cached) {
      r.shared_len += k;
    } else {
      contiguous = false;
    }
    pos += k;
    node = child;
  }
  r.leaf = node;
  for (NodeId n = node;; n = nodes_[n].parent) {
    ++nodes_[n].ref_count;
    nodes_[n].last_used = t;
    if (n == kRoot) break;
  }
  return r;
}

std::vector<PrefixTrie::NodeId> PrefixTrie::path(NodeId leaf) const {
  if (leaf >= nodes_.size() || !nodes_[leaf].alive) {
    throw ContractViolation("PrefixTrie: stale node id " + std::to_string(leaf));
  }
  std::vector<NodeId> p;
  for (NodeId n = leaf; n != kRoot; n = nodes_[n].parent) p.push_back(n);
  std::reverse(p.begin(), p.end());
  return p;
}

std::size_t PrefixTrie::depth(NodeId id) const {
  std::size_t d = 0;
  for (NodeId n = id; n != kRoot; n = nodes_[n].parent) ++d;
  return d;
}

PrefixTrie::MaterializeResult PrefixTrie::materialize(NodeId leaf, double t) {
  MaterializeResult r;
  for (NodeId id : path(leaf)) {
    Node& n = nodes_[id];
    if (!n.cached) {
      n.cached = true;
      n.kv_bytes = static_cast<double>(n.label.size()) * kv_mem_per_token_;
      residency_ += n.kv_bytes;
      (n.offloaded ? r.reloaded : r.computed) += n.label.size();
      n.offloaded = false;
    }
    n.last_used = t;
  }
  return r;
}

std::size_t PrefixTrie::lookup(std::span<const Token> prompt) const {
  std::size_t len = 0;
  NodeId node = kRoot;
  while (len < prompt.size()) {
    auto it = nodes_[node].children.find(prompt[len]);
    if (it == nodes_[node].children.end()) break;
    const Node& child = nodes_[it->second];
    if (!child.cached) break;
    std::size_t k = 0;
    while (k < child.label.size() && len + k < prompt.size() &&
           child.label[k] == prompt[len + k]) {
      ++k;
    }
    len += k;
    if (k < child.label.size()) break;
    node = it->second;
  }
  return len;
}

std::size_t PrefixTrie::cached_prefix_len(NodeId leaf) const {
  std::size_t len = 0;
  for (NodeId id : path(leaf)) {
    if (!nodes_[id].cached) break;
    len += nodes_[id].label.size();
  }
  return len;
}

std::size_t PrefixTrie::path_len(NodeId leaf) const {
  std::size_t len = 0;
  for (NodeId id : path(leaf)) len += nodes_[id].label.size();
  return len;
}

void PrefixTrie::touch(NodeId leaf, double t) {
  for (NodeId id : path(leaf)) nodes_[id].last_used = t;
  nodes_[kRoot].last_used = t;
}

void PrefixTrie::collect_garbage(NodeId from) {
  NodeId n = from;
  while (n != kRoot) {
    const Node& node = nodes_[n];
    if (node.ref_count != 0 || node.cached || node.offloaded || !node.children.empty()) {
      break;
    }
    const NodeId parent = node.parent;
    free_node(n);
    n = parent;
  }
}

void PrefixTrie::release(NodeId leaf) {
  const std::vector<NodeId> p = path(leaf);
  for (NodeId id : p) {
    if (nodes_[id].ref_count == 0) {
      throw ContractViolation("PrefixTrie::release: ref_count underflow");
    }
    --nodes_[id].ref_count;
  }
  --nodes_[kRoot].ref_count;
  if (!p.empty()) collect_garbage(p.back());
}

std::vector<std::size_t> PrefixTrie::dfs_order(std::span<const NodeId> leaves) const {
  std::map<NodeId, std::vector<std::size_t>> at;
  std::vector<bool> marked(nodes_.size(), false);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (NodeId id : path(leaves[i])) marked[id] = true;
    at[leaves[i]].push_back(i);
  }
  std::vector<std::size_t> out;
  out.reserve(leaves.size());
  // Pre-order: a node's own requests precede its subtree.
  std::vector<NodeId> stack{kRoot};
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    if (auto it = at.find(n); it != at.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    const auto& ch = nodes_[n].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) {
      if (marked[it->second]) stack.push_back(it->second);
    }
  }
  return out;
}

PrefixTrie::OffloadResult PrefixTrie::lru_offload(double mb_needed, double /*t*/) {
  OffloadResult r;
  if (!(mb_needed > 0.0)) return r;
  struct Candidate {
    double last_used;
    std::size_t depth;
    NodeId id;
  };
  std::vector<Candidate> cand;
  for (NodeId id = 1; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.alive && n.cached && n.ref_count == 0) cand.push_back({n.last_used, depth(id), id});
  }
  std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.last_used, b.depth, a.id) < std::tie(b.last_used, a.depth, b.id);
  });
  for (const Candidate& c : cand) {
    if (r.freed >= mb_needed) break;
    Node& n = nodes_[c.id];
    if (!n.alive || !n.cached) continue;
    r.freed += n.kv_bytes;
    r.tokens += n.label.size();
    residency_ -= n.kv_bytes;
    n.cached = false;
    n.offloaded = keep_offloaded_;
    n.kv_bytes = 0.0;
    r.evicted.push_back(c.id);
    collect_garbage(c.id);
  }
  r.insufficient = r.freed < mb_needed;
  if (alive_ == 1) residency_ = 0.0;  // drop accumulated rounding
  return r;
}

std::size_t PrefixTrie::stored_tokens() const {
  std::size_t s = 0;
  for (const Node& n : nodes_) {
    if (n.alive) s += n.label.size();
  }
  return s;
}

std::size_t PrefixTrie::cached_tokens() const {
  std::size_t s = 0;
  for (const Node& n : nodes_) {
    if (n.alive && n.cached) s += n.label.size();
  }
  return s;
}

std::size_t PrefixTrie::metadata_bytes() const {
  // Node records plus label storage plus one map entry per child edge
  // (key, value and three tree pointers plus color).
  constexpr std::size_t kMapEntry = sizeof(Token) + sizeof(NodeId) + 4 * sizeof(void*);
  std::size_t bytes = nodes_.capacity() * sizeof(Node) + free_.capacity() * sizeof(NodeId);
  for (const Node& n : nodes_) {
    if (!n.alive) continue;
    bytes += n.label.capacity() * sizeof(Token) + n.children.size() * kMapEntry;
  }
  return bytes;
}

void PrefixTrie::check_invariants() const {
  double res = 0.0;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.alive) continue;
    if (id != kRoot && n.label.empty()) {
      throw ContractViolation("trie: non-root node with empty label");
    }
    if (n.cached) res += n.kv_bytes;
    for (const auto& [tok, child] : n.children) {
      const Node& c = nodes_[child];
      if (!c.alive || c.parent != id) throw ContractViolation("trie: broken parent link");
      if (c.label.front() != tok) {
        throw ContractViolation("trie: child key differs from its label's first token");
      }
      if (c.ref_count > n.ref_count) {
        throw ContractViolation("trie: child ref_count exceeds parent's");
      }
    }
  }
  if (std::fabs(res - residency_) > 1e-6 * std::max(1.0, res)) {
    throw ContractViolation("trie: residency differs from sum of cached kv_bytes");
  }
}

// ---------------------------------------------------------------------------
// Head statistics

HeadStats make_head_stats(std::size_t heads, std::size_t window, int64_t t0) {
  if (heads < 1) throw ContractViolation("make_head_stats: need >= 1 head");
  if (window < 1) throw ContractViolation("make_head_stats: window must be >= 1");
  HeadStats s;
  s.window = window;
  s.ring.assign(heads, {});
  s.next.assign(heads, 0);
  s.sum.assign(heads, 0.0);
  s.mean.assign(heads, 0.0);
  s.current.assign(heads, 0.0);
  s.last_used.assign(heads, t0);
  return s;
}

void update_head_stats(HeadStats& stats, std::span<const double> norms, int64_t t,
                       double tau) {
  if (norms.size() != stats.heads()) {
    throw ContractViolation("update_head_stats: got " + std::to_string(norms.size()) +
                            " norms for " + std::to_string(stats.heads()) + " heads");
  }
  for (std::size_t h = 0; h < norms.size(); ++h) {
    const double x = norms[h];
    if (!(x >= 0.0)) throw ContractViolation("update_head_stats: norms must be >= 0");
    auto& ring = stats.ring[h];
    if (ring.size() < stats.window) {
      ring.push_back(x);
      stats.sum[h] += x;
    } else {
      stats.sum[h] += x - ring[stats.next[h]];
      ring[stats.next[h]] = x;
      stats.next[h] = (stats.next[h] + 1) % stats.window;
      // Periodic exact resum keeps the running sum from drifting.
      if (stats.next[h] == 0) stats.sum[h] = std::accumulate(ring.begin(), ring.end(), 0.0);
    }
    stats.mean[h] = stats.sum[h] / static_cast<double>(ring.size());
    stats.current[h] = x;
    if (x >= tau) stats.last_used[h] = t;
  }
}

std::vector<double> head_weights(std::span<const double> mean_norms) {
  const std::size_t n = mean_norms.size();
  std::vector<double> w(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  const double total = std::accumulate(mean_norms.begin(), mean_norms.end(), 0.0);
  if (total > 0.0) {
    for (std::size_t h = 0; h < n; ++h) w[h] = mean_norms[h] / total;
  }
  return w;
}

std::vector<uint32_t> allocate_capacity(std::span<const double> mean_norms,
                                        uint32_t c_total) {
  const std::size_t n = mean_norms.size();
  if (n == 0) throw ContractViolation("allocate_capacity: no heads");
  if (c_total < n) throw ContractViolation("allocate_capacity: C_total < number of heads");
  for (double a : mean_norms) {
    if (!(a >= 0.0)) throw ContractViolation("allocate_capacity: norms must be >= 0");
  }
  const std::vector<double> w = head_weights(mean_norms);
  std::vector<uint32_t> c(n);
  uint64_t assigned = 0;
  for (std::size_t h = 0; h < n; ++h) {
    c[h] = static_cast<uint32_t>(std::floor(w[h] * c_total));
    assigned += c[h];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  // Rounding can push the floors one slot over; take it back from the
  // lightest heads.
  for (std::size_t i = n; assigned > c_total; i = (i == 1 ? n : i - 1)) {
    if (c[order[i - 1]] > 0) {
      --c[order[i - 1]];
      --assigned;
    }
  }
  for (std::size_t i = 0; assigned < c_total; i = (i + 1) % n) {
    ++c[order[i]];
    ++assigned;
  }
  return c;
}

std::vector<uint32_t> allocate_capacity(const HeadStats& stats, uint32_t c_total) {
  return allocate_capacity(stats.mean, c_total);
}

bool prune_decision(int64_t t, std::size_t head, const HeadStats& stats, int64_t W,
                    double tau) {
  if (head >= stats.heads()) throw ContractViolation("prune_decision: head out of range");
  return (t - stats.last_used[head] > W) || (stats.current[head] < tau);
}

std::vector<double> sharing_ratios(const Trace& trace) {
  PrefixTrie trie(0.0);
  std::vector<double> out;
  for (const Request& r : trace) {
    if (r.prompt_tokens.empty()) continue;
    const auto ins = trie.insert(r.prompt_tokens, r.arrival_time);
    (void)trie.materialize(ins.leaf, r.arrival_time);
    out.push_back(static_cast<double>(ins.shared_len) /
                  static_cast<double>(r.prompt_tokens.size()));
  }
  return out;
}

Histogram make_histogram(std::span<const double> values, std::size_t bins, double lo,
                         double hi) {
  if (bins < 1 || !(hi > lo)) throw ContractViolation("make_histogram: bad bin spec");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  double sum = 0.0;
  for (double v : values) {
    const double x = std::clamp(v, lo, hi);
    auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
    sum += v;
  }
  h.mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  return h;
}

}  // namespace macesim
