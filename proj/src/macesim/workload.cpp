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

#include "macesim/workload.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "macesim/errors.h"
#include "macesim/text.h"

namespace macesim {

std::string_view to_string(WorkloadType w) {
  switch (w) {
    case WorkloadType::kPrefill:
      return "prefill";
    case WorkloadType::kDecode:
      return "decode";
    case WorkloadType::kFineTune:
      return "finetune";
  }
  return "unknown";
}

std::optional<WorkloadType> workload_from_string(std::string_view s) {
  if (s == "prefill") return WorkloadType::kPrefill;
  if (s == "decode") return WorkloadType::kDecode;
  if (s == "finetune") return WorkloadType::kFineTune;
  return std::nullopt;
}

void Request::validate() const {
  if (!(arrival_time >= 0.0) || !std::isfinite(arrival_time)) {
    throw ContractViolation("request " + std::to_string(id) +
                            ": arrival_time must be finite and >= 0");
  }
  if (workload != WorkloadType::kDecode && prompt_tokens.empty()) {
    throw ContractViolation("request " + std::to_string(id) +
                            ": prompt_tokens must be non-empty");
  }
  if (decode_pos > target_output_len) {
    throw ContractViolation("request " + std::to_string(id) +
                            ": decode_pos exceeds target_output_len");
  }
  if (pair.has_value() != (workload == WorkloadType::kFineTune)) {
    throw ContractViolation("request " + std::to_string(id) +
                            ": preference pair present iff FineTune");
  }
  if (pair && (pair->tokens_chosen == 0 || pair->tokens_rejected == 0)) {
    throw ContractViolation("request " + std::to_string(id) +
                            ": preference pair token counts must be > 0");
  }
}

// ---------------------------------------------------------------------------
// DistSpec

namespace {

std::vector<double> parse_params(std::string_view field, std::string_view body) {
  std::vector<double> out;
  for (std::string_view part : split(body, ',')) {
    part = trim(part);
    auto v = parse_double(part);
    if (!v) {
      throw ConfigError(std::string(field) + ": bad distribution parameter '" +
                        std::string(part) + "'");
    }
    out.push_back(*v);
  }
  return out;
}

}  // namespace

DistSpec DistSpec::parse(std::string_view field, std::string_view text) {
  text = trim(text);
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw ConfigError(std::string(field) + ": expected family(params), got '" +
                      std::string(text) + "'");
  }
  const std::string_view family = trim(text.substr(0, open));
  const std::vector<double> p =
      parse_params(field, text.substr(open + 1, text.size() - open - 2));
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (p.size() < lo || p.size() > hi) {
      throw ConfigError(std::string(field) + ": wrong parameter count for '" +
                        std::string(family) + "'");
    }
  };
  auto bad = [&](const char* why) {
    return ConfigError(std::string(field) + ": " + why);
  };
  DistSpec d;
  if (family == "const") {
    need(1, 1);
    if (!(p[0] >= 1.0)) throw bad("const value must be >= 1");
    d = {Family::kConstant, p[0], 0.0};
  } else if (family == "uniform") {
    need(2, 2);
    if (!(p[0] >= 1.0 && p[1] >= p[0])) throw bad("uniform needs 1 <= lo <= hi");
    d = {Family::kUniform, p[0], p[1]};
  } else if (family == "geometric") {
    need(1, 2);
    if (!(p[0] >= 1.0)) throw bad("geometric mean must be >= 1");
    const double cap = p.size() == 2 ? p[1] : 0.0;
    if (p.size() == 2 && !(cap >= 1.0)) throw bad("geometric cap must be >= 1");
    d = {Family::kGeometric, p[0], cap};
  } else if (family == "lognormal") {
    need(2, 2);
    if (!(p[1] > 0.0) || !std::isfinite(p[0])) throw bad("lognormal needs sigma > 0");
    d = {Family::kLogNormal, p[0], p[1]};
  } else if (family == "normal") {
    need(2, 2);
    if (!(p[1] > 0.0) || !(p[0] > 0.0)) throw bad("normal needs mean > 0, sd > 0");
    d = {Family::kNormal, p[0], p[1]};
  } else {
    throw bad("unknown distribution family");
  }
  return d;
}

std::string DistSpec::to_string() const {
  auto num = [](double v) { return format_double(v); };
  switch (family) {
    case Family::kConstant:
      return "const(" + num(a) + ")";
    case Family::kUniform:
      return "uniform(" + num(a) + "," + num(b) + ")";
    case Family::kGeometric:
      return b > 0.0 ? "geometric(" + num(a) + "," + num(b) + ")"
                     : "geometric(" + num(a) + ")";
    case Family::kLogNormal:
      return "lognormal(" + num(a) + "," + num(b) + ")";
    case Family::kNormal:
      return "normal(" + num(a) + "," + num(b) + ")";
  }
  return "const(1)";
}

double DistSpec::mean() const {
  switch (family) {
    case Family::kConstant:
      return a;
    case Family::kUniform:
      return 0.5 * (a + b);
    case Family::kGeometric:
      return a;  // uncapped mean
    case Family::kLogNormal:
      return std::exp(a + 0.5 * b * b);
    case Family::kNormal:
      return a;
  }
  return a;
}

uint32_t DistSpec::sample(Rng& rng) const {
  double v = 1.0;
  switch (family) {
    case Family::kConstant:
      v = a;
      break;
    case Family::kUniform:
      v = std::floor(rng.uniform(a, b + 1.0));
      break;
    case Family::kGeometric: {
      // Support {1, 2, ...} with success probability 1/mean.
      const double p = 1.0 / a;
      if (p >= 1.0) {
        v = 1.0;
      } else {
        v = 1.0 + std::floor(std::log1p(-rng.uniform()) / std::log1p(-p));
      }
      if (b > 0.0) v = std::min(v, b);
      break;
    }
    case Family::kLogNormal:
      v = std::round(std::exp(rng.normal(a, b)));
      break;
    case Family::kNormal:
      v = std::round(rng.normal(a, b));
      break;
  }
  if (!(v >= 1.0)) v = 1.0;
  if (v > 1.0e7) v = 1.0e7;
  return static_cast<uint32_t>(v);
}

// ---------------------------------------------------------------------------
// Trace generation

void TraceConfig::validate() const {
  if (!(arrival_rate > 0.0) || !std::isfinite(arrival_rate)) {
    throw ConfigError("workload.arrival_rate: must be > 0");
  }
  if (!(retrain_rate >= 0.0 && retrain_rate <= 0.5)) {
    throw ConfigError("workload.retrain_rate: must be in [0, 0.5]");
  }
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw ConfigError("workload.duration: must be > 0");
  }
  if (tenants == 0) throw ConfigError("workload.tenants: must be >= 1");
  if (vocab_size < 2) throw ConfigError("workload.vocab_size: must be >= 2");
  if (prefix_tree.branching == 0) {
    throw ConfigError("workload.prefix_branching: must be >= 1");
  }
}

namespace {

enum Stream : uint64_t {
  kArrivals = 1,
  kKinds = 2,
  kPrompts = 3,
  kOutputs = 4,
  kMargins = 5,
  kTenants = 6,
  kSegments = 7,
};

class TemplateTree {
 public:
  TemplateTree(const TraceConfig& cfg) : cfg_(cfg) {}

  const std::vector<Token>& segment(uint64_t node_key) {
    auto it = cache_.find(node_key);
    if (it != cache_.end()) return it->second;
    Rng rng(derive_seed(derive_seed(cfg_.seed, kSegments), node_key));
    const uint32_t len = cfg_.prefix_tree.segment_len.sample(rng);
    std::vector<Token> seg(len);
    for (auto& tok : seg) tok = static_cast<Token>(rng.below(cfg_.vocab_size));
    return cache_.emplace(node_key, std::move(seg)).first->second;
  }

 private:
  const TraceConfig& cfg_;
  std::unordered_map<uint64_t, std::vector<Token>> cache_;
};

}  // namespace

Trace generate_trace(const TraceConfig& cfg,
                     std::span<const TenantMarginModel> tenants) {
  cfg.validate();
  Rng arrivals(derive_seed(cfg.seed, kArrivals));
  Rng kinds(derive_seed(cfg.seed, kKinds));
  Rng prompts(derive_seed(cfg.seed, kPrompts));
  Rng outputs(derive_seed(cfg.seed, kOutputs));
  Rng margins(derive_seed(cfg.seed, kMargins));
  Rng tenant_rng(derive_seed(cfg.seed, kTenants));
  TemplateTree tree(cfg);

  Trace trace;
  double t = 0.0;
  for (uint64_t id = 0;; ++id) {
    t += arrivals.exponential(cfg.arrival_rate);
    if (t > cfg.duration) break;
    Request r;
    r.id = id;
    r.arrival_time = t;
    r.tenant = static_cast<uint32_t>(tenant_rng.below(cfg.tenants));
    r.workload = kinds.bernoulli(cfg.retrain_rate) ? WorkloadType::kFineTune
                                                   : WorkloadType::kPrefill;

    const uint32_t len = std::max<uint32_t>(cfg.prompt_len_dist.sample(prompts), 1);
    std::vector<Token> tmpl;
    uint64_t key = 0x243F6A8885A308D3ULL;
    for (uint32_t level = 0; level < cfg.prefix_tree.depth; ++level) {
      const uint64_t child = prompts.below(cfg.prefix_tree.branching);
      key = splitmix64(key ^ (child + 1) ^ (uint64_t{level} << 40));
      const auto& seg = tree.segment(key);
      tmpl.insert(tmpl.end(), seg.begin(), seg.end());
    }
    // At least one request-unique token so that every prompt is its own leaf.
    const std::size_t keep = std::min<std::size_t>(tmpl.size(), len - 1);
    r.prompt_tokens.assign(tmpl.begin(), tmpl.begin() + static_cast<std::ptrdiff_t>(keep));
    while (r.prompt_tokens.size() < len) {
      r.prompt_tokens.push_back(static_cast<Token>(prompts.below(cfg.vocab_size)));
    }

    r.target_output_len = cfg.output_len_dist.sample(outputs);
    if (r.workload == WorkloadType::kFineTune) {
      const TenantMarginModel m = r.tenant < tenants.size()
                                      ? tenants[r.tenant]
                                      : TenantMarginModel{};
      PreferencePair pair;
      pair.initial_margin = m.mu0 - m.drift_rate * t + m.sigma * margins.normal();
      pair.tokens_chosen = r.target_output_len;
      pair.tokens_rejected = r.target_output_len;
      r.pair = pair;
    }
    trace.push_back(std::move(r));
  }
  return trace;
}

Trace generate_trace(const TraceConfig& cfg) {
  return generate_trace(cfg, std::span<const TenantMarginModel>{});
}

// ---------------------------------------------------------------------------
// Trace file I/O

namespace {

constexpr std::string_view kHeaderFields =
    "id\ttenant\tworkload\tarrival_time\tprompt_tokens\ttarget_output_len\t"
    "initial_margin";

}  // namespace

void write_trace(const Trace& trace, std::ostream& out) {
  out << kTraceSchema << '\t' << kHeaderFields << '\n';
  std::string line;
  for (const Request& r : trace) {
    line.clear();
    line += std::to_string(r.id);
    line += '\t';
    line += std::to_string(r.tenant);
    line += '\t';
    line += to_string(r.workload);
    line += '\t';
    line += format_double(r.arrival_time);
    line += '\t';
    for (std::size_t i = 0; i < r.prompt_tokens.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(r.prompt_tokens[i]);
    }
    line += '\t';
    line += std::to_string(r.target_output_len);
    line += '\t';
    if (r.pair) line += format_double(r.pair->initial_margin);
    line += '\n';
    out << line;
  }
}

void write_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_trace(trace, out);
  if (!out) throw IoError("write failed: '" + path + "'");
}

Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw ParseError("missing '" + std::string(kTraceSchema) + "' header", 1);
  }
  ++line_no;
  {
    const auto fields = split(line, '\t');
    if (fields.empty() || fields[0] != kTraceSchema) {
      throw ParseError("unsupported trace schema, expected '" +
                           std::string(kTraceSchema) + "'",
                       line_no);
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw ParseError("empty record", line_no);
    }
    const auto f = split(line, '\t');
    if (f.size() != 7) {
      throw ParseError("expected 7 tab-separated fields, got " +
                           std::to_string(f.size()),
                       line_no);
    }
    Request r;
    auto id = parse_uint<uint64_t>(f[0]);
    auto tenant = parse_uint<uint32_t>(f[1]);
    auto kind = workload_from_string(f[2]);
    auto arrival = parse_double(f[3]);
    auto out_len = parse_uint<uint32_t>(f[5]);
    if (!id) throw ParseError("bad id '" + std::string(f[0]) + "'", line_no);
    if (!tenant) throw ParseError("bad tenant '" + std::string(f[1]) + "'", line_no);
    if (!kind || *kind == WorkloadType::kDecode) {
      throw ParseError("bad workload '" + std::string(f[2]) + "'", line_no);
    }
    if (!arrival || !(*arrival >= 0.0)) {
      throw ParseError("bad arrival_time '" + std::string(f[3]) + "'", line_no);
    }
    if (!out_len) {
      throw ParseError("bad target_output_len '" + std::string(f[5]) + "'", line_no);
    }
    r.id = *id;
    r.tenant = *tenant;
    r.workload = *kind;
    r.arrival_time = *arrival;
    r.target_output_len = *out_len;
    for (std::string_view tok : split(f[4], ',')) {
      auto v = parse_int<Token>(tok);
      if (!v) throw ParseError("bad prompt token '" + std::string(tok) + "'", line_no);
      r.prompt_tokens.push_back(*v);
    }
    if (f[4].empty()) throw ParseError("empty prompt_tokens", line_no);
    if (r.workload == WorkloadType::kFineTune) {
      auto m = parse_double(f[6]);
      if (!m) throw ParseError("finetune record needs initial_margin", line_no);
      if (r.target_output_len == 0) {
        throw ParseError("finetune record needs target_output_len > 0", line_no);
      }
      r.pair = PreferencePair{*m, r.target_output_len, r.target_output_len};
    } else if (!f[6].empty()) {
      throw ParseError("initial_margin only allowed on finetune records", line_no);
    }
    trace.push_back(std::move(r));
  }
  return trace;
}

Trace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_trace(in);
}

uint64_t fnv1a64(std::string_view data, uint64_t h) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string trace_digest(const Trace& trace) {
  std::ostringstream os;
  write_trace(trace, os);
  return hex64(fnv1a64(os.str()));
}

}  // namespace macesim
