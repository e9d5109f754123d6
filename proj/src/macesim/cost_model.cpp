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

#include "macesim/cost_model.h"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <utility>
#include <vector>

#include "macesim/errors.h"
#include "macesim/text.h"

namespace macesim {

namespace {

struct Field {
  const char* key;
  double CostProfile::*member;
};

constexpr Field kFields[] = {
    {"prefill_lat_per_token", &CostProfile::prefill_lat_per_token},
    {"prefill_mem_per_token", &CostProfile::prefill_mem_per_token},
    {"decode_lat_per_step", &CostProfile::decode_lat_per_step},
    {"decode_kv_mem_per_token", &CostProfile::decode_kv_mem_per_token},
    {"ft_lat_per_sample_step", &CostProfile::ft_lat_per_sample_step},
    {"ft_mem_fixed", &CostProfile::ft_mem_fixed},
    {"ft_mem_per_token", &CostProfile::ft_mem_per_token},
    {"iter_overhead", &CostProfile::iter_overhead},
    {"capacity", &CostProfile::capacity},
    {"weights_resident", &CostProfile::weights_resident},
};

}  // namespace

void CostProfile::validate() const {
  for (const Field& f : kFields) {
    const double v = this->*f.member;
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("cost.") + f.key + ": must be finite and >= 0");
    }
  }
  if (!(capacity > weights_resident)) {
    throw ConfigError("cost.capacity: must exceed cost.weights_resident");
  }
}

std::size_t prefill_effective_tokens(const Request& task,
                                     std::size_t cached_prefix_tokens) {
  const std::size_t total = task.prompt_tokens.size() + task.decode_pos;
  return cached_prefix_tokens >= total ? 0 : total - cached_prefix_tokens;
}

WorkloadEstimate get_workload(const Request& task, const CostProfile& p,
                              std::size_t cached_prefix_tokens) {
  switch (task.workload) {
    case WorkloadType::kPrefill: {
      const double eff =
          static_cast<double>(prefill_effective_tokens(task, cached_prefix_tokens));
      return {(p.prefill_mem_per_token + p.decode_kv_mem_per_token) * eff,
              p.prefill_lat_per_token * eff};
    }
    case WorkloadType::kDecode:
      return {p.decode_kv_mem_per_token, p.decode_lat_per_step};
    case WorkloadType::kFineTune: {
      double tokens = 0.0;
      if (task.pair) {
        tokens = static_cast<double>(task.pair->tokens_chosen) +
                 static_cast<double>(task.pair->tokens_rejected);
      }
      return {p.ft_mem_fixed + p.ft_mem_per_token * tokens,
              p.ft_lat_per_sample_step};
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

struct Row {
  double batch;
  double tokens;
  double latency;
  double memory;
};

// y = slope * x, least squares through the origin.
std::pair<double, double> fit_origin(const std::vector<std::pair<double, double>>& xy) {
  double sxx = 0.0, sxy = 0.0;
  for (auto [x, y] : xy) {
    sxx += x * x;
    sxy += x * y;
  }
  if (sxx <= 0.0) throw CalibrationError("degenerate fit: all x are zero");
  const double slope = sxy / sxx;
  double ss = 0.0;
  for (auto [x, y] : xy) ss += (y - slope * x) * (y - slope * x);
  return {slope, std::sqrt(ss / static_cast<double>(xy.size()))};
}

// y = c (intercept only).
std::pair<double, double> fit_constant(const std::vector<double>& ys) {
  double sum = 0.0;
  for (double y : ys) sum += y;
  const double c = sum / static_cast<double>(ys.size());
  double ss = 0.0;
  for (double y : ys) ss += (y - c) * (y - c);
  return {c, std::sqrt(ss / static_cast<double>(ys.size()))};
}

// y = a + b x. Falls back to the mean when every x is equal.
struct AffineFit {
  double intercept;
  double slope;
  double rms;
};

AffineFit fit_affine(const std::vector<std::pair<double, double>>& xy) {
  const double n = static_cast<double>(xy.size());
  double sx = 0.0, sy = 0.0;
  for (auto [x, y] : xy) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (auto [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  AffineFit f{my, 0.0, 0.0};
  if (sxx > 0.0) {
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
  }
  double ss = 0.0;
  for (auto [x, y] : xy) {
    const double r = y - (f.intercept + f.slope * x);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

}  // namespace

CalibrationResult calibrate(std::istream& csv, const CostProfile& base) {
  std::map<WorkloadType, std::vector<Row>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(csv, line)) {
    ++line_no;
    const std::string_view l = trim(line);
    if (l.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (l != "workload,batch_size,tokens,latency_ms,memory_mb") {
        throw CalibrationError(
            "line " + std::to_string(line_no) +
            ": expected header workload,batch_size,tokens,latency_ms,memory_mb");
      }
      continue;
    }
    const auto f = split(l, ',');
    if (f.size() != 5) {
      throw CalibrationError("line " + std::to_string(line_no) + ": expected 5 fields");
    }
    auto kind = workload_from_string(trim(f[0]));
    auto batch = parse_double(f[1]);
    auto tokens = parse_double(f[2]);
    auto lat = parse_double(f[3]);
    auto mem = parse_double(f[4]);
    if (!kind || !batch || !tokens || !lat || !mem || *batch <= 0.0 || *tokens < 0.0) {
      throw CalibrationError("line " + std::to_string(line_no) + ": malformed row");
    }
    rows[*kind].push_back({*batch, *tokens, *lat, *mem});
  }
  if (rows.empty()) throw CalibrationError("no profile rows");
  for (const auto& [kind, rs] : rows) {
    if (rs.size() < 2) {
      throw CalibrationError("workload '" + std::string(to_string(kind)) +
                             "' needs at least 2 points, got " +
                             std::to_string(rs.size()));
    }
  }

  CalibrationResult out;
  out.profile = base;
  CostProfile& p = out.profile;

  // Decode first: its KV slope is needed to split prefill memory.
  if (auto it = rows.find(WorkloadType::kDecode); it != rows.end()) {
    std::vector<double> lat;
    std::vector<std::pair<double, double>> mem;
    for (const Row& r : it->second) {
      lat.push_back(r.latency);
      mem.emplace_back(r.batch * r.tokens, r.memory);
    }
    auto [c, rms_lat] = fit_constant(lat);
    auto [kv, rms_mem] = fit_origin(mem);
    p.decode_lat_per_step = c;
    p.decode_kv_mem_per_token = kv;
    out.rms_residual["decode.latency_ms"] = rms_lat;
    out.rms_residual["decode.memory_mb"] = rms_mem;
  }
  if (auto it = rows.find(WorkloadType::kPrefill); it != rows.end()) {
    // Latency is per sequence (batched sequences run concurrently); memory
    // scales with every token in the batch.
    std::vector<std::pair<double, double>> lat, mem;
    for (const Row& r : it->second) {
      lat.emplace_back(r.tokens, r.latency);
      mem.emplace_back(r.batch * r.tokens, r.memory);
    }
    auto [lat_slope, rms_lat] = fit_origin(lat);
    auto [mem_slope, rms_mem] = fit_origin(mem);
    p.prefill_lat_per_token = lat_slope;
    p.prefill_mem_per_token = std::max(0.0, mem_slope - p.decode_kv_mem_per_token);
    out.rms_residual["prefill.latency_ms"] = rms_lat;
    out.rms_residual["prefill.memory_mb"] = rms_mem;
  }
  if (auto it = rows.find(WorkloadType::kFineTune); it != rows.end()) {
    std::vector<double> lat;
    std::vector<std::pair<double, double>> mem;
    for (const Row& r : it->second) {
      lat.push_back(r.latency);
      mem.emplace_back(r.batch * r.tokens, r.memory);
    }
    auto [c, rms_lat] = fit_constant(lat);
    const AffineFit m = fit_affine(mem);
    p.ft_lat_per_sample_step = c;
    p.ft_mem_fixed = std::max(0.0, m.intercept);
    p.ft_mem_per_token = std::max(0.0, m.slope);
    out.rms_residual["finetune.latency_ms"] = rms_lat;
    out.rms_residual["finetune.memory_mb"] = m.rms;
  }
  return out;
}

CalibrationResult calibrate(const std::string& csv_path, const CostProfile& base) {
  std::ifstream in(csv_path);
  if (!in) throw CalibrationError("cannot open '" + csv_path + "'");
  return calibrate(in, base);
}

// ---------------------------------------------------------------------------
// key=value profile files

bool set_profile_field(CostProfile& p, std::string_view key, double value) {
  for (const Field& f : kFields) {
    if (key == f.key) {
      p.*f.member = value;
      return true;
    }
  }
  return false;
}

void write_profile(const CostProfile& p, std::ostream& out) {
  for (const Field& f : kFields) {
    out << f.key << '=' << format_double(p.*f.member) << '\n';
  }
}

CostProfile read_profile(std::istream& in, const CostProfile& base) {
  CostProfile p = base;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    const std::string_view key = trim(l.substr(0, eq));
    auto v = parse_double(l.substr(eq + 1));
    if (!v) throw ParseError("bad number for '" + std::string(key) + "'", line_no);
    if (!set_profile_field(p, key, *v)) {
      throw ParseError("unknown profile key '" + std::string(key) + "'", line_no);
    }
  }
  return p;
}

}  // namespace macesim
