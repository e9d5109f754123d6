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

#include "macesim/report.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "macesim/errors.h"
#include "macesim/svg.h"
#include "macesim/text.h"

namespace macesim {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Non-finite values become null so the document stays valid JSON.
ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

ojson metrics_json(const RunMetrics& m) {
  ojson j;
  j["ttft_p50"] = num(m.ttft_p50);
  j["ttft_p99"] = num(m.ttft_p99);
  j["tbt_p50"] = num(m.tbt_p50);
  j["tbt_p99"] = num(m.tbt_p99);
  j["tbt_mean"] = num(m.tbt_mean);
  j["ft_lat_p50"] = num(m.ft_lat_p50);
  j["throughput_tok_s"] = num(m.throughput_tok_s);
  j["slo_attainment"] = num(m.slo_attainment);
  j["utilization"] = num(m.utilization);
  j["fragmentation"] = num(m.fragmentation);
  j["total_iterations"] = m.total_iterations;
  j["avg_win_rate"] = num(m.avg_win_rate);
  j["avg_clpd"] = num(m.avg_clpd);
  j["mean_iter_latency_ms"] = num(m.mean_iter_latency_ms);
  j["makespan_s"] = num(m.makespan);
  j["decoded_tokens"] = m.decoded_tokens;
  j["completed"] = m.completed;
  j["rejected"] = m.rejected;
  j["preemptions"] = m.preemptions;
  j["ft_steps"] = m.ft_steps;
  j["evicted_mb"] = num(m.evicted_mb);
  j["pruned_fraction"] = num(m.pruned_fraction);
  j["mean_decision_ms"] = num(m.mean_decision_ms);
  j["sharing_ratio_mean"] = num(m.sharing_ratio_mean);
  return j;
}

ojson config_json(const RunConfig& cfg) {
  ojson j = ojson::object();
  std::istringstream in(serialize_config(cfg, false));
  std::string line;
  std::string section;
  while (std::getline(in, line)) {
    std::string_view l = trim(line);
    if (l.empty()) continue;
    if (l.front() == '[') {
      section = std::string(l.substr(1, l.size() - 2));
      j[section] = ojson::object();
      continue;
    }
    const auto eq = l.find('=');
    j[section][std::string(trim(l.substr(0, eq)))] = std::string(trim(l.substr(eq + 1)));
  }
  return j;
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const std::string& c : cells) {
    if (!first) out.push_back(',');
    first = false;
    out += c;
  }
  return out;
}

std::string f(double v) { return format_double(v); }

}  // namespace

Trace load_or_generate_trace(const RunConfig& cfg) {
  if (!cfg.report.trace_file.empty()) return read_trace(cfg.report.trace_file);
  const std::vector<TenantMarginModel> models = cfg.sim.alignment.margin_models();
  return generate_trace(cfg.workload, models);
}

RunArtifacts run_config(const RunConfig& cfg) {
  cfg.validate();
  RunArtifacts run;
  run.config = cfg;
  run.hash = config_hash(cfg);
  run.run_id = cfg.report.run_id.empty() ? run.hash : cfg.report.run_id;
  const Trace trace = load_or_generate_trace(cfg);
  run.trace_digest = trace_digest(trace);
  run.trace_requests = trace.size();
  SimConfig sim = cfg.sim;
  if (sim.engine.metrics_horizon <= 0.0 && cfg.report.trace_file.empty()) {
    sim.engine.metrics_horizon = cfg.workload.duration;
  }
  run.result = simulate(trace, sim);
  return run;
}

std::string metrics_row(const RunArtifacts& run) {
  const RunMetrics& m = run.result.metrics;
  return csv_row({run.run_id, std::string(to_string(run.config.sim.scheduler.policy)),
                  f(run.config.workload.retrain_rate), f(run.config.workload.arrival_rate),
                  f(m.ttft_p50), f(m.ttft_p99), f(m.tbt_p50), f(m.tbt_p99), f(m.ft_lat_p50),
                  f(m.throughput_tok_s), f(m.slo_attainment), f(m.utilization),
                  f(m.fragmentation), std::to_string(m.total_iterations), f(m.avg_win_rate),
                  f(m.avg_clpd)});
}

std::string summary_json(const RunArtifacts& run) {
  ojson j;
  j["run_id"] = run.run_id;
  j["config_hash"] = run.hash;
  j["policy"] = std::string(to_string(run.config.sim.scheduler.policy));
  j["retrain_rate"] = run.config.workload.retrain_rate;
  j["arrival_rate"] = run.config.workload.arrival_rate;
  j["seed"] = run.config.workload.seed;
  j["trace_digest"] = run.trace_digest;
  j["trace_requests"] = run.trace_requests;
  j["metrics"] = metrics_json(run.result.metrics);
  ojson hist;
  hist["lo"] = run.result.sharing.lo;
  hist["hi"] = run.result.sharing.hi;
  hist["counts"] = run.result.sharing.counts;
  hist["mean"] = num(run.result.sharing.mean);
  j["sharing_ratio_histogram"] = hist;
  std::size_t meta = 0;
  for (const TickRecord& t : run.result.ticks) meta = std::max(meta, t.metadata_bytes);
  ojson probe;
  probe["instrumented"] = run.config.sim.engine.measure_overhead;
  probe["mean_decision_ms"] = num(run.result.metrics.mean_decision_ms);
  probe["max_metadata_bytes"] = meta;
  j["overhead"] = probe;
  j["config"] = config_json(run.config);
  return j.dump(2) + "\n";
}

void write_timeline(std::ostream& out, std::span<const TickRecord> ticks, bool with_tasks) {
  for (const TickRecord& t : ticks) {
    ojson j;
    j["tick"] = t.index;
    j["t"] = num(t.start);
    j["duration_ms"] = num(t.duration_ms);
    j["max_latency_ms"] = num(t.bin_latency_ms);
    j["budget_mb"] = num(t.budget);
    j["used_mb"] = num(t.bin_memory);
    j["free_mb"] = num(t.budget - t.bin_memory);
    j["resident_kv_mb"] = num(t.resident_kv);
    j["trie_mb"] = num(t.trie_residency);
    j["utilization"] = num(t.utilization);
    j["queue"] = t.queue_len;
    j["prefill"] = t.prefill;
    j["decode"] = t.decode;
    j["finetune"] = t.finetune;
    j["dequeued"] = t.dequeued;
    j["bins"] = t.bins_opened;
    j["requeued"] = t.requeued;
    j["deferred"] = t.deferred;
    j["preempted"] = t.preempted;
    j["cache"] = {{"inserted_mb", num(t.cached_mb)},
                  {"shared_tokens", t.shared_tokens},
                  {"evicted_mb", num(t.evicted_mb)},
                  {"pruned_mb", num(t.pruned_mb)}};
    j["decision_ms"] = num(t.decision_ms);
    if (t.metadata_bytes) j["metadata_bytes"] = t.metadata_bytes;
    if (t.retraining) j["retraining"] = true;
    if (with_tasks) j["tasks"] = t.tasks;
    out << j.dump() << '\n';
  }
}

fs::path write_run(const RunArtifacts& run, const fs::path& out_root) {
  const fs::path dir = out_root / run.hash;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "metrics.csv", std::string(kMetricsHeader) + "\n" + metrics_row(run) + "\n");
  write_file(dir / "summary.json", summary_json(run));
  write_file(dir / "config.ini", serialize_config(run.config, false));

  std::ostringstream al;
  al << "t,tenant,win_rate,clpd\n";
  for (const AlignmentSample& s : run.result.alignment) {
    al << f(s.t) << ',' << s.tenant << ',' << f(s.win_rate) << ',' << f(s.clpd) << '\n';
  }
  write_file(dir / "alignment.csv", al.str());

  std::ostringstream rq;
  rq << "id,tenant,workload,arrival,first_scheduled,first_token,finish,ttft_ms,"
        "ft_latency_ms,slo_deadline_ms,slo_met,rejected,skipped,decoded,ft_steps,"
        "preemptions,prompt_len,cached_prompt_tokens\n";
  for (const RequestMetrics& r : run.result.requests) {
    rq << r.id << ',' << r.tenant << ',' << to_string(r.workload) << ',' << f(r.arrival) << ','
       << f(r.first_scheduled) << ',' << f(r.first_token) << ',' << f(r.finish) << ','
       << f(r.ttft_ms) << ',' << f(r.ft_latency_ms) << ',' << f(r.slo_deadline_ms) << ','
       << r.slo_met << ',' << r.rejected << ',' << r.skipped << ',' << r.decoded << ','
       << r.ft_steps << ',' << r.preemptions << ',' << r.prompt_len << ','
       << r.cached_prompt_tokens << '\n';
  }
  write_file(dir / "requests.csv", rq.str());

  if (run.config.report.timeline) {
    std::ostringstream tl;
    write_timeline(tl, run.result.ticks, run.config.report.timeline_tasks);
    write_file(dir / "timeline.jsonl", tl.str());
  }
  return dir;
}

RunSummary load_run(const fs::path& dir) {
  RunSummary s;
  s.dir = dir;
  ojson j;
  try {
    j = ojson::parse(read_file(dir / "summary.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError((dir / "summary.json").string() + ": " + e.what(), 0);
  }
  s.run_id = j.at("run_id").get<std::string>();
  s.policy = j.at("policy").get<std::string>();
  s.trace_digest = j.at("trace_digest").get<std::string>();
  s.retrain_rate = j.at("retrain_rate").get<double>();
  s.arrival_rate = j.at("arrival_rate").get<double>();
  for (const auto& [k, v] : j.at("metrics").items()) {
    s.metrics[k] = v.is_number() ? v.get<double>() : std::nan("");
  }
  {
    std::istringstream in(read_file(dir / "metrics.csv"));
    std::string header;
    std::getline(in, header);
    std::getline(in, s.metrics_row);
  }
  std::istringstream al(read_file(dir / "alignment.csv"));
  std::string line;
  std::getline(al, line);
  std::map<double, std::array<double, 3>> acc;  // t -> (sum wr, sum clpd, n)
  std::size_t line_no = 1;
  while (std::getline(al, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 4) throw ParseError("alignment.csv: expected 4 columns", line_no);
    const auto t = parse_double(cells[0]);
    const auto wr = parse_double(cells[2]);
    const auto cl = parse_double(cells[3]);
    if (!t || !wr || !cl) throw ParseError("alignment.csv: bad number", line_no);
    auto& a = acc[*t];
    a[0] += *wr;
    a[1] += *cl;
    a[2] += 1.0;
  }
  for (const auto& [t, a] : acc) s.alignment.push_back({t, a[0] / a[2], a[1] / a[2]});
  return s;
}

CompareOutput compare_runs(std::span<const RunSummary> runs, const fs::path& out_dir,
                           bool force) {
  if (runs.size() < 2) throw ConfigError("compare: need at least two runs");
  for (const RunSummary& r : runs) {
    if (r.trace_digest != runs.front().trace_digest && !force) {
      throw MismatchError("compare: run " + r.run_id + " replayed trace " + r.trace_digest +
                          " but run " + runs.front().run_id + " replayed " +
                          runs.front().trace_digest + " (use --force to compare anyway)");
    }
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  CompareOutput out;

  static const std::vector<std::string> kCols = {
      "total_iterations", "mean_iter_latency_ms", "ttft_p50",     "tbt_p50",
      "ft_lat_p50",       "throughput_tok_s",     "slo_attainment", "utilization",
      "fragmentation",    "avg_win_rate",         "avg_clpd"};
  auto get = [](const RunSummary& r, const std::string& k) {
    auto it = r.metrics.find(k);
    return it == r.metrics.end() ? std::nan("") : it->second;
  };
  std::vector<std::string> labels;
  for (const RunSummary& r : runs) {
    labels.push_back(r.policy + " rr=" + format_double(r.retrain_rate) +
                     " ar=" + format_double(r.arrival_rate) + " " + r.run_id.substr(0, 6));
  }

  std::ostringstream md;
  md << "| run | policy | retrain_rate | arrival_rate";
  for (const auto& c : kCols) md << " | " << c;
  md << " |\n|---|---|---|---";
  for (std::size_t i = 0; i < kCols.size(); ++i) md << "|---";
  md << "|\n";
  std::ostringstream csv;
  csv << "run_id,policy,retrain_rate,arrival_rate";
  for (const auto& c : kCols) csv << ',' << c;
  for (const auto& c : kCols) csv << ",delta_" << c;
  csv << '\n';
  for (const RunSummary& r : runs) {
    md << "| " << r.run_id << " | " << r.policy << " | " << f(r.retrain_rate) << " | "
       << f(r.arrival_rate);
    csv << r.run_id << ',' << r.policy << ',' << f(r.retrain_rate) << ',' << f(r.arrival_rate);
    for (const auto& c : kCols) {
      md << " | " << format_fixed(get(r, c), 4);
      csv << ',' << f(get(r, c));
    }
    for (const auto& c : kCols) csv << ',' << f(get(r, c) - get(runs.front(), c));
    md << " |\n";
    csv << '\n';
  }
  out.table = md.str();
  write_file(out_dir / "comparison.md", out.table);
  write_file(out_dir / "comparison.csv", csv.str());
  out.files = {out_dir / "comparison.md", out_dir / "comparison.csv"};

  auto emit = [&](const std::string& name, const std::string& svg) {
    write_file(out_dir / name, svg);
    out.files.push_back(out_dir / name);
  };

  std::vector<svg::Series> wr;
  std::vector<svg::Series> cl;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    svg::Series a{labels[i], {}};
    svg::Series b{labels[i], {}};
    for (const auto& p : runs[i].alignment) {
      a.points.emplace_back(p[0], p[1]);
      b.points.emplace_back(p[0], p[2]);
    }
    wr.push_back(std::move(a));
    cl.push_back(std::move(b));
  }
  emit("win_rate_over_time.svg", svg::line_chart("Win rate over time", "time (s)", "win rate", wr));
  emit("clpd_over_time.svg", svg::line_chart("CLPD over time", "time (s)", "CLPD", cl));

  // Per-policy series over the run parameters.
  std::map<std::string, svg::Series> by_rr;
  std::map<std::string, svg::Series> by_load;
  for (const RunSummary& r : runs) {
    by_rr[r.policy].name = r.policy;
    by_rr[r.policy].points.emplace_back(r.retrain_rate, get(r, "throughput_tok_s"));
    by_load[r.policy].name = r.policy;
    by_load[r.policy].points.emplace_back(r.arrival_rate, get(r, "slo_attainment"));
  }
  std::vector<svg::Series> rr_series;
  std::vector<svg::Series> load_series;
  for (auto& [k, v] : by_rr) rr_series.push_back(v);
  for (auto& [k, v] : by_load) load_series.push_back(v);
  emit("throughput_vs_retrain_rate.svg",
       svg::line_chart("Throughput vs retrain rate", "retrain rate", "tokens/s", rr_series));
  emit("slo_vs_load.svg",
       svg::line_chart("SLO attainment vs load", "arrival rate (req/s)", "SLO attainment",
                       load_series));

  svg::BarData lat;
  lat.categories = {"TTFT p50", "TBT p50", "FT p50"};
  lat.series = labels;
  for (const RunSummary& r : runs) {
    lat.values.push_back({get(r, "ttft_p50"), get(r, "tbt_p50"), get(r, "ft_lat_p50")});
  }
  emit("latency_breakdown.svg", svg::bar_chart("Latency breakdown", "ms", lat));

  svg::BarData it;
  it.categories = {"total iterations"};
  it.series = labels;
  for (const RunSummary& r : runs) it.values.push_back({get(r, "total_iterations")});
  emit("iterations.svg", svg::bar_chart("Total iterations", "iterations", it));

  svg::BarData il;
  il.categories = {"per-iteration latency"};
  il.series = labels;
  for (const RunSummary& r : runs) il.values.push_back({get(r, "mean_iter_latency_ms")});
  emit("iteration_latency.svg", svg::bar_chart("Per-iteration latency", "ms", il));
  return out;
}

}  // namespace macesim
