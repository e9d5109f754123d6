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

#include "macesim/config.h"

#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>

#include "macesim/errors.h"
#include "macesim/text.h"

namespace macesim {

namespace {

struct Field {
  std::string_view section;
  std::string_view key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

std::string full_name(std::string_view section, std::string_view key) {
  return std::string(section) + "." + std::string(key);
}

[[noreturn]] void bad_value(std::string_view name, std::string_view value,
                            std::string_view expected) {
  throw ConfigError(std::string(name) + ": expected " + std::string(expected) + ", got '" +
                    std::string(value) + "'");
}

double to_double(std::string_view name, std::string_view v) {
  auto d = parse_double(v);
  if (!d) bad_value(name, v, "a number");
  return *d;
}

template <typename T>
T to_uint(std::string_view name, std::string_view v) {
  auto d = parse_uint<T>(v);
  if (!d) bad_value(name, v, "a non-negative integer");
  return *d;
}

bool to_bool(std::string_view name, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(name, v, "true or false");
}

template <typename Ref>
Field dbl(std::string_view sec, std::string_view key, Ref ref) {
  return {sec, key,
          [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
          [ref, sec, key](RunConfig& c, std::string_view v) {
            ref(c) = to_double(full_name(sec, key), v);
          }};
}

template <typename T, typename Ref>
Field uint(std::string_view sec, std::string_view key, Ref ref) {
  return {sec, key,
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, sec, key](RunConfig& c, std::string_view v) {
            ref(c) = to_uint<T>(full_name(sec, key), v);
          }};
}

template <typename Ref>
Field boolean(std::string_view sec, std::string_view key, Ref ref) {
  return {sec, key,
          [ref](const RunConfig& c) {
            return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false");
          },
          [ref, sec, key](RunConfig& c, std::string_view v) {
            ref(c) = to_bool(full_name(sec, key), v);
          }};
}

template <typename Ref>
Field str(std::string_view sec, std::string_view key, Ref ref) {
  return {sec, key, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, std::string_view v) { ref(c) = std::string(trim(v)); }};
}

template <typename Ref>
Field dist(std::string_view sec, std::string_view key, Ref ref) {
  return {sec, key,
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)).to_string(); },
          [ref, sec, key](RunConfig& c, std::string_view v) {
            ref(c) = DistSpec::parse(full_name(sec, key), v);
          }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = [] {
    std::vector<Field> f;
    // [workload]
    f.push_back(dbl("workload", "arrival_rate", REF(c.workload.arrival_rate)));
    f.push_back(dbl("workload", "retrain_rate", REF(c.workload.retrain_rate)));
    f.push_back(dbl("workload", "duration", REF(c.workload.duration)));
    f.push_back({"workload", "seed",
                 [](const RunConfig& c) { return std::to_string(c.workload.seed); },
                 [](RunConfig& c, std::string_view v) {
                   c.workload.seed = to_uint<uint64_t>("workload.seed", v);
                   c.sim.seed = c.workload.seed;
                 }});
    f.push_back({"workload", "tenants",
                 [](const RunConfig& c) { return std::to_string(c.workload.tenants); },
                 [](RunConfig& c, std::string_view v) {
                   c.workload.tenants = to_uint<uint32_t>("workload.tenants", v);
                   if (c.workload.tenants > 0) {
                     c.sim.alignment.tenants.resize(c.workload.tenants);
                   }
                 }});
    f.push_back(uint<uint32_t>("workload", "vocab_size", REF(c.workload.vocab_size)));
    f.push_back(dist("workload", "prompt_len", REF(c.workload.prompt_len_dist)));
    f.push_back(dist("workload", "output_len", REF(c.workload.output_len_dist)));
    f.push_back(uint<uint32_t>("workload", "prefix_branching",
                               REF(c.workload.prefix_tree.branching)));
    f.push_back(uint<uint32_t>("workload", "prefix_depth", REF(c.workload.prefix_tree.depth)));
    f.push_back(dist("workload", "segment_len", REF(c.workload.prefix_tree.segment_len)));
    f.push_back(str("workload", "trace_file", REF(c.report.trace_file)));
    // [cost]
    f.push_back(dbl("cost", "prefill_lat_per_token", REF(c.sim.cost.prefill_lat_per_token)));
    f.push_back(dbl("cost", "prefill_mem_per_token", REF(c.sim.cost.prefill_mem_per_token)));
    f.push_back(dbl("cost", "decode_lat_per_step", REF(c.sim.cost.decode_lat_per_step)));
    f.push_back(
        dbl("cost", "decode_kv_mem_per_token", REF(c.sim.cost.decode_kv_mem_per_token)));
    f.push_back(
        dbl("cost", "ft_lat_per_sample_step", REF(c.sim.cost.ft_lat_per_sample_step)));
    f.push_back(dbl("cost", "ft_mem_fixed", REF(c.sim.cost.ft_mem_fixed)));
    f.push_back(dbl("cost", "ft_mem_per_token", REF(c.sim.cost.ft_mem_per_token)));
    f.push_back(dbl("cost", "iter_overhead", REF(c.sim.cost.iter_overhead)));
    f.push_back(dbl("cost", "capacity", REF(c.sim.cost.capacity)));
    f.push_back(dbl("cost", "weights_resident", REF(c.sim.cost.weights_resident)));
    // [priority]
    f.push_back(dbl("priority", "base_prefill", REF(c.sim.priority.base[0])));
    f.push_back(dbl("priority", "base_decode", REF(c.sim.priority.base[1])));
    f.push_back(dbl("priority", "base_finetune", REF(c.sim.priority.base[2])));
    f.push_back(dbl("priority", "growth_prefill", REF(c.sim.priority.growth[0])));
    f.push_back(dbl("priority", "growth_decode", REF(c.sim.priority.growth[1])));
    f.push_back(dbl("priority", "growth_finetune", REF(c.sim.priority.growth[2])));
    f.push_back({"priority", "gamma",
                 [](const RunConfig& c) { return format_double(c.sim.priority.gamma); },
                 [](RunConfig& c, std::string_view v) {
                   c.sim.priority.gamma = to_double("priority.gamma", v);
                   c.sim.alignment.gamma = c.sim.priority.gamma;
                 }});
    // [scheduler]
    f.push_back({"scheduler", "policy",
                 [](const RunConfig& c) { return std::string(to_string(c.sim.scheduler.policy)); },
                 [](RunConfig& c, std::string_view v) {
                   auto p = policy_from_string(trim(v));
                   if (!p) {
                     bad_value("scheduler.policy", v,
                               "one of hybrid, periodic, sync, hybrid-nobin, "
                               "hybrid-noprefix, hybrid-noprune");
                   }
                   c.sim.scheduler.policy = *p;
                 }});
    f.push_back(dbl("scheduler", "tau_mem", REF(c.sim.scheduler.tau_mem)));
    f.push_back(uint<uint32_t>("scheduler", "tau_task", REF(c.sim.scheduler.tau_task)));
    f.push_back(dbl("scheduler", "lambda1", REF(c.sim.scheduler.lambda1)));
    f.push_back(dbl("scheduler", "lambda2", REF(c.sim.scheduler.lambda2)));
    f.push_back(dbl("scheduler", "periodic_interval", REF(c.sim.scheduler.periodic_interval)));
    f.push_back(
        uint<uint32_t>("scheduler", "max_decode_batch", REF(c.sim.scheduler.max_decode_batch)));
    f.push_back(uint<uint32_t>("scheduler", "max_ft_batch", REF(c.sim.scheduler.max_ft_batch)));
    f.push_back(dbl("scheduler", "max_wait", REF(c.sim.scheduler.max_wait)));
    f.push_back(
        uint<uint32_t>("scheduler", "max_decode_steps", REF(c.sim.scheduler.max_decode_steps)));
    f.push_back(
        boolean("scheduler", "disable_retraining", REF(c.sim.scheduler.disable_retraining)));
    f.push_back(boolean("scheduler", "bin_concurrency_caps",
                        REF(c.sim.scheduler.bin_concurrency_caps)));
    // [cache]
    f.push_back(boolean("cache", "prefix_sharing", REF(c.sim.cache.prefix_sharing)));
    f.push_back(boolean("cache", "pruning", REF(c.sim.cache.pruning)));
    f.push_back(uint<uint32_t>("cache", "heads", REF(c.sim.cache.heads)));
    f.push_back(dbl("cache", "weak_head_fraction", REF(c.sim.cache.weak_head_fraction)));
    f.push_back(dbl("cache", "weak_head_norm", REF(c.sim.cache.weak_head_norm)));
    f.push_back(dbl("cache", "strong_head_norm", REF(c.sim.cache.strong_head_norm)));
    f.push_back(dbl("cache", "norm_noise", REF(c.sim.cache.norm_noise)));
    f.push_back(uint<uint32_t>("cache", "norm_window", REF(c.sim.cache.norm_window)));
    f.push_back(uint<uint32_t>("cache", "prune_window", REF(c.sim.cache.prune_window)));
    f.push_back(dbl("cache", "tau_factor", REF(c.sim.cache.tau_factor)));
    f.push_back(uint<uint32_t>("cache", "total_slots", REF(c.sim.cache.total_slots)));
    f.push_back(dbl("cache", "reload_lat_per_token", REF(c.sim.cache.reload_lat_per_token)));
    // [alignment]
    f.push_back(dbl("alignment", "beta", REF(c.sim.alignment.beta)));
    f.push_back(dbl("alignment", "loss_threshold", REF(c.sim.alignment.loss_threshold)));
    f.push_back(uint<uint32_t>("alignment", "max_ft_steps", REF(c.sim.alignment.max_ft_steps)));
    f.push_back(dbl("alignment", "prune_penalty", REF(c.sim.alignment.prune_penalty)));
    // [engine]
    f.push_back(dbl("engine", "metrics_interval", REF(c.sim.engine.metrics_interval)));
    f.push_back(
        dbl("engine", "scheduler_overhead_ms", REF(c.sim.engine.scheduler_overhead_ms)));
    f.push_back(boolean("engine", "measure_overhead", REF(c.sim.engine.measure_overhead)));
    f.push_back(dbl("engine", "ft_interference_ms", REF(c.sim.engine.ft_interference_ms)));
    f.push_back(
        dbl("engine", "batch_latency_factor", REF(c.sim.engine.batch_latency_factor)));
    f.push_back(dbl("engine", "slo_factor", REF(c.sim.engine.slo_factor)));
    f.push_back(boolean("engine", "check_invariants", REF(c.sim.engine.check_invariants)));
    f.push_back(dbl("engine", "metrics_horizon", REF(c.sim.engine.metrics_horizon)));
    // [report]
    f.push_back(str("report", "out_dir", REF(c.report.out_dir)));
    f.push_back(str("report", "run_id", REF(c.report.run_id)));
    f.push_back(str("report", "trace_file", REF(c.report.trace_file)));
    f.push_back(boolean("report", "timeline", REF(c.report.timeline)));
    f.push_back(boolean("report", "timeline_tasks", REF(c.report.timeline_tasks)));
    return f;
  }();
  return kFields;
}

struct TenantField {
  std::string_view key;
  std::function<std::string(const TenantParams&)> get;
  std::function<void(TenantParams&, std::string_view, std::string_view)> set;
};

const std::vector<TenantField>& tenant_fields() {
  static const std::vector<TenantField> kFields = [] {
    std::vector<TenantField> f;
    auto d = [&f](std::string_view key, double TenantParams::*m) {
      f.push_back({key, [m](const TenantParams& t) { return format_double(t.*m); },
                   [m](TenantParams& t, std::string_view name, std::string_view v) {
                     t.*m = to_double(name, v);
                   }});
    };
    d("mu0", &TenantParams::mu0);
    d("sigma", &TenantParams::sigma);
    d("drift_rate", &TenantParams::drift_rate);
    d("ft_gain", &TenantParams::ft_gain);
    d("mu_max", &TenantParams::mu_max);
    f.push_back({"eval_pairs",
                 [](const TenantParams& t) { return std::to_string(t.eval_pairs); },
                 [](TenantParams& t, std::string_view name, std::string_view v) {
                   t.eval_pairs = to_uint<uint32_t>(name, v);
                 }});
    return f;
  }();
  return kFields;
}

// Tenant sections apply after [workload] so that tenants= resizes first;
// entries are buffered until the end of the file.
struct TenantAssignment {
  uint32_t index;
  std::string key;
  std::string value;
};

void apply_tenant(RunConfig& cfg, const TenantAssignment& a) {
  const std::string name = "tenant." + std::to_string(a.index) + "." + a.key;
  if (a.index >= cfg.sim.alignment.tenants.size()) {
    throw ConfigError(name + ": tenant index out of range (workload.tenants = " +
                      std::to_string(cfg.workload.tenants) + ")");
  }
  for (const TenantField& f : tenant_fields()) {
    if (f.key == a.key) {
      f.set(cfg.sim.alignment.tenants[a.index], name, a.value);
      return;
    }
  }
  throw ConfigError(name + ": unknown key");
}

bool parse_tenant_section(std::string_view section, uint32_t& index) {
  if (section.substr(0, 7) != "tenant.") return false;
  auto idx = parse_uint<uint32_t>(section.substr(7));
  if (!idx) throw ConfigError(std::string(section) + ": bad tenant index");
  index = *idx;
  return true;
}

void set_field(RunConfig& cfg, std::string_view section, std::string_view key,
               std::string_view value) {
  for (const Field& f : fields()) {
    if (f.section == section && f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError(full_name(section, key) + ": unknown key");
}

}  // namespace

void RunConfig::validate() const {
  workload.validate();
  sim.validate();
  if (sim.alignment.tenants.size() != workload.tenants) {
    throw ConfigError("workload.tenants: does not match the number of tenant sections");
  }
}

RunConfig parse_config(std::istream& in, std::string_view source) {
  RunConfig cfg;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  std::vector<TenantAssignment> tenant_lines;
  const std::string prefix = std::string(source) + ":";
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view l = trim(line);
    if (const auto hash = l.find_first_of("#;"); hash != std::string_view::npos) {
      l = trim(l.substr(0, hash));
    }
    if (l.empty()) continue;
    const std::string where = prefix + std::to_string(line_no) + ": ";
    if (l.front() == '[') {
      if (l.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(l.substr(1, l.size() - 2)));
      continue;
    }
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key(trim(l.substr(0, eq)));
    const std::string_view value = trim(l.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + key + ": key outside any section");
    uint32_t tenant = 0;
    try {
      if (parse_tenant_section(section, tenant)) {
        tenant_lines.push_back({tenant, key, std::string(value)});
        continue;
      }
      set_field(cfg, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    seen.insert(section + "." + key);
  }
  for (const char* required : {"workload.arrival_rate", "workload.duration", "workload.seed"}) {
    if (!seen.count(required)) {
      throw ConfigError(prefix + " missing required key " + std::string(required));
    }
  }
  for (const TenantAssignment& a : tenant_lines) apply_tenant(cfg, a);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_config(in, path);
}

void apply_override(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto dot = key.rfind('.');
  if (dot == std::string_view::npos) {
    throw ConfigError(std::string(key) + ": expected section.key");
  }
  const std::string_view section = key.substr(0, dot);
  const std::string_view name = key.substr(dot + 1);
  uint32_t tenant = 0;
  if (parse_tenant_section(section, tenant)) {
    apply_tenant(cfg, {tenant, std::string(name), std::string(value)});
  } else {
    set_field(cfg, section, name, value);
  }
}

std::string serialize_config(const RunConfig& cfg, bool with_output) {
  std::ostringstream out;
  std::string_view section;
  for (const Field& f : fields()) {
    if (!with_output && f.section == "report" && f.key == "out_dir") continue;
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  for (std::size_t i = 0; i < cfg.sim.alignment.tenants.size(); ++i) {
    out << "\n[tenant." << i << "]\n";
    for (const TenantField& f : tenant_fields()) {
      out << f.key << " = " << f.get(cfg.sim.alignment.tenants[i]) << '\n';
    }
  }
  return out.str();
}

std::string config_hash(const RunConfig& cfg) {
  return hex64(fnv1a64(serialize_config(cfg, false)));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(full_name(f.section, f.key));
  for (const TenantField& f : tenant_fields()) out.push_back("tenant.0." + std::string(f.key));
  return out;
}

}  // namespace macesim
