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

#include "macesim/macesim.h"

#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "macesim/config.h"
#include "macesim/cost_model.h"
#include "macesim/errors.h"
#include "macesim/report.h"
#include "macesim/sweep.h"

struct macesim_config {
  macesim::RunConfig cfg;
};

struct macesim_run {
  macesim::RunArtifacts run;
  std::string summary;  // cached summary_json(run)
  std::map<std::string, double> metrics;
};

namespace {

thread_local std::string g_last_error;

macesim_status fail(macesim_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps the core's exception types onto status codes. Must be called from
// inside a catch block.
macesim_status translate() {
  try {
    throw;
  } catch (const macesim::ConfigError& e) {
    return fail(MACESIM_ERR_CONFIG, e.what());
  } catch (const macesim::ContractViolation& e) {
    return fail(MACESIM_ERR_CONTRACT, e.what());
  } catch (const macesim::MismatchError& e) {
    return fail(MACESIM_ERR_MISMATCH, e.what());
  } catch (const macesim::ParseError& e) {
    return fail(MACESIM_ERR_PARSE, e.what());
  } catch (const macesim::IoError& e) {
    return fail(MACESIM_ERR_IO, e.what());
  } catch (const macesim::CalibrationError& e) {
    return fail(MACESIM_ERR_CALIBRATION, e.what());
  } catch (const macesim::DomainError& e) {
    return fail(MACESIM_ERR_DOMAIN, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MACESIM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MACESIM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MACESIM_ERR_INTERNAL, "unknown error");
  }
}

template <typename F>
macesim_status guarded(F&& f) {
  try {
    return f();
  } catch (...) {
    return translate();
  }
}

macesim_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf || cap < s.size() + 1) {
    if (!buf && cap == 0 && needed) return MACESIM_OK;  // size query
    return fail(MACESIM_ERR_BUFFER, "buffer too small: need " + std::to_string(s.size() + 1) +
                                        " bytes");
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return MACESIM_OK;
}

#define MACESIM_REQUIRE(cond)                                          \
  do {                                                                 \
    if (!(cond)) return fail(MACESIM_ERR_INVALID_ARG, #cond " failed"); \
  } while (0)

}  // namespace

extern "C" {

const char* macesim_version(void) { return "0.1.0"; }

const char* macesim_last_error(void) { return g_last_error.c_str(); }

const char* macesim_status_name(macesim_status status) {
  switch (status) {
    case MACESIM_OK: return "ok";
    case MACESIM_ERR_INVALID_ARG: return "invalid argument";
    case MACESIM_ERR_CONFIG: return "config error";
    case MACESIM_ERR_CONTRACT: return "contract violation";
    case MACESIM_ERR_MISMATCH: return "mismatch";
    case MACESIM_ERR_IO: return "io error";
    case MACESIM_ERR_PARSE: return "parse error";
    case MACESIM_ERR_CALIBRATION: return "calibration error";
    case MACESIM_ERR_DOMAIN: return "domain error";
    case MACESIM_ERR_BUFFER: return "buffer too small";
    case MACESIM_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

macesim_status macesim_config_load(const char* path, macesim_config** out) {
  MACESIM_REQUIRE(path && out);
  *out = nullptr;
  return guarded([&] {
    auto c = std::make_unique<macesim_config>();
    c->cfg = macesim::load_config(path);
    *out = c.release();
    return MACESIM_OK;
  });
}

macesim_status macesim_config_parse(const char* text, macesim_config** out) {
  MACESIM_REQUIRE(text && out);
  *out = nullptr;
  return guarded([&] {
    std::istringstream in{std::string(text)};
    auto c = std::make_unique<macesim_config>();
    c->cfg = macesim::parse_config(in, "config");
    *out = c.release();
    return MACESIM_OK;
  });
}

macesim_status macesim_config_clone(const macesim_config* cfg, macesim_config** out) {
  MACESIM_REQUIRE(cfg && out);
  *out = nullptr;
  return guarded([&] {
    *out = new macesim_config(*cfg);
    return MACESIM_OK;
  });
}

macesim_status macesim_config_set(macesim_config* cfg, const char* key, const char* value) {
  MACESIM_REQUIRE(cfg && key && value);
  return guarded([&] {
    macesim::RunConfig next = cfg->cfg;
    macesim::apply_override(next, key, value);
    cfg->cfg = std::move(next);
    return MACESIM_OK;
  });
}

macesim_status macesim_config_validate(const macesim_config* cfg) {
  MACESIM_REQUIRE(cfg);
  return guarded([&] {
    cfg->cfg.validate();
    return MACESIM_OK;
  });
}

macesim_status macesim_config_hash(const macesim_config* cfg, char* buf, size_t cap,
                                   size_t* needed) {
  MACESIM_REQUIRE(cfg);
  return guarded([&] { return copy_out(macesim::config_hash(cfg->cfg), buf, cap, needed); });
}

macesim_status macesim_config_serialize(const macesim_config* cfg, char* buf, size_t cap,
                                        size_t* needed) {
  MACESIM_REQUIRE(cfg);
  return guarded(
      [&] { return copy_out(macesim::serialize_config(cfg->cfg, true), buf, cap, needed); });
}

macesim_status macesim_config_out_dir(const macesim_config* cfg, char* buf, size_t cap,
                                      size_t* needed) {
  MACESIM_REQUIRE(cfg);
  return guarded([&] { return copy_out(cfg->cfg.report.out_dir, buf, cap, needed); });
}

void macesim_config_free(macesim_config* cfg) { delete cfg; }

macesim_status macesim_gen_trace(const macesim_config* cfg, const char* path,
                                 size_t* n_requests) {
  MACESIM_REQUIRE(cfg && path);
  return guarded([&] {
    cfg->cfg.validate();
    const macesim::Trace trace = macesim::load_or_generate_trace(cfg->cfg);
    macesim::write_trace(trace, std::string(path));
    if (n_requests) *n_requests = trace.size();
    return MACESIM_OK;
  });
}

macesim_status macesim_run_create(const macesim_config* cfg, macesim_run** out) {
  MACESIM_REQUIRE(cfg && out);
  *out = nullptr;
  return guarded([&] {
    auto r = std::make_unique<macesim_run>();
    r->run = macesim::run_config(cfg->cfg);
    r->summary = macesim::summary_json(r->run);
    const auto j = nlohmann::json::parse(r->summary);
    for (const auto& [k, v] : j.at("metrics").items()) {
      if (v.is_number()) r->metrics[k] = v.get<double>();
    }
    *out = r.release();
    return MACESIM_OK;
  });
}

macesim_status macesim_run_write(const macesim_run* run, const char* out_root, char* buf,
                                 size_t cap, size_t* needed) {
  MACESIM_REQUIRE(run && out_root);
  return guarded([&] {
    const auto dir = macesim::write_run(run->run, out_root);
    if (!buf && cap == 0 && !needed) return MACESIM_OK;
    return copy_out(dir.string(), buf, cap, needed);
  });
}

macesim_status macesim_run_metric(const macesim_run* run, const char* name, double* value) {
  MACESIM_REQUIRE(run && name && value);
  const auto it = run->metrics.find(name);
  if (it == run->metrics.end()) {
    return fail(MACESIM_ERR_INVALID_ARG, std::string("unknown or non-finite metric ") + name);
  }
  *value = it->second;
  return MACESIM_OK;
}

macesim_status macesim_run_metrics_row(const macesim_run* run, char* buf, size_t cap,
                                       size_t* needed) {
  MACESIM_REQUIRE(run);
  return guarded([&] { return copy_out(macesim::metrics_row(run->run), buf, cap, needed); });
}

macesim_status macesim_run_summary_json(const macesim_run* run, char* buf, size_t cap,
                                        size_t* needed) {
  MACESIM_REQUIRE(run);
  return guarded([&] { return copy_out(run->summary, buf, cap, needed); });
}

void macesim_run_free(macesim_run* run) { delete run; }

macesim_status macesim_compare(const char* const* run_dirs, size_t n_runs, const char* out_dir,
                               int force, char* buf, size_t cap, size_t* needed) {
  MACESIM_REQUIRE(run_dirs && out_dir);
  return guarded([&] {
    std::vector<macesim::RunSummary> runs;
    for (size_t i = 0; i < n_runs; ++i) {
      if (!run_dirs[i]) return fail(MACESIM_ERR_INVALID_ARG, "run_dirs contains NULL");
      runs.push_back(macesim::load_run(run_dirs[i]));
    }
    const auto out = macesim::compare_runs(runs, out_dir, force != 0);
    if (!buf && cap == 0 && !needed) return MACESIM_OK;
    return copy_out(out.table, buf, cap, needed);
  });
}

macesim_status macesim_sweep(const macesim_config* base, const char* const* axes, size_t n_axes,
                             const char* out_root, unsigned threads, size_t* n_runs) {
  MACESIM_REQUIRE(base && out_root && (axes || n_axes == 0));
  return guarded([&] {
    std::vector<macesim::SweepAxis> parsed;
    for (size_t i = 0; i < n_axes; ++i) {
      if (!axes[i]) return fail(MACESIM_ERR_INVALID_ARG, "axes contains NULL");
      parsed.push_back(macesim::parse_axis(axes[i]));
    }
    const auto configs = macesim::expand_grid(base->cfg, parsed);
    const auto result = macesim::run_sweep(configs, out_root, threads);
    if (n_runs) *n_runs = result.run_dirs.size();
    return MACESIM_OK;
  });
}

macesim_status macesim_calibrate(const char* csv_path, const char* out_path, char* buf,
                                 size_t cap, size_t* needed) {
  MACESIM_REQUIRE(csv_path);
  return guarded([&] {
    const macesim::CalibrationResult res = macesim::calibrate(std::string(csv_path));
    if (out_path) {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw macesim::IoError(std::string("cannot write ") + out_path);
      macesim::write_profile(res.profile, out);
    }
    std::ostringstream report;
    for (const auto& [series, rms] : res.rms_residual) {
      report << series << " rms_residual=" << rms << "\n";
    }
    if (!buf && cap == 0 && !needed) return MACESIM_OK;
    return copy_out(report.str(), buf, cap, needed);
  });
}

}  // extern "C"
