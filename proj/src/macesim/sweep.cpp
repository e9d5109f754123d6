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

#include "macesim/sweep.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "macesim/errors.h"
#include "macesim/text.h"

namespace macesim {

SweepAxis parse_axis(std::string_view spec) {
  const auto eq = spec.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("sweep axis '" + std::string(spec) + "': expected section.key=v1,v2");
  }
  SweepAxis axis;
  axis.key = std::string(trim(spec.substr(0, eq)));
  for (std::string_view v : split(spec.substr(eq + 1), ',')) {
    v = trim(v);
    if (v.empty()) throw ConfigError(axis.key + ": empty sweep value");
    axis.values.emplace_back(v);
  }
  if (axis.values.empty()) throw ConfigError(axis.key + ": no sweep values");
  if (axis.key.empty()) throw ConfigError("sweep axis '" + std::string(spec) + "': empty key");
  // Unknown keys and unparsable values fail here rather than mid-sweep.
  RunConfig probe;
  for (const std::string& v : axis.values) apply_override(probe, axis.key, v);
  return axis;
}

std::vector<RunConfig> expand_grid(const RunConfig& base, const std::vector<SweepAxis>& axes) {
  std::vector<RunConfig> out{base};
  for (const SweepAxis& axis : axes) {
    std::vector<RunConfig> next;
    next.reserve(out.size() * axis.values.size());
    for (const RunConfig& c : out) {
      for (const std::string& v : axis.values) {
        RunConfig n = c;
        apply_override(n, axis.key, v);
        next.push_back(std::move(n));
      }
    }
    out = std::move(next);
  }
  std::set<std::string> seen;
  std::vector<RunConfig> unique;
  for (RunConfig& c : out) {
    if (seen.insert(serialize_config(c, false)).second) unique.push_back(std::move(c));
  }
  return unique;
}

unsigned sweep_threads(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MACE_SIM_THREADS")) {
    const auto v = parse_uint<unsigned>(env);
    if (!v || *v == 0) {
      throw ConfigError("MACE_SIM_THREADS: expected a positive integer, got '" +
                        std::string(env) + "'");
    }
    n = *v;
  }
  return static_cast<unsigned>(std::clamp<std::size_t>(jobs, 1, n));
}

SweepResult run_sweep(const std::vector<RunConfig>& configs, const std::filesystem::path& out_root,
                      unsigned threads) {
  for (const RunConfig& c : configs) c.validate();
  const std::size_t n = configs.size();
  if (threads == 0) threads = sweep_threads(n);
  threads = static_cast<unsigned>(std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1)));

  // Each job owns its slot; configs are shared read-only.
  std::vector<std::string> hashes(n);
  std::vector<std::string> rows(n);
  std::vector<std::filesystem::path> dirs(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        const RunArtifacts run = run_config(configs[i]);
        hashes[i] = run.hash;
        rows[i] = metrics_row(run);
        dirs[i] = write_run(run, out_root);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::error_code ec;
  std::filesystem::create_directories(out_root, ec);
  if (ec) throw IoError("cannot create " + out_root.string() + ": " + ec.message());

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return hashes[a] < hashes[b]; });

  SweepResult result;
  result.metrics_csv = out_root / "sweep_metrics.csv";
  std::ofstream out(result.metrics_csv, std::ios::binary);
  if (!out) throw IoError("cannot write " + result.metrics_csv.string());
  out << kMetricsHeader << "\n";
  for (std::size_t i : order) {
    out << rows[i] << "\n";
    result.run_dirs.push_back(dirs[i]);
  }
  if (!out) throw IoError("write failed for " + result.metrics_csv.string());
  return result;
}

}  // namespace macesim
