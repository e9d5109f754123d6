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

#include "macesim/alignment.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "macesim/errors.h"
#include "macesim/rng.h"

namespace macesim {

double dpo_loss(const MarginSample& s, double beta) {
  // softplus(-x), split by sign so neither branch overflows.
  const double x = beta * s.margin();
  if (x >= 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

double win_rate(std::span<const MarginSample> samples) {
  if (samples.empty()) throw DomainError("win_rate of empty sample set");
  std::size_t wins = 0;
  for (const auto& s : samples) {
    if (s.margin() > 0.0) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(samples.size());
}

double clpd(std::span<const MarginSample> samples) {
  if (samples.empty()) throw DomainError("clpd of empty sample set");
  double sum = 0.0;
  for (const auto& s : samples) sum += s.margin();
  return sum / static_cast<double>(samples.size());
}

void AlignmentParams::validate() const {
  if (tenants.empty()) throw ConfigError("alignment: at least one tenant required");
  if (!(beta > 0.0)) throw ConfigError("alignment.beta: must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("priority.gamma: must be >= 0");
  if (!(loss_threshold >= 0.0)) {
    throw ConfigError("alignment.loss_threshold: must be >= 0");
  }
  if (max_ft_steps == 0) throw ConfigError("alignment.max_ft_steps: must be >= 1");
  if (!(prune_penalty >= 0.0)) throw ConfigError("alignment.prune_penalty: must be >= 0");
  for (std::size_t i = 0; i < tenants.size(); ++i) {
    const TenantParams& t = tenants[i];
    const std::string sec = "tenant." + std::to_string(i) + ".";
    if (!(t.sigma > 0.0)) throw ConfigError(sec + "sigma: must be > 0");
    if (!(t.drift_rate >= 0.0)) throw ConfigError(sec + "drift_rate: must be >= 0");
    if (!(t.ft_gain > 0.0)) throw ConfigError(sec + "ft_gain: must be > 0");
    if (!(t.mu0 <= t.mu_max)) throw ConfigError(sec + "mu0: must be <= mu_max");
    if (t.eval_pairs == 0) throw ConfigError(sec + "eval_pairs: must be >= 1");
  }
}

std::vector<TenantMarginModel> AlignmentParams::margin_models() const {
  std::vector<TenantMarginModel> out;
  for (const TenantParams& t : tenants) out.push_back({t.mu0, t.drift_rate, t.sigma});
  return out;
}

AlignmentEnv::AlignmentEnv(const AlignmentParams& params, uint64_t seed)
    : params_(params) {
  state_.reserve(params.tenants.size());
  for (std::size_t i = 0; i < params.tenants.size(); ++i) {
    TenantState s;
    s.params = params.tenants[i];
    s.mu = s.params.mu0;
    Rng rng(derive_seed(seed, 0xE7A1000 + i));
    s.eval_offsets.resize(s.params.eval_pairs);
    for (double& o : s.eval_offsets) o = rng.normal(0.0, s.params.sigma);
    state_.push_back(std::move(s));
  }
}

void AlignmentEnv::set_mu(uint32_t tenant, double mu) {
  TenantState& s = state_.at(tenant);
  s.mu = std::min(mu, s.params.mu_max);
}

void AlignmentEnv::set_eval_offsets(uint32_t tenant, std::vector<double> offsets) {
  state_.at(tenant).eval_offsets = std::move(offsets);
}

void AlignmentEnv::advance(uint32_t tenant, double dt) {
  if (!(dt >= 0.0)) throw ContractViolation("env_advance: dt must be >= 0");
  TenantState& s = state_.at(tenant);
  s.mu -= s.params.drift_rate * dt;
}

void AlignmentEnv::advance_to(double t) {
  if (t < clock_) throw ContractViolation("env_advance: time moved backwards");
  const double dt = t - clock_;
  for (uint32_t i = 0; i < state_.size(); ++i) advance(i, dt);
  clock_ = t;
}

double AlignmentEnv::baseline_mu(uint32_t tenant, double t) const {
  const TenantParams& p = state_.at(tenant).params;
  return p.mu0 - p.drift_rate * t;
}

double AlignmentEnv::pair_margin(const Request& req) const {
  if (!req.pair) throw ContractViolation("pair_margin: request has no preference pair");
  const uint32_t tenant = req.tenant < state_.size() ? req.tenant : 0;
  return req.pair->initial_margin + state_[tenant].mu -
         baseline_mu(tenant, req.arrival_time);
}

double AlignmentEnv::pair_loss(const Request& req) const {
  return dpo_loss({pair_margin(req), 0.0}, params_.beta);
}

double AlignmentEnv::ft_step(const Request& req) {
  if (!req.pair) throw ContractViolation("env_ft_step: request has no preference pair");
  const uint32_t tenant = req.tenant < state_.size() ? req.tenant : 0;
  TenantState& s = state_[tenant];
  s.mu = std::min(s.params.mu_max, s.mu + s.params.ft_gain);
  return pair_loss(req);
}

EvalMetrics AlignmentEnv::eval_metrics(uint32_t tenant, double t) const {
  const TenantState& s = state_.at(tenant);
  if (s.eval_offsets.empty()) throw DomainError("eval_metrics: no eval pairs");
  const double mu_t = s.mu - s.params.drift_rate * std::max(0.0, t - clock_);
  std::vector<MarginSample> samples;
  samples.reserve(s.eval_offsets.size());
  for (double o : s.eval_offsets) samples.push_back({mu_t + o - eval_penalty_, 0.0});
  return {win_rate(samples), clpd(samples)};
}

void AlignmentEnv::set_pruning_aggressiveness(double a) {
  eval_penalty_ = params_.prune_penalty * std::clamp(a, 0.0, 1.0);
}

}  // namespace macesim
