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
#include <span>
#include <vector>

#include "macesim/workload.h"

namespace macesim {

// Log-ratio of the policy against the frozen reference for the chosen (plus)
// and rejected (minus) response.
struct MarginSample {
  double delta_plus = 0.0;
  double delta_minus = 0.0;

  double margin() const { return delta_plus - delta_minus; }
};

// -log sigmoid(beta * (delta_plus - delta_minus)).
//
// Sign convention: the loss is the negated log-likelihood, so it is > 0 and
// larger means worse alignment. Fine-tune priority adds gamma * loss, and the
// fine-tune stop rule compares it against a threshold from above.
double dpo_loss(const MarginSample& s, double beta);

// Fraction of samples with a strictly positive margin. Throws DomainError on
// an empty set.
double win_rate(std::span<const MarginSample> samples);

// Mean margin. Throws DomainError on an empty set.
double clpd(std::span<const MarginSample> samples);

struct TenantParams {
  double mu0 = 1.0;          // initial mean margin
  double sigma = 1.0;        // pair margin noise
  double drift_rate = 0.004; // mu lost per second
  double ft_gain = 0.002;    // mu gained per fine-tune step
  double mu_max = 3.0;
  uint32_t eval_pairs = 64;

  bool operator==(const TenantParams&) const = default;
};

struct AlignmentParams {
  std::vector<TenantParams> tenants{TenantParams{}, TenantParams{}};
  double beta = 1.0;
  double gamma = 1.0;
  double loss_threshold = 0.3;
  uint32_t max_ft_steps = 8;
  // Eval margin offset applied at full pruning aggressiveness.
  double prune_penalty = 0.05;

  bool operator==(const AlignmentParams&) const = default;

  void validate() const;
  std::vector<TenantMarginModel> margin_models() const;
};

struct EvalMetrics {
  double win_rate = 0.0;
  double clpd = 0.0;
};

// Synthetic stand-in for a served model: per tenant, a mean preference margin
// that drifts down over time and is pushed up by fine-tune steps.
class AlignmentEnv {
 public:
  AlignmentEnv(const AlignmentParams& params, uint64_t seed);

  std::size_t tenants() const { return state_.size(); }
  const AlignmentParams& params() const { return params_; }
  double clock() const { return clock_; }
  double mu(uint32_t tenant) const { return state_.at(tenant).mu; }
  void set_mu(uint32_t tenant, double mu);
  std::span<const double> eval_offsets(uint32_t tenant) const {
    return state_.at(tenant).eval_offsets;
  }
  // Replaces the held-out pair offsets (sampled from the seed by default).
  void set_eval_offsets(uint32_t tenant, std::vector<double> offsets);

  // mu <- mu - drift_rate * dt for one tenant. dt must be >= 0.
  void advance(uint32_t tenant, double dt);
  // Moves every tenant forward to absolute time t (>= clock()).
  void advance_to(double t);

  // One optimizer step on `req`'s pair: mu <- min(mu_max, mu + ft_gain).
  // Returns the pair loss after the step.
  double ft_step(const Request& req);

  // Current margin of a FineTune request's pair. The trace carries the margin
  // sampled at arrival; it moves with the tenant's mu since then.
  double pair_margin(const Request& req) const;
  double pair_loss(const Request& req) const;

  // Win rate and CLPD over the tenant's held-out pairs at time t >= clock().
  EvalMetrics eval_metrics(uint32_t tenant, double t) const;

  // Aggressiveness in [0, 1] of active KV pruning; scales prune_penalty.
  void set_pruning_aggressiveness(double a);
  double eval_penalty() const { return eval_penalty_; }

 private:
  struct TenantState {
    TenantParams params;
    double mu = 0.0;
    std::vector<double> eval_offsets;
  };

  double baseline_mu(uint32_t tenant, double t) const;

  AlignmentParams params_;
  std::vector<TenantState> state_;
  double clock_ = 0.0;
  double eval_penalty_ = 0.0;
};

}  // namespace macesim
