#pragma once

#include "isoeffect/core.hpp"
#include "isoeffect/nuisance.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <vector>

namespace isoeffect {

// Out-of-fold nuisance predictions. Entry i of every per-row vector comes
// from models trained without fold(i). The vectors are plain data so callers
// may substitute their own predictions (for instance known propensities).
struct NuisanceFits {
  EstimandKind kind = EstimandKind::IATE;
  FoldPlan plan;
  ClipPolicy clip;

  // Source rows (length n).
  std::vector<double> g_obs;  // g(a_i, e_i)
  std::vector<double> g1;     // g(1, e_i)
  std::vector<double> g0;     // g(0, e_i)
  std::vector<double> p_hat;  // clipped P(a=1 | e_i)
  std::vector<double> p_raw;  // unclipped
  std::vector<double> pi1;    // per fold: treated fraction of the training complement

  // GENERAL only: target rows (length m) and the corpus classifier
  // P(C=target | e) on both samples, clipped.
  std::optional<FoldPlan> target_plan;
  std::vector<double> q_source;
  std::vector<double> target_g1;
  std::vector<double> target_g0;
  std::vector<double> target_p;
  std::vector<double> target_q;

  std::vector<FittedModel> outcome_models;
  std::vector<FittedModel> propensity_models;
  std::vector<FittedModel> corpus_models;

  std::size_t n() const noexcept { return g_obs.size(); }
  // Size of the sample the plug-in term averages over.
  std::size_t target_size(std::span<const int> a) const;
  double pi1_of_row(std::size_t i) const { return pi1[plan.assignment[i]]; }
};

struct CrossfitOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  bool stratify = true;
  // Use this partition instead of deriving one from the seed.
  std::optional<FoldPlan> plan;
};

NuisanceFits crossfit_nuisances(const Dataset& data, const Estimand& estimand, const ModelSpec& outcome,
                                const ModelSpec& propensity, const CrossfitOptions& options = {});

// Per-row weights gamma(a_i, e_i) and, for each target row, the contrast
// gamma(1, e*) - gamma(0, e*).
struct Weights {
  std::vector<double> gamma;
  std::vector<double> target_gap;
};

Weights weights_iate(std::span<const int> a, std::span<const double> p_hat);
// `pi1` is per row (the value of the row's fold).
Weights weights_iatt(std::span<const int> a, std::span<const double> p_hat, std::span<const double> pi1);
// `q` is P(C=target | e) on source rows; `target_p`, `target_q` on target
// rows. frac_s = n/(n+m) and frac_t = m/(n+m).
Weights weights_general(std::span<const int> a, std::span<const double> p_hat, std::span<const double> q,
                        std::span<const double> target_p, std::span<const double> target_q, double frac_s,
                        double frac_t);

// Dispatches on fits.kind.
Weights compute_weights(const NuisanceFits& fits, std::span<const int> a);

struct EstimateDiagnostics {
  double p_min = 0.0;
  double p_max = 0.0;
  double clipped_frac = 0.0;
  std::vector<double> pi1;
  bool folds_downgraded = false;
};

struct EffectEstimate {
  EstimandKind kind = EstimandKind::IATE;
  double tau_hat = 0.0;
  double variance_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n = 0;  // number of influence terms
  std::vector<double> influence;  // centered at tau_hat
  EstimateDiagnostics diagnostics;
};

struct VarianceCi {
  double variance = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr double kZ95 = 1.96;

// variance = mean of squared (psi - tau_hat); se = sqrt(variance / n).
VarianceCi variance_ci(std::span<const double> psi, double tau_hat, std::size_t n);

EffectEstimate estimate_dr(const NuisanceFits& fits, const Weights& weights, std::span<const double> y,
                           std::span<const int> a);

// (1/n) sum (a y - (1 - a) y).
EffectEstimate estimate_naive(std::span<const double> y, std::span<const int> a);
EffectEstimate estimate_naive(const Dataset& data);

struct DrRun {
  NuisanceFits fits;
  Weights weights;
  EffectEstimate estimate;
};

DrRun run_dr(const Dataset& data, const Estimand& estimand, const ModelSpec& outcome, const ModelSpec& propensity,
             const CrossfitOptions& options = {});

}  // namespace isoeffect
