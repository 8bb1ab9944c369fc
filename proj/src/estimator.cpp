#include "isoeffect/estimator.hpp"

#include "isoeffect/error.hpp"
#include "isoeffect/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace isoeffect {

std::size_t NuisanceFits::target_size(std::span<const int> a) const {
  switch (kind) {
    case EstimandKind::IATE: return a.size();
    case EstimandKind::IATT: return static_cast<std::size_t>(std::count(a.begin(), a.end(), 1));
    case EstimandKind::GENERAL: return target_g1.size();
  }
  return 0;
}

namespace {

ModelSpec with_seed(ModelSpec spec, std::uint64_t run_seed, std::string_view role, std::size_t fold) {
  spec.seed = derive_seed(derive_seed(derive_seed(run_seed, role), spec.seed), fold);
  return spec;
}

void assign(std::vector<double>& dst, std::span<const std::size_t> rows, const Vector& src) {
  for (std::size_t r = 0; r < rows.size(); ++r) dst[rows[r]] = src(static_cast<Eigen::Index>(r));
}

double mean_of(std::span<const int> a) {
  double s = 0.0;
  for (int v : a) s += v;
  return s / static_cast<double>(a.size());
}

}  // namespace

NuisanceFits crossfit_nuisances(const Dataset& data, const Estimand& estimand, const ModelSpec& outcome,
                                const ModelSpec& propensity, const CrossfitOptions& options) {
  require_both_arms(data, "estimator");
  estimand.validate(data.dims());
  const std::size_t n = data.size();
  const std::size_t k = options.k;
  const auto y = data.y();
  const auto a = data.a();
  const Matrix& x = data.features();

  NuisanceFits fits;
  fits.kind = estimand.kind;
  fits.clip = propensity.clip;
  if (options.plan) {
    if (options.plan->n != n || options.plan->k != k || options.plan->assignment.size() != n)
      throw ArgumentError("estimator", "supplied fold plan does not match the data");
    fits.plan = *options.plan;
  } else {
    fits.plan = make_folds(n, k, a, derive_seed(options.seed, "folds"), options.stratify);
  }
  for (std::size_t f = 0; f < k; ++f) {
    const auto train = fits.plan.complement_rows(f);
    const auto at = take(a, train);
    const auto treated = std::count(at.begin(), at.end(), 1);
    if (treated == 0 || static_cast<std::size_t>(treated) == at.size())
      throw ValidationError("estimator", "training complement of fold " + std::to_string(f) + " lacks a treatment arm");
  }

  const Matrix* target = estimand.target ? &*estimand.target : nullptr;
  const bool general = estimand.kind == EstimandKind::GENERAL;
  const std::size_t m = general ? static_cast<std::size_t>(target->rows()) : 0;
  if (general) {
    if (m < k) throw ValidationError("estimator", "target sample has fewer rows than folds");
    fits.target_plan = make_folds_unstratified(m, k, derive_seed(options.seed, "target-folds"));
    fits.q_source.assign(n, 0.0);
    fits.target_g1.assign(m, 0.0);
    fits.target_g0.assign(m, 0.0);
    fits.target_p.assign(m, 0.0);
    fits.target_q.assign(m, 0.0);
    fits.corpus_models.resize(k);
  }

  fits.g_obs.assign(n, 0.0);
  fits.g1.assign(n, 0.0);
  fits.g0.assign(n, 0.0);
  fits.p_hat.assign(n, 0.0);
  fits.p_raw.assign(n, 0.0);
  fits.pi1.assign(k, 0.0);
  fits.outcome_models.resize(k);
  fits.propensity_models.resize(k);

  const Matrix outcome_x = append_treatment(x, a);

  kernels::parallel_for(k, [&](std::size_t f) {
    const auto train = fits.plan.complement_rows(f);
    const auto val = fits.plan.fold_rows(f);
    const Matrix xv = take_rows(x, val);
    const Treatment at = take(a, train);

    auto om = fit_outcome_model(take_rows(outcome_x, train), take(y, train), with_seed(outcome, options.seed, "outcome", f));
    assign(fits.g_obs, val, om.predict(take_rows(outcome_x, val)));
    assign(fits.g1, val, om.predict(append_constant_treatment(xv, 1.0)));
    assign(fits.g0, val, om.predict(append_constant_treatment(xv, 0.0)));

    auto pm = fit_propensity_model(take_rows(x, train), at, with_seed(propensity, options.seed, "propensity", f));
    const Vector raw = pm.predict_unclipped(xv);
    assign(fits.p_raw, val, raw);
    assign(fits.p_hat, val, raw.unaryExpr([&](double p) { return pm.clip.apply(p); }));
    fits.pi1[f] = mean_of(at);

    if (general) {
      const auto ttrain = fits.target_plan->complement_rows(f);
      const auto tval = fits.target_plan->fold_rows(f);
      Matrix cx(static_cast<Eigen::Index>(train.size() + ttrain.size()), x.cols());
      cx.topRows(static_cast<Eigen::Index>(train.size())) = take_rows(x, train);
      cx.bottomRows(static_cast<Eigen::Index>(ttrain.size())) = take_rows(*target, ttrain);
      Treatment label(train.size(), 0);
      label.resize(train.size() + ttrain.size(), 1);
      auto cm = fit_propensity_model(cx, label, with_seed(propensity, options.seed, "corpus", f));
      const Matrix tv = take_rows(*target, tval);
      assign(fits.q_source, val, cm.predict(xv));
      assign(fits.target_q, tval, cm.predict(tv));
      assign(fits.target_p, tval, pm.predict(tv));
      assign(fits.target_g1, tval, om.predict(append_constant_treatment(tv, 1.0)));
      assign(fits.target_g0, tval, om.predict(append_constant_treatment(tv, 0.0)));
      fits.corpus_models[f] = std::move(cm);
    }
    fits.outcome_models[f] = std::move(om);
    fits.propensity_models[f] = std::move(pm);
  });
  return fits;
}

Weights weights_iate(std::span<const int> a, std::span<const double> p_hat) {
  if (a.size() != p_hat.size()) throw ArgumentError("estimator", "treatment and propensity lengths differ");
  Weights w;
  w.gamma.resize(a.size());
  w.target_gap.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = p_hat[i];
    w.gamma[i] = a[i] == 1 ? 1.0 / p : -1.0 / (1.0 - p);
    w.target_gap[i] = 1.0 / p + 1.0 / (1.0 - p);
  }
  return w;
}

Weights weights_iatt(std::span<const int> a, std::span<const double> p_hat, std::span<const double> pi1) {
  if (a.size() != p_hat.size() || a.size() != pi1.size())
    throw ArgumentError("estimator", "treatment, propensity and marginal lengths differ");
  Weights w;
  w.gamma.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = p_hat[i];
    if (a[i] == 1) {
      w.gamma[i] = 1.0 / pi1[i];
      w.target_gap.push_back(1.0 / ((1.0 - p) * pi1[i]));
    } else {
      w.gamma[i] = -p / ((1.0 - p) * pi1[i]);
    }
  }
  return w;
}

Weights weights_general(std::span<const int> a, std::span<const double> p_hat, std::span<const double> q,
                        std::span<const double> target_p, std::span<const double> target_q, double frac_s,
                        double frac_t) {
  if (a.size() != p_hat.size() || a.size() != q.size() || target_p.size() != target_q.size())
    throw ArgumentError("estimator", "weight input lengths differ");
  const double ratio = frac_s / frac_t;
  Weights w;
  w.gamma.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double shift = ratio * (q[i] / (1.0 - q[i]));
    w.gamma[i] = a[i] == 1 ? shift / p_hat[i] : -shift / (1.0 - p_hat[i]);
  }
  w.target_gap.resize(target_p.size());
  for (std::size_t j = 0; j < target_p.size(); ++j) {
    const double shift = ratio * (target_q[j] / (1.0 - target_q[j]));
    w.target_gap[j] = shift * (1.0 / target_p[j] + 1.0 / (1.0 - target_p[j]));
  }
  return w;
}

Weights compute_weights(const NuisanceFits& fits, std::span<const int> a) {
  switch (fits.kind) {
    case EstimandKind::IATE: return weights_iate(a, fits.p_hat);
    case EstimandKind::IATT: {
      std::vector<double> pi(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) pi[i] = fits.pi1_of_row(i);
      return weights_iatt(a, fits.p_hat, pi);
    }
    case EstimandKind::GENERAL: {
      const double n = static_cast<double>(a.size());
      const double m = static_cast<double>(fits.target_g1.size());
      return weights_general(a, fits.p_hat, fits.q_source, fits.target_p, fits.target_q, n / (n + m), m / (n + m));
    }
  }
  throw ArgumentError("estimator", "unknown estimand");
}

VarianceCi variance_ci(std::span<const double> psi, double tau_hat, std::size_t n) {
  if (n < 2) throw ArgumentError("estimator", "variance needs at least 2 observations");
  if (psi.empty()) throw ArgumentError("estimator", "no influence values");
  std::vector<double> sq(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i) sq[i] = (psi[i] - tau_hat) * (psi[i] - tau_hat);
  VarianceCi v;
  v.variance = kernels::sum(sq) / static_cast<double>(psi.size());
  v.se = std::sqrt(v.variance / static_cast<double>(n));
  v.lo = tau_hat - kZ95 * v.se;
  v.hi = tau_hat + kZ95 * v.se;
  return v;
}

namespace {

EffectEstimate finish(EstimandKind kind, std::vector<double> psi) {
  EffectEstimate e;
  e.kind = kind;
  e.n = psi.size();
  e.tau_hat = kernels::sum(psi) / static_cast<double>(psi.size());
  if (psi.size() >= 2) {
    const auto v = variance_ci(psi, e.tau_hat, psi.size());
    e.variance_hat = v.variance;
    e.se = v.se;
    e.ci_lo = v.lo;
    e.ci_hi = v.hi;
  } else {
    e.ci_lo = e.ci_hi = e.tau_hat;
  }
  for (auto& v : psi) v -= e.tau_hat;
  e.influence = std::move(psi);
  return e;
}

}  // namespace

EffectEstimate estimate_dr(const NuisanceFits& fits, const Weights& weights, std::span<const double> y,
                           std::span<const int> a) {
  const std::size_t n = y.size();
  if (n == 0 || a.size() != n || fits.g_obs.size() != n || fits.g1.size() != n || fits.g0.size() != n ||
      weights.gamma.size() != n)
    throw ArgumentError("estimator", "nuisance, weight and data lengths differ");

  std::vector<double> psi;
  switch (fits.kind) {
    case EstimandKind::IATE: {
      psi.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        psi[i] = fits.g1[i] - fits.g0[i] + weights.gamma[i] * (y[i] - fits.g_obs[i]);
      break;
    }
    case EstimandKind::IATT: {
      const auto m = static_cast<std::size_t>(std::count(a.begin(), a.end(), 1));
      if (m == 0) throw ValidationError("estimator", "IATT needs at least one treated row");
      const double scale = static_cast<double>(n) / static_cast<double>(m);
      psi.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        psi[i] = (a[i] == 1 ? scale * (fits.g1[i] - fits.g0[i]) : 0.0) + weights.gamma[i] * (y[i] - fits.g_obs[i]);
      break;
    }
    case EstimandKind::GENERAL: {
      const std::size_t m = fits.target_g1.size();
      if (m == 0 || fits.target_g0.size() != m) throw ValidationError("estimator", "empty target sample");
      const double total = static_cast<double>(n + m);
      const double src = total / static_cast<double>(n);
      const double tgt = total / static_cast<double>(m);
      psi.resize(n + m);
      for (std::size_t i = 0; i < n; ++i) psi[i] = src * weights.gamma[i] * (y[i] - fits.g_obs[i]);
      for (std::size_t j = 0; j < m; ++j) psi[n + j] = tgt * (fits.target_g1[j] - fits.target_g0[j]);
      break;
    }
  }
  auto est = finish(fits.kind, std::move(psi));

  auto& d = est.diagnostics;
  const auto& probs = fits.p_raw.size() == n ? fits.p_raw : fits.p_hat;
  if (probs.size() == n) {
    const auto [lo, hi] = std::minmax_element(probs.begin(), probs.end());
    d.p_min = *lo;
    d.p_max = *hi;
    const auto clipped = std::count_if(probs.begin(), probs.end(), [&](double p) { return fits.clip.clips(p); });
    d.clipped_frac = static_cast<double>(clipped) / static_cast<double>(n);
  }
  d.pi1 = fits.pi1;
  d.folds_downgraded = fits.plan.downgraded;
  return est;
}

EffectEstimate estimate_naive(std::span<const double> y, std::span<const int> a) {
  if (y.empty() || y.size() != a.size()) throw ArgumentError("estimator", "naive estimate needs equal, non-empty inputs");
  std::vector<double> psi(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) psi[i] = (2 * a[i] - 1) * y[i];
  return finish(EstimandKind::IATE, std::move(psi));
}

EffectEstimate estimate_naive(const Dataset& data) { return estimate_naive(data.y(), data.a()); }

DrRun run_dr(const Dataset& data, const Estimand& estimand, const ModelSpec& outcome, const ModelSpec& propensity,
             const CrossfitOptions& options) {
  DrRun r;
  r.fits = crossfit_nuisances(data, estimand, outcome, propensity, options);
  r.weights = compute_weights(r.fits, data.a());
  r.estimate = estimate_dr(r.fits, r.weights, data.y(), data.a());
  return r;
}

}  // namespace isoeffect
