#include "isoeffect/sensitivity.hpp"

#include "isoeffect/error.hpp"
#include "isoeffect/kernels.hpp"

#include <cmath>

namespace isoeffect {

void SensitivityParams::validate() const {
  if (!(c_y >= 0.0) || !(c_d >= 0.0)) throw ArgumentError("sensitivity", "C_Y and C_D must be non-negative");
}

double sigma2_hat(std::span<const double> y, std::span<const double> g_obs) {
  if (y.empty() || y.size() != g_obs.size()) throw ArgumentError("sensitivity", "residual inputs must match and be non-empty");
  std::vector<double> sq(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) sq[i] = (y[i] - g_obs[i]) * (y[i] - g_obs[i]);
  return kernels::sum(sq) / static_cast<double>(y.size());
}

double gamma_second_moment(std::span<const double> gamma) {
  if (gamma.empty()) throw ArgumentError("sensitivity", "empty weights");
  std::vector<double> sq(gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) sq[i] = gamma[i] * gamma[i];
  return kernels::sum(sq) / static_cast<double>(gamma.size());
}

double nu2_hat(const Weights& weights) {
  if (weights.target_gap.empty()) throw ArgumentError("sensitivity", "empty target sample");
  const double gap = kernels::sum(weights.target_gap) / static_cast<double>(weights.target_gap.size());
  return 2.0 * gap - gamma_second_moment(weights.gamma);
}

std::optional<double> robustness_value(double tau_hat, double sigma2, double nu2) {
  if (!(sigma2 > 0.0)) throw DegenerateModelError("sensitivity", "fidelity sigma^2 is zero; robustness value undefined");
  if (!(nu2 > 0.0)) return std::nullopt;
  return std::abs(tau_hat) / std::sqrt(sigma2 * nu2);
}

std::pair<double, double> ovb_bounds(double tau_hat, double sigma2, double nu2, const SensitivityParams& params) {
  params.validate();
  if (!(nu2 > 0.0)) throw DegenerateModelError("sensitivity", "overlap nu^2 is not positive; bounds undefined");
  if (sigma2 < 0.0) throw ArgumentError("sensitivity", "sigma^2 must be non-negative");
  const double half = std::sqrt(sigma2 * nu2) * params.c_y * params.c_d;
  return {tau_hat - half, tau_hat + half};
}

SensitivityReport sensitivity_report(const NuisanceFits& fits, const Weights& weights, const EffectEstimate& estimate,
                                     std::span<const double> y, std::span<const SensitivityParams> at) {
  SensitivityReport r;
  r.sigma2 = sigma2_hat(y, fits.g_obs);
  r.nu2 = nu2_hat(weights);
  r.gamma2_plugin = gamma_second_moment(weights.gamma);
  r.nu2_negative = !(r.nu2 > 0.0);
  if (r.sigma2 > 0.0) r.rv = robustness_value(estimate.tau_hat, r.sigma2, r.nu2);
  if (!r.nu2_negative) {
    for (const auto& p : at) {
      const auto [lo, hi] = ovb_bounds(estimate.tau_hat, r.sigma2, r.nu2, p);
      r.bounds.push_back({p, lo, hi});
    }
  }
  return r;
}

ContourGrid contour_grid(double tau_hat, double sigma2, double nu2, double cy_max, double cd_max, std::size_t steps) {
  if (!(cy_max > 0.0) || !(cd_max > 0.0)) throw ArgumentError("sensitivity", "contour ranges must be positive");
  if (steps < 2) throw ArgumentError("sensitivity", "contour needs at least 2 steps");
  if (!(nu2 > 0.0)) throw DegenerateModelError("sensitivity", "overlap nu^2 is not positive; bounds undefined");
  ContourGrid g;
  const double denom = static_cast<double>(steps - 1);
  for (std::size_t i = 0; i < steps; ++i) {
    g.cy_axis.push_back(cy_max * static_cast<double>(i) / denom);
    g.cd_axis.push_back(cd_max * static_cast<double>(i) / denom);
  }
  const double s = std::sqrt(sigma2 * nu2);
  g.lower_bound.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(steps));
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t j = 0; j < steps; ++j)
      g.lower_bound(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          tau_hat - s * g.cy_axis[i] * g.cd_axis[j];
  return g;
}

Calibration calibration_from_runs(std::span<const double> y, const DrRun& full, const DrRun& reduced) {
  const auto& gf = full.fits.g_obs;
  const auto& gr = reduced.fits.g_obs;
  if (gf.size() != y.size() || gr.size() != y.size())
    throw ArgumentError("sensitivity", "calibration runs do not cover the same rows");
  std::vector<double> diff(y.size()), resid(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    diff[i] = (gf[i] - gr[i]) * (gf[i] - gr[i]);
    resid[i] = (y[i] - gr[i]) * (y[i] - gr[i]);
  }
  Calibration c;
  const double resid_sum = kernels::sum(resid);
  c.params.c_y = resid_sum > 0.0 ? std::sqrt(kernels::sum(diff) / resid_sum) : 0.0;

  const double e_full = gamma_second_moment(full.weights.gamma);
  const double e_red = gamma_second_moment(reduced.weights.gamma);
  double num = e_full - e_red;
  if (num < 0.0) {
    c.cd_clamped = true;
    num = 0.0;
  }
  c.params.c_d = std::sqrt(num / e_red);

  c.tau_full = full.estimate.tau_hat;
  c.tau_reduced = reduced.estimate.tau_hat;
  c.sigma2_reduced = sigma2_hat(y, gr);
  c.nu2_reduced = nu2_hat(reduced.weights);
  if (c.nu2_reduced > 0.0)
    c.bound = std::sqrt(c.sigma2_reduced * c.nu2_reduced) * c.params.c_y * c.params.c_d;
  return c;
}

Calibration calibrate_cy_cd(const Dataset& data, const DrRun& full, const Matrix& reduced_features,
                            const Estimand& reduced_estimand, const ModelSpec& outcome, const ModelSpec& propensity,
                            const CrossfitOptions& options) {
  if (reduced_features.cols() == 0) throw ValidationError("sensitivity", "reduced representation has no columns");
  if (reduced_features.rows() != static_cast<Eigen::Index>(data.size()))
    throw ArgumentError("sensitivity", "reduced representation row count differs from the data");
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < reduced_features.cols(); ++j) names.push_back("r_" + std::to_string(j));
  const Dataset reduced = data.with_features(reduced_features, names);
  const DrRun red = run_dr(reduced, reduced_estimand, outcome, propensity, options);
  return calibration_from_runs(data.y(), full, red);
}

}  // namespace isoeffect
