#pragma once

#include "isoeffect/core.hpp"
#include "isoeffect/estimator.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace isoeffect {

struct SensitivityParams {
  double c_y = 0.0;
  double c_d = 0.0;

  void validate() const;
};

// Mean squared out-of-fold residual.
double sigma2_hat(std::span<const double> y, std::span<const double> g_obs);

// Debiased overlap: (2/m) sum target_gap - (1/n) sum gamma^2. May be negative.
double nu2_hat(const Weights& weights);

// Plug-in second moment (1/n) sum gamma^2.
double gamma_second_moment(std::span<const double> gamma);

// |tau| / sqrt(sigma2 * nu2); empty when nu2 <= 0. Throws DegenerateModelError
// when sigma2 <= 0.
std::optional<double> robustness_value(double tau_hat, double sigma2, double nu2);

// tau -/+ sqrt(sigma2 * nu2) * c_y * c_d. Throws DegenerateModelError when nu2 <= 0.
std::pair<double, double> ovb_bounds(double tau_hat, double sigma2, double nu2, const SensitivityParams& params);

struct BoundAt {
  SensitivityParams params;
  double lo = 0.0;
  double hi = 0.0;
};

struct SensitivityReport {
  double sigma2 = 0.0;
  double nu2 = 0.0;
  double gamma2_plugin = 0.0;
  bool nu2_negative = false;
  std::optional<double> rv;
  std::vector<BoundAt> bounds;
};

// Fidelity, overlap and robustness value from an estimate's out-of-fold
// quantities. Bounds are added for each requested pair when nu2 > 0.
SensitivityReport sensitivity_report(const NuisanceFits& fits, const Weights& weights, const EffectEstimate& estimate,
                                     std::span<const double> y, std::span<const SensitivityParams> at = {});

struct CalibrationPoint {
  std::string label;
  double c_y = 0.0;
  double c_d = 0.0;
};

struct ContourGrid {
  std::vector<double> cy_axis;
  std::vector<double> cd_axis;
  Matrix lower_bound;  // rows follow cy_axis, columns cd_axis
  std::vector<CalibrationPoint> calibration_points;
};

ContourGrid contour_grid(double tau_hat, double sigma2, double nu2, double cy_max, double cd_max, std::size_t steps);

struct Calibration {
  SensitivityParams params;
  bool cd_clamped = false;  // the C_D numerator was negative and set to 0
  double tau_full = 0.0;
  double tau_reduced = 0.0;
  double sigma2_reduced = 0.0;
  double nu2_reduced = 0.0;
  // sqrt(sigma2_reduced * nu2_reduced) * c_y * c_d, absent when nu2_reduced <= 0.
  std::optional<double> bound;
};

// C_Y and C_D from out-of-fold quantities of two runs on the same rows.
Calibration calibration_from_runs(std::span<const double> y, const DrRun& full, const DrRun& reduced);

// Refits the nuisances on `reduced_features` with the protocol used for
// `full` and compares. `reduced_estimand` carries the reduced target
// features for GENERAL.
Calibration calibrate_cy_cd(const Dataset& data, const DrRun& full, const Matrix& reduced_features,
                            const Estimand& reduced_estimand, const ModelSpec& outcome, const ModelSpec& propensity,
                            const CrossfitOptions& options);

}  // namespace isoeffect
