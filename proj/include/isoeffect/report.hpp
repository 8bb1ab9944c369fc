#pragma once

#include "isoeffect/estimator.hpp"
#include "isoeffect/sensitivity.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace isoeffect {

// Nearest double to the value printed with 12 significant digits.
double round12(double x);
// Text of round12(x) as it appears in JSON reports; CSV writers use the same
// text so a value prints identically in both.
std::string format12(double x);

// Rounds every floating-point number in place.
void round_numbers(nlohmann::json& j);

// Pretty-printed with a trailing newline.
std::string dump_report(const nlohmann::json& j);

struct ReportContext {
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

nlohmann::json estimate_report(const DrRun& run, const EffectEstimate& naive, const SensitivityReport& sens,
                               const ReportContext& ctx);

struct SweepRow {
  std::string focal;
  std::size_t dims = 0;
  double tau_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double sigma2 = 0.0;
  double nu2 = 0.0;
  std::optional<double> rv;
};

// `dims,tau_hat,ci_lo,ci_hi,sigma2,nu2,rv`, with a leading `focal` column
// when `with_focal` is set. A missing rv is an empty field.
std::string sweep_csv(const std::vector<SweepRow>& rows, bool with_focal);

// `cy,cd,lower_bound` grid rows, followed by one row per calibration point
// carrying the point's label as a fourth field.
std::string contour_csv(const ContourGrid& grid, double tau_hat, double sigma2, double nu2);

nlohmann::json calibration_json(const std::string& label, const Calibration& c);

}  // namespace isoeffect
