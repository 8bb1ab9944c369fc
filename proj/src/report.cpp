#include "isoeffect/report.hpp"

#include "isoeffect/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace isoeffect {

double round12(double x) {
  if (!std::isfinite(x)) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

std::string format12(double x) {
  if (!std::isfinite(x)) return "";
  return nlohmann::json(round12(x)).dump();
}

void round_numbers(nlohmann::json& j) {
  if (j.is_number_float()) {
    j = round12(j.get<double>());
  } else if (j.is_structured()) {
    for (auto& v : j) round_numbers(v);
  }
}

std::string dump_report(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json estimate_report(const DrRun& run, const EffectEstimate& naive, const SensitivityReport& sens,
                               const ReportContext& ctx) {
  const auto& e = run.estimate;
  nlohmann::json outcome_models = nlohmann::json::array();
  nlohmann::json propensity_models = nlohmann::json::array();
  for (const auto& m : run.fits.outcome_models) outcome_models.push_back(m.diagnostics());
  for (const auto& m : run.fits.propensity_models) propensity_models.push_back(m.diagnostics());

  nlohmann::json j;
  j["estimand"] = to_string(e.kind);
  j["tau_hat"] = e.tau_hat;
  j["se"] = e.se;
  j["ci95"] = {e.ci_lo, e.ci_hi};
  j["n"] = e.n;
  j["k"] = ctx.k;
  j["seed"] = ctx.seed;
  j["naive_tau"] = naive.tau_hat;
  j["naive_se"] = naive.se;
  j["variance_hat"] = e.variance_hat;
  j["sigma2"] = sens.sigma2;
  j["nu2"] = sens.nu2;
  j["nu2_negative"] = sens.nu2_negative;
  j["rv"] = sens.rv ? nlohmann::json(*sens.rv) : nlohmann::json(nullptr);
  j["gamma2_plugin"] = sens.gamma2_plugin;
  if (!sens.bounds.empty()) {
    auto& b = j["bounds"] = nlohmann::json::array();
    for (const auto& x : sens.bounds)
      b.push_back({{"c_y", x.params.c_y}, {"c_d", x.params.c_d}, {"lo", x.lo}, {"hi", x.hi}});
  }
  j["diagnostics"] = {{"p_min", e.diagnostics.p_min},
                      {"p_max", e.diagnostics.p_max},
                      {"clipped_frac", e.diagnostics.clipped_frac},
                      {"pi1", e.diagnostics.pi1},
                      {"folds_downgraded", e.diagnostics.folds_downgraded},
                      {"outcome_models", outcome_models},
                      {"propensity_models", propensity_models}};
  if (e.kind == EstimandKind::GENERAL) j["m"] = run.fits.target_g1.size();
  round_numbers(j);
  return j;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, bool with_focal) {
  std::string out = with_focal ? "focal," : "";
  out += "dims,tau_hat,ci_lo,ci_hi,sigma2,nu2,rv\n";
  for (const auto& r : rows) {
    if (with_focal) out += csv_escape(r.focal) + ",";
    out += std::to_string(r.dims) + "," + format12(r.tau_hat) + "," + format12(r.ci_lo) + "," + format12(r.ci_hi) +
           "," + format12(r.sigma2) + "," + format12(r.nu2) + "," + (r.rv ? format12(*r.rv) : "") + "\n";
  }
  return out;
}

std::string contour_csv(const ContourGrid& grid, double tau_hat, double sigma2, double nu2) {
  std::string out = "cy,cd,lower_bound\n";
  for (std::size_t i = 0; i < grid.cy_axis.size(); ++i)
    for (std::size_t j = 0; j < grid.cd_axis.size(); ++j)
      out += format12(grid.cy_axis[i]) + "," + format12(grid.cd_axis[j]) + "," +
             format12(grid.lower_bound(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + "\n";
  const double s = std::sqrt(sigma2 * nu2);
  for (const auto& p : grid.calibration_points)
    out += format12(p.c_y) + "," + format12(p.c_d) + "," + format12(tau_hat - s * p.c_y * p.c_d) + "," +
           csv_escape(p.label) + "\n";
  return out;
}

nlohmann::json calibration_json(const std::string& label, const Calibration& c) {
  nlohmann::json j{{"label", label},
                   {"c_y", c.params.c_y},
                   {"c_d", c.params.c_d},
                   {"cd_clamped", c.cd_clamped},
                   {"tau_full", c.tau_full},
                   {"tau_reduced", c.tau_reduced},
                   {"sigma2_reduced", c.sigma2_reduced},
                   {"nu2_reduced", c.nu2_reduced}};
  j["bound"] = c.bound ? nlohmann::json(*c.bound) : nlohmann::json(nullptr);
  round_numbers(j);
  return j;
}

}  // namespace isoeffect
