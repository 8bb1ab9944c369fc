#pragma once

#include "isoeffect/core.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace isoeffect {

enum class OutcomeForm { Linear, Nonlinear };
enum class OracleMethod { Auto, ClosedForm, Enumeration, MonteCarlo };

std::string_view to_string(OutcomeForm form);
std::string_view to_string(OracleMethod method);

struct Interaction {
  std::size_t feature = 0;  // index j into the feature columns
  double strength = 0.0;    // eta
};

// Correlated binary columns from an exchangeable latent Gaussian:
//   z_k = sqrt(rho) w + sqrt(1 - rho) u_k,   bit_k = 1{z_k > Phi^-1(1 - p_k)}
// with k = 0 the treatment and k = 1..d the features.
//
// Outcome:
//   linear:    y = b0 + b_a a + b'e [+ eta a e_j] + eps
//   nonlinear: y = b0 + b_a a + eta a e_j + b'e + 0.5 (b'e)^2 + eps
struct SynthSpec {
  std::size_t n = 5000;
  std::size_t d = 10;
  double rho = 0.6;
  std::vector<double> marginals;  // d + 1 rates, treatment first; empty = all 0.5
  double beta0 = 0.0;
  double beta_a = 1.0;
  std::vector<double> beta;  // d coefficients; empty = default pattern
  std::optional<Interaction> interaction;
  double noise_sd = 0.5;
  std::uint64_t seed = 0;
  OutcomeForm form = OutcomeForm::Linear;
  std::size_t mc_samples = 1'000'000;

  // Fills empty marginals / beta with defaults: rates 0.5, and coefficients
  // alternating in sign with magnitudes spaced evenly over [0.2, 0.8].
  SynthSpec resolved() const;
  void validate() const;

  static SynthSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SynthFeatures {
  Treatment a;
  Matrix features;
};

SynthFeatures gen_features(const SynthSpec& spec);
std::vector<double> gen_outcome(const SynthSpec& spec, std::span<const int> a, const Matrix& features);
// Noise-free conditional mean g(a, e).
double outcome_mean(const SynthSpec& spec, int a, const Matrix& features, Eigen::Index row);

// Dataset with feature names x_0..x_{d-1}.
Dataset generate(const SynthSpec& spec);

struct Oracle {
  double tau_iate = 0.0;
  double tau_iatt = 0.0;
  OracleMethod method = OracleMethod::ClosedForm;
  std::size_t mc_samples = 0;
  double mc_se_iate = 0.0;
  double mc_se_iatt = 0.0;

  nlohmann::json to_json() const;
};

// Auto picks the closed form when there is no interaction, enumeration of
// the 2^(d+1) cells when d <= 15, and Monte Carlo otherwise.
Oracle oracle_tau(const SynthSpec& spec, OracleMethod method = OracleMethod::Auto);

// Probability of one binary cell (bits[0] = a, bits[1..d] = e), integrated
// over the shared latent factor.
double cell_probability(const SynthSpec& spec, std::span<const int> bits);

// P(a = 1 | e) for every row of `features`.
std::vector<double> true_propensity(const SynthSpec& spec, const Matrix& features);

// Monte Carlo tallies over latent draws: treated count, sum of e_j, and the
// sum of a * e_j. Integer counts so sharded reductions are exact.
struct McTally {
  std::uint64_t draws = 0;
  std::uint64_t treated = 0;
  std::uint64_t feature_on = 0;
  std::uint64_t both_on = 0;

  McTally& operator+=(const McTally& o) {
    draws += o.draws;
    treated += o.treated;
    feature_on += o.feature_on;
    both_on += o.both_on;
    return *this;
  }
};

inline constexpr std::size_t kMcShard = 1 << 16;

McTally mc_tally(const SynthSpec& spec, std::size_t feature, std::size_t samples);
McTally mc_tally_serial(const SynthSpec& spec, std::size_t feature, std::size_t samples);

}  // namespace isoeffect
