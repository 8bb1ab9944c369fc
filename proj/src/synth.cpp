#include "isoeffect/synth.hpp"

#include "isoeffect/error.hpp"
#include "isoeffect/kernels.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <map>
#include <random>

namespace isoeffect {

std::string_view to_string(OutcomeForm form) { return form == OutcomeForm::Linear ? "linear" : "nonlinear"; }

std::string_view to_string(OracleMethod method) {
  switch (method) {
    case OracleMethod::Auto: return "auto";
    case OracleMethod::ClosedForm: return "closed_form";
    case OracleMethod::Enumeration: return "enumeration";
    case OracleMethod::MonteCarlo: return "monte_carlo";
  }
  return "unknown";
}

SynthSpec SynthSpec::resolved() const {
  SynthSpec s = *this;
  if (s.marginals.empty()) s.marginals.assign(s.d + 1, 0.5);
  if (s.beta.empty()) {
    s.beta.resize(s.d);
    for (std::size_t j = 0; j < s.d; ++j) {
      const double mag = s.d == 1 ? 0.5 : 0.2 + 0.6 * static_cast<double>(j) / static_cast<double>(s.d - 1);
      s.beta[j] = j % 2 == 0 ? mag : -mag;
    }
  }
  return s;
}

void SynthSpec::validate() const {
  if (n < 1) throw ArgumentError("synth", "n must be at least 1");
  if (d < 1) throw ArgumentError("synth", "d must be at least 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw ArgumentError("synth", "rho must lie in [0, 1)");
  if (!marginals.empty()) {
    if (marginals.size() != d + 1) throw ArgumentError("synth", "marginals need d + 1 entries (treatment first)");
    for (double p : marginals)
      if (!(p > 0.0 && p < 1.0)) throw ArgumentError("synth", "marginal rates must lie in (0, 1)");
  }
  if (!beta.empty() && beta.size() != d) throw ArgumentError("synth", "beta needs d entries");
  if (!(noise_sd >= 0.0)) throw ArgumentError("synth", "noise_sd must be non-negative");
  if (form == OutcomeForm::Nonlinear && !interaction)
    throw ArgumentError("synth", "nonlinear outcome requires an interaction");
  if (interaction && interaction->feature >= d) throw ArgumentError("synth", "interaction feature out of range");
  if (mc_samples < 1) throw ArgumentError("synth", "mc_samples must be positive");
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  try {
    SynthSpec s;
    s.n = j.value("n", s.n);
    s.d = j.value("d", s.d);
    s.rho = j.value("rho", s.rho);
    if (j.contains("marginals")) s.marginals = j.at("marginals").get<std::vector<double>>();
    s.beta0 = j.value("beta0", s.beta0);
    s.beta_a = j.value("beta_a", s.beta_a);
    if (j.contains("beta")) s.beta = j.at("beta").get<std::vector<double>>();
    if (j.contains("interaction") && !j.at("interaction").is_null()) {
      const auto& it = j.at("interaction");
      s.interaction = Interaction{it.at("feature").get<std::size_t>(), it.at("strength").get<double>()};
    }
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.seed = j.value("seed", s.seed);
    if (j.contains("outcome_form")) {
      const auto f = j.at("outcome_form").get<std::string>();
      if (f == "linear" || f == "LINEAR") s.form = OutcomeForm::Linear;
      else if (f == "nonlinear" || f == "NONLINEAR") s.form = OutcomeForm::Nonlinear;
      else throw ArgumentError("synth", "unknown outcome_form '" + f + "'");
    }
    s.mc_samples = j.value("mc_samples", s.mc_samples);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("synth", std::string("invalid synth spec: ") + e.what());
  }
}

nlohmann::json SynthSpec::to_json() const {
  const auto r = resolved();
  nlohmann::json j{{"n", r.n},           {"d", r.d},           {"rho", r.rho},
                   {"marginals", r.marginals}, {"beta0", r.beta0}, {"beta_a", r.beta_a},
                   {"beta", r.beta},     {"noise_sd", r.noise_sd}, {"seed", r.seed},
                   {"outcome_form", to_string(r.form)}, {"mc_samples", r.mc_samples}};
  j["interaction"] = r.interaction ? nlohmann::json{{"feature", r.interaction->feature},
                                                    {"strength", r.interaction->strength}}
                                   : nlohmann::json(nullptr);
  return j;
}

namespace {

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> thresholds(const SynthSpec& s) {
  const boost::math::normal_distribution<double> z;
  std::vector<double> t(s.marginals.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = boost::math::quantile(z, 1.0 - s.marginals[k]);
  return t;
}

// One latent row: bits[0..d] from the shared factor and idiosyncratic draws.
template <typename Rng>
void draw_bits(Rng& rng, std::normal_distribution<double>& gauss, double sr, double si, const std::vector<double>& t,
               std::vector<int>& bits) {
  const double w = gauss(rng);
  for (std::size_t k = 0; k < t.size(); ++k) bits[k] = sr * w + si * gauss(rng) > t[k] ? 1 : 0;
}

// Integral over w of phi(w) * prod_k P(bit_k = bits[k] | w). Entries of
// `bits` below zero are marginalized out.
double latent_integral(const SynthSpec& s, const std::vector<double>& t, std::span<const int> bits) {
  const double sr = std::sqrt(s.rho);
  const double si = std::sqrt(1.0 - s.rho);
  auto f = [&](double w) {
    double v = std::exp(-0.5 * w * w) / std::sqrt(2.0 * M_PI);
    for (std::size_t k = 0; k < bits.size(); ++k) {
      if (bits[k] < 0) continue;
      const double on = phi_cdf((sr * w - t[k]) / si);
      v *= bits[k] == 1 ? on : 1.0 - on;
    }
    return v;
  };
  if (s.rho == 0.0) return f(0.0) * std::sqrt(2.0 * M_PI);
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -12.0, 12.0, 15, 1e-14);
}

}  // namespace

SynthFeatures gen_features(const SynthSpec& spec_in) {
  spec_in.validate();
  const auto s = spec_in.resolved();
  const auto t = thresholds(s);
  const double sr = std::sqrt(s.rho);
  const double si = std::sqrt(1.0 - s.rho);
  SynthFeatures out;
  out.a.assign(s.n, 0);
  out.features.resize(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(s.d));
  const std::size_t blocks = (s.n + kernels::kBlockRows - 1) / kernels::kBlockRows;
  const auto root = derive_seed(s.seed, "features");
  kernels::parallel_for(blocks, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(root, b));
    std::normal_distribution<double> gauss;
    std::vector<int> bits(s.d + 1);
    const std::size_t end = std::min(s.n, (b + 1) * kernels::kBlockRows);
    for (std::size_t i = b * kernels::kBlockRows; i < end; ++i) {
      draw_bits(rng, gauss, sr, si, t, bits);
      out.a[i] = bits[0];
      for (std::size_t k = 0; k < s.d; ++k)
        out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = bits[k + 1];
    }
  });
  return out;
}

double outcome_mean(const SynthSpec& spec_in, int a, const Matrix& features, Eigen::Index row) {
  SynthSpec filled;
  const SynthSpec& spec = spec_in.beta.empty() ? (filled = spec_in.resolved()) : spec_in;
  const auto& beta = spec.beta;
  double lin = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) lin += beta[k] * features(row, static_cast<Eigen::Index>(k));
  double g = spec.beta0 + spec.beta_a * a + lin;
  if (spec.interaction)
    g += spec.interaction->strength * a * features(row, static_cast<Eigen::Index>(spec.interaction->feature));
  if (spec.form == OutcomeForm::Nonlinear) g += 0.5 * lin * lin;
  return g;
}

std::vector<double> gen_outcome(const SynthSpec& spec_in, std::span<const int> a, const Matrix& features) {
  spec_in.validate();
  const auto s = spec_in.resolved();
  if (a.size() != static_cast<std::size_t>(features.rows()) || static_cast<std::size_t>(features.cols()) != s.d)
    throw ArgumentError("synth", "treatment/feature shapes do not match the spec");
  const std::size_t n = a.size();
  std::vector<double> y(n);
  const std::size_t blocks = (n + kernels::kBlockRows - 1) / kernels::kBlockRows;
  const auto root = derive_seed(s.seed, "noise");
  kernels::parallel_for(blocks, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(root, b));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t end = std::min(n, (b + 1) * kernels::kBlockRows);
    for (std::size_t i = b * kernels::kBlockRows; i < end; ++i) {
      const double eps = gauss(rng);
      y[i] = outcome_mean(s, a[i], features, static_cast<Eigen::Index>(i)) + s.noise_sd * eps;
    }
  });
  return y;
}

Dataset generate(const SynthSpec& spec) {
  auto f = gen_features(spec);
  auto y = gen_outcome(spec, f.a, f.features);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < spec.d; ++k) names.push_back("x_" + std::to_string(k));
  return Dataset(std::move(y), std::move(f.a), std::move(f.features), std::move(names));
}

nlohmann::json Oracle::to_json() const {
  return {{"tau_iate", tau_iate},
          {"tau_iatt", tau_iatt},
          {"method", to_string(method)},
          {"mc_samples", mc_samples},
          {"mc_se", std::max(mc_se_iate, mc_se_iatt)},
          {"mc_se_iate", mc_se_iate},
          {"mc_se_iatt", mc_se_iatt}};
}

double cell_probability(const SynthSpec& spec_in, std::span<const int> bits) {
  const auto s = spec_in.resolved();
  if (bits.size() != s.d + 1) throw ArgumentError("synth", "cell needs d + 1 bits");
  return latent_integral(s, thresholds(s), bits);
}

std::vector<double> true_propensity(const SynthSpec& spec_in, const Matrix& features) {
  spec_in.validate();
  const auto s = spec_in.resolved();
  if (static_cast<std::size_t>(features.cols()) != s.d) throw ArgumentError("synth", "feature width differs from d");
  const auto t = thresholds(s);
  std::map<std::vector<int>, double> cache;
  std::vector<double> p(static_cast<std::size_t>(features.rows()));
  std::vector<int> bits(s.d + 1);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (std::size_t k = 0; k < s.d; ++k) {
      const double v = features(i, static_cast<Eigen::Index>(k));
      if (v != 0.0 && v != 1.0) throw ValidationError("synth", "true propensity needs binary features", static_cast<std::size_t>(i) + 1);
      bits[k + 1] = static_cast<int>(v);
    }
    bits[0] = -1;
    auto it = cache.find(bits);
    if (it == cache.end()) {
      const double den = latent_integral(s, t, bits);
      auto num_bits = bits;
      num_bits[0] = 1;
      const double num = latent_integral(s, t, num_bits);
      it = cache.emplace(bits, num / den).first;
    }
    p[static_cast<std::size_t>(i)] = it->second;
  }
  return p;
}

namespace {

McTally tally_shard(const SynthSpec& s, const std::vector<double>& t, std::size_t feature, std::size_t count,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  const double sr = std::sqrt(s.rho);
  const double si = std::sqrt(1.0 - s.rho);
  std::vector<int> bits(s.d + 1);
  McTally m;
  m.draws = count;
  for (std::size_t i = 0; i < count; ++i) {
    draw_bits(rng, gauss, sr, si, t, bits);
    m.treated += static_cast<std::uint64_t>(bits[0]);
    m.feature_on += static_cast<std::uint64_t>(bits[feature + 1]);
    m.both_on += static_cast<std::uint64_t>(bits[0] & bits[feature + 1]);
  }
  return m;
}

}  // namespace

McTally mc_tally(const SynthSpec& spec_in, std::size_t feature, std::size_t samples) {
  const auto s = spec_in.resolved();
  const auto t = thresholds(s);
  const auto root = derive_seed(s.seed, "oracle");
  const std::size_t shards = (samples + kMcShard - 1) / kMcShard;
  std::vector<McTally> parts(shards);
  kernels::parallel_for(shards, [&](std::size_t k) {
    const std::size_t count = std::min(kMcShard, samples - k * kMcShard);
    parts[k] = tally_shard(s, t, feature, count, derive_seed(root, k));
  });
  McTally total;
  for (const auto& p : parts) total += p;
  return total;
}

McTally mc_tally_serial(const SynthSpec& spec_in, std::size_t feature, std::size_t samples) {
  const auto s = spec_in.resolved();
  const auto t = thresholds(s);
  const auto root = derive_seed(s.seed, "oracle");
  McTally total;
  for (std::size_t k = 0; k * kMcShard < samples; ++k)
    total += tally_shard(s, t, feature, std::min(kMcShard, samples - k * kMcShard), derive_seed(root, k));
  return total;
}

Oracle oracle_tau(const SynthSpec& spec_in, OracleMethod method) {
  spec_in.validate();
  const auto s = spec_in.resolved();
  if (method == OracleMethod::Auto) {
    if (!s.interaction) method = OracleMethod::ClosedForm;
    else method = s.d <= 15 ? OracleMethod::Enumeration : OracleMethod::MonteCarlo;
  }
  Oracle o;
  o.method = method;
  if (method == OracleMethod::ClosedForm) {
    if (s.interaction) throw ArgumentError("synth", "closed-form oracle requires no interaction");
    o.tau_iate = o.tau_iatt = s.beta_a;
    return o;
  }
  const double eta = s.interaction ? s.interaction->strength : 0.0;
  const std::size_t j = s.interaction ? s.interaction->feature : 0;

  if (method == OracleMethod::Enumeration) {
    if (s.d > 20) throw ArgumentError("synth", "enumeration limited to d <= 20");
    const auto t = thresholds(s);
    const std::size_t cells = std::size_t{1} << (s.d + 1);
    std::vector<double> prob(cells);
    kernels::parallel_for(cells, [&](std::size_t c) {
      std::vector<int> bits(s.d + 1);
      for (std::size_t k = 0; k <= s.d; ++k) bits[k] = static_cast<int>((c >> k) & 1u);
      prob[c] = latent_integral(s, t, bits);
    });
    double e_j = 0.0, treated = 0.0, both = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      const bool a = c & 1u;
      const bool on = (c >> (j + 1)) & 1u;
      if (on) e_j += prob[c];
      if (a) treated += prob[c];
      if (a && on) both += prob[c];
    }
    o.tau_iate = s.beta_a + eta * e_j;
    o.tau_iatt = s.beta_a + eta * both / treated;
    return o;
  }

  const auto m = mc_tally(s, j, s.mc_samples);
  const double nd = static_cast<double>(m.draws);
  const double pj = static_cast<double>(m.feature_on) / nd;
  const double nt = static_cast<double>(m.treated);
  const double rj = m.treated ? static_cast<double>(m.both_on) / nt : 0.0;
  o.mc_samples = m.draws;
  o.tau_iate = s.beta_a + eta * pj;
  o.tau_iatt = s.beta_a + eta * rj;
  o.mc_se_iate = std::abs(eta) * std::sqrt(pj * (1.0 - pj) / nd);
  o.mc_se_iatt = m.treated ? std::abs(eta) * std::sqrt(rj * (1.0 - rj) / nt) : 0.0;
  return o;
}

}  // namespace isoeffect
