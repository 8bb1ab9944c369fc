#pragma once

#include "isoeffect/core.hpp"
#include "isoeffect/elastic_net.hpp"
#include "isoeffect/gbt.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace isoeffect {

enum class ModelFamily { ElasticLinear, ElasticLogistic, GbtReg, GbtClf };

std::string_view to_string(ModelFamily family);
ModelFamily family_from_string(std::string_view name);
bool is_classifier(ModelFamily family) noexcept;

// Probabilities are mapped into [epsilon, 1 - epsilon].
struct ClipPolicy {
  double epsilon = 0.01;

  double apply(double p) const noexcept;
  bool clips(double p) const noexcept;
  void validate() const;
};

// One point of a hyperparameter grid. Only the fields of the owning family
// are meaningful.
struct Candidate {
  double alpha = 0.0;     // linear penalty strength
  double l1_ratio = 0.0;  // elastic-net mixing, 1 = lasso
  double c = 1.0;         // logistic inverse penalty strength
  int max_depth = 3;
  int n_trees = 100;
  double learning_rate = 0.1;

  nlohmann::json to_json(ModelFamily family) const;
};

struct HyperGrid {
  std::vector<double> alpha;
  std::vector<double> l1_ratio;
  std::vector<double> c;
  std::vector<int> max_depth;
  std::vector<int> n_trees;
  std::vector<double> learning_rate;
  double subsample = 0.7;
};

struct ModelSpec {
  ModelFamily family = ModelFamily::ElasticLinear;
  HyperGrid grid;
  std::size_t inner_folds = 5;
  std::uint64_t seed = 0;
  ClipPolicy clip;

  // Default grids: the elastic-net L1 ratios {0,.1,.5,.7,.9,.95,.99,1}, logistic
  // C {1e-3..100}, linear alpha {1e-4..1}, GBT depth {2,3} x trees {100,300} x
  // rate {.05,.1} with subsample 0.7.
  static ModelSpec defaults(ModelFamily family);
  static ModelSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Expanded grid in a fixed order.
  std::vector<Candidate> candidates() const;
  void validate() const;
};

// True when `a` is the more regularized (smaller) model of the two.
bool more_regularized(ModelFamily family, const Candidate& a, const Candidate& b);

// Index of the lowest mean score; near-ties (relative 1e-12) resolve to the
// most regularized candidate.
std::size_t cv_select(ModelFamily family, std::span<const Candidate> candidates,
                      std::span<const double> scores);

struct FittedModel {
  ModelFamily family = ModelFamily::ElasticLinear;
  Candidate chosen;
  // Mean inner-CV loss of the chosen candidate; absent when the grid had a
  // single candidate and no search was run.
  std::optional<double> cv_score;
  std::vector<double> cv_scores;
  std::variant<LinearModel, GbtModel> params;
  ClipPolicy clip;
  double subsample = 1.0;
  std::vector<std::string> warnings;

  // Regression prediction, or probability clipped by `clip`.
  Vector predict(const Matrix& x) const;
  Vector predict_unclipped(const Matrix& x) const;
  nlohmann::json diagnostics() const;
};

// Outcome model over features with the treatment appended as the last column.
FittedModel fit_outcome_model(const Matrix& features, std::span<const double> y, const ModelSpec& spec);

FittedModel fit_propensity_model(const Matrix& features, std::span<const int> a, const ModelSpec& spec);

// Single boosted ensemble at fixed hyperparameters.
FittedModel fit_gbt_model(const Matrix& features, std::span<const double> target, ModelFamily family,
                          const Candidate& hyper, double subsample, std::uint64_t seed);

// [features | a] as used by the outcome model.
Matrix append_treatment(const Matrix& features, std::span<const int> a);
Matrix append_constant_treatment(const Matrix& features, double value);

}  // namespace isoeffect
