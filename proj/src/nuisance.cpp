#include "isoeffect/nuisance.hpp"

#include "isoeffect/error.hpp"
#include "isoeffect/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace isoeffect {

std::string_view to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::ElasticLinear: return "elastic_linear";
    case ModelFamily::ElasticLogistic: return "elastic_logistic";
    case ModelFamily::GbtReg: return "gbt_reg";
    case ModelFamily::GbtClf: return "gbt_clf";
  }
  return "unknown";
}

ModelFamily family_from_string(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "elastic_linear") return ModelFamily::ElasticLinear;
  if (s == "elastic_logistic") return ModelFamily::ElasticLogistic;
  if (s == "gbt_reg") return ModelFamily::GbtReg;
  if (s == "gbt_clf") return ModelFamily::GbtClf;
  throw ArgumentError("nuisance", "unknown model family '" + std::string(name) + "'");
}

bool is_classifier(ModelFamily family) noexcept {
  return family == ModelFamily::ElasticLogistic || family == ModelFamily::GbtClf;
}

double ClipPolicy::apply(double p) const noexcept { return std::clamp(p, epsilon, 1.0 - epsilon); }

bool ClipPolicy::clips(double p) const noexcept { return p < epsilon || p > 1.0 - epsilon; }

void ClipPolicy::validate() const {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw ArgumentError("nuisance", "clip epsilon must lie in [0, 0.5)");
}

nlohmann::json Candidate::to_json(ModelFamily family) const {
  switch (family) {
    case ModelFamily::ElasticLinear: return {{"alpha", alpha}, {"l1_ratio", l1_ratio}};
    case ModelFamily::ElasticLogistic: return {{"C", c}, {"l1_ratio", l1_ratio}};
    default: return {{"max_depth", max_depth}, {"n_trees", n_trees}, {"learning_rate", learning_rate}};
  }
}

ModelSpec ModelSpec::defaults(ModelFamily family) {
  ModelSpec s;
  s.family = family;
  const std::vector<double> l1{0.0, 0.1, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0};
  switch (family) {
    case ModelFamily::ElasticLinear:
      s.grid.l1_ratio = l1;
      s.grid.alpha = {0.0001, 0.001, 0.01, 0.1, 1.0};
      break;
    case ModelFamily::ElasticLogistic:
      s.grid.l1_ratio = l1;
      s.grid.c = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0};
      break;
    case ModelFamily::GbtReg:
    case ModelFamily::GbtClf:
      s.grid.max_depth = {2, 3};
      s.grid.n_trees = {100, 300};
      s.grid.learning_rate = {0.05, 0.1};
      s.grid.subsample = 0.7;
      break;
  }
  return s;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  try {
    ModelSpec s = defaults(family_from_string(j.at("family").get<std::string>()));
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      if (g.contains("alpha")) s.grid.alpha = g.at("alpha").get<std::vector<double>>();
      if (g.contains("l1_ratio")) s.grid.l1_ratio = g.at("l1_ratio").get<std::vector<double>>();
      if (g.contains("C")) s.grid.c = g.at("C").get<std::vector<double>>();
      if (g.contains("max_depth")) s.grid.max_depth = g.at("max_depth").get<std::vector<int>>();
      if (g.contains("n_trees")) s.grid.n_trees = g.at("n_trees").get<std::vector<int>>();
      if (g.contains("learning_rate")) s.grid.learning_rate = g.at("learning_rate").get<std::vector<double>>();
      if (g.contains("subsample")) s.grid.subsample = g.at("subsample").get<double>();
    }
    if (j.contains("inner_folds")) s.inner_folds = j.at("inner_folds").get<std::size_t>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("clip_epsilon")) s.clip.epsilon = j.at("clip_epsilon").get<double>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("nuisance", std::string("invalid model spec: ") + e.what());
  }
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json g = nlohmann::json::object();
  switch (family) {
    case ModelFamily::ElasticLinear:
      g["alpha"] = grid.alpha;
      g["l1_ratio"] = grid.l1_ratio;
      break;
    case ModelFamily::ElasticLogistic:
      g["C"] = grid.c;
      g["l1_ratio"] = grid.l1_ratio;
      break;
    default:
      g["max_depth"] = grid.max_depth;
      g["n_trees"] = grid.n_trees;
      g["learning_rate"] = grid.learning_rate;
      g["subsample"] = grid.subsample;
  }
  return {{"family", to_string(family)}, {"grid", g}, {"inner_folds", inner_folds},
          {"seed", seed}, {"clip_epsilon", clip.epsilon}};
}

std::vector<Candidate> ModelSpec::candidates() const {
  std::vector<Candidate> out;
  switch (family) {
    case ModelFamily::ElasticLinear:
      for (double r : grid.l1_ratio)
        for (double a : grid.alpha) out.push_back(Candidate{.alpha = a, .l1_ratio = r});
      break;
    case ModelFamily::ElasticLogistic:
      for (double r : grid.l1_ratio)
        for (double c : grid.c) out.push_back(Candidate{.l1_ratio = r, .c = c});
      break;
    default:
      for (int d : grid.max_depth)
        for (int t : grid.n_trees)
          for (double lr : grid.learning_rate)
            out.push_back(Candidate{.max_depth = d, .n_trees = t, .learning_rate = lr});
  }
  return out;
}

void ModelSpec::validate() const {
  if (inner_folds < 2) throw ArgumentError("nuisance", "inner_folds must be at least 2");
  clip.validate();
  auto nonempty = [](const auto& v, const char* name) {
    if (v.empty()) throw ArgumentError("nuisance", std::string("hyperparameter grid '") + name + "' is empty");
  };
  switch (family) {
    case ModelFamily::ElasticLinear:
      nonempty(grid.alpha, "alpha");
      nonempty(grid.l1_ratio, "l1_ratio");
      for (double a : grid.alpha)
        if (a < 0) throw ArgumentError("nuisance", "alpha must be non-negative");
      break;
    case ModelFamily::ElasticLogistic:
      nonempty(grid.c, "C");
      nonempty(grid.l1_ratio, "l1_ratio");
      for (double c : grid.c)
        if (!(c > 0)) throw ArgumentError("nuisance", "C must be positive");
      break;
    default:
      nonempty(grid.max_depth, "max_depth");
      nonempty(grid.n_trees, "n_trees");
      nonempty(grid.learning_rate, "learning_rate");
      for (int d : grid.max_depth)
        if (d < 1) throw ArgumentError("nuisance", "tree depth must be at least 1");
      for (int t : grid.n_trees)
        if (t < 1) throw ArgumentError("nuisance", "tree count must be at least 1");
      if (!(grid.subsample > 0 && grid.subsample <= 1))
        throw ArgumentError("nuisance", "subsample must lie in (0, 1]");
  }
  for (double r : grid.l1_ratio)
    if (r < 0 || r > 1) throw ArgumentError("nuisance", "l1_ratio must lie in [0, 1]");
}

bool more_regularized(ModelFamily family, const Candidate& a, const Candidate& b) {
  switch (family) {
    case ModelFamily::ElasticLinear:
      if (a.alpha != b.alpha) return a.alpha > b.alpha;
      return a.l1_ratio > b.l1_ratio;
    case ModelFamily::ElasticLogistic:
      if (a.c != b.c) return a.c < b.c;
      return a.l1_ratio > b.l1_ratio;
    default:
      if (a.n_trees != b.n_trees) return a.n_trees < b.n_trees;
      if (a.max_depth != b.max_depth) return a.max_depth < b.max_depth;
      return a.learning_rate < b.learning_rate;
  }
}

std::size_t cv_select(ModelFamily family, std::span<const Candidate> candidates, std::span<const double> scores) {
  if (candidates.empty()) throw ArgumentError("nuisance", "no hyperparameter candidates");
  if (scores.size() != candidates.size()) throw ArgumentError("nuisance", "score count does not match candidates");
  double best = std::numeric_limits<double>::infinity();
  for (double s : scores)
    if (std::isfinite(s)) best = std::min(best, s);
  if (!std::isfinite(best)) return 0;
  const double tol = 1e-12 * std::max(1.0, std::abs(best));
  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!(scores[i] <= best + tol)) continue;
    if (!pick || more_regularized(family, candidates[i], candidates[*pick])) pick = i;
  }
  return *pick;
}

Vector FittedModel::predict_unclipped(const Matrix& x) const {
  if (const auto* lin = std::get_if<LinearModel>(&params)) {
    Vector s = lin->scores(x);
    if (family == ModelFamily::ElasticLogistic) s = s.unaryExpr([](double v) { return sigmoid(v); });
    return s;
  }
  return std::get<GbtModel>(params).predict(x);
}

Vector FittedModel::predict(const Matrix& x) const {
  Vector p = predict_unclipped(x);
  if (is_classifier(family)) p = p.unaryExpr([this](double v) { return clip.apply(v); });
  return p;
}

nlohmann::json FittedModel::diagnostics() const {
  nlohmann::json j{{"family", to_string(family)}, {"chosen", chosen.to_json(family)}};
  j["cv_score"] = cv_score ? nlohmann::json(*cv_score) : nlohmann::json(nullptr);
  if (family == ModelFamily::GbtReg || family == ModelFamily::GbtClf) j["subsample"] = subsample;
  if (is_classifier(family)) j["clip_epsilon"] = clip.epsilon;
  j["warnings"] = warnings;
  return j;
}

Matrix append_treatment(const Matrix& features, std::span<const int> a) {
  Matrix out(features.rows(), features.cols() + 1);
  out.leftCols(features.cols()) = features;
  for (Eigen::Index i = 0; i < features.rows(); ++i) out(i, features.cols()) = a[static_cast<std::size_t>(i)];
  return out;
}

Matrix append_constant_treatment(const Matrix& features, double value) {
  Matrix out(features.rows(), features.cols() + 1);
  out.leftCols(features.cols()) = features;
  out.col(features.cols()).setConstant(value);
  return out;
}

namespace {

constexpr double kProbFloor = 1e-15;

double smallest_positive_alpha(const HyperGrid& grid) {
  double best = std::numeric_limits<double>::infinity();
  for (double a : grid.alpha)
    if (a > 0) best = std::min(best, a);
  return std::isfinite(best) ? best : 1e-6;
}

ElasticNetProblem::Solution solve_linear(const ElasticNetProblem& prob, const Candidate& cand, const HyperGrid& grid,
                                         const Vector* warm, bool* fell_back) {
  auto sol = prob.solve(cand.alpha, cand.l1_ratio, warm);
  if (sol.singular) {
    if (fell_back) *fell_back = true;
    sol = prob.solve(smallest_positive_alpha(grid), cand.l1_ratio, warm);
  }
  return sol;
}

double mean_squared_error(const Vector& pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - pred(static_cast<Eigen::Index>(i));
    s += r * r;
  }
  return s / static_cast<double>(y.size());
}

double mean_log_loss(const Vector& prob, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(prob(static_cast<Eigen::Index>(i)), kProbFloor, 1.0 - kProbFloor);
    s -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return s / static_cast<double>(y.size());
}

// Candidate indices grouped so consecutive entries can warm-start: same
// l1_ratio, from strongest to weakest penalty.
std::vector<std::size_t> warm_start_order(ModelFamily family, const std::vector<Candidate>& cands) {
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto& a = cands[i];
    const auto& b = cands[j];
    if (a.l1_ratio != b.l1_ratio) return a.l1_ratio < b.l1_ratio;
    return family == ModelFamily::ElasticLinear ? a.alpha > b.alpha : a.c < b.c;
  });
  return order;
}

// Per-candidate mean validation loss over the inner folds.
std::vector<double> inner_cv_scores(const Matrix& x, std::span<const double> target, const ModelSpec& spec,
                                    const std::vector<Candidate>& cands, const FoldPlan& plan) {
  const std::size_t k = plan.k;
  std::vector<std::vector<double>> fold_scores(k, std::vector<double>(cands.size(), 0.0));
  const auto order = warm_start_order(spec.family, cands);

  kernels::parallel_for(k, [&](std::size_t f) {
    const auto train = plan.complement_rows(f);
    const auto val = plan.fold_rows(f);
    const Matrix xt = take_rows(x, train);
    const Matrix xv = take_rows(x, val);
    const auto yt = take(target, train);
    const auto yv = take(target, val);
    auto& out = fold_scores[f];

    switch (spec.family) {
      case ModelFamily::ElasticLinear: {
        const ElasticNetProblem prob(xt, yt);
        Vector warm;
        double prev_ratio = -1.0;
        for (auto ci : order) {
          const auto& cand = cands[ci];
          const bool reuse = cand.l1_ratio == prev_ratio && warm.size() > 0;
          auto sol = solve_linear(prob, cand, spec.grid, reuse ? &warm : nullptr, nullptr);
          warm = sol.standardized;
          prev_ratio = cand.l1_ratio;
          out[ci] = mean_squared_error(sol.model.scores(xv), yv);
        }
        break;
      }
      case ModelFamily::ElasticLogistic: {
        Treatment at(yt.begin(), yt.end());
        const LogisticProblem prob(xt, at);
        Vector warm;
        double prev_ratio = -1.0;
        for (auto ci : order) {
          const auto& cand = cands[ci];
          const bool reuse = cand.l1_ratio == prev_ratio && warm.size() > 0;
          auto sol = prob.solve(cand.c, cand.l1_ratio, reuse ? &warm : nullptr);
          warm = sol.standardized;
          prev_ratio = cand.l1_ratio;
          const Vector pv = sol.model.scores(xv).unaryExpr([](double v) { return sigmoid(v); });
          out[ci] = mean_log_loss(pv, yv);
        }
        break;
      }
      case ModelFamily::GbtReg:
      case ModelFamily::GbtClf: {
        const auto loss = spec.family == ModelFamily::GbtReg ? GbtLoss::Squared : GbtLoss::Logistic;
        // One ensemble per (depth, rate) grown to the largest tree count and
        // evaluated at every requested stage.
        std::map<std::pair<int, double>, std::vector<std::size_t>> groups;
        for (std::size_t ci = 0; ci < cands.size(); ++ci)
          groups[{cands[ci].max_depth, cands[ci].learning_rate}].push_back(ci);
        for (const auto& [key, members] : groups) {
          int max_trees = 0;
          std::vector<int> stages;
          for (auto ci : members) {
            max_trees = std::max(max_trees, cands[ci].n_trees);
            stages.push_back(cands[ci].n_trees);
          }
          GbtParams gp{key.first, max_trees, key.second, spec.grid.subsample, 1,
                       derive_seed(derive_seed(spec.seed, "gbt-inner"), f)};
          const auto model = fit_gbt(xt, yt, loss, gp);
          const Matrix staged = model.staged_predict(xv, stages);
          for (std::size_t m = 0; m < members.size(); ++m) {
            const Vector col = staged.col(static_cast<Eigen::Index>(m));
            out[members[m]] = loss == GbtLoss::Squared ? mean_squared_error(col, yv) : mean_log_loss(col, yv);
          }
        }
        break;
      }
    }
  });

  std::vector<double> scores(cands.size(), 0.0);
  for (std::size_t f = 0; f < k; ++f)
    for (std::size_t c = 0; c < cands.size(); ++c) scores[c] += fold_scores[f][c];
  for (auto& s : scores) s /= static_cast<double>(k);
  return scores;
}

FittedModel refit(const Matrix& x, std::span<const double> target, const ModelSpec& spec, const Candidate& cand) {
  FittedModel m;
  m.family = spec.family;
  m.chosen = cand;
  m.clip = spec.clip;
  switch (spec.family) {
    case ModelFamily::ElasticLinear: {
      const ElasticNetProblem prob(x, target);
      bool fell_back = false;
      auto sol = solve_linear(prob, cand, spec.grid, nullptr, &fell_back);
      if (fell_back) {
        m.warnings.push_back("singular design with zero penalty; refit with alpha=" +
                             std::to_string(smallest_positive_alpha(spec.grid)));
        m.chosen.alpha = smallest_positive_alpha(spec.grid);
      }
      m.params = sol.model;
      break;
    }
    case ModelFamily::ElasticLogistic: {
      Treatment a(target.begin(), target.end());
      const LogisticProblem prob(x, a);
      m.params = prob.solve(cand.c, cand.l1_ratio).model;
      break;
    }
    default:
      return fit_gbt_model(x, target, spec.family, cand, spec.grid.subsample, derive_seed(spec.seed, "gbt-refit"));
  }
  return m;
}

FittedModel fit_with_search(const Matrix& x, std::span<const double> target, const ModelSpec& spec,
                            const FoldPlan* inner_plan) {
  const auto cands = spec.candidates();
  if (cands.size() == 1) return refit(x, target, spec, cands.front());
  const auto scores = inner_cv_scores(x, target, spec, cands, *inner_plan);
  const auto pick = cv_select(spec.family, cands, scores);
  auto m = refit(x, target, spec, cands[pick]);
  m.cv_score = scores[pick];
  m.cv_scores = scores;
  return m;
}

}  // namespace

FittedModel fit_gbt_model(const Matrix& features, std::span<const double> target, ModelFamily family,
                          const Candidate& hyper, double subsample, std::uint64_t seed) {
  if (family != ModelFamily::GbtReg && family != ModelFamily::GbtClf)
    throw ArgumentError("nuisance", "fit_gbt_model needs a boosted-tree family");
  GbtParams gp{hyper.max_depth, hyper.n_trees, hyper.learning_rate, subsample, 1, seed};
  FittedModel m;
  m.family = family;
  m.chosen = hyper;
  m.subsample = subsample;
  m.params = fit_gbt(features, target, family == ModelFamily::GbtReg ? GbtLoss::Squared : GbtLoss::Logistic, gp);
  return m;
}

FittedModel fit_outcome_model(const Matrix& features, std::span<const double> y, const ModelSpec& spec) {
  if (spec.family != ModelFamily::ElasticLinear && spec.family != ModelFamily::GbtReg)
    throw ArgumentError("nuisance", "outcome model family must be elastic_linear or gbt_reg");
  spec.validate();
  const auto n = static_cast<std::size_t>(features.rows());
  if (y.size() != n) throw ArgumentError("nuisance", "outcome length does not match feature rows");
  if (n < spec.inner_folds)
    throw ArgumentError("nuisance", "need at least inner_folds=" + std::to_string(spec.inner_folds) + " rows");

  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) {
    FittedModel m;
    m.family = spec.family;
    m.clip = spec.clip;
    LinearModel lin;
    lin.intercept = *lo;
    lin.coef = Vector::Zero(features.cols());
    m.params = lin;
    m.warnings.push_back("constant outcome; returning an intercept-only model");
    return m;
  }
  const auto plan = make_folds_unstratified(n, spec.inner_folds, derive_seed(spec.seed, "inner-folds"));
  return fit_with_search(features, y, spec, &plan);
}

FittedModel fit_propensity_model(const Matrix& features, std::span<const int> a, const ModelSpec& spec) {
  if (spec.family != ModelFamily::ElasticLogistic && spec.family != ModelFamily::GbtClf)
    throw ArgumentError("nuisance", "propensity model family must be elastic_logistic or gbt_clf");
  spec.validate();
  const auto n = static_cast<std::size_t>(features.rows());
  if (a.size() != n) throw ArgumentError("nuisance", "treatment length does not match feature rows");
  const auto treated = static_cast<std::size_t>(std::count(a.begin(), a.end(), 1));
  if (treated == 0 || treated == n)
    throw ValidationError("nuisance", "propensity model needs both classes present");
  if (n < spec.inner_folds)
    throw ArgumentError("nuisance", "need at least inner_folds=" + std::to_string(spec.inner_folds) + " rows");
  std::vector<double> target(a.begin(), a.end());
  const auto plan = make_folds(n, spec.inner_folds, a, derive_seed(spec.seed, "inner-folds"));
  auto m = fit_with_search(features, target, spec, &plan);
  m.clip = spec.clip;
  return m;
}

}  // namespace isoeffect
