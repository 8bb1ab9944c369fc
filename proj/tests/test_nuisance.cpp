#include "doctest.h"

#include "isoeffect/error.hpp"
#include "isoeffect/nuisance.hpp"
#include "isoeffect/synth.hpp"

#include <random>

using namespace isoeffect;

namespace {

ModelSpec single_linear(double alpha, double l1) {
  auto s = ModelSpec::defaults(ModelFamily::ElasticLinear);
  s.grid.alpha = {alpha};
  s.grid.l1_ratio = {l1};
  s.inner_folds = 2;
  return s;
}

Matrix bernoulli(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(0.5);
  Matrix m(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) m(i, j) = b(rng) ? 1.0 : 0.0;
  return m;
}

}  // namespace

TEST_CASE("zero-penalty outcome fit interpolates two points") {
  Matrix x(2, 1);
  x << 0, 1;
  const std::vector<double> y{0, 1};
  const auto m = fit_outcome_model(x, y, single_linear(0.0, 0.0));
  const auto& lin = std::get<LinearModel>(m.params);
  CHECK(std::abs(lin.coef(0) - 1.0) < 1e-8);
  CHECK(std::abs(lin.intercept) < 1e-8);
  CHECK_FALSE(m.cv_score.has_value());
  CHECK(m.warnings.empty());
}

TEST_CASE("constant outcome yields an intercept-only model") {
  const Matrix x = bernoulli(50, 3, 1);
  const std::vector<double> y(50, 5.0);
  const auto m = fit_outcome_model(x, y, ModelSpec::defaults(ModelFamily::ElasticLinear));
  const Vector p = m.predict(bernoulli(10, 3, 2));
  CHECK((p.array() == 5.0).all());
  CHECK(m.warnings.size() == 1);
  const auto g = fit_outcome_model(x, y, ModelSpec::defaults(ModelFamily::GbtReg));
  CHECK((g.predict(x).array() == 5.0).all());
}

TEST_CASE("singular design with zero penalty falls back to the smallest positive alpha") {
  Matrix x = bernoulli(60, 3, 3);
  x.col(2) = x.col(0);
  std::vector<double> y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) + 0.5 * x(i, 1);
  auto spec = single_linear(0.0, 0.5);
  spec.inner_folds = 3;
  const auto m = fit_outcome_model(x, y, spec);
  REQUIRE(m.warnings.size() == 1);
  CHECK(m.chosen.alpha > 0.0);
  const Vector p = m.predict(x);
  CHECK(p.allFinite());
  CHECK((p - Eigen::Map<const Vector>(y.data(), 60)).cwiseAbs().maxCoeff() < 1e-3);

  spec.grid.alpha = {0.0, 0.01, 0.5};
  const auto searched = fit_outcome_model(x, y, spec);
  CHECK(searched.predict(x).allFinite());
}

TEST_CASE("propensity model needs both classes") {
  const Matrix x = bernoulli(30, 2, 4);
  CHECK_THROWS_AS(fit_propensity_model(x, Treatment(30, 1), ModelSpec::defaults(ModelFamily::ElasticLogistic)),
                  ValidationError);
  CHECK_THROWS_AS(fit_propensity_model(x, Treatment(30, 0), ModelSpec::defaults(ModelFamily::GbtClf)),
                  ValidationError);
  CHECK_THROWS_AS(fit_propensity_model(x, Treatment(30, 0), ModelSpec::defaults(ModelFamily::ElasticLinear)),
                  ArgumentError);
  CHECK_THROWS_AS(fit_outcome_model(x, std::vector<double>(30, 1.0), ModelSpec::defaults(ModelFamily::GbtClf)),
                  ArgumentError);
}

TEST_CASE("feature-independent balanced treatment gives probabilities near one half") {
  const Matrix x = bernoulli(1000, 5, 5);
  Treatment a(1000);
  for (std::size_t i = 0; i < 1000; ++i) a[i] = static_cast<int>(i % 2);
  std::shuffle(a.begin(), a.end(), std::mt19937_64(6));
  const auto m = fit_propensity_model(x, a, ModelSpec::defaults(ModelFamily::ElasticLogistic));
  const Vector p = m.predict(x);
  CHECK(p.minCoeff() >= 0.45);
  CHECK(p.maxCoeff() <= 0.55);
}

TEST_CASE("separable data respects the clip bounds") {
  Matrix x(200, 1);
  Treatment a(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    x(i, 0) = static_cast<double>(i) / 200.0;
    a[static_cast<std::size_t>(i)] = i >= 100 ? 1 : 0;
  }
  for (auto family : {ModelFamily::ElasticLogistic, ModelFamily::GbtClf}) {
    auto spec = ModelSpec::defaults(family);
    spec.clip.epsilon = 0.01;
    if (family == ModelFamily::GbtClf) {
      spec.grid.n_trees = {100};
      spec.grid.max_depth = {2};
      spec.grid.learning_rate = {0.1};
    }
    const auto m = fit_propensity_model(x, a, spec);
    const Vector p = m.predict(x);
    CHECK(p.minCoeff() >= 0.01);
    CHECK(p.maxCoeff() <= 0.99);
    const Vector raw = m.predict_unclipped(x);
    CHECK(raw.minCoeff() < 0.01);
  }
}

TEST_CASE("logistic probabilities are monotone in the score and clipping keeps order") {
  SynthSpec s;
  s.n = 800;
  s.d = 3;
  s.seed = 7;
  const auto d = generate(s);
  const auto m = fit_propensity_model(d.features(), d.a(), ModelSpec::defaults(ModelFamily::ElasticLogistic));
  const auto& lin = std::get<LinearModel>(m.params);
  const Vector score = lin.scores(d.features());
  const Vector p = m.predict(d.features());
  for (Eigen::Index i = 0; i < score.size(); ++i)
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(score.size(), 50); ++j)
      if (score(i) < score(j)) CHECK(p(i) <= p(j));
}

TEST_CASE("default grids") {
  const auto lin = ModelSpec::defaults(ModelFamily::ElasticLinear);
  const auto log = ModelSpec::defaults(ModelFamily::ElasticLogistic);
  const std::vector<double> l1{0.0, 0.1, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0};
  CHECK(lin.grid.l1_ratio == l1);
  CHECK(log.grid.l1_ratio == l1);
  CHECK(log.grid.c == std::vector<double>{0.001, 0.01, 0.1, 1.0, 10, 100});
  CHECK(log.candidates().size() == 48);
  CHECK(lin.inner_folds == 5);
  CHECK(log.clip.epsilon == 0.01);

  const auto gbt = ModelSpec::defaults(ModelFamily::GbtReg);
  CHECK(gbt.grid.subsample == 0.7);
  CHECK(gbt.grid.max_depth == std::vector<int>{2, 3});
  CHECK(gbt.grid.n_trees == std::vector<int>{100, 300});
  CHECK(gbt.grid.learning_rate == std::vector<double>{0.05, 0.1});
  CHECK(gbt.candidates().size() == 8);
}

TEST_CASE("boosted-tree diagnostics report the row subsample") {
  const Matrix x = bernoulli(100, 2, 8);
  std::vector<double> y(100);
  for (Eigen::Index i = 0; i < 100; ++i) y[static_cast<std::size_t>(i)] = x(i, 0);
  auto spec = ModelSpec::defaults(ModelFamily::GbtReg);
  spec.grid.n_trees = {20};
  spec.grid.max_depth = {2};
  spec.grid.learning_rate = {0.1};
  const auto m = fit_outcome_model(x, y, spec);
  const auto diag = m.diagnostics();
  CHECK(diag.at("subsample").get<double>() == 0.7);
  CHECK(diag.at("family").get<std::string>() == "gbt_reg");
}

TEST_CASE("cv_select picks the minimum and breaks ties toward regularization") {
  const std::vector<Candidate> one{Candidate{.alpha = 0.3, .l1_ratio = 0.5}};
  const std::vector<double> s1{4.2};
  CHECK(cv_select(ModelFamily::ElasticLinear, one, s1) == 0);

  const std::vector<Candidate> two{Candidate{.alpha = 0.01}, Candidate{.alpha = 1.0}};
  const std::vector<double> tie{0.5, 0.5};
  CHECK(cv_select(ModelFamily::ElasticLinear, two, tie) == 1);
  const std::vector<double> clear{0.4, 0.5};
  CHECK(cv_select(ModelFamily::ElasticLinear, two, clear) == 0);

  const std::vector<Candidate> cs{Candidate{.c = 10.0}, Candidate{.c = 0.1}};
  CHECK(cv_select(ModelFamily::ElasticLogistic, cs, tie) == 1);

  const std::vector<Candidate> trees{Candidate{.max_depth = 3, .n_trees = 300}, Candidate{.max_depth = 2, .n_trees = 100}};
  CHECK(cv_select(ModelFamily::GbtReg, trees, tie) == 1);

  const std::vector<double> with_nan{std::nan(""), 0.7};
  CHECK(cv_select(ModelFamily::ElasticLinear, two, with_nan) == 1);
  CHECK_THROWS_AS(cv_select(ModelFamily::ElasticLinear, std::span<const Candidate>{}, std::span<const double>{}),
                  ArgumentError);
}

TEST_CASE("inner search is deterministic and reports its scores") {
  const auto d = generate(SynthSpec{.n = 600, .d = 4, .seed = 9});
  const Matrix xa = append_treatment(d.features(), d.a());
  const auto spec = ModelSpec::defaults(ModelFamily::ElasticLinear);
  const auto m1 = fit_outcome_model(xa, d.y(), spec);
  const auto m2 = fit_outcome_model(xa, d.y(), spec);
  REQUIRE(m1.cv_score.has_value());
  CHECK(m1.cv_scores.size() == spec.candidates().size());
  CHECK(*m1.cv_score == *std::min_element(m1.cv_scores.begin(), m1.cv_scores.end()));
  CHECK((m1.predict(xa).array() == m2.predict(xa).array()).all());
}

TEST_CASE("model spec JSON round trip and validation") {
  for (auto fam : {ModelFamily::ElasticLinear, ModelFamily::ElasticLogistic, ModelFamily::GbtReg, ModelFamily::GbtClf}) {
    auto s = ModelSpec::defaults(fam);
    s.seed = 77;
    s.inner_folds = 3;
    s.clip.epsilon = 0.05;
    const auto back = ModelSpec::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
    CHECK(back.candidates().size() == s.candidates().size());
  }
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"family", "svm"}}), ArgumentError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"family", "elastic_linear"}, {"inner_folds", 1}}), ArgumentError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"family", "elastic_linear"}, {"grid", {{"alpha", nlohmann::json::array()}}}}),
                  ArgumentError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"family", "elastic_logistic"}, {"grid", {{"C", {0.0}}}}}),
                  ArgumentError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"family", "gbt_clf"}, {"clip_epsilon", 0.5}}), ArgumentError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"family", "gbt_reg"}, {"grid", {{"max_depth", {0}}}}}),
                  ArgumentError);
  CHECK_THROWS_AS(ModelSpec::from_json(nlohmann::json{{"grid", 1}}), ArgumentError);
}

TEST_CASE("linear L1 ratio on linear synthetic data (reported, not asserted)") {
  const auto d = generate(SynthSpec{.n = 4000, .seed = 10});
  const Matrix xa = append_treatment(d.features(), d.a());
  const auto m = fit_outcome_model(xa, d.y(), ModelSpec::defaults(ModelFamily::ElasticLinear));
  MESSAGE("chosen linear l1_ratio = " << m.chosen.l1_ratio << ", alpha = " << m.chosen.alpha
                                     << " (published optimum 0.5)");
  CHECK(m.cv_score.has_value());
}
