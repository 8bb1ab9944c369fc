#include "doctest.h"

#include "isoeffect/error.hpp"
#include "isoeffect/gbt.hpp"

#include <random>

using namespace isoeffect;

namespace {

Matrix uniform(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  Matrix m(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) m(i, j) = u(rng);
  return m;
}

std::vector<double> smooth_target(const Matrix& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 0.1);
  std::vector<double> y(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    y[static_cast<std::size_t>(i)] = std::sin(3 * x(i, 0)) + x(i, 1) * x(i, 2) + z(rng);
  return y;
}

}  // namespace

TEST_CASE("constant target gives single-leaf trees at the mean") {
  const Matrix x = uniform(100, 3, 1);
  const std::vector<double> y(100, 2.5);
  GbtParams p;
  p.n_trees = 10;
  const auto m = fit_gbt(x, y, GbtLoss::Squared, p);
  CHECK(m.init == 2.5);
  for (const auto& t : m.trees) CHECK(t.leaf_count() == 1);
  const Vector pred = m.predict(uniform(20, 3, 2));
  CHECK((pred.array() == 2.5).all());
}

TEST_CASE("a single noiseless split is recovered") {
  const Matrix x = uniform(1000, 3, 3);
  std::vector<double> y(1000);
  for (Eigen::Index i = 0; i < 1000; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) > 0.5 ? 1.0 : 0.0;
  GbtParams p;
  p.max_depth = 1;
  p.n_trees = 50;
  for (auto loss : {GbtLoss::Squared, GbtLoss::Logistic}) {
    const auto m = fit_gbt(x, y, loss, p);
    const Vector pred = m.predict(x);
    double correct = 0;
    for (Eigen::Index i = 0; i < 1000; ++i) correct += ((pred(i) > 0.5) == (y[static_cast<std::size_t>(i)] == 1.0));
    CHECK(correct / 1000.0 >= 0.99);
    CHECK(m.trees.front().nodes.front().feature == 0);
  }
}

TEST_CASE("training loss is non-increasing without subsampling") {
  const Matrix x = uniform(500, 4, 4);
  const auto y = smooth_target(x, 5);
  GbtParams p;
  p.subsample = 1.0;
  p.n_trees = 80;
  p.max_depth = 3;
  const auto m = fit_gbt(x, y, GbtLoss::Squared, p);
  REQUIRE(m.train_loss.size() == 81);
  for (std::size_t t = 1; t < m.train_loss.size(); ++t) CHECK(m.train_loss[t] <= m.train_loss[t - 1]);

  std::vector<double> labels(500);
  for (std::size_t i = 0; i < 500; ++i) labels[i] = y[i] > 0.5 ? 1.0 : 0.0;
  const auto c = fit_gbt(x, labels, GbtLoss::Logistic, p);
  for (std::size_t t = 1; t < c.train_loss.size(); ++t)
    CHECK(c.train_loss[t] <= c.train_loss[t - 1] + 1e-12);
}

TEST_CASE("fits are deterministic in the seed") {
  const Matrix x = uniform(400, 3, 6);
  const auto y = smooth_target(x, 7);
  GbtParams p;
  p.seed = 99;
  p.n_trees = 30;
  const auto a = fit_gbt(x, y, GbtLoss::Squared, p);
  const auto b = fit_gbt(x, y, GbtLoss::Squared, p);
  CHECK((a.predict(x).array() == b.predict(x).array()).all());
  p.seed = 100;
  const auto c = fit_gbt(x, y, GbtLoss::Squared, p);
  CHECK_FALSE((a.predict(x).array() == c.predict(x).array()).all());
  CHECK(a.subsample == 0.7);
}

TEST_CASE("staged predictions match truncated ensembles") {
  const Matrix x = uniform(300, 3, 8);
  const auto y = smooth_target(x, 9);
  GbtParams p;
  p.n_trees = 40;
  const auto m = fit_gbt(x, y, GbtLoss::Squared, p);
  const std::vector<int> stages{0, 10, 25, 40, 5};
  const Matrix staged = m.staged_predict(x, stages);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const Vector direct = m.predict(x, stages[s]);
    CHECK((staged.col(static_cast<Eigen::Index>(s)) - direct).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK((m.predict(x, 0).array() == m.init).all());
}

TEST_CASE("boosting reduces error on a smooth target") {
  const Matrix x = uniform(2000, 3, 10);
  const auto y = smooth_target(x, 11);
  const Matrix xt = uniform(500, 3, 12);
  const auto yt = smooth_target(xt, 13);
  GbtParams p;
  p.n_trees = 200;
  const auto m = fit_gbt(x, y, GbtLoss::Squared, p);
  const Vector pred = m.predict(xt);
  double mse = 0, var = 0, mean = 0;
  for (double v : yt) mean += v / 500.0;
  for (std::size_t i = 0; i < 500; ++i) {
    mse += std::pow(yt[i] - pred(static_cast<Eigen::Index>(i)), 2) / 500.0;
    var += std::pow(yt[i] - mean, 2) / 500.0;
  }
  CHECK(mse < 0.2 * var);
}

TEST_CASE("binner thresholds separate distinct values") {
  Matrix x(6, 1);
  x << 1, 1, 2, 3, 3, 3;
  const auto b = FeatureBinner::fit(x);
  CHECK(b.thresholds(0) == std::vector<double>{1.5, 2.5});
  const auto bins = b.bin(x);
  CHECK(bins.at(0, 0) == 0);
  CHECK(bins.at(2, 0) == 1);
  CHECK(bins.at(5, 0) == 2);

  const Matrix wide = uniform(5000, 1, 14);
  const auto bw = FeatureBinner::fit(wide);
  CHECK(bw.thresholds(0).size() <= 255);
  CHECK(std::is_sorted(bw.thresholds(0).begin(), bw.thresholds(0).end()));
}

TEST_CASE("invalid hyperparameters") {
  const Matrix x = uniform(20, 2, 15);
  const std::vector<double> y(20, 1.0);
  GbtParams p;
  p.max_depth = 0;
  CHECK_THROWS_AS(fit_gbt(x, y, GbtLoss::Squared, p), ArgumentError);
  p = {};
  p.n_trees = 0;
  CHECK_THROWS_AS(fit_gbt(x, y, GbtLoss::Squared, p), ArgumentError);
  p = {};
  p.subsample = 0.0;
  CHECK_THROWS_AS(fit_gbt(x, y, GbtLoss::Squared, p), ArgumentError);
  p = {};
  p.learning_rate = 0.0;
  CHECK_THROWS_AS(fit_gbt(x, y, GbtLoss::Squared, p), ArgumentError);
  std::vector<double> bad(20, 0.5);
  CHECK_THROWS_AS(fit_gbt(x, bad, GbtLoss::Logistic, GbtParams{}), ValidationError);
}
