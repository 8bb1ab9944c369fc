#include "doctest.h"

#include "isoeffect/core.hpp"
#include "isoeffect/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

using namespace isoeffect;

namespace {

Treatment random_treatment(std::size_t n, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(rate);
  Treatment a(n);
  for (auto& v : a) v = b(rng) ? 1 : 0;
  return a;
}

Dataset tiny() {
  Matrix x(3, 2);
  x << 0, 1, 2, 3, 4, 5;
  return Dataset({1.0, 2.0, 3.0}, {1, 0, 1}, x, {"x_0", "x_1"});
}

}  // namespace

TEST_CASE("dataset accepts consistent input") {
  const auto d = tiny();
  CHECK(d.size() == 3);
  CHECK(d.dims() == 2);
  CHECK(d.treated_count() == 2);
  CHECK(d.has_both_arms());
  CHECK(d.feature_names()[1] == "x_1");
  CHECK_FALSE(d.texts().has_value());
}

TEST_CASE("dataset rejects broken invariants") {
  Matrix x = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(Dataset({}, {}, Matrix(0, 1), {"x"}), ValidationError);
  CHECK_THROWS_AS(Dataset({1, 2}, {1}, x, {"x"}), ValidationError);
  CHECK_THROWS_AS(Dataset({1, 2}, {1, 0}, Matrix::Zero(3, 1), {"x"}), ValidationError);
  CHECK_THROWS_AS(Dataset({1, 2}, {1, 0}, x, {"x", "z"}), ValidationError);
  CHECK_THROWS_AS(Dataset({1, 2}, {1, 0}, x, {"x"}, std::vector<std::string>{"t"}), ValidationError);

  try {
    Dataset({1, 2}, {1, 2}, x, {"x"});
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    REQUIRE(e.row().has_value());
    CHECK(*e.row() == 2);
    CHECK(e.module() == "core");
  }

  CHECK_THROWS_AS(Dataset({1, std::nan("")}, {1, 0}, x, {"x"}), ValidationError);
  Matrix bad = x;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Dataset({1, 2}, {1, 0}, bad, {"x"}), ValidationError);
}

TEST_CASE("require_both_arms") {
  Dataset one_arm({1, 2}, {1, 1}, Matrix::Zero(2, 1), {"x"});
  CHECK_FALSE(one_arm.has_both_arms());
  CHECK_THROWS_AS(require_both_arms(one_arm, "estimator"), ValidationError);
  CHECK_NOTHROW(require_both_arms(tiny(), "estimator"));
}

TEST_CASE("with_features and permuted") {
  const auto d = tiny();
  const auto w = d.with_features(Matrix::Ones(3, 1), {"ones"});
  CHECK(w.dims() == 1);
  CHECK(w.y()[2] == 3.0);

  const std::vector<std::size_t> perm{2, 0, 1};
  const auto p = d.permuted(perm);
  CHECK(p.y()[0] == 3.0);
  CHECK(p.a()[1] == 1);
  CHECK(p.features()(0, 1) == 5.0);
  CHECK(p.features()(2, 0) == 2.0);
  CHECK_THROWS_AS(d.permuted(std::vector<std::size_t>{0, 1}), ArgumentError);
}

TEST_CASE("balanced n=10, k=5 puts one treated and one control row in every fold") {
  const Treatment a{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  const auto plan = make_folds(10, 5, a, 42);
  CHECK(plan.stratified);
  CHECK_FALSE(plan.downgraded);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto rows = plan.fold_rows(f);
    REQUIRE(rows.size() == 2);
    CHECK(a[rows[0]] + a[rows[1]] == 1);
  }
}

TEST_CASE("fold assignment is a pure function of its inputs") {
  const auto a = random_treatment(997, 0.3, 1);
  const auto p1 = make_folds(997, 5, a, 7);
  const auto p2 = make_folds(997, 5, a, 7);
  CHECK(p1.assignment == p2.assignment);
  const auto p3 = make_folds(997, 5, a, 8);
  CHECK(p1.assignment != p3.assignment);
}

TEST_CASE("folds partition the rows") {
  const std::size_t n = 1234;
  const auto a = random_treatment(n, 0.4, 2);
  for (std::size_t k : {2u, 3u, 5u, 10u}) {
    const auto plan = make_folds(n, k, a, 11);
    std::vector<int> seen(n, 0);
    std::size_t total = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const auto rows = plan.fold_rows(f);
      CHECK_FALSE(rows.empty());
      total += rows.size();
      for (auto r : rows) ++seen[r];
      const auto comp = plan.complement_rows(f);
      CHECK(comp.size() + rows.size() == n);
      for (auto r : comp) CHECK(plan.assignment[r] != f);
    }
    CHECK(total == n);
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST_CASE("stratified folds track the global treated fraction") {
  const std::size_t n = 2001;
  const auto a = random_treatment(n, 0.23, 3);
  const double global = static_cast<double>(std::count(a.begin(), a.end(), 1)) / static_cast<double>(n);
  const auto plan = make_folds(n, 5, a, 5);
  REQUIRE(plan.stratified);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto rows = plan.fold_rows(f);
    double t = 0;
    for (auto r : rows) t += a[r];
    const double frac = t / static_cast<double>(rows.size());
    CHECK(std::abs(frac - global) <= 1.0 / static_cast<double>(rows.size()));
  }
}

TEST_CASE("n=5000, k=5 gives 1000 rows per fold") {
  const auto a = random_treatment(5000, 0.5, 4);
  const auto plan = make_folds(5000, 5, a, 0);
  for (auto s : plan.fold_sizes()) CHECK(s == 1000);
}

TEST_CASE("make_folds errors and downgrade") {
  const Treatment a{1, 0, 1};
  CHECK_THROWS_AS(make_folds(3, 4, a, 0), ArgumentError);
  CHECK_THROWS_AS(make_folds(3, 1, a, 0), ArgumentError);
  CHECK_THROWS_AS(make_folds(3, 2, Treatment{1, 0}, 0), ArgumentError);

  // One control row cannot cover three folds.
  const Treatment skew{1, 1, 1, 1, 1, 0};
  const auto plan = make_folds(6, 3, skew, 9);
  CHECK(plan.downgraded);
  CHECK_FALSE(plan.stratified);
  for (auto s : plan.fold_sizes()) CHECK(s == 2);

  const auto off = make_folds(6, 3, skew, 9, false);
  CHECK_FALSE(off.downgraded);
  CHECK_FALSE(off.stratified);
}

TEST_CASE("unstratified folds are balanced in size") {
  const auto plan = make_folds_unstratified(11, 3, 1);
  auto sizes = plan.fold_sizes();
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{3, 4, 4});
}

TEST_CASE("estimand parsing and validation") {
  CHECK(estimand_from_string("iate") == EstimandKind::IATE);
  CHECK(estimand_from_string("IATT") == EstimandKind::IATT);
  CHECK(estimand_from_string("general") == EstimandKind::GENERAL);
  CHECK_THROWS_AS(estimand_from_string("ate"), ArgumentError);
  CHECK(to_string(EstimandKind::IATT) == "iatt");

  CHECK_NOTHROW(Estimand::iate().validate(3));
  CHECK_NOTHROW(Estimand::general(Matrix::Zero(4, 3)).validate(3));
  CHECK_THROWS_AS(Estimand::general(Matrix::Zero(4, 2)).validate(3), ValidationError);
  CHECK_THROWS_AS(Estimand::general(Matrix(0, 3)).validate(3), ValidationError);
  Estimand broken{EstimandKind::GENERAL, std::nullopt};
  CHECK_THROWS_AS(broken.validate(3), ValidationError);
}

TEST_CASE("derive_seed is stable and label sensitive") {
  CHECK(derive_seed(1, "folds") == derive_seed(1, "folds"));
  CHECK(derive_seed(1, "folds") != derive_seed(2, "folds"));
  CHECK(derive_seed(1, "folds") != derive_seed(1, "oracle"));
  CHECK(derive_seed(1, std::uint64_t{0}) != derive_seed(1, std::uint64_t{1}));
  std::set<std::uint64_t> distinct;
  for (std::uint64_t i = 0; i < 1000; ++i) distinct.insert(derive_seed(5, i));
  CHECK(distinct.size() == 1000);
}

TEST_CASE("take helpers gather by index") {
  Matrix m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  const std::vector<std::size_t> rows{2, 0};
  const Matrix t = take_rows(m, rows);
  CHECK(t(0, 0) == 5);
  CHECK(t(1, 1) == 2);
  const std::vector<double> v{10, 20, 30};
  CHECK(take(std::span<const double>(v), rows) == std::vector<double>{30, 10});
  const Treatment a{0, 1, 1};
  CHECK(take(std::span<const int>(a), rows) == Treatment{1, 0});
}
