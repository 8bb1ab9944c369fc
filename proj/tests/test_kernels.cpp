#include "doctest.h"

#include "isoeffect/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <stdexcept>

using namespace isoeffect;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

struct ThreadCapGuard {
  ~ThreadCapGuard() { kernels::set_thread_cap(0); }
};

}  // namespace

TEST_CASE("blocked sum matches the serial sum and is thread-count independent") {
  ThreadCapGuard guard;
  for (std::size_t n : {0u, 1u, 2047u, 2048u, 2049u, 50000u}) {
    const auto v = normals(n, n + 1);
    const double s = kernels::sum(v);
    CHECK(s == doctest::Approx(kernels::sum_serial(v)).epsilon(1e-12));
    kernels::set_thread_cap(1);
    const double one = kernels::sum(v);
    kernels::set_thread_cap(3);
    const double three = kernels::sum(v);
    kernels::set_thread_cap(0);
    CHECK(one == s);
    CHECK(three == s);
  }
}

TEST_CASE("weighted cross products match the serial reference and Eigen") {
  ThreadCapGuard guard;
  const std::size_t n = 5000, p = 6;
  const auto xs = normals(n * p, 1);
  Eigen::MatrixXd x = Eigen::Map<const Eigen::MatrixXd>(xs.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  auto w = normals(n, 2);
  for (auto& v : w) v = std::abs(v);
  const auto z = normals(n, 3);

  const auto par = kernels::weighted_cross_products(x, w, z);
  const auto ser = kernels::weighted_cross_products_serial(x, w, z);
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd ref_gram = x.transpose() * wv.asDiagonal() * x;
  const Eigen::VectorXd ref_xtz = x.transpose() * (wv.array() * zv.array()).matrix();

  CHECK((par.gram - ser.gram).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((par.gram - ref_gram).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((par.xtz - ref_xtz).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((par.gram - par.gram.transpose()).cwiseAbs().maxCoeff() == 0.0);

  const auto unit = kernels::weighted_cross_products(x, {}, z);
  CHECK((unit.gram - x.transpose() * x).cwiseAbs().maxCoeff() < 1e-9);

  kernels::set_thread_cap(1);
  const auto single = kernels::weighted_cross_products(x, w, z);
  CHECK((single.gram.array() == par.gram.array()).all());
  CHECK((single.xtz.array() == par.xtz.array()).all());
}

TEST_CASE("parallel histogram equals the serial histogram exactly") {
  const std::size_t n = 30000, f = 5;
  kernels::BinnedMatrix x;
  x.n_rows = n;
  x.n_features = f;
  x.bins.resize(n * f);
  x.bin_counts.assign(f, 256);
  std::mt19937_64 rng(9);
  for (auto& b : x.bins) b = static_cast<std::uint8_t>(rng() % 256);
  const auto g = normals(n, 10);
  const auto h = normals(n, 11);
  std::vector<std::uint32_t> rows;
  for (std::uint32_t i = 0; i < n; i += 2) rows.push_back(i);

  const auto par = kernels::build_histogram(x, rows, g, h);
  const auto ser = kernels::build_histogram_serial(x, rows, g, h);
  CHECK(par.grad == ser.grad);
  CHECK(par.hess == ser.hess);
  CHECK(par.count == ser.count);
  std::uint64_t total = 0;
  for (std::size_t b = 0; b < 256; ++b) total += par.count[b];
  CHECK(total == rows.size());
}

TEST_CASE("parallel_for visits every index and rethrows failures") {
  std::vector<int> hits(1000, 0);
  kernels::parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));

  CHECK_THROWS_AS(kernels::parallel_for(10,
                                        [](std::size_t i) {
                                          if (i == 7) throw std::runtime_error("boom");
                                        }),
                  std::runtime_error);
}

TEST_CASE("ISOEFFECT_THREADS caps the thread count") {
  ThreadCapGuard guard;
  ::setenv("ISOEFFECT_THREADS", "2", 1);
  CHECK(kernels::apply_thread_env() == 2);
  ::setenv("ISOEFFECT_THREADS", "junk", 1);
  CHECK(kernels::apply_thread_env() == 2);
  ::unsetenv("ISOEFFECT_THREADS");
  kernels::set_thread_cap(1);
  CHECK(kernels::thread_cap() == 1);
}
