#include "isoeffect/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace isoeffect::kernels {

namespace {

int default_threads = 0;

std::size_t block_count(std::size_t n) { return (n + kBlockRows - 1) / kBlockRows; }

}  // namespace

void set_thread_cap(int threads) {
  if (default_threads == 0) default_threads = omp_get_max_threads();
  omp_set_num_threads(threads > 0 ? threads : default_threads);
}

int thread_cap() { return omp_get_max_threads(); }

int apply_thread_env() {
  if (const char* env = std::getenv("ISOEFFECT_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t > 0) set_thread_cap(t);
    } catch (const std::exception&) {
      // Ignore unparsable values.
    }
  }
  return thread_cap();
}

double sum_serial(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double sum(std::span<const double> v) {
  const std::size_t nb = block_count(v.size());
  if (nb <= 1) return sum_serial(v);
  std::vector<double> partial(nb, 0.0);
  const auto nbi = static_cast<std::int64_t>(nb);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nbi; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlockRows;
    const std::size_t hi = std::min(v.size(), lo + kBlockRows);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    partial[static_cast<std::size_t>(b)] = s;
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

namespace {

// Accumulates the upper triangle of X[lo:hi]' W X[lo:hi] and X' W z.
void accumulate_block(const Eigen::MatrixXd& x, std::span<const double> w, std::span<const double> z,
                      std::size_t lo, std::size_t hi, double* gram, double* xtz) {
  const auto p = static_cast<std::size_t>(x.cols());
  const auto n = static_cast<std::size_t>(x.rows());
  const double* data = x.data();
  const bool weighted = !w.empty();
  for (std::size_t j = 0; j < p; ++j) {
    const double* xj = data + j * n;
    for (std::size_t k = j; k < p; ++k) {
      const double* xk = data + k * n;
      double s = 0.0;
      if (weighted)
        for (std::size_t i = lo; i < hi; ++i) s += xj[i] * xk[i] * w[i];
      else
        for (std::size_t i = lo; i < hi; ++i) s += xj[i] * xk[i];
      gram[j * p + k] += s;
    }
    double s = 0.0;
    if (weighted)
      for (std::size_t i = lo; i < hi; ++i) s += xj[i] * z[i] * w[i];
    else
      for (std::size_t i = lo; i < hi; ++i) s += xj[i] * z[i];
    xtz[j] += s;
  }
}

CrossProducts finish(const std::vector<double>& gram, const std::vector<double>& xtz, std::size_t p) {
  CrossProducts out{Eigen::MatrixXd(p, p), Eigen::VectorXd(p)};
  for (std::size_t j = 0; j < p; ++j) {
    out.xtz(static_cast<Eigen::Index>(j)) = xtz[j];
    for (std::size_t k = j; k < p; ++k) {
      out.gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = gram[j * p + k];
      out.gram(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = gram[j * p + k];
    }
  }
  return out;
}

}  // namespace

CrossProducts weighted_cross_products_serial(const Eigen::MatrixXd& x, std::span<const double> w,
                                             std::span<const double> z) {
  const auto p = static_cast<std::size_t>(x.cols());
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<double> gram(p * p, 0.0), xtz(p, 0.0);
  // Row-at-a-time accumulation, the textbook order.
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    for (std::size_t j = 0; j < p; ++j) {
      const double xij = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * wi;
      for (std::size_t k = j; k < p; ++k)
        gram[j * p + k] += xij * x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      xtz[j] += xij * z[i];
    }
  }
  return finish(gram, xtz, p);
}

CrossProducts weighted_cross_products(const Eigen::MatrixXd& x, std::span<const double> w,
                                      std::span<const double> z) {
  const auto p = static_cast<std::size_t>(x.cols());
  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t nb = std::max<std::size_t>(1, block_count(n));
  std::vector<double> partial_gram(nb * p * p, 0.0), partial_xtz(nb * p, 0.0);
  const auto nbi = static_cast<std::int64_t>(nb);
#pragma omp parallel for schedule(static) if (nb > 1)
  for (std::int64_t b = 0; b < nbi; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlockRows;
    const std::size_t hi = std::min(n, lo + kBlockRows);
    accumulate_block(x, w, z, lo, hi, partial_gram.data() + static_cast<std::size_t>(b) * p * p,
                     partial_xtz.data() + static_cast<std::size_t>(b) * p);
  }
  std::vector<double> gram(p * p, 0.0), xtz(p, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t e = 0; e < p * p; ++e) gram[e] += partial_gram[b * p * p + e];
    for (std::size_t e = 0; e < p; ++e) xtz[e] += partial_xtz[b * p + e];
  }
  return finish(gram, xtz, p);
}

namespace {

void histogram_feature(const BinnedMatrix& x, std::size_t f, std::span<const std::uint32_t> rows,
                       std::span<const double> grad, std::span<const double> hess, Histogram& h) {
  const std::uint8_t* col = x.bins.data() + f * x.n_rows;
  double* hg = h.grad.data() + f * 256;
  double* hh = h.hess.data() + f * 256;
  std::uint32_t* hc = h.count.data() + f * 256;
  for (auto r : rows) {
    const auto b = col[r];
    hg[b] += grad[r];
    hh[b] += hess[r];
    ++hc[b];
  }
}

}  // namespace

Histogram build_histogram_serial(const BinnedMatrix& x, std::span<const std::uint32_t> rows,
                                 std::span<const double> grad, std::span<const double> hess) {
  Histogram h(x.n_features);
  for (std::size_t f = 0; f < x.n_features; ++f) histogram_feature(x, f, rows, grad, hess, h);
  return h;
}

Histogram build_histogram(const BinnedMatrix& x, std::span<const std::uint32_t> rows,
                          std::span<const double> grad, std::span<const double> hess) {
  Histogram h(x.n_features);
  const auto nf = static_cast<std::int64_t>(x.n_features);
  // Features are independent, so this matches the serial result bit for bit.
#pragma omp parallel for schedule(static) if (rows.size() * x.n_features > 65536)
  for (std::int64_t f = 0; f < nf; ++f)
    histogram_feature(x, static_cast<std::size_t>(f), rows, grad, hess, h);
  return h;
}

}  // namespace isoeffect::kernels
