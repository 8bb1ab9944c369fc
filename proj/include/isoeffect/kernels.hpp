#pragma once

// Hot inner loops, each in two flavours: an OpenMP-parallel version used by
// the library and a plain serial reference kept for tests and benchmarks.
//
// Floating-point reductions in the parallel versions accumulate over fixed
// row blocks (kBlockRows) and combine block partials in block order, so the
// result does not depend on the thread count or scheduling.

#include <Eigen/Dense>

#include <cstdint>
#include <exception>
#include <span>
#include <vector>

namespace isoeffect::kernels {

inline constexpr std::size_t kBlockRows = 2048;

// Number of threads parallel regions may use; <= 0 restores the OpenMP default.
void set_thread_cap(int threads);
int thread_cap();

// Reads ISOEFFECT_THREADS and applies it; returns the effective cap.
int apply_thread_env();

double sum(std::span<const double> v);
double sum_serial(std::span<const double> v);

// Weighted cross products G = X' diag(w) X and b = X' diag(w) z.
// Empty `w` means unit weights. Only column-major X is supported.
struct CrossProducts {
  Eigen::MatrixXd gram;
  Eigen::VectorXd xtz;
};

CrossProducts weighted_cross_products(const Eigen::MatrixXd& x, std::span<const double> w,
                                      std::span<const double> z);
CrossProducts weighted_cross_products_serial(const Eigen::MatrixXd& x, std::span<const double> w,
                                             std::span<const double> z);

// Feature bins stored column-major: bins[f * n_rows + i].
struct BinnedMatrix {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<std::uint8_t> bins;
  std::vector<std::uint16_t> bin_counts;  // number of bins per feature

  std::uint8_t at(std::size_t row, std::size_t feature) const noexcept {
    return bins[feature * n_rows + row];
  }
};

// Gradient histogram over `rows`: entry (f, b) holds the sums of grad and
// hess and the row count falling into bin b of feature f. Layout is
// f * 256 + b.
struct Histogram {
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<std::uint32_t> count;

  explicit Histogram(std::size_t n_features = 0)
      : grad(n_features * 256, 0.0), hess(n_features * 256, 0.0), count(n_features * 256, 0) {}
};

Histogram build_histogram(const BinnedMatrix& x, std::span<const std::uint32_t> rows,
                          std::span<const double> grad, std::span<const double> hess);
Histogram build_histogram_serial(const BinnedMatrix& x, std::span<const std::uint32_t> rows,
                                 std::span<const double> grad, std::span<const double> hess);

// Runs fn(i) for i in [0, n) across OpenMP threads. The first exception
// thrown by any iteration is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr failure;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(isoeffect_parallel_for)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace isoeffect::kernels
