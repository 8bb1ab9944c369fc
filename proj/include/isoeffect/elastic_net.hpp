#pragma once

#include "isoeffect/core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace isoeffect {

// Column centering/scaling learned on a training matrix. Constant columns are
// marked inactive and keep a zero coefficient.
struct Standardizer {
  Vector mean;
  Vector scale;
  std::vector<bool> active;

  static Standardizer fit(const Matrix& x);
  // Centered and scaled copy; inactive columns become zero.
  Matrix transform(const Matrix& x) const;
};

// Affine predictor on the original feature scale.
struct LinearModel {
  double intercept = 0.0;
  Vector coef;

  double score(const Matrix& x, Eigen::Index row) const;
  Vector scores(const Matrix& x) const;
};

struct SolverTrace {
  int iterations = 0;
  bool converged = false;
  // Objective after each coordinate-descent sweep (linear) or Newton step (logistic).
  std::vector<double> objective;
};

// Squared-loss elastic net:
//   1/(2n) |y - b - X w|^2 + alpha * (l1_ratio |s.w|_1 + (1 - l1_ratio)/2 |s.w|^2)
// where s holds the training column standard deviations, so the penalty acts
// on standardized coefficients. The intercept is never penalized.
class ElasticNetProblem {
 public:
  ElasticNetProblem(const Matrix& x, std::span<const double> y);

  struct Solution {
    LinearModel model;
    Vector standardized;  // coefficients on the standardized scale
    SolverTrace trace;
    bool singular = false;  // zero penalty on a rank-deficient design
  };

  // Zero alpha is solved through the normal equations; `singular` is set
  // (and coefficients are undefined) when the design is rank deficient.
  Solution solve(double alpha, double l1_ratio, const Vector* warm = nullptr,
                 double tol = 1e-7, int max_sweeps = 100000) const;

  std::size_t rows() const noexcept { return n_; }
  const Standardizer& standardizer() const noexcept { return std_; }

 private:
  LinearModel to_model(const Vector& v) const;

  std::size_t n_;
  Standardizer std_;
  Matrix gram_;  // Z'Z / n
  Vector xty_;   // Z'(y - mean y) / n
  double y_mean_ = 0.0;
  double y_ss_ = 0.0;  // |y - mean y|^2 / n
};

double elastic_net_objective(const Matrix& x, std::span<const double> y, const LinearModel& model,
                             const Standardizer& std, double alpha, double l1_ratio);

// Logistic elastic net in the inverse-strength convention:
//   C * sum logloss + (1 - l1_ratio)/2 |s.w|^2 + l1_ratio |s.w|_1
// solved by proximal Newton with backtracking.
class LogisticProblem {
 public:
  LogisticProblem(const Matrix& x, std::span<const int> a);

  struct Solution {
    LinearModel model;
    Vector standardized;  // [intercept, standardized coefficients]
    SolverTrace trace;
  };

  Solution solve(double c, double l1_ratio, const Vector* warm = nullptr, double tol = 1e-7,
                 int max_newton = 100) const;

  std::size_t rows() const noexcept { return n_; }
  const Standardizer& standardizer() const noexcept { return std_; }

  // Objective divided by C*n at standardized parameters [b, v].
  double scaled_objective(const Vector& params, double c, double l1_ratio) const;

 private:
  std::size_t n_;
  Standardizer std_;
  // Distinct rows of [1, Z] with their multiplicity and number of positive
  // labels; the loss is a sum over rows, so duplicates collapse exactly.
  Matrix design_;
  std::vector<double> count_;
  std::vector<double> positive_;
};

double logistic_objective(const Matrix& x, std::span<const int> a, const LinearModel& model,
                          const Standardizer& std, double c, double l1_ratio);

double sigmoid(double t) noexcept;

}  // namespace isoeffect
