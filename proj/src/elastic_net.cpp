#include "isoeffect/elastic_net.hpp"

#include "isoeffect/error.hpp"
#include "isoeffect/kernels.hpp"

#include <algorithm>
#include <map>
#include <cmath>

namespace isoeffect {

namespace {

double soft_threshold(double x, double t) noexcept {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double penalty(const Vector& v, double strength, double l1_ratio) {
  return strength * (l1_ratio * v.cwiseAbs().sum() + 0.5 * (1.0 - l1_ratio) * v.squaredNorm());
}

double log1pexp(double t) noexcept { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

}  // namespace

double sigmoid(double t) noexcept {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const auto p = x.cols();
  const double n = static_cast<double>(x.rows());
  s.mean = Vector::Zero(p);
  s.scale = Vector::Ones(p);
  s.active.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double m = x.col(j).sum() / n;
    const double var = (x.col(j).array() - m).square().sum() / n;
    s.mean(j) = m;
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(m))) {
      s.scale(j) = sd;
      s.active[static_cast<std::size_t>(j)] = true;
    }
  }
  return s;
}

Matrix Standardizer::transform(const Matrix& x) const {
  Matrix z(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (active[static_cast<std::size_t>(j)])
      z.col(j) = (x.col(j).array() - mean(j)) / scale(j);
    else
      z.col(j).setZero();
  }
  return z;
}

double LinearModel::score(const Matrix& x, Eigen::Index row) const {
  return intercept + x.row(row).dot(coef);
}

Vector LinearModel::scores(const Matrix& x) const {
  return (x * coef).array() + intercept;
}

ElasticNetProblem::ElasticNetProblem(const Matrix& x, std::span<const double> y)
    : n_(static_cast<std::size_t>(x.rows())), std_(Standardizer::fit(x)) {
  if (y.size() != n_) throw ArgumentError("nuisance", "outcome length does not match design rows");
  if (n_ == 0) throw ArgumentError("nuisance", "empty design");
  const Matrix z = std_.transform(x);
  double ysum = 0.0;
  for (double v : y) ysum += v;
  y_mean_ = ysum / static_cast<double>(n_);
  std::vector<double> yc(n_);
  for (std::size_t i = 0; i < n_; ++i) yc[i] = y[i] - y_mean_;
  auto cp = kernels::weighted_cross_products(z, {}, yc);
  gram_ = cp.gram / static_cast<double>(n_);
  xty_ = cp.xtz / static_cast<double>(n_);
  double ss = 0.0;
  for (double v : yc) ss += v * v;
  y_ss_ = ss / static_cast<double>(n_);
}

LinearModel ElasticNetProblem::to_model(const Vector& v) const {
  LinearModel m;
  m.coef = Vector::Zero(v.size());
  m.intercept = y_mean_;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (!std_.active[static_cast<std::size_t>(j)]) continue;
    m.coef(j) = v(j) / std_.scale(j);
    m.intercept -= m.coef(j) * std_.mean(j);
  }
  return m;
}

ElasticNetProblem::Solution ElasticNetProblem::solve(double alpha, double l1_ratio, const Vector* warm,
                                                     double tol, int max_sweeps) const {
  if (alpha < 0 || l1_ratio < 0 || l1_ratio > 1)
    throw ArgumentError("nuisance", "elastic net needs alpha >= 0 and l1_ratio in [0,1]");
  const auto p = gram_.cols();
  std::vector<Eigen::Index> act;
  for (Eigen::Index j = 0; j < p; ++j)
    if (std_.active[static_cast<std::size_t>(j)]) act.push_back(j);

  auto objective = [&](const Vector& v) {
    return 0.5 * y_ss_ - xty_.dot(v) + 0.5 * v.dot(gram_ * v) + penalty(v, alpha, l1_ratio);
  };

  Solution sol;
  Vector v = Vector::Zero(p);
  const auto k = static_cast<Eigen::Index>(act.size());

  if (k > 0 && (alpha == 0.0 || l1_ratio == 0.0)) {
    // Closed form on the active block: (G + alpha I) v = c.
    Matrix g(k, k);
    Vector c(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      c(a) = xty_(act[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < k; ++b)
        g(a, b) = gram_(act[static_cast<std::size_t>(a)], act[static_cast<std::size_t>(b)]);
      g(a, a) += alpha;
    }
    if (alpha == 0.0) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
      const auto ev = eig.eigenvalues();
      if (ev.minCoeff() <= 1e-10 * std::max(1.0, ev.maxCoeff())) {
        sol.singular = true;
        sol.model = to_model(v);
        sol.standardized = v;
        return sol;
      }
    }
    const Vector s = g.ldlt().solve(c);
    for (Eigen::Index a = 0; a < k; ++a) v(act[static_cast<std::size_t>(a)]) = s(a);
    sol.trace.iterations = 1;
    sol.trace.converged = true;
    sol.trace.objective.push_back(objective(v));
  } else if (k > 0) {
    if (warm && warm->size() == p) v = *warm;
    Vector q = gram_ * v;
    const double l1 = alpha * l1_ratio;
    const double l2 = alpha * (1.0 - l1_ratio);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      double max_delta = 0.0;
      for (auto j : act) {
        const double old = v(j);
        const double gjj = gram_(j, j);
        const double r = xty_(j) - (q(j) - gjj * old);
        const double upd = soft_threshold(r, l1) / (gjj + l2);
        const double delta = upd - old;
        if (delta != 0.0) {
          v(j) = upd;
          q += gram_.col(j) * delta;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      sol.trace.iterations = sweep + 1;
      sol.trace.objective.push_back(objective(v));
      if (max_delta < tol) {
        sol.trace.converged = true;
        break;
      }
    }
  } else {
    sol.trace.converged = true;
    sol.trace.objective.push_back(objective(v));
  }
  sol.model = to_model(v);
  sol.standardized = v;
  return sol;
}

double elastic_net_objective(const Matrix& x, std::span<const double> y, const LinearModel& model,
                             const Standardizer& std, double alpha, double l1_ratio) {
  const Vector s = model.scores(x);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double r = y[static_cast<std::size_t>(i)] - s(i);
    loss += r * r;
  }
  loss /= 2.0 * static_cast<double>(x.rows());
  const Vector v = model.coef.cwiseProduct(std.scale);
  return loss + penalty(v, alpha, l1_ratio);
}

LogisticProblem::LogisticProblem(const Matrix& x, std::span<const int> a)
    : n_(static_cast<std::size_t>(x.rows())), std_(Standardizer::fit(x)) {
  if (a.size() != n_) throw ArgumentError("nuisance", "label length does not match design rows");
  const Matrix z = std_.transform(x);
  // Group identical rows, keeping first-occurrence order.
  std::map<std::vector<double>, std::size_t> seen;
  std::vector<std::size_t> first;
  std::vector<double> key(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) key[static_cast<std::size_t>(j)] = z(i, j);
    auto [it, fresh] = seen.emplace(key, first.size());
    if (fresh) {
      first.push_back(static_cast<std::size_t>(i));
      count_.push_back(0.0);
      positive_.push_back(0.0);
    }
    count_[it->second] += 1.0;
    positive_[it->second] += a[static_cast<std::size_t>(i)];
  }
  design_.resize(static_cast<Eigen::Index>(first.size()), x.cols() + 1);
  design_.col(0).setOnes();
  for (std::size_t u = 0; u < first.size(); ++u)
    design_.row(static_cast<Eigen::Index>(u)).tail(x.cols()) = z.row(static_cast<Eigen::Index>(first[u]));
}

double LogisticProblem::scaled_objective(const Vector& params, double c, double l1_ratio) const {
  const Vector eta = design_ * params;
  double loss = 0.0;
  for (std::size_t u = 0; u < count_.size(); ++u) {
    const double t = eta(static_cast<Eigen::Index>(u));
    loss += count_[u] * log1pexp(t) - positive_[u] * t;
  }
  loss /= static_cast<double>(n_);
  const double lambda = 1.0 / (c * static_cast<double>(n_));
  return loss + penalty(params.tail(params.size() - 1), lambda, l1_ratio);
}

LogisticProblem::Solution LogisticProblem::solve(double c, double l1_ratio, const Vector* warm, double tol,
                                                 int max_newton) const {
  if (!(c > 0) || l1_ratio < 0 || l1_ratio > 1)
    throw ArgumentError("nuisance", "logistic elastic net needs C > 0 and l1_ratio in [0,1]");
  const auto p1 = design_.cols();
  const double n = static_cast<double>(n_);
  const double lambda = 1.0 / (c * n);
  const double l1 = lambda * l1_ratio;
  const double l2 = lambda * (1.0 - l1_ratio);

  std::vector<Eigen::Index> act{0};
  for (Eigen::Index j = 1; j < p1; ++j)
    if (std_.active[static_cast<std::size_t>(j - 1)]) act.push_back(j);

  Vector params = Vector::Zero(p1);
  if (warm && warm->size() == p1) {
    params = *warm;
  } else {
    double mean = 0.0;
    for (double v : positive_) mean += v;
    mean = std::clamp(mean / n, 1e-6, 1.0 - 1e-6);
    params(0) = std::log(mean / (1.0 - mean));
  }

  Solution sol;
  double obj = scaled_objective(params, c, l1_ratio);
  const std::size_t rows = count_.size();
  std::vector<double> w(rows), z(rows);
  for (int it = 0; it < max_newton; ++it) {
    const Vector eta = design_ * params;
    for (std::size_t u = 0; u < rows; ++u) {
      const double e = eta(static_cast<Eigen::Index>(u));
      const double pr = sigmoid(e);
      const double wi = count_[u] * std::max(pr * (1.0 - pr), 1e-10);
      w[u] = wi;
      z[u] = e + (positive_[u] - count_[u] * pr) / wi;
    }
    auto cp = kernels::weighted_cross_products(design_, w, z);
    const Matrix h = cp.gram / n;
    const Vector g = cp.xtz / n;

    Vector next = params;
    if (l1 == 0.0) {
      const auto k = static_cast<Eigen::Index>(act.size());
      Matrix hk(k, k);
      Vector gk(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        gk(a) = g(act[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < k; ++b)
          hk(a, b) = h(act[static_cast<std::size_t>(a)], act[static_cast<std::size_t>(b)]);
        if (a > 0) hk(a, a) += l2;
      }
      const Vector s = hk.ldlt().solve(gk);
      next.setZero();
      for (Eigen::Index a = 0; a < k; ++a) next(act[static_cast<std::size_t>(a)]) = s(a);
    } else {
      Vector q = h * next;
      for (int sweep = 0; sweep < 10000; ++sweep) {
        double max_delta = 0.0;
        for (auto j : act) {
          const double old = next(j);
          const double hjj = h(j, j);
          const double r = g(j) - (q(j) - hjj * old);
          const double upd = j == 0 ? r / hjj : soft_threshold(r, l1) / (hjj + l2);
          const double delta = upd - old;
          if (delta != 0.0) {
            next(j) = upd;
            q += h.col(j) * delta;
            max_delta = std::max(max_delta, std::abs(delta));
          }
        }
        if (max_delta < tol * 0.1) break;
      }
    }

    const Vector dir = next - params;
    double step = 1.0;
    double cand_obj = scaled_objective(params + dir, c, l1_ratio);
    while (cand_obj > obj && step > 1e-12) {
      step *= 0.5;
      cand_obj = scaled_objective(params + step * dir, c, l1_ratio);
    }
    const double max_delta = (step * dir).cwiseAbs().maxCoeff();
    if (cand_obj <= obj) {
      params += step * dir;
      obj = cand_obj;
    }
    sol.trace.iterations = it + 1;
    sol.trace.objective.push_back(obj);
    if (max_delta < tol || cand_obj > obj) {
      sol.trace.converged = max_delta < tol;
      break;
    }
  }

  sol.standardized = params;
  sol.model.coef = Vector::Zero(p1 - 1);
  sol.model.intercept = params(0);
  for (Eigen::Index j = 1; j < p1; ++j) {
    if (!std_.active[static_cast<std::size_t>(j - 1)]) continue;
    const double wj = params(j) / std_.scale(j - 1);
    sol.model.coef(j - 1) = wj;
    sol.model.intercept -= wj * std_.mean(j - 1);
  }
  return sol;
}

double logistic_objective(const Matrix& x, std::span<const int> a, const LinearModel& model,
                          const Standardizer& std, double c, double l1_ratio) {
  const Vector s = model.scores(x);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    loss += log1pexp(s(i)) - a[static_cast<std::size_t>(i)] * s(i);
  const Vector v = model.coef.cwiseProduct(std.scale);
  return c * loss + 0.5 * (1.0 - l1_ratio) * v.squaredNorm() + l1_ratio * v.cwiseAbs().sum();
}

}  // namespace isoeffect
