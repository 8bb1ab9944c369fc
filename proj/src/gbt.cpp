#include "isoeffect/gbt.hpp"

#include "isoeffect/elastic_net.hpp"
#include "isoeffect/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace isoeffect {

FeatureBinner FeatureBinner::fit(const Matrix& x, std::size_t max_bins) {
  max_bins = std::clamp<std::size_t>(max_bins, 2, 256);
  FeatureBinner b;
  b.thresholds_.resize(static_cast<std::size_t>(x.cols()));
  std::vector<double> col;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    col.assign(x.col(j).data(), x.col(j).data() + x.rows());
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    auto& th = b.thresholds_[static_cast<std::size_t>(j)];
    if (col.size() <= max_bins) {
      for (std::size_t u = 0; u + 1 < col.size(); ++u) th.push_back(0.5 * (col[u] + col[u + 1]));
    } else {
      std::vector<double> sorted(x.col(j).data(), x.col(j).data() + x.rows());
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t q = 1; q < max_bins; ++q) {
        const std::size_t pos = q * sorted.size() / max_bins;
        const double t = sorted[std::min(pos, sorted.size() - 1)];
        if (th.empty() || t > th.back()) th.push_back(t);
      }
      if (!th.empty() && th.back() >= sorted.back()) th.pop_back();
    }
  }
  return b;
}

kernels::BinnedMatrix FeatureBinner::bin(const Matrix& x) const {
  kernels::BinnedMatrix out;
  out.n_rows = static_cast<std::size_t>(x.rows());
  out.n_features = thresholds_.size();
  out.bins.resize(out.n_rows * out.n_features);
  out.bin_counts.resize(out.n_features);
  for (std::size_t f = 0; f < out.n_features; ++f) {
    const auto& th = thresholds_[f];
    out.bin_counts[f] = static_cast<std::uint16_t>(th.size() + 1);
    for (std::size_t i = 0; i < out.n_rows; ++i) {
      const double v = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
      out.bins[f * out.n_rows + i] =
          static_cast<std::uint8_t>(std::lower_bound(th.begin(), th.end(), v) - th.begin());
    }
  }
  return out;
}

double Tree::predict(const Matrix& x, Eigen::Index row) const {
  int at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const auto& nd = nodes[static_cast<std::size_t>(at)];
    at = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(at)].value;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

Vector GbtModel::raw(const Matrix& x, int n_trees) const {
  const std::size_t use = n_trees < 0 ? trees.size() : std::min<std::size_t>(trees.size(), n_trees);
  Vector out = Vector::Constant(x.rows(), init);
  for (std::size_t t = 0; t < use; ++t)
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) += learning_rate * trees[t].predict(x, i);
  return out;
}

Vector GbtModel::predict(const Matrix& x, int n_trees) const {
  Vector r = raw(x, n_trees);
  if (loss == GbtLoss::Logistic) r = r.unaryExpr([](double v) { return sigmoid(v); });
  return r;
}

Matrix GbtModel::staged_predict(const Matrix& x, std::span<const int> stages) const {
  Matrix out(x.rows(), static_cast<Eigen::Index>(stages.size()));
  Vector acc = Vector::Constant(x.rows(), init);
  std::size_t done = 0;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto target = std::min<std::size_t>(trees.size(), static_cast<std::size_t>(std::max(stages[s], 0)));
    if (target < done) {
      acc = raw(x, static_cast<int>(target));
      done = target;
    }
    for (; done < target; ++done)
      for (Eigen::Index i = 0; i < x.rows(); ++i) acc(i) += learning_rate * trees[done].predict(x, i);
    out.col(static_cast<Eigen::Index>(s)) =
        loss == GbtLoss::Logistic ? acc.unaryExpr([](double v) { return sigmoid(v); }) : acc;
  }
  return out;
}

namespace {

struct Grower {
  const kernels::BinnedMatrix& bins;
  const FeatureBinner& binner;
  std::span<const double> grad;
  std::span<const double> hess;
  GbtLoss loss;
  const GbtParams& params;
  Tree tree;

  double leaf_value(std::span<const std::uint32_t> rows) const {
    double g = 0.0, h = 0.0;
    for (auto r : rows) {
      g += grad[r];
      h += hess[r];
    }
    if (loss == GbtLoss::Squared) return rows.empty() ? 0.0 : g / static_cast<double>(rows.size());
    return std::abs(h) < 1e-150 ? 0.0 : g / h;
  }

  int grow(std::vector<std::uint32_t> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto n = rows.size();
    double g_sum = 0.0, ss = 0.0;
    for (auto r : rows) {
      g_sum += grad[r];
      ss += grad[r] * grad[r];
    }
    const double centered_ss = ss - g_sum * g_sum / static_cast<double>(std::max<std::size_t>(n, 1));
    const auto min_leaf = static_cast<std::size_t>(std::max(1, params.min_samples_leaf));
    if (depth >= params.max_depth || n < 2 * min_leaf || centered_ss <= 1e-12 * std::max(ss, 1e-300)) {
      make_leaf(id, rows);
      return id;
    }

    const auto hist = kernels::build_histogram(bins, rows, grad, hess);
    const double parent = g_sum * g_sum / static_cast<double>(n);
    double best_gain = 0.0;
    int best_f = -1, best_b = -1;
    for (std::size_t f = 0; f < bins.n_features; ++f) {
      double gl = 0.0;
      std::size_t nl = 0;
      const std::size_t nb = bins.bin_counts[f];
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hist.grad[f * 256 + b];
        nl += hist.count[f * 256 + b];
        const std::size_t nr = n - nl;
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        const double gr = g_sum - gl;
        const double gain = gl * gl / static_cast<double>(nl) + gr * gr / static_cast<double>(nr) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_b = static_cast<int>(b);
        }
      }
    }
    if (best_f < 0 || best_gain <= 1e-12 * centered_ss) {
      make_leaf(id, rows);
      return id;
    }

    std::vector<std::uint32_t> left, right;
    for (auto r : rows)
      (bins.at(r, static_cast<std::size_t>(best_f)) <= best_b ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& nd = tree.nodes[static_cast<std::size_t>(id)];
    nd.feature = best_f;
    nd.threshold = binner.thresholds(static_cast<std::size_t>(best_f))[static_cast<std::size_t>(best_b)];
    nd.left = l;
    nd.right = r;
    return id;
  }

  void make_leaf(int id, const std::vector<std::uint32_t>& rows) {
    tree.nodes[static_cast<std::size_t>(id)].value = leaf_value(rows);
  }
};

double training_loss(GbtLoss loss, std::span<const double> y, const Vector& raw) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double f = raw(static_cast<Eigen::Index>(i));
    if (loss == GbtLoss::Squared) {
      s += (y[i] - f) * (y[i] - f);
    } else {
      const double l1p = f > 0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f));
      s += l1p - y[i] * f;
    }
  }
  return s / static_cast<double>(y.size());
}

}  // namespace

GbtModel fit_gbt(const Matrix& x, std::span<const double> target, GbtLoss loss, const GbtParams& params) {
  if (params.max_depth < 1) throw ArgumentError("nuisance", "tree depth must be at least 1");
  if (params.n_trees < 1) throw ArgumentError("nuisance", "tree count must be at least 1");
  if (!(params.learning_rate > 0)) throw ArgumentError("nuisance", "learning rate must be positive");
  if (!(params.subsample > 0 && params.subsample <= 1))
    throw ArgumentError("nuisance", "subsample must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(x.rows());
  if (target.size() != n || n == 0) throw ArgumentError("nuisance", "target length does not match design rows");

  GbtModel model;
  model.loss = loss;
  model.learning_rate = params.learning_rate;
  model.subsample = params.subsample;
  const double mean = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n);
  if (loss == GbtLoss::Squared) {
    model.init = mean;
  } else {
    for (double v : target)
      if (v != 0.0 && v != 1.0) throw ValidationError("nuisance", "classification target must be 0/1");
    const double m = std::clamp(mean, 1e-12, 1.0 - 1e-12);
    model.init = std::log(m / (1.0 - m));
  }

  const auto binner = FeatureBinner::fit(x);
  const auto bins = binner.bin(x);
  Vector raw = Vector::Constant(static_cast<Eigen::Index>(n), model.init);
  std::vector<double> grad(n), hess(n, 1.0);
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  const auto n_sub = params.subsample >= 1.0
                         ? n
                         : std::max<std::size_t>(1, static_cast<std::size_t>(params.subsample * static_cast<double>(n)));
  std::mt19937_64 rng(params.seed);
  model.train_loss.push_back(training_loss(loss, target, raw));

  std::vector<std::uint32_t> perm = all;
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double f = raw(static_cast<Eigen::Index>(i));
      if (loss == GbtLoss::Squared) {
        grad[i] = target[i] - f;
      } else {
        const double p = sigmoid(f);
        grad[i] = target[i] - p;
        hess[i] = p * (1.0 - p);
      }
    }
    std::vector<std::uint32_t> sample;
    if (n_sub == n) {
      sample = all;
    } else {
      // Partial Fisher-Yates; sorted to keep memory access sequential.
      for (std::size_t i = 0; i < n_sub; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
      }
      sample.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_sub));
      std::sort(sample.begin(), sample.end());
    }

    Grower grower{bins, binner, grad, hess, loss, params, {}};
    grower.grow(std::move(sample), 0);
    auto& tree = grower.tree;
    // Route every training row through the tree via its bins.
    for (std::size_t i = 0; i < n; ++i) {
      int at = 0;
      while (tree.nodes[static_cast<std::size_t>(at)].feature >= 0) {
        const auto& nd = tree.nodes[static_cast<std::size_t>(at)];
        at = x(static_cast<Eigen::Index>(i), nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
      raw(static_cast<Eigen::Index>(i)) += params.learning_rate * tree.nodes[static_cast<std::size_t>(at)].value;
    }
    model.trees.push_back(std::move(tree));
    model.train_loss.push_back(training_loss(loss, target, raw));
  }
  return model;
}

}  // namespace isoeffect
