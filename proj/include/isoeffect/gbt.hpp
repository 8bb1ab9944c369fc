#pragma once

#include "isoeffect/core.hpp"
#include "isoeffect/kernels.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace isoeffect {

enum class GbtLoss { Squared, Logistic };

struct GbtParams {
  int max_depth = 3;
  int n_trees = 100;
  double learning_rate = 0.1;
  double subsample = 0.7;
  int min_samples_leaf = 1;
  std::uint64_t seed = 0;
};

// Per-feature split candidates. Up to 255 thresholds per feature; values
// <= thresholds[b] fall in bins 0..b.
class FeatureBinner {
 public:
  static FeatureBinner fit(const Matrix& x, std::size_t max_bins = 256);
  kernels::BinnedMatrix bin(const Matrix& x) const;
  const std::vector<double>& thresholds(std::size_t feature) const { return thresholds_[feature]; }

 private:
  std::vector<std::vector<double>> thresholds_;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const Matrix& x, Eigen::Index row) const;
  std::size_t leaf_count() const;
};

class GbtModel {
 public:
  GbtLoss loss = GbtLoss::Squared;
  double init = 0.0;
  double learning_rate = 0.1;
  double subsample = 0.7;
  std::vector<Tree> trees;
  // Training loss on all rows after 0, 1, ..., n_trees trees.
  std::vector<double> train_loss;

  // Raw additive score using the first `n_trees` trees (all when negative).
  Vector raw(const Matrix& x, int n_trees = -1) const;
  // Mean prediction (squared loss) or probability (logistic loss).
  Vector predict(const Matrix& x, int n_trees = -1) const;
  // Predictions after each of the requested stages, one column per stage.
  Matrix staged_predict(const Matrix& x, std::span<const int> stages) const;
};

// Stagewise boosting of depth-limited regression trees. Squared loss fits the
// residual with mean leaves; logistic loss fits y - p with one Newton step per
// leaf. Row subsampling without replacement, deterministic in `params.seed`.
GbtModel fit_gbt(const Matrix& x, std::span<const double> target, GbtLoss loss, const GbtParams& params);

}  // namespace isoeffect
