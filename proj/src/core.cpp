#include "isoeffect/core.hpp"

#include "isoeffect/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace isoeffect {

Dataset::Dataset(std::vector<double> y, Treatment a, Matrix features,
                 std::vector<std::string> feature_names,
                 std::optional<std::vector<std::string>> texts)
    : y_(std::move(y)),
      a_(std::move(a)),
      features_(std::move(features)),
      feature_names_(std::move(feature_names)),
      texts_(std::move(texts)) {
  const std::size_t n = y_.size();
  if (n == 0) throw ValidationError("core", "dataset must contain at least one row");
  if (a_.size() != n)
    throw ValidationError("core", "treatment length " + std::to_string(a_.size()) +
                                      " does not match outcome length " + std::to_string(n));
  if (static_cast<std::size_t>(features_.rows()) != n && features_.cols() > 0)
    throw ValidationError("core", "feature matrix has " + std::to_string(features_.rows()) +
                                      " rows, expected " + std::to_string(n));
  if (features_.cols() == 0) features_.resize(static_cast<Eigen::Index>(n), 0);
  if (feature_names_.size() != dims())
    throw ValidationError("core", "expected " + std::to_string(dims()) + " feature names, got " +
                                      std::to_string(feature_names_.size()));
  if (texts_ && texts_->size() != n)
    throw ValidationError("core", "text column length does not match outcome length");
  for (std::size_t i = 0; i < n; ++i) {
    if (a_[i] != 0 && a_[i] != 1)
      throw ValidationError("core", "treatment must be 0 or 1 at row " + std::to_string(i + 1), i + 1);
    if (!std::isfinite(y_[i]))
      throw ValidationError("core", "non-finite outcome at row " + std::to_string(i + 1), i + 1);
    for (Eigen::Index j = 0; j < features_.cols(); ++j) {
      if (!std::isfinite(features_(static_cast<Eigen::Index>(i), j)))
        throw ValidationError("core", "non-finite feature '" + feature_names_[j] + "' at row " +
                                          std::to_string(i + 1), i + 1);
    }
  }
}

std::size_t Dataset::treated_count() const noexcept {
  return static_cast<std::size_t>(std::count(a_.begin(), a_.end(), 1));
}

bool Dataset::has_both_arms() const noexcept {
  const auto t = treated_count();
  return t > 0 && t < size();
}

Dataset Dataset::with_features(Matrix features, std::vector<std::string> names) const {
  return Dataset(y_, a_, std::move(features), std::move(names), texts_);
}

Dataset Dataset::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != size()) throw ArgumentError("core", "permutation length mismatch");
  std::optional<std::vector<std::string>> texts;
  if (texts_) {
    texts.emplace();
    for (auto p : perm) texts->push_back((*texts_)[p]);
  }
  return Dataset(take(y_, perm), take(a_, perm), take_rows(features_, perm), feature_names_,
                 std::move(texts));
}

void require_both_arms(const Dataset& data, std::string_view module) {
  if (!data.has_both_arms())
    throw ValidationError(std::string(module),
                          "both treatment arms must be non-empty (treated=" +
                              std::to_string(data.treated_count()) + ", n=" +
                              std::to_string(data.size()) + ")");
}

std::vector<std::size_t> FoldPlan::fold_rows(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    if (assignment[i] == fold) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> FoldPlan::complement_rows(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    if (assignment[i] != fold) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : assignment) ++sizes[f];
  return sizes;
}

namespace {

void deal(std::vector<std::size_t>& idx, std::mt19937_64& rng, std::size_t k,
          std::size_t& next, std::vector<std::size_t>& assignment) {
  std::shuffle(idx.begin(), idx.end(), rng);
  for (auto i : idx) {
    assignment[i] = next;
    next = (next + 1) % k;
  }
}

void check_fold_args(std::size_t n, std::size_t k) {
  if (k < 2) throw ArgumentError("core", "fold count must be at least 2");
  if (k > n)
    throw ArgumentError("core", "fold count " + std::to_string(k) + " exceeds row count " +
                                    std::to_string(n));
}

}  // namespace

FoldPlan make_folds_unstratified(std::size_t n, std::size_t k, std::uint64_t seed) {
  check_fold_args(n, k);
  FoldPlan plan{n, k, std::vector<std::size_t>(n, 0), seed, false, false};
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  deal(idx, rng, k, next, plan.assignment);
  return plan;
}

FoldPlan make_folds(std::size_t n, std::size_t k, std::span<const int> a, std::uint64_t seed,
                    bool stratify) {
  check_fold_args(n, k);
  if (a.size() != n) throw ArgumentError("core", "treatment length does not match n");
  std::vector<std::size_t> treated, control;
  for (std::size_t i = 0; i < n; ++i) (a[i] == 1 ? treated : control).push_back(i);
  if (!stratify) return make_folds_unstratified(n, k, seed);
  if (treated.size() < k || control.size() < k) {
    auto plan = make_folds_unstratified(n, k, seed);
    plan.downgraded = true;
    return plan;
  }
  FoldPlan plan{n, k, std::vector<std::size_t>(n, 0), seed, true, false};
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  deal(treated, rng, k, next, plan.assignment);
  deal(control, rng, k, next, plan.assignment);
  return plan;
}

std::string_view to_string(EstimandKind kind) {
  switch (kind) {
    case EstimandKind::IATE: return "iate";
    case EstimandKind::IATT: return "iatt";
    case EstimandKind::GENERAL: return "general";
  }
  return "unknown";
}

EstimandKind estimand_from_string(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "iate") return EstimandKind::IATE;
  if (s == "iatt") return EstimandKind::IATT;
  if (s == "general") return EstimandKind::GENERAL;
  throw ArgumentError("core", "unknown estimand '" + std::string(name) + "'");
}

Estimand Estimand::general(Matrix target_features) {
  return {EstimandKind::GENERAL, std::move(target_features)};
}

void Estimand::validate(std::size_t dims) const {
  if (kind != EstimandKind::GENERAL) return;
  if (!target || target->rows() == 0)
    throw ValidationError("core", "general estimand requires a non-empty target corpus");
  if (static_cast<std::size_t>(target->cols()) != dims)
    throw ValidationError("core", "target corpus has " + std::to_string(target->cols()) +
                                      " columns, expected " + std::to_string(dims));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  // FNV-1a over the label, mixed with the root seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x5851F42D4C957F2DULL));
}

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (std::size_t r = 0; r < rows.size(); ++r)
      out(static_cast<Eigen::Index>(r), j) = m(static_cast<Eigen::Index>(rows[r]), j);
  return out;
}

std::vector<double> take(std::span<const double> v, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

Treatment take(std::span<const int> v, std::span<const std::size_t> rows) {
  Treatment out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace isoeffect
