#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace isoeffect {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Treatment = std::vector<int>;

// Observed sample: outcomes, binary treatment, and the non-focal feature
// matrix. Immutable once constructed; the constructor enforces every
// invariant (equal lengths, n >= 1, a in {0,1}, finite values).
class Dataset {
 public:
  Dataset(std::vector<double> y, Treatment a, Matrix features,
          std::vector<std::string> feature_names,
          std::optional<std::vector<std::string>> texts = std::nullopt);

  std::size_t size() const noexcept { return y_.size(); }
  std::size_t dims() const noexcept { return static_cast<std::size_t>(features_.cols()); }

  std::span<const double> y() const noexcept { return y_; }
  std::span<const int> a() const noexcept { return a_; }
  const Matrix& features() const noexcept { return features_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::optional<std::vector<std::string>>& texts() const noexcept { return texts_; }

  std::size_t treated_count() const noexcept;
  bool has_both_arms() const noexcept;

  // Copy with a different feature representation (same rows, same y, a).
  Dataset with_features(Matrix features, std::vector<std::string> names) const;
  // Copy with rows reordered so that row i of the result is row perm[i].
  Dataset permuted(std::span<const std::size_t> perm) const;

 private:
  std::vector<double> y_;
  Treatment a_;
  Matrix features_;
  std::vector<std::string> feature_names_;
  std::optional<std::vector<std::string>> texts_;
};

// Throws ValidationError unless both arms are present.
void require_both_arms(const Dataset& data, std::string_view module);

struct FoldPlan {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> assignment;
  std::uint64_t seed = 0;
  bool stratified = false;
  // Set when stratification was requested but an arm had fewer than k rows.
  bool downgraded = false;

  std::vector<std::size_t> fold_rows(std::size_t fold) const;
  std::vector<std::size_t> complement_rows(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Stratified by treatment when both arms hold at least k rows; otherwise a
// plain shuffled partition with `downgraded` set. Pure in (n, k, a, seed).
FoldPlan make_folds(std::size_t n, std::size_t k, std::span<const int> a,
                    std::uint64_t seed, bool stratify = true);

// Shuffled round-robin partition of n rows into k folds.
FoldPlan make_folds_unstratified(std::size_t n, std::size_t k, std::uint64_t seed);

enum class EstimandKind { IATE, IATT, GENERAL };

std::string_view to_string(EstimandKind kind);
EstimandKind estimand_from_string(std::string_view name);

// Target distribution choice. GENERAL carries the target corpus features.
struct Estimand {
  EstimandKind kind = EstimandKind::IATE;
  std::optional<Matrix> target;

  static Estimand iate() { return {EstimandKind::IATE, std::nullopt}; }
  static Estimand iatt() { return {EstimandKind::IATT, std::nullopt}; }
  static Estimand general(Matrix target_features);

  // Throws unless a GENERAL estimand has a non-empty target with `dims` columns.
  void validate(std::size_t dims) const;
};

// Stable 64-bit seed derivation from a root seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Gather rows/entries by index.
Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows);
std::vector<double> take(std::span<const double> v, std::span<const std::size_t> rows);
Treatment take(std::span<const int> v, std::span<const std::size_t> rows);

}  // namespace isoeffect
