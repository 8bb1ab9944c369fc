#pragma once

#include "isoeffect/core.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace isoeffect {

// A literal token, or a prefix when written with a trailing '*'.
struct Pattern {
  std::string stem;
  bool prefix = false;

  static Pattern parse(std::string_view text);
  bool matches(std::string_view token) const noexcept;
  std::string str() const { return prefix ? stem + "*" : stem; }
};

struct LexiconCategory {
  std::string name;
  std::vector<Pattern> patterns;
};

// Ordered categories; the order is the column order of featurized matrices.
class Lexicon {
 public:
  explicit Lexicon(std::vector<LexiconCategory> categories);

  const std::vector<LexiconCategory>& categories() const noexcept { return categories_; }
  std::size_t size() const noexcept { return categories_.size(); }
  std::vector<std::string> names() const;

 private:
  std::vector<LexiconCategory> categories_;
};

Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon parse_lexicon(const std::string& json_text);
std::string lexicon_to_json(const Lexicon& lexicon);

enum class FeatureMode { Binary, Count };

// Lowercased tokens split on non-alphanumeric ASCII. Bytes >= 0x80 are kept
// inside tokens. The mask marker "[MASK]" never yields a token.
std::vector<std::string> tokenize(std::string_view text);

// n x |categories| matrix. Binary mode: 1 iff any token matches any pattern of
// the category. Count mode: number of matching tokens.
Matrix featurize_texts(std::span<const std::string> texts, const Lexicon& lexicon,
                       FeatureMode mode = FeatureMode::Binary);
Matrix featurize_texts_serial(std::span<const std::string> texts, const Lexicon& lexicon,
                              FeatureMode mode = FeatureMode::Binary);

struct InterventionSplit {
  Treatment a;
  Matrix features;
  std::string focal_name;
  std::vector<std::string> nonfocal_names;
};

InterventionSplit select_intervention(const Matrix& categories,
                                      const std::vector<std::string>& names,
                                      const std::string& focal);

// Keeps the first `dims` non-focal columns.
InterventionSplit restrict_dims(const InterventionSplit& split, std::size_t dims);

// Drops the named non-focal columns.
InterventionSplit omit_columns(const InterventionSplit& split, const std::vector<std::string>& names);

inline constexpr std::string_view kMaskToken = "[MASK]";

// Replaces every token that matches one of the patterns by "[MASK]"; all
// other bytes are copied unchanged.
std::vector<std::string> mask_terms(std::span<const std::string> texts,
                                    std::span<const Pattern> patterns);
std::string mask_text(std::string_view text, std::span<const Pattern> patterns);

std::vector<Pattern> parse_patterns(const std::vector<std::string>& raw);

}  // namespace isoeffect
