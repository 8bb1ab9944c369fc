#include "isoeffect/featurize.hpp"

#include "isoeffect/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace isoeffect {

namespace {

bool is_token_byte(unsigned char c) noexcept {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

char lower(unsigned char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

struct TokenSpan {
  std::size_t begin;
  std::size_t end;
};

template <typename Fn>
void for_each_token(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (text.compare(i, kMaskToken.size(), kMaskToken) == 0) {
      i += kMaskToken.size();
      continue;
    }
    if (!is_token_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_token_byte(static_cast<unsigned char>(text[j])) &&
           text.compare(j, kMaskToken.size(), kMaskToken) != 0)
      ++j;
    fn(TokenSpan{i, j});
    i = j;
  }
}

std::string lowered(std::string_view s) {
  std::string out(s.size(), '\0');
  std::transform(s.begin(), s.end(), out.begin(), [](unsigned char c) { return lower(c); });
  return out;
}

void featurize_row(std::string_view text, const Lexicon& lexicon, FeatureMode mode,
                   Matrix& out, Eigen::Index row) {
  const auto& cats = lexicon.categories();
  for_each_token(text, [&](TokenSpan t) {
    const auto token = lowered(text.substr(t.begin, t.end - t.begin));
    for (std::size_t c = 0; c < cats.size(); ++c) {
      const bool hit = std::any_of(cats[c].patterns.begin(), cats[c].patterns.end(),
                                   [&](const Pattern& p) { return p.matches(token); });
      if (!hit) continue;
      auto& cell = out(row, static_cast<Eigen::Index>(c));
      cell = mode == FeatureMode::Binary ? 1.0 : cell + 1.0;
    }
  });
}

}  // namespace

Pattern Pattern::parse(std::string_view text) {
  Pattern p;
  if (!text.empty() && text.back() == '*') {
    p.prefix = true;
    text.remove_suffix(1);
  }
  if (text.empty()) throw ValidationError("featurize", "pattern must have at least one character");
  for (unsigned char c : text)
    if (!is_token_byte(c))
      throw ValidationError("featurize", "pattern '" + std::string(text) +
                                             "' contains a non-token character");
  p.stem = lowered(text);
  return p;
}

bool Pattern::matches(std::string_view token) const noexcept {
  if (prefix) return token.size() >= stem.size() && token.compare(0, stem.size(), stem) == 0;
  return token == stem;
}

std::vector<Pattern> parse_patterns(const std::vector<std::string>& raw) {
  std::vector<Pattern> out;
  for (const auto& r : raw) out.push_back(Pattern::parse(r));
  return out;
}

Lexicon::Lexicon(std::vector<LexiconCategory> categories) : categories_(std::move(categories)) {
  if (categories_.empty()) throw ValidationError("featurize", "lexicon must have at least one category");
  std::set<std::string> seen;
  for (const auto& c : categories_) {
    if (c.patterns.empty())
      throw ValidationError("featurize", "lexicon category '" + c.name + "' is empty");
    if (!seen.insert(c.name).second)
      throw ValidationError("featurize", "duplicate lexicon category '" + c.name + "'");
  }
}

std::vector<std::string> Lexicon::names() const {
  std::vector<std::string> out;
  for (const auto& c : categories_) out.push_back(c.name);
  return out;
}

Lexicon parse_lexicon(const std::string& json_text) {
  using nlohmann::ordered_json;
  std::set<std::string> keys;
  std::string duplicate;
  ordered_json::parser_callback_t cb = [&](int depth, ordered_json::parse_event_t event,
                                           ordered_json& parsed) {
    if (event == ordered_json::parse_event_t::key && depth == 1) {
      const auto k = parsed.get<std::string>();
      if (!keys.insert(k).second && duplicate.empty()) duplicate = k;
    }
    return true;
  };
  ordered_json j;
  try {
    j = ordered_json::parse(json_text, cb);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("featurize", std::string("invalid lexicon JSON: ") + e.what());
  }
  if (!duplicate.empty()) throw ValidationError("featurize", "duplicate lexicon category '" + duplicate + "'");
  if (!j.is_object()) throw ValidationError("featurize", "lexicon must be a JSON object");
  std::vector<LexiconCategory> cats;
  for (const auto& [name, list] : j.items()) {
    if (!list.is_array())
      throw ValidationError("featurize", "lexicon category '" + name + "' must be a list");
    LexiconCategory cat{name, {}};
    for (const auto& p : list) {
      if (!p.is_string())
        throw ValidationError("featurize", "lexicon category '" + name + "' has a non-string pattern");
      cat.patterns.push_back(Pattern::parse(p.get<std::string>()));
    }
    cats.push_back(std::move(cat));
  }
  return Lexicon(std::move(cats));
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("featurize", "cannot open lexicon '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_lexicon(buf.str());
}

std::string lexicon_to_json(const Lexicon& lexicon) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& c : lexicon.categories()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : c.patterns) arr.push_back(p.str());
    j[c.name] = std::move(arr);
  }
  return j.dump(2);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for_each_token(text, [&](TokenSpan t) { out.push_back(lowered(text.substr(t.begin, t.end - t.begin))); });
  return out;
}

Matrix featurize_texts_serial(std::span<const std::string> texts, const Lexicon& lexicon,
                              FeatureMode mode) {
  if (texts.empty()) throw ValidationError("featurize", "no texts to featurize");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(texts.size()),
                            static_cast<Eigen::Index>(lexicon.size()));
  for (std::size_t i = 0; i < texts.size(); ++i)
    featurize_row(texts[i], lexicon, mode, out, static_cast<Eigen::Index>(i));
  return out;
}

Matrix featurize_texts(std::span<const std::string> texts, const Lexicon& lexicon, FeatureMode mode) {
  if (texts.empty()) throw ValidationError("featurize", "no texts to featurize");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(texts.size()),
                            static_cast<Eigen::Index>(lexicon.size()));
  const auto n = static_cast<std::int64_t>(texts.size());
  // Each row is written by exactly one iteration.
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i)
    featurize_row(texts[static_cast<std::size_t>(i)], lexicon, mode, out, static_cast<Eigen::Index>(i));
  return out;
}

InterventionSplit select_intervention(const Matrix& categories, const std::vector<std::string>& names,
                                      const std::string& focal) {
  if (static_cast<std::size_t>(categories.cols()) != names.size())
    throw ArgumentError("featurize", "category names do not match matrix columns");
  auto it = std::find(names.begin(), names.end(), focal);
  if (it == names.end()) throw ArgumentError("featurize", "unknown focal category '" + focal + "'");
  const auto focal_col = static_cast<Eigen::Index>(it - names.begin());

  InterventionSplit split;
  split.focal_name = focal;
  split.a.resize(static_cast<std::size_t>(categories.rows()));
  std::size_t treated = 0;
  for (Eigen::Index i = 0; i < categories.rows(); ++i) {
    const double v = categories(i, focal_col);
    if (v != 0.0 && v != 1.0)
      throw ValidationError("featurize", "focal category '" + focal + "' is not binary at row " +
                                             std::to_string(i + 1), static_cast<std::size_t>(i + 1));
    split.a[static_cast<std::size_t>(i)] = static_cast<int>(v);
    treated += static_cast<std::size_t>(v);
  }
  if (treated == 0 || treated == split.a.size())
    throw ValidationError("featurize", "focal category '" + focal + "' leaves one treatment arm empty");

  split.features.resize(categories.rows(), categories.cols() - 1);
  Eigen::Index out_col = 0;
  for (Eigen::Index j = 0; j < categories.cols(); ++j) {
    if (j == focal_col) continue;
    split.features.col(out_col++) = categories.col(j);
    split.nonfocal_names.push_back(names[static_cast<std::size_t>(j)]);
  }
  return split;
}

InterventionSplit restrict_dims(const InterventionSplit& split, std::size_t dims) {
  const auto have = static_cast<std::size_t>(split.features.cols());
  if (dims < 1 || dims > have)
    throw ArgumentError("featurize", "dims " + std::to_string(dims) + " outside [1, " +
                                         std::to_string(have) + "]");
  InterventionSplit out;
  out.a = split.a;
  out.focal_name = split.focal_name;
  out.features = split.features.leftCols(static_cast<Eigen::Index>(dims));
  out.nonfocal_names.assign(split.nonfocal_names.begin(),
                            split.nonfocal_names.begin() + static_cast<std::ptrdiff_t>(dims));
  return out;
}

InterventionSplit omit_columns(const InterventionSplit& split, const std::vector<std::string>& names) {
  for (const auto& nm : names)
    if (std::find(split.nonfocal_names.begin(), split.nonfocal_names.end(), nm) == split.nonfocal_names.end())
      throw ArgumentError("featurize", "cannot omit unknown column '" + nm + "'");
  InterventionSplit out;
  out.a = split.a;
  out.focal_name = split.focal_name;
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < split.nonfocal_names.size(); ++j) {
    if (std::find(names.begin(), names.end(), split.nonfocal_names[j]) != names.end()) continue;
    keep.push_back(static_cast<Eigen::Index>(j));
    out.nonfocal_names.push_back(split.nonfocal_names[j]);
  }
  if (keep.empty()) throw ValidationError("featurize", "omitting columns leaves no features");
  out.features.resize(split.features.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    out.features.col(static_cast<Eigen::Index>(j)) = split.features.col(keep[j]);
  return out;
}

std::string mask_text(std::string_view text, std::span<const Pattern> patterns) {
  std::string out;
  out.reserve(text.size());
  std::size_t copied = 0;
  for_each_token(text, [&](TokenSpan t) {
    const auto token = lowered(text.substr(t.begin, t.end - t.begin));
    const bool hit = std::any_of(patterns.begin(), patterns.end(),
                                 [&](const Pattern& p) { return p.matches(token); });
    if (!hit) return;
    out.append(text.substr(copied, t.begin - copied));
    out.append(kMaskToken);
    copied = t.end;
  });
  out.append(text.substr(copied));
  return out;
}

std::vector<std::string> mask_terms(std::span<const std::string> texts, std::span<const Pattern> patterns) {
  std::vector<std::string> out(texts.size());
  const auto n = static_cast<std::int64_t>(texts.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = mask_text(texts[static_cast<std::size_t>(i)], patterns);
  return out;
}

}  // namespace isoeffect
