#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace isoeffect::cli {

struct RunConfig {
  std::string subcommand;  // synth | estimate | sweep | contour | calibrate

  std::string data;
  std::string out;
  std::string target_data;
  std::string schema;
  std::string lexicon;
  std::string spec;    // synth spec JSON
  std::string oracle;  // synth oracle output; default <out stem>.oracle.json
  std::string outcome_spec;
  std::string propensity_spec;

  std::string estimand = "iate";
  std::string model = "elastic";
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double clip_eps = 0.01;
  bool clip_given = false;
  bool count_features = false;

  double cy_max = 1.0;
  double cd_max = 1.0;
  std::size_t steps = 21;
  bool bounds_given = false;

  // Calibration groups: "label=item+item" or "item+item" (label = raw text).
  std::vector<std::string> omit_features;
  std::vector<std::string> mask_patterns;

  std::string focal;  // category name, or "all" for sweep
  std::string dims;   // "a..b" or "b"
};

// Parses argv-style arguments (without the program name). Throws
// ArgumentError on invalid input.
RunConfig parse_args(const std::vector<std::string>& args);

// Executes one subcommand and writes its artifacts. Throws on failure.
void run(const RunConfig& config);

// Full frontend: parse, run, and report failures on `err` as one JSON line
// {"error":{"module","kind","message"[,"row"]}}. Returns the exit status.
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace isoeffect::cli
