#include "isoeffect/cli.hpp"

#include "isoeffect/csv.hpp"
#include "isoeffect/error.hpp"
#include "isoeffect/estimator.hpp"
#include "isoeffect/featurize.hpp"
#include "isoeffect/kernels.hpp"
#include "isoeffect/nuisance.hpp"
#include "isoeffect/report.hpp"
#include "isoeffect/sensitivity.hpp"
#include "isoeffect/synth.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

namespace isoeffect::cli {

namespace {

struct Flags {
  CLI::Option* seed = nullptr;
  CLI::Option* clip = nullptr;
  std::vector<CLI::Option*> bounds;
};

void add_common(CLI::App* sub, RunConfig& c, Flags& f) {
  sub->add_option("--data", c.data, "Input CSV")->required();
  sub->add_option("--out", c.out, "Output path")->required();
  sub->add_option("--schema", c.schema, "Column mapping JSON");
  sub->add_option("--lexicon", c.lexicon, "Lexicon JSON; features come from the text column");
  sub->add_flag("--count-features", c.count_features, "Count matches instead of binary presence");
  sub->add_option("--estimand", c.estimand, "iate, iatt or general")
      ->check(CLI::IsMember({"iate", "iatt", "general"}, CLI::ignore_case));
  sub->add_option("--target-data", c.target_data, "Target corpus CSV (general estimand)");
  sub->add_option("--model", c.model, "Nuisance family")->check(CLI::IsMember({"elastic", "gbt"}, CLI::ignore_case));
  sub->add_option("--outcome-spec", c.outcome_spec, "Outcome model spec JSON");
  sub->add_option("--propensity-spec", c.propensity_spec, "Propensity model spec JSON");
  sub->add_option("--folds", c.folds, "Cross-fitting folds")->check(CLI::Range(2, 1000000));
  f.seed = sub->add_option("--seed", c.seed, "Root seed");
  f.clip = sub->add_option("--clip-eps", c.clip_eps, "Propensity clipping epsilon");
  sub->add_option("--focal", c.focal, "Focal category (lexicon mode); 'all' sweeps every category");
}

void add_bounds(CLI::App* sub, RunConfig& c, Flags& f) {
  f.bounds.push_back(sub->add_option("--cy-max", c.cy_max, "Largest C_Y")->check(CLI::PositiveNumber));
  f.bounds.push_back(sub->add_option("--cd-max", c.cd_max, "Largest C_D")->check(CLI::PositiveNumber));
  f.bounds.push_back(sub->add_option("--steps", c.steps, "Grid points per axis")->check(CLI::Range(2, 100000)));
}

void add_calibration(CLI::App* sub, RunConfig& c) {
  sub->add_option("--omit-features", c.omit_features, "Feature groups to omit, e.g. x_1 or home=x_1+x_2");
  sub->add_option("--mask-patterns", c.mask_patterns, "Text patterns to mask, e.g. meds=semaglutide+ozempic*");
}

void build(CLI::App& app, RunConfig& c, Flags& f) {
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and its oracle effects");
  synth->add_option("--spec", c.spec, "Synth spec JSON (defaults when omitted)");
  synth->add_option("--out", c.out, "Data CSV")->required();
  synth->add_option("--oracle", c.oracle, "Oracle JSON");
  f.seed = synth->add_option("--seed", c.seed, "Overrides the spec seed");

  auto* est = app.add_subcommand("estimate", "Doubly robust estimate with sensitivity summary");
  Flags fe;
  add_common(est, c, fe);
  add_bounds(est, c, fe);

  auto* sweep = app.add_subcommand("sweep", "Effect, fidelity and overlap across representation sizes");
  Flags fs;
  add_common(sweep, c, fs);
  sweep->add_option("--dims", c.dims, "Dimension range a..b (default 2..9)");

  auto* contour = app.add_subcommand("contour", "Lower OVB bound over a (C_Y, C_D) grid");
  Flags fc;
  add_common(contour, c, fc);
  add_bounds(contour, c, fc);
  add_calibration(contour, c);

  auto* cal = app.add_subcommand("calibrate", "Calibrate (C_Y, C_D) by omitting features or masking terms");
  Flags fk;
  add_common(cal, c, fk);
  add_calibration(cal, c);

  // Remember the option handles of whichever subcommand gets parsed.
  app.final_callback([&c, &f, synth, est, sweep, contour, cal, fe, fs, fc, fk]() mutable {
    const Flags* chosen = nullptr;
    if (synth->parsed()) {
      c.subcommand = "synth";
      c.seed_given = f.seed->count() > 0;
      return;
    }
    if (est->parsed()) c.subcommand = "estimate", chosen = &fe;
    if (sweep->parsed()) c.subcommand = "sweep", chosen = &fs;
    if (contour->parsed()) c.subcommand = "contour", chosen = &fc;
    if (cal->parsed()) c.subcommand = "calibrate", chosen = &fk;
    if (!chosen) return;
    c.seed_given = chosen->seed->count() > 0;
    c.clip_given = chosen->clip->count() > 0;
    for (auto* o : chosen->bounds) c.bounds_given = c.bounds_given || o->count() > 0;
  });
}

void parse_into(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  app.parse(reversed);
}

// ---------------------------------------------------------------- inputs

struct Corpus {
  std::vector<double> y;
  std::optional<Treatment> a;
  Matrix categories;
  std::vector<std::string> names;
  std::optional<std::vector<std::string>> texts;
};

CsvSchema schema_of(const RunConfig& c) { return c.schema.empty() ? CsvSchema{} : CsvSchema::from_file(c.schema); }

std::string text_column(const CsvSchema& s) { return s.text.value_or("text"); }

FeatureMode mode_of(const RunConfig& c) { return c.count_features ? FeatureMode::Count : FeatureMode::Binary; }

std::vector<std::string> read_texts(const CsvTable& table, const std::string& column, const std::string& path) {
  auto col = table.column(column);
  if (!col) throw SchemaError("cli", "missing text column '" + column + "' in '" + path + "'");
  std::vector<std::string> t(table.rows.size());
  for (std::size_t r = 0; r < t.size(); ++r) t[r] = table.rows[r][*col];
  return t;
}

Corpus load_corpus(const RunConfig& c, const std::optional<Lexicon>& lexicon) {
  const auto schema = schema_of(c);
  if (!lexicon) {
    auto d = load_csv(c.data, schema);
    return {std::vector<double>(d.y().begin(), d.y().end()), Treatment(d.a().begin(), d.a().end()), d.features(),
            d.feature_names(), d.texts()};
  }
  const auto table = read_csv_table(c.data);
  if (table.rows.empty()) throw ValidationError("core", "CSV input has no data rows");
  auto y_col = table.column(schema.outcome);
  if (!y_col) throw SchemaError("core", "missing outcome column '" + schema.outcome + "'");
  Corpus k;
  k.y.resize(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) k.y[r] = cell_number(table, r, *y_col);
  if (auto a_col = table.column(schema.treatment)) {
    Treatment a(table.rows.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
      const double v = cell_number(table, r, *a_col);
      if (v != 0.0 && v != 1.0)
        throw ValidationError("core", "treatment value is not binary at row " + std::to_string(r + 1), r + 1);
      a[r] = static_cast<int>(v);
    }
    k.a = std::move(a);
  }
  k.texts = read_texts(table, text_column(schema), c.data);
  k.categories = featurize_texts(*k.texts, *lexicon, mode_of(c));
  k.names = lexicon->names();
  return k;
}

InterventionSplit split_for(const Corpus& k, const std::string& focal) {
  if (!focal.empty()) return select_intervention(k.categories, k.names, focal);
  if (!k.a) throw SchemaError("cli", "no treatment column; pass --focal to pick a category");
  return {*k.a, k.categories, "a", k.names};
}

Matrix select_named(const Matrix& m, const std::vector<std::string>& names, const std::vector<std::string>& wanted) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(wanted.size()));
  for (std::size_t j = 0; j < wanted.size(); ++j) {
    auto it = std::find(names.begin(), names.end(), wanted[j]);
    if (it == names.end()) throw SchemaError("cli", "column '" + wanted[j] + "' not found");
    out.col(static_cast<Eigen::Index>(j)) = m.col(it - names.begin());
  }
  return out;
}

// Target corpus features for the given non-focal columns, optionally after
// masking its texts.
Matrix target_features(const RunConfig& c, const std::optional<Lexicon>& lexicon,
                       const std::vector<std::string>& nonfocal, const std::vector<Pattern>* mask) {
  if (c.target_data.empty()) throw ArgumentError("cli", "--estimand general needs --target-data");
  if (!lexicon) {
    if (mask) throw ArgumentError("cli", "--mask-patterns needs --lexicon and a text column");
    return load_feature_matrix(c.target_data, nonfocal);
  }
  const auto table = read_csv_table(c.target_data);
  auto texts = read_texts(table, text_column(schema_of(c)), c.target_data);
  if (mask) texts = mask_terms(texts, *mask);
  return select_named(featurize_texts(texts, *lexicon, mode_of(c)), lexicon->names(), nonfocal);
}

Estimand estimand_for(const RunConfig& c, const std::optional<Lexicon>& lexicon,
                      const std::vector<std::string>& nonfocal, const std::vector<Pattern>* mask = nullptr) {
  const auto kind = estimand_from_string(c.estimand);
  if (kind == EstimandKind::IATE) return Estimand::iate();
  if (kind == EstimandKind::IATT) return Estimand::iatt();
  return Estimand::general(target_features(c, lexicon, nonfocal, mask));
}

ModelSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cli", "cannot read '" + path + "'");
  try {
    return ModelSpec::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("cli", "invalid JSON in '" + path + "': " + e.what());
  }
}

ModelSpec outcome_spec(const RunConfig& c) {
  if (!c.outcome_spec.empty()) return load_spec(c.outcome_spec);
  return ModelSpec::defaults(c.model == "gbt" ? ModelFamily::GbtReg : ModelFamily::ElasticLinear);
}

ModelSpec propensity_spec(const RunConfig& c) {
  ModelSpec s = c.propensity_spec.empty()
                    ? ModelSpec::defaults(c.model == "gbt" ? ModelFamily::GbtClf : ModelFamily::ElasticLogistic)
                    : load_spec(c.propensity_spec);
  if (c.propensity_spec.empty() || c.clip_given) s.clip.epsilon = c.clip_eps;
  s.validate();
  return s;
}

CrossfitOptions crossfit_options(const RunConfig& c) { return {c.folds, c.seed, true, std::nullopt}; }

Dataset dataset_of(const Corpus& k, const InterventionSplit& s) {
  return Dataset(k.y, s.a, s.features, s.nonfocal_names);
}

struct Group {
  std::string label;
  std::vector<std::string> items;
};

Group parse_group(const std::string& raw) {
  Group g;
  std::string body = raw;
  if (auto eq = raw.find('='); eq != std::string::npos) {
    g.label = raw.substr(0, eq);
    body = raw.substr(eq + 1);
  } else {
    g.label = raw;
  }
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, '+'))
    if (!item.empty()) g.items.push_back(item);
  if (g.label.empty() || g.items.empty()) throw ArgumentError("cli", "malformed calibration group '" + raw + "'");
  return g;
}

std::pair<std::size_t, std::size_t> parse_dims(const std::string& text, std::size_t available) {
  std::size_t lo = 2, hi = 9;
  if (!text.empty()) {
    std::smatch m;
    static const std::regex range(R"(^\s*(\d+)\s*\.\.\s*(\d+)\s*$)");
    static const std::regex single(R"(^\s*(\d+)\s*$)");
    if (std::regex_match(text, m, range)) {
      lo = std::stoul(m[1]);
      hi = std::stoul(m[2]);
    } else if (std::regex_match(text, m, single)) {
      lo = hi = std::stoul(m[1]);
    } else {
      throw ArgumentError("cli", "--dims must look like a..b");
    }
    if (lo < 1 || lo > hi) throw ArgumentError("cli", "--dims range is empty");
    if (hi > available)
      throw ArgumentError("cli", "--dims upper end " + std::to_string(hi) + " exceeds " + std::to_string(available) +
                                     " available columns");
  } else {
    hi = std::min(hi, available);
    if (lo > hi) lo = hi;
  }
  return {lo, hi};
}

// ------------------------------------------------------------- subcommands

void run_synth(const RunConfig& c) {
  SynthSpec spec;
  if (!c.spec.empty()) {
    std::ifstream in(c.spec);
    if (!in) throw IoError("cli", "cannot read '" + c.spec + "'");
    try {
      spec = SynthSpec::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ArgumentError("cli", "invalid JSON in '" + c.spec + "': " + e.what());
    }
  }
  if (c.seed_given) spec.seed = c.seed;
  spec.validate();
  const auto data = generate(spec);
  auto oracle = oracle_tau(spec).to_json();
  oracle["spec"] = spec.to_json();
  round_numbers(oracle);
  std::filesystem::path oracle_path = c.oracle;
  if (oracle_path.empty()) {
    oracle_path = c.out;
    oracle_path.replace_extension(".oracle.json");
  }
  write_csv(c.out, data);
  write_file_atomic(oracle_path, dump_report(oracle));
}

struct FullRun {
  Corpus corpus;
  InterventionSplit split;
  Dataset data;
  Estimand estimand;
  ModelSpec outcome;
  ModelSpec propensity;
  CrossfitOptions options;
  DrRun run;
  SensitivityReport sens;
};

FullRun full_run(const RunConfig& c, const std::optional<Lexicon>& lexicon) {
  if (c.focal == "all") throw ArgumentError("cli", "--focal all is only valid for sweep");
  auto corpus = load_corpus(c, lexicon);
  auto split = split_for(corpus, c.focal);
  auto data = dataset_of(corpus, split);
  auto estimand = estimand_for(c, lexicon, split.nonfocal_names);
  auto os = outcome_spec(c);
  auto ps = propensity_spec(c);
  const auto opts = crossfit_options(c);
  auto run = run_dr(data, estimand, os, ps, opts);
  std::vector<SensitivityParams> at;
  if (c.bounds_given) at.push_back({c.cy_max, c.cd_max});
  auto sens = sensitivity_report(run.fits, run.weights, run.estimate, data.y(), at);
  return {std::move(corpus), std::move(split), std::move(data), std::move(estimand), std::move(os),
          std::move(ps),     opts,             std::move(run),  std::move(sens)};
}

std::optional<Lexicon> lexicon_of(const RunConfig& c) {
  if (c.lexicon.empty()) return std::nullopt;
  return load_lexicon(c.lexicon);
}

void run_estimate(const RunConfig& c) {
  const auto lexicon = lexicon_of(c);
  const auto f = full_run(c, lexicon);
  const auto naive = estimate_naive(f.data);
  const auto report = estimate_report(f.run, naive, f.sens, {c.folds, c.seed});
  write_file_atomic(c.out, dump_report(report));
}

void run_sweep(const RunConfig& c) {
  const auto lexicon = lexicon_of(c);
  const auto corpus = load_corpus(c, lexicon);
  std::vector<std::string> focals;
  const bool all = c.focal == "all";
  if (all) focals = corpus.names;
  else focals.push_back(c.focal);

  const auto os = outcome_spec(c);
  const auto ps = propensity_spec(c);
  const auto opts = crossfit_options(c);
  std::vector<SweepRow> rows;
  for (const auto& focal : focals) {
    InterventionSplit split;
    try {
      split = split_for(corpus, focal);
    } catch (const ValidationError& e) {
      if (!all) throw;
      std::cerr << nlohmann::json{{"warning", {{"module", e.module()}, {"focal", focal}, {"message", e.what()}}}}.dump()
                << "\n";
      continue;
    }
    const auto [lo, hi] = parse_dims(c.dims, split.nonfocal_names.size());
    for (std::size_t d = lo; d <= hi; ++d) {
      const auto sub = restrict_dims(split, d);
      const auto data = dataset_of(corpus, sub);
      const auto estimand = estimand_for(c, lexicon, sub.nonfocal_names);
      const auto run = run_dr(data, estimand, os, ps, opts);
      const auto sens = sensitivity_report(run.fits, run.weights, run.estimate, data.y());
      rows.push_back({focal, d, run.estimate.tau_hat, run.estimate.ci_lo, run.estimate.ci_hi, sens.sigma2, sens.nu2,
                      sens.rv});
    }
  }
  write_file_atomic(c.out, sweep_csv(rows, all));
}

std::vector<std::pair<std::string, Calibration>> calibrations(const RunConfig& c, const std::optional<Lexicon>& lexicon,
                                                               const FullRun& f) {
  std::vector<std::pair<std::string, Calibration>> out;
  for (const auto& raw : c.omit_features) {
    const auto g = parse_group(raw);
    const auto reduced = omit_columns(f.split, g.items);
    const auto estimand = estimand_for(c, lexicon, reduced.nonfocal_names);
    out.emplace_back(g.label, calibrate_cy_cd(f.data, f.run, reduced.features, estimand, f.outcome, f.propensity,
                                              f.options));
  }
  for (const auto& raw : c.mask_patterns) {
    if (!lexicon || !f.corpus.texts) throw ArgumentError("cli", "--mask-patterns needs --lexicon and a text column");
    const auto g = parse_group(raw);
    const auto patterns = parse_patterns(g.items);
    const auto masked = mask_terms(*f.corpus.texts, patterns);
    const Matrix cats = featurize_texts(masked, *lexicon, mode_of(c));
    const Matrix reduced = select_named(cats, lexicon->names(), f.split.nonfocal_names);
    const auto estimand = estimand_for(c, lexicon, f.split.nonfocal_names, &patterns);
    out.emplace_back(g.label, calibrate_cy_cd(f.data, f.run, reduced, estimand, f.outcome, f.propensity, f.options));
  }
  return out;
}

void run_contour(const RunConfig& c) {
  const auto lexicon = lexicon_of(c);
  const auto f = full_run(c, lexicon);
  if (f.sens.nu2_negative)
    throw DegenerateModelError("sensitivity", "overlap nu^2 is not positive; contour undefined");
  auto grid = contour_grid(f.run.estimate.tau_hat, f.sens.sigma2, f.sens.nu2, c.cy_max, c.cd_max, c.steps);
  for (const auto& [label, cal] : calibrations(c, lexicon, f))
    grid.calibration_points.push_back({label, cal.params.c_y, cal.params.c_d});
  write_file_atomic(c.out, contour_csv(grid, f.run.estimate.tau_hat, f.sens.sigma2, f.sens.nu2));
}

void run_calibrate(const RunConfig& c) {
  if (c.omit_features.empty() && c.mask_patterns.empty())
    throw ArgumentError("cli", "calibrate needs --omit-features or --mask-patterns");
  const auto lexicon = lexicon_of(c);
  const auto f = full_run(c, lexicon);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [label, cal] : calibrations(c, lexicon, f)) out.push_back(calibration_json(label, cal));
  write_file_atomic(c.out, dump_report(out));
}

nlohmann::json error_json(const std::string& module, const std::string& kind, const std::string& message) {
  return {{"error", {{"module", module}, {"kind", kind}, {"message", message}}}};
}

}  // namespace

RunConfig parse_args(const std::vector<std::string>& args) {
  RunConfig c;
  Flags f;
  CLI::App app{"isoeffect"};
  build(app, c, f);
  try {
    parse_into(app, args);
  } catch (const CLI::ParseError& e) {
    throw ArgumentError("cli", e.what());
  }
  return c;
}

void run(const RunConfig& c) {
  if (c.subcommand == "synth") return run_synth(c);
  if (c.subcommand == "estimate") return run_estimate(c);
  if (c.subcommand == "sweep") return run_sweep(c);
  if (c.subcommand == "contour") return run_contour(c);
  if (c.subcommand == "calibrate") return run_calibrate(c);
  throw ArgumentError("cli", "unknown subcommand '" + c.subcommand + "'");
}

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  kernels::apply_thread_env();
  RunConfig c;
  Flags f;
  CLI::App app{"Isolated causal effects with doubly robust estimation and OVB sensitivity", "isoeffect"};
  build(app, c, f);
  try {
    parse_into(app, args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_json("cli", "argument_error", e.what()).dump() << "\n";
    return 2;
  }
  try {
    run(c);
    return 0;
  } catch (const ValidationError& e) {
    auto j = error_json(e.module(), e.kind(), e.what());
    if (e.row()) j["error"]["row"] = *e.row();
    err << j.dump() << "\n";
  } catch (const ArgumentError& e) {
    err << error_json(e.module(), e.kind(), e.what()).dump() << "\n";
    return 2;
  } catch (const Error& e) {
    err << error_json(e.module(), e.kind(), e.what()).dump() << "\n";
  } catch (const std::exception& e) {
    err << error_json("cli", "internal_error", e.what()).dump() << "\n";
  }
  return 1;
}

}  // namespace isoeffect::cli
