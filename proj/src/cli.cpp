#include "mscp/cli.hpp"

#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mscp/experiments.hpp"
#include "mscp/io.hpp"

namespace mscp {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UsageError:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidAlpha:
      return 1;
    default:
      return 2;
  }
}

namespace {

// ---------------------------------------------------------------------------
// Config keys. Every command accepts a flat JSON object; unknown keys are
// rejected so typos do not silently fall back to defaults.

const std::vector<std::string> kSynthKeys{"n_points", "n_scales", "n_classes", "noise_sd", "scale_weights", "rho"};
const std::vector<std::string> kSplitKeys{"train_fraction", "calib_fraction", "test_fraction"};
const std::vector<std::string> kHyperKeys{"learning_rate", "epochs", "l2"};

std::set<std::string> keys(std::initializer_list<const std::vector<std::string>*> groups,
                           std::initializer_list<const char*> extra) {
  std::set<std::string> out{"seed"};
  for (const auto* g : groups) out.insert(g->begin(), g->end());
  for (const char* k : extra) out.insert(k);
  return out;
}

void check_keys(const json& j, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const std::string& key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, key + ": " + e.what());
  }
}

void read_synth(const json& j, SynthConfig& c) {
  read(j, "n_points", c.n_points);
  const int before = c.n_scales;
  read(j, "n_scales", c.n_scales);
  if (c.n_scales != before && !j.contains("scale_weights") && c.n_scales >= 1) {
    c.scale_weights = default_scale_weights(c.n_scales);
  }
  read(j, "n_classes", c.n_classes);
  read(j, "noise_sd", c.noise_sd);
  read(j, "scale_weights", c.scale_weights);
  read(j, "rho", c.rho);
}

void write_synth(json& j, const SynthConfig& c) {
  j["n_points"] = c.n_points;
  j["n_scales"] = c.n_scales;
  j["n_classes"] = c.n_classes;
  j["noise_sd"] = c.noise_sd;
  j["scale_weights"] = c.scale_weights;
  j["rho"] = c.rho;
}

void read_split(const json& j, SplitFractions& f) {
  read(j, "train_fraction", f.train);
  read(j, "calib_fraction", f.calib);
  read(j, "test_fraction", f.test);
}

void write_split(json& j, const SplitFractions& f) {
  j["train_fraction"] = f.train;
  j["calib_fraction"] = f.calib;
  j["test_fraction"] = f.test;
}

void read_hyper(const json& j, LogisticHyper& h) {
  read(j, "learning_rate", h.learning_rate);
  read(j, "epochs", h.epochs);
  read(j, "l2", h.l2);
}

void write_hyper(json& j, const LogisticHyper& h) {
  j["learning_rate"] = h.learning_rate;
  j["epochs"] = h.epochs;
  j["l2"] = h.l2;
}

AllocationStrategy read_allocation(const json& j, AllocationStrategy fallback) {
  std::string name = to_string(fallback);
  read(j, "allocation", name);
  return parse_allocation(name);
}

// ---------------------------------------------------------------------------

struct SharedFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool as_json = false;
};

void add_shared(CLI::App* cmd, SharedFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--seed", flags.seed, "base seed (overrides the config)");
  cmd->add_option("--out", flags.out_dir, "output directory (must exist)");
  cmd->add_flag("--json", flags.as_json, "machine-readable output");
}

json load_config(const SharedFlags& flags) {
  if (flags.config_path.empty()) return json::object();
  const std::string text = read_file(flags.config_path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, flags.config_path + ": " + e.what());
  }
}

fs::path require_out(const SharedFlags& flags) {
  if (flags.out_dir.empty()) throw Error(ErrorCode::UsageError, "--out DIR is required");
  const fs::path dir(flags.out_dir);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IOError, "output directory does not exist: " + dir.string());
  return dir;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string join_labels(const std::vector<Label>& labels) {
  std::string out = "{";
  for (std::size_t i = 0; i < labels.size(); ++i) out += (i ? ", " : "") + std::to_string(labels[i]);
  return out + "}";
}

int infer_classes(const Dataset& ds) {
  const Label max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
  return std::max(2, max_label + 1);
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const SharedFlags& flags, const json& overrides, std::ostream& out) {
  json cfg = load_config(flags);
  check_keys(cfg, keys({&kSynthKeys}, {}));
  for (const auto& [k, v] : overrides.items()) cfg[k] = v;
  SynthConfig synth;
  read_synth(cfg, synth);
  read(cfg, "seed", synth.seed);
  if (flags.seed) synth.seed = *flags.seed;
  validate(synth);
  const fs::path dir = require_out(flags);

  json resolved;
  write_synth(resolved, synth);
  resolved["seed"] = synth.seed;
  write_file_atomic(dir / "resolved_config.json", dump(resolved));
  const Dataset ds = generate_dataset(synth);
  write_file_atomic(dir / "dataset.csv", dataset_to_csv(ds));

  if (flags.as_json) {
    out << dump(json{{"dataset", (dir / "dataset.csv").string()}, {"rows", ds.size()}, {"columns", ds.scales() + 1}});
  } else {
    out << "wrote " << ds.size() << " rows x " << ds.scales() + 1 << " columns to " << (dir / "dataset.csv").string() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train / predict

json model_to_json(const LogisticModel& m) {
  json w = json::array();
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.weights.cols(); ++c) row.push_back(m.weights(r, c));
    w.push_back(row);
  }
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return json{{"feature_indices", m.feature_indices}, {"input_dim", m.input_dim}, {"weights", w},
              {"bias", vec(m.bias)}, {"feature_mean", vec(m.feature_mean)}, {"feature_scale", vec(m.feature_scale)}};
}

LogisticModel model_from_json(const json& j) {
  try {
    LogisticModel m;
    m.feature_indices = j.at("feature_indices").get<std::vector<int>>();
    m.input_dim = j.at("input_dim").get<Eigen::Index>();
    const auto w = j.at("weights").get<std::vector<std::vector<double>>>();
    const auto d = static_cast<Eigen::Index>(m.feature_indices.size());
    m.weights.resize(static_cast<Eigen::Index>(w.size()), d);
    for (std::size_t r = 0; r < w.size(); ++r) {
      if (static_cast<Eigen::Index>(w[r].size()) != d) throw Error(ErrorCode::ParseError, "weights row has wrong width");
      for (Eigen::Index c = 0; c < d; ++c) m.weights(static_cast<Eigen::Index>(r), c) = w[r][static_cast<std::size_t>(c)];
    }
    auto vec = [](const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval(); };
    m.bias = vec(j.at("bias").get<std::vector<double>>());
    m.feature_mean = vec(j.at("feature_mean").get<std::vector<double>>());
    m.feature_scale = vec(j.at("feature_scale").get<std::vector<double>>());
    if (m.bias.size() != m.weights.rows() || m.feature_mean.size() != d || m.feature_scale.size() != d) {
      throw Error(ErrorCode::ParseError, "model arrays disagree in shape");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("models file: ") + e.what());
  }
}

struct TrainSettings {
  SplitFractions split;
  LogisticHyper hyper;
  std::uint64_t seed = 20240601;
  int n_classes = 0;  // 0 = infer from the labels
};

TrainSettings read_train_settings(const json& cfg, const SharedFlags& flags) {
  TrainSettings s;
  read_split(cfg, s.split);
  read_hyper(cfg, s.hyper);
  read(cfg, "seed", s.seed);
  read(cfg, "n_classes", s.n_classes);
  if (flags.seed) s.seed = *flags.seed;
  s.hyper.seed = s.seed;
  return s;
}

void write_train_settings(json& j, const TrainSettings& s) {
  write_split(j, s.split);
  write_hyper(j, s.hyper);
  j["n_classes"] = s.n_classes;
  j["seed"] = s.seed;
}

struct Fitted {
  ScaleEnsemble ensemble;
  SplitIndices split;
};

Fitted fit_from_dataset(const Dataset& ds, const TrainSettings& s) {
  const SplitIndices split = split_dataset(ds.size(), s.split, derive_seed(s.seed, "split"));
  const Dataset train = subset(ds, split.train);
  const Dataset calib = subset(ds, split.calib);
  return {fit_scale_ensemble(train, calib, s.n_classes, s.hyper), split};
}

int cmd_train(const SharedFlags& flags, const std::string& data_path, std::ostream& out) {
  json cfg = load_config(flags);
  check_keys(cfg, keys({&kSplitKeys, &kHyperKeys}, {"n_classes"}));
  TrainSettings s = read_train_settings(cfg, flags);
  const fs::path dir = require_out(flags);
  const Dataset ds = read_dataset(data_path);
  if (s.n_classes == 0) s.n_classes = infer_classes(ds);

  json resolved;
  write_train_settings(resolved, s);
  write_file_atomic(dir / "resolved_config.json", dump(resolved));

  const Fitted fitted = fit_from_dataset(ds, s);
  json scales = json::array();
  for (std::size_t k = 0; k < fitted.ensemble.scales(); ++k) {
    const auto scores = fitted.ensemble.calibs[k].scores();
    json entry = model_to_json(fitted.ensemble.models[k]);
    entry["scale"] = static_cast<int>(k) + 1;
    entry["calibration_scores"] = std::vector<double>(scores.begin(), scores.end());
    scales.push_back(entry);
  }
  std::vector<Eigen::Index> calib_rows = fitted.split.calib;
  const json models{{"n_classes", s.n_classes}, {"n_rows", ds.size()}, {"calibration_rows", calib_rows}, {"scales", scales}};
  write_file_atomic(dir / "models.json", dump(models));

  if (flags.as_json) {
    out << dump(json{{"models", (dir / "models.json").string()}, {"scales", fitted.ensemble.scales()}});
  } else {
    out << "trained " << fitted.ensemble.scales() << " scale model(s) on " << fitted.split.train.size()
        << " rows, calibrated on " << fitted.split.calib.size() << " rows; wrote " << (dir / "models.json").string() << "\n";
  }
  return 0;
}

Fitted load_models(const fs::path& path, const Dataset& ds) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  try {
    Fitted f;
    const int m = j.at("n_classes").get<int>();
    if (j.at("n_rows").get<Eigen::Index>() != ds.size()) {
      throw Error(ErrorCode::ShapeError, "models were trained on a dataset with a different row count");
    }
    f.split.calib = j.at("calibration_rows").get<std::vector<Eigen::Index>>();
    for (const Eigen::Index r : f.split.calib) {
      if (r < 0 || r >= ds.size()) throw Error(ErrorCode::ParseError, "calibration row out of range");
    }
    f.ensemble.labels = LabelSpace::range(m);
    for (const json& entry : j.at("scales")) {
      const int scale = entry.at("scale").get<int>();
      f.ensemble.models.push_back(model_from_json(entry));
      f.ensemble.scorers.push_back(logistic_scorer(f.ensemble.models.back(), scale));
      f.ensemble.calibs.emplace_back(scale, entry.at("calibration_scores").get<std::vector<double>>());
    }
    if (f.ensemble.scales() == 0) throw Error(ErrorCode::ParseError, "models file lists no scales");
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

Eigen::VectorXd parse_point(const std::string& literal, Eigen::Index dim) {
  std::vector<double> values;
  std::stringstream ss(literal);
  std::string field;
  while (std::getline(ss, field, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw Error(ErrorCode::UsageError, "--x: bad number '" + field + "'");
    }
  }
  if (static_cast<Eigen::Index>(values.size()) != dim) {
    throw Error(ErrorCode::UsageError, "--x needs " + std::to_string(dim) + " comma-separated values");
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), dim);
}

struct PredictArgs {
  std::string data_path;
  std::string models_path;
  std::optional<double> alpha;
  std::optional<std::string> alloc;
  std::optional<long> index;
  std::string point;
};

int cmd_predict(const SharedFlags& flags, const PredictArgs& args, std::ostream& out) {
  json cfg = load_config(flags);
  check_keys(cfg, keys({&kSplitKeys, &kHyperKeys}, {"n_classes", "alpha", "allocation"}));
  TrainSettings s = read_train_settings(cfg, flags);
  double alpha = 0.1;
  read(cfg, "alpha", alpha);
  if (args.alpha) alpha = *args.alpha;
  check_alpha(alpha);
  AllocationStrategy strategy = read_allocation(cfg, AllocationStrategy::Uniform);
  if (args.alloc) strategy = parse_allocation(*args.alloc);
  if (args.index.has_value() == !args.point.empty()) {
    throw Error(ErrorCode::UsageError, "give exactly one of --index or --x");
  }

  const Dataset ds = read_dataset(args.data_path);
  if (s.n_classes == 0) s.n_classes = infer_classes(ds);
  const Fitted fitted = args.models_path.empty() ? fit_from_dataset(ds, s) : load_models(args.models_path, ds);
  const ScaleEnsemble& ens = fitted.ensemble;
  if (static_cast<int>(ens.scales()) != ds.scales()) {
    throw Error(ErrorCode::ShapeError, "models cover " + std::to_string(ens.scales()) + " scales, dataset has " +
                                           std::to_string(ds.scales()));
  }
  const AllocationPlan plan = plan_allocation(ens, subset(ds, fitted.split.calib).features, alpha, strategy);

  Eigen::VectorXd x;
  std::optional<Label> truth;
  if (args.index) {
    if (*args.index < 0 || *args.index >= ds.size()) {
      throw Error(ErrorCode::UsageError, "--index " + std::to_string(*args.index) + " outside 0.." + std::to_string(ds.size() - 1));
    }
    x = ds.features.row(*args.index).transpose();
    truth = ds.labels[static_cast<std::size_t>(*args.index)];
  } else {
    x = parse_point(args.point, ds.features.cols());
  }

  std::vector<PredictionSet> sets;
  json scales = json::array();
  for (std::size_t k = 0; k < ens.scales(); ++k) {
    const auto pvalues = label_pvalues(ens.scorers[k], ens.calibs[k], x, ens.labels);
    sets.push_back(set_from_pvalues(MethodId::single(ens.scorers[k].scale_id()), ens.labels, pvalues, plan.alphas[k]));
    std::vector<double> pv;
    for (const PValue& p : pvalues) pv.push_back(p.value);
    scales.push_back(json{{"scale", ens.scorers[k].scale_id()}, {"alpha_k", plan.alphas[k]}, {"pvalues", pv}, {"set", sets.back().members}});
  }
  const PredictionSet joint = intersect_sets(sets);
  json report{{"alpha", alpha}, {"allocation", to_string(strategy)}, {"labels", ens.labels.labels()},
              {"point", std::vector<double>(x.data(), x.data() + x.size())}, {"scales", scales},
              {"multiscale", json{{"alpha", joint.alpha_used}, {"set", joint.members}}}};
  if (truth) report["true_label"] = *truth;

  if (!flags.out_dir.empty()) {
    const fs::path dir = require_out(flags);
    json resolved;
    write_train_settings(resolved, s);
    resolved["alpha"] = alpha;
    resolved["allocation"] = to_string(strategy);
    write_file_atomic(dir / "resolved_config.json", dump(resolved));
    write_file_atomic(dir / "prediction.json", dump(report));
  }

  if (flags.as_json) {
    out << dump(report);
    return 0;
  }
  for (std::size_t k = 0; k < ens.scales(); ++k) {
    out << "scale " << ens.scorers[k].scale_id() << ": alpha_k = " << format_g(plan.alphas[k], 6) << "\n";
    const auto& pv = scales[k]["pvalues"];
    for (std::size_t j = 0; j < ens.labels.size(); ++j) {
      out << "  label " << ens.labels[j] << ": p = " << format_g(pv[j].get<double>(), 6) << "\n";
    }
    out << "  set: " << join_labels(sets[k].members) << "\n";
  }
  out << "multiscale: alpha = " << format_g(joint.alpha_used, 6) << "\n";
  out << "  set: " << join_labels(joint.members) << "\n";
  if (truth) out << "true label: " << *truth << (joint.contains(*truth) ? " (covered)" : " (not covered)") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// study

const std::vector<std::string> kStudies{"sweep", "noise-table", "dependence", "asymptotic"};

struct StudyOverrides {
  std::optional<int> replications;
  std::optional<int> threads;
};

template <typename Config>
void apply_common(const json& cfg, const SharedFlags& flags, const StudyOverrides& ov, Config& c) {
  read(cfg, "seed", c.base_seed);
  read(cfg, "replications", c.replications);
  read(cfg, "threads", c.threads);
  if (flags.seed) c.base_seed = *flags.seed;
  if (ov.replications) c.replications = *ov.replications;
  if (ov.threads) c.threads = *ov.threads;
}

template <typename Config>
void write_common(json& j, const Config& c) {
  j["seed"] = c.base_seed;
  j["replications"] = c.replications;
}

const char* kSeedDerivation =
    "replication r of a study level uses splitmix64-derived sub-seeds: "
    "rep = derive(base or level seed, 'replication', r); data = derive(rep, 'data'); "
    "split = derive(rep, 'split'); frozen test grids use derive(base, 'test-grid')";

int cmd_study(const SharedFlags& flags, const std::string& name, const StudyOverrides& ov, std::ostream& out) {
  if (std::find(kStudies.begin(), kStudies.end(), name) == kStudies.end()) {
    throw Error(ErrorCode::UsageError, "unknown study '" + name + "'; valid: sweep, noise-table, dependence, asymptotic");
  }
  json cfg = load_config(flags);
  const fs::path dir = require_out(flags);
  json resolved;
  json extra;
  std::string csv;
  const std::string stem = name == "noise-table" ? "noise_table" : name;

  // The resolved config is persisted before the run starts.
  auto persist = [&] { write_file_atomic(dir / "resolved_config.json", dump(resolved)); };

  if (name == "sweep") {
    check_keys(cfg, keys({&kSynthKeys, &kSplitKeys, &kHyperKeys}, {"alphas", "allocation", "replications", "shared_scorer", "threads"}));
    SweepConfig c;
    read_synth(cfg, c.synth);
    read_split(cfg, c.split);
    read_hyper(cfg, c.hyper);
    read(cfg, "alphas", c.alphas);
    c.allocation = read_allocation(cfg, c.allocation);
    read(cfg, "shared_scorer", c.shared_scorer);
    apply_common(cfg, flags, ov, c);
    validate(c);
    write_synth(resolved, c.synth);
    write_split(resolved, c.split);
    write_hyper(resolved, c.hyper);
    resolved["alphas"] = c.alphas;
    resolved["allocation"] = to_string(c.allocation);
    resolved["shared_scorer"] = c.shared_scorer;
    write_common(resolved, c);
    persist();
    const SweepResult r = run_coverage_sweep(c);
    csv = sweep_csv(r);
    json per_alpha = json::array();
    for (const AlphaRow& row : r.rows) {
      std::vector<double> nominal_scale;
      for (const double a : row.mean_allocation) nominal_scale.push_back(1.0 - a);
      per_alpha.push_back(json{{"alpha", row.alpha}, {"mean_allocation", row.mean_allocation},
                               {"nominal_total", 1.0 - row.alpha}, {"nominal_per_scale", nominal_scale}});
    }
    extra["reference_lines"] = per_alpha;
    extra["replication_seeds"] = r.replication_seeds;
    extra["diagnostics"] = json{{"evaluations", r.diagnostics.evaluations},
                                {"subset_violations", r.diagnostics.subset_violations},
                                {"domination_violations", r.diagnostics.domination_violations}};
  } else if (name == "noise-table") {
    check_keys(cfg, keys({&kSynthKeys, &kSplitKeys, &kHyperKeys},
                         {"noise_levels", "alpha", "allocation", "replications", "test_points", "oracle_scorer", "threads"}));
    NoiseTableConfig c;
    read_synth(cfg, c.synth);
    read_split(cfg, c.split);
    read_hyper(cfg, c.hyper);
    read(cfg, "noise_levels", c.noise_levels);
    read(cfg, "alpha", c.alpha);
    c.allocation = read_allocation(cfg, c.allocation);
    read(cfg, "test_points", c.test_points);
    read(cfg, "oracle_scorer", c.oracle_scorer);
    apply_common(cfg, flags, ov, c);
    validate(c);
    write_synth(resolved, c.synth);
    write_split(resolved, c.split);
    write_hyper(resolved, c.hyper);
    resolved["noise_levels"] = c.noise_levels;
    resolved["alpha"] = c.alpha;
    resolved["allocation"] = to_string(c.allocation);
    resolved["test_points"] = c.test_points;
    resolved["oracle_scorer"] = c.oracle_scorer;
    write_common(resolved, c);
    persist();
    csv = noise_table_csv(run_noise_table(c));
  } else if (name == "dependence") {
    check_keys(cfg, keys({&kSynthKeys, &kSplitKeys, &kHyperKeys}, {"rhos", "alpha", "replications", "shared_scorer", "threads"}));
    DependenceConfig c;
    read_synth(cfg, c.synth);
    read_split(cfg, c.split);
    read_hyper(cfg, c.hyper);
    read(cfg, "rhos", c.rhos);
    read(cfg, "alpha", c.alpha);
    read(cfg, "shared_scorer", c.shared_scorer);
    apply_common(cfg, flags, ov, c);
    validate(c);
    write_synth(resolved, c.synth);
    write_split(resolved, c.split);
    write_hyper(resolved, c.hyper);
    resolved["rhos"] = c.rhos;
    resolved["alpha"] = c.alpha;
    resolved["shared_scorer"] = c.shared_scorer;
    write_common(resolved, c);
    persist();
    const auto rows = run_dependence_study(c);
    csv = dependence_csv(rows);
    json diag = json::array();
    for (const DependenceRow& row : rows) {
      diag.push_back(json{{"rho", row.rho}, {"evaluations", row.evaluations},
                          {"max_alpha_mismatches", row.max_alpha_mismatches}, {"identical_scorers", row.identical_scorers}});
    }
    extra["diagnostics"] = diag;
  } else {
    check_keys(cfg, keys({&kSynthKeys}, {"n_grid", "alpha", "replications", "test_points", "threads"}));
    AsymptoticConfig c;
    read_synth(cfg, c.synth);
    read(cfg, "n_grid", c.n_grid);
    read(cfg, "alpha", c.alpha);
    read(cfg, "test_points", c.test_points);
    apply_common(cfg, flags, ov, c);
    validate(c);
    write_synth(resolved, c.synth);
    resolved["n_grid"] = c.n_grid;
    resolved["alpha"] = c.alpha;
    resolved["test_points"] = c.test_points;
    write_common(resolved, c);
    persist();
    csv = asymptotic_csv(run_asymptotic_study(c));
  }

  write_file_atomic(dir / (stem + ".csv"), csv);
  json sidecar{{"study", name}, {"config", resolved}, {"seed_derivation", kSeedDerivation}};
  for (const auto& [k, v] : extra.items()) sidecar[k] = v;
  write_file_atomic(dir / (stem + ".json"), dump(sidecar));

  if (flags.as_json) {
    out << dump(json{{"study", name}, {"csv", (dir / (stem + ".csv")).string()}, {"sidecar", (dir / (stem + ".json")).string()}});
  } else {
    out << csv;
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale conformal prediction: data generation, training, prediction and studies"};
  app.name("mscp");
  app.require_subcommand(1);

  SharedFlags gen_flags, train_flags, predict_flags, study_flags;

  auto* gen = app.add_subcommand("generate", "generate a synthetic multi-scale dataset");
  add_shared(gen, gen_flags);
  std::optional<int> n_points, scales, classes;
  std::optional<double> noise, rho;
  gen->add_option("--n-points", n_points, "number of rows");
  gen->add_option("--scales", scales, "number of scales K");
  gen->add_option("--classes", classes, "number of classes m");
  gen->add_option("--noise", noise, "latent noise standard deviation");
  gen->add_option("--rho", rho, "cross-scale dependence in [0, 1]");

  auto* train = app.add_subcommand("train", "train per-scale models and calibrate them");
  add_shared(train, train_flags);
  std::string train_data;
  train->add_option("--data", train_data, "dataset CSV")->required();

  auto* predict = app.add_subcommand("predict", "per-scale and multi-scale prediction sets for one point");
  add_shared(predict, predict_flags);
  PredictArgs pargs;
  predict->add_option("--data", pargs.data_path, "dataset CSV")->required();
  predict->add_option("--models", pargs.models_path, "models.json from `train` (otherwise trained on the fly)");
  predict->add_option("--alpha", pargs.alpha, "total miscoverage level");
  predict->add_option("--alloc", pargs.alloc, "uniform or optimal");
  predict->add_option("--index", pargs.index, "row of the dataset to predict");
  predict->add_option("--x", pargs.point, "comma-separated feature literal");

  auto* study = app.add_subcommand("study", "run a Monte Carlo study: sweep, noise-table, dependence, asymptotic");
  add_shared(study, study_flags);
  std::string study_name;
  StudyOverrides ov;
  study->add_option("name", study_name, "study name")->required();
  study->add_option("--replications", ov.replications, "override the replication count");
  study->add_option("--threads", ov.threads, "worker threads (0 = all cores)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "UsageError: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) {
      json overrides = json::object();
      if (n_points) overrides["n_points"] = *n_points;
      if (scales) overrides["n_scales"] = *scales;
      if (classes) overrides["n_classes"] = *classes;
      if (noise) overrides["noise_sd"] = *noise;
      if (rho) overrides["rho"] = *rho;
      return cmd_generate(gen_flags, overrides, out);
    }
    if (train->parsed()) return cmd_train(train_flags, train_data, out);
    if (predict->parsed()) return cmd_predict(predict_flags, pargs, out);
    return cmd_study(study_flags, study_name, ov, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mscp
