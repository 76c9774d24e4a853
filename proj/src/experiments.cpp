#include "mscp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "mscp/random.hpp"

namespace mscp {

std::string to_string(AllocationStrategy s) {
  return s == AllocationStrategy::Uniform ? "uniform" : "optimal";
}

AllocationStrategy parse_allocation(const std::string& name) {
  if (name == "uniform") return AllocationStrategy::Uniform;
  if (name == "optimal") return AllocationStrategy::Optimal;
  throw Error(ErrorCode::InvalidConfig, "allocation: expected 'uniform' or 'optimal', got '" + name + "'");
}

namespace {

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots; the first exception is rethrown.
template <typename Body>
void parallel_for(int n, int threads, Body&& body) {
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<int> column_of(int k) { return {k}; }

bool is_subset(const std::vector<Label>& inner, const std::vector<Label>& outer) {
  return std::all_of(inner.begin(), inner.end(), [&](Label y) {
    return std::find(outer.begin(), outer.end(), y) != outer.end();
  });
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void check_alpha_list(const std::vector<double>& alphas, const char* field) {
  if (alphas.empty()) throw Error(ErrorCode::InvalidConfig, std::string(field) + ": must not be empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) {
      throw Error(ErrorCode::InvalidConfig, std::string(field) + "[" + std::to_string(i) +
                                                "] = " + fmt6(alphas[i]) + " is outside (0, 1)");
    }
  }
}

void check_alpha_field(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "alpha = " + fmt6(alpha) + " is outside (0, 1)");
  }
}

void check_replications(int r) {
  if (r < 1) throw Error(ErrorCode::InvalidConfig, "replications: must be >= 1");
}

struct Replicate {
  Dataset train;
  Dataset calib;
  Dataset test;
};

Replicate draw_replicate(const SynthConfig& base, const SplitFractions& fractions, std::uint64_t rep_seed) {
  SynthConfig cfg = base;
  cfg.seed = derive_seed(rep_seed, "data");
  const Dataset ds = generate_dataset(cfg);
  const SplitIndices split = split_dataset(ds.size(), fractions, derive_seed(rep_seed, "split"));
  return {subset(ds, split.train), subset(ds, split.calib), subset(ds, split.test)};
}

}  // namespace

// ---------------------------------------------------------------------------

ScaleEnsemble fit_scale_ensemble(const Dataset& train, const Dataset& calib, int n_classes,
                                 const LogisticHyper& hyper, bool shared_scorer) {
  if (train.scales() != calib.scales()) {
    throw Error(ErrorCode::ShapeError, "train and calibration sets differ in number of scales");
  }
  ScaleEnsemble ens;
  ens.labels = LabelSpace::range(n_classes);
  const int scales = train.scales();
  for (int k = 0; k < scales; ++k) {
    if (shared_scorer && k > 0) {
      ens.models.push_back(ens.models.front());
    } else {
      ens.models.push_back(train_logistic(train.features, train.labels, n_classes, column_of(k), hyper));
    }
    ens.scorers.push_back(logistic_scorer(ens.models.back(), k + 1));
    ens.calibs.push_back(score_calibration(ens.scorers.back(), calib.features, std::span<const Label>(calib.labels)));
  }
  return ens;
}

ScaleEnsemble oracle_ensemble(const SynthConfig& config, const Dataset& calib) {
  ScaleEnsemble ens;
  ens.labels = LabelSpace::range(config.n_classes);
  const OracleModel oracle{config};
  for (int k = 0; k < config.n_scales; ++k) {
    ens.scorers.push_back(oracle_scorer(oracle, k + 1));
    if (k == 0) {
      ens.calibs.push_back(score_calibration(ens.scorers.back(), calib.features, std::span<const Label>(calib.labels)));
    } else {
      // Same score function at every scale: reuse the sorted scores.
      const auto s = ens.calibs.front().scores();
      ens.calibs.emplace_back(k + 1, std::vector<double>(s.begin(), s.end()));
    }
  }
  return ens;
}

AllocationPlan plan_allocation(const ScaleEnsemble& ensemble, const Eigen::MatrixXd& calib_features,
                               double alpha, AllocationStrategy strategy) {
  const int scales = static_cast<int>(ensemble.scales());
  const double floor = 1.0 / static_cast<double>(ensemble.calibs.front().size() + 1);
  if (strategy == AllocationStrategy::Uniform) {
    AllocationPlan plan = allocate_uniform(alpha, scales);
    if (scales > 1 && plan.alphas.front() < floor) {
      throw Error(ErrorCode::InfeasibleAllocation,
                  "alpha / K = " + fmt6(plan.alphas.front()) + " is below the 1/(n+1) floor " + fmt6(floor));
    }
    return plan;
  }
  const auto grid = default_alpha_grid(alpha, scales);
  std::vector<SizeCurve> curves;
  for (std::size_t k = 0; k < ensemble.scales(); ++k) {
    curves.push_back(estimate_size_curve(ensemble.scorers[k], ensemble.calibs[k], calib_features,
                                         ensemble.labels, grid));
  }
  AllocatorOptions options;
  options.min_alpha = scales > 1 ? floor : 0.0;
  return allocate_optimal(curves, alpha, options);
}

double empirical_coverage(const std::vector<bool>& covered) {
  if (covered.empty()) throw Error(ErrorCode::EmptyEvaluation, "no coverage records");
  const auto hits = std::count(covered.begin(), covered.end(), true);
  return static_cast<double>(hits) / static_cast<double>(covered.size());
}

std::vector<MethodResult> evaluate_methods(const ScaleEnsemble& ensemble, const AllocationPlan& plan,
                                           double alpha, const Eigen::MatrixXd& test_features,
                                           std::span<const Label> test_labels) {
  const std::size_t K = ensemble.scales();
  if (plan.scales() != K) throw Error(ErrorCode::IncompatibleSets, "plan and ensemble differ in scales");
  if (test_features.rows() == 0) throw Error(ErrorCode::EmptyEvaluation, "no test points");
  if (static_cast<std::size_t>(test_features.rows()) != test_labels.size()) {
    throw Error(ErrorCode::ShapeError, "test features and labels differ in length");
  }
  check_alpha(alpha);
  validate_plan(plan);

  std::vector<MethodResult> results(K + 1);
  for (std::size_t k = 0; k < K; ++k) results[k].method = MethodId::single(ensemble.scorers[k].scale_id());
  results[K].method = MethodId::multiscale();

  std::vector<PredictionSet> at_plan(K);
  for (Eigen::Index i = 0; i < test_features.rows(); ++i) {
    const Eigen::VectorXd x = test_features.row(i).transpose();
    const Label truth = test_labels[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < K; ++k) {
      const auto pvalues = label_pvalues(ensemble.scorers[k], ensemble.calibs[k], x, ensemble.labels);
      PredictionSet single = set_from_pvalues(results[k].method, ensemble.labels, pvalues, alpha);
      at_plan[k] = set_from_pvalues(results[k].method, ensemble.labels, pvalues, plan.alphas[k]);
      results[k].records.push_back({single.members, single.contains(truth), single.size()});
    }
    const PredictionSet joint = intersect_sets(at_plan);
    results[K].records.push_back({joint.members, joint.contains(truth), joint.size()});
  }
  for (MethodResult& r : results) {
    std::size_t covered = 0, sizes = 0;
    for (const PointRecord& rec : r.records) {
      covered += rec.covered ? 1 : 0;
      sizes += rec.size;
    }
    const auto n = static_cast<double>(r.records.size());
    r.coverage = static_cast<double>(covered) / n;
    r.mean_size = static_cast<double>(sizes) / n;
  }
  return results;
}

PredictionSet minimal_oracle_set(const Eigen::VectorXd& conditional, double alpha) {
  check_alpha(alpha);
  const Eigen::Index m = conditional.size();
  if (m < 2) throw Error(ErrorCode::InvalidDistribution, "conditional needs at least 2 entries");
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(conditional(j) >= 0.0) || !std::isfinite(conditional(j))) {
      throw Error(ErrorCode::InvalidDistribution, "conditional has a negative or non-finite entry");
    }
  }
  if (std::abs(conditional.sum() - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidDistribution, "conditional sums to " + fmt6(conditional.sum()));
  }
  std::vector<Label> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Label a, Label b) { return conditional(a) > conditional(b); });

  std::vector<Label> chosen;
  double mass = 0.0;
  double threshold = 0.0;
  for (const Label y : order) {
    chosen.push_back(y);
    mass += conditional(y);
    threshold = conditional(y);
    if (mass >= 1.0 - alpha - 1e-12) break;
  }
  // Labels tied with the threshold probability go in as well.
  for (std::size_t j = chosen.size(); j < order.size(); ++j) {
    if (conditional(order[j]) == threshold) chosen.push_back(order[j]);
  }
  std::sort(chosen.begin(), chosen.end());
  return PredictionSet{MethodId{-1}, LabelSpace::range(static_cast<int>(m)), std::move(chosen), alpha};
}

std::size_t symmetric_difference_size(const PredictionSet& a, const PredictionSet& b) {
  std::size_t count = 0;
  for (const Label y : a.members) count += b.contains(y) ? 0 : 1;
  for (const Label y : b.members) count += a.contains(y) ? 0 : 1;
  return count;
}

double efficiency_score(double band_width, double overall_coverage) {
  return band_width / overall_coverage;
}

// ---------------------------------------------------------------------------
// Coverage sweep

void validate(const SweepConfig& c) {
  validate(c.synth);
  check_alpha_list(c.alphas, "alphas");
  check_replications(c.replications);
}

namespace {

struct RepAlphaStats {
  std::vector<std::size_t> covered;
  std::vector<std::size_t> size_sum;
  std::size_t evaluations = 0;
  std::vector<double> allocation;
  std::size_t subset_violations = 0;
  bool dominated = true;
};

}  // namespace

SweepResult run_coverage_sweep(const SweepConfig& config) {
  validate(config);
  const int m = config.synth.n_classes;
  const std::size_t K = static_cast<std::size_t>(config.synth.n_scales);
  const std::size_t A = config.alphas.size();

  SweepResult result;
  for (int r = 0; r < config.replications; ++r) {
    result.replication_seeds.push_back(derive_seed(config.base_seed, "replication", static_cast<std::uint64_t>(r)));
  }
  std::vector<std::vector<RepAlphaStats>> per_rep(static_cast<std::size_t>(config.replications));

  parallel_for(config.replications, config.threads, [&](int r) {
    const Replicate rep = draw_replicate(config.synth, config.split, result.replication_seeds[static_cast<std::size_t>(r)]);
    const ScaleEnsemble ens = fit_scale_ensemble(rep.train, rep.calib, m, config.hyper, config.shared_scorer);
    auto& stats = per_rep[static_cast<std::size_t>(r)];
    stats.resize(A);
    for (std::size_t a = 0; a < A; ++a) {
      const double alpha = config.alphas[a];
      const AllocationPlan plan = plan_allocation(ens, rep.calib.features, alpha, config.allocation);
      const auto methods = evaluate_methods(ens, plan, alpha, rep.test.features, rep.test.labels);
      RepAlphaStats& s = stats[a];
      s.covered.assign(K + 1, 0);
      s.size_sum.assign(K + 1, 0);
      s.allocation = plan.alphas;
      s.evaluations = methods.front().records.size();
      for (std::size_t j = 0; j <= K; ++j) {
        for (const PointRecord& rec : methods[j].records) {
          s.covered[j] += rec.covered ? 1 : 0;
          s.size_sum[j] += rec.size;
        }
      }
      // The intersected per-scale sets (at plan.alphas) are rebuilt here for
      // the subset and size-domination checks.
      std::vector<std::size_t> component_size(K, 0);
      for (Eigen::Index i = 0; i < rep.test.features.rows(); ++i) {
        const Eigen::VectorXd x = rep.test.features.row(i).transpose();
        const auto& joint = methods[K].records[static_cast<std::size_t>(i)].members;
        for (std::size_t k = 0; k < K; ++k) {
          const PredictionSet sk = prediction_set(ens.scorers[k], ens.calibs[k], x, ens.labels, plan.alphas[k]);
          if (!is_subset(joint, sk.members)) ++s.subset_violations;
          component_size[k] += sk.size();
        }
      }
      for (std::size_t k = 0; k < K; ++k) s.dominated = s.dominated && s.size_sum[K] <= component_size[k];
    }
  });

  for (std::size_t a = 0; a < A; ++a) {
    AlphaRow row;
    row.alpha = config.alphas[a];
    row.mean_allocation.assign(K, 0.0);
    row.methods.resize(K + 1);
    for (std::size_t j = 0; j <= K; ++j) {
      row.methods[j].method = j < K ? MethodId::single(static_cast<int>(j) + 1) : MethodId::multiscale();
    }
    for (const auto& stats : per_rep) {
      const RepAlphaStats& s = stats[a];
      for (std::size_t k = 0; k < K; ++k) row.mean_allocation[k] += s.allocation[k];
      for (std::size_t j = 0; j <= K; ++j) {
        row.methods[j].evaluations += s.evaluations;
        row.methods[j].covered += s.covered[j];
        row.methods[j].size_sum += s.size_sum[j];
      }
      result.diagnostics.evaluations += s.evaluations;
      result.diagnostics.subset_violations += s.subset_violations;
      result.diagnostics.domination_violations += s.dominated ? 0 : 1;
    }
    for (double& v : row.mean_allocation) v /= static_cast<double>(config.replications);
    for (MethodAggregate& agg : row.methods) {
      const auto n = static_cast<double>(agg.evaluations);
      agg.coverage = static_cast<double>(agg.covered) / n;
      agg.mean_size = static_cast<double>(agg.size_sum) / n;
      agg.se_coverage = std::sqrt(agg.coverage * (1.0 - agg.coverage) / n);
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Noise table

void validate(const NoiseTableConfig& c) {
  validate(c.synth);
  if (c.noise_levels.empty()) throw Error(ErrorCode::InvalidConfig, "noise_levels: must not be empty");
  for (std::size_t i = 0; i < c.noise_levels.size(); ++i) {
    if (!(c.noise_levels[i] >= 0.0) || !std::isfinite(c.noise_levels[i])) {
      throw Error(ErrorCode::InvalidConfig, "noise_levels[" + std::to_string(i) + "] must be finite and >= 0");
    }
  }
  check_alpha_field(c.alpha);
  check_replications(c.replications);
  if (c.test_points < 1) throw Error(ErrorCode::InvalidConfig, "test_points: must be >= 1");
}

std::vector<NoiseTableRow> run_noise_table(const NoiseTableConfig& config) {
  validate(config);
  const auto T = static_cast<std::size_t>(config.test_points);
  std::vector<NoiseTableRow> rows;
  for (std::size_t level = 0; level < config.noise_levels.size(); ++level) {
    SynthConfig cfg = config.synth;
    cfg.noise_sd = config.noise_levels[level];
    validate(cfg);
    // The test features are frozen across replications and noise levels;
    // their labels are redrawn from the generative model each replication.
    Rng grid_rng(derive_seed(config.base_seed, "test-grid"));
    const Eigen::MatrixXd test_x = sample_features(cfg, config.test_points, grid_rng);
    const auto edges = bin_edges(cfg);
    const std::uint64_t level_seed = derive_seed(config.base_seed, "noise-level", level);

    std::vector<std::vector<char>> covered(static_cast<std::size_t>(config.replications));
    std::vector<std::size_t> size_sum(static_cast<std::size_t>(config.replications), 0);
    parallel_for(config.replications, config.threads, [&](int r) {
      const std::uint64_t rep_seed = derive_seed(level_seed, "replication", static_cast<std::uint64_t>(r));
      const Replicate rep = draw_replicate(cfg, config.split, rep_seed);
      const ScaleEnsemble ens = config.oracle_scorer
                                    ? oracle_ensemble(cfg, rep.calib)
                                    : fit_scale_ensemble(rep.train, rep.calib, cfg.n_classes, config.hyper);
      Rng label_rng(derive_seed(rep_seed, "test-labels"));
      std::vector<Label> test_y(T);
      for (std::size_t i = 0; i < T; ++i) {
        test_y[i] = sample_label(cfg, edges, test_x.row(static_cast<Eigen::Index>(i)).transpose(), label_rng);
      }
      const AllocationPlan plan = plan_allocation(ens, rep.calib.features, config.alpha, config.allocation);
      const auto methods = evaluate_methods(ens, plan, config.alpha, test_x, test_y);
      const MethodResult& joint = methods.back();
      auto& cov = covered[static_cast<std::size_t>(r)];
      cov.resize(T);
      for (std::size_t i = 0; i < T; ++i) {
        cov[i] = joint.records[i].covered ? 1 : 0;
        size_sum[static_cast<std::size_t>(r)] += joint.records[i].size;
      }
    });

    std::size_t total_covered = 0, total_size = 0;
    std::vector<double> pointwise(T, 0.0);
    for (std::size_t r = 0; r < covered.size(); ++r) {
      total_size += size_sum[r];
      for (std::size_t i = 0; i < T; ++i) {
        total_covered += static_cast<std::size_t>(covered[r][i]);
        pointwise[i] += covered[r][i];
      }
    }
    const double evaluations = static_cast<double>(T) * config.replications;
    for (double& p : pointwise) p /= config.replications;
    NoiseTableRow row;
    row.noise = cfg.noise_sd;
    row.overall_coverage = static_cast<double>(total_covered) / evaluations;
    row.pw_mean = std::accumulate(pointwise.begin(), pointwise.end(), 0.0) / static_cast<double>(T);
    row.pw_min = *std::min_element(pointwise.begin(), pointwise.end());
    row.pw_max = *std::max_element(pointwise.begin(), pointwise.end());
    row.band_width = static_cast<double>(total_size) / evaluations;
    row.efficiency = efficiency_score(row.band_width, row.overall_coverage);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Dependence study

void validate(const DependenceConfig& c) {
  validate(c.synth);
  if (c.rhos.empty()) throw Error(ErrorCode::InvalidConfig, "rhos: must not be empty");
  for (std::size_t i = 0; i < c.rhos.size(); ++i) {
    if (!(c.rhos[i] >= 0.0 && c.rhos[i] <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "rhos[" + std::to_string(i) + "] = " + fmt6(c.rhos[i]) + " is outside [0, 1]");
    }
  }
  check_alpha_field(c.alpha);
  check_replications(c.replications);
}

std::vector<DependenceRow> run_dependence_study(const DependenceConfig& config) {
  validate(config);
  const std::size_t K = static_cast<std::size_t>(config.synth.n_scales);
  std::vector<DependenceRow> rows;
  for (std::size_t level = 0; level < config.rhos.size(); ++level) {
    SynthConfig cfg = config.synth;
    cfg.rho = config.rhos[level];
    const std::uint64_t level_seed = derive_seed(config.base_seed, "rho-level", level);
    struct Stats {
      std::size_t evaluations = 0, covered = 0, size_sum = 0, mismatches = 0;
      bool identical = true;
    };
    std::vector<Stats> stats(static_cast<std::size_t>(config.replications));
    parallel_for(config.replications, config.threads, [&](int r) {
      const Replicate rep = draw_replicate(cfg, config.split, derive_seed(level_seed, "replication", static_cast<std::uint64_t>(r)));
      const ScaleEnsemble ens = fit_scale_ensemble(rep.train, rep.calib, cfg.n_classes, config.hyper, config.shared_scorer);
      const AllocationPlan plan = allocate_uniform(config.alpha, static_cast<int>(K));
      const auto methods = evaluate_methods(ens, plan, config.alpha, rep.test.features, rep.test.labels);
      Stats& s = stats[static_cast<std::size_t>(r)];
      for (std::size_t k = 1; k < K; ++k) {
        const auto a = ens.calibs[0].scores();
        const auto b = ens.calibs[k].scores();
        s.identical = s.identical && std::equal(a.begin(), a.end(), b.begin(), b.end());
      }
      const MethodResult& joint = methods.back();
      for (Eigen::Index i = 0; i < rep.test.features.rows(); ++i) {
        const auto& rec = joint.records[static_cast<std::size_t>(i)];
        ++s.evaluations;
        s.covered += rec.covered ? 1 : 0;
        s.size_sum += rec.size;
        const PredictionSet at_max = prediction_set(ens.scorers[0], ens.calibs[0],
                                                    Eigen::VectorXd(rep.test.features.row(i).transpose()),
                                                    ens.labels, plan.max_alpha());
        if (at_max.members != rec.members) ++s.mismatches;
      }
    });
    DependenceRow row;
    row.rho = cfg.rho;
    row.identical_scorers = true;
    std::size_t covered = 0, size_sum = 0;
    for (const Stats& s : stats) {
      row.evaluations += s.evaluations;
      covered += s.covered;
      size_sum += s.size_sum;
      row.max_alpha_mismatches += s.mismatches;
      row.identical_scorers = row.identical_scorers && s.identical;
    }
    row.coverage = static_cast<double>(covered) / static_cast<double>(row.evaluations);
    row.mean_size = static_cast<double>(size_sum) / static_cast<double>(row.evaluations);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Asymptotic study

void validate(const AsymptoticConfig& c) {
  validate(c.synth);
  if (c.n_grid.empty()) throw Error(ErrorCode::InvalidConfig, "n_grid: must not be empty");
  for (std::size_t i = 0; i < c.n_grid.size(); ++i) {
    if (c.n_grid[i] < c.synth.n_scales + c.synth.n_classes) {
      throw Error(ErrorCode::InvalidConfig, "n_grid[" + std::to_string(i) + "] is too small");
    }
    if (i > 0 && c.n_grid[i] <= c.n_grid[i - 1]) {
      throw Error(ErrorCode::InvalidConfig, "n_grid must be strictly increasing");
    }
  }
  check_alpha_field(c.alpha);
  check_replications(c.replications);
  if (c.test_points < 1) throw Error(ErrorCode::InvalidConfig, "test_points: must be >= 1");
}

std::vector<AsymptoticRow> run_asymptotic_study(const AsymptoticConfig& config) {
  validate(config);
  Rng grid_rng(derive_seed(config.base_seed, "test-grid"));
  const Eigen::MatrixXd test_x = sample_features(config.synth, config.test_points, grid_rng);
  std::vector<PredictionSet> targets;
  for (Eigen::Index i = 0; i < test_x.rows(); ++i) {
    targets.push_back(minimal_oracle_set(oracle_conditional(config.synth, test_x.row(i).transpose()), config.alpha));
  }
  const std::vector<Label> dummy_labels(static_cast<std::size_t>(config.test_points), 0);

  std::vector<AsymptoticRow> rows;
  for (std::size_t level = 0; level < config.n_grid.size(); ++level) {
    const int n = config.n_grid[level];
    const std::uint64_t level_seed = derive_seed(config.base_seed, "n-level", level);
    std::vector<std::size_t> diff(static_cast<std::size_t>(config.replications), 0);
    parallel_for(config.replications, config.threads, [&](int r) {
      SynthConfig cfg = config.synth;
      cfg.n_points = n;
      cfg.seed = derive_seed(level_seed, "replication", static_cast<std::uint64_t>(r));
      const Dataset calib = generate_dataset(cfg);
      const ScaleEnsemble ens = oracle_ensemble(cfg, calib);
      const AllocationPlan plan = allocate_uniform(config.alpha, cfg.n_scales);
      const auto methods = evaluate_methods(ens, plan, config.alpha, test_x, dummy_labels);
      const MethodResult& joint = methods.back();
      for (std::size_t i = 0; i < targets.size(); ++i) {
        PredictionSet got{MethodId::multiscale(), ens.labels, joint.records[i].members, config.alpha};
        diff[static_cast<std::size_t>(r)] += symmetric_difference_size(got, targets[i]);
      }
    });
    const double total = static_cast<double>(std::accumulate(diff.begin(), diff.end(), std::size_t{0}));
    rows.push_back({n, total / (static_cast<double>(config.replications) * config.test_points)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

std::string sweep_csv(const SweepResult& result) {
  std::string out = "alpha,method,coverage,mean_size,se_coverage\n";
  for (const AlphaRow& row : result.rows) {
    for (const MethodAggregate& m : row.methods) {
      out += fmt6(row.alpha) + "," + m.method.name() + "," + fmt6(m.coverage) + "," + fmt6(m.mean_size) +
             "," + fmt6(m.se_coverage) + "\n";
    }
  }
  return out;
}

std::string noise_table_csv(const std::vector<NoiseTableRow>& rows) {
  std::string out = "noise,overall_coverage,pw_mean,pw_min,pw_max,band_width,efficiency\n";
  for (const NoiseTableRow& r : rows) {
    out += fmt6(r.noise) + "," + fmt6(r.overall_coverage) + "," + fmt6(r.pw_mean) + "," + fmt6(r.pw_min) +
           "," + fmt6(r.pw_max) + "," + fmt6(r.band_width) + "," + fmt6(r.efficiency) + "\n";
  }
  return out;
}

std::string dependence_csv(const std::vector<DependenceRow>& rows) {
  std::string out = "rho,coverage,mean_size\n";
  for (const DependenceRow& r : rows) out += fmt6(r.rho) + "," + fmt6(r.coverage) + "," + fmt6(r.mean_size) + "\n";
  return out;
}

std::string asymptotic_csv(const std::vector<AsymptoticRow>& rows) {
  std::string out = "n,mean_sym_diff\n";
  for (const AsymptoticRow& r : rows) out += std::to_string(r.n) + "," + fmt6(r.mean_sym_diff) + "\n";
  return out;
}

}  // namespace mscp
