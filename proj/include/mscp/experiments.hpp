#ifndef MSCP_EXPERIMENTS_HPP
#define MSCP_EXPERIMENTS_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mscp/conformal.hpp"
#include "mscp/models.hpp"
#include "mscp/multiscale.hpp"
#include "mscp/synth.hpp"

namespace mscp {

enum class AllocationStrategy { Uniform, Optimal };

std::string to_string(AllocationStrategy s);
AllocationStrategy parse_allocation(const std::string& name);

/// Scorers and calibration scores for every scale, ready to predict.
struct ScaleEnsemble {
  LabelSpace labels;
  std::vector<ConformityScorer<double>> scorers;
  std::vector<CalibrationScores<double>> calibs;
  std::vector<LogisticModel> models;  // empty for oracle ensembles

  std::size_t scales() const noexcept { return scorers.size(); }
};

/// One logistic model per scale (scale k sees feature column k-1), trained on
/// `train` and calibrated on `calib`. With `shared_scorer`, the scale-1 model
/// is reused at every scale.
ScaleEnsemble fit_scale_ensemble(const Dataset& train, const Dataset& calib, int n_classes,
                                 const LogisticHyper& hyper, bool shared_scorer = false);

/// The oracle scorer -P(y | x) at every scale, calibrated on `calib`.
ScaleEnsemble oracle_ensemble(const SynthConfig& config, const Dataset& calib);

/// Uniform split, or the optimal allocation computed from size curves on the
/// calibration features only (never test data), floored at 1 / (n_calib + 1).
AllocationPlan plan_allocation(const ScaleEnsemble& ensemble, const Eigen::MatrixXd& calib_features,
                               double alpha, AllocationStrategy strategy);

struct PointRecord {
  std::vector<Label> members;
  bool covered = false;
  std::size_t size = 0;
};

struct MethodResult {
  MethodId method;
  std::vector<PointRecord> records;
  double coverage = 0.0;
  double mean_size = 0.0;
};

/// Fraction of true flags. Throws EmptyEvaluation on empty input.
double empirical_coverage(const std::vector<bool>& covered);

/// Per-test-point results for each single scale at `alpha` followed by the
/// multi-scale intersection at plan.alphas.
std::vector<MethodResult> evaluate_methods(const ScaleEnsemble& ensemble, const AllocationPlan& plan,
                                           double alpha, const Eigen::MatrixXd& test_features,
                                           std::span<const Label> test_labels);

/// Smallest set of labels, taken in descending probability, whose mass reaches
/// 1 - alpha; labels tied with the last one admitted are included too.
PredictionSet minimal_oracle_set(const Eigen::VectorXd& conditional, double alpha);

std::size_t symmetric_difference_size(const PredictionSet& a, const PredictionSet& b);

/// Efficiency score column: band width divided by overall coverage.
double efficiency_score(double band_width, double overall_coverage);

// ---------------------------------------------------------------------------
// Studies

struct SweepConfig {
  SynthConfig synth;
  std::vector<double> alphas{0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
  AllocationStrategy allocation = AllocationStrategy::Uniform;
  int replications = 200;
  std::uint64_t base_seed = 20240601;
  SplitFractions split;
  LogisticHyper hyper;
  bool shared_scorer = false;
  int threads = 0;  // 0 = hardware concurrency
};

struct MethodAggregate {
  MethodId method;
  std::size_t evaluations = 0;
  std::size_t covered = 0;
  std::size_t size_sum = 0;
  double coverage = 0.0;
  double mean_size = 0.0;
  double se_coverage = 0.0;
};

struct AlphaRow {
  double alpha = 0.0;
  std::vector<double> mean_allocation;  // per-scale alpha_k averaged over replications
  std::vector<MethodAggregate> methods;  // scale1..scaleK, multiscale
};

struct SweepDiagnostics {
  std::size_t evaluations = 0;           // (point, alpha, replication) triples
  std::size_t subset_violations = 0;     // multiscale set not inside some scale-k set
  /// (alpha, replication) pairs where the multiscale mean size exceeds the
  /// mean size of some scale's set at its allocated alpha_k.
  std::size_t domination_violations = 0;
};

struct SweepResult {
  std::vector<AlphaRow> rows;
  std::vector<std::uint64_t> replication_seeds;
  SweepDiagnostics diagnostics;
};

void validate(const SweepConfig& config);
SweepResult run_coverage_sweep(const SweepConfig& config);

struct NoiseTableConfig {
  SynthConfig synth;
  std::vector<double> noise_levels{0.05, 0.10, 0.15, 0.20};
  double alpha = 0.1;
  AllocationStrategy allocation = AllocationStrategy::Uniform;
  int replications = 200;
  int test_points = 300;
  std::uint64_t base_seed = 20240601;
  SplitFractions split;
  LogisticHyper hyper;
  bool oracle_scorer = false;
  int threads = 0;
};

struct NoiseTableRow {
  double noise = 0.0;
  double overall_coverage = 0.0;
  double pw_mean = 0.0;
  double pw_min = 0.0;
  double pw_max = 0.0;
  double band_width = 0.0;
  double efficiency = 0.0;
};

void validate(const NoiseTableConfig& config);
std::vector<NoiseTableRow> run_noise_table(const NoiseTableConfig& config);

struct DependenceConfig {
  SynthConfig synth{.n_scales = 2, .scale_weights = {1.0, 0.6}};
  std::vector<double> rhos{0.0, 0.25, 0.5, 0.75, 1.0};
  double alpha = 0.1;
  int replications = 500;
  std::uint64_t base_seed = 20240601;
  SplitFractions split;
  LogisticHyper hyper;
  bool shared_scorer = false;
  int threads = 0;
};

struct DependenceRow {
  double rho = 0.0;
  double coverage = 0.0;
  double mean_size = 0.0;
  std::size_t evaluations = 0;
  /// Points where the multiscale set differs from scale 1's set at max_k alpha_k.
  std::size_t max_alpha_mismatches = 0;
  /// Whether every replication produced bit-identical calibration scores at all scales.
  bool identical_scorers = false;
};

void validate(const DependenceConfig& config);
std::vector<DependenceRow> run_dependence_study(const DependenceConfig& config);

struct AsymptoticConfig {
  SynthConfig synth;
  std::vector<int> n_grid{100, 250, 500, 1000, 2500, 5000};
  double alpha = 0.1;
  int replications = 50;
  int test_points = 200;
  std::uint64_t base_seed = 20240601;
  int threads = 0;
};

struct AsymptoticRow {
  int n = 0;
  double mean_sym_diff = 0.0;
};

void validate(const AsymptoticConfig& config);
std::vector<AsymptoticRow> run_asymptotic_study(const AsymptoticConfig& config);

// ---------------------------------------------------------------------------
// CSV output, 6 significant digits.

std::string sweep_csv(const SweepResult& result);
std::string noise_table_csv(const std::vector<NoiseTableRow>& rows);
std::string dependence_csv(const std::vector<DependenceRow>& rows);
std::string asymptotic_csv(const std::vector<AsymptoticRow>& rows);

}  // namespace mscp

#endif  // MSCP_EXPERIMENTS_HPP
