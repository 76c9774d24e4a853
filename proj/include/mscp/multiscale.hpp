#ifndef MSCP_MULTISCALE_HPP
#define MSCP_MULTISCALE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "mscp/conformal.hpp"

namespace mscp {

/// Per-scale miscoverage levels; the alphas sum to `total` within 1e-12.
struct AllocationPlan {
  std::vector<double> alphas;
  double total = 0.0;

  std::size_t scales() const noexcept { return alphas.size(); }
  double max_alpha() const;
};

/// Throws InvalidAlpha unless every alpha_k is in (0,1) and they sum to total.
void validate_plan(const AllocationPlan& plan);

/// Empirical mean set size f_k(alpha) on an increasing alpha grid.
struct SizeCurve {
  int scale_id = 1;
  std::vector<double> grid;
  std::vector<double> sizes;
};

/// Intersection of K prediction sets for one test point. The result carries
/// method "multiscale" and alpha_used = sum of the inputs' alpha_used.
PredictionSet intersect_sets(std::span<const PredictionSet> sets);

/// alpha_k = alpha / K for every scale.
AllocationPlan allocate_uniform(double alpha, int scales);

/// Least-squares projection of `values` onto non-increasing sequences
/// (pool-adjacent-violators). Optional weights default to 1.
std::vector<double> isotonic_nonincreasing(std::span<const double> values,
                                           std::span<const double> weights = {});

/// `points` log-spaced alphas covering [alpha / (10 K), min(0.5, 5 alpha)].
std::vector<double> default_alpha_grid(double alpha, int scales, int points = 25);

/// Averages |prediction_set(x, a)| over the rows of `eval_points` for every
/// grid alpha, then projects the curve onto non-increasing sequences.
template <typename Scalar>
SizeCurve estimate_size_curve(const ConformityScorer<Scalar>& scorer,
                              const CalibrationScores<Scalar>& calib,
                              const MatrixX<Scalar>& eval_points, const LabelSpace& labels,
                              std::span<const double> grid);

/// Log-log interpolant of a size curve: ln f is piecewise linear in ln alpha,
/// so power laws are reproduced exactly. Sizes are floored at `size_floor`
/// before taking logs.
class LogLogInterpolant {
 public:
  LogLogInterpolant(const SizeCurve& curve, double size_floor);

  double lower() const noexcept { return log_alpha_.empty() ? 0.0 : lo_; }
  double upper() const noexcept { return hi_; }
  /// ln f(alpha); alpha is clamped into [lower, upper].
  double log_value(double alpha) const;
  /// psi(alpha) = d/dalpha ln f(alpha), right-continuous at knots.
  double elasticity(double alpha) const;
  /// True when psi is strictly increasing inside every segment and does not
  /// decrease across knots, i.e. ln f is strictly convex in alpha.
  bool elasticity_strictly_increasing(double tol = 1e-12) const;
  /// Largest alpha in [lower, upper] with psi(alpha) <= target (lower if none).
  /// Requires elasticity_strictly_increasing().
  double inverse_elasticity(double target) const;

  std::span<const double> knots() const noexcept { return knots_; }

 private:
  std::size_t segment(double alpha) const;
  double slope(std::size_t seg) const { return slopes_[seg]; }

  std::vector<double> knots_;
  std::vector<double> log_alpha_;
  std::vector<double> log_size_;
  std::vector<double> slopes_;  // d ln f / d ln alpha per segment
  double lo_ = 0.0;
  double hi_ = 0.0;
};

struct AllocatorOptions {
  /// Sizes below this are clamped before taking logs.
  double size_floor = 1e-3;
  /// Lower bound on every alpha_k, e.g. 1 / (n_calib + 1). Zero disables it.
  double min_alpha = 0.0;
  /// Step of the fallback grid search, refined locally afterwards.
  double grid_step = 1e-4;
};

/// Which solver produced an optimal allocation.
enum class AllocatorRoute { Trivial, Bisection, GridSearch };

struct OptimalAllocation {
  AllocationPlan plan;
  double objective = 0.0;  // sum_k ln f_k(alpha_k) on the interpolants
  double multiplier = 0.0;  // lambda with psi_k(alpha_k) = -lambda (bisection route)
  AllocatorRoute route = AllocatorRoute::Trivial;
};

/// Minimizes sum_k ln f_k(alpha_k) subject to sum_k alpha_k = alpha and each
/// alpha_k inside its curve's grid range. Bisects on the shared multiplier
/// lambda so that every psi_k(alpha_k) = -lambda; falls back to a projected
/// grid search when some psi_k is not strictly increasing.
OptimalAllocation solve_optimal_allocation(std::span<const SizeCurve> curves, double alpha,
                                           const AllocatorOptions& options = {});

AllocationPlan allocate_optimal(std::span<const SizeCurve> curves, double alpha,
                                const AllocatorOptions& options = {});

/// sum_k ln f_k(alpha_k) evaluated on the log-log interpolants.
double allocation_objective(std::span<const SizeCurve> curves, const AllocationPlan& plan,
                            double size_floor = AllocatorOptions{}.size_floor);

/// Intersection of the per-scale split-conformal sets built at plan.alphas.
template <typename Scalar>
PredictionSet multiscale_predict(std::span<const ConformityScorer<Scalar>> scorers,
                                 std::span<const CalibrationScores<Scalar>> calibs,
                                 const AllocationPlan& plan, const VectorX<Scalar>& x,
                                 const LabelSpace& labels) {
  if (scorers.size() != calibs.size() || scorers.size() != plan.scales() || scorers.empty()) {
    throw Error(ErrorCode::IncompatibleSets, "scorers, calibrations and plan disagree in length");
  }
  check_alpha(plan.total, "plan total");
  std::vector<PredictionSet> sets;
  sets.reserve(scorers.size());
  for (std::size_t k = 0; k < scorers.size(); ++k) {
    sets.push_back(prediction_set(scorers[k], calibs[k], x, labels, plan.alphas[k]));
  }
  return intersect_sets(sets);
}

template <typename Scalar>
SizeCurve estimate_size_curve(const ConformityScorer<Scalar>& scorer,
                              const CalibrationScores<Scalar>& calib,
                              const MatrixX<Scalar>& eval_points, const LabelSpace& labels,
                              std::span<const double> grid) {
  if (eval_points.rows() == 0) throw Error(ErrorCode::EmptyEvaluation, "no evaluation points");
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "empty alpha grid");
  for (std::size_t j = 0; j < grid.size(); ++j) {
    check_alpha(grid[j], "grid alpha");
    if (j > 0 && !(grid[j] > grid[j - 1])) {
      throw Error(ErrorCode::InvalidConfig, "alpha grid must be strictly increasing");
    }
  }
  std::vector<double> totals(grid.size(), 0.0);
  for (Eigen::Index i = 0; i < eval_points.rows(); ++i) {
    const auto pvalues = label_pvalues(scorer, calib, VectorX<Scalar>(eval_points.row(i).transpose()), labels);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      std::size_t size = 0;
      for (const PValue& p : pvalues) size += p.value > grid[j] ? 1 : 0;
      totals[j] += static_cast<double>(size);
    }
  }
  SizeCurve curve;
  curve.scale_id = scorer.scale_id();
  curve.grid.assign(grid.begin(), grid.end());
  for (double& t : totals) t /= static_cast<double>(eval_points.rows());
  curve.sizes = isotonic_nonincreasing(totals);
  return curve;
}

}  // namespace mscp

#endif  // MSCP_MULTISCALE_HPP
