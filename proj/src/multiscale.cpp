#include "mscp/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

namespace mscp {

double AllocationPlan::max_alpha() const {
  return alphas.empty() ? 0.0 : *std::max_element(alphas.begin(), alphas.end());
}

void validate_plan(const AllocationPlan& plan) {
  if (plan.alphas.empty()) throw Error(ErrorCode::InvalidAlpha, "allocation plan has no scales");
  check_alpha(plan.total, "plan total");
  double sum = 0.0;
  for (const double a : plan.alphas) {
    check_alpha(a, "alpha_k");
    sum += a;
  }
  if (std::abs(sum - plan.total) > 1e-12) {
    throw Error(ErrorCode::InvalidAlpha, "alpha_k sum to " + std::to_string(sum) + ", expected " +
                                             std::to_string(plan.total));
  }
}

PredictionSet intersect_sets(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw Error(ErrorCode::IncompatibleSets, "nothing to intersect");
  const LabelSpace& space = sets.front().space;
  double alpha_sum = 0.0;
  for (const PredictionSet& s : sets) {
    if (!(s.space == space)) throw Error(ErrorCode::IncompatibleSets, "label spaces differ");
    alpha_sum += s.alpha_used;
  }
  PredictionSet out{MethodId::multiscale(), space, {}, alpha_sum};
  for (const Label y : space.labels()) {
    const bool everywhere =
        std::all_of(sets.begin(), sets.end(), [y](const PredictionSet& s) { return s.contains(y); });
    if (everywhere) out.members.push_back(y);
  }
  return out;
}

AllocationPlan allocate_uniform(double alpha, int scales) {
  check_alpha(alpha);
  if (scales < 1) throw Error(ErrorCode::InvalidAlpha, "number of scales must be >= 1");
  AllocationPlan plan{std::vector<double>(static_cast<std::size_t>(scales), alpha / scales), alpha};
  validate_plan(plan);
  return plan;
}

std::vector<double> isotonic_nonincreasing(std::span<const double> values,
                                           std::span<const double> weights) {
  if (!weights.empty() && weights.size() != values.size()) {
    throw Error(ErrorCode::ShapeError, "isotonic weights and values differ in length");
  }
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    blocks.push_back({values[i], w, 1});
    // Pool while the non-increasing order is violated.
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean < blocks.back().mean) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w_sum = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w_sum;
      prev.weight = w_sum;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : blocks) out.insert(out.end(), b.count, b.mean);
  return out;
}

std::vector<double> default_alpha_grid(double alpha, int scales, int points) {
  check_alpha(alpha);
  if (scales < 1 || points < 2) throw Error(ErrorCode::InvalidConfig, "bad alpha grid request");
  const double lo = alpha / (10.0 * scales);
  const double hi = std::min(0.5, 5.0 * alpha);
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double step = (std::log(hi) - std::log(lo)) / (points - 1);
  for (int j = 0; j < points; ++j) grid[static_cast<std::size_t>(j)] = std::exp(std::log(lo) + step * j);
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

// ---------------------------------------------------------------------------
// LogLogInterpolant

LogLogInterpolant::LogLogInterpolant(const SizeCurve& curve, double size_floor) {
  if (curve.grid.empty() || curve.grid.size() != curve.sizes.size()) {
    throw Error(ErrorCode::ShapeError, "size curve grid and sizes differ in length");
  }
  for (std::size_t j = 0; j < curve.grid.size(); ++j) {
    if (!(curve.grid[j] > 0.0) || (j > 0 && !(curve.grid[j] > curve.grid[j - 1]))) {
      throw Error(ErrorCode::InvalidConfig, "size curve grid must be positive and increasing");
    }
  }
  knots_ = curve.grid;
  for (std::size_t j = 0; j < knots_.size(); ++j) {
    log_alpha_.push_back(std::log(knots_[j]));
    log_size_.push_back(std::log(std::max(curve.sizes[j], size_floor)));
  }
  for (std::size_t j = 0; j + 1 < knots_.size(); ++j) {
    slopes_.push_back((log_size_[j + 1] - log_size_[j]) / (log_alpha_[j + 1] - log_alpha_[j]));
  }
  lo_ = knots_.front();
  hi_ = knots_.back();
}

std::size_t LogLogInterpolant::segment(double alpha) const {
  if (slopes_.empty()) return 0;
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), alpha);
  std::size_t seg = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::min(seg, slopes_.size() - 1);
}

double LogLogInterpolant::log_value(double alpha) const {
  if (slopes_.empty()) return log_size_.front();
  const double a = std::clamp(alpha, lo_, hi_);
  const std::size_t seg = segment(a);
  return log_size_[seg] + slopes_[seg] * (std::log(a) - log_alpha_[seg]);
}

double LogLogInterpolant::elasticity(double alpha) const {
  if (slopes_.empty()) return 0.0;
  const double a = std::clamp(alpha, lo_, hi_);
  return slopes_[segment(a)] / a;
}

bool LogLogInterpolant::elasticity_strictly_increasing(double tol) const {
  if (slopes_.empty()) return false;
  for (std::size_t j = 0; j < slopes_.size(); ++j) {
    if (!(slopes_[j] < -tol)) return false;
    if (j > 0 && slopes_[j] < slopes_[j - 1] - tol) return false;
  }
  return true;
}

double LogLogInterpolant::inverse_elasticity(double target) const {
  if (slopes_.empty()) return lo_;
  if (elasticity(lo_) > target) return lo_;
  for (std::size_t j = 0; j < slopes_.size(); ++j) {
    const double right_limit = slopes_[j] / knots_[j + 1];
    if (target < right_limit) {
      if (target < slopes_[j] / knots_[j]) return knots_[j];
      return std::clamp(slopes_[j] / target, knots_[j], knots_[j + 1]);
    }
  }
  return hi_;
}

// ---------------------------------------------------------------------------
// Optimal allocation

namespace {

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

Bounds feasible_bounds(const std::vector<LogLogInterpolant>& interps, double alpha,
                       const AllocatorOptions& options) {
  Bounds b;
  double lo_sum = 0.0;
  double hi_sum = 0.0;
  for (const auto& f : interps) {
    b.lo.push_back(std::max(f.lower(), options.min_alpha));
    b.hi.push_back(std::min(f.upper(), alpha));
    if (b.lo.back() > b.hi.back()) {
      throw Error(ErrorCode::InfeasibleAllocation, "a scale's admissible alpha range is empty");
    }
    lo_sum += b.lo.back();
    hi_sum += b.hi.back();
  }
  if (lo_sum > alpha * (1.0 + 1e-12) || hi_sum < alpha * (1.0 - 1e-12)) {
    throw Error(ErrorCode::InfeasibleAllocation,
                "grid ranges admit sums in [" + std::to_string(lo_sum) + ", " +
                    std::to_string(hi_sum) + "], cannot reach alpha = " + std::to_string(alpha));
  }
  return b;
}

double objective_of(const std::vector<LogLogInterpolant>& interps, std::span<const double> alphas) {
  double total = 0.0;
  for (std::size_t k = 0; k < interps.size(); ++k) total += interps[k].log_value(alphas[k]);
  return total;
}

// Absorbs floating-point residue so the alphas sum to `alpha`, touching only
// coordinates with room inside their bounds.
void fix_sum(std::vector<double>& alphas, double alpha, const Bounds& b) {
  for (int pass = 0; pass < 3; ++pass) {
    const double residual = alpha - std::accumulate(alphas.begin(), alphas.end(), 0.0);
    if (residual == 0.0) return;
    std::size_t best = 0;
    double best_room = -1.0;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      const double room = residual > 0 ? b.hi[k] - alphas[k] : alphas[k] - b.lo[k];
      if (room > best_room) {
        best_room = room;
        best = k;
      }
    }
    alphas[best] += residual;
  }
}

OptimalAllocation bisect_multiplier(const std::vector<LogLogInterpolant>& interps, double alpha,
                                    const Bounds& b) {
  const std::size_t K = interps.size();
  auto alphas_at = [&](double target) {
    std::vector<double> a(K);
    for (std::size_t k = 0; k < K; ++k) {
      a[k] = std::clamp(interps[k].inverse_elasticity(target), b.lo[k], b.hi[k]);
    }
    return a;
  };
  auto sum_at = [&](double target) {
    const auto a = alphas_at(target);
    return std::accumulate(a.begin(), a.end(), 0.0);
  };
  // The summed inverse is continuous and non-decreasing in the target
  // elasticity; bracket it between the smallest and largest attainable psi.
  double low = std::numeric_limits<double>::infinity();
  double high = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    low = std::min(low, interps[k].elasticity(b.lo[k]));
    high = std::max(high, interps[k].elasticity(b.hi[k]));
  }
  low -= 1.0;
  high += 1.0;
  for (int it = 0; it < 400 && low < high; ++it) {
    const double mid = 0.5 * (low + high);
    if (mid <= low || mid >= high) break;
    if (sum_at(mid) < alpha) {
      low = mid;
    } else {
      high = mid;
    }
  }
  OptimalAllocation out;
  out.route = AllocatorRoute::Bisection;
  out.multiplier = -0.5 * (low + high);
  out.plan.alphas = alphas_at(0.5 * (low + high));
  out.plan.total = alpha;
  fix_sum(out.plan.alphas, alpha, b);
  out.objective = objective_of(interps, out.plan.alphas);
  return out;
}

// Moves mass between pairs of coordinates while the objective improves,
// halving the transfer size down to `min_step`.
void refine_pairwise(const std::vector<LogLogInterpolant>& interps, const Bounds& b,
                     std::vector<double>& alphas, double& best, double start_step, double min_step) {
  const std::size_t K = alphas.size();
  for (double step = start_step; step >= min_step; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
          if (i == j) continue;
          const double d = std::min({step, b.hi[i] - alphas[i], alphas[j] - b.lo[j]});
          if (d <= 0.0) continue;
          alphas[i] += d;
          alphas[j] -= d;
          const double value = objective_of(interps, alphas);
          if (value < best - 1e-15) {
            best = value;
            improved = true;
          } else {
            alphas[i] -= d;
            alphas[j] += d;
          }
        }
      }
    }
  }
}

OptimalAllocation grid_search(const std::vector<LogLogInterpolant>& interps, double alpha,
                              const Bounds& b, const AllocatorOptions& options) {
  const std::size_t K = interps.size();
  // Coarsen the step until the simplex grid stays tractable.
  double step = options.grid_step;
  auto grid_count = [&](double h) {
    double count = 1.0;
    for (std::size_t k = 0; k + 1 < K; ++k) count *= (b.hi[k] - b.lo[k]) / h + 1.0;
    return count;
  };
  while (grid_count(step) > 4e6) step *= 2.0;

  std::vector<double> best_alphas;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> current(K);
  std::function<void(std::size_t, double)> visit = [&](std::size_t k, double used) {
    if (k + 1 == K) {
      const double last = alpha - used;
      if (last < b.lo[k] - 1e-15 || last > b.hi[k] + 1e-15) return;
      current[k] = std::clamp(last, b.lo[k], b.hi[k]);
      const double value = objective_of(interps, current);
      if (value < best) {
        best = value;
        best_alphas = current;
      }
      return;
    }
    const auto steps = static_cast<long>(std::floor((b.hi[k] - b.lo[k]) / step + 1e-9));
    for (long s = 0; s <= steps + 1; ++s) {
      const double a = s <= steps ? b.lo[k] + static_cast<double>(s) * step : b.hi[k];
      if (used + a > alpha + 1e-15) break;
      current[k] = a;
      visit(k + 1, used + a);
    }
  };
  visit(0, 0.0);

  // The uniform split is always a candidate when admissible.
  std::vector<double> uniform(K, alpha / static_cast<double>(K));
  bool uniform_ok = true;
  for (std::size_t k = 0; k < K; ++k) uniform_ok = uniform_ok && uniform[k] >= b.lo[k] && uniform[k] <= b.hi[k];
  if (uniform_ok && objective_of(interps, uniform) < best) {
    best = objective_of(interps, uniform);
    best_alphas = uniform;
  }
  if (best_alphas.empty()) {
    throw Error(ErrorCode::InfeasibleAllocation, "grid search found no admissible allocation");
  }
  refine_pairwise(interps, b, best_alphas, best, step, 1e-13);

  OptimalAllocation out;
  out.route = AllocatorRoute::GridSearch;
  out.plan.alphas = std::move(best_alphas);
  out.plan.total = alpha;
  fix_sum(out.plan.alphas, alpha, b);
  out.objective = objective_of(interps, out.plan.alphas);
  return out;
}

}  // namespace

OptimalAllocation solve_optimal_allocation(std::span<const SizeCurve> curves, double alpha,
                                           const AllocatorOptions& options) {
  check_alpha(alpha);
  if (curves.empty()) throw Error(ErrorCode::InfeasibleAllocation, "no size curves");
  std::vector<LogLogInterpolant> interps;
  interps.reserve(curves.size());
  for (const SizeCurve& c : curves) interps.emplace_back(c, options.size_floor);

  if (curves.size() == 1) {
    OptimalAllocation out;
    out.plan = AllocationPlan{{alpha}, alpha};
    out.objective = interps.front().log_value(alpha);
    return out;
  }

  const Bounds bounds = feasible_bounds(interps, alpha, options);
  const bool strict = std::all_of(interps.begin(), interps.end(),
                                  [](const LogLogInterpolant& f) { return f.elasticity_strictly_increasing(); });
  OptimalAllocation out =
      strict ? bisect_multiplier(interps, alpha, bounds) : grid_search(interps, alpha, bounds, options);
  validate_plan(out.plan);
  return out;
}

AllocationPlan allocate_optimal(std::span<const SizeCurve> curves, double alpha,
                                const AllocatorOptions& options) {
  return solve_optimal_allocation(curves, alpha, options).plan;
}

double allocation_objective(std::span<const SizeCurve> curves, const AllocationPlan& plan,
                            double size_floor) {
  if (curves.size() != plan.scales()) {
    throw Error(ErrorCode::ShapeError, "plan and curves differ in number of scales");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < curves.size(); ++k) {
    total += LogLogInterpolant(curves[k], size_floor).log_value(plan.alphas[k]);
  }
  return total;
}

}  // namespace mscp
