#include "mscp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mscp {

std::vector<double> default_scale_weights(int scales) {
  std::vector<double> w;
  for (int k = 0; k < scales; ++k) {
    w.push_back(k == 0 ? 1.0 : k == 1 ? 0.6 : k == 2 ? 0.3 : w.back() * 0.5);
  }
  return w;
}

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidConfig, field + ": " + why);
  };
  if (c.n_scales < 1) fail("n_scales", "must be >= 1");
  if (c.n_classes < 2) fail("n_classes", "must be >= 2");
  if (c.n_points < c.n_scales + c.n_classes) fail("n_points", "must be >= n_scales + n_classes");
  if (!(c.noise_sd >= 0.0) || !std::isfinite(c.noise_sd)) fail("noise_sd", "must be finite and >= 0");
  if (static_cast<int>(c.scale_weights.size()) != c.n_scales) {
    fail("scale_weights", "expected " + std::to_string(c.n_scales) + " entries, got " +
                              std::to_string(c.scale_weights.size()));
  }
  double abs_sum = 0.0;
  for (const double w : c.scale_weights) {
    if (!std::isfinite(w)) fail("scale_weights", "entries must be finite");
    abs_sum += std::abs(w);
  }
  if (!(abs_sum > 0.0)) fail("scale_weights", "sum of absolute weights must be > 0");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) fail("rho", "must lie in [0, 1]");
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::InvalidDistribution, "quantile level outside [0, 1]");
  }
  // Acklam's rational approximation, then two Newton steps on the CDF.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int it = 0; it < 2; ++it) {
    const double err = normal_cdf(x) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    x -= err / pdf;
  }
  return x;
}

double latent_sd(const SynthConfig& c) {
  // z = (w1 + rho * sum_{k>=2} wk) X1 + sqrt(1-rho^2) sum_{k>=2} wk eps_k + sd * eta
  double shared = c.scale_weights.front();
  double own = 0.0;
  for (std::size_t k = 1; k < c.scale_weights.size(); ++k) {
    shared += c.rho * c.scale_weights[k];
    own += c.scale_weights[k] * c.scale_weights[k];
  }
  return std::sqrt(shared * shared + (1.0 - c.rho * c.rho) * own + c.noise_sd * c.noise_sd);
}

std::vector<double> bin_edges(const SynthConfig& c) {
  const double sd = latent_sd(c);
  std::vector<double> edges;
  for (int j = 1; j < c.n_classes; ++j) {
    edges.push_back(sd * normal_quantile(static_cast<double>(j) / c.n_classes));
  }
  return edges;
}

namespace {

Label bin_of(const std::vector<double>& edges, double z) {
  return static_cast<Label>(std::lower_bound(edges.begin(), edges.end(), z) - edges.begin());
}

double latent_mean(const SynthConfig& c, const Eigen::VectorXd& x) {
  double mu = 0.0;
  for (int k = 0; k < c.n_scales; ++k) mu += c.scale_weights[static_cast<std::size_t>(k)] * x(k);
  return mu;
}

}  // namespace

Eigen::MatrixXd sample_features(const SynthConfig& c, Eigen::Index rows, Rng& rng) {
  Eigen::MatrixXd x(rows, c.n_scales);
  const double own = std::sqrt(1.0 - c.rho * c.rho);
  for (Eigen::Index i = 0; i < rows; ++i) {
    x(i, 0) = rng.normal();
    for (int k = 1; k < c.n_scales; ++k) x(i, k) = c.rho * x(i, 0) + own * rng.normal();
  }
  return x;
}

Label sample_label(const SynthConfig& c, const std::vector<double>& edges, const Eigen::VectorXd& x,
                   Rng& rng) {
  return bin_of(edges, latent_mean(c, x) + c.noise_sd * rng.normal());
}

Dataset generate_dataset(const SynthConfig& config) {
  validate(config);
  Rng rng(config.seed);
  const auto edges = bin_edges(config);
  const double own = std::sqrt(1.0 - config.rho * config.rho);
  Dataset ds;
  ds.features.resize(config.n_points, config.n_scales);
  ds.labels.resize(static_cast<std::size_t>(config.n_points));
  // Row-major draw order: X1, eps_2..eps_K, eta.
  for (Eigen::Index i = 0; i < config.n_points; ++i) {
    ds.features(i, 0) = rng.normal();
    for (int k = 1; k < config.n_scales; ++k) ds.features(i, k) = config.rho * ds.features(i, 0) + own * rng.normal();
    const double z = latent_mean(config, ds.features.row(i).transpose()) + config.noise_sd * rng.normal();
    ds.labels[static_cast<std::size_t>(i)] = bin_of(edges, z);
  }
  ds.config = config;
  return ds;
}

SplitIndices split_dataset(Eigen::Index n, const SplitFractions& f, std::uint64_t seed) {
  if (!(f.train > 0 && f.calib > 0 && f.test > 0) || std::abs(f.train + f.calib + f.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidConfig, "split fractions must be positive and sum to 1");
  }
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.index(i)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.train));
  const auto n_head = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (f.train + f.calib)));
  if (n_train == 0 || n_head <= n_train || n_head >= perm.size()) {
    throw Error(ErrorCode::InvalidConfig, "split fractions leave an empty subset for n = " + std::to_string(n));
  }
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<long>(n_train));
  s.calib.assign(perm.begin() + static_cast<long>(n_train), perm.begin() + static_cast<long>(n_head));
  s.test.assign(perm.begin() + static_cast<long>(n_head), perm.end());
  return s;
}

Dataset subset(const Dataset& ds, const std::vector<Eigen::Index>& indices) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), ds.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = ds.features.row(indices[r]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(indices[r])]);
  }
  out.config = ds.config;
  return out;
}

Eigen::VectorXd oracle_conditional(const SynthConfig& c, const Eigen::VectorXd& x) {
  if (x.size() != c.n_scales) {
    throw Error(ErrorCode::ShapeError, "feature vector has " + std::to_string(x.size()) +
                                           " entries, expected " + std::to_string(c.n_scales));
  }
  const auto edges = bin_edges(c);
  const double mu = latent_mean(c, x);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(c.n_classes);
  if (c.noise_sd == 0.0) {
    p(bin_of(edges, mu)) = 1.0;
    return p;
  }
  double prev = 0.0;
  for (int j = 0; j < c.n_classes; ++j) {
    const double cdf = j + 1 < c.n_classes ? normal_cdf((edges[static_cast<std::size_t>(j)] - mu) / c.noise_sd) : 1.0;
    p(j) = std::max(cdf - prev, 0.0);
    prev = cdf;
  }
  return p / p.sum();
}

}  // namespace mscp
