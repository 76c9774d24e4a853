#ifndef MSCP_SYNTH_HPP
#define MSCP_SYNTH_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mscp/conformal.hpp"
#include "mscp/random.hpp"

namespace mscp {

/// Multi-scale synthetic classification problem.
///
/// X1 ~ N(0,1) is the coarse feature; for k >= 2,
/// Xk = rho * X1 + sqrt(1 - rho^2) * eps_k. The latent score is
/// z = sum_k w_k Xk + noise_sd * eta and the label is the bin of z among m
/// equiprobable quantile bins of z's marginal distribution.
struct SynthConfig {
  int n_points = 1000;
  int n_scales = 3;
  int n_classes = 4;
  double noise_sd = 0.1;
  std::vector<double> scale_weights{1.0, 0.6, 0.3};
  double rho = 0.0;
  std::uint64_t seed = 20240601;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// 1.0, 0.6, 0.3, then halving: informativeness decreases with scale index.
std::vector<double> default_scale_weights(int scales);

/// Throws InvalidConfig naming the first offending field.
void validate(const SynthConfig& config);

struct Dataset {
  Eigen::MatrixXd features;  // n x K, column k is the scale-(k+1) feature
  std::vector<Label> labels;
  std::optional<SynthConfig> config;  // absent when loaded from a file

  Eigen::Index size() const noexcept { return features.rows(); }
  int scales() const noexcept { return static_cast<int>(features.cols()); }
};

struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> calib;
  std::vector<Eigen::Index> test;
};

struct SplitFractions {
  double train = 0.4;
  double calib = 0.3;
  double test = 0.3;
};

Dataset generate_dataset(const SynthConfig& config);

/// Seeded shuffle of 0..n-1 cut at the cumulative fractions.
SplitIndices split_dataset(Eigen::Index n, const SplitFractions& fractions, std::uint64_t seed);

/// Rows of `ds` at `indices`, in that order.
Dataset subset(const Dataset& ds, const std::vector<Eigen::Index>& indices);

/// Standard deviation of the latent score z.
double latent_sd(const SynthConfig& config);

/// Class boundaries on the latent scale (m - 1 increasing values).
std::vector<double> bin_edges(const SynthConfig& config);

/// Exact P(label = j | x) for j = 0..m-1.
Eigen::VectorXd oracle_conditional(const SynthConfig& config, const Eigen::VectorXd& x);

/// Draws feature rows only (same process as generate_dataset).
Eigen::MatrixXd sample_features(const SynthConfig& config, Eigen::Index rows, Rng& rng);

/// Draws a label for a fixed feature vector from the generative model.
Label sample_label(const SynthConfig& config, const std::vector<double>& edges,
                   const Eigen::VectorXd& x, Rng& rng);

/// Standard normal CDF and quantile.
double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace mscp

#endif  // MSCP_SYNTH_HPP
