#ifndef MSCP_MODELS_HPP
#define MSCP_MODELS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mscp/conformal.hpp"
#include "mscp/synth.hpp"

namespace mscp {

struct LogisticHyper {
  double learning_rate = 0.1;
  int epochs = 2000;
  double l2 = 1e-4;
  /// Recorded for reproducibility; zero-initialized full-batch descent draws
  /// no random numbers.
  std::uint64_t seed = 0;
  bool standardize = true;
};

/// Multinomial logistic regression on a subset of the feature columns.
/// Inputs are standardized with training-split statistics stored here.
struct LogisticModel {
  Eigen::MatrixXd weights;  // m x d
  Eigen::VectorXd bias;     // m
  std::vector<int> feature_indices;
  Eigen::VectorXd feature_mean;   // d
  Eigen::VectorXd feature_scale;  // d, divides (x - mean)
  Eigen::Index input_dim = 0;     // width of the full feature vector

  int classes() const noexcept { return static_cast<int>(weights.rows()); }
};

/// Multinomial cross-entropy (mean over rows) plus (l2 / 2) * ||W||^2.
/// `x` holds already-selected, already-standardized features (n x d).
double cross_entropy_loss(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                          const Eigen::MatrixXd& x, std::span<const Label> y, double l2);

/// Analytic gradient of cross_entropy_loss with respect to (weights, bias).
void cross_entropy_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                            const Eigen::MatrixXd& x, std::span<const Label> y, double l2,
                            Eigen::MatrixXd& grad_weights, Eigen::VectorXd& grad_bias);

/// Row-wise softmax of an n x m logit matrix, max-shifted for stability.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Full-batch gradient descent from zero weights. When `loss_trace` is given,
/// it receives the loss before each epoch and after the last one.
LogisticModel train_logistic(const Eigen::MatrixXd& x, std::span<const Label> y, int n_classes,
                             std::vector<int> feature_indices, const LogisticHyper& hyper = {},
                             std::vector<double>* loss_trace = nullptr);

/// Selects and standardizes the model's columns of `x` (rows are points).
Eigen::MatrixXd prepare_features(const LogisticModel& model, const Eigen::MatrixXd& x);

Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::VectorXd& x);

/// A(x, y) = 1 - p_hat(y | x).
ConformityScorer<double> logistic_scorer(const LogisticModel& model, int scale_id);

/// True conditional distribution of the synthetic generator.
struct OracleModel {
  SynthConfig config;
};

Eigen::VectorXd oracle_proba(const OracleModel& oracle, const Eigen::VectorXd& x);

/// A(x, y) = -P(y | x).
ConformityScorer<double> oracle_scorer(const OracleModel& oracle, int scale_id);

}  // namespace mscp

#endif  // MSCP_MODELS_HPP
