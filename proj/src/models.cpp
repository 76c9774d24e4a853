#include "mscp/models.hpp"

#include <cmath>
#include <iostream>
#include <string>

namespace mscp {

namespace {

void check_labels(std::span<const Label> y, Eigen::Index rows, int n_classes) {
  if (static_cast<Eigen::Index>(y.size()) != rows) {
    throw Error(ErrorCode::ShapeError, "features and labels differ in length");
  }
  for (const Label label : y) {
    if (label < 0 || label >= n_classes) {
      throw Error(ErrorCode::ShapeError, "label " + std::to_string(label) + " outside 0.." +
                                             std::to_string(n_classes - 1));
    }
  }
}

Eigen::MatrixXd one_hot(std::span<const Label> y, Eigen::Index classes) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y.size()), classes);
  for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return out;
}

}  // namespace

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

double cross_entropy_loss(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                          const Eigen::MatrixXd& x, std::span<const Label> y, double l2) {
  const Eigen::MatrixXd logits = (x * weights.transpose()).rowwise() + bias.transpose();
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double lse = row_max(i) + std::log((logits.row(i).array() - row_max(i)).exp().sum());
    loss += lse - logits(i, y[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(logits.rows()) + 0.5 * l2 * weights.squaredNorm();
}

void cross_entropy_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                            const Eigen::MatrixXd& x, std::span<const Label> y, double l2,
                            Eigen::MatrixXd& grad_weights, Eigen::VectorXd& grad_bias) {
  const Eigen::MatrixXd logits = (x * weights.transpose()).rowwise() + bias.transpose();
  const Eigen::MatrixXd residual = softmax_rows(logits) - one_hot(y, weights.rows());
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  grad_weights = inv_n * residual.transpose() * x + l2 * weights;
  grad_bias = inv_n * residual.colwise().sum().transpose();
}

Eigen::MatrixXd prepare_features(const LogisticModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.input_dim) {
    throw Error(ErrorCode::ShapeError, "expected " + std::to_string(model.input_dim) +
                                           " features, got " + std::to_string(x.cols()));
  }
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(model.feature_indices.size()));
  for (std::size_t j = 0; j < model.feature_indices.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    out.col(c) = (x.col(model.feature_indices[j]).array() - model.feature_mean(c)) / model.feature_scale(c);
  }
  return out;
}

LogisticModel train_logistic(const Eigen::MatrixXd& x, std::span<const Label> y, int n_classes,
                             std::vector<int> feature_indices, const LogisticHyper& hyper,
                             std::vector<double>* loss_trace) {
  if (x.rows() == 0 || y.empty()) throw Error(ErrorCode::EmptyTraining, "training set is empty");
  if (n_classes < 2) throw Error(ErrorCode::InvalidConfig, "n_classes must be >= 2");
  check_labels(y, x.rows(), n_classes);
  if (feature_indices.empty()) throw Error(ErrorCode::ShapeError, "model needs at least one feature");
  for (const int c : feature_indices) {
    if (c < 0 || c >= x.cols()) throw Error(ErrorCode::ShapeError, "feature index " + std::to_string(c) + " out of range");
  }
  if (hyper.epochs < 0 || !(hyper.learning_rate > 0.0) || !(hyper.l2 >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "learning_rate must be > 0, epochs and l2 >= 0");
  }

  LogisticModel model;
  model.feature_indices = std::move(feature_indices);
  model.input_dim = x.cols();
  const auto d = static_cast<Eigen::Index>(model.feature_indices.size());
  model.feature_mean = Eigen::VectorXd::Zero(d);
  model.feature_scale = Eigen::VectorXd::Ones(d);
  if (hyper.standardize) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto column = x.col(model.feature_indices[static_cast<std::size_t>(j)]);
      const double mean = column.mean();
      const double var = (column.array() - mean).square().mean();
      model.feature_mean(j) = mean;
      model.feature_scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  }
  model.weights = Eigen::MatrixXd::Zero(n_classes, d);
  model.bias = Eigen::VectorXd::Zero(n_classes);

  std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
  for (const Label label : y) seen[static_cast<std::size_t>(label)] = true;
  for (int j = 0; j < n_classes; ++j) {
    if (!seen[static_cast<std::size_t>(j)]) {
      std::cerr << "warning: class " << j << " absent from training data\n";
    }
  }

  const Eigen::MatrixXd xs = prepare_features(model, x);
  Eigen::MatrixXd grad_w;
  Eigen::VectorXd grad_b;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (loss_trace) loss_trace->push_back(cross_entropy_loss(model.weights, model.bias, xs, y, hyper.l2));
    cross_entropy_gradient(model.weights, model.bias, xs, y, hyper.l2, grad_w, grad_b);
    model.weights -= hyper.learning_rate * grad_w;
    model.bias -= hyper.learning_rate * grad_b;
  }
  if (loss_trace) loss_trace->push_back(cross_entropy_loss(model.weights, model.bias, xs, y, hyper.l2));
  return model;
}

Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.input_dim) {
    throw Error(ErrorCode::ShapeError, "expected " + std::to_string(model.input_dim) +
                                           " features, got " + std::to_string(x.size()));
  }
  Eigen::VectorXd logits = model.bias;
  for (std::size_t j = 0; j < model.feature_indices.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    const double z = (x(model.feature_indices[j]) - model.feature_mean(c)) / model.feature_scale(c);
    logits += model.weights.col(c) * z;
  }
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

ConformityScorer<double> logistic_scorer(const LogisticModel& model, int scale_id) {
  return ConformityScorer<double>(scale_id, [model](const Eigen::VectorXd& x, Label y) {
    if (y < 0 || y >= model.classes()) throw Error(ErrorCode::ShapeError, "label outside model classes");
    return 1.0 - predict_proba(model, x)(y);
  });
}

Eigen::VectorXd oracle_proba(const OracleModel& oracle, const Eigen::VectorXd& x) {
  return oracle_conditional(oracle.config, x);
}

ConformityScorer<double> oracle_scorer(const OracleModel& oracle, int scale_id) {
  validate(oracle.config);
  const SynthConfig config = oracle.config;
  return ConformityScorer<double>(scale_id, [config](const Eigen::VectorXd& x, Label y) {
    if (y < 0 || y >= config.n_classes) throw Error(ErrorCode::ShapeError, "label outside oracle classes");
    return -oracle_conditional(config, x)(y);
  });
}

}  // namespace mscp
