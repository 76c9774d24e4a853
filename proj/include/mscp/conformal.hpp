#ifndef MSCP_CONFORMAL_HPP
#define MSCP_CONFORMAL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mscp/errors.hpp"

namespace mscp {

using Label = int;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Ordered finite set of class identifiers, at least two of them.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<Label> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) {
      throw Error(ErrorCode::InvalidConfig, "label space needs at least 2 labels");
    }
    std::unordered_set<Label> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) {
      throw Error(ErrorCode::InvalidConfig, "label space contains duplicate labels");
    }
  }

  /// Labels 0..m-1.
  static LabelSpace range(int m) {
    if (m < 2) throw Error(ErrorCode::InvalidConfig, "label space needs at least 2 labels");
    std::vector<Label> labels(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) labels[static_cast<std::size_t>(j)] = j;
    return LabelSpace(std::move(labels));
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  Label operator[](std::size_t i) const { return labels_[i]; }

  bool contains(Label y) const {
    return std::find(labels_.begin(), labels_.end(), y) != labels_.end();
  }

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<Label> labels_;
};

/// A scale-specific conformity score A(x, y). Larger means less conforming.
/// NaN scores are rejected at evaluation time.
template <typename Scalar>
class ConformityScorer {
 public:
  using Vector = VectorX<Scalar>;
  using Function = std::function<Scalar(const Vector&, Label)>;

  ConformityScorer() = default;
  ConformityScorer(int scale_id, Function fn) : scale_id_(scale_id), fn_(std::move(fn)) {}

  int scale_id() const noexcept { return scale_id_; }

  Scalar operator()(const Vector& x, Label y) const {
    const Scalar s = fn_(x, y);
    if (std::isnan(s)) {
      throw Error(ErrorCode::NonFiniteScore,
                  "scorer for scale " + std::to_string(scale_id_) + " returned NaN");
    }
    return s;
  }

 private:
  int scale_id_ = 1;
  Function fn_;
};

/// A conformal p-value, stored as the exact rank count so that equality and
/// quantization checks do not depend on floating-point division.
struct PValue {
  double value = 1.0;
  std::size_t rank = 1;  // |{i : A_i >= s}| + 1 in deterministic mode
  std::size_t n = 0;
};

/// Sorted held-out conformity scores for one scale.
template <typename Scalar>
class CalibrationScores {
 public:
  CalibrationScores(int scale_id, std::vector<Scalar> scores)
      : scale_id_(scale_id), scores_(std::move(scores)) {
    if (scores_.empty()) throw Error(ErrorCode::EmptyCalibration, "no calibration scores");
    for (const Scalar s : scores_) {
      if (std::isnan(s)) throw Error(ErrorCode::NonFiniteScore, "NaN calibration score");
    }
    std::sort(scores_.begin(), scores_.end());
  }

  int scale_id() const noexcept { return scale_id_; }
  std::size_t size() const noexcept { return scores_.size(); }
  std::span<const Scalar> scores() const noexcept { return scores_; }

  /// Number of calibration scores >= s.
  std::size_t count_at_least(Scalar s) const {
    const auto it = std::lower_bound(scores_.begin(), scores_.end(), s);
    return static_cast<std::size_t>(scores_.end() - it);
  }

  /// Number of calibration scores strictly greater than s.
  std::size_t count_greater(Scalar s) const {
    const auto it = std::upper_bound(scores_.begin(), scores_.end(), s);
    return static_cast<std::size_t>(scores_.end() - it);
  }

 private:
  int scale_id_;
  std::vector<Scalar> scores_;
};

/// Identifies which method produced a prediction set: scale k >= 1, or the
/// multi-scale intersection (scale 0).
struct MethodId {
  int scale = 0;

  static constexpr MethodId multiscale() { return MethodId{0}; }
  static constexpr MethodId single(int k) { return MethodId{k}; }
  bool is_multiscale() const noexcept { return scale == 0; }
  std::string name() const { return is_multiscale() ? "multiscale" : "scale" + std::to_string(scale); }

  friend bool operator==(const MethodId&, const MethodId&) = default;
};

/// Labels retained for one test point by one method. Members are kept in
/// label-space order; an empty set is a legal outcome.
struct PredictionSet {
  MethodId method;
  LabelSpace space;
  std::vector<Label> members;
  double alpha_used = 0.0;

  std::size_t size() const noexcept { return members.size(); }
  bool contains(Label y) const {
    return std::find(members.begin(), members.end(), y) != members.end();
  }
};

inline void check_alpha(double alpha, const char* what = "alpha") {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidAlpha,
                std::string(what) + " must lie in (0, 1), got " + std::to_string(alpha));
  }
}

/// Scores every calibration pair (one row of `x` per point) and sorts them.
template <typename Scalar>
CalibrationScores<Scalar> score_calibration(const ConformityScorer<Scalar>& scorer,
                                            const MatrixX<Scalar>& x,
                                            std::span<const Label> y) {
  if (y.empty() || x.rows() == 0) {
    throw Error(ErrorCode::EmptyCalibration, "calibration list is empty");
  }
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::ShapeError, "calibration features and labels differ in length");
  }
  std::vector<Scalar> scores(y.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    scores[static_cast<std::size_t>(i)] = scorer(x.row(i).transpose(), y[static_cast<std::size_t>(i)]);
  }
  return CalibrationScores<Scalar>(scorer.scale_id(), std::move(scores));
}

/// (|{i : A_i >= s}| + 1) / (n + 1).
template <typename Scalar>
PValue conformal_pvalue(const CalibrationScores<Scalar>& calib, Scalar candidate_score) {
  if (std::isnan(candidate_score)) throw Error(ErrorCode::NonFiniteScore, "NaN candidate score");
  const std::size_t n = calib.size();
  const std::size_t rank = calib.count_at_least(candidate_score) + 1;
  return PValue{static_cast<double>(rank) / static_cast<double>(n + 1), rank, n};
}

/// Randomized tie-breaking variant: (|{A_i > s}| + u * (|{A_i = s}| + 1)) / (n + 1)
/// with u ~ Uniform(0, 1) supplied by the caller. Not used by default.
template <typename Scalar>
PValue smoothed_pvalue(const CalibrationScores<Scalar>& calib, Scalar candidate_score, double u) {
  if (std::isnan(candidate_score)) throw Error(ErrorCode::NonFiniteScore, "NaN candidate score");
  const std::size_t n = calib.size();
  const std::size_t greater = calib.count_greater(candidate_score);
  const std::size_t ties = calib.count_at_least(candidate_score) - greater;
  const double value =
      (static_cast<double>(greater) + u * static_cast<double>(ties + 1)) / static_cast<double>(n + 1);
  return PValue{value, 0, n};
}

/// p-values of every label in `labels` at test point `x`, in label order.
template <typename Scalar>
std::vector<PValue> label_pvalues(const ConformityScorer<Scalar>& scorer,
                                  const CalibrationScores<Scalar>& calib,
                                  const VectorX<Scalar>& x, const LabelSpace& labels) {
  std::vector<PValue> out;
  out.reserve(labels.size());
  for (const Label y : labels.labels()) out.push_back(conformal_pvalue(calib, scorer(x, y)));
  return out;
}

/// {y : p(y) > alpha} from precomputed per-label p-values.
inline PredictionSet set_from_pvalues(MethodId method, const LabelSpace& labels,
                                      std::span<const PValue> pvalues, double alpha) {
  check_alpha(alpha, "alpha_k");
  PredictionSet set{method, labels, {}, alpha};
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (pvalues[j].value > alpha) set.members.push_back(labels[j]);
  }
  return set;
}

/// Single-scale split-conformal set {y : p(y) > alpha_k}.
template <typename Scalar>
PredictionSet prediction_set(const ConformityScorer<Scalar>& scorer,
                             const CalibrationScores<Scalar>& calib, const VectorX<Scalar>& x,
                             const LabelSpace& labels, double alpha_k) {
  check_alpha(alpha_k, "alpha_k");
  if (calib.scale_id() != scorer.scale_id()) {
    throw Error(ErrorCode::IncompatibleSets, "calibration scale " + std::to_string(calib.scale_id()) +
                                                 " does not match scorer scale " +
                                                 std::to_string(scorer.scale_id()));
  }
  const auto pvalues = label_pvalues(scorer, calib, x, labels);
  return set_from_pvalues(MethodId::single(scorer.scale_id()), labels, pvalues, alpha_k);
}

/// Builds a scorer from an (augmented) training set. Used by the full
/// transductive p-value, where the score function may depend on the data.
template <typename Scalar>
using ScorerFit =
    std::function<ConformityScorer<Scalar>(const MatrixX<Scalar>&, std::span<const Label>)>;

/// Full (transductive) conformal p-value: the scorer is refit on the training
/// set augmented with (x_new, y_candidate), then every training point and the
/// candidate are rescored.
template <typename Scalar>
PValue transductive_pvalue(const ScorerFit<Scalar>& fit, const MatrixX<Scalar>& train_x,
                           std::span<const Label> train_y, const VectorX<Scalar>& x_new,
                           Label y_candidate) {
  if (train_y.empty() || train_x.rows() == 0) {
    throw Error(ErrorCode::EmptyCalibration, "training list is empty");
  }
  if (static_cast<std::size_t>(train_x.rows()) != train_y.size() || train_x.cols() != x_new.size()) {
    throw Error(ErrorCode::ShapeError, "training data and candidate point disagree in shape");
  }
  const Eigen::Index n = train_x.rows();
  MatrixX<Scalar> aug_x(n + 1, train_x.cols());
  aug_x.topRows(n) = train_x;
  aug_x.row(n) = x_new.transpose();
  std::vector<Label> aug_y(train_y.begin(), train_y.end());
  aug_y.push_back(y_candidate);

  const ConformityScorer<Scalar> scorer = fit(aug_x, aug_y);
  const Scalar candidate = scorer(x_new, y_candidate);
  std::size_t at_least = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (scorer(train_x.row(i).transpose(), train_y[static_cast<std::size_t>(i)]) >= candidate) ++at_least;
  }
  const auto un = static_cast<std::size_t>(n);
  return PValue{static_cast<double>(at_least + 1) / static_cast<double>(un + 1), at_least + 1, un};
}

/// Transductive p-value for a scorer that does not depend on the data.
template <typename Scalar>
PValue transductive_pvalue(const ConformityScorer<Scalar>& scorer, const MatrixX<Scalar>& train_x,
                           std::span<const Label> train_y, const VectorX<Scalar>& x_new,
                           Label y_candidate) {
  const ScorerFit<Scalar> fixed = [&scorer](const MatrixX<Scalar>&, std::span<const Label>) {
    return scorer;
  };
  return transductive_pvalue(fixed, train_x, train_y, x_new, y_candidate);
}

}  // namespace mscp

#endif  // MSCP_CONFORMAL_HPP
