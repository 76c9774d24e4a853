#include <doctest.h>

#include <cmath>
#include <vector>

#include "mscp/models.hpp"
#include "mscp/random.hpp"
#include "mscp/synth.hpp"

using namespace mscp;

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Loss written out with plain loops as an independent reference.
double loop_loss(const Mat& w, const Vec& b, const Mat& x, const std::vector<Label>& y, double l2) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> logits(static_cast<std::size_t>(w.rows()));
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      double v = b(j);
      for (Eigen::Index c = 0; c < x.cols(); ++c) v += w(j, c) * x(i, c);
      logits[static_cast<std::size_t>(j)] = v;
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (const double v : logits) z += std::exp(v - mx);
    total += -(logits[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] - mx - std::log(z));
  }
  double reg = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) reg += w.data()[j] * w.data()[j];
  return total / static_cast<double>(x.rows()) + 0.5 * l2 * reg;
}

struct Problem {
  Mat w;
  Vec b;
  Mat x;
  std::vector<Label> y;
};

Problem random_problem(Rng& rng) {
  const int m = 2 + static_cast<int>(rng.index(4));
  const int d = 1 + static_cast<int>(rng.index(4));
  const int n = 5 + static_cast<int>(rng.index(30));
  Problem p{Mat(m, d), Vec(m), Mat(n, d), std::vector<Label>(static_cast<std::size_t>(n))};
  for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < m; ++i) p.b(i) = rng.normal();
  for (Eigen::Index i = 0; i < p.x.size(); ++i) p.x.data()[i] = 2.0 * rng.normal();
  for (Label& l : p.y) l = static_cast<Label>(rng.index(static_cast<std::uint64_t>(m)));
  return p;
}

}  // namespace

TEST_CASE("cross-entropy loss matches a loop implementation") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Problem p = random_problem(rng);
    CHECK(cross_entropy_loss(p.w, p.b, p.x, p.y, 0.01) == doctest::Approx(loop_loss(p.w, p.b, p.x, p.y, 0.01)).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(2);
  const double h = 1e-5;
  for (int t = 0; t < 50; ++t) {
    Problem p = random_problem(rng);
    const double l2 = 1e-2 * rng.uniform();
    Mat gw;
    Vec gb;
    cross_entropy_gradient(p.w, p.b, p.x, p.y, l2, gw, gb);
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 0; i < p.w.size(); ++i) {
      const double saved = p.w.data()[i];
      p.w.data()[i] = saved + h;
      const double up = loop_loss(p.w, p.b, p.x, p.y, l2);
      p.w.data()[i] = saved - h;
      const double down = loop_loss(p.w, p.b, p.x, p.y, l2);
      p.w.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      num = std::max(num, std::abs(fd - gw.data()[i]));
      den = std::max(den, std::abs(fd));
    }
    for (Eigen::Index i = 0; i < p.b.size(); ++i) {
      const double saved = p.b(i);
      p.b(i) = saved + h;
      const double up = loop_loss(p.w, p.b, p.x, p.y, l2);
      p.b(i) = saved - h;
      const double down = loop_loss(p.w, p.b, p.x, p.y, l2);
      p.b(i) = saved;
      const double fd = (up - down) / (2 * h);
      num = std::max(num, std::abs(fd - gb(i)));
      den = std::max(den, std::abs(fd));
    }
    CHECK(num / std::max(den, 1e-8) <= 1e-4);
  }
}

TEST_CASE("softmax rows") {
  Mat logits(2, 3);
  logits << 0, 0, 0, 1000, 1000, 1000 - std::log(2.0);
  const Mat p = softmax_rows(logits);
  CHECK(p(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(p(1, 2) == doctest::Approx(0.2));
  CHECK(p.row(1).sum() == doctest::Approx(1.0));
}

TEST_CASE("train_logistic") {
  SUBCASE("zero epochs give uniform probabilities") {
    Mat x(4, 1);
    x << 1, 2, 3, 4;
    const std::vector<Label> y{0, 1, 2, 0};
    const LogisticModel model = train_logistic(x, y, 3, {0}, LogisticHyper{.epochs = 0});
    Vec q(1);
    q << 2.5;
    const Vec p = predict_proba(model, q);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(p(j) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("separable data is fit exactly") {
    Mat x(40, 1);
    std::vector<Label> y(40);
    for (int i = 0; i < 40; ++i) {
      x(i, 0) = i < 20 ? -1.0 - 0.1 * i : 1.0 + 0.1 * i;
      y[static_cast<std::size_t>(i)] = i < 20 ? 0 : 1;
    }
    const LogisticModel model = train_logistic(x, y, 2, {0}, LogisticHyper{.epochs = 500});
    int correct = 0;
    for (int i = 0; i < 40; ++i) {
      const Vec p = predict_proba(model, Vec(x.row(i).transpose()));
      const Label guess = p(1) > p(0) ? 1 : 0;
      correct += guess == y[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    CHECK(correct == 40);
  }
  SUBCASE("loss never increases and training is deterministic") {
    SynthConfig cfg;
    cfg.n_points = 300;
    const Dataset ds = generate_dataset(cfg);
    std::vector<double> trace;
    const LogisticModel a = train_logistic(ds.features, ds.labels, 4, {0, 1}, LogisticHyper{.epochs = 300}, &trace);
    REQUIRE(trace.size() == 301);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
    const LogisticModel b = train_logistic(ds.features, ds.labels, 4, {0, 1}, LogisticHyper{.epochs = 300});
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
  }
  SUBCASE("errors") {
    const Mat empty(0, 1);
    const std::vector<Label> none;
    try {
      train_logistic(empty, none, 2, {0});
      FAIL("expected EmptyTraining");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyTraining);
    }
    Mat x(2, 1);
    x << 0, 1;
    const std::vector<Label> y{0, 1};
    CHECK_THROWS_AS(train_logistic(x, y, 2, {3}), Error);
  }
}

TEST_CASE("predict_proba") {
  SynthConfig cfg;
  cfg.n_points = 200;
  const Dataset ds = generate_dataset(cfg);
  const LogisticModel model = train_logistic(ds.features, ds.labels, 4, {0}, LogisticHyper{.epochs = 200});
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    Vec x(3);
    for (Eigen::Index j = 0; j < 3; ++j) x(j) = 3.0 * rng.normal();
    const Vec p = predict_proba(model, x);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.minCoeff() >= 0.0);
    // Adding a constant to every logit changes nothing.
    LogisticModel shifted = model;
    shifted.bias.array() += 7.5;
    CHECK((predict_proba(shifted, x) - p).cwiseAbs().maxCoeff() <= 1e-12);
    const auto scorer = logistic_scorer(model, 1);
    double total = 0.0;
    for (Label y = 0; y < 4; ++y) {
      const double s = scorer(x, y);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
      total += s;
    }
    CHECK(total == doctest::Approx(3.0));
  }
  try {
    predict_proba(model, Vec::Zero(2));
    FAIL("expected ShapeError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeError);
  }
}

TEST_CASE("logistic_scorer is one minus the class probability") {
  LogisticModel model;
  model.weights = Mat::Zero(2, 1);
  model.bias = Vec(2);
  model.bias << std::log(0.8), std::log(0.2);
  model.feature_indices = {0};
  model.feature_mean = Vec::Zero(1);
  model.feature_scale = Vec::Ones(1);
  model.input_dim = 1;
  const auto scorer = logistic_scorer(model, 1);
  CHECK(scorer(Vec::Zero(1), 0) == doctest::Approx(0.2));
  CHECK(scorer(Vec::Zero(1), 1) == doctest::Approx(0.8));
  model.bias << 0.0, -1e4;
  CHECK(logistic_scorer(model, 1)(Vec::Zero(1), 0) == doctest::Approx(0.0));
}

TEST_CASE("oracle scorer") {
  SUBCASE("huge noise makes every class equally likely") {
    SynthConfig cfg;
    cfg.noise_sd = 1e6;
    const auto scorer = oracle_scorer(OracleModel{cfg}, 1);
    Vec x(3);
    x << 1.0, -0.5, 0.2;
    for (Label y = 0; y < 4; ++y) CHECK(scorer(x, y) == doctest::Approx(-0.25).epsilon(1e-4));
  }
  SUBCASE("the most likely class has the lowest score") {
    SynthConfig cfg;
    const auto scorer = oracle_scorer(OracleModel{cfg}, 2);
    Vec x(3);
    x << 3.0, 0.0, 0.0;  // far into the top bin
    CHECK(scorer(x, 3) < scorer(x, 2));
    CHECK(scorer(x, 3) == doctest::Approx(-1.0).epsilon(1e-6));
  }
  SUBCASE("probabilities match label frequencies at a fixed x") {
    SynthConfig cfg;
    cfg.noise_sd = 0.5;
    const auto edges = bin_edges(cfg);
    Vec x(3);
    x << 0.3, -0.2, 0.4;
    const Vec p = oracle_proba(OracleModel{cfg}, x);
    Rng rng(10);
    const int draws = 100000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_label(cfg, edges, x, rng))];
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double freq = counts[static_cast<std::size_t>(j)] / static_cast<double>(draws);
      const double se = std::sqrt(p(j) * (1 - p(j)) / draws);
      CHECK(std::abs(freq - p(j)) <= 4 * se + 1e-12);
    }
  }
}
