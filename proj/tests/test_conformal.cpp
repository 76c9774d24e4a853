#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mscp/conformal.hpp"
#include "mscp/random.hpp"

using namespace mscp;

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Scorer returning a fixed score per label, ignoring x.
ConformityScorer<double> table_scorer(std::vector<double> by_label, int scale = 1) {
  return ConformityScorer<double>(scale, [by_label](const Vec&, Label y) { return by_label[static_cast<std::size_t>(y)]; });
}

// Scorer returning x(0), ignoring the label.
ConformityScorer<double> identity_scorer(int scale = 1) {
  return ConformityScorer<double>(scale, [](const Vec& x, Label) { return x(0); });
}

std::size_t brute_count_at_least(const std::vector<double>& scores, double s) {
  std::size_t c = 0;
  for (const double a : scores) c += a >= s ? 1 : 0;
  return c;
}

}  // namespace

TEST_CASE("label space rejects duplicates and singletons") {
  CHECK_THROWS_AS(LabelSpace({1}), Error);
  CHECK_THROWS_AS(LabelSpace({1, 2, 1}), Error);
  const LabelSpace ls = LabelSpace::range(4);
  CHECK(ls.size() == 4);
  CHECK(ls.contains(3));
  CHECK_FALSE(ls.contains(4));
}

TEST_CASE("score_calibration") {
  SUBCASE("product scorer gives sorted direct evaluations") {
    const ConformityScorer<double> scorer(1, [](const Vec& x, Label y) { return x(0) * y; });
    Mat x(3, 1);
    x << 3, 1, 2;
    const std::vector<Label> y{1, 1, 1};
    const auto calib = score_calibration(scorer, x, std::span<const Label>(y));
    CHECK(calib.size() == 3);
    CHECK(calib.scale_id() == 1);
    CHECK(std::vector<double>(calib.scores().begin(), calib.scores().end()) == std::vector<double>{1, 2, 3});
  }
  SUBCASE("constant scorer") {
    const ConformityScorer<double> scorer(2, [](const Vec&, Label) { return 0.5; });
    const Mat x = Mat::Random(4, 2);
    const std::vector<Label> y{0, 1, 0, 1};
    const auto calib = score_calibration(scorer, x, std::span<const Label>(y));
    for (const double s : calib.scores()) CHECK(s == 0.5);
    CHECK(calib.scale_id() == 2);
  }
  SUBCASE("empty calibration") {
    const Mat x(0, 1);
    const std::vector<Label> y;
    try {
      score_calibration(identity_scorer(), x, std::span<const Label>(y));
      FAIL("expected EmptyCalibration");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyCalibration);
    }
  }
  SUBCASE("NaN scores are rejected") {
    const ConformityScorer<double> scorer(1, [](const Vec&, Label) { return std::numeric_limits<double>::quiet_NaN(); });
    const Mat x = Mat::Zero(2, 1);
    const std::vector<Label> y{0, 1};
    try {
      score_calibration(scorer, x, std::span<const Label>(y));
      FAIL("expected NonFiniteScore");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteScore);
    }
  }
}

TEST_CASE("conformal_pvalue counts ties toward inclusion") {
  const CalibrationScores<double> calib(1, {0.3, 0.1, 0.2});
  CHECK(conformal_pvalue(calib, 0.25).value == doctest::Approx(0.5));
  CHECK(conformal_pvalue(calib, 0.9).value == doctest::Approx(0.25));
  CHECK(conformal_pvalue(calib, 0.0).value == doctest::Approx(1.0));
  // Tie at 0.2: both 0.2 and 0.3 count.
  CHECK(conformal_pvalue(calib, 0.2).rank == 3);
}

TEST_CASE("prediction_set") {
  const CalibrationScores<double> calib(1, {0.1, 0.2, 0.3});
  const LabelSpace labels({0, 1});
  const auto scorer = table_scorer({0.25, 0.9});
  const Vec x = Vec::Zero(1);

  SUBCASE("alpha outside (0, 1) is rejected") {
    for (const double a : {0.0, 1.0, -0.2, 1.5}) {
      try {
        prediction_set(scorer, calib, x, labels, a);
        FAIL("expected InvalidAlpha");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidAlpha);
      }
    }
  }
  SUBCASE("hand-evaluated p-values 0.5 and 0.25 at alpha 0.3") {
    const PredictionSet set = prediction_set(scorer, calib, x, labels, 0.3);
    CHECK(set.members == std::vector<Label>{0});
    CHECK(set.alpha_used == 0.3);
    CHECK(set.method == MethodId::single(1));
  }
  SUBCASE("scale mismatch") {
    CHECK_THROWS_AS(prediction_set(table_scorer({0.25, 0.9}, 2), calib, x, labels, 0.3), Error);
  }
  SUBCASE("alpha 0.05 with n = 19 includes y iff some calibration score is >= its score") {
    Rng rng(7);
    std::vector<double> scores(19);
    for (double& s : scores) s = rng.uniform();
    const CalibrationScores<double> c19(1, scores);
    const double max_score = *std::max_element(scores.begin(), scores.end());
    // Probe every calibration value, midpoints and values beyond the range.
    std::vector<double> probes = scores;
    for (const double s : scores) probes.push_back(s + 1e-9);
    probes.push_back(-1.0);
    probes.push_back(max_score + 1.0);
    for (const double probe : probes) {
      const std::size_t count = brute_count_at_least(scores, probe);
      const auto set = prediction_set(table_scorer({probe, probe}), c19, x, labels, 0.05);
      CHECK((set.size() == 2) == (count >= 1));
    }
  }
}

TEST_CASE("transductive_pvalue") {
  Mat train(1, 1);
  train << 0.5;
  const std::vector<Label> y{0};
  const Vec x_new = Vec::Zero(1);

  SUBCASE("single training point") {
    Vec at(1);
    at << 0.5;
    CHECK(transductive_pvalue(identity_scorer(), train, std::span<const Label>(y), at, 0).value == doctest::Approx(1.0));
    at << 0.9;
    CHECK(transductive_pvalue(identity_scorer(), train, std::span<const Label>(y), at, 0).value == doctest::Approx(0.5));
  }
  SUBCASE("matches split p-value for a data-independent scorer") {
    Rng rng(11);
    Mat xs(40, 1);
    std::vector<Label> ys(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
      xs(i, 0) = rng.normal();
      ys[static_cast<std::size_t>(i)] = static_cast<Label>(rng.index(3));
    }
    const ConformityScorer<double> scorer(1, [](const Vec& x, Label l) { return std::abs(x(0) - l); });
    const auto calib = score_calibration(scorer, xs, std::span<const Label>(ys));
    for (int t = 0; t < 20; ++t) {
      Vec xn(1);
      xn << rng.normal();
      for (Label l = 0; l < 3; ++l) {
        const PValue full = transductive_pvalue(scorer, xs, std::span<const Label>(ys), xn, l);
        const PValue split = conformal_pvalue(calib, scorer(xn, l));
        CHECK(full.rank == split.rank);
      }
    }
  }
  SUBCASE("refits the scorer on the augmented data") {
    // Score = distance to the augmented sample mean.
    const ScorerFit<double> fit = [](const Mat& x, std::span<const Label>) {
      const double mean = x.col(0).mean();
      return ConformityScorer<double>(1, [mean](const Vec& v, Label) { return std::abs(v(0) - mean); });
    };
    Mat xs(4, 1);
    xs << 0.0, 1.0, 2.0, 3.0;
    const std::vector<Label> ys{0, 0, 0, 0};
    Vec xn(1);
    xn << 9.0;
    // Augmented mean = 15 / 5 = 3; distances 3, 2, 1, 0 and candidate 6.
    const PValue p = transductive_pvalue(fit, xs, std::span<const Label>(ys), xn, 0);
    CHECK(p.rank == 1);
    xn << 1.0;  // mean 7/5 = 1.4; distances 1.4, 0.4, 0.6, 1.6; candidate 0.4 -> all 4 count
    CHECK(transductive_pvalue(fit, xs, std::span<const Label>(ys), xn, 0).rank == 5);
  }
  SUBCASE("empty training set") {
    const Mat empty(0, 1);
    const std::vector<Label> none;
    CHECK_THROWS_AS(transductive_pvalue(table_scorer({0, 0}), empty, std::span<const Label>(none), x_new, 0), Error);
  }
}

TEST_CASE("p-value properties on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(50);
    std::vector<double> scores(n);
    // Coarse values so that ties are frequent.
    for (double& s : scores) s = std::round(rng.uniform() * 10.0) / 10.0;
    const CalibrationScores<double> calib(1, scores);

    const double a = std::round(rng.uniform() * 12.0) / 10.0 - 0.1;
    const double b = a + std::round(rng.uniform() * 5.0) / 10.0;
    const PValue pa = conformal_pvalue(calib, a);
    const PValue pb = conformal_pvalue(calib, b);
    // Monotone in the candidate score.
    CHECK(pa.value >= pb.value);
    // Range and quantization on the 1/(n+1) lattice.
    for (const auto& [p, s] : {std::pair{pa, a}, std::pair{pb, b}}) {
      CHECK(p.value >= 1.0 / static_cast<double>(n + 1) - 1e-15);
      CHECK(p.value <= 1.0);
      CHECK(p.value == doctest::Approx(static_cast<double>(p.rank) / static_cast<double>(n + 1)).epsilon(1e-15));
      CHECK(p.rank == brute_count_at_least(scores, s) + 1);
    }
    // Permutation invariance of the calibration order.
    std::vector<double> shuffled = scores;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
    CHECK(conformal_pvalue(CalibrationScores<double>(1, shuffled), a).rank == pa.rank);
  }
}

TEST_CASE("prediction sets are nested in alpha") {
  Rng rng(5);
  const LabelSpace labels = LabelSpace::range(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> scores(30);
    for (double& s : scores) s = rng.uniform();
    const CalibrationScores<double> calib(1, scores);
    std::vector<double> per_label(5);
    for (double& s : per_label) s = rng.uniform();
    const auto scorer = table_scorer(per_label);
    const double lo = 0.01 + 0.5 * rng.uniform();
    const double hi = lo + 0.4 * rng.uniform();
    const Vec x = Vec::Zero(1);
    const auto wide = prediction_set(scorer, calib, x, labels, lo);
    const auto narrow = prediction_set(scorer, calib, x, labels, hi);
    for (const Label y : narrow.members) CHECK(wide.contains(y));
  }
}

TEST_CASE("split p-values are super-uniform for exchangeable continuous scores") {
  Rng rng(99);
  const int reps = 10000;
  const std::size_t n = 19;
  std::vector<double> pvalues;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.normal();
    pvalues.push_back(conformal_pvalue(CalibrationScores<double>(1, scores), rng.normal()).value);
  }
  for (int j = 1; j <= 19; ++j) {
    const double t = 0.05 * j;
    const double freq = static_cast<double>(std::count_if(pvalues.begin(), pvalues.end(), [t](double p) { return p <= t; })) / reps;
    const double se = std::sqrt(t * (1 - t) / reps);
    CHECK(freq <= t + 3 * se);
  }
}

TEST_CASE("smoothed p-values") {
  const CalibrationScores<double> calib(1, {0.1, 0.2, 0.2, 0.3});
  // u = 1 reproduces the deterministic p-value; u -> 0 keeps only strict exceedances.
  CHECK(smoothed_pvalue(calib, 0.2, 1.0).value == doctest::Approx(conformal_pvalue(calib, 0.2).value));
  CHECK(smoothed_pvalue(calib, 0.2, 0.0).value == doctest::Approx(1.0 / 5.0));

  // Exactly uniform under exchangeability, even with heavy ties.
  Rng rng(3);
  const int reps = 20000;
  int below = 0;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> scores(9);
    for (double& s : scores) s = static_cast<double>(rng.index(3));
    const double p = smoothed_pvalue(CalibrationScores<double>(1, scores), static_cast<double>(rng.index(3)), rng.uniform()).value;
    below += p <= 0.3 ? 1 : 0;
  }
  const double freq = static_cast<double>(below) / reps;
  CHECK(std::abs(freq - 0.3) <= 4 * std::sqrt(0.3 * 0.7 / reps));
}
