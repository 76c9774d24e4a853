#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "mscp/io.hpp"
#include "mscp/synth.hpp"

using namespace mscp;

namespace {

using Vec = Eigen::VectorXd;

double closed_form_latent_sd(const SynthConfig& c) {
  double coarse = c.scale_weights[0];
  double fine = 0.0;
  for (std::size_t k = 1; k < c.scale_weights.size(); ++k) {
    coarse += c.rho * c.scale_weights[k];
    fine += c.scale_weights[k] * c.scale_weights[k];
  }
  return std::sqrt(coarse * coarse + (1 - c.rho * c.rho) * fine + c.noise_sd * c.noise_sd);
}

std::string config_error(SynthConfig c) {
  try {
    validate(c);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("normal cdf and quantile") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  for (int i = 1; i < 200; ++i) {
    const double p = i / 200.0;
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK_THROWS_AS(normal_quantile(1.5), Error);
}

TEST_CASE("default scale weights") {
  CHECK(default_scale_weights(3) == std::vector<double>{1.0, 0.6, 0.3});
  CHECK(default_scale_weights(5) == std::vector<double>{1.0, 0.6, 0.3, 0.15, 0.075});
}

TEST_CASE("config validation names the field") {
  SynthConfig c;
  CHECK(config_error(c).empty());
  c.n_classes = 1;
  CHECK(config_error(c).find("n_classes") != std::string::npos);
  c = {};
  c.scale_weights = {1.0, 0.5};
  CHECK(config_error(c).find("scale_weights") != std::string::npos);
  c = {};
  c.rho = 1.5;
  CHECK(config_error(c).find("rho") != std::string::npos);
  c = {};
  c.noise_sd = -0.1;
  CHECK(config_error(c).find("noise_sd") != std::string::npos);
  c = {};
  c.n_points = 3;
  CHECK(config_error(c).find("n_points") != std::string::npos);
  c = {};
  c.scale_weights = {0, 0, 0};
  CHECK(config_error(c).find("scale_weights") != std::string::npos);
}

TEST_CASE("latent sd and bin edges") {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    SynthConfig c;
    c.n_scales = 1 + static_cast<int>(rng.index(4));
    c.scale_weights.clear();
    for (int k = 0; k < c.n_scales; ++k) c.scale_weights.push_back(rng.normal());
    c.rho = rng.uniform();
    c.noise_sd = rng.uniform();
    c.n_classes = 2 + static_cast<int>(rng.index(5));
    CHECK(latent_sd(c) == doctest::Approx(closed_form_latent_sd(c)).epsilon(1e-12));
    const auto edges = bin_edges(c);
    REQUIRE(edges.size() == static_cast<std::size_t>(c.n_classes - 1));
    for (std::size_t j = 0; j < edges.size(); ++j) {
      const double level = static_cast<double>(j + 1) / c.n_classes;
      CHECK(normal_cdf(edges[j] / latent_sd(c)) == doctest::Approx(level).epsilon(1e-10));
    }
  }
}

TEST_CASE("generate_dataset") {
  SynthConfig c;
  const Dataset a = generate_dataset(c);
  CHECK(a.size() == 1000);
  CHECK(a.scales() == 3);
  CHECK(a.labels.size() == 1000);
  for (const Label y : a.labels) CHECK((y >= 0 && y < 4));
  const Dataset b = generate_dataset(c);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  c.seed += 1;
  CHECK_FALSE(generate_dataset(c).features == a.features);

  SUBCASE("noise-free binary labels follow the sign of the weighted sum") {
    SynthConfig z;
    z.n_classes = 2;
    z.noise_sd = 0.0;
    const Dataset ds = generate_dataset(z);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += z.scale_weights[static_cast<std::size_t>(k)] * ds.features(i, k);
      CHECK(ds.labels[static_cast<std::size_t>(i)] == (s > 0.0 ? 1 : 0));
    }
  }
  SUBCASE("rho = 1 makes every scale a copy of the first") {
    SynthConfig r;
    r.rho = 1.0;
    const Dataset ds = generate_dataset(r);
    for (int k = 1; k < 3; ++k) CHECK(ds.features.col(k) == ds.features.col(0));
  }
  SUBCASE("rho = 0 gives uncorrelated scales") {
    SynthConfig r;
    r.n_points = 20000;
    const Dataset ds = generate_dataset(r);
    const auto x1 = ds.features.col(0);
    const auto x2 = ds.features.col(1);
    const double corr = ((x1.array() - x1.mean()) * (x2.array() - x2.mean())).mean() /
                        std::sqrt((x1.array() - x1.mean()).square().mean() * (x2.array() - x2.mean()).square().mean());
    CHECK(std::abs(corr) <= 3.0 / std::sqrt(20000.0));
  }
  SUBCASE("classes are equiprobable") {
    SynthConfig r;
    r.n_points = 40000;
    const Dataset ds = generate_dataset(r);
    std::vector<int> counts(4, 0);
    for (const Label y : ds.labels) ++counts[static_cast<std::size_t>(y)];
    const double se = std::sqrt(0.25 * 0.75 / 40000.0);
    for (const int n : counts) CHECK(std::abs(n / 40000.0 - 0.25) <= 4 * se);
  }
  SUBCASE("first and second halves have the same label distribution") {
    SynthConfig r;
    r.n_points = 20000;
    const Dataset ds = generate_dataset(r);
    for (Label y = 0; y < 4; ++y) {
      const auto first = std::count(ds.labels.begin(), ds.labels.begin() + 10000, y);
      const auto second = std::count(ds.labels.begin() + 10000, ds.labels.end(), y);
      const double se = std::sqrt(2 * 0.25 * 0.75 / 10000.0);
      CHECK(std::abs((first - second) / 10000.0) <= 4 * se);
    }
  }
}

TEST_CASE("oracle_conditional") {
  SynthConfig c;
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    Vec x(3);
    for (Eigen::Index k = 0; k < 3; ++k) x(k) = 2 * rng.normal();
    const Vec p = oracle_conditional(c, x);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.minCoeff() >= 0.0);
  }
  SUBCASE("extreme inputs put all mass on the outer classes") {
    Vec x(3);
    x << 50, 0, 0;
    CHECK(oracle_conditional(c, x)(3) == doctest::Approx(1.0));
    x << -50, 0, 0;
    CHECK(oracle_conditional(c, x)(0) == doctest::Approx(1.0));
  }
  SUBCASE("zero noise is one-hot") {
    SynthConfig z;
    z.noise_sd = 0.0;
    Vec x(3);
    x << 0.01, 0, 0;
    const Vec p = oracle_conditional(z, x);
    CHECK(p.maxCoeff() == 1.0);
    CHECK(p.sum() == 1.0);
  }
  SUBCASE("agrees with Monte Carlo label draws") {
    SynthConfig m;
    m.noise_sd = 0.4;
    const auto edges = bin_edges(m);
    Vec x(3);
    x << -0.2, 0.5, 0.1;
    const Vec p = oracle_conditional(m, x);
    Rng draw(99);
    std::vector<int> counts(4, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_label(m, edges, x, draw))];
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double se = std::sqrt(p(j) * (1 - p(j)) / n);
      CHECK(std::abs(counts[static_cast<std::size_t>(j)] / static_cast<double>(n) - p(j)) <= 3 * se + 1e-12);
    }
  }
  CHECK_THROWS_AS(oracle_conditional(c, Vec::Zero(2)), Error);
}

TEST_CASE("split_dataset") {
  const SplitIndices s = split_dataset(10, SplitFractions{0.5, 0.3, 0.2}, 4);
  CHECK(s.train.size() == 5);
  CHECK(s.calib.size() == 3);
  CHECK(s.test.size() == 2);
  std::set<Eigen::Index> all;
  for (const auto* part : {&s.train, &s.calib, &s.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == 10);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);
  const SplitIndices again = split_dataset(10, SplitFractions{0.5, 0.3, 0.2}, 4);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  const SplitIndices defaults = split_dataset(1000, SplitFractions{}, 1);
  CHECK(defaults.train.size() == 400);
  CHECK(defaults.calib.size() == 300);
  CHECK(defaults.test.size() == 300);
  CHECK_THROWS_AS(split_dataset(10, SplitFractions{0.5, 0.5, 0.5}, 1), Error);
  CHECK_THROWS_AS(split_dataset(10, SplitFractions{1.0, 0.0, 0.0}, 1), Error);
  CHECK_THROWS_AS(split_dataset(2, SplitFractions{}, 1), Error);
}

TEST_CASE("dataset CSV") {
  SynthConfig c;
  c.n_points = 50;
  const Dataset ds = generate_dataset(c);
  const std::string text = dataset_to_csv(ds);
  CHECK(text.rfind("x1,x2,x3,label\n", 0) == 0);
  const Dataset back = dataset_from_csv(text);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK_FALSE(back.config.has_value());

  auto parse_error = [](const std::string& body) -> std::string {
    try {
      dataset_from_csv(body);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      return e.what();
    }
    return "";
  };
  CHECK(parse_error("x1,label\n0.5,1\nabc,0\n").find("line 3") != std::string::npos);
  CHECK(parse_error("x1,label\n0.5,1,2\n").find("line 2") != std::string::npos);
  CHECK(parse_error("x1,label\n0.5,-1\n").find("line 2") != std::string::npos);
  CHECK_FALSE(parse_error("").empty());
}
