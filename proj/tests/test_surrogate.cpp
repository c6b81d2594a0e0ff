#include <doctest.h>

#include <cmath>

#include "peakforge/error.hpp"
#include "peakforge/rng.hpp"
#include "peakforge/surrogate.hpp"

using namespace peakforge;

namespace {

TrainingSet sin_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  TrainingSet d;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform01();
    d.inputs.push_back({x});
    d.targets.push_back(std::sin(2.0 * 3.14159265358979323846 * x) +
                        0.01 * rng.normal());
  }
  return d;
}

}  // namespace

TEST_CASE("fit rejects degenerate data") {
  CHECK_THROWS_AS(RegressionForest::fit({{}, {}}, {}, 0), ConfigError);
  CHECK_THROWS_AS(RegressionForest::fit({{{0.5}}, {1.0}}, {}, 0), ConfigError);
  TrainingSet ragged{{{0.1}, {0.2, 0.3}}, {0.0, 1.0}};
  CHECK_THROWS_AS(RegressionForest::fit(ragged, {}, 0), ConfigError);
}

TEST_CASE("constant targets predict the constant with zero spread") {
  TrainingSet d;
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    d.inputs.push_back({rng.uniform01(), rng.uniform01()});
    d.targets.push_back(3.25);
  }
  const auto forest = RegressionForest::fit(d, {}, 42);
  for (int i = 0; i < 20; ++i) {
    const auto [mean, sd] = forest.predict({rng.uniform01(), rng.uniform01()});
    CHECK(mean == doctest::Approx(3.25));
    CHECK(sd == doctest::Approx(0.0));
  }
}

TEST_CASE("two pure leaves recover both targets") {
  TrainingSet d{{{0.0}, {1.0}}, {0.0, 1.0}};
  ForestParams p;
  p.n_trees = 1;
  p.min_leaf = 1;
  p.bootstrap = false;
  const auto forest = RegressionForest::fit(d, p, 7);
  CHECK(forest.predict({0.0}).first == doctest::Approx(0.0));
  CHECK(forest.predict({1.0}).first == doctest::Approx(1.0));
  CHECK(forest.predict({0.0}).second == 0.0);  // single tree -> zero std
}

TEST_CASE("bootstrap-disabled single tree interpolates training points") {
  Rng rng(3);
  TrainingSet d;
  for (int i = 0; i < 64; ++i) {
    d.inputs.push_back({rng.uniform01(), rng.uniform01()});
    d.targets.push_back(rng.uniform(-1.0, 1.0));
  }
  ForestParams p;
  p.n_trees = 1;
  p.min_leaf = 1;
  p.max_depth = 30;
  p.bootstrap = false;
  const auto forest = RegressionForest::fit(d, p, 11);
  for (std::size_t i = 0; i < d.inputs.size(); ++i)
    CHECK(forest.predict(d.inputs[i]).first == doctest::Approx(d.targets[i]));
}

TEST_CASE("sin curve fits under RMSE 0.15") {
  const TrainingSet train = sin_data(200, 100);
  const auto forest = RegressionForest::fit(train, {}, 5);
  Rng rng(200);
  double sq = 0.0;
  const int n_test = 100;
  for (int i = 0; i < n_test; ++i) {
    const double x = rng.uniform01();
    const double want = std::sin(2.0 * 3.14159265358979323846 * x);
    const double got = forest.predict({x}).first;
    sq += (got - want) * (got - want);
  }
  CHECK(std::sqrt(sq / n_test) < 0.15);
}

TEST_CASE("identical data and seed give identical predictions") {
  const TrainingSet d = sin_data(150, 9);
  const auto a = RegressionForest::fit(d, {}, 33);
  const auto b = RegressionForest::fit(d, {}, 33);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x{rng.uniform01()};
    const auto pa = a.predict(x), pb = b.predict(x);
    CHECK(pa.first == pb.first);  // bit-identical
    CHECK(pa.second == pb.second);
  }
  const auto c = RegressionForest::fit(d, {}, 34);
  bool any_diff = false;
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> x{rng.uniform01()};
    any_diff = any_diff || a.predict(x).first != c.predict(x).first;
  }
  CHECK(any_diff);  // different seed actually changes the ensemble
}

TEST_CASE("predictions stay within the target range") {
  Rng rng(6);
  TrainingSet d;
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < 300; ++i) {
    d.inputs.push_back({rng.uniform01(), rng.uniform01(), rng.uniform01()});
    const double t = rng.uniform(-5.0, 7.0);
    d.targets.push_back(t);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  const auto forest = RegressionForest::fit(d, {}, 8);
  for (int i = 0; i < 500; ++i) {
    const auto [mean, sd] =
        forest.predict({rng.uniform01(), rng.uniform01(), rng.uniform01()});
    CHECK(mean >= lo);
    CHECK(mean <= hi);
    CHECK(sd >= 0.0);
  }
}

TEST_CASE("uncertainty shrinks as training data grows") {
  auto avg_std = [](std::size_t n) {
    const auto forest = RegressionForest::fit(sin_data(n, 77), {}, 13);
    double s = 0.0;
    const int grid = 50;
    for (int i = 0; i < grid; ++i)
      s += forest.predict({(i + 0.5) / grid}).second;
    return s / grid;
  };
  const double at100 = avg_std(100);
  const double at800 = avg_std(800);
  CHECK(at800 <= at100 * 1.05);
}

TEST_CASE("predict validates dimension") {
  const auto forest = RegressionForest::fit(sin_data(50, 1), {}, 2);
  CHECK_THROWS_AS(forest.predict({0.5, 0.5}), ConfigError);
}
