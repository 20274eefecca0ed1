#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "act/augmentation.hpp"
#include "act/errors.hpp"
#include "act/matrix.hpp"
#include "act/rng.hpp"

using namespace act;

TEST_CASE("a noise transform is a fixed translation") {
  auto t = Augmentation::noise(3, 0.5, 99);
  std::vector<double> x{0.1, 0.2, 0.3};
  auto a = t.apply(x);
  auto b = t.apply(x);
  CHECK(a == b);  // randomness fixed at construction
  // It moved the point by exactly the scale.
  CHECK(euclidean_distance(a, x) == doctest::Approx(0.5).epsilon(1e-12));
  // Distances between points are preserved (declared constant 1).
  std::vector<double> y{0.9, -0.4, 0.2};
  CHECK(euclidean_distance(t.apply(x), t.apply(y)) ==
        doctest::Approx(euclidean_distance(x, y)).epsilon(1e-12));
}

TEST_CASE("coordinate mask zeroes exactly the chosen subset") {
  auto t = Augmentation::mask(3, {2});
  std::vector<double> x{0.7, -0.3, 0.9};
  auto y = t.apply(x);
  CHECK(y[0] == 0.7);
  CHECK(y[1] == -0.3);
  CHECK(y[2] == 0.0);
  CHECK_THROWS_AS(Augmentation::mask(3, {5}), std::invalid_argument);

  auto seeded = Augmentation::mask_from_seed(10, 0.3, 4);
  std::vector<double> z(10, 1.0);
  auto zz = seeded.apply(z);
  int zeroed = 0;
  for (double v : zz) zeroed += v == 0.0 ? 1 : 0;
  CHECK(zeroed == 3);  // round(0.3 * 10)
}

TEST_CASE("smooth scaling with gamma zero is the identity") {
  auto t = Augmentation::smooth_scale(4, 0.0);
  std::vector<double> x{0.1, 0.5, -0.2, 0.9};
  CHECK(t.apply(x) == x);
  auto t2 = Augmentation::smooth_scale(2, 0.25);
  std::vector<double> y{2.0, -4.0};
  auto z = t2.apply(y);
  CHECK(z[0] == doctest::Approx(2.5));
  CHECK(z[1] == doctest::Approx(-5.0));
}

TEST_CASE("view pair sampling has uniform marginals") {
  std::vector<Augmentation> ts;
  for (int i = 0; i < 4; ++i)
    ts.push_back(Augmentation::noise(2, 0.1, static_cast<std::uint64_t>(i)));
  AugmentationSet augs(2, std::move(ts));
  Rng rng(123);
  const int draws = 100000;
  std::vector<int> first_counts(4, 0), second_counts(4, 0);
  for (int i = 0; i < draws; ++i) {
    auto [a, b] = augs.sample_view_pair(rng);
    ++first_counts[a];
    ++second_counts[b];
  }
  // Chi-squared against the uniform law; 11.345 is the 0.99 quantile at
  // 3 degrees of freedom, and the seed is fixed so this is deterministic.
  const double expected = draws / 4.0;
  for (const auto& counts : {first_counts, second_counts}) {
    double stat = 0.0;
    for (int c : counts) {
      const double d = c - expected;
      stat += d * d / expected;
    }
    CHECK(stat < 11.345);
  }
}

TEST_CASE("declared Lipschitz constants bound empirical ratios") {
  std::vector<Augmentation> ts;
  ts.push_back(Augmentation::noise(5, 0.3, 1));
  ts.push_back(Augmentation::mask(5, {1, 3}));
  ts.push_back(Augmentation::smooth_scale(5, 0.2));
  AugmentationSet augs(5, std::move(ts));
  CHECK(augs.lipschitz_constant() == doctest::Approx(1.2));

  Rng rng(55);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> x(5), y(5);
    for (double& v : x) v = rng.uniform(0.0, 1.0);
    for (double& v : y) v = rng.uniform(0.0, 1.0);
    const double base = euclidean_distance(x, y);
    for (std::size_t g = 0; g < augs.count(); ++g) {
      const double moved =
          euclidean_distance(augs.apply(g, x), augs.apply(g, y));
      CHECK(moved <= augs.transform(g).lipschitz() * base + 1e-12);
    }
  }
}

TEST_CASE("transforms keep the unit box bounded") {
  std::vector<Augmentation> ts;
  ts.push_back(Augmentation::noise(3, 0.4, 7));
  ts.push_back(Augmentation::mask(3, {0}));
  ts.push_back(Augmentation::smooth_scale(3, 0.5));
  AugmentationSet augs(3, std::move(ts));
  Rng rng(66);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(3);
    for (double& v : x) v = rng.unit();
    for (std::size_t g = 0; g < augs.count(); ++g)
      for (double v : augs.apply(g, x)) CHECK(std::abs(v) <= 2.0);
  }
}

TEST_CASE("pair batches are deterministic per seed") {
  std::vector<std::vector<double>> xs{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}};
  std::vector<Augmentation> ts;
  ts.push_back(Augmentation::noise(2, 0.05, 11));
  ts.push_back(Augmentation::noise(2, 0.05, 12));
  AugmentationSet augs(2, std::move(ts));
  Rng r1(9), r2(9);
  PairBatch a = make_pair_batch(xs, augs, r1);
  PairBatch b = make_pair_batch(xs, augs, r2);
  REQUIRE(a.size() == 3);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("quality estimate with the identity augmentation") {
  // One identity transform: the closest-approach distance between two
  // samples is their plain distance, so delta is the intra-class diameter.
  LabeledSet data;
  data.num_classes = 2;
  data.points = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 0.5},
                 {5.0, 5.0}, {5.0, 7.0}};
  data.labels = {0, 0, 0, 1, 1};
  AugmentationSet augs(2, {Augmentation::smooth_scale(2, 0.0)});
  auto q = estimate_quality(data, augs, 0.0);
  CHECK(q.sigma == 1.0);
  CHECK(q.per_class_delta[0] ==
        doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));  // (1,0) vs (0,.5)
  CHECK(q.per_class_delta[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(q.delta == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("identical samples give zero diameter") {
  LabeledSet data;
  data.num_classes = 1;
  data.points = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
  data.labels = {0, 0, 0};
  AugmentationSet augs(2, {Augmentation::noise(2, 0.1, 3)});
  auto q = estimate_quality(data, augs, 0.0);
  CHECK(q.delta == 0.0);
}

TEST_CASE("trimming drops the worst-spread samples and reports the mass") {
  LabeledSet data;
  data.num_classes = 1;
  data.points = {{0.0}, {0.1}, {0.2}, {0.15}, {9.0}};  // one far outlier
  data.labels = {0, 0, 0, 0, 0};
  AugmentationSet augs(1, {Augmentation::smooth_scale(1, 0.0)});
  auto full = estimate_quality(data, augs, 0.0);
  CHECK(full.delta == doctest::Approx(9.0));
  auto trimmed = estimate_quality(data, augs, 0.2);  // drops 1 of 5
  CHECK(trimmed.sigma == doctest::Approx(0.8));
  CHECK(trimmed.delta == doctest::Approx(0.2));
}

TEST_CASE("empty classes are rejected") {
  LabeledSet data;
  data.num_classes = 3;
  data.points = {{0.0}, {1.0}, {1.1}, {0.1}};
  data.labels = {0, 1, 1, 0};  // class 2 empty
  AugmentationSet augs(1, {Augmentation::smooth_scale(1, 0.0)});
  CHECK_THROWS_AS(estimate_quality(data, augs, 0.0), DataError);
}
