#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "act/diagnostics.hpp"
#include "act/errors.hpp"
#include "act/synthgen.hpp"
#include "doctest.h"

using namespace act;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig cfg;
  cfg.d = 4;
  cfg.k = 2;
  cfg.n_source = 50;
  cfg.n_target = 20;
  cfg.n_test = 30;
  cfg.class_radius = 0.25;
  cfg.center_separation = 1.0;
  cfg.seed = 11;
  return cfg;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string(std::istreambuf_iterator<char>(f),
                     std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  REQUIRE(bool(f));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::vector<double>> class_points(const LabeledSet& s, int klass,
                                              std::size_t cap) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.size() && out.size() < cap; ++i)
    if (s.labels[i] == klass) out.push_back(s.points[i]);
  return out;
}

}  // namespace

TEST_CASE("config validation rejects bad settings") {
  SyntheticConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());

  SyntheticConfig c1 = cfg;
  c1.k = 1;
  CHECK_THROWS_AS(c1.validate(), std::invalid_argument);

  SyntheticConfig c2 = cfg;
  c2.k = 5;  // exceeds d=4
  CHECK_THROWS_AS(c2.validate(), std::invalid_argument);

  SyntheticConfig c3 = cfg;
  c3.center_separation = 2.0 * c3.class_radius;  // not strictly greater
  CHECK_THROWS_AS(c3.validate(), std::invalid_argument);

  SyntheticConfig c4 = cfg;
  c4.shift_rho = -0.1;
  CHECK_THROWS_AS(c4.validate(), std::invalid_argument);

  SyntheticConfig c5 = cfg;
  c5.shift_eta = 0.6;  // 1/k - eta < 0
  CHECK_THROWS_AS(c5.validate(), std::invalid_argument);

  SyntheticConfig c6 = cfg;
  c6.n_target = 0;
  CHECK_THROWS_AS(c6.validate(), std::invalid_argument);

  SyntheticConfig c7 = cfg;
  c7.class_radius = std::nan("");
  CHECK_THROWS_AS(c7.validate(), std::invalid_argument);
}

TEST_CASE("source priors are uniform and target priors follow the eta pattern") {
  SyntheticConfig cfg = small_config();
  cfg.k = 4;
  cfg.shift_eta = 0.05;
  const std::vector<double> ps = cfg.source_priors();
  REQUIRE(ps.size() == 4);
  for (double p : ps) CHECK(p == 0.25);

  // k even: the +-eta pattern sums to one already, so no renormalization.
  const std::vector<double> pt = cfg.target_priors();
  CHECK(pt[0] == 0.25 + 0.05);
  CHECK(pt[1] == 0.25 - 0.05);
  CHECK(pt[2] == 0.25 + 0.05);
  CHECK(pt[3] == 0.25 - 0.05);

  SyntheticConfig odd = cfg;
  odd.k = 3;
  odd.shift_eta = 0.1;
  const std::vector<double> po = odd.target_priors();
  const double third = 1.0 / 3.0;
  const double sum = (third + 0.1) + (third - 0.1) + (third + 0.1);
  CHECK(po[0] == (third + 0.1) / sum);
  CHECK(po[1] == (third - 0.1) / sum);
  CHECK(po[2] == (third + 0.1) / sum);
  double total = 0.0;
  for (double p : po) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("class centers sit on mutually orthogonal axes") {
  SyntheticConfig cfg = small_config();
  cfg.d = 5;
  cfg.k = 3;
  cfg.center_separation = 1.5;
  for (std::size_t a = 0; a < cfg.k; ++a) {
    const std::vector<double> c = cfg.center(a);
    REQUIRE(c.size() == 5);
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(c[j] == (j == a ? 1.5 : 0.0));
  }
  for (std::size_t a = 0; a < cfg.k; ++a)
    for (std::size_t b = a + 1; b < cfg.k; ++b) {
      double dot = 0.0;
      const auto ca = cfg.center(a);
      const auto cb = cfg.center(b);
      for (std::size_t j = 0; j < 5; ++j) dot += ca[j] * cb[j];
      CHECK(dot == 0.0);
    }
  CHECK_THROWS_AS(cfg.center(3), std::invalid_argument);
}

TEST_CASE("zero radius collapses every sample onto its class center") {
  SyntheticConfig cfg = small_config();
  cfg.class_radius = 0.0;
  cfg.center_separation = 1.0;
  const LabeledSet s = generate_source(cfg);
  REQUIRE(s.size() == cfg.n_source);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = cfg.center(static_cast<std::size_t>(s.labels[i]));
    for (std::size_t j = 0; j < cfg.d; ++j) CHECK(s.points[i][j] == c[j]);
  }
}

TEST_CASE("generation is deterministic per seed") {
  SyntheticConfig cfg = small_config();
  cfg.shift_rho = 0.3;
  cfg.shift_eta = 0.1;
  const LabeledSet a = generate_source(cfg);
  const LabeledSet b = generate_source(cfg);
  REQUIRE(a.size() == b.size());
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < cfg.d; ++j)
      CHECK(a.points[i][j] == b.points[i][j]);

  const TargetData t1 = generate_target(cfg);
  const TargetData t2 = generate_target(cfg);
  CHECK(t1.few_shot.labels == t2.few_shot.labels);
  CHECK(t1.test.labels == t2.test.labels);
  for (std::size_t i = 0; i < t1.few_shot.size(); ++i)
    for (std::size_t j = 0; j < cfg.d; ++j)
      CHECK(t1.few_shot.points[i][j] == t2.few_shot.points[i][j]);

  SyntheticConfig other = cfg;
  other.seed = cfg.seed + 1;
  const LabeledSet c = generate_source(other);
  bool any_diff = c.labels != a.labels;
  for (std::size_t i = 0; i < a.size() && !any_diff; ++i)
    if (a.points[i] != c.points[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("source class counts stay within multinomial concentration") {
  SyntheticConfig cfg;
  cfg.d = 4;
  cfg.k = 4;
  cfg.n_source = 1000;
  cfg.seed = 5;
  const LabeledSet s = generate_source(cfg);
  const std::vector<std::size_t> counts = s.class_counts();
  REQUIRE(counts.size() == 4);
  const double expect = 250.0;
  const double sigma = std::sqrt(1000.0 * 0.25 * 0.75);
  std::size_t total = 0;
  for (std::size_t c : counts) {
    CHECK(std::abs(static_cast<double>(c) - expect) <= 3.0 * sigma);
    total += c;
  }
  CHECK(total == 1000);
}

TEST_CASE("target few-shot and test sets come from disjoint streams") {
  SyntheticConfig cfg = small_config();
  cfg.shift_rho = 0.1;
  const TargetData t = generate_target(cfg);
  REQUIRE(t.few_shot.size() == cfg.n_target);
  REQUIRE(t.test.size() == cfg.n_test);
  CHECK(t.few_shot.num_classes == static_cast<int>(cfg.k));
  CHECK(t.test.num_classes == static_cast<int>(cfg.k));
  // No generated sample is reused between the two sets.
  for (const auto& p : t.few_shot.points)
    for (const auto& q : t.test.points) CHECK(p != q);
}

TEST_CASE("generated classes are geometrically disjoint") {
  SyntheticConfig cfg;
  cfg.d = 4;
  cfg.k = 3;
  cfg.n_source = 200;
  cfg.class_radius = 0.25;
  cfg.center_separation = 1.0;
  cfg.seed = 9;
  const LabeledSet s = generate_source(cfg);
  // Centers are sqrt(2)*separation apart, samples at most class_radius from
  // their center, so inter-class distances exceed sqrt(2) - 2*radius.
  const double floor_dist =
      std::sqrt(2.0) * cfg.center_separation - 2.0 * cfg.class_radius;
  double min_cross = 1e300;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      if (s.labels[i] == s.labels[j]) continue;
      double sq = 0.0;
      for (std::size_t c = 0; c < cfg.d; ++c) {
        const double diff = s.points[i][c] - s.points[j][c];
        sq += diff * diff;
      }
      min_cross = std::min(min_cross, std::sqrt(sq));
    }
  CHECK(min_cross > 0.0);
  CHECK(min_cross >= floor_dist - 1e-9);
}

TEST_CASE("zero shift leaves the target law unchanged") {
  SyntheticConfig cfg;
  cfg.d = 2;
  cfg.k = 2;
  cfg.n_source = 1000;
  cfg.n_target = 1000;
  cfg.n_test = 10;
  cfg.class_radius = 0.1;
  cfg.center_separation = 1.0;
  cfg.shift_rho = 0.0;
  cfg.shift_eta = 0.0;
  cfg.seed = 11;
  const LabeledSet s = generate_source(cfg);
  const TargetData t = generate_target(cfg);
  for (int klass = 0; klass < 2; ++klass) {
    const auto a = class_points(s, klass, 64);
    const auto b = class_points(t.few_shot, klass, 64);
    const std::size_t m = std::min(a.size(), b.size());
    REQUIRE(m == 64);
    const std::vector<std::vector<double>> am(a.begin(),
                                              a.begin() + static_cast<long>(m));
    const std::vector<std::vector<double>> bm(b.begin(),
                                              b.begin() + static_cast<long>(m));
    const double w = wasserstein1(am, bm);
    const double bound =
        2.0 * cfg.class_radius / std::sqrt(static_cast<double>(m));
    CHECK(w < bound);
  }
}

TEST_CASE("point-mass translation realizes the shift magnitude") {
  SyntheticConfig cfg;
  cfg.d = 4;
  cfg.k = 2;
  cfg.n_source = 60;
  cfg.n_target = 60;
  cfg.n_test = 10;
  cfg.class_radius = 0.0;
  cfg.center_separation = 1.0;
  cfg.shift_rho = 0.5;
  cfg.seed = 33;
  const LabeledSet s = generate_source(cfg);
  const TargetData t = generate_target(cfg);
  const auto dirs = class_shift_directions(cfg);

  // Every target sample is exactly center + rho * direction.
  for (std::size_t i = 0; i < t.few_shot.size(); ++i) {
    const auto k = static_cast<std::size_t>(t.few_shot.labels[i]);
    const auto c = cfg.center(k);
    for (std::size_t j = 0; j < cfg.d; ++j)
      CHECK(t.few_shot.points[i][j] == c[j] + cfg.shift_rho * dirs[k][j]);
  }

  for (int klass = 0; klass < 2; ++klass) {
    const auto a = class_points(s, klass, 40);
    const auto b = class_points(t.few_shot, klass, 40);
    const std::size_t m = std::min(a.size(), b.size());
    REQUIRE(m >= 5);
    const std::vector<std::vector<double>> am(a.begin(),
                                              a.begin() + static_cast<long>(m));
    const std::vector<std::vector<double>> bm(b.begin(),
                                              b.begin() + static_cast<long>(m));
    CHECK(wasserstein1(am, bm) == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("prior perturbation shows up in sampled label frequencies") {
  SyntheticConfig cfg;
  cfg.d = 2;
  cfg.k = 2;
  cfg.n_source = 10000;
  cfg.n_target = 10000;
  cfg.n_test = 10;
  cfg.class_radius = 0.1;
  cfg.center_separation = 1.0;
  cfg.shift_eta = 0.1;
  cfg.seed = 44;
  const LabeledSet s = generate_source(cfg);
  const TargetData t = generate_target(cfg);
  const double gap = prior_gap(s.labels, t.few_shot.labels, 2);
  CHECK(std::abs(gap - 0.1) < 0.03);
}

TEST_CASE("binary dataset files round-trip bitwise") {
  SyntheticConfig cfg = small_config();
  cfg.shift_rho = 0.2;
  const LabeledSet s = generate_source(cfg);
  const std::string path = "/tmp/act_synthgen_roundtrip.bin";
  save_dataset(s, path);
  const LabeledSet r = load_dataset(path);
  REQUIRE(r.size() == s.size());
  CHECK(r.num_classes == s.num_classes);
  CHECK(r.labels == s.labels);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < cfg.d; ++j)
      CHECK(r.points[i][j] == s.points[i][j]);

  // Unlabeled variant: header says has_labels=0, loader returns no labels.
  const std::string upath = "/tmp/act_synthgen_unlabeled.bin";
  save_dataset(s, upath, false);
  const LabeledSet u = load_dataset(upath);
  REQUIRE(u.size() == s.size());
  CHECK(u.labels.empty());
  CHECK(u.num_classes == s.num_classes);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(u.points[i] == s.points[i]);
  std::remove(path.c_str());
  std::remove(upath.c_str());
}

TEST_CASE("binary loader rejects corrupted files") {
  SyntheticConfig cfg = small_config();
  const LabeledSet s = generate_source(cfg);
  const std::string path = "/tmp/act_synthgen_corrupt.bin";
  save_dataset(s, path);
  const std::string good = read_bytes(path);

  write_bytes(path, "not-a-dataset\n0 0 0 0\n");
  CHECK_THROWS_AS(load_dataset(path), DataError);

  write_bytes(path, good.substr(0, good.size() - 3));
  CHECK_THROWS_AS(load_dataset(path), DataError);

  write_bytes(path, good + "x");
  CHECK_THROWS_AS(load_dataset(path), DataError);

  // Flip the final label to a value outside [0, K).
  std::string bad_label = good;
  bad_label[bad_label.size() - 8] = char(0x7f);
  write_bytes(path, bad_label);
  CHECK_THROWS_AS(load_dataset(path), DataError);

  CHECK_THROWS_AS(load_dataset("/tmp/act_synthgen_missing.bin"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("csv files round-trip through shortest formatting") {
  LabeledSet s;
  s.num_classes = 3;
  s.points = {{0.1, -2.5e-17, 3.0},
              {1.0 / 3.0, 7.25, -0.0},
              {5e300, 1e-300, 42.0}};
  s.labels = {0, 2, 1};
  const std::string path = "/tmp/act_synthgen_roundtrip.csv";
  export_csv(s, path);
  const LabeledSet r = import_csv(path);
  REQUIRE(r.size() == 3);
  CHECK(r.labels == s.labels);
  CHECK(r.num_classes == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(r.points[i][j] == s.points[i][j]);

  const std::string upath = "/tmp/act_synthgen_unlabeled.csv";
  export_csv(s, upath, false);
  const LabeledSet u = import_csv(upath);
  CHECK(u.labels.empty());
  CHECK(u.num_classes == 0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(u.points[i] == s.points[i]);
  std::remove(path.c_str());
  std::remove(upath.c_str());
}

TEST_CASE("csv importer rejects malformed input") {
  const std::string path = "/tmp/act_synthgen_bad.csv";

  write_bytes(path, "x0,x1,label\n0.5\n");
  CHECK_THROWS_AS(import_csv(path), DataError);

  write_bytes(path, "x0,x1,label\n0.5,oops,1\n");
  CHECK_THROWS_AS(import_csv(path), DataError);

  write_bytes(path, "y0,x1,label\n0.5,0.5,1\n");
  CHECK_THROWS_AS(import_csv(path), DataError);

  write_bytes(path, "x0,x1,label\n0.5,0.5,1.5\n");
  CHECK_THROWS_AS(import_csv(path), DataError);

  write_bytes(path, "x0,x1,label\n");
  CHECK_THROWS_AS(import_csv(path), DataError);

  write_bytes(path, "");
  CHECK_THROWS_AS(import_csv(path), DataError);
  std::remove(path.c_str());
}
