#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "act/encoder.hpp"
#include "act/errors.hpp"
#include "act/rng.hpp"

using namespace act;

namespace {

EncoderSpec small_spec() {
  EncoderSpec s;
  s.dim_in = 3;
  s.dim_out = 2;
  s.width = 4;
  s.depth = 2;
  s.kappa_budget = 100.0;
  s.b1 = s.b2 = 1.0;
  return s;
}

}  // namespace

TEST_CASE("an identity-like one-layer network reproduces nonnegative inputs") {
  EncoderSpec s;
  s.dim_in = 3;
  s.dim_out = 3;
  s.width = 4;
  s.depth = 1;
  s.kappa_budget = 10.0;
  EncoderParams p;
  p.spec = s;
  Matrix a0(4, 3);
  for (std::size_t i = 0; i < 3; ++i) a0.at(i, i) = 1.0;
  p.weights.push_back(a0);
  p.biases.push_back(Matrix(4, 1));
  Matrix a1(3, 4);
  for (std::size_t i = 0; i < 3; ++i) a1.at(i, i) = 1.0;
  p.weights.push_back(a1);

  std::vector<double> x{0.6, 0.0, 0.8};  // nonnegative, unit norm
  auto y = forward(p, x, true);
  REQUIRE(y.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("kappa hand computations") {
  // One relu layer with row 1-norms (bias included) at most 0.5, final layer
  // [[3, -4]]: the hidden factor clamps to 1 and kappa is 7.
  EncoderSpec s;
  s.dim_in = 2;
  s.dim_out = 1;
  s.width = 2;
  s.depth = 1;
  s.kappa_budget = 100.0;
  EncoderParams p;
  p.spec = s;
  p.weights.push_back(Matrix(2, 2, {0.2, 0.2, 0.1, 0.1}));
  p.biases.push_back(Matrix(2, 1, {0.1, 0.2}));
  p.weights.push_back(Matrix(1, 2, {3.0, -4.0}));
  CHECK(kappa(p) == 7.0);

  // All identity rows and zero bias: kappa is exactly 1.
  EncoderSpec si;
  si.dim_in = 2;
  si.dim_out = 2;
  si.width = 2;
  si.depth = 1;
  si.kappa_budget = 10.0;
  EncoderParams pi;
  pi.spec = si;
  pi.weights.push_back(Matrix::identity(2));
  pi.biases.push_back(Matrix(2, 1));
  pi.weights.push_back(Matrix::identity(2));
  CHECK(kappa(pi) == 1.0);
}

TEST_CASE("kappa projection rescales the last layer and is idempotent") {
  EncoderSpec s = small_spec();
  s.kappa_budget = 2.0;
  EncoderParams p = init_params(s, 42);
  // Inflate the last layer so the budget is exceeded.
  for (std::size_t i = 0; i < p.weights.back().size(); ++i)
    p.weights.back()[i] *= 50.0;
  REQUIRE(kappa(p) > s.kappa_budget);
  project_kappa(p);
  CHECK(kappa(p) == doctest::Approx(s.kappa_budget).epsilon(1e-12));
  EncoderParams q = p;
  project_kappa(q);  // second application must not move anything
  for (std::size_t l = 0; l < q.weights.size(); ++l)
    for (std::size_t i = 0; i < q.weights[l].size(); ++i)
      CHECK(q.weights[l][i] == p.weights[l][i]);
}

TEST_CASE("kappa certifies the Lipschitz constant on random pairs") {
  Rng rng(5);
  for (int net = 0; net < 5; ++net) {
    EncoderSpec s = small_spec();
    EncoderParams p = init_params(s, 100 + static_cast<std::uint64_t>(net));
    const double k = kappa(p);
    CHECK(k > 0.0);
    CHECK(std::isfinite(k));
    for (int t = 0; t < 200; ++t) {
      std::vector<double> x(3), y(3);
      for (auto* v : {&x, &y})
        for (double& e : *v) e = rng.uniform(-2.0, 2.0);
      auto fx = forward(p, x, false);
      auto fy = forward(p, y, false);
      const double lhs = euclidean_distance(fx, fy);
      const double rhs = k * euclidean_distance(x, y);
      CHECK(lhs <= rhs + 1e-12);
    }
  }
}

TEST_CASE("initialization is deterministic per seed") {
  EncoderSpec s = small_spec();
  EncoderParams a = init_params(s, 9);
  EncoderParams b = init_params(s, 9);
  EncoderParams c = init_params(s, 10);
  for (std::size_t l = 0; l < a.weights.size(); ++l)
    for (std::size_t i = 0; i < a.weights[l].size(); ++i)
      CHECK(a.weights[l][i] == b.weights[l][i]);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.weights[0].size(); ++i)
    any_diff = any_diff || a.weights[0][i] != c.weights[0][i];
  CHECK(any_diff);
  // Per-layer bound: |w| <= 1/sqrt(fan_in).
  for (std::size_t i = 0; i < a.weights[0].size(); ++i)
    CHECK(std::abs(a.weights[0][i]) <= 1.0 / std::sqrt(3.0));
}

TEST_CASE("norm shell projection") {
  EncoderSpec s = small_spec();
  s.b1 = 0.5;
  s.b2 = 2.0;
  EncoderParams p = init_params(s, 3);

  SUBCASE("outputs always land in the shell") {
    Rng rng(77);
    for (int t = 0; t < 500; ++t) {
      std::vector<double> x(3);
      for (double& e : x) e = rng.uniform(-3.0, 3.0);
      auto z = forward(p, x, true);
      const double n = norm2(z);
      CHECK(n >= s.b1 - 1e-12);
      CHECK(n <= s.b2 + 1e-12);
    }
  }

  SUBCASE("inside the shell the projection is the identity") {
    std::vector<double> v{0.6, 0.3, 0.0};  // norm ~0.67 in [0.5, 2]
    auto w = v;
    project_norm_shell(w, s.b1, s.b2);
    CHECK(w == v);
  }

  SUBCASE("the zero vector maps to the first basis vector") {
    std::vector<double> v{0.0, 0.0, 0.0};
    project_norm_shell(v, 1.0, 1.0);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == 0.0);
  }
}

TEST_CASE("a zeroed final layer projects to the first basis vector") {
  EncoderSpec s = small_spec();
  EncoderParams p = init_params(s, 8);
  p.weights.back().fill(0.0);
  auto z = forward(p, std::vector<double>{0.1, 0.2, 0.3}, true);
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 0.0);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "act_encoder_test";
  fs::create_directories(dir);
  const std::string path = (dir / "enc.ckpt").string();

  EncoderSpec s = small_spec();
  s.b1 = 0.5;
  s.b2 = 1.5;
  s.kappa_budget = 12.5;
  EncoderParams p = init_params(s, 1234);
  save_checkpoint(p, path);
  EncoderParams q = load_checkpoint(path);

  CHECK(q.spec.dim_in == s.dim_in);
  CHECK(q.spec.kappa_budget == s.kappa_budget);
  CHECK(q.spec.b1 == s.b1);
  for (std::size_t l = 0; l < p.weights.size(); ++l)
    for (std::size_t i = 0; i < p.weights[l].size(); ++i)
      CHECK(p.weights[l][i] == q.weights[l][i]);
  for (std::size_t l = 0; l < p.biases.size(); ++l)
    for (std::size_t i = 0; i < p.biases[l].size(); ++i)
      CHECK(p.biases[l][i] == q.biases[l][i]);

  // Same forward outputs after the round trip.
  std::vector<double> x{0.3, -0.8, 0.5};
  CHECK(forward(p, x, true) == forward(q, x, true));

  SUBCASE("bad magic is rejected") {
    const std::string bad = (dir / "bad.ckpt").string();
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    std::fputs("not a checkpoint\n", f);
    std::fclose(f);
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);
  }

  SUBCASE("truncated data is rejected") {
    auto bytes = fs::file_size(path);
    fs::resize_file(path, bytes - 9);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
}

TEST_CASE("tape forward agrees with plain forward bitwise") {
  EncoderSpec s = small_spec();
  EncoderParams p = init_params(s, 21);
  Rng rng(22);
  for (bool project : {false, true}) {
    Tape tape;
    std::vector<NodeId> ws, bs;
    for (const Matrix& w : p.weights) ws.push_back(tape.parameter(w));
    for (const Matrix& b : p.biases) bs.push_back(tape.parameter(b));
    std::vector<double> x(3);
    for (double& e : x) e = rng.uniform(-1.0, 1.0);
    NodeId xn = tape.input(Matrix::column(x));
    NodeId out = build_forward_graph(tape, s, ws, bs, xn, project);
    tape.forward();
    auto plain = forward(p, x, project);
    const Matrix& v = tape.value(out);
    REQUIRE(v.size() == plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(v[i] == plain[i]);
  }
}

TEST_CASE("columnwise tape forward agrees with plain forward bitwise") {
  EncoderSpec s = small_spec();
  EncoderParams p = init_params(s, 23);
  Rng rng(24);
  const std::size_t n = 5;
  for (bool project : {false, true}) {
    Tape tape;
    std::vector<NodeId> ws, bs;
    for (const Matrix& w : p.weights) ws.push_back(tape.parameter(w));
    for (const Matrix& b : p.biases) bs.push_back(tape.parameter(b));
    Matrix x(s.dim_in, n);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    NodeId xn = tape.input(x);
    NodeId out = build_forward_graph_columns(tape, s, ws, bs, xn, project);
    tape.forward();
    const Matrix& v = tape.value(out);
    REQUIRE(v.rows() == s.dim_out);
    REQUIRE(v.cols() == n);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> xa(s.dim_in);
      for (std::size_t i = 0; i < s.dim_in; ++i) xa[i] = x.at(i, j);
      auto plain = forward(p, xa, project);
      for (std::size_t i = 0; i < s.dim_out; ++i)
        CHECK(v.at(i, j) == plain[i]);
    }
  }
}

TEST_CASE("spec validation rejects bad shapes") {
  EncoderSpec s = small_spec();
  s.width = 1;  // below max(dim_in, dim_out)
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.depth = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.b1 = 2.0;
  s.b2 = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
