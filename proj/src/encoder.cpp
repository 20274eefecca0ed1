#include "act/encoder.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act {

namespace {

constexpr char kMagic[] = "act-encoder-v1";
constexpr double kZeroNorm = 1e-300;

void append_f64(std::string& out, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("checkpoint: truncated layer data");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

double max_row_one_norm(const Matrix& a, const Matrix* bias) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += std::abs(a.at(i, j));
    if (bias) s += std::abs(bias->at(i, 0));
    if (s > best) best = s;
  }
  return best;
}

}  // namespace

void EncoderSpec::validate() const {
  if (dim_in == 0 || dim_out == 0) throw std::invalid_argument("encoder: zero dimension");
  if (depth < 1) throw std::invalid_argument("encoder: depth must be at least 1");
  if (width < dim_in || width < dim_out)
    throw std::invalid_argument("encoder: width below max(dim_in, dim_out)");
  if (!(b1 > 0.0) || b2 < b1)
    throw std::invalid_argument("encoder: need 0 < b1 <= b2");
  if (kappa_budget < 1.0)
    throw std::invalid_argument("encoder: kappa budget below 1");
}

EncoderParams init_params(const EncoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  EncoderParams p;
  p.spec = spec;
  Rng rng(seed);
  auto draw = [&](std::size_t rows, std::size_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-bound, bound);
    return m;
  };
  for (std::size_t l = 0; l < spec.depth; ++l) {
    const std::size_t fan_in = l == 0 ? spec.dim_in : spec.width;
    p.weights.push_back(draw(spec.width, fan_in));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix b(spec.width, 1);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
    p.biases.push_back(std::move(b));
  }
  p.weights.push_back(draw(spec.dim_out, spec.width));
  return p;
}

void project_norm_shell(std::vector<double>& v, double b1, double b2) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double nrm = std::sqrt(s);
  if (nrm < kZeroNorm) {
    for (double& x : v) x = 0.0;
    double r = 1.0;
    if (r < b1) r = b1;
    if (r > b2) r = b2;
    v[0] = r;
  } else if (nrm < b1) {
    const double f = b1 / nrm;
    for (double& x : v) x *= f;
  } else if (nrm > b2) {
    const double f = b2 / nrm;
    for (double& x : v) x *= f;
  }
}

std::vector<double> forward(const EncoderParams& params,
                            std::span<const double> x, bool project) {
  const EncoderSpec& s = params.spec;
  if (x.size() != s.dim_in)
    throw std::invalid_argument("encoder forward: input length mismatch");
  std::vector<double> h(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < s.depth; ++l) {
    const Matrix& a = params.weights[l];
    const Matrix& b = params.biases[l];
    next.assign(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) acc += a.at(i, j) * h[j];
      acc += b.at(i, 0);
      next[i] = acc > 0.0 ? acc : 0.0;
    }
    h.swap(next);
  }
  const Matrix& last = params.weights[s.depth];
  std::vector<double> out(last.rows(), 0.0);
  for (std::size_t i = 0; i < last.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < last.cols(); ++j) acc += last.at(i, j) * h[j];
    out[i] = acc;
  }
  if (project) project_norm_shell(out, s.b1, s.b2);
  return out;
}

double kappa(const EncoderParams& params) {
  double prod = max_row_one_norm(params.weights[params.spec.depth], nullptr);
  for (std::size_t l = 0; l < params.spec.depth; ++l) {
    double t = max_row_one_norm(params.weights[l], &params.biases[l]);
    if (t < 1.0) t = 1.0;
    prod *= t;
  }
  return prod;
}

void project_kappa(EncoderParams& params) {
  const double k = kappa(params);
  if (k <= params.spec.kappa_budget) return;
  const double f = params.spec.kappa_budget / k;
  Matrix& last = params.weights[params.spec.depth];
  for (std::size_t i = 0; i < last.size(); ++i) last[i] *= f;
}

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  std::string out;
  out += kMagic;
  out += '\n';
  std::ostringstream head;
  head << params.spec.dim_in << ' ' << params.spec.dim_out << ' '
       << params.spec.width << ' ' << params.spec.depth;
  out += head.str();
  char buf[64];
  for (double v : {params.spec.kappa_budget, params.spec.b1, params.spec.b2}) {
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    out += ' ';
    out.append(buf, r.ptr);
  }
  out += '\n';
  for (std::size_t l = 0; l <= params.spec.depth; ++l) {
    for (std::size_t i = 0; i < params.weights[l].size(); ++i)
      append_f64(out, params.weights[l][i]);
    if (l < params.spec.depth)
      for (std::size_t i = 0; i < params.biases[l].size(); ++i)
        append_f64(out, params.biases[l][i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("checkpoint: write failed for " + path);
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open " + path);
  std::string magic;
  std::getline(f, magic);
  if (magic != kMagic)
    throw DataError("checkpoint: bad magic in " + path);
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  EncoderSpec spec;
  if (!(hs >> spec.dim_in >> spec.dim_out >> spec.width >> spec.depth >>
        spec.kappa_budget >> spec.b1 >> spec.b2))
    throw DataError("checkpoint: malformed header in " + path);
  spec.validate();
  EncoderParams p;
  p.spec = spec;
  for (std::size_t l = 0; l <= spec.depth; ++l) {
    const std::size_t rows = l == spec.depth ? spec.dim_out : spec.width;
    const std::size_t cols = l == 0 ? spec.dim_in : spec.width;
    Matrix a(rows, cols);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = read_f64(f);
    p.weights.push_back(std::move(a));
    if (l < spec.depth) {
      Matrix b(spec.width, 1);
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = read_f64(f);
      p.biases.push_back(std::move(b));
    }
  }
  char extra;
  if (f.read(&extra, 1))
    throw DataError("checkpoint: trailing bytes in " + path);
  return p;
}

NodeId build_forward_graph(Tape& tape, const EncoderSpec& spec,
                           std::span<const NodeId> weights,
                           std::span<const NodeId> biases, NodeId x,
                           bool project) {
  NodeId h = x;
  for (std::size_t l = 0; l < spec.depth; ++l)
    h = tape.relu(tape.add(tape.matmul(weights[l], h), biases[l]));
  h = tape.matmul(weights[spec.depth], h);
  if (project) h = tape.project_norm(h, spec.b1, spec.b2);
  return h;
}

NodeId build_forward_graph_columns(Tape& tape, const EncoderSpec& spec,
                                   std::span<const NodeId> weights,
                                   std::span<const NodeId> biases, NodeId x,
                                   bool project) {
  NodeId h = x;
  for (std::size_t l = 0; l < spec.depth; ++l)
    h = tape.relu(tape.add_broadcast(tape.matmul(weights[l], h), biases[l]));
  h = tape.matmul(weights[spec.depth], h);
  if (project) h = tape.project_norm_columns(h, spec.b1, spec.b2);
  return h;
}

}  // namespace act
