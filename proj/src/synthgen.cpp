#include "act/synthgen.hpp"

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

constexpr char kMagic[] = "act-dataset-v1";

// Stream tags keep every random purpose on its own engine, so adding draws
// to one stage never shifts another.
constexpr std::uint64_t kStreamSourceLabels = 0x21;
constexpr std::uint64_t kStreamSourceNoise = 0x22;
constexpr std::uint64_t kStreamShiftDir = 0x23;
constexpr std::uint64_t kStreamTargetLabels = 0x24;
constexpr std::uint64_t kStreamTargetNoise = 0x25;
constexpr std::uint64_t kStreamTestLabels = 0x26;
constexpr std::uint64_t kStreamTestNoise = 0x27;

int sample_label(Rng& rng, const std::vector<double>& priors) {
  const double u = rng.unit();
  double acc = 0.0;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    acc += priors[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(priors.size()) - 1;
}

// Uniform draw from the radius-r ball, centered at `center` plus `offset`.
std::vector<double> ball_sample(Rng& rng, const std::vector<double>& center,
                                const std::vector<double>* offset, double r) {
  const std::size_t d = center.size();
  const std::vector<double> dir = rng.unit_sphere(d);
  const double scale = r * std::pow(rng.unit(), 1.0 / static_cast<double>(d));
  std::vector<double> x(d);
  for (std::size_t j = 0; j < d; ++j) {
    x[j] = center[j] + scale * dir[j];
    if (offset != nullptr) x[j] += (*offset)[j];
  }
  return x;
}

LabeledSet draw_set(const SyntheticConfig& cfg, std::size_t n,
                    const std::vector<double>& priors,
                    const std::vector<std::vector<double>>* offsets,
                    std::uint64_t label_stream, std::uint64_t noise_stream) {
  Rng label_rng(Rng::derive(cfg.seed, label_stream));
  Rng noise_rng(Rng::derive(cfg.seed, noise_stream));
  LabeledSet out;
  out.num_classes = static_cast<int>(cfg.k);
  out.points.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = sample_label(label_rng, priors);
    const auto k = static_cast<std::size_t>(y);
    const std::vector<double>* off =
        offsets != nullptr ? &(*offsets)[k] : nullptr;
    out.points.push_back(
        ball_sample(noise_rng, cfg.center(k), off, cfg.class_radius));
    out.labels.push_back(y);
  }
  return out;
}

void append_f64(std::string& out, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

void append_i64(std::string& out, std::int64_t v) {
  const auto u = static_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("dataset: truncated data in " + path);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return u;
}

void append_double_text(std::string& out, double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

double parse_double(const std::string& field, std::size_t line_no) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc{} || r.ptr != last)
    throw DataError("csv: malformed number '" + field + "' at line " +
                    std::to_string(line_no));
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

void SyntheticConfig::validate() const {
  if (k < 2) throw std::invalid_argument("synthetic config: k must be >= 2");
  if (k > d)
    throw std::invalid_argument(
        "synthetic config: orthogonal-axis centers need k <= d");
  if (n_source == 0 || n_target == 0 || n_test == 0)
    throw std::invalid_argument("synthetic config: sample counts must be > 0");
  if (!(class_radius >= 0.0) || !std::isfinite(class_radius))
    throw std::invalid_argument(
        "synthetic config: class_radius must be finite and >= 0");
  if (!std::isfinite(center_separation) ||
      !(center_separation > 2.0 * class_radius))
    throw std::invalid_argument(
        "synthetic config: center_separation must exceed 2 * class_radius");
  if (!(shift_rho >= 0.0) || !std::isfinite(shift_rho))
    throw std::invalid_argument(
        "synthetic config: shift_rho must be finite and >= 0");
  if (!(shift_eta >= 0.0) || !std::isfinite(shift_eta))
    throw std::invalid_argument(
        "synthetic config: shift_eta must be finite and >= 0");
  // Priors before renormalization are 1/k +- shift_eta; the minimum entry
  // must stay nonnegative for the perturbed priors to remain a simplex.
  if (1.0 / static_cast<double>(k) - shift_eta < 0.0)
    throw std::invalid_argument(
        "synthetic config: shift_eta pushes a class prior below zero");
}

std::vector<double> SyntheticConfig::source_priors() const {
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

std::vector<double> SyntheticConfig::target_priors() const {
  std::vector<double> p(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p[i] = 1.0 / static_cast<double>(k) +
           (i % 2 == 0 ? shift_eta : -shift_eta);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> SyntheticConfig::center(std::size_t klass) const {
  if (klass >= k)
    throw std::invalid_argument("synthetic config: class index out of range");
  std::vector<double> c(d, 0.0);
  c[klass] = center_separation;
  return c;
}

std::vector<std::vector<double>> class_shift_directions(
    const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(Rng::derive(cfg.seed, kStreamShiftDir));
  std::vector<std::vector<double>> dirs;
  dirs.reserve(cfg.k);
  for (std::size_t i = 0; i < cfg.k; ++i)
    dirs.push_back(rng.unit_sphere(cfg.d));
  return dirs;
}

LabeledSet generate_source(const SyntheticConfig& cfg) {
  cfg.validate();
  return draw_set(cfg, cfg.n_source, cfg.source_priors(), nullptr,
                  kStreamSourceLabels, kStreamSourceNoise);
}

TargetData generate_target(const SyntheticConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<double>> offsets = class_shift_directions(cfg);
  for (auto& u : offsets)
    for (double& v : u) v *= cfg.shift_rho;
  const std::vector<double> priors = cfg.target_priors();
  TargetData out;
  out.few_shot = draw_set(cfg, cfg.n_target, priors, &offsets,
                          kStreamTargetLabels, kStreamTargetNoise);
  out.test = draw_set(cfg, cfg.n_test, priors, &offsets, kStreamTestLabels,
                      kStreamTestNoise);
  return out;
}

void save_dataset(const LabeledSet& data, const std::string& path,
                  bool with_labels) {
  if (data.size() == 0) throw DataError("dataset: refusing to save empty set");
  if (with_labels) data.validate();
  const std::size_t d = data.dim();
  for (const auto& p : data.points)
    if (p.size() != d)
      throw DataError("dataset: ragged point dimensions");
  std::string out;
  out += kMagic;
  out += '\n';
  std::ostringstream head;
  head << data.size() << ' ' << d << ' ' << data.num_classes << ' '
       << (with_labels ? 1 : 0);
  out += head.str();
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.points[i]) append_f64(out, v);
    if (with_labels) append_i64(out, data.labels[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("dataset: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("dataset: write failed for " + path);
}

LabeledSet load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("dataset: cannot open " + path);
  std::string magic;
  std::getline(f, magic);
  if (magic != kMagic) throw DataError("dataset: bad magic in " + path);
  std::string header;
  std::getline(f, header);
  std::istringstream hs(header);
  std::size_t n = 0;
  std::size_t d = 0;
  int num_classes = 0;
  int has_labels = 0;
  if (!(hs >> n >> d >> num_classes >> has_labels) ||
      (has_labels != 0 && has_labels != 1))
    throw DataError("dataset: malformed header in " + path);
  if (n == 0 || d == 0)
    throw DataError("dataset: empty dataset in " + path);
  LabeledSet out;
  out.num_classes = num_classes;
  out.points.reserve(n);
  if (has_labels == 1) out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p(d);
    for (std::size_t j = 0; j < d; ++j)
      p[j] = std::bit_cast<double>(read_u64(f, path));
    out.points.push_back(std::move(p));
    if (has_labels == 1) {
      const auto y =
          static_cast<std::int64_t>(read_u64(f, path));
      if (y < 0 || y >= num_classes)
        throw DataError("dataset: label out of range in " + path);
      out.labels.push_back(static_cast<int>(y));
    }
  }
  char extra = 0;
  if (f.read(&extra, 1))
    throw DataError("dataset: unexpected trailing bytes in " + path);
  if (has_labels == 1) out.validate();
  return out;
}

void export_csv(const LabeledSet& data, const std::string& path,
                bool with_labels) {
  if (data.size() == 0) throw DataError("csv: refusing to export empty set");
  if (with_labels) data.validate();
  const std::size_t d = data.dim();
  std::string out;
  for (std::size_t j = 0; j < d; ++j) {
    if (j > 0) out += ',';
    out += 'x';
    out += std::to_string(j);
  }
  if (with_labels) out += ",label";
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j > 0) out += ',';
      append_double_text(out, data.points[i][j]);
    }
    if (with_labels) {
      out += ',';
      out += std::to_string(data.labels[i]);
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("csv: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("csv: write failed for " + path);
}

LabeledSet import_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("csv: empty file " + path);
  const std::vector<std::string> head = split_csv_line(line);
  if (head.empty()) throw DataError("csv: empty header in " + path);
  const bool has_labels = head.back() == "label";
  const std::size_t d = has_labels ? head.size() - 1 : head.size();
  if (d == 0) throw DataError("csv: no coordinate columns in " + path);
  for (std::size_t j = 0; j < d; ++j)
    if (head[j] != "x" + std::to_string(j))
      throw DataError("csv: unexpected column '" + head[j] + "' in " + path);
  LabeledSet out;
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != head.size())
      throw DataError("csv: wrong field count at line " +
                      std::to_string(line_no));
    std::vector<double> p(d);
    for (std::size_t j = 0; j < d; ++j) p[j] = parse_double(fields[j], line_no);
    out.points.push_back(std::move(p));
    if (has_labels) {
      const double y = parse_double(fields[d], line_no);
      const int label = static_cast<int>(y);
      if (static_cast<double>(label) != y || label < 0)
        throw DataError("csv: bad label at line " + std::to_string(line_no));
      out.labels.push_back(label);
      if (label > max_label) max_label = label;
    }
  }
  if (out.points.empty()) throw DataError("csv: no data rows in " + path);
  out.num_classes = max_label + 1;
  if (has_labels) out.validate();
  return out;
}

}  // namespace act
