#include "act/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "act/diagnostics.hpp"
#include "act/downstream.hpp"
#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r'))
    --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& v, const std::string& key, int line) {
  double out = 0.0;
  const char* last = v.data() + v.size();
  const auto r = std::from_chars(v.data(), last, out);
  if (r.ec != std::errc{} || r.ptr != last)
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects a number, got '" + v + "'",
                      line);
  return out;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key,
                        int line) {
  std::uint64_t out = 0;
  const char* last = v.data() + v.size();
  const auto r = std::from_chars(v.data(), last, out);
  if (r.ec != std::errc{} || r.ptr != last)
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects a nonnegative integer, got '" + v + "'",
                      line);
  return out;
}

std::size_t parse_size(const std::string& v, const std::string& key,
                       int line) {
  return static_cast<std::size_t>(parse_u64(v, key, line));
}

bool parse_bool(const std::string& v, const std::string& key, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                        "' expects true or false, got '" + v + "'",
                    line);
}

// Raw key -> (value, line). Keys are consumed as they are interpreted;
// whatever remains at the end is unknown.
struct RawConfig {
  std::map<std::string, std::pair<std::string, int>> kv;

  std::optional<std::pair<std::string, int>> take(const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto out = it->second;
    kv.erase(it);
    return out;
  }

  std::pair<std::string, int> require(const std::string& key) {
    auto v = take(key);
    if (!v)
      throw ConfigError("missing required key '" + key + "'");
    return *v;
  }
};

RawConfig read_raw_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  RawConfig raw;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(
          "line " + std::to_string(line_no) + ": expected key = value",
          line_no);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key",
                        line_no);
    const auto [it, inserted] = raw.kv.emplace(key, std::pair{value, line_no});
    if (!inserted)
      throw ConfigError("line " + std::to_string(line_no) +
                            ": duplicate key '" + key + "'",
                        line_no);
  }
  return raw;
}

AugSpec parse_aug(const std::string& v, const std::string& key, int line) {
  std::istringstream in(v);
  std::string kind;
  std::string param;
  std::string seed;
  std::string extra;
  if (!(in >> kind >> param >> seed) || (in >> extra))
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "' expects 'kind param seed'",
                      line);
  AugSpec spec;
  if (kind == "noise")
    spec.kind = AugKind::kNoise;
  else if (kind == "mask")
    spec.kind = AugKind::kMask;
  else if (kind == "smooth_scale")
    spec.kind = AugKind::kSmoothScale;
  else
    throw ConfigError("line " + std::to_string(line) + ": unknown transform '" +
                          kind + "' (use noise | mask | smooth_scale)",
                      line);
  spec.param = parse_double(param, key, line);
  spec.seed = parse_u64(seed, key, line);
  return spec;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw DataError("write failed for " + path);
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

std::string joined(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir);
}

// Conservative sampling-noise scale for the transport distance between two
// matched m-point samples of a radius-r ball in dimension d.
double wasserstein_noise_floor(double radius, std::size_t m, std::size_t d) {
  if (m == 0) return std::nan("");
  const double md = static_cast<double>(m);
  return 2.0 * radius * std::sqrt(std::log(md + 1.0)) *
         std::pow(md, -1.0 / static_cast<double>(d));
}

}  // namespace

std::vector<double> ExperimentConfig::epsilon_grid() const {
  std::vector<double> grid(diag_grid_points);
  double v = diag_grid_start;
  for (std::size_t i = 0; i < diag_grid_points; ++i) {
    grid[i] = v;
    v *= diag_grid_factor;
  }
  return grid;
}

ExperimentConfig load_config(const std::string& path) {
  RawConfig raw = read_raw_config(path);
  ExperimentConfig cfg;

  const auto seed = raw.require("seed");
  const std::uint64_t seed_v = parse_u64(seed.first, "seed", seed.second);
  cfg.data.seed = seed_v;
  cfg.train.seed = seed_v;

  const auto take_size = [&raw](const std::string& key) {
    const auto v = raw.require(key);
    return parse_size(v.first, key, v.second);
  };
  cfg.data.d = take_size("d");
  cfg.data.k = take_size("k");
  cfg.data.n_source = take_size("n_source");
  cfg.data.n_target = take_size("n_target");
  cfg.data.n_test = take_size("n_test");
  cfg.encoder.width = take_size("width");
  cfg.encoder.depth = take_size("depth");
  const std::size_t d_star = take_size("d_star");
  cfg.encoder.dim_in = cfg.data.d;
  cfg.encoder.dim_out = d_star;
  cfg.train.d_star = d_star;

  const auto lambda = raw.require("lambda");
  cfg.train.lambda = parse_double(lambda.first, "lambda", lambda.second);
  cfg.train.epochs = take_size("epochs");

  const auto opt_double = [&raw](const std::string& key, double& slot) {
    if (const auto v = raw.take(key))
      slot = parse_double(v->first, key, v->second);
  };
  const auto opt_size = [&raw](const std::string& key, std::size_t& slot) {
    if (const auto v = raw.take(key))
      slot = parse_size(v->first, key, v->second);
  };
  const auto opt_bool = [&raw](const std::string& key, bool& slot) {
    if (const auto v = raw.take(key))
      slot = parse_bool(v->first, key, v->second);
  };

  opt_double("class_radius", cfg.data.class_radius);
  opt_double("center_separation", cfg.data.center_separation);
  opt_double("shift_rho", cfg.data.shift_rho);
  opt_double("shift_eta", cfg.data.shift_eta);
  opt_double("kappa_budget", cfg.encoder.kappa_budget);
  opt_double("b1", cfg.encoder.b1);
  opt_double("b2", cfg.encoder.b2);
  opt_double("learning_rate", cfg.train.learning_rate);
  opt_size("batch_size", cfg.train.batch_size);
  opt_bool("standardize", cfg.train.standardize);
  opt_bool("kappa_projection", cfg.train.kappa_projection);
  opt_double("weight_decay", cfg.train.weight_decay);

  if (const auto v = raw.take("inner_update")) {
    if (v->first == "per_batch")
      cfg.train.inner_update = TrainConfig::InnerUpdate::kPerBatch;
    else if (v->first == "full_data")
      cfg.train.inner_update = TrainConfig::InnerUpdate::kFullData;
    else
      throw ConfigError("line " + std::to_string(v->second) +
                            ": inner_update must be per_batch or full_data",
                        v->second);
  }
  if (const auto v = raw.take("optimizer")) {
    if (v->first == "sgd")
      cfg.train.optimizer = TrainConfig::Optimizer::kSgd;
    else if (v->first == "adam")
      cfg.train.optimizer = TrainConfig::Optimizer::kAdam;
    else
      throw ConfigError("line " + std::to_string(v->second) +
                            ": optimizer must be sgd or adam",
                        v->second);
  }

  opt_size("knn_k", cfg.knn_k);
  opt_double("diag_epsilon", cfg.diag_epsilon);
  opt_double("diag_grid_start", cfg.diag_grid_start);
  opt_double("diag_grid_factor", cfg.diag_grid_factor);
  opt_size("diag_grid_points", cfg.diag_grid_points);
  opt_double("trim_quantile", cfg.trim_quantile);
  if (const auto v = raw.take("out_dir")) cfg.out_dir = v->first;

  for (std::size_t i = 0;; ++i) {
    const auto v = raw.take("aug_" + std::to_string(i));
    if (!v) break;
    cfg.augmentations.push_back(
        parse_aug(v->first, "aug_" + std::to_string(i), v->second));
  }
  if (cfg.augmentations.empty())
    throw ConfigError("missing required key 'aug_0'");

  if (!raw.kv.empty()) {
    const auto& [key, entry] = *raw.kv.begin();
    throw ConfigError(
        "line " + std::to_string(entry.second) + ": unknown key '" + key + "'",
        entry.second);
  }

  if (cfg.knn_k == 0) throw ConfigError("knn_k must be >= 1");
  if (!(cfg.diag_epsilon > 0.0))
    throw ConfigError("diag_epsilon must be > 0");
  if (!(cfg.diag_grid_start > 0.0) || !(cfg.diag_grid_factor > 0.0) ||
      cfg.diag_grid_points == 0)
    throw ConfigError("diag grid needs a positive start, factor, and count");
  if (!(cfg.trim_quantile >= 0.0) || cfg.trim_quantile >= 1.0)
    throw ConfigError("trim_quantile must lie in [0, 1)");
  return cfg;
}

void cmd_generate(const ExperimentConfig& cfg) {
  cfg.data.validate();
  const LabeledSet source = generate_source(cfg.data);
  const TargetData target = generate_target(cfg.data);
  ensure_out_dir(cfg.out_dir);
  const std::string source_path = joined(cfg.out_dir, "source.bin");
  const std::string target_path = joined(cfg.out_dir, "target.bin");
  const std::string test_path = joined(cfg.out_dir, "test.bin");
  save_dataset(source, source_path);
  save_dataset(target.few_shot, target_path);
  save_dataset(target.test, test_path);
  std::printf("%s\n%s\n%s\n", source_path.c_str(), target_path.c_str(),
              test_path.c_str());
}

void cmd_pretrain(const ExperimentConfig& cfg) {
  cfg.encoder.validate();
  cfg.train.validate();
  const LabeledSet source = load_dataset(joined(cfg.out_dir, "source.bin"));
  if (source.dim() != cfg.encoder.dim_in)
    throw DataError("pretrain: dataset dimension disagrees with the config");
  const AugmentationSet augs =
      AugmentationSet::from_specs(cfg.data.d, cfg.augmentations);
  const EncoderParams init = init_params(cfg.encoder, cfg.train.seed);
  const TrainResult result = train(source.points, augs, cfg.train, init);

  ensure_out_dir(cfg.out_dir);
  const std::string ckpt_path = joined(cfg.out_dir, "encoder.ckpt");
  const std::string trace_path = joined(cfg.out_dir, "trace.csv");
  save_checkpoint(result.params, ckpt_path);
  std::string csv = "epoch,loss,l_align,l_div,gap_fro,kappa\n";
  for (const TraceRecord& r : result.trace) {
    csv += std::to_string(r.epoch);
    csv += ',';
    append_number(csv, r.loss);
    csv += ',';
    append_number(csv, r.align);
    csv += ',';
    append_number(csv, r.divergence);
    csv += ',';
    append_number(csv, r.gap_fro);
    csv += ',';
    append_number(csv, r.kappa);
    csv += '\n';
  }
  write_file(trace_path, csv);
  std::printf("%s\n%s\n", ckpt_path.c_str(), trace_path.c_str());
}

void cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const std::string ckpt_path =
      checkpoint.empty() ? joined(cfg.out_dir, "encoder.ckpt") : checkpoint;
  const EncoderParams f = load_checkpoint(ckpt_path);
  const LabeledSet few_shot = load_dataset(joined(cfg.out_dir, "target.bin"));
  const LabeledSet test = load_dataset(joined(cfg.out_dir, "test.bin"));
  if (few_shot.dim() != f.spec.dim_in || test.dim() != f.spec.dim_in)
    throw DataError("evaluate: dataset dimension disagrees with the encoder");
  if (cfg.knn_k > few_shot.size())
    throw DataError("evaluate: knn_k exceeds the labeled target count");
  const AugmentationSet augs =
      AugmentationSet::from_specs(cfg.data.d, cfg.augmentations);

  Rng probe_rng(Rng::derive(cfg.train.seed, 0x11));
  const ProbeModel probe = fit_linear_probe(f, few_shot, augs, probe_rng);

  std::vector<std::vector<double>> train_reps(few_shot.size());
  for (std::size_t i = 0; i < few_shot.size(); ++i)
    train_reps[i] = forward(f, few_shot.points[i], true);

  std::vector<int> probe_pred(test.size());
  std::vector<int> knn_pred(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    probe_pred[i] = predict_probe(probe, f, test.points[i]);
    const std::vector<double> query = forward(f, test.points[i], true);
    knn_pred[i] = knn_predict(train_reps, few_shot.labels, query, cfg.knn_k);
  }
  const double probe_error = error_rate(probe_pred, test.labels);
  const double knn_error = error_rate(knn_pred, test.labels);

  ensure_out_dir(cfg.out_dir);
  std::string csv = "metric,value\n";
  csv += "probe_error,";
  append_number(csv, probe_error);
  csv += "\nprobe_accuracy,";
  append_number(csv, 1.0 - probe_error);
  csv += "\nknn_error,";
  append_number(csv, knn_error);
  csv += "\nknn_accuracy,";
  append_number(csv, 1.0 - knn_error);
  csv += "\nknn_k," + std::to_string(cfg.knn_k);
  csv += "\ntest_count," + std::to_string(test.size());
  const std::vector<std::size_t> counts = few_shot.class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k)
    csv += "\nlabeled_count_class_" + std::to_string(k) + ',' +
           std::to_string(counts[k]);
  csv += '\n';
  const std::string eval_path = joined(cfg.out_dir, "evaluation.csv");
  write_file(eval_path, csv);
  std::printf("%s\n", eval_path.c_str());
}

void cmd_diagnose(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const std::string ckpt_path =
      checkpoint.empty() ? joined(cfg.out_dir, "encoder.ckpt") : checkpoint;
  const EncoderParams f = load_checkpoint(ckpt_path);
  const LabeledSet source = load_dataset(joined(cfg.out_dir, "source.bin"));
  const LabeledSet target = load_dataset(joined(cfg.out_dir, "target.bin"));
  const AugmentationSet augs =
      AugmentationSet::from_specs(cfg.data.d, cfg.augmentations);
  const std::vector<double> grid = cfg.epsilon_grid();
  const DiagnosticsReport report = build_diagnostics_report(
      f, source, target, augs, cfg.diag_epsilon, grid, cfg.train.lambda,
      cfg.trim_quantile, cfg.train.seed);

  std::string txt;
  const auto put = [&txt](const std::string& key, double v) {
    txt += key;
    txt += ": ";
    append_number(txt, v);
    txt += '\n';
  };
  put("epsilon", report.epsilon);
  put("r_s", report.r_s);
  put("r_t", report.r_t);
  put("sigma_s", report.sigma_s);
  put("delta_s", report.delta_s);
  put("sigma_t", report.sigma_t);
  put("delta_t", report.delta_t);
  put("kappa", report.kappa_value);
  put("theta", report.theta);
  put("gamma_min", report.gamma_min);
  put("delta_mu_hat", report.delta_mu_hat);
  txt += std::string("sqrt_clamped: ") +
         (report.sqrt_clamped ? "true" : "false") + '\n';
  put("max_center_alignment_t", report.max_center_alignment_t);
  put("l_align", report.l_align);
  put("l_div", report.l_div);
  put("gap_fro_raw", report.gap_fro_raw);
  put("gap_fro_standardized", report.gap_fro_standardized);
  put("min_singular_c_raw", report.min_singular_c_raw);
  txt += std::string("alignment_bound_ok: ") +
         (report.alignment_bound_ok ? "true" : "false") + '\n';
  put("prior_gap", report.prior_gap_eta);
  txt += "n_source: " + std::to_string(report.n_source) + '\n';
  txt += "n_target: " + std::to_string(report.n_target) + '\n';
  for (std::size_t k = 0; k < report.wasserstein_per_class.size(); ++k) {
    put("wasserstein_class_" + std::to_string(k),
        report.wasserstein_per_class[k]);
    txt += "wasserstein_matched_size_" + std::to_string(k) + ": " +
           std::to_string(report.wasserstein_sizes[k]) + '\n';
    put("wasserstein_noise_floor_" + std::to_string(k),
        wasserstein_noise_floor(cfg.data.class_radius,
                                report.wasserstein_sizes[k], cfg.data.d));
  }

  std::string csv = "epsilon,r_value,l_align,bound,slack,ok,phi\n";
  for (const AlignmentBoundRecord& r : report.bound_records) {
    append_number(csv, r.epsilon);
    csv += ',';
    append_number(csv, r.r_value);
    csv += ',';
    append_number(csv, r.l_align);
    csv += ',';
    append_number(csv, r.bound);
    csv += ',';
    append_number(csv, r.slack);
    csv += ',';
    csv += r.ok ? "true" : "false";
    csv += ',';
    append_number(csv, r.phi);
    csv += '\n';
  }

  ensure_out_dir(cfg.out_dir);
  const std::string txt_path = joined(cfg.out_dir, "diagnostics.txt");
  const std::string csv_path = joined(cfg.out_dir, "alignment_bound.csv");
  write_file(txt_path, txt);
  write_file(csv_path, csv);
  std::printf("%s\n%s\n", txt_path.c_str(), csv_path.c_str());
  if (!report.alignment_bound_ok)
    throw InvariantError(
        "diagnose: the concentration bound failed on the epsilon grid");
}

namespace {

constexpr char kUsage[] =
    "usage: act generate|pretrain|evaluate|diagnose --config <path> "
    "[--checkpoint <path>] [--out <dir>]\n";

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    if (argc < 2) throw ConfigError("missing command");
    const std::string command = argv[1];
    if (command != "generate" && command != "pretrain" &&
        command != "evaluate" && command != "diagnose")
      throw ConfigError("unknown command '" + command + "'");
    std::string config_path;
    std::string checkpoint;
    std::string out_override;
    for (int i = 2; i < argc; ++i) {
      const std::string flag = argv[i];
      if (i + 1 >= argc)
        throw ConfigError("flag " + flag + " expects a value");
      const std::string value = argv[++i];
      if (flag == "--config")
        config_path = value;
      else if (flag == "--checkpoint")
        checkpoint = value;
      else if (flag == "--out")
        out_override = value;
      else
        throw ConfigError("unknown flag '" + flag + "'");
    }
    if (config_path.empty()) throw ConfigError("missing --config");

    ExperimentConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;

    if (command == "generate")
      cmd_generate(cfg);
    else if (command == "pretrain")
      cmd_pretrain(cfg);
    else if (command == "evaluate")
      cmd_evaluate(cfg, checkpoint);
    else
      cmd_diagnose(cfg, checkpoint);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n%s", e.what(), kUsage);
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 4;
  } catch (const InvariantError& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return 5;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}

}  // namespace act
