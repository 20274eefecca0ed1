#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "act/act_core.hpp"
#include "act/augmentation.hpp"
#include "act/encoder.hpp"
#include "act/synthgen.hpp"

namespace act {

// Flat `key = value` experiment file, one pair per line. Blank lines and
// lines starting with '#' are skipped. Unknown or duplicate keys, malformed
// values, and missing required keys raise ConfigError with the line number
// when one applies.
//
// Required keys: seed, d, k, n_source, n_target, n_test, width, depth,
// d_star, lambda, epochs, aug_0. Transform lines are aug_0, aug_1, ...
// (contiguous from zero), each valued "kind param seed" with kind one of
// noise | mask | smooth_scale. Everything else carries the defaults below.
struct ExperimentConfig {
  SyntheticConfig data;
  EncoderSpec encoder;
  TrainConfig train;
  std::vector<AugSpec> augmentations;
  std::size_t knn_k = 5;
  double diag_epsilon = 0.5;
  double diag_grid_start = 0.005;
  double diag_grid_factor = 2.2;
  std::size_t diag_grid_points = 10;
  double trim_quantile = 0.0;
  std::string out_dir = ".";

  // Geometric grid start * factor^i, diag_grid_points values.
  std::vector<double> epsilon_grid() const;
};

ExperimentConfig load_config(const std::string& path);

// Command bodies. Each validates everything it needs before writing any
// output file; the exit-code mapping lives in run_cli. Dataset files are
// read from and written to cfg.out_dir under fixed names: source.bin,
// target.bin, test.bin, encoder.ckpt, trace.csv, evaluation.csv,
// diagnostics.txt, alignment_bound.csv.
void cmd_generate(const ExperimentConfig& cfg);
void cmd_pretrain(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint);
void cmd_diagnose(const ExperimentConfig& cfg, const std::string& checkpoint);

// `act generate|pretrain|evaluate|diagnose --config <path>
// [--checkpoint <path>] [--out <dir>]`. --out overrides out_dir from the
// config. Returns the process exit code: 0 ok, 2 bad usage or config,
// 3 numeric failure, 4 data/protocol error, 5 invariant violation.
int run_cli(int argc, const char* const* argv);

}  // namespace act
