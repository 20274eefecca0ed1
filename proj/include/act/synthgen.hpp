#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "act/data.hpp"

namespace act {

// Two-domain synthetic benchmark. Source: K classes in R^d, centers on
// mutually orthogonal axes scaled by center_separation, samples uniform in a
// class_radius ball around the center, uniform priors. Target: each class
// conditional is the source conditional translated by a fixed random unit
// direction times shift_rho, and the priors are perturbed by +-shift_eta
// (alternating over classes) and renormalized.
struct SyntheticConfig {
  std::size_t d = 20;
  std::size_t k = 4;
  std::size_t n_source = 2000;
  std::size_t n_target = 40;
  std::size_t n_test = 400;
  double class_radius = 0.25;
  double center_separation = 1.0;
  double shift_rho = 0.0;
  double shift_eta = 0.0;
  std::uint64_t seed = 1;

  // Throws std::invalid_argument unless 2 <= k <= d, all counts positive,
  // center_separation > 2 * class_radius (classes geometrically disjoint),
  // class_radius / shift_rho / shift_eta finite and nonnegative, and the
  // eta-perturbed priors stay a valid simplex.
  void validate() const;

  std::vector<double> source_priors() const;
  std::vector<double> target_priors() const;

  // Center of class `klass` before any domain shift.
  std::vector<double> center(std::size_t klass) const;
};

// Per-class unit translation directions for the target domain; a pure
// function of cfg.seed, so generate_target applies exactly these.
std::vector<std::vector<double>> class_shift_directions(
    const SyntheticConfig& cfg);

LabeledSet generate_source(const SyntheticConfig& cfg);

struct TargetData {
  LabeledSet few_shot;  // n_target labeled samples for adaptation
  LabeledSet test;      // n_test samples drawn from a disjoint stream
};

TargetData generate_target(const SyntheticConfig& cfg);

// Binary dataset file: magic line, text header "n d K has_labels", then per
// sample d little-endian float64 coordinates followed (when has_labels) by
// one little-endian int64 label. Unlabeled files load with an empty label
// vector and num_classes taken from the header.
void save_dataset(const LabeledSet& data, const std::string& path,
                  bool with_labels = true);
LabeledSet load_dataset(const std::string& path);

// CSV round-trip: header row "x0,...,x{d-1}[,label]", shortest-round-trip
// number formatting. num_classes is not stored; import infers it as
// max(label) + 1 (0 when unlabeled).
void export_csv(const LabeledSet& data, const std::string& path,
                bool with_labels = true);
LabeledSet import_csv(const std::string& path);

}  // namespace act
