#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "act/augmentation.hpp"
#include "act/data.hpp"
#include "act/encoder.hpp"
#include "act/matrix.hpp"
#include "act/rng.hpp"

namespace act {

// Per-class template classifier: row k of w_hat is the mean representation
// of class-k augmented views.
struct ProbeModel {
  Matrix w_hat;                           // K x d_star
  std::vector<std::size_t> class_counts;  // samples per class

  std::size_t num_classes() const { return class_counts.size(); }
};

// Row k = (1 / 2 n_k) sum over class-k samples of f(z1) + f(z2), one view
// pair drawn per sample from the rng stream in sample order. Every class
// needs at least one sample. project toggles the output-shell projection
// (on for the standard protocol).
ProbeModel fit_linear_probe(const EncoderParams& f, const LabeledSet& target,
                            const AugmentationSet& augs, Rng& rng,
                            bool project = true);

// argmax_k <w_hat_k, f(z)>; ties pick the smallest class id.
int predict_probe(const ProbeModel& probe, const EncoderParams& f,
                  std::span<const double> z, bool project = true);

// Majority vote among the k nearest training representations. A vote tie
// goes to the tied class with the closest member; equal distances prefer
// the smaller training index.
int knn_predict(std::span<const std::vector<double>> train_reps,
                std::span<const int> train_labels,
                std::span<const double> query, std::size_t k);

// Fraction of positions where the two label lists disagree.
double error_rate(std::span<const int> predictions, std::span<const int> truth);

}  // namespace act
