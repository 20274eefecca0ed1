#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "act/data.hpp"
#include "act/rng.hpp"

namespace act {

enum class AugKind : std::uint8_t { kNoise, kMask, kSmoothScale };

// One deterministic transform. Any randomness (noise direction, mask choice)
// is fixed at construction, so applying a transform twice to the same input
// gives identical outputs.
class Augmentation {
public:
  // x + scale * u for a fixed unit direction u drawn from seed.
  static Augmentation noise(std::size_t dim, double scale, std::uint64_t seed);
  // Zeroes an explicit coordinate subset.
  static Augmentation mask(std::size_t dim, std::vector<std::size_t> coords);
  // Zeroes round(fraction * dim) coordinates chosen by seed.
  static Augmentation mask_from_seed(std::size_t dim, double fraction,
                                     std::uint64_t seed);
  // x -> (1 + gamma) x, gamma >= 0.
  static Augmentation smooth_scale(std::size_t dim, double gamma);

  void apply(std::span<const double> x, std::vector<double>& out) const;
  std::vector<double> apply(std::span<const double> x) const;

  AugKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  // Declared Lipschitz constant: 1 for noise and mask, 1 + gamma for scaling.
  double lipschitz() const;

private:
  AugKind kind_ = AugKind::kNoise;
  std::size_t dim_ = 0;
  double gamma_ = 0.0;
  std::vector<double> offset_;      // noise: scale * direction
  std::vector<std::uint8_t> keep_;  // mask: 1 keeps the coordinate
};

// Parsed form of one transform line in a config.
struct AugSpec {
  AugKind kind;
  double param = 0.0;
  std::uint64_t seed = 0;
};

class AugmentationSet {
public:
  AugmentationSet(std::size_t dim, std::vector<Augmentation> transforms);
  static AugmentationSet from_specs(std::size_t dim,
                                    std::span<const AugSpec> specs);

  std::size_t count() const { return transforms_.size(); }
  std::size_t dim() const { return dim_; }
  const Augmentation& transform(std::size_t i) const { return transforms_[i]; }

  void apply(std::size_t view, std::span<const double> x,
             std::vector<double>& out) const;
  std::vector<double> apply(std::size_t view, std::span<const double> x) const;

  // Two view indices drawn independently and uniformly.
  std::pair<std::size_t, std::size_t> sample_view_pair(Rng& rng) const;

  // Worst declared constant over the set.
  double lipschitz_constant() const;

private:
  std::size_t dim_;
  std::vector<Augmentation> transforms_;
};

// The training unit: two augmented views per source sample.
struct PairBatch {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::size_t size() const { return first.size(); }
};

// One independent view pair per sample, drawn from the seeded stream.
PairBatch make_pair_batch(std::span<const std::vector<double>> samples,
                          const AugmentationSet& augs, Rng& rng);

// Concentration / diameter estimate of the augmented classes. For every
// same-class sample pair, the relevant distance is the closest approach of
// their view sets, min over all view combinations of |A_g(x1) - A_b(x2)|;
// delta(k) is the max of that over pairs in class k. trim_quantile > 0 drops
// that fraction of the worst-spread samples per class first, and sigma
// reports the smallest retained mass fraction over classes (1 when nothing
// is trimmed).
struct QualityEstimate {
  double sigma = 1.0;
  double delta = 0.0;  // max over classes
  std::vector<double> per_class_delta;
};

QualityEstimate estimate_quality(const LabeledSet& data,
                                 const AugmentationSet& augs,
                                 double trim_quantile);

}  // namespace act
