#include "act/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "act/errors.hpp"
#include "act/matrix.hpp"

namespace act {

void LabeledSet::validate() const {
  if (points.size() != labels.size())
    throw DataError("labeled set: point and label counts differ");
  if (num_classes < 1) throw DataError("labeled set: no classes");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim())
      throw DataError("labeled set: ragged point dimensions");
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DataError("labeled set: label out of range at index " +
                      std::to_string(i));
  }
}

std::vector<std::size_t> LabeledSet::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

std::vector<double> LabeledSet::class_priors() const {
  auto counts = class_counts();
  std::vector<double> p(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    p[k] = static_cast<double>(counts[k]) / static_cast<double>(size());
  return p;
}

Augmentation Augmentation::noise(std::size_t dim, double scale,
                                 std::uint64_t seed) {
  if (scale < 0.0) throw std::invalid_argument("noise: negative scale");
  Augmentation a;
  a.kind_ = AugKind::kNoise;
  a.dim_ = dim;
  Rng rng(seed);
  a.offset_ = rng.unit_sphere(dim);
  for (double& v : a.offset_) v *= scale;
  return a;
}

Augmentation Augmentation::mask(std::size_t dim,
                                std::vector<std::size_t> coords) {
  Augmentation a;
  a.kind_ = AugKind::kMask;
  a.dim_ = dim;
  a.keep_.assign(dim, 1);
  for (std::size_t c : coords) {
    if (c >= dim) throw std::invalid_argument("mask: coordinate out of range");
    a.keep_[c] = 0;
  }
  return a;
}

Augmentation Augmentation::mask_from_seed(std::size_t dim, double fraction,
                                          std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("mask: fraction outside [0, 1)");
  const std::size_t n_mask =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(dim)));
  std::vector<std::size_t> index(dim);
  for (std::size_t i = 0; i < dim; ++i) index[i] = i;
  Rng rng(seed);
  rng.shuffle(index);
  index.resize(n_mask);
  return mask(dim, std::move(index));
}

Augmentation Augmentation::smooth_scale(std::size_t dim, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("smooth_scale: negative gamma");
  Augmentation a;
  a.kind_ = AugKind::kSmoothScale;
  a.dim_ = dim;
  a.gamma_ = gamma;
  return a;
}

void Augmentation::apply(std::span<const double> x,
                         std::vector<double>& out) const {
  if (x.size() != dim_)
    throw std::invalid_argument("augmentation: input dimension mismatch");
  out.assign(x.begin(), x.end());
  switch (kind_) {
    case AugKind::kNoise:
      for (std::size_t i = 0; i < dim_; ++i) out[i] += offset_[i];
      break;
    case AugKind::kMask:
      for (std::size_t i = 0; i < dim_; ++i)
        if (!keep_[i]) out[i] = 0.0;
      break;
    case AugKind::kSmoothScale:
      for (double& v : out) v *= 1.0 + gamma_;
      break;
  }
}

std::vector<double> Augmentation::apply(std::span<const double> x) const {
  std::vector<double> out;
  apply(x, out);
  return out;
}

double Augmentation::lipschitz() const {
  switch (kind_) {
    case AugKind::kNoise:
    case AugKind::kMask:
      return 1.0;
    case AugKind::kSmoothScale:
      return 1.0 + gamma_;
  }
  return 1.0;
}

AugmentationSet::AugmentationSet(std::size_t dim,
                                 std::vector<Augmentation> transforms)
    : dim_(dim), transforms_(std::move(transforms)) {
  if (transforms_.empty())
    throw std::invalid_argument("augmentation set: no transforms");
  for (const Augmentation& t : transforms_)
    if (t.dim() != dim_)
      throw std::invalid_argument("augmentation set: dimension mismatch");
}

AugmentationSet AugmentationSet::from_specs(std::size_t dim,
                                            std::span<const AugSpec> specs) {
  std::vector<Augmentation> ts;
  for (const AugSpec& s : specs) {
    switch (s.kind) {
      case AugKind::kNoise:
        ts.push_back(Augmentation::noise(dim, s.param, s.seed));
        break;
      case AugKind::kMask:
        ts.push_back(Augmentation::mask_from_seed(dim, s.param, s.seed));
        break;
      case AugKind::kSmoothScale:
        ts.push_back(Augmentation::smooth_scale(dim, s.param));
        break;
    }
  }
  return AugmentationSet(dim, std::move(ts));
}

void AugmentationSet::apply(std::size_t view, std::span<const double> x,
                            std::vector<double>& out) const {
  if (view >= transforms_.size())
    throw std::invalid_argument("augmentation set: view index out of range");
  transforms_[view].apply(x, out);
}

std::vector<double> AugmentationSet::apply(std::size_t view,
                                           std::span<const double> x) const {
  std::vector<double> out;
  apply(view, x, out);
  return out;
}

std::pair<std::size_t, std::size_t> AugmentationSet::sample_view_pair(
    Rng& rng) const {
  const std::size_t a = static_cast<std::size_t>(rng.below(count()));
  const std::size_t b = static_cast<std::size_t>(rng.below(count()));
  return {a, b};
}

double AugmentationSet::lipschitz_constant() const {
  double best = 0.0;
  for (const Augmentation& t : transforms_)
    best = std::max(best, t.lipschitz());
  return best;
}

PairBatch make_pair_batch(std::span<const std::vector<double>> samples,
                          const AugmentationSet& augs, Rng& rng) {
  PairBatch batch;
  batch.first.reserve(samples.size());
  batch.second.reserve(samples.size());
  for (const auto& x : samples) {
    auto [a, b] = augs.sample_view_pair(rng);
    batch.first.push_back(augs.apply(a, x));
    batch.second.push_back(augs.apply(b, x));
  }
  return batch;
}

QualityEstimate estimate_quality(const LabeledSet& data,
                                 const AugmentationSet& augs,
                                 double trim_quantile) {
  data.validate();
  if (trim_quantile < 0.0 || trim_quantile >= 1.0)
    throw std::invalid_argument("estimate_quality: quantile outside [0, 1)");
  const std::size_t m = augs.count();
  const std::size_t k_classes = static_cast<std::size_t>(data.num_classes);

  // Precompute every view of every sample.
  std::vector<std::vector<std::vector<double>>> views(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    views[i].resize(m);
    for (std::size_t g = 0; g < m; ++g)
      augs.apply(g, data.points[i], views[i][g]);
  }

  auto closest_view_distance = [&](std::size_t i, std::size_t j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < m; ++g)
      for (std::size_t b = 0; b < m; ++b) {
        const double d2 = squared_distance(views[i][g], views[j][b]);
        if (d2 < best) best = d2;
      }
    return std::sqrt(best);
  };

  QualityEstimate q;
  q.per_class_delta.assign(k_classes, 0.0);
  q.sigma = 1.0;
  for (std::size_t k = 0; k < k_classes; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.labels[i] == static_cast<int>(k)) members.push_back(i);
    if (members.empty())
      throw DataError("estimate_quality: class " + std::to_string(k) +
                      " is empty");
    if (members.size() < 2)
      throw DataError("estimate_quality: class " + std::to_string(k) +
                      " has fewer than two samples");

    std::vector<std::size_t> retained = members;
    double retained_fraction = 1.0;
    if (trim_quantile > 0.0) {
      // Per-sample spread score: worst closest approach to a classmate.
      std::vector<double> score(members.size(), 0.0);
      for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b) {
          const double d = closest_view_distance(members[a], members[b]);
          if (d > score[a]) score[a] = d;
          if (d > score[b]) score[b] = d;
        }
      const std::size_t drop = static_cast<std::size_t>(
          std::floor(trim_quantile * static_cast<double>(members.size())));
      const std::size_t keep = members.size() - drop;
      if (keep < 2)
        throw DataError("estimate_quality: trimming leaves class " +
                        std::to_string(k) + " with fewer than two samples");
      std::vector<std::size_t> order(members.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t x, std::size_t y) {
                         return score[x] < score[y];
                       });
      retained.clear();
      for (std::size_t i = 0; i < keep; ++i)
        retained.push_back(members[order[i]]);
      retained_fraction =
          static_cast<double>(keep) / static_cast<double>(members.size());
    }

    double delta_k = 0.0;
    for (std::size_t a = 0; a < retained.size(); ++a)
      for (std::size_t b = a + 1; b < retained.size(); ++b) {
        const double d = closest_view_distance(retained[a], retained[b]);
        if (d > delta_k) delta_k = d;
      }
    q.per_class_delta[k] = delta_k;
    if (delta_k > q.delta) q.delta = delta_k;
    if (retained_fraction < q.sigma) q.sigma = retained_fraction;
  }
  return q;
}

}  // namespace act
