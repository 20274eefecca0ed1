#include "act/downstream.hpp"

#include <algorithm>
#include <string>

#include "act/errors.hpp"

namespace act {

ProbeModel fit_linear_probe(const EncoderParams& f, const LabeledSet& target,
                            const AugmentationSet& augs, Rng& rng,
                            bool project) {
  target.validate();
  if (target.size() == 0) throw DataError("probe fit: empty target set");
  const std::size_t k_classes = static_cast<std::size_t>(target.num_classes);
  const std::size_t ds = f.spec.dim_out;

  ProbeModel probe;
  probe.w_hat = Matrix(k_classes, ds);
  probe.class_counts.assign(k_classes, 0);

  std::vector<double> v1, v2;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto [g, b] = augs.sample_view_pair(rng);
    augs.apply(g, target.points[i], v1);
    augs.apply(b, target.points[i], v2);
    const std::vector<double> z1 = forward(f, v1, project);
    const std::vector<double> z2 = forward(f, v2, project);
    const auto k = static_cast<std::size_t>(target.labels[i]);
    for (std::size_t j = 0; j < ds; ++j)
      probe.w_hat.at(k, j) += z1[j] + z2[j];
    ++probe.class_counts[k];
  }

  for (std::size_t k = 0; k < k_classes; ++k) {
    if (probe.class_counts[k] == 0)
      throw DataError("probe fit: class " + std::to_string(k) +
                      " has no samples");
    const double inv = 1.0 / (2.0 * static_cast<double>(probe.class_counts[k]));
    for (std::size_t j = 0; j < ds; ++j) probe.w_hat.at(k, j) *= inv;
  }
  probe.w_hat.check_finite("probe fit");
  return probe;
}

int predict_probe(const ProbeModel& probe, const EncoderParams& f,
                  std::span<const double> z, bool project) {
  if (probe.num_classes() == 0) throw DataError("probe predict: empty probe");
  const std::vector<double> rep = forward(f, z, project);
  if (rep.size() != probe.w_hat.cols())
    throw DataError("probe predict: representation width mismatch");
  int best = 0;
  double best_score = 0.0;
  for (std::size_t k = 0; k < probe.num_classes(); ++k) {
    double score = 0.0;
    for (std::size_t j = 0; j < rep.size(); ++j)
      score += probe.w_hat.at(k, j) * rep[j];
    if (k == 0 || score > best_score) {
      best = static_cast<int>(k);
      best_score = score;
    }
  }
  return best;
}

int knn_predict(std::span<const std::vector<double>> train_reps,
                std::span<const int> train_labels,
                std::span<const double> query, std::size_t k) {
  const std::size_t n = train_reps.size();
  if (n == 0) throw DataError("knn: empty training set");
  if (train_labels.size() != n)
    throw DataError("knn: label count does not match the training set");
  if (k == 0 || k > n)
    throw DataError("knn: k must be in [1, training size]");

  // Sort by distance, then by index so equal distances are deterministic.
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t i = 0; i < n; ++i)
    order[i] = {squared_distance(train_reps[i], query), i};
  std::sort(order.begin(), order.end());

  int max_label = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (train_labels[order[i].second] < 0)
      throw DataError("knn: negative class label");
    max_label = std::max(max_label, train_labels[order[i].second]);
  }
  std::vector<std::size_t> votes(static_cast<std::size_t>(max_label) + 1, 0);
  for (std::size_t i = 0; i < k; ++i)
    ++votes[static_cast<std::size_t>(train_labels[order[i].second])];
  const std::size_t top = *std::max_element(votes.begin(), votes.end());

  // The first neighbor whose class holds the top vote count is the nearest
  // member of any tied class, which settles vote ties.
  for (std::size_t i = 0; i < k; ++i) {
    const int label = train_labels[order[i].second];
    if (votes[static_cast<std::size_t>(label)] == top) return label;
  }
  throw InvariantError("knn: vote scan failed to pick a class");
}

double error_rate(std::span<const int> predictions,
                  std::span<const int> truth) {
  if (predictions.size() != truth.size())
    throw DataError("error rate: length mismatch");
  if (predictions.empty()) throw DataError("error rate: empty input");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] != truth[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

}  // namespace act
