#include "act/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "act/act_core.hpp"
#include "act/errors.hpp"
#include "act/rng.hpp"

namespace act {

namespace {

// All m view representations of one sample, projection on.
std::vector<std::vector<double>> view_reps(const EncoderParams& f,
                                           std::span<const double> x,
                                           const AugmentationSet& augs) {
  std::vector<std::vector<double>> reps(augs.count());
  std::vector<double> view;
  for (std::size_t g = 0; g < augs.count(); ++g) {
    augs.apply(g, x, view);
    reps[g] = forward(f, view, true);
  }
  return reps;
}

double max_pair_distance(const std::vector<std::vector<double>>& reps) {
  double worst = 0.0;
  for (std::size_t g = 0; g < reps.size(); ++g)
    for (std::size_t b = g + 1; b < reps.size(); ++b)
      worst = std::max(worst, euclidean_distance(reps[g], reps[b]));
  return worst;
}

// Mean squared distance over all m^2 ordered view pairs (diagonal included).
double mean_pair_squared(const std::vector<std::vector<double>>& reps) {
  const std::size_t m = reps.size();
  double total = 0.0;
  for (std::size_t g = 0; g < m; ++g)
    for (std::size_t b = 0; b < m; ++b)
      total += squared_distance(reps[g], reps[b]);
  return total / static_cast<double>(m * m);
}

double phi_statistic(double sigma, double delta, double epsilon, double r,
                     double kappa_value, double b2,
                     std::span<const double> priors) {
  const double spread = (kappa_value * delta + 2.0 * epsilon) / (2.0 * b2);
  double inv_prior_sum = 0.0;
  for (double p : priors) inv_prior_sum += 1.0 / p;
  const double k_classes = static_cast<double>(priors.size());
  const double bracket = (1.0 - sigma + spread) * (1.0 - sigma + spread) +
                         (1.0 - sigma) +
                         k_classes * r * (3.0 - 2.0 * sigma + 2.0 * spread) +
                         r * r * inv_prior_sum;
  return 4.0 * b2 * b2 * bracket +
         b2 * std::sqrt(epsilon * epsilon + 4.0 * b2 * b2 * r);
}

}  // namespace

double estimate_R(const EncoderParams& f,
                  std::span<const std::vector<double>> samples,
                  const AugmentationSet& augs, double epsilon) {
  if (samples.empty()) throw DataError("view spread: empty sample set");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("view spread: epsilon must be positive");
  std::size_t over = 0;
  for (const auto& x : samples)
    if (max_pair_distance(view_reps(f, x, augs)) > epsilon) ++over;
  return static_cast<double>(over) / static_cast<double>(samples.size());
}

Matrix class_centers(const EncoderParams& f, const LabeledSet& data,
                     const AugmentationSet& augs) {
  data.validate();
  if (data.size() == 0) throw DataError("class centers: empty sample set");
  const auto k_classes = static_cast<std::size_t>(data.num_classes);
  const std::size_t ds = f.spec.dim_out;
  Matrix centers(k_classes, ds);
  std::vector<std::size_t> counts(k_classes, 0);
  const double inv_m = 1.0 / static_cast<double>(augs.count());

  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto reps = view_reps(f, data.points[i], augs);
    const auto k = static_cast<std::size_t>(data.labels[i]);
    for (std::size_t j = 0; j < ds; ++j) {
      double mean_j = 0.0;
      for (const auto& rep : reps) mean_j += rep[j];
      centers.at(k, j) += mean_j * inv_m;
    }
    ++counts[k];
  }
  for (std::size_t k = 0; k < k_classes; ++k) {
    if (counts[k] == 0)
      throw DataError("class centers: class " + std::to_string(k) +
                      " has no samples");
    const double inv = 1.0 / static_cast<double>(counts[k]);
    for (std::size_t j = 0; j < ds; ++j) centers.at(k, j) *= inv;
  }
  return centers;
}

double max_center_alignment(const Matrix& centers) {
  if (centers.rows() < 2)
    throw DataError("center alignment: needs at least two rows");
  double worst = 0.0;
  for (std::size_t i = 0; i < centers.rows(); ++i)
    for (std::size_t j = i + 1; j < centers.rows(); ++j) {
      double dot_ij = 0.0;
      for (std::size_t c = 0; c < centers.cols(); ++c)
        dot_ij += centers.at(i, c) * centers.at(j, c);
      worst = std::max(worst, std::abs(dot_ij));
    }
  return worst;
}

ThetaCertificate theta_certificate(double sigma_t, double delta_t,
                                   double epsilon, double r_t,
                                   const ProbeModel& probe,
                                   const Matrix& centers_t, double p_t_min,
                                   double kappa_value, double b1, double b2) {
  if (!(p_t_min > 0.0))
    throw DataError("certificate: smallest class prior must be positive");
  if (!(b2 > 0.0))
    throw std::invalid_argument("certificate: b2 must be positive");
  if (probe.w_hat.rows() != centers_t.rows() ||
      probe.w_hat.cols() != centers_t.cols())
    throw DataError("certificate: probe and center shapes differ");
  if (probe.w_hat.rows() == 0) throw DataError("certificate: empty probe");

  ThetaCertificate out;
  const double ratio = b1 / b2;
  out.gamma_min =
      (sigma_t - r_t / p_t_min) *
          (1.0 + ratio * ratio - kappa_value * delta_t / b2 -
           2.0 * epsilon / b2) -
      1.0;

  double min_row_sq = std::numeric_limits<double>::infinity();
  double max_shift = 0.0;
  for (std::size_t k = 0; k < probe.w_hat.rows(); ++k) {
    double row_sq = 0.0, shift_sq = 0.0;
    for (std::size_t j = 0; j < probe.w_hat.cols(); ++j) {
      const double w = probe.w_hat.at(k, j);
      row_sq += w * w;
      const double diff = w - centers_t.at(k, j);
      shift_sq += diff * diff;
    }
    min_row_sq = std::min(min_row_sq, row_sq);
    max_shift = std::max(max_shift, std::sqrt(shift_sq));
  }
  out.delta_mu_hat = 1.0 - min_row_sq / (b2 * b2);

  double root_arg = 2.0 - 2.0 * out.gamma_min;
  if (root_arg < 0.0) {
    root_arg = 0.0;
    out.sqrt_clamped = true;
  }
  out.theta = out.gamma_min - std::sqrt(root_arg) - out.delta_mu_hat / 2.0 -
              2.0 * max_shift / b2;
  return out;
}

std::vector<AlignmentBoundRecord> verify_alignment_bound(
    const EncoderParams& f, const LabeledSet& data,
    const AugmentationSet& augs, std::span<const double> epsilon_grid,
    double sigma, double delta, double kappa_value) {
  data.validate();
  if (data.size() == 0) throw DataError("alignment bound: empty sample set");
  for (double eps : epsilon_grid)
    if (!(eps > 0.0))
      throw std::invalid_argument("alignment bound: grid epsilon not positive");

  const std::size_t n = data.size();
  std::vector<double> spreads(n), pair_means(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto reps = view_reps(f, data.points[i], augs);
    spreads[i] = max_pair_distance(reps);
    pair_means[i] = mean_pair_squared(reps);
  }
  const double l_align = tree_sum(pair_means) / static_cast<double>(n);
  const double m = static_cast<double>(augs.count());
  const double m4 = m * m * m * m;
  const std::vector<double> priors = data.class_priors();
  const double b2 = f.spec.b2;

  std::vector<AlignmentBoundRecord> records;
  records.reserve(epsilon_grid.size());
  for (double eps : epsilon_grid) {
    AlignmentBoundRecord rec;
    rec.epsilon = eps;
    std::size_t over = 0;
    for (double s : spreads)
      if (s > eps) ++over;
    rec.r_value = static_cast<double>(over) / static_cast<double>(n);
    rec.l_align = l_align;
    rec.bound = m4 / (eps * eps) * l_align;
    rec.slack = rec.bound - rec.r_value * rec.r_value;
    rec.ok = rec.slack >= -1e-9;
    rec.phi = phi_statistic(sigma, delta, eps, rec.r_value, kappa_value, b2,
                            priors);
    records.push_back(rec);
  }
  return records;
}

double wasserstein1(std::span<const std::vector<double>> a,
                    std::span<const std::vector<double>> b) {
  const std::size_t n = a.size();
  if (n == 0) throw DataError("transport: empty point set");
  if (b.size() != n) throw DataError("transport: point sets differ in size");
  if (n > 512) throw DataError("transport: more than 512 points per side");

  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cost[i * n + j] = euclidean_distance(a[i], b[j]);

  // Shortest-augmenting-path assignment with row/column potentials. One-based
  // arrays; row 0 and column 0 are the staging slots.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double best = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < best) {
          best = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += best;
          v[j] -= best;
        } else {
          minv[j] -= best;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<double> chosen(n);
  for (std::size_t j = 1; j <= n; ++j)
    chosen[j - 1] = cost[(match[j] - 1) * n + (j - 1)];
  return tree_sum(chosen) / static_cast<double>(n);
}

double prior_gap(std::span<const int> source_labels,
                 std::span<const int> target_labels, int num_classes) {
  if (num_classes < 1)
    throw std::invalid_argument("prior gap: class count must be positive");
  const auto k_classes = static_cast<std::size_t>(num_classes);
  std::vector<double> ps(k_classes, 0.0), pt(k_classes, 0.0);
  auto tally = [&](std::span<const int> labels, std::vector<double>& p) {
    for (int y : labels) {
      if (y < 0 || y >= num_classes)
        throw DataError("prior gap: label out of range");
      p[static_cast<std::size_t>(y)] += 1.0;
    }
    if (!labels.empty())
      for (double& x : p) x /= static_cast<double>(labels.size());
  };
  tally(source_labels, ps);
  tally(target_labels, pt);
  double gap = 0.0;
  for (std::size_t k = 0; k < k_classes; ++k)
    gap = std::max(gap, std::abs(ps[k] - pt[k]));
  return gap;
}

double min_singular_value(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0)
    throw std::invalid_argument("singular values: empty matrix");
  const std::size_t n = m.cols();
  Matrix s = matmul(transpose(m), m);

  // Cyclic Jacobi sweeps; s stays symmetric, eigenvalues land on the diagonal.
  const double tol = 1e-15 * std::max(1.0, frobenius_norm(s));
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::abs(s.at(p, q));
    if (off <= tol) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = s.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double tau = (s.at(q, q) - s.at(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double w = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double srp = s.at(r, p), srq = s.at(r, q);
          s.at(r, p) = c * srp - w * srq;
          s.at(r, q) = w * srp + c * srq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double spr = s.at(p, r), sqr = s.at(q, r);
          s.at(p, r) = c * spr - w * sqr;
          s.at(q, r) = w * spr + c * sqr;
        }
      }
  }
  double smallest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) smallest = std::min(smallest, s.at(i, i));
  return std::sqrt(std::max(0.0, smallest));
}

DiagnosticsReport build_diagnostics_report(
    const EncoderParams& f, const LabeledSet& source, const LabeledSet& target,
    const AugmentationSet& augs, double epsilon,
    std::span<const double> epsilon_grid, double lambda, double trim_quantile,
    std::uint64_t seed) {
  source.validate();
  target.validate();
  if (source.num_classes != target.num_classes)
    throw DataError("diagnostics: source and target class counts differ");
  if (epsilon_grid.empty())
    throw std::invalid_argument("diagnostics: empty epsilon grid");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("diagnostics: epsilon must be positive");

  DiagnosticsReport rep;
  rep.epsilon = epsilon;
  rep.n_source = source.size();
  rep.n_target = target.size();
  rep.kappa_value = kappa(f);

  const QualityEstimate qs = estimate_quality(source, augs, trim_quantile);
  const QualityEstimate qt = estimate_quality(target, augs, trim_quantile);
  rep.sigma_s = qs.sigma;
  rep.delta_s = qs.delta;
  rep.sigma_t = qt.sigma;
  rep.delta_t = qt.delta;

  rep.r_s = estimate_R(f, source.points, augs, epsilon);
  rep.r_t = estimate_R(f, target.points, augs, epsilon);
  rep.centers_s = class_centers(f, source, augs);
  rep.centers_t = class_centers(f, target, augs);
  rep.max_center_alignment_t = max_center_alignment(rep.centers_t);

  Rng probe_rng(Rng::derive(seed, 0x11u));
  const ProbeModel probe = fit_linear_probe(f, target, augs, probe_rng);
  const std::vector<double> pt = target.class_priors();
  const double p_t_min = *std::min_element(pt.begin(), pt.end());
  const ThetaCertificate cert =
      theta_certificate(qt.sigma, qt.delta, epsilon, rep.r_t, probe,
                        rep.centers_t, p_t_min, rep.kappa_value, f.spec.b1,
                        f.spec.b2);
  rep.theta = cert.theta;
  rep.gamma_min = cert.gamma_min;
  rep.delta_mu_hat = cert.delta_mu_hat;
  rep.sqrt_clamped = cert.sqrt_clamped;

  rep.bound_records = verify_alignment_bound(
      f, source, augs, epsilon_grid, qs.sigma, qs.delta, rep.kappa_value);
  rep.alignment_bound_ok = true;
  for (const auto& r : rep.bound_records)
    if (!r.ok) rep.alignment_bound_ok = false;
  rep.l_align = rep.bound_records.front().l_align;

  Rng pair_rng(Rng::derive(seed, 0x9u));
  const PairBatch pairs = make_pair_batch(source.points, augs, pair_rng);
  const LossParts raw = loss_decomposition(f, pairs, lambda, false);
  rep.l_div = raw.divergence;
  rep.gap_fro_raw = raw.gap_fro;
  rep.min_singular_c_raw =
      min_singular_value(cross_correlation(f, pairs, false));
  try {
    rep.gap_fro_standardized =
        loss_decomposition(f, pairs, lambda, true).gap_fro;
  } catch (const NumericError&) {
    // A collapsed representation has zero-variance columns; the standardized
    // gap is undefined there and reported as NaN.
    rep.gap_fro_standardized = std::numeric_limits<double>::quiet_NaN();
  }

  // Class-conditional transport: subsample the bigger side to the smaller,
  // cap 512, with the seeded generator so reports reproduce exactly.
  Rng sub_rng(Rng::derive(seed, 0x15u));
  const auto k_classes = static_cast<std::size_t>(source.num_classes);
  rep.wasserstein_per_class.assign(k_classes, 0.0);
  rep.wasserstein_sizes.assign(k_classes, 0);
  for (std::size_t k = 0; k < k_classes; ++k) {
    std::vector<std::vector<double>> from, to;
    for (std::size_t i = 0; i < source.size(); ++i)
      if (static_cast<std::size_t>(source.labels[i]) == k)
        from.push_back(source.points[i]);
    for (std::size_t i = 0; i < target.size(); ++i)
      if (static_cast<std::size_t>(target.labels[i]) == k)
        to.push_back(target.points[i]);
    const std::size_t take =
        std::min({from.size(), to.size(), static_cast<std::size_t>(512)});
    rep.wasserstein_sizes[k] = take;
    if (take == 0) {
      rep.wasserstein_per_class[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    auto subsample = [&](std::vector<std::vector<double>>& pts) {
      std::vector<std::size_t> idx(pts.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      sub_rng.shuffle(idx);
      std::vector<std::vector<double>> out;
      out.reserve(take);
      for (std::size_t i = 0; i < take; ++i) out.push_back(pts[idx[i]]);
      pts = std::move(out);
    };
    subsample(from);
    subsample(to);
    rep.wasserstein_per_class[k] = wasserstein1(from, to);
  }

  rep.prior_gap_eta = prior_gap(source.labels, target.labels,
                                source.num_classes);
  return rep;
}

}  // namespace act
