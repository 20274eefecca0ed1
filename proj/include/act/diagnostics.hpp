#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "act/augmentation.hpp"
#include "act/data.hpp"
#include "act/downstream.hpp"
#include "act/encoder.hpp"
#include "act/matrix.hpp"

namespace act {

// Fraction of samples whose augmented views spread farther than epsilon in
// representation space: max over view pairs of |f(A_g(x)) - f(A_b(x))|_2.
// The view family is finite, so the per-sample sup is exact.
double estimate_R(const EncoderParams& f,
                  std::span<const std::vector<double>> samples,
                  const AugmentationSet& augs, double epsilon);

// Row k = mean over class-k samples of the mean representation over all
// views (exact expectation over the uniform view measure).
Matrix class_centers(const EncoderParams& f, const LabeledSet& data,
                     const AugmentationSet& augs);

// max over unordered row pairs of |row_i . row_j|; needs at least two rows.
double max_center_alignment(const Matrix& centers);

struct ThetaCertificate {
  double theta = 0.0;
  double gamma_min = 0.0;
  double delta_mu_hat = 0.0;
  bool sqrt_clamped = false;  // 2 - 2 gamma_min fell below zero
};

// Downstream-error certificate scalars:
//   gamma_min = (sigma_t - r_t / p_t_min)
//               * (1 + (b1/b2)^2 - kappa delta_t / b2 - 2 epsilon / b2) - 1
//   delta_mu_hat = 1 - min_k |probe row k|^2 / b2^2
//   theta = gamma_min - sqrt(2 - 2 gamma_min) - delta_mu_hat / 2
//           - 2 max_k |probe row k - center row k| / b2
// A negative square-root argument is clamped to zero and flagged.
ThetaCertificate theta_certificate(double sigma_t, double delta_t,
                                   double epsilon, double r_t,
                                   const ProbeModel& probe,
                                   const Matrix& centers_t, double p_t_min,
                                   double kappa_value, double b1, double b2);

struct AlignmentBoundRecord {
  double epsilon = 0.0;
  double r_value = 0.0;  // measured view-spread failure rate
  double l_align = 0.0;  // exact view-pair expectation of |f(v1)-f(v2)|^2
  double bound = 0.0;    // (m^4 / epsilon^2) * l_align
  double slack = 0.0;    // bound - r_value^2
  bool ok = false;       // slack >= -1e-9
  double phi = 0.0;      // reported concentration statistic
};

// Checks r^2 <= (m^4 / eps^2) l_align at every grid point and evaluates the
// phi statistic, which additionally needs the class priors, the quality
// pair (sigma, delta), and the Lipschitz certificate of f.
std::vector<AlignmentBoundRecord> verify_alignment_bound(
    const EncoderParams& f, const LabeledSet& data,
    const AugmentationSet& augs, std::span<const double> epsilon_grid,
    double sigma, double delta, double kappa_value);

// Exact empirical 1-Wasserstein distance between equal-size point sets:
// optimal assignment minimizing the mean Euclidean cost, O(n^3), n <= 512.
double wasserstein1(std::span<const std::vector<double>> a,
                    std::span<const std::vector<double>> b);

// max_k |empirical source prior(k) - empirical target prior(k)|.
double prior_gap(std::span<const int> source_labels,
                 std::span<const int> target_labels, int num_classes);

// Smallest singular value via cyclic Jacobi on m^T m; collapse indicator
// for the trained cross-correlation.
double min_singular_value(const Matrix& m);

// Everything the diagnose command reports, assembled from a frozen encoder
// and the generated datasets.
struct DiagnosticsReport {
  double epsilon = 0.0;
  double r_s = 0.0;
  double r_t = 0.0;
  Matrix centers_s;
  Matrix centers_t;
  double max_center_alignment_t = 0.0;
  double theta = 0.0;
  double gamma_min = 0.0;
  double delta_mu_hat = 0.0;
  bool sqrt_clamped = false;
  double l_align = 0.0;  // exact view-pair expectation on source
  double l_div = 0.0;    // lambda * |C_raw - I|_F^2 on seeded source pairs
  double gap_fro_raw = 0.0;
  double gap_fro_standardized = 0.0;
  double min_singular_c_raw = 0.0;
  double sigma_s = 0.0, delta_s = 0.0;
  double sigma_t = 0.0, delta_t = 0.0;
  double kappa_value = 0.0;
  std::vector<AlignmentBoundRecord> bound_records;
  bool alignment_bound_ok = false;  // all grid records ok
  std::vector<double> wasserstein_per_class;
  std::vector<std::size_t> wasserstein_sizes;  // matched size per class
  double prior_gap_eta = 0.0;
  std::size_t n_source = 0;
  std::size_t n_target = 0;
};

// Builds the full report. Class-conditional transport distances subsample
// the larger side to the smaller (cap 512) with the seeded generator; the
// probe and the pair draws reuse the same seed so reports are reproducible.
DiagnosticsReport build_diagnostics_report(
    const EncoderParams& f, const LabeledSet& source, const LabeledSet& target,
    const AugmentationSet& augs, double epsilon,
    std::span<const double> epsilon_grid, double lambda, double trim_quantile,
    std::uint64_t seed);

}  // namespace act
