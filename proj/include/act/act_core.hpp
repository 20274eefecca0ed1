#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "act/augmentation.hpp"
#include "act/encoder.hpp"
#include "act/matrix.hpp"
#include "act/tape.hpp"

namespace act {

// Adversary matrix constrained to the Frobenius ball whose radius the
// current cross-correlation gap sets.
struct GramGap {
  Matrix g;
  double radius = 0.0;

  GramGap() = default;
  GramGap(Matrix g_in, double radius_in);  // checks |g|_F <= radius + 1e-12
};

// Cross-correlation of the paired representations. Raw mode averages
// f(x1) f(x2)^T over pairs; standardized mode first centers and scales each
// representation dimension across the batch (the quantity the training loop
// drives toward the identity).
Matrix cross_correlation(const EncoderParams& f, const PairBatch& batch,
                         bool standardize);

// Exact inner maximizer of the loss over the feasible ball: G = C - I, with
// radius |C - I|_F.
GramGap inner_solution(const EncoderParams& f, const PairBatch& batch,
                       bool standardize);

// (1/n) sum_i [ |f(x1_i) - f(x2_i)|^2 + lambda <f(x1_i) f(x2_i)^T - I, G>_F ].
double empirical_loss(const EncoderParams& f, const GramGap& g,
                      const PairBatch& batch, double lambda);

struct LossParts {
  double align = 0.0;       // mean squared view distance
  double divergence = 0.0;  // lambda * gap_fro^2
  double gap_fro = 0.0;     // |C - I|_F
};

// Loss value at the inner maximizer, split into its two terms. The raw mode
// satisfies align + divergence == empirical_loss at the raw inner solution.
LossParts loss_decomposition(const EncoderParams& f, const PairBatch& batch,
                             double lambda, bool standardize);

struct TrainConfig {
  double lambda = 5.0;
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  std::size_t d_star = 8;  // must match the encoder's output dimension
  bool standardize = true;
  enum class InnerUpdate { kPerBatch, kFullData };
  InnerUpdate inner_update = InnerUpdate::kPerBatch;
  enum class Optimizer { kSgd, kAdam };
  Optimizer optimizer = Optimizer::kSgd;
  double weight_decay = 1e-6;
  bool kappa_projection = false;  // hard-rescale to the budget after steps
  std::uint64_t seed = 1;

  void validate() const;
};

struct TraceRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // align + divergence over the full data
  double align = 0.0;
  double divergence = 0.0;
  double gap_fro = 0.0;
  double kappa = 0.0;
};

using EpochObserver =
    std::function<void(const TraceRecord&, const EncoderParams&)>;

struct TrainResult {
  EncoderParams params;
  std::vector<TraceRecord> trace;  // one record per epoch
};

// The per-batch loss graph the trainer steps on, reusable by rebinding the
// input leaves and the adversary constant. The batch lives in the columns of
// two dim_in x batch input leaves, so the graph size is per layer, not per
// pair. Public so gradient checks can drive the exact graph training uses.
struct BatchLossGraph {
  Tape tape;
  EncoderSpec spec;
  std::vector<NodeId> weights, biases;
  NodeId x_first = -1, x_second = -1;  // dim_in x batch inputs
  NodeId z_first = -1, z_second = -1;  // dim_out x batch representations
  NodeId c_gap = -1;    // batch cross-correlation minus I (gradient flows
                        // through C; standardized mode standardizes first)
  NodeId g_const = -1;  // the detached adversary
  NodeId loss = -1;
  bool standardize = false;
  double lambda = 0.0;

  void bind_pair(std::size_t slot, std::span<const double> a,
                 std::span<const double> b);
  void set_adversary(const Matrix& g);
  EncoderParams snapshot() const;
};

BatchLossGraph build_batch_loss(const EncoderParams& init, std::size_t batch,
                                double lambda, bool standardize);

// Minibatch minimax training on a fixed set of augmented pairs: each step
// solves the inner problem exactly, holds the maximizer constant, and takes
// one descent step on the outer objective. The per-epoch trace is computed
// over the full pair set. Aborts with TrainAbort if the loss leaves the
// finite range.
TrainResult train_on_pairs(const PairBatch& pairs, const TrainConfig& cfg,
                           EncoderParams init,
                           const EpochObserver& observer = {});

// Draws one view pair per sample (seeded by cfg.seed) and trains on them.
TrainResult train(std::span<const std::vector<double>> samples,
                  const AugmentationSet& augs, const TrainConfig& cfg,
                  EncoderParams init, const EpochObserver& observer = {});

}  // namespace act
