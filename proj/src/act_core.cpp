#include "act/act_core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "act/errors.hpp"
#include "act/rng.hpp"
#include "act/tape.hpp"

namespace act {

namespace {

constexpr double kFeasibleSlack = 1e-12;
constexpr double kMinStd = 1e-12;

std::vector<std::vector<double>> project_all(const EncoderParams& f,
                                             const std::vector<std::vector<double>>& xs) {
  std::vector<std::vector<double>> zs;
  zs.reserve(xs.size());
  for (const auto& x : xs) zs.push_back(forward(f, x, true));
  return zs;
}

// Column standardization matching the tape op bit for bit.
void standardize_in_place(std::vector<std::vector<double>>& z) {
  const std::size_t rows = z.size();
  const std::size_t cols = z[0].size();
  std::vector<double> col(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) col[i] = z[i][j];
    const double mean = tree_sum(col) / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const double c = z[i][j] - mean;
      col[i] = c * c;
    }
    const double var = tree_sum(col) / static_cast<double>(rows - 1);
    const double sd = std::sqrt(var);
    if (sd < kMinStd)
      throw NumericError("standardize: column " + std::to_string(j) +
                         " has zero variance");
    const double inv = 1.0 / sd;
    for (std::size_t i = 0; i < rows; ++i) z[i][j] = (z[i][j] - mean) * inv;
  }
}

Matrix cross_correlation_of(const std::vector<std::vector<double>>& z1,
                            const std::vector<std::vector<double>>& z2) {
  const std::size_t rows = z1.size();
  const std::size_t d = z1[0].size();
  const double inv = 1.0 / static_cast<double>(rows);
  Matrix c(d, d);
  std::vector<double> prod(rows);
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = 0; q < d; ++q) {
      for (std::size_t i = 0; i < rows; ++i) prod[i] = z1[i][p] * z2[i][q];
      c.at(p, q) = tree_sum(prod) * inv;
    }
  return c;
}

Matrix reps_cross_correlation(std::vector<std::vector<double>> z1,
                              std::vector<std::vector<double>> z2,
                              bool standardize) {
  if (standardize) {
    if (z1.size() < 2)
      throw std::invalid_argument(
          "cross_correlation: standardized mode needs at least two pairs");
    standardize_in_place(z1);
    standardize_in_place(z2);
  }
  return cross_correlation_of(z1, z2);
}

double alignment_term(const std::vector<std::vector<double>>& z1,
                      const std::vector<std::vector<double>>& z2) {
  std::vector<double> terms(z1.size());
  for (std::size_t i = 0; i < z1.size(); ++i)
    terms[i] = squared_distance(z1[i], z2[i]);
  return tree_sum(terms) / static_cast<double>(z1.size());
}

// Coupled weight decay; Adam keeps per-parameter moment state.
struct Optimizer {
  const TrainConfig& cfg;
  std::vector<Matrix> m, v;
  std::size_t step_count = 0;

  explicit Optimizer(const TrainConfig& c) : cfg(c) {}

  void step(Tape& tape, std::span<const NodeId> params) {
    ++step_count;
    if (cfg.optimizer == TrainConfig::Optimizer::kAdam && m.empty()) {
      for (NodeId p : params) {
        const Matrix& val = tape.value(p);
        m.emplace_back(val.rows(), val.cols());
        v.emplace_back(val.rows(), val.cols());
      }
    }
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Matrix& val = tape.value_mut(params[pi]);
      const Matrix& grad = tape.gradient(params[pi]);
      if (cfg.optimizer == TrainConfig::Optimizer::kSgd) {
        for (std::size_t e = 0; e < val.size(); ++e)
          val[e] -= cfg.learning_rate *
                    (grad[e] + cfg.weight_decay * val[e]);
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count));
        for (std::size_t e = 0; e < val.size(); ++e) {
          const double ge = grad[e] + cfg.weight_decay * val[e];
          m[pi][e] = b1 * m[pi][e] + (1.0 - b1) * ge;
          v[pi][e] = b2 * v[pi][e] + (1.0 - b2) * ge * ge;
          const double mh = m[pi][e] / bc1;
          const double vh = v[pi][e] / bc2;
          val[e] -= cfg.learning_rate * mh / (std::sqrt(vh) + eps);
        }
      }
    }
  }
};

}  // namespace

void BatchLossGraph::bind_pair(std::size_t slot, std::span<const double> a,
                               std::span<const double> b) {
  Matrix& xa = tape.value_mut(x_first);
  Matrix& xb = tape.value_mut(x_second);
  if (slot >= xa.cols())
    throw std::invalid_argument("batch loss: pair slot out of range");
  if (a.size() != xa.rows() || b.size() != xb.rows())
    throw std::invalid_argument("batch loss: pair dimension mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    xa.at(i, slot) = a[i];
    xb.at(i, slot) = b[i];
  }
}

void BatchLossGraph::set_adversary(const Matrix& g) {
  tape.set_value(g_const, g);
}

EncoderParams BatchLossGraph::snapshot() const {
  EncoderParams p;
  p.spec = spec;
  for (NodeId w : weights) p.weights.push_back(tape.value(w));
  for (NodeId b : biases) p.biases.push_back(tape.value(b));
  return p;
}

BatchLossGraph build_batch_loss(const EncoderParams& init, std::size_t batch,
                                double lambda, bool standardize) {
  BatchLossGraph g;
  g.spec = init.spec;
  g.standardize = standardize;
  g.lambda = lambda;
  Tape& t = g.tape;
  for (const Matrix& w : init.weights) g.weights.push_back(t.parameter(w));
  for (const Matrix& b : init.biases) g.biases.push_back(t.parameter(b));

  const std::size_t d = init.spec.dim_in;
  g.x_first = t.input(Matrix(d, batch));
  g.x_second = t.input(Matrix(d, batch));
  g.z_first = build_forward_graph_columns(t, g.spec, g.weights, g.biases,
                                          g.x_first, true);
  g.z_second = build_forward_graph_columns(t, g.spec, g.weights, g.biases,
                                           g.x_second, true);
  NodeId diff = t.sub(g.z_first, g.z_second);
  NodeId align = t.scale(t.dot(diff, diff), 1.0 / static_cast<double>(batch));

  const std::size_t ds = init.spec.dim_out;
  NodeId c = standardize
                 ? t.cross_correlation_cols(t.standardize_rows(g.z_first),
                                            t.standardize_rows(g.z_second))
                 : t.cross_correlation_cols(g.z_first, g.z_second);
  g.c_gap = t.sub(c, t.constant(Matrix::identity(ds)));
  // Everything after this point is recomputed once the adversary is set.
  g.g_const = t.constant(Matrix(ds, ds));
  g.loss = t.add(align, t.scale(t.dot(g.c_gap, g.g_const), lambda));
  return g;
}

GramGap::GramGap(Matrix g_in, double radius_in)
    : g(std::move(g_in)), radius(radius_in) {
  if (radius < 0.0) throw std::invalid_argument("gram gap: negative radius");
  if (frobenius_norm(g) > radius + kFeasibleSlack)
    throw std::invalid_argument(
        "gram gap: matrix norm exceeds the feasible radius");
}

Matrix cross_correlation(const EncoderParams& f, const PairBatch& batch,
                         bool standardize) {
  if (batch.size() == 0)
    throw std::invalid_argument("cross_correlation: empty batch");
  return reps_cross_correlation(project_all(f, batch.first),
                                project_all(f, batch.second), standardize);
}

GramGap inner_solution(const EncoderParams& f, const PairBatch& batch,
                       bool standardize) {
  Matrix c = cross_correlation(f, batch, standardize);
  Matrix gap = c - Matrix::identity(c.rows());
  const double radius = frobenius_norm(gap);
  return GramGap(std::move(gap), radius);
}

double empirical_loss(const EncoderParams& f, const GramGap& g,
                      const PairBatch& batch, double lambda) {
  if (batch.size() == 0)
    throw std::invalid_argument("empirical_loss: empty batch");
  const std::size_t ds = f.spec.dim_out;
  if (g.g.rows() != ds || g.g.cols() != ds)
    throw std::invalid_argument("empirical_loss: adversary shape mismatch");
  auto z1 = project_all(f, batch.first);
  auto z2 = project_all(f, batch.second);
  const double tr_g = trace(g.g);
  std::vector<double> terms(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double inner = 0.0;
    for (std::size_t p = 0; p < ds; ++p) {
      double row = 0.0;
      for (std::size_t q = 0; q < ds; ++q) row += g.g.at(p, q) * z2[i][q];
      inner += z1[i][p] * row;
    }
    terms[i] = squared_distance(z1[i], z2[i]) + lambda * (inner - tr_g);
  }
  return tree_sum(terms) / static_cast<double>(batch.size());
}

LossParts loss_decomposition(const EncoderParams& f, const PairBatch& batch,
                             double lambda, bool standardize) {
  if (batch.size() == 0)
    throw std::invalid_argument("loss_decomposition: empty batch");
  auto z1 = project_all(f, batch.first);
  auto z2 = project_all(f, batch.second);
  LossParts parts;
  parts.align = alignment_term(z1, z2);
  Matrix c = reps_cross_correlation(std::move(z1), std::move(z2), standardize);
  parts.gap_fro = frobenius_norm(c - Matrix::identity(c.rows()));
  parts.divergence = lambda * parts.gap_fro * parts.gap_fro;
  return parts;
}

void TrainConfig::validate() const {
  if (lambda < 0.0)
    throw std::invalid_argument("train config: negative lambda");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("train config: learning rate must be positive");
  if (batch_size < 1)
    throw std::invalid_argument("train config: batch size must be positive");
  if (standardize && batch_size < 2)
    throw std::invalid_argument(
        "train config: standardized mode needs batch size at least 2");
  if (weight_decay < 0.0)
    throw std::invalid_argument("train config: negative weight decay");
}

TrainResult train_on_pairs(const PairBatch& pairs, const TrainConfig& cfg,
                           EncoderParams init, const EpochObserver& observer) {
  cfg.validate();
  init.spec.validate();
  if (cfg.d_star != init.spec.dim_out)
    throw std::invalid_argument(
        "train config: d_star does not match the encoder output dimension");
  const std::size_t n = pairs.size();
  if (n == 0) throw std::invalid_argument("train: empty pair set");
  if (cfg.batch_size > n)
    throw std::invalid_argument("train: batch size exceeds the pair count");
  for (std::size_t i = 0; i < n; ++i)
    if (pairs.first[i].size() != init.spec.dim_in ||
        pairs.second[i].size() != init.spec.dim_in)
      throw std::invalid_argument("train: pair dimension mismatch");

  TrainResult result;
  result.params = init;
  if (cfg.epochs == 0) return result;

  BatchLossGraph graph =
      build_batch_loss(init, cfg.batch_size, cfg.lambda, cfg.standardize);
  std::vector<NodeId> params = graph.weights;
  params.insert(params.end(), graph.biases.begin(), graph.biases.end());
  Optimizer opt(cfg);
  Rng shuffle_rng(Rng::derive(cfg.seed, 0x5u));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t batches = n / cfg.batch_size;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);

    GramGap epoch_gap;
    if (cfg.inner_update == TrainConfig::InnerUpdate::kFullData) {
      try {
        epoch_gap = inner_solution(graph.snapshot(), pairs, cfg.standardize);
      } catch (const NumericError& e) {
        throw TrainAbort("train: " + std::string(e.what()) + " at epoch " +
                             std::to_string(epoch),
                         static_cast<int>(epoch), -1);
      } catch (const std::invalid_argument& e) {
        throw TrainAbort("train: " + std::string(e.what()) + " at epoch " +
                             std::to_string(epoch),
                         static_cast<int>(epoch), -1);
      }
    }

    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const std::size_t idx = order[b * cfg.batch_size + i];
        graph.bind_pair(i, pairs.first[idx], pairs.second[idx]);
      }
      // Numeric failures inside the step (overflow reaching a checked
      // constructor, a collapsed representation column) are divergence.
      try {
        graph.tape.forward();

        if (cfg.inner_update == TrainConfig::InnerUpdate::kPerBatch) {
          graph.set_adversary(graph.tape.value(graph.c_gap));
        } else {
          graph.set_adversary(epoch_gap.g);
        }
        graph.tape.forward_from(graph.g_const);

        if (!std::isfinite(graph.tape.scalar(graph.loss)))
          throw NumericError("non-finite loss");

        graph.tape.backward(graph.loss);
        opt.step(graph.tape, params);
      } catch (const TrainAbort&) {
        throw;
      } catch (const NumericError& e) {
        throw TrainAbort("train: " + std::string(e.what()) + " at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(b),
                         static_cast<int>(epoch), static_cast<int>(b));
      } catch (const std::invalid_argument& e) {
        throw TrainAbort("train: " + std::string(e.what()) + " at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(b),
                         static_cast<int>(epoch), static_cast<int>(b));
      }

      if (cfg.kappa_projection) {
        EncoderParams cur = graph.snapshot();
        const double k = kappa(cur);
        if (k > cur.spec.kappa_budget) {
          project_kappa(cur);
          graph.tape.set_value(graph.weights.back(), cur.weights.back());
        }
      }
    }

    EncoderParams now = graph.snapshot();
    LossParts parts =
        loss_decomposition(now, pairs, cfg.lambda, cfg.standardize);
    TraceRecord rec;
    rec.epoch = epoch;
    rec.align = parts.align;
    rec.divergence = parts.divergence;
    rec.gap_fro = parts.gap_fro;
    rec.loss = parts.align + parts.divergence;
    rec.kappa = kappa(now);
    result.trace.push_back(rec);
    if (observer) observer(rec, now);
  }

  result.params = graph.snapshot();
  return result;
}

TrainResult train(std::span<const std::vector<double>> samples,
                  const AugmentationSet& augs, const TrainConfig& cfg,
                  EncoderParams init, const EpochObserver& observer) {
  Rng pair_rng(Rng::derive(cfg.seed, 0x9u));
  PairBatch pairs = make_pair_batch(samples, augs, pair_rng);
  return train_on_pairs(pairs, cfg, std::move(init), observer);
}

}  // namespace act
