#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "act/matrix.hpp"
#include "act/tape.hpp"

namespace act {

// Architecture and constraint budget of the encoder network:
// x -> relu(A_0 x + b_0) -> ... -> relu(A_{L-1} h + b_{L-1}) -> A_L h,
// optionally followed by projection of the output norm into [b1, b2].
struct EncoderSpec {
  std::size_t dim_in = 0;    // input dimension
  std::size_t dim_out = 0;   // representation dimension
  std::size_t width = 0;     // hidden width
  std::size_t depth = 1;     // number of relu layers (>= 1)
  double kappa_budget = 1.0; // admissible bound on the layer-norm product
  double b1 = 1.0, b2 = 1.0; // output norm shell

  void validate() const;  // throws std::invalid_argument
};

struct EncoderParams {
  EncoderSpec spec;
  std::vector<Matrix> weights;  // A_0 .. A_depth
  std::vector<Matrix> biases;   // b_0 .. b_{depth-1}, each width x 1
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, weights first
// then bias, drawn in layer order from the seeded stream.
EncoderParams init_params(const EncoderSpec& spec, std::uint64_t seed);

// Plain forward evaluation. project toggles the output norm projection; the
// raw (unprojected) output is the function whose Lipschitz constant kappa
// certifies.
std::vector<double> forward(const EncoderParams& params,
                            std::span<const double> x, bool project);

// In-place norm-shell projection used by forward; the zero vector maps to the
// first basis vector clamped into the shell.
void project_norm_shell(std::vector<double>& v, double b1, double b2);

// Layer-norm product: ||A_L||_inf * prod_l max(||(A_l, b_l)||_inf, 1), where
// ||.||_inf is the max row 1-norm and (A_l, b_l) appends the bias as an extra
// column. Upper-bounds the Lipschitz constant of the unprojected network.
double kappa(const EncoderParams& params);

// Rescales the last layer by kappa_budget / kappa when the budget is
// exceeded; otherwise leaves the parameters alone. Idempotent.
void project_kappa(EncoderParams& params);

// Checkpoint file: text header, then the layers A_0, b_0, ..., A_L as
// little-endian 64-bit floats in row-major order. Round-trips bit-exactly.
void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);

// Builds the forward pass on a tape against shared weight/bias leaves, so a
// batch of inputs reuses one set of parameters. Returns the output node.
NodeId build_forward_graph(Tape& tape, const EncoderSpec& spec,
                           std::span<const NodeId> weights,
                           std::span<const NodeId> biases, NodeId x,
                           bool project);

// Same network applied to every column of a dim_in x n input node at once.
// Column j of the output equals build_forward_graph on column j.
NodeId build_forward_graph_columns(Tape& tape, const EncoderSpec& spec,
                                   std::span<const NodeId> weights,
                                   std::span<const NodeId> biases, NodeId x,
                                   bool project);

}  // namespace act
