#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridgin/matrix.hpp"
#include "gridgin/rng.hpp"

namespace gridgin::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A trainable tensor with its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
  void zero_grad() { grad.fill(0.0); }
};

using Var = std::size_t;

/// Records operations for reverse-mode differentiation. Nodes are created in
/// topological order, so backward walks them in reverse exactly once.
/// A tape built with record = false only computes values.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Matrix value);
  const Matrix& value(Var v) const { return nodes_.at(v).value; }
  Matrix& grad(Var v);

  /// Adds a node. `backward` reads grad(self) and accumulates into inputs.
  Var push(Matrix value, std::function<void(Tape&, Var)> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates; loss must be 1x1.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, Var)> backward;
  };
  bool record_;
  std::vector<Node> nodes_;
};

/// Incidence lists of an undirected graph (or a disjoint union of graphs):
/// node v has entries [offset[v], offset[v+1]) of (neighbor, edge).
struct Adjacency {
  std::vector<std::int32_t> offset{0};
  std::vector<std::int32_t> neighbor;
  std::vector<std::int32_t> edge;

  std::size_t nodes() const noexcept { return offset.size() - 1; }
};

enum class Pooling { Sum, Mean, Max };
const char* to_string(Pooling p) noexcept;
Pooling pooling_from_string(const std::string& s);

// Primitive ops. Shapes are checked and ShapeError thrown on mismatch.
Var linear(Tape& t, Var x, Param& weight, Param& bias);  // x W^T + b, W is out x in
Var relu(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var scale_one_plus(Tape& t, Var x, Param& eps);          // (1 + eps) x, eps is 1x1
Var neighbor_sum(Tape& t, Var x, const Adjacency& adj);  // y_v = sum_{u in N(v)} x_u
/// y_v = sum over incidences (u, e) of v of ReLU(h_u + g_e).
Var relu_message_sum(Tape& t, Var h, Var g, const Adjacency& adj);
/// Pools the rows [seg[i], seg[i+1]) of x into row i.
Var pool_rows(Tape& t, Var x, std::span<const std::size_t> seg, Pooling p);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var sigmoid(Tape& t, Var x);
/// Mean binary cross-entropy of probabilities clamped to [1e-7, 1 - 1e-7].
Var bce_loss(Tape& t, Var p, std::span<const double> targets);

double bce(std::span<const double> p, std::span<const double> targets);

enum class Mode { Train, Eval };

struct Dense {
  Param weight;  // out x in
  Param bias;    // 1 x out

  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out);
  std::size_t in() const noexcept { return weight.value.cols(); }
  std::size_t out() const noexcept { return weight.value.rows(); }
  /// Uniform(-sqrt(1/in), sqrt(1/in)) for weights and biases.
  void init(Rng& rng);
  Var forward(Tape& t, Var x) { return linear(t, x, weight, bias); }
};

struct BatchNorm1d {
  Param gamma;  // 1 x d
  Param beta;   // 1 x d
  Matrix running_mean;
  Matrix running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;
  Mode mode = Mode::Train;

  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, std::size_t d);
  std::size_t dim() const noexcept { return gamma.value.cols(); }
  /// Train mode normalises with batch statistics (biased variance) and
  /// updates running stats (unbiased variance); Eval mode uses running stats
  /// and leaves the layer untouched.
  Var forward(Tape& t, Var x, Mode m);
  Var forward(Tape& t, Var x) { return forward(t, x, mode); }
};

enum class Activation { ReLU, Identity };

struct MlpLayer {
  Dense dense;
  bool batch_norm = true;
  BatchNorm1d bn;
  Activation activation = Activation::ReLU;
};

/// Stack of Dense -> BatchNorm -> activation layers.
struct Mlp {
  std::vector<MlpLayer> layers;

  Mlp() = default;
  /// dims = {in, hidden..., out}. Every layer gets BN and ReLU unless
  /// `plain_last`, in which case the final layer is a bare Dense.
  Mlp(const std::string& name, const std::vector<std::size_t>& dims, bool plain_last = false);
  std::size_t in() const { return layers.front().dense.in(); }
  std::size_t out() const { return layers.back().dense.out(); }
  void init(Rng& rng);
  void set_mode(Mode m);
  std::vector<Param*> parameters();
  std::vector<BatchNorm1d*> batch_norms();
  Var forward(Tape& t, Var x, Mode m);
  Var forward(Tape& t, Var x) { return forward(t, x, layers.front().bn.mode); }
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

AdamState make_adam(std::span<Param* const> params, const AdamOptions& options = {});
/// Standard bias-corrected Adam update; gradients are left untouched.
void adam_step(std::span<Param* const> params, AdamState& state);

/// Central differences against backward on `samples` randomly chosen scalar
/// parameters. `loss` must rebuild the forward pass on the given tape and
/// return its scalar loss node. Returns the maximum relative error with
/// denominator max(|a|, |b|, floor).
double grad_check(const std::function<Var(Tape&)>& loss, std::span<Param* const> params,
                  std::size_t samples, std::uint64_t seed, double h = 1e-5, double floor = 1e-8);

}  // namespace gridgin::nn
