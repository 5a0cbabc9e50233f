#pragma once

#include <Eigen/Core>

#include "polyview/gaussian_world.hpp"
#include "polyview/losses.hpp"
#include "polyview/method.hpp"
#include "polyview/random.hpp"

namespace polyview {

struct MlpShape {
  int hidden = 32;
  int out = 32;
};

// Parameters of x -> w2 * gelu(w1 * x + b1) + b2 for scalar x, held in one
// flat vector so the optimizer and the finite-difference oracle can treat
// them uniformly. Layout: w1 (hidden), b1 (hidden), w2 (out x hidden,
// row-major), b2 (out).
class MlpParams {
 public:
  using RowMap = Eigen::Map<RowMatrix>;
  using ConstRowMap = Eigen::Map<const RowMatrix>;

  explicit MlpParams(MlpShape shape = {});

  const MlpShape& shape() const { return shape_; }
  Eigen::Index size() const { return values_.size(); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  auto w1() { return values_.segment(0, shape_.hidden); }
  auto w1() const { return values_.segment(0, shape_.hidden); }
  auto b1() { return values_.segment(shape_.hidden, shape_.hidden); }
  auto b1() const { return values_.segment(shape_.hidden, shape_.hidden); }
  RowMap w2() { return RowMap(values_.data() + 2 * shape_.hidden, shape_.out, shape_.hidden); }
  ConstRowMap w2() const {
    return ConstRowMap(values_.data() + 2 * shape_.hidden, shape_.out, shape_.hidden);
  }
  auto b2() { return values_.segment(2 * shape_.hidden + shape_.out * shape_.hidden, shape_.out); }
  auto b2() const {
    return values_.segment(2 * shape_.hidden + shape_.out * shape_.hidden, shape_.out);
  }

  // 1 for weight-matrix entries, 0 for biases.
  Eigen::VectorXd decay_mask() const;

 private:
  MlpShape shape_;
  Eigen::VectorXd values_;
};

struct AdamWState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long long step = 0;

  static AdamWState ZerosLike(const MlpParams& params);
};

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 200;

  void validate() const;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
MlpParams init_params(RandomStream& rng, MlpShape shape = {});

// Exact erf form x * Phi(x) and its derivative Phi(x) + x * phi(x).
double gelu(double x);
double gelu_grad(double x);

// Embeds every view (K x M scalars) and normalizes it.
EmbeddingBatch forward(const MlpParams& params, const RowMatrix& views);

struct BackwardResult {
  LossResult loss;
  MlpParams grad;
};

// Analytic gradient of compute_loss(method, forward(params, views), tau).
BackwardResult backward(const MlpParams& params, const RowMatrix& views, Method method, double tau);

// In-place decoupled-weight-decay Adam step.
void adamw_step(MlpParams& params, const MlpParams& grads, AdamWState& state,
                const TrainConfig& cfg);

}  // namespace polyview
