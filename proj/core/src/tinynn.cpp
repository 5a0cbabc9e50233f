#include "polyview/tinynn.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace polyview {

namespace {

struct Activations {
  Eigen::VectorXd x;  // B inputs, sample-major
  RowMatrix pre;      // B x hidden
  RowMatrix hidden;   // B x hidden
  RowMatrix out;      // B x out, before normalization
  Eigen::VectorXd norms;
};

Activations run_forward(const MlpParams& p, const RowMatrix& views) {
  if (!views.allFinite()) throw std::invalid_argument("views contain non-finite values");
  const Eigen::Index b = views.size();
  Activations act;
  // RowMatrix storage is already sample-major in memory.
  act.x = Eigen::Map<const Eigen::VectorXd>(views.data(), b);
  act.pre = act.x * p.w1().transpose();
  act.pre.rowwise() += p.b1().transpose();
  act.hidden = act.pre.unaryExpr([](double v) { return gelu(v); });
  act.out = act.hidden * p.w2().transpose();
  act.out.rowwise() += p.b2().transpose();
  act.norms.resize(b);
  for (Eigen::Index r = 0; r < b; ++r) {
    const double n = act.out.row(r).norm();
    if (!(n > kNormalizeEpsilon) || !std::isfinite(n)) {
      throw std::domain_error("embedding has zero or non-finite norm");
    }
    act.norms(r) = n;
  }
  return act;
}

EmbeddingBatch normalized(const Activations& act, const RowMatrix& views) {
  RowMatrix z = act.out;
  for (Eigen::Index r = 0; r < z.rows(); ++r) z.row(r) /= act.norms(r);
  return EmbeddingBatch(static_cast<int>(views.rows()), static_cast<int>(views.cols()),
                        std::move(z));
}

}  // namespace

MlpParams::MlpParams(MlpShape shape)
    : shape_(shape),
      values_(Eigen::VectorXd::Zero(2 * shape.hidden + shape.out * shape.hidden + shape.out)) {
  if (shape.hidden < 1 || shape.out < 1) throw std::invalid_argument("MlpShape must be positive");
}

Eigen::VectorXd MlpParams::decay_mask() const {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(values_.size());
  mask.segment(0, shape_.hidden).setOnes();
  mask.segment(2 * shape_.hidden, shape_.out * shape_.hidden).setOnes();
  return mask;
}

AdamWState AdamWState::ZerosLike(const MlpParams& params) {
  return {Eigen::VectorXd::Zero(params.size()), Eigen::VectorXd::Zero(params.size()), 0};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

MlpParams init_params(RandomStream& rng, MlpShape shape) {
  MlpParams p(shape);
  std::uniform_real_distribution<double> first(-1.0, 1.0);  // fan-in 1
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  std::uniform_real_distribution<double> second(-bound2, bound2);
  for (Eigen::Index j = 0; j < p.w1().size(); ++j) p.w1()(j) = first(rng);
  for (Eigen::Index j = 0; j < p.b1().size(); ++j) p.b1()(j) = first(rng);
  auto w2 = p.w2();
  for (Eigen::Index r = 0; r < w2.rows(); ++r) {
    for (Eigen::Index c = 0; c < w2.cols(); ++c) w2(r, c) = second(rng);
  }
  for (Eigen::Index j = 0; j < p.b2().size(); ++j) p.b2()(j) = second(rng);
  return p;
}

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

double gelu_grad(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

EmbeddingBatch forward(const MlpParams& params, const RowMatrix& views) {
  return normalized(run_forward(params, views), views);
}

BackwardResult backward(const MlpParams& params, const RowMatrix& views, Method method,
                        double tau) {
  const Activations act = run_forward(params, views);
  const EmbeddingBatch z = normalized(act, views);
  LossGradient lg = compute_loss_and_gradient(method, z, tau);

  // z = y / |y|  =>  dy = (dz - z (z . dz)) / |y|
  RowMatrix d_out(lg.d_embeddings.rows(), lg.d_embeddings.cols());
  for (Eigen::Index r = 0; r < d_out.rows(); ++r) {
    const auto zr = z.rows().row(r);
    const auto dz = lg.d_embeddings.row(r);
    d_out.row(r) = (dz - zr.dot(dz) * zr) / act.norms(r);
  }

  BackwardResult result{std::move(lg.loss), MlpParams(params.shape())};
  MlpParams& g = result.grad;
  g.w2() = d_out.transpose() * act.hidden;
  g.b2() = d_out.colwise().sum().transpose();
  RowMatrix d_pre = d_out * params.w2();
  d_pre.array() *= act.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  g.w1() = d_pre.transpose() * act.x;
  g.b1() = d_pre.colwise().sum().transpose();
  return result;
}

void adamw_step(MlpParams& params, const MlpParams& grads, AdamWState& state,
                const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adamw_step: shape mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  Eigen::VectorXd& w = params.values();
  const Eigen::VectorXd& g = grads.values();
  // Decoupled decay first, on weight matrices only.
  w.array() *= (1.0 - cfg.learning_rate * cfg.weight_decay * params.decay_mask().array());

  state.first_moment = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * g;
  state.second_moment = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * g.cwiseAbs2();
  const Eigen::ArrayXd m_hat = state.first_moment.array() / bias1;
  const Eigen::ArrayXd v_hat = state.second_moment.array() / bias2;
  w.array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
}

}  // namespace polyview
