#include "d2tpt/optimizer.hpp"

#include <cmath>

#include "d2tpt/errors.hpp"

namespace d2tpt {
namespace {

void update(Vec& param, const Vec& grad, Vec& m, Vec& v, double bias1, double bias2,
            const OptimHypers& h) {
  param *= 1.0 - h.lr * h.weight_decay;
  m = h.beta1 * m + (1.0 - h.beta1) * grad;
  v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
  Vec denom = (v / bias2).cwiseSqrt().array() + h.eps;
  param -= h.lr * (m / bias1).cwiseQuotient(denom);
}

}  // namespace

void OptimHypers::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

AdamWState AdamWState::zeros(Eigen::Index dim) {
  return {Vec::Zero(dim), Vec::Zero(dim), Vec::Zero(dim), Vec::Zero(dim), 0};
}

void adamw_step(PromptPair& prompts, const GradPair& grads, AdamWState& state,
                const OptimHypers& hypers) {
  const Eigen::Index dim = prompts.text.size();
  if (prompts.image.size() != dim || grads.text.size() != dim || grads.image.size() != dim ||
      state.m_text.size() != dim || state.m_image.size() != dim ||
      state.v_text.size() != dim || state.v_image.size() != dim) {
    throw ShapeMismatch("adamw_step: dimension mismatch");
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(hypers.beta1, t);
  const double bias2 = 1.0 - std::pow(hypers.beta2, t);
  update(prompts.text, grads.text, state.m_text, state.v_text, bias1, bias2, hypers);
  update(prompts.image, grads.image, state.m_image, state.v_image, bias1, bias2, hypers);
}

}  // namespace d2tpt
