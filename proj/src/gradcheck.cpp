#include "d2tpt/gradcheck.hpp"

#include <algorithm>
#include <chrono>

#include "d2tpt/errors.hpp"
#include "d2tpt/knowledge_base.hpp"
#include "d2tpt/rng.hpp"

namespace d2tpt {
namespace {

constexpr double kPromptScale = 0.05;
constexpr std::size_t kRandomCapacity = 3;
constexpr int kRandomOffers = 12;
constexpr double kGamma = 5.0;

std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  // SplitMix64 finalizer so neighbouring seeds give unrelated streams.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(trial) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

GradcheckInstance random_instance(const GradcheckOptions& o, int trial) {
  if (o.classes < 2 || o.views < 1 || o.dim < 1) throw ConfigError("gradcheck: bad shape");
  Gaussian rng(trial_seed(o.seed, trial));

  GradcheckInstance inst;
  inst.lambda = trial % 2 == 1 ? 1.0 : 0.0;
  inst.ctx.views = rng.matrix(o.views, o.dim);
  inst.ctx.text.protos = normalize_rows(rng.matrix(o.classes, o.dim));
  for (Eigen::Index c = 0; c < o.classes; ++c) {
    inst.ctx.text.class_names.push_back("class_" + std::to_string(c));
  }
  inst.ctx.logit_scale = o.logit_scale;
  inst.ctx.retrieval = Vec::Zero(o.classes);

  if (inst.lambda > 0.0) {
    KnowledgeBase kb(kRandomCapacity);
    for (int i = 0; i < kRandomOffers; ++i) {
      auto label = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(o.classes)));
      kb.update(rng.unit(o.dim), label, rng.uniform_open());
    }
    const auto classes = static_cast<std::size_t>(o.classes);
    Vec query = l2_normalize(inst.ctx.views.row(0).transpose());
    inst.ctx.retrieval =
        retrieval_logits(query, build_tables(kb, classes), inst.lambda, kGamma, classes);
  }

  inst.prompts.text = rng.normal(o.dim, kPromptScale);
  inst.prompts.image = rng.normal(o.dim, kPromptScale);
  inst.frozen = freeze_selection(inst.ctx, inst.prompts, o.rho);
  return inst;
}

GradPair finite_difference(const std::function<double(const PromptPair&)>& f,
                           const PromptPair& at, double step) {
  GradPair g{Vec::Zero(at.text.size()), Vec::Zero(at.image.size())};
  auto sweep = [&](Vec PromptPair::*member, Vec& out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      PromptPair plus = at;
      PromptPair minus = at;
      (plus.*member)(i) += step;
      (minus.*member)(i) -= step;
      out(i) = (f(plus) - f(minus)) / (2.0 * step);
    }
  };
  sweep(&PromptPair::text, g.text);
  sweep(&PromptPair::image, g.image);
  return g;
}

double relative_error(const GradPair& a, const GradPair& b) {
  const double diff = std::max((a.text - b.text).lpNorm<Eigen::Infinity>(),
                               (a.image - b.image).lpNorm<Eigen::Infinity>());
  const double scale = std::max({a.text.lpNorm<Eigen::Infinity>(),
                                 a.image.lpNorm<Eigen::Infinity>(),
                                 b.text.lpNorm<Eigen::Infinity>(),
                                 b.image.lpNorm<Eigen::Infinity>(), 1e-8});
  return diff / scale;
}

GradcheckResult run_gradcheck(const GradcheckOptions& o) {
  if (o.trials < 1) throw ConfigError("gradcheck: trials must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  GradcheckResult result;
  for (int t = 0; t < o.trials; ++t) {
    GradcheckInstance inst = random_instance(o, t);
    GradPair analytic = grad_total(inst.ctx, inst.prompts, inst.frozen, o.alpha, o.beta);
    analytic.text *= 1.0 + o.perturb;
    analytic.image *= 1.0 + o.perturb;
    GradPair numeric = finite_difference(
        [&](const PromptPair& p) {
          return evaluate(inst.ctx, p, inst.frozen, o.alpha, o.beta).total;
        },
        inst.prompts, o.step);
    const double err = relative_error(analytic, numeric);
    if (err > result.max_relative_error || result.worst_trial < 0) {
      result.max_relative_error = err;
      result.worst_trial = t;
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.passed = result.max_relative_error < o.tolerance;
  return result;
}

}  // namespace d2tpt
