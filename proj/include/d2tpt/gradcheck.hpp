#pragma once

#include <cstdint>
#include <functional>

#include "d2tpt/objectives.hpp"

namespace d2tpt {

struct GradcheckOptions {
  int trials = 20;
  std::uint64_t seed = 0;
  Eigen::Index classes = 5;
  Eigen::Index views = 8;
  Eigen::Index dim = 16;
  double rho = 0.5;
  double alpha = 0.1;
  double beta = 0.001;
  double logit_scale = 20.0;
  double step = 1e-5;      // central-difference step
  double perturb = 0.0;    // analytic gradient is scaled by (1 + perturb)
  double tolerance = 1e-4;
};

// A random objective with its prompts and frozen selection. Odd trials use
// lambda = 1 with retrieval logits from a randomly filled knowledge base,
// even trials lambda = 0.
struct GradcheckInstance {
  ObjectiveContext ctx;
  PromptPair prompts;
  FrozenSelection frozen;
  double lambda = 0.0;
};

GradcheckInstance random_instance(const GradcheckOptions& options, int trial);

// Central differences of f over both prompts.
GradPair finite_difference(const std::function<double(const PromptPair&)>& f,
                           const PromptPair& at, double step);

// ||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-8), over both prompts.
double relative_error(const GradPair& a, const GradPair& b);

struct GradcheckResult {
  double max_relative_error = 0.0;
  int worst_trial = -1;
  double seconds = 0.0;
  bool passed = false;
};

// Compares grad_total against central differences of the frozen-selection
// total loss on `trials` random instances.
GradcheckResult run_gradcheck(const GradcheckOptions& options);

}  // namespace d2tpt
