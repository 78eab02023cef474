#pragma once

#include <cstdint>

#include "d2tpt/objectives.hpp"
#include "d2tpt/prompt_state.hpp"

namespace d2tpt {

struct OptimHypers {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// Moments for both prompts. Reset together with the prompts per sample.
struct AdamWState {
  Vec m_text, m_image;
  Vec v_text, v_image;
  std::uint64_t step = 0;

  static AdamWState zeros(Eigen::Index dim);
};

// One AdamW update in place: decay is applied to the parameters directly,
// then the bias-corrected moment step.
void adamw_step(PromptPair& prompts, const GradPair& grads, AdamWState& state,
                const OptimHypers& hypers);

}  // namespace d2tpt
