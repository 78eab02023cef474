#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "d2tpt/numerics.hpp"
#include "d2tpt/prompt_state.hpp"

namespace d2tpt {

struct LossBreakdown {
  double ram = 0.0;
  double en = 0.0;
  double md = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

struct EnsembleWeights {
  Vec weights;     // softmax(raw_scores)
  Vec raw_scores;  // row sums of the view cosine matrix
};

struct GradPair {
  Vec text;
  Vec image;
};

struct RamLoss {
  double value = 0.0;
  std::vector<std::size_t> selected;  // ascending row indices
};

// Entropy of the mean softmax over the ceil(rho * N) most confident rows of
// the modulated logits. The selected rows are returned for reuse.
RamLoss loss_ram(const Mat& modulated, double rho);

// loss_ram with the selected rows given.
double loss_ram_frozen(const Mat& modulated, std::span<const std::size_t> rows);

// Rows are L2-normalized, S = Y Y^T (diagonal included), weights are the
// softmax of the row sums of S.
EnsembleWeights ensemble_weights(const Mat& selected_img);

// Entropy of softmax(sum_m w_m * row_m).
double loss_en(const Mat& selected_modulated, const EnsembleWeights& weights);

// Cross-modal distillation loss. The original and adapted image prototypes
// are the renormalized means of the selected, per-row normalized views; the
// distillation logits sum the three scaled cosine rows
//   original image x adapted text, adapted image x original text,
//   adapted image x adapted text
// and the loss is the entropy of their softmax.
double loss_md(const AdaptedFeatures& feats, std::span<const std::size_t> rows,
               double logit_scale);

// total = ram + alpha * en + beta * md.
LossBreakdown total_loss(double ram, double en, double md, double alpha, double beta);

// Everything the per-sample objective depends on besides the prompts.
struct ObjectiveContext {
  Mat views;         // N x D, as stored
  TextPrototypes text;
  Vec retrieval;     // C, constant retrieval logits (zeros without a KB)
  double logit_scale = 100.0;
};

// Rows feeding every loss term, held fixed while differentiating.
struct FrozenSelection {
  std::vector<std::size_t> rows;  // ascending
};

struct TermWeights {
  double ram = 1.0;
  double en = 0.0;
  double md = 0.0;
};

// compute_logits on the adapted features plus the retrieval logits.
Mat modulated_logits(const ObjectiveContext& ctx, const PromptPair& prompts);

// Confidence selection on the modulated logits at the given prompts.
FrozenSelection freeze_selection(const ObjectiveContext& ctx, const PromptPair& prompts,
                                 double rho);

// Forward pass of all three terms under a frozen selection.
LossBreakdown evaluate(const ObjectiveContext& ctx, const PromptPair& prompts,
                       const FrozenSelection& frozen, double alpha, double beta);

// Gradient of w.ram * L_RAM + w.en * L_EN + w.md * L_MD with respect to both
// prompts, under a frozen selection. The retrieval logits are constants; the
// ensemble weights are differentiated through the view similarity matrix.
// Terms whose weight is exactly zero are skipped.
GradPair grad_terms(const ObjectiveContext& ctx, const PromptPair& prompts,
                    const FrozenSelection& frozen, TermWeights weights);

// grad_terms with weights {1, alpha, beta}.
GradPair grad_total(const ObjectiveContext& ctx, const PromptPair& prompts,
                    const FrozenSelection& frozen, double alpha, double beta);

// Copies the listed rows of m.
Mat gather_rows(const Mat& m, std::span<const std::size_t> rows);

}  // namespace d2tpt
