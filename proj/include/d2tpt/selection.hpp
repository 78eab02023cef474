#pragma once

#include <cstddef>
#include <vector>

#include "d2tpt/numerics.hpp"

namespace d2tpt {

// Logits with their per-row entropies and the confident-row mask.
struct LogitBlock {
  Mat logits;                         // N x C
  Vec entropies;                      // N, H(softmax(row))
  std::vector<bool> mask;             // N
  std::vector<std::size_t> selected;  // masked row indices, ascending
  double threshold = 0.0;             // entropy at the last selected rank

  std::size_t selected_count() const { return selected.size(); }
};

struct PseudoLabel {
  std::size_t label = 0;
  double min_entropy = 0.0;
  std::size_t support = 0;  // selected rows voting for `label`
};

// ceil(rho * n) clamped to [1, n]. Products within 1e-9 of an integer are
// rounded to it first, so 0.3 * 10 selects 3 rather than 4.
std::size_t selection_count(std::size_t n, double rho);

// Keeps the ceil(rho * N) rows of lowest softmax entropy. Equal entropies
// are ranked by row index.
LogitBlock select_confident(const Mat& logits, double rho);

// Modal argmax class over the selected rows. Vote ties go to the class with
// the smaller minimum entropy, then to the smaller class index.
PseudoLabel pseudo_label(const LogitBlock& block);

}  // namespace d2tpt
