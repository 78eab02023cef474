#include "d2tpt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "d2tpt/errors.hpp"

namespace d2tpt {

std::size_t selection_count(std::size_t n, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("selection fraction must be in (0, 1]");
  if (n == 0) throw ShapeMismatch("selection over zero rows");
  double raw = rho * static_cast<double>(n);
  double nearest = std::round(raw);
  double count = std::abs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw);
  return std::clamp<std::size_t>(static_cast<std::size_t>(count), 1, n);
}

LogitBlock select_confident(const Mat& logits, double rho) {
  const auto n = static_cast<std::size_t>(logits.rows());
  const std::size_t keep = selection_count(n, rho);

  LogitBlock block;
  block.logits = logits;
  block.entropies = row_entropies(logits);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return block.entropies(static_cast<Eigen::Index>(a)) <
           block.entropies(static_cast<Eigen::Index>(b));
  });

  block.mask.assign(n, false);
  for (std::size_t rank = 0; rank < keep; ++rank) block.mask[order[rank]] = true;
  block.threshold = block.entropies(static_cast<Eigen::Index>(order[keep - 1]));
  for (std::size_t i = 0; i < n; ++i) {
    if (block.mask[i]) block.selected.push_back(i);
  }
  return block;
}

PseudoLabel pseudo_label(const LogitBlock& block) {
  if (block.selected.empty()) throw ShapeMismatch("pseudo_label: no selected rows");
  const auto classes = static_cast<std::size_t>(block.logits.cols());
  std::vector<std::size_t> votes(classes, 0);
  std::vector<double> best(classes, std::numeric_limits<double>::infinity());
  for (std::size_t row : block.selected) {
    auto r = static_cast<Eigen::Index>(row);
    std::size_t predicted = argmax(block.logits.row(r).transpose());
    ++votes[predicted];
    best[predicted] = std::min(best[predicted], block.entropies(r));
  }
  PseudoLabel out;
  out.support = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (votes[c] == 0) continue;
    bool better = votes[c] > out.support ||
                  (votes[c] == out.support && best[c] < out.min_entropy);
    if (better) {
      out.label = c;
      out.support = votes[c];
      out.min_entropy = best[c];
    }
  }
  return out;
}

}  // namespace d2tpt
