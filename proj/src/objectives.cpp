#include "d2tpt/objectives.hpp"

#include <cmath>
#include <string>

#include "d2tpt/errors.hpp"
#include "d2tpt/knowledge_base.hpp"
#include "d2tpt/selection.hpp"

namespace d2tpt {
namespace {

void check_rows(std::span<const std::size_t> rows, Eigen::Index n) {
  if (rows.empty()) throw ShapeMismatch("empty frozen selection");
  for (std::size_t r : rows) {
    if (static_cast<Eigen::Index>(r) >= n) {
      throw ShapeMismatch("frozen row " + std::to_string(r) + " out of range " +
                          std::to_string(n));
    }
  }
}

Vec mean_softmax(const Mat& logits, std::span<const std::size_t> rows) {
  Vec mean = Vec::Zero(logits.cols());
  for (std::size_t r : rows) mean += softmax(logits.row(static_cast<Eigen::Index>(r)).transpose());
  return mean / static_cast<double>(rows.size());
}

// Mean of the listed (already normalized) rows.
Vec mean_rows(const Mat& m, std::span<const std::size_t> rows) {
  Vec mean = Vec::Zero(m.cols());
  for (std::size_t r : rows) mean += m.row(static_cast<Eigen::Index>(r)).transpose();
  return mean / static_cast<double>(rows.size());
}

}  // namespace

Mat gather_rows(const Mat& m, std::span<const std::size_t> rows) {
  check_rows(rows, m.rows());
  Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

RamLoss loss_ram(const Mat& modulated, double rho) {
  LogitBlock block = select_confident(modulated, rho);
  RamLoss out;
  out.selected = std::move(block.selected);
  out.value = loss_ram_frozen(modulated, out.selected);
  return out;
}

double loss_ram_frozen(const Mat& modulated, std::span<const std::size_t> rows) {
  check_rows(rows, modulated.rows());
  return entropy(mean_softmax(modulated, rows));
}

EnsembleWeights ensemble_weights(const Mat& selected_img) {
  if (selected_img.rows() == 0) throw ShapeMismatch("ensemble_weights: no rows");
  Mat unit = normalize_rows(selected_img);
  Mat sim = unit * unit.transpose();
  EnsembleWeights out;
  out.raw_scores = sim.rowwise().sum();
  out.weights = softmax(out.raw_scores);
  return out;
}

double loss_en(const Mat& selected_modulated, const EnsembleWeights& weights) {
  if (selected_modulated.rows() != weights.weights.size()) {
    throw ShapeMismatch("loss_en: " + std::to_string(selected_modulated.rows()) + " rows vs " +
                        std::to_string(weights.weights.size()) + " weights");
  }
  Vec fused = selected_modulated.transpose() * weights.weights;
  return softmax_entropy(fused);
}

double loss_md(const AdaptedFeatures& feats, std::span<const std::size_t> rows,
               double logit_scale) {
  check_rows(rows, feats.image_orig.rows());
  Vec proto_orig = l2_normalize(mean_rows(normalize_rows(feats.image_orig), rows));
  Vec proto_adapted = l2_normalize(mean_rows(normalize_rows(feats.image_adapted), rows));
  Mat text_orig = normalize_rows(feats.text_orig);
  Mat text_adapted = normalize_rows(feats.text_adapted);
  Vec v_to_t = logit_scale * (text_adapted * proto_orig);
  Vec t_to_v = logit_scale * (text_orig * proto_adapted);
  Vec self = logit_scale * (text_adapted * proto_adapted);
  return softmax_entropy(v_to_t + t_to_v + self);
}

LossBreakdown total_loss(double ram, double en, double md, double alpha, double beta) {
  if (!std::isfinite(ram) || !std::isfinite(en) || !std::isfinite(md)) {
    throw NonFinite("total_loss: non-finite term");
  }
  return {ram, en, md, ram + alpha * en + beta * md, alpha, beta};
}

Mat modulated_logits(const ObjectiveContext& ctx, const PromptPair& prompts) {
  AdaptedFeatures feats = adapt_features(ctx.text, ctx.views, prompts);
  return modulate(compute_logits(feats, ctx.logit_scale), ctx.retrieval);
}

FrozenSelection freeze_selection(const ObjectiveContext& ctx, const PromptPair& prompts,
                                 double rho) {
  return {select_confident(modulated_logits(ctx, prompts), rho).selected};
}

LossBreakdown evaluate(const ObjectiveContext& ctx, const PromptPair& prompts,
                       const FrozenSelection& frozen, double alpha, double beta) {
  AdaptedFeatures feats = adapt_features(ctx.text, ctx.views, prompts);
  Mat modulated = modulate(compute_logits(feats, ctx.logit_scale), ctx.retrieval);
  double ram = loss_ram_frozen(modulated, frozen.rows);
  EnsembleWeights weights = ensemble_weights(gather_rows(feats.image_adapted, frozen.rows));
  double en = loss_en(gather_rows(modulated, frozen.rows), weights);
  double md = loss_md(feats, frozen.rows, ctx.logit_scale);
  return total_loss(ram, en, md, alpha, beta);
}

GradPair grad_total(const ObjectiveContext& ctx, const PromptPair& prompts,
                    const FrozenSelection& frozen, double alpha, double beta) {
  return grad_terms(ctx, prompts, frozen, {1.0, alpha, beta});
}

// Reverse pass. Notation: X = views + p_v, T = protos + p_t, Xn / Tn their
// row-normalized forms, L = s * Xn Tn^T + 1 l_r^T. All upstream signals are
// accumulated into dXn / dTn and pulled back through the normalization once.
GradPair grad_terms(const ObjectiveContext& ctx, const PromptPair& prompts,
                    const FrozenSelection& frozen, TermWeights weights) {
  const auto& rows = frozen.rows;
  const Eigen::Index n = ctx.views.rows();
  const Eigen::Index classes = ctx.text.num_classes();
  const Eigen::Index dim = ctx.text.dim();
  const double scale = ctx.logit_scale;
  check_rows(rows, n);
  if (ctx.views.cols() != dim || prompts.text.size() != dim || prompts.image.size() != dim ||
      ctx.retrieval.size() != classes) {
    throw ShapeMismatch("grad_terms: inconsistent dimensions");
  }
  const auto m = static_cast<double>(rows.size());

  Mat x = ctx.views.rowwise() + prompts.image.transpose();
  Mat t = ctx.text.protos.rowwise() + prompts.text.transpose();
  Mat xn = normalize_rows(x);
  Mat tn = normalize_rows(t);

  // Only the selected rows of L are needed.
  Mat sel_logits(static_cast<Eigen::Index>(rows.size()), classes);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    sel_logits.row(static_cast<Eigen::Index>(k)) =
        scale * xn.row(static_cast<Eigen::Index>(rows[k])) * tn.transpose() +
        ctx.retrieval.transpose();
  }

  Mat d_logits = Mat::Zero(sel_logits.rows(), classes);  // per selected row
  Mat d_xn = Mat::Zero(n, dim);
  Mat d_tn = Mat::Zero(classes, dim);

  if (weights.ram != 0.0) {
    // H(mean_m p_m): dH/dp_m = -(log pbar + 1) / M; the constant drops out
    // of the softmax pullback.
    std::vector<Vec> probs;
    Vec pbar = Vec::Zero(classes);
    for (Eigen::Index k = 0; k < sel_logits.rows(); ++k) {
      probs.push_back(softmax(sel_logits.row(k).transpose()));
      pbar += probs.back();
    }
    pbar /= m;
    Vec upstream(classes);
    for (Eigen::Index c = 0; c < classes; ++c) {
      upstream(c) = pbar(c) > 0.0 ? -weights.ram * std::log(pbar(c)) / m : 0.0;
    }
    for (Eigen::Index k = 0; k < sel_logits.rows(); ++k) {
      d_logits.row(k) += vjp_softmax(probs[static_cast<std::size_t>(k)], upstream).transpose();
    }
  }

  if (weights.en != 0.0) {
    Mat y = gather_rows(xn, rows);
    Mat sim = y * y.transpose();
    Vec scores = sim.rowwise().sum();
    Vec w = softmax(scores);
    Vec fused = sel_logits.transpose() * w;
    Vec g = vjp_softmax_entropy(fused, weights.en);
    d_logits += w * g.transpose();
    Vec d_w = sel_logits * g;
    Vec d_scores = vjp_softmax(w, d_w);
    // s_i = sum_j y_i . y_j, so dy_k = ds_k * sum_j y_j + sum_j ds_j * y_j.
    Vec y_sum = y.colwise().sum().transpose();
    Vec weighted = y.transpose() * d_scores;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      auto r = static_cast<Eigen::Index>(rows[k]);
      d_xn.row(r) += (d_scores(static_cast<Eigen::Index>(k)) * y_sum + weighted).transpose();
    }
  }

  if (weights.md != 0.0) {
    Mat xo = normalize_rows(ctx.views);
    Vec proto_orig = Vec::Zero(dim);
    Vec proto_sum = Vec::Zero(dim);
    for (std::size_t r : rows) {
      proto_orig += xo.row(static_cast<Eigen::Index>(r)).transpose();
      proto_sum += xn.row(static_cast<Eigen::Index>(r)).transpose();
    }
    proto_orig = l2_normalize(proto_orig / m);
    Vec proto_mean = proto_sum / m;
    Vec proto = l2_normalize(proto_mean);
    Mat to = normalize_rows(ctx.text.protos);
    Vec md_logits = scale * (tn * proto_orig + to * proto + tn * proto);
    Vec g = vjp_softmax_entropy(md_logits, weights.md);
    d_tn += scale * g * (proto_orig + proto).transpose();
    Vec d_proto = scale * (to + tn).transpose() * g;
    Vec d_mean = vjp_l2_normalize(proto_mean, d_proto) / m;
    for (std::size_t r : rows) d_xn.row(static_cast<Eigen::Index>(r)) += d_mean.transpose();
  }

  // L = s * Xn Tn^T on the selected rows.
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto r = static_cast<Eigen::Index>(rows[k]);
    auto dk = d_logits.row(static_cast<Eigen::Index>(k));
    d_xn.row(r) += scale * dk * tn;
    d_tn += scale * dk.transpose() * xn.row(r);
  }

  GradPair out{Vec::Zero(dim), Vec::Zero(dim)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d_xn.row(i).isZero(0.0)) continue;
    out.image += vjp_l2_normalize(x.row(i).transpose(), d_xn.row(i).transpose());
  }
  for (Eigen::Index c = 0; c < classes; ++c) {
    out.text += vjp_l2_normalize(t.row(c).transpose(), d_tn.row(c).transpose());
  }
  return out;
}

}  // namespace d2tpt
