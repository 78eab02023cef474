#pragma once

#include <string>
#include <vector>

#include "d2tpt/numerics.hpp"

namespace d2tpt {

// One averaged text embedding per class.
struct TextPrototypes {
  Mat protos;  // C x D
  std::vector<std::string> class_names;

  Eigen::Index num_classes() const { return protos.rows(); }
  Eigen::Index dim() const { return protos.cols(); }
};

// Learnable additive vectors for the text and image side. Both start at zero
// for every test sample.
struct PromptPair {
  Vec text;
  Vec image;

  static PromptPair zeros(Eigen::Index dim) { return {Vec::Zero(dim), Vec::Zero(dim)}; }
};

// Features before and after the prompts are added. Adapted rows are exactly
// original rows plus the matching prompt.
struct AdaptedFeatures {
  Mat text_adapted;   // C x D
  Mat image_adapted;  // N x D
  Mat text_orig;      // C x D
  Mat image_orig;     // N x D
};

// Which side of each modality enters compute_logits.
struct FeatureChoice {
  bool adapted_image = true;
  bool adapted_text = true;
};

// Row c is the elementwise mean of gen.row(c) and spe.row(c). Requires C >= 2
// and non-degenerate rows. Missing class names are filled with "class_<c>".
TextPrototypes build_text_prototypes(const Mat& gen, const Mat& spe,
                                     std::vector<std::string> class_names = {});

AdaptedFeatures adapt_features(const TextPrototypes& protos, const Mat& views,
                               const PromptPair& prompts);

// logit_scale * cos(image row i, text row c), with each side taken from the
// adapted or original features according to `choice`.
Mat compute_logits(const AdaptedFeatures& feats, double logit_scale,
                   FeatureChoice choice = {});

}  // namespace d2tpt
