#include "d2tpt/prompt_state.hpp"

#include <cmath>
#include <sstream>

#include "d2tpt/errors.hpp"

namespace d2tpt {
namespace {

std::string shape(const Mat& m) {
  std::ostringstream out;
  out << m.rows() << "x" << m.cols();
  return out.str();
}

}  // namespace

TextPrototypes build_text_prototypes(const Mat& gen, const Mat& spe,
                                     std::vector<std::string> class_names) {
  if (gen.rows() != spe.rows() || gen.cols() != spe.cols()) {
    throw ShapeMismatch("build_text_prototypes: " + shape(gen) + " vs " + shape(spe));
  }
  if (gen.rows() < 2) throw ShapeMismatch("build_text_prototypes: need at least 2 classes");
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(gen.rows())) {
    throw ShapeMismatch("build_text_prototypes: " + std::to_string(class_names.size()) +
                        " class names for " + std::to_string(gen.rows()) + " classes");
  }
  TextPrototypes out;
  out.protos = (gen + spe) * 0.5;
  for (Eigen::Index c = 0; c < out.protos.rows(); ++c) {
    if (out.protos.row(c).norm() <= kNormEpsilon) {
      throw DegenerateVector("build_text_prototypes: prototype " + std::to_string(c) +
                             " is degenerate");
    }
  }
  if (class_names.empty()) {
    for (Eigen::Index c = 0; c < gen.rows(); ++c) {
      class_names.push_back("class_" + std::to_string(c));
    }
  }
  out.class_names = std::move(class_names);
  return out;
}

AdaptedFeatures adapt_features(const TextPrototypes& protos, const Mat& views,
                               const PromptPair& prompts) {
  const Eigen::Index dim = protos.dim();
  if (views.cols() != dim || prompts.text.size() != dim || prompts.image.size() != dim) {
    std::ostringstream msg;
    msg << "adapt_features: text dim " << dim << ", views " << shape(views)
        << ", prompts " << prompts.text.size() << "/" << prompts.image.size();
    throw ShapeMismatch(msg.str());
  }
  AdaptedFeatures f;
  f.text_orig = protos.protos;
  f.image_orig = views;
  f.text_adapted = protos.protos.rowwise() + prompts.text.transpose();
  f.image_adapted = views.rowwise() + prompts.image.transpose();
  return f;
}

Mat compute_logits(const AdaptedFeatures& feats, double logit_scale, FeatureChoice choice) {
  if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) {
    throw ConfigError("compute_logits: logit_scale must be positive and finite");
  }
  const Mat& img = choice.adapted_image ? feats.image_adapted : feats.image_orig;
  const Mat& txt = choice.adapted_text ? feats.text_adapted : feats.text_orig;
  return logit_scale * cosine_matrix(img, txt);
}

}  // namespace d2tpt
