#include <cmath>
#include <string>

#include "d2tpt/bundle_io.hpp"
#include "d2tpt/errors.hpp"
#include "d2tpt/rng.hpp"

namespace d2tpt {
namespace {

// Class anchors share a common direction with this weight (on the squared
// scale), so like real text embeddings they sit close together.
constexpr double kAnchorCommon = 0.8;
// Norm scale of the perturbation separating each text embedding from its
// class anchor.
constexpr double kTextJitter = 0.3;
constexpr double kLogitScale = 100.0;

}  // namespace

BundleData synth_fixture(const SynthParams& p) {
  if (p.classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (p.dim < 2) throw ConfigError("synth: dim must be >= 2");
  if (p.views < 1) throw ConfigError("synth: views must be >= 1");
  if (p.samples < 1) throw ConfigError("synth: samples must be >= 1");
  if (!(p.shift >= 0.0) || !(p.noise >= 0.0)) throw ConfigError("synth: shift and noise must be >= 0");

  const auto classes = static_cast<Eigen::Index>(p.classes);
  const auto dim = static_cast<Eigen::Index>(p.dim);
  Gaussian rng(p.seed);
  const double unit_sd = 1.0 / std::sqrt(static_cast<double>(dim));

  // anchor_c = normalize(sqrt(w) * common + sqrt(1 - w) * u_c)
  const Vec common = rng.unit(dim);
  Mat anchors(classes, dim);
  Mat bias(classes, dim);
  for (Eigen::Index c = 0; c < classes; ++c) {
    anchors.row(c) = l2_normalize(std::sqrt(kAnchorCommon) * common +
                                  std::sqrt(1.0 - kAnchorCommon) * rng.unit(dim))
                         .transpose();
  }
  for (Eigen::Index c = 0; c < classes; ++c) bias.row(c) = rng.unit(dim).transpose();

  BundleData data;
  auto& m = data.manifest;
  m.num_samples = p.samples;
  m.num_views = p.views;
  m.num_classes = p.classes;
  m.dim = p.dim;
  m.logit_scale = kLogitScale;
  for (std::uint32_t c = 0; c < p.classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
  m.provenance = "synthetic fixture seed=" + std::to_string(p.seed) +
                 " shift=" + std::to_string(p.shift) + " noise=" + std::to_string(p.noise);

  data.text_gen.resize(classes, dim);
  data.text_spe.resize(classes, dim);
  for (Eigen::Index c = 0; c < classes; ++c) {
    Vec a = anchors.row(c).transpose();
    data.text_gen.row(c) = l2_normalize(a + kTextJitter * rng.normal(dim, unit_sd)).transpose();
    data.text_spe.row(c) = l2_normalize(a + kTextJitter * rng.normal(dim, unit_sd)).transpose();
  }

  data.samples.reserve(p.samples);
  for (std::uint32_t s = 0; s < p.samples; ++s) {
    SampleRecord record;
    record.label = s % p.classes;
    const auto c = static_cast<Eigen::Index>(record.label);
    Vec center = anchors.row(c).transpose() + p.shift * bias.row(c).transpose();
    // View noise is N(0, I): unit variance per coordinate.
    record.views.resize(static_cast<Eigen::Index>(p.views), dim);
    for (Eigen::Index v = 0; v < record.views.rows(); ++v) {
      record.views.row(v) = l2_normalize(center + p.noise * rng.normal(dim)).transpose();
    }
    data.samples.push_back(std::move(record));
  }
  return data;
}

}  // namespace d2tpt
