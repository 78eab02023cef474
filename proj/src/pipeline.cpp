#include "d2tpt/pipeline.hpp"

#include <cmath>

#include "d2tpt/errors.hpp"

namespace d2tpt {

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kD2tpt: return "d2tpt";
    case Mode::kTptBaseline: return "tpt-baseline";
    case Mode::kZeroShot: return "zero-shot";
  }
  return "unknown";
}

const char* to_string(Aggregation aggregation) {
  switch (aggregation) {
    case Aggregation::kMeanSelected: return "mean-selected";
    case Aggregation::kOriginalView: return "original-view";
  }
  return "unknown";
}

Mode parse_mode(const std::string& text) {
  if (text == "d2tpt") return Mode::kD2tpt;
  if (text == "tpt-baseline") return Mode::kTptBaseline;
  if (text == "zero-shot") return Mode::kZeroShot;
  throw ConfigError("unknown mode '" + text + "'");
}

Aggregation parse_aggregation(const std::string& text) {
  if (text == "mean-selected") return Aggregation::kMeanSelected;
  if (text == "original-view") return Aggregation::kOriginalView;
  throw ConfigError("unknown prediction aggregation '" + text + "'");
}

void RunConfig::validate() const {
  auto fraction = [](double r, const char* name) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError(std::string(name) + " must be in (0, 1]");
  };
  fraction(rho, "rho");
  if (rho_kb) fraction(*rho_kb, "rho-kb");
  if (rho_loss) fraction(*rho_loss, "rho-loss");
  if (capacity < 1) throw ConfigError("capacity must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be > 0");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
  optim.validate();
}

std::pair<std::size_t, std::vector<std::size_t>> aggregate_prediction(const Mat& logits,
                                                                      double rho,
                                                                      Aggregation aggregation) {
  if (aggregation == Aggregation::kOriginalView) {
    return {argmax(logits.row(0).transpose()), {0}};
  }
  LogitBlock block = select_confident(logits, rho);
  Vec mean = Vec::Zero(logits.cols());
  for (std::size_t r : block.selected) {
    mean += softmax(logits.row(static_cast<Eigen::Index>(r)).transpose());
  }
  return {argmax(mean), std::move(block.selected)};
}

SampleOutcome process_sample(const SampleRecord& sample, KnowledgeBase& kb,
                             const TextPrototypes& protos, double logit_scale,
                             const RunConfig& config) {
  const Eigen::Index classes = protos.num_classes();
  const Eigen::Index dim = protos.dim();
  if (sample.views.cols() != dim || sample.views.rows() < 1) {
    throw ShapeMismatch("process_sample: view matrix does not match the prototypes");
  }
  if (sample.label >= static_cast<std::uint32_t>(classes)) {
    throw ShapeMismatch("process_sample: label " + std::to_string(sample.label) +
                        " out of range");
  }
  SampleOutcome out;
  out.label = sample.label;
  out.retrieval = Vec::Zero(classes);

  try {
    ObjectiveContext ctx{sample.views, protos, Vec::Zero(classes), logit_scale};
    PromptPair prompts = PromptPair::zeros(dim);
    Mat logits = compute_logits(adapt_features(protos, sample.views, prompts), logit_scale);

    out.baseline_prediction =
        aggregate_prediction(logits, config.loss_rho(), config.aggregation).first;
    out.baseline_correct = out.baseline_prediction == sample.label;
    if (config.mode == Mode::kZeroShot) {
      out.prediction = out.baseline_prediction;
      out.correct = out.baseline_correct;
      return out;
    }

    const bool full = config.mode == Mode::kD2tpt;
    if (full) {
      LogitBlock confident = select_confident(logits, config.kb_rho());
      out.kb_rows = confident.selected;
      out.pseudo = pseudo_label(confident);
      Vec query = l2_normalize(sample.views.row(0).transpose());
      out.kb_inserted = kb.update(query, out.pseudo->label, out.pseudo->min_entropy);

      if (config.lambda > 0.0) {
        RetrievalTables tables = build_tables(kb, static_cast<std::size_t>(classes));
        out.skipped_keys = tables.skipped_classes;
        ctx.retrieval = retrieval_logits(query, tables, config.lambda, config.gamma,
                                         static_cast<std::size_t>(classes));
        out.retrieval = ctx.retrieval;
      }
    }
    const double alpha = full ? config.alpha : 0.0;
    const double beta = full ? config.beta : 0.0;

    FrozenSelection frozen = freeze_selection(ctx, prompts, config.loss_rho());
    out.loss_rows = frozen.rows;
    out.losses = evaluate(ctx, prompts, frozen, alpha, beta);

    GradPair grads = grad_total(ctx, prompts, frozen, alpha, beta);
    AdamWState state = AdamWState::zeros(dim);
    adamw_step(prompts, grads, state, config.optim);
    out.loss_after_step = evaluate(ctx, prompts, frozen, alpha, beta).total;

    auto [prediction, rows] = aggregate_prediction(modulated_logits(ctx, prompts),
                                                   config.loss_rho(), config.aggregation);
    out.prediction = prediction;
    out.final_rows = std::move(rows);
    out.correct = prediction == sample.label;
  } catch (const Error& e) {
    out.prediction.reset();
    out.correct = false;
    out.error = e.what();
  }
  return out;
}

StreamRunner::StreamRunner(const BundleManifest& manifest, const Mat& text_gen,
                           const Mat& text_spe, RunConfig config)
    : config_(std::move(config)),
      logit_scale_(manifest.logit_scale),
      protos_(build_text_prototypes(text_gen, text_spe, manifest.class_names)),
      kb_(config_.capacity) {
  config_.validate();
}

const SampleOutcome& StreamRunner::consume(const SampleRecord& sample) {
  outcomes_.push_back(process_sample(sample, kb_, protos_, logit_scale_, config_));
  occupancy_.push_back(kb_.total_entries());
  return outcomes_.back();
}

AdaptationReport StreamRunner::finish() const {
  if (outcomes_.empty()) throw BundleCorrupt("stream contained no samples");
  AdaptationReport report;
  report.config = config_;
  report.num_samples = outcomes_.size();
  report.kb_occupancy = occupancy_;
  report.per_class.resize(static_cast<std::size_t>(protos_.num_classes()));
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    report.per_class[c].name = protos_.class_names[c];
  }

  std::size_t correct = 0;
  std::size_t baseline_correct = 0;
  std::size_t with_losses = 0;
  LossBreakdown sum;
  for (const auto& o : outcomes_) {
    auto& stats = report.per_class.at(o.label);
    ++stats.count;
    stats.correct += o.correct ? 1 : 0;
    stats.baseline_correct += o.baseline_correct ? 1 : 0;
    correct += o.correct ? 1 : 0;
    baseline_correct += o.baseline_correct ? 1 : 0;
    if (!o.error.empty()) ++report.aborted;
    if (o.losses) {
      ++with_losses;
      sum.ram += o.losses->ram;
      sum.en += o.losses->en;
      sum.md += o.losses->md;
      sum.total += o.losses->total;
      if (o.loss_after_step && *o.loss_after_step < o.losses->total) ++report.descent_steps;
    }
  }
  const auto n = static_cast<double>(outcomes_.size());
  report.accuracy = 100.0 * static_cast<double>(correct) / n;
  report.baseline_accuracy = 100.0 * static_cast<double>(baseline_correct) / n;
  if (with_losses > 0) {
    const auto k = static_cast<double>(with_losses);
    LossBreakdown mean{sum.ram / k, sum.en / k, sum.md / k, sum.total / k, 0.0, 0.0};
    const bool full = config_.mode == Mode::kD2tpt;
    mean.alpha = full ? config_.alpha : 0.0;
    mean.beta = full ? config_.beta : 0.0;
    report.mean_losses = mean;
  }
  if (config_.per_sample) report.samples = outcomes_;
  return report;
}

AdaptationReport run_stream(const BundleData& bundle, const RunConfig& config) {
  if (bundle.samples.empty()) throw BundleCorrupt("bundle has no samples");
  StreamRunner runner(bundle.manifest, bundle.text_gen, bundle.text_spe, config);
  for (const auto& s : bundle.samples) runner.consume(s);
  return runner.finish();
}

AdaptationReport run_stream(const std::filesystem::path& bundle_dir, const RunConfig& config) {
  BundleReader reader(bundle_dir);
  StreamRunner runner(reader.manifest(), reader.text_gen(), reader.text_spe(), config);
  while (auto sample = reader.next()) runner.consume(*sample);
  return runner.finish();
}

}  // namespace d2tpt
