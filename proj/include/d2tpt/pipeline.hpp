#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "d2tpt/bundle_io.hpp"
#include "d2tpt/knowledge_base.hpp"
#include "d2tpt/objectives.hpp"
#include "d2tpt/optimizer.hpp"
#include "d2tpt/prompt_state.hpp"
#include "d2tpt/selection.hpp"

namespace d2tpt {

enum class Mode {
  kD2tpt,        // retrieval modulation + all three loss terms
  kTptBaseline,  // entropy of the confident-view average only, no knowledge base
  kZeroShot,     // no adaptation at all
};

// How the final class is read off the (modulated) logits.
enum class Aggregation {
  kMeanSelected,  // argmax of the mean softmax over the confident rows
  kOriginalView,  // argmax of row 0
};

const char* to_string(Mode mode);
const char* to_string(Aggregation aggregation);
Mode parse_mode(const std::string& text);
Aggregation parse_aggregation(const std::string& text);

struct RunConfig {
  Mode mode = Mode::kD2tpt;
  double rho = 0.1;
  // Per-use overrides of rho: knowledge-base insertion and loss selection.
  std::optional<double> rho_kb;
  std::optional<double> rho_loss;
  std::size_t capacity = 3;
  double lambda = 1.0;
  double gamma = 5.0;
  double alpha = 0.1;
  double beta = 0.001;
  OptimHypers optim;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::kMeanSelected;
  bool per_sample = false;

  double kb_rho() const { return rho_kb.value_or(rho); }
  double loss_rho() const { return rho_loss.value_or(rho); }
  void validate() const;
};

struct SampleOutcome {
  std::uint32_t label = 0;
  std::optional<std::size_t> prediction;  // nullopt when the sample aborted
  std::size_t baseline_prediction = 0;
  bool correct = false;
  bool baseline_correct = false;
  std::optional<LossBreakdown> losses;    // at the initial (zero) prompts
  std::optional<double> loss_after_step;  // same frozen selection, updated prompts
  bool kb_inserted = false;
  std::optional<PseudoLabel> pseudo;
  std::vector<std::size_t> kb_rows;     // confident rows of L, used for insertion
  std::vector<std::size_t> loss_rows;   // confident rows of the modulated logits
  std::vector<std::size_t> final_rows;  // re-selected rows after the update
  Vec retrieval;                        // retrieval logits used for this sample
  std::vector<std::size_t> skipped_keys;
  std::string error;
};

// Prediction from a logit block under the given aggregation. Returns the
// class and the rows that took part.
std::pair<std::size_t, std::vector<std::size_t>> aggregate_prediction(const Mat& logits,
                                                                      double rho,
                                                                      Aggregation aggregation);

// Runs one test sample end to end: zero prompts, logits, confident selection
// and pseudo label, register update with the original view, retrieval,
// losses under a frozen selection, one AdamW step, and the prediction from
// the re-run forward pass. The knowledge base is only touched in D2TPT mode.
// Numeric errors after the register update abort the sample (recorded in
// `error`) and leave the knowledge base as updated.
SampleOutcome process_sample(const SampleRecord& sample, KnowledgeBase& kb,
                             const TextPrototypes& protos, double logit_scale,
                             const RunConfig& config);

struct ClassStats {
  std::string name;
  std::size_t count = 0;
  std::size_t correct = 0;
  std::size_t baseline_correct = 0;
};

struct AdaptationReport {
  RunConfig config;
  std::size_t num_samples = 0;
  double accuracy = 0.0;           // percent
  double baseline_accuracy = 0.0;  // percent, zero-shot in the same pass
  std::vector<ClassStats> per_class;
  std::optional<LossBreakdown> mean_losses;
  std::size_t aborted = 0;
  std::size_t descent_steps = 0;  // samples whose frozen total loss decreased
  std::vector<std::size_t> kb_occupancy;  // total entries after each sample
  std::vector<SampleOutcome> samples;     // filled when config.per_sample
};

// Sequential stream over samples with a persistent knowledge base and
// per-sample prompt reset.
class StreamRunner {
 public:
  StreamRunner(const BundleManifest& manifest, const Mat& text_gen, const Mat& text_spe,
               RunConfig config);

  const SampleOutcome& consume(const SampleRecord& sample);
  AdaptationReport finish() const;
  const KnowledgeBase& knowledge_base() const { return kb_; }
  const TextPrototypes& prototypes() const { return protos_; }

 private:
  RunConfig config_;
  double logit_scale_;
  TextPrototypes protos_;
  KnowledgeBase kb_;
  std::vector<SampleOutcome> outcomes_;
  std::vector<std::size_t> occupancy_;
};

AdaptationReport run_stream(const BundleData& bundle, const RunConfig& config);

// Streams the bundle from disk. Throws BundleCorrupt before any report is
// produced if the bundle is malformed.
AdaptationReport run_stream(const std::filesystem::path& bundle_dir, const RunConfig& config);

}  // namespace d2tpt
