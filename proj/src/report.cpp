#include "d2tpt/report.hpp"

#include <fstream>

#include "d2tpt/errors.hpp"

namespace d2tpt {
namespace {

nlohmann::json losses_to_json(const LossBreakdown& l) {
  return {{"ram", l.ram}, {"en", l.en}, {"md", l.md}, {"total", l.total}};
}

nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (double x : v) out.push_back(x);
  return out;
}

nlohmann::json outcome_to_json(const SampleOutcome& o) {
  nlohmann::json j = {
      {"label", o.label},
      {"prediction", o.prediction ? nlohmann::json(*o.prediction) : nlohmann::json(nullptr)},
      {"baseline_prediction", o.baseline_prediction},
      {"correct", o.correct},
      {"kb_inserted", o.kb_inserted},
      {"kb_rows", o.kb_rows},
      {"loss_rows", o.loss_rows},
      {"final_rows", o.final_rows},
      {"retrieval", vec_to_json(o.retrieval)},
  };
  j["losses"] = o.losses ? losses_to_json(*o.losses) : nlohmann::json(nullptr);
  j["loss_after_step"] =
      o.loss_after_step ? nlohmann::json(*o.loss_after_step) : nlohmann::json(nullptr);
  if (o.pseudo) {
    j["pseudo_label"] = {{"label", o.pseudo->label},
                         {"min_entropy", o.pseudo->min_entropy},
                         {"support", o.pseudo->support}};
  } else {
    j["pseudo_label"] = nullptr;
  }
  if (!o.skipped_keys.empty()) j["skipped_keys"] = o.skipped_keys;
  if (!o.error.empty()) j["error"] = o.error;
  return j;
}

}  // namespace

nlohmann::json config_to_json(const RunConfig& c) {
  return {
      {"mode", to_string(c.mode)},
      {"rho", c.rho},
      {"rho_kb", c.kb_rho()},
      {"rho_loss", c.loss_rho()},
      {"capacity", c.capacity},
      {"lambda", c.lambda},
      {"gamma", c.gamma},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"lr", c.optim.lr},
      {"beta1", c.optim.beta1},
      {"beta2", c.optim.beta2},
      {"eps", c.optim.eps},
      {"weight_decay", c.optim.weight_decay},
      {"seed", c.seed},
      {"prediction", to_string(c.aggregation)},
  };
}

nlohmann::json report_to_json(const AdaptationReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    auto pct = [&](std::size_t k) {
      return s.count == 0 ? nlohmann::json(nullptr)
                          : nlohmann::json(100.0 * static_cast<double>(k) /
                                           static_cast<double>(s.count));
    };
    per_class.push_back({{"class_id", c},
                         {"name", s.name},
                         {"count", s.count},
                         {"accuracy", pct(s.correct)},
                         {"baseline_accuracy", pct(s.baseline_correct)}});
  }
  nlohmann::json j = {
      {"accuracy", r.accuracy},
      {"baseline_accuracy", r.baseline_accuracy},
      {"num_samples", r.num_samples},
      {"per_class", per_class},
      {"config_echo", config_to_json(r.config)},
      {"seed", r.config.seed},
      {"aborted_samples", r.aborted},
      {"descent_steps", r.descent_steps},
      {"kb_occupancy", r.kb_occupancy},
  };
  j["mean_losses"] = r.mean_losses ? losses_to_json(*r.mean_losses) : nlohmann::json(nullptr);
  if (r.config.per_sample) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& o : r.samples) samples.push_back(outcome_to_json(o));
    j["samples"] = samples;
  }
  return j;
}

void write_report(const AdaptationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << report_to_json(report).dump(2) << "\n";
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace d2tpt
