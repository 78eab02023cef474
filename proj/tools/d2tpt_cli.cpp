#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "d2tpt/bundle_io.hpp"
#include "d2tpt/errors.hpp"
#include "d2tpt/gradcheck.hpp"
#include "d2tpt/knowledge_base.hpp"
#include "d2tpt/pipeline.hpp"
#include "d2tpt/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct RunArgs {
  std::filesystem::path bundle;
  std::filesystem::path report;
  std::filesystem::path kb_snapshot;
  std::string mode = "d2tpt";
  std::string predict = "mean-selected";
  d2tpt::RunConfig config;
  std::optional<double> rho_kb;
  std::optional<double> rho_loss;
};

int cmd_run(RunArgs& a) {
  d2tpt::RunConfig config = a.config;
  config.mode = d2tpt::parse_mode(a.mode);
  config.aggregation = d2tpt::parse_aggregation(a.predict);
  config.rho_kb = a.rho_kb;
  config.rho_loss = a.rho_loss;
  config.validate();

  d2tpt::BundleReader reader(a.bundle);
  d2tpt::StreamRunner runner(reader.manifest(), reader.text_gen(), reader.text_spe(), config);
  while (auto sample = reader.next()) runner.consume(*sample);
  d2tpt::AdaptationReport report = runner.finish();

  if (!a.report.empty()) d2tpt::write_report(report, a.report);
  if (!a.kb_snapshot.empty()) {
    auto json_path = a.kb_snapshot;
    auto blob_path = a.kb_snapshot;
    json_path += ".json";
    blob_path += ".f32";
    d2tpt::write_snapshot(runner.knowledge_base(), json_path, blob_path);
  }

  std::cout << std::fixed << std::setprecision(2) << d2tpt::to_string(config.mode)
            << ": accuracy " << report.accuracy << "% (zero-shot " << report.baseline_accuracy
            << "%) over " << report.num_samples << " samples";
  if (report.aborted > 0) std::cout << ", " << report.aborted << " aborted";
  std::cout << "\n";
  return kExitOk;
}

int cmd_synth(const std::filesystem::path& out, const d2tpt::SynthParams& params) {
  d2tpt::write_bundle(d2tpt::synth_fixture(params), out);
  std::cout << "wrote " << params.samples << " samples (C=" << params.classes
            << ", D=" << params.dim << ", N=" << params.views << ") to " << out.string()
            << "\n";
  return kExitOk;
}

int cmd_gradcheck(const d2tpt::GradcheckOptions& options) {
  d2tpt::GradcheckResult r = d2tpt::run_gradcheck(options);
  std::cout << std::scientific << std::setprecision(3) << "max relative error "
            << r.max_relative_error << " (trial " << r.worst_trial << " of " << options.trials
            << "): " << (r.passed ? "ok" : "FAILED") << "\n";
  std::cerr << std::fixed << std::setprecision(3) << "gradcheck took " << r.seconds << " s\n";
  return r.passed ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time prompt adaptation over pre-extracted embeddings"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Adapt over a bundle and write a report");
  run_cmd->add_option("--bundle", run.bundle, "Bundle directory")->required();
  run_cmd->add_option("--report", run.report, "Report JSON path");
  run_cmd->add_option("--kb-snapshot", run.kb_snapshot,
                      "Write the final knowledge base to <path>.json and <path>.f32");
  run_cmd->add_option("--mode", run.mode, "d2tpt | tpt-baseline | zero-shot")
      ->check(CLI::IsMember({"d2tpt", "tpt-baseline", "zero-shot"}))
      ->capture_default_str();
  run_cmd->add_option("--predict", run.predict, "mean-selected | original-view")
      ->check(CLI::IsMember({"mean-selected", "original-view"}))
      ->capture_default_str();
  auto& c = run.config;
  run_cmd->add_option("--rho", c.rho, "Confident fraction of views")->capture_default_str();
  run_cmd->add_option("--rho-kb", run.rho_kb, "Fraction used for register insertion");
  run_cmd->add_option("--rho-loss", run.rho_loss, "Fraction used for the losses");
  run_cmd->add_option("--capacity", c.capacity, "Register capacity per class")
      ->capture_default_str();
  run_cmd->add_option("--lambda", c.lambda, "Retrieval weight")->capture_default_str();
  run_cmd->add_option("--gamma", c.gamma, "Retrieval sharpness")->capture_default_str();
  run_cmd->add_option("--alpha", c.alpha, "Ensemble loss weight")->capture_default_str();
  run_cmd->add_option("--beta", c.beta, "Distillation loss weight")->capture_default_str();
  run_cmd->add_option("--lr", c.optim.lr, "AdamW learning rate")->capture_default_str();
  run_cmd->add_option("--beta1", c.optim.beta1)->capture_default_str();
  run_cmd->add_option("--beta2", c.optim.beta2)->capture_default_str();
  run_cmd->add_option("--eps", c.optim.eps)->capture_default_str();
  run_cmd->add_option("--weight-decay", c.optim.weight_decay)->capture_default_str();
  run_cmd->add_option("--seed", c.seed, "Recorded in the report")->capture_default_str();
  run_cmd->add_flag("--per-sample", c.per_sample, "Include per-sample outcomes in the report");

  std::filesystem::path synth_out;
  d2tpt::SynthParams synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic fixture bundle");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--classes", synth.classes)
      ->check(CLI::Range(2u, 1u << 20))
      ->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim)->check(CLI::Range(2u, 1u << 20))->capture_default_str();
  synth_cmd->add_option("--views", synth.views)
      ->check(CLI::Range(1u, 1u << 20))
      ->capture_default_str();
  synth_cmd->add_option("--samples", synth.samples)
      ->check(CLI::Range(1u, 1u << 30))
      ->capture_default_str();
  synth_cmd->add_option("--shift", synth.shift)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise)->check(CLI::NonNegativeNumber)->capture_default_str();

  d2tpt::GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  grad_cmd->add_option("--trials", grad.trials)->check(CLI::PositiveNumber)->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed)->capture_default_str();
  grad_cmd->add_option("--perturb-grad", grad.perturb,
                       "Scale the analytic gradient by (1 + x) before comparing")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*synth_cmd) return cmd_synth(synth_out, synth);
    if (*grad_cmd) return cmd_gradcheck(grad);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
