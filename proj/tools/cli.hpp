#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dssl/config.hpp"
#include "dssl/data.hpp"
#include "dssl/eval.hpp"
#include "dssl/ssl.hpp"

namespace dssl::cli {

// Exit-code contract shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

int exit_code_for_current_exception();

// ---- pretraining ----

struct PretrainOutcome {
  std::string run_dir;
  int epochs_completed = 0;
  double final_loss = 0.0;
  std::optional<double> final_knn;
};

// Generates the synthetic dataset if configured and missing, trains with
// checkpoint-per-epoch, resumes from run_dir/last.ckpt when present.
// stop_after > 0 bounds the epochs processed by this invocation (the run can
// be completed later by calling again, exactly as after an interruption).
PretrainOutcome pretrain(const config::RunConfig& cfg,
                         const std::string& out_root, int stop_after = 0);

// Ensures cfg.dataset.root exists (generating the synthetic set if asked).
void ensure_dataset(const config::RunConfig& cfg);

// ---- thin command wrappers ----

void cmd_render(const std::string& image_path, const std::string& depth_path,
                double x, double y, double z, int num_planes,
                const std::string& out_path);

data::ViewBankResult cmd_viewbank(const config::RunConfig& cfg);

void cmd_corrupt(const std::string& image_path, const std::string& kind,
                 int severity, std::uint64_t seed, const std::string& out_path);

double cmd_knn(const std::string& checkpoint_path, const config::RunConfig& cfg);

eval::ProbeResult cmd_linear_probe(const std::string& checkpoint_path,
                                   const config::RunConfig& cfg);

// Runs a robustness evaluation for a checkpoint and writes report files
// (JSON, CSV, plain-text table) under out_dir.
eval::EvalReport cmd_report_eval(const std::string& checkpoint_path,
                                 const config::RunConfig& cfg,
                                 const std::string& out_dir);

// Renders a sweep (rows of pre-computed EvalReports) into a combined table,
// CSV and an accuracy-vs-parameter plot.
struct SweepCell {
  std::string label;
  double parameter = 0.0;
  std::string report_path;
};
void cmd_report_sweep(const std::string& sweep_json_path,
                      const std::string& out_dir);

// Full argv-style entry point used by main() and by tests.
int run_cli(std::vector<std::string> args);

}  // namespace dssl::cli
