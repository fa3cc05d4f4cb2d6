#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "trustalign/harness/manifest.hpp"
#include "trustalign/harness/toy_task.hpp"

namespace trustalign::harness {

enum class Stage { gen_data, train_base, train_reward, verify_bound, align, eval, report };

Stage stage_from_string(const std::string& name);
std::string to_string(Stage stage);
const std::vector<Stage>& all_stages();

/// Prompt sets and base images as written by gen-data.
void write_toy_data(const std::filesystem::path& path, const ToyData& data, std::size_t image_size);
ToyData read_toy_data(const std::filesystem::path& path);

/// File-based pipeline over one run directory. Each stage reads its inputs
/// from earlier stages' outputs; manifest.json is kept in the directory.
///
/// Layout:
///   data/toy_data.ckpt  data/prompts.csv
///   base/denoiser.ckpt  base/loss.csv  base/summary.json
///   reward/{annotations,heldout}.jsonl  reward/{annotations,heldout}_images.ckpt
///   reward/normalization.json  reward/reward_net.ckpt  reward/extractor_loss.csv  reward/summary.json
///   bound/coverage.csv  bound/error_histogram.csv  bound/summary.json
///   align/model.ckpt  align/training_log.csv  align/convergence.json  align/summary.json
///   eval/<scorer>.json  eval/best_of_s_<scorer>.csv  (clean_oracle, oracle_normalized, reward_net)
///   report.json
class Experiment {
 public:
  /// Fails if the directory already holds a manifest for a different config.
  Experiment(ToyTaskConfig config, std::filesystem::path run_dir);
  /// Re-opens a run from its manifest.
  static Experiment open(const std::filesystem::path& run_dir);

  const ToyTaskConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }
  const RunManifest& manifest() const { return manifest_; }

  /// Runs one stage. Failures are rethrown with the stage name and the last
  /// line of the stage log prepended, keeping their type.
  void run(Stage stage);
  void run_all();

 private:
  void gen_data();
  void train_base();
  void train_reward();
  void verify_bound();
  void align();
  void eval();
  void report();

  std::filesystem::path input(const std::string& relative) const;
  std::filesystem::path output(const std::string& relative);
  void log(const std::string& line);

  ToyTaskConfig config_;
  std::filesystem::path run_dir_;
  RunManifest manifest_;
  std::ofstream log_;
  std::string last_log_line_;
};

}  // namespace trustalign::harness
