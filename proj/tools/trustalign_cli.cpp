#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "trustalign/errors.hpp"
#include "trustalign/harness/experiment.hpp"

namespace {

using namespace trustalign;

harness::ToyTaskConfig resolve_config(const std::string& config_path, const std::filesystem::path& out) {
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    require(static_cast<bool>(in), "cannot read config '" + config_path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config '" + config_path + "': " + e.what());
    }
    return harness::ToyTaskConfig::from_json(j);
  }
  const auto manifest = out / "manifest.json";
  if (std::filesystem::exists(manifest)) {
    return harness::ToyTaskConfig::from_json(harness::RunManifest::read(manifest).config);
  }
  return {};
}

std::string describe(harness::Stage s) {
  switch (s) {
    case harness::Stage::gen_data: return "Generate base images and prompt sets";
    case harness::Stage::train_base: return "Train the base denoiser";
    case harness::Stage::train_reward: return "Annotate with the oracle, train the reward net and ridge head";
    case harness::Stage::verify_bound: return "Check reward-error bound coverage on held-out annotations";
    case harness::Stage::align: return "Fine-tune the base model against the reward";
    case harness::Stage::eval: return "WinRate and reward statistics of aligned vs base";
    case harness::Stage::report: return "Collect stage summaries into report.json";
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-weighted reward alignment of a toy inpainting diffusion model"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  app.add_option("--config", config_path, "JSON config (defaults to the run's manifest, then built-in defaults)");
  app.add_option("--seed", seed, "Run seed; overrides the config");
  app.add_option("--out", out, "Run directory")->capture_default_str();

  std::optional<harness::Stage> chosen;
  bool all = false;
  for (harness::Stage s : harness::all_stages()) {
    app.add_subcommand(harness::to_string(s), describe(s))->callback([&chosen, s] { chosen = s; });
  }
  app.add_subcommand("run", "All stages in order")->callback([&all] { all = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    auto cfg = resolve_config(config_path, out);
    if (seed) cfg.seed = *seed;
    harness::Experiment exp(cfg, out);
    if (all) {
      exp.run_all();
    } else {
      exp.run(*chosen);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
