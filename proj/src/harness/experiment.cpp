#include "trustalign/harness/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "trustalign/alignment/trust.hpp"
#include "trustalign/errors.hpp"
#include "trustalign/harness/metrics.hpp"
#include "trustalign/numerics/checkpoint.hpp"
#include "trustalign/reward/coverage.hpp"

namespace trustalign::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kAnnotationSeed = 101;
constexpr std::uint64_t kHeldoutSeed = 102;
constexpr std::uint64_t kEvalSeed = 103;
constexpr std::size_t kHistogramBins = 10;

const std::vector<std::pair<Stage, std::string>>& stage_names() {
  static const std::vector<std::pair<Stage, std::string>> names = {
      {Stage::gen_data, "gen-data"},         {Stage::train_base, "train-base"}, {Stage::train_reward, "train-reward"},
      {Stage::verify_bound, "verify-bound"}, {Stage::align, "align"},           {Stage::eval, "eval"},
      {Stage::report, "report"}};
  return names;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'");
  out.precision(17);
  return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("'" + path.string() + "': " + e.what());
  }
}

const std::vector<std::pair<std::string, std::vector<dataset::Prompt> ToyData::*>>& prompt_sets() {
  static const std::vector<std::pair<std::string, std::vector<dataset::Prompt> ToyData::*>> sets = {
      {"annotation", &ToyData::annotation_prompts},
      {"heldout", &ToyData::heldout_prompts},
      {"align", &ToyData::align_prompts},
      {"eval", &ToyData::eval_prompts}};
  return sets;
}

Tensor stack(const std::vector<const Tensor*>& rows, std::size_t width) {
  Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r]->size() == width, "toy data rows differ in size");
    std::copy(rows[r]->data().begin(), rows[r]->data().end(), out.data().begin() + static_cast<long>(r * width));
  }
  return out;
}

Tensor row(const Tensor& t, std::size_t r, std::size_t n) {
  const std::size_t d = t.cols();
  Tensor out({n, n});
  std::copy(t.data().begin() + static_cast<long>(r * d), t.data().begin() + static_cast<long>((r + 1) * d),
            out.data().begin());
  return out;
}

void write_histogram_csv(const fs::path& path, const Histogram& h) {
  auto out = open_out(path);
  out << "bin_low,bin_high,count,percent\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << ',' << h.percentages[i] << '\n';
  }
}

json eval_summary(const EvalReport& r) {
  json wr = json::object();
  for (const auto& [s, v] : r.win_rate) wr["S=" + std::to_string(s)] = v;
  return {{"scorer", r.scorer},
          {"win_rate", wr},
          {"candidate_mean", r.candidate.mean},
          {"baseline_mean", r.baseline.mean},
          {"lift", r.candidate.mean - r.baseline.mean},
          {"candidate_variance", r.candidate.variance},
          {"baseline_variance", r.baseline.variance}};
}

}  // namespace

Stage stage_from_string(const std::string& name) {
  for (const auto& [s, n] : stage_names()) {
    if (n == name) return s;
  }
  throw ValidationError("unknown stage '" + name + "'");
}

std::string to_string(Stage stage) {
  for (const auto& [s, n] : stage_names()) {
    if (s == stage) return n;
  }
  return "?";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::gen_data, Stage::train_base, Stage::train_reward,
                                            Stage::verify_bound, Stage::align, Stage::eval, Stage::report};
  return stages;
}

void write_toy_data(const fs::path& path, const ToyData& data, std::size_t image_size) {
  const std::size_t d = image_size * image_size;
  numerics::Checkpoint ck;
  ck.meta["kind"] = "toy_data";
  ck.meta["image_size"] = image_size;
  std::vector<const Tensor*> base;
  for (const auto& t : data.base_images) base.push_back(&t);
  ck.tensors.add("base", stack(base, d), false);
  for (const auto& [name, member] : prompt_sets()) {
    const auto& prompts = data.*member;
    std::vector<const Tensor*> originals;
    std::vector<Tensor> masks;
    json ids = json::array(), tags = json::array();
    for (const auto& p : prompts) {
      originals.push_back(&p.original);
      Tensor m({d});
      for (std::size_t i = 0; i < d; ++i) m[i] = p.masked.mask.known(i) ? 1.0 : 0.0;
      masks.push_back(std::move(m));
      ids.push_back(p.id);
      tags.push_back(p.split_tag);
    }
    std::vector<const Tensor*> mask_rows;
    for (const auto& m : masks) mask_rows.push_back(&m);
    ck.tensors.add(name + "/originals", stack(originals, d), false);
    ck.tensors.add(name + "/masks", stack(mask_rows, d), false);
    ck.meta["sets"][name] = {{"ids", ids}, {"split_tags", tags}};
  }
  numerics::write_checkpoint(path, ck);
}

ToyData read_toy_data(const fs::path& path) {
  const auto ck = numerics::read_checkpoint(path);
  require(ck.meta.value("kind", "") == "toy_data", "'" + path.string() + "' does not hold toy data");
  const std::size_t n = ck.meta.at("image_size").get<std::size_t>();
  ToyData data;
  const Tensor& base = ck.tensors.get("base");
  for (std::size_t r = 0; r < base.rows(); ++r) data.base_images.push_back(row(base, r, n));
  for (const auto& [name, member] : prompt_sets()) {
    const Tensor& originals = ck.tensors.get(name + "/originals");
    const Tensor& masks = ck.tensors.get(name + "/masks");
    const auto& meta = ck.meta.at("sets").at(name);
    for (std::size_t r = 0; r < originals.rows(); ++r) {
      diffusion::Mask mask(n, n);
      for (std::size_t i = 0; i < n * n; ++i) mask.set_known(i, masks[r * n * n + i] != 0.0);
      Tensor original = row(originals, r, n);
      auto masked = diffusion::make_prompt(original, mask);
      (data.*member).push_back({meta.at("ids").at(r).get<std::int64_t>(), std::move(original), std::move(masked),
                                meta.at("split_tags").at(r).get<std::string>()});
    }
  }
  return data;
}

Experiment::Experiment(ToyTaskConfig config, fs::path run_dir)
    : config_(std::move(config)), run_dir_(std::move(run_dir)), manifest_(RunManifest::for_config(config_)) {
  config_.validate();
  fs::create_directories(run_dir_);
  const fs::path path = run_dir_ / "manifest.json";
  if (fs::exists(path)) {
    const RunManifest existing = RunManifest::read(path);
    require(existing.input_hash == manifest_.input_hash,
            "run directory '" + run_dir_.string() + "' holds a run with a different config (input hash " +
                existing.input_hash + ")");
    manifest_.artifacts = existing.artifacts;
  }
  manifest_.write(path);
}

Experiment Experiment::open(const fs::path& run_dir) {
  const fs::path path = run_dir / "manifest.json";
  require(fs::exists(path), "no manifest at '" + path.string() + "'");
  return Experiment(ToyTaskConfig::from_json(RunManifest::read(path).config), run_dir);
}

fs::path Experiment::input(const std::string& relative) const {
  const fs::path path = run_dir_ / relative;
  if (!fs::exists(path)) throw ValidationError("missing upstream artifact '" + path.string() + "'");
  return path;
}

fs::path Experiment::output(const std::string& relative) {
  const fs::path path = run_dir_ / relative;
  fs::create_directories(path.parent_path());
  manifest_.artifacts[relative] = "";
  return path;
}

void Experiment::log(const std::string& line) {
  last_log_line_ = line;
  log_ << line << '\n';
  log_.flush();
}

void Experiment::run(Stage stage) {
  const std::string name = to_string(stage);
  fs::create_directories(run_dir_ / "logs");
  log_ = open_out(run_dir_ / "logs" / (name + ".log"));
  last_log_line_.clear();
  auto context = [&](const char* what) {
    std::string msg = "stage '" + name + "' failed: " + what;
    if (!last_log_line_.empty()) msg += " (last log line: " + last_log_line_ + ")";
    return msg;
  };
  try {
    log("start " + name);
    switch (stage) {
      case Stage::gen_data: gen_data(); break;
      case Stage::train_base: train_base(); break;
      case Stage::train_reward: train_reward(); break;
      case Stage::verify_bound: verify_bound(); break;
      case Stage::align: align(); break;
      case Stage::eval: eval(); break;
      case Stage::report: report(); break;
    }
    for (auto& [relative, hash] : manifest_.artifacts) {
      if (fs::exists(run_dir_ / relative)) hash = file_sha1(run_dir_ / relative);
    }
    manifest_.write(run_dir_ / "manifest.json");
    log("done " + name);
  } catch (const NumericError& e) {
    throw NumericError(context(e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(context(e.what()));
  } catch (const std::exception& e) {
    throw std::runtime_error(context(e.what()));
  }
}

void Experiment::run_all() {
  for (Stage s : all_stages()) run(s);
}

void Experiment::gen_data() {
  const ToyData data = make_toy_data(config_);
  write_toy_data(output("data/toy_data.ckpt"), data, config_.image_size);
  auto out = open_out(output("data/prompts.csv"));
  out << "set,prompt_id,split_tag,unknown_pixels\n";
  for (const auto& [name, member] : prompt_sets()) {
    for (const auto& p : data.*member) {
      out << name << ',' << p.id << ',' << p.split_tag << ',' << p.masked.mask.unknown_count() << '\n';
    }
  }
  log("base images " + std::to_string(data.base_images.size()) + ", prompts " +
      std::to_string(data.annotation_prompts.size() + data.heldout_prompts.size() + data.align_prompts.size() +
                     data.eval_prompts.size()));
}

void Experiment::train_base() {
  const ToyData data = read_toy_data(input("data/toy_data.ckpt"));
  const ToyTaskConfig cfg = config_.seeded();
  auto model = make_denoiser(cfg);
  log("training denoiser for " + std::to_string(cfg.train_base.iterations) + " iterations");
  const auto rep = diffusion::train_base(model, data.base_images, cfg.schedule(), cfg.train_base);
  numerics::write_checkpoint(output("base/denoiser.ckpt"), model.to_checkpoint());
  auto out = open_out(output("base/loss.csv"));
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < rep.losses.size(); ++i) out << i + 1 << ',' << rep.losses[i] << '\n';
  write_json(output("base/summary.json"), {{"initial_heldout_mse", rep.initial_heldout_mse},
                                           {"final_heldout_mse", rep.final_heldout_mse},
                                           {"iterations", rep.losses.size()}});
  std::ostringstream line;
  line.precision(6);
  line << "held-out mse " << rep.initial_heldout_mse << " -> " << rep.final_heldout_mse;
  log(line.str());
}

void Experiment::train_reward() {
  const ToyData data = read_toy_data(input("data/toy_data.ckpt"));
  const auto model = diffusion::Denoiser::from_checkpoint(numerics::read_checkpoint(input("base/denoiser.ckpt")));
  const ToyTaskConfig cfg = config_.seeded();
  const auto schedule = cfg.schedule();

  dataset::AnnotationOptions opt;
  opt.noise_std = cfg.annotation_noise;
  opt.mode = cfg.norm_mode;
  opt.seed = stage_seed(cfg.seed, kAnnotationSeed);
  log("annotating " + std::to_string(data.annotation_prompts.size()) + " prompts");
  const auto train = dataset::make_annotation_set(model, data.annotation_prompts, schedule, opt);
  opt.seed = stage_seed(cfg.seed, kHeldoutSeed);
  opt.table = train.table;
  const auto heldout = dataset::make_annotation_set(model, data.heldout_prompts, schedule, opt);

  dataset::write_jsonl(output("reward/annotations.jsonl"), train.records);
  dataset::write_record_images(output("reward/annotations_images.ckpt"), train.records);
  dataset::write_jsonl(output("reward/heldout.jsonl"), heldout.records);
  dataset::write_record_images(output("reward/heldout_images.ckpt"), heldout.records);
  write_json(output("reward/normalization.json"),
             {{"mode", dataset::to_string(cfg.norm_mode)}, {"table", train.table.to_json()}});

  log("training " + reward::to_string(cfg.reward.mode) + " reward net");
  reward::ExtractorReport rep;
  const auto net = reward::train_extractor(train.records, cfg.reward, &rep);
  numerics::write_checkpoint(output("reward/reward_net.ckpt"), net.to_checkpoint());
  auto out = open_out(output("reward/extractor_loss.csv"));
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < rep.losses.size(); ++i) out << i + 1 << ',' << rep.losses[i] << '\n';

  const auto ranking = reward::heldout_ranking(net, heldout.records, train.table, cfg.norm_mode);
  write_json(output("reward/summary.json"),
             {{"mode", reward::to_string(cfg.reward.mode)},
              {"fix_rate", cfg.reward.fix_rate},
              {"frozen_layers", rep.frozen_layers},
              {"records", train.records.size()},
              {"heldout_records", heldout.records.size()},
              {"below_scale_records", dataset::count_below_scale(train.records)},
              {"heldout_ranking_native", ranking.native},
              {"heldout_ranking_ridge", ranking.ridge},
              {"b", net.bound().b},
              {"delta", net.bound().delta},
              {"psi_norm", net.bound().psi_norm},
              {"c_bound", net.bound().c_bound}});
  std::ostringstream line;
  line.precision(4);
  line << "held-out ranking native " << ranking.native << " ridge " << ranking.ridge;
  log(line.str());
}

namespace {

reward::RewardNet load_net(const fs::path& path) { return reward::RewardNet::from_checkpoint(numerics::read_checkpoint(path)); }

std::vector<dataset::AnnotationRecord> load_records(const fs::path& jsonl, const fs::path& images) {
  auto records = dataset::read_jsonl(jsonl);
  dataset::read_record_images(images, records);
  return records;
}

dataset::NormalizationTable load_table(const fs::path& path) {
  return dataset::NormalizationTable::from_json(read_json(path).at("table"));
}

}  // namespace

void Experiment::verify_bound() {
  const auto net = load_net(input("reward/reward_net.ckpt"));
  const auto heldout = load_records(input("reward/heldout.jsonl"), input("reward/heldout_images.ckpt"));
  const auto table = load_table(input("reward/normalization.json"));
  const auto cov = reward::verify_bound(net, heldout, table, config_.norm_mode);
  reward::write_coverage_csv(output("bound/coverage.csv"), cov);

  std::vector<double> predicted, truth;
  for (const auto& r : heldout) {
    predicted.push_back(net.reward(r.image, r.mask));
    truth.push_back(dataset::normalize_score(r.oracle_clean, table, r.split_tag, config_.norm_mode));
  }
  write_histogram_csv(output("bound/error_histogram.csv"), error_histogram(predicted, truth, kHistogramBins));
  write_json(output("bound/summary.json"), {{"coverage", cov.coverage},
                                            {"c_bound", cov.c_bound},
                                            {"norm_mode", reward::to_string(cov.mode)},
                                            {"samples", cov.rows.size()}});
  std::ostringstream line;
  line.precision(4);
  line << "coverage " << cov.coverage << " (" << reward::to_string(cov.mode) << " norm)";
  log(line.str());
}

void Experiment::align() {
  const ToyData data = read_toy_data(input("data/toy_data.ckpt"));
  const auto base = diffusion::Denoiser::from_checkpoint(numerics::read_checkpoint(input("base/denoiser.ckpt")));
  const auto net = load_net(input("reward/reward_net.ckpt"));
  const auto table = load_table(input("reward/normalization.json"));
  const ToyTaskConfig cfg = config_.seeded();
  auto acfg = cfg.align;

  if (cfg.target_mean_gamma) {
    require(acfg.trust.form == alignment::GammaForm::exp, "target_mean_gamma needs the exp trust form");
    const auto records = load_records(input("reward/annotations.jsonl"), input("reward/annotations_images.ckpt"));
    std::vector<double> fs_values;
    for (const auto& r : records) fs_values.push_back(net.confidence(r.image, r.mask));
    acfg.trust.k = alignment::calibrate_exp_k(fs_values, acfg.trust.b, *cfg.target_mean_gamma);
    log("calibrated k = " + std::to_string(acfg.trust.k));
  }

  const alignment::RewardFn scorer = cfg.align_reward == AlignReward::oracle
                                         ? oracle_reward(net, table, cfg.norm_mode)
                                         : alignment::reward_net_scorer(net);
  log("aligning for up to " + std::to_string(acfg.max_iterations) + " iterations on the " +
      to_string(cfg.align_reward) + " reward");
  const auto result = alignment::align(base, scorer, data.align_prompts, cfg.schedule(), acfg);
  numerics::write_checkpoint(output("align/model.ckpt"), result.model.to_checkpoint());
  alignment::write_training_log(output("align/training_log.csv"), result.log);
  write_json(output("align/convergence.json"), alignment::convergence_summary(result, acfg));
  write_json(output("align/summary.json"), {{"align_reward", to_string(cfg.align_reward)},
                                            {"trust", acfg.trust.to_json()},
                                            {"iterations_applied", result.log.size()},
                                            {"aborted", result.aborted},
                                            {"abort_reason", result.abort_reason},
                                            {"final_reward", result.final_reward}});
  if (result.aborted) log("aborted: " + result.abort_reason);
  log("applied " + std::to_string(result.log.size()) + " steps");
}

void Experiment::eval() {
  const ToyData data = read_toy_data(input("data/toy_data.ckpt"));
  const auto base = diffusion::Denoiser::from_checkpoint(numerics::read_checkpoint(input("base/denoiser.ckpt")));
  const auto aligned = diffusion::Denoiser::from_checkpoint(numerics::read_checkpoint(input("align/model.ckpt")));
  const auto net = load_net(input("reward/reward_net.ckpt"));
  const auto table = load_table(input("reward/normalization.json"));
  const auto mode = config_.norm_mode;

  const Scorer oracle = clean_oracle_scorer();
  const Scorer normalized{"oracle_normalized", [&](const Tensor& image, const dataset::Prompt& p) {
                            return dataset::normalize_score(oracle.score(image, p), table, p.split_tag, mode);
                          }};
  const Scorer reward = reward_net_scorer(net);
  const auto schedule = config_.schedule();
  const auto seed = stage_seed(config_.seed, kEvalSeed);
  for (const Scorer* s : {&oracle, &normalized, &reward}) {
    const auto r = evaluate(aligned, base, data.eval_prompts, config_.eval_samples, *s, schedule, seed);
    write_json(output("eval/" + s->name + ".json"), r.to_json());
    auto out = open_out(output("eval/best_of_s_" + s->name + ".csv"));
    out << "prompt_id,split_tag,best_of_s\n";
    for (std::size_t i = 0; i < data.eval_prompts.size(); ++i) {
      out << data.eval_prompts[i].id << ',' << data.eval_prompts[i].split_tag << ',' << r.best_of_s[i] << '\n';
    }
    std::ostringstream line;
    line.precision(4);
    line << s->name << ": mean " << r.baseline.mean << " -> " << r.candidate.mean << ", WinRate(S=1) "
         << r.win_rate.begin()->second;
    log(line.str());
  }
}

void Experiment::report() {
  json j;
  j["input_hash"] = manifest_.input_hash;
  j["base"] = read_json(input("base/summary.json"));
  j["reward"] = read_json(input("reward/summary.json"));
  j["bound"] = read_json(input("bound/summary.json"));
  j["align"] = read_json(input("align/summary.json"));
  j["convergence"] = read_json(input("align/convergence.json"));
  for (const char* name : {"clean_oracle", "oracle_normalized", "reward_net"}) {
    const auto r = read_json(input(std::string("eval/") + name + ".json"));
    EvalReport e;
    e.scorer = r.at("scorer").get<std::string>();
    for (const auto& [k, v] : r.at("win_rate").items()) e.win_rate[std::stoul(k.substr(2))] = v.get<double>();
    e.candidate = {r.at("candidate").at("mean").get<double>(), r.at("candidate").at("variance").get<double>()};
    e.baseline = {r.at("baseline").at("mean").get<double>(), r.at("baseline").at("variance").get<double>()};
    j["eval"][name] = eval_summary(e);
  }
  write_json(output("report.json"), j);
  log("report written");
}

}  // namespace trustalign::harness
