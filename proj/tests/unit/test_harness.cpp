#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>

#include "trustalign/dataset/toy_images.hpp"
#include "trustalign/errors.hpp"
#include "trustalign/harness/experiment.hpp"
#include "trustalign/harness/manifest.hpp"
#include "trustalign/harness/metrics.hpp"
#include "trustalign/harness/toy_task.hpp"

using namespace trustalign;
using namespace trustalign::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// relative path -> bytes for every CSV/JSON/JSONL file under `dir`
std::map<std::string, std::string> text_artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".json" || ext == ".jsonl") {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  }
  return out;
}

ToyTaskConfig tiny_task(std::uint64_t seed) {
  ToyTaskConfig c;
  c.seed = seed;
  c.image_size = 8;
  c.base_images = 24;
  c.annotation_prompts = 8;
  c.heldout_prompts = 4;
  c.align_prompts = 4;
  c.eval_prompts = 3;
  c.steps = 4;
  c.denoiser.hidden = {16};
  c.train_base.iterations = 20;
  c.train_base.batch_size = 8;
  c.reward.hidden = {16};
  c.reward.feature_dim = 4;
  c.reward.iterations = 10;
  c.reward.batch_size = 8;
  c.align.max_iterations = 3;
  c.align.batch_size = 4;
  c.align.group_size = 2;
  c.eval_samples = {1, 2};
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

Scorer pixel_scorer() {
  return {"pixel", [](const Tensor& image, const dataset::Prompt&) { return image[0] + image[5]; }};
}

std::vector<dataset::Prompt> small_prompts() {
  const auto images = dataset::gen_toy_images(5, dataset::ImageKind::smooth_field, 2, 4);
  return dataset::make_prompts(images, dataset::ImageKind::smooth_field, {dataset::MaskKind::irregular}, 3);
}

diffusion::Denoiser small_model(std::uint64_t seed) {
  diffusion::DenoiserConfig c;
  c.height = c.width = 4;
  c.hidden = {8};
  c.time_features = 4;
  return diffusion::Denoiser(c, seed);
}

}  // namespace

TEST_CASE("win_rate_from_scores") {
  std::vector<std::vector<double>> cand;
  std::vector<double> base;
  for (int i = 0; i < 10; ++i) {
    cand.push_back({i < 7 ? 2.0 : 1.0});
    base.push_back(1.5);
  }
  CHECK(win_rate_from_scores(cand, base, 1) == doctest::Approx(0.7));
  CHECK(win_rate_from_scores({{1.0}, {2.0}}, {1.0, 2.0}, 1) == 0.0);
  CHECK(win_rate_from_scores({{0.0, 3.0}, {0.0, 0.0}}, {1.0, 1.0}, 2) == 0.5);
  CHECK_THROWS_AS(win_rate_from_scores({}, {}, 1), ValidationError);
  CHECK_THROWS_AS(win_rate_from_scores({{1.0}}, {1.0}, 0), ValidationError);
}

TEST_CASE("win_rate on models") {
  const auto prompts = small_prompts();
  const auto schedule = NoiseSchedule::build(4, diffusion::ScheduleKind::linear, 0.8);
  const auto a = small_model(1), b = small_model(2);
  CHECK(win_rate(a, a, prompts, 1, pixel_scorer(), schedule, 5) == 0.0);
  double prev = 0.0;
  for (std::size_t s : {1u, 2u, 3u, 5u, 10u}) {
    const double w = win_rate(b, a, prompts, s, pixel_scorer(), schedule, 5);
    CHECK(w >= prev);
    CHECK(w <= 1.0);
    prev = w;
  }
  CHECK_THROWS_AS(win_rate(a, a, {}, 1, pixel_scorer(), schedule, 5), ValidationError);
}

TEST_CASE("reward_stats") {
  const auto hand = reward_stats_from_scores({{1.0, 3.0}, {2.0, 2.0}});
  CHECK(hand.mean == doctest::Approx(2.0));
  CHECK(hand.variance == doctest::Approx(0.5));

  const auto prompts = small_prompts();
  const auto model = small_model(3);
  // eta = 0 removes step noise but x_T still varies with the sample seed; only
  // the restored known region is seed-independent
  const auto det = NoiseSchedule::build(4, diffusion::ScheduleKind::linear, 0.0);
  const Scorer known_only{"known", [](const Tensor& image, const dataset::Prompt& p) {
                            double total = 0.0;
                            for (std::size_t i = 0; i < image.size(); ++i) {
                              if (p.masked.mask.known(i)) total += image[i];
                            }
                            return total;
                          }};
  CHECK(reward_stats(model, prompts, 4, known_only, det, 1).variance == 0.0);
  CHECK(reward_stats(model, prompts, 4, pixel_scorer(), det, 1).variance > 0.0);

  const auto noisy = NoiseSchedule::build(4, diffusion::ScheduleKind::linear, 0.8);
  const Scorer constant{"constant", [](const Tensor&, const dataset::Prompt&) { return 2.5; }};
  const auto s = reward_stats(model, prompts, 3, constant, noisy, 1);
  CHECK(s.mean == 2.5);
  CHECK(s.variance == 0.0);
  CHECK(reward_stats(model, prompts, 3, pixel_scorer(), noisy, 1).variance > 0.0);
}

TEST_CASE("sample seeds nest across S") {
  const auto prompts = small_prompts();
  const auto model = small_model(4);
  const auto schedule = NoiseSchedule::build(4, diffusion::ScheduleKind::linear, 0.8);
  const auto three = score_samples(model, prompts, 3, pixel_scorer(), schedule, 9);
  const auto five = score_samples(model, prompts, 5, pixel_scorer(), schedule, 9);
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(three[p][j] == five[p][j]);
  }
  CHECK(sample_seed(1, 2, 3) == sample_seed(1, 2, 3));
  CHECK(sample_seed(1, 2, 3) != sample_seed(1, 2, 4));
}

TEST_CASE("acceleration") {
  CHECK(acceleration(300, 150) == doctest::Approx(1.0));
  CHECK(acceleration(40, 40) == 0.0);
  CHECK(acceleration(150, 300) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(acceleration(10, 0), ValidationError);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1.0, 1000.0);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng);
    CHECK(std::abs((1.0 + acceleration(a, b)) * (1.0 + acceleration(b, a)) - 1.0) < 1e-12);
  }
}

TEST_CASE("error_histogram") {
  const std::vector<double> truth = {0.1, 0.5, 2.0, -1.0};
  const auto perfect = error_histogram(truth, truth, 5);
  CHECK(perfect.counts.front() == 4);
  CHECK(perfect.percentages.front() == doctest::Approx(100.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<double> t(2000), p(2000);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<double>(i % 7);
    p[i] = t[i] + n(rng);
  }
  const auto h = error_histogram(p, t, 10);
  CHECK(h.edges.size() == 11);
  CHECK(std::accumulate(h.percentages.begin(), h.percentages.end(), 0.0) == doctest::Approx(100.0).epsilon(1e-11));
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == 2000);
  const auto mode = std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin();
  CHECK(h.edges[static_cast<std::size_t>(mode) + 1] <= 0.5);
  CHECK_THROWS_AS(error_histogram(p, t, 1), ValidationError);
}

TEST_CASE("git_blob_sha1") {
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("toy task config") {
  const auto c = tiny_task(3);
  const auto back = ToyTaskConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  const auto s = c.seeded();
  CHECK(s.train_base.seed != s.align.seed);
  CHECK(s.reward.height == 8);
  CHECK(tiny_task(4).seeded().align.seed != s.align.seed);

  auto bad = c;
  bad.eval_samples = {};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.target_mean_gamma = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  auto j = c.to_json();
  j["align"]["kappa"] = -1.0;
  CHECK_THROWS_AS(ToyTaskConfig::from_json(j), ValidationError);
  CHECK_THROWS_AS(align_reward_from_string("human"), ValidationError);
}

TEST_CASE("toy data pools") {
  const auto cfg = tiny_task(1).seeded();
  const auto data = make_toy_data(cfg);
  CHECK(data.base_images.size() == cfg.base_images);
  CHECK(data.annotation_prompts.size() == cfg.annotation_prompts);
  CHECK(data.eval_prompts.size() == cfg.eval_prompts);
  for (const auto& p : data.eval_prompts) {
    for (const auto& q : data.annotation_prompts) {
      CHECK(p.id != q.id);
      CHECK_FALSE(p.original == q.original);
    }
  }
  const auto path = fs::temp_directory_path() / "ta_toy_data.ckpt";
  write_toy_data(path, data, cfg.image_size);
  const auto back = read_toy_data(path);
  CHECK(back.base_images == data.base_images);
  REQUIRE(back.align_prompts.size() == data.align_prompts.size());
  for (std::size_t i = 0; i < back.align_prompts.size(); ++i) {
    CHECK(back.align_prompts[i].id == data.align_prompts[i].id);
    CHECK(back.align_prompts[i].split_tag == data.align_prompts[i].split_tag);
    CHECK(back.align_prompts[i].masked.mask == data.align_prompts[i].masked.mask);
  }
  fs::remove(path);
}

TEST_CASE("experiment stages") {
  for (const auto s : all_stages()) CHECK(stage_from_string(to_string(s)) == s);
  CHECK(to_string(Stage::train_reward) == "train-reward");
  CHECK_THROWS_AS(stage_from_string("deploy"), ValidationError);
}

TEST_CASE("missing upstream artifact names the path") {
  const auto dir = fresh_dir("ta_exp_missing");
  Experiment exp(tiny_task(1), dir);
  try {
    exp.run(Stage::train_base);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("train-base") != std::string::npos);
    CHECK(msg.find("data/toy_data.ckpt") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("a run directory refuses a different config") {
  const auto dir = fresh_dir("ta_exp_conflict");
  { Experiment exp(tiny_task(1), dir); }
  CHECK_NOTHROW(Experiment(tiny_task(1), dir));
  CHECK_THROWS_AS(Experiment(tiny_task(2), dir), ValidationError);
  CHECK(Experiment::open(dir).config().to_json() == tiny_task(1).to_json());
  fs::remove_all(dir);
}

TEST_CASE("zero alignment iterations give candidate == baseline") {
  auto cfg = tiny_task(2);
  cfg.align.max_iterations = 0;
  const auto dir = fresh_dir("ta_exp_zero");
  Experiment exp(cfg, dir);
  exp.run_all();
  for (const char* name : {"clean_oracle", "reward_net"}) {
    const auto j = nlohmann::json::parse(slurp(dir / "eval" / (std::string(name) + ".json")));
    CHECK(j.at("scorer") == name);
    CHECK(j.at("candidate") == j.at("baseline"));
    CHECK(j.at("win_rate").at("S=1").get<double>() == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("rerunning a manifest reproduces every CSV and JSON artifact") {
  const auto a = fresh_dir("ta_exp_a");
  const auto b = fresh_dir("ta_exp_b");
  Experiment(tiny_task(3), a).run_all();
  const auto first = text_artifacts(a);
  CHECK(first.count("report.json") == 1);
  CHECK(first.count("align/training_log.csv") == 1);
  CHECK(first.count("manifest.json") == 1);

  Experiment(tiny_task(3), b).run_all();
  CHECK(text_artifacts(b) == first);

  Experiment::open(a).run_all();
  CHECK(text_artifacts(a) == first);

  const auto manifest = RunManifest::read(a / "manifest.json");
  CHECK(manifest.input_hash == git_blob_sha1(manifest.config.dump()));
  CHECK(manifest.artifacts.count("report.json") == 1);
  CHECK(manifest.artifacts.at("report.json") == file_sha1(a / "report.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}
