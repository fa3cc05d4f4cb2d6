#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "trustalign/dataset/annotations.hpp"
#include "trustalign/dataset/masks.hpp"
#include "trustalign/dataset/oracle.hpp"
#include "trustalign/dataset/toy_images.hpp"
#include "trustalign/diffusion/sampler.hpp"
#include "trustalign/errors.hpp"
#include "trustalign/numerics/seed.hpp"

using namespace trustalign;
using namespace trustalign::dataset;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

diffusion::Denoiser tiny_model(std::size_t n) {
  diffusion::DenoiserConfig c;
  c.height = c.width = n;
  c.hidden = {16};
  c.time_features = 4;
  return diffusion::Denoiser(c, 1);
}

Mask left_half_known(std::size_t n) {
  Mask m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n / 2; ++c) m.set_known(r, c, true);
  }
  return m;
}

}  // namespace

TEST_CASE("toy images") {
  for (auto kind : {ImageKind::smooth_field, ImageKind::shapes}) {
    const auto a = gen_toy_images(20, kind, 5);
    const auto b = gen_toy_images(20, kind, 5);
    CHECK(a == b);
    CHECK_FALSE(a == gen_toy_images(20, kind, 6));
    for (const auto& img : a) {
      CHECK(img.shape() == numerics::Shape{16, 16});
      for (double v : img.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  for (const auto& img : gen_toy_images(200, ImageKind::smooth_field, 9)) CHECK(mean_neighbor_difference(img) < 0.2);
}

TEST_CASE("mask extents") {
  const Mask sq = gen_mask({MaskKind::square_crop, 0.25, 1}, 16);
  CHECK(sq.known_count() == 64);
  const Mask rect = gen_mask({MaskKind::rect_crop, 0.40, 1}, 16);
  CHECK(rect.known_count() == 6 * 16);
  for (std::size_t r = 0; r < 16; ++r) {
    std::size_t kept = 0;
    for (std::size_t c = 0; c < 16; ++c) kept += rect.known(r, c);
    CHECK(kept == 6);
  }
}

TEST_CASE("random square masks stay inside the area range") {
  std::size_t violations = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const Mask m = gen_mask(MaskSpec::random(MaskKind::square_crop, s), 16);
    const double ratio = static_cast<double>(m.known_count()) / 256.0;
    if (ratio < 0.15 || ratio > 0.25) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("every mask kind has known and unknown pixels") {
  for (auto kind : {MaskKind::square_crop, MaskKind::rect_crop, MaskKind::irregular}) {
    for (std::size_t n : {4u, 8u, 16u}) {
      for (std::uint64_t s = 0; s < 200; ++s) {
        const Mask m = gen_mask(MaskSpec::random(kind, s), n);
        CHECK(m.known_count() >= 1);
        CHECK(m.unknown_count() >= 1);
        if (kind == MaskKind::irregular && n == 16) {
          const double unknown = static_cast<double>(m.unknown_count()) / 256.0;
          CHECK(unknown >= 0.2);
          CHECK(unknown <= 0.6);
        }
      }
    }
  }
}

TEST_CASE("mask spec validation") {
  CHECK_THROWS_AS(gen_mask({MaskKind::square_crop, 0.3, 0}, 16), ValidationError);
  CHECK_THROWS_AS(gen_mask({MaskKind::rect_crop, 0.2, 0}, 16), ValidationError);
  CHECK_NOTHROW(gen_mask({MaskKind::irregular, 0.0, 0}, 16));
  CHECK(pattern_name(MaskKind::square_crop) == "outpainting");
  CHECK(pattern_name(MaskKind::irregular) == "warping");
}

TEST_CASE("oracle_score hand example") {
  const std::size_t n = 4;
  const Mask m = left_half_known(n);
  Tensor original({n, n}, 0.5);
  Tensor inpainted = original;
  for (std::size_t i = 0; i < n * n; ++i) {
    if (!m.known(i)) inpainted[i] = 0.6;
  }
  // block mean error 0.1, seam step error 0.1, rmse 0.1; score = 7·(1 − 0.1/0.5)
  const auto s = oracle_score(original, inpainted, m);
  CHECK(s.structural == doctest::Approx(5.6));
  CHECK(s.texture == doctest::Approx(5.6));
  CHECK(s.overall == doctest::Approx(5.6));
  CHECK(aggregate_score(s) == doctest::Approx(5.6));

  for (std::size_t i = 0; i < n * n; ++i) {
    if (!m.known(i)) inpainted[i] = 1.5;
  }
  const auto worst = oracle_score(original, inpainted, m);
  CHECK(worst.overall == 0.0);
  CHECK(worst.structural == 0.0);
  CHECK(worst.texture == 0.0);
}

TEST_CASE("oracle_score contracts") {
  const auto images = gen_toy_images(30, ImageKind::smooth_field, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto& img = images[k];
    const Mask m = gen_mask(MaskSpec::random(MaskKind::irregular, k), 16);
    const auto perfect = oracle_score(img, img, m);
    CHECK(perfect.structural == 7.0);
    CHECK(perfect.texture == 7.0);
    CHECK(perfect.overall == 7.0);

    Tensor noisy = img;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      if (!m.known(i)) noisy[i] = u(rng);
    }
    const auto s = oracle_score(img, noisy, m);
    CHECK(s.overall < 4.0);

    Tensor other_known = noisy;
    for (std::size_t i = 0; i < other_known.size(); ++i) {
      if (m.known(i)) other_known[i] = u(rng);
    }
    const auto s2 = oracle_score(img, other_known, m);
    CHECK(s2.structural == s.structural);
    CHECK(s2.texture == s.texture);
    CHECK(s2.overall == s.overall);
    const auto again = oracle_score(img, noisy, m);
    CHECK(again.overall == s.overall);
  }
}

TEST_CASE("aggregate_score") {
  CHECK(kStructuralWeight + kTextureWeight + kOverallWeight == doctest::Approx(1.0));
  CHECK(aggregate_score({7, 7, 7}) == doctest::Approx(7.0));
  CHECK(aggregate_score({1, 1, 7}) == doctest::Approx(5.2));
  CHECK(aggregate_score({0, 0, 0}) == 0.0);
  CHECK_THROWS_AS(aggregate_score({7.5, 1, 1}), ValidationError);
  CHECK_THROWS_AS(aggregate_score({-0.1, 1, 1}), ValidationError);
}

TEST_CASE("normalize_score with the published factors") {
  const auto t = NormalizationTable::preset();
  CHECK(normalize_score(3.46, t, "ade20k/warping") == doctest::Approx(0.0));
  CHECK(normalize_score(6.23, t, "ade20k/warping") == doctest::Approx(1.0));
  CHECK(normalize_score(2.34, t, "div2k/outpainting") == doctest::Approx(0.0));
  CHECK(normalize_score(3.46 + std::sqrt(2.77), t, "ade20k/warping", NormalizationMode::stddev) ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(normalize_score(1.0, t, "nope/none"), ValidationError);
  for (const auto& [tag, f] : t.entries()) {
    const double a = normalize_score(1.0, t, tag), b = normalize_score(2.0, t, tag), c = normalize_score(3.0, t, tag);
    CHECK(b > a);
    CHECK(c - b == doctest::Approx(b - a));
  }
  const auto back = NormalizationTable::from_json(t.to_json());
  CHECK(back.entries().size() == 8);
  CHECK(back.at("kitti/outpainting").var == 2.69);
}

TEST_CASE("fit_normalization uses population variance per tag") {
  std::vector<AnnotationRecord> recs(5);
  const double vals[5] = {1.0, 3.0, 2.0, 2.0, 2.0};
  const char* tags[5] = {"a", "a", "b", "b", "b"};
  for (int i = 0; i < 5; ++i) {
    recs[i].aggregate = vals[i];
    recs[i].split_tag = tags[i];
  }
  const auto t = fit_normalization(recs);
  CHECK(t.at("a").mean == doctest::Approx(2.0));
  CHECK(t.at("a").var == doctest::Approx(1.0));
  CHECK(t.at("b").mean == doctest::Approx(2.0));
  CHECK(t.at("b").var == 1.0);  // zero variance falls back to 1
}

TEST_CASE("make_prompts assigns tags and ids") {
  const auto images = gen_toy_images(6, ImageKind::shapes, 1, 8);
  const auto prompts = make_prompts(images, ImageKind::shapes,
                                    {MaskKind::square_crop, MaskKind::irregular}, 7, 100);
  REQUIRE(prompts.size() == 6);
  CHECK(prompts[0].id == 100);
  CHECK(prompts[0].split_tag == "shapes/outpainting");
  CHECK(prompts[1].split_tag == "shapes/warping");
  for (const auto& p : prompts) {
    for (std::size_t i = 0; i < p.original.size(); ++i) {
      CHECK(p.masked.image[i] == (p.masked.mask.known(i) ? p.original[i] : 0.0));
    }
  }
}

TEST_CASE("annotation sets") {
  const std::size_t n = 8;
  const auto model = tiny_model(n);
  const auto schedule = diffusion::NoiseSchedule::build(3, diffusion::ScheduleKind::linear, 0.5);
  const auto prompts = make_prompts(gen_toy_images(10, ImageKind::smooth_field, 2, n), ImageKind::smooth_field,
                                    {MaskKind::square_crop, MaskKind::rect_crop, MaskKind::irregular}, 3);

  SUBCASE("noise 0 records equal the oracle") {
    AnnotationOptions opt;
    opt.seed = 4;
    const auto set = make_annotation_set(model, prompts, schedule, opt);
    REQUIRE(set.records.size() == 30);
    std::set<std::pair<std::int64_t, int>> keys;
    for (const auto& r : set.records) {
      keys.insert({r.prompt_id, r.sample_index});
      const auto& p = *std::find_if(prompts.begin(), prompts.end(), [&](const auto& q) { return q.id == r.prompt_id; });
      const auto s = oracle_score(p.original, r.image, p.masked.mask);
      CHECK(r.scores.structural == s.structural);
      CHECK(r.scores.texture == s.texture);
      CHECK(r.scores.overall == s.overall);
      CHECK(r.aggregate == aggregate_score(s));
      CHECK(r.oracle_clean == r.aggregate);
      CHECK(r.normalized == normalize_score(r.aggregate, set.table, r.split_tag, set.mode));
    }
    CHECK(keys.size() == 30);
  }

  SUBCASE("sample j is seeded by (seed, prompt id, j)") {
    AnnotationOptions opt;
    opt.seed = 4;
    const auto set = make_annotation_set(model, prompts, schedule, opt);
    const auto& r = set.records[4];
    const auto& p = *std::find_if(prompts.begin(), prompts.end(), [&](const auto& q) { return q.id == r.prompt_id; });
    const auto tr = diffusion::sample_trajectory(
        model, p.masked, schedule,
        numerics::derive_seed(4, static_cast<std::uint64_t>(r.prompt_id), static_cast<std::uint64_t>(r.sample_index)));
    CHECK(tr.final_image == r.image);
  }

  SUBCASE("noisy scores stay in [0,7] and the file is reproducible") {
    AnnotationOptions opt;
    opt.seed = 8;
    opt.noise_std = 2.0;
    const auto a = make_annotation_set(model, prompts, schedule, opt);
    const auto b = make_annotation_set(model, prompts, schedule, opt);
    for (const auto& r : a.records) {
      for (double v : {r.scores.structural, r.scores.texture, r.scores.overall}) {
        CHECK(v >= 0.0);
        CHECK(v <= 7.0);
      }
    }
    CHECK(count_below_scale(a.records) > 0);
    const auto dir = std::filesystem::temp_directory_path();
    write_jsonl(dir / "ta_a.jsonl", a.records);
    write_jsonl(dir / "ta_b.jsonl", b.records);
    CHECK(slurp(dir / "ta_a.jsonl") == slurp(dir / "ta_b.jsonl"));

    const std::string text = slurp(dir / "ta_a.jsonl");
    const std::string first = text.substr(0, text.find('\n'));
    const auto j = nlohmann::ordered_json::parse(first);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"prompt_id", "sample_index", "s_struct", "s_texture", "s_overall",
                                           "aggregate", "normalized", "split_tag", "oracle_clean"});

    auto back = read_jsonl(dir / "ta_a.jsonl");
    write_record_images(dir / "ta_a.ckpt", a.records);
    read_record_images(dir / "ta_a.ckpt", back);
    REQUIRE(back.size() == a.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].aggregate == a.records[i].aggregate);
      CHECK(back[i].image == a.records[i].image);
      CHECK(back[i].mask == a.records[i].mask);
    }
    for (const char* f : {"ta_a.jsonl", "ta_b.jsonl", "ta_a.ckpt"}) std::filesystem::remove(dir / f);
  }
}
