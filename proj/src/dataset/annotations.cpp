#include "trustalign/dataset/annotations.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "trustalign/diffusion/sampler.hpp"
#include "trustalign/errors.hpp"
#include "trustalign/numerics/checkpoint.hpp"
#include "trustalign/numerics/seed.hpp"

namespace trustalign::dataset {

std::vector<Prompt> make_prompts(const std::vector<Tensor>& images, ImageKind image_kind,
                                 const std::vector<MaskKind>& kinds, std::uint64_t seed,
                                 std::int64_t first_id) {
  require(!kinds.empty(), "make_prompts needs at least one mask kind");
  std::vector<Prompt> prompts;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const MaskKind kind = kinds[i % kinds.size()];
    const std::int64_t id = first_id + static_cast<std::int64_t>(i);
    const auto spec = MaskSpec::random(kind, numerics::derive_seed(seed, static_cast<std::uint64_t>(id)));
    const Mask mask = gen_mask(spec, images[i].rows());
    prompts.push_back({id, images[i], diffusion::make_prompt(images[i], mask),
                       to_string(image_kind) + "/" + pattern_name(kind)});
  }
  return prompts;
}

AnnotationSet make_annotation_set(const diffusion::Denoiser& model, const std::vector<Prompt>& prompts,
                                  const diffusion::NoiseSchedule& schedule, const AnnotationOptions& options) {
  require(options.noise_std >= 0.0, "noise_std must be >= 0");
  AnnotationSet set;
  set.mode = options.mode;
  for (const auto& p : prompts) {
    for (int j = 1; j <= kSamplesPerPrompt; ++j) {
      const auto id = static_cast<std::uint64_t>(p.id);
      const auto tr = diffusion::sample_trajectory(model, p.masked, schedule,
                                                   numerics::derive_seed(options.seed, id, j));
      AnnotationRecord r;
      r.prompt_id = p.id;
      r.sample_index = j;
      r.split_tag = p.split_tag;
      r.image = tr.final_image;
      r.mask = p.masked.mask;
      const CriterionScores clean = oracle_score(p.original, tr.final_image, p.masked.mask);
      r.oracle_clean = aggregate_score(clean);
      r.scores = clean;
      if (options.noise_std > 0.0) {
        std::mt19937_64 rng(numerics::derive_seed(options.seed ^ 0x6e6f697365ULL, id, j));
        std::normal_distribution<double> noise(0.0, options.noise_std);
        for (double* s : {&r.scores.structural, &r.scores.texture, &r.scores.overall}) {
          *s = std::clamp(*s + noise(rng), 0.0, 7.0);
        }
      }
      r.aggregate = aggregate_score(r.scores);
      set.records.push_back(std::move(r));
    }
  }
  set.table = options.table ? *options.table : fit_normalization(set.records);
  for (auto& r : set.records) r.normalized = normalize_score(r.aggregate, set.table, r.split_tag, set.mode);
  return set;
}

NormalizationTable fit_normalization(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) groups[r.split_tag].push_back(r.aggregate);
  NormalizationTable table;
  for (const auto& [tag, values] : groups) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    table.set(tag, {mean, var > 0.0 ? var : 1.0});
  }
  return table;
}

std::size_t count_below_scale(const std::vector<AnnotationRecord>& records) {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const AnnotationRecord& r) {
    return r.scores.structural < 1.0 || r.scores.texture < 1.0 || r.scores.overall < 1.0;
  }));
}

void write_jsonl(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'");
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["prompt_id"] = r.prompt_id;
    j["sample_index"] = r.sample_index;
    j["s_struct"] = r.scores.structural;
    j["s_texture"] = r.scores.texture;
    j["s_overall"] = r.scores.overall;
    j["aggregate"] = r.aggregate;
    j["normalized"] = r.normalized;
    j["split_tag"] = r.split_tag;
    j["oracle_clean"] = r.oracle_clean;
    out << j.dump() << '\n';
  }
}

std::vector<AnnotationRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot read '" + path.string() + "'");
  std::vector<AnnotationRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    AnnotationRecord r;
    r.prompt_id = j.at("prompt_id").get<std::int64_t>();
    r.sample_index = j.at("sample_index").get<int>();
    r.scores = {j.at("s_struct").get<double>(), j.at("s_texture").get<double>(), j.at("s_overall").get<double>()};
    r.aggregate = j.at("aggregate").get<double>();
    r.normalized = j.at("normalized").get<double>();
    r.split_tag = j.at("split_tag").get<std::string>();
    r.oracle_clean = j.at("oracle_clean").get<double>();
    require(r.sample_index >= 1 && r.sample_index <= kSamplesPerPrompt,
            "sample_index must be 1..3 (line " + std::to_string(line_no) + ")");
    aggregate_score(r.scores);
    records.push_back(std::move(r));
  }
  return records;
}

void write_record_images(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records) {
  numerics::Checkpoint ck;
  ck.meta = {{"kind", "annotation_images"}, {"count", records.size()}};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ck.tensors.add("image" + std::to_string(i), r.image);
    Tensor known(r.image.shape());
    for (std::size_t k = 0; k < known.size(); ++k) known[k] = r.mask.known(k) ? 1.0 : 0.0;
    ck.tensors.add("known" + std::to_string(i), known);
  }
  numerics::write_checkpoint(path, ck);
}

void read_record_images(const std::filesystem::path& path, std::vector<AnnotationRecord>& records) {
  const auto ck = numerics::read_checkpoint(path);
  require(ck.meta.value("kind", "") == "annotation_images", "'" + path.string() + "' holds no annotation images");
  require(ck.meta.at("count").get<std::size_t>() == records.size(),
          "annotation image count does not match the record count");
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    r.image = ck.tensors.get("image" + std::to_string(i));
    const Tensor& known = ck.tensors.get("known" + std::to_string(i));
    r.mask = Mask(r.image.rows(), r.image.cols());
    for (std::size_t k = 0; k < known.size(); ++k) r.mask.set_known(k, known[k] != 0.0);
  }
}

}  // namespace trustalign::dataset
