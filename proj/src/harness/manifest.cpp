#include "trustalign/harness/manifest.hpp"

#include <array>
#include <fstream>
#include <iterator>
#include <memory>

#include <openssl/evp.h>

#include "trustalign/errors.hpp"

namespace trustalign::harness {

namespace {

std::string hex(const unsigned char* bytes, unsigned int n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < n; ++i) {
    out += digits[bytes[i] >> 4];
    out += digits[bytes[i] & 0xf];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("sha1 digest failed");
  }
  return hex(digest.data(), len);
}

std::string file_sha1(const std::filesystem::path& path) { return git_blob_sha1(read_file(path)); }

RunManifest RunManifest::for_config(const ToyTaskConfig& cfg) {
  RunManifest m;
  m.config = cfg.to_json();
  m.input_hash = git_blob_sha1(m.config.dump());
  const ToyTaskConfig s = cfg.seeded();
  m.seeds = {{"run", cfg.seed},
             {"train_base", s.train_base.seed},
             {"reward", s.reward.seed},
             {"align", s.align.seed}};
  return m;
}

nlohmann::json RunManifest::to_json() const {
  return {{"input_hash", input_hash}, {"config", config}, {"seeds", seeds}, {"artifacts", artifacts}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.config = j.at("config");
    m.input_hash = j.at("input_hash").get<std::string>();
    m.seeds = j.value("seeds", m.seeds);
    m.artifacts = j.value("artifacts", m.artifacts);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest '" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

}  // namespace trustalign::harness
