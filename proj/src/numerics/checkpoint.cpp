#include "trustalign/numerics/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "trustalign/errors.hpp"

namespace trustalign::numerics {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in host order, which must be little-endian");

namespace {
constexpr const char* kFormat = "trustalign-checkpoint";
constexpr int kVersion = 1;
}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["meta"] = checkpoint.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& e : checkpoint.tensors.entries()) {
    header["tensors"].push_back({{"name", e.name}, {"shape", e.value.shape()}, {"trainable", e.trainable}});
  }
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  std::string out(sizeof(length), '\0');
  std::memcpy(out.data(), &length, sizeof(length));
  out += text;
  for (const auto& e : checkpoint.tensors.entries()) {
    const auto bytes = e.value.values().size() * sizeof(double);
    const auto offset = out.size();
    out.resize(offset + bytes);
    std::memcpy(out.data() + offset, e.value.values().data(), bytes);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  std::uint64_t length = 0;
  require(bytes.size() >= sizeof(length), "checkpoint truncated before header length");
  std::memcpy(&length, bytes.data(), sizeof(length));
  require(bytes.size() >= sizeof(length) + length, "checkpoint truncated inside header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(sizeof(length), length));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  require(header.value("format", "") == kFormat, "not a trustalign checkpoint");
  require(header.value("version", 0) == kVersion, "unsupported checkpoint version");

  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  std::size_t offset = sizeof(length) + length;
  for (const auto& t : header.at("tensors")) {
    Shape shape = t.at("shape").get<Shape>();
    const std::size_t count = shape_size(shape);
    const std::size_t nbytes = count * sizeof(double);
    require(offset + nbytes <= bytes.size(),
            "checkpoint payload truncated at tensor '" + t.at("name").get<std::string>() + "'");
    std::vector<double> data(count);
    std::memcpy(data.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
    ck.tensors.add(t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)),
                   t.value("trainable", true));
  }
  require(offset == bytes.size(), "checkpoint has trailing bytes");
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "missing checkpoint '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace trustalign::numerics
