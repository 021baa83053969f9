#include "mata/core/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace mata::core {

namespace {

void put_f32_le(std::vector<unsigned char>& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  out.push_back(static_cast<unsigned char>(bits & 0xff));
  out.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

double get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["params"] = nlohmann::json::array();
  std::vector<unsigned char> blob;
  for (const auto& [name, t] : params) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    entry["offset"] = blob.size();
    manifest["params"].push_back(entry);
    for (double v : t.values) put_f32_le(blob, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  const std::string header = manifest.dump();
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.put('\n');
  f.write(reinterpret_cast<const char*>(blob.data()),
          static_cast<std::streamsize>(blob.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string header;
  if (!std::getline(f, header)) throw IoError("checkpoint has no manifest line: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint manifest is not valid JSON: " + path + ": " + e.what());
  }
  if (!manifest.contains("format_version") || !manifest["format_version"].is_number_integer())
    throw IoError("checkpoint manifest lacks format_version: " + path);
  if (manifest["format_version"].get<int>() != 1)
    throw IoError("unsupported checkpoint format_version " +
                  manifest["format_version"].dump() + ": " + path);
  std::vector<unsigned char> blob{std::istreambuf_iterator<char>(f),
                                  std::istreambuf_iterator<char>()};
  ParamStore out;
  for (const auto& entry : manifest["params"]) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t n = shape_numel(shape);
    if (offset + 4 * n > blob.size())
      throw IoError("checkpoint blob truncated for " + name + ": " + path);
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) t.values[i] = get_f32_le(blob.data() + offset + 4 * i);
    out[name] = std::move(t);
  }
  return out;
}

}  // namespace mata::core
