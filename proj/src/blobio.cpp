#include "blobio.hpp"

#include <bit>
#include <cstring>

#include "util.hpp"

namespace segcross::blobio {

namespace {

void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64_le(const std::string& s, size_t offset) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(s[offset + i])) << (8 * i);
  return v;
}

}  // namespace

void write_container(const std::string& path, nlohmann::json manifest,
                     const std::string& blob) {
  manifest["blob_crc32"] = crc32_bytes(blob.data(), blob.size());
  std::string out = manifest.dump();
  out.push_back('\n');
  append_u64_le(out, blob.size());
  out += blob;
  write_file(path, out);
}

Container read_container(const std::string& path) {
  const std::string raw = read_file(path);
  const size_t nl = raw.find('\n');
  if (nl == std::string::npos)
    fail(ErrorCode::Format, path + ": missing manifest line");
  Container c;
  try {
    c.manifest = nlohmann::json::parse(raw.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path + ": bad manifest: " + e.what());
  }
  if (raw.size() < nl + 1 + 8)
    fail(ErrorCode::Format, path + ": truncated blob header");
  const uint64_t blob_len = read_u64_le(raw, nl + 1);
  if (raw.size() - (nl + 9) != blob_len)
    fail(ErrorCode::Format, path + ": truncated or oversized blob");
  c.blob = raw.substr(nl + 9);
  if (!c.manifest.contains("blob_crc32"))
    fail(ErrorCode::Format, path + ": manifest missing blob checksum");
  const uint32_t expected = c.manifest.at("blob_crc32").get<uint32_t>();
  const uint32_t actual = crc32_bytes(c.blob.data(), c.blob.size());
  if (expected != actual)
    fail(ErrorCode::Format, path + ": blob checksum mismatch");
  return c;
}

void append_f32(std::string& blob, const std::vector<double>& values) {
  blob.reserve(blob.size() + values.size() * 4);
  for (double v : values) {
    const uint32_t bits = std::bit_cast<uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i)
      blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

std::vector<double> read_f32(const std::string& blob, size_t offset, size_t count) {
  if (offset + count * 4 > blob.size())
    fail(ErrorCode::Format, "blob too short for declared parameters");
  std::vector<double> out(count);
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<uint32_t>(
                  static_cast<unsigned char>(blob[offset + i * 4 + b]))
              << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

}  // namespace segcross::blobio
