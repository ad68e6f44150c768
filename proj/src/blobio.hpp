#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

// Shared on-disk container: one line of UTF-8 JSON manifest, '\n', an 8-byte
// little-endian blob byte length, then the blob. The manifest carries a
// CRC-32 of the blob under "blob_crc32".
namespace segcross::blobio {

void write_container(const std::string& path, nlohmann::json manifest,
                     const std::string& blob);

struct Container {
  nlohmann::json manifest;
  std::string blob;
};

Container read_container(const std::string& path);

// Little-endian f32 packing for parameter/embedding blobs.
void append_f32(std::string& blob, const std::vector<double>& values);
std::vector<double> read_f32(const std::string& blob, size_t offset, size_t count);

}  // namespace segcross::blobio
