#include "util.hpp"

#include <zlib.h>

#include <fstream>
#include <sstream>

namespace segcross {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open file for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) fail(ErrorCode::Io, "read failed: " + path);
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open file for writing: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out.good()) fail(ErrorCode::Io, "write failed: " + path);
}

uint32_t crc32_bytes(const void* data, size_t len) {
  return static_cast<uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

}  // namespace segcross
