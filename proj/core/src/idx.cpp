#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include <zlib.h>

#include "ntkdfl/data.hpp"
#include "ntkdfl/error.hpp"

namespace ntkdfl {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxTensor read_idx(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4, ErrorCode::TruncatedPayload, "IDX buffer shorter than its magic");
  const std::uint32_t magic = read_be32(bytes, 0);
  require(magic == kIdxMagicLabels || magic == kIdxMagicImages, ErrorCode::BadMagic,
          "unsupported IDX magic 0x" + [&] {
            char buf[9];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
          }());

  const std::size_t rank = magic & 0xff;
  const std::size_t header = 4 + 4 * rank;
  require(bytes.size() >= header, ErrorCode::TruncatedPayload, "IDX header truncated");

  IdxTensor out;
  std::size_t count = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * r));
    count *= out.dims.back();
  }
  require(bytes.size() - header >= count, ErrorCode::TruncatedPayload,
          "IDX payload declares " + std::to_string(count) + " bytes, " +
              std::to_string(bytes.size() - header) + " available");
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                  bytes.begin() + static_cast<std::ptrdiff_t>(header + count));
  return out;
}

std::vector<std::uint8_t> write_idx(const IdxTensor& tensor) {
  require(tensor.dims.size() == 1 || tensor.dims.size() == 3, ErrorCode::InvalidArgument,
          "only rank-1 and rank-3 IDX tensors are supported");
  std::vector<std::uint8_t> out;
  push_be32(out, tensor.dims.size() == 1 ? kIdxMagicLabels : kIdxMagicImages);
  for (auto d : tensor.dims) push_be32(out, d);
  out.insert(out.end(), tensor.data.begin(), tensor.data.end());
  return out;
}

std::vector<std::uint8_t> maybe_gunzip(std::vector<std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b) return bytes;

  z_stream zs{};
  require(inflateInit2(&zs, 16 + MAX_WBITS) == Z_OK, ErrorCode::Io, "inflateInit2 failed");
  zs.next_in = bytes.data();
  zs.avail_in = static_cast<uInt>(bytes.size());

  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      fail(ErrorCode::Io, "corrupt gzip stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      fail(ErrorCode::TruncatedPayload, "gzip stream ended early");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace ntkdfl
