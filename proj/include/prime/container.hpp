#pragma once

// Lossless video container.
//
// Layout (all header fields little-endian uint32):
//
//   offset  field
//   0       magic        "PRMV" (0x564D5250 as LE u32)
//   4       version      1
//   8       width
//   12      height
//   16      channels     3
//   20      frame_count
//   24      fps_num
//   28      fps_den
//   32      payload: frame_count * height * width * channels bytes,
//           frames in order, rows top to bottom, RGB interleaved.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/video.hpp"

namespace prime {

inline constexpr std::array<char, 4> kContainerMagic{'P', 'R', 'M', 'V'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderSize = 32;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_container(const Video& v) {
  v.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kContainerHeaderSize + v.size() * v.frames[0].size());
  out.insert(out.end(), kContainerMagic.begin(), kContainerMagic.end());
  detail::put_u32(out, kContainerVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(v.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(v.height()));
  detail::put_u32(out, kChannels);
  detail::put_u32(out, static_cast<std::uint32_t>(v.size()));
  detail::put_u32(out, v.fps.num);
  detail::put_u32(out, v.fps.den);
  for (const auto& f : v.frames) out.insert(out.end(), f.pixels.begin(), f.pixels.end());
  return out;
}

// Frames whose dimensions are not block multiples are edge-padded on ingest.
inline Video decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kContainerHeaderSize) {
    throw ParseError("container: header truncated, " + std::to_string(bytes.size()) + " of " +
                         std::to_string(kContainerHeaderSize) + " bytes",
                     bytes.size() < 4 ? 0 : bytes.size());
  }
  if (std::memcmp(bytes.data(), kContainerMagic.data(), 4) != 0) throw ParseError("container: bad magic", 0);
  if (auto ver = detail::get_u32(bytes, 4); ver != kContainerVersion) {
    throw ParseError("container: unsupported version " + std::to_string(ver), 4);
  }
  const std::uint32_t w = detail::get_u32(bytes, 8);
  const std::uint32_t h = detail::get_u32(bytes, 12);
  const std::uint32_t ch = detail::get_u32(bytes, 16);
  const std::uint32_t n = detail::get_u32(bytes, 20);
  Video v;
  v.fps = {detail::get_u32(bytes, 24), detail::get_u32(bytes, 28)};
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) {
    throw ParseError("container: invalid dimensions " + std::to_string(w) + "x" + std::to_string(h), 8);
  }
  if (ch != kChannels) throw ParseError("container: expected 3 channels, header says " + std::to_string(ch), 16);
  if (n == 0) throw ParseError("container: zero frames", 20);
  if (v.fps.num == 0 || v.fps.den == 0) throw ParseError("container: fps must be positive", 24);

  const std::size_t frame_bytes = static_cast<std::size_t>(w) * h * kChannels;
  v.frames.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t off = kContainerHeaderSize + i * frame_bytes;
    if (bytes.size() < off + frame_bytes) {
      throw ParseError("container: payload truncated in frame " + std::to_string(i) + " of " + std::to_string(n),
                       std::min(bytes.size(), off));
    }
    auto first = bytes.begin() + static_cast<std::ptrdiff_t>(off);
    Frame f(static_cast<int>(w), static_cast<int>(h),
            std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(frame_bytes)));
    v.frames.push_back(pad_to_block(f));
  }
  const std::size_t expected = kContainerHeaderSize + n * frame_bytes;
  if (bytes.size() != expected) {
    throw ParseError("container: " + std::to_string(bytes.size() - expected) + " trailing bytes", expected);
  }
  return v;
}

inline void write_frames(const Video& v, const std::string& path) {
  auto bytes = encode_container(v);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("short write to '" + path + "'");
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline Video read_frames(const std::string& path) { return decode_container(read_file_bytes(path)); }

}  // namespace prime
