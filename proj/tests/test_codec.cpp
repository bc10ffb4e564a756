#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "prime/codec.hpp"
#include "prime/container.hpp"
#include "prime/synthetic.hpp"

using namespace prime;

namespace {

TEST(Codec, QuantTableScaling) {
  EXPECT_EQ(codec::quant_table(50), codec::kBaseTable);
  for (int v : codec::quant_table(100)) EXPECT_EQ(v, 1);
  EXPECT_EQ(codec::quant_table(0), codec::quant_table(1));
  EXPECT_THROW(codec::quant_table(101), std::invalid_argument);
  EXPECT_THROW(codec::quant_table(-1), std::invalid_argument);
}

TEST(Codec, DctIsOrthonormal) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 255);
  codec::Block b{};
  for (auto& v : b) v = u(rng);
  const auto back = codec::idct2d(codec::dct2d(b));
  for (int i = 0; i < 64; ++i) EXPECT_NEAR(back[i], b[i], 1e-9);
}

TEST(Codec, MatchesDirectReference) {
  for (int q : {1, 10, 50, 75, 95}) {
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 200 && checked < 3; ++seed) {
      const Frame f = synthetic::generate_video(seed, 1, 16, 16).frames[0];
      int ties = 0;
      const auto b = oracle::compress(f, q, &ties);
      if (ties) continue;
      const auto a = codec::compress_frame(f, q);
      EXPECT_EQ(a.size_bits, b.size_bits) << q;
      EXPECT_EQ(a.frame, b.frame) << q;
      ++checked;
    }
    EXPECT_EQ(checked, 3) << q;
  }
}

TEST(Codec, Quality100IsIdempotent) {
  std::mt19937_64 rng(3);
  const Frame f = oracle::random_frame(rng, 16, 16);
  EXPECT_EQ(codec::compress_frame(f, 100).frame, f);
}

TEST(Codec, ConstantBlockStaysConstant) {
  Frame f(8, 8);
  std::fill(f.pixels.begin(), f.pixels.end(), 128);
  for (int q : {5, 50, 90}) {
    const Frame out = codec::compress_frame(f, q).frame;
    for (auto p : out.pixels) EXPECT_EQ(p, out.pixels[0]);
    EXPECT_EQ(codec::compress_frame(f, q).size_bits, 3 * codec::coefficient_bits(std::lround(1024.0 / codec::quant_table(q)[0])));
  }
}

TEST(Codec, SizeGrowsWithQuality) {
  const Frame f = synthetic::generate_video(4, 1, 32, 32).frames[0];
  std::int64_t prev = -1;
  for (int q : {10, 30, 50, 70, 90}) {
    const auto bits = codec::compress_frame(f, q).size_bits;
    EXPECT_GE(bits, prev);
    prev = bits;
  }
}

TEST(Codec, CoefficientBits) {
  EXPECT_EQ(codec::coefficient_bits(0), 0);
  EXPECT_EQ(codec::coefficient_bits(1), 6);
  EXPECT_EQ(codec::coefficient_bits(-4), 8);
}

TEST(Codec, VariableModeIsSeededAndBounded) {
  codec::CodecConfig c;
  c.rate_mode = codec::RateMode::variable;
  c.variable_seed = 17;
  const auto a = codec::frame_qualities(c, 30), b = codec::frame_qualities(c, 30);
  EXPECT_EQ(a, b);
  for (int q : a) {
    EXPECT_GE(q, 65);
    EXPECT_LE(q, 85);
  }
  c.rate_mode = codec::RateMode::constant_q;
  for (int q : codec::frame_qualities(c, 5)) EXPECT_EQ(q, 75);
}

TEST(Codec, VideoBitrateProxy) {
  const Video v = synthetic::generate_video(5, 4, 16, 16);
  const auto cv = codec::compress_video(v, {});
  std::int64_t total = 0;
  for (auto b : cv.frame_bits) total += b;
  EXPECT_DOUBLE_EQ(cv.bitrate_proxy, static_cast<double>(total) / (4.0 / 24.0));
  EXPECT_THROW(codec::parse_rate_mode("vbr"), std::invalid_argument);
}

TEST(Codec, RejectsNonBlockFrames) { EXPECT_THROW(codec::compress_frame(Frame(12, 8), 50), ShapeError); }

TEST(Container, RoundTripIsByteExact) {
  const Video v = synthetic::generate_video(6, 5, 24, 16);
  const auto bytes = encode_container(v);
  EXPECT_EQ(bytes.size(), 32u + 5u * 24 * 16 * 3);
  const Video back = decode_container(bytes);
  EXPECT_EQ(encode_container(back), bytes);
  EXPECT_EQ(back.fps.num, 24u);
}

TEST(Container, TruncationNamesFrame) {
  const Video v = synthetic::generate_video(7, 10, 8, 8);
  auto bytes = encode_container(v);
  bytes.resize(bytes.size() - 10);
  try {
    decode_container(bytes);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 9"), std::string::npos) << e.what();
  }
}

TEST(Container, ErrorsReportOffsets) {
  const Video v = synthetic::generate_video(8, 1, 8, 8);
  auto bytes = encode_container(v);
  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_container(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  EXPECT_THROW(decode_container({}), ParseError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_container(extra), ParseError);
}

TEST(Container, PadsOddSizedFrames) {
  std::vector<std::uint8_t> bytes{'P', 'R', 'M', 'V'};
  for (std::uint32_t v : {1u, 5u, 3u, 3u, 1u, 24u, 1u})
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  for (int i = 0; i < 5 * 3 * 3; ++i) bytes.push_back(static_cast<std::uint8_t>(i));
  const Video v = decode_container(bytes);
  EXPECT_EQ(v.width(), 8);
  EXPECT_EQ(v.height(), 8);
}

}  // namespace
