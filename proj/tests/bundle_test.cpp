#include <cstring>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "pseg/bundle.hpp"
#include "pseg/errors.hpp"
#include "support.hpp"

namespace pseg {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

// Byte stream an external writer would produce for the documented layout.
std::vector<std::uint8_t> hand_built(const std::string& name, const std::vector<std::uint64_t>& dims,
                                     const std::vector<float>& values) {
  std::vector<std::uint8_t> out = {'P', 'S', 'T', 'B'};
  put_u32(out, 1);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, 0);
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u64(out, d);
  for (float v : values) put_f32(out, v);
  return out;
}

TEST(Bundle, ReadsExternallyWrittenLayout) {
  const auto bytes = hand_built("dec.mask_tokens", {2, 3}, {1, 2, 3, 4, 5, -6.5f});
  const TensorBundle b = TensorBundle::deserialize(bytes);
  ASSERT_EQ(b.size(), 1u);
  const Tensor& t = b.get("dec.mask_tokens");
  EXPECT_EQ(t.dims(), (Shape{2, 3}));
  EXPECT_EQ(t.values(), (std::vector<float>{1, 2, 3, 4, 5, -6.5f}));
  EXPECT_EQ(b.serialize(), bytes);
}

TEST(Bundle, RoundTripIsBitwiseIncludingNaNPayloads) {
  Rng rng(1);
  TensorBundle b;
  Tensor odd({3}, std::vector<float>{-0.0f, std::numeric_limits<float>::quiet_NaN(),
                                     std::numeric_limits<float>::infinity()});
  b.add("odd", odd);
  b.add("w", testing::random_tensor(rng, {4, 5, 2}));
  const TensorBundle back = TensorBundle::deserialize(b.serialize());
  EXPECT_TRUE(bitwise_equal(back.get("odd"), odd));
  EXPECT_TRUE(bitwise_equal(back.get("w"), b.get("w")));
  EXPECT_EQ(back.checksum(), b.checksum());
  ASSERT_EQ(back.entries().size(), 2u);
  EXPECT_EQ(back.entries()[0].name, "odd");
}

TEST(Bundle, FileRoundTrip) {
  testing::TempDir dir;
  TensorBundle b;
  b.add("a", Tensor({2}, std::vector<float>{1, 2}));
  b.write_file(dir.path() / "x.pstb");
  EXPECT_EQ(TensorBundle::read_file(dir.path() / "x.pstb").checksum(), b.checksum());
  EXPECT_THROW(TensorBundle::read_file(dir.path() / "missing.pstb"), IoError);
}

TEST(Bundle, DuplicateNameRejected) {
  TensorBundle b;
  b.add("a", Tensor({1}));
  EXPECT_THROW(b.add("a", Tensor({1})), FormatError);
  auto bytes = hand_built("a", {1}, {1});
  // Append a second copy of the same entry and bump the count.
  const std::vector<std::uint8_t> entry(bytes.begin() + 12, bytes.end());
  bytes.insert(bytes.end(), entry.begin(), entry.end());
  bytes[8] = 2;
  try {
    TensorBundle::deserialize(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.tensor_name(), "a");
  }
}

TEST(Bundle, BadMagicAndVersion) {
  auto bytes = hand_built("a", {1}, {1});
  bytes[0] = 'X';
  EXPECT_THROW(TensorBundle::deserialize(bytes), FormatError);
  bytes = hand_built("a", {1}, {1});
  bytes[4] = 9;
  EXPECT_THROW(TensorBundle::deserialize(bytes), FormatError);
}

TEST(Bundle, TruncationNamesTensorAndOffset) {
  const auto bytes = hand_built("enc.pos_embed", {2, 2}, {1, 2, 3, 4});
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 3);
  try {
    TensorBundle::deserialize(cut);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.tensor_name(), "enc.pos_embed");
    // Payload starts after 12-byte header, name, dtype, rank and two u64 extents.
    EXPECT_EQ(e.offset(), 12u + 4u + 13u + 4u + 4u + 16u);
    EXPECT_NE(std::string(e.what()).find("enc.pos_embed"), std::string::npos);
  }
}

TEST(Bundle, RejectsUnknownDtypeZeroExtentAndTrailingBytes) {
  auto bytes = hand_built("a", {1}, {1});
  bytes[12 + 4 + 1] = 1;  // dtype
  EXPECT_THROW(TensorBundle::deserialize(bytes), FormatError);
  EXPECT_THROW(TensorBundle::deserialize(hand_built("a", {0}, {})), FormatError);
  bytes = hand_built("a", {1}, {1});
  bytes.push_back(0);
  EXPECT_THROW(TensorBundle::deserialize(bytes), FormatError);
}

TEST(Bundle, LookupSetErase) {
  TensorBundle b;
  EXPECT_THROW(b.get("nope"), LookupError);
  b.add("x", Tensor({1}, 1.0f));
  b.add("y", Tensor({1}, 2.0f));
  b.set("x", Tensor({2}, 3.0f));
  EXPECT_EQ(b.entries()[0].name, "x");
  EXPECT_EQ(b.get("x").size(), 2u);
  b.erase("x");
  EXPECT_FALSE(b.contains("x"));
  EXPECT_EQ(b.get("y")[0], 2.0f);
}

TEST(Bundle, Fnv1aKnownVectors) {
  const std::string a = "a";
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64({reinterpret_cast<const std::uint8_t*>(a.data()), 1}), 0xaf63dc4c8601ec8cULL);
}

}  // namespace
}  // namespace pseg
