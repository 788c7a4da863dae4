#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "fixtures.hpp"
#include "narrate/io.hpp"

using namespace narrate;

namespace {

Bytes text_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

void append_float(Bytes& b, float f, bool big_endian) {
  std::uint8_t raw[4];
  std::memcpy(raw, &f, 4);
  if (big_endian) std::swap(raw[0], raw[3]), std::swap(raw[1], raw[2]);
  b.insert(b.end(), raw, raw + 4);
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::io;
}

}  // namespace

TEST(NormalCodes, MidpointDecodesToForward) {
  const auto n = decode_normal(NormalCode{32767, 32767, 65535});
  ASSERT_TRUE(n);
  EXPECT_NEAR(n->x, 0, 1e-4);
  EXPECT_NEAR(n->y, 0, 1e-4);
  EXPECT_NEAR(n->z, 1, 1e-8);
}

TEST(NormalCodes, AxisCase) {
  const auto n = decode_normal(NormalCode{65535, 32767, 32767});
  ASSERT_TRUE(n);
  EXPECT_NEAR(n->x, 1, 1e-8);
  EXPECT_NEAR(n->y, 0, 1e-4);
}

TEST(NormalCodes, ForwardEncodesToRoundedMidpoint) {
  EXPECT_EQ(encode_normal({0, 0, 1}), (NormalCode{32768, 32768, 65535}));
  EXPECT_EQ(quantize_normal({0, 0, 1}), (NormalCode{32768, 32768, 65535}));
}

TEST(NormalCodes, SentinelAndShortVectorsAreUnmasked) {
  EXPECT_FALSE(decode_normal(NormalCode{0, 0, 0}));
  EXPECT_FALSE(decode_normal(NormalCode{32767, 32767, 32767}));
}

TEST(NormalCodes, EncodedCodeIsAFixedPoint) {
  std::mt19937_64 rng(7);
  double worst = 0;
  for (int i = 0; i < 20000; ++i) {
    const Vec3 n = fixtures::random_unit(rng);
    const NormalCode c = encode_normal(n);
    const auto back = decode_normal(c);
    ASSERT_TRUE(back);
    EXPECT_EQ(encode_normal(*back), c);
    worst = std::max({worst, std::abs(back->x - n.x), std::abs(back->y - n.y), std::abs(back->z - n.z)});
  }
  EXPECT_LE(worst, 2.0 / 65535);
}

TEST(NormalPng, WriteReadIsByteIdentical) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution hole(0.1);
  for (int k = 0; k < 100; ++k) {
    NormalMap n(9, 7);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x)
        if (!hole(rng)) n.set(x, y, fixtures::random_unit(rng));
    const Bytes first = encode_normal_png(n);
    const NormalMap back = decode_normal_png(first);
    EXPECT_EQ(back.mask, n.mask);
    EXPECT_TRUE(back.satisfies_invariants(1e-12));
    EXPECT_EQ(encode_normal_png(back), first);
  }
}

TEST(NormalPng, UnmaskedPixelsAreZeroChannels) {
  NormalMap n(2, 1);
  n.set(0, 0, {0, 0, 1});
  const NormalMap back = decode_normal_png(encode_normal_png(n));
  EXPECT_TRUE(back.valid(0, 0));
  EXPECT_FALSE(back.valid(1, 0));
  EXPECT_EQ(back.at(1, 0), (Vec3{0, 0, 0}));
}

TEST(NormalPng, EightBitInputIsUnsupported) {
  const Bytes png = encode_rgb_png(RgbImage(4, 4, ColorSpace::srgb8, Rgb{0.5, 0.5, 1}));
  EXPECT_EQ(code_of([&] { decode_normal_png(png); }), ErrorCode::unsupported);
}

TEST(NormalPng, GarbageIsFormatError) {
  const Bytes junk = text_bytes("definitely not a png file");
  EXPECT_EQ(code_of([&] { decode_normal_png(junk); }), ErrorCode::format);
  Bytes truncated = encode_normal_png(NormalMap(4, 4));
  truncated.resize(truncated.size() / 2);
  EXPECT_EQ(code_of([&] { decode_normal_png(truncated); }), ErrorCode::format);
}

TEST(ColorPng, EightBitRoundTripIsExact) {
  std::mt19937_64 rng(3);
  const RgbImage img = fixtures::random_srgb8(13, 5, rng);
  const RgbImage back = decode_rgb_png(encode_rgb_png(img));
  EXPECT_EQ(back, img);
}

TEST(MaskPng, RoundTrip) {
  Mask m(6, 4);
  m.set(1, 1);
  m.set(5, 3);
  EXPECT_EQ(decode_mask_png(encode_mask_png(m)), m);
}

TEST(Pfm, SinglePixelGrey) {
  Bytes b = text_bytes("Pf\n1 1\n-1.0\n");
  append_float(b, 3.5f, false);
  const PfmImage img = decode_pfm(b);
  ASSERT_TRUE(std::holds_alternative<HeightField>(img));
  EXPECT_EQ(std::get<HeightField>(img).z(0, 0), 3.5);
  EXPECT_TRUE(std::get<HeightField>(img).mask.test(0, 0));
}

TEST(Pfm, BigEndianIsSwapped) {
  Bytes b = text_bytes("Pf\n2 1\n1.0\n");
  append_float(b, 3.5f, true);
  append_float(b, -2.25f, true);
  const auto h = std::get<HeightField>(decode_pfm(b));
  EXPECT_EQ(h.z(0, 0), 3.5);
  EXPECT_EQ(h.z(1, 0), -2.25);
}

TEST(Pfm, RowsAreStoredBottomUp) {
  Bytes b = text_bytes("Pf\n1 2\n-1.0\n");
  append_float(b, 1.0f, false);  // bottom row
  append_float(b, 2.0f, false);
  const auto h = std::get<HeightField>(decode_pfm(b));
  EXPECT_EQ(h.z(0, 0), 2.0);
  EXPECT_EQ(h.z(0, 1), 1.0);
}

TEST(Pfm, WriteReadIsByteExact) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-100, 100);
  HeightField h(7, 3);
  for (std::size_t i = 0; i < h.z.size(); ++i) {
    h.z[i] = u(rng);
    h.mask[i] = 1;
  }
  const Bytes grey = encode_pfm(h);
  EXPECT_EQ(encode_pfm(std::get<HeightField>(decode_pfm(grey))), grey);

  RgbImage c(4, 5, ColorSpace::linear);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = {u(rng), u(rng), u(rng)};
  for (std::size_t i = 0; i < c.size(); ++i)
    for (int k = 0; k < 3; ++k) c[i][k] = static_cast<float>(c[i][k]);
  const Bytes colour = encode_pfm(c);
  const auto back = std::get<RgbImage>(decode_pfm(colour));
  EXPECT_EQ(back, c);
  EXPECT_EQ(encode_pfm(back), colour);
}

TEST(Pfm, RejectsBadInput) {
  Bytes bad_magic = text_bytes("P7\n1 1\n-1.0\n");
  append_float(bad_magic, 1.0f, false);
  EXPECT_EQ(code_of([&] { decode_pfm(bad_magic); }), ErrorCode::format);

  Bytes nan = text_bytes("Pf\n1 1\n-1.0\n");
  append_float(nan, std::numeric_limits<float>::quiet_NaN(), false);
  EXPECT_EQ(code_of([&] { decode_pfm(nan); }), ErrorCode::format);

  Bytes short_data = text_bytes("PF\n2 2\n-1.0\n");
  append_float(short_data, 1.0f, false);
  EXPECT_EQ(code_of([&] { decode_pfm(short_data); }), ErrorCode::format);

  Bytes huge = text_bytes("Pf\n9000 1\n-1.0\n");
  EXPECT_EQ(code_of([&] { decode_pfm(huge); }), ErrorCode::limit);
}

TEST(ColorSpaces, Endpoints) {
  EXPECT_EQ(srgb_eotf(0.0), 0.0);
  EXPECT_EQ(srgb_eotf(1.0), 1.0);
  EXPECT_EQ(srgb_oetf(0.0), 0.0);
  EXPECT_NEAR(srgb_oetf(1.0), 1.0, 1e-15);
}

TEST(ColorSpaces, MidGrey) {
  // ((0.5 + 0.055) / 1.055)^2.4
  EXPECT_NEAR(srgb_eotf(0.5), 0.214041140, 1e-9);
}

TEST(ColorSpaces, SweepRoundTrip) {
  RgbImage img(256, 1, ColorSpace::linear);
  for (int i = 0; i < 256; ++i) img(i, 0) = {i / 255.0, i / 255.0, i / 255.0};
  const RgbImage back = srgb_to_linear(linear_to_srgb(img));
  for (int i = 0; i < 256; ++i) EXPECT_NEAR(back(i, 0).g, i / 255.0, 1e-6);

  RgbImage s(256, 1, ColorSpace::srgb8);
  for (int i = 0; i < 256; ++i) s(i, 0) = {i / 255.0, i / 255.0, i / 255.0};
  const RgbImage s2 = linear_to_srgb(srgb_to_linear(s));
  for (int i = 0; i < 256; ++i) EXPECT_NEAR(s2(i, 0).r, i / 255.0, 0.5 / 255);
}

TEST(ColorSpaces, EightBitRoundTripThroughLinearIsExact) {
  RgbImage s(256, 1, ColorSpace::srgb8);
  for (int i = 0; i < 256; ++i) s(i, 0) = {i / 255.0, i / 255.0, i / 255.0};
  EXPECT_EQ(decode_rgb_png(encode_rgb_png(srgb_to_linear(s))), s);
}

TEST(ColorSpaces, DoubleConversionIsContractError) {
  const RgbImage lin(2, 2, ColorSpace::linear);
  EXPECT_EQ(code_of([&] { srgb_to_linear(lin); }), ErrorCode::contract);
  const RgbImage s(2, 2, ColorSpace::srgb8);
  EXPECT_EQ(code_of([&] { linear_to_srgb(s); }), ErrorCode::contract);
}

TEST(Grid, DimensionLimit) {
  EXPECT_EQ(code_of([] { Grid<double>(kMaxDimension + 1, 1); }), ErrorCode::limit);
  EXPECT_NO_THROW(Grid<std::uint8_t>(kMaxDimension, 1));
}

TEST(NormalMapType, RenormalizeIsIdempotent) {
  std::mt19937_64 rng(9);
  NormalMap n(5, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) n.set(x, y, fixtures::random_unit(rng) * 3.0);
  n.renormalize();
  const NormalMap once = n;
  n.renormalize();
  EXPECT_EQ(n.normals, once.normals);
  EXPECT_TRUE(n.satisfies_invariants());
}

TEST(Morphology, RingAndErosion) {
  const Mask full(5, 5, true);
  const Mask ring = inner_ring(full);
  EXPECT_EQ(ring.count(), 16u);
  EXPECT_EQ(erode(full, 1).count(), 9u);
  EXPECT_EQ(dilate(erode(full, 2), 1).count(), 9u);
  EXPECT_EQ(frame_border(5, 5), ring);
}

TEST(PullPush, KnownPixelsUnchangedAndConstantsPreserved) {
  RgbImage img(17, 11, ColorSpace::linear, Rgb{0.25, 0.5, 0.75});
  Mask known(17, 11, true);
  for (int y = 3; y < 8; ++y)
    for (int x = 4; x < 12; ++x) {
      known.set(x, y, false);
      img(x, y) = {};
    }
  const RgbImage filled = pull_push_fill(img, known);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (known[i]) EXPECT_EQ(filled[i], img[i]);
    EXPECT_NEAR(filled[i].r, 0.25, 1e-12);
    EXPECT_NEAR(filled[i].b, 0.75, 1e-12);
  }
}

TEST(Sampling, BilinearAtCentresAndMidpoints) {
  RgbImage img(2, 1, ColorSpace::linear);
  img(0, 0) = {0, 0, 0};
  img(1, 0) = {1, 2, 4};
  EXPECT_EQ(sample_bilinear(img, 1, 0), img(1, 0));
  EXPECT_EQ(sample_bilinear(img, 0.5, 0), (Rgb{0.5, 1, 2}));
  EXPECT_EQ(sample_nearest(img, 0.6, 0), img(1, 0));
  EXPECT_EQ(sample_bilinear(img, -3, 5), img(0, 0));
}
