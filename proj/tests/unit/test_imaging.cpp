#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "mufm/imaging.hpp"
#include "test_util.hpp"

using namespace mufm;
using mufm::testing::random_image;

namespace {

std::vector<std::uint8_t> cv_encode(const cv::Mat& m, const std::string& ext) {
  std::vector<std::uint8_t> out;
  cv::imencode(ext, m, out);
  return out;
}

}  // namespace

// ---- decode ---------------------------------------------------------------

TEST(Decode, SolidWhitePng) {
  const Image white(2, 2, 3, 255);
  const Image back = decode_image(encode_png(white));
  EXPECT_EQ(back.width, 2);
  EXPECT_EQ(back.height, 2);
  EXPECT_EQ(back.channels, 3);
  EXPECT_TRUE(std::all_of(back.pixels.begin(), back.pixels.end(), [](auto p) { return p == 255; }));
}

TEST(Decode, PngReencodeIsLossless) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
    const Image img = random_image(rng, w, h, trial % 2 ? 3 : 1);
    const Image once = decode_image(encode_png(img));
    EXPECT_EQ(once, img);
    EXPECT_EQ(decode_image(encode_png(once)), once);
  }
}

TEST(Decode, ChannelOrderIsRgb) {
  cv::Mat bgr(1, 1, CV_8UC3, cv::Scalar(10, 20, 30));  // B, G, R
  const Image img = decode_image(cv_encode(bgr, ".png"));
  EXPECT_EQ(img.at(0, 0, 0), 30);
  EXPECT_EQ(img.at(0, 0, 1), 20);
  EXPECT_EQ(img.at(0, 0, 2), 10);
}

TEST(Decode, JpegAndBmp) {
  cv::Mat m(17, 23, CV_8UC3, cv::Scalar(100, 150, 200));
  const Image j = decode_image(cv_encode(m, ".jpg"));
  EXPECT_EQ(j.width, 23);
  EXPECT_EQ(j.height, 17);
  const Image b = decode_image(cv_encode(m, ".bmp"));
  EXPECT_EQ(b.at(5, 5, 0), 200);
  EXPECT_EQ(b.at(5, 5, 2), 100);
}

TEST(Decode, GrayscalePngStaysSingleChannel) {
  cv::Mat g(4, 4, CV_8UC1, cv::Scalar(77));
  const Image img = decode_image(cv_encode(g, ".png"));
  EXPECT_EQ(img.channels, 1);
  EXPECT_EQ(img.at(3, 3, 0), 77);
}

TEST(Decode, TruncatedJpegIsCorrupt) {
  cv::Mat m(32, 32, CV_8UC3, cv::Scalar(1, 2, 3));
  auto bytes = cv_encode(m, ".jpg");
  bytes.resize(bytes.size() / 2);
  try {
    decode_image(bytes);
    FAIL() << "expected CorruptStream";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptStream);
  }
}

TEST(Decode, TruncatedPngIsCorrupt) {
  auto bytes = encode_png(Image(8, 8, 3, 9));
  bytes.resize(bytes.size() - 10);
  try {
    decode_image(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptStream);
  }
}

TEST(Decode, UnknownBytesAreUnsupported) {
  const std::vector<std::uint8_t> gif = {'G', 'I', 'F', '8', '9', 'a', 0, 0};
  try {
    decode_image(gif);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedFormat);
  }
  EXPECT_THROW(decode_image(std::vector<std::uint8_t>{}), Error);
}

// ---- resize ---------------------------------------------------------------

TEST(Resize, AnyShapeToTarget) {
  std::mt19937_64 rng(1);
  const Image out = resize(random_image(rng, 100, 200, 3), 224);
  EXPECT_EQ(out.width, 224);
  EXPECT_EQ(out.height, 224);
  EXPECT_EQ(out.channels, 3);
}

TEST(Resize, SameSizeIsIdentity) {
  std::mt19937_64 rng(2);
  const Image img = random_image(rng, 31, 31, 3);
  EXPECT_EQ(resize(img, 31), img);
}

TEST(Resize, SinglePixelFillsTarget) {
  Image one(1, 1, 3);
  one.at(0, 0, 0) = 12;
  one.at(0, 0, 1) = 34;
  one.at(0, 0, 2) = 56;
  const Image out = resize(one, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      EXPECT_EQ(out.at(x, y, 0), 12);
      EXPECT_EQ(out.at(x, y, 2), 56);
    }
}

TEST(Resize, ConstantImagesStayConstant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const auto v = static_cast<std::uint8_t>(rng() & 0xFF);
    const Image img(1 + static_cast<int>(rng() % 50), 1 + static_cast<int>(rng() % 50), 1, v);
    const Image out = resize(img, 8 + static_cast<int>(rng() % 60));
    EXPECT_TRUE(std::all_of(out.pixels.begin(), out.pixels.end(), [v](auto p) { return p == v; }));
  }
}

TEST(Resize, RectangularTarget) {
  const Image out = resize(Image(10, 10, 3, 5), 7, 3);
  EXPECT_EQ(out.width, 7);
  EXPECT_EQ(out.height, 3);
}

// ---- normalize ------------------------------------------------------------

TEST(Normalize, UnitRangeEndpointsAndMidpoint) {
  Image img(3, 1, 1);
  img.pixels = {255, 0, 51};
  const Tensor3 t = normalize(img, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(t.values[0], 1.0);
  EXPECT_DOUBLE_EQ(t.values[1], 0.0);
  EXPECT_NEAR(t.values[2], 0.2, 1e-15);
}

TEST(Normalize, AllValuesInRangeAndMonotone) {
  Image ramp(256, 1, 1);
  for (int i = 0; i < 256; ++i) ramp.pixels[i] = static_cast<std::uint8_t>(i);
  for (const NormalizeRange r : {NormalizeRange{0, 1}, NormalizeRange{-1, 1}, NormalizeRange{-0.3, 7.25}}) {
    const Tensor3 t = normalize(ramp, r);
    for (int i = 0; i < 256; ++i) {
      EXPECT_GE(t.values[i], r.lower);
      EXPECT_LE(t.values[i], r.upper);
      if (i) { EXPECT_GT(t.values[i], t.values[i - 1]); }
    }
    EXPECT_DOUBLE_EQ(t.values[0], r.lower);
    EXPECT_DOUBLE_EQ(t.values[255], r.upper);
  }
}

TEST(Normalize, RejectsEmptyRange) {
  EXPECT_THROW(normalize(Image(1, 1, 1), {1.0, 1.0}), Error);
}

// ---- grayscale ------------------------------------------------------------

TEST(Grayscale, Examples) {
  Image img(3, 1, 3);
  img.pixels = {255, 255, 255, 255, 0, 0, 0, 0, 255};
  const Image g = to_grayscale(img);
  EXPECT_EQ(g.channels, 1);
  EXPECT_EQ(g.pixels[0], 255);
  EXPECT_EQ(g.pixels[1], 76);  // round(0.299 * 255) = round(76.245)
  EXPECT_EQ(g.pixels[2], 29);  // round(0.114 * 255) = round(29.07)
}

TEST(Grayscale, GrayIsFixedPoint) {
  Image img(256, 1, 3);
  for (int g = 0; g < 256; ++g) img.at(g, 0, 0) = img.at(g, 0, 1) = img.at(g, 0, 2) = static_cast<std::uint8_t>(g);
  const Image out = to_grayscale(img);
  for (int g = 0; g < 256; ++g) EXPECT_EQ(out.pixels[g], g);
  // Idempotent on replicated gray.
  EXPECT_EQ(to_grayscale(gray_to_rgb(out)), out);
}

TEST(Grayscale, NeedsColor) {
  try {
    to_grayscale(Image(2, 2, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotColor);
  }
}

// ---- gaussian denoise -----------------------------------------------------

TEST(Gaussian, KernelIsNormalizedWithRadiusThreeSigma) {
  for (double sigma : {0.1, 0.5, 1.0, 1.7, 3.0}) {
    const auto k = gaussian_kernel(sigma);
    EXPECT_EQ(k.size(), 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1);
    double s = 0;
    for (double w : k) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_THROW(gaussian_kernel(0.0), Error);
}

TEST(Gaussian, ConstantImagePreserved) {
  for (double sigma : {0.3, 1.0, 2.5}) {
    const Image img(13, 9, 3, 201);
    EXPECT_EQ(gaussian_denoise(img, sigma), img);
  }
}

TEST(Gaussian, ImpulseResponseMatchesExplicitKernel) {
  // Oracle: kernel built from the closed form here, then an explicit 2-D
  // convolution of a centered impulse (no border effects at this size).
  const double sigma = 1.5;
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k;
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k.push_back(std::exp(-i * i / (2 * sigma * sigma)));
    sum += k.back();
  }
  for (double& w : k) w /= sum;

  const int n = 21, c = n / 2;
  Image img(n, n, 1, 0);
  img.at(c, c, 0) = 255;
  const Image out = gaussian_denoise(img, sigma);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double expected = 0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
          if (y + dy == c && x + dx == c) expected += 255.0 * k[dy + radius] * k[dx + radius];
      EXPECT_LE(std::abs(out.at(x, y, 0) - expected), 0.5 + 1e-9) << x << "," << y;
    }
}

TEST(Gaussian, TinySigmaChangesLessThanOneLevel) {
  std::mt19937_64 rng(5);
  const Image img = random_image(rng, 40, 30, 3);
  const Image out = gaussian_denoise(img, 0.1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_LT(std::abs(out.pixels[i] - img.pixels[i]), 1);
}

TEST(Gaussian, StaysWithinInputRange) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    Image img = random_image(rng, 20, 20, 1);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(50 + p % 100);
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const Image out = gaussian_denoise(img, 0.5 + trial * 0.3);
    for (auto p : out.pixels) {
      EXPECT_GE(p, *lo);
      EXPECT_LE(p, *hi);
    }
  }
}

TEST(Gaussian, HandlesImagesSmallerThanKernel) {
  const Image img(2, 1, 1, 40);
  EXPECT_EQ(gaussian_denoise(img, 3.0), img);
  EXPECT_EQ(detail::reflect_index(-1, 5), 1);
  EXPECT_EQ(detail::reflect_index(5, 5), 3);
  EXPECT_EQ(detail::reflect_index(-7, 3), 1);
}

// ---- augment --------------------------------------------------------------

TEST(Augment, FlipIsInvolution) {
  std::mt19937_64 rng(7);
  const Image img = random_image(rng, 17, 9, 3);
  const Image once = augment(img, FlipHorizontal{});
  EXPECT_NE(once, img);
  EXPECT_EQ(augment(once, FlipHorizontal{}), img);
  EXPECT_EQ(once.at(0, 3, 1), img.at(16, 3, 1));
}

TEST(Augment, IdentityParametersArePixelExact) {
  std::mt19937_64 rng(8);
  for (int c : {1, 3}) {
    const Image img = random_image(rng, 24, 19, c);
    EXPECT_EQ(augment(img, Rotate{0.0}), img);
    EXPECT_EQ(augment(img, Zoom{1.0}), img);
    EXPECT_EQ(augment(img, Shift{0.0, 0.0}), img);
  }
}

TEST(Augment, ShiftMovesImpulse) {
  Image img(9, 7, 1, 0);
  img.at(3, 4, 0) = 255;
  const Image out = augment(img, Shift{1.0, 0.0});
  EXPECT_EQ(out.at(4, 4, 0), 255);
  EXPECT_EQ(out.at(3, 4, 0), 0);
  const Image down = augment(img, Shift{-2.0, 1.0});
  EXPECT_EQ(down.at(1, 5, 0), 255);
}

TEST(Augment, RotateQuarterTurnCounterClockwise) {
  Image img(5, 5, 1, 0);
  img.at(3, 2, 0) = 255;  // right of center
  const Image out = augment(img, Rotate{90.0});
  EXPECT_EQ(out.at(2, 1, 0), 255);  // now above center
  int lit = 0;
  for (auto p : out.pixels) lit += p > 0;
  EXPECT_EQ(lit, 1);
}

TEST(Augment, ZoomAboutCenter) {
  Image img(5, 5, 1, 0);
  img.at(3, 2, 0) = 200;
  const Image out = augment(img, Zoom{2.0});
  EXPECT_EQ(out.at(4, 2, 0), 200);  // offset +1 from center doubles to +2
  EXPECT_EQ(out.at(2, 2, 0), 0);
  EXPECT_THROW(augment(img, Zoom{0.0}), Error);
}

TEST(Augment, OutOfBoundsTakesEdgeValue) {
  Image img(4, 1, 1);
  img.pixels = {10, 20, 30, 40};
  const Image out = augment(img, Shift{2.0, 0.0});
  EXPECT_EQ(out.pixels, (std::vector<std::uint8_t>{10, 10, 10, 20}));
}

TEST(Augment, SampledChainsAreSeededAndKeepDims) {
  std::mt19937_64 a(42), b(42);
  std::mt19937_64 rng(9);
  const Image img = random_image(rng, 30, 40, 3);
  for (int i = 0; i < 5; ++i) {
    const auto ca = sample_transforms(a, img.width, img.height);
    const auto cb = sample_transforms(b, img.width, img.height);
    const Image oa = augment(img, ca);
    EXPECT_EQ(oa, augment(img, cb));
    EXPECT_EQ(oa.width, 30);
    EXPECT_EQ(oa.height, 40);
    for (const Transform& t : ca) {
      if (auto* r = std::get_if<Rotate>(&t)) { EXPECT_LE(std::abs(r->degrees), 15.0); }
      if (auto* z = std::get_if<Zoom>(&t)) {
        EXPECT_GE(z->factor, 0.9);
        EXPECT_LE(z->factor, 1.1);
      }
      if (auto* s = std::get_if<Shift>(&t)) {
        EXPECT_LE(std::abs(s->dx), 3.0);
        EXPECT_LE(std::abs(s->dy), 4.0);
      }
    }
  }
}

// ---- preprocess -----------------------------------------------------------

TEST(Preprocess, DefaultProducesExtractorTensor) {
  std::mt19937_64 rng(10);
  const ImageRecord rec{"r", "s", MaskStatus::Masked, random_image(rng, 100, 200, 3)};
  const Tensor3 t = preprocess(rec, {});
  EXPECT_EQ(t.height, 224);
  EXPECT_EQ(t.width, 224);
  EXPECT_EQ(t.channels, 3);
  for (double v : t.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Preprocess, SolidWhiteIsAllOnes) {
  const ImageRecord rec{"w", "s", MaskStatus::Unmasked, Image(37, 51, 3, 255)};
  const Tensor3 t = preprocess(rec, {});
  EXPECT_TRUE(std::all_of(t.values.begin(), t.values.end(), [](double v) { return v == 1.0; }));
}

TEST(Preprocess, GrayscaleReplicatedAcrossChannels) {
  Image red(10, 10, 3);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) red.at(x, y, 0) = 255;
  PreprocessConfig cfg;
  cfg.to_grayscale = true;
  const Tensor3 t = preprocess({"r", "s", MaskStatus::Unknown, red}, cfg);
  ASSERT_EQ(t.channels, 3);
  for (double v : t.values) EXPECT_DOUBLE_EQ(v, 76.0 / 255.0);
}

TEST(Preprocess, GrayInputIsReplicatedEvenWithoutGrayscaleFlag) {
  const Tensor3 t = preprocess({"g", "s", MaskStatus::Unknown, Image(5, 5, 1, 51)}, {});
  EXPECT_EQ(t.channels, 3);
  EXPECT_NEAR(t.values[0], 0.2, 1e-15);
}

TEST(Preprocess, DenoiseKeepsDims) {
  std::mt19937_64 rng(12);
  PreprocessConfig cfg;
  cfg.denoise_sigma = 1.0;
  cfg.target_size = 32;
  const Tensor3 t = preprocess({"d", "s", MaskStatus::Unknown, random_image(rng, 50, 40, 3)}, cfg);
  EXPECT_EQ(t.height, 32);
  EXPECT_EQ(t.channels, 3);
}

TEST(Preprocess, ConfigValidation) {
  const ImageRecord rec{"x", "s", MaskStatus::Unknown, Image(4, 4, 3)};
  PreprocessConfig small;
  small.target_size = 7;
  EXPECT_THROW(preprocess(rec, small), Error);
  PreprocessConfig bad_range;
  bad_range.normalize_range = {1.0, 0.0};
  EXPECT_THROW(preprocess(rec, bad_range), Error);
  PreprocessConfig neg;
  neg.denoise_sigma = -1;
  EXPECT_THROW(preprocess(rec, neg), Error);
}
