#ifndef MUFM_IMAGING_HPP
#define MUFM_IMAGING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mufm/error.hpp"
#include "mufm/mask_status.hpp"

namespace mufm {

/// 8-bit interleaved image, row-major, 1 or 3 channels (RGB order).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool valid() const {
    return width >= 1 && height >= 1 && (channels == 1 || channels == 3) &&
           pixels.size() == static_cast<std::size_t>(width) * height * channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct ImageRecord {
  std::string id;
  std::string subject;
  MaskStatus mask_status = MaskStatus::Unknown;
  Image image;
};

/// Real-valued (height, width, channels) array in row-major HWC order.
struct Tensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  Tensor3() = default;
  Tensor3(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        values(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct NormalizeRange {
  double lower = 0.0;
  double upper = 1.0;
};

struct PreprocessConfig {
  int target_size = 224;
  NormalizeRange normalize_range{};
  bool to_grayscale = false;
  double denoise_sigma = 0.0;  // 0 disables denoising

  void validate() const {
    if (target_size < 8) throw Error(ErrorCode::InvalidArgument, "target_size must be >= 8");
    if (!(normalize_range.lower < normalize_range.upper))
      throw Error(ErrorCode::InvalidArgument, "normalize range needs lower < upper");
    if (!(denoise_sigma >= 0.0) || !std::isfinite(denoise_sigma))
      throw Error(ErrorCode::InvalidArgument, "denoise_sigma must be finite and >= 0");
  }
};

namespace detail {

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

// Reflect without repeating the edge sample: -1 -> 1, n -> n-2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Bilinear sample with coordinates clamped to the image (nearest-edge fill).
inline double sample_bilinear(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
  const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

inline bool has_suffix(std::span<const std::uint8_t> b, std::span<const std::uint8_t> tail) {
  return b.size() >= tail.size() && std::equal(tail.begin(), tail.end(), b.end() - tail.size());
}

}  // namespace detail

enum class ImageFormat { Png, Jpeg, Bmp, Unknown };

inline ImageFormat sniff_format(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t png_sig[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::equal(std::begin(png_sig), std::end(png_sig), bytes.begin()))
    return ImageFormat::Png;
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF)
    return ImageFormat::Jpeg;
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return ImageFormat::Bmp;
  return ImageFormat::Unknown;
}

/// Decodes PNG, JPEG or BMP into an RGB or gray 8-bit image. Alpha is
/// dropped and 16-bit samples are scaled down to 8 bits.
inline Image decode_image(std::span<const std::uint8_t> bytes) {
  const ImageFormat fmt = sniff_format(bytes);
  if (fmt == ImageFormat::Unknown)
    throw Error(ErrorCode::UnsupportedFormat, "not a PNG, JPEG or BMP stream");

  // libjpeg and libpng both happily return partial images for truncated
  // input, so require the terminating marker before decoding.
  if (fmt == ImageFormat::Jpeg) {
    std::size_t end = bytes.size();
    while (end > 2 && bytes[end - 1] == 0x00) --end;
    static constexpr std::uint8_t eoi[] = {0xFF, 0xD9};
    if (!detail::has_suffix(bytes.first(end), eoi))
      throw Error(ErrorCode::CorruptStream, "JPEG stream has no end-of-image marker");
  } else if (fmt == ImageFormat::Png) {
    static constexpr std::uint8_t iend[] = {'I', 'E', 'N', 'D', 0xAE, 0x42, 0x60, 0x82};
    if (!detail::has_suffix(bytes, iend))
      throw Error(ErrorCode::CorruptStream, "PNG stream has no IEND chunk");
  }

  cv::Mat decoded;
  try {
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
                      const_cast<std::uint8_t*>(bytes.data()));
    decoded = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::CorruptStream, e.what());
  }
  if (decoded.empty()) throw Error(ErrorCode::CorruptStream, "decoder rejected the stream");

  if (decoded.depth() == CV_16U) decoded.convertTo(decoded, CV_8U, 1.0 / 257.0);
  if (decoded.depth() != CV_8U) throw Error(ErrorCode::UnsupportedFormat, "unsupported sample depth");

  const int src_channels = decoded.channels();
  const int out_channels = src_channels == 1 ? 1 : 3;
  Image out(decoded.cols, decoded.rows, out_channels);
  for (int y = 0; y < decoded.rows; ++y) {
    const std::uint8_t* row = decoded.ptr<std::uint8_t>(y);
    for (int x = 0; x < decoded.cols; ++x) {
      const std::uint8_t* px = row + static_cast<std::size_t>(x) * src_channels;
      if (out_channels == 1) {
        out.at(x, y, 0) = px[0];
      } else if (src_channels == 2) {  // gray + alpha
        out.at(x, y, 0) = out.at(x, y, 1) = out.at(x, y, 2) = px[0];
      } else {  // BGR / BGRA
        out.at(x, y, 0) = px[2];
        out.at(x, y, 1) = px[1];
        out.at(x, y, 2) = px[0];
      }
    }
  }
  return out;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (!img.valid()) throw Error(ErrorCode::InvalidArgument, "cannot encode an invalid image");
  cv::Mat mat(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 1) {
        row[x] = img.at(x, y, 0);
      } else {
        row[3 * x + 0] = img.at(x, y, 2);
        row[3 * x + 1] = img.at(x, y, 1);
        row[3 * x + 2] = img.at(x, y, 0);
      }
    }
  }
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", mat, out)) throw Error(ErrorCode::IoError, "PNG encoding failed");
  return out;
}

/// Bilinear resize to width x height using pixel-center alignment.
inline Image resize(const Image& img, int width, int height) {
  if (!img.valid()) throw Error(ErrorCode::InvalidArgument, "resize: invalid source image");
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidArgument, "resize: target must be positive");
  Image out(width, height, img.channels);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = detail::to_u8(detail::sample_bilinear(img, src_x, src_y, c));
    }
  }
  return out;
}

inline Image resize(const Image& img, int target) { return resize(img, target, target); }

/// Maps 8-bit value v to lower + (v / 255) * (upper - lower).
inline Tensor3 normalize(const Image& img, NormalizeRange range = {}) {
  if (!(range.lower < range.upper))
    throw Error(ErrorCode::InvalidArgument, "normalize: lower must be < upper");
  Tensor3 out(img.height, img.width, img.channels);
  const double span = range.upper - range.lower;
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.values[i] = std::min(range.upper, range.lower + (img.pixels[i] / 255.0) * span);
  return out;
}

/// ITU-R BT.601 luma, rounded.
inline Image to_grayscale(const Image& img) {
  if (img.channels != 3) throw Error(ErrorCode::NotColor, "to_grayscale needs 3 channels");
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y, 0) = detail::to_u8(0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                                      0.114 * img.at(x, y, 2));
  return out;
}

/// Replicates a single gray channel into three identical channels.
inline Image gray_to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.width, img.height, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = img.pixels[i];
  return out;
}

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma); index r is the center.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw Error(ErrorCode::InvalidArgument, "gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& w : k) w /= sum;
  return k;
}

/// Separable Gaussian blur with reflect padding; rounding happens once, at the end.
inline Image gaussian_denoise(const Image& img, double sigma) {
  if (!img.valid()) throw Error(ErrorCode::InvalidArgument, "denoise: invalid image");
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = img.width, h = img.height, ch = img.channels;

  std::vector<double> horiz(img.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += k[t + radius] * img.at(detail::reflect_index(x + t, w), y, c);
        horiz[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }

  Image out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int yy = detail::reflect_index(y + t, h);
          acc += k[t + radius] * horiz[(static_cast<std::size_t>(yy) * w + x) * ch + c];
        }
        out.at(x, y, c) = detail::to_u8(acc);
      }
  return out;
}

struct FlipHorizontal {};
/// Counter-clockwise on screen, about the image center.
struct Rotate { double degrees = 0.0; };
/// factor > 1 magnifies about the center.
struct Zoom { double factor = 1.0; };
/// Content moves by (dx, dy) pixels; +x right, +y down.
struct Shift { double dx = 0.0; double dy = 0.0; };

using Transform = std::variant<FlipHorizontal, Rotate, Zoom, Shift>;

/// Geometric augmentation by inverse mapping with bilinear sampling and
/// nearest-edge fill. Output dimensions equal input dimensions.
inline Image augment(const Image& img, const Transform& transform) {
  if (!img.valid()) throw Error(ErrorCode::InvalidArgument, "augment: invalid image");
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;

  // Maps an output coordinate back to the source coordinate it samples.
  auto source_of = [&](double x, double y) -> std::pair<double, double> {
    return std::visit(
        [&](const auto& t) -> std::pair<double, double> {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, FlipHorizontal>) {
            return {img.width - 1 - x, y};
          } else if constexpr (std::is_same_v<T, Rotate>) {
            const double rad = t.degrees * std::numbers::pi / 180.0;
            const double c = std::cos(rad), s = std::sin(rad);
            const double dx = x - cx, dy = y - cy;
            return {cx + dx * c - dy * s, cy + dx * s + dy * c};
          } else if constexpr (std::is_same_v<T, Zoom>) {
            return {cx + (x - cx) / t.factor, cy + (y - cy) / t.factor};
          } else {
            return {x - t.dx, y - t.dy};
          }
        },
        transform);
  };

  if (const auto* z = std::get_if<Zoom>(&transform); z && !(z->factor > 0.0))
    throw Error(ErrorCode::InvalidArgument, "zoom factor must be positive");
  if (const auto* r = std::get_if<Rotate>(&transform); r && !std::isfinite(r->degrees))
    throw Error(ErrorCode::InvalidArgument, "rotation must be finite");

  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto [sx, sy] = source_of(x, y);
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = detail::to_u8(detail::sample_bilinear(img, sx, sy, c));
    }
  return out;
}

/// Sampling ranges for randomized dataset expansion.
struct AugmentRanges {
  double max_rotation_degrees = 15.0;
  double min_zoom = 0.9;
  double max_zoom = 1.1;
  double max_shift_fraction = 0.10;
  double flip_probability = 0.5;
};

/// Draws one random transform chain. Uses raw 64-bit draws so the sequence
/// is identical across standard library implementations for a given seed.
inline std::vector<Transform> sample_transforms(std::mt19937_64& rng, int width, int height,
                                                const AugmentRanges& ranges = {}) {
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(); };
  std::vector<Transform> chain;
  if (unit() < ranges.flip_probability) chain.emplace_back(FlipHorizontal{});
  chain.emplace_back(Rotate{uniform(-ranges.max_rotation_degrees, ranges.max_rotation_degrees)});
  chain.emplace_back(Zoom{uniform(ranges.min_zoom, ranges.max_zoom)});
  chain.emplace_back(Shift{uniform(-ranges.max_shift_fraction, ranges.max_shift_fraction) * width,
                           uniform(-ranges.max_shift_fraction, ranges.max_shift_fraction) * height});
  return chain;
}

inline Image augment(Image img, std::span<const Transform> chain) {
  for (const Transform& t : chain) img = augment(img, t);
  return img;
}

/// grayscale (optional) -> resize -> denoise (optional) -> 3-channel -> normalize.
inline Tensor3 preprocess(const ImageRecord& rec, const PreprocessConfig& cfg = {}) {
  cfg.validate();
  if (!rec.image.valid()) throw Error(ErrorCode::InvalidArgument, "record '" + rec.id + "' has an invalid image");
  Image img = rec.image;
  if (cfg.to_grayscale && img.channels == 3) img = to_grayscale(img);
  img = resize(img, cfg.target_size);
  if (cfg.denoise_sigma > 0.0) img = gaussian_denoise(img, cfg.denoise_sigma);
  img = gray_to_rgb(img);
  return normalize(img, cfg.normalize_range);
}

}  // namespace mufm

#endif  // MUFM_IMAGING_HPP
