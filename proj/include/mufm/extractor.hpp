#ifndef MUFM_EXTRACTOR_HPP
#define MUFM_EXTRACTOR_HPP

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "mufm/embedding.hpp"
#include "mufm/embedding_file.hpp"
#include "mufm/error.hpp"
#include "mufm/imaging.hpp"

namespace mufm {

enum class InputLayout { HWC, CHW };
enum class OutputKind { FeatureMap, Vector };
enum class ExtractorMode { ModelFile, Precomputed };

struct ExtractorConfig {
  ExtractorMode mode = ExtractorMode::ModelFile;
  std::optional<std::filesystem::path> model_path;
  InputLayout input_layout = InputLayout::CHW;
  OutputKind output_kind = OutputKind::Vector;
  std::size_t expected_dim = kDefaultEmbeddingDim;
  int input_size = 224;

  void validate() const {
    if (mode == ExtractorMode::ModelFile && !model_path)
      throw Error(ErrorCode::InvalidArgument, "model mode requires a model path");
    if (expected_dim == 0) throw Error(ErrorCode::InvalidArgument, "expected_dim must be positive");
    if (input_size < 1) throw Error(ErrorCode::InvalidArgument, "input_size must be positive");
  }
};

/// Runs an exported ONNX backbone over preprocessed tensors.
///
/// The network is loaded once and never modified afterwards. OpenCV's Net
/// keeps per-forward scratch state, so calls are serialized on a mutex; each
/// call sets its own input and copies the output out before releasing it.
class Extractor {
 public:
  explicit Extractor(ExtractorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.mode != ExtractorMode::ModelFile)
      throw Error(ErrorCode::InvalidArgument, "Extractor needs ModelFile mode; use load_precomputed");
    const auto& path = *cfg_.model_path;
    if (!std::filesystem::is_regular_file(path))
      throw Error(ErrorCode::ModelLoadFailure, "no model file at " + path.string());
    try {
      net_ = cv::dnn::readNetFromONNX(path.string());
    } catch (const cv::Exception& e) {
      throw Error(ErrorCode::ModelLoadFailure, e.what());
    }
    if (net_.empty()) throw Error(ErrorCode::ModelLoadFailure, "empty network from " + path.string());
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
  }

  const ExtractorConfig& config() const { return cfg_; }

  /// Tensor in HWC order as produced by preprocess(); returns a unit-norm embedding.
  Embedding extract(const Tensor3& tensor) const {
    const int s = cfg_.input_size;
    if (tensor.height != s || tensor.width != s || tensor.channels != 3 ||
        tensor.values.size() != static_cast<std::size_t>(s) * s * 3)
      throw Error(ErrorCode::ShapeMismatch,
                  "extractor expects (" + std::to_string(s) + "," + std::to_string(s) + ",3), got (" +
                      std::to_string(tensor.height) + "," + std::to_string(tensor.width) + "," +
                      std::to_string(tensor.channels) + ")");

    cv::Mat blob;
    if (cfg_.input_layout == InputLayout::CHW) {
      const int dims[] = {1, 3, s, s};
      blob.create(4, dims, CV_32F);
      float* dst = blob.ptr<float>();
      const std::size_t plane = static_cast<std::size_t>(s) * s;
      for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) dst[c * plane + p] = static_cast<float>(tensor.values[p * 3 + c]);
    } else {
      const int dims[] = {1, s, s, 3};
      blob.create(4, dims, CV_32F);
      float* dst = blob.ptr<float>();
      for (std::size_t i = 0; i < tensor.values.size(); ++i) dst[i] = static_cast<float>(tensor.values[i]);
    }

    cv::Mat out;
    {
      std::lock_guard lock(mu_);
      try {
        net_.setInput(blob);
        out = net_.forward().clone();
      } catch (const cv::Exception& e) {
        throw Error(ErrorCode::InferenceFailure, e.what());
      }
    }
    return Embedding{l2_normalize(to_vector(out)), {}, {}, MaskStatus::Unknown};
  }

  Embedding extract(const ImageRecord& rec, const PreprocessConfig& pre) const {
    PreprocessConfig cfg = pre;
    cfg.target_size = cfg_.input_size;
    Embedding e = extract(preprocess(rec, cfg));
    e.source_id = rec.id;
    e.subject = rec.subject;
    e.mask_status = rec.mask_status;
    return e;
  }

 private:
  std::vector<double> to_vector(const cv::Mat& out) const {
    if (out.depth() != CV_32F) throw Error(ErrorCode::InferenceFailure, "model output is not float32");
    const float* data = out.ptr<float>();
    std::vector<double> raw;
    if (cfg_.output_kind == OutputKind::Vector) {
      if (out.total() != cfg_.expected_dim)
        throw Error(ErrorCode::ShapeMismatch, "model output has " + std::to_string(out.total()) +
                                                  " values, expected " + std::to_string(cfg_.expected_dim));
      raw.assign(data, data + out.total());
      return raw;
    }
    if (out.dims != 4 || out.size[0] != 1)
      throw Error(ErrorCode::ShapeMismatch, "feature-map output must be 4-D with batch 1");
    // Feature maps follow the input layout: (1,C,H,W) for CHW, (1,H,W,C) for HWC.
    Tensor3 map;
    if (cfg_.input_layout == InputLayout::CHW) {
      map = Tensor3(out.size[2], out.size[3], out.size[1]);
      const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
      for (int c = 0; c < map.channels; ++c)
        for (std::size_t p = 0; p < plane; ++p) map.values[p * map.channels + c] = data[c * plane + p];
    } else {
      map = Tensor3(out.size[1], out.size[2], out.size[3]);
      for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] = data[i];
    }
    if (static_cast<std::size_t>(map.channels) != cfg_.expected_dim)
      throw Error(ErrorCode::ShapeMismatch, "feature map has " + std::to_string(map.channels) +
                                                " channels, expected " + std::to_string(cfg_.expected_dim));
    return global_average_pool(map);
  }

  ExtractorConfig cfg_;
  mutable cv::dnn::Net net_;
  mutable std::mutex mu_;
};

}  // namespace mufm

#endif  // MUFM_EXTRACTOR_HPP
