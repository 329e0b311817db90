#ifndef MUFM_SERVICE_HPP
#define MUFM_SERVICE_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

// httplib's default accept backlog of 5 drops connections under bursts.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include "httplib.h"
#include "json.hpp"
#include "mufm/embedding.hpp"
#include "mufm/embedding_file.hpp"
#include "mufm/error.hpp"
#include "mufm/extractor.hpp"
#include "mufm/knn_index.hpp"
#include "mufm/log.hpp"
#include "mufm/match_report.hpp"
#include "mufm/matcher.hpp"

namespace mufm {

/// Immutable view of the gallery at one generation.
struct GallerySnapshot {
  std::uint64_t generation = 0;
  std::size_t dimension = 0;  // 0 until the first enrollment fixes it
  std::vector<Embedding> entries;
  GalleryIndex index;         // empty when entries is empty
};

/// Persistent enrolled gallery.
///
/// Writers serialize on a mutex and persist the full file before publishing
/// a new snapshot, so an acknowledged mutation is always on disk. Readers
/// grab the current snapshot pointer without blocking writers.
class GalleryStore {
 public:
  explicit GalleryStore(std::filesystem::path path, std::size_t dimension = 0) : path_(std::move(path)) {
    auto snap = std::make_shared<GallerySnapshot>();
    snap->dimension = dimension;
    if (std::filesystem::exists(path_)) {
      EmbeddingFileContents file = read_embedding_file(path_);
      if (dimension != 0 && file.dimension != 0 && file.dimension != dimension)
        throw Error(ErrorCode::DimensionMismatch, "store " + path_.string() + " has dimension " +
                                                      std::to_string(file.dimension) + ", requested " +
                                                      std::to_string(dimension));
      if (file.dimension != 0) snap->dimension = file.dimension;
      snap->entries = std::move(file.rows);
      if (!snap->entries.empty()) snap->index = GalleryIndex::build(snap->entries);
    }
    std::atomic_store(&snap_, std::shared_ptr<const GallerySnapshot>(std::move(snap)));
  }

  std::shared_ptr<const GallerySnapshot> snapshot() const { return std::atomic_load(&snap_); }

  const std::filesystem::path& path() const { return path_; }

  struct Enrolled {
    std::string source_id;
    std::uint64_t generation;
    std::size_t size;
  };

  /// Adds an unmasked identity. The vector is normalized here; an empty
  /// source_id is replaced by "<subject>-<n>".
  Enrolled enroll(std::string subject, std::vector<double> values, std::string source_id = {}) {
    if (subject.empty()) throw Error(ErrorCode::InvalidArgument, "subject is required");
    std::lock_guard lock(write_mu_);
    const auto cur = snapshot();
    if (cur->dimension != 0 && values.size() != cur->dimension)
      throw Error(ErrorCode::DimensionMismatch, "embedding has " + std::to_string(values.size()) +
                                                    " values, store expects " + std::to_string(cur->dimension));
    if (values.empty()) throw Error(ErrorCode::DimensionMismatch, "empty embedding");
    Embedding e{l2_normalize(values), std::move(source_id), std::move(subject), MaskStatus::Unmasked};
    // Round through storage precision so the in-memory gallery equals what a
    // restart would load.
    for (double& v : e.values) v = static_cast<float>(v);

    auto taken = [&](const std::string& id) {
      return std::any_of(cur->entries.begin(), cur->entries.end(),
                         [&](const Embedding& x) { return x.source_id == id; });
    };
    if (e.source_id.empty()) {
      std::size_t n = cur->entries.size() + 1;
      do e.source_id = e.subject + "-" + std::to_string(n++);
      while (taken(e.source_id));
    } else if (taken(e.source_id)) {
      throw Error(ErrorCode::DuplicateId, "source_id '" + e.source_id + "' already enrolled");
    }

    std::vector<Embedding> entries = cur->entries;
    entries.push_back(e);
    const auto next = publish(*cur, std::move(entries), values.size());
    return {e.source_id, next->generation, next->entries.size()};
  }

  /// Returns the new generation, or nullopt when the id is unknown.
  std::optional<std::uint64_t> remove(const std::string& source_id) {
    std::lock_guard lock(write_mu_);
    const auto cur = snapshot();
    std::vector<Embedding> entries;
    entries.reserve(cur->entries.size());
    for (const Embedding& e : cur->entries)
      if (e.source_id != source_id) entries.push_back(e);
    if (entries.size() == cur->entries.size()) return std::nullopt;
    return publish(*cur, std::move(entries), cur->dimension)->generation;
  }

 private:
  std::shared_ptr<const GallerySnapshot> publish(const GallerySnapshot& cur, std::vector<Embedding> entries,
                                                 std::size_t dimension) {
    auto next = std::make_shared<GallerySnapshot>();
    next->generation = cur.generation + 1;
    next->dimension = dimension;
    if (!entries.empty()) next->index = GalleryIndex::build(entries);
    save_embeddings(entries, path_, EmbeddingFileFormat::Binary, dimension);
    next->entries = std::move(entries);
    std::shared_ptr<const GallerySnapshot> published = std::move(next);
    std::atomic_store(&snap_, published);
    return published;
  }

  std::filesystem::path path_;
  std::mutex write_mu_;
  std::shared_ptr<const GallerySnapshot> snap_;
};

namespace detail {

inline std::vector<std::uint8_t> base64_decode(std::string_view in) {
  static const auto table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(alphabet[i])] = i;
    t['-'] = 62;  // url-safe variant
    t['_'] = 63;
    return t;
  }();
  std::vector<std::uint8_t> out;
  out.reserve(in.size() * 3 / 4);
  std::uint32_t buf = 0;
  int bits = 0;
  for (char ch : in) {
    if (ch == '=' || ch == '\n' || ch == '\r' || ch == ' ') continue;
    const int v = table[static_cast<unsigned char>(ch)];
    if (v < 0) throw Error(ErrorCode::ParseError, "invalid base64 character");
    buf = (buf << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace detail

struct ServiceConfig {
  std::filesystem::path store;
  std::size_t dimension = 0;
  std::optional<ExtractorConfig> model;
  PreprocessConfig preprocess{};
  MatchConfig match{};
};

/// HTTP front end over a GalleryStore.
///
///   POST   /gallery        {"subject", "embedding":[..] | "image":"<base64>", "source_id"?}
///   GET    /gallery        ?vectors=1 adds the stored values
///   DELETE /gallery/<id>
///   POST   /match          {"embedding":[..] | "image":"<base64>", "k"?, "threshold"?, "probe_id"?}
///   GET    /healthz
///
/// No authentication; put it behind a reverse proxy when exposed.
class VerifyService {
 public:
  explicit VerifyService(ServiceConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.store, cfg_.dimension) {
    cfg_.match.validate();
    if (cfg_.model) extractor_.emplace(*cfg_.model);
    routes();
  }

  ~VerifyService() { stop(); }

  VerifyService(const VerifyService&) = delete;
  VerifyService& operator=(const VerifyService&) = delete;

  GalleryStore& store() { return store_; }

  /// Binds and serves on a background thread; returns the bound port.
  /// Port 0 picks a free port.
  int start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) bound = server_.bind_to_any_port(host);
    else if (!server_.bind_to_port(host, port)) bound = -1;
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Serves on the calling thread until stop() is called from elsewhere.
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, {{"error", msg}});
  }

  static int status_for(ErrorCode code) {
    switch (code) {
      case ErrorCode::DuplicateId: return 409;
      case ErrorCode::EmptyGallery: return 404;
      case ErrorCode::IoError: return 500;
      default: return 400;
    }
  }

  /// Embedding values from either an "embedding" array or an "image" payload.
  std::optional<std::vector<double>> probe_values(const nlohmann::json& body, httplib::Response& res) const {
    if (body.contains("embedding")) {
      if (!body["embedding"].is_array()) {
        send_error(res, 400, "embedding must be an array of numbers");
        return std::nullopt;
      }
      std::vector<double> v;
      for (const auto& x : body["embedding"]) {
        if (!x.is_number()) {
          send_error(res, 400, "embedding must be an array of numbers");
          return std::nullopt;
        }
        v.push_back(x.get<double>());
      }
      return v;
    }
    if (body.contains("image")) {
      if (!extractor_) {
        send_error(res, 503, "no model configured; send an embedding instead");
        return std::nullopt;
      }
      ImageRecord rec;
      rec.id = "upload";
      rec.image = decode_image(detail::base64_decode(body["image"].get<std::string>()));
      return extractor_->extract(rec, cfg_.preprocess).values;
    }
    send_error(res, 400, "body needs 'embedding' or 'image'");
    return std::nullopt;
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      log::error("request failed: ", e.what());
      send_error(res, 500, e.what());
    }
  }

  void routes() {
    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      const auto snap = store_.snapshot();
      send_json(res, 200, {{"status", "ok"}, {"generation", snap->generation}, {"size", snap->entries.size()},
                           {"dimension", snap->dimension}});
    });

    server_.Get("/gallery", [this](const httplib::Request& req, httplib::Response& res) {
      const auto snap = store_.snapshot();
      const bool vectors = req.has_param("vectors") && req.get_param_value("vectors") != "0";
      nlohmann::json entries = nlohmann::json::array();
      for (const Embedding& e : snap->entries) {
        nlohmann::json j{{"source_id", e.source_id}, {"subject", e.subject}};
        if (vectors) j["embedding"] = e.values;
        entries.push_back(std::move(j));
      }
      send_json(res, 200, {{"generation", snap->generation}, {"dimension", snap->dimension}, {"entries", entries}});
    });

    server_.Post("/gallery", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        if (!body.contains("subject") || !body["subject"].is_string() || body["subject"].get<std::string>().empty())
          return send_error(res, 400, "subject is required");
        const auto values = probe_values(body, res);
        if (!values) return;
        const auto r = store_.enroll(body["subject"].get<std::string>(), *values, body.value("source_id", ""));
        log::info("enrolled ", r.source_id, " generation ", r.generation);
        send_json(res, 201, {{"source_id", r.source_id}, {"generation", r.generation}, {"size", r.size}});
      });
    });

    server_.Delete(R"(/gallery/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        const auto gen = store_.remove(id);
        if (!gen) return send_error(res, 404, "unknown source_id '" + id + "'");
        send_json(res, 200, {{"source_id", id}, {"generation", *gen}});
      });
    });

    server_.Post("/match", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        const auto snap = store_.snapshot();
        if (snap->entries.empty()) return send_error(res, 404, "gallery is empty");
        const auto values = probe_values(body, res);
        if (!values) return;
        MatchConfig mc = cfg_.match;
        if (body.contains("k")) mc.shortlist_k = body["k"].get<std::size_t>();
        if (body.contains("threshold")) mc.threshold = body["threshold"].get<double>();
        const Embedding probe{*values, body.value("probe_id", "probe"), {}, MaskStatus::Masked};
        nlohmann::json out = to_json(match(probe, snap->index, mc));
        out["generation"] = snap->generation;
        send_json(res, 200, out);
      });
    });
  }

  ServiceConfig cfg_;
  GalleryStore store_;
  std::optional<Extractor> extractor_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace mufm

#endif  // MUFM_SERVICE_HPP
