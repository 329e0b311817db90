#ifndef MUFM_EMBEDDING_FILE_HPP
#define MUFM_EMBEDDING_FILE_HPP

// Embedding file layouts.
//
// Binary (all integers little-endian):
//   "MUFM" | u32 version | u32 dimension | u64 count
//   count x { u32 len, source_id bytes | u32 len, subject bytes |
//             u8 mask_status | dimension x f32 }
//
// JSON lines: a header object followed by one object per row,
//   {"format":"mufm-embeddings","version":1,"dimension":D,"count":N}
//   {"source_id":"...","subject":"...","mask_status":"masked","values":[...]}
//
// Readers pick the layout from the first byte ('M' or '{').

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "mufm/embedding.hpp"
#include "mufm/error.hpp"
#include "mufm/file_io.hpp"

namespace mufm {

inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

enum class EmbeddingFileFormat { Binary, JsonLines };

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { need(1); return b_[pos_++]; }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(ErrorCode::ParseError, "embedding file truncated");
  }
  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline void check_finite(const Embedding& e) {
  for (double v : e.values)
    if (!std::isfinite(v)) throw Error(ErrorCode::ParseError, "non-finite value in '" + e.source_id + "'");
}

inline void check_unique(std::span<const Embedding> rows) {
  std::unordered_set<std::string> seen;
  for (const Embedding& e : rows)
    if (!seen.insert(e.source_id).second)
      throw Error(ErrorCode::DuplicateId, "duplicate source_id '" + e.source_id + "'");
}

struct ParsedRows {
  std::size_t dimension = 0;
  std::vector<Embedding> rows;
};

inline ParsedRows parse_binary(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, "MUFM", 4) != 0) throw Error(ErrorCode::ParseError, "bad magic");
  const std::uint32_t version = r.u32();
  if (version != kEmbeddingFileVersion)
    throw Error(ErrorCode::ParseError, "unsupported version " + std::to_string(version));
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (dim == 0 && count > 0) throw Error(ErrorCode::ParseError, "zero dimension");

  std::vector<Embedding> rows;
  // Each row needs at least 9 + 4*dim bytes; bound the reservation by that.
  rows.reserve(std::min<std::uint64_t>(count, r.remaining() / (9 + 4ull * dim)));
  for (std::uint64_t i = 0; i < count; ++i) {
    Embedding e;
    e.source_id = r.str();
    e.subject = r.str();
    const std::uint8_t m = r.u8();
    if (m > 2) throw Error(ErrorCode::ParseError, "bad mask_status byte");
    e.mask_status = static_cast<MaskStatus>(m);
    e.values.resize(dim);
    for (double& v : e.values) v = r.f32();
    check_finite(e);
    rows.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::ParseError, "trailing bytes after last row");
  return {dim, std::move(rows)};
}

inline ParsedRows parse_json_lines(std::string_view text) {
  using nlohmann::json;
  std::vector<Embedding> rows;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  std::uint64_t declared = 0;
  bool have_header = false;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (j.value("format", "") != "mufm-embeddings")
          throw Error(ErrorCode::ParseError, "missing mufm-embeddings header line");
        if (j.at("version").get<std::uint32_t>() != kEmbeddingFileVersion)
          throw Error(ErrorCode::ParseError, "unsupported version");
        dim = j.at("dimension").get<std::size_t>();
        declared = j.at("count").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      Embedding e;
      e.source_id = j.at("source_id").get<std::string>();
      e.subject = j.value("subject", "");
      e.mask_status = parse_mask_status(j.value("mask_status", "unknown"));
      e.values = j.at("values").get<std::vector<double>>();
      for (double& v : e.values) v = static_cast<float>(v);  // stored precision
      if (e.values.size() != dim)
        throw Error(ErrorCode::DimensionMismatch, "row '" + e.source_id + "' has " +
                                                      std::to_string(e.values.size()) + " values, header says " +
                                                      std::to_string(dim));
      check_finite(e);
      rows.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::ParseError, "empty embedding file");
  if (rows.size() != declared)
    throw Error(ErrorCode::ParseError, "header count " + std::to_string(declared) + " but " +
                                           std::to_string(rows.size()) + " rows");
  return {dim, std::move(rows)};
}

}  // namespace detail

/// Checks that every row has the same dimension and returns it (0 when empty).
inline std::size_t uniform_dimension(std::span<const Embedding> rows) {
  if (rows.empty()) return 0;
  const std::size_t d = rows.front().dim();
  for (const Embedding& e : rows)
    if (e.dim() != d)
      throw Error(ErrorCode::MixedDimensions, "dimensions " + std::to_string(d) + " and " +
                                                  std::to_string(e.dim()) + " in one collection");
  return d;
}

inline std::vector<std::uint8_t> encode_embeddings(std::span<const Embedding> rows,
                                                   std::size_t dimension,
                                                   EmbeddingFileFormat format = EmbeddingFileFormat::Binary) {
  const std::size_t d = rows.empty() ? dimension : uniform_dimension(rows);
  detail::check_unique(rows);
  if (format == EmbeddingFileFormat::Binary) {
    detail::ByteWriter w;
    w.bytes("MUFM");
    w.u32(kEmbeddingFileVersion);
    w.u32(static_cast<std::uint32_t>(d));
    w.u64(rows.size());
    for (const Embedding& e : rows) {
      w.str(e.source_id);
      w.str(e.subject);
      w.u8(static_cast<std::uint8_t>(e.mask_status));
      for (double v : e.values) w.f32(static_cast<float>(v));
    }
    return w.data();
  }
  using nlohmann::json;
  std::string text = json{{"format", "mufm-embeddings"}, {"version", kEmbeddingFileVersion},
                          {"dimension", d}, {"count", rows.size()}}.dump();
  text += '\n';
  for (const Embedding& e : rows) {
    std::vector<float> vals(e.values.begin(), e.values.end());
    text += json{{"source_id", e.source_id}, {"subject", e.subject},
                 {"mask_status", std::string(to_string(e.mask_status))}, {"values", vals}}.dump();
    text += '\n';
  }
  return {text.begin(), text.end()};
}

/// Writes rows atomically. `dimension` only matters for an empty list, so the
/// header of an empty store still records its width.
inline void save_embeddings(std::span<const Embedding> rows, const std::filesystem::path& path,
                            EmbeddingFileFormat format = EmbeddingFileFormat::Binary,
                            std::size_t dimension = 0) {
  const auto bytes = encode_embeddings(rows, dimension, format);
  write_file_atomic(path, bytes);
}

using EmbeddingFileContents = detail::ParsedRows;

inline EmbeddingFileContents decode_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::ParseError, "empty embedding file");
  EmbeddingFileContents out;
  if (bytes[0] == 'M') {
    out = detail::parse_binary(bytes);
  } else if (bytes[0] == '{') {
    out = detail::parse_json_lines({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  } else {
    throw Error(ErrorCode::ParseError, "unrecognized embedding file layout");
  }
  detail::check_unique(out.rows);
  return out;
}

inline EmbeddingFileContents read_embedding_file(const std::filesystem::path& path) {
  return decode_embeddings(read_file_bytes(path));
}

/// Loads every row of an embedding file, in file order.
inline std::vector<Embedding> load_precomputed(const std::filesystem::path& path) {
  return read_embedding_file(path).rows;
}

}  // namespace mufm

#endif  // MUFM_EMBEDDING_FILE_HPP
