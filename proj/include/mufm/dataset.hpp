#ifndef MUFM_DATASET_HPP
#define MUFM_DATASET_HPP

// Prepared dataset layout:
//   <root>/with_mask/<subject>__<imgid>.png
//   <root>/without_mask/<subject>__<imgid>.png
//   <root>/manifest.csv      id,subject,mask_status,path   (path relative to root)
//
// Image ids carry the folder so masked and unmasked shots of the same
// <subject>__<imgid> stay distinct: "m:<subject>__<imgid>" / "u:<subject>__<imgid>".

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mufm/error.hpp"
#include "mufm/file_io.hpp"
#include "mufm/imaging.hpp"
#include "mufm/log.hpp"
#include "mufm/mask_status.hpp"
#include "mufm/text.hpp"

namespace mufm {

inline constexpr const char* kMaskedDir = "with_mask";
inline constexpr const char* kUnmaskedDir = "without_mask";
inline constexpr const char* kManifestName = "manifest.csv";

struct ManifestRow {
  std::string id;
  std::string subject;
  MaskStatus mask_status = MaskStatus::Unknown;
  std::string path;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct ParsedName {
  std::string subject;
  std::string image_id;
};

/// Splits a file stem at the first "__". A stem without the separator is
/// its own subject with image id "0".
inline ParsedName parse_image_name(std::string_view stem) {
  const auto sep = stem.find("__");
  if (sep == std::string_view::npos || sep == 0) return {std::string(stem), "0"};
  std::string rest(stem.substr(sep + 2));
  if (rest.empty()) rest = "0";
  return {std::string(stem.substr(0, sep)), rest};
}

inline std::string make_image_id(MaskStatus m, std::string_view subject, std::string_view image_id) {
  return std::string(m == MaskStatus::Masked ? "m:" : "u:") + std::string(subject) + "__" + std::string(image_id);
}

inline std::string manifest_csv(const std::vector<ManifestRow>& rows) {
  std::string out = "id,subject,mask_status,path\n";
  for (const ManifestRow& r : rows)
    out += join_csv_row({r.id, r.subject, std::string(to_string(r.mask_status)), r.path}) + "\n";
  return out;
}

inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  const auto rows = parse_csv(read_file_text(path));
  if (rows.empty() || join_csv_row(rows.front()) != "id,subject,mask_status,path")
    throw Error(ErrorCode::ParseError, path.string() + ": expected header id,subject,mask_status,path");
  std::vector<ManifestRow> out;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 4) throw Error(ErrorCode::ParseError, "manifest row " + std::to_string(i) + " needs 4 fields");
    ManifestRow r{rows[i][0], rows[i][1], parse_mask_status(rows[i][2]), rows[i][3]};
    if (r.subject.empty()) throw Error(ErrorCode::ParseError, "manifest row " + std::to_string(i) + " has no subject");
    if (!ids.insert(r.id).second) throw Error(ErrorCode::DuplicateId, "duplicate manifest id '" + r.id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

/// Rows of a prepared dataset: the manifest when present, otherwise the PNG
/// files found in the two mask folders, named by the filename convention.
inline std::vector<ManifestRow> scan_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(root / kManifestName)) return load_manifest(root / kManifestName);
  std::vector<ManifestRow> rows;
  for (const auto& [dir, status] : {std::pair{kMaskedDir, MaskStatus::Masked}, std::pair{kUnmaskedDir, MaskStatus::Unmasked}}) {
    if (!fs::is_directory(root / dir)) continue;
    std::vector<fs::path> files;
    for (const auto& ent : fs::directory_iterator(root / dir))
      if (ent.is_regular_file() && ent.path().extension() == ".png") files.push_back(ent.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      const ParsedName n = parse_image_name(f.stem().string());
      rows.push_back({make_image_id(status, n.subject, n.image_id), n.subject, status,
                      (fs::path(dir) / f.filename()).generic_string()});
    }
  }
  return rows;
}

inline ImageRecord load_record(const std::filesystem::path& root, const ManifestRow& row) {
  const auto bytes = read_file_bytes(root / row.path);
  return ImageRecord{row.id, row.subject, row.mask_status, decode_image(bytes)};
}

struct PrepareSummary {
  std::vector<ManifestRow> rows;
  std::vector<std::pair<std::string, std::string>> failures;  // (source path, reason)
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::vector<std::filesystem::path> files_under(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& ent : std::filesystem::recursive_directory_iterator(dir))
    if (ent.is_regular_file() && ent.path().filename().string().front() != '.') files.push_back(ent.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

/// Converts a raw dataset into the prepared layout.
///
/// Source folders are matched case-insensitively against with_mask / masked
/// and without_mask / unmasked. Files in nested folders take the folder name
/// as subject when their own name has no "__" separator. Undecodable files
/// are recorded as failures and skipped.
inline PrepareSummary prepare_dataset(const std::filesystem::path& src, const std::filesystem::path& dst) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(src)) throw Error(ErrorCode::IoError, "source directory " + src.string() + " does not exist");

  PrepareSummary summary;
  std::set<std::string> ids;
  struct Input {
    fs::path file;
    fs::path folder;
    MaskStatus status;
  };
  std::vector<Input> inputs;
  std::vector<fs::path> top;
  for (const auto& ent : fs::directory_iterator(src))
    if (ent.is_directory()) top.push_back(ent.path());
  std::sort(top.begin(), top.end());
  for (const fs::path& d : top) {
    const std::string name = detail::lower(d.filename().string());
    MaskStatus status = MaskStatus::Unknown;
    if (name == "with_mask" || name == "masked") status = MaskStatus::Masked;
    else if (name == "without_mask" || name == "unmasked") status = MaskStatus::Unmasked;
    else continue;
    for (const fs::path& f : detail::files_under(d)) inputs.push_back({f, d, status});
  }

  fs::create_directories(dst / kMaskedDir);
  fs::create_directories(dst / kUnmaskedDir);
  for (const auto& [file, folder, status] : inputs) {
    const std::string stem = file.stem().string();
    ParsedName n = parse_image_name(stem);
    if (stem.find("__") == std::string::npos && file.parent_path() != folder)
      n = {file.parent_path().filename().string(), stem};
    const std::string id = make_image_id(status, n.subject, n.image_id);
    if (ids.count(id)) {
      summary.failures.emplace_back(file.string(), "duplicate image id " + id);
      continue;
    }
    try {
      const Image img = decode_image(read_file_bytes(file));
      const fs::path rel = fs::path(status == MaskStatus::Masked ? kMaskedDir : kUnmaskedDir) /
                           (n.subject + "__" + n.image_id + ".png");
      write_file_atomic(dst / rel, encode_png(img));
      ids.insert(id);
      summary.rows.push_back({id, n.subject, status, rel.generic_string()});
    } catch (const Error& e) {
      summary.failures.emplace_back(file.string(), e.what());
    }
  }
  write_file_atomic(dst / kManifestName, manifest_csv(summary.rows));
  return summary;
}

/// Writes every image of a prepared dataset plus `copies` randomly augmented
/// variants of each into `out`, ids suffixed "-aug<j>". One RNG seeded with
/// `seed` is consumed in manifest order.
inline std::vector<ManifestRow> augment_dataset(const std::filesystem::path& data, const std::filesystem::path& out,
                                                int copies, std::uint64_t seed, const AugmentRanges& ranges = {}) {
  namespace fs = std::filesystem;
  if (copies < 0) throw Error(ErrorCode::InvalidArgument, "copies must be >= 0");
  const std::vector<ManifestRow> rows = scan_dataset(data);
  fs::create_directories(out / kMaskedDir);
  fs::create_directories(out / kUnmaskedDir);
  std::mt19937_64 rng(seed);
  std::vector<ManifestRow> written;
  for (const ManifestRow& row : rows) {
    const ImageRecord rec = load_record(data, row);
    const fs::path folder = row.mask_status == MaskStatus::Masked ? kMaskedDir : kUnmaskedDir;
    const ParsedName n = parse_image_name(fs::path(row.path).stem().string());
    const fs::path rel0 = folder / (row.subject + "__" + n.image_id + ".png");
    write_file_atomic(out / rel0, encode_png(rec.image));
    written.push_back({row.id, row.subject, row.mask_status, rel0.generic_string()});
    for (int j = 1; j <= copies; ++j) {
      const auto chain = sample_transforms(rng, rec.image.width, rec.image.height, ranges);
      const std::string aug_id = n.image_id + "-aug" + std::to_string(j);
      const fs::path rel = folder / (row.subject + "__" + aug_id + ".png");
      write_file_atomic(out / rel, encode_png(augment(rec.image, chain)));
      written.push_back({make_image_id(row.mask_status, row.subject, aug_id), row.subject, row.mask_status,
                         rel.generic_string()});
    }
  }
  write_file_atomic(out / kManifestName, manifest_csv(written));
  return written;
}

}  // namespace mufm

#endif  // MUFM_DATASET_HPP
