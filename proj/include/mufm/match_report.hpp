#ifndef MUFM_MATCH_REPORT_HPP
#define MUFM_MATCH_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mufm/error.hpp"
#include "mufm/file_io.hpp"
#include "mufm/imaging.hpp"
#include "mufm/matcher.hpp"

namespace mufm {

inline nlohmann::json to_json(const MatchResult& r) {
  using nlohmann::json;
  json j{{"probe_id", r.probe_id},
         {"best_id", r.best_id ? json(*r.best_id) : json(nullptr)},
         {"best_subject", r.best_subject ? json(*r.best_subject) : json(nullptr)},
         {"similarity", r.similarity},
         {"accepted", r.accepted},
         {"threshold", r.threshold},
         {"shortlist", json::array()}};
  for (const ShortlistEntry& s : r.shortlist)
    j["shortlist"].push_back({{"source_id", s.source_id}, {"similarity", s.similarity}});
  return j;
}

inline MatchResult match_result_from_json(const nlohmann::json& j) {
  try {
    MatchResult r;
    r.probe_id = j.at("probe_id").get<std::string>();
    if (!j.at("best_id").is_null()) r.best_id = j.at("best_id").get<std::string>();
    if (!j.at("best_subject").is_null()) r.best_subject = j.at("best_subject").get<std::string>();
    r.similarity = j.at("similarity").get<double>();
    r.accepted = j.at("accepted").get<bool>();
    r.threshold = j.value("threshold", kDefaultThreshold);
    for (const auto& s : j.value("shortlist", nlohmann::json::array()))
      r.shortlist.push_back({s.at("source_id").get<std::string>(), s.at("similarity").get<double>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("match result: ") + e.what());
  }
}

inline std::string match_report_jsonl(std::span<const MatchResult> results) {
  std::string out;
  for (const MatchResult& r : results) out += to_json(r).dump() + "\n";
  return out;
}

inline std::vector<MatchResult> parse_match_report(std::string_view text) {
  std::vector<MatchResult> out;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(match_result_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "match report line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<MatchResult> load_match_report(const std::filesystem::path& path) {
  return parse_match_report(read_file_text(path));
}

/// Places the probe and its match side by side, both scaled to `height`
/// rows, with a `gap`-pixel white divider.
inline Image side_by_side(const Image& left, const Image& right, int height = 224, int gap = 8) {
  auto fit = [height](const Image& img) {
    const int w = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.width) * height / img.height)));
    return resize(gray_to_rgb(img), w, height);
  };
  const Image a = fit(left);
  const Image b = fit(right);
  Image out(a.width + gap + b.width, height, 3, 255);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = a.at(x, y, c);
    for (int x = 0; x < b.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(a.width + gap + x, y, c) = b.at(x, y, c);
  }
  return out;
}

}  // namespace mufm

#endif  // MUFM_MATCH_REPORT_HPP
