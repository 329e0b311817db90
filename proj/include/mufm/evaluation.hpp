#ifndef MUFM_EVALUATION_HPP
#define MUFM_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mufm/error.hpp"
#include "mufm/file_io.hpp"
#include "mufm/matcher.hpp"
#include "mufm/text.hpp"

namespace mufm {

struct SubjectSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

/// Splits by subject so no identity appears on both sides. The input is
/// deduplicated and sorted first, so only the seed decides the outcome.
/// |train| = round(ratio * N), kept within [1, N-1].
inline SubjectSplit split_subjects(std::vector<std::string> subjects, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::InvalidArgument, "ratio must lie in (0, 1)");
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const std::size_t n = subjects.size();
  if (n < 2) throw Error(ErrorCode::TooFewSubjects, "need at least 2 distinct subjects, got " + std::to_string(n));

  // Fisher-Yates on raw engine output, which is specified by the standard
  // (unlike std::shuffle / uniform_int_distribution).
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(subjects[i], subjects[rng() % (i + 1)]);

  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  SubjectSplit out;
  out.train.assign(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train), subjects.end());
  return out;
}

struct ProbeOutcome {
  std::string probe_id;
  std::string true_subject;
  std::string predicted_subject;
  double similarity = 0.0;
  bool correct = false;   // rank-1, threshold-free
  bool accepted = false;

  friend bool operator==(const ProbeOutcome&, const ProbeOutcome&) = default;
};

struct ReferenceRow {
  std::string study;
  std::string method;
  std::string reported;  // as published
  double score = 0.0;    // as a fraction in [0, 1]

  friend bool operator==(const ReferenceRow&, const ReferenceRow&) = default;
};

/// Published comparison figures for masked face recognition methods. These
/// are context rows only; none of the listed competitor methods is implemented.
inline const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"Current Study", "Cosine Similarity", "95 %", 0.95},
      {"[11]", "SSIM", "0.5773", 0.5773},
      {"[11]", "FSM", "0.8661", 0.8661},
      {"[11]", "FSIM", "0.2803", 0.2803},
      {"[26]", "SVC", "70 %", 0.70},
      {"[26]", "LDA", "72 %", 0.72},
      {"[26]", "K-NN", "46 %", 0.46},
      {"[26]", "DT", "37 %", 0.37},
      {"[26]", "LR", "78 %", 0.78},
      {"[26]", "NB", "65 %", 0.65},
      {"[10]", "HOG", "85.0 %", 0.85},
      {"[10]", "LBP", "82.5 %", 0.825},
      {"[10]", "HOG & LBP", "82.5 %", 0.825},
      {"[10]", "Harris", "77.5 %", 0.775},
      {"[10]", "Surf", "55.0 %", 0.55},
      {"[10]", "PCA", "72.5 %", 0.725},
      {"[10]", "K-NN", "85 %", 0.85},
  };
  return rows;
}

struct EvalReport {
  std::size_t n_probes = 0;
  std::optional<double> rank1_accuracy;        // null when n_probes == 0
  std::optional<double> thresholded_accuracy;  // correct and accepted
  std::optional<double> threshold_used;
  std::vector<ProbeOutcome> per_probe;         // input order
  std::vector<SweepPoint> sweep;
  std::vector<ReferenceRow> reference_rows;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Scores match results against ground truth.
///
/// The sweep treats correctly identified probes as genuine scores and
/// misidentified ones as impostor scores, so its maximum equals what
/// calibrate_threshold would achieve on the same split.
inline EvalReport evaluate(std::span<const MatchResult> results,
                           const std::unordered_map<std::string, std::string>& truth) {
  EvalReport rep;
  rep.reference_rows = reference_rows();
  rep.n_probes = results.size();
  std::size_t correct = 0, correct_accepted = 0;
  std::vector<double> genuine, impostor;
  for (const MatchResult& r : results) {
    const auto it = truth.find(r.probe_id);
    if (it == truth.end()) throw Error(ErrorCode::UnknownProbe, "no ground truth for probe '" + r.probe_id + "'");
    ProbeOutcome o;
    o.probe_id = r.probe_id;
    o.true_subject = it->second;
    o.predicted_subject = r.best_subject.value_or("");
    o.similarity = r.similarity;
    o.correct = r.best_subject.has_value() && *r.best_subject == it->second;
    o.accepted = r.accepted;
    correct += o.correct;
    correct_accepted += (o.correct && o.accepted);
    (o.correct ? genuine : impostor).push_back(o.similarity);
    rep.per_probe.push_back(std::move(o));
  }
  if (rep.n_probes > 0) {
    const auto n = static_cast<double>(rep.n_probes);
    rep.rank1_accuracy = static_cast<double>(correct) / n;
    rep.thresholded_accuracy = static_cast<double>(correct_accepted) / n;
    rep.threshold_used = results.front().threshold;
    rep.sweep = threshold_sweep(std::move(genuine), std::move(impostor));
  }
  return rep;
}

/// Reads a `probe_id,subject` CSV (header optional).
inline std::unordered_map<std::string, std::string> load_truth_csv(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::string> truth;
  const auto rows = parse_csv(read_file_text(path));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && row.size() >= 1 && row[0] == "probe_id") continue;
    if (row.size() != 2) throw Error(ErrorCode::ParseError, "truth row " + std::to_string(i + 1) + " needs 2 fields");
    truth[row[0]] = row[1];
  }
  return truth;
}

struct CurveRow {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;

  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

struct CurveLog {
  std::vector<CurveRow> rows;
};

inline constexpr std::string_view kCurveHeader = "epoch,train_loss,train_acc,val_loss,val_acc";

inline CurveLog parse_curve_log(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw Error(ErrorCode::ParseError, "curve log is empty");
  if (join_csv_row(rows.front()) != kCurveHeader)
    throw Error(ErrorCode::ParseError, "curve log header must be '" + std::string(kCurveHeader) + "'");
  CurveLog log;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5) throw Error(ErrorCode::ParseError, "curve row " + std::to_string(i) + " needs 5 fields");
    CurveRow c;
    c.epoch = parse_int(r[0]);
    c.train_loss = parse_double(r[1]);
    c.train_acc = parse_double(r[2]);
    c.val_loss = parse_double(r[3]);
    c.val_acc = parse_double(r[4]);
    if (c.epoch != static_cast<int>(i))
      throw Error(ErrorCode::NonConsecutiveEpochs,
                  "expected epoch " + std::to_string(i) + ", found " + std::to_string(c.epoch));
    log.rows.push_back(c);
  }
  return log;
}

inline CurveLog load_curve_log(const std::filesystem::path& path) { return parse_curve_log(read_file_text(path)); }

inline std::string curve_log_csv(const CurveLog& log) {
  std::ostringstream os;
  os << kCurveHeader << '\n' << std::setprecision(17);
  for (const CurveRow& r : log.rows)
    os << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_loss << ',' << r.val_acc << '\n';
  return os.str();
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["n_probes"] = rep.n_probes;
  j["rank1_accuracy"] = opt(rep.rank1_accuracy);
  j["thresholded_accuracy"] = opt(rep.thresholded_accuracy);
  j["threshold_used"] = opt(rep.threshold_used);
  j["per_probe"] = json::array();
  for (const ProbeOutcome& o : rep.per_probe)
    j["per_probe"].push_back({{"probe_id", o.probe_id}, {"true_subject", o.true_subject},
                              {"predicted_subject", o.predicted_subject}, {"similarity", o.similarity},
                              {"correct", o.correct}, {"accepted", o.accepted}});
  j["sweep"] = json::array();
  for (const SweepPoint& p : rep.sweep) j["sweep"].push_back({{"threshold", p.threshold}, {"accuracy", p.accuracy}});
  j["reference_rows"] = json::array();
  for (const ReferenceRow& r : rep.reference_rows)
    j["reference_rows"].push_back(
        {{"study", r.study}, {"method", r.method}, {"reported", r.reported}, {"score", r.score}});
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  };
  try {
    EvalReport rep;
    rep.n_probes = j.at("n_probes").get<std::size_t>();
    rep.rank1_accuracy = opt(j.at("rank1_accuracy"));
    rep.thresholded_accuracy = opt(j.at("thresholded_accuracy"));
    rep.threshold_used = opt(j.at("threshold_used"));
    for (const auto& o : j.at("per_probe"))
      rep.per_probe.push_back({o.at("probe_id"), o.at("true_subject"), o.at("predicted_subject"),
                               o.at("similarity"), o.at("correct"), o.at("accepted")});
    for (const auto& p : j.at("sweep")) rep.sweep.push_back({p.at("threshold"), p.at("accuracy")});
    for (const auto& r : j.at("reference_rows"))
      rep.reference_rows.push_back({r.at("study"), r.at("method"), r.at("reported"), r.at("score")});
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report json: ") + e.what());
  }
}

/// Plain-text comparison table: this run's accuracies followed by the
/// published reference figures.
inline std::string report_table(const EvalReport& rep) {
  std::ostringstream os;
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << (*v * 100.0) << " %";
    return s.str();
  };
  auto line = [&os](const std::string& a, const std::string& b, const std::string& c) {
    os << std::left << std::setw(16) << a << std::setw(28) << b << c << '\n';
  };
  line("Study", "Used techniques", "Results");
  line("-----", "---------------", "-------");
  line("This run", "Rank-1 (cosine)", pct(rep.rank1_accuracy));
  std::ostringstream thr;
  if (rep.threshold_used) thr << "Thresholded (t=" << std::setprecision(4) << *rep.threshold_used << ")";
  else thr << "Thresholded";
  line("This run", thr.str(), pct(rep.thresholded_accuracy));
  for (const ReferenceRow& r : rep.reference_rows) line(r.study, r.method, r.reported);
  os << "\nprobes: " << rep.n_probes << '\n';
  return os.str();
}

/// Writes report.json and report.txt into `dir`, plus curves.csv when a curve
/// log is given. The directory is created if needed.
inline void render_report(const EvalReport& rep, const std::optional<CurveLog>& curve,
                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_file_atomic(dir / "report.json", report_to_json(rep).dump(2) + "\n");
  write_file_atomic(dir / "report.txt", report_table(rep));
  if (curve) write_file_atomic(dir / "curves.csv", curve_log_csv(*curve));
}

}  // namespace mufm

#endif  // MUFM_EVALUATION_HPP
