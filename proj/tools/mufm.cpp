// mufm: command-line driver for the masked/unmasked face matching pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "mufm/mufm.hpp"

namespace fs = std::filesystem;
using namespace mufm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string model;
  std::string layout = "chw";
  std::string output_kind = "vector";
  std::size_t dim = kDefaultEmbeddingDim;
  int input_size = 224;
  bool grayscale = false;
  double denoise_sigma = 0.0;

  void add_to(CLI::App* cmd, bool with_model_flag = true) {
    if (with_model_flag) cmd->add_option("--model", model, "ONNX backbone file");
    cmd->add_option("--layout", layout, "model input layout")->check(CLI::IsMember({"chw", "hwc"}))->capture_default_str();
    cmd->add_option("--output-kind", output_kind, "model output: pooled vector or feature map")
        ->check(CLI::IsMember({"vector", "featuremap"}))
        ->capture_default_str();
    cmd->add_option("--dim", dim, "expected embedding dimension")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--input-size", input_size, "model input side in pixels")->check(CLI::Range(8, 4096))->capture_default_str();
    cmd->add_flag("--grayscale", grayscale, "convert to grayscale (replicated to 3 channels) before extraction");
    cmd->add_option("--denoise-sigma", denoise_sigma, "Gaussian denoise sigma, 0 = off")
        ->check(CLI::Range(0.0, 100.0))
        ->capture_default_str();
  }

  ExtractorConfig extractor() const {
    ExtractorConfig c;
    c.mode = ExtractorMode::ModelFile;
    c.model_path = model;
    c.input_layout = layout == "hwc" ? InputLayout::HWC : InputLayout::CHW;
    c.output_kind = output_kind == "featuremap" ? OutputKind::FeatureMap : OutputKind::Vector;
    c.expected_dim = dim;
    c.input_size = input_size;
    return c;
  }

  PreprocessConfig preprocess() const {
    PreprocessConfig p;
    p.target_size = input_size;
    p.to_grayscale = grayscale;
    p.denoise_sigma = denoise_sigma;
    return p;
  }
};

EmbeddingFileFormat parse_format(const std::string& f) {
  return f == "jsonl" ? EmbeddingFileFormat::JsonLines : EmbeddingFileFormat::Binary;
}

void require_nonempty_output(const fs::path& p) {
  if (!fs::exists(p) || fs::file_size(p) == 0) throw std::runtime_error("mandatory output " + p.string() + " is empty");
}

// ---------------------------------------------------------------------------

int cmd_prepare(const fs::path& src, const fs::path& dst) {
  const PrepareSummary s = prepare_dataset(src, dst);
  for (const auto& [path, why] : s.failures) std::cerr << "skipped " << path << ": " << why << '\n';
  std::cout << "prepared " << s.rows.size() << " images into " << dst.string() << " (" << s.failures.size()
            << " skipped)\n";
  if (s.rows.empty()) {
    std::cerr << "no usable images under " << src.string() << '\n';
    return kExitData;
  }
  return kExitOk;
}

int cmd_augment(const fs::path& data, const fs::path& out, int copies, std::uint64_t seed) {
  const auto rows = augment_dataset(data, out, copies, seed);
  std::cout << "wrote " << rows.size() << " images into " << out.string() << '\n';
  if (rows.empty()) {
    std::cerr << "dataset " << data.string() << " has no images\n";
    return kExitData;
  }
  return kExitOk;
}

int cmd_extract(const fs::path& data, const ModelFlags& mf, const std::string& precomputed, const fs::path& out,
                const std::string& format) {
  if (mf.model.empty() == precomputed.empty()) throw UsageError("give exactly one of --model or --precomputed");
  const std::vector<ManifestRow> rows = scan_dataset(data);
  if (rows.empty()) throw Error(ErrorCode::IoError, "no images found under " + data.string());

  std::vector<Embedding> result;
  result.reserve(rows.size());
  if (!precomputed.empty()) {
    std::unordered_map<std::string, Embedding> by_id;
    for (Embedding& e : load_precomputed(precomputed)) by_id.emplace(e.source_id, std::move(e));
    for (const ManifestRow& r : rows) {
      auto it = by_id.find(r.id);
      if (it == by_id.end()) throw Error(ErrorCode::UnknownProbe, "no precomputed embedding for '" + r.id + "'");
      Embedding e = it->second;
      e.subject = r.subject;
      e.mask_status = r.mask_status;
      // Rows that are already unit length pass through untouched.
      if (!is_unit(e.values)) e.values = l2_normalize(e.values);
      result.push_back(std::move(e));
    }
  } else {
    const Extractor ex(mf.extractor());
    const PreprocessConfig pre = mf.preprocess();
    for (const ManifestRow& r : rows) {
      result.push_back(ex.extract(load_record(data, r), pre));
      log::debug("extracted ", r.id);
    }
  }
  save_embeddings(result, out, parse_format(format));
  require_nonempty_output(out);
  std::cout << "wrote " << result.size() << " embeddings (dim " << result.front().dim() << ") to " << out.string()
            << '\n';
  return kExitOk;
}

int cmd_index(const fs::path& embeddings, const fs::path& gallery_out, const std::string& probes_out,
              const std::string& truth_out, const std::string& format) {
  std::vector<Embedding> gallery, probes;
  for (Embedding& e : load_precomputed(embeddings))
    (e.mask_status == MaskStatus::Masked ? probes : gallery).push_back(std::move(e));
  const GalleryIndex idx = GalleryIndex::build(gallery);  // validates
  save_embeddings(idx.entries(), gallery_out, parse_format(format));
  if (!probes_out.empty()) save_embeddings(probes, probes_out, parse_format(format), idx.dimension());
  if (!truth_out.empty()) {
    std::string csv = "probe_id,subject\n";
    for (const Embedding& p : probes) csv += join_csv_row({p.source_id, p.subject}) + "\n";
    write_file_atomic(truth_out, csv);
  }
  std::cout << "gallery: " << idx.size() << " entries (dim " << idx.dimension() << "), probes: " << probes.size()
            << '\n';
  return kExitOk;
}

int cmd_match(const fs::path& gallery_path, const fs::path& probes_path, std::size_t k, double threshold,
              const fs::path& out, bool no_mask_check, bool render, const std::string& data) {
  if (render && data.empty()) throw UsageError("--render needs --data to locate images");
  std::vector<Embedding> gallery = load_precomputed(gallery_path);
  const std::vector<Embedding> probes = load_precomputed(probes_path);
  if (!no_mask_check) {
    for (const Embedding& e : gallery)
      if (e.mask_status == MaskStatus::Masked)
        throw Error(ErrorCode::MaskRoleViolation, "gallery row '" + e.source_id + "' is masked");
    for (const Embedding& p : probes)
      if (p.mask_status == MaskStatus::Unmasked)
        throw Error(ErrorCode::MaskRoleViolation, "probe row '" + p.source_id + "' is unmasked");
  }
  const GalleryIndex idx = GalleryIndex::build(std::move(gallery));
  MatchConfig mc{k, threshold, !no_mask_check};
  const auto results = match_all(probes, idx, mc);

  fs::create_directories(out);
  write_file_atomic(out / "matches.jsonl", match_report_jsonl(results));
  if (!results.empty()) require_nonempty_output(out / "matches.jsonl");

  std::size_t accepted = 0;
  for (const MatchResult& r : results) accepted += r.accepted;
  if (render) {
    std::unordered_map<std::string, ManifestRow> rows;
    for (ManifestRow& r : scan_dataset(data)) rows.emplace(r.id, std::move(r));
    fs::create_directories(out / "montages");
    for (const MatchResult& r : results) {
      if (!r.accepted) continue;
      const auto a = rows.find(r.probe_id), b = rows.find(*r.best_id);
      if (a == rows.end() || b == rows.end()) {
        log::warn("no image for pair ", r.probe_id, " / ", *r.best_id, "; montage skipped");
        continue;
      }
      const Image m = side_by_side(load_record(data, a->second).image, load_record(data, b->second).image);
      write_file_atomic(out / "montages" / (r.probe_id + "__" + *r.best_id + ".png"), encode_png(m));
    }
  }
  std::cout << "matched " << results.size() << " probes, " << accepted << " accepted at threshold " << threshold
            << '\n';
  return kExitOk;
}

int cmd_calibrate(const fs::path& gallery_path, const fs::path& probes_path, const std::string& out) {
  const GalleryIndex idx = GalleryIndex::build(load_precomputed(gallery_path));
  const std::vector<Embedding> probes = load_precomputed(probes_path);
  const ScoreSets s = collect_scores(probes, idx);
  const Calibration c = calibrate_threshold(s.genuine, s.impostor);
  const nlohmann::json j{{"threshold", c.threshold},
                         {"accuracy", c.accuracy},
                         {"n_genuine", s.genuine.size()},
                         {"n_impostor", s.impostor.size()}};
  if (!out.empty()) write_file_atomic(out, j.dump(2) + "\n");
  std::cout << j.dump() << '\n';
  return kExitOk;
}

int cmd_evaluate(const fs::path& matches, const fs::path& truth, const std::string& curves, const fs::path& out) {
  const auto results = load_match_report(matches);
  const EvalReport rep = evaluate(results, load_truth_csv(truth));
  std::optional<CurveLog> curve;
  if (!curves.empty()) curve = load_curve_log(curves);
  render_report(rep, curve, out);
  require_nonempty_output(out / "report.json");
  std::cout << report_table(rep);
  return kExitOk;
}

int cmd_serve(const std::string& host, int port, const std::string& store, const ModelFlags& mf, std::size_t k,
              double threshold) {
  ServiceConfig sc;
  sc.store = store;
  sc.dimension = mf.model.empty() ? 0 : mf.dim;
  if (!mf.model.empty()) {
    sc.model = mf.extractor();
    sc.preprocess = mf.preprocess();
  }
  sc.match = MatchConfig{k, threshold, true};

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  VerifyService svc(sc);
  const int bound = svc.start(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  log::info("signal ", sig, ", shutting down");
  svc.stop();
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::InvalidArgument ? kExitUsage : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mufm - masked/unmasked face matching"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::uint64_t seed = 42;
  std::string format = "binary";

  auto* prep = app.add_subcommand("prepare-dataset", "Convert raw images into the prepared PNG layout");
  std::string src, dst;
  prep->add_option("--src", src, "raw dataset with with_mask/ and without_mask/ folders")->required();
  prep->add_option("--dst", dst, "output directory")->required();

  auto* aug = app.add_subcommand("augment", "Write randomly augmented copies of a prepared dataset");
  std::string aug_data, aug_out;
  int copies = 1;
  aug->add_option("--data", aug_data, "prepared dataset")->required();
  aug->add_option("--out", aug_out, "output directory (same layout)")->required();
  aug->add_option("--copies", copies, "augmented copies per image")->check(CLI::Range(0, 1000))->capture_default_str();
  aug->add_option("--seed", seed, "random seed")->capture_default_str();

  auto* ext = app.add_subcommand("extract", "Compute one embedding per image of a prepared dataset");
  std::string ext_data, ext_out, precomputed;
  ModelFlags ext_model;
  ext->add_option("--data", ext_data, "prepared dataset")->required();
  ext_model.add_to(ext);
  ext->add_option("--precomputed", precomputed, "embedding file keyed by image id (instead of --model)");
  ext->add_option("--out", ext_out, "output embedding file")->required();
  ext->add_option("--format", format, "output layout")->check(CLI::IsMember({"binary", "jsonl"}))->capture_default_str();

  auto* idx = app.add_subcommand("index", "Split embeddings into an unmasked gallery and masked probes");
  std::string idx_in, idx_gallery, idx_probes, idx_truth;
  idx->add_option("--embeddings", idx_in, "embedding file from extract")->required();
  idx->add_option("--gallery-out", idx_gallery, "gallery embedding file (unmasked rows)")->required();
  idx->add_option("--probes-out", idx_probes, "probe embedding file (masked rows)");
  idx->add_option("--truth-out", idx_truth, "probe_id,subject CSV for the probes");
  idx->add_option("--format", format, "output layout")->check(CLI::IsMember({"binary", "jsonl"}))->capture_default_str();

  auto* mat = app.add_subcommand("match", "Match masked probes against the unmasked gallery");
  std::string m_gallery, m_probes, m_out, m_data;
  std::size_t k = 5;
  double threshold = kDefaultThreshold;
  bool no_mask_check = false, render = false;
  mat->add_option("--gallery", m_gallery, "gallery embedding file")->required();
  mat->add_option("--probes", m_probes, "probe embedding file")->required();
  mat->add_option("--k", k, "K-NN shortlist size")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}))->capture_default_str();
  mat->add_option("--threshold", threshold, "acceptance threshold on cosine similarity")
      ->check(CLI::Range(-1.0, 1.0))
      ->capture_default_str();
  mat->add_option("--out", m_out, "output directory for matches.jsonl")->required();
  mat->add_flag("--no-mask-check", no_mask_check, "skip gallery/probe mask-status role checks");
  mat->add_flag("--render", render, "write side-by-side PNGs of accepted pairs");
  mat->add_option("--data", m_data, "prepared dataset (for --render)");

  auto* cal = app.add_subcommand("calibrate", "Pick the accuracy-maximizing threshold from labeled probes");
  std::string c_gallery, c_probes, c_out;
  cal->add_option("--gallery", c_gallery, "gallery embedding file")->required();
  cal->add_option("--probes", c_probes, "labeled probe embedding file")->required();
  cal->add_option("--out", c_out, "write the calibration JSON here as well");

  auto* ev = app.add_subcommand("evaluate", "Score a match report against ground truth");
  std::string e_matches, e_truth, e_curves, e_out;
  ev->add_option("--matches", e_matches, "matches.jsonl from match")->required();
  ev->add_option("--truth", e_truth, "probe_id,subject CSV")->required();
  ev->add_option("--curves", e_curves, "per-epoch training CSV to include");
  ev->add_option("--out", e_out, "output directory for report.json, report.txt, curves.csv")->required();

  auto* srv = app.add_subcommand("serve", "Run the HTTP verification service");
  std::string host = "127.0.0.1", store;
  int port = 8080;
  std::size_t s_k = 5;
  double s_threshold = kDefaultThreshold;
  ModelFlags srv_model;
  srv->add_option("--host", host, "bind address")->capture_default_str();
  srv->add_option("--port", port, "TCP port, 0 = any free port")->check(CLI::Range(0, 65535))->capture_default_str();
  srv->add_option("--store", store, "gallery embedding file (created if missing)")->required();
  srv->add_option("--threshold", s_threshold, "default acceptance threshold")->check(CLI::Range(-1.0, 1.0))->capture_default_str();
  srv->add_option("--k", s_k, "default K-NN shortlist size")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}))->capture_default_str();
  srv_model.add_to(srv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*prep) return cmd_prepare(src, dst);
    if (*aug) return cmd_augment(aug_data, aug_out, copies, seed);
    if (*ext) return cmd_extract(ext_data, ext_model, precomputed, ext_out, format);
    if (*idx) return cmd_index(idx_in, idx_gallery, idx_probes, idx_truth, format);
    if (*mat) return cmd_match(m_gallery, m_probes, k, threshold, m_out, no_mask_check, render, m_data);
    if (*cal) return cmd_calibrate(c_gallery, c_probes, c_out);
    if (*ev) return cmd_evaluate(e_matches, e_truth, e_curves, e_out);
    if (*srv) return cmd_serve(host, port, store, srv_model, s_k, s_threshold);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
