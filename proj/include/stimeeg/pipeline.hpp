#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stimeeg/evaluation.hpp"
#include "stimeeg/features.hpp"
#include "stimeeg/hvresponse.hpp"
#include "stimeeg/preprocess.hpp"

namespace stimeeg::pipeline {

/// TUH-like: 60 Hz mains, 250 Hz target rate. EMC-like: 50 Hz, 200 Hz.
enum class Profile { TUH, EMC };
std::string_view to_string(Profile p);
Profile parse_profile(std::string_view text);

struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path out = "out";
  Profile profile = Profile::EMC;
  std::optional<double> notch_hz;
  std::optional<double> target_fs;
  std::vector<SegmentKind> segments{SegmentKind::Resting, SegmentKind::IPS, SegmentKind::HV};
  std::vector<features::Family> families{features::kAllFamilies.begin(), features::kAllFamilies.end()};
  std::vector<preprocess::MontageKind> montages{preprocess::MontageKind::CAR, preprocess::MontageKind::Cz,
                                                preprocess::MontageKind::Laplacian,
                                                preprocess::MontageKind::BipolarDB};
  std::vector<double> windows{features::kWindowLengths.begin(), features::kWindowLengths.end()};
  std::vector<features::Combiner> combiners{features::kAllCombiners.begin(), features::kAllCombiners.end()};
  std::size_t ensemble_min = 2;
  std::size_t ensemble_max = 10;
  /// Every subset of the ranked families per size instead of the rank-order prefix.
  bool ensemble_exhaustive = false;
  std::size_t seeds = 5;
  std::uint64_t seed = 0;
  bool ied_free_only = false;
  std::size_t threads = 1;

  preprocess::PreprocessConfig preprocess_config() const;
  std::vector<features::FeatureConfig> grid() const;
  evaluation::EvalOptions eval_options() const;
  void validate() const;
};

struct ManifestEntry {
  std::string file;  // relative to the dataset root
  std::string subject_id;
  std::string status;  // "ok", "excluded" or "error"
  std::string reason;
  std::optional<Label> label;
  bool ied_free = true;
  std::size_t channels = 0;
  std::vector<std::string> discarded_channels;
  std::vector<double> train_frequencies;
  std::vector<std::pair<SegmentKind, std::pair<double, double>>> segments;  // seconds
};

struct Manifest {
  std::string root;
  std::string dataset_hash;  // over included files and sidecars
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;

  std::size_t included() const;
  nlohmann::json to_json() const;
};

/// Hex FNV-1a over a byte string.
std::string content_hash(std::string_view bytes);

/// Feature matrix on disk: one row per subject, leading columns
/// subject,label,ied_free. The first line records the cache key.
void write_feature_csv(const features::FeatureMatrix& fm, const std::filesystem::path& path,
                       const std::string& cache_key);
/// nullopt when the file is missing or was written under another key.
std::optional<features::FeatureMatrix> read_feature_csv(const std::filesystem::path& path,
                                                        const std::string& cache_key);

/// "Spectral/CAR/2s/Mean" -> "Spectral_CAR_2s_Mean"
std::string file_stem(const std::string& config_key);

/// Rows of `fm` whose subject is in `keep`.
features::FeatureMatrix subset(const features::FeatureMatrix& fm, const std::vector<std::string>& keep);

struct SegmentResults {
  std::vector<evaluation::Report> stage1;
  std::vector<std::string> ranking;  // config keys, best first, one per family
  std::vector<evaluation::Report> ensembles;
};

/// Runs pipeline stages on demand, caching intermediates in memory and under
/// the output directory. Every file it writes is below cfg.out.
class Runner {
 public:
  Runner(RunConfig cfg, std::ostream& log);

  const Manifest& ingest();
  const std::vector<Recording>& preprocessed();
  const std::vector<features::FeatureMatrix>& features(SegmentKind segment);
  const SegmentResults& rank(SegmentKind segment);
  const SegmentResults& ensemble(SegmentKind segment);
  const hv::SlowingReport& hv();
  /// ROC figures and summary tables from the report files on disk.
  void report();
  /// ingest -> features -> rank -> ensembles for every segment -> hv -> report
  void run();

  const RunConfig& config() const { return cfg_; }

 private:
  std::string stage_key(SegmentKind segment) const;
  void write_text(const std::filesystem::path& rel, const std::string& text) const;
  void write_json(const std::filesystem::path& rel, const nlohmann::json& j) const;
  std::vector<const features::FeatureMatrix*> ranked_matrices(SegmentKind segment);

  RunConfig cfg_;
  std::ostream& log_;
  std::optional<Manifest> manifest_;
  std::vector<Recording> raw_;
  std::optional<std::vector<Recording>> preprocessed_;
  std::map<SegmentKind, std::vector<features::FeatureMatrix>> features_;
  std::map<SegmentKind, SegmentResults> results_;
  std::map<SegmentKind, bool> ranked_, ensembled_;
  std::optional<hv::SlowingReport> hv_;
};

// ---- report rendering ----

struct RocSeries {
  std::string name;
  std::vector<evaluation::RocPoint> points;
  std::optional<std::pair<double, double>> operating_point;  // (fpr, tpr)
};

/// ROC plot with the clinically relevant region (TPR > slope * FPR) shaded.
std::string roc_svg(const std::vector<RocSeries>& series, double slope, const std::string& title);

/// Summary table of single-config reports (stage-1 JSON array).
std::string stage1_csv(const nlohmann::json& reports);
/// Summary table of ensemble reports.
std::string ensembles_csv(const nlohmann::json& reports);

}  // namespace stimeeg::pipeline
