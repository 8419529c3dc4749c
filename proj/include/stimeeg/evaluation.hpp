#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stimeeg/features.hpp"
#include "stimeeg/gbdt.hpp"
#include "stimeeg/stacking.hpp"

namespace stimeeg::evaluation {

// ---- metrics ----

/// Mann-Whitney concordance with half credit for ties. Labels are 0/1.
double compute_auc(std::span<const double> prob, std::span<const int> y);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predict positive for prob >= threshold
};

/// Vertices from (0,0) to (1,1), one per distinct score.
std::vector<RocPoint> roc_curve(std::span<const double> prob, std::span<const int> y);

/// (sens + spec) / 2 where spec = 1 - FPR at the first ROC position reaching
/// TPR = sens, interpolating linearly between vertices.
double bac_at_sensitivity(const std::vector<RocPoint>& roc, double sens = 0.8);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double sensitivity() const;
  double specificity() const;
  double ppv() const;  // 0 when nothing is predicted positive
  double bac() const { return 0.5 * (sensitivity() + specificity()); }
  double gmean() const;  // sqrt(PPV * TPR)
  double fpr() const { return 1.0 - specificity(); }
};

Confusion confusion(std::span<const int> decision, std::span<const int> y);

/// Slope of the line above which a ROC point gives posterior >= `posterior`
/// for a positive prediction at prevalence p1 (p0 = 1 - p1).
double clinically_relevant_slope(double p1, double p0, double posterior = 0.6);
bool clinically_relevant(double fpr, double tpr, double slope);

// ---- folds ----

struct FoldPlan {
  std::size_t test = 0;  // subject index
  std::vector<std::size_t> train;
  std::vector<std::size_t> inner_train;
  std::vector<std::size_t> valid;
  std::uint64_t seed = 0;
};

/// One fold per subject. The inner split puts ceil(0.3 * n_train) subjects in
/// validation, stratified by label, with both classes kept on each side when
/// the counts allow it.
std::vector<FoldPlan> loso_folds(std::span<const int> y, std::uint64_t seed, double valid_fraction = 0.3);

// ---- leakage audit ----

enum class FitStage { Single, EnsembleBase, EnsembleStack, EnsembleRefit };
std::string_view to_string(FitStage stage);

struct FitEvent {
  FitStage stage;
  std::string config;  // config key, or "stack"
  std::size_t seed_index = 0;
  std::string test_subject;
  std::vector<std::string> subjects;    // rows passed to the fit, in order
  std::vector<std::uint64_t> row_hashes;  // hash of each feature row (stack: of its log-odds row)
};

/// Called once per fit. Calls are serialized.
using FitObserver = std::function<void(const FitEvent&)>;

/// FNV-1a over the raw bytes of a row.
std::uint64_t row_hash(std::span<const double> row);

// ---- runs ----

struct EvalOptions {
  std::size_t seeds = 5;
  std::uint64_t base_seed = 0;
  gbdt::Params gbdt;
  stacking::Options stacking;
  double valid_fraction = 0.3;
  double decision_threshold = 0.5;  // stage-1 hard decisions
  std::size_t threads = 1;
  FitObserver observer;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over repeats
};

MeanStd mean_std(std::span<const double> v);

struct SeedResult {
  std::vector<double> prob;  // per subject
  std::vector<int> decision;
  double auc = 0.0;
  double bac_at_sens = 0.0;
  double bac = 0.0;  // at the hard decisions
  double gmean = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  // Ensemble runs only, per fold.
  std::vector<std::vector<double>> weights;
  std::vector<double> thresholds;
};

struct Report {
  std::string name;  // config key or ensemble name
  std::vector<std::string> members;  // ensemble member config keys
  SegmentKind segment = SegmentKind::Resting;
  std::vector<std::string> subject_ids;
  std::vector<int> y;
  std::vector<SeedResult> seeds;
  MeanStd auc, bac_at_sens, bac, gmean;
  std::vector<double> mean_prob;  // across seeds
  std::vector<RocPoint> roc;      // of mean_prob
  double slope = 0.0;             // clinically relevant line for this cohort
  double op_fpr = 0.0, op_tpr = 0.0;  // operating point from the hard decisions of the first seed
  bool op_clinically_relevant = false;

  nlohmann::json to_json() const;
};

/// Labeled rows of a feature matrix as 0/1 (Epileptic = 1).
struct LabeledRows {
  std::vector<std::size_t> rows;
  std::vector<int> y;
};
LabeledRows labeled_rows(const features::FeatureMatrix& fm);

/// Stage 1: each fold trains on all other subjects.
Report run_single_config(const features::FeatureMatrix& fm, const EvalOptions& opts = {});

/// Stacked ensemble over configs sharing subjects (intersection of labeled rows).
Report run_ensemble(const std::vector<const features::FeatureMatrix*>& members, const EvalOptions& opts = {});

/// Best report per family by mean AUC, then mean BAC at the sensitivity
/// target, then the shorter window. Returned in decreasing AUC order.
std::vector<const Report*> rank_configs(const std::vector<Report>& reports);

/// Ensembles of the first k ranked configs for each k in [min_size, max_size].
std::vector<Report> run_ensembles(const std::vector<const features::FeatureMatrix*>& ranked,
                                  std::size_t min_size, std::size_t max_size, const EvalOptions& opts = {});

}  // namespace stimeeg::evaluation
