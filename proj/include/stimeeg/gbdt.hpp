#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stimeeg/core.hpp"

namespace stimeeg::gbdt {

struct Params {
  int n_estimators = 100;
  int max_depth = 6;
  double subsample = 0.9;
  double gamma = 0.1;  // minimum split gain
  double learning_rate = 0.1;
  /// Positive-class weight; neg/pos of the training labels when unset.
  std::optional<double> scale_pos_weight;
  double l2_leaf_reg = 1.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Node {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  bool default_left = true;  // where missing values go
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  int depth() const;
};

struct Model {
  Params params;
  double base_score = 0.0;
  std::vector<Tree> trees;
  std::size_t n_features = 0;
  std::vector<std::string> feature_names;
  std::vector<double> medians;  // per-feature imputation values

  double predict_log_odds(std::span<const double> row) const;
  std::vector<double> predict_log_odds(const Matrix& x) const;
  std::vector<double> predict_proba(const Matrix& x) const;

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);
};

/// Numerically symmetric logistic function: sigmoid(-z) == 1 - sigmoid(z) up to rounding.
double sigmoid(double z);

/// (#negatives) / (#positives). Labels are 0/1.
double scale_pos_weight_for_fold(std::span<const int> y);

/// Column medians ignoring NaN (0 for all-NaN columns).
std::vector<double> column_medians(const Matrix& x);

struct FitTrace {
  std::vector<double> train_loss;  // weighted mean logistic loss after each round
};

/// Second-order boosting on logistic loss with exact greedy splits. NaN
/// features are imputed with training medians before growing trees.
Model fit(const Matrix& x, std::span<const int> y, const Params& params,
          std::vector<std::string> feature_names = {}, FitTrace* trace = nullptr);

}  // namespace stimeeg::gbdt
