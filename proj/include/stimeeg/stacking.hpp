#pragma once

#include <span>
#include <vector>

#include "stimeeg/core.hpp"

namespace stimeeg::stacking {

struct Options {
  double alpha = 0.05;  // log-barrier coefficient
  double step = 0.5;    // initial exponentiated-gradient step, halved on failure
  double tolerance = 1e-8;
  int max_iterations = 10000;
  /// true: -(1/N) sum [y log s(z) + (1 - y) log s(1 - z)] as written for the
  /// meta-classifier. false: the usual cross-entropy with log(1 - s(z)).
  bool shifted_negative_term = true;
};

/// Regularised objective at simplex weights `w` for base log-odds `p` (N x K).
double objective(const Matrix& p, std::span<const int> y, std::span<const double> w, const Options& opts = {});

struct StackResult {
  std::vector<double> weights;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Simplex-constrained weights by exponentiated gradient from the uniform start.
StackResult fit_stack(const Matrix& p, std::span<const int> y, const Options& opts = {});

/// sigmoid(sum_k w_k p_k)
double predict_stack(std::span<const double> w, std::span<const double> log_odds);

/// sqrt(PPV * TPR) when predicting positive for prob >= t; 0 if nothing is predicted positive.
double gmean(std::span<const double> prob, std::span<const int> y, double t);

struct Threshold {
  double threshold = 0.5;
  double gmean = 0.0;
};

/// Best GMean over {min, midpoints of sorted unique probabilities, 1}; ties go to
/// the larger threshold. The returned threshold is clamped into (0, 1).
Threshold select_threshold_gmean(std::span<const double> prob, std::span<const int> y);

}  // namespace stimeeg::stacking
