#include "stimeeg/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stimeeg/gbdt.hpp"

namespace stimeeg::stacking {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log(sigmoid(z)), stable.
double log_sigmoid(double z) { return z < 0 ? z - std::log1p(std::exp(z)) : -std::log1p(std::exp(-z)); }

void check_inputs(const Matrix& p, std::span<const int> y) {
  if (p.rows() != y.size()) throw Error("stacking: label count does not match rows");
  if (p.cols() == 0) throw Error("stacking: need at least one base classifier");
  for (double v : p.data()) {
    if (!std::isfinite(v)) throw Error("stacking: non-finite base log-odds");
  }
  bool pos = false, neg = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw Error("stacking: labels must be 0 or 1");
    (v == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) throw Error("degenerate labels");
}

std::vector<double> margins(const Matrix& p, std::span<const double> w) {
  std::vector<double> z(p.rows(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t k = 0; k < p.cols(); ++k) z[i] += w[k] * p(i, k);
  }
  return z;
}

std::vector<double> gradient(const Matrix& p, std::span<const int> y, std::span<const double> w, const Options& o) {
  const auto z = margins(p, w);
  const double n = static_cast<double>(p.rows());
  std::vector<double> grad(p.cols(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    // d/dz of the per-sample loss.
    double dz;
    if (y[i] == 1) {
      dz = -gbdt::sigmoid(-z[i]);
    } else {
      dz = o.shifted_negative_term ? gbdt::sigmoid(z[i] - 1.0) : gbdt::sigmoid(z[i]);
    }
    for (std::size_t k = 0; k < p.cols(); ++k) grad[k] += dz * p(i, k) / n;
  }
  for (std::size_t k = 0; k < p.cols(); ++k) grad[k] -= o.alpha / w[k];
  return grad;
}

}  // namespace

double objective(const Matrix& p, std::span<const int> y, std::span<const double> w, const Options& o) {
  if (w.size() != p.cols()) throw Error("stacking: weight count does not match base classifiers");
  const auto z = margins(p, w);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (y[i] == 1) {
      loss -= log_sigmoid(z[i]);
    } else {
      loss -= o.shifted_negative_term ? log_sigmoid(1.0 - z[i]) : log_sigmoid(-z[i]);
    }
  }
  loss /= static_cast<double>(p.rows());
  double barrier = 0.0;
  for (double wk : w) {
    if (!(wk > 0.0)) return kInf;
    barrier -= std::log(wk);
  }
  return loss + o.alpha * barrier;
}

StackResult fit_stack(const Matrix& p, std::span<const int> y, const Options& o) {
  check_inputs(p, y);
  if (!(o.alpha > 0.0)) throw Error("stacking: alpha must be positive");
  const std::size_t k = p.cols();
  StackResult r;
  r.weights.assign(k, 1.0 / static_cast<double>(k));
  r.objective = objective(p, y, r.weights, o);
  if (k == 1) {
    r.converged = true;
    return r;
  }
  std::vector<double> w = r.weights, cand(k);
  double f = r.objective;
  for (int it = 1; it <= o.max_iterations; ++it) {
    r.iterations = it;
    const auto grad = gradient(p, y, w, o);
    const double gmin = *std::min_element(grad.begin(), grad.end());
    bool accepted = false;
    double fc = kInf;
    for (double eta = o.step; eta > 1e-18; eta *= 0.5) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        cand[j] = w[j] * std::exp(-eta * (grad[j] - gmin));
        total += cand[j];
      }
      for (auto& c : cand) c /= total;
      fc = objective(p, y, cand, o);
      if (fc <= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      r.converged = true;
      break;
    }
    double change = 0.0;
    for (std::size_t j = 0; j < k; ++j) change = std::max(change, std::abs(cand[j] - w[j]));
    w = cand;
    f = fc;
    if (f <= r.objective) {
      r.objective = f;
      r.weights = w;
    }
    if (change < o.tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

double predict_stack(std::span<const double> w, std::span<const double> log_odds) {
  if (w.size() != log_odds.size()) throw Error("stacking: weight count does not match base classifiers");
  double z = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * log_odds[k];
  return gbdt::sigmoid(z);
}

double gmean(std::span<const double> prob, std::span<const int> y, double t) {
  std::size_t tp = 0, fp = 0, pos = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const bool predicted = prob[i] >= t;
    pos += y[i] == 1;
    if (predicted) (y[i] == 1 ? tp : fp)++;
  }
  if (tp + fp == 0 || pos == 0) return 0.0;
  const double ppv = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
  return std::sqrt(ppv * tpr);
}

Threshold select_threshold_gmean(std::span<const double> prob, std::span<const int> y) {
  if (prob.size() != y.size()) throw Error("threshold: label count does not match predictions");
  std::vector<double> u(prob.begin(), prob.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  // The smallest probability acts as the 0 guard: everything predicted positive.
  std::vector<double> candidates{u.empty() ? 0.0 : u.front()};
  for (std::size_t i = 0; i + 1 < u.size(); ++i) candidates.push_back(0.5 * (u[i] + u[i + 1]));
  candidates.push_back(1.0);
  Threshold best{0.0, -1.0};
  for (double t : candidates) {
    const double s = gmean(prob, y, t);
    if (s >= best.gmean) best = {t, s};
  }
  best.threshold = std::clamp(best.threshold, 1e-12, 1.0 - 1e-12);
  return best;
}

}  // namespace stimeeg::stacking
