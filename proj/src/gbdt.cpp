#include "stimeeg/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stimeeg/stats.hpp"

namespace stimeeg::gbdt {

namespace {

constexpr int kFormatVersion = 1;

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  double gl = 0.0, hl = 0.0;
  bool found = false;
};

struct NodeStats {
  double g = 0.0, h = 0.0;
  int depth = 0;
};

double score(double g, double h, double lambda) { return g * g / (h + lambda); }

// log(1 + exp(-z)), stable.
double softplus_neg(double z) { return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }

class Grower {
 public:
  Grower(const Matrix& x, const std::vector<std::vector<std::size_t>>& sorted,
         const std::vector<std::vector<std::size_t>>& missing, const Params& p)
      : x_(x), sorted_(sorted), missing_(missing), p_(p) {}

  Tree grow(const std::vector<double>& g, const std::vector<double>& h, const std::vector<bool>& in_sample) {
    const std::size_t n = x_.rows();
    Tree tree;
    std::vector<NodeStats> stats(1);
    tree.nodes.emplace_back();
    position_.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_sample[i]) continue;
      position_[i] = 0;
      stats[0].g += g[i];
      stats[0].h += h[i];
    }
    std::vector<int> frontier{0};
    while (!frontier.empty()) {
      std::vector<Candidate> best(tree.nodes.size());
      std::vector<bool> active(tree.nodes.size(), false);
      for (int id : frontier) active[id] = stats[id].depth < p_.max_depth;
      find_splits(g, h, stats, active, best);

      std::vector<int> next;
      for (int id : frontier) {
        const Candidate& c = best[id];
        if (!active[id] || !c.found) {
          tree.nodes[id].value = leaf_value(stats[id]);
          continue;
        }
        const int left = static_cast<int>(tree.nodes.size());
        Node& node = tree.nodes[id];
        node.feature = c.feature;
        node.threshold = c.threshold;
        node.default_left = c.default_left;
        node.left = left;
        node.right = left + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        const int depth = stats[id].depth + 1;
        stats.push_back({c.gl, c.hl, depth});
        stats.push_back({stats[id].g - c.gl, stats[id].h - c.hl, depth});
        next.push_back(left);
        next.push_back(left + 1);
      }
      // Route rows to the new children.
      for (std::size_t i = 0; i < n; ++i) {
        const int id = position_[i];
        if (id < 0 || tree.nodes[id].feature < 0) continue;
        const Node& node = tree.nodes[id];
        const double v = x_(i, static_cast<std::size_t>(node.feature));
        const bool go_left = std::isnan(v) ? node.default_left : v < node.threshold;
        position_[i] = go_left ? node.left : node.right;
      }
      frontier = std::move(next);
    }
    return tree;
  }

 private:
  double leaf_value(const NodeStats& s) const { return -p_.learning_rate * s.g / (s.h + p_.l2_leaf_reg); }

  void consider(Candidate& best, const NodeStats& s, double gl, double hl, int feature, double threshold,
                bool default_left) const {
    const double gr = s.g - gl, hr = s.h - hl;
    if (hl < p_.min_child_weight || hr < p_.min_child_weight) return;
    const double lambda = p_.l2_leaf_reg;
    const double gain =
        0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(s.g, s.h, lambda)) - p_.gamma;
    if (!(gain > 0.0)) return;
    // Near-ties keep the earlier candidate so that results do not hinge on rounding.
    if (best.found && gain <= best.gain + 1e-12 * std::abs(best.gain)) return;
    best = {gain, feature, threshold, default_left, gl, hl, true};
  }

  void find_splits(const std::vector<double>& g, const std::vector<double>& h,
                   const std::vector<NodeStats>& stats, const std::vector<bool>& active,
                   std::vector<Candidate>& best) const {
    const std::size_t nodes = stats.size();
    std::vector<double> gm(nodes), hm(nodes), gl(nodes), hl(nodes), last(nodes);
    std::vector<bool> seen(nodes);
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      std::fill(gm.begin(), gm.end(), 0.0);
      std::fill(hm.begin(), hm.end(), 0.0);
      std::fill(gl.begin(), gl.end(), 0.0);
      std::fill(hl.begin(), hl.end(), 0.0);
      std::fill(seen.begin(), seen.end(), false);
      for (std::size_t i : missing_[f]) {
        const int id = position_[i];
        if (id < 0 || !active[id]) continue;
        gm[id] += g[i];
        hm[id] += h[i];
      }
      for (std::size_t i : sorted_[f]) {
        const int id = position_[i];
        if (id < 0 || !active[id]) continue;
        const double v = x_(i, f);
        if (seen[id] && v > last[id]) {
          double threshold = 0.5 * (last[id] + v);
          if (!(threshold > last[id] && threshold <= v)) threshold = v;
          const auto fi = static_cast<int>(f);
          consider(best[id], stats[id], gl[id] + gm[id], hl[id] + hm[id], fi, threshold, true);
          consider(best[id], stats[id], gl[id], hl[id], fi, threshold, false);
        }
        gl[id] += g[i];
        hl[id] += h[i];
        last[id] = v;
        seen[id] = true;
      }
    }
  }

  const Matrix& x_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  const std::vector<std::vector<std::size_t>>& missing_;
  const Params& p_;
  std::vector<int> position_;
};

}  // namespace

void Params::validate() const {
  if (n_estimators < 1) throw Error("gbdt: n_estimators must be >= 1");
  if (max_depth < 1) throw Error("gbdt: max_depth must be >= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw Error("gbdt: subsample must be in (0, 1]");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error("gbdt: learning_rate must be in (0, 1]");
  if (!(gamma >= 0.0)) throw Error("gbdt: gamma must be >= 0");
  if (!(l2_leaf_reg >= 0.0)) throw Error("gbdt: l2_leaf_reg must be >= 0");
  if (!(min_child_weight >= 0.0)) throw Error("gbdt: min_child_weight must be >= 0");
  if (scale_pos_weight && !(*scale_pos_weight > 0.0)) throw Error("gbdt: scale_pos_weight must be > 0");
}

double Tree::predict(std::span<const double> row) const {
  int id = 0;
  while (nodes[id].feature >= 0) {
    const Node& n = nodes[id];
    const double v = row[static_cast<std::size_t>(n.feature)];
    id = (std::isnan(v) ? n.default_left : v < n.threshold) ? n.left : n.right;
  }
  return nodes[id].value;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].feature < 0) continue;
    d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
    deepest = std::max(deepest, d[i] + 1);
  }
  return deepest;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double scale_pos_weight_for_fold(std::span<const int> y) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  const auto neg = static_cast<std::ptrdiff_t>(y.size()) - pos;
  if (pos == 0) throw Error("scale_pos_weight: no positive samples");
  return static_cast<double>(neg) / static_cast<double>(pos);
}

std::vector<double> column_medians(const Matrix& x) {
  std::vector<double> med(x.cols(), 0.0), col;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    col.clear();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (std::isfinite(x(i, f))) col.push_back(x(i, f));
    }
    if (!col.empty()) med[f] = stats::median(col);
  }
  return med;
}

double Model::predict_log_odds(std::span<const double> row) const {
  if (row.size() != n_features) {
    throw Error("gbdt: expected " + std::to_string(n_features) + " features, got " + std::to_string(row.size()));
  }
  std::vector<double> filled(row.begin(), row.end());
  for (std::size_t f = 0; f < filled.size(); ++f) {
    if (!std::isfinite(filled[f])) filled[f] = medians[f];
  }
  double z = base_score;
  for (const auto& t : trees) z += t.predict(filled);
  return z;
}

std::vector<double> Model::predict_log_odds(const Matrix& x) const {
  if (x.cols() != n_features) {
    throw Error("gbdt: expected " + std::to_string(n_features) + " features, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_log_odds(x.row(i));
  return out;
}

std::vector<double> Model::predict_proba(const Matrix& x) const {
  auto z = predict_log_odds(x);
  for (auto& v : z) v = sigmoid(v);
  return z;
}

Model fit(const Matrix& x_in, std::span<const int> y, const Params& params,
          std::vector<std::string> feature_names, FitTrace* trace) {
  params.validate();
  const std::size_t n = x_in.rows();
  if (y.size() != n) throw Error("gbdt: label count does not match rows");
  if (n < 2) throw Error("gbdt: need at least two samples");
  if (!feature_names.empty() && feature_names.size() != x_in.cols()) {
    throw Error("gbdt: feature name count does not match columns");
  }
  std::size_t pos = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw Error("gbdt: labels must be 0 or 1");
    pos += static_cast<std::size_t>(v);
  }
  if (pos == 0 || pos == n) throw Error("degenerate labels");

  Model model;
  model.params = params;
  model.n_features = x_in.cols();
  model.feature_names = std::move(feature_names);
  model.medians = column_medians(x_in);
  const double spw = params.scale_pos_weight.value_or(scale_pos_weight_for_fold(y));
  model.params.scale_pos_weight = spw;
  model.base_score = std::log(static_cast<double>(pos)) - std::log(static_cast<double>(n - pos));

  Matrix x = x_in;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < x.cols(); ++f) {
      if (!std::isfinite(x(i, f))) x(i, f) = model.medians[f];
    }
  }
  std::vector<std::vector<std::size_t>> sorted(x.cols()), missing(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& idx = sorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
  }

  std::vector<double> margin(n, model.base_score), g(n), h(n), weight(n);
  for (std::size_t i = 0; i < n; ++i) weight[i] = y[i] == 1 ? spw : 1.0;
  const double weight_sum = std::accumulate(weight.begin(), weight.end(), 0.0);
  std::mt19937_64 rng(params.seed);
  std::vector<bool> in_sample(n, true);
  Grower grower(x, sorted, missing, model.params);

  for (int round = 0; round < params.n_estimators; ++round) {
    // g = p - y and h = p (1 - p), written so that flipping labels and margins negates g exactly.
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]), q = sigmoid(-margin[i]);
      g[i] = weight[i] * (y[i] == 1 ? -q : p);
      h[i] = weight[i] * p * q;
    }
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      in_sample[i] = params.subsample >= 1.0 ||
                     static_cast<double>(rng() >> 11) * 0x1.0p-53 < params.subsample;
      kept += in_sample[i];
    }
    if (kept > 0) {
      Tree tree = grower.grow(g, h, in_sample);
      if (tree.nodes.size() > 1) {
        for (std::size_t i = 0; i < n; ++i) margin[i] += tree.predict(x.row(i));
        model.trees.push_back(std::move(tree));
      }
    }
    if (trace) {
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        loss += weight[i] * softplus_neg(y[i] == 1 ? margin[i] : -margin[i]);
      }
      trace->train_loss.push_back(loss / weight_sum);
    }
  }
  return model;
}

nlohmann::json Model::to_json() const {
  nlohmann::json trees_json = nlohmann::json::array();
  for (const auto& t : trees) {
    nlohmann::json tj;
    for (const auto& node : t.nodes) {
      tj["feature"].push_back(node.feature);
      tj["threshold"].push_back(node.threshold);
      tj["default_left"].push_back(node.default_left);
      tj["left"].push_back(node.left);
      tj["right"].push_back(node.right);
      tj["value"].push_back(node.value);
    }
    trees_json.push_back(std::move(tj));
  }
  return {{"format_version", kFormatVersion},
          {"params",
           {{"n_estimators", params.n_estimators},
            {"max_depth", params.max_depth},
            {"subsample", params.subsample},
            {"gamma", params.gamma},
            {"learning_rate", params.learning_rate},
            {"scale_pos_weight", params.scale_pos_weight.value_or(1.0)},
            {"l2_leaf_reg", params.l2_leaf_reg},
            {"min_child_weight", params.min_child_weight},
            {"seed", params.seed}}},
          {"base_score", base_score},
          {"n_features", n_features},
          {"feature_names", feature_names},
          {"medians", medians},
          {"trees", std::move(trees_json)}};
}

Model Model::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) throw Error("gbdt: unsupported model format version");
    Model m;
    const auto& p = j.at("params");
    m.params.n_estimators = p.at("n_estimators").get<int>();
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.subsample = p.at("subsample").get<double>();
    m.params.gamma = p.at("gamma").get<double>();
    m.params.learning_rate = p.at("learning_rate").get<double>();
    m.params.scale_pos_weight = p.at("scale_pos_weight").get<double>();
    m.params.l2_leaf_reg = p.at("l2_leaf_reg").get<double>();
    m.params.min_child_weight = p.at("min_child_weight").get<double>();
    m.params.seed = p.at("seed").get<std::uint64_t>();
    m.base_score = j.at("base_score").get<double>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.medians = j.at("medians").get<std::vector<double>>();
    if (m.medians.size() != m.n_features) throw Error("gbdt: median count does not match features");
    for (const auto& tj : j.at("trees")) {
      Tree t;
      const auto feature = tj.at("feature").get<std::vector<int>>();
      const auto threshold = tj.at("threshold").get<std::vector<double>>();
      const auto default_left = tj.at("default_left").get<std::vector<bool>>();
      const auto left = tj.at("left").get<std::vector<int>>();
      const auto right = tj.at("right").get<std::vector<int>>();
      const auto value = tj.at("value").get<std::vector<double>>();
      const std::size_t k = feature.size();
      if (threshold.size() != k || default_left.size() != k || left.size() != k || right.size() != k ||
          value.size() != k || k == 0) {
        throw Error("gbdt: malformed tree arrays");
      }
      for (std::size_t i = 0; i < k; ++i) {
        const int ik = static_cast<int>(k);
        if (feature[i] >= 0 && (feature[i] >= static_cast<int>(m.n_features) || left[i] <= static_cast<int>(i) ||
                                right[i] <= static_cast<int>(i) || left[i] >= ik || right[i] >= ik)) {
          throw Error("gbdt: malformed tree node");
        }
        t.nodes.push_back({feature[i], threshold[i], default_left[i], left[i], right[i], value[i]});
      }
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("gbdt: malformed model: ") + e.what());
  }
}

}  // namespace stimeeg::gbdt
