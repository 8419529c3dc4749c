#include "stimeeg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <unordered_map>

namespace stimeeg::evaluation {

namespace {

void check_binary(std::span<const double> prob, std::span<const int> y, const char* what) {
  if (prob.size() != y.size()) throw Error(std::string(what) + ": label count does not match predictions");
  for (double p : prob) {
    if (std::isnan(p)) throw Error(std::string(what) + ": NaN prediction");
  }
  for (int v : y) {
    if (v != 0 && v != 1) throw Error(std::string(what) + ": labels must be 0 or 1");
  }
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> y) {
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  return {pos, y.size() - pos};
}

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

std::vector<int> take(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

// Feature rows restricted to a shared, labeled subject list.
struct Cohort {
  std::vector<std::string> subject_ids;
  std::vector<int> y;
  std::vector<Matrix> x;  // one per member, rows aligned with subject_ids
  std::vector<std::string> keys;
  std::vector<std::vector<std::string>> names;
  SegmentKind segment = SegmentKind::Resting;
};

Cohort align(const std::vector<const features::FeatureMatrix*>& members) {
  if (members.empty()) throw Error("evaluation: no feature matrices");
  Cohort c;
  c.segment = members.front()->segment;
  std::vector<std::unordered_map<std::string, std::size_t>> index(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto& fm = *members[k];
    if (fm.segment != c.segment) throw Error("evaluation: ensemble members come from different segments");
    for (std::size_t r = 0; r < fm.subject_ids.size(); ++r) {
      if (fm.labels[r]) index[k].emplace(fm.subject_ids[r], r);
    }
  }
  std::vector<std::vector<std::size_t>> rows(members.size());
  const auto& first = *members.front();
  for (std::size_t r = 0; r < first.subject_ids.size(); ++r) {
    if (!first.labels[r]) continue;
    const auto& id = first.subject_ids[r];
    bool everywhere = true;
    for (const auto& m : index) everywhere = everywhere && m.contains(id);
    if (!everywhere) continue;
    c.subject_ids.push_back(id);
    c.y.push_back(*first.labels[r] == Label::Epileptic ? 1 : 0);
    for (std::size_t k = 0; k < members.size(); ++k) rows[k].push_back(index[k].at(id));
  }
  for (std::size_t k = 0; k < members.size(); ++k) {
    c.x.push_back(take_rows(members[k]->X, rows[k]));
    c.keys.push_back(members[k]->config.key());
    c.names.push_back(members[k]->feature_names);
  }
  const auto [pos, neg] = class_counts(c.y);
  if (pos < 2 || neg < 2) {
    throw Error("evaluation: need at least two labeled subjects per class, have " + std::to_string(pos) +
                " epileptic and " + std::to_string(neg) + " non-epileptic");
  }
  return c;
}

class Audit {
 public:
  explicit Audit(const FitObserver& obs) : obs_(obs) {}

  void record(FitStage stage, const std::string& config, std::size_t seed_index, const std::string& test,
              const std::vector<std::string>& ids, std::span<const std::size_t> rows, const Matrix& x) {
    if (!obs_) return;
    FitEvent ev{stage, config, seed_index, test, {}, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ev.subjects.push_back(ids[rows[i]]);
      ev.row_hashes.push_back(row_hash(x.row(i)));
    }
    std::lock_guard lock(mutex_);
    obs_(ev);
  }

 private:
  const FitObserver& obs_;
  std::mutex mutex_;
};

void finish_seed(SeedResult& s, std::span<const int> y, double sens_target) {
  s.auc = compute_auc(s.prob, y);
  s.bac_at_sens = bac_at_sensitivity(roc_curve(s.prob, y), sens_target);
  const auto cm = confusion(s.decision, y);
  s.bac = cm.bac();
  s.gmean = cm.gmean();
  s.sensitivity = cm.sensitivity();
  s.specificity = cm.specificity();
}

void finish_report(Report& r) {
  const std::size_t n = r.y.size();
  std::vector<double> auc, bs, bac, gm;
  r.mean_prob.assign(n, 0.0);
  for (const auto& s : r.seeds) {
    auc.push_back(s.auc);
    bs.push_back(s.bac_at_sens);
    bac.push_back(s.bac);
    gm.push_back(s.gmean);
    for (std::size_t i = 0; i < n; ++i) r.mean_prob[i] += s.prob[i] / static_cast<double>(r.seeds.size());
  }
  r.auc = mean_std(auc);
  r.bac_at_sens = mean_std(bs);
  r.bac = mean_std(bac);
  r.gmean = mean_std(gm);
  r.roc = roc_curve(r.mean_prob, r.y);
  const auto [pos, neg] = class_counts(r.y);
  r.slope = clinically_relevant_slope(ratio(pos, n), ratio(neg, n));
  const auto cm = confusion(r.seeds.front().decision, r.y);
  r.op_fpr = cm.fpr();
  r.op_tpr = cm.sensitivity();
  r.op_clinically_relevant = clinically_relevant(r.op_fpr, r.op_tpr, r.slope);
}

constexpr double kSensTarget = 0.8;

}  // namespace

double compute_auc(std::span<const double> prob, std::span<const int> y) {
  check_binary(prob, y, "auc");
  const auto [pos, neg] = class_counts(y);
  if (pos == 0 || neg == 0) throw Error("auc: both classes are required");
  std::vector<std::size_t> order(prob.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prob[a] < prob[b]; });
  // Sum of mid-ranks of the positives; every quantity is a multiple of 1/2, so exact.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && prob[order[j]] == prob[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (y[order[k]] == 1) rank_sum += mid;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> prob, std::span<const int> y) {
  check_binary(prob, y, "roc");
  const auto [pos, neg] = class_counts(y);
  if (pos == 0 || neg == 0) throw Error("roc: both classes are required");
  std::vector<std::size_t> order(prob.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prob[a] > prob[b]; });
  std::vector<RocPoint> out{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = prob[order[i]];
    for (; i < order.size() && prob[order[i]] == t; ++i) (y[order[i]] == 1 ? tp : fp)++;
    out.push_back({ratio(fp, neg), ratio(tp, pos), t});
  }
  return out;
}

double bac_at_sensitivity(const std::vector<RocPoint>& roc, double sens) {
  if (roc.empty()) throw Error("bac: empty ROC");
  for (std::size_t k = 0; k < roc.size(); ++k) {
    if (roc[k].tpr < sens) continue;
    double fpr = roc[k].fpr;
    if (k > 0 && roc[k].tpr > roc[k - 1].tpr) {
      const auto& a = roc[k - 1];
      fpr = a.fpr + (sens - a.tpr) / (roc[k].tpr - a.tpr) * (roc[k].fpr - a.fpr);
    }
    return 0.5 * (sens + 1.0 - fpr);
  }
  throw Error("bac: ROC never reaches the sensitivity target");
}

double Confusion::sensitivity() const { return ratio(tp, tp + fn); }
double Confusion::specificity() const { return ratio(tn, tn + fp); }
double Confusion::ppv() const { return ratio(tp, tp + fp); }
double Confusion::gmean() const { return std::sqrt(ppv() * sensitivity()); }

Confusion confusion(std::span<const int> decision, std::span<const int> y) {
  if (decision.size() != y.size()) throw Error("confusion: size mismatch");
  Confusion c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) {
      (decision[i] ? c.tp : c.fn)++;
    } else {
      (decision[i] ? c.fp : c.tn)++;
    }
  }
  return c;
}

double clinically_relevant_slope(double p1, double p0, double posterior) {
  if (!(p1 > 0.0) || !(p0 > 0.0) || p1 >= 1.0 || p0 >= 1.0) throw Error("clinical line: prevalences must lie in (0,1)");
  if (!(posterior > 0.0 && posterior < 1.0)) throw Error("clinical line: posterior must lie in (0,1)");
  return posterior * p0 / (p1 * (1.0 - posterior));
}

bool clinically_relevant(double fpr, double tpr, double slope) { return tpr > slope * fpr; }

std::vector<FoldPlan> loso_folds(std::span<const int> y, std::uint64_t seed, double valid_fraction) {
  const std::size_t n = y.size();
  const auto [pos, neg] = class_counts(y);
  if (n < 3) throw Error("loso: need at least 3 subjects");
  if (pos == 0 || neg == 0) throw Error("loso: both classes are required");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw Error("loso: validation fraction must lie in (0,1)");
  std::vector<FoldPlan> folds;
  for (std::size_t test = 0; test < n; ++test) {
    FoldPlan f;
    f.test = test;
    f.seed = derive_seed(seed, test);
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == test) continue;
      f.train.push_back(j);
      by_class[y[j]].push_back(j);
    }
    const std::size_t n_train = f.train.size();
    const auto n_valid = static_cast<std::size_t>(std::ceil(valid_fraction * static_cast<double>(n_train) - 1e-9));
    // Largest-remainder allocation of validation slots to the two classes.
    std::array<std::size_t, 2> take{};
    std::array<double, 2> rem{};
    for (int c = 0; c < 2; ++c) {
      const double q = static_cast<double>(n_valid) * static_cast<double>(by_class[c].size()) / static_cast<double>(n_train);
      take[c] = static_cast<std::size_t>(std::floor(q));
      rem[c] = q - std::floor(q);
    }
    while (take[0] + take[1] < n_valid) {
      const int c = rem[1] >= rem[0] ? 1 : 0;
      ++take[c];
      rem[c] = -1.0;
    }
    // Keep at least one of each class on both sides where possible.
    for (int c = 0; c < 2; ++c) {
      const int o = 1 - c;
      const std::size_t have = by_class[c].size();
      if (have >= 2 && take[c] == 0 && take[o] > 1) ++take[c], --take[o];
      if (have >= 2 && take[c] == have && by_class[o].size() > take[o] + 1) --take[c], ++take[o];
    }
    if (take[0] >= by_class[0].size() || take[1] >= by_class[1].size()) {
      throw Error("loso: inner training split for test subject " + std::to_string(test) + " has a single class");
    }
    std::mt19937_64 rng(f.seed);
    for (int c = 0; c < 2; ++c) {
      auto members = by_class[c];
      std::shuffle(members.begin(), members.end(), rng);
      f.valid.insert(f.valid.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take[c]));
      f.inner_train.insert(f.inner_train.end(), members.begin() + static_cast<std::ptrdiff_t>(take[c]), members.end());
    }
    std::sort(f.valid.begin(), f.valid.end());
    std::sort(f.inner_train.begin(), f.inner_train.end());
    folds.push_back(std::move(f));
  }
  return folds;
}

std::string_view to_string(FitStage stage) {
  switch (stage) {
    case FitStage::Single: return "single";
    case FitStage::EnsembleBase: return "ensemble_base";
    case FitStage::EnsembleStack: return "ensemble_stack";
    case FitStage::EnsembleRefit: return "ensemble_refit";
  }
  return "?";
}

std::uint64_t row_hash(std::span<const double> row) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : row) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

LabeledRows labeled_rows(const features::FeatureMatrix& fm) {
  LabeledRows out;
  for (std::size_t r = 0; r < fm.labels.size(); ++r) {
    if (!fm.labels[r]) continue;
    out.rows.push_back(r);
    out.y.push_back(*fm.labels[r] == Label::Epileptic ? 1 : 0);
  }
  return out;
}

Report run_single_config(const features::FeatureMatrix& fm, const EvalOptions& opts) {
  if (opts.seeds == 0) throw Error("evaluation: need at least one seed");
  const Cohort c = align({&fm});
  const std::size_t n = c.y.size();
  const std::string key = c.keys.front();
  Report r;
  r.name = key;
  r.members = {key};
  r.segment = c.segment;
  r.subject_ids = c.subject_ids;
  r.y = c.y;
  r.seeds.assign(opts.seeds, {});
  for (auto& s : r.seeds) {
    s.prob.assign(n, 0.0);
    s.decision.assign(n, 0);
  }
  Audit audit(opts.observer);
  parallel_for(opts.seeds * n, opts.threads, [&](std::size_t task) {
    const std::size_t s = task / n, test = task % n;
    std::vector<std::size_t> train;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != test) train.push_back(j);
    }
    const Matrix xtr = take_rows(c.x[0], train);
    auto params = opts.gbdt;
    params.seed = derive_seed(derive_seed(opts.base_seed, s), test);
    audit.record(FitStage::Single, key, s, c.subject_ids[test], c.subject_ids, train, xtr);
    const auto model = gbdt::fit(xtr, take(c.y, train), params, c.names[0]);
    const double p = gbdt::sigmoid(model.predict_log_odds(c.x[0].row(test)));
    r.seeds[s].prob[test] = p;
    r.seeds[s].decision[test] = p >= opts.decision_threshold ? 1 : 0;
  });
  for (auto& s : r.seeds) finish_seed(s, r.y, kSensTarget);
  finish_report(r);
  return r;
}

Report run_ensemble(const std::vector<const features::FeatureMatrix*>& members, const EvalOptions& opts) {
  if (opts.seeds == 0) throw Error("evaluation: need at least one seed");
  const Cohort c = align(members);
  const std::size_t n = c.y.size(), k = members.size();
  Report r;
  r.name = "ensemble" + std::to_string(k);
  r.members = c.keys;
  r.segment = c.segment;
  r.subject_ids = c.subject_ids;
  r.y = c.y;
  std::vector<std::vector<FoldPlan>> plans;
  for (std::size_t s = 0; s < opts.seeds; ++s) {
    plans.push_back(loso_folds(c.y, derive_seed(opts.base_seed, s), opts.valid_fraction));
  }
  r.seeds.assign(opts.seeds, {});
  for (auto& s : r.seeds) {
    s.prob.assign(n, 0.0);
    s.decision.assign(n, 0);
    s.weights.assign(n, {});
    s.thresholds.assign(n, 0.0);
  }
  Audit audit(opts.observer);
  parallel_for(opts.seeds * n, opts.threads, [&](std::size_t task) {
    const std::size_t s = task / n, test = task % n;
    const FoldPlan& f = plans[s][test];
    const auto y_inner = take(c.y, f.inner_train);
    const auto y_valid = take(c.y, f.valid);
    const auto y_train = take(c.y, f.train);
    Matrix p_valid(f.valid.size(), k);
    std::vector<double> p_test(k);
    for (std::size_t m = 0; m < k; ++m) {
      auto params = opts.gbdt;
      params.seed = derive_seed(f.seed, 2 * m);
      const Matrix xin = take_rows(c.x[m], f.inner_train);
      audit.record(FitStage::EnsembleBase, c.keys[m], s, c.subject_ids[test], c.subject_ids, f.inner_train, xin);
      const auto base = gbdt::fit(xin, y_inner, params, c.names[m]);
      for (std::size_t v = 0; v < f.valid.size(); ++v) p_valid(v, m) = base.predict_log_odds(c.x[m].row(f.valid[v]));
    }
    audit.record(FitStage::EnsembleStack, "stack", s, c.subject_ids[test], c.subject_ids, f.valid, p_valid);
    const auto stack = stacking::fit_stack(p_valid, y_valid, opts.stacking);
    std::vector<double> valid_prob(f.valid.size());
    for (std::size_t v = 0; v < f.valid.size(); ++v) valid_prob[v] = stacking::predict_stack(stack.weights, p_valid.row(v));
    const auto threshold = stacking::select_threshold_gmean(valid_prob, y_valid);
    for (std::size_t m = 0; m < k; ++m) {
      auto params = opts.gbdt;
      params.seed = derive_seed(f.seed, 2 * m + 1);
      const Matrix xtr = take_rows(c.x[m], f.train);
      audit.record(FitStage::EnsembleRefit, c.keys[m], s, c.subject_ids[test], c.subject_ids, f.train, xtr);
      const auto base = gbdt::fit(xtr, y_train, params, c.names[m]);
      p_test[m] = base.predict_log_odds(c.x[m].row(test));
    }
    const double p = stacking::predict_stack(stack.weights, p_test);
    auto& out = r.seeds[s];
    out.prob[test] = p;
    out.decision[test] = p >= threshold.threshold ? 1 : 0;
    out.weights[test] = stack.weights;
    out.thresholds[test] = threshold.threshold;
  });
  for (auto& s : r.seeds) finish_seed(s, r.y, kSensTarget);
  finish_report(r);
  return r;
}

std::vector<const Report*> rank_configs(const std::vector<Report>& reports) {
  auto window = [](const Report& r) { return features::FeatureConfig::parse(r.name).window_s; };
  auto better = [&](const Report* a, const Report* b) {
    if (a->auc.mean != b->auc.mean) return a->auc.mean > b->auc.mean;
    if (a->bac_at_sens.mean != b->bac_at_sens.mean) return a->bac_at_sens.mean > b->bac_at_sens.mean;
    return window(*a) < window(*b);
  };
  std::map<features::Family, const Report*> best;
  for (const auto& r : reports) {
    const auto fam = features::FeatureConfig::parse(r.name).family;
    auto it = best.find(fam);
    if (it == best.end() || better(&r, it->second)) best[fam] = &r;
  }
  std::vector<const Report*> out;
  for (const auto& [fam, r] : best) out.push_back(r);
  std::stable_sort(out.begin(), out.end(), better);
  return out;
}

std::vector<Report> run_ensembles(const std::vector<const features::FeatureMatrix*>& ranked, std::size_t min_size,
                                  std::size_t max_size, const EvalOptions& opts) {
  std::vector<Report> out;
  const std::size_t top = std::min(max_size, ranked.size());
  for (std::size_t k = std::max<std::size_t>(min_size, 1); k <= top; ++k) {
    std::vector<const features::FeatureMatrix*> members(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
    out.push_back(run_ensemble(members, opts));
  }
  return out;
}

nlohmann::json Report::to_json() const {
  using nlohmann::json;
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json j;
  j["name"] = name;
  j["members"] = members;
  j["segment"] = std::string(stimeeg::to_string(segment));
  j["auc"] = ms(auc);
  j["bac_at_sens_0.8"] = ms(bac_at_sens);
  j["bac_at_decision"] = ms(bac);
  j["gmean"] = ms(gmean);
  j["clinical_slope"] = slope;
  j["operating_point"] = {{"fpr", op_fpr}, {"tpr", op_tpr}, {"clinically_relevant", op_clinically_relevant}};
  json subjects = json::array();
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    subjects.push_back({{"subject", subject_ids[i]},
                        {"label", y[i]},
                        {"mean_prob", mean_prob[i]},
                        {"decision", seeds.front().decision[i]}});
  }
  j["subjects"] = subjects;
  json roc_j = json::array();
  for (const auto& p : roc) roc_j.push_back({p.fpr, p.tpr});
  j["roc"] = roc_j;
  json seeds_j = json::array();
  for (const auto& s : seeds) {
    json sj{{"auc", s.auc},
            {"bac_at_sens_0.8", s.bac_at_sens},
            {"bac_at_decision", s.bac},
            {"gmean", s.gmean},
            {"sensitivity", s.sensitivity},
            {"specificity", s.specificity},
            {"prob", s.prob}};
    if (!s.weights.empty()) {
      sj["fold_weights"] = s.weights;
      sj["fold_thresholds"] = s.thresholds;
    }
    seeds_j.push_back(sj);
  }
  j["seeds"] = seeds_j;
  return j;
}

}  // namespace stimeeg::evaluation
