#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "stimeeg/evaluation.hpp"

using namespace stimeeg;
using namespace stimeeg::evaluation;

namespace {

// Definition-level AUC: count concordant pairs, half credit for ties.
double auc_oracle(const std::vector<double>& p, const std::vector<int>& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      if (p[i] > p[j]) num += 1.0;
      if (p[i] == p[j]) num += 0.5;
    }
  }
  return num / pairs;
}

features::FeatureMatrix make_matrix(const std::vector<int>& y, features::FeatureConfig cfg,
                                    const std::function<double(std::size_t, std::size_t)>& value,
                                    std::size_t n_features) {
  features::FeatureMatrix fm;
  fm.config = cfg;
  fm.segment = SegmentKind::IPS;
  fm.X = Matrix(y.size(), n_features);
  for (std::size_t i = 0; i < y.size(); ++i) {
    fm.subject_ids.push_back("s" + std::to_string(i));
    fm.labels.push_back(y[i] ? Label::Epileptic : Label::NonEpileptic);
    fm.ied_free.push_back(true);
    for (std::size_t f = 0; f < n_features; ++f) fm.X(i, f) = value(i, f);
  }
  for (std::size_t f = 0; f < n_features; ++f) fm.feature_names.push_back("f" + std::to_string(f));
  return fm;
}

std::vector<int> balanced(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  return y;
}

features::FeatureConfig cfg(features::Family fam, double window = 2.0) {
  return {fam, preprocess::MontageKind::CAR, window, features::Combiner::Mean};
}

}  // namespace

TEST_CASE("AUC examples and brute-force oracle") {
  CHECK(compute_auc(std::vector<double>{0.2, 0.8}, std::vector<int>{0, 1}) == 1.0);
  CHECK(compute_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
  CHECK(compute_auc(std::vector<double>{0.8, 0.2}, std::vector<int>{0, 1}) == 0.0);
  CHECK_THROWS_AS(compute_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);

  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> size(2, 30), level(0, 9);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(size(rng));
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = level(rng) / 10.0;
      y[i] = static_cast<int>(rng() & 1);
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(compute_auc(p, y) == auc_oracle(p, y));
    // Strictly monotone transforms leave the AUC unchanged.
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = std::exp(3.0 * p[i]) - 7.0;
    CHECK(compute_auc(q, y) == compute_auc(p, y));
  }
}

TEST_CASE("ROC and BAC at sensitivity 0.8") {
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const auto perfect = roc_curve(std::vector<double>{0.1, 0.2, 0.3, 0.7, 0.8, 0.9}, y);
  CHECK(perfect.front().fpr == 0.0);
  CHECK(perfect.back().tpr == 1.0);
  CHECK(bac_at_sensitivity(perfect) == doctest::Approx(0.9));

  // One positive and one negative per score level: the ROC is the diagonal.
  std::vector<double> p;
  std::vector<int> yy;
  for (int k = 0; k < 10; ++k) {
    p.insert(p.end(), {k / 10.0, k / 10.0});
    yy.insert(yy.end(), {0, 1});
  }
  CHECK(bac_at_sensitivity(roc_curve(p, yy)) == doctest::Approx(0.5));

  // Hand-built ROC: (0,0) (0.1,0.5) (0.5,1). TPR 0.8 lies 60% along the
  // second edge, so FPR = 0.1 + 0.6 * 0.4 = 0.34.
  const std::vector<RocPoint> hand{{0, 0, 1}, {0.1, 0.5, 0.6}, {0.5, 1.0, 0.3}, {1, 1, 0}};
  CHECK(bac_at_sensitivity(hand) == doctest::Approx((0.8 + 0.66) / 2));

  Confusion c{8, 1, 9, 2};
  CHECK(c.sensitivity() == doctest::Approx(0.8));
  CHECK(c.specificity() == doctest::Approx(0.9));
  CHECK(c.bac() == doctest::Approx(0.85));
  CHECK(c.gmean() == doctest::Approx(std::sqrt(8.0 / 9.0 * 0.8)));
  CHECK(Confusion{0, 0, 5, 5}.gmean() == 0.0);
}

TEST_CASE("clinically relevant line") {
  CHECK(clinically_relevant_slope(0.5, 0.5) == doctest::Approx(1.5));
  CHECK(std::abs(clinically_relevant_slope(40.0 / 141.0, 101.0 / 141.0) - 3.7875) <= 1e-9);
  CHECK(clinically_relevant(0.0, 1e-9, 3.7875));
  CHECK_FALSE(clinically_relevant(0.2, 0.7, 3.7875));
  CHECK_THROWS_AS(clinically_relevant_slope(0.0, 1.0), Error);
}

TEST_CASE("LOSO fold plans") {
  const std::vector<int> y{1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
  const auto folds = loso_folds(y, 7);
  REQUIRE(folds.size() == 10);
  std::set<std::size_t> tests;
  for (const auto& f : folds) {
    tests.insert(f.test);
    CHECK(f.train.size() == 9);
    CHECK(std::find(f.train.begin(), f.train.end(), f.test) == f.train.end());
    CHECK(f.valid.size() == 3);
    CHECK(f.inner_train.size() == 6);
    std::vector<std::size_t> all = f.valid;
    all.insert(all.end(), f.inner_train.begin(), f.inner_train.end());
    std::sort(all.begin(), all.end());
    CHECK(all == f.train);
    for (const auto* side : {&f.valid, &f.inner_train}) {
      std::set<int> classes;
      for (auto i : *side) classes.insert(y[i]);
      CHECK(classes.size() == 2);
    }
  }
  CHECK(tests.size() == 10);
  CHECK(loso_folds(y, 7)[3].valid == folds[3].valid);
  CHECK_THROWS_AS(loso_folds(std::vector<int>{1, 0}, 0), Error);
  CHECK_THROWS_AS(loso_folds(std::vector<int>{1, 1, 1}, 0), Error);
}

TEST_CASE("single-config LOSO on an informative and a shuffled feature") {
  const auto y = balanced(30);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> noise(30 * 3);
  for (auto& v : noise) v = g(rng);
  const auto good = make_matrix(y, cfg(features::Family::Spectral),
                                [&](std::size_t i, std::size_t f) { return (f == 0 ? 3.0 * y[i] : 0.0) + noise[i * 3 + f]; }, 3);
  EvalOptions o;
  const auto r = run_single_config(good, o);
  CHECK(r.seeds.size() == 5);
  CHECK(r.auc.mean >= 0.95);
  CHECK(r.subject_ids.size() == 30);
  for (double p : r.mean_prob) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  auto shuffled_y = y;
  std::shuffle(shuffled_y.begin(), shuffled_y.end(), rng);
  auto shuffled = good;
  for (std::size_t i = 0; i < 30; ++i) shuffled.labels[i] = shuffled_y[i] ? Label::Epileptic : Label::NonEpileptic;
  const auto rs = run_single_config(shuffled, o);
  CHECK(rs.auc.mean >= 0.3);
  CHECK(rs.auc.mean <= 0.7);

  // Deterministic trees: every repeat gives the same predictions.
  o.gbdt.subsample = 1.0;
  const auto det = run_single_config(good, o);
  CHECK(det.auc.std == 0.0);

  // Threads do not change the result.
  EvalOptions threaded;
  threaded.threads = 3;
  CHECK(run_single_config(good, threaded).to_json() == r.to_json());
}

TEST_CASE("unlabeled rows are ignored") {
  auto y = balanced(21);
  auto fm = make_matrix(y, cfg(features::Family::UTM), [&](std::size_t i, std::size_t) { return 1.0 * y[i]; }, 1);
  fm.labels[0].reset();
  EvalOptions o;
  o.seeds = 1;
  const auto r = run_single_config(fm, o);
  CHECK(r.subject_ids.size() == 20);
  CHECK(r.auc.mean == 1.0);
}

TEST_CASE("no test-subject rows reach any fit") {
  const auto y = balanced(12);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(12), b(12);
  for (auto& v : a) v = g(rng);
  for (auto& v : b) v = g(rng);
  const auto fa = make_matrix(y, cfg(features::Family::Spectral), [&](std::size_t i, std::size_t) { return a[i] + y[i]; }, 1);
  const auto fb = make_matrix(y, cfg(features::Family::UTM), [&](std::size_t i, std::size_t) { return b[i]; }, 1);
  std::size_t events = 0, leaks = 0;
  EvalOptions o;
  o.seeds = 2;
  o.observer = [&](const FitEvent& ev) {
    ++events;
    const std::size_t test = std::stoul(ev.test_subject.substr(1));
    for (const auto& s : ev.subjects) leaks += s == ev.test_subject;
    if (ev.stage != FitStage::EnsembleStack) {
      const auto& src = ev.config == fa.config.key() ? fa : fb;
      const auto h = row_hash(src.X.row(test));
      for (auto rh : ev.row_hashes) leaks += rh == h;
    }
  };
  run_single_config(fa, o);
  CHECK(events == 2 * 12);
  run_ensemble({&fa, &fb}, o);
  CHECK(events == 2 * 12 + 2 * 12 * 5);
  CHECK(leaks == 0);
}

TEST_CASE("stacked ensembles") {
  const auto y = balanced(30);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(30), b(30);
  for (auto& v : a) v = g(rng);
  for (auto& v : b) v = g(rng);
  const auto strong = make_matrix(y, cfg(features::Family::Spectral), [&](std::size_t i, std::size_t) { return a[i] + 10.0 * y[i]; }, 1);
  const auto noise = make_matrix(y, cfg(features::Family::UTM), [&](std::size_t i, std::size_t) { return b[i]; }, 1);
  EvalOptions o;
  const auto single_strong = run_single_config(strong, o);
  const auto single_noise = run_single_config(noise, o);
  const auto ens = run_ensemble({&strong, &noise}, o);
  CHECK(ens.auc.mean >= std::max(single_strong.auc.mean, single_noise.auc.mean) - 0.02);
  for (const auto& s : ens.seeds) {
    for (const auto& w : s.weights) {
      REQUIRE(w.size() == 2);
      CHECK(std::abs(w[0] + w[1] - 1.0) <= 1e-9);
    }
    for (double t : s.thresholds) {
      CHECK(t > 0.0);
      CHECK(t < 1.0);
    }
  }
  const auto j = ens.to_json();
  CHECK(j["members"].size() == 2);
  CHECK(j["seeds"][0]["fold_weights"].size() == 30);

  // Identical members with deterministic trees reproduce the single model.
  o.gbdt.subsample = 1.0;
  const auto copy = make_matrix(y, cfg(features::Family::Spectral, 5.0), [&](std::size_t i, std::size_t) { return a[i] + 10.0 * y[i]; }, 1);
  const auto twin = run_ensemble({&strong, &copy}, o);
  CHECK(std::abs(twin.auc.mean - run_single_config(strong, o).auc.mean) <= 0.01);

  const auto sizes = run_ensembles({&strong, &noise, &copy}, 2, 10, o);
  REQUIRE(sizes.size() == 2);
  CHECK(sizes[1].members.size() == 3);
}

TEST_CASE("ranking configurations") {
  auto report = [](std::string key, double auc, double bac) {
    Report r;
    r.name = std::move(key);
    r.auc.mean = auc;
    r.bac_at_sens.mean = bac;
    return r;
  };
  std::vector<Report> reports{report("Spectral/CAR/2s/Mean", 0.75, 0.7), report("Spectral/CAR/5s/Mean", 0.80, 0.6),
                              report("UTM/CAR/2s/Mean", 0.9, 0.7),       report("UTM/CAR/5s/Median", 0.9, 0.8),
                              report("CC/CAR/10s/Mean", 0.6, 0.5),       report("CC/CAR/5s/Mean", 0.6, 0.5)};
  const auto ranked = rank_configs(reports);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0]->name == "UTM/CAR/5s/Median");
  CHECK(ranked[1]->name == "Spectral/CAR/5s/Mean");
  CHECK(ranked[2]->name == "CC/CAR/5s/Mean");
  CHECK(rank_configs({reports[0]}).front()->name == reports[0].name);
}
