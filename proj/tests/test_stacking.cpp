#include <doctest.h>

#include <cmath>
#include <random>

#include "stimeeg/gbdt.hpp"
#include "stimeeg/stacking.hpp"

using namespace stimeeg;
using namespace stimeeg::stacking;

namespace {

struct Instance {
  Matrix p;
  std::vector<int> y;
};

Instance perfect_vs_flat(std::size_t n) {
  Instance in{Matrix(n, 2), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    in.y[i] = static_cast<int>(i % 2);
    in.p(i, 0) = 10.0 * (2.0 * in.y[i] - 1.0);
    in.p(i, 1) = 0.0;
  }
  return in;
}

// Grid search of the objective over w = (a, 1 - a).
double grid_oracle(const Instance& in, const Options& o) {
  double best_a = 0.5, best_f = 1e300;
  for (int k = 1; k < 1000000; ++k) {
    const double a = k / 1e6;
    const std::vector<double> w{a, 1.0 - a};
    const double f = objective(in.p, in.y, w, o);
    if (f < best_f) best_f = f, best_a = a;
  }
  return best_a;
}

double sum(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

}  // namespace

TEST_CASE("single base classifier gets all the weight") {
  Instance in{Matrix(4, 1), {0, 1, 0, 1}};
  for (std::size_t i = 0; i < 4; ++i) in.p(i, 0) = static_cast<double>(i);
  const auto r = fit_stack(in.p, in.y);
  REQUIRE(r.weights.size() == 1);
  CHECK(r.weights[0] == 1.0);
}

TEST_CASE("perfect versus uninformative base classifier") {
  const auto in = perfect_vs_flat(40);
  const Options o;
  const auto r = fit_stack(in.p, in.y, o);
  CHECK(r.weights[0] > r.weights[1]);
  CHECK(r.weights[0] > 0.5);
  CHECK(std::abs(sum(r.weights) - 1.0) <= 1e-9);
  CHECK(std::abs(r.weights[0] - grid_oracle(in, o)) <= 1e-3);

  Options small = o;
  small.alpha = 1e-4;
  CHECK(fit_stack(in.p, in.y, small).weights[0] > r.weights[0]);

  Options standard = o;
  standard.shifted_negative_term = false;
  const auto rs = fit_stack(in.p, in.y, standard);
  CHECK(std::abs(rs.weights[0] - grid_oracle(in, standard)) <= 1e-3);
}

TEST_CASE("identical columns split the weight evenly") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  Instance in{Matrix(30, 2), std::vector<int>(30)};
  for (std::size_t i = 0; i < 30; ++i) {
    in.y[i] = static_cast<int>(i % 3 == 0);
    in.p(i, 0) = in.p(i, 1) = g(rng) + in.y[i];
  }
  const auto r = fit_stack(in.p, in.y);
  CHECK(std::abs(r.weights[0] - 0.5) <= 1e-6);
  CHECK(std::abs(r.weights[1] - 0.5) <= 1e-6);
}

TEST_CASE("weights stay on the simplex and respond to the barrier") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  Instance in{Matrix(50, 4), std::vector<int>(50)};
  for (std::size_t i = 0; i < 50; ++i) {
    in.y[i] = static_cast<int>(i % 2);
    const double s = 2.0 * in.y[i] - 1.0;
    for (std::size_t k = 0; k < 4; ++k) in.p(i, k) = s * static_cast<double>(k) + 2.0 * g(rng);
  }
  double prev_max = 2.0;
  for (double alpha : {0.05, 1.0, 100.0}) {
    Options o;
    o.alpha = alpha;
    const auto r = fit_stack(in.p, in.y, o);
    CHECK(std::abs(sum(r.weights) - 1.0) <= 1e-9);
    for (double w : r.weights) CHECK(w > 0.0);
    const double mx = *std::max_element(r.weights.begin(), r.weights.end());
    CHECK(mx < prev_max);
    prev_max = mx;
  }
  CHECK(prev_max < 0.26);

  // Permuting columns permutes the weights.
  Matrix swapped = in.p;
  for (std::size_t i = 0; i < 50; ++i) std::swap(swapped(i, 0), swapped(i, 3));
  const auto a = fit_stack(in.p, in.y);
  const auto b = fit_stack(swapped, in.y);
  CHECK(a.weights[0] == doctest::Approx(b.weights[3]).epsilon(1e-6));
  CHECK(a.weights[3] == doctest::Approx(b.weights[0]).epsilon(1e-6));
}

TEST_CASE("stacking input validation") {
  Matrix p(2, 2);
  p(0, 0) = std::nan("");
  CHECK_THROWS_AS(fit_stack(p, std::vector<int>{0, 1}), Error);
  CHECK_THROWS_AS(fit_stack(Matrix(2, 2), std::vector<int>{1, 1}), Error);
}

TEST_CASE("stack predictions") {
  CHECK(predict_stack(std::vector<double>{0.3, 0.7}, std::vector<double>{0.0, 0.0}) == 0.5);
  CHECK(predict_stack(std::vector<double>{1.0, 0.0}, std::vector<double>{2.0, -50.0}) ==
        doctest::Approx(0.8807970779778823));
  const double p = predict_stack(std::vector<double>{0.5, 0.5}, std::vector<double>{800.0, 800.0});
  CHECK(p <= 1.0);
  CHECK_THROWS_AS(predict_stack(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("GMean threshold selection") {
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  const auto t = select_threshold_gmean(sep, y);
  CHECK(t.threshold == doctest::Approx(0.5));
  CHECK(t.gmean == 1.0);

  const std::vector<double> same(5, 0.4);
  const std::vector<int> y2{1, 0, 0, 1, 0};
  const auto s = select_threshold_gmean(same, y2);
  CHECK(s.gmean == doctest::Approx(std::sqrt(0.4)));
  CHECK(s.threshold > 0.0);
  CHECK(s.threshold <= 0.4);

  // Brute-force sweep over many thresholds agrees with the returned maximum.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> prob(12);
    std::vector<int> lab(12);
    for (std::size_t i = 0; i < 12; ++i) {
      lab[i] = static_cast<int>(i % 3 == 0);
      prob[i] = (1.0 + std::round(u(rng) * 18.0)) / 20.0;
    }
    double best = 0.0;
    for (int k = 0; k <= 2000; ++k) best = std::max(best, gmean(prob, lab, k / 2000.0));
    const auto r = select_threshold_gmean(prob, lab);
    CHECK(r.gmean == doctest::Approx(best).epsilon(1e-12));
    CHECK(gmean(prob, lab, r.threshold) == doctest::Approx(r.gmean));
  }
}
