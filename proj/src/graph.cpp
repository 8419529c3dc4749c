#include "stimeeg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stimeeg/stats.hpp"

namespace stimeeg::graph {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool same_length(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(a, b); }

// Dijkstra on a dense matrix restricted to `nodes`; distances indexed like `nodes`.
std::vector<double> dijkstra(const Matrix& w, const std::vector<std::size_t>& nodes, std::size_t src) {
  const std::size_t n = nodes.size();
  std::vector<double> dist(n, kInf);
  std::vector<bool> done(n, false);
  dist[src] = 0.0;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (!done[v] && dist[v] < kInf && (u == n || dist[v] < dist[u])) u = v;
    }
    if (u == n) break;
    done[u] = true;
    for (std::size_t v = 0; v < n; ++v) {
      const double wv = w(nodes[u], nodes[v]);
      if (done[v] || wv <= 0.0) continue;
      dist[v] = std::min(dist[v], dist[u] + 1.0 / wv);
    }
  }
  return dist;
}

std::vector<double> brandes(const Matrix& w) {
  const std::size_t n = w.rows();
  std::vector<double> bc(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> dist(n, kInf), sigma(n, 0.0), delta(n, 0.0);
    std::vector<std::vector<std::size_t>> preds(n);
    std::vector<bool> done(n, false);
    std::vector<std::size_t> order;
    dist[s] = 0.0;
    sigma[s] = 1.0;
    for (std::size_t it = 0; it < n; ++it) {
      std::size_t u = n;
      for (std::size_t v = 0; v < n; ++v) {
        if (!done[v] && dist[v] < kInf && (u == n || dist[v] < dist[u])) u = v;
      }
      if (u == n) break;
      done[u] = true;
      order.push_back(u);
      for (std::size_t v = 0; v < n; ++v) {
        if (done[v] || w(u, v) <= 0.0) continue;
        const double alt = dist[u] + 1.0 / w(u, v);
        if (dist[v] < kInf && same_length(alt, dist[v])) {
          sigma[v] += sigma[u];
          preds[v].push_back(u);
        } else if (alt < dist[v]) {
          dist[v] = alt;
          sigma[v] = sigma[u];
          preds[v] = {u};
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t x = *it;
      for (std::size_t v : preds[x]) delta[v] += sigma[v] / sigma[x] * (1.0 + delta[x]);
      if (x != s) bc[x] += delta[x];
    }
  }
  const double norm = n > 2 ? static_cast<double>((n - 1) * (n - 2)) : 1.0;
  for (auto& b : bc) b /= norm;  // each unordered pair was counted twice
  return bc;
}

std::vector<double> eigenvector_centrality(const Matrix& w) {
  const std::size_t n = w.rows();
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n))), y(n);
  for (int it = 0; it < 20000; ++it) {
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = x[i];
      for (std::size_t j = 0; j < n; ++j) acc += w(i, j) * x[j];
      y[i] = acc;
      norm += acc * acc;
    }
    norm = std::sqrt(norm);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] /= norm;
      change = std::max(change, std::abs(y[i] - x[i]));
    }
    std::swap(x, y);
    if (change < 1e-15) break;
  }
  return x;
}

}  // namespace

std::vector<double> Metrics::flatten() const {
  std::vector<double> out;
  out.reserve(strength.size() * 6 + 6);
  for (std::size_t i = 0; i < strength.size(); ++i) {
    out.insert(out.end(), {strength[i], degree[i], clustering[i], betweenness[i], eigenvector[i],
                           local_efficiency[i]});
  }
  out.insert(out.end(), {path_length, global_efficiency, transitivity, assortativity, edge_overlap,
                         matching_index});
  return out;
}

void check_adjacency(const Matrix& w) {
  if (w.rows() != w.cols() || w.rows() == 0) throw Error("graph: adjacency must be square and non-empty");
  for (std::size_t i = 0; i < w.rows(); ++i) {
    if (w(i, i) != 0.0) throw Error("graph: adjacency diagonal must be zero");
    for (std::size_t j = 0; j < w.cols(); ++j) {
      if (!(w(i, j) >= 0.0) || !std::isfinite(w(i, j))) throw Error("graph: weights must be finite and nonnegative");
      if (w(i, j) != w(j, i)) throw Error("graph: adjacency must be symmetric");
    }
  }
}

double binarization_threshold(const Matrix& w) {
  std::vector<double> upper;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = i + 1; j < w.cols(); ++j) upper.push_back(w(i, j));
  }
  return upper.empty() ? 0.0 : stats::median(upper);
}

Matrix shortest_paths(const Matrix& w) {
  const std::size_t n = w.rows();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  Matrix d(n, n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto row = dijkstra(w, all, s);
    std::copy(row.begin(), row.end(), d.row(s).begin());
  }
  return d;
}

Metrics compute(const Matrix& w) {
  check_adjacency(w);
  const std::size_t n = w.rows();
  Metrics m;
  m.strength.assign(n, 0.0);
  m.degree.assign(n, 0.0);
  m.clustering.assign(n, 0.0);
  m.local_efficiency.assign(n, 0.0);

  const double tau = binarization_threshold(w);
  double wmax = 0.0;
  for (double v : w.data()) wmax = std::max(wmax, v);
  std::vector<std::vector<std::size_t>> nbr(n);
  std::vector<std::vector<bool>> bin(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m.strength[i] += w(i, j);
      if (w(i, j) > 0.0) nbr[i].push_back(j);
      if (w(i, j) > tau) {
        bin[i][j] = true;
        m.degree[i] += 1.0;
      }
    }
  }

  // Weighted clustering and transitivity.
  double tri_sum = 0.0, pair_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = 0.0;
    for (std::size_t j : nbr[i]) {
      for (std::size_t h : nbr[i]) {
        if (j == h || w(j, h) <= 0.0) continue;
        t += std::cbrt((w(i, j) / wmax) * (w(i, h) / wmax) * (w(j, h) / wmax));
      }
    }
    const double k = static_cast<double>(nbr[i].size());
    if (k >= 2.0) m.clustering[i] = t / (k * (k - 1.0));
    tri_sum += t;
    pair_sum += k * (k - 1.0);
  }
  m.transitivity = pair_sum > 0.0 ? tri_sum / pair_sum : 0.0;

  // Distances.
  const Matrix d = shortest_paths(w);
  double dsum = 0.0, esum = 0.0;
  std::size_t reachable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (std::isinf(d(i, j))) {
        m.disconnected = true;
        continue;
      }
      dsum += d(i, j);
      esum += 1.0 / d(i, j);
      ++reachable;
    }
  }
  m.path_length = reachable > 0 ? dsum / static_cast<double>(reachable) : 0.0;
  m.global_efficiency = n > 1 ? esum / static_cast<double>(n * (n - 1)) : 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& sub = nbr[i];
    const std::size_t k = sub.size();
    if (k < 2) continue;
    double e = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      const auto da = dijkstra(w, sub, a);
      for (std::size_t b = 0; b < k; ++b) {
        if (a != b && std::isfinite(da[b])) e += 1.0 / da[b];
      }
    }
    m.local_efficiency[i] = e / static_cast<double>(k * (k - 1));
  }

  m.betweenness = brandes(w);
  m.eigenvector = eigenvector_centrality(w);

  // Strength assortativity over weighted edges, both orientations.
  {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : nbr[i]) {
        xs.push_back(m.strength[i]);
        ys.push_back(m.strength[j]);
      }
    }
    if (xs.size() >= 2) {
      const double mx = stats::mean(xs), my = stats::mean(ys);
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (std::size_t e = 0; e < xs.size(); ++e) {
        sxy += (xs[e] - mx) * (ys[e] - my);
        sxx += (xs[e] - mx) * (xs[e] - mx);
        syy += (ys[e] - my) * (ys[e] - my);
      }
      const double scale = std::max(mx * mx, 1e-300) * static_cast<double>(xs.size());
      if (sxx > 1e-24 * scale && syy > 1e-24 * scale) m.assortativity = sxy / std::sqrt(sxx * syy);
    }
  }

  // Edge overlap and matching index on the binary graph.
  {
    double overlap = 0.0, matching = 0.0;
    std::size_t edges = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        std::size_t common = 0, either = 0;
        for (std::size_t h = 0; h < n; ++h) {
          if (h == i || h == j) continue;
          common += bin[i][h] && bin[j][h];
          either += bin[i][h] || bin[j][h];
        }
        matching += either > 0 ? static_cast<double>(common) / static_cast<double>(either) : 0.0;
        ++pairs;
        if (bin[i][j]) {
          const double denom = (m.degree[i] - 1.0) + (m.degree[j] - 1.0) - static_cast<double>(common);
          overlap += denom > 0.0 ? static_cast<double>(common) / denom : 0.0;
          ++edges;
        }
      }
    }
    m.edge_overlap = edges > 0 ? overlap / static_cast<double>(edges) : 0.0;
    m.matching_index = pairs > 0 ? matching / static_cast<double>(pairs) : 0.0;
  }
  return m;
}

}  // namespace stimeeg::graph
