#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "stimeeg/core.hpp"

namespace stimeeg::graph {

// Metrics of a weighted undirected graph given by a symmetric nonnegative
// matrix with zero diagonal. Edges are pairs with w > 0; path lengths are 1/w.
// The binary graph used for degree, edge overlap and matching index keeps
// the edges with w above the median off-diagonal weight.

inline constexpr std::array<std::string_view, 6> kNodalNames = {
    "strength", "degree", "clustering", "betweenness", "eigenvector", "local_efficiency"};
inline constexpr std::array<std::string_view, 6> kGlobalNames = {
    "path_length", "global_efficiency", "transitivity", "assortativity", "edge_overlap",
    "matching_index"};

struct Metrics {
  std::vector<double> strength;
  std::vector<double> degree;
  std::vector<double> clustering;   // Onnela, weights scaled by the maximum
  std::vector<double> betweenness;  // normalised by (n-1)(n-2)/2
  std::vector<double> eigenvector;  // unit norm, limit of power iteration on W + I from ones
  std::vector<double> local_efficiency;

  double path_length = 0.0;  // over reachable ordered pairs
  double global_efficiency = 0.0;
  double transitivity = 0.0;
  double assortativity = 0.0;  // strength correlation across edge ends
  double edge_overlap = 0.0;
  double matching_index = 0.0;

  bool disconnected = false;

  /// Nodal metrics node by node (6 per node), then the 6 global ones.
  std::vector<double> flatten() const;
};

/// Throws when the matrix is not square, symmetric, nonnegative with zero diagonal.
void check_adjacency(const Matrix& w);

double binarization_threshold(const Matrix& w);

/// All-pairs shortest path lengths with edge length 1/w (infinity when unreachable).
Matrix shortest_paths(const Matrix& w);

Metrics compute(const Matrix& w);

}  // namespace stimeeg::graph
