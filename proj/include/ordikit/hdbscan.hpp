#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "ordikit/corpus.hpp"
#include "ordikit/error.hpp"

namespace ordikit {

struct HdbscanParams {
  std::size_t min_cluster_size = 5;
  std::optional<std::size_t> min_samples;  // defaults to min_cluster_size
  bool allow_single_cluster = false;
};

struct HdbscanResult {
  std::vector<int> labels;  // -1 is noise; clusters numbered by first appearance
  std::vector<double> probabilities;
  int n_clusters = 0;
};

namespace hdbscan_detail {

/// Stand-in for 1/0 when merges happen at distance zero.
inline constexpr double kLambdaCap = 1e250;

struct LinkRow {
  std::size_t left;
  std::size_t right;
  double distance;
  std::size_t size;
};

struct CondensedRow {
  std::size_t parent;
  std::size_t child;
  double lambda;
  std::size_t child_size;
};

inline double dist(const EmbeddingSet& e, std::size_t i, std::size_t j) {
  const auto a = e.row(i);
  const auto b = e.row(j);
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double t = a[c] - b[c];
    s += t * t;
  }
  return std::sqrt(s);
}

/// Distance to the k-th nearest point, counting the point itself.
inline std::vector<double> core_distances(const EmbeddingSet& e, std::size_t k) {
  const std::size_t n = e.size();
  std::vector<double> core(n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = i == j ? 0.0 : dist(e, i, j);
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    core[i] = row[k - 1];
  }
  return core;
}

/// Prim's algorithm over mutual reachability, seeded at point 0, followed by
/// a stable sort on edge weight and union-find single linkage.
inline std::vector<LinkRow> single_linkage(const EmbeddingSet& e, const std::vector<double>& core) {
  const std::size_t n = e.size();
  struct Edge {
    std::size_t from, to;
    double w;
  };
  std::vector<Edge> mst;
  mst.reserve(n - 1);
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> source(n, 0);
  std::size_t current = 0;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    in_tree[current] = true;
    std::size_t next = n;
    double next_w = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double mr = std::max({core[current], core[j], dist(e, current, j)});
      if (mr < best[j]) {
        best[j] = mr;
        source[j] = current;
      }
      if (next == n || best[j] < next_w) {
        next = j;
        next_w = best[j];
      }
    }
    mst.push_back({source[next], next, next_w});
    current = next;
  }
  std::stable_sort(mst.begin(), mst.end(), [](const Edge& a, const Edge& b) { return a.w < b.w; });

  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> size(2 * n - 1, 1);
  auto find = [&](std::size_t x) {
    std::size_t root = x;
    while (parent[root] != root) root = parent[root];
    while (parent[x] != root) {
      const std::size_t up = parent[x];
      parent[x] = root;
      x = up;
    }
    return root;
  };
  std::vector<LinkRow> rows;
  rows.reserve(n - 1);
  std::size_t next_label = n;
  for (const Edge& edge : mst) {
    const std::size_t a = find(edge.from);
    const std::size_t b = find(edge.to);
    rows.push_back({a, b, edge.w, size[a] + size[b]});
    parent[a] = parent[b] = next_label;
    size[next_label] = size[a] + size[b];
    ++next_label;
  }
  return rows;
}

inline std::vector<std::size_t> bfs(const std::vector<LinkRow>& h, std::size_t root, std::size_t n) {
  std::vector<std::size_t> out;
  std::vector<std::size_t> level{root};
  while (!level.empty()) {
    out.insert(out.end(), level.begin(), level.end());
    std::vector<std::size_t> next;
    for (std::size_t x : level) {
      if (x >= n) {
        next.push_back(h[x - n].left);
        next.push_back(h[x - n].right);
      }
    }
    level.swap(next);
  }
  return out;
}

inline std::vector<CondensedRow> condense(const std::vector<LinkRow>& h, std::size_t n, std::size_t min_size) {
  const std::size_t root = 2 * n - 2;
  std::vector<std::size_t> relabel(root + 1, 0);
  std::vector<bool> ignore(root + 1, false);
  relabel[root] = n;
  std::size_t next_label = n + 1;
  std::vector<CondensedRow> out;
  auto count = [&](std::size_t node) { return node >= n ? h[node - n].size : std::size_t{1}; };
  auto drop = [&](std::size_t parent_label, std::size_t sub_root, double lambda) {
    for (std::size_t sub : bfs(h, sub_root, n)) {
      if (sub < n) out.push_back({parent_label, sub, lambda, 1});
      ignore[sub] = true;
    }
  };
  for (std::size_t node : bfs(h, root, n)) {
    if (node < n || ignore[node]) continue;
    const LinkRow& row = h[node - n];
    const double lambda = row.distance > 0.0 ? std::min(1.0 / row.distance, kLambdaCap) : kLambdaCap;
    const std::size_t lc = count(row.left);
    const std::size_t rc = count(row.right);
    if (lc >= min_size && rc >= min_size) {
      relabel[row.left] = next_label++;
      out.push_back({relabel[node], relabel[row.left], lambda, lc});
      relabel[row.right] = next_label++;
      out.push_back({relabel[node], relabel[row.right], lambda, rc});
    } else if (lc < min_size && rc < min_size) {
      drop(relabel[node], row.left, lambda);
      drop(relabel[node], row.right, lambda);
    } else if (lc < min_size) {
      relabel[row.right] = relabel[node];
      drop(relabel[node], row.left, lambda);
    } else {
      relabel[row.left] = relabel[node];
      drop(relabel[node], row.right, lambda);
    }
  }
  return out;
}

}  // namespace hdbscan_detail

/// HDBSCAN with excess-of-mass cluster selection and euclidean distance.
/// Membership probability is the point's exit lambda (capped at the cluster's
/// death lambda) divided by that death lambda.
inline HdbscanResult hdbscan(const EmbeddingSet& e, const HdbscanParams& params) {
  using namespace hdbscan_detail;
  const std::size_t n = e.size();
  const std::size_t mcs = params.min_cluster_size;
  const std::size_t ms = params.min_samples.value_or(mcs);
  if (mcs < 2) fail("bad_config", "min_cluster_size must be >= 2");
  if (ms < 1) fail("bad_config", "min_samples must be >= 1");
  if (n < 2 * mcs) {
    fail("too_few_points", std::to_string(n) + " points; clustering needs at least 2 x min_cluster_size = " +
                               std::to_string(2 * mcs));
  }
  if (ms > n) fail("too_few_points", "min_samples exceeds the number of points");
  bool all_same = true;
  for (std::size_t i = 1; i < n && all_same; ++i) all_same = dist(e, 0, i) == 0.0;
  if (all_same) fail("degenerate_data", "all points are identical");

  const auto core = core_distances(e, ms);
  const auto links = single_linkage(e, core);
  const auto tree = condense(links, n, mcs);

  const std::size_t n_nodes = n + 1 + tree.size();
  std::vector<double> birth(n_nodes, 0.0);
  std::vector<double> death(n_nodes, 0.0);
  std::map<std::size_t, double> stability;
  stability[n] = 0.0;
  for (const auto& r : tree) {
    birth[r.child] = r.lambda;
    if (r.child >= n) stability[r.child] = 0.0;
  }
  for (const auto& r : tree) {
    stability[r.parent] += (r.lambda - birth[r.parent]) * static_cast<double>(r.child_size);
    death[r.parent] = std::max(death[r.parent], r.lambda);
  }

  // Excess of mass, leaves first (descending id).
  std::map<std::size_t, std::vector<std::size_t>> children;
  for (const auto& r : tree) {
    if (r.child_size > 1) children[r.parent].push_back(r.child);
  }
  std::map<std::size_t, bool> selected;
  std::vector<std::size_t> nodes;
  for (const auto& [id, s] : stability) nodes.push_back(id);
  std::sort(nodes.rbegin(), nodes.rend());
  if (!params.allow_single_cluster) nodes.pop_back();
  for (std::size_t id : nodes) selected[id] = true;
  for (std::size_t id : nodes) {
    double subtree = 0.0;
    for (std::size_t c : children[id]) subtree += stability[c];
    if (subtree > stability[id]) {
      selected[id] = false;
      stability[id] = subtree;
    } else {
      std::vector<std::size_t> stack(children[id].begin(), children[id].end());
      while (!stack.empty()) {
        const std::size_t c = stack.back();
        stack.pop_back();
        selected[c] = false;
        stack.insert(stack.end(), children[c].begin(), children[c].end());
      }
    }
  }

  // Each point belongs to the nearest selected ancestor of the cluster it
  // fell out of.
  std::vector<std::size_t> up(n_nodes, n_nodes);
  std::vector<double> exit_lambda(n, 0.0);
  std::vector<std::size_t> exit_parent(n, n);
  for (const auto& r : tree) {
    up[r.child] = r.parent;
    if (r.child < n) {
      exit_lambda[r.child] = r.lambda;
      exit_parent[r.child] = r.parent;
    }
  }
  auto is_selected = [&](std::size_t c) {
    auto it = selected.find(c);
    return it != selected.end() && it->second;
  };
  HdbscanResult out;
  out.labels.assign(n, -1);
  out.probabilities.assign(n, 0.0);
  std::map<std::size_t, int> canonical;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = exit_parent[i];
    while (c != n_nodes && !is_selected(c)) c = up[c];
    if (c == n_nodes) continue;
    auto [it, fresh] = canonical.try_emplace(c, static_cast<int>(canonical.size()));
    out.labels[i] = it->second;
    const double d = death[c];
    out.probabilities[i] = d > 0.0 ? std::min(exit_lambda[i], d) / d : 1.0;
  }
  out.n_clusters = static_cast<int>(canonical.size());
  return out;
}

}  // namespace ordikit
