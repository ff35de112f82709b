#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ordikit/corpus.hpp"
#include "ordikit/error.hpp"
#include "ordikit/rng.hpp"

namespace ordikit {

/// Principal axes of a point cloud, largest variance first. Each axis is
/// signed so that its largest-magnitude coordinate is positive.
class PcaModel {
 public:
  static PcaModel fit(const EmbeddingSet& e, std::size_t n_components) {
    if (n_components == 0 || n_components > e.dim()) {
      fail("bad_dimension", "n_components must lie in [1, " + std::to_string(e.dim()) + "]");
    }
    if (e.size() == 0) fail("too_few_points", "PCA needs at least one point");
    const auto n = static_cast<Eigen::Index>(e.size());
    const auto d = static_cast<Eigen::Index>(e.dim());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(e.values().data(), n, d);
    PcaModel m;
    m.mean_ = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - m.mean_.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::internal, "eigen_failure", "PCA eigendecomposition failed");
    const auto k = static_cast<Eigen::Index>(n_components);
    m.components_.resize(k, d);
    for (Eigen::Index c = 0; c < k; ++c) {
      Eigen::VectorXd axis = solver.eigenvectors().col(d - 1 - c);
      Eigen::Index pivot = 0;
      axis.cwiseAbs().maxCoeff(&pivot);
      if (axis(pivot) < 0) axis = -axis;
      m.components_.row(c) = axis.transpose();
    }
    return m;
  }

  std::size_t n_components() const { return static_cast<std::size_t>(components_.rows()); }

  std::vector<double> transform(std::span<const double> x) const {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd y = components_ * (v - mean_);
    return {y.data(), y.data() + y.size()};
  }

  std::vector<double> inverse_transform(std::span<const double> y) const {
    const Eigen::Map<const Eigen::VectorXd> v(y.data(), static_cast<Eigen::Index>(y.size()));
    const Eigen::VectorXd x = components_.transpose() * v + mean_;
    return {x.data(), x.data() + x.size()};
  }

  EmbeddingSet transform(const EmbeddingSet& e) const {
    std::vector<double> out;
    out.reserve(e.size() * n_components());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const auto y = transform(e.row(i));
      out.insert(out.end(), y.begin(), y.end());
    }
    return {n_components(), e.ids(), std::move(out)};
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd components_;
};

inline EmbeddingSet pca_reduce(const EmbeddingSet& e, std::size_t n_components) {
  return PcaModel::fit(e, n_components).transform(e);
}

struct UmapParams {
  std::size_t n_neighbors = 15;
  std::size_t n_components = 2;
  double min_dist = 0.1;
  std::size_t n_epochs = 0;  // 0: 500 up to 10k points, 200 above
  double learning_rate = 1.0;
  std::size_t negative_sample_rate = 5;
  std::uint64_t seed = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

/// Exact k nearest neighbours (self included, distance ties by index).
inline void exact_knn(const EmbeddingSet& e, std::size_t k, std::vector<std::uint32_t>& idx,
                      std::vector<double>& dist) {
  const std::size_t n = e.size();
  idx.assign(n * k, 0);
  dist.assign(n * k, 0.0);
  std::vector<std::pair<double, std::uint32_t>> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = {std::sqrt(sq_dist(e.row(i), e.row(j))), static_cast<std::uint32_t>(j)};
    row[i].first = -1.0;  // self first even among exact duplicates
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    row[0].first = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      idx[i * k + c] = row[c].second;
      dist[i * k + c] = row[c].first;
    }
  }
}

/// (a, b) of the low-dimensional similarity curve 1 / (1 + a d^2b) fitted to
/// the min_dist offset exponential; closed values for the default spread 1.
inline std::pair<double, double> umap_curve(double min_dist) {
  if (std::abs(min_dist - 0.1) < 1e-12) return {1.576943460405378, 0.8950608781227859};
  // Gauss-Newton least squares on 300 samples in (0, 3].
  double a = 1.0;
  double b = 1.0;
  std::vector<double> xs;
  std::vector<double> ys;
  for (int i = 1; i <= 300; ++i) {
    const double x = 3.0 * i / 300.0;
    xs.push_back(x);
    ys.push_back(x < min_dist ? 1.0 : std::exp(-(x - min_dist)));
  }
  for (int it = 0; it < 200; ++it) {
    double jtj[2][2] = {{0, 0}, {0, 0}};
    double jtr[2] = {0, 0};
    for (std::size_t s = 0; s < xs.size(); ++s) {
      const double x2b = std::pow(xs[s], 2 * b);
      const double den = 1 + a * x2b;
      const double f = 1 / den;
      const double r = f - ys[s];
      const double da = -x2b / (den * den);
      const double db = -a * x2b * 2 * std::log(xs[s]) / (den * den);
      jtj[0][0] += da * da;
      jtj[0][1] += da * db;
      jtj[1][1] += db * db;
      jtr[0] += da * r;
      jtr[1] += db * r;
    }
    const double det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[0][1];
    if (std::abs(det) < 1e-300) break;
    const double step_a = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
    const double step_b = (jtj[0][0] * jtr[1] - jtj[0][1] * jtr[0]) / det;
    a -= step_a;
    b -= step_b;
    if (std::abs(step_a) + std::abs(step_b) < 1e-12) break;
  }
  return {a, b};
}

inline double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

}  // namespace detail

/// UMAP embedding: exact kNN graph, fuzzy-union symmetrisation, PCA
/// initialisation scaled to [-10, 10] and single-threaded seeded SGD.
inline EmbeddingSet umap_reduce(const EmbeddingSet& e, const UmapParams& p) {
  const std::size_t n = e.size();
  const std::size_t k = p.n_neighbors;
  const std::size_t dim = p.n_components;
  if (k < 2) fail("bad_config", "n_neighbors must be >= 2");
  if (n < k + 1) {
    fail("too_few_points", std::to_string(n) + " points cannot support n_neighbors=" + std::to_string(k));
  }
  if (dim < 1 || dim > e.dim()) fail("bad_dimension", "n_components exceeds the input dimension");

  std::vector<std::uint32_t> knn_idx;
  std::vector<double> knn_dist;
  detail::exact_knn(e, k, knn_idx, knn_dist);

  // Per-point rho (nearest positive distance) and sigma (binary search so
  // that the membership strengths sum to log2 k).
  const double target = std::log2(static_cast<double>(k));
  double mean_all = 0.0;
  for (double d : knn_dist) mean_all += d;
  mean_all /= static_cast<double>(knn_dist.size());
  std::vector<double> rho(n, 0.0);
  std::vector<double> sigma(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* d = &knn_dist[i * k];
    for (std::size_t c = 0; c < k; ++c) {
      if (d[c] > 0.0) {
        rho[i] = d[c];
        break;
      }
    }
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double mid = 1.0;
    for (int it = 0; it < 64; ++it) {
      double psum = 0.0;
      for (std::size_t c = 1; c < k; ++c) {
        const double gap = d[c] - rho[i];
        psum += gap > 0.0 ? std::exp(-gap / mid) : 1.0;
      }
      if (std::abs(psum - target) < 1e-5) break;
      if (psum > target) {
        hi = mid;
        mid = (lo + hi) / 2.0;
      } else {
        lo = mid;
        mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
      }
    }
    double mean_i = 0.0;
    for (std::size_t c = 0; c < k; ++c) mean_i += d[c];
    mean_i /= static_cast<double>(k);
    const double floor = 1e-3 * (rho[i] > 0.0 ? mean_i : mean_all);
    sigma[i] = std::max(mid, floor);
  }

  // Directed memberships, then P = A + A^T - A o A^T.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const std::uint32_t j = knn_idx[i * k + c];
      if (j == i) continue;
      const double gap = knn_dist[i * k + c] - rho[i];
      const double w = gap <= 0.0 ? 1.0 : std::exp(-gap / sigma[i]);
      adj[i].push_back({j, w});
    }
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  auto directed = [&](std::size_t i, std::uint32_t j) {
    auto it = std::lower_bound(adj[i].begin(), adj[i].end(), std::pair<std::uint32_t, double>{j, -1.0});
    return it != adj[i].end() && it->first == j ? it->second : 0.0;
  };
  std::vector<std::uint32_t> head;
  std::vector<std::uint32_t> tail;
  std::vector<double> weight;
  {
    std::vector<std::vector<std::uint32_t>> sym(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& [j, w] : adj[i]) {
        sym[i].push_back(j);
        sym[j].push_back(static_cast<std::uint32_t>(i));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& row = sym[i];
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      for (std::uint32_t j : row) {
        const double ij = directed(i, j);
        const double ji = directed(j, static_cast<std::uint32_t>(i));
        const double w = ij + ji - ij * ji;
        if (w <= 0.0) continue;
        head.push_back(static_cast<std::uint32_t>(i));
        tail.push_back(j);
        weight.push_back(w);
      }
    }
  }

  const std::size_t n_epochs = p.n_epochs ? p.n_epochs : (n <= 10000 ? 500 : 200);
  const double max_w = weight.empty() ? 1.0 : *std::max_element(weight.begin(), weight.end());
  std::vector<double> eps_per_sample;
  {
    std::vector<std::uint32_t> h2, t2;
    for (std::size_t s = 0; s < weight.size(); ++s) {
      if (weight[s] < max_w / static_cast<double>(n_epochs)) continue;
      h2.push_back(head[s]);
      t2.push_back(tail[s]);
      eps_per_sample.push_back(max_w / weight[s]);
    }
    head.swap(h2);
    tail.swap(t2);
  }

  // PCA start, rescaled so the largest coordinate magnitude is 10.
  std::vector<double> y = pca_reduce(e, dim).values();
  double max_abs = 0.0;
  for (double v : y) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs > 0.0) {
    for (double& v : y) v *= 10.0 / max_abs;
  }

  const auto [a, b] = detail::umap_curve(p.min_dist);
  Rng rng(p.seed);
  const std::size_t m = head.size();
  std::vector<double> eps_per_negative(m);
  std::vector<double> next_sample(m);
  std::vector<double> next_negative(m);
  for (std::size_t s = 0; s < m; ++s) {
    eps_per_negative[s] = eps_per_sample[s] / static_cast<double>(p.negative_sample_rate);
    next_sample[s] = eps_per_sample[s];
    next_negative[s] = eps_per_negative[s];
  }
  double alpha = p.learning_rate;
  for (std::size_t epoch = 0; epoch < n_epochs; ++epoch) {
    const double now = static_cast<double>(epoch);
    for (std::size_t s = 0; s < m; ++s) {
      if (next_sample[s] > now) continue;
      double* cur = &y[head[s] * dim];
      double* oth = &y[tail[s] * dim];
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) d2 += (cur[c] - oth[c]) * (cur[c] - oth[c]);
      double coeff = 0.0;
      if (d2 > 0.0) coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
      for (std::size_t c = 0; c < dim; ++c) {
        const double g = detail::clip4(coeff * (cur[c] - oth[c]));
        cur[c] += g * alpha;
        oth[c] -= g * alpha;
      }
      next_sample[s] += eps_per_sample[s];

      const auto n_neg = static_cast<std::size_t>((now - next_negative[s]) / eps_per_negative[s]);
      for (std::size_t q = 0; q < n_neg; ++q) {
        const std::size_t other = static_cast<std::size_t>(rng.below(n));
        if (other == head[s]) continue;
        const double* neg = &y[other * dim];
        double nd2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) nd2 += (cur[c] - neg[c]) * (cur[c] - neg[c]);
        if (!(nd2 > 0.0)) continue;
        const double rep = 2.0 * b / ((0.001 + nd2) * (a * std::pow(nd2, b) + 1.0));
        for (std::size_t c = 0; c < dim; ++c) cur[c] += detail::clip4(rep * (cur[c] - neg[c])) * alpha;
      }
      next_negative[s] += static_cast<double>(n_neg) * eps_per_negative[s];
    }
    alpha = p.learning_rate * (1.0 - static_cast<double>(epoch + 1) / static_cast<double>(n_epochs));
  }
  return {dim, e.ids(), std::move(y)};
}

}  // namespace ordikit
