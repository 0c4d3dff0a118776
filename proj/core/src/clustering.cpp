#include "xmam/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "xmam/errors.hpp"
#include "xmam/vec.hpp"

namespace xmam {
namespace {

struct Dendrogram {
  // Internal node i (0-based) has id n + i.
  std::vector<std::size_t> left, right, size;
  std::vector<Scalar> dist;
  std::size_t leaves = 0;

  bool is_leaf(std::size_t id) const { return id < leaves; }
  std::size_t node_size(std::size_t id) const { return is_leaf(id) ? 1 : size[id - leaves]; }
};

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
};

Dendrogram single_linkage(std::size_t n, std::vector<MstEdge> edges) {
  std::stable_sort(edges.begin(), edges.end(),
                   [](const MstEdge& a, const MstEdge& b) { return a.weight < b.weight; });
  Dendrogram d;
  d.leaves = n;
  std::vector<std::size_t> node_of(n);
  std::iota(node_of.begin(), node_of.end(), 0);
  // node_of maps a root point to its current tree node.
  UnionFind pts(n);
  for (const MstEdge& e : edges) {
    const std::size_t ra = pts.find(e.a), rb = pts.find(e.b);
    const std::size_t na = node_of[ra], nb = node_of[rb];
    const std::size_t id = n + d.left.size();
    d.left.push_back(na);
    d.right.push_back(nb);
    d.dist.push_back(e.weight);
    d.size.push_back(d.node_size(na) + d.node_size(nb));
    pts.parent[rb] = ra;
    node_of[ra] = id;
  }
  return d;
}

void collect_leaves(const Dendrogram& d, std::size_t node, std::vector<std::size_t>& out) {
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const std::size_t x = stack.back();
    stack.pop_back();
    if (d.is_leaf(x)) {
      out.push_back(x);
    } else {
      stack.push_back(d.right[x - d.leaves]);
      stack.push_back(d.left[x - d.leaves]);
    }
  }
}

struct CondensedCluster {
  std::size_t parent = 0;
  Scalar birth = 0.0;
  Scalar stability = 0.0;
  std::vector<std::size_t> children;
};

Scalar mean_pairwise(const DenseMatrix& dist, const std::vector<std::size_t>& members) {
  if (members.size() < 2) return 0.0;
  Scalar s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      s += dist(members[i], members[j]);
      ++pairs;
    }
  }
  return s / static_cast<Scalar>(pairs);
}

}  // namespace

DenseMatrix pairwise_distances(std::span<const Point> points) {
  const std::size_t n = points.size();
  DenseMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Scalar v = distance(points[i], points[j]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

std::vector<Scalar> core_distances(const DenseMatrix& dist, std::size_t k) {
  const std::size_t n = dist.n;
  if (k == 0) throw ArgumentError("core distance needs k >= 1");
  if (n < 2) throw ArgumentError("core distance needs at least two points");
  k = std::min(k, n - 1);
  std::vector<Scalar> core(n);
  std::vector<Scalar> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(dist(i, j));
    }
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    core[i] = row[k - 1];
  }
  return core;
}

DenseMatrix mutual_reachability(std::span<const Point> points, std::size_t min_samples) {
  if (points.size() < 2) throw ArgumentError("mutual reachability needs at least two points");
  if (min_samples < 1) throw ArgumentError("min_samples must be >= 1");
  const DenseMatrix dist = pairwise_distances(points);
  const std::vector<Scalar> core = core_distances(dist, min_samples);
  DenseMatrix m(points.size());
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) {
      if (i != j) m(i, j) = std::max({core[i], core[j], dist(i, j)});
    }
  }
  return m;
}

std::vector<MstEdge> minimum_spanning_tree(const DenseMatrix& w) {
  const std::size_t n = w.n;
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  std::vector<bool> in_tree(n, false);
  std::vector<Scalar> best(n, std::numeric_limits<Scalar>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t cur = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      if (w(cur, j) < best[j]) {
        best[j] = w(cur, j);
        from[j] = cur;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({from[next], next, best[next]});
    cur = next;
  }
  return edges;
}

ClusterResult hdbscan(std::span<const Point> points, const HdbscanOptions& options) {
  if (options.min_cluster_size < 2) throw ArgumentError("min_cluster_size must be >= 2");
  const std::size_t n = points.size();
  ClusterResult result;
  if (n == 0) throw ArgumentError("hdbscan needs at least one point");
  for (const Point& p : points) {
    if (!all_finite(p)) throw NumericError("hdbscan input contains a non-finite value");
    require_same_size(p.size(), points[0].size(), "hdbscan point dimension");
  }
  if (n == 1) {
    result.labels = {0};
    result.clusters = {{0}};
    result.single_cluster = true;
    return result;
  }

  const DenseMatrix dist = pairwise_distances(points);
  const std::vector<Scalar> core = core_distances(dist, options.min_samples);
  DenseMatrix mreach(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) mreach(i, j) = std::max({core[i], core[j], dist(i, j)});
    }
  }
  result.mst = minimum_spanning_tree(mreach);
  const Dendrogram tree = single_linkage(n, result.mst);

  // Zero-distance merges are infinitely dense; use a finite stand-in far
  // above every finite lambda so the stability arithmetic stays finite.
  Scalar min_positive = std::numeric_limits<Scalar>::infinity();
  for (const MstEdge& e : result.mst) {
    if (e.weight > 0.0) min_positive = std::min(min_positive, e.weight);
  }
  const Scalar lambda_cap = std::isfinite(min_positive) ? 1e6 / min_positive : 1.0;
  auto lambda_of = [&](Scalar d) { return d > 0.0 ? 1.0 / d : lambda_cap; };

  // Condense the dendrogram: splits into two parts of at least
  // min_cluster_size create clusters; smaller parts fall out as points.
  std::vector<CondensedCluster> clusters(1);
  std::vector<std::size_t> exit_cluster(n, 0);
  std::vector<Scalar> exit_lambda(n, 0.0);
  std::vector<std::pair<std::size_t, std::size_t>> work{{2 * n - 2, 0}};
  std::vector<std::size_t> leaves;
  auto drop_points = [&](std::size_t node, std::size_t cluster, Scalar lambda) {
    leaves.clear();
    collect_leaves(tree, node, leaves);
    for (std::size_t p : leaves) {
      exit_cluster[p] = cluster;
      exit_lambda[p] = lambda;
      clusters[cluster].stability += lambda - clusters[cluster].birth;
    }
  };
  while (!work.empty()) {
    auto [node, cluster] = work.back();
    work.pop_back();
    ++result.hierarchy_passes;
    const std::size_t k = node - n;
    const Scalar lambda = lambda_of(tree.dist[k]);
    const std::size_t l = tree.left[k], r = tree.right[k];
    const std::size_t sl = tree.node_size(l), sr = tree.node_size(r);
    const bool big_l = sl >= options.min_cluster_size;
    const bool big_r = sr >= options.min_cluster_size;
    if (big_l && big_r) {
      clusters[cluster].stability +=
          static_cast<Scalar>(sl + sr) * (lambda - clusters[cluster].birth);
      for (std::size_t child_node : {l, r}) {
        const std::size_t id = clusters.size();
        clusters.push_back({cluster, lambda, 0.0, {}});
        clusters[cluster].children.push_back(id);
        work.emplace_back(child_node, id);
      }
    } else if (!big_l && !big_r) {
      drop_points(l, cluster, lambda);
      drop_points(r, cluster, lambda);
    } else {
      drop_points(big_l ? r : l, cluster, lambda);
      work.emplace_back(big_l ? l : r, cluster);
    }
  }

  std::vector<bool> selected(clusters.size(), false);
  if (clusters[0].children.empty()) {
    // The hierarchy never split: one cluster, minus points that left it
    // unusually early.
    result.single_cluster = true;
    std::vector<Scalar> exit_dist(n);
    for (std::size_t p = 0; p < n; ++p) {
      exit_dist[p] = exit_lambda[p] >= lambda_cap ? 0.0 : 1.0 / exit_lambda[p];
    }
    std::vector<Scalar> sorted = exit_dist;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2),
                     sorted.end());
    Scalar median = sorted[n / 2];
    if (n % 2 == 0) {
      const Scalar lower = *std::max_element(sorted.begin(),
                                             sorted.begin() + static_cast<std::ptrdiff_t>(n / 2));
      median = 0.5 * (median + lower);
    }
    const Scalar limit = options.single_cluster_outlier_factor * median;
    result.labels.assign(n, kNoise);
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < n; ++p) {
      if (exit_dist[p] <= limit) {
        result.labels[p] = 0;
        members.push_back(p);
      }
    }
    result.clusters.push_back(std::move(members));
    return result;
  }

  // Excess of mass: children were created after their parents, so a reverse
  // sweep visits every subtree before its root. The root is never selected.
  std::vector<Scalar> effective(clusters.size(), 0.0);
  for (std::size_t c = clusters.size(); c-- > 1;) {
    ++result.hierarchy_passes;
    const CondensedCluster& cl = clusters[c];
    Scalar child_sum = 0.0;
    for (std::size_t ch : cl.children) child_sum += effective[ch];
    if (cl.children.empty() || cl.stability >= child_sum) {
      selected[c] = true;
      effective[c] = cl.stability;
      std::vector<std::size_t> stack(cl.children.begin(), cl.children.end());
      while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        selected[x] = false;
        stack.insert(stack.end(), clusters[x].children.begin(), clusters[x].children.end());
      }
    } else {
      effective[c] = child_sum;
    }
  }

  std::vector<std::vector<std::size_t>> groups;
  std::vector<int> group_of(clusters.size(), kNoise);
  std::vector<int> raw(n, kNoise);
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t c = exit_cluster[p];
    while (c != 0 && !selected[c]) c = clusters[c].parent;
    if (c == 0) continue;
    if (group_of[c] == kNoise) {
      group_of[c] = static_cast<int>(groups.size());
      groups.emplace_back();
    }
    groups[static_cast<std::size_t>(group_of[c])].push_back(p);
    raw[p] = group_of[c];
  }

  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Scalar> spread(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) spread[g] = mean_pairwise(dist, groups[g]);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (groups[a].size() != groups[b].size()) return groups[a].size() > groups[b].size();
    if (spread[a] != spread[b]) return spread[a] < spread[b];
    return groups[a].front() < groups[b].front();
  });
  std::vector<int> rank(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    rank[order[i]] = static_cast<int>(i);
    result.clusters.push_back(groups[order[i]]);
  }
  result.labels.assign(n, kNoise);
  for (std::size_t p = 0; p < n; ++p) {
    if (raw[p] != kNoise) result.labels[p] = rank[static_cast<std::size_t>(raw[p])];
  }
  return result;
}

namespace {

std::vector<Scalar> mat_vec(const std::vector<Scalar>& m, std::size_t dim,
                            const std::vector<Scalar>& x) {
  std::vector<Scalar> y(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    Scalar s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += m[i * dim + j] * x[j];
    y[i] = s;
  }
  return y;
}

void orthogonalize(std::vector<Scalar>& v, const std::vector<std::vector<Scalar>>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) axpy(-dot(v, b), b, v);
  }
}

bool normalize(std::vector<Scalar>& v) {
  const Scalar n = l2_norm(v);
  if (!(n > 0.0)) return false;
  for (Scalar& x : v) x /= n;
  return true;
}

/// Unit vector orthogonal to basis, built from a seeded start; falls back to
/// coordinate axes when the start lies in the span.
std::vector<Scalar> fresh_direction(std::size_t dim, std::size_t j,
                                    const std::vector<std::vector<Scalar>>& basis) {
  std::vector<Scalar> v(dim);
  std::uint64_t state = 0x9e3779b97f4a7c15ULL + j;
  for (Scalar& x : v) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    x = static_cast<Scalar>(state >> 11) / static_cast<Scalar>(1ULL << 53) - 0.5;
  }
  orthogonalize(v, basis);
  if (normalize(v)) return v;
  for (std::size_t axis = 0; axis < dim; ++axis) {
    std::fill(v.begin(), v.end(), 0.0);
    v[axis] = 1.0;
    orthogonalize(v, basis);
    if (l2_norm(v) > 1e-6 && normalize(v)) return v;
  }
  throw NumericError("pca could not build an orthogonal direction");
}

struct EigenPairs {
  std::vector<std::vector<Scalar>> vectors;
  std::vector<Scalar> values;
};

/// Top-k eigenpairs of a symmetric positive semi-definite matrix.
EigenPairs top_eigen(const std::vector<Scalar>& m, std::size_t dim, std::size_t k,
                const PcaOptions& options) {
  Scalar trace = 0.0;
  for (std::size_t i = 0; i < dim; ++i) trace += m[i * dim + i];
  const Scalar floor = 1e-13 * std::max(trace, std::numeric_limits<Scalar>::min());
  EigenPairs out;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<Scalar> v = fresh_direction(dim, j, out.vectors);
    Scalar value = 0.0;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      std::vector<Scalar> w = mat_vec(m, dim, v);
      orthogonalize(w, out.vectors);
      const Scalar norm = l2_norm(w);
      if (norm <= floor) {
        value = 0.0;
        break;
      }
      for (Scalar& x : w) x /= norm;
      const Scalar change = distance(w, v);
      v = std::move(w);
      value = norm;
      if (change < options.tolerance) break;
    }
    if (value > 0.0) value = dot(v, mat_vec(m, dim, v));
    out.vectors.push_back(std::move(v));
    out.values.push_back(std::max(value, 0.0));
  }
  return out;
}

}  // namespace

PcaResult pca_project(std::span<const std::span<const Scalar>> points, std::size_t k,
                      const PcaOptions& options) {
  const std::size_t n = points.size();
  if (n < 2) throw ArgumentError("pca needs at least two points");
  const std::size_t d = points[0].size();
  if (d == 0) throw DimensionError("pca points have no coordinates");
  for (const auto& p : points) {
    require_same_size(p.size(), d, "pca point dimension");
    if (!all_finite(p)) throw NumericError("pca input contains a non-finite value");
  }
  if (k == 0 || k > d) {
    throw ArgumentError("pca component count must be in [1, " + std::to_string(d) + "], got " +
                        std::to_string(k));
  }

  PcaResult r;
  r.mean.assign(d, 0.0);
  for (const auto& p : points) axpy(1.0, p, r.mean);
  for (Scalar& x : r.mean) x /= static_cast<Scalar>(n);
  std::vector<std::vector<Scalar>> centered(n, std::vector<Scalar>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[i][j] = points[i][j] - r.mean[j];
  }

  if (d <= n) {
    std::vector<Scalar> cov(d * d, 0.0);
    for (const auto& row : centered) {
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) cov[a * d + b] += row[a] * row[b];
      }
    }
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < a; ++b) cov[a * d + b] = cov[b * d + a];
    }
    EigenPairs e = top_eigen(cov, d, k, options);
    r.components = std::move(e.vectors);
    for (Scalar v : e.values) r.variances.push_back(v / static_cast<Scalar>(n - 1));
  } else {
    std::vector<Scalar> gram(n * n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a; b < n; ++b) {
        gram[a * n + b] = gram[b * n + a] = dot(centered[a], centered[b]);
      }
    }
    const std::size_t kk = std::min(k, n);
    EigenPairs e = top_eigen(gram, n, kk, options);
    for (std::size_t j = 0; j < kk; ++j) {
      std::vector<Scalar> comp(d, 0.0);
      if (e.values[j] > 0.0) {
        for (std::size_t i = 0; i < n; ++i) axpy(e.vectors[j][i], centered[i], comp);
        orthogonalize(comp, r.components);
      }
      if (!(e.values[j] > 0.0) || !normalize(comp)) {
        comp = fresh_direction(d, j, r.components);
        e.values[j] = 0.0;
      }
      r.components.push_back(std::move(comp));
      r.variances.push_back(e.values[j] / static_cast<Scalar>(n - 1));
    }
    for (std::size_t j = kk; j < k; ++j) {
      r.components.push_back(fresh_direction(d, j, r.components));
      r.variances.push_back(0.0);
    }
  }

  r.coords.assign(n, Point(k, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) r.coords[i][j] = dot(centered[i], r.components[j]);
  }
  return r;
}

PcaResult pca_project(std::span<const Point> points, std::size_t k, const PcaOptions& options) {
  std::vector<std::span<const Scalar>> views(points.begin(), points.end());
  return pca_project(std::span<const std::span<const Scalar>>(views), k, options);
}

}  // namespace xmam
