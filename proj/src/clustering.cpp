#include "auxcal/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

#include "auxcal/error.hpp"
#include "auxcal/grading.hpp"
#include "auxcal/parallel.hpp"
#include "auxcal/random.hpp"

namespace auxcal {

std::size_t ClusterAssignment::noise_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoise));
}

EmbeddingMatrix normalize_embeddings(const EmbeddingMatrix& m, Normalization mode) {
  if (m.normalized != Normalization::raw) {
    throw PreconditionError("embeddings are already normalized (" +
                            std::string(to_string(m.normalized)) + ")");
  }
  for (double v : m.data.values()) {
    if (!std::isfinite(v)) throw NumericError("embedding matrix has non-finite entries");
  }
  EmbeddingMatrix out{m.data, mode, {}};
  const std::size_t n = m.data.rows();
  const std::size_t d = m.data.cols();
  switch (mode) {
    case Normalization::raw:
      break;
    case Normalization::per_feature_z:
      for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += m.data(r, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          const double x = m.data(r, c) - mean;
          var += x * x;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        for (std::size_t r = 0; r < n; ++r) {
          out.data(r, c) = sd > 0.0 ? (m.data(r, c) - mean) / sd : 0.0;
        }
      }
      break;
    case Normalization::l2_row:
      for (std::size_t r = 0; r < n; ++r) {
        auto row = out.data.row(r);
        double s = 0.0;
        for (double x : row) s += x * x;
        if (s == 0.0) {
          out.zero_rows.push_back(r);
          continue;
        }
        const double norm = std::sqrt(s);
        for (double& x : row) x /= norm;
      }
      break;
  }
  return out;
}

std::vector<double> core_distances(const Matrix& points, std::size_t min_samples) {
  const std::size_t n = points.rows();
  if (n < 2) throw PreconditionError("core distances need at least 2 points");
  if (min_samples < 1 || min_samples >= n) {
    throw PreconditionError("min_samples must lie in [1, N-1]; got " + std::to_string(min_samples) +
                            " for N=" + std::to_string(n));
  }
  std::vector<double> core(n);
  parallel_for(n, default_workers(), [&](std::size_t i) {
    std::vector<double> dist;
    dist.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dist.push_back(euclidean_distance(points.row(i), points.row(j)));
    }
    auto kth = dist.begin() + static_cast<std::ptrdiff_t>(min_samples - 1);
    std::nth_element(dist.begin(), kth, dist.end());
    core[i] = *kth;
  });
  return core;
}

std::vector<WeightedEdge> mutual_reachability_mst(const Matrix& points, std::size_t min_samples) {
  const std::size_t n = points.rows();
  if (n < 2) throw PreconditionError("mutual_reachability_mst needs at least 2 points");
  const std::vector<double> core = core_distances(points, min_samples);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> key(n, kInf);
  std::vector<std::size_t> parent(n, 0);
  std::vector<char> in_tree(n, 0);
  std::vector<WeightedEdge> edges;
  edges.reserve(n - 1);

  std::size_t current = 0;
  in_tree[0] = 1;
  for (std::size_t added = 1; added < n; ++added) {
    std::size_t best = n;
    double best_key = kInf;
    for (std::size_t v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const double d = euclidean_distance(points.row(current), points.row(v));
      const double mr = std::max({core[current], core[v], d});
      if (mr < key[v]) {
        key[v] = mr;
        parent[v] = current;
      }
      if (best == n || key[v] < best_key) {
        best = v;
        best_key = key[v];
      }
    }
    in_tree[best] = 1;
    edges.push_back({parent[best], best, best_key});
    current = best;
  }
  return edges;
}

namespace {

// Single-linkage dendrogram. Leaves are 0..n-1; merge k creates node n+k.
struct Dendrogram {
  std::size_t n = 0;
  std::vector<std::size_t> left, right, size;
  std::vector<double> distance;

  std::size_t root() const { return 2 * n - 2; }
  bool is_leaf(std::size_t node) const { return node < n; }
  std::size_t node_size(std::size_t node) const { return is_leaf(node) ? 1 : size[node - n]; }
};

Dendrogram single_linkage(std::size_t n, std::vector<WeightedEdge> edges) {
  std::stable_sort(edges.begin(), edges.end(),
                   [](const WeightedEdge& a, const WeightedEdge& b) { return a.weight < b.weight; });
  Dendrogram tree;
  tree.n = n;
  std::vector<std::size_t> uf(2 * n - 1);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](std::size_t x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const std::size_t a = find(edges[k].u);
    const std::size_t b = find(edges[k].v);
    const std::size_t node = n + k;
    tree.left.push_back(a);
    tree.right.push_back(b);
    tree.distance.push_back(edges[k].weight);
    tree.size.push_back(tree.node_size(a) + tree.node_size(b));
    uf[a] = node;
    uf[b] = node;
  }
  return tree;
}

struct CondensedRow {
  std::size_t parent;
  std::size_t child;
  double lambda;
  std::size_t child_size;
};

// Floor on merge distances so exact duplicates get a finite density level.
constexpr double kMinMergeDistance = 1e-12;

std::vector<std::size_t> subtree_nodes(const Dendrogram& tree, std::size_t node) {
  std::vector<std::size_t> out{node};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t x = out[i];
    if (!tree.is_leaf(x)) {
      out.push_back(tree.left[x - tree.n]);
      out.push_back(tree.right[x - tree.n]);
    }
  }
  return out;
}

// Walks the dendrogram from the root, keeping a cluster alive while it
// splits off groups smaller than min_cluster_size, and recording the
// density level (lambda = 1/distance) at which points and clusters leave.
std::vector<CondensedRow> condense(const Dendrogram& tree, std::size_t min_cluster_size,
                                   std::size_t& label_count) {
  const std::size_t n = tree.n;
  std::vector<CondensedRow> rows;
  std::vector<std::size_t> relabel(2 * n - 1, 0);
  std::vector<char> ignore(2 * n - 1, 0);
  std::size_t next_label = n + 1;
  relabel[tree.root()] = n;

  const std::vector<std::size_t> order = subtree_nodes(tree, tree.root());
  for (std::size_t node : order) {
    if (ignore[node] || tree.is_leaf(node)) continue;
    const std::size_t left = tree.left[node - n];
    const std::size_t right = tree.right[node - n];
    const double lambda = 1.0 / std::max(tree.distance[node - n], kMinMergeDistance);
    const std::size_t left_count = tree.node_size(left);
    const std::size_t right_count = tree.node_size(right);

    auto fall_out = [&](std::size_t sub_root) {
      for (std::size_t sub : subtree_nodes(tree, sub_root)) {
        if (tree.is_leaf(sub)) rows.push_back({relabel[node], sub, lambda, 1});
        ignore[sub] = 1;
      }
    };

    if (left_count >= min_cluster_size && right_count >= min_cluster_size) {
      relabel[left] = next_label++;
      rows.push_back({relabel[node], relabel[left], lambda, left_count});
      relabel[right] = next_label++;
      rows.push_back({relabel[node], relabel[right], lambda, right_count});
    } else if (left_count < min_cluster_size && right_count < min_cluster_size) {
      fall_out(left);
      fall_out(right);
    } else if (left_count < min_cluster_size) {
      relabel[right] = relabel[node];
      fall_out(left);
    } else {
      relabel[left] = relabel[node];
      fall_out(right);
    }
  }
  label_count = next_label;
  return rows;
}

// Excess-of-mass selection; returns the set of selected cluster labels.
std::set<std::size_t> select_clusters(const std::vector<CondensedRow>& rows, std::size_t n,
                                      std::size_t label_count) {
  std::vector<double> birth(label_count, 0.0);
  std::vector<std::vector<std::size_t>> children(label_count);
  for (const auto& r : rows) {
    if (r.child >= n) {
      birth[r.child] = r.lambda;
      children[r.parent].push_back(r.child);
    }
  }
  std::vector<double> stability(label_count, 0.0);
  for (const auto& r : rows) {
    stability[r.parent] += (r.lambda - birth[r.parent]) * static_cast<double>(r.child_size);
  }

  std::vector<char> selected(label_count, 0);
  // Children carry larger labels than their parents, so a descending sweep
  // settles every subtree before its parent. The root (label n) is never a
  // candidate.
  for (std::size_t c = label_count; c-- > n + 1;) selected[c] = 1;
  for (std::size_t c = label_count; c-- > n + 1;) {
    double child_sum = 0.0;
    for (std::size_t ch : children[c]) child_sum += stability[ch];
    if (!children[c].empty() && child_sum > stability[c]) {
      selected[c] = 0;
      stability[c] = child_sum;
    } else {
      std::vector<std::size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        selected[x] = 0;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    }
  }
  std::set<std::size_t> out;
  for (std::size_t c = n + 1; c < label_count; ++c) {
    if (selected[c]) out.insert(c);
  }
  return out;
}

}  // namespace

ClusterAssignment cluster_questions(const Matrix& points, const HdbscanParams& params) {
  if (params.min_cluster_size < 2) throw PreconditionError("min_cluster_size must be at least 2");
  const std::size_t n = points.rows();
  ClusterAssignment out;
  out.params = params;
  out.labels.assign(n, kNoise);
  if (n < 2 || n < params.min_cluster_size) return out;

  const std::size_t min_samples = std::clamp<std::size_t>(params.min_samples, 1, n - 1);
  const Dendrogram tree = single_linkage(n, mutual_reachability_mst(points, min_samples));
  std::size_t label_count = 0;
  const auto rows = condense(tree, params.min_cluster_size, label_count);
  const auto chosen = select_clusters(rows, n, label_count);

  // Union every condensed edge except those entering a selected cluster;
  // each point then resolves to its selected ancestor or to the root.
  std::vector<std::size_t> uf(label_count);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](std::size_t x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  for (const auto& r : rows) {
    if (chosen.count(r.child) == 0) uf[find(r.child)] = find(r.parent);
  }

  std::vector<std::size_t> raw(n);
  for (std::size_t i = 0; i < n; ++i) raw[i] = find(i);

  // Stable numbering: first appearance in row order.
  std::map<std::size_t, int> renumber;
  for (std::size_t i = 0; i < n; ++i) {
    if (chosen.count(raw[i]) == 0) continue;
    auto [it, inserted] = renumber.try_emplace(raw[i], static_cast<int>(renumber.size()));
    out.labels[i] = it->second;
    out.clusters[it->second].push_back(i);
  }
  return out;
}

std::vector<double> assign_calibration_targets(std::span<const int> labels,
                                               std::span<const std::optional<bool>> correctness) {
  if (labels.size() != correctness.size()) {
    throw PreconditionError("labels and correctness must have equal length");
  }
  std::map<int, std::pair<double, std::size_t>> tally;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!correctness[i]) {
      throw PreconditionError("record " + std::to_string(i) + " has no correctness label");
    }
    if (labels[i] == kNoise) continue;
    auto& [hits, count] = tally[labels[i]];
    hits += *correctness[i] ? 1.0 : 0.0;
    ++count;
  }
  std::vector<double> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) {
      targets[i] = *correctness[i] ? 1.0 : 0.0;
    } else {
      const auto& [hits, count] = tally[labels[i]];
      targets[i] = hits / static_cast<double>(count);
    }
  }
  return targets;
}

namespace {

SeriesSummary summarize(const std::vector<double>& xs) {
  SeriesSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

using IndexPair = std::pair<std::size_t, std::size_t>;

// Up to `per_cluster` distinct member pairs from each cluster, clusters
// visited in shuffled order, stopping once `total` pairs are collected.
std::vector<IndexPair> sample_intra_pairs(const std::vector<std::vector<std::size_t>>& clusters,
                                          std::size_t per_cluster, std::size_t total, Rng& rng) {
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<IndexPair> out;
  for (std::size_t ci : order) {
    if (out.size() >= total) break;
    const auto& members = clusters[ci];
    const std::size_t m = members.size();
    const std::size_t available = m * (m - 1) / 2;
    const std::size_t want = std::min({per_cluster, available, total - out.size()});
    std::set<IndexPair> picked;
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    while (picked.size() < want) {
      std::size_t a = pick(rng), b = pick(rng);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      if (picked.insert({a, b}).second) out.push_back({members[a], members[b]});
    }
  }
  return out;
}

std::vector<IndexPair> sample_cross_pairs(std::span<const int> labels,
                                          const std::vector<std::size_t>& clustered,
                                          std::size_t total, Rng& rng) {
  std::vector<IndexPair> out;
  std::uniform_int_distribution<std::size_t> pick(0, clustered.size() - 1);
  std::size_t attempts = 0;
  const std::size_t budget = 100 * total + 1000;
  while (out.size() < total && attempts++ < budget) {
    const std::size_t a = clustered[pick(rng)];
    const std::size_t b = clustered[pick(rng)];
    if (labels[a] != labels[b]) out.push_back({a, b});
  }
  return out;
}

}  // namespace

ClusterQualityReport evaluate_cluster_quality(const ClusterAssignment& assignment,
                                              std::span<const std::string> questions,
                                              const Matrix& embeddings,
                                              const ClusterQualityOptions& options) {
  const std::size_t n = assignment.labels.size();
  if (questions.size() != n || embeddings.rows() != n) {
    throw PreconditionError("labels, questions and embeddings must be aligned");
  }
  std::vector<std::vector<std::size_t>> eligible;
  std::vector<std::size_t> clustered;
  for (const auto& [id, members] : assignment.clusters) {
    if (members.size() >= 2) eligible.push_back(members);
    clustered.insert(clustered.end(), members.begin(), members.end());
  }
  if (eligible.empty()) throw PreconditionError("no cluster has at least 2 members");
  if (assignment.clusters.size() < 2) {
    throw PreconditionError("the random baseline needs at least 2 clusters");
  }
  std::sort(clustered.begin(), clustered.end());

  Rng rng(options.seed);
  auto textual = [&](const IndexPair& p) { return rouge_l(questions[p.first], questions[p.second]); };
  auto semantic = [&](const IndexPair& p) {
    return cosine_similarity(embeddings.row(p.first), embeddings.row(p.second));
  };
  auto score = [](const std::vector<IndexPair>& pairs, auto&& f) {
    std::vector<double> xs;
    xs.reserve(pairs.size());
    for (const auto& p : pairs) xs.push_back(f(p));
    return summarize(xs);
  };

  ClusterQualityReport report;
  report.textual = score(sample_intra_pairs(eligible, options.per_cluster, options.n_rouge, rng), textual);
  report.semantic = score(sample_intra_pairs(eligible, options.per_cluster, options.n_cos, rng), semantic);
  report.random_textual =
      score(sample_cross_pairs(assignment.labels, clustered, options.n_rouge, rng), textual);
  report.random_semantic =
      score(sample_cross_pairs(assignment.labels, clustered, options.n_cos, rng), semantic);
  return report;
}

}  // namespace auxcal
