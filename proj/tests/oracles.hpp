// Reference implementations used only by tests. Written for clarity, not
// speed, and independent of the library code they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Bins by direct interval membership: [m/M, (m+1)/M), last bin closed.
inline double ece(const std::vector<double>& p, const std::vector<bool>& y, std::size_t bins) {
  double total = 0.0;
  const double n = static_cast<double>(p.size());
  for (std::size_t m = 0; m < bins; ++m) {
    const double lo = static_cast<double>(m) / static_cast<double>(bins);
    const double hi = static_cast<double>(m + 1) / static_cast<double>(bins);
    double count = 0, hits = 0, conf = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool inside = (p[i] >= lo && p[i] < hi) || (m + 1 == bins && p[i] == 1.0);
      if (!inside) continue;
      count += 1;
      hits += y[i] ? 1 : 0;
      conf += p[i];
    }
    if (count > 0) total += (count / n) * std::abs(hits / count - conf / count);
  }
  return total;
}

inline double auroc_pairs(const std::vector<double>& p, const std::vector<bool>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[j]) continue;
      pairs += 1;
      if (p[i] > p[j]) {
        wins += 1;
      } else if (p[i] == p[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

// Integral over [0,1] of |(1/n) sum_i (y_i - p_i) K(t, p_i)| with K the
// Gaussian reflected at 0 and 1, by composite Simpson quadrature.
inline double smece_at(const std::vector<double>& p, const std::vector<bool>& y, double sigma,
                       std::size_t intervals = 8000) {
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
  auto density = [&](double t) {
    double r = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double k = 0.0;
      for (int j = -4; j <= 4; ++j) {
        const double a = t - p[i] - 2.0 * j;
        const double b = t + p[i] - 2.0 * j;
        k += std::exp(-0.5 * a * a / (sigma * sigma)) + std::exp(-0.5 * b * b / (sigma * sigma));
      }
      r += ((y[i] ? 1.0 : 0.0) - p[i]) * k * norm;
    }
    return std::abs(r / static_cast<double>(p.size()));
  };
  const double h = 1.0 / static_cast<double>(intervals);
  double s = density(0.0) + density(1.0);
  for (std::size_t k = 1; k < intervals; ++k) s += density(k * h) * (k % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// k-th smallest distance to another point, by full sort.
inline std::vector<double> core(const std::vector<std::vector<double>>& x, std::size_t k) {
  std::vector<double> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j != i) d.push_back(dist(x[i], x[j]));
    }
    std::sort(d.begin(), d.end());
    out.push_back(d[k - 1]);
  }
  return out;
}

// Sorted edge weights of a mutual-reachability MST, by textbook Prim over
// the explicit distance matrix.
inline std::vector<double> mst_weights(const std::vector<std::vector<double>>& x, std::size_t k) {
  const std::size_t n = x.size();
  const auto c = core(x, k);
  std::vector<std::vector<double>> w(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i][j] = std::max({c[i], c[j], dist(x[i], x[j])});
  }
  std::vector<bool> in(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  best[0] = 0.0;
  std::vector<double> out;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (!in[v] && (u == n || best[v] < best[u])) u = v;
    }
    in[u] = true;
    if (it > 0) out.push_back(best[u]);
    for (std::size_t v = 0; v < n; ++v) {
      if (!in[v]) best[v] = std::min(best[v], w[u][v]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline double choose2(double n) { return n * (n - 1) / 2.0; }

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : joint) index += choose2(v);
  for (const auto& [k, v] : ra) sa += choose2(v);
  for (const auto& [k, v] : rb) sb += choose2(v);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// Longest common subsequence by plain recursion with memo on (i, j).
inline std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    const std::size_t r = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
    memo[{i, j}] = r;
    return r;
  };
  return go(0, 0);
}

}  // namespace oracle
