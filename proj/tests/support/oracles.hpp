#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favor obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "flowguard/autoencoder.hpp"

namespace flowguard::oracle {

/// O(n^2) density clustering: core points by explicit neighbour lists,
/// clusters by breadth-first expansion over core points, border points to
/// the reachable cluster with the smallest minimum value, ids by ascending
/// cluster minimum.
inline std::vector<int> dbscan(const std::vector<double>& x, double eps, std::size_t minPts) {
  const std::size_t n = x.size();
  std::vector<std::vector<std::size_t>> nbr(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(x[i] - x[j]) <= eps) nbr[i].push_back(j);
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = nbr[i].size() >= minPts;

  std::vector<int> comp(n, -1);
  int comps = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!core[s] || comp[s] != -1) continue;
    std::deque<std::size_t> queue{s};
    comp[s] = comps;
    while (!queue.empty()) {
      const auto i = queue.front();
      queue.pop_front();
      for (auto j : nbr[i])
        if (core[j] && comp[j] == -1) {
          comp[j] = comps;
          queue.push_back(j);
        }
    }
    ++comps;
  }

  std::vector<double> coreMin(static_cast<std::size_t>(comps), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    if (core[i]) coreMin[static_cast<std::size_t>(comp[i])] = std::min(coreMin[static_cast<std::size_t>(comp[i])], x[i]);

  std::vector<int> member = comp;
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (auto j : nbr[i])
      if (core[j] && (best == -1 || coreMin[static_cast<std::size_t>(comp[j])] < coreMin[static_cast<std::size_t>(best)]))
        best = comp[j];
    member[i] = best;
  }

  std::vector<double> clusterMin(static_cast<std::size_t>(comps), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    if (member[i] >= 0)
      clusterMin[static_cast<std::size_t>(member[i])] = std::min(clusterMin[static_cast<std::size_t>(member[i])], x[i]);
  std::vector<int> order(static_cast<std::size_t>(comps));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return clusterMin[static_cast<std::size_t>(a)] < clusterMin[static_cast<std::size_t>(b)];
  });
  std::vector<int> rank(static_cast<std::size_t>(comps));
  for (int r = 0; r < comps; ++r) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;
  for (auto& m : member)
    if (m >= 0) m = rank[static_cast<std::size_t>(m)];
  return member;
}

/// Element-by-element mean squared difference.
inline double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double sum = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) sum += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
  return sum / static_cast<double>(a.size());
}

struct GradientCheck {
  double maxRelativeError = 0;
  Eigen::Index worstParameter = 0;
  Eigen::Index parameters = 0;
};

/// Central finite differences against the analytic gradient. The relative
/// error of each parameter is |a - n| / max(|a|, |n|, floor).
inline GradientCheck check_gradient(SequenceAutoencoder model, const SequenceBatch& batch, double step = 1e-5,
                                    double floor = 1e-6) {
  Eigen::VectorXd analytic;
  model.loss_and_gradient(batch, analytic);
  GradientCheck r;
  r.parameters = model.parameters().size();
  for (Eigen::Index k = 0; k < r.parameters; ++k) {
    const double p = model.parameters()[k];
    model.parameters()[k] = p + step;
    const double up = model.loss(batch);
    model.parameters()[k] = p - step;
    const double down = model.loss(batch);
    model.parameters()[k] = p;
    const double numeric = (up - down) / (2 * step);
    const double rel =
        std::abs(analytic[k] - numeric) / std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    if (rel > r.maxRelativeError) {
      r.maxRelativeError = rel;
      r.worstParameter = k;
    }
  }
  return r;
}

struct Confusion {
  double precision, recall, f1, fpr, fnr;
};

/// Metrics from counts, written independently of the library's formulae.
inline Confusion confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  auto safe = [](double a, double b) { return b == 0 ? 0.0 : a / b; };
  const double p = safe(double(tp), double(tp) + double(fp));
  const double r = safe(double(tp), double(tp) + double(fn));
  const double f = safe(2.0 * double(tp), 2.0 * double(tp) + double(fp) + double(fn));
  return {p, r, f, safe(double(fp), double(fp) + double(tn)), safe(double(fn), double(fn) + double(tp))};
}

}  // namespace flowguard::oracle
