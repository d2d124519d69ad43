#pragma once

// Naive reference implementations used only by tests. Everything here works
// token by token with explicit loops and shares no code with hdp.hpp beyond
// the data types.

#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "localhdp/hdp.hpp"

namespace localhdp::oracle {

using boost::math::digamma;

/// Expands the document to one entry per token: (word id, row in zeta).
inline std::vector<std::pair<WordId, std::size_t>> tokens(const BowDocument& doc) {
  std::vector<std::pair<WordId, std::size_t>> out;
  for (std::size_t u = 0; u < doc.entries().size(); ++u)
    for (std::uint32_t c = 0; c < doc.entries()[u].count; ++c) out.emplace_back(doc.entries()[u].id, u);
  return out;
}

inline hdp::NaturalGradients naive_gradients(const hdp::CategoryModel& m, const hdp::DocumentVariational& q,
                                             const BowDocument& doc) {
  const std::size_t K = m.num_topics(), V = m.vocabulary_size(), T = m.hyper.max_tables;
  const double scale = static_cast<double>(std::max<std::uint64_t>(m.doc_count, 1));
  const auto toks = tokens(doc);
  hdp::NaturalGradients g;
  g.dlambda.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(V));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t w = 0; w < V; ++w) {
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        double inner = 0.0;
        for (const auto& [word, row] : toks)
          if (word == w) inner += q.zeta(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(t));
        s += q.phi(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) * inner;
      }
      g.dlambda(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)) =
          -m.lambda(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)) + m.hyper.eta + scale * s;
    }
  g.du.resize(static_cast<Eigen::Index>(K - 1));
  g.dv.resize(static_cast<Eigen::Index>(K - 1));
  for (std::size_t k = 0; k + 1 < K; ++k) {
    double su = 0.0, sv = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      su += q.phi(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
      for (std::size_t l = k + 1; l < K; ++l) sv += q.phi(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l));
    }
    g.du[static_cast<Eigen::Index>(k)] = -m.u[static_cast<Eigen::Index>(k)] + 1.0 + scale * su;
    g.dv[static_cast<Eigen::Index>(k)] = -m.v[static_cast<Eigen::Index>(k)] + m.hyper.gamma_top + scale * sv;
  }
  return g;
}

/// E[log σ_i] of a truncated stick-breaking vector, by explicit products.
inline std::vector<double> naive_elog_sticks(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const std::size_t n = static_cast<std::size_t>(a.size()) + 1;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    if (i + 1 < n) s += digamma(a[static_cast<Eigen::Index>(i)]) - digamma(a[static_cast<Eigen::Index>(i)] + b[static_cast<Eigen::Index>(i)]);
    for (std::size_t l = 0; l < i; ++l)
      s += digamma(b[static_cast<Eigen::Index>(l)]) - digamma(a[static_cast<Eigen::Index>(l)] + b[static_cast<Eigen::Index>(l)]);
    out[i] = s;
  }
  return out;
}

/// log density of Beta(x | a, b) in expectation under Beta(p, r).
inline double expected_log_beta_density(double a, double b, double p, double r) {
  const double elog_x = digamma(p) - digamma(p + r);
  const double elog_1mx = digamma(r) - digamma(p + r);
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * elog_x + (b - 1.0) * elog_1mx;
}

/// Token-level evaluation of the per-document bound.
inline double naive_bound(const hdp::CategoryModel& m, const BowDocument& doc, const hdp::DocumentVariational& q) {
  const auto& h = m.hyper;
  const std::size_t K = m.num_topics(), V = m.vocabulary_size(), T = h.max_tables;
  const double scale = static_cast<double>(std::max<std::uint64_t>(m.doc_count, 1));
  auto L = [&](std::size_t k, std::size_t w) { return m.lambda(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)); };

  std::vector<std::vector<double>> elog_beta(K, std::vector<double>(V));
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0;
    for (std::size_t w = 0; w < V; ++w) sum += L(k, w);
    for (std::size_t w = 0; w < V; ++w) elog_beta[k][w] = digamma(L(k, w)) - digamma(sum);
  }
  const auto elog_sigma = naive_elog_sticks(m.u, m.v);
  const auto elog_pi = naive_elog_sticks(q.a, q.b);
  auto phi = [&](std::size_t t, std::size_t k) { return q.phi(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)); };
  auto zeta = [&](std::size_t row, std::size_t t) { return q.zeta(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(t)); };
  auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };

  double doc_part = 0.0;
  for (const auto& [w, row] : tokens(doc))
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < K; ++k) doc_part += zeta(row, t) * phi(t, k) * elog_beta[k][w];
      doc_part += zeta(row, t) * elog_pi[t] - xlogx(zeta(row, t));
    }
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < K; ++k) doc_part += phi(t, k) * elog_sigma[k] - xlogx(phi(t, k));
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    doc_part += expected_log_beta_density(1.0, h.alpha0, q.a[ti], q.b[ti]) -
                expected_log_beta_density(q.a[ti], q.b[ti], q.a[ti], q.b[ti]);
  }

  double global = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    global += expected_log_beta_density(1.0, h.gamma_top, m.u[ki], m.v[ki]) -
              expected_log_beta_density(m.u[ki], m.v[ki], m.u[ki], m.v[ki]);
  }
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0, prior = std::lgamma(static_cast<double>(V) * h.eta) - static_cast<double>(V) * std::lgamma(h.eta);
    for (std::size_t w = 0; w < V; ++w) sum += L(k, w);
    double post = std::lgamma(sum);
    for (std::size_t w = 0; w < V; ++w) {
      prior += (h.eta - 1.0) * elog_beta[k][w];
      post += -std::lgamma(L(k, w)) + (L(k, w) - 1.0) * elog_beta[k][w];
    }
    global += prior - post;
  }
  return doc_part + global / scale;
}

struct GridOptimum {
  double bound = -std::numeric_limits<double>::infinity();
  hdp::DocumentVariational at;
};

/// Exhaustive search for K = T = 2 over a `steps`-resolution grid of every
/// zeta row and every phi row. Given zeta, the stick parameters (a, b) are
/// set to their closed-form maximizers, which is exact for that coordinate.
/// The inner loop evaluates the bound from precomputed per-grid-point terms;
/// `naive_bound` re-scores the winner so the two evaluations cross-check.
inline GridOptimum grid_search_2x2(const hdp::CategoryModel& m, const BowDocument& doc, int steps) {
  const std::size_t U = doc.unique_words();
  if (m.num_topics() != 2 || m.hyper.max_tables != 2 || U != 2)
    throw std::invalid_argument("grid oracle handles K = T = 2 and exactly 2 distinct words");
  const auto& h = m.hyper;
  const double c0 = doc.entries()[0].count, c1 = doc.entries()[1].count;
  const auto w0 = doc.entries()[0].id, w1 = doc.entries()[1].id;

  double elog_beta[2][2];
  for (int k = 0; k < 2; ++k) {
    const double sum = m.lambda.row(k).sum();
    elog_beta[k][0] = digamma(m.lambda(k, w0)) - digamma(sum);
    elog_beta[k][1] = digamma(m.lambda(k, w1)) - digamma(sum);
  }
  const auto elog_sigma = naive_elog_sticks(m.u, m.v);

  std::vector<double> grid(static_cast<std::size_t>(steps) + 1), xlogx(grid.size());
  for (int i = 0; i <= steps; ++i) {
    grid[static_cast<std::size_t>(i)] = static_cast<double>(i) / steps;
    const double x = grid[static_cast<std::size_t>(i)];
    xlogx[static_cast<std::size_t>(i)] = x > 0.0 ? x * std::log(x) : 0.0;
  }
  const auto n = grid.size();

  GridOptimum best;
  int bi[4] = {0, 0, 0, 0};
  for (std::size_t i0 = 0; i0 < n; ++i0)
    for (std::size_t i1 = 0; i1 < n; ++i1) {
      const double z0 = grid[i0], z1 = grid[i1];  // ζ(u, table 0)
      const double mass0 = c0 * z0 + c1 * z1, mass1 = c0 * (1 - z0) + c1 * (1 - z1);
      const double a = 1.0 + mass0, b = h.alpha0 + mass1;
      const double ab = digamma(a + b);
      const double elog_pi0 = digamma(a) - ab, elog_pi1 = digamma(b) - ab;
      double zeta_part = mass0 * elog_pi0 + mass1 * elog_pi1;
      zeta_part -= c0 * (xlogx[i0] + xlogx[n - 1 - i0]) + c1 * (xlogx[i1] + xlogx[n - 1 - i1]);
      zeta_part += expected_log_beta_density(1.0, h.alpha0, a, b) - expected_log_beta_density(a, b, a, b);
      // Word evidence reaching each table, per topic.
      double s[2][2];
      for (int k = 0; k < 2; ++k) {
        s[0][k] = c0 * z0 * elog_beta[k][0] + c1 * z1 * elog_beta[k][1];
        s[1][k] = c0 * (1 - z0) * elog_beta[k][0] + c1 * (1 - z1) * elog_beta[k][1];
      }
      for (std::size_t p0 = 0; p0 < n; ++p0) {
        const double f0 = grid[p0] * (s[0][0] + elog_sigma[0]) + (1 - grid[p0]) * (s[0][1] + elog_sigma[1]) -
                          xlogx[p0] - xlogx[n - 1 - p0];
        for (std::size_t p1 = 0; p1 < n; ++p1) {
          const double f1 = grid[p1] * (s[1][0] + elog_sigma[0]) + (1 - grid[p1]) * (s[1][1] + elog_sigma[1]) -
                            xlogx[p1] - xlogx[n - 1 - p1];
          const double total = zeta_part + f0 + f1;
          if (total > best.bound) {
            best.bound = total;
            bi[0] = static_cast<int>(i0);
            bi[1] = static_cast<int>(i1);
            bi[2] = static_cast<int>(p0);
            bi[3] = static_cast<int>(p1);
          }
        }
      }
    }

  auto& q = best.at;
  q.zeta.resize(2, 2);
  q.phi.resize(2, 2);
  q.zeta << grid[bi[0]], 1 - grid[bi[0]], grid[bi[1]], 1 - grid[bi[1]];
  q.phi << grid[bi[2]], 1 - grid[bi[2]], grid[bi[3]], 1 - grid[bi[3]];
  q.a = Eigen::VectorXd::Constant(1, 1.0 + c0 * q.zeta(0, 0) + c1 * q.zeta(1, 0));
  q.b = Eigen::VectorXd::Constant(1, h.alpha0 + c0 * q.zeta(0, 1) + c1 * q.zeta(1, 1));
  // Add the category-level constant by re-scoring with the naive bound.
  best.bound = naive_bound(m, doc, q);
  return best;
}

/// Same search, scoring every grid point with `naive_bound` (slow; for
/// validating the fast search on coarse grids).
inline GridOptimum grid_search_2x2_naive(const hdp::CategoryModel& m, const BowDocument& doc, int steps) {
  hdp::DocumentVariational q;
  q.a.resize(1);
  q.b.resize(1);
  q.phi.resize(2, 2);
  q.zeta.resize(2, 2);
  GridOptimum best;
  const double h = 1.0 / steps;
  const double c0 = doc.entries()[0].count, c1 = doc.entries()[1].count;
  for (int i0 = 0; i0 <= steps; ++i0)
    for (int i1 = 0; i1 <= steps; ++i1)
      for (int p0 = 0; p0 <= steps; ++p0)
        for (int p1 = 0; p1 <= steps; ++p1) {
          q.zeta << i0 * h, 1 - i0 * h, i1 * h, 1 - i1 * h;
          q.phi << p0 * h, 1 - p0 * h, p1 * h, 1 - p1 * h;
          q.a[0] = 1.0 + c0 * q.zeta(0, 0) + c1 * q.zeta(1, 0);
          q.b[0] = m.hyper.alpha0 + c0 * q.zeta(0, 1) + c1 * q.zeta(1, 1);
          const double b = naive_bound(m, doc, q);
          if (b > best.bound) best = {b, q};
        }
  return best;
}

}  // namespace localhdp::oracle
