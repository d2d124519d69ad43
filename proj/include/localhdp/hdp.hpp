#pragma once

// Single-category hierarchical Dirichlet process with online variational
// inference over the truncated stick-breaking representation.
//
// Corpus level (per category): K topics, q(topic_k) = Dir(lambda_k) over V
// words, top-level proportions q(beta'_k) = Beta(u_k, v_k) for k < K-1.
// Document level: T tables, q(pi'_t) = Beta(a_t, b_t) for t < T-1, table to
// topic indicators phi (T x K) and word to table assignments zeta (U x T)
// over the document's U distinct words.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "localhdp/corpus.hpp"
#include "localhdp/errors.hpp"
#include "localhdp/special.hpp"

namespace localhdp::hdp {

struct Hyperparams {
  std::size_t max_topics = 100;     // K
  std::size_t max_tables = 20;      // T
  double gamma_top = 1.0;
  double alpha0 = 1.0;
  double eta = 0.01;
  double tau0 = 1.0;
  double kappa = 0.6;

  void validate() const {
    if (max_topics < 1) throw ParameterError("max_topics (K) must be >= 1");
    if (max_tables < 1) throw ParameterError("max_tables (T) must be >= 1");
    if (max_tables > max_topics) throw ParameterError("T must not exceed K");
    if (!(gamma_top > 0.0) || !(alpha0 > 0.0)) throw ParameterError("concentrations must be > 0");
    if (!(eta > 0.0)) throw ParameterError("eta must be > 0");
    if (!(tau0 > 0.0)) throw ParameterError("tau0 must be > 0");
    if (!(kappa > 0.5 && kappa <= 1.0)) throw ParameterError("kappa must lie in (0.5, 1]");
  }

  bool operator==(const Hyperparams&) const = default;
};

struct CategoryModel {
  Eigen::MatrixXd lambda;  // K x V
  Eigen::VectorXd u;       // K-1
  Eigen::VectorXd v;       // K-1
  std::uint64_t t0 = 1;
  std::uint64_t doc_count = 0;
  Hyperparams hyper;

  std::size_t num_topics() const { return static_cast<std::size_t>(lambda.rows()); }
  std::size_t vocabulary_size() const { return static_cast<std::size_t>(lambda.cols()); }

  /// |c| as used by the bound and the gradients.
  double scale() const { return static_cast<double>(std::max<std::uint64_t>(doc_count, 1)); }

  bool operator==(const CategoryModel& o) const {
    return lambda.rows() == o.lambda.rows() && lambda.cols() == o.lambda.cols() && lambda == o.lambda &&
           u.size() == o.u.size() && u == o.u && v.size() == o.v.size() && v == o.v && t0 == o.t0 &&
           doc_count == o.doc_count && hyper == o.hyper;
  }
};

struct DocumentVariational {
  Eigen::VectorXd a;     // T-1
  Eigen::VectorXd b;     // T-1
  Eigen::MatrixXd phi;   // T x K
  Eigen::MatrixXd zeta;  // U x T, rows follow doc.entries()
};

struct InferenceOptions {
  double tol = 1e-5;  // relative bound change
  int max_iters = 100;
};

struct InferenceResult {
  DocumentVariational var;
  double bound = 0.0;
  std::vector<double> history;  // bound after each sweep
  int iterations = 0;
};

struct NaturalGradients {
  Eigen::MatrixXd dlambda;  // K x V
  Eigen::VectorXd du;       // K-1
  Eigen::VectorXd dv;       // K-1
};

/// Quantities that depend only on the category-level parameters. Computing
/// them once lets many documents be scored against a frozen model.
struct ModelExpectations {
  Eigen::VectorXd digamma_row_sum;  // ψ(Σ_w λ_kw)
  Eigen::VectorXd row_sum;          // Σ_w λ_kw
  Eigen::VectorXd elog_sticks;      // E[log σ_k(β')], length K
  double global_term = 0.0;         // E[log p(β') p(topics)] + H(q(β')) + H(q(topics))
};

inline double learning_rate(const Hyperparams& hyper, std::uint64_t t0) {
  if (t0 < 1) throw ParameterError("t0 must be >= 1");
  return std::pow(hyper.tau0 + static_cast<double>(t0), -hyper.kappa);
}

inline CategoryModel init_model(const Hyperparams& hyper, std::size_t vocabulary_size, std::uint64_t seed) {
  hyper.validate();
  if (vocabulary_size < 1) throw ParameterError("vocabulary size must be >= 1");
  const auto K = static_cast<Eigen::Index>(hyper.max_topics);
  const auto V = static_cast<Eigen::Index>(vocabulary_size);
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> noise(1.0, 1.0);
  CategoryModel m;
  m.hyper = hyper;
  m.lambda.resize(K, V);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index w = 0; w < V; ++w) m.lambda(k, w) = hyper.eta + 0.01 * noise(rng);
  m.u = Eigen::VectorXd::Ones(K - 1);
  m.v = Eigen::VectorXd::Constant(K - 1, hyper.gamma_top);
  m.t0 = 1;
  m.doc_count = 0;
  return m;
}

inline ModelExpectations compute_expectations(const CategoryModel& m) {
  const auto& h = m.hyper;
  const auto K = m.lambda.rows();
  const auto V = m.lambda.cols();
  ModelExpectations e;
  e.row_sum = m.lambda.rowwise().sum();
  e.digamma_row_sum.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) e.digamma_row_sum[k] = math::digamma(e.row_sum[k]);
  e.elog_sticks = math::expected_log_sticks(m.u, m.v);

  // Topics: Σ_k [lnΓ(Vη) − lnΓ(Σλ_k) + Σ_w ((η − λ_kw) E[log β_kw] + lnΓ(λ_kw) − lnΓ(η))]
  const double lg_eta = std::lgamma(h.eta);
  const double lg_veta = std::lgamma(static_cast<double>(V) * h.eta);
  double topics = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    double row = lg_veta - std::lgamma(e.row_sum[k]);
    for (Eigen::Index w = 0; w < V; ++w) {
      const double l = m.lambda(k, w);
      row += (h.eta - l) * (math::digamma(l) - e.digamma_row_sum[k]) + std::lgamma(l) - lg_eta;
    }
    topics += row;
  }

  // Top-level sticks: Beta(1, γ) prior against Beta(u, v).
  double sticks = 0.0;
  for (Eigen::Index k = 0; k < m.u.size(); ++k) {
    const double e_log_1m = math::digamma(m.v[k]) - math::digamma(m.u[k] + m.v[k]);
    sticks += std::log(h.gamma_top) + (h.gamma_top - 1.0) * e_log_1m - math::beta_neg_entropy(m.u[k], m.v[k]);
  }
  e.global_term = topics + sticks;
  return e;
}

namespace detail {

inline void check_document(const CategoryModel& m, const BowDocument& doc) {
  if (doc.empty()) throw InferenceError("cannot infer an empty document" +
                                        (doc.source_id().empty() ? std::string{} : " ('" + doc.source_id() + "')"));
  if (doc.id_bound() > m.vocabulary_size())
    throw ValidationError("word id " + std::to_string(doc.entries().back().id) +
                          " ≥ V=" + std::to_string(m.vocabulary_size()));
}

inline Eigen::VectorXd doc_counts(const BowDocument& doc) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(doc.unique_words()));
  for (std::size_t i = 0; i < doc.unique_words(); ++i) c[static_cast<Eigen::Index>(i)] = doc.entries()[i].count;
  return c;
}

/// E[log β_kw] restricted to the document's distinct words (K x U).
inline Eigen::MatrixXd elog_topics_for(const CategoryModel& m, const ModelExpectations& e, const BowDocument& doc) {
  const auto K = m.lambda.rows();
  Eigen::MatrixXd out(K, static_cast<Eigen::Index>(doc.unique_words()));
  for (std::size_t i = 0; i < doc.unique_words(); ++i) {
    const auto w = static_cast<Eigen::Index>(doc.entries()[i].id);
    for (Eigen::Index k = 0; k < K; ++k)
      out(k, static_cast<Eigen::Index>(i)) = math::digamma(m.lambda(k, w)) - e.digamma_row_sum[k];
  }
  return out;
}

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericalError(std::string("non-finite value in ") + what);
}

/// Document part of the per-document bound for fixed E[log β] columns.
inline double document_terms(const Hyperparams& h, const DocumentVariational& q, const Eigen::VectorXd& counts,
                             const Eigen::MatrixXd& elog_topics, const Eigen::VectorXd& elog_top_sticks) {
  const Eigen::VectorXd elog_doc_sticks = math::expected_log_sticks(q.a, q.b);
  // Words: Σ_u cnt_u Σ_t ζ_ut Σ_k φ_tk E[log β_ku]
  const Eigen::MatrixXd table_word = q.phi * elog_topics;  // T x U
  double words = 0.0;
  for (Eigen::Index i = 0; i < q.zeta.rows(); ++i)
    words += counts[i] * q.zeta.row(i).dot(table_word.col(i));

  double indicators = (q.phi * elog_top_sticks).sum() - math::neg_entropy(q.phi);

  double assignments = 0.0;
  for (Eigen::Index i = 0; i < q.zeta.rows(); ++i) {
    double s = q.zeta.row(i).dot(elog_doc_sticks);
    for (Eigen::Index t = 0; t < q.zeta.cols(); ++t)
      if (q.zeta(i, t) > 0.0) s -= q.zeta(i, t) * std::log(q.zeta(i, t));
    assignments += counts[i] * s;
  }

  double sticks = 0.0;
  for (Eigen::Index t = 0; t < q.a.size(); ++t) {
    const double e_log_1m = math::digamma(q.b[t]) - math::digamma(q.a[t] + q.b[t]);
    sticks += std::log(h.alpha0) + (h.alpha0 - 1.0) * e_log_1m - math::beta_neg_entropy(q.a[t], q.b[t]);
  }
  return words + indicators + assignments + sticks;
}

/// Starting word-to-table assignments. A uniform start leaves every table
/// with the same topic posterior, so instead each of the T most responsible
/// topics seeds one table and words are spread according to their topic
/// responsibilities.
inline Eigen::MatrixXd initial_zeta(const Eigen::MatrixXd& elog_topics, const Eigen::VectorXd& elog_top_sticks,
                                    const Eigen::VectorXd& counts, Eigen::Index tables) {
  const auto K = elog_topics.rows();
  Eigen::MatrixXd resp = elog_topics.transpose();  // U x K
  resp.rowwise() += elog_top_sticks.transpose();
  math::softmax_rows(resp);
  const Eigen::VectorXd mass = resp.transpose() * counts;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) order[static_cast<std::size_t>(k)] = k;
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return mass[x] > mass[y]; });
  Eigen::MatrixXd zeta(resp.rows(), tables);
  for (Eigen::Index t = 0; t < tables; ++t) zeta.col(t) = resp.col(order[static_cast<std::size_t>(t)]);
  for (Eigen::Index i = 0; i < zeta.rows(); ++i) {
    const double s = zeta.row(i).sum();
    if (s > 0.0 && std::isfinite(s))
      zeta.row(i) /= s;
    else
      zeta.row(i).setConstant(1.0 / static_cast<double>(tables));
  }
  return zeta;
}

}  // namespace detail

/// Per-document bound L_j for arbitrary document-level parameters. The
/// category-level terms enter with weight 1/|c|.
inline double document_bound(const CategoryModel& m, const ModelExpectations& e, const BowDocument& doc,
                             const DocumentVariational& q) {
  detail::check_document(m, doc);
  const auto elog_topics = detail::elog_topics_for(m, e, doc);
  return detail::document_terms(m.hyper, q, detail::doc_counts(doc), elog_topics, e.elog_sticks) +
         e.global_term / m.scale();
}

inline double document_bound(const CategoryModel& m, const BowDocument& doc, const DocumentVariational& q) {
  return document_bound(m, compute_expectations(m), doc, q);
}

/// Coordinate ascent over (phi, zeta, a, b) with the category frozen.
inline InferenceResult infer_document(const CategoryModel& m, const ModelExpectations& e, const BowDocument& doc,
                                      const InferenceOptions& opts = {}) {
  detail::check_document(m, doc);
  const auto& h = m.hyper;
  const auto T = static_cast<Eigen::Index>(h.max_tables);
  const Eigen::VectorXd counts = detail::doc_counts(doc);
  const Eigen::MatrixXd elog_topics = detail::elog_topics_for(m, e, doc);  // K x U
  const double global = e.global_term / m.scale();

  InferenceResult r;
  auto& q = r.var;
  q.zeta = detail::initial_zeta(elog_topics, e.elog_sticks, counts, T);
  q.a = Eigen::VectorXd::Ones(T - 1);
  q.b = Eigen::VectorXd::Constant(T - 1, h.alpha0);
  q.phi.resize(T, m.lambda.rows());

  double prev = 0.0;
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    // phi_tk ∝ exp(E[log σ_k(β')] + Σ_u cnt_u ζ_ut E[log β_ku])
    const Eigen::MatrixXd weighted_zeta = (q.zeta.array().colwise() * counts.array()).matrix();  // U x T
    Eigen::MatrixXd phi_logits = weighted_zeta.transpose() * elog_topics.transpose();          // T x K
    phi_logits.rowwise() += e.elog_sticks.transpose();
    math::softmax_rows(phi_logits);
    q.phi = std::move(phi_logits);

    // zeta_ut ∝ exp(E[log σ_t(π')] + Σ_k φ_tk E[log β_ku])
    const Eigen::VectorXd elog_doc_sticks = math::expected_log_sticks(q.a, q.b);
    Eigen::MatrixXd zeta_logits = (q.phi * elog_topics).transpose();  // U x T
    zeta_logits.rowwise() += elog_doc_sticks.transpose();
    math::softmax_rows(zeta_logits);
    q.zeta = std::move(zeta_logits);

    // a_t = 1 + Σ_u cnt_u ζ_ut,  b_t = α0 + Σ_u cnt_u Σ_{s>t} ζ_us
    const Eigen::VectorXd table_mass = q.zeta.transpose() * counts;
    double tail = table_mass.sum();
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      tail -= table_mass[t];
      q.a[t] = 1.0 + table_mass[t];
      q.b[t] = h.alpha0 + std::max(tail, 0.0);
    }

    const double bound = detail::document_terms(h, q, counts, elog_topics, e.elog_sticks) + global;
    detail::require_finite(bound, "per-document bound");
    r.history.push_back(bound);
    r.bound = bound;
    r.iterations = iter;
    if (iter > 1 && std::abs(bound - prev) < opts.tol * std::abs(prev)) break;
    prev = bound;
  }
  return r;
}

inline InferenceResult infer_document(const CategoryModel& m, const BowDocument& doc,
                                      const InferenceOptions& opts = {}) {
  return infer_document(m, compute_expectations(m), doc, opts);
}

inline NaturalGradients natural_gradients(const CategoryModel& m, const DocumentVariational& q,
                                          const BowDocument& doc) {
  const auto K = m.lambda.rows();
  const auto T = static_cast<Eigen::Index>(m.hyper.max_tables);
  const auto U = static_cast<Eigen::Index>(doc.unique_words());
  if (q.phi.rows() != T || q.phi.cols() != K || q.zeta.rows() != U || q.zeta.cols() != T)
    throw StructuralError("document variational parameters do not match model/document dimensions");
  if (doc.id_bound() > m.vocabulary_size()) throw StructuralError("document word id outside the vocabulary");

  const double scale = m.scale();
  const auto& h = m.hyper;
  NaturalGradients g;
  g.dlambda = (-m.lambda).array() + h.eta;
  const Eigen::VectorXd counts = detail::doc_counts(doc);
  const Eigen::MatrixXd weighted_zeta = (q.zeta.array().colwise() * counts.array()).matrix();  // U x T
  const Eigen::MatrixXd stats = q.phi.transpose() * weighted_zeta.transpose();                // K x U
  for (Eigen::Index i = 0; i < U; ++i)
    g.dlambda.col(static_cast<Eigen::Index>(doc.entries()[static_cast<std::size_t>(i)].id)) += scale * stats.col(i);

  const Eigen::VectorXd topic_mass = q.phi.colwise().sum().transpose();  // K
  g.du.resize(K - 1);
  g.dv.resize(K - 1);
  double tail = topic_mass.sum();
  for (Eigen::Index k = 0; k + 1 < K; ++k) {
    tail -= topic_mass[k];
    g.du[k] = -m.u[k] + 1.0 + scale * topic_mass[k];
    g.dv[k] = -m.v[k] + h.gamma_top + scale * std::max(tail, 0.0);
  }
  return g;
}

/// θ ← θ + ρ·∂θ for every category-level parameter; advances t0.
inline void apply_update(CategoryModel& m, const NaturalGradients& g, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("learning rate must lie in (0, 1]");
  if (g.dlambda.rows() != m.lambda.rows() || g.dlambda.cols() != m.lambda.cols() || g.du.size() != m.u.size() ||
      g.dv.size() != m.v.size())
    throw StructuralError("gradient dimensions do not match the model");
  Eigen::MatrixXd lambda = m.lambda + rho * g.dlambda;
  Eigen::VectorXd u = m.u + rho * g.du;
  Eigen::VectorXd v = m.v + rho * g.dv;
  auto positive = [](const auto& x) { return x.allFinite() && (x.size() == 0 || x.minCoeff() > 0.0); };
  if (!positive(lambda)) throw NumericalError("update produced a non-positive lambda entry");
  if (!positive(u)) throw NumericalError("update produced a non-positive u entry");
  if (!positive(v)) throw NumericalError("update produced a non-positive v entry");
  m.lambda = std::move(lambda);
  m.u = std::move(u);
  m.v = std::move(v);
  ++m.t0;
}

struct FitResult {
  CategoryModel model;
  double bound = 0.0;  // per-document bound before the update
};

/// One online step on a single document. The input model is left untouched.
inline FitResult fit_document(const CategoryModel& model, const BowDocument& doc, const InferenceOptions& opts = {}) {
  detail::check_document(model, doc);
  FitResult r{model, 0.0};
  auto& m = r.model;
  ++m.doc_count;
  const auto inferred = infer_document(m, doc, opts);
  const auto grads = natural_gradients(m, inferred.var, doc);
  apply_update(m, grads, learning_rate(m.hyper, m.t0));
  r.bound = inferred.bound;
  return r;
}

/// Σ_j L_j over `docs`, each from a fresh inference at the current model.
inline double category_bound(const CategoryModel& m, std::span<const BowDocument> docs,
                             const InferenceOptions& opts = {}) {
  if (docs.empty()) throw InferenceError("category_bound needs at least one document");
  const auto e = compute_expectations(m);
  double total = 0.0;
  for (const auto& d : docs) total += infer_document(m, e, d, opts).bound;
  return total;
}

/// Row-normalized λ.
inline Eigen::MatrixXd expected_topics(const CategoryModel& m) {
  Eigen::MatrixXd out = m.lambda;
  for (Eigen::Index k = 0; k < out.rows(); ++k) out.row(k) /= out.row(k).sum();
  return out;
}

inline Eigen::VectorXd stick_weights(const CategoryModel& m) { return math::expected_sticks(m.u, m.v); }

inline std::size_t effective_topic_count(const CategoryModel& m, double mass_threshold) {
  if (!(mass_threshold > 0.0 && mass_threshold < 1.0)) throw ParameterError("mass threshold must lie in (0, 1)");
  const auto w = stick_weights(m);
  return static_cast<std::size_t>((w.array() > mass_threshold).count());
}

/// Expected topic mixture of a document: θ_k = Σ_t E[π_t] φ_tk.
inline Eigen::VectorXd document_topic_mixture(const DocumentVariational& q) {
  const Eigen::VectorXd table_weights = math::expected_sticks(q.a, q.b);
  return q.phi.transpose() * table_weights;
}

/// Per-word predictive log-likelihood of a held-out document.
inline double log_likelihood(const CategoryModel& m, const ModelExpectations& e, const BowDocument& doc,
                             const InferenceOptions& opts = {}) {
  const auto r = infer_document(m, e, doc, opts);
  const Eigen::VectorXd theta = document_topic_mixture(r.var);
  double total = 0.0;
  for (const auto& [id, count] : doc.entries()) {
    double p = 0.0;
    for (Eigen::Index k = 0; k < m.lambda.rows(); ++k) p += theta[k] * m.lambda(k, id) / e.row_sum[k];
    total += count * std::log(p);
  }
  const double ll = total / static_cast<double>(doc.total_words());
  detail::require_finite(ll, "log-likelihood");
  return ll;
}

inline double log_likelihood(const CategoryModel& m, const BowDocument& doc, const InferenceOptions& opts = {}) {
  return log_likelihood(m, compute_expectations(m), doc, opts);
}

}  // namespace localhdp::hdp
