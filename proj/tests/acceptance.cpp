// Acceptance suite: one PASS/FAIL line per criterion. Criterion 9 needs a
// user-supplied Restaurant corpus in bow-text form (LOCALHDP_RESTAURANT_BOW)
// and is skipped otherwise.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "localhdp/localhdp.hpp"
#include "oracles/hdp_oracle.hpp"
#include "synthetic.hpp"

using namespace localhdp;
using namespace localhdp::hdp;
namespace proto = localhdp::protocol;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs > limit_s) {
    r.pass = false;
    r.detail += " (over the " + std::to_string(static_cast<int>(limit_s)) + " s limit)";
  }
  if (!r.pass) ++failures;
  std::printf("%s criterion %d %s: %s [%.2f s]\n", r.pass ? "PASS" : "FAIL", id, name, r.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double x) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

CategoryModel random_model(std::mt19937_64& rng, std::size_t K, std::size_t T, std::size_t V) {
  std::uniform_real_distribution<double> pos(0.1, 5.0);
  Hyperparams h;
  h.max_topics = K;
  h.max_tables = T;
  h.eta = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
  h.gamma_top = pos(rng);
  h.alpha0 = pos(rng);
  auto m = init_model(h, V, rng());
  for (Eigen::Index k = 0; k < m.lambda.rows(); ++k)
    for (Eigen::Index w = 0; w < m.lambda.cols(); ++w) m.lambda(k, w) = pos(rng);
  for (Eigen::Index k = 0; k < m.u.size(); ++k) {
    m.u[k] = pos(rng);
    m.v[k] = pos(rng);
  }
  m.doc_count = std::uniform_int_distribution<std::uint64_t>(0, 20)(rng);
  return m;
}

BowDocument random_doc(std::mt19937_64& rng, std::size_t V, std::size_t max_words) {
  const auto n = std::uniform_int_distribution<std::size_t>(1, max_words)(rng);
  std::vector<WordId> words;
  for (std::size_t i = 0; i < n; ++i)
    words.push_back(static_cast<WordId>(std::uniform_int_distribution<std::size_t>(0, V - 1)(rng)));
  return BowDocument::from_words(words);
}

Eigen::MatrixXd random_stochastic(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
    m.row(r) /= m.row(r).sum();
  }
  return m;
}

DocumentVariational random_variational(std::mt19937_64& rng, const CategoryModel& m, const BowDocument& doc) {
  const auto T = static_cast<Eigen::Index>(m.hyper.max_tables);
  std::uniform_real_distribution<double> pos(0.2, 6.0);
  DocumentVariational q;
  q.a.resize(T - 1);
  q.b.resize(T - 1);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    q.a[t] = pos(rng);
    q.b[t] = pos(rng);
  }
  q.phi = random_stochastic(rng, T, m.lambda.rows());
  q.zeta = random_stochastic(rng, static_cast<Eigen::Index>(doc.unique_words()), T);
  return q;
}

proto::Event teach(const std::string& l) { return {proto::EventKind::Teach, CategoryLabel(l), "v", {}, false, false}; }
proto::Event ask(const std::string& truth, const std::string& predicted) {
  return {proto::EventKind::Ask, CategoryLabel(truth), "v", CategoryLabel(predicted), truth == predicted, false};
}
proto::Event correct(const std::string& l) {
  return {proto::EventKind::Correct, CategoryLabel(l), "v", {}, false, false};
}

Outcome gradients_match_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t K = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const std::size_t T = std::uniform_int_distribution<std::size_t>(1, K)(rng);
    const std::size_t V = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const auto m = random_model(rng, K, T, V);
    const auto doc = random_doc(rng, V, 4);
    const auto q = random_variational(rng, m, doc);
    const auto fast = natural_gradients(m, q, doc);
    const auto slow = oracle::naive_gradients(m, q, doc);
    worst = std::max(worst, (fast.dlambda - slow.dlambda).cwiseAbs().maxCoeff());
    if (K > 1) {
      worst = std::max(worst, (fast.du - slow.du).cwiseAbs().maxCoeff());
      worst = std::max(worst, (fast.dv - slow.dv).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-12, "200 instances, max |diff| = " + fmt("%.3g", worst)};
}

Outcome bound_monotone() {
  std::mt19937_64 rng(8);
  InferenceOptions opts;
  opts.tol = 0.0;
  opts.max_iters = 40;
  double worst_drop = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t K = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
    const std::size_t T = std::uniform_int_distribution<std::size_t>(1, K)(rng);
    const std::size_t V = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const auto m = random_model(rng, K, T, V);
    const auto r = infer_document(m, random_doc(rng, V, 60), opts);
    for (std::size_t i = 1; i < r.history.size(); ++i) worst_drop = std::max(worst_drop, r.history[i - 1] - r.history[i]);
  }
  return {worst_drop <= 1e-8, "100 documents, largest drop = " + fmt("%.3g", worst_drop)};
}

Outcome grid_optimum() {
  Hyperparams h;
  h.max_topics = 2;
  h.max_tables = 2;
  auto m = init_model(h, 2, 1);
  m.lambda << 3.0, 1.0, 0.5, 2.0;
  m.u[0] = 1.5;
  m.v[0] = 2.0;
  m.doc_count = 1;
  const auto doc = BowDocument({{0, 2}, {1, 1}});
  const auto grid = oracle::grid_search_2x2(m, doc, 100);
  InferenceOptions opts;
  opts.tol = 1e-14;
  opts.max_iters = 10000;
  const auto r = infer_document(m, doc, opts);
  // The grid restricts the same bound to a lattice, so it can only fall short
  // of the continuous optimum: require infer >= grid - 1e-6.
  const double gap = r.bound - grid.bound;
  return {gap >= -1e-6, "infer - grid = " + fmt("%.3g", gap) + " (N=3, resolution 0.01)"};
}

Outcome planted_recovery() {
  Hyperparams h;
  h.eta = 0.3;
  const std::uint64_t seed = 1;
  const auto corpus = localhdp::testing::planted_corpus({3, 3, 50, 20, 60, 0.1, seed});
  const auto off = proto::run_offline(corpus, 10, 1, h, seed);
  Registry reg(50, h, seed);
  for (const auto& d : corpus.documents) reg.teach(d.label, d.doc);
  std::ostringstream detail;
  detail << "accuracy=" << fmt("%.4f", off.mean_accuracy) << " topics:";
  bool ok = off.mean_accuracy == 1.0;
  for (const auto& l : reg.labels()) {
    const auto n = effective_topic_count(reg.category(l).model, 0.02);
    detail << ' ' << l.str() << '=' << n;
    ok = ok && n >= 3 && n <= 6;
  }
  return {ok, detail.str()};
}

Outcome isolation() {
  const auto corpus = localhdp::testing::planted_corpus({10, 2, 60, 5, 40, 1.0, 7});
  Hyperparams h;
  h.max_topics = 20;
  h.max_tables = 5;
  Registry crowd(60, h, 3);
  for (const auto& d : corpus.documents) crowd.teach(d.label, d.doc);
  const CategoryLabel target("cat4");
  Registry alone(60, h, 3);
  for (const auto& d : corpus.documents)
    if (d.label == target) alone.teach(d.label, d.doc);
  const auto& a = crowd.category(target).model;
  const auto& b = alone.category(target).model;
  const bool same = a.lambda == b.lambda && a.u == b.u && a.v == b.v && a.t0 == b.t0 && a.doc_count == b.doc_count;
  return {same && crowd.size() == 10, "cat4 inside 10 categories vs standalone, bitwise equal = " +
                                          std::string(same ? "yes" : "no")};
}

Outcome open_ended() {
  const auto corpus = localhdp::testing::planted_corpus({10, 1, 50, 20, 30, 1.0, 11});
  proto::TeacherConfig cfg;
  cfg.seed = 5;
  const Hyperparams h;
  const auto a = proto::run_open_ended(corpus, cfg, h);
  const auto b = proto::run_open_ended(corpus, cfg, h);
  auto text = [](const proto::OpenEndedResult& r) {
    std::ostringstream out;
    proto::write_trace(out, r.trace);
    proto::write_metrics(out, r.metrics, r.trace.reason);
    return out.str();
  };
  const bool replay = text(a) == text(b);
  std::ostringstream detail;
  detail << "reason=" << proto::to_string(a.trace.reason) << " lc=" << a.metrics.lc
         << " gca=" << fmt("%.4f", a.metrics.gca) << " qci=" << a.metrics.qci << " replay="
         << (replay ? "identical" : "differs");
  return {a.trace.reason == proto::Termination::LackOfData && a.metrics.lc == 10 && a.metrics.gca >= 0.9 && replay,
          detail.str()};
}

Outcome metric_arithmetic() {
  struct Case {
    std::vector<proto::Event> events;
    proto::Metrics want;
  };
  std::vector<Case> cases;
  cases.push_back({{teach("A"), teach("A"), teach("A"), ask("A", "A"), ask("A", "A")}, {2, 1, 3.0, 1.0}});
  {
    std::vector<proto::Event> ev{teach("A"), teach("B")};
    for (int i = 0; i < 5; ++i) ev.push_back(ask("A", "A"));
    for (int i = 0; i < 5; ++i) {
      ev.push_back(ask("B", "A"));
      ev.push_back(correct("B"));
    }
    // 10 asks + 5 corrections; 7 stored instances over 2 categories; 5 of 10 right.
    cases.push_back({ev, {15, 2, 3.5, 0.5}});
  }
  cases.push_back({{teach("x"), teach("x"), teach("x"), ask("x", "x"), ask("x", "x"), ask("x", "x"), teach("y"),
                    teach("y"), teach("y"), ask("y", "x"), correct("y"), ask("x", "x"), ask("y", "y"), ask("x", "y"),
                    correct("x"), ask("y", "y")},
                   {10, 2, 4.0, 0.75}});
  int ok = 0;
  for (const auto& c : cases) {
    proto::ExperimentTrace t;
    t.events = c.events;
    ok += proto::compute_metrics(t) == c.want;
  }
  return {ok == 3, std::to_string(ok) + "/3 traces match"};
}

Outcome threshold() {
  const std::vector<proto::Event> ev{ask("a", "b"), correct("a"), ask("a", "a"), ask("a", "a")};
  const double acc = proto::window_accuracy(ev, 1);
  return {acc == 2.0 / 3.0 && acc > 0.66, "window accuracy = " + fmt("%.17g", acc) + " > 0.66"};
}

}  // namespace

int main() {
  criterion(1, "natural gradients vs oracle", 5, gradients_match_oracle);
  criterion(2, "bound monotonicity", 30, bound_monotone);
  criterion(3, "grid-search optimality", 120, grid_optimum);
  criterion(4, "planted-topic recovery", 60, planted_recovery);
  criterion(5, "category isolation", 0, isolation);
  criterion(6, "open-ended protocol", 120, open_ended);
  criterion(7, "metric arithmetic", 0, metric_arithmetic);
  criterion(8, "threshold semantics", 0, threshold);

  const char* data = std::getenv("LOCALHDP_RESTAURANT_BOW");
  if (!data || !*data) {
    std::printf("SKIP criterion 9 restaurant offline accuracy: set LOCALHDP_RESTAURANT_BOW to a bow-text corpus\n");
  } else {
    criterion(9, "restaurant offline accuracy", 0, [data] {
      const auto corpus = load_corpus(data, CorpusFormat::BowText);
      const auto r = proto::run_offline(corpus, 10, 1, Hyperparams{}, 1);
      return Outcome{r.mean_accuracy >= 0.90, "accuracy=" + fmt("%.4f", r.mean_accuracy)};
    });
  }
  return failures == 0 ? 0 : 1;
}
