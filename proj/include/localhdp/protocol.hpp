#pragma once

// Evaluation protocols: the simulated-teacher open-ended experiment and
// repeated stratified k-fold offline evaluation.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "localhdp/corpus.hpp"
#include "localhdp/registry.hpp"

namespace localhdp::protocol {

struct TeacherConfig {
  double tau = 0.66;
  std::size_t window_factor = 3;
  std::size_t teach_views = 3;
  std::size_t patience = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigurationError("tau must lie in (0, 1)");
    if (window_factor < 1) throw ConfigurationError("window factor must be >= 1");
    if (teach_views < 1) throw ConfigurationError("teach_views must be >= 1");
    if (patience < 1) throw ConfigurationError("patience must be >= 1");
  }
};

enum class EventKind { Teach, Ask, Correct };

struct Event {
  EventKind kind = EventKind::Teach;
  CategoryLabel label;      // taught/corrected label, or the ground truth of an ask
  std::string view;         // object-view identifier
  CategoryLabel predicted;  // asks only
  bool correct = false;     // asks only
  bool resampled = false;   // asks only: drawn again after the category's unseen views ran out

  bool operator==(const Event&) const = default;
};

enum class Termination { LackOfData, Stalled };

inline const char* to_string(Termination t) { return t == Termination::LackOfData ? "lack_of_data" : "stalled"; }

struct ExperimentTrace {
  std::vector<Event> events;
  Termination reason = Termination::LackOfData;
  bool operator==(const ExperimentTrace&) const = default;
};

struct Metrics {
  std::size_t qci = 0;
  std::size_t lc = 0;
  double aic = 0.0;
  double gca = 0.0;
  bool operator==(const Metrics&) const = default;
};

/// Fraction of correct asks among the last window_factor·n asks in `events`
/// (all of them if fewer exist); 0 when there are none.
inline double window_accuracy(std::span<const Event> events, std::size_t n, std::size_t window_factor = 3) {
  if (n < 1) throw ParameterError("window accuracy needs n >= 1");
  const std::size_t window = window_factor * n;
  std::size_t seen = 0, hits = 0;
  for (auto it = events.rbegin(); it != events.rend() && seen < window; ++it) {
    if (it->kind != EventKind::Ask) continue;
    ++seen;
    hits += it->correct ? 1 : 0;
  }
  return seen == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(seen);
}

inline double window_accuracy(const ExperimentTrace& trace, std::size_t n, std::size_t window_factor = 3) {
  return window_accuracy(std::span<const Event>(trace.events), n, window_factor);
}

/// #QCI counts asks and corrections; AIC counts taught and corrected views.
inline Metrics compute_metrics(const ExperimentTrace& trace) {
  Metrics m;
  std::set<CategoryLabel> taught;
  std::size_t asks = 0, hits = 0, stored = 0;
  for (const auto& e : trace.events) {
    switch (e.kind) {
      case EventKind::Teach:
        taught.insert(e.label);
        ++stored;
        break;
      case EventKind::Ask:
        ++asks;
        hits += e.correct ? 1 : 0;
        ++m.qci;
        break;
      case EventKind::Correct:
        ++stored;
        ++m.qci;
        break;
    }
  }
  m.lc = taught.size();
  m.aic = m.lc ? static_cast<double>(stored) / static_cast<double>(m.lc) : 0.0;
  m.gca = asks ? static_cast<double>(hits) / static_cast<double>(asks) : 0.0;
  return m;
}

/// As above, with AIC read from the registry's stored instances.
inline Metrics compute_metrics(const ExperimentTrace& trace, const Registry& registry) {
  auto m = compute_metrics(trace);
  m.aic = registry.average_instances();
  return m;
}

struct OpenEndedResult {
  Metrics metrics;
  ExperimentTrace trace;
};

/// Simulated teacher. Introduces one category at a time with `teach_views`
/// random views, then asks about unseen views of every learned category in
/// shuffled round-robin cycles, correcting each mistake. Once 3n asks have
/// been made since the latest introduction, each further ask checks the
/// window accuracy: above tau introduces the next category, `patience`
/// consecutive failed checks end the run as stalled.
inline OpenEndedResult run_open_ended(const LabeledCorpus& corpus, const TeacherConfig& cfg,
                                      const hdp::Hyperparams& hyper, const hdp::InferenceOptions& inference = {}) {
  cfg.validate();
  const auto groups = corpus.by_label();
  if (groups.size() < 2) throw ConfigurationError("open-ended evaluation needs at least 2 categories");
  for (const auto& [label, idx] : groups)
    if (idx.size() < cfg.teach_views + 1)
      throw ConfigurationError("category '" + label.str() + "' has " + std::to_string(idx.size()) +
                               " views; needs at least " + std::to_string(cfg.teach_views + 1));
  for (auto i : corpus.empty_documents())
    throw ConfigurationError("corpus contains an empty document ('" + corpus.documents[i].doc.source_id() + "')");

  std::mt19937_64 rng(cfg.seed);
  std::vector<CategoryLabel> order;
  for (const auto& [label, _] : groups) order.push_back(label);
  std::shuffle(order.begin(), order.end(), rng);
  std::map<CategoryLabel, std::vector<std::size_t>> pools;  // unseen views, consumed from the back
  for (const auto& label : order) {
    auto idx = groups.at(label);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::reverse(idx.begin(), idx.end());
    pools[label] = std::move(idx);
  }

  auto view_id = [&](std::size_t i) {
    const auto& s = corpus.documents[i].doc.source_id();
    return s.empty() ? "#" + std::to_string(i) : s;
  };

  Registry registry(corpus.dictionary_size, hyper, mix64(cfg.seed), inference);
  ExperimentTrace trace;
  std::vector<CategoryLabel> learned;
  for (;;) {
    if (learned.size() == order.size()) {
      trace.reason = Termination::LackOfData;
      break;
    }
    const auto& fresh = order[learned.size()];
    learned.push_back(fresh);
    for (std::size_t i = 0; i < cfg.teach_views; ++i) {
      const auto view = pools[fresh].back();
      pools[fresh].pop_back();
      registry.teach(fresh, corpus.documents[view].doc);
      trace.events.push_back({EventKind::Teach, fresh, view_id(view), {}, false, false});
    }

    const std::size_t since = trace.events.size();
    const std::size_t n = learned.size();
    std::size_t asks = 0, failed_checks = 0;
    bool passed = false, stalled = false;
    while (!passed && !stalled) {
      auto cycle = learned;
      std::shuffle(cycle.begin(), cycle.end(), rng);
      for (const auto& truth : cycle) {
        auto& pool = pools[truth];
        std::size_t view;
        bool resampled = false;
        if (!pool.empty()) {
          view = pool.back();
          pool.pop_back();
        } else {
          const auto& all = groups.at(truth);
          view = all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)];
          resampled = true;
        }
        const auto& doc = corpus.documents[view].doc;
        const auto answer = registry.ask(doc);
        const bool ok = answer.label == truth;
        trace.events.push_back({EventKind::Ask, truth, view_id(view), answer.label, ok, resampled});
        if (!ok) {
          registry.correct(truth, doc);
          trace.events.push_back({EventKind::Correct, truth, view_id(view), {}, false, false});
        }
        if (++asks < cfg.window_factor * n) continue;
        const auto recent = std::span<const Event>(trace.events).subspan(since);
        if (window_accuracy(recent, n, cfg.window_factor) > cfg.tau) {
          passed = true;
          break;
        }
        if (++failed_checks >= cfg.patience) {
          stalled = true;
          break;
        }
      }
    }
    if (stalled) {
      trace.reason = Termination::Stalled;
      break;
    }
  }
  return {compute_metrics(trace, registry), std::move(trace)};
}

// ---------------------------------------------------------------- exports

/// One event per line: `teach label=.. view=..`, `ask view=.. truth=..
/// predicted=.. correct=0|1 resampled=0|1`, `correct label=.. view=..`, then
/// `end reason=..`.
inline void write_trace(std::ostream& out, const ExperimentTrace& trace) {
  for (const auto& e : trace.events) {
    switch (e.kind) {
      case EventKind::Teach:
        out << "teach label=" << e.label.str() << " view=" << e.view << '\n';
        break;
      case EventKind::Ask:
        out << "ask view=" << e.view << " truth=" << e.label.str() << " predicted=" << e.predicted.str()
            << " correct=" << e.correct << " resampled=" << e.resampled << '\n';
        break;
      case EventKind::Correct:
        out << "correct label=" << e.label.str() << " view=" << e.view << '\n';
        break;
    }
  }
  out << "end reason=" << to_string(trace.reason) << '\n';
}

inline void write_metrics(std::ostream& out, const Metrics& m, Termination reason) {
  char buf[64];
  out << "qci=" << m.qci << '\n' << "lc=" << m.lc << '\n';
  std::snprintf(buf, sizeof buf, "%.6f", m.aic);
  out << "aic=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.6f", m.gca);
  out << "gca=" << buf << '\n' << "termination=" << to_string(reason) << '\n';
}

/// Learning curve: after every ask/correct iteration, the number of learned
/// categories and the running global accuracy.
inline void write_learning_curve_csv(std::ostream& out, const ExperimentTrace& trace) {
  out << "iteration,learned_categories,global_accuracy\n";
  std::set<CategoryLabel> taught;
  std::size_t iteration = 0, asks = 0, hits = 0;
  for (const auto& e : trace.events) {
    if (e.kind == EventKind::Teach) {
      taught.insert(e.label);
      continue;
    }
    if (e.kind == EventKind::Ask) {
      ++asks;
      hits += e.correct;
    }
    ++iteration;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", asks ? static_cast<double>(hits) / static_cast<double>(asks) : 0.0);
    out << iteration << ',' << taught.size() << ',' << buf << '\n';
  }
}

/// Stored instances per category, in introduction order.
inline void write_instances_csv(std::ostream& out, const ExperimentTrace& trace) {
  out << "category,stored_instances\n";
  std::vector<CategoryLabel> order;
  std::map<CategoryLabel, std::size_t> stored;
  for (const auto& e : trace.events) {
    if (e.kind == EventKind::Ask) continue;
    if (!stored.count(e.label)) order.push_back(e.label);
    ++stored[e.label];
  }
  for (const auto& l : order) out << l.str() << ',' << stored[l] << '\n';
}

// ---------------------------------------------------------------- offline

struct OfflineResult {
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracies;  // permutation-major
};

/// Repeated stratified k-fold evaluation: for every permutation each
/// category's views are shuffled and dealt round-robin into folds.
inline OfflineResult run_offline(const LabeledCorpus& corpus, std::size_t folds, std::size_t permutations,
                                 const hdp::Hyperparams& hyper, std::uint64_t seed,
                                 const hdp::InferenceOptions& inference = {}) {
  if (folds < 2) throw ConfigurationError("need at least 2 folds");
  if (permutations < 1) throw ConfigurationError("need at least 1 permutation");
  const auto groups = corpus.by_label();
  if (groups.empty()) throw ConfigurationError("corpus is empty");
  for (const auto& [label, idx] : groups)
    if (idx.size() < folds)
      throw ConfigurationError("category '" + label.str() + "' has " + std::to_string(idx.size()) +
                               " instances, fewer than " + std::to_string(folds) + " folds");
  for (auto i : corpus.empty_documents())
    throw ConfigurationError("corpus contains an empty document ('" + corpus.documents[i].doc.source_id() + "')");

  OfflineResult result;
  for (std::size_t p = 0; p < permutations; ++p) {
    std::mt19937_64 rng(mix64(seed + p));
    std::vector<std::size_t> order(corpus.documents.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold_of(corpus.documents.size());
    for (const auto& [label, idx] : groups) {
      auto shuffled = idx;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (std::size_t i = 0; i < shuffled.size(); ++i) fold_of[shuffled[i]] = i % folds;
    }
    for (std::size_t f = 0; f < folds; ++f) {
      Registry reg(corpus.dictionary_size, hyper, mix64(seed ^ (p * folds + f + 1)), inference);
      for (auto i : order)
        if (fold_of[i] != f) reg.teach(corpus.documents[i].label, corpus.documents[i].doc);
      std::size_t total = 0, hits = 0;
      for (auto i : order) {
        if (fold_of[i] != f) continue;
        ++total;
        hits += reg.ask(corpus.documents[i].doc).label == corpus.documents[i].label;
      }
      result.fold_accuracies.push_back(static_cast<double>(hits) / static_cast<double>(total));
    }
  }
  result.mean_accuracy = std::accumulate(result.fold_accuracies.begin(), result.fold_accuracies.end(), 0.0) /
                         static_cast<double>(result.fold_accuracies.size());
  return result;
}

}  // namespace localhdp::protocol
