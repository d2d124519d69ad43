#pragma once

// Command implementations behind the localhdp CLI. Each command validates
// its whole configuration and every input before it creates a file; outputs
// are registered with an OutputGuard so a failure removes them again.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <ostream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "localhdp/localhdp.hpp"

namespace localhdp::cli {

namespace fs = std::filesystem;

struct ModelOptions {
  hdp::Hyperparams hyper;
  hdp::InferenceOptions inference;
  std::uint64_t seed = 1;
};

/// Files a command may write; removed unless commit() is reached.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = paths_.rbegin(); it != paths_.rend(); ++it) fs::remove(*it, ec);
  }

  /// Registers `path` unless it already existed.
  const fs::path& add(const fs::path& path) {
    if (!fs::exists(path)) paths_.push_back(path);
    return path;
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

inline void require_input(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigurationError(std::string(what) + " path is required");
  if (!fs::exists(path)) throw ConfigurationError(std::string(what) + " '" + path + "' does not exist");
}

inline void require_output(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigurationError(std::string(what) + " path is required");
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw ConfigurationError(std::string(what) + " directory '" + parent.string() + "' does not exist");
}

template <class Fn>
void write_text(OutputGuard& guard, const fs::path& path, Fn&& body) {
  guard.add(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  body(out);
  if (!out.flush()) throw Error("write failed: " + path.string());
}

inline std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// ---------------------------------------------------------------- cloud input

inline bool is_cloud_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return fs::is_regular_file(p) && (ext == ".ply" || ext == ".xyz" || ext == ".pts");
}

struct CloudFile {
  fs::path path;
  std::string label;  // from the sidecar `<file>.label`, else the parent directory name
};

inline std::string label_for(const fs::path& file) {
  fs::path sidecar = file;
  sidecar += ".label";
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    std::string s;
    in >> s;
    if (!s.empty()) return s;
  }
  return file.parent_path().filename().string();
}

/// Every cloud file under `root` (or `root` itself), sorted by path.
inline std::vector<CloudFile> find_clouds(const std::string& root) {
  std::vector<CloudFile> out;
  if (fs::is_regular_file(root)) {
    out.push_back({root, label_for(fs::absolute(root))});
    return out;
  }
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (is_cloud_file(e.path())) out.push_back({e.path(), label_for(e.path())});
  std::sort(out.begin(), out.end(), [](const CloudFile& a, const CloudFile& b) { return a.path < b.path; });
  return out;
}

// ---------------------------------------------------------------- build-dict

struct BuildDictOptions {
  std::string clouds;
  std::string out;
  std::size_t words = 0;
  std::uint64_t seed = 1;
  features::FeatureParams params;
};

inline int cmd_build_dict(const BuildDictOptions& o, std::ostream& report) {
  o.params.validate();
  if (o.words < 1) throw ConfigurationError("--words must be >= 1");
  require_input(o.clouds, "clouds");
  require_output(o.out, "dictionary");

  std::vector<features::SpinImageDescriptor> pool;
  std::size_t clouds = 0;
  for (const auto& f : find_clouds(o.clouds)) {
    try {
      auto desc = features::describe_cloud(features::load_point_cloud(f.path.string()), o.params);
      if (!desc.skipped.empty())
        spdlog::warn("{}: skipped {} keypoints with undefined normals", f.path.string(), desc.skipped.size());
      for (auto& d : desc.descriptors) pool.push_back(std::move(d));
      ++clouds;
    } catch (const Error& e) {
      spdlog::warn("skipping {}: {}", f.path.string(), e.what());
    }
  }
  if (pool.empty()) throw Error("no descriptors extracted from '" + o.clouds + "'");
  spdlog::info("{} descriptors from {} clouds", pool.size(), clouds);
  const auto km = features::build_dictionary(pool, o.words, o.seed, o.params);

  OutputGuard guard;
  guard.add(o.out);
  features::save_dictionary(o.out, km.dictionary);
  guard.commit();
  report << "clouds=" << clouds << "\ndescriptors=" << pool.size() << "\nwords=" << o.words
         << "\nsse=" << fixed6(km.sse_history.back()) << "\niterations=" << km.sse_history.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------- encode

struct EncodeOptions {
  std::string clouds;
  std::string dict;
  std::string out;
  CorpusFormat format = CorpusFormat::BowText;
  std::optional<features::FeatureParams> params;  // must match the dictionary's when given
};

inline int cmd_encode(const EncodeOptions& o, std::ostream& report) {
  require_input(o.clouds, "clouds");
  require_input(o.dict, "dictionary");
  require_output(o.out, "output");
  const auto dict = features::load_dictionary(o.dict);
  if (o.params && !(*o.params == dict.params))
    throw ConfigurationError("feature parameters differ from those the dictionary was built with");

  LabeledCorpus corpus;
  corpus.dictionary_size = dict.size();
  const auto files = find_clouds(o.clouds);
  if (files.empty()) spdlog::warn("no point clouds found under '{}'", o.clouds);
  for (const auto& f : files) {
    const auto desc = features::describe_cloud(features::load_point_cloud(f.path.string()), dict.params);
    std::string source = f.path.filename().string();
    corpus.documents.push_back({features::encode_bow(desc.descriptors, dict, f.label + "/" + source),
                                CategoryLabel(f.label)});
    if (corpus.documents.back().doc.empty()) spdlog::warn("{}: no descriptors, empty document", f.path.string());
  }

  OutputGuard guard;
  guard.add(o.out);
  save_corpus(o.out, corpus, o.format);
  guard.commit();
  report << "documents=" << corpus.documents.size() << "\nlabels=" << corpus.labels().size() << '\n';
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string bow;
  std::string snapshot;
  std::string dict;  // optional, embedded in the snapshot
  CorpusFormat format = CorpusFormat::BowText;
  ModelOptions model;
};

inline LabeledCorpus load_training_corpus(const std::string& path, CorpusFormat format) {
  auto corpus = load_corpus(path, format);
  for (auto i : corpus.empty_documents())
    throw ValidationError("document '" + corpus.documents[i].doc.source_id() + "' is empty");
  if (corpus.dictionary_size < 1) throw ValidationError("corpus has an empty vocabulary");
  return corpus;
}

inline int cmd_train(const TrainOptions& o, std::ostream& report) {
  o.model.hyper.validate();
  require_input(o.bow, "corpus");
  require_output(o.snapshot, "snapshot");
  std::optional<features::Dictionary> dict;
  if (!o.dict.empty()) {
    require_input(o.dict, "dictionary");
    dict = features::load_dictionary(o.dict);
  }
  const auto corpus = load_training_corpus(o.bow, o.format);
  if (corpus.documents.empty()) throw ValidationError("corpus has no documents");
  if (dict && dict->size() != corpus.dictionary_size)
    throw ValidationError("dictionary has " + std::to_string(dict->size()) + " words but the corpus declares V=" +
                          std::to_string(corpus.dictionary_size));

  Registry reg(corpus.dictionary_size, o.model.hyper, o.model.seed, o.model.inference);
  for (const auto& d : corpus.documents) reg.teach(d.label, d.doc);

  OutputGuard guard;
  guard.add(o.snapshot);
  save_snapshot(o.snapshot, reg, dict);
  guard.commit();
  report << "categories=" << reg.size() << "\ndocuments=" << corpus.documents.size() << '\n';
  for (const auto& l : reg.labels())
    report << "topics[" << l.str() << "]=" << hdp::effective_topic_count(reg.category(l).model, 0.02) << '\n';
  return 0;
}

// ---------------------------------------------------------------- classify

struct ClassifyOptions {
  std::string snapshot;
  std::string bow;    // labelled documents to classify
  std::string cloud;  // or a single point cloud, encoded with the snapshot's dictionary
  std::string report;
  CorpusFormat format = CorpusFormat::BowText;
};

inline int cmd_classify(const ClassifyOptions& o, std::ostream& out) {
  require_input(o.snapshot, "snapshot");
  if (o.bow.empty() == o.cloud.empty()) throw ConfigurationError("give exactly one of --bow or --cloud");
  if (!o.bow.empty()) require_input(o.bow, "corpus");
  if (!o.cloud.empty()) require_input(o.cloud, "cloud");
  if (!o.report.empty()) require_output(o.report, "report");

  const auto snap = load_snapshot(o.snapshot);
  if (snap.registry.empty()) throw Error("no categories taught");
  std::vector<BowDocument> docs;
  std::vector<std::optional<CategoryLabel>> truth;
  if (!o.bow.empty()) {
    const auto corpus = load_corpus(o.bow, o.format, snap.registry.dictionary_size());
    for (const auto& d : corpus.documents) {
      docs.push_back(d.doc);
      truth.push_back(d.label);
    }
  } else {
    if (!snap.dictionary) throw ConfigurationError("snapshot carries no dictionary; classify a --bow file instead");
    const auto desc = features::describe_cloud(features::load_point_cloud(o.cloud), snap.dictionary->params);
    docs.push_back(features::encode_bow(desc.descriptors, *snap.dictionary, fs::path(o.cloud).filename().string()));
    truth.emplace_back();
  }
  for (const auto& d : docs)
    if (d.empty()) throw InferenceError("cannot classify an empty document ('" + d.source_id() + "')");

  std::ostringstream body;
  std::size_t labelled = 0, hits = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto ans = snap.registry.ask(docs[i]);
    body << (docs[i].source_id().empty() ? "-" : docs[i].source_id()) << ' ' << ans.label.str();
    for (const auto& [label, s] : ans.scores) body << ' ' << label.str() << '=' << fixed6(s);
    body << '\n';
    if (truth[i]) {
      ++labelled;
      hits += ans.label == *truth[i];
    }
  }
  if (labelled) body << "accuracy=" << fixed6(static_cast<double>(hits) / static_cast<double>(labelled)) << '\n';

  OutputGuard guard;
  if (!o.report.empty()) write_text(guard, o.report, [&](std::ostream& f) { f << body.str(); });
  guard.commit();
  out << body.str();
  return 0;
}

// ---------------------------------------------------------------- eval-offline

struct EvalOfflineOptions {
  std::string bow;
  std::string report;
  CorpusFormat format = CorpusFormat::BowText;
  std::size_t folds = 10;
  std::size_t permutations = 10;
  ModelOptions model;
};

inline int cmd_eval_offline(const EvalOfflineOptions& o, std::ostream& out) {
  o.model.hyper.validate();
  if (o.folds < 2) throw ConfigurationError("--folds must be >= 2");
  if (o.permutations < 1) throw ConfigurationError("--permutations must be >= 1");
  require_input(o.bow, "corpus");
  if (!o.report.empty()) require_output(o.report, "report");
  const auto corpus = load_training_corpus(o.bow, o.format);

  const auto r = protocol::run_offline(corpus, o.folds, o.permutations, o.model.hyper, o.model.seed, o.model.inference);
  double var = 0.0;
  for (double a : r.fold_accuracies) var += (a - r.mean_accuracy) * (a - r.mean_accuracy);
  const double sd = r.fold_accuracies.size() > 1 ? std::sqrt(var / static_cast<double>(r.fold_accuracies.size() - 1)) : 0.0;

  std::ostringstream body;
  body << "accuracy=" << fixed6(r.mean_accuracy) << "\naccuracy_sd=" << fixed6(sd) << "\nfolds=" << o.folds
       << "\npermutations=" << o.permutations << '\n';
  OutputGuard guard;
  if (!o.report.empty())
    write_text(guard, o.report, [&](std::ostream& f) {
      f << body.str();
      for (std::size_t i = 0; i < r.fold_accuracies.size(); ++i)
        f << "fold[" << i / o.folds << "][" << i % o.folds << "]=" << fixed6(r.fold_accuracies[i]) << '\n';
    });
  guard.commit();
  out << body.str();
  return 0;
}

// ---------------------------------------------------------------- eval-openended

struct EvalOpenEndedOptions {
  std::string bow;
  std::string out_dir;
  CorpusFormat format = CorpusFormat::BowText;
  protocol::TeacherConfig teacher;
  std::size_t rounds = 1;
  ModelOptions model;
};

struct RoundSummary {
  double mean = 0.0;
  double sd = 0.0;
};

inline RoundSummary summarize(const std::vector<double>& xs) {
  RoundSummary s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    for (double x : xs) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(xs.size() - 1));
  }
  return s;
}

/// Round r runs with teacher seed `seed + r`; rounds execute concurrently.
inline int cmd_eval_openended(const EvalOpenEndedOptions& o, std::ostream& out) {
  o.model.hyper.validate();
  o.teacher.validate();
  if (o.rounds < 1) throw ConfigurationError("--rounds must be >= 1");
  require_input(o.bow, "corpus");
  if (!o.out_dir.empty() && fs::exists(o.out_dir) && !fs::is_directory(o.out_dir))
    throw ConfigurationError("output '" + o.out_dir + "' exists and is not a directory");
  const auto corpus = load_training_corpus(o.bow, o.format);

  std::vector<std::future<protocol::OpenEndedResult>> jobs;
  for (std::size_t r = 0; r < o.rounds; ++r) {
    auto cfg = o.teacher;
    cfg.seed = o.teacher.seed + r;
    jobs.push_back(std::async(std::launch::async, [&corpus, cfg, &o] {
      return protocol::run_open_ended(corpus, cfg, o.model.hyper, o.model.inference);
    }));
  }
  std::vector<protocol::OpenEndedResult> results;
  for (auto& j : jobs) results.push_back(j.get());

  OutputGuard guard;
  if (!o.out_dir.empty()) {
    guard.add(o.out_dir);
    fs::create_directories(o.out_dir);
    for (std::size_t r = 0; r < results.size(); ++r) {
      fs::path dir = o.out_dir;
      if (o.rounds > 1) {
        dir /= "round" + std::to_string(r + 1);
        guard.add(dir);
        fs::create_directories(dir);
      }
      const auto& res = results[r];
      write_text(guard, dir / "metrics.txt",
                 [&](std::ostream& f) { protocol::write_metrics(f, res.metrics, res.trace.reason); });
      write_text(guard, dir / "trace.txt", [&](std::ostream& f) { protocol::write_trace(f, res.trace); });
      write_text(guard, dir / "learning_curve.csv",
                 [&](std::ostream& f) { protocol::write_learning_curve_csv(f, res.trace); });
      write_text(guard, dir / "instances.csv", [&](std::ostream& f) { protocol::write_instances_csv(f, res.trace); });
    }
  }

  std::ostringstream body;
  if (o.rounds == 1) {
    protocol::write_metrics(body, results[0].metrics, results[0].trace.reason);
  } else {
    std::vector<double> qci, lc, aic, gca;
    for (const auto& r : results) {
      qci.push_back(static_cast<double>(r.metrics.qci));
      lc.push_back(static_cast<double>(r.metrics.lc));
      aic.push_back(r.metrics.aic);
      gca.push_back(r.metrics.gca);
    }
    auto line = [&](const char* key, const std::vector<double>& xs) {
      const auto s = summarize(xs);
      body << key << "_mean=" << fixed6(s.mean) << '\n' << key << "_sd=" << fixed6(s.sd) << '\n';
    };
    body << "rounds=" << o.rounds << '\n';
    line("qci", qci);
    line("lc", lc);
    line("aic", aic);
    line("gca", gca);
  }
  if (!o.out_dir.empty())
    write_text(guard, fs::path(o.out_dir) / "summary.txt", [&](std::ostream& f) { f << body.str(); });
  guard.commit();
  out << body.str();
  return 0;
}

// ---------------------------------------------------------------- snapshot-dump

struct SnapshotDumpOptions {
  std::string snapshot;
  std::string out;
};

inline int cmd_snapshot_dump(const SnapshotDumpOptions& o, std::ostream& out) {
  require_input(o.snapshot, "snapshot");
  if (!o.out.empty()) require_output(o.out, "output");
  const auto snap = load_snapshot(o.snapshot);
  OutputGuard guard;
  if (!o.out.empty())
    write_text(guard, o.out, [&](std::ostream& f) { dump_snapshot(f, snap); });
  else
    dump_snapshot(out, snap);
  guard.commit();
  return 0;
}

}  // namespace localhdp::cli
