#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"

using namespace localhdp;
using namespace localhdp::cli;

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("localhdp");
  logger->set_pattern("localhdp: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("LOCALHDP_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

void add_model_flags(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--max-topics,-K", m.hyper.max_topics, "Corpus-level topic truncation")->capture_default_str();
  cmd->add_option("--max-tables,-T", m.hyper.max_tables, "Document-level table truncation")->capture_default_str();
  cmd->add_option("--gamma", m.hyper.gamma_top, "Top-level concentration")->capture_default_str();
  cmd->add_option("--alpha0", m.hyper.alpha0, "Document-level concentration")->capture_default_str();
  cmd->add_option("--eta", m.hyper.eta, "Topic Dirichlet prior")->capture_default_str();
  cmd->add_option("--tau0", m.hyper.tau0, "Learning-rate delay")->capture_default_str();
  cmd->add_option("--kappa", m.hyper.kappa, "Learning-rate forgetting rate")->capture_default_str();
  cmd->add_option("--tol", m.inference.tol, "Relative bound change that stops inference")->capture_default_str();
  cmd->add_option("--max-iters", m.inference.max_iters, "Inference iteration cap")->capture_default_str();
  cmd->add_option("--seed", m.seed, "Random seed")->capture_default_str();
}

CLI::Option* add_format(CLI::App* cmd, std::string& fmt) {
  return cmd->add_option("--format", fmt, "Corpus format: bow-text or bow-binary")
      ->check(CLI::IsMember({"bow-text", "bow-binary"}))
      ->capture_default_str();
}

struct FeatureFlags {
  features::FeatureParams params;
  std::vector<CLI::Option*> opts;

  void add(CLI::App* cmd) {
    opts.push_back(cmd->add_option("--voxel-size", params.voxel_size, "Keypoint voxel size")->capture_default_str());
    opts.push_back(cmd->add_option("--image-width", params.image_width, "Spin image width in bins")->capture_default_str());
    opts.push_back(cmd->add_option("--support-length", params.support_length, "Spin image support")->capture_default_str());
  }
  bool any_given() const {
    for (auto* o : opts)
      if (o->count()) return true;
    return false;
  }
};

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Open-ended 3D object category learning with local HDP models"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML or INI file; options go under a [subcommand] section");

  std::string fmt = "bow-text";

  BuildDictOptions bd;
  FeatureFlags bd_features;
  auto* c_bd = app.add_subcommand("build-dict", "Cluster spin images into a visual-word dictionary");
  c_bd->add_option("--clouds", bd.clouds, "Directory of point clouds")->required();
  c_bd->add_option("--words,-V", bd.words, "Dictionary size")->required();
  c_bd->add_option("--out", bd.out, "Dictionary file")->required();
  c_bd->add_option("--seed", bd.seed, "Random seed")->capture_default_str();
  bd_features.add(c_bd);

  EncodeOptions en;
  FeatureFlags en_features;
  auto* c_en = app.add_subcommand("encode", "Encode point clouds as bag-of-words documents");
  c_en->add_option("--clouds", en.clouds, "Point cloud file or directory")->required();
  c_en->add_option("--dict", en.dict, "Dictionary file")->required();
  c_en->add_option("--out", en.out, "Corpus file")->required();
  add_format(c_en, fmt);
  en_features.add(c_en);

  TrainOptions tr;
  auto* c_tr = app.add_subcommand("train", "Teach every document of a corpus and save a snapshot");
  c_tr->add_option("--bow", tr.bow, "Corpus file")->required();
  c_tr->add_option("--snapshot", tr.snapshot, "Snapshot file to write")->required();
  c_tr->add_option("--dict", tr.dict, "Dictionary to embed in the snapshot");
  add_format(c_tr, fmt);
  add_model_flags(c_tr, tr.model);

  ClassifyOptions cl;
  auto* c_cl = app.add_subcommand("classify", "Classify documents with a saved snapshot");
  c_cl->add_option("--snapshot", cl.snapshot, "Snapshot file")->required();
  c_cl->add_option("--bow", cl.bow, "Corpus file");
  c_cl->add_option("--cloud", cl.cloud, "Single point cloud");
  c_cl->add_option("--report", cl.report, "Also write predictions here");
  add_format(c_cl, fmt);

  EvalOfflineOptions eo;
  auto* c_eo = app.add_subcommand("eval-offline", "Repeated stratified k-fold evaluation");
  c_eo->add_option("--bow", eo.bow, "Corpus file")->required();
  c_eo->add_option("--folds", eo.folds, "Folds per permutation")->capture_default_str();
  c_eo->add_option("--permutations", eo.permutations, "Shuffled repetitions")->capture_default_str();
  c_eo->add_option("--report", eo.report, "Per-fold report file");
  add_format(c_eo, fmt);
  add_model_flags(c_eo, eo.model);

  EvalOpenEndedOptions oe;
  auto* c_oe = app.add_subcommand("eval-openended", "Simulated-teacher open-ended evaluation");
  c_oe->add_option("--bow", oe.bow, "Corpus file")->required();
  c_oe->add_option("--rounds", oe.rounds, "Independent rounds, seeds seed..seed+rounds-1")->capture_default_str();
  c_oe->add_option("--out-dir", oe.out_dir, "Directory for traces and metrics");
  c_oe->add_option("--tau", oe.teacher.tau, "Protocol accuracy threshold")->capture_default_str();
  c_oe->add_option("--window-factor", oe.teacher.window_factor, "Window length per category")->capture_default_str();
  c_oe->add_option("--teach-views", oe.teacher.teach_views, "Views taught per new category")->capture_default_str();
  c_oe->add_option("--patience", oe.teacher.patience, "Failed window checks before stopping")->capture_default_str();
  add_format(c_oe, fmt);
  add_model_flags(c_oe, oe.model);

  SnapshotDumpOptions sd;
  auto* c_sd = app.add_subcommand("snapshot-dump", "Print a snapshot as text");
  c_sd->add_option("--snapshot", sd.snapshot, "Snapshot file")->required();
  c_sd->add_option("--out", sd.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "localhdp: error: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto format = parse_corpus_format(fmt);
    if (c_bd->parsed()) {
      bd.params = bd_features.params;
      return cmd_build_dict(bd, std::cout);
    }
    if (c_en->parsed()) {
      en.format = format;
      if (en_features.any_given()) en.params = en_features.params;
      return cmd_encode(en, std::cout);
    }
    if (c_tr->parsed()) {
      tr.format = format;
      return cmd_train(tr, std::cout);
    }
    if (c_cl->parsed()) {
      cl.format = format;
      return cmd_classify(cl, std::cout);
    }
    if (c_eo->parsed()) {
      eo.format = format;
      return cmd_eval_offline(eo, std::cout);
    }
    if (c_oe->parsed()) {
      oe.format = format;
      oe.teacher.seed = oe.model.seed;
      return cmd_eval_openended(oe, std::cout);
    }
    if (c_sd->parsed()) return cmd_snapshot_dump(sd, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "localhdp: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
