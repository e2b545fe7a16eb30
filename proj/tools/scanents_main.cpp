// Command line front end: corpus generation, dataset analysis, training,
// evaluation and the anchor knockout experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "scanents/corpus_stats.hpp"
#include "scanents/harness.hpp"
#include "scanents/metrics.hpp"

namespace fs = std::filesystem;
using namespace scanents;

namespace {

constexpr int kExitValidation = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

TrainConfig load_train_config(const std::string& config_path, uint64_t seed,
                              const std::string& aux) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = train_config_from_json(read_file(config_path));
  cfg.seed = seed;
  if (!aux.empty()) cfg.aux = AuxFlags::parse(aux);
  return cfg;
}

int run_generate(const std::string& config_path, uint64_t seed, const std::string& out_dir,
                 double split) {
  GenConfig cfg;
  if (!config_path.empty()) cfg = gen_config_from_json(read_file(config_path));
  cfg.seed = seed;
  const Corpus corpus = generate_corpus(cfg);
  save_corpus(corpus, out_dir);
  if (split > 0.0 && split < 1.0) {
    auto [train_idx, test_idx] = split_by_scene(corpus, split);
    auto dump = [&](const std::vector<int>& idx, const std::string& name) {
      std::vector<GroundedUtterance> subset;
      for (int i : idx) subset.push_back(corpus.utterances[i]);
      std::ofstream out(fs::path(out_dir) / name);
      if (!out) throw IoError("cannot write " + name + " under " + out_dir);
      serialize_annotations(subset, out);
    };
    dump(train_idx, "annotations_train.jsonl");
    dump(test_idx, "annotations_test.jsonl");
  }
  std::cout << "generated " << corpus.scenes.size() << " scenes, " << corpus.utterances.size()
            << " utterances -> " << out_dir << "\n";
  return 0;
}

int run_stats(const std::string& annotations, const std::string& scenes,
              const std::string& out_dir) {
  const Corpus corpus = load_corpus(annotations, scenes);
  const CorpusStats stats = compute_stats(corpus.utterances, corpus.scene_map());
  emit_report(stats, out_dir);
  std::cout << stats_to_json(stats) << "\n";
  return 0;
}

int run_relations(const std::string& annotations, const std::string& scenes,
                  const std::string& out_path) {
  const Corpus corpus = load_corpus(annotations, scenes);
  const auto scene_map = corpus.scene_map();
  fs::create_directories(fs::path(out_path).parent_path());
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  long total = 0;
  for (const auto& u : corpus.utterances) {
    for (const auto& ri :
         extract_relations(u, scene_map.at(u.scene_id), default_viewpoint())) {
      out << serialize_relation_instance(ri, u.id) << "\n";
      ++total;
    }
  }
  std::cout << "extracted " << total << " relation instances -> " << out_path << "\n";
  return 0;
}

int run_train(const std::string& kind, const std::string& annotations,
              const std::string& scenes, const std::string& config_path, uint64_t seed,
              const std::string& aux, const std::string& init_from_listener,
              const std::string& out_dir) {
  const Corpus corpus = load_corpus(annotations, scenes);
  const TrainConfig cfg = load_train_config(config_path, seed, aux);
  const auto indices = all_indices(corpus);
  CheckpointData ckpt;
  TrainReport report;
  if (kind == "listener") {
    TrainedListener trained = train_listener(corpus, indices, cfg);
    ckpt = listener_to_checkpoint(*trained.model);
    report = trained.report;
  } else {
    CheckpointData init;
    const CheckpointData* init_ptr = nullptr;
    if (!init_from_listener.empty()) {
      init = load_checkpoint(init_from_listener);
      init_ptr = &init;
    }
    TrainedSpeaker trained = train_speaker(corpus, indices, cfg, init_ptr);
    ckpt = speaker_to_checkpoint(*trained.model);
    report = trained.report;
  }
  fs::create_directories(out_dir);
  save_checkpoint(ckpt, (fs::path(out_dir) / "checkpoint.json").string());
  write_file(fs::path(out_dir) / "train_report.json", train_report_to_json(report));
  std::cout << "final loss " << report.final_loss << " -> " << out_dir << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& annotations,
             const std::string& scenes, const std::string& out_dir) {
  const Corpus corpus = load_corpus(annotations, scenes);
  const CheckpointData ckpt = load_checkpoint(checkpoint);
  auto model = listener_from_checkpoint(ckpt);
  EvalReport report = evaluate(*model, corpus, all_indices(corpus));
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "eval_report.json", eval_report_to_json(report));
  write_file(fs::path(out_dir) / "eval_report.csv", eval_report_to_csv(report));
  std::cout << eval_report_to_json(report) << "\n";
  return 0;
}

int run_knockout(const std::string& checkpoint, const std::string& annotations,
                 const std::string& scenes, const std::string& mode,
                 const std::string& out_dir) {
  const Corpus corpus = load_corpus(annotations, scenes);
  const CheckpointData ckpt = load_checkpoint(checkpoint);
  auto model = listener_from_checkpoint(ckpt);
  const auto indices = all_indices(corpus);

  EvalReport report = evaluate(*model, corpus, indices);
  std::vector<KnockoutMode> modes;
  if (mode == "all") {
    modes = {KnockoutMode::kLesionAnchorObjects, KnockoutMode::kLesionAnchorWords,
             KnockoutMode::kAnchorsOnly};
  } else {
    modes = {knockout_mode_from_name(mode)};
  }
  for (KnockoutMode m : modes)
    report.knockout[knockout_mode_name(m)] = knockout(*model, corpus, indices, m);
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "knockout_report.json", eval_report_to_json(report));
  std::cout << eval_report_to_json(report) << "\n";
  return 0;
}

int run_gradcheck(uint64_t seed, int instances) {
  const GradCheckReport report = gradcheck_all(seed, instances);
  std::cout << gradcheck_report_to_json(report) << "\n";
  return report.all_pass ? 0 : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phrase-to-3D-object grounding toolkit"};
  app.require_subcommand(1);

  std::string config_path, annotations, scenes, out_dir = "out", checkpoint, aux;
  std::string mode = "all", init_from_listener, out_path = "relations.jsonl";
  uint64_t seed = 0;
  int instances = 3;
  double split = 0.0;

  auto* generate = app.add_subcommand("generate", "generate a synthetic corpus");
  generate->add_option("--config", config_path, "generator config JSON");
  generate->add_option("--seed", seed, "generation seed");
  generate->add_option("--out", out_dir, "output directory");
  generate->add_option("--split", split, "also write train/test annotation files");

  auto* stats = app.add_subcommand("stats", "corpus statistics");
  stats->add_option("--annotations", annotations, "annotations JSONL")->required();
  stats->add_option("--scenes", scenes, "scene file or directory")->required();
  stats->add_option("--out", out_dir, "output directory");

  auto* relations = app.add_subcommand("relations", "extract pairwise spatial relations");
  relations->add_option("--annotations", annotations, "annotations JSONL")->required();
  relations->add_option("--scenes", scenes, "scene file or directory")->required();
  relations->add_option("--out", out_path, "output JSONL path");

  auto* train_l = app.add_subcommand("train-listener", "train the neural listener");
  train_l->add_option("--annotations", annotations, "annotations JSONL")->required();
  train_l->add_option("--scenes", scenes, "scene file or directory")->required();
  train_l->add_option("--config", config_path, "train config JSON");
  train_l->add_option("--seed", seed, "training seed");
  train_l->add_option("--aux", aux, "auxiliary losses, e.g. anc,attn,dis,rel");
  train_l->add_option("--out", out_dir, "output directory");

  auto* train_s = app.add_subcommand("train-speaker", "train the neural speaker");
  train_s->add_option("--annotations", annotations, "annotations JSONL")->required();
  train_s->add_option("--scenes", scenes, "scene file or directory")->required();
  train_s->add_option("--config", config_path, "train config JSON");
  train_s->add_option("--seed", seed, "training seed");
  train_s->add_option("--aux", aux, "auxiliary losses, e.g. ent,men");
  train_s->add_option("--init-from-listener", init_from_listener,
                      "listener checkpoint for the object encoder");
  train_s->add_option("--out", out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "evaluate a listener checkpoint");
  eval->add_option("--checkpoint", checkpoint, "listener checkpoint")->required();
  eval->add_option("--annotations", annotations, "annotations JSONL")->required();
  eval->add_option("--scenes", scenes, "scene file or directory")->required();
  eval->add_option("--out", out_dir, "output directory");

  auto* knock = app.add_subcommand("knockout", "anchor lesioning experiments");
  knock->add_option("--checkpoint", checkpoint, "listener checkpoint")->required();
  knock->add_option("--annotations", annotations, "annotations JSONL")->required();
  knock->add_option("--scenes", scenes, "scene file or directory")->required();
  knock->add_option("--mode", mode,
                    "lesion-anchor-objects | lesion-anchor-words | anchors-only | all");
  knock->add_option("--out", out_dir, "output directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--seed", seed, "random seed");
  gradcheck->add_option("--instances", instances, "instances per loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return run_generate(config_path, seed, out_dir, split);
    if (stats->parsed()) return run_stats(annotations, scenes, out_dir);
    if (relations->parsed()) return run_relations(annotations, scenes, out_path);
    if (train_l->parsed())
      return run_train("listener", annotations, scenes, config_path, seed, aux, "", out_dir);
    if (train_s->parsed())
      return run_train("speaker", annotations, scenes, config_path, seed, aux,
                       init_from_listener, out_dir);
    if (eval->parsed()) return run_eval(checkpoint, annotations, scenes, out_dir);
    if (knock->parsed()) return run_knockout(checkpoint, annotations, scenes, mode, out_dir);
    if (gradcheck->parsed()) return run_gradcheck(seed, instances);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
