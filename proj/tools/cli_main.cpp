// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "proctrack/crf.hpp"
#include "proctrack/errors.hpp"
#include "proctrack/gradcheck.hpp"
#include "proctrack/ingest.hpp"
#include "proctrack/metrics.hpp"
#include "proctrack/story.hpp"
#include "proctrack/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace proctrack;

namespace {

// ---- small file utilities ----

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("E_OPEN", "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("E_IO", "cannot write '" + path + "'");
  out << text;
}

uint64_t file_hash(const std::string& path) { return fnv1a(read_text(path)); }

// A dataset file is a story split iff its first line is the attribute
// registry header; everything else is the procedural schema.
std::string sniff_task(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      return json::parse(line).contains("attributes") ? "story" : "procedural";
    } catch (const json::exception& e) {
      throw ValidationError("E_PARSE", path + ":1: " + e.what());
    }
  }
  throw ValidationError("E_PARSE", "'" + path + "' is empty");
}

std::string checkpoint_kind(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", "checkpoint '" + path + "': " + e.what());
  }
  const std::string kind = j.value("kind", "");
  if (kind != "procedural" && kind != "story")
    throw ValidationError("E_PARSE", "checkpoint '" + path + "' has no recognized kind");
  return kind;
}

// ---- run configuration ----

struct RunConfig {
  std::string task = "procedural";
  std::string train, dev, test, pool, out_dir;
  EncoderConfig encoder;
  TrainConfig trainer;       // procedural task
  StoryTrainConfig story;    // story task
  std::string raw;           // verbatim file text, copied into the run dir
};

RunConfig parse_run_config(const std::string& path) {
  RunConfig cfg;
  cfg.raw = read_text(path);
  json j;
  try {
    j = json::parse(cfg.raw);
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", "config '" + path + "': " + e.what());
  }
  static const std::vector<std::string> keys = {"task", "train", "dev",     "test",
                                                "pool", "out_dir", "encoder", "trainer"};
  for (const auto& [key, _] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ValidationError("E_UNKNOWN_KEY", "config '" + path + "': unknown key '" + key + "'");
  cfg.task = j.value("task", cfg.task);
  if (cfg.task != "procedural" && cfg.task != "story")
    throw ValidationError("E_CONFIG", "config '" + path + "': task must be procedural or story");
  cfg.train = j.value("train", "");
  cfg.dev = j.value("dev", "");
  cfg.test = j.value("test", "");
  cfg.pool = j.value("pool", "");
  cfg.out_dir = j.value("out_dir", "");
  if (j.contains("encoder")) cfg.encoder = encoder_config_from_json(j["encoder"].dump());
  if (j.contains("trainer")) {
    if (cfg.task == "procedural")
      cfg.trainer = train_config_from_json(j["trainer"].dump());
    else
      cfg.story = story_train_config_from_json(j["trainer"].dump());
  }
  // The only environment knob: relocate relative run directories under a
  // shared root, e.g. for scratch disks.
  if (const char* root = std::getenv("PROCTRACK_OUT_ROOT");
      root && *root && !cfg.out_dir.empty() && fs::path(cfg.out_dir).is_relative())
    cfg.out_dir = (fs::path(root) / cfg.out_dir).string();
  return cfg;
}

void make_run_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("E_IO", "cannot create run directory '" + dir + "': " + ec.message());
}

// ---- shared prediction/report plumbing ----

ProceduralSplit predict_procedural_split(const ProceduralSplit& data, ProceduralModel& model,
                                         const Ablations& ab, int* skipped) {
  ProceduralSplit out;
  out.name = data.name;
  for (ProceduralExample ex : data.examples) {
    if (ex.entities.empty()) {
      if (skipped) ++*skipped;
    } else {
      ex.entities = predict_example(ex, model, ab);
    }
    out.examples.push_back(std::move(ex));
  }
  out.stats = compute_procedural_stats(out.examples);
  return out;
}

struct ReportText {
  std::string file_json;  // written to --report / the run dir
  std::string tables;     // printed to stdout
};

ReportText procedural_report(const ProceduralSplit& gold, const ProceduralSplit& pred) {
  const SentenceLevelReport s = sentence_level(gold, pred);
  const DocumentLevelReport d = document_level(gold, pred);
  json j;
  j["task"] = "procedural";
  j["sentence_level"] = json::parse(s.to_json());
  j["document_level"] = json::parse(d.to_json());
  return {j.dump(2) + "\n", s.table() + d.table()};
}

ReportText story_report(const StorySplit& gold, const std::vector<StoryPairPrediction>& preds) {
  const StoryReport r = story_metrics(gold, preds);
  json j;
  j["task"] = "story";
  j["story"] = json::parse(r.to_json());
  return {j.dump(2) + "\n", r.table()};
}

// ---- subcommands ----

int cmd_ingest(const std::string& path, std::string task) {
  if (task == "auto") task = sniff_task(path);
  json out;
  out["task"] = task;
  out["path"] = path;
  if (task == "procedural") {
    const ProceduralSplit split = load_procedural_jsonl(path, "check");
    out["paragraphs"] = split.stats.paragraphs;
    out["mean_entities"] = split.stats.mean_entities;
    out["mean_sentences"] = split.stats.mean_sentences;
    out["hash"] = dataset_hash(split.examples);
  } else {
    const StorySplit split = load_story_jsonl(path, "check");
    out["pairs"] = split.pairs.size();
    out["attributes"] = split.attributes.size();
    out["mean_sentences"] = split.stats.mean_sentences;
    out["hash"] = dataset_hash(split);
  }
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  const RunConfig cfg = parse_run_config(config_path);
  if (cfg.train.empty())
    throw ValidationError("E_CONFIG", "config '" + config_path + "': train path is required");
  if (cfg.out_dir.empty())
    throw ValidationError("E_CONFIG", "config '" + config_path + "': out_dir is required");
  make_run_dir(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  write_text((dir / "config.json").string(), cfg.raw);

  json manifest;
  json artifacts;
  std::string tables;

  auto emit = [&](const std::string& split_name, const std::string& pred_file,
                  const ReportText& report) {
    const std::string report_file = "report_" + split_name + ".json";
    write_text((dir / report_file).string(), report.file_json);
    json a;
    a["predictions"] = pred_file;
    a["predictions_hash"] = file_hash((dir / pred_file).string());
    a["report"] = report_file;
    a["report_hash"] = file_hash((dir / report_file).string());
    artifacts[split_name] = std::move(a);
    tables += "== " + split_name + " ==\n" + report.tables;
  };

  if (cfg.task == "procedural") {
    const ProceduralSplit train_split = load_procedural_jsonl(cfg.train, "train");
    ProceduralSplit dev_split;
    if (!cfg.dev.empty()) dev_split = load_procedural_jsonl(cfg.dev, "dev");
    TrainResult res =
        train(train_split, cfg.encoder, cfg.trainer, cfg.dev.empty() ? nullptr : &dev_split);
    res.model.save((dir / "checkpoint.json").string());
    manifest = json::parse(res.manifest);

    std::ostringstream hist;
    for (const auto& st : res.history) {
      json h;
      h["epoch"] = st.epoch;
      h["mean_loss"] = st.mean_loss;
      if (st.action_acc >= 0.0) {
        h["action_acc"] = st.action_acc;
        h["span_acc"] = st.span_acc;
      }
      hist << h.dump() << "\n";
    }
    write_text((dir / "history.jsonl").string(), hist.str());

    auto report_split = [&](const ProceduralSplit& split) {
      const std::string pred_file = "predictions_" + split.name + ".jsonl";
      const ProceduralSplit pred =
          predict_procedural_split(split, res.model, cfg.trainer.ablations, nullptr);
      save_procedural_jsonl(pred.examples, (dir / pred_file).string());
      emit(split.name, pred_file, procedural_report(split, pred));
    };
    report_split(train_split);
    if (!cfg.dev.empty()) report_split(dev_split);
    if (!cfg.test.empty()) report_split(load_procedural_jsonl(cfg.test, "test"));
  } else {
    const StorySplit train_split = load_story_jsonl(cfg.train, "train");
    StorySplit dev_split;
    if (!cfg.dev.empty()) dev_split = load_story_jsonl(cfg.dev, "dev");
    StoryTrainResult res =
        story_train(train_split, cfg.encoder, cfg.story, cfg.dev.empty() ? nullptr : &dev_split);
    res.model.save((dir / "checkpoint.json").string());
    manifest = json::parse(res.manifest);

    std::ostringstream hist;
    for (const auto& st : res.history) {
      json h;
      h["epoch"] = st.epoch;
      h["mean_loss"] = st.mean_loss;
      if (st.accuracy >= 0.0) {
        h["accuracy"] = st.accuracy;
        h["consistency"] = st.consistency;
      }
      hist << h.dump() << "\n";
    }
    write_text((dir / "history.jsonl").string(), hist.str());

    auto report_split = [&](const StorySplit& split) {
      const std::string pred_file = "predictions_" + split.name + ".jsonl";
      const auto preds =
          story_predict_split(split, res.model, cfg.story.ablations, cfg.story.no_crf);
      save_story_predictions(preds, (dir / pred_file).string());
      emit(split.name, pred_file, story_report(split, preds));
    };
    report_split(train_split);
    if (!cfg.dev.empty()) report_split(dev_split);
    if (!cfg.test.empty()) report_split(load_story_jsonl(cfg.test, "test"));
  }

  manifest["task"] = cfg.task;
  manifest["config_copy"] = "config.json";
  manifest["checkpoint"] = "checkpoint.json";
  manifest["checkpoint_hash"] = file_hash((dir / "checkpoint.json").string());
  manifest["history_file"] = "history.jsonl";
  manifest["artifacts"] = std::move(artifacts);
  write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");

  std::cout << tables << "run written to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, const Ablations& ab, bool use_crf) {
  const std::string kind = checkpoint_kind(model_path);
  json summary;
  summary["model"] = model_path;
  summary["out"] = out_path;
  if (kind == "procedural") {
    ProceduralModel model = ProceduralModel::load(model_path);
    const ProceduralSplit data = load_procedural_jsonl(data_path, "predict");
    int skipped = 0;
    const ProceduralSplit pred = predict_procedural_split(data, model, ab, &skipped);
    save_procedural_jsonl(pred.examples, out_path);
    if (skipped > 0)
      std::cerr << "warning: " << skipped << " examples list no entities and pass through\n";
    summary["task"] = "procedural";
    summary["examples"] = pred.examples.size();
    summary["skipped"] = skipped;
  } else {
    StoryModel model = StoryModel::load(model_path);
    const StorySplit data = load_story_jsonl(data_path, "predict");
    const auto preds = story_predict_split(data, model, ab, !use_crf);
    save_story_predictions(preds, out_path);
    summary["task"] = "story";
    summary["pairs"] = preds.size();
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& gold_path, const std::string& pred_path,
             const std::string& report_path) {
  const std::string task = sniff_task(gold_path);
  ReportText report;
  if (task == "procedural") {
    const ProceduralSplit gold = load_procedural_jsonl(gold_path, "gold");
    const ProceduralSplit pred = load_procedural_jsonl(pred_path, "pred");
    report = procedural_report(gold, pred);
  } else {
    const StorySplit gold = load_story_jsonl(gold_path, "gold");
    report = story_report(gold, load_story_predictions(pred_path));
  }
  write_text(report_path, report.file_json);
  std::cout << report.tables;
  return 0;
}

int cmd_augment(const std::string& model_path, const std::string& gold_path,
                const std::string& pool_path, const std::string& out_path, const Ablations& ab) {
  if (checkpoint_kind(model_path) != "procedural")
    throw ValidationError("E_PARSE",
                          "augment needs a procedural checkpoint, got '" + model_path + "'");
  ProceduralModel model = ProceduralModel::load(model_path);
  const ProceduralSplit gold = load_procedural_jsonl(gold_path, "gold");
  const ProceduralSplit pool = load_procedural_jsonl(pool_path, "pool");
  const AugmentResult res = augment(gold, pool, model, ab);
  save_procedural_jsonl(res.mixed.examples, out_path);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";

  json manifest = json::parse(res.manifest);
  manifest["model"] = model_path;
  manifest["model_hash"] = file_hash(model_path);
  manifest["out"] = out_path;
  manifest["out_hash"] = file_hash(out_path);
  write_text(out_path + ".manifest.json", manifest.dump(2) + "\n");

  json summary;
  summary["labeled"] = res.labeled;
  summary["skipped"] = res.skipped;
  summary["mixed_examples"] = res.mixed.examples.size();
  summary["out"] = out_path;
  std::cout << summary.dump() << "\n";
  return 0;
}

// Finite-difference fixtures, one per module. Small enough to run in
// milliseconds, wide enough to cross every backward rule the module uses.
GradCheckReport gradcheck_crf() {
  using A = Action;
  const std::vector<std::vector<Action>> corpus = {
      {A::OutOfCreate, A::Create, A::Exist, A::Move},
      {A::Exist, A::Move, A::Destroy, A::OutOfDestroy},
      {A::Create, A::Move, A::Exist, A::Destroy},
  };
  TransitionMatrix tr = init_prior(corpus);
  const std::vector<int> gold = {static_cast<int>(A::Create), static_cast<int>(A::Move),
                                 static_cast<int>(A::Exist), static_cast<int>(A::Destroy)};
  Rng rng(71);
  Tensor phi = Tensor::uniform({4, tr.labels()}, rng, -1.0, 1.0);
  auto fn = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    TransitionMatrix t = tr;
    t.psi = in[1];
    t.psi.requires_grad = true;
    Tape tape;
    TapeBinding bind(tape);
    Tensor p = in[0];
    p.requires_grad = true;
    const Tape::VarId phi_v = tape.input(std::move(p));
    const Tape::VarId loss = crf_loss(bind, phi_v, t, gold);
    const double value = tape.val(loss).at(0, 0);
    if (grads) {
      tape.backward(loss);
      grads->push_back(tape.grad(phi_v));
      grads->push_back(bind.grad_of(t.psi));
    }
    return value;
  };
  return gradcheck(fn, {phi, tr.psi});
}

GradCheckReport gradcheck_encoder() {
  ProceduralExample ex;
  ex.para_id = "gc";
  ex.sentences = {"water falls on the soil .", "the plant absorbs the water ."};
  TrackedEntity ent;
  ent.name = "water";
  ent.annotated = true;
  ent.timeline.entity = "water";
  ent.timeline.states = {EntityState::location({-1, -1, "soil"}),
                         EntityState::location({-1, -1, "soil"}),
                         EntityState::nonexistence()};
  ent.timeline.actions = derive_actions(ent.timeline.states);
  ex.entities.push_back(ent);

  EncoderConfig cfg;
  cfg.vocab = 24;
  cfg.d = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff = 6;
  cfg.m_max = 32;
  Rng rng(73);
  ProceduralModel model = ProceduralModel::init(
      cfg, init_prior(std::vector<std::vector<Action>>{ent.timeline.actions}), rng);
  const Vocab vocab{cfg.vocab};
  const auto steps = build_entity_steps(ex, "water", vocab, cfg, Ablations{});
  const GoldTargets gold = gold_targets(steps, ent.timeline);
  const TrainConfig tc;

  auto params = model.named_params();
  std::vector<Tensor> point;
  for (auto& [name, t] : params) point.push_back(*t);
  auto fn = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    for (size_t i = 0; i < params.size(); ++i) *params[i].second = in[i];
    Tape tape;
    TapeBinding bind(tape);
    const EntityLoss loss = entity_loss(bind, steps, gold, model, tc);
    const double value = tape.val(loss.total).at(0, 0);
    if (grads) {
      tape.backward(loss.total);
      for (auto& [name, t] : params) grads->push_back(bind.grad_of(*t));
    }
    return value;
  };
  return gradcheck(fn, point);
}

GradCheckReport gradcheck_story() {
  StoryPair pair;
  pair.pair_id = "gc";
  pair.plausible_index = 0;
  pair.conflict_c1 = 1;
  pair.conflict_c2 = 2;
  for (int s = 0; s < 2; ++s) {
    Story& story = pair.stories[s];
    story.sentences = {s == 1 ? "mary drops the cup ." : "mary lifts the cup .",
                       "mary holds the cup ."};
    StoryEntityStates ent;
    ent.name = "cup";
    ent.pre = {{0, 0}, {0, 1}};
    ent.eff = {{1, 0}, {0, 1}};
    story.entities.push_back(std::move(ent));
  }
  EncoderConfig cfg;
  cfg.vocab = 24;
  cfg.d = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff = 6;
  cfg.m_max = 32;
  Rng rng(79);
  StoryModel model = StoryModel::init(
      cfg, {{"x", 2}, {"y", 2}}, {uniform_transitions(2), uniform_transitions(2)},
      {uniform_transitions(2), uniform_transitions(2)}, rng);
  StoryTrainConfig sc;
  sc.no_crf = false;

  auto params = model.named_params();
  std::vector<Tensor> point;
  for (auto& [name, t] : params) point.push_back(*t);
  auto fn = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    for (size_t i = 0; i < params.size(); ++i) *params[i].second = in[i];
    Tape tape;
    TapeBinding bind(tape);
    const Tape::VarId loss = story_loss(bind, pair, model, sc);
    const double value = tape.val(loss).at(0, 0);
    if (grads) {
      tape.backward(loss);
      for (auto& [name, t] : params) grads->push_back(bind.grad_of(*t));
    }
    return value;
  };
  return gradcheck(fn, point);
}

int cmd_gradcheck(const std::string& module) {
  std::vector<std::pair<std::string, GradCheckReport (*)()>> suites;
  if (module == "all" || module == "crf") suites.emplace_back("crf", gradcheck_crf);
  if (module == "all" || module == "encoder") suites.emplace_back("encoder", gradcheck_encoder);
  if (module == "all" || module == "story") suites.emplace_back("story", gradcheck_story);
  bool ok = true;
  std::vector<std::string> failed;
  for (const auto& [name, run] : suites) {
    const GradCheckReport rep = run();
    json j;
    j["module"] = name;
    j["pass"] = rep.pass;
    j["checked"] = rep.checked;
    j["max_rel_err"] = rep.max_rel_err;
    std::cout << j.dump() << "\n";
    if (!rep.pass) {
      ok = false;
      failed.push_back(name + ": " + rep.to_string());
    }
  }
  if (!ok) {
    std::string what = "gradients diverge from finite differences";
    for (const auto& f : failed) what += "; " + f;
    throw NumericError("E_GRADCHECK", what);
  }
  return 0;
}

int cmd_synth(const std::string& task, int paragraphs, int pairs, uint64_t seed,
              double unannotated, const std::string& out_path) {
  json summary;
  summary["task"] = task;
  summary["out"] = out_path;
  if (task == "procedural") {
    SynthProceduralConfig cfg;
    cfg.paragraphs = paragraphs;
    cfg.unannotated_fraction = unannotated;
    cfg.seed = seed;
    const ProceduralSplit split = synth_procedural(cfg, "synth");
    save_procedural_jsonl(split.examples, out_path);
    summary["paragraphs"] = split.examples.size();
    summary["hash"] = dataset_hash(split.examples);
  } else {
    SynthStoryConfig cfg;
    cfg.pairs = pairs;
    cfg.seed = seed;
    const StorySplit split = synth_story(cfg, "synth");
    save_story_jsonl(split, out_path);
    summary["pairs"] = split.pairs.size();
    summary["hash"] = dataset_hash(split);
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale procedural text understanding toolkit"};
  app.require_subcommand(1);

  std::string ingest_path, ingest_task = "auto";
  auto* ing = app.add_subcommand("ingest", "parse and validate a dataset file");
  ing->add_option("--check", ingest_path, "dataset to validate")->required();
  ing->add_option("--task", ingest_task, "procedural|story (default: sniff the file)")
      ->check(CLI::IsMember({"auto", "procedural", "story"}));

  std::string train_config;
  auto* trn = app.add_subcommand("train", "run training from a config file");
  trn->add_option("--config", train_config, "run configuration JSON")->required();

  std::string pred_model, pred_data, pred_out;
  Ablations pred_ab;
  bool pred_crf = false;
  auto* prd = app.add_subcommand("predict", "label a dataset with a trained checkpoint");
  prd->add_option("--model", pred_model, "checkpoint path")->required();
  prd->add_option("--data", pred_data, "dataset to label")->required();
  prd->add_option("--out", pred_out, "output JSONL path")->required();
  prd->add_flag("--no-t", pred_ab.no_t, "drop timestep embeddings");
  prd->add_flag("--no-e", pred_ab.no_e, "drop entity marking");
  prd->add_flag("--no-gc", pred_ab.no_gc, "encode only sentences up to each step");
  prd->add_flag("--no-go", pred_ab.no_go, "per-step argmax instead of Viterbi (procedural)");
  prd->add_flag("--crf", pred_crf, "Viterbi attribute decoding (story; default argmax)");

  std::string eval_gold, eval_pred, eval_report;
  auto* evl = app.add_subcommand("eval", "score predictions against gold annotations");
  evl->add_option("--gold", eval_gold, "gold dataset")->required();
  evl->add_option("--pred", eval_pred, "predictions JSONL")->required();
  evl->add_option("--report", eval_report, "report JSON output path")->required();

  std::string aug_model, aug_gold, aug_pool, aug_out;
  Ablations aug_ab;
  auto* aug = app.add_subcommand("augment", "pseudo-label a pool and mix it with gold data");
  aug->add_option("--model", aug_model, "procedural checkpoint")->required();
  aug->add_option("--gold", aug_gold, "gold training split")->required();
  aug->add_option("--pool", aug_pool, "unannotated pool")->required();
  aug->add_option("--out", aug_out, "mixed output JSONL")->required();
  aug->add_flag("--no-t", aug_ab.no_t, "drop timestep embeddings");
  aug->add_flag("--no-e", aug_ab.no_e, "drop entity marking");
  aug->add_flag("--no-gc", aug_ab.no_gc, "encode only sentences up to each step");
  aug->add_flag("--no-go", aug_ab.no_go, "per-step argmax instead of Viterbi");

  std::string gc_module = "all";
  auto* gck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gck->add_option("--module", gc_module, "all|crf|encoder|story")
      ->check(CLI::IsMember({"all", "crf", "encoder", "story"}));

  std::string synth_task = "procedural", synth_out;
  int synth_paragraphs = 8, synth_pairs = 8;
  uint64_t synth_seed = 1;
  double synth_unannotated = 0.0;
  auto* syn = app.add_subcommand("synth", "emit a synthetic desk-scale corpus");
  syn->add_option("--task", synth_task, "procedural|story")
      ->check(CLI::IsMember({"procedural", "story"}));
  syn->add_option("--paragraphs", synth_paragraphs, "paragraph count (procedural)");
  syn->add_option("--pairs", synth_pairs, "pair count (story)");
  syn->add_option("--seed", synth_seed, "generator seed");
  syn->add_option("--unannotated", synth_unannotated,
                  "tail fraction emitted without gold states (procedural)");
  syn->add_option("--out", synth_out, "output JSONL path")->required();

  try {
    app.parse(argc, argv);
    if (*ing) return cmd_ingest(ingest_path, ingest_task);
    if (*trn) return cmd_train(train_config);
    if (*prd) return cmd_predict(pred_model, pred_data, pred_out, pred_ab, pred_crf);
    if (*evl) return cmd_eval(eval_gold, eval_pred, eval_report);
    if (*aug) return cmd_augment(aug_model, aug_gold, aug_pool, aug_out, aug_ab);
    if (*gck) return cmd_gradcheck(gc_module);
    if (*syn)
      return cmd_synth(synth_task, synth_paragraphs, synth_pairs, synth_seed, synth_unannotated,
                       synth_out);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::validation);
  } catch (const Error& e) {
    json err;
    err["error"] = e.code();
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    json err;
    err["error"] = "E_INTERNAL";
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return static_cast<int>(ExitCode::numeric);
  }
}
