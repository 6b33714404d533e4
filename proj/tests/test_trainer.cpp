// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>

#include "proctrack/errors.hpp"
#include "proctrack/gradcheck.hpp"
#include "proctrack/trainer.hpp"

using namespace proctrack;

namespace {

EntityState loc(const std::string& text) { return EntityState::location({-1, -1, text}); }

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.vocab = 64;
  cfg.d = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff = 12;
  cfg.m_max = 64;
  return cfg;
}

ProceduralExample leaf_example() {
  ProceduralExample ex;
  ex.para_id = "leaf";
  ex.sentences = {"the water is in the soil .", "water moves to the leaf .",
                  "the water disappears ."};
  TrackedEntity ent;
  ent.name = "water";
  ent.timeline.entity = "water";
  ent.timeline.states = {
      loc("soil"),
      loc("soil"),
      loc("leaf"),
      EntityState::nonexistence(),
  };
  ent.timeline.actions = derive_actions(ent.timeline.states);
  ex.entities.push_back(ent);
  return ex;
}

ProceduralSplit small_corpus(int paragraphs, uint64_t seed) {
  SynthProceduralConfig cfg;
  cfg.paragraphs = paragraphs;
  cfg.seed = seed;
  return synth_procedural(cfg, "train");
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/proctrack_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("Adam drives a quadratic to its minimum and validates inputs") {
  Tensor x = Tensor::from({1, 1}, {1.0});
  Adam opt({{"x", &x}}, 0.05);
  for (int i = 0; i < 400; ++i) {
    Tensor g = Tensor::from({1, 1}, {2.0 * x.at(0, 0)});
    opt.step({g});
  }
  CHECK(std::abs(x.at(0, 0)) < 1e-3);
  CHECK(opt.steps_taken() == 400);
  CHECK_THROWS_AS(opt.step({}), ValidationError);
  CHECK_THROWS_AS(opt.step({Tensor::zeros({2, 2})}), ValidationError);
}

TEST_CASE("accumulated micro-batch gradients match one summed update") {
  Rng rng(5);
  Tensor a1 = Tensor::uniform({3, 2}, rng);
  Tensor a2 = a1;
  Tensor g1 = Tensor::uniform({3, 2}, rng);
  Tensor g2 = Tensor::uniform({3, 2}, rng);

  Adam opt_sum({{"a", &a1}}, 1e-2);
  Tensor summed = Tensor::zeros({3, 2});
  for (size_t k = 0; k < summed.data.size(); ++k) summed.data[k] = g1.data[k] + g2.data[k];
  opt_sum.step({summed});

  // the training loop's accumulate-then-step pattern
  Adam opt_acc({{"a", &a2}}, 1e-2);
  Tensor accum = Tensor::zeros({3, 2});
  for (const Tensor* g : {&g1, &g2})
    for (size_t k = 0; k < accum.data.size(); ++k) accum.data[k] += g->data[k];
  opt_acc.step({accum});

  for (size_t k = 0; k < a1.data.size(); ++k)
    CHECK(a1.data[k] == doctest::Approx(a2.data[k]).epsilon(1e-9));
}

TEST_CASE("gold targets point at location mentions and fall back to [CLS]") {
  const ProceduralExample ex = leaf_example();
  const EncoderConfig cfg = tiny_config();
  const Vocab vocab{cfg.vocab};
  const auto steps = build_entity_steps(ex, "water", vocab, cfg, Ablations{});
  const auto& tl = ex.entities[0].timeline;
  GoldTargets g = gold_targets(steps, tl);

  REQUIRE(g.starts.size() == 4);
  CHECK(g.actions == std::vector<int>{static_cast<int>(Action::Exist),
                                      static_cast<int>(Action::Move),
                                      static_cast<int>(Action::Destroy)});
  CHECK(g.span_misses == 0);
  // soil and leaf are single tokens, so start == end, inside the paragraph
  for (int t = 0; t < 3; ++t) {
    CHECK(g.starts[t] == g.ends[t]);
    CHECK(g.starts[t] >= steps[t].para_begin);
    CHECK(steps[t].surface[g.starts[t]] == (t < 2 ? "soil" : "leaf"));
  }
  CHECK(g.starts[3] == 0);  // nonexistence -> [CLS]
  CHECK(g.ends[3] == 0);

  SUBCASE("a location absent from the text falls back to [CLS]") {
    EntityTimeline odd = tl;
    odd.states[1] = loc("nowhere");
    GoldTargets g2 = gold_targets(steps, odd);
    CHECK(g2.span_misses == 1);
    CHECK(g2.starts[1] == 0);
  }
  SUBCASE("state count mismatch is a missing-gold error") {
    EntityTimeline bad = tl;
    bad.states.pop_back();
    try {
      gold_targets(steps, bad);
      FAIL_CHECK("expected E_MISSING_GOLD");
    } catch (const ValidationError& e) {
      CHECK(e.code() == "E_MISSING_GOLD");
    }
  }
}

TEST_CASE("zero-weight model yields the closed-form uniform loss") {
  // [CLS] where is x [SEP] a b c . [SEP] -> exactly 10 tokens
  ProceduralExample ex;
  ex.para_id = "uniform";
  ex.sentences = {"a b c ."};
  TrackedEntity ent;
  ent.name = "x";
  ent.timeline.entity = "x";
  ent.timeline.states = {EntityState::nonexistence(), EntityState::nonexistence()};
  ent.timeline.actions = {Action::OutOfCreate};
  ex.entities.push_back(ent);

  EncoderConfig cfg = tiny_config();
  Rng rng(3);
  ProceduralModel model = ProceduralModel::init(cfg, uniform_transitions(kActionCount), rng);
  for (auto& [name, t] : model.named_params())
    std::fill(t->data.begin(), t->data.end(), 0.0);

  const Vocab vocab{cfg.vocab};
  const auto steps = build_entity_steps(ex, "x", vocab, cfg, Ablations{});
  REQUIRE(steps[0].m() == 10);
  const GoldTargets gold = gold_targets(steps, ent.timeline);

  Tape tape;
  TapeBinding bind(tape);
  TrainConfig tc;
  const EntityLoss loss = entity_loss(bind, steps, gold, model, tc);
  // uniform start/end over 10 tokens at both steps; uniform CRF over 6 actions
  CHECK(tape.val(loss.loc).at(0, 0) == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-12));
  CHECK(tape.val(loss.action).at(0, 0) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(tape.val(loss.total).at(0, 0) ==
        doctest::Approx(2.0 * std::log(10.0) + std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("joint loss gradients pass finite differences on a two-sentence fixture") {
  ProceduralExample ex;
  ex.para_id = "fd";
  ex.sentences = {"water appears in the soil .", "water moves to the leaf ."};
  TrackedEntity ent;
  ent.name = "water";
  ent.timeline.entity = "water";
  ent.timeline.states = {EntityState::nonexistence(), loc("soil"),
                         loc("leaf")};
  ent.timeline.actions = derive_actions(ent.timeline.states);
  ex.entities.push_back(ent);

  EncoderConfig cfg;
  cfg.vocab = 24;
  cfg.d = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff = 6;
  cfg.m_max = 32;
  Rng rng(11);
  std::vector<std::vector<Action>> corpus = {ent.timeline.actions,
                                             {Action::Create, Action::Exist, Action::Destroy}};
  ProceduralModel model = ProceduralModel::init(cfg, init_prior(corpus), rng);

  const Vocab vocab{cfg.vocab};
  const auto steps = build_entity_steps(ex, "water", vocab, cfg, Ablations{});
  const GoldTargets gold = gold_targets(steps, ent.timeline);
  TrainConfig tc;

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
  GradCheckReport report = gradcheck(fn, point, GradCheckOptions{});
  CHECK(report.checked > 200);
  CHECK_MESSAGE(report.pass, report.to_string());
  for (size_t i = 0; i < params.size(); ++i) *params[i].second = point[i];
}

TEST_CASE("training overfits a small corpus and logs its trajectory") {
  ProceduralSplit split = small_corpus(3, 21);
  EncoderConfig enc = tiny_config();
  enc.d = 16;
  enc.ff = 32;
  TrainConfig tc;
  tc.epochs = 120;
  tc.lr = 3e-3;
  tc.seed = 9;
  tc.eval_every = 20;
  TrainResult res = train(split, enc, tc);

  REQUIRE(res.history.size() > 1);
  CHECK(res.history.back().mean_loss < res.history.front().mean_loss);
  CHECK(res.epochs_run == 120);
  CHECK(res.history.back().action_acc >= 0.0);
  const FitStats fit = fit_stats(split, res.model, tc.ablations);
  CHECK(fit.action_acc > 0.6);
  CHECK(res.manifest.find("train_run") != std::string::npos);
  CHECK(res.manifest.find("data_hash") != std::string::npos);
}

TEST_CASE("same seed reproduces bit-identical parameters and manifests") {
  ProceduralSplit split = small_corpus(2, 33);
  EncoderConfig enc = tiny_config();
  TrainConfig tc;
  tc.epochs = 3;
  tc.eval_every = 0;
  tc.seed = 123;
  TrainResult a = train(split, enc, tc);
  TrainResult b = train(split, enc, tc);
  auto pa = a.model.named_params();
  auto pb = b.model.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);
  CHECK(a.manifest == b.manifest);

  TrainConfig other = tc;
  other.seed = 124;
  TrainResult c = train(split, enc, other);
  bool any_diff = false;
  auto pc = c.model.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    any_diff = any_diff || pa[i].second->data != pc[i].second->data;
  CHECK(any_diff);
}

TEST_CASE("config validation rejects degenerate settings") {
  ProceduralSplit split = small_corpus(1, 2);
  EncoderConfig enc = tiny_config();
  TrainConfig tc;
  tc.epochs = 0;
  CHECK_THROWS_AS(train(split, enc, tc), ValidationError);
  tc = TrainConfig{};
  tc.grad_accum = 0;
  CHECK_THROWS_AS(train(split, enc, tc), ValidationError);
  tc = TrainConfig{};
  tc.lr = 0.0;
  CHECK_THROWS_AS(train(split, enc, tc), ValidationError);
  ProceduralSplit empty;
  empty.name = "empty";
  tc = TrainConfig{};
  CHECK_THROWS_AS(train(empty, enc, tc), ValidationError);
}

TEST_CASE("prediction yields schema-legal timelines across random models") {
  ProceduralSplit split = small_corpus(4, 7);
  std::vector<std::vector<Action>> corpus;
  for (const auto& ex : split.examples)
    for (const auto& ent : ex.entities) corpus.push_back(ent.timeline.actions);
  EncoderConfig enc = tiny_config();

  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    ProceduralModel model = ProceduralModel::init(enc, init_prior(corpus), rng);
    for (const auto& ex : split.examples) {
      for (const auto& ent : ex.entities) {
        EntityTimeline tl = predict_entity(ex, ent.name, model, Ablations{});
        CHECK_NOTHROW(validate_timeline(tl));
        CHECK(tl.actions == derive_actions(tl.states));
      }
    }
  }
}

TEST_CASE("no_go prediction never touches Viterbi and uses per-step argmax") {
  ProceduralSplit split = small_corpus(2, 77);
  std::vector<std::vector<Action>> corpus;
  for (const auto& ex : split.examples)
    for (const auto& ent : ex.entities) corpus.push_back(ent.timeline.actions);
  Rng rng(4);
  ProceduralModel model = ProceduralModel::init(tiny_config(), init_prior(corpus), rng);

  Ablations no_go;
  no_go.no_go = true;
  reset_viterbi_calls();
  for (const auto& ex : split.examples)
    for (const auto& ent : ex.entities) predict_entity(ex, ent.name, model, no_go);
  CHECK(viterbi_calls() == 0);

  // the same inputs do call Viterbi on the default path
  predict_entity(split.examples[0], split.examples[0].entities[0].name, model, Ablations{});
  CHECK(viterbi_calls() == 1);

  // argmax semantics: each decoded action maximizes its emission row
  const auto& ex = split.examples[0];
  const auto& ent = ex.entities[0];
  const Vocab vocab{model.enc.cfg.vocab};
  const auto steps = build_entity_steps(ex, ent.name, vocab, model.enc.cfg, no_go);
  const EntityForward fwd = forward_entity(steps, model, false);
  const std::vector<int> raw = decode_actions(fwd, model, true);
  REQUIRE(static_cast<int>(raw.size()) == fwd.phi.shape[0]);
  for (size_t t = 0; t < raw.size(); ++t)
    for (int a = 0; a < kActionCount; ++a)
      CHECK(fwd.phi.at(static_cast<int>(t), raw[t]) >= fwd.phi.at(static_cast<int>(t), a));

  // the assembled timeline stays schema-consistent even off the argmax path
  const EntityTimeline tl = predict_entity(ex, ent.name, model, no_go);
  CHECK(tl.actions == derive_actions(tl.states));
}

TEST_CASE("augmentation labels the pool, flags it, and switches epochs") {
  ProceduralSplit gold = small_corpus(3, 41);
  SynthProceduralConfig pool_cfg;
  pool_cfg.paragraphs = 5;
  pool_cfg.seed = 42;
  pool_cfg.unannotated_fraction = 1.0;
  ProceduralSplit pool = synth_procedural(pool_cfg, "pool");

  std::vector<std::vector<Action>> corpus;
  for (const auto& ex : gold.examples)
    for (const auto& ent : ex.entities) corpus.push_back(ent.timeline.actions);
  Rng rng(6);
  ProceduralModel model = ProceduralModel::init(tiny_config(), init_prior(corpus), rng);

  AugmentResult aug = augment(gold, pool, model, Ablations{});
  CHECK(aug.labeled == 5);
  CHECK(aug.skipped == 0);
  CHECK(aug.mixed.examples.size() == gold.examples.size() + 5);
  int pseudo_entities = 0;
  for (const auto& ex : aug.mixed.examples)
    for (const auto& ent : ex.entities)
      if (ent.pseudo) {
        ++pseudo_entities;
        CHECK(ent.annotated);
        CHECK_NOTHROW(validate_timeline(ent.timeline));
      }
  CHECK(pseudo_entities > 0);
  CHECK(aug.manifest.find("mixed_hash") != std::string::npos);

  // pseudo rows survive a save/load round trip
  TempFile f("augmented.jsonl");
  save_procedural_jsonl(aug.mixed.examples, f.path);
  ProceduralSplit back = load_procedural_jsonl(f.path, "mixed");
  REQUIRE(back.examples.size() == aug.mixed.examples.size());
  for (size_t i = 0; i < back.examples.size(); ++i)
    CHECK(structurally_equal(back.examples[i], aug.mixed.examples[i]));

  // a mixed split auto-switches to the augmented epoch budget
  EncoderConfig enc = tiny_config();
  TrainConfig tc;
  tc.eval_every = 0;
  TrainResult res = train(aug.mixed, enc, tc);
  CHECK(res.epochs_run == tc.augmented_epochs);
  CHECK(res.manifest.find("\"pseudo_labeled_data\": true") != std::string::npos);

  SUBCASE("pool examples without entities are skipped with a warning") {
    ProceduralSplit odd = pool;
    odd.examples[0].entities.clear();
    AugmentResult aug2 = augment(gold, odd, model, Ablations{});
    CHECK(aug2.skipped == 1);
    CHECK(aug2.labeled == 4);
    REQUIRE(aug2.warnings.size() == 1);
    CHECK(aug2.warnings[0].find(odd.examples[0].para_id) != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  ProceduralSplit split = small_corpus(2, 55);
  std::vector<std::vector<Action>> corpus;
  for (const auto& ex : split.examples)
    for (const auto& ent : ex.entities) corpus.push_back(ent.timeline.actions);
  EncoderConfig enc = tiny_config();
  TrainConfig tc;
  tc.epochs = 2;
  tc.eval_every = 0;
  TrainResult res = train(split, enc, tc);

  TempFile f("model.json");
  res.model.save(f.path);
  ProceduralModel back = ProceduralModel::load(f.path);

  auto pa = res.model.named_params();
  auto pb = back.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second->data == pb[i].second->data);
  }
  CHECK(back.head.transition.blocked.data == res.model.head.transition.blocked.data);

  const auto& ex = split.examples[0];
  const EntityTimeline t1 = predict_entity(ex, ex.entities[0].name, res.model, tc.ablations);
  const EntityTimeline t2 = predict_entity(ex, ex.entities[0].name, back, tc.ablations);
  CHECK(t1.actions == t2.actions);

  CHECK_THROWS_AS(ProceduralModel::load("/nonexistent/model.json"), IoError);
}

TEST_CASE("config snapshots round-trip and reject unknown keys") {
  TrainConfig tc;
  tc.lr = 5e-4;
  tc.ablations.no_gc = true;
  tc.stop_action_acc = 0.95;
  TrainConfig tc2 = train_config_from_json(train_config_to_json(tc));
  CHECK(tc2.lr == tc.lr);
  CHECK(tc2.ablations.no_gc);
  CHECK(tc2.stop_action_acc == tc.stop_action_acc);

  EncoderConfig ec = tiny_config();
  EncoderConfig ec2 = encoder_config_from_json(encoder_config_to_json(ec));
  CHECK(ec2.d == ec.d);
  CHECK(ec2.vocab == ec.vocab);

  try {
    train_config_from_json(R"({"lr": 0.1, "bogus": 1})");
    FAIL_CHECK("expected E_UNKNOWN_KEY");
  } catch (const ValidationError& e) {
    CHECK(e.code() == "E_UNKNOWN_KEY");
  }
  CHECK(config_hash(ec, tc) != config_hash(ec, TrainConfig{}));
}
