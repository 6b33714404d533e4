// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "proctrack/errors.hpp"
#include "proctrack/gradcheck.hpp"
#include "proctrack/story.hpp"
#include "proctrack/trainer.hpp"

using namespace proctrack;
using json = nlohmann::json;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.vocab = 64;
  cfg.d = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff = 12;
  cfg.m_max = 48;
  return cfg;
}

std::vector<TransitionMatrix> uniform_set(const std::vector<AttributeDef>& attrs) {
  std::vector<TransitionMatrix> out;
  for (const auto& a : attrs) out.push_back(uniform_transitions(a.labels));
  return out;
}

StoryModel uniform_model(const EncoderConfig& cfg, std::vector<AttributeDef> attrs,
                         uint64_t seed) {
  Rng rng(seed);
  return StoryModel::init(cfg, attrs, uniform_set(attrs), uniform_set(attrs), rng);
}

void zero(Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); }

// One pair, one entity per story, B attributes with `labels` values each.
// Sentences differ at c1; the gold conflict is (c1, c2) = (1, 2).
StoryPair tiny_pair(int n, int B, int labels) {
  StoryPair pair;
  pair.pair_id = "tp";
  pair.plausible_index = 0;
  pair.conflict_c1 = 1;
  pair.conflict_c2 = 2;
  for (int s = 0; s < 2; ++s) {
    Story& story = pair.stories[s];
    for (int t = 1; t <= n; ++t)
      story.sentences.push_back(t == 1 && s == 1 ? "mary drops the cup ."
                                                 : "mary holds the cup at step " +
                                                       std::to_string(t) + " .");
    StoryEntityStates ent;
    ent.name = "cup";
    ent.pre.assign(n, std::vector<int>(B, 0));
    ent.eff.assign(n, std::vector<int>(B, 0));
    for (int t = 0; t < n; ++t)
      for (int b = 0; b < B; ++b) ent.eff[t][b] = (t + b + s) % labels;
    story.entities.push_back(std::move(ent));
  }
  return pair;
}

std::vector<double> softmax_row(const Tensor& t) {
  double mx = t.data[0];
  for (double v : t.data) mx = std::max(mx, v);
  double z = 0.0;
  std::vector<double> out;
  for (double v : t.data) {
    out.push_back(std::exp(v - mx));
    z += out.back();
  }
  for (double& v : out) v /= z;
  return out;
}

bool same_data(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/proctrack_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

template <typename E>
void expect_code(const std::function<void()>& fn, const std::string& code) {
  try {
    fn();
    FAIL_CHECK("expected " << code << ", nothing thrown");
  } catch (const E& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace

TEST_CASE("sentence-pair index flattens row-major and inverts for n up to 12") {
  for (int n = 2; n <= 12; ++n) {
    CHECK(pair_count(n) == n * (n - 1) / 2);
    int flat = 0;
    for (int t = 1; t < n; ++t)
      for (int j = t + 1; j <= n; ++j) {
        CHECK(pair_flat_index(t, j, n) == flat);
        CHECK(pair_from_flat(flat, n) == std::make_pair(t, j));
        ++flat;
      }
    CHECK(flat == pair_count(n));
  }
  CHECK(pair_flat_index(1, 2, 5) == 0);
  CHECK(pair_flat_index(2, 4, 5) == 5);

  expect_code<ValidationError>([] { pair_count(1); }, "E_LENGTH");
  expect_code<ValidationError>([] { pair_flat_index(2, 2, 5); }, "E_LENGTH");
  expect_code<ValidationError>([] { pair_flat_index(0, 3, 5); }, "E_LENGTH");
  expect_code<ValidationError>([] { pair_from_flat(10, 5); }, "E_LENGTH");
  expect_code<ValidationError>([] { pair_from_flat(-1, 5); }, "E_LENGTH");
}

TEST_CASE("conflict scores are uniform under zero weights and a singleton at n=2") {
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, {{"x", 2}}, 3);
  zero(model.heads.w_confl);

  Rng rng(7);
  Tape tape;
  TapeBinding bind(tape);
  const Tape::VarId cls = tape.input(Tensor::uniform({4, cfg.d}, rng, -1.0, 1.0));
  const Tape::VarId logits = conflict_logits(bind, cls, model);
  const Tensor& raw = tape.val(logits);
  REQUIRE(raw.shape == std::vector<int>{1, 6});
  for (double v : raw.data) CHECK(v == 0.0);
  for (double p : softmax_row(raw)) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  // A single candidate pair normalizes to probability 1 whatever the weights.
  StoryModel loaded = uniform_model(cfg, {{"x", 2}}, 4);
  Tape tape2;
  TapeBinding bind2(tape2);
  const Tape::VarId two = tape2.input(Tensor::uniform({2, cfg.d}, rng, -1.0, 1.0));
  const Tensor& single = tape2.val(conflict_logits(bind2, two, loaded));
  REQUIRE(single.shape == std::vector<int>{1, 1});
  CHECK(softmax_row(single)[0] == 1.0);

  Tape tape3;
  TapeBinding bind3(tape3);
  const Tape::VarId one = tape3.input(Tensor::uniform({1, cfg.d}, rng, -1.0, 1.0));
  expect_code<ValidationError>([&] { conflict_logits(bind3, one, loaded); }, "E_LENGTH");
}

TEST_CASE("plausibility is symmetric under zero weights and pure across calls") {
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, {{"x", 2}}, 5);
  zero(model.heads.w_plau);

  Rng rng(9);
  Tape tape;
  TapeBinding bind(tape);
  const Tape::VarId cls = tape.input(Tensor::uniform({3, cfg.d}, rng, -1.0, 1.0));
  const Tensor& raw = tape.val(plausibility_logits(bind, cls, model));
  REQUIRE(raw.shape == std::vector<int>{1, 2});
  const auto probs = softmax_row(raw);
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Same sentences, same entity: encoding and heads are deterministic.
  StoryModel scored = uniform_model(cfg, {{"x", 2}}, 6);
  const std::vector<std::string> sentences = {"tom wets the rag .", "tom wrings the rag ."};
  auto run = [&] {
    Tape t;
    TapeBinding b(t);
    const Tape::VarId rows = story_encode(b, sentences, "dup", "rag", scored, Ablations{});
    return t.val(plausibility_logits(b, rows, scored));
  };
  CHECK(same_data(run(), run()));
}

TEST_CASE("story encodings stack one row per step") {
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, {{"x", 2}}, 11);
  std::vector<std::string> sentences;
  for (int t = 1; t <= 5; ++t) sentences.push_back("ava sees the fan at " + std::to_string(t) + " .");

  Tape tape;
  TapeBinding bind(tape);
  const Tensor rows = tape.val(story_encode(bind, sentences, "st", "fan", model, Ablations{}));
  CHECK(rows.shape == std::vector<int>{5, cfg.d});

  // Without timestep embeddings every step sees the identical input.
  Ablations no_t;
  no_t.no_t = true;
  Tape tape2;
  TapeBinding bind2(tape2);
  const Tensor flat = tape2.val(story_encode(bind2, sentences, "st", "fan", model, no_t));
  for (int t = 1; t < 5; ++t)
    for (int c = 0; c < cfg.d; ++c) CHECK(flat.at(t, c) == flat.at(0, c));

  Tape tape3;
  TapeBinding bind3(tape3);
  expect_code<ValidationError>(
      [&] { story_encode(bind3, {}, "st", "fan", model, Ablations{}); }, "E_LENGTH");
}

TEST_CASE("uniform attribute heads reduce losses to path counting") {
  const EncoderConfig cfg = tiny_config();
  const int n = 3, labels = 3;
  StoryPair pair = tiny_pair(n, 1, labels);
  StoryModel model = uniform_model(cfg, {{"x", labels}}, 13);
  zero(model.heads.w_plau);
  zero(model.heads.pre[0].w_a);
  zero(model.heads.eff[0].w_a);

  // Zero emissions and zero transitions: every label path scores 0, so the
  // nll is the log path count, enumerated here as labels^n.
  double paths = 1.0;
  for (int t = 0; t < n; ++t) paths *= labels;
  const double att = 2.0 * std::log(paths);
  const double expected = std::log(2.0) + att;

  StoryTrainConfig sc;
  sc.no_crf = false;
  Tape tape;
  TapeBinding bind(tape);
  const Tape::VarId loss =
      story_loss_single(bind, pair.stories[0], "tp/0", true, 0, model, sc);
  CHECK(tape.val(loss).at(0, 0) == doctest::Approx(expected).epsilon(1e-9));

  // Per-step cross-entropy over zero logits gives the same total.
  sc.no_crf = true;
  Tape tape2;
  TapeBinding bind2(tape2);
  const Tape::VarId ce =
      story_loss_single(bind2, pair.stories[0], "tp/0", true, 0, model, sc);
  CHECK(tape2.val(ce).at(0, 0) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("plausible stories leave the conflict head with exactly zero gradient") {
  const EncoderConfig cfg = tiny_config();
  StoryPair pair = tiny_pair(3, 2, 3);
  StoryModel model = uniform_model(cfg, {{"x", 3}, {"y", 3}}, 17);
  StoryTrainConfig sc;

  Tape tape;
  TapeBinding bind(tape);
  const Tape::VarId plaus = story_loss_single(bind, pair.stories[0], "tp/0", true, 0, model, sc);
  tape.backward(plaus);
  const Tensor g = bind.grad_of(model.heads.w_confl);
  for (double v : g.data) CHECK(v == 0.0);

  Tape tape2;
  TapeBinding bind2(tape2);
  const Tape::VarId impl =
      story_loss_single(bind2, pair.stories[1], "tp/1", false,
                        pair_flat_index(pair.conflict_c1, pair.conflict_c2, 3), model, sc);
  tape2.backward(impl);
  const Tensor g2 = bind2.grad_of(model.heads.w_confl);
  double mag = 0.0;
  for (double v : g2.data) mag += std::abs(v);
  CHECK(mag > 0.0);
}

TEST_CASE("joint story loss matches finite differences on a tiny fixture") {
  EncoderConfig cfg;
  cfg.vocab = 24;
  cfg.d = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff = 6;
  cfg.m_max = 32;
  StoryPair pair = tiny_pair(2, 2, 2);
  StoryModel model = uniform_model(cfg, {{"x", 2}, {"y", 2}}, 19);
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
  GradCheckReport report = gradcheck(fn, point, GradCheckOptions{});
  CHECK(report.checked > 200);
  CHECK_MESSAGE(report.pass, report.to_string());
  for (size_t i = 0; i < params.size(); ++i) *params[i].second = point[i];
}

TEST_CASE("attribute heads are independently parameterized") {
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, {{"x", 3}, {"y", 2}}, 23);

  auto params = model.named_params();
  std::vector<std::string> names;
  for (const auto& [name, t] : params) names.push_back(name);
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(std::find(names.begin(), names.end(), "enc.w_s") == names.end());
  CHECK(std::find(names.begin(), names.end(), "enc.w_e") == names.end());
  // 3 shared embedding tables + 6 block weights, 4 heads of (w_d, w_a, psi),
  // conflict and plausibility weights.
  CHECK(params.size() == 9 + 12 + 2);

  Rng rng(29);
  const Tensor x = Tensor::uniform({3, cfg.d}, rng, -1.0, 1.0);
  auto emissions = [&](CrfHead& head) {
    Tape tape;
    TapeBinding bind(tape);
    return tape.val(step_emissions(bind, tape.input(x), head));
  };
  const Tensor pre0 = emissions(model.heads.pre[0]);
  const Tensor pre1 = emissions(model.heads.pre[1]);
  const Tensor eff0 = emissions(model.heads.eff[0]);
  const Tensor eff1 = emissions(model.heads.eff[1]);

  model.heads.pre[0].w_a.at(0, 0) += 0.25;
  CHECK_FALSE(same_data(emissions(model.heads.pre[0]), pre0));
  CHECK(same_data(emissions(model.heads.pre[1]), pre1));
  CHECK(same_data(emissions(model.heads.eff[0]), eff0));
  CHECK(same_data(emissions(model.heads.eff[1]), eff1));

  // An optimizer step driven by one head's gradient touches nothing else.
  std::vector<Tensor> snapshot;
  for (auto& [name, t] : params) snapshot.push_back(*t);
  Adam opt(params, 1e-2);
  std::vector<Tensor> grads;
  for (auto& [name, t] : params) {
    Tensor g = Tensor::zeros(t->shape);
    if (name == "attr1.eff.w_d") std::fill(g.data.begin(), g.data.end(), 1.0);
    grads.push_back(std::move(g));
  }
  opt.step(grads);
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].first == "attr1.eff.w_d")
      CHECK_FALSE(same_data(*params[i].second, snapshot[i]));
    else
      CHECK(same_data(*params[i].second, snapshot[i]));
  }
}

TEST_CASE("step emissions at one row ignore perturbations of other rows") {
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, {{"x", 3}}, 31);
  Rng rng(37);
  Tensor x = Tensor::uniform({4, cfg.d}, rng, -1.0, 1.0);

  auto emissions = [&](const Tensor& rows) {
    Tape tape;
    TapeBinding bind(tape);
    return tape.val(step_emissions(bind, tape.input(rows), model.heads.pre[0]));
  };
  const Tensor before = emissions(x);
  Tensor poked = x;
  for (int c = 0; c < cfg.d; ++c) poked.at(2, c) += 0.5;
  const Tensor after = emissions(poked);
  for (int t = 0; t < 4; ++t)
    for (int a = 0; a < 3; ++a) {
      if (t == 2) continue;
      CHECK(after.at(t, a) == before.at(t, a));
    }
  CHECK_FALSE(same_data(after, before));
}

TEST_CASE("prediction averages entity logits and ignores entity order") {
  SynthStoryConfig scfg;
  scfg.pairs = 3;
  scfg.min_sentences = 3;
  scfg.max_sentences = 4;
  scfg.seed = 5;
  const StorySplit split = synth_story(scfg, "train");
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, split.attributes, 41);

  for (const auto& pair : split.pairs) {
    const StoryPairPrediction pred = story_predict(pair, model, Ablations{}, true);
    CHECK((pred.chosen == 0 || pred.chosen == 1));
    const int n = static_cast<int>(pair.stories[0].sentences.size());
    CHECK(pred.conflict_c1 >= 1);
    CHECK(pred.conflict_c1 < pred.conflict_c2);
    CHECK(pred.conflict_c2 <= n);

    StoryPair flipped = pair;
    for (int s = 0; s < 2; ++s)
      std::reverse(flipped.stories[s].entities.begin(), flipped.stories[s].entities.end());
    const StoryPairPrediction swapped = story_predict(flipped, model, Ablations{}, true);
    CHECK(swapped.chosen == pred.chosen);
    CHECK(swapped.conflict_c1 == pred.conflict_c1);
    CHECK(swapped.conflict_c2 == pred.conflict_c2);
    for (int s = 0; s < 2; ++s) {
      REQUIRE(swapped.entities[s].size() == pred.entities[s].size());
      for (const auto& ent : pred.entities[s]) {
        const auto it = std::find_if(swapped.entities[s].begin(), swapped.entities[s].end(),
                                     [&](const auto& e) { return e.name == ent.name; });
        REQUIRE(it != swapped.entities[s].end());
        CHECK(it->pre == ent.pre);
        CHECK(it->eff == ent.eff);
      }
    }
  }

  // With one entity the average is that entity's own logits: the pair
  // decision must match a direct forward pass through the public pieces.
  StoryPair solo = split.pairs[0];
  for (int s = 0; s < 2; ++s) solo.stories[s].entities.resize(1);
  const StoryPairPrediction pred = story_predict(solo, model, Ablations{}, true);
  std::array<double, 2> gap{};
  std::array<Tensor, 2> confl;
  for (int s = 0; s < 2; ++s) {
    Tape tape;
    TapeBinding bind(tape);
    const Tape::VarId cls =
        story_encode(bind, solo.stories[s].sentences, solo.pair_id + "/" + std::to_string(s),
                     solo.stories[s].entities[0].name, model, Ablations{});
    const Tensor plau = tape.val(plausibility_logits(bind, cls, model));
    gap[s] = plau.at(0, 1) - plau.at(0, 0);
    confl[s] = tape.val(conflict_logits(bind, cls, model));
  }
  CHECK(pred.chosen == (gap[1] > gap[0] ? 1 : 0));
  const Tensor& scores = confl[1 - pred.chosen];
  int best = 0;
  for (int c = 1; c < scores.shape[1]; ++c)
    if (scores.at(0, c) > scores.at(0, best)) best = c;
  const int n = static_cast<int>(solo.stories[0].sentences.size());
  CHECK(std::make_pair(pred.conflict_c1, pred.conflict_c2) == pair_from_flat(best, n));
}

TEST_CASE("viterbi stays idle under argmax attribute decoding") {
  SynthStoryConfig scfg;
  scfg.pairs = 1;
  scfg.seed = 8;
  const StorySplit split = synth_story(scfg, "train");
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, split.attributes, 43);

  reset_viterbi_calls();
  story_predict(split.pairs[0], model, Ablations{}, true);
  CHECK(viterbi_calls() == 0);
  story_predict(split.pairs[0], model, Ablations{}, false);
  // 2 stories x 2 entities x 2 attributes x 2 sides.
  CHECK(viterbi_calls() == 16);
}

TEST_CASE("story priors follow observed label statistics") {
  StorySplit split;
  split.name = "train";
  split.attributes = {{"x", 2}};
  StoryPair pair;
  pair.pair_id = "p";
  pair.plausible_index = 0;
  pair.conflict_c1 = 1;
  pair.conflict_c2 = 2;
  for (int s = 0; s < 2; ++s) {
    pair.stories[s].sentences = {"a b .", s == 1 ? "a c ." : "a d ."};
    StoryEntityStates ent;
    ent.name = "e";
    ent.pre = s == 0 ? std::vector<std::vector<int>>{{0}, {1}}
                     : std::vector<std::vector<int>>{{0}, {0}};
    ent.eff = {{0}, {0}};
    pair.stories[s].entities.push_back(ent);
  }
  split.pairs.push_back(pair);

  const StoryPriors priors = story_priors(split);
  REQUIRE(priors.pre.size() == 1);
  REQUIRE(priors.eff.size() == 1);

  // Precondition corpus {[0,1], [0,0]}: both sequences start at 0; from 0 the
  // corpus splits evenly; label 1 is never left.
  const TransitionMatrix& pre = priors.pre[0];
  CHECK(pre.psi.at(0, 0) == 0.0);
  CHECK(pre.is_blocked(0, 1));
  CHECK(pre.psi.at(1, 0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(pre.psi.at(1, 1) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(pre.is_blocked(2, 0));
  CHECK(pre.is_blocked(2, 1));

  // Effect corpus {[0,0], [0,0]}: everything stays at 0.
  const TransitionMatrix& eff = priors.eff[0];
  CHECK(eff.psi.at(0, 0) == 0.0);
  CHECK(eff.psi.at(1, 0) == 0.0);
  CHECK(eff.is_blocked(0, 1));
  CHECK(eff.is_blocked(1, 1));

  StorySplit empty;
  empty.name = "t";
  empty.attributes = {{"x", 2}};
  expect_code<ValidationError>([&] { story_priors(empty); }, "E_EMPTY_CORPUS");
}

TEST_CASE("gold annotations are checked before loss is built") {
  const EncoderConfig cfg = tiny_config();
  StoryModel model = uniform_model(cfg, {{"x", 2}, {"y", 2}}, 47);
  StoryTrainConfig sc;
  StoryPair pair = tiny_pair(2, 2, 2);

  Story missing = pair.stories[0];
  missing.entities.clear();
  Tape tape;
  TapeBinding bind(tape);
  expect_code<ValidationError>(
      [&] { story_loss_single(bind, missing, "m", true, 0, model, sc); }, "E_MISSING_GOLD");

  Story short_steps = pair.stories[0];
  short_steps.entities[0].pre.pop_back();
  expect_code<ValidationError>(
      [&] { story_loss_single(bind, short_steps, "s", true, 0, model, sc); }, "E_MISSING_GOLD");

  Story wide = pair.stories[0];
  wide.entities[0].eff[0].push_back(0);
  expect_code<ValidationError>(
      [&] { story_loss_single(bind, wide, "w", true, 0, model, sc); }, "E_MISSING_GOLD");

  Story range = pair.stories[0];
  range.entities[0].pre[0][1] = 2;
  expect_code<ValidationError>(
      [&] { story_loss_single(bind, range, "r", true, 0, model, sc); }, "E_LABEL_RANGE");

  Rng rng(1);
  expect_code<ValidationError>(
      [&] {
        StoryModel::init(cfg, {{"x", 2}}, {uniform_transitions(3)}, {uniform_transitions(2)},
                         rng);
      },
      "E_CONFIG");
  expect_code<ValidationError>(
      [&] { StoryModel::init(cfg, {}, {}, {}, rng); }, "E_CONFIG");
}

TEST_CASE("story model round-trips through checkpoints") {
  SynthStoryConfig scfg;
  scfg.pairs = 2;
  scfg.seed = 12;
  const StorySplit split = synth_story(scfg, "train");
  const EncoderConfig cfg = tiny_config();
  StoryPriors priors = story_priors(split);
  Rng rng(53);
  StoryModel model =
      StoryModel::init(cfg, split.attributes, std::move(priors.pre), std::move(priors.eff), rng);

  TempFile ckpt("story_ckpt.json");
  model.save(ckpt.path);
  StoryModel loaded = StoryModel::load(ckpt.path);

  auto a = model.named_params();
  auto b = loaded.named_params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(same_data(*a[i].second, *b[i].second));
  }
  REQUIRE(loaded.attributes.size() == model.attributes.size());
  for (size_t i = 0; i < model.attributes.size(); ++i) {
    CHECK(loaded.attributes[i].name == model.attributes[i].name);
    CHECK(loaded.attributes[i].labels == model.attributes[i].labels);
  }
  for (size_t b2 = 0; b2 < model.heads.pre.size(); ++b2) {
    CHECK(same_data(loaded.heads.pre[b2].transition.blocked,
                    model.heads.pre[b2].transition.blocked));
    CHECK(same_data(loaded.heads.eff[b2].transition.psi, model.heads.eff[b2].transition.psi));
  }

  const auto before = story_predict_split(split, model, Ablations{}, true);
  const auto after = story_predict_split(split, loaded, Ablations{}, true);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i].chosen == before[i].chosen);
    CHECK(after[i].conflict_c1 == before[i].conflict_c1);
    CHECK(after[i].conflict_c2 == before[i].conflict_c2);
    for (int s = 0; s < 2; ++s)
      for (size_t e = 0; e < before[i].entities[s].size(); ++e) {
        CHECK(after[i].entities[s][e].pre == before[i].entities[s][e].pre);
        CHECK(after[i].entities[s][e].eff == before[i].entities[s][e].eff);
      }
  }

  // Wrong-kind and malformed files are rejected up front.
  TempFile wrong("story_wrong_kind.json");
  Rng prng(2);
  ProceduralModel pm = ProceduralModel::init(
      EncoderConfig{24, 4, 1, 2, 6, 32, 8},
      init_prior(std::vector<std::vector<Action>>{{Action::Create, Action::Destroy}}), prng);
  pm.save(wrong.path);
  expect_code<ValidationError>([&] { StoryModel::load(wrong.path); }, "E_PARSE");
  TempFile garbage("story_garbage.json");
  {
    std::ofstream out(garbage.path);
    out << "not json";
  }
  expect_code<ValidationError>([&] { StoryModel::load(garbage.path); }, "E_PARSE");
  expect_code<IoError>([] { StoryModel::load("/nonexistent/ckpt.json"); }, "E_IO");
}

TEST_CASE("story training is reproducible and records its run") {
  SynthStoryConfig scfg;
  scfg.pairs = 2;
  scfg.min_sentences = 3;
  scfg.max_sentences = 3;
  scfg.seed = 3;
  const StorySplit split = synth_story(scfg, "train");
  const EncoderConfig cfg = tiny_config();
  StoryTrainConfig sc;
  sc.epochs = 2;
  sc.eval_every = 2;
  sc.seed = 7;

  StoryTrainResult one = story_train(split, cfg, sc, &split);
  StoryTrainResult two = story_train(split, cfg, sc, &split);
  CHECK(one.manifest == two.manifest);
  auto pa = one.model.named_params();
  auto pb = two.model.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(same_data(*pa[i].second, *pb[i].second));

  CHECK(one.epochs_run == 2);
  REQUIRE(one.history.size() == 2);
  CHECK(one.history[0].accuracy == -1.0);
  CHECK(one.history[1].accuracy >= 0.0);
  CHECK(std::isfinite(one.history[0].mean_loss));

  const json manifest = json::parse(one.manifest);
  CHECK(manifest.at("kind") == "story_train_run");
  CHECK(manifest.at("seed") == 7);
  CHECK(manifest.at("pairs") == 2);
  CHECK(manifest.at("items") == 2);
  CHECK(manifest.at("epochs_run") == 2);
  CHECK(manifest.at("data_hash") == one.data_hash);
  CHECK(manifest.at("config_hash") == one.config_hash);
  CHECK(manifest.at("history").size() == 2);
  CHECK(manifest.at("dev").at("split") == "train");
  CHECK(manifest.at("dev").at("accuracy").get<double>() >= 0.0);

  // The trained model's predictions drive the evaluator end to end.
  const auto preds = story_predict_split(split, one.model, sc.ablations, sc.no_crf);
  TempFile out("story_preds.jsonl");
  save_story_predictions(preds, out.path);
  const StoryReport rep = story_metrics(split, load_story_predictions(out.path));
  CHECK(rep.verifiability <= rep.consistency);
  CHECK(rep.consistency <= rep.accuracy);
}

TEST_CASE("upsampling doubles the plausible exposure and early stop honors accuracy") {
  SynthStoryConfig scfg;
  scfg.pairs = 2;
  scfg.min_sentences = 3;
  scfg.max_sentences = 3;
  scfg.seed = 4;
  const StorySplit split = synth_story(scfg, "train");
  const EncoderConfig cfg = tiny_config();

  StoryTrainConfig up;
  up.epochs = 1;
  up.eval_every = 0;
  up.upsample_plausible = true;
  const StoryTrainResult res = story_train(split, cfg, up);
  CHECK(json::parse(res.manifest).at("items") == 4);

  StoryTrainConfig stop;
  stop.epochs = 5;
  stop.eval_every = 1;
  stop.stop_accuracy = 0.0;
  const StoryTrainResult stopped = story_train(split, cfg, stop);
  CHECK(stopped.epochs_run == 1);
}

TEST_CASE("story training rejects bad configs and empty corpora") {
  SynthStoryConfig scfg;
  scfg.pairs = 1;
  const StorySplit split = synth_story(scfg, "train");
  const EncoderConfig cfg = tiny_config();

  StoryTrainConfig sc;
  sc.epochs = 0;
  expect_code<ValidationError>([&] { story_train(split, cfg, sc); }, "E_CONFIG");
  sc = StoryTrainConfig{};
  sc.grad_accum = 0;
  expect_code<ValidationError>([&] { story_train(split, cfg, sc); }, "E_CONFIG");
  sc = StoryTrainConfig{};
  sc.lr = 0.0;
  expect_code<ValidationError>([&] { story_train(split, cfg, sc); }, "E_CONFIG");
  sc = StoryTrainConfig{};
  sc.eval_every = -1;
  expect_code<ValidationError>([&] { story_train(split, cfg, sc); }, "E_CONFIG");

  StorySplit empty;
  empty.name = "train";
  empty.attributes = split.attributes;
  expect_code<ValidationError>([&] { story_train(empty, cfg, StoryTrainConfig{}); },
                               "E_EMPTY_CORPUS");
}

TEST_CASE("story config snapshots round-trip and reject unknown keys") {
  StoryTrainConfig sc;
  sc.lr = 5e-4;
  sc.epochs = 9;
  sc.grad_accum = 3;
  sc.seed = 77;
  sc.ablations.no_t = true;
  sc.no_crf = false;
  sc.upsample_plausible = true;
  sc.eval_every = 4;
  sc.stop_accuracy = 0.9;

  const StoryTrainConfig back = story_train_config_from_json(story_train_config_to_json(sc));
  CHECK(back.lr == sc.lr);
  CHECK(back.epochs == sc.epochs);
  CHECK(back.grad_accum == sc.grad_accum);
  CHECK(back.seed == sc.seed);
  CHECK(back.ablations.no_t == sc.ablations.no_t);
  CHECK(back.ablations.no_e == sc.ablations.no_e);
  CHECK(back.no_crf == sc.no_crf);
  CHECK(back.upsample_plausible == sc.upsample_plausible);
  CHECK(back.eval_every == sc.eval_every);
  CHECK(back.stop_accuracy == sc.stop_accuracy);

  expect_code<ValidationError>(
      [] { story_train_config_from_json(R"({"nocrf": true})"); }, "E_UNKNOWN_KEY");
  expect_code<ValidationError>([] { story_train_config_from_json("not json"); }, "E_PARSE");

  const EncoderConfig cfg = tiny_config();
  StoryTrainConfig flipped = sc;
  flipped.no_crf = !sc.no_crf;
  CHECK(story_config_hash(cfg, sc) != story_config_hash(cfg, flipped));
  CHECK(story_config_hash(cfg, sc) == story_config_hash(cfg, sc));
}
