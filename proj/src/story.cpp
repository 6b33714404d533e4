// SPDX-License-Identifier: Apache-2.0
#include "proctrack/story.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "proctrack/errors.hpp"
#include "proctrack/trainer.hpp"
#include "json_util.hpp"

namespace proctrack {

namespace {

using json = nlohmann::json;

void check_story_train_config(const StoryTrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValidationError("E_CONFIG", "story_train: epochs must be >= 1");
  if (cfg.grad_accum < 1)
    throw ValidationError("E_CONFIG", "story_train: grad_accum must be >= 1");
  if (!(cfg.lr > 0.0)) throw ValidationError("E_CONFIG", "story_train: lr must be > 0");
  if (cfg.eval_every < 0)
    throw ValidationError("E_CONFIG", "story_train: eval_every must be >= 0");
}

json story_train_config_json(const StoryTrainConfig& c) {
  json j;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["grad_accum"] = c.grad_accum;
  j["seed"] = c.seed;
  j["no_t"] = c.ablations.no_t;
  j["no_e"] = c.ablations.no_e;
  j["no_gc"] = c.ablations.no_gc;
  j["no_go"] = c.ablations.no_go;
  j["no_crf"] = c.no_crf;
  j["upsample_plausible"] = c.upsample_plausible;
  j["eval_every"] = c.eval_every;
  j["stop_accuracy"] = c.stop_accuracy;
  return j;
}

// Annotation shape and label ranges against the model's registry. Ingest
// validates gold splits already; this guards direct API calls.
void check_story_gold(const Story& story, const std::string& story_id,
                      const std::vector<AttributeDef>& attrs) {
  const size_t n = story.sentences.size();
  const size_t B = attrs.size();
  if (story.entities.empty())
    throw ValidationError("E_MISSING_GOLD", "story '" + story_id + "': no entity annotations");
  for (const auto& ent : story.entities) {
    if (ent.pre.size() != n || ent.eff.size() != n)
      throw ValidationError("E_MISSING_GOLD", "story '" + story_id + "': entity '" + ent.name +
                                                  "' state vectors do not cover every step");
    for (size_t t = 0; t < n; ++t) {
      if (ent.pre[t].size() != B || ent.eff[t].size() != B)
        throw ValidationError("E_MISSING_GOLD",
                              "story '" + story_id + "': entity '" + ent.name + "' has " +
                                  std::to_string(ent.pre[t].size()) +
                                  " attribute values, expected " + std::to_string(B));
      for (size_t b = 0; b < B; ++b)
        if (ent.pre[t][b] < 0 || ent.pre[t][b] >= attrs[b].labels || ent.eff[t][b] < 0 ||
            ent.eff[t][b] >= attrs[b].labels)
          throw ValidationError("E_LABEL_RANGE", "story '" + story_id + "': entity '" +
                                                     ent.name + "' label outside attribute '" +
                                                     attrs[b].name + "' range");
    }
  }
}

Tape::VarId add_all(Tape& tape, const std::vector<Tape::VarId>& terms) {
  Tape::VarId out = terms.front();
  for (size_t i = 1; i < terms.size(); ++i) out = tape.add(out, terms[i]);
  return out;
}

std::vector<int> gold_side(const std::vector<std::vector<int>>& side, size_t b) {
  std::vector<int> out;
  out.reserve(side.size());
  for (const auto& row : side) out.push_back(row[b]);
  return out;
}

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.shape[1]; ++c)
    if (t.at(row, c) > t.at(row, best)) best = c;
  return best;
}

// Forward values for one (story, entity): everything prediction needs, read
// off a throwaway tape.
struct EntityStoryForward {
  Tensor plau;                  // [1, 2]
  Tensor confl;                 // [1, P]
  std::vector<Tensor> pre_phi;  // B x [n, labels_b]
  std::vector<Tensor> eff_phi;
};

EntityStoryForward forward_story_entity(const Story& story, const std::string& story_id,
                                        const std::string& entity, StoryModel& model,
                                        const Ablations& ab) {
  Tape tape;
  TapeBinding bind(tape);
  const Tape::VarId cls = story_encode(bind, story.sentences, story_id, entity, model, ab);
  EntityStoryForward fwd;
  fwd.plau = tape.val(plausibility_logits(bind, cls, model));
  fwd.confl = tape.val(conflict_logits(bind, cls, model));
  for (size_t b = 0; b < model.attributes.size(); ++b) {
    fwd.pre_phi.push_back(tape.val(step_emissions(bind, cls, model.heads.pre[b])));
    fwd.eff_phi.push_back(tape.val(step_emissions(bind, cls, model.heads.eff[b])));
  }
  return fwd;
}

}  // namespace

int pair_count(int n) {
  if (n < 2)
    throw ValidationError("E_LENGTH",
                          "pair_count: need at least 2 sentences, got " + std::to_string(n));
  return n * (n - 1) / 2;
}

int pair_flat_index(int t, int j, int n) {
  if (!(1 <= t && t < j && j <= n))
    throw ValidationError("E_LENGTH", "pair_flat_index: invalid pair (" + std::to_string(t) +
                                          "," + std::to_string(j) + ") for n=" +
                                          std::to_string(n));
  return (t - 1) * n - t * (t - 1) / 2 + (j - t - 1);
}

std::pair<int, int> pair_from_flat(int flat, int n) {
  const int total = pair_count(n);
  if (flat < 0 || flat >= total)
    throw ValidationError("E_LENGTH", "pair_from_flat: index " + std::to_string(flat) +
                                          " outside [0, " + std::to_string(total) + ")");
  int t = 1;
  while (flat >= n - t) {
    flat -= n - t;
    ++t;
  }
  return {t, t + 1 + flat};
}

StoryModel StoryModel::init(const EncoderConfig& cfg, std::vector<AttributeDef> attrs,
                            std::vector<TransitionMatrix> pre_tr,
                            std::vector<TransitionMatrix> eff_tr, Rng& rng) {
  if (attrs.empty()) throw ValidationError("E_CONFIG", "StoryModel: empty attribute registry");
  if (pre_tr.size() != attrs.size() || eff_tr.size() != attrs.size())
    throw ValidationError("E_CONFIG", "StoryModel: " + std::to_string(pre_tr.size()) + "/" +
                                          std::to_string(eff_tr.size()) +
                                          " transition matrices for " +
                                          std::to_string(attrs.size()) + " attributes");
  StoryModel m;
  m.enc = EncoderParams::init(cfg, rng);
  m.attributes = std::move(attrs);
  for (size_t b = 0; b < m.attributes.size(); ++b) {
    if (pre_tr[b].labels() != m.attributes[b].labels ||
        eff_tr[b].labels() != m.attributes[b].labels)
      throw ValidationError("E_CONFIG", "StoryModel: transition label space for attribute '" +
                                            m.attributes[b].name +
                                            "' does not match the registry");
    m.heads.pre.push_back(CrfHead::init(cfg.d, cfg.d, std::move(pre_tr[b]), rng));
    m.heads.eff.push_back(CrfHead::init(cfg.d, cfg.d, std::move(eff_tr[b]), rng));
  }
  m.heads.w_confl = Tensor::uniform({2 * cfg.d, 1}, rng);
  m.heads.w_plau = Tensor::uniform({cfg.d, 2}, rng);
  m.heads.w_confl.requires_grad = true;
  m.heads.w_plau.requires_grad = true;
  return m;
}

std::vector<std::pair<std::string, Tensor*>> StoryModel::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& p : enc.named_params())
    if (p.first != "enc.w_s" && p.first != "enc.w_e") out.push_back(std::move(p));
  for (size_t b = 0; b < heads.pre.size(); ++b) {
    const std::string base = "attr" + std::to_string(b);
    for (auto& p : heads.pre[b].named_params(base + ".pre")) out.push_back(std::move(p));
    for (auto& p : heads.eff[b].named_params(base + ".eff")) out.push_back(std::move(p));
  }
  out.emplace_back("confl.w", &heads.w_confl);
  out.emplace_back("plau.w", &heads.w_plau);
  return out;
}

void StoryModel::save(const std::string& path) const {
  json j;
  j["format"] = 1;
  j["kind"] = "story";
  j["encoder"] = json::parse(encoder_config_to_json(enc.cfg));
  json attrs = json::array();
  for (const auto& a : attributes) attrs.push_back({{"name", a.name}, {"labels", a.labels}});
  j["attributes"] = std::move(attrs);
  json pre = json::array(), eff = json::array();
  for (const auto& h : heads.pre) pre.push_back(json::parse(h.transition.to_json()));
  for (const auto& h : heads.eff) eff.push_back(json::parse(h.transition.to_json()));
  j["pre_transitions"] = std::move(pre);
  j["eff_transitions"] = std::move(eff);
  json tensors;
  auto* self = const_cast<StoryModel*>(this);
  for (const auto& [name, t] : self->named_params())
    if (!name.ends_with(".psi")) tensors[name] = tensor_to_json(*t);
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw IoError("E_IO", "cannot write checkpoint '" + path + "'");
  out << j.dump() << "\n";
}

StoryModel StoryModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("E_IO", "cannot read checkpoint '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", "checkpoint '" + path + "': " + e.what());
  }
  if (j.value("format", 0) != 1 || j.value("kind", "") != "story")
    throw ValidationError("E_PARSE", "checkpoint '" + path + "' is not a story model");
  EncoderConfig cfg;
  std::vector<AttributeDef> attrs;
  std::vector<TransitionMatrix> pre, eff;
  try {
    cfg = encoder_config_from_json(j.at("encoder").dump());
    for (const auto& a : j.at("attributes"))
      attrs.push_back({a.at("name").get<std::string>(), a.at("labels").get<int>()});
    auto read_tr = [&](const char* key) {
      std::vector<TransitionMatrix> out;
      for (const auto& t : j.at(key)) out.push_back(TransitionMatrix::from_json(t.dump()));
      return out;
    };
    pre = read_tr("pre_transitions");
    eff = read_tr("eff_transitions");
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", "checkpoint '" + path + "': " + e.what());
  }
  if (pre.size() != attrs.size() || eff.size() != attrs.size())
    throw ValidationError("E_PARSE", "checkpoint '" + path +
                                         "': transition count does not match attributes");
  Rng rng(0);
  StoryModel m = StoryModel::init(cfg, std::move(attrs), std::move(pre), std::move(eff), rng);
  load_named_tensors(j["tensors"], m.named_params(), path, ".psi");
  return m;
}

StoryPriors story_priors(const StorySplit& split) {
  const size_t B = split.attributes.size();
  if (B == 0) throw ValidationError("E_CONFIG", "story_priors: empty attribute registry");
  std::vector<std::vector<std::vector<int>>> pre_seqs(B), eff_seqs(B);
  for (const auto& pair : split.pairs)
    for (const auto& story : pair.stories)
      for (const auto& ent : story.entities)
        for (size_t b = 0; b < B; ++b) {
          pre_seqs[b].push_back(gold_side(ent.pre, b));
          eff_seqs[b].push_back(gold_side(ent.eff, b));
        }
  if (pre_seqs[0].empty())
    throw ValidationError("E_EMPTY_CORPUS",
                          "story_priors: split '" + split.name + "' has no entity annotations");
  StoryPriors priors;
  for (size_t b = 0; b < B; ++b) {
    priors.pre.push_back(init_prior(pre_seqs[b], split.attributes[b].labels));
    priors.eff.push_back(init_prior(eff_seqs[b], split.attributes[b].labels));
  }
  return priors;
}

Tape::VarId story_encode(TapeBinding& bind, const std::vector<std::string>& sentences,
                         const std::string& story_id, const std::string& entity,
                         StoryModel& model, const Ablations& ab,
                         std::vector<TruncationEvent>* truncations) {
  if (sentences.empty())
    throw ValidationError("E_LENGTH", "story_encode: story '" + story_id + "' has no sentences");
  Tape& tape = bind.tape();
  const Vocab vocab{model.enc.cfg.vocab};
  const int n = static_cast<int>(sentences.size());
  const int d = model.enc.cfg.d;
  std::vector<Tape::VarId> rows;
  rows.reserve(n);
  for (int t = 1; t <= n; ++t) {
    const StepInput input =
        build_step_input(sentences, story_id, entity, t, vocab, model.enc.cfg, ab, truncations);
    const Tape::VarId enc = encode(bind, input, model.enc, ab.no_t);
    rows.push_back(tape.slice(enc, 0, 1, 0, d));
  }
  return tape.concat_rows(rows);
}

Tape::VarId conflict_logits(TapeBinding& bind, Tape::VarId cls, StoryModel& model) {
  Tape& tape = bind.tape();
  const int n = tape.val(cls).rows();
  if (n < 2)
    throw ValidationError("E_LENGTH",
                          "conflict_logits: need at least 2 sentences, got " + std::to_string(n));
  std::vector<int> left, right;
  for (int t = 1; t < n; ++t)
    for (int j = t + 1; j <= n; ++j) {
      left.push_back(t - 1);
      right.push_back(j - 1);
    }
  const Tape::VarId pairs =
      tape.concat_cols({tape.gather_rows(cls, left), tape.gather_rows(cls, right)});
  return tape.transpose(tape.matmul(pairs, bind.var(model.heads.w_confl)));
}

Tape::VarId plausibility_logits(TapeBinding& bind, Tape::VarId cls, StoryModel& model) {
  Tape& tape = bind.tape();
  const int n = tape.val(cls).rows();
  Tensor avg = Tensor::zeros({1, n});
  std::fill(avg.data.begin(), avg.data.end(), 1.0 / static_cast<double>(n));
  const Tape::VarId mean_row = tape.matmul(tape.constant(std::move(avg)), cls);
  return tape.matmul(mean_row, bind.var(model.heads.w_plau));
}

Tape::VarId story_loss_single(TapeBinding& bind, const Story& story, const std::string& story_id,
                              bool plausible, int conflict_flat, StoryModel& model,
                              const StoryTrainConfig& cfg,
                              std::vector<TruncationEvent>* truncations) {
  check_story_gold(story, story_id, model.attributes);
  Tape& tape = bind.tape();
  const size_t B = model.attributes.size();
  const double inv_e = 1.0 / static_cast<double>(story.entities.size());

  std::vector<Tape::VarId> plau_terms, confl_terms, att_terms;
  for (const auto& ent : story.entities) {
    const Tape::VarId cls =
        story_encode(bind, story.sentences, story_id, ent.name, model, cfg.ablations, truncations);
    plau_terms.push_back(tape.cross_entropy(plausibility_logits(bind, cls, model),
                                            {plausible ? 1 : 0}, Tape::Reduction::Sum));
    // Plausible stories have no conflict: the term is absent from the graph,
    // not merely zeroed, so the conflict weights get exactly-zero gradients.
    if (!plausible)
      confl_terms.push_back(tape.cross_entropy(conflict_logits(bind, cls, model), {conflict_flat},
                                               Tape::Reduction::Sum));
    for (size_t b = 0; b < B; ++b) {
      const std::vector<int> gold_pre = gold_side(ent.pre, b);
      const std::vector<int> gold_eff = gold_side(ent.eff, b);
      const Tape::VarId phi_pre = step_emissions(bind, cls, model.heads.pre[b]);
      const Tape::VarId phi_eff = step_emissions(bind, cls, model.heads.eff[b]);
      if (cfg.no_crf) {
        att_terms.push_back(tape.cross_entropy(phi_pre, gold_pre, Tape::Reduction::Sum));
        att_terms.push_back(tape.cross_entropy(phi_eff, gold_eff, Tape::Reduction::Sum));
      } else {
        att_terms.push_back(crf_loss(bind, phi_pre, model.heads.pre[b].transition, gold_pre));
        att_terms.push_back(crf_loss(bind, phi_eff, model.heads.eff[b].transition, gold_eff));
      }
    }
  }

  Tape::VarId total = tape.scale(add_all(tape, plau_terms), inv_e);
  if (!confl_terms.empty())
    total = tape.add(total, tape.scale(add_all(tape, confl_terms), inv_e));
  total = tape.add(
      total, tape.scale(add_all(tape, att_terms), inv_e / static_cast<double>(B)));
  return total;
}

Tape::VarId story_loss(TapeBinding& bind, const StoryPair& pair, StoryModel& model,
                       const StoryTrainConfig& cfg, std::vector<TruncationEvent>* truncations) {
  Tape& tape = bind.tape();
  std::vector<Tape::VarId> terms;
  for (int s = 0; s < 2; ++s) {
    const Story& story = pair.stories[s];
    const bool plausible = pair.plausible_index == s;
    const int flat = plausible ? 0
                               : pair_flat_index(pair.conflict_c1, pair.conflict_c2,
                                                 static_cast<int>(story.sentences.size()));
    terms.push_back(story_loss_single(bind, story, pair.pair_id + "/" + std::to_string(s),
                                      plausible, flat, model, cfg, truncations));
  }
  return tape.add(terms[0], terms[1]);
}

StoryPairPrediction story_predict(const StoryPair& pair, StoryModel& model, const Ablations& ab,
                                  bool no_crf) {
  const size_t B = model.attributes.size();
  StoryPairPrediction out;
  out.pair_id = pair.pair_id;

  std::array<double, 2> p_plausible{};
  std::array<Tensor, 2> confl_avg;
  for (int s = 0; s < 2; ++s) {
    const Story& story = pair.stories[s];
    const std::string story_id = pair.pair_id + "/" + std::to_string(s);
    if (story.entities.empty())
      throw ValidationError("E_MISSING_GOLD",
                            "story_predict: story '" + story_id + "' lists no entities");
    const int n = static_cast<int>(story.sentences.size());
    Tensor plau_sum = Tensor::zeros({1, 2});
    Tensor confl_sum = Tensor::zeros({1, pair_count(n)});
    for (const auto& ent : story.entities) {
      const EntityStoryForward fwd = forward_story_entity(story, story_id, ent.name, model, ab);
      for (int c = 0; c < 2; ++c) plau_sum.at(0, c) += fwd.plau.at(0, c);
      for (int c = 0; c < confl_sum.shape[1]; ++c) confl_sum.at(0, c) += fwd.confl.at(0, c);

      StoryEntityStates dec;
      dec.name = ent.name;
      dec.pre.assign(n, std::vector<int>(B, 0));
      dec.eff.assign(n, std::vector<int>(B, 0));
      for (size_t b = 0; b < B; ++b) {
        auto decode = [&](const Tensor& phi, CrfHead& head) {
          if (no_crf) {
            std::vector<int> labels(n);
            for (int t = 0; t < n; ++t) labels[t] = argmax_row(phi, t);
            return labels;
          }
          return crf_decode(phi, head.transition);
        };
        const std::vector<int> pre = decode(fwd.pre_phi[b], model.heads.pre[b]);
        const std::vector<int> eff = decode(fwd.eff_phi[b], model.heads.eff[b]);
        for (int t = 0; t < n; ++t) {
          dec.pre[t][b] = pre[t];
          dec.eff[t][b] = eff[t];
        }
      }
      out.entities[s].push_back(std::move(dec));
    }
    const double inv_e = 1.0 / static_cast<double>(story.entities.size());
    const double l0 = plau_sum.at(0, 0) * inv_e;
    const double l1 = plau_sum.at(0, 1) * inv_e;
    p_plausible[s] = 1.0 / (1.0 + std::exp(l0 - l1));
    for (auto& v : confl_sum.data) v *= inv_e;
    confl_avg[s] = std::move(confl_sum);
  }

  out.chosen = p_plausible[1] > p_plausible[0] ? 1 : 0;
  const Tensor& confl = confl_avg[1 - out.chosen];
  const auto [c1, c2] =
      pair_from_flat(argmax_row(confl, 0),
                     static_cast<int>(pair.stories[1 - out.chosen].sentences.size()));
  out.conflict_c1 = c1;
  out.conflict_c2 = c2;
  return out;
}

std::vector<StoryPairPrediction> story_predict_split(const StorySplit& split, StoryModel& model,
                                                     const Ablations& ab, bool no_crf) {
  std::vector<StoryPairPrediction> out;
  out.reserve(split.pairs.size());
  for (const auto& pair : split.pairs) out.push_back(story_predict(pair, model, ab, no_crf));
  return out;
}

StoryTrainResult story_train(const StorySplit& split, const EncoderConfig& enc_cfg,
                             const StoryTrainConfig& cfg, const StorySplit* dev) {
  check_story_train_config(cfg);
  if (split.pairs.empty())
    throw ValidationError("E_EMPTY_CORPUS", "story_train: split '" + split.name + "' is empty");

  struct Item {
    const StoryPair* pair;
    bool plausible_only;
  };
  std::vector<Item> items;
  for (const auto& pair : split.pairs) {
    items.push_back({&pair, false});
    if (cfg.upsample_plausible) items.push_back({&pair, true});
  }

  StoryPriors priors = story_priors(split);
  Rng rng(cfg.seed);
  StoryTrainResult res;
  res.model = StoryModel::init(enc_cfg, split.attributes, std::move(priors.pre),
                               std::move(priors.eff), rng);
  res.data_hash = dataset_hash(split);
  res.config_hash = story_config_hash(enc_cfg, cfg);

  Adam opt(res.model.named_params(), cfg.lr);
  const auto& params = opt.params();
  std::vector<Tensor> accum;
  for (const auto& [name, t] : params) accum.push_back(Tensor::zeros(t->shape));
  auto zero_accum = [&] {
    for (auto& g : accum) std::fill(g.data.begin(), g.data.end(), 0.0);
  };

  std::vector<TruncationEvent> truncations;
  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  bool stopped = false;
  for (int epoch = 1; epoch <= cfg.epochs && !stopped; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int pending = 0;
    for (size_t pos = 0; pos < order.size(); ++pos) {
      const Item& item = items[order[pos]];
      Tape tape;
      TapeBinding bind(tape);
      Tape::VarId loss;
      if (item.plausible_only) {
        const int s = item.pair->plausible_index;
        loss = story_loss_single(bind, item.pair->stories[s],
                                 item.pair->pair_id + "/" + std::to_string(s), true, 0,
                                 res.model, cfg, &truncations);
      } else {
        loss = story_loss(bind, *item.pair, res.model, cfg, &truncations);
      }
      const double value = tape.val(loss).at(0, 0);
      if (!std::isfinite(value))
        throw NumericError("E_NONFINITE_LOSS", "story_train: non-finite loss at epoch " +
                                                   std::to_string(epoch) + ", pair '" +
                                                   item.pair->pair_id + "'");
      loss_sum += value;
      tape.backward(loss);
      for (size_t i = 0; i < params.size(); ++i) {
        const Tensor g = bind.grad_of(*params[i].second);
        for (size_t k = 0; k < g.data.size(); ++k) accum[i].data[k] += g.data[k];
      }
      if (++pending == cfg.grad_accum || pos + 1 == order.size()) {
        opt.step(accum);
        zero_accum();
        pending = 0;
      }
    }

    StoryEpochStat stat;
    stat.epoch = epoch;
    stat.mean_loss = loss_sum / static_cast<double>(items.size());
    const bool eval_now =
        cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
    if (eval_now) {
      const StoryReport rep = story_metrics(
          split, story_predict_split(split, res.model, cfg.ablations, cfg.no_crf));
      stat.accuracy = rep.accuracy;
      stat.consistency = rep.consistency;
      if (cfg.stop_accuracy >= 0.0 && rep.accuracy >= cfg.stop_accuracy) stopped = true;
    }
    res.history.push_back(stat);
    res.epochs_run = epoch;
  }

  json manifest;
  manifest["kind"] = "story_train_run";
  manifest["seed"] = cfg.seed;
  manifest["encoder_config"] = json::parse(encoder_config_to_json(enc_cfg));
  manifest["train_config"] = story_train_config_json(cfg);
  manifest["config_hash"] = res.config_hash;
  manifest["data_hash"] = res.data_hash;
  manifest["split"] = split.name;
  manifest["pairs"] = split.pairs.size();
  manifest["items"] = items.size();
  manifest["epochs_planned"] = cfg.epochs;
  manifest["epochs_run"] = res.epochs_run;
  manifest["truncations"] = truncations.size();
  json hist = json::array();
  for (const auto& st : res.history) {
    json h;
    h["epoch"] = st.epoch;
    h["mean_loss"] = st.mean_loss;
    if (st.accuracy >= 0.0) {
      h["accuracy"] = st.accuracy;
      h["consistency"] = st.consistency;
    }
    hist.push_back(std::move(h));
  }
  manifest["history"] = std::move(hist);
  if (dev) {
    const StoryReport rep =
        story_metrics(*dev, story_predict_split(*dev, res.model, cfg.ablations, cfg.no_crf));
    json d;
    d["split"] = dev->name;
    d["data_hash"] = dataset_hash(*dev);
    d["accuracy"] = rep.accuracy;
    d["consistency"] = rep.consistency;
    d["verifiability"] = rep.verifiability;
    manifest["dev"] = std::move(d);
  }
  res.manifest = manifest.dump(2);
  return res;
}

std::string story_train_config_to_json(const StoryTrainConfig& cfg) {
  return story_train_config_json(cfg).dump(2);
}

StoryTrainConfig story_train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", std::string("story train config: ") + e.what());
  }
  static const std::vector<std::string> keys = {
      "lr",     "epochs", "grad_accum",         "seed",       "no_t",
      "no_e",   "no_gc",  "no_go",              "no_crf",     "upsample_plausible",
      "eval_every", "stop_accuracy"};
  for (const auto& [key, _] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ValidationError("E_UNKNOWN_KEY", "story train config: unknown key '" + key + "'");
  StoryTrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.grad_accum = j.value("grad_accum", c.grad_accum);
  c.seed = j.value("seed", c.seed);
  c.ablations.no_t = j.value("no_t", false);
  c.ablations.no_e = j.value("no_e", false);
  c.ablations.no_gc = j.value("no_gc", false);
  c.ablations.no_go = j.value("no_go", false);
  c.no_crf = j.value("no_crf", c.no_crf);
  c.upsample_plausible = j.value("upsample_plausible", c.upsample_plausible);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.stop_accuracy = j.value("stop_accuracy", c.stop_accuracy);
  return c;
}

uint64_t story_config_hash(const EncoderConfig& enc_cfg, const StoryTrainConfig& cfg) {
  return fnv1a(encoder_config_to_json(enc_cfg) + "|" + story_train_config_json(cfg).dump());
}

}  // namespace proctrack
