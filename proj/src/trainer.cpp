// SPDX-License-Identifier: Apache-2.0
#include "proctrack/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "proctrack/errors.hpp"
#include "json_util.hpp"

namespace proctrack {

namespace {

using nlohmann::json;

json encoder_config_json(const EncoderConfig& c) {
  json j;
  j["vocab"] = c.vocab;
  j["d"] = c.d;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["ff"] = c.ff;
  j["m_max"] = c.m_max;
  j["max_span_len"] = c.max_span_len;
  return j;
}

EncoderConfig encoder_config_from(const json& j) {
  EncoderConfig c;
  for (const auto& [key, _] : j.items())
    if (key != "vocab" && key != "d" && key != "layers" && key != "heads" && key != "ff" &&
        key != "m_max" && key != "max_span_len")
      throw ValidationError("E_UNKNOWN_KEY", "encoder config: unknown key '" + key + "'");
  c.vocab = j.value("vocab", c.vocab);
  c.d = j.value("d", c.d);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ff = j.value("ff", c.ff);
  c.m_max = j.value("m_max", c.m_max);
  c.max_span_len = j.value("max_span_len", c.max_span_len);
  return c;
}

json train_config_json(const TrainConfig& c) {
  json j;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["augmented_epochs"] = c.augmented_epochs;
  j["grad_accum"] = c.grad_accum;
  j["seed"] = c.seed;
  j["no_t"] = c.ablations.no_t;
  j["no_e"] = c.ablations.no_e;
  j["no_gc"] = c.ablations.no_gc;
  j["no_go"] = c.ablations.no_go;
  j["loc_divide_by_terms"] = c.loc_divide_by_terms;
  j["eval_every"] = c.eval_every;
  j["stop_action_acc"] = c.stop_action_acc;
  j["stop_span_acc"] = c.stop_span_acc;
  return j;
}

TrainConfig train_config_from(const json& j) {
  static const std::vector<std::string> keys = {
      "lr",    "epochs", "augmented_epochs",     "grad_accum",    "seed",
      "no_t",  "no_e",   "no_gc",                "no_go",         "loc_divide_by_terms",
      "eval_every", "stop_action_acc", "stop_span_acc"};
  for (const auto& [key, _] : j.items())
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ValidationError("E_UNKNOWN_KEY", "train config: unknown key '" + key + "'");
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.augmented_epochs = j.value("augmented_epochs", c.augmented_epochs);
  c.grad_accum = j.value("grad_accum", c.grad_accum);
  c.seed = j.value("seed", c.seed);
  c.ablations.no_t = j.value("no_t", false);
  c.ablations.no_e = j.value("no_e", false);
  c.ablations.no_gc = j.value("no_gc", false);
  c.ablations.no_go = j.value("no_go", false);
  c.loc_divide_by_terms = j.value("loc_divide_by_terms", c.loc_divide_by_terms);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.stop_action_acc = j.value("stop_action_acc", c.stop_action_acc);
  c.stop_span_acc = j.value("stop_span_acc", c.stop_span_acc);
  return c;
}

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.shape[1]; ++c)
    if (t.at(row, c) > t.at(row, best)) best = c;
  return best;
}

void check_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.augmented_epochs < 1)
    throw ValidationError("E_CONFIG", "train: epochs must be >= 1");
  if (cfg.grad_accum < 1) throw ValidationError("E_CONFIG", "train: grad_accum must be >= 1");
  if (!(cfg.lr > 0.0)) throw ValidationError("E_CONFIG", "train: lr must be > 0");
  if (cfg.eval_every < 0) throw ValidationError("E_CONFIG", "train: eval_every must be >= 0");
}

}  // namespace

Adam::Adam(std::vector<std::pair<std::string, Tensor*>> params, double lr, double beta1,
           double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.push_back(Tensor::zeros(t->shape));
    v_.push_back(Tensor::zeros(t->shape));
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size())
    throw ValidationError("E_SHAPE", "Adam: " + std::to_string(grads.size()) +
                                         " gradients for " + std::to_string(params_.size()) +
                                         " parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i].second;
    const Tensor& g = grads[i];
    if (!g.same_shape(p))
      throw ValidationError("E_SHAPE", "Adam: gradient shape " + g.shape_str() +
                                           " != parameter '" + params_[i].first + "' shape " +
                                           p.shape_str());
    for (size_t k = 0; k < p.data.size(); ++k) {
      m_[i].data[k] = beta1_ * m_[i].data[k] + (1.0 - beta1_) * g.data[k];
      v_[i].data[k] = beta2_ * v_[i].data[k] + (1.0 - beta2_) * g.data[k] * g.data[k];
      const double mhat = m_[i].data[k] / bc1;
      const double vhat = v_[i].data[k] / bc2;
      p.data[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

ProceduralModel ProceduralModel::init(const EncoderConfig& cfg, TransitionMatrix tr, Rng& rng) {
  ProceduralModel m;
  m.enc = EncoderParams::init(cfg, rng);
  m.head = CrfHead::init(2 * cfg.d, cfg.d, std::move(tr), rng);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> ProceduralModel::named_params() {
  auto out = enc.named_params();
  for (auto& p : head.named_params("crf")) out.push_back(std::move(p));
  return out;
}

void ProceduralModel::save(const std::string& path) const {
  json j;
  j["format"] = 1;
  j["kind"] = "procedural";
  j["encoder"] = encoder_config_json(enc.cfg);
  j["transition"] = json::parse(head.transition.to_json());
  json tensors;
  auto* self = const_cast<ProceduralModel*>(this);
  for (const auto& [name, t] : self->named_params())
    if (name != "crf.psi") tensors[name] = tensor_to_json(*t);
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw IoError("E_IO", "cannot write checkpoint '" + path + "'");
  out << j.dump() << "\n";
}

ProceduralModel ProceduralModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("E_IO", "cannot read checkpoint '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", "checkpoint '" + path + "': " + e.what());
  }
  if (j.value("format", 0) != 1 || j.value("kind", "") != "procedural")
    throw ValidationError("E_PARSE", "checkpoint '" + path + "' is not a procedural model");
  const EncoderConfig cfg = encoder_config_from(j["encoder"]);
  TransitionMatrix tr = TransitionMatrix::from_json(j["transition"].dump());
  Rng rng(0);
  ProceduralModel m = ProceduralModel::init(cfg, std::move(tr), rng);
  load_named_tensors(j["tensors"], m.named_params(), path, ".psi");
  return m;
}

std::vector<StepInput> build_entity_steps(const ProceduralExample& ex, const std::string& entity,
                                          const Vocab& vocab, const EncoderConfig& cfg,
                                          const Ablations& ab,
                                          std::vector<TruncationEvent>* truncations) {
  std::vector<StepInput> steps;
  const int n = ex.n_steps();
  steps.reserve(n + 1);
  for (int t = 0; t <= n; ++t)
    steps.push_back(build_step_input(ex, entity, t, vocab, cfg, ab, truncations));
  return steps;
}

GoldTargets gold_targets(const std::vector<StepInput>& steps, const EntityTimeline& tl) {
  if (steps.empty() || tl.states.size() != steps.size())
    throw ValidationError("E_MISSING_GOLD",
                          "gold_targets: entity '" + tl.entity + "' has " +
                              std::to_string(tl.states.size()) + " states for " +
                              std::to_string(steps.size()) + " steps");
  if (tl.actions.size() + 1 != tl.states.size())
    throw ValidationError("E_MISSING_GOLD", "gold_targets: entity '" + tl.entity +
                                                "' lacks a derived action sequence");
  GoldTargets g;
  for (size_t t = 0; t < steps.size(); ++t) {
    int s = 0, e = 0;
    if (tl.states[t].tag == StateTag::Location) {
      if (auto span = find_span_target(steps[t], tl.states[t].span->text)) {
        s = span->first;
        e = span->second;
      } else {
        ++g.span_misses;
      }
    }
    g.starts.push_back(s);
    g.ends.push_back(e);
  }
  for (Action a : tl.actions) g.actions.push_back(static_cast<int>(a));
  return g;
}

EntityLoss entity_loss(TapeBinding& bind, const std::vector<StepInput>& steps,
                       const GoldTargets& gold, ProceduralModel& model, const TrainConfig& cfg) {
  Tape& tape = bind.tape();
  const int n1 = static_cast<int>(steps.size());
  if (n1 < 2)
    throw ValidationError("E_SHAPE", "entity_loss: need at least 2 steps, got " +
                                         std::to_string(n1));
  const int m = steps[0].m();
  for (const auto& s : steps)
    if (s.m() != m)
      throw ValidationError("E_SHAPE", "entity_loss: step inputs differ in length (" +
                                           std::to_string(s.m()) + " vs " + std::to_string(m) +
                                           ")");
  const int d = model.enc.cfg.d;
  std::vector<Tape::VarId> cls_rows, start_rows, end_rows;
  for (const auto& step : steps) {
    const Tape::VarId enc = encode(bind, step, model.enc, cfg.ablations.no_t);
    cls_rows.push_back(tape.slice(enc, 0, 1, 0, d));
    const SpanLogits sl = span_logits(bind, enc, model.enc);
    start_rows.push_back(sl.start);
    end_rows.push_back(sl.end);
  }
  const Tape::VarId cls = tape.concat_rows(cls_rows);
  const Tape::VarId starts = tape.concat_rows(start_rows);
  const Tape::VarId ends = tape.concat_rows(end_rows);

  EntityLoss out;
  if (cfg.loc_divide_by_terms) {
    out.loc = tape.add(tape.cross_entropy(starts, gold.starts, Tape::Reduction::Mean),
                       tape.cross_entropy(ends, gold.ends, Tape::Reduction::Mean));
  } else {
    const Tape::VarId sum =
        tape.add(tape.cross_entropy(starts, gold.starts, Tape::Reduction::Sum),
                 tape.cross_entropy(ends, gold.ends, Tape::Reduction::Sum));
    out.loc = tape.scale(sum, 1.0 / static_cast<double>(n1 - 1));
  }
  const Tape::VarId phi = pair_emissions(bind, cls, model.head);
  out.action = cfg.ablations.no_go
                   ? tape.cross_entropy(phi, gold.actions, Tape::Reduction::Sum)
                   : crf_loss(bind, phi, model.head.transition, gold.actions);
  out.total = tape.add(out.loc, out.action);
  return out;
}

EntityForward forward_entity(const std::vector<StepInput>& steps, ProceduralModel& model,
                             bool no_t) {
  Tape tape;
  TapeBinding bind(tape);
  const int d = model.enc.cfg.d;
  EntityForward fwd;
  std::vector<Tape::VarId> cls_rows;
  for (const auto& step : steps) {
    const Tape::VarId enc = encode(bind, step, model.enc, no_t);
    cls_rows.push_back(tape.slice(enc, 0, 1, 0, d));
    const SpanLogits sl = span_logits(bind, enc, model.enc);
    const Tensor& p_start = tape.val(tape.softmax_rows(sl.start));
    const Tensor& p_end = tape.val(tape.softmax_rows(sl.end));
    const SpanDecode dec = decode_span(p_start, p_end, step, model.enc.cfg.max_span_len);
    fwd.spans.push_back(dec);
    fwd.locations.push_back(decoded_location(dec, step));
  }
  if (steps.size() >= 2) {
    const Tape::VarId phi = pair_emissions(bind, tape.concat_rows(cls_rows), model.head);
    fwd.phi = tape.val(phi);
  }
  return fwd;
}

std::vector<int> decode_actions(const EntityForward& fwd, ProceduralModel& model, bool no_go) {
  if (no_go) {
    std::vector<int> actions;
    for (int t = 0; t < fwd.phi.shape[0]; ++t) actions.push_back(argmax_row(fwd.phi, t));
    return actions;
  }
  return crf_decode(fwd.phi, model.head.transition);
}

namespace {

// Action takes precedence over the span decode; used for argmax sequences
// that may break adjacency rules, where the strict deriver would throw.
std::vector<EntityState> lenient_states(const std::vector<int>& actions,
                                        const std::vector<std::optional<Span>>& spans) {
  auto exists_state = [&](size_t t) {
    if (spans[t].has_value()) return EntityState{StateTag::Location, spans[t]};
    return EntityState{StateTag::UnknownLocation, std::nullopt};
  };
  std::vector<EntityState> states(actions.size() + 1);
  const Action first = static_cast<Action>(actions[0]);
  states[0] = (first == Action::Create || first == Action::OutOfCreate ||
               first == Action::OutOfDestroy)
                  ? EntityState{StateTag::NonExistence, std::nullopt}
                  : exists_state(0);
  for (size_t t = 0; t < actions.size(); ++t) {
    switch (static_cast<Action>(actions[t])) {
      case Action::Create:
      case Action::Exist:
      case Action::Move:
        states[t + 1] = exists_state(t + 1);
        break;
      default:
        states[t + 1] = EntityState{StateTag::NonExistence, std::nullopt};
    }
  }
  // A one-step nonexistence dip between two existence states has no legal
  // action reading (it would need Destroy -> Create without the OutOfDestroy
  // gap), so keep the entity present with an unknown location instead.
  for (size_t t = 1; t + 1 < states.size(); ++t)
    if (!states[t].present() && states[t - 1].present() && states[t + 1].present())
      states[t] = EntityState{StateTag::UnknownLocation, std::nullopt};
  return states;
}

}  // namespace

EntityTimeline predict_entity(const ProceduralExample& ex, const std::string& entity,
                              ProceduralModel& model, const Ablations& ab) {
  const Vocab vocab{model.enc.cfg.vocab};
  const std::vector<StepInput> steps = build_entity_steps(ex, entity, vocab, model.enc.cfg, ab);
  const EntityForward fwd = forward_entity(steps, model, ab.no_t);
  const std::vector<int> actions = decode_actions(fwd, model, ab.no_go);

  EntityTimeline tl;
  tl.entity = entity;
  for (int a : actions) tl.actions.push_back(static_cast<Action>(a));
  if (ab.no_go) {
    tl.states = lenient_states(actions, fwd.locations);
  } else {
    // Exist means the entity stays put, so the previous boundary's span wins
    // over the local span head; chained Exists carry the same span forward.
    std::vector<std::optional<Span>> spans = fwd.locations;
    for (size_t t = 1; t < spans.size(); ++t)
      if (tl.actions[t - 1] == Action::Exist) spans[t] = spans[t - 1];
    tl.states = derive_states(tl.actions, spans);
  }
  // The decoded actions steer state assembly; the emitted labels are the ones
  // the final states imply, keeping both views of the timeline consistent
  // (a Move that lands on the previous location reads back as Exist).
  tl.actions = derive_actions(tl.states);
  return tl;
}

std::vector<TrackedEntity> predict_example(const ProceduralExample& ex, ProceduralModel& model,
                                           const Ablations& ab) {
  std::vector<TrackedEntity> out;
  for (const auto& ent : ex.entities) {
    TrackedEntity pred;
    pred.name = ent.name;
    pred.annotated = true;
    pred.pseudo = true;
    pred.timeline = predict_entity(ex, ent.name, model, ab);
    out.push_back(std::move(pred));
  }
  return out;
}

FitStats fit_stats(const ProceduralSplit& split, ProceduralModel& model, const Ablations& ab) {
  const Vocab vocab{model.enc.cfg.vocab};
  FitStats st;
  int action_hits = 0, span_hits = 0;
  for (const auto& ex : split.examples) {
    for (const auto& ent : ex.entities) {
      if (!ent.annotated) continue;
      const auto steps = build_entity_steps(ex, ent.name, vocab, model.enc.cfg, ab);
      const GoldTargets gold = gold_targets(steps, ent.timeline);
      const EntityForward fwd = forward_entity(steps, model, ab.no_t);
      const std::vector<int> actions = decode_actions(fwd, model, ab.no_go);
      for (size_t t = 0; t < actions.size(); ++t) {
        ++st.action_slots;
        if (actions[t] == gold.actions[t]) ++action_hits;
      }
      for (size_t t = 0; t < fwd.spans.size(); ++t) {
        ++st.span_slots;
        if (fwd.spans[t].start == gold.starts[t] && fwd.spans[t].end == gold.ends[t])
          ++span_hits;
      }
    }
  }
  st.action_acc = st.action_slots ? static_cast<double>(action_hits) / st.action_slots : 1.0;
  st.span_acc = st.span_slots ? static_cast<double>(span_hits) / st.span_slots : 1.0;
  return st;
}

TrainResult train(const ProceduralSplit& split, const EncoderConfig& enc_cfg,
                  const TrainConfig& cfg, const ProceduralSplit* dev) {
  check_train_config(cfg);
  const Vocab vocab{enc_cfg.vocab};

  struct Item {
    const ProceduralExample* ex;
    const TrackedEntity* ent;
    std::vector<StepInput> steps;
    GoldTargets gold;
  };
  std::vector<Item> items;
  std::vector<std::vector<Action>> action_corpus;
  std::vector<TruncationEvent> truncations;
  bool has_pseudo = false;
  for (const auto& ex : split.examples) {
    for (const auto& ent : ex.entities) {
      if (!ent.annotated) continue;
      has_pseudo = has_pseudo || ent.pseudo;
      Item item{&ex, &ent, {}, {}};
      item.steps = build_entity_steps(ex, ent.name, vocab, enc_cfg, cfg.ablations, &truncations);
      item.gold = gold_targets(item.steps, ent.timeline);
      action_corpus.push_back(ent.timeline.actions);
      items.push_back(std::move(item));
    }
  }
  if (items.empty())
    throw ValidationError("E_EMPTY_CORPUS", "train: split '" + split.name +
                                                "' has no annotated entities");

  const int epochs = has_pseudo ? cfg.augmented_epochs : cfg.epochs;
  Rng rng(cfg.seed);
  TrainResult res;
  res.model = ProceduralModel::init(enc_cfg, init_prior(action_corpus), rng);
  res.data_hash = dataset_hash(split.examples);
  res.config_hash = config_hash(enc_cfg, cfg);

  Adam opt(res.model.named_params(), cfg.lr);
  const auto& params = opt.params();
  std::vector<Tensor> accum;
  for (const auto& [name, t] : params) accum.push_back(Tensor::zeros(t->shape));
  auto zero_accum = [&] {
    for (auto& g : accum) std::fill(g.data.begin(), g.data.end(), 0.0);
  };

  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  bool stopped = false;
  for (int epoch = 1; epoch <= epochs && !stopped; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int pending = 0;
    for (size_t pos = 0; pos < order.size(); ++pos) {
      const Item& item = items[order[pos]];
      Tape tape;
      TapeBinding bind(tape);
      const EntityLoss loss = entity_loss(bind, item.steps, item.gold, res.model, cfg);
      const double value = tape.val(loss.total).at(0, 0);
      if (!std::isfinite(value))
        throw NumericError("E_NONFINITE_LOSS",
                           "train: non-finite loss at epoch " + std::to_string(epoch) +
                               ", example '" + item.ex->para_id + "', entity '" +
                               item.ent->name + "'");
      loss_sum += value;
      tape.backward(loss.total);
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

    EpochStat stat;
    stat.epoch = epoch;
    stat.mean_loss = loss_sum / static_cast<double>(items.size());
    const bool eval_now =
        cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == epochs);
    if (eval_now) {
      const FitStats fit = fit_stats(split, res.model, cfg.ablations);
      stat.action_acc = fit.action_acc;
      stat.span_acc = fit.span_acc;
      if (cfg.stop_action_acc >= 0.0 && cfg.stop_span_acc >= 0.0 &&
          fit.action_acc >= cfg.stop_action_acc && fit.span_acc >= cfg.stop_span_acc)
        stopped = true;
    }
    res.history.push_back(stat);
    res.epochs_run = epoch;
  }

  json manifest;
  manifest["kind"] = "train_run";
  manifest["seed"] = cfg.seed;
  manifest["encoder_config"] = encoder_config_json(enc_cfg);
  manifest["train_config"] = train_config_json(cfg);
  manifest["config_hash"] = res.config_hash;
  manifest["data_hash"] = res.data_hash;
  manifest["split"] = split.name;
  manifest["entities"] = items.size();
  manifest["pseudo_labeled_data"] = has_pseudo;
  manifest["epochs_planned"] = epochs;
  manifest["epochs_run"] = res.epochs_run;
  manifest["truncations"] = truncations.size();
  json hist = json::array();
  for (const auto& h : res.history) {
    json e;
    e["epoch"] = h.epoch;
    e["mean_loss"] = h.mean_loss;
    if (h.action_acc >= 0.0) {
      e["action_acc"] = h.action_acc;
      e["span_acc"] = h.span_acc;
    }
    hist.push_back(std::move(e));
  }
  manifest["history"] = std::move(hist);
  if (dev) {
    const FitStats fit = fit_stats(*dev, res.model, cfg.ablations);
    json d;
    d["split"] = dev->name;
    d["data_hash"] = dataset_hash(dev->examples);
    d["action_acc"] = fit.action_acc;
    d["span_acc"] = fit.span_acc;
    manifest["dev"] = std::move(d);
  }
  res.manifest = manifest.dump(2);
  return res;
}

AugmentResult augment(const ProceduralSplit& gold, const ProceduralSplit& pool,
                      ProceduralModel& model, const Ablations& ab) {
  AugmentResult res;
  res.mixed = gold;
  res.mixed.name = gold.name + "+pseudo";
  for (const auto& ex : pool.examples) {
    if (ex.entities.empty()) {
      res.warnings.push_back("pool example '" + ex.para_id +
                             "' has no entities; skipped (entity discovery is out of scope)");
      ++res.skipped;
      continue;
    }
    ProceduralExample labeled;
    labeled.para_id = ex.para_id;
    labeled.sentences = ex.sentences;
    labeled.entities = predict_example(ex, model, ab);
    validate_example(labeled);
    res.mixed.examples.push_back(std::move(labeled));
    ++res.labeled;
  }
  res.mixed.stats = compute_procedural_stats(res.mixed.examples);

  json manifest;
  manifest["kind"] = "augment_run";
  manifest["gold_hash"] = dataset_hash(gold.examples);
  manifest["pool_hash"] = dataset_hash(pool.examples);
  manifest["mixed_hash"] = dataset_hash(res.mixed.examples);
  manifest["labeled"] = res.labeled;
  manifest["skipped"] = res.skipped;
  manifest["warnings"] = res.warnings;
  res.manifest = manifest.dump(2);
  return res;
}

std::string train_config_to_json(const TrainConfig& cfg) { return train_config_json(cfg).dump(2); }

std::string encoder_config_to_json(const EncoderConfig& cfg) {
  return encoder_config_json(cfg).dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return train_config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", std::string("train config: ") + e.what());
  }
}

EncoderConfig encoder_config_from_json(const std::string& text) {
  try {
    return encoder_config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ValidationError("E_PARSE", std::string("encoder config: ") + e.what());
  }
}

uint64_t config_hash(const EncoderConfig& enc_cfg, const TrainConfig& cfg) {
  return fnv1a(encoder_config_json(enc_cfg).dump() + "|" + train_config_json(cfg).dump());
}

}  // namespace proctrack
