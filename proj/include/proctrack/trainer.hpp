// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proctrack/crf.hpp"
#include "proctrack/encoder.hpp"
#include "proctrack/ingest.hpp"
#include "proctrack/rng.hpp"
#include "proctrack/schema.hpp"
#include "proctrack/tape.hpp"

namespace proctrack {

struct TrainConfig {
  double lr = 1e-3;         // toy-encoder default; pretrained-LM regimes use 1e-5
  int epochs = 20;          // runs with pseudo-labeled data auto-switch to
  int augmented_epochs = 6; // augmented_epochs instead
  int grad_accum = 2;       // micro-batches (entities) summed per optimizer step
  uint64_t seed = 1;
  Ablations ablations;
  // Location loss divides by the number of summed step terms (n+1). Setting
  // this false divides by n, mirroring the 1/n scaling some writeups print
  // over the same n+1-term sum.
  bool loc_divide_by_terms = true;
  int eval_every = 10;  // epochs between self-eval passes; 0 disables
  // Early stop once self-eval reaches both thresholds; negative disables.
  double stop_action_acc = -1.0;
  double stop_span_acc = -1.0;
};

// Adam with bias correction. step() consumes gradients aligned with the
// parameter list given at construction; accumulated (summed) gradients are
// applied as one update.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor*>> params, double lr,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<Tensor>& grads);
  const std::vector<std::pair<std::string, Tensor*>>& params() const { return params_; }
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor*>> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Encoder plus action head for the paragraph task. Checkpoints are JSON
// tensor dumps (shortest-round-trip doubles, so save/load is exact).
struct ProceduralModel {
  EncoderParams enc;
  CrfHead head;  // consecutive-step pair emissions -> 6 actions

  static ProceduralModel init(const EncoderConfig& cfg, TransitionMatrix tr, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named_params();
  void save(const std::string& path) const;
  static ProceduralModel load(const std::string& path);
};

// Per-step span supervision plus the gold action sequence. Index 0 (the [CLS]
// position) stands in for states without a concrete location and for location
// text that cannot be found in the step input.
struct GoldTargets {
  std::vector<int> starts;  // n+1
  std::vector<int> ends;    // n+1
  std::vector<int> actions; // n
  int span_misses = 0;      // gold locations that fell back to [CLS]
};

std::vector<StepInput> build_entity_steps(const ProceduralExample& ex, const std::string& entity,
                                          const Vocab& vocab, const EncoderConfig& cfg,
                                          const Ablations& ab,
                                          std::vector<TruncationEvent>* truncations = nullptr);

GoldTargets gold_targets(const std::vector<StepInput>& steps, const EntityTimeline& tl);

// Joint loss for one entity: mean start/end cross-entropy over steps 0..n
// plus the action-sequence nll (or summed per-step cross-entropy under no_go).
struct EntityLoss {
  Tape::VarId total;
  Tape::VarId loc;
  Tape::VarId action;
};
EntityLoss entity_loss(TapeBinding& bind, const std::vector<StepInput>& steps,
                       const GoldTargets& gold, ProceduralModel& model, const TrainConfig& cfg);

// One inference pass over an entity: emission scores plus per-step span
// decodes (probabilities argmaxed over the valid pair set).
struct EntityForward {
  Tensor phi;                                  // [n, actions]
  std::vector<SpanDecode> spans;               // n+1
  std::vector<std::optional<Span>> locations;  // n+1, nullopt = no location
};
EntityForward forward_entity(const std::vector<StepInput>& steps, ProceduralModel& model,
                             bool no_t);

// Raw action decode from emission rows: Viterbi, or per-row argmax under
// no_go (Viterbi is provably never invoked then).
std::vector<int> decode_actions(const EntityForward& fwd, ProceduralModel& model, bool no_go);

// Decoded actions combined with span decodes into a full timeline. Action
// wins over span on conflict: an existence action with a [CLS] span reads as
// UnknownLocation, a non-existence action ignores the span, and Exist carries
// the previous location forward. The emitted action labels are re-derived
// from the assembled states, so the timeline always validates.
EntityTimeline predict_entity(const ProceduralExample& ex, const std::string& entity,
                              ProceduralModel& model, const Ablations& ab);
std::vector<TrackedEntity> predict_example(const ProceduralExample& ex, ProceduralModel& model,
                                           const Ablations& ab);

// Fraction of steps whose action / span decode matches gold, over annotated
// entities.
struct FitStats {
  double action_acc = 0.0;
  double span_acc = 0.0;
  int action_slots = 0;
  int span_slots = 0;
};
FitStats fit_stats(const ProceduralSplit& split, ProceduralModel& model, const Ablations& ab);

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;
  double action_acc = -1.0;  // -1 = not evaluated this epoch
  double span_acc = -1.0;
};

struct TrainResult {
  ProceduralModel model;
  std::vector<EpochStat> history;
  int epochs_run = 0;
  uint64_t data_hash = 0;
  uint64_t config_hash = 0;
  std::string manifest;  // JSON: seed, configs, hashes, history, truncations
};

// Full training run: prior-initialized transitions from the split's own gold
// action sequences, per-epoch shuffling, gradient accumulation, optional dev
// tracking. Exactly reproducible given (config, data, seed).
TrainResult train(const ProceduralSplit& split, const EncoderConfig& enc_cfg,
                  const TrainConfig& cfg, const ProceduralSplit* dev = nullptr);

// Self-training: pseudo-label every entity of the pool's examples with the
// trained model and append them (flagged) to the gold split. Pool examples
// without an entity list are skipped with a warning.
struct AugmentResult {
  ProceduralSplit mixed;
  int labeled = 0;
  int skipped = 0;
  std::vector<std::string> warnings;
  std::string manifest;  // JSON: gold/pool/output hashes and counts
};
AugmentResult augment(const ProceduralSplit& gold, const ProceduralSplit& pool,
                      ProceduralModel& model, const Ablations& ab);

// Serialized config snapshots used in manifests and run directories.
std::string train_config_to_json(const TrainConfig& cfg);
std::string encoder_config_to_json(const EncoderConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
EncoderConfig encoder_config_from_json(const std::string& text);
uint64_t config_hash(const EncoderConfig& enc_cfg, const TrainConfig& cfg);

}  // namespace proctrack
