// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "proctrack/crf.hpp"
#include "proctrack/encoder.hpp"
#include "proctrack/ingest.hpp"
#include "proctrack/metrics.hpp"
#include "proctrack/rng.hpp"
#include "proctrack/schema.hpp"
#include "proctrack/tape.hpp"

namespace proctrack {

// ---- sentence-pair indexing ----
//
// Conflict candidates are ordered pairs (t, j), 1 <= t < j <= n, flattened
// row-major: (1,2),(1,3),...,(1,n),(2,3),... The flat index is 0-based.
int pair_count(int n);
int pair_flat_index(int t, int j, int n);
std::pair<int, int> pair_from_flat(int flat, int n);

// ---- model ----

// Story-task output layers on top of the shared encoder: one precondition and
// one effect tagging head per attribute (2B heads, each with its own
// transitions), a conflict scorer over sentence pairs, and a plausibility
// classifier over the mean sentence representation. The span extraction
// weights of the encoder are unused here and excluded from the parameter
// list.
struct StoryHeads {
  std::vector<CrfHead> pre;  // B heads, emissions from single [CLS] rows
  std::vector<CrfHead> eff;
  Tensor w_confl;  // [2d, 1]
  Tensor w_plau;   // [d, 2]
};

struct StoryModel {
  EncoderParams enc;
  std::vector<AttributeDef> attributes;
  StoryHeads heads;

  static StoryModel init(const EncoderConfig& cfg, std::vector<AttributeDef> attrs,
                         std::vector<TransitionMatrix> pre_tr,
                         std::vector<TransitionMatrix> eff_tr, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named_params();
  void save(const std::string& path) const;
  static StoryModel load(const std::string& path);
};

// Per-attribute transition priors estimated from the split's own label
// sequences, one matrix per (attribute, side).
struct StoryPriors {
  std::vector<TransitionMatrix> pre;
  std::vector<TransitionMatrix> eff;
};
StoryPriors story_priors(const StorySplit& split);

// ---- forward pieces ----

// Stacked [CLS] encodings of steps 1..n for one (story, entity) pair. Step 0
// is not encoded: with no span head there is nothing to read off it.
Tape::VarId story_encode(TapeBinding& bind, const std::vector<std::string>& sentences,
                         const std::string& story_id, const std::string& entity,
                         StoryModel& model, const Ablations& ab,
                         std::vector<TruncationEvent>* truncations = nullptr);

// Unnormalized conflict scores [1, n(n-1)/2] over sentence pairs: each pair
// (t, j) is scored from concat(row t, row j). Throws E_LENGTH when n < 2.
Tape::VarId conflict_logits(TapeBinding& bind, Tape::VarId cls, StoryModel& model);

// Plausibility logits [1, 2] from the mean sentence representation.
Tape::VarId plausibility_logits(TapeBinding& bind, Tape::VarId cls, StoryModel& model);

// ---- loss ----

struct StoryTrainConfig {
  double lr = 1e-3;
  int epochs = 20;
  int grad_accum = 2;  // micro-batches (story pairs) summed per optimizer step
  uint64_t seed = 1;
  Ablations ablations;  // encoder flags; no_go has no effect on this task
  // Per-step cross-entropy instead of CRF nll and argmax instead of Viterbi
  // for the attribute heads. Ships on: it is the stronger configuration for
  // this task, where effects do not carry over between consecutive steps.
  bool no_crf = true;
  // Emit one extra plausible-story-only training item per pair.
  bool upsample_plausible = false;
  int eval_every = 10;  // epochs between self-eval passes; 0 disables
  double stop_accuracy = -1.0;  // early stop threshold; negative disables
};

// Joint loss for one story given one gold annotation set: plausibility
// cross-entropy plus (implausible stories only) conflict-pair cross-entropy
// plus attribute-tagging nll, each averaged over entities, attributes
// averaged over the registry. For plausible stories the conflict term is not
// built at all, so the conflict weights receive exactly-zero gradients.
// conflict_flat is the gold flat pair index; ignored when plausible.
Tape::VarId story_loss_single(TapeBinding& bind, const Story& story, const std::string& story_id,
                              bool plausible, int conflict_flat, StoryModel& model,
                              const StoryTrainConfig& cfg,
                              std::vector<TruncationEvent>* truncations = nullptr);

// Sum of the two per-story losses of a pair.
Tape::VarId story_loss(TapeBinding& bind, const StoryPair& pair, StoryModel& model,
                       const StoryTrainConfig& cfg,
                       std::vector<TruncationEvent>* truncations = nullptr);

// ---- inference ----

// Full pair prediction: per story, plausibility and conflict logits averaged
// over entities before softmax; the story with the greater plausible-class
// probability is chosen (ties -> story 0) and the conflict pair is read from
// the other story's averaged scores (ties -> lowest flat index). Attribute
// sequences decode per entity via Viterbi, or per-step argmax under no_crf.
StoryPairPrediction story_predict(const StoryPair& pair, StoryModel& model, const Ablations& ab,
                                  bool no_crf);
std::vector<StoryPairPrediction> story_predict_split(const StorySplit& split, StoryModel& model,
                                                     const Ablations& ab, bool no_crf);

// ---- training ----

struct StoryEpochStat {
  int epoch = 0;
  double mean_loss = 0.0;
  double accuracy = -1.0;  // -1 = not evaluated this epoch
  double consistency = -1.0;
};

struct StoryTrainResult {
  StoryModel model;
  std::vector<StoryEpochStat> history;
  int epochs_run = 0;
  uint64_t data_hash = 0;
  uint64_t config_hash = 0;
  std::string manifest;  // JSON: seed, configs, hashes, history, truncations
};

// Full training run over a story split: per-attribute prior-initialized
// transitions from the split's own labels, per-epoch shuffling over pairs,
// gradient accumulation, optional dev tracking. Exactly reproducible given
// (config, data, seed).
StoryTrainResult story_train(const StorySplit& split, const EncoderConfig& enc_cfg,
                             const StoryTrainConfig& cfg, const StorySplit* dev = nullptr);

// Serialized config snapshot used in manifests and run directories.
std::string story_train_config_to_json(const StoryTrainConfig& cfg);
StoryTrainConfig story_train_config_from_json(const std::string& text);
uint64_t story_config_hash(const EncoderConfig& enc_cfg, const StoryTrainConfig& cfg);

}  // namespace proctrack
