// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "proctrack/ingest.hpp"
#include "proctrack/schema.hpp"

namespace proctrack {

// Every tie/undefined-value convention used below is spelled out in
// docs/metrics.md; evaluators are pure functions of their inputs.

struct Tally {
  int64_t asked = 0;
  int64_t correct = 0;
  // Fraction answered correctly; a category nobody asked is vacuously 1.
  double rate() const { return asked ? static_cast<double>(correct) / asked : 1.0; }
};

// Per (paragraph, entity, event in {created, moved, destroyed}) accuracy.
// cat1: did the event happen; cat2: at which steps (asked only when gold and
// prediction both say it happened); cat3: at which locations (same gating).
struct SentenceLevelReport {
  Tally cat1, cat2, cat3;
  double cat1_acc = 1.0, cat2_acc = 1.0, cat3_acc = 1.0;
  double macro_avg = 1.0;  // mean of the three category accuracies
  double micro_avg = 1.0;  // pooled correct/asked over every question
  std::vector<std::string> flags;  // gold entities with no aligned prediction

  std::string to_json() const;
  std::string table() const;
};

struct PrF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Paragraph-level tuple retrieval: inputs, outputs, conversions, moves.
// Precision/recall are averaged over paragraphs first; F1 and the overall
// row are computed from those averages (macro over categories).
struct DocumentLevelReport {
  PrF1 inputs, outputs, conversions, moves, overall;

  std::string to_json() const;
  std::string table() const;
};

// One evaluated story pair: which story was picked as plausible, the conflict
// sentence pair read from the other story, and per-story attribute labels in
// the same layout as gold annotations.
struct StoryPairPrediction {
  std::string pair_id;
  int chosen = 0;
  int conflict_c1 = 0;
  int conflict_c2 = 0;
  std::array<std::vector<StoryEntityStates>, 2> entities;
};

// accuracy >= consistency >= verifiability by construction: each later
// metric is the earlier one AND an extra condition.
struct StoryReport {
  double accuracy = 1.0;
  double consistency = 1.0;
  double verifiability = 1.0;
  std::vector<std::string> attribute_names;
  std::vector<double> pre_f1;  // per attribute, registry order
  std::vector<double> eff_f1;
  double pre_f1_macro = 1.0;
  double eff_f1_macro = 1.0;
  double attr_f1_macro = 1.0;  // mean of the two sides
  int64_t pairs = 0;
  std::vector<std::string> flags;  // gold pairs/entities with no prediction

  std::string to_json() const;
  std::string table() const;
};

SentenceLevelReport sentence_level(const ProceduralSplit& gold, const ProceduralSplit& pred);
DocumentLevelReport document_level(const ProceduralSplit& gold, const ProceduralSplit& pred);
StoryReport story_metrics(const StorySplit& gold, const std::vector<StoryPairPrediction>& pred);

// Interchange format for story evaluation, one pair per line:
//   {"pair_id","chosen","conflict":[c1,c2],
//    "attributes":[[{"name","pre":[[...]...],"eff":[[...]...]}...] x2]}
void save_story_predictions(const std::vector<StoryPairPrediction>& preds,
                            const std::string& path);
std::vector<StoryPairPrediction> load_story_predictions(const std::string& path);

}  // namespace proctrack
