// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "proctrack/schema.hpp"

namespace proctrack {

// Reference 64-bit FNV-1a.
uint64_t fnv1a(std::string_view s);

// Case-folded split on whitespace; punctuation characters become single-char
// tokens ("Water moves." -> ["water", "moves", "."]).
std::vector<std::string> tokenize_text(const std::string& text);

// Hashed vocabulary: ids 0..3 are reserved specials, everything else maps to
// 4 + fnv1a(token) mod (buckets - 4). No training, no files, fully
// deterministic across runs and platforms.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;

  int buckets = 4096;

  int id(const std::string& token) const;
  std::vector<int> ids(const std::string& text) const;
};

struct SplitStats {
  int paragraphs = 0;
  double mean_entities = 0.0;
  double mean_sentences = 0.0;
};

struct ProceduralSplit {
  std::string name;  // train/dev/test
  std::vector<ProceduralExample> examples;
  SplitStats stats;
};

struct StorySplit {
  std::string name;
  std::vector<AttributeDef> attributes;
  std::vector<StoryPair> pairs;
  SplitStats stats;
};

SplitStats compute_procedural_stats(const std::vector<ProceduralExample>& examples);
SplitStats compute_story_stats(const std::vector<StoryPair>& pairs);

// JSONL, one example per line:
//   {"para_id","sentences":[...],"annotated":bool,
//    "entities":[{"name","states":[{"tag":"none"|"unknown"|"loc",
//                                   "span":{"text","sent"}}...]}...]}
// Gold actions are derived from states on load, never read from file.
ProceduralSplit load_procedural_jsonl(const std::string& path, const std::string& split_name);
void save_procedural_jsonl(const std::vector<ProceduralExample>& examples, const std::string& path);

// Grid TSV fixture format, one paragraph per file. First row: "entity" plus
// the n sentences; each further row: entity name plus n+1 state cells,
// "-" = NonExistence, "?" = UnknownLocation, anything else = location text.
ProceduralSplit load_procedural_grid(const std::string& path, const std::string& split_name);

// JSONL with a header line {"attributes":[{"name","labels"}...]}, then
//   {"pair_id","stories":[[...],[...]],"plausible":0|1,"conflict":[c1,c2],
//    "entities":[[story-0 entities],[story-1 entities]]}
// where each entity is {"name","pre":[[...]],"eff":[[...]]} over steps x attrs.
StorySplit load_story_jsonl(const std::string& path, const std::string& split_name);
void save_story_jsonl(const StorySplit& split, const std::string& path);

// Stable content hashes for run manifests (canonical serialization, FNV-1a).
uint64_t dataset_hash(const std::vector<ProceduralExample>& examples);
uint64_t dataset_hash(const StorySplit& split);

// Structural equality used by round-trip tests (offsets excluded; they are
// derived from text on load).
bool structurally_equal(const ProceduralExample& a, const ProceduralExample& b);
bool structurally_equal(const StorySplit& a, const StorySplit& b);

// ---- synthetic corpora ----

struct SynthProceduralConfig {
  int paragraphs = 8;
  int min_sentences = 2;
  int max_sentences = 4;
  int min_entities = 1;
  int max_entities = 2;
  double unannotated_fraction = 0.0;  // tail fraction emitted without gold states
  uint64_t seed = 1;
};

struct SynthStoryConfig {
  int pairs = 8;
  int min_sentences = 3;
  int max_sentences = 5;
  uint64_t seed = 1;
};

// Template-based paragraph generator: every concrete location is a single
// token that appears verbatim in its step's sentence, so span supervision is
// always recoverable from the text.
ProceduralSplit synth_procedural(const SynthProceduralConfig& cfg, const std::string& split_name);

// Two-attribute story pairs (powered, wet; label 0 = irrelevant, 1 = no,
// 2 = yes) with a single enabling/consuming conflict per implausible story.
StorySplit synth_story(const SynthStoryConfig& cfg, const std::string& split_name);

}  // namespace proctrack
