// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proctrack/ingest.hpp"
#include "proctrack/rng.hpp"
#include "proctrack/schema.hpp"
#include "proctrack/tape.hpp"

namespace proctrack {

struct EncoderConfig {
  int vocab = 4096;
  int d = 64;
  int layers = 2;
  int heads = 4;
  int ff = 128;
  int m_max = 256;
  int max_span_len = 8;
};

// Training/inference ablation switches (no_go lives in the trainer's decode
// path; it is carried here so one struct travels through the stack).
struct Ablations {
  bool no_t = false;   // drop timestep embeddings
  bool no_e = false;   // question names no entity
  bool no_gc = false;  // step t sees sentences 1..t only (re-padded)
  bool no_go = false;  // per-step argmax instead of Viterbi
};

// Timestep ids.
inline constexpr int kTimestepPad = 0;
inline constexpr int kTimestepPast = 1;
inline constexpr int kTimestepCurrent = 2;
inline constexpr int kTimestepFuture = 3;

// One encoder input: [CLS] "where is {entity}" [SEP] paragraph [SEP] (+ pads
// under no_gc), with per-token timestep ids and paragraph bookkeeping.
struct StepInput {
  std::vector<int> tokens;           // vocab ids
  std::vector<int> tsteps;           // 0..3, pad <=> 0
  std::vector<std::string> surface;  // folded token text; specials in brackets
  std::vector<int> sent_of;          // 1-based sentence index, -1 off-paragraph
  int para_begin = 0;                // first paragraph token
  int para_end = 0;                  // one past the last paragraph token
  int t = 0;
  std::string entity;

  int m() const { return static_cast<int>(tokens.size()); }
};

struct TruncationEvent {
  std::string para_id;
  std::string entity;
  int step = 0;
  int dropped_tokens = 0;
};

// Core builder over a raw sentence list (shared with the story task).
StepInput build_step_input(const std::vector<std::string>& sentences, const std::string& para_id,
                           const std::string& entity, int t, const Vocab& vocab,
                           const EncoderConfig& cfg, const Ablations& ab,
                           std::vector<TruncationEvent>* truncations);

inline StepInput build_step_input(const ProceduralExample& ex, const std::string& entity, int t,
                                  const Vocab& vocab, const EncoderConfig& cfg,
                                  const Ablations& ab,
                                  std::vector<TruncationEvent>* truncations) {
  return build_step_input(ex.sentences, ex.para_id, entity, t, vocab, cfg, ab, truncations);
}

struct EncoderBlockParams {
  Tensor wq, wk, wv, wo;  // [d, d]
  Tensor ff1;             // [d, f]
  Tensor ff2;             // [f, d]
};

struct EncoderParams {
  EncoderConfig cfg;
  Tensor tok;    // [V, d]
  Tensor pos;    // [m_max, d]
  Tensor tstep;  // [4, d]
  Tensor w_s;    // [d, 1]
  Tensor w_e;    // [d, 1]
  std::vector<EncoderBlockParams> blocks;

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named_params();
};

// Softmax attention matrices captured for inspection, one per (layer, head).
struct AttnCapture {
  std::vector<Tensor> weights;
};

// Pre-norm transformer encoder over one step input; returns the [m, d]
// encoding var on the tape.
Tape::VarId encode(TapeBinding& bind, const StepInput& input, EncoderParams& params, bool no_t,
                   AttnCapture* capture = nullptr);

// Start/end span logits, each [1, m].
struct SpanLogits {
  Tape::VarId start;
  Tape::VarId end;
};
SpanLogits span_logits(TapeBinding& bind, Tape::VarId c_enc, EncoderParams& params);

struct SpanDecode {
  int start = 0;
  int end = 0;  // inclusive token indices into the step input
  bool cls = true;
};

// Brute-force argmax of P_Start[i] * P_End[j] over the valid pairs: the
// [CLS]x[CLS] pair plus paragraph pairs with i <= j, j - i < max_span_len.
// Ties resolve to the earliest pair (lowest start, then lowest end).
SpanDecode decode_span(const Tensor& p_start, const Tensor& p_end, const StepInput& input,
                       int max_span_len);

// Surface text of a decoded span; nullopt for the [CLS] pair.
std::optional<Span> decoded_location(const SpanDecode& d, const StepInput& input);

// Gold supervision: first occurrence of the location's token sequence within
// the paragraph region; nullopt when the text cannot be found (trainer falls
// back to the [CLS] target).
std::optional<std::pair<int, int>> find_span_target(const StepInput& input,
                                                    const std::string& location_text);

}  // namespace proctrack
