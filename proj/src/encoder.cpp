// SPDX-License-Identifier: Apache-2.0
#include "proctrack/encoder.hpp"

#include <cmath>

#include "proctrack/errors.hpp"

namespace proctrack {

StepInput build_step_input(const std::vector<std::string>& sentences, const std::string& para_id,
                           const std::string& entity, int t, const Vocab& vocab,
                           const EncoderConfig& cfg, const Ablations& ab,
                           std::vector<TruncationEvent>* truncations) {
  const int n = static_cast<int>(sentences.size());
  if (n == 0) throw ValidationError("E_LENGTH", "build_step_input: no sentences");
  if (t < 0 || t > n)
    throw ValidationError("E_STEP_RANGE", "build_step_input: t=" + std::to_string(t) +
                                              " outside [0," + std::to_string(n) + "]");

  StepInput in;
  in.t = t;
  in.entity = entity;

  auto push = [&](int id, int tstep, const std::string& text, int sent) {
    in.tokens.push_back(id);
    in.tsteps.push_back(tstep);
    in.surface.push_back(text);
    in.sent_of.push_back(sent);
  };

  push(Vocab::kCls, kTimestepCurrent, "[CLS]", -1);
  const std::string question = ab.no_e ? "where is" : "where is " + entity;
  for (const auto& tok : tokenize_text(question))
    push(vocab.id(tok), kTimestepCurrent, tok, -1);
  push(Vocab::kSep, kTimestepCurrent, "[SEP]", -1);

  // paragraph tokens; under no_gc only sentences 1..t are visible
  std::vector<std::pair<std::string, int>> para;  // (token, 1-based sentence)
  int full_para_len = 0;
  for (int s = 1; s <= n; ++s) {
    const auto toks = tokenize_text(sentences[s - 1]);
    full_para_len += static_cast<int>(toks.size());
    if (ab.no_gc && s > t) continue;
    for (const auto& tok : toks) para.emplace_back(tok, s);
  }

  // paragraph-tail truncation against m_max (account for the final [SEP])
  const int budget = cfg.m_max - static_cast<int>(in.tokens.size()) - 1;
  if (budget < 1)
    throw ValidationError("E_M_MAX", "build_step_input: m_max leaves no paragraph room");
  int dropped_visible = 0;
  if (static_cast<int>(para.size()) > budget) {
    dropped_visible = static_cast<int>(para.size()) - budget;
    para.resize(budget);
  }
  // with no_gc the hidden future sentences are not "truncation"; report only
  // tokens lost to m_max
  if (dropped_visible > 0 && truncations)
    truncations->push_back({para_id, entity, t, dropped_visible});

  in.para_begin = static_cast<int>(in.tokens.size());
  for (const auto& [tok, s] : para) {
    int tstep;
    if (t == 0) {
      tstep = kTimestepFuture;
    } else if (s < t) {
      tstep = kTimestepPast;
    } else if (s == t) {
      tstep = kTimestepCurrent;
    } else {
      tstep = kTimestepFuture;
    }
    push(vocab.id(tok), tstep, tok, s);
  }
  in.para_end = static_cast<int>(in.tokens.size());
  push(Vocab::kSep, kTimestepCurrent, "[SEP]", -1);

  // re-pad to the full-paragraph length so every step of one entity shares m
  if (ab.no_gc) {
    int full_len = full_para_len;
    const int full_budget = budget;
    if (full_len > full_budget) full_len = full_budget;
    const int target = in.para_begin + full_len + 1;
    while (static_cast<int>(in.tokens.size()) < target)
      push(Vocab::kPad, kTimestepPad, "[PAD]", -1);
  }
  return in;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
  if (cfg.d % cfg.heads != 0)
    throw ValidationError("E_CONFIG", "encoder: d=" + std::to_string(cfg.d) +
                                          " not divisible by heads=" + std::to_string(cfg.heads));
  if (cfg.vocab <= 4 || cfg.d < 1 || cfg.layers < 1 || cfg.ff < 1 || cfg.m_max < 8 ||
      cfg.max_span_len < 1)
    throw ValidationError("E_CONFIG", "encoder: bad hyperparameters");
  EncoderParams p;
  p.cfg = cfg;
  p.tok = Tensor::uniform({cfg.vocab, cfg.d}, rng);
  p.pos = Tensor::uniform({cfg.m_max, cfg.d}, rng);
  p.tstep = Tensor::uniform({4, cfg.d}, rng);
  p.w_s = Tensor::uniform({cfg.d, 1}, rng);
  p.w_e = Tensor::uniform({cfg.d, 1}, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    EncoderBlockParams b;
    b.wq = Tensor::uniform({cfg.d, cfg.d}, rng);
    b.wk = Tensor::uniform({cfg.d, cfg.d}, rng);
    b.wv = Tensor::uniform({cfg.d, cfg.d}, rng);
    b.wo = Tensor::uniform({cfg.d, cfg.d}, rng);
    b.ff1 = Tensor::uniform({cfg.d, cfg.ff}, rng);
    b.ff2 = Tensor::uniform({cfg.ff, cfg.d}, rng);
    p.blocks.push_back(std::move(b));
  }
  for (auto& [name, t] : p.named_params()) t->requires_grad = true;
  return p;
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"enc.tok", &tok}, {"enc.pos", &pos}, {"enc.tstep", &tstep},
      {"enc.w_s", &w_s}, {"enc.w_e", &w_e}};
  for (size_t l = 0; l < blocks.size(); ++l) {
    const std::string base = "enc.block" + std::to_string(l) + ".";
    out.emplace_back(base + "wq", &blocks[l].wq);
    out.emplace_back(base + "wk", &blocks[l].wk);
    out.emplace_back(base + "wv", &blocks[l].wv);
    out.emplace_back(base + "wo", &blocks[l].wo);
    out.emplace_back(base + "ff1", &blocks[l].ff1);
    out.emplace_back(base + "ff2", &blocks[l].ff2);
  }
  return out;
}

Tape::VarId encode(TapeBinding& bind, const StepInput& input, EncoderParams& params, bool no_t,
                   AttnCapture* capture) {
  Tape& tape = bind.tape();
  const EncoderConfig& cfg = params.cfg;
  const int m = input.m();
  if (m > cfg.m_max)
    throw ValidationError("E_M_MAX", "encode: input length " + std::to_string(m) +
                                         " exceeds m_max " + std::to_string(cfg.m_max));
  for (int id : input.tokens)
    if (id >= cfg.vocab)
      throw ValidationError("E_VOCAB_MISMATCH",
                            "encode: token id " + std::to_string(id) + " outside vocab " +
                                std::to_string(cfg.vocab) +
                                "; the Vocab bucket count must match the encoder vocab");

  std::vector<int> positions(m);
  for (int i = 0; i < m; ++i) positions[i] = i;

  Tape::VarId x = tape.gather_rows(bind.var(params.tok), input.tokens);
  x = tape.add(x, tape.gather_rows(bind.var(params.pos), positions));
  if (!no_t) x = tape.add(x, tape.gather_rows(bind.var(params.tstep), input.tsteps));

  // additive mask: non-pad rows must give exactly zero weight to pad columns
  Tensor mask = Tensor::zeros({m, m});
  for (int j = 0; j < m; ++j)
    if (input.tsteps[j] == kTimestepPad)
      for (int i = 0; i < m; ++i) mask.at(i, j) = -1e30;
  const Tape::VarId mask_var = tape.constant(std::move(mask));

  const int H = cfg.heads;
  const int dh = cfg.d / H;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (auto& block : params.blocks) {
    Tape::VarId normed = tape.rmsnorm_rows(x);
    Tape::VarId q = tape.matmul(normed, bind.var(block.wq));
    Tape::VarId k = tape.matmul(normed, bind.var(block.wk));
    Tape::VarId v = tape.matmul(normed, bind.var(block.wv));
    std::vector<Tape::VarId> heads;
    for (int h = 0; h < H; ++h) {
      const int c0 = h * dh, c1 = (h + 1) * dh;
      Tape::VarId qh = tape.slice(q, 0, m, c0, c1);
      Tape::VarId kh = tape.slice(k, 0, m, c0, c1);
      Tape::VarId vh = tape.slice(v, 0, m, c0, c1);
      Tape::VarId scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), att_scale);
      Tape::VarId weights = tape.softmax_rows(tape.add(scores, mask_var));
      if (capture) capture->weights.push_back(tape.val(weights));
      heads.push_back(tape.matmul(weights, vh));
    }
    Tape::VarId attn = tape.matmul(tape.concat_cols(heads), bind.var(block.wo));
    x = tape.add(x, attn);

    Tape::VarId normed2 = tape.rmsnorm_rows(x);
    Tape::VarId ff = tape.matmul(tape.tanh(tape.matmul(normed2, bind.var(block.ff1))),
                                 bind.var(block.ff2));
    x = tape.add(x, ff);
  }
  return tape.rmsnorm_rows(x);
}

SpanLogits span_logits(TapeBinding& bind, Tape::VarId c_enc, EncoderParams& params) {
  Tape& tape = bind.tape();
  SpanLogits out;
  out.start = tape.transpose(tape.matmul(c_enc, bind.var(params.w_s)));  // [1, m]
  out.end = tape.transpose(tape.matmul(c_enc, bind.var(params.w_e)));
  return out;
}

SpanDecode decode_span(const Tensor& p_start, const Tensor& p_end, const StepInput& input,
                       int max_span_len) {
  const int m = input.m();
  if (p_start.numel() != m || p_end.numel() != m)
    throw NumericError("E_SHAPE", "decode_span: distribution length != m");

  SpanDecode best;  // seeded with the [CLS] pair, which is scanned first
  best.start = 0;
  best.end = 0;
  best.cls = true;
  double best_score = p_start.data[0] * p_end.data[0];

  for (int i = input.para_begin; i < input.para_end; ++i)
    for (int j = i; j < input.para_end && j - i < max_span_len; ++j) {
      const double s = p_start.data[i] * p_end.data[j];
      if (s > best_score) {
        best_score = s;
        best.start = i;
        best.end = j;
        best.cls = false;
      }
    }
  return best;
}

std::optional<Span> decoded_location(const SpanDecode& d, const StepInput& input) {
  if (d.cls) return std::nullopt;
  Span span;
  span.begin = d.start;  // token indices; surface text is the canonical value
  span.end = d.end + 1;
  for (int i = d.start; i <= d.end; ++i) {
    if (i > d.start) span.text += " ";
    span.text += input.surface[i];
  }
  return span;
}

std::optional<std::pair<int, int>> find_span_target(const StepInput& input,
                                                    const std::string& location_text) {
  const auto needle = tokenize_text(location_text);
  if (needle.empty()) return std::nullopt;
  const int len = static_cast<int>(needle.size());
  for (int i = input.para_begin; i + len <= input.para_end; ++i) {
    bool hit = true;
    for (int k = 0; k < len; ++k)
      if (input.surface[i + k] != needle[k]) {
        hit = false;
        break;
      }
    if (hit) return std::make_pair(i, i + len - 1);
  }
  return std::nullopt;
}

}  // namespace proctrack
