// SPDX-License-Identifier: Apache-2.0
#include "proctrack/crf.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "proctrack/crf_core.hpp"
#include "proctrack/errors.hpp"

namespace proctrack {

namespace {

std::atomic<int64_t> g_viterbi_calls{0};

}  // namespace

std::string TransitionMatrix::to_json() const {
  nlohmann::json j;
  j["labels"] = labels();
  j["trainable"] = trainable;
  j["sequences"] = out_count.at(0, 0);
  nlohmann::json rows = nlohmann::json::array();
  for (int u = 0; u < psi.shape[0]; ++u) {
    nlohmann::json row;
    row["from"] = (u == 0) ? std::string("START") : std::to_string(u - 1);
    row["out_count"] = out_count.at(u, 0);
    nlohmann::json scores = nlohmann::json::array();
    nlohmann::json blk = nlohmann::json::array();
    nlohmann::json cnt = nlohmann::json::array();
    for (int v = 0; v < psi.shape[1]; ++v) {
      scores.push_back(psi.at(u, v));
      blk.push_back(blocked.at(u, v) != 0.0);
      cnt.push_back(pair_count.at(u, v));
    }
    row["scores"] = std::move(scores);
    row["blocked"] = std::move(blk);
    row["pair_count"] = std::move(cnt);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2);
}

TransitionMatrix TransitionMatrix::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("E_PARSE", std::string("transition matrix: ") + e.what());
  }
  if (!j.contains("labels") || !j.contains("rows"))
    throw ValidationError("E_PARSE", "transition matrix: missing 'labels' or 'rows'");
  const int a = j["labels"].get<int>();
  const auto& rows = j["rows"];
  if (a < 1 || static_cast<int>(rows.size()) != a + 1)
    throw ValidationError("E_SHAPE", "transition matrix: expected " + std::to_string(a + 1) +
                                         " rows, got " + std::to_string(rows.size()));
  TransitionMatrix tr;
  tr.psi = Tensor::zeros({a + 1, a});
  tr.blocked = Tensor::zeros({a + 1, a});
  tr.pair_count = Tensor::zeros({a + 1, a});
  tr.out_count = Tensor::zeros({a + 1, 1});
  tr.trainable = j.value("trainable", true);
  for (int u = 0; u <= a; ++u) {
    const auto& row = rows[u];
    const auto& scores = row["scores"];
    const auto& blk = row["blocked"];
    const auto& cnt = row["pair_count"];
    if (static_cast<int>(scores.size()) != a || static_cast<int>(blk.size()) != a ||
        static_cast<int>(cnt.size()) != a)
      throw ValidationError("E_SHAPE", "transition matrix: row " + std::to_string(u) +
                                           " does not have " + std::to_string(a) + " columns");
    tr.out_count.at(u, 0) = row.value("out_count", 0.0);
    for (int v = 0; v < a; ++v) {
      tr.psi.at(u, v) = scores[v].get<double>();
      tr.blocked.at(u, v) = blk[v].get<bool>() ? 1.0 : 0.0;
      tr.pair_count.at(u, v) = cnt[v].get<double>();
    }
  }
  tr.psi.requires_grad = tr.trainable;
  return tr;
}

TransitionMatrix init_prior(const std::vector<std::vector<int>>& sequences, int labels) {
  if (labels < 1) throw ValidationError("E_CONFIG", "init_prior: labels must be >= 1");
  if (sequences.empty()) throw ValidationError("E_EMPTY_CORPUS", "init_prior: empty corpus");
  TransitionMatrix tr;
  tr.psi = Tensor::zeros({labels + 1, labels});
  tr.blocked = Tensor::zeros({labels + 1, labels});
  tr.pair_count = Tensor::zeros({labels + 1, labels});
  tr.out_count = Tensor::zeros({labels + 1, 1});

  int64_t total_pairs = 0;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw ValidationError("E_EMPTY_SEQ", "init_prior: empty sequence in corpus");
    for (int y : seq)
      if (y < 0 || y >= labels)
        throw ValidationError("E_LABEL_RANGE", "init_prior: label " + std::to_string(y) +
                                                   " outside [0, " + std::to_string(labels) + ")");
    tr.pair_count.at(0, seq[0]) += 1.0;
    tr.out_count.at(0, 0) += 1.0;
    for (size_t t = 1; t < seq.size(); ++t) {
      tr.pair_count.at(seq[t - 1] + 1, seq[t]) += 1.0;
      tr.out_count.at(seq[t - 1] + 1, 0) += 1.0;
      ++total_pairs;
    }
  }
  if (total_pairs == 0)
    throw ValidationError("E_NO_TRANSITIONS",
                          "init_prior: corpus contains no adjacent label pairs");

  for (int u = 0; u <= labels; ++u) {
    const double num_u = tr.out_count.at(u, 0);
    for (int v = 0; v < labels; ++v) {
      const double num_uv = tr.pair_count.at(u, v);
      if (num_uv > 0.0) {
        tr.psi.at(u, v) = std::log(num_uv / num_u);
      } else {
        tr.psi.at(u, v) = kBlockedScore;
        tr.blocked.at(u, v) = 1.0;
      }
    }
  }
  tr.psi.requires_grad = true;
  return tr;
}

TransitionMatrix init_prior(const std::vector<std::vector<Action>>& sequences) {
  std::vector<std::vector<int>> raw;
  raw.reserve(sequences.size());
  for (const auto& seq : sequences) {
    std::vector<int> s;
    s.reserve(seq.size());
    for (Action a : seq) s.push_back(static_cast<int>(a));
    raw.push_back(std::move(s));
  }
  return init_prior(raw, kActionCount);
}

TransitionMatrix uniform_transitions(int labels) {
  if (labels < 1) throw ValidationError("E_CONFIG", "uniform_transitions: labels must be >= 1");
  TransitionMatrix tr;
  tr.psi = Tensor::zeros({labels + 1, labels});
  tr.blocked = Tensor::zeros({labels + 1, labels});
  tr.pair_count = Tensor::zeros({labels + 1, labels});
  tr.out_count = Tensor::zeros({labels + 1, 1});
  tr.psi.requires_grad = true;
  return tr;
}

CrfHead CrfHead::init(int in_dim, int d, TransitionMatrix tr, Rng& rng) {
  if (in_dim < 1 || d < 1)
    throw ValidationError("E_CONFIG", "CrfHead: dimensions must be >= 1");
  CrfHead head;
  head.w_d = Tensor::uniform({in_dim, d}, rng);
  head.w_a = Tensor::uniform({d, tr.labels()}, rng);
  head.w_d.requires_grad = true;
  head.w_a.requires_grad = true;
  head.transition = std::move(tr);
  return head;
}

std::vector<std::pair<std::string, Tensor*>> CrfHead::named_params(const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back(prefix + ".w_d", &w_d);
  out.emplace_back(prefix + ".w_a", &w_a);
  if (transition.trainable) out.emplace_back(prefix + ".psi", &transition.psi);
  return out;
}

Tape::VarId pair_emissions(TapeBinding& bind, Tape::VarId cls, CrfHead& head) {
  Tape& tape = bind.tape();
  const Tensor& c = tape.val(cls);
  const int steps = c.shape[0];
  const int d = c.shape[1];
  if (steps < 2)
    throw ValidationError("E_SHAPE", "pair_emissions: need at least 2 step rows, got " +
                                         std::to_string(steps));
  if (head.w_d.shape[0] != 2 * d)
    throw ValidationError("E_SHAPE", "pair_emissions: w_d expects " +
                                         std::to_string(head.w_d.shape[0]) +
                                         " inputs but steps have dim " + std::to_string(d));
  const Tape::VarId lo = tape.slice(cls, 0, steps - 1, 0, d);
  const Tape::VarId hi = tape.slice(cls, 1, steps, 0, d);
  const Tape::VarId pairs = tape.concat_cols({lo, hi});
  const Tape::VarId hidden = tape.tanh(tape.matmul(pairs, bind.var(head.w_d)));
  return tape.matmul(hidden, bind.var(head.w_a));
}

Tape::VarId step_emissions(TapeBinding& bind, Tape::VarId rows, CrfHead& head) {
  Tape& tape = bind.tape();
  const Tensor& c = tape.val(rows);
  if (head.w_d.shape[0] != c.shape[1])
    throw ValidationError("E_SHAPE", "step_emissions: w_d expects " +
                                         std::to_string(head.w_d.shape[0]) +
                                         " inputs but rows have dim " + std::to_string(c.shape[1]));
  const Tape::VarId hidden = tape.tanh(tape.matmul(rows, bind.var(head.w_d)));
  return tape.matmul(hidden, bind.var(head.w_a));
}

Tape::VarId crf_loss(TapeBinding& bind, Tape::VarId phi, TransitionMatrix& tr,
                     const std::vector<int>& gold, bool allow_blocked_gold) {
  Tape& tape = bind.tape();
  const Tape::VarId psi = tr.trainable ? bind.var(tr.psi) : tape.constant(tr.psi);
  const Tape::VarId blk = tape.constant(tr.blocked);
  return tape.crf_nll(phi, psi, blk, gold, allow_blocked_gold);
}

std::vector<int> crf_decode(const Tensor& phi, const TransitionMatrix& tr, double* score_out) {
  g_viterbi_calls.fetch_add(1, std::memory_order_relaxed);
  std::vector<int> path = crfcore::viterbi_path(phi, tr.psi, score_out);
  int prev_row = 0;
  for (int y : path) {
    if (tr.is_blocked(prev_row, y))
      throw ValidationError("E_ALL_BLOCKED",
                            "crf_decode: best path crosses a blocked transition; no unblocked "
                            "path exists at competitive score");
    prev_row = y + 1;
  }
  return path;
}

int64_t viterbi_calls() { return g_viterbi_calls.load(std::memory_order_relaxed); }
void reset_viterbi_calls() { g_viterbi_calls.store(0, std::memory_order_relaxed); }

}  // namespace proctrack
