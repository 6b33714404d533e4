// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "proctrack/rng.hpp"
#include "proctrack/schema.hpp"
#include "proctrack/tape.hpp"
#include "proctrack/tensor.hpp"

namespace proctrack {

// Transitions never observed in the initializing corpus are pinned at this
// sentinel. exp(-1e4) underflows to exactly 0, so blocked paths drop out of
// the partition function without producing NaNs.
inline constexpr double kBlockedScore = -1e4;

// Transition scores for a linear-chain CRF. Row 0 is a virtual START symbol;
// row u+1 scores transitions out of label u. Blocked entries keep the
// sentinel score and receive exactly-zero gradients (enforced by the tape op).
struct TransitionMatrix {
  Tensor psi;         // [labels+1, labels]
  Tensor blocked;     // [labels+1, labels], 1.0 where blocked
  Tensor pair_count;  // [labels+1, labels]; row 0 holds first-label counts
  Tensor out_count;   // [labels+1, 1]; row 0 holds the sequence count
  bool trainable = true;

  int labels() const { return psi.shape[1]; }
  bool is_blocked(int row, int v) const { return blocked.at(row, v) != 0.0; }

  std::string to_json() const;
  static TransitionMatrix from_json(const std::string& text);
};

// psi[u+1][v] = log(Num(u,v)/Num(u)) over adjacent pairs in the corpus;
// psi[0][v] = log(Num_first(v)/N_sequences). Unseen pairs are blocked and the
// raw counts are kept for audit. Every unblocked row exp-sums to 1.
TransitionMatrix init_prior(const std::vector<std::vector<int>>& sequences, int labels);
TransitionMatrix init_prior(const std::vector<std::vector<Action>>& sequences);

// All-zero scores, nothing blocked: a maximally uninformative matrix for
// tests and freshly constructed heads.
TransitionMatrix uniform_transitions(int labels);

// Emission head. Step representations pass through tanh(X W_d) W_a to produce
// unnormalized label scores.
struct CrfHead {
  Tensor w_d;  // [in_dim, d]
  Tensor w_a;  // [d, labels]
  TransitionMatrix transition;

  static CrfHead init(int in_dim, int d, TransitionMatrix tr, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named_params(const std::string& prefix);
};

// Emission scores from consecutive step encodings: row t of the result scores
// the action between steps t and t+1, computed from concat(cls[t], cls[t+1]).
// cls is [(n+1), d]; the result is [n, labels]. Expects w_d rows == 2d.
Tape::VarId pair_emissions(TapeBinding& bind, Tape::VarId cls, CrfHead& head);

// Emission scores from single step encodings: [n, d] -> [n, labels].
// Expects w_d rows == d.
Tape::VarId step_emissions(TapeBinding& bind, Tape::VarId rows, CrfHead& head);

// Negative log-likelihood of the gold path: -(score(gold) - logZ). The
// transition matrix joins the tape as a trainable input when tr.trainable,
// otherwise as a constant. A gold path crossing a blocked transition throws
// unless allow_blocked_gold.
Tape::VarId crf_loss(TapeBinding& bind, Tape::VarId phi, TransitionMatrix& tr,
                     const std::vector<int>& gold, bool allow_blocked_gold = false);

// Most likely label path under (phi, psi) with ties broken toward the lower
// label index at each backtrack step. Throws if the best path crosses a
// blocked transition (only possible when no unblocked path exists at
// competitive score). Every call bumps a process-wide counter so tests can
// prove that decode modes which must bypass Viterbi never reach it.
std::vector<int> crf_decode(const Tensor& phi, const TransitionMatrix& tr,
                            double* score_out = nullptr);

int64_t viterbi_calls();
void reset_viterbi_calls();

}  // namespace proctrack
