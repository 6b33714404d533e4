// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "proctrack/tensor.hpp"

namespace proctrack::crfcore {

// Linear-chain CRF dynamic programs in log space.
//
// Conventions used everywhere:
//   phi  [n, a]     per-step unnormalized label scores
//   psi  [a+1, a]   transition scores; row 0 is the virtual START symbol,
//                   label u maps to row u+1
//   path score = psi[START][y_1] + phi[0][y_1]
//              + sum_{t>=2} (psi[y_{t-1}+1][y_t] + phi[t-1][y_t])

double logsumexp(const double* x, int n);

// log partition over all a^n paths (forward algorithm)
double log_partition(const Tensor& phi, const Tensor& psi);

double path_score(const Tensor& phi, const Tensor& psi, const std::vector<int>& path);

// Writes d(nll)/d(phi) and d(nll)/d(psi) for nll = logZ - score(gold):
// unary/pairwise marginals minus gold indicators, via forward-backward.
void nll_gradients(const Tensor& phi, const Tensor& psi, const std::vector<int>& gold,
                   Tensor& grad_phi, Tensor& grad_psi);

// Highest-scoring path; ties break toward the lower label index at the final
// step and at every backtrack step. score_out receives the path score.
std::vector<int> viterbi_path(const Tensor& phi, const Tensor& psi, double* score_out);

}  // namespace proctrack::crfcore
