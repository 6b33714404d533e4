// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "proctrack/tensor.hpp"

namespace proctrack {

// Reverse-mode autodiff at tensor granularity. Ops evaluate eagerly and record
// a node; backward() replays the node list once in reverse. Tapes are
// single-use: after backward() both recording and a second backward() throw.
class Tape {
 public:
  using VarId = int32_t;

  enum class Reduction { Sum, Mean };

  // leaves
  VarId input(Tensor t);                 // trainable iff t.requires_grad
  VarId constant(Tensor t);              // never receives a gradient

  // dense ops
  VarId matmul(VarId a, VarId b);        // [r,k]x[k,c] -> [r,c]
  VarId add(VarId a, VarId b);           // same shape
  VarId mul(VarId a, VarId b);           // elementwise, same shape
  VarId scale(VarId a, double s);
  VarId concat_rows(const std::vector<VarId>& parts);
  VarId concat_cols(const std::vector<VarId>& parts);
  VarId slice(VarId a, int r0, int r1, int c0, int c1);  // half-open
  VarId gather_rows(VarId table, const std::vector<int>& ids);
  VarId transpose(VarId a);
  VarId tanh(VarId a);
  VarId softmax_rows(VarId a);
  VarId log_softmax_rows(VarId a);
  VarId logsumexp(VarId a);              // over all elements -> [1,1]
  VarId sum(VarId a);                    // -> [1,1]
  VarId mean(VarId a);                   // -> [1,1]
  // rows of logits vs integer targets -> [1,1]
  VarId cross_entropy(VarId logits, const std::vector<int>& targets, Reduction red);
  VarId rmsnorm_rows(VarId a, double eps = 1e-8);
  // Linear-chain CRF negative log-likelihood (see crf_core.hpp for layout).
  // blocked is a [a+1,a] 0/1 mask (1 = transition blocked); gradients at
  // blocked entries of psi are forced to exactly zero. A gold path crossing a
  // blocked transition throws unless allow_blocked_gold.
  VarId crf_nll(VarId phi, VarId psi, VarId blocked, const std::vector<int>& gold,
                bool allow_blocked_gold = false);

  const Tensor& val(VarId id) const;
  // Runs reverse accumulation from a scalar loss. Single use.
  void backward(VarId loss);
  // Gradient of the loss w.r.t. this var; zeros if unreachable. Only valid
  // after backward().
  const Tensor& grad(VarId id) const;

  bool closed() const { return backward_done_; }
  size_t size() const { return vals_.size(); }

 private:
  enum class Op : uint8_t {
    Input, Matmul, Add, Mul, Scale, ConcatRows, ConcatCols, Slice, GatherRows,
    Transpose, Tanh, SoftmaxRows, LogSoftmaxRows, LogSumExp, Sum, Mean,
    CrossEntropy, RmsNormRows, CrfNll
  };
  struct Node {
    Op op;
    VarId out;
    std::vector<VarId> in;
    std::vector<int> iaux;
    std::vector<double> daux;
  };

  VarId push(Tensor value, bool needs);
  void record(Op op, VarId out, std::vector<VarId> in, std::vector<int> iaux = {},
              std::vector<double> daux = {});
  void check_open(const char* op) const;
  void check_var(VarId id, const char* op) const;
  bool any_needs(const std::vector<VarId>& ids) const;
  void backprop_node(const Node& node);

  std::vector<Tensor> vals_;
  std::vector<Tensor> grads_;
  std::vector<bool> needs_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Binds persistent parameter tensors to a tape, registering each at most once
// so repeated uses (e.g., the embedding table across n+1 step encodes) share
// one var and accumulate into one gradient.
class TapeBinding {
 public:
  explicit TapeBinding(Tape& tape) : tape_(&tape) {}

  Tape::VarId var(Tensor& t) {
    auto it = bound_.find(&t);
    if (it != bound_.end()) return it->second;
    Tensor copy = t;
    copy.requires_grad = true;
    const Tape::VarId id = tape_->input(std::move(copy));
    bound_.emplace(&t, id);
    return id;
  }

  // Gradient accumulated for a bound tensor; zeros if it was never used.
  Tensor grad_of(const Tensor& t) const {
    auto it = bound_.find(&t);
    if (it == bound_.end()) return Tensor::zeros(t.shape);
    return tape_->grad(it->second);
  }

  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  std::unordered_map<const Tensor*, Tape::VarId> bound_;
};

}  // namespace proctrack
