// SPDX-License-Identifier: Apache-2.0
#include "proctrack/tape.hpp"

#include <cmath>
#include <limits>

#include "proctrack/crf_core.hpp"
#include "proctrack/errors.hpp"
#include "proctrack/kernels.hpp"

namespace proctrack {

namespace {

std::string dims2(const Tensor& a, const Tensor& b) {
  return a.shape_str() + " x " + b.shape_str();
}

Tensor transposed(const Tensor& a) {
  Tensor out = Tensor::zeros({a.cols(), a.rows()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

}  // namespace

Tape::VarId Tape::push(Tensor value, bool needs) {
  vals_.push_back(std::move(value));
  grads_.emplace_back();
  needs_.push_back(needs);
  return static_cast<VarId>(vals_.size() - 1);
}

void Tape::record(Op op, VarId out, std::vector<VarId> in, std::vector<int> iaux,
                  std::vector<double> daux) {
  nodes_.push_back(Node{op, out, std::move(in), std::move(iaux), std::move(daux)});
}

void Tape::check_open(const char* op) const {
  if (backward_done_)
    throw NumericError("E_TAPE_CLOSED", std::string(op) + ": tape already ran backward; tapes are single-use");
}

void Tape::check_var(VarId id, const char* op) const {
  if (id < 0 || id >= static_cast<VarId>(vals_.size()))
    throw NumericError("E_BAD_VAR", std::string(op) + ": unknown var id " + std::to_string(id));
}

bool Tape::any_needs(const std::vector<VarId>& ids) const {
  for (VarId id : ids)
    if (needs_[id]) return true;
  return false;
}

Tape::VarId Tape::input(Tensor t) {
  check_open("input");
  const bool needs = t.requires_grad;
  VarId out = push(std::move(t), needs);
  record(Op::Input, out, {});
  return out;
}

Tape::VarId Tape::constant(Tensor t) {
  check_open("constant");
  t.requires_grad = false;
  VarId out = push(std::move(t), false);
  record(Op::Input, out, {});
  return out;
}

Tape::VarId Tape::matmul(VarId a, VarId b) {
  check_open("matmul");
  check_var(a, "matmul");
  check_var(b, "matmul");
  const Tensor &A = vals_[a], &B = vals_[b];
  if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.rows())
    throw NumericError("E_SHAPE", "matmul: incompatible shapes " + dims2(A, B));
  Tensor out = Tensor::zeros({A.rows(), B.cols()});
  kernels::matmul(A, B, out);
  VarId id = push(std::move(out), any_needs({a, b}));
  record(Op::Matmul, id, {a, b});
  return id;
}

Tape::VarId Tape::add(VarId a, VarId b) {
  check_open("add");
  check_var(a, "add");
  check_var(b, "add");
  const Tensor &A = vals_[a], &B = vals_[b];
  if (!A.same_shape(B)) throw NumericError("E_SHAPE", "add: shape mismatch " + dims2(A, B));
  Tensor out = A;
  out.requires_grad = false;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
  VarId id = push(std::move(out), any_needs({a, b}));
  record(Op::Add, id, {a, b});
  return id;
}

Tape::VarId Tape::mul(VarId a, VarId b) {
  check_open("mul");
  check_var(a, "mul");
  check_var(b, "mul");
  const Tensor &A = vals_[a], &B = vals_[b];
  if (!A.same_shape(B)) throw NumericError("E_SHAPE", "mul: shape mismatch " + dims2(A, B));
  Tensor out = A;
  out.requires_grad = false;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
  VarId id = push(std::move(out), any_needs({a, b}));
  record(Op::Mul, id, {a, b});
  return id;
}

Tape::VarId Tape::scale(VarId a, double s) {
  check_open("scale");
  check_var(a, "scale");
  Tensor out = vals_[a];
  out.requires_grad = false;
  for (double& v : out.data) v *= s;
  VarId id = push(std::move(out), needs_[a]);
  record(Op::Scale, id, {a}, {}, {s});
  return id;
}

Tape::VarId Tape::concat_rows(const std::vector<VarId>& parts) {
  check_open("concat_rows");
  if (parts.empty()) throw NumericError("E_SHAPE", "concat_rows: no inputs");
  int rows = 0;
  const int cols = vals_[parts[0]].cols();
  for (VarId p : parts) {
    check_var(p, "concat_rows");
    if (vals_[p].shape.size() != 2 || vals_[p].cols() != cols)
      throw NumericError("E_SHAPE", "concat_rows: column mismatch at " + vals_[p].shape_str());
    rows += vals_[p].rows();
  }
  Tensor out = Tensor::zeros({rows, cols});
  int r = 0;
  for (VarId p : parts) {
    const Tensor& t = vals_[p];
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<size_t>(r) * cols);
    r += t.rows();
  }
  VarId id = push(std::move(out), any_needs(parts));
  record(Op::ConcatRows, id, parts);
  return id;
}

Tape::VarId Tape::concat_cols(const std::vector<VarId>& parts) {
  check_open("concat_cols");
  if (parts.empty()) throw NumericError("E_SHAPE", "concat_cols: no inputs");
  const int rows = vals_[parts[0]].rows();
  int cols = 0;
  for (VarId p : parts) {
    check_var(p, "concat_cols");
    if (vals_[p].shape.size() != 2 || vals_[p].rows() != rows)
      throw NumericError("E_SHAPE", "concat_cols: row mismatch at " + vals_[p].shape_str());
    cols += vals_[p].cols();
  }
  Tensor out = Tensor::zeros({rows, cols});
  int c = 0;
  for (VarId p : parts) {
    const Tensor& t = vals_[p];
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < t.cols(); ++j) out.at(i, c + j) = t.at(i, j);
    c += t.cols();
  }
  VarId id = push(std::move(out), any_needs(parts));
  record(Op::ConcatCols, id, parts);
  return id;
}

Tape::VarId Tape::slice(VarId a, int r0, int r1, int c0, int c1) {
  check_open("slice");
  check_var(a, "slice");
  const Tensor& A = vals_[a];
  if (A.shape.size() != 2) throw NumericError("E_SHAPE", "slice: need a matrix, got " + A.shape_str());
  if (r0 < 0 || r0 >= r1 || r1 > A.rows() || c0 < 0 || c0 >= c1 || c1 > A.cols())
    throw NumericError("E_SHAPE", "slice: bounds [" + std::to_string(r0) + "," + std::to_string(r1) +
                                      ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                                      ") invalid for " + A.shape_str());
  Tensor out = Tensor::zeros({r1 - r0, c1 - c0});
  for (int i = r0; i < r1; ++i)
    for (int j = c0; j < c1; ++j) out.at(i - r0, j - c0) = A.at(i, j);
  VarId id = push(std::move(out), needs_[a]);
  record(Op::Slice, id, {a}, {r0, r1, c0, c1});
  return id;
}

Tape::VarId Tape::gather_rows(VarId table, const std::vector<int>& ids) {
  check_open("gather_rows");
  check_var(table, "gather_rows");
  const Tensor& T = vals_[table];
  if (T.shape.size() != 2) throw NumericError("E_SHAPE", "gather_rows: need a matrix, got " + T.shape_str());
  for (int r : ids)
    if (r < 0 || r >= T.rows())
      throw NumericError("E_SHAPE", "gather_rows: row " + std::to_string(r) + " outside " + T.shape_str());
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), T.cols()});
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < T.cols(); ++j) out.at(static_cast<int>(i), j) = T.at(ids[i], j);
  VarId id = push(std::move(out), needs_[table]);
  record(Op::GatherRows, id, {table}, ids);
  return id;
}

Tape::VarId Tape::transpose(VarId a) {
  check_open("transpose");
  check_var(a, "transpose");
  const Tensor& A = vals_[a];
  if (A.shape.size() != 2) throw NumericError("E_SHAPE", "transpose: need a matrix, got " + A.shape_str());
  VarId id = push(transposed(A), needs_[a]);
  record(Op::Transpose, id, {a});
  return id;
}

Tape::VarId Tape::tanh(VarId a) {
  check_open("tanh");
  check_var(a, "tanh");
  Tensor out = Tensor::zeros(vals_[a].shape);
  kernels::tanh_map(vals_[a], out);
  VarId id = push(std::move(out), needs_[a]);
  record(Op::Tanh, id, {a});
  return id;
}

Tape::VarId Tape::softmax_rows(VarId a) {
  check_open("softmax_rows");
  check_var(a, "softmax_rows");
  const Tensor& A = vals_[a];
  if (A.shape.size() != 2) throw NumericError("E_SHAPE", "softmax_rows: need a matrix, got " + A.shape_str());
  Tensor out = Tensor::zeros(A.shape);
  kernels::softmax_rows(A, out);
  VarId id = push(std::move(out), needs_[a]);
  record(Op::SoftmaxRows, id, {a});
  return id;
}

Tape::VarId Tape::log_softmax_rows(VarId a) {
  check_open("log_softmax_rows");
  check_var(a, "log_softmax_rows");
  const Tensor& A = vals_[a];
  if (A.shape.size() != 2)
    throw NumericError("E_SHAPE", "log_softmax_rows: need a matrix, got " + A.shape_str());
  Tensor out = Tensor::zeros(A.shape);
  for (int i = 0; i < A.rows(); ++i) {
    const double lse = crfcore::logsumexp(&A.data[static_cast<size_t>(i) * A.cols()], A.cols());
    for (int j = 0; j < A.cols(); ++j) out.at(i, j) = A.at(i, j) - lse;
  }
  VarId id = push(std::move(out), needs_[a]);
  record(Op::LogSoftmaxRows, id, {a});
  return id;
}

Tape::VarId Tape::logsumexp(VarId a) {
  check_open("logsumexp");
  check_var(a, "logsumexp");
  const Tensor& A = vals_[a];
  if (A.numel() == 0) throw NumericError("E_SHAPE", "logsumexp: empty input");
  const double lse = crfcore::logsumexp(A.data.data(), static_cast<int>(A.data.size()));
  VarId id = push(Tensor::scalar(lse), needs_[a]);
  record(Op::LogSumExp, id, {a});
  return id;
}

Tape::VarId Tape::sum(VarId a) {
  check_open("sum");
  check_var(a, "sum");
  double s = 0.0;
  for (double v : vals_[a].data) s += v;
  VarId id = push(Tensor::scalar(s), needs_[a]);
  record(Op::Sum, id, {a});
  return id;
}

Tape::VarId Tape::mean(VarId a) {
  check_open("mean");
  check_var(a, "mean");
  const Tensor& A = vals_[a];
  if (A.numel() == 0) throw NumericError("E_SHAPE", "mean: empty input");
  double s = 0.0;
  for (double v : A.data) s += v;
  VarId id = push(Tensor::scalar(s / static_cast<double>(A.numel())), needs_[a]);
  record(Op::Mean, id, {a});
  return id;
}

Tape::VarId Tape::cross_entropy(VarId logits, const std::vector<int>& targets, Reduction red) {
  check_open("cross_entropy");
  check_var(logits, "cross_entropy");
  const Tensor& L = vals_[logits];
  if (L.shape.size() != 2) throw NumericError("E_SHAPE", "cross_entropy: need a matrix, got " + L.shape_str());
  if (static_cast<int>(targets.size()) != L.rows())
    throw NumericError("E_SHAPE", "cross_entropy: " + std::to_string(targets.size()) +
                                      " targets for " + L.shape_str());
  double total = 0.0;
  for (int i = 0; i < L.rows(); ++i) {
    const int t = targets[i];
    if (t < 0 || t >= L.cols())
      throw ValidationError("E_LABEL_RANGE", "cross_entropy: target " + std::to_string(t) +
                                                 " outside " + L.shape_str());
    const double lse = crfcore::logsumexp(&L.data[static_cast<size_t>(i) * L.cols()], L.cols());
    total += lse - L.at(i, t);
  }
  if (red == Reduction::Mean) total /= static_cast<double>(L.rows());
  std::vector<int> iaux;
  iaux.push_back(red == Reduction::Mean ? 1 : 0);
  iaux.insert(iaux.end(), targets.begin(), targets.end());
  VarId id = push(Tensor::scalar(total), needs_[logits]);
  record(Op::CrossEntropy, id, {logits}, std::move(iaux));
  return id;
}

Tape::VarId Tape::rmsnorm_rows(VarId a, double eps) {
  check_open("rmsnorm_rows");
  check_var(a, "rmsnorm_rows");
  const Tensor& A = vals_[a];
  if (A.shape.size() != 2) throw NumericError("E_SHAPE", "rmsnorm_rows: need a matrix, got " + A.shape_str());
  Tensor out = Tensor::zeros(A.shape);
  const int d = A.cols();
  for (int i = 0; i < A.rows(); ++i) {
    double ms = 0.0;
    for (int j = 0; j < d; ++j) ms += A.at(i, j) * A.at(i, j);
    ms /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(ms + eps);
    for (int j = 0; j < d; ++j) out.at(i, j) = A.at(i, j) * r;
  }
  VarId id = push(std::move(out), needs_[a]);
  record(Op::RmsNormRows, id, {a}, {}, {eps});
  return id;
}

Tape::VarId Tape::crf_nll(VarId phi, VarId psi, VarId blocked, const std::vector<int>& gold,
                          bool allow_blocked_gold) {
  check_open("crf_nll");
  check_var(phi, "crf_nll");
  check_var(psi, "crf_nll");
  check_var(blocked, "crf_nll");
  const Tensor &P = vals_[phi], &S = vals_[psi], &M = vals_[blocked];
  if (!M.same_shape(S))
    throw NumericError("E_SHAPE", "crf_nll: blocked mask " + M.shape_str() + " != psi " + S.shape_str());
  if (static_cast<int>(gold.size()) != P.rows())
    throw ValidationError("E_PATH_LEN", "crf_nll: gold length " + std::to_string(gold.size()) +
                                            " != n " + std::to_string(P.rows()));
  const double score = crfcore::path_score(P, S, gold);  // validates dims and label range
  if (!allow_blocked_gold) {
    if (M.at(0, gold[0]) != 0.0)
      throw ValidationError("E_BLOCKED_GOLD", "crf_nll: gold start label " + std::to_string(gold[0]) +
                                                  " is blocked from START");
    for (size_t t = 1; t < gold.size(); ++t)
      if (M.at(gold[t - 1] + 1, gold[t]) != 0.0)
        throw ValidationError("E_BLOCKED_GOLD", "crf_nll: gold transition " +
                                                    std::to_string(gold[t - 1]) + "->" +
                                                    std::to_string(gold[t]) + " at step " +
                                                    std::to_string(t) + " is blocked");
  }
  const double nll = crfcore::log_partition(P, S) - score;
  std::vector<int> iaux;
  iaux.insert(iaux.end(), gold.begin(), gold.end());
  VarId id = push(Tensor::scalar(nll), any_needs({phi, psi}));
  record(Op::CrfNll, id, {phi, psi, blocked}, std::move(iaux));
  return id;
}

const Tensor& Tape::val(VarId id) const {
  check_var(id, "val");
  return vals_[id];
}

const Tensor& Tape::grad(VarId id) const {
  check_var(id, "grad");
  if (!backward_done_) throw NumericError("E_NO_BACKWARD", "grad: backward has not run");
  return grads_[id];
}

void Tape::backward(VarId loss) {
  check_var(loss, "backward");
  if (backward_done_) throw NumericError("E_TAPE_CLOSED", "backward: tape already ran backward");
  if (vals_[loss].numel() != 1)
    throw NumericError("E_NONSCALAR_LOSS", "backward: loss must be scalar, got " + vals_[loss].shape_str());
  for (size_t i = 0; i < vals_.size(); ++i) grads_[i] = Tensor::zeros(vals_[i].shape);
  grads_[loss].data[0] = 1.0;
  backward_done_ = true;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!needs_[it->out]) continue;
    backprop_node(*it);
  }
}

void Tape::backprop_node(const Node& node) {
  const Tensor& g = grads_[node.out];
  switch (node.op) {
    case Op::Input:
      break;
    case Op::Matmul: {
      const VarId a = node.in[0], b = node.in[1];
      if (needs_[a]) {
        Tensor bt = transposed(vals_[b]);
        Tensor da = Tensor::zeros(vals_[a].shape);
        kernels::matmul(g, bt, da);
        for (size_t i = 0; i < da.data.size(); ++i) grads_[a].data[i] += da.data[i];
      }
      if (needs_[b]) {
        Tensor at = transposed(vals_[a]);
        Tensor db = Tensor::zeros(vals_[b].shape);
        kernels::matmul(at, g, db);
        for (size_t i = 0; i < db.data.size(); ++i) grads_[b].data[i] += db.data[i];
      }
      break;
    }
    case Op::Add:
      for (VarId x : node.in)
        if (needs_[x])
          for (size_t i = 0; i < g.data.size(); ++i) grads_[x].data[i] += g.data[i];
      break;
    case Op::Mul: {
      const VarId a = node.in[0], b = node.in[1];
      if (needs_[a])
        for (size_t i = 0; i < g.data.size(); ++i) grads_[a].data[i] += g.data[i] * vals_[b].data[i];
      if (needs_[b])
        for (size_t i = 0; i < g.data.size(); ++i) grads_[b].data[i] += g.data[i] * vals_[a].data[i];
      break;
    }
    case Op::Scale: {
      const VarId a = node.in[0];
      const double s = node.daux[0];
      if (needs_[a])
        for (size_t i = 0; i < g.data.size(); ++i) grads_[a].data[i] += s * g.data[i];
      break;
    }
    case Op::ConcatRows: {
      int r = 0;
      const int cols = g.cols();
      for (VarId p : node.in) {
        const int pr = vals_[p].rows();
        if (needs_[p])
          for (int i = 0; i < pr; ++i)
            for (int j = 0; j < cols; ++j) grads_[p].at(i, j) += g.at(r + i, j);
        r += pr;
      }
      break;
    }
    case Op::ConcatCols: {
      int c = 0;
      const int rows = g.rows();
      for (VarId p : node.in) {
        const int pc = vals_[p].cols();
        if (needs_[p])
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pc; ++j) grads_[p].at(i, j) += g.at(i, c + j);
        c += pc;
      }
      break;
    }
    case Op::Slice: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const int r0 = node.iaux[0], c0 = node.iaux[2];
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) grads_[a].at(r0 + i, c0 + j) += g.at(i, j);
      break;
    }
    case Op::GatherRows: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      for (size_t i = 0; i < node.iaux.size(); ++i)
        for (int j = 0; j < g.cols(); ++j)
          grads_[a].at(node.iaux[i], j) += g.at(static_cast<int>(i), j);
      break;
    }
    case Op::Transpose: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) grads_[a].at(j, i) += g.at(i, j);
      break;
    }
    case Op::Tanh: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const Tensor& y = vals_[node.out];
      for (size_t i = 0; i < g.data.size(); ++i)
        grads_[a].data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
      break;
    }
    case Op::SoftmaxRows: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const Tensor& y = vals_[node.out];
      for (int i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        for (int j = 0; j < y.cols(); ++j)
          grads_[a].at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
      break;
    }
    case Op::LogSoftmaxRows: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const Tensor& y = vals_[node.out];
      for (int i = 0; i < y.rows(); ++i) {
        double gs = 0.0;
        for (int j = 0; j < y.cols(); ++j) gs += g.at(i, j);
        for (int j = 0; j < y.cols(); ++j)
          grads_[a].at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
      }
      break;
    }
    case Op::LogSumExp: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const double go = g.data[0];
      const double lse = vals_[node.out].data[0];
      for (size_t i = 0; i < vals_[a].data.size(); ++i)
        grads_[a].data[i] += go * std::exp(vals_[a].data[i] - lse);
      break;
    }
    case Op::Sum: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const double go = g.data[0];
      for (double& v : grads_[a].data) v += go;
      break;
    }
    case Op::Mean: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const double go = g.data[0] / static_cast<double>(vals_[a].numel());
      for (double& v : grads_[a].data) v += go;
      break;
    }
    case Op::CrossEntropy: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const Tensor& L = vals_[a];
      const bool mean_red = node.iaux[0] == 1;
      const double w = g.data[0] * (mean_red ? 1.0 / static_cast<double>(L.rows()) : 1.0);
      for (int i = 0; i < L.rows(); ++i) {
        const int t = node.iaux[1 + i];
        const double lse = crfcore::logsumexp(&L.data[static_cast<size_t>(i) * L.cols()], L.cols());
        for (int j = 0; j < L.cols(); ++j) {
          double d = std::exp(L.at(i, j) - lse);
          if (j == t) d -= 1.0;
          grads_[a].at(i, j) += w * d;
        }
      }
      break;
    }
    case Op::RmsNormRows: {
      const VarId a = node.in[0];
      if (!needs_[a]) break;
      const Tensor& x = vals_[a];
      const double eps = node.daux[0];
      const int d = x.cols();
      for (int i = 0; i < x.rows(); ++i) {
        double ms = 0.0, gx = 0.0;
        for (int j = 0; j < d; ++j) ms += x.at(i, j) * x.at(i, j);
        ms /= static_cast<double>(d);
        const double r = 1.0 / std::sqrt(ms + eps);
        for (int j = 0; j < d; ++j) gx += g.at(i, j) * x.at(i, j);
        const double k = r * r * r * gx / static_cast<double>(d);
        for (int j = 0; j < d; ++j) grads_[a].at(i, j) += r * g.at(i, j) - k * x.at(i, j);
      }
      break;
    }
    case Op::CrfNll: {
      const VarId phi = node.in[0], psi = node.in[1], blocked = node.in[2];
      if (!needs_[phi] && !needs_[psi]) break;
      const double go = g.data[0];
      std::vector<int> gold(node.iaux.begin(), node.iaux.end());
      Tensor gphi, gpsi;
      crfcore::nll_gradients(vals_[phi], vals_[psi], gold, gphi, gpsi);
      if (needs_[phi])
        for (size_t i = 0; i < gphi.data.size(); ++i) grads_[phi].data[i] += go * gphi.data[i];
      if (needs_[psi]) {
        const Tensor& M = vals_[blocked];
        for (size_t i = 0; i < gpsi.data.size(); ++i)
          if (M.data[i] == 0.0) grads_[psi].data[i] += go * gpsi.data[i];
      }
      break;
    }
  }
}

}  // namespace proctrack
