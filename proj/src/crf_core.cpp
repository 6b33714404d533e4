// SPDX-License-Identifier: Apache-2.0
#include "proctrack/crf_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "proctrack/errors.hpp"

namespace proctrack::crfcore {

double logsumexp(const double* x, int n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, x[i]);
  if (!std::isfinite(mx)) return mx;  // all -inf (or a stray +inf/nan surfaces as-is)
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - mx);
  return mx + std::log(s);
}

namespace {

void check_dims(const Tensor& phi, const Tensor& psi, const char* who) {
  if (phi.shape.size() != 2 || psi.shape.size() != 2)
    throw NumericError("E_SHAPE", std::string(who) + ": phi and psi must be matrices");
  const int a = phi.cols();
  if (psi.rows() != a + 1 || psi.cols() != a)
    throw NumericError("E_SHAPE", std::string(who) + ": psi must be [" + std::to_string(a + 1) +
                                      "," + std::to_string(a) + "], got " + psi.shape_str());
  if (phi.rows() < 1) throw ValidationError("E_EMPTY_SEQ", std::string(who) + ": need n >= 1 steps");
}

}  // namespace

double log_partition(const Tensor& phi, const Tensor& psi) {
  check_dims(phi, psi, "log_partition");
  const int n = phi.rows(), a = phi.cols();
  std::vector<double> alpha(a), nxt(a), buf(a);
  for (int v = 0; v < a; ++v) alpha[v] = psi.at(0, v) + phi.at(0, v);
  for (int t = 1; t < n; ++t) {
    for (int v = 0; v < a; ++v) {
      for (int u = 0; u < a; ++u) buf[u] = alpha[u] + psi.at(u + 1, v);
      nxt[v] = logsumexp(buf.data(), a) + phi.at(t, v);
    }
    alpha.swap(nxt);
  }
  return logsumexp(alpha.data(), a);
}

double path_score(const Tensor& phi, const Tensor& psi, const std::vector<int>& path) {
  check_dims(phi, psi, "path_score");
  const int n = phi.rows(), a = phi.cols();
  if (static_cast<int>(path.size()) != n)
    throw ValidationError("E_PATH_LEN", "path_score: path length " + std::to_string(path.size()) +
                                            " != n " + std::to_string(n));
  for (int y : path)
    if (y < 0 || y >= a) throw ValidationError("E_LABEL_RANGE", "path_score: label out of range");
  double s = psi.at(0, path[0]) + phi.at(0, path[0]);
  for (int t = 1; t < n; ++t) s += psi.at(path[t - 1] + 1, path[t]) + phi.at(t, path[t]);
  return s;
}

void nll_gradients(const Tensor& phi, const Tensor& psi, const std::vector<int>& gold,
                   Tensor& grad_phi, Tensor& grad_psi) {
  check_dims(phi, psi, "nll_gradients");
  const int n = phi.rows(), a = phi.cols();

  // alpha[t][v]: log-sum score of prefixes ending at label v after step t
  std::vector<std::vector<double>> alpha(n, std::vector<double>(a));
  std::vector<std::vector<double>> beta(n, std::vector<double>(a));
  std::vector<double> buf(a);
  for (int v = 0; v < a; ++v) alpha[0][v] = psi.at(0, v) + phi.at(0, v);
  for (int t = 1; t < n; ++t)
    for (int v = 0; v < a; ++v) {
      for (int u = 0; u < a; ++u) buf[u] = alpha[t - 1][u] + psi.at(u + 1, v);
      alpha[t][v] = logsumexp(buf.data(), a) + phi.at(t, v);
    }
  const double logz = logsumexp(alpha[n - 1].data(), a);

  for (int u = 0; u < a; ++u) beta[n - 1][u] = 0.0;
  for (int t = n - 2; t >= 0; --t)
    for (int u = 0; u < a; ++u) {
      for (int v = 0; v < a; ++v) buf[v] = psi.at(u + 1, v) + phi.at(t + 1, v) + beta[t + 1][v];
      beta[t][u] = logsumexp(buf.data(), a);
    }

  grad_phi = Tensor::zeros({n, a});
  grad_psi = Tensor::zeros({a + 1, a});

  for (int t = 0; t < n; ++t)
    for (int v = 0; v < a; ++v) {
      const double lm = alpha[t][v] + beta[t][v] - logz;
      grad_phi.at(t, v) = std::exp(lm);
    }
  // START row marginals coincide with t=0 unary marginals
  for (int v = 0; v < a; ++v) grad_psi.at(0, v) = grad_phi.at(0, v);
  for (int t = 1; t < n; ++t)
    for (int u = 0; u < a; ++u)
      for (int v = 0; v < a; ++v) {
        const double lm =
            alpha[t - 1][u] + psi.at(u + 1, v) + phi.at(t, v) + beta[t][v] - logz;
        grad_psi.at(u + 1, v) += std::exp(lm);
      }

  grad_phi.at(0, gold[0]) -= 1.0;
  grad_psi.at(0, gold[0]) -= 1.0;
  for (int t = 1; t < n; ++t) {
    grad_phi.at(t, gold[t]) -= 1.0;
    grad_psi.at(gold[t - 1] + 1, gold[t]) -= 1.0;
  }
}

std::vector<int> viterbi_path(const Tensor& phi, const Tensor& psi, double* score_out) {
  check_dims(phi, psi, "viterbi_path");
  const int n = phi.rows(), a = phi.cols();
  for (double v : phi.data)
    if (!std::isfinite(v)) throw NumericError("E_NONFINITE", "viterbi_path: phi has non-finite entries");

  std::vector<std::vector<double>> delta(n, std::vector<double>(a));
  std::vector<std::vector<int>> back(n, std::vector<int>(a, -1));
  for (int v = 0; v < a; ++v) delta[0][v] = psi.at(0, v) + phi.at(0, v);
  for (int t = 1; t < n; ++t)
    for (int v = 0; v < a; ++v) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int u = 0; u < a; ++u) {
        const double s = delta[t - 1][u] + psi.at(u + 1, v);
        if (s > best) {  // strict: ties keep the lowest u
          best = s;
          arg = u;
        }
      }
      delta[t][v] = best + phi.at(t, v);
      back[t][v] = arg;
    }

  double best = -std::numeric_limits<double>::infinity();
  int last = 0;
  for (int v = 0; v < a; ++v)
    if (delta[n - 1][v] > best) {
      best = delta[n - 1][v];
      last = v;
    }

  std::vector<int> path(n);
  path[n - 1] = last;
  for (int t = n - 1; t >= 1; --t) path[t - 1] = back[t][path[t]];
  if (score_out) *score_out = best;
  return path;
}

}  // namespace proctrack::crfcore
