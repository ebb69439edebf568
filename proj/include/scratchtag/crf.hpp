#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "scratchtag/core.hpp"

namespace scratchtag {

/// Trainable tag-transition scores: transition(i, j) scores jumping from tag
/// i to tag j, initial(i) scores starting on tag i.
struct TransitionParams {
  Matrix transition;  // K x K
  Vector initial;     // K

  TransitionParams() = default;
  explicit TransitionParams(std::size_t tags)
      : transition(tags, tags, 0.0), initial(tags, 0.0) {}

  std::size_t tags() const { return initial.size(); }
};

struct TransitionGrads {
  Matrix transition;
  Vector initial;

  explicit TransitionGrads(std::size_t tags)
      : transition(tags, tags, 0.0), initial(tags, 0.0) {}
};

/// log sum_i exp(z_i), shifted by the maximum so large scores cannot overflow.
inline double logadd(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("logadd: empty input");
  double m = values[0];
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;  // all -inf (or an inf/NaN input) short-circuits
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

struct WllResult {
  double loss = 0.0;
  Vector grad;  // d loss / d scores = softmax(scores) - onehot(gold)
};

/// Word-level log-likelihood (cross-entropy over tag scores).
inline WllResult wll_loss_grad(std::span<const double> scores, std::size_t gold) {
  if (gold >= scores.size()) throw std::invalid_argument("wll_loss_grad: bad gold tag");
  WllResult r;
  const double z = logadd(scores);
  r.loss = z - scores[gold];
  r.grad.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) r.grad[i] = std::exp(scores[i] - z);
  r.grad[gold] -= 1.0;
  return r;
}

/// Sum of network and transition scores along one tag path. scores is stored
/// position-major: scores(t, k) is the score of tag k at word t.
inline double path_score(const Matrix& scores, const TransitionParams& trans,
                         std::span<const std::int32_t> path) {
  const std::size_t T = scores.rows();
  if (path.size() != T) throw std::invalid_argument("path_score: path length mismatch");
  double s = trans.initial[path[0]] + scores(0, path[0]);
  for (std::size_t t = 1; t < T; ++t)
    s += trans.transition(path[t - 1], path[t]) + scores(t, path[t]);
  return s;
}

/// Forward scores delta(t, k) = logadd over all length-t paths ending in k.
struct TagLattice {
  Matrix delta;  // T x K
  double log_z = 0.0;
};

inline TagLattice forward_logz(const Matrix& scores, const TransitionParams& trans) {
  const std::size_t T = scores.rows();
  const std::size_t K = scores.cols();
  if (T == 0) throw std::invalid_argument("forward_logz: empty sentence");
  TagLattice lat;
  lat.delta = Matrix(T, K);
  Vector work(K);
  for (std::size_t k = 0; k < K; ++k) lat.delta(0, k) = trans.initial[k] + scores(0, k);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < K; ++i)
        work[i] = lat.delta(t - 1, i) + trans.transition(i, k);
      lat.delta(t, k) = scores(t, k) + logadd(work);
    }
  }
  lat.log_z = logadd(lat.delta.row_span(T - 1));
  return lat;
}

struct SllResult {
  double loss = 0.0;
  Matrix score_grad;  // T x K: path posteriors minus gold indicators
  TransitionGrads transition_grad{0};
};

/// Sentence-level log-likelihood: logZ - path_score(gold). Gradients follow
/// the backward recursion through the forward scores; the score gradient at
/// (t, k) is the posterior probability of tag k at word t minus the gold
/// indicator, so every row sums to zero.
inline SllResult sll_loss_grad(const Matrix& scores, const TransitionParams& trans,
                               std::span<const std::int32_t> gold) {
  const std::size_t T = scores.rows();
  const std::size_t K = scores.cols();
  for (auto y : gold)
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw std::invalid_argument("sll_loss_grad: invalid gold path");
  const TagLattice lat = forward_logz(scores, trans);
  SllResult r;
  r.loss = lat.log_z - path_score(scores, trans, gold);
  r.score_grad = Matrix(T, K);
  r.transition_grad = TransitionGrads(K);

  // g(t, i) = d logZ / d delta(t, i); at the last position this is the
  // softmax over final forward scores, earlier positions redistribute it
  // backwards through the recursion.
  Vector g(K), g_prev(K), w(K);
  {
    const double z = logadd(lat.delta.row_span(T - 1));
    for (std::size_t i = 0; i < K; ++i) g[i] = std::exp(lat.delta(T - 1, i) - z);
  }
  for (std::size_t t = T - 1; t > 0; --t) {
    for (std::size_t i = 0; i < K; ++i) r.score_grad(t, i) += g[i];
    std::fill(g_prev.begin(), g_prev.end(), 0.0);
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t i = 0; i < K; ++i) w[i] = lat.delta(t - 1, i) + trans.transition(i, j);
      const double z = logadd(w);
      for (std::size_t i = 0; i < K; ++i) {
        const double p = std::exp(w[i] - z) * g[j];
        g_prev[i] += p;
        r.transition_grad.transition(i, j) += p;
      }
    }
    std::swap(g, g_prev);
  }
  for (std::size_t i = 0; i < K; ++i) {
    r.score_grad(0, i) += g[i];
    r.transition_grad.initial[i] += g[i];
  }

  // gold part of the cost
  r.score_grad(0, gold[0]) -= 1.0;
  r.transition_grad.initial[gold[0]] -= 1.0;
  for (std::size_t t = 1; t < T; ++t) {
    r.score_grad(t, gold[t]) -= 1.0;
    r.transition_grad.transition(gold[t - 1], gold[t]) -= 1.0;
  }
  return r;
}

struct ViterbiResult {
  std::vector<std::int32_t> path;
  double score = 0.0;
};

/// Max-product counterpart of the forward recursion with back-pointers.
/// Ties pick the smaller tag index.
inline ViterbiResult viterbi(const Matrix& scores, const TransitionParams& trans) {
  const std::size_t T = scores.rows();
  const std::size_t K = scores.cols();
  if (T == 0) throw std::invalid_argument("viterbi: empty sentence");
  Vector best(K), next(K);
  std::vector<std::int32_t> back(T * K, 0);  // best previous tag for tag k at word t
  for (std::size_t k = 0; k < K; ++k) best[k] = trans.initial[k] + scores(0, k);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      double b = -std::numeric_limits<double>::infinity();
      std::int32_t arg = 0;
      for (std::size_t i = 0; i < K; ++i) {
        const double s = best[i] + trans.transition(i, k);
        if (s > b) {
          b = s;
          arg = static_cast<std::int32_t>(i);
        }
      }
      next[k] = b + scores(t, k);
      back[t * K + k] = arg;
    }
    std::swap(best, next);
  }
  ViterbiResult r;
  r.score = best[0];
  std::size_t last = 0;
  for (std::size_t k = 1; k < K; ++k) {
    if (best[k] > r.score) {
      r.score = best[k];
      last = k;
    }
  }
  r.path.resize(T);
  r.path[T - 1] = static_cast<std::int32_t>(last);
  for (std::size_t t = T - 1; t > 0; --t)
    r.path[t - 1] = back[t * K + static_cast<std::size_t>(r.path[t])];
  return r;
}

struct RankingResult {
  double loss = 0.0;
  double grad_pos = 0.0;
  double grad_neg = 0.0;
};

/// Pairwise hinge: max(0, 1 - s_pos + s_neg). An exactly-zero margin counts
/// as satisfied (zero gradients).
inline RankingResult ranking_loss_grad(double s_pos, double s_neg) {
  RankingResult r;
  const double margin = 1.0 - s_pos + s_neg;
  if (margin > 0.0) {
    r.loss = margin;
    r.grad_pos = -1.0;
    r.grad_neg = 1.0;
  }
  return r;
}

}  // namespace scratchtag
