#pragma once

// Pairwise object matching between two frames.
//
// Every detection becomes a fixed-size descriptor
//   f = [T_x, T_y, T_z, R_x, R_z, 0] ++ G ++ appearance
// (reference-frame pose, one zero pad slot, geometry embedding, appearance).
// Stacking descriptors into N x d matrices and concatenating every
// (row of frame a, row of frame b) gives the N x N x 2d pair tensor; a
// per-pair MLP maps each fiber to a similarity. That MLP sees one fiber at a
// time, which is exactly a stack of 1x1 convolutions over the pair tensor.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoloc/error.hpp"
#include "geoloc/geometry.hpp"
#include "geoloc/losses.hpp"
#include "geoloc/mlp.hpp"
#include "geoloc/scene.hpp"
#include "geoloc/tensor.hpp"

namespace geoloc {

inline constexpr int kPoseSlots = 6;
inline constexpr double kDefaultDelta = 8.0;

struct ObjectDescriptor {
  std::vector<double> geometry;    // 6 pose slots ++ G
  std::vector<double> appearance;

  std::size_t dim() const { return geometry.size() + appearance.size(); }

  std::vector<double> fused() const {
    std::vector<double> f = geometry;
    f.insert(f.end(), appearance.begin(), appearance.end());
    return f;
  }

  friend bool operator==(const ObjectDescriptor&, const ObjectDescriptor&) = default;
};

inline ObjectDescriptor build_descriptor(std::span<const double> appearance, const Pose5D& ref_pose,
                                         std::span<const double> embedding) {
  if (ref_pose.frame != FrameKind::Reference)
    fail(ErrorKind::FrameMismatch, "descriptor poses must be expressed in the reference frame");
  ObjectDescriptor d;
  d.geometry = {ref_pose.T.x(), ref_pose.T.y(), ref_pose.T.z(), ref_pose.R[0], ref_pose.R[1], 0.0};
  d.geometry.insert(d.geometry.end(), embedding.begin(), embedding.end());
  d.appearance.assign(appearance.begin(), appearance.end());
  return d;
}

/// N x d matrix, rows past the descriptor count are zero.
inline Tensor build_feature_matrix(const std::vector<ObjectDescriptor>& descriptors, int capacity, std::size_t dim) {
  if (static_cast<int>(descriptors.size()) > capacity)
    fail(ErrorKind::CapacityExceeded, std::to_string(descriptors.size()) + " descriptors exceed capacity " +
                                          std::to_string(capacity));
  Tensor f({static_cast<std::size_t>(capacity), dim});
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    const auto row = descriptors[i].fused();
    if (row.size() != dim) fail(ErrorKind::ShapeMismatch, "descriptor dimension differs from the feature matrix");
    std::copy(row.begin(), row.end(), f.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return f;
}

inline Tensor build_feature_matrix(const std::vector<ObjectDescriptor>& descriptors, int capacity) {
  return build_feature_matrix(descriptors, capacity, descriptors.empty() ? 0 : descriptors.front().dim());
}

/// E[i, j, :] = Fa[i, :] ++ Fb[j, :].
inline Tensor build_pair_tensor(const Tensor& fa, const Tensor& fb) {
  if (fa.rank() != 2 || fb.rank() != 2 || fa.shape != fb.shape)
    fail(ErrorKind::ShapeMismatch, "pair tensor needs two feature matrices of equal shape");
  const std::size_t n = fa.dim(0), d = fa.dim(1);
  Tensor e({n, n, 2 * d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      auto out = e.fiber(i, j);
      std::copy_n(fa.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, out.begin());
      std::copy_n(fb.data.begin() + static_cast<std::ptrdiff_t>(j * d), d, out.begin() + static_cast<std::ptrdiff_t>(d));
    }
  return e;
}

/// Per-pair similarity estimator: a fixed per-feature input scale followed
/// by an MLP with a sigmoid output unit.
struct Scorer {
  MlpParams mlp;
  std::vector<double> input_scale;  // multiplies each pair-tensor feature

  VecX prepare(std::span<const double> pair_features) const {
    if (static_cast<Eigen::Index>(pair_features.size()) != mlp.input_dim())
      fail(ErrorKind::ShapeMismatch, "pair feature length " + std::to_string(pair_features.size()) +
                                         " does not match scorer input " + std::to_string(mlp.input_dim()));
    VecX x(static_cast<Eigen::Index>(pair_features.size()));
    for (std::size_t k = 0; k < pair_features.size(); ++k)
      x[static_cast<Eigen::Index>(k)] = pair_features[k] * (input_scale.empty() ? 1.0 : input_scale[k]);
    return x;
  }

  friend bool operator==(const Scorer&, const Scorer&) = default;
};

struct PairScores {
  Tensor similarity;  // N x N, sigmoid output in (0, 1)
  Tensor logits;      // N x N, pre-sigmoid
};

inline PairScores score_pairs(const Tensor& pair_tensor, const Scorer& scorer) {
  if (pair_tensor.rank() != 3 || pair_tensor.dim(0) != pair_tensor.dim(1))
    fail(ErrorKind::ShapeMismatch, "pair tensor must be N x N x 2d");
  const std::size_t n = pair_tensor.dim(0);
  PairScores out{Tensor({n, n}), Tensor({n, n})};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const MlpTrace t = mlp_trace(scorer.mlp, scorer.prepare(pair_tensor.fiber(i, j)));
      out.logits(i, j) = t.final_pre()[0];
      out.similarity(i, j) = t.output[0];
    }
  return out;
}

/// Which axis each augmented matrix is normalized over.
enum class SoftmaxAxis {
  Candidates,  // each real object's N+1 candidates: rows of S1, columns of S2
  Literal,     // columns of S1, rows of S2
};

/// Raw, augmented and normalized similarities of one frame pair. Indices
/// N (the last row/column) are the null slots. Padded rows/columns (index
/// >= n1 in frame a, >= n2 in frame b) carry zero probability.
struct SimilarityBundle {
  int capacity = 0;
  int n1 = 0;
  int n2 = 0;
  double delta = kDefaultDelta;
  SoftmaxAxis axis = SoftmaxAxis::Candidates;
  Tensor S;         // N x N
  Tensor S1;        // N x (N+1), last column delta
  Tensor S2;        // (N+1) x N, last row delta
  Tensor S1n;       // normalized S1
  Tensor S2n;       // normalized S2
  Tensor S1n_log;   // log S1n, -inf where masked
  Tensor S2n_log;
  Tensor fused;     // (N+1) x (N+1) inference similarity
};

namespace detail {

/// A softmax group: list of (row, col) cells of one augmented matrix.
using Cells = std::vector<std::pair<std::size_t, std::size_t>>;

inline void softmax_group(const Tensor& in, Tensor& prob, Tensor& logp, const Cells& cells) {
  if (cells.empty()) return;
  double peak = -std::numeric_limits<double>::infinity();
  for (auto [r, c] : cells) peak = std::max(peak, in(r, c));
  double total = 0.0;
  for (auto [r, c] : cells) total += std::exp(in(r, c) - peak);
  const double lse = peak + std::log(total);
  for (auto [r, c] : cells) {
    logp(r, c) = in(r, c) - lse;
    prob(r, c) = std::exp(logp(r, c));
  }
}

/// Softmax groups of S1 (which = 1) or S2 (which = 2).
inline std::vector<Cells> softmax_groups(int which, int capacity, int n1, int n2, SoftmaxAxis axis) {
  const auto N = static_cast<std::size_t>(capacity);
  std::vector<Cells> groups;
  const bool by_row = (which == 1) == (axis == SoftmaxAxis::Candidates);
  if (which == 1) {
    // S1 is N x (N+1): real rows < n1, real cols < n2 plus null col N.
    if (by_row) {
      for (int i = 0; i < n1; ++i) {
        Cells g;
        for (int j = 0; j < n2; ++j) g.emplace_back(i, j);
        g.emplace_back(i, N);
        groups.push_back(std::move(g));
      }
    } else {
      for (int j = 0; j < n2; ++j) {
        Cells g;
        for (int i = 0; i < n1; ++i) g.emplace_back(i, j);
        groups.push_back(std::move(g));
      }
      Cells g;
      for (int i = 0; i < n1; ++i) g.emplace_back(i, N);
      groups.push_back(std::move(g));
    }
  } else {
    // S2 is (N+1) x N: real rows < n1 plus null row N, real cols < n2.
    if (!by_row) {
      for (int j = 0; j < n2; ++j) {
        Cells g;
        for (int i = 0; i < n1; ++i) g.emplace_back(i, j);
        g.emplace_back(N, j);
        groups.push_back(std::move(g));
      }
    } else {
      for (int i = 0; i < n1; ++i) {
        Cells g;
        for (int j = 0; j < n2; ++j) g.emplace_back(i, j);
        groups.push_back(std::move(g));
      }
      Cells g;
      for (int j = 0; j < n2; ++j) g.emplace_back(N, j);
      groups.push_back(std::move(g));
    }
  }
  std::erase_if(groups, [](const Cells& g) { return g.empty(); });
  return groups;
}

}  // namespace detail

/// Appends a delta column (S1) and a delta row (S2) to S and normalizes them.
inline SimilarityBundle augment_normalize(const Tensor& S, double delta, int n1, int n2,
                                          SoftmaxAxis axis = SoftmaxAxis::Candidates) {
  if (S.rank() != 2 || S.dim(0) != S.dim(1)) fail(ErrorKind::ShapeMismatch, "similarity matrix must be N x N");
  const int capacity = static_cast<int>(S.dim(0));
  if (n1 < 0 || n2 < 0 || n1 > capacity || n2 > capacity)
    fail(ErrorKind::CapacityExceeded, "object counts exceed the similarity matrix size");
  const auto N = static_cast<std::size_t>(capacity);
  const double ninf = -std::numeric_limits<double>::infinity();

  SimilarityBundle b;
  b.capacity = capacity;
  b.n1 = n1;
  b.n2 = n2;
  b.delta = delta;
  b.axis = axis;
  b.S = S;
  b.S1 = Tensor({N, N + 1}, delta);
  b.S2 = Tensor({N + 1, N}, delta);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) b.S1(i, j) = b.S2(i, j) = S(i, j);
  b.S1n = Tensor({N, N + 1});
  b.S2n = Tensor({N + 1, N});
  b.S1n_log = Tensor({N, N + 1}, ninf);
  b.S2n_log = Tensor({N + 1, N}, ninf);
  for (const auto& g : detail::softmax_groups(1, capacity, n1, n2, axis)) detail::softmax_group(b.S1, b.S1n, b.S1n_log, g);
  for (const auto& g : detail::softmax_groups(2, capacity, n1, n2, axis)) detail::softmax_group(b.S2, b.S2n, b.S2n_log, g);

  b.fused = Tensor({N + 1, N + 1});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) b.fused(i, j) = 0.5 * (b.S1n(i, j) + b.S2n(i, j));
  for (std::size_t j = 0; j < N; ++j) b.fused(N, j) = b.S2n(N, j);
  for (std::size_t i = 0; i < N; ++i) b.fused(i, N) = b.S1n(i, N);
  return b;
}

namespace detail {

inline void check_match_matrix(const SimilarityBundle& b, const MatchMatrix& m) {
  const int N = b.capacity;
  if (m.rows() != N + 1 || m.cols() != N + 1) fail(ErrorKind::ShapeMismatch, "match matrix must be (N+1) x (N+1)");
  for (int i = 0; i < b.n1; ++i)
    if (m.row(i).sum() != 1)
      fail(ErrorKind::DegenerateMatch, "real object " + std::to_string(i) + " of frame a has no unique match entry");
  for (int j = 0; j < b.n2; ++j)
    if (m.col(j).sum() != 1)
      fail(ErrorKind::DegenerateMatch, "real object " + std::to_string(j) + " of frame b has no unique match entry");
}

}  // namespace detail

/// L_aff = (L1 + L2) / 2 with L_k = -(1/N_k) sum_i sum_j m_ij log s~k_ij.
inline double loss_affinity(const SimilarityBundle& b, const MatchMatrix& m) {
  detail::check_match_matrix(b, m);
  const auto N = static_cast<std::size_t>(b.capacity);
  double l1 = 0.0, l2 = 0.0;
  for (int i = 0; i < b.n1; ++i)
    for (std::size_t j = 0; j <= N; ++j)
      if (m(i, static_cast<Eigen::Index>(j))) l1 -= b.S1n_log(static_cast<std::size_t>(i), j);
  for (int j = 0; j < b.n2; ++j)
    for (std::size_t i = 0; i <= N; ++i)
      if (m(static_cast<Eigen::Index>(i), j)) l2 -= b.S2n_log(i, static_cast<std::size_t>(j));
  if (b.n1 > 0) l1 /= b.n1;
  if (b.n2 > 0) l2 /= b.n2;
  return 0.5 * (l1 + l2);
}

inline double loss_affinity(const SimilarityBundle& b, const MatchMatrix& m, int n1, int n2) {
  if (n1 != b.n1 || n2 != b.n2) fail(ErrorKind::ShapeMismatch, "object counts disagree with the bundle");
  return loss_affinity(b, m);
}

/// dL_aff / dS for the N x N matrix that was augmented (delta is constant).
inline Tensor loss_affinity_grad(const SimilarityBundle& b, const MatchMatrix& m) {
  detail::check_match_matrix(b, m);
  const auto N = static_cast<std::size_t>(b.capacity);
  Tensor grad({N, N});
  for (int which = 1; which <= 2; ++which) {
    const Tensor& prob = which == 1 ? b.S1n : b.S2n;
    // Loss weight of each cell: 0.5 * m / N_k on the rows (L1) or columns (L2) that enter the loss.
    auto weight = [&](std::size_t r, std::size_t c) -> double {
      if (which == 1) return (static_cast<int>(r) < b.n1 && m(r, c)) ? 0.5 / b.n1 : 0.0;
      return (static_cast<int>(c) < b.n2 && m(r, c)) ? 0.5 / b.n2 : 0.0;
    };
    for (const auto& g : detail::softmax_groups(which, b.capacity, b.n1, b.n2, b.axis)) {
      double total = 0.0;
      for (auto [r, c] : g) total += weight(r, c);
      if (total == 0.0) continue;
      for (auto [r, c] : g) {
        if (r >= N || c >= N) continue;  // delta entries are constants
        grad(r, c) += prob(r, c) * total - weight(r, c);
      }
    }
  }
  return grad;
}

inline double loss_joint(const SimilarityBundle& b, const MatchMatrix& m, std::span<const double> pose_losses,
                         double lambda) {
  return loss_joint(loss_affinity(b, m), pose_losses, lambda);
}

struct MatchCounts {
  int correct = 0;
  int total = 0;
  double accuracy() const { return total == 0 ? 1.0 : static_cast<double>(correct) / total; }
  MatchCounts& operator+=(const MatchCounts& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

/// Each real object predicts its partner (or null) as the argmax of its
/// fused row (frame a) or column (frame b); counts how many predictions hit
/// the ground truth.
inline MatchCounts match_decisions(const SimilarityBundle& b, const MatchMatrix& m) {
  const auto N = static_cast<std::size_t>(b.capacity);
  MatchCounts c;
  for (int i = 0; i < b.n1; ++i) {
    std::size_t best = N;
    double best_v = b.fused(i, N);
    for (int j = 0; j < b.n2; ++j)
      if (b.fused(i, j) > best_v) {
        best_v = b.fused(i, j);
        best = static_cast<std::size_t>(j);
      }
    c.correct += m(i, static_cast<Eigen::Index>(best)) == 1;
    ++c.total;
  }
  for (int j = 0; j < b.n2; ++j) {
    std::size_t best = N;
    double best_v = b.fused(N, j);
    for (int i = 0; i < b.n1; ++i)
      if (b.fused(i, j) > best_v) {
        best_v = b.fused(i, j);
        best = static_cast<std::size_t>(i);
      }
    c.correct += m(static_cast<Eigen::Index>(best), j) == 1;
    ++c.total;
  }
  return c;
}

/// Non-interpolated average precision: mean precision at the rank of each
/// positive, scores descending. Ties are broken by input order.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  int hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k)
    if (labels[order[k]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  return hits == 0 ? 0.0 : sum / hits;
}

/// mAP over frame pairs: each pair contributes the AP of its real (i, j)
/// cells ranked by fused similarity; pairs without any positive are skipped.
inline double match_accuracy_map(const std::vector<std::pair<SimilarityBundle, MatchMatrix>>& pairs) {
  double sum = 0.0;
  int counted = 0;
  for (const auto& [b, m] : pairs) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < b.n1; ++i)
      for (int j = 0; j < b.n2; ++j) {
        scores.push_back(b.fused(i, j));
        labels.push_back(m(i, j));
      }
    if (std::find(labels.begin(), labels.end(), 1) == labels.end()) continue;
    sum += average_precision(scores, labels);
    ++counted;
  }
  if (counted == 0) fail(ErrorKind::InvariantViolation, "mAP needs at least one pair with a positive match");
  return sum / counted;
}

}  // namespace geoloc
