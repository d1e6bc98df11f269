#pragma once

#include "roe/comparison_graph.hpp"
#include "roe/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace roe {

enum class FlipMode { vote, triplet };

inline const char* to_string(FlipMode mode) { return mode == FlipMode::vote ? "vote" : "triplet"; }

inline FlipMode parse_flip_mode(const std::string& s) {
  if (s == "vote") return FlipMode::vote;
  if (s == "triplet") return FlipMode::triplet;
  throw std::invalid_argument("unknown flip mode '" + s + "' (expected vote or triplet)");
}

struct SyntheticSpec {
  Index n = 100;
  Index dim = 10;
  double variance = 1.0 / 20.0;
  std::size_t train_size = 10000;
  std::size_t validation_size = 10000;
  std::uint32_t s_min = 15;
  std::uint32_t s_max = 50;
  double outlier_ratio = 0.0;
  FlipMode flip_mode = FlipMode::vote;
  double noise_sigma = 0.0;  // additive N(0, sigma^2) on d_ij - d_ik per vote; 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 3) throw std::invalid_argument("n must be >= 3");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (!(variance > 0.0)) throw std::invalid_argument("variance must be > 0");
    if (s_min < 1 || s_min > s_max) throw std::invalid_argument("need 1 <= s_min <= s_max");
    if (!(outlier_ratio >= 0.0 && outlier_ratio <= 1.0)) throw std::invalid_argument("outlier ratio must be in [0, 1]");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  }
};

/// dim x n matrix, columns i.i.d. N(0, variance I).
inline Eigen::MatrixXd generate_points(const SyntheticSpec& spec) {
  spec.validate();
  CounterRng rng(spec.seed, streams::points);
  const double sd = std::sqrt(spec.variance);
  Eigen::MatrixXd x(spec.dim, spec.n);
  for (Index j = 0; j < spec.n; ++j) {
    for (Index i = 0; i < spec.dim; ++i) x(i, j) = sd * rng.normal();
  }
  return x;
}

inline double squared_distance(const Eigen::Ref<const Eigen::MatrixXd>& points, Index a, Index b) {
  return (points.col(a) - points.col(b)).squaredNorm();
}

/// Every (i, {j, k}) with i, j, k distinct, oriented so that j is the nearer
/// of the two; exact ties are dropped.
inline std::vector<Triple> valid_triplets(const Eigen::Ref<const Eigen::MatrixXd>& points) {
  const Index n = points.cols();
  Eigen::MatrixXd d(n, n);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) d(a, b) = squared_distance(points, a, b);
  }
  std::vector<Triple> out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) * (n - 2) / 2));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      for (Index k = j + 1; k < n; ++k) {
        if (k == i) continue;
        if (d(i, j) < d(i, k)) {
          out.push_back({i, j, k});
        } else if (d(i, k) < d(i, j)) {
          out.push_back({i, k, j});
        }
      }
    }
  }
  return out;
}

/// `count` distinct correctly oriented triplets, uniform over valid ones.
inline std::vector<Triple> sample_triplets(const Eigen::Ref<const Eigen::MatrixXd>& points, std::size_t count,
                                           std::uint64_t seed) {
  const auto all = valid_triplets(points);
  if (count > all.size()) {
    throw std::invalid_argument("requested " + std::to_string(count) + " triplets, only " +
                                std::to_string(all.size()) + " valid");
  }
  CounterRng rng(seed, streams::triplet_sampling);
  std::vector<Triple> out;
  out.reserve(count);
  for (auto idx : rng.sample_without_replacement(all.size(), count)) out.push_back(all[idx]);
  return out;
}

/// Triplets with vote multiplicities and per-vote outlier flags. Votes of
/// triplet t occupy [offset(t), offset(t) + votes[t]) in `flags`.
struct LabeledTripletSet {
  std::vector<Triple> triplets;  // ground-truth orientation
  std::vector<std::uint32_t> votes;
  std::vector<std::uint8_t> flags;

  static LabeledTripletSet single_votes(std::vector<Triple> triplets) {
    LabeledTripletSet set;
    set.votes.assign(triplets.size(), 1);
    set.flags.assign(triplets.size(), 0);
    set.triplets = std::move(triplets);
    return set;
  }

  std::size_t size() const { return triplets.size(); }
  std::uint64_t total_votes() const { return flags.size(); }

  std::vector<std::uint64_t> offsets() const {
    std::vector<std::uint64_t> off(votes.size() + 1, 0);
    for (std::size_t t = 0; t < votes.size(); ++t) off[t + 1] = off[t] + votes[t];
    return off;
  }

  /// Flipped votes on triplet t.
  std::vector<std::uint32_t> flipped_counts() const {
    std::vector<std::uint32_t> out(triplets.size(), 0);
    std::uint64_t v = 0;
    for (std::size_t t = 0; t < triplets.size(); ++t) {
      for (std::uint32_t s = 0; s < votes[t]; ++s, ++v) out[t] += flags[v];
    }
    return out;
  }

  std::uint64_t flipped_total() const { return std::accumulate(flags.begin(), flags.end(), std::uint64_t{0}); }
};

/// Each triplet gets s ~ U{s_min..s_max} identical votes; flags reset.
inline LabeledTripletSet augment_votes(const LabeledTripletSet& set, std::uint32_t s_min, std::uint32_t s_max,
                                       std::uint64_t seed) {
  if (s_min < 1 || s_min > s_max) throw std::invalid_argument("augment_votes: need 1 <= s_min <= s_max");
  CounterRng rng(seed, streams::votes);
  LabeledTripletSet out;
  out.triplets = set.triplets;
  out.votes.resize(set.size());
  std::uint64_t total = 0;
  for (auto& v : out.votes) {
    v = static_cast<std::uint32_t>(rng.uniform_int(s_min, s_max));
    total += v;
  }
  out.flags.assign(total, 0);
  return out;
}

/// Vote mode: exactly floor(q * total votes) not-yet-flagged votes, chosen
/// uniformly, are flipped (i,j,k) -> (i,k,j). Triplet mode: floor(q * |T|)
/// triplets have all of their votes flipped.
inline LabeledTripletSet inject_outliers(const LabeledTripletSet& set, double q, std::uint64_t seed,
                                         FlipMode mode = FlipMode::vote) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("inject_outliers: q must be in [0, 1]");
  CounterRng rng(seed, streams::outliers);
  LabeledTripletSet out = set;
  if (mode == FlipMode::vote) {
    const auto target = static_cast<std::uint64_t>(std::floor(q * static_cast<double>(set.total_votes())));
    std::vector<std::uint64_t> free;
    free.reserve(set.total_votes());
    for (std::uint64_t v = 0; v < set.total_votes(); ++v) {
      if (!set.flags[v]) free.push_back(v);
    }
    if (target > free.size()) throw std::invalid_argument("inject_outliers: not enough unflipped votes");
    for (auto idx : rng.sample_without_replacement(free.size(), static_cast<std::size_t>(target))) {
      out.flags[free[idx]] = 1;
    }
  } else {
    const auto target = static_cast<std::size_t>(std::floor(q * static_cast<double>(set.size())));
    const auto off = set.offsets();
    for (auto t : rng.sample_without_replacement(set.size(), target)) {
      for (auto v = off[t]; v < off[t + 1]; ++v) out.flags[v] = 1;
    }
  }
  return out;
}

/// Optional annotation noise: vote s of triplet (i,j,k) is flipped and flagged
/// when d_ij - d_ik + eps > 0, eps ~ N(0, sigma^2).
inline LabeledTripletSet apply_noise(const LabeledTripletSet& set, const Eigen::Ref<const Eigen::MatrixXd>& points,
                                     double sigma, std::uint64_t seed) {
  LabeledTripletSet out = set;
  if (sigma <= 0.0) return out;
  CounterRng rng(seed, streams::noise);
  std::uint64_t v = 0;
  for (std::size_t t = 0; t < set.size(); ++t) {
    const auto& tr = set.triplets[t];
    const double margin = squared_distance(points, tr.i, tr.j) - squared_distance(points, tr.i, tr.k);
    for (std::uint32_t s = 0; s < set.votes[t]; ++s, ++v) {
      if (!out.flags[v] && margin + sigma * rng.normal() > 0.0) out.flags[v] = 1;
    }
  }
  return out;
}

/// One annotation per (triplet, direction) with the matching vote count.
inline std::vector<Annotation> to_annotations(const LabeledTripletSet& set) {
  const auto flipped = set.flipped_counts();
  std::vector<Annotation> out;
  out.reserve(set.size() * 2);
  for (std::size_t t = 0; t < set.size(); ++t) {
    const auto& tr = set.triplets[t];
    if (set.votes[t] > flipped[t]) out.push_back(Annotation::triple(tr.i, tr.j, tr.k, set.votes[t] - flipped[t]));
    if (flipped[t] > 0) out.push_back(Annotation::triple(tr.i, tr.k, tr.j, flipped[t]));
  }
  return out;
}

/// Per-edge flag: the edge points against the ground-truth distances.
inline std::vector<bool> wrong_direction_edges(const ComparisonGraph& graph,
                                               const Eigen::Ref<const Eigen::MatrixXd>& points) {
  std::vector<bool> out(graph.num_edges());
  for (std::size_t c = 0; c < graph.num_edges(); ++c) {
    const auto& q = graph.edge(c).tuple;
    out[c] = squared_distance(points, q.i, q.j) >= squared_distance(points, q.l, q.k);
  }
  return out;
}

struct SyntheticDataset {
  SyntheticSpec spec;
  Eigen::MatrixXd points;
  LabeledTripletSet train;
  std::vector<Triple> validation;
  std::vector<Triple> test;
  std::vector<std::size_t> train_index;  // positions in the shuffled valid-triplet list
  std::size_t valid_count = 0;

  ComparisonGraph train_graph(double margin = 1.0) const { return ingest(to_annotations(train), spec.n, margin); }
};

/// Points, a shuffled partition of all valid triplets into train /
/// validation / test (= remainder), vote augmentation and outliers.
inline SyntheticDataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  ds.spec = spec;
  ds.points = generate_points(spec);
  auto all = valid_triplets(ds.points);
  ds.valid_count = all.size();
  if (spec.train_size + spec.validation_size > all.size()) {
    throw std::invalid_argument("train + validation sizes (" + std::to_string(spec.train_size + spec.validation_size) +
                                ") exceed the " + std::to_string(all.size()) + " valid triplets");
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(spec.seed, streams::triplet_sampling);
  rng.shuffle(order);
  std::vector<Triple> train;
  train.reserve(spec.train_size);
  ds.validation.reserve(spec.validation_size);
  ds.test.reserve(all.size() - spec.train_size - spec.validation_size);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r < spec.train_size) {
      train.push_back(all[order[r]]);
      ds.train_index.push_back(order[r]);
    } else if (r < spec.train_size + spec.validation_size) {
      ds.validation.push_back(all[order[r]]);
    } else {
      ds.test.push_back(all[order[r]]);
    }
  }
  auto set = augment_votes(LabeledTripletSet::single_votes(std::move(train)), spec.s_min, spec.s_max, spec.seed);
  set = apply_noise(set, ds.points, spec.noise_sigma, spec.seed);
  ds.train = inject_outliers(set, spec.outlier_ratio, spec.seed, spec.flip_mode);
  return ds;
}

}  // namespace roe
