// Relative-attribute RankSVM: one linear ranking function per non-neutral
// emotion, trained on (emotional, neutral) pairs over standardized features,
// and min-max normalization of its scores into emotion strengths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "emopred/common.hpp"
#include "emopred/corpusio.hpp"

namespace emopred::ranker {

inline constexpr double kStdFloor = 1e-8;

struct OrderedPair {
  std::size_t stronger = 0;
  std::size_t weaker = 0;

  bool operator==(const OrderedPair&) const = default;
};

enum class Solver {
  dual_coordinate,  // exact coordinate ascent on the box-constrained dual
  subgradient,      // primal subgradient descent with a decaying step
};

struct TrainOptions {
  double C = 1.0;
  int epochs = 200;
  std::uint64_t seed = 0;
  Solver solver = Solver::dual_coordinate;
  double eta0 = 0.1;
  // dual solver stops once the largest projected-gradient violation drops below this
  double tolerance = 1e-6;
};

struct RankModel {
  Emotion emotion = Emotion::happiness;
  Eigen::VectorXd w;
  Eigen::VectorXd feat_mean;
  Eigen::VectorXd feat_std;
  double C = 1.0;
  int epochs = 0;
  std::uint64_t seed = 0;
  double objective = 0.0;
  double pair_accuracy = 0.0;
  /// Best primal objective seen after each epoch; non-increasing.
  std::vector<double> objective_trace;

  Eigen::Index dim() const { return w.size(); }
};

/// All (emotional, neutral) index pairs for the target emotion, in
/// (emotional-major, neutral-minor) order. When the cross product exceeds
/// max_pairs a seeded uniform subset (Floyd's algorithm) is kept, still in
/// that order.
inline std::vector<OrderedPair> build_pairs(std::span<const Emotion> labels, Emotion target, std::size_t max_pairs,
                                            std::uint64_t seed) {
  if (target == Emotion::neutral) throw Error("build_pairs: target emotion must be non-neutral");
  std::vector<std::size_t> emotional, neutral;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == target) emotional.push_back(i);
    if (labels[i] == Emotion::neutral) neutral.push_back(i);
  }
  if (emotional.empty()) {
    throw Error("build_pairs: no utterances labelled '" + std::string(to_string(target)) + "'");
  }
  if (neutral.empty()) throw Error("build_pairs: no neutral utterances");

  const std::uint64_t total = static_cast<std::uint64_t>(emotional.size()) * neutral.size();
  auto pair_at = [&](std::uint64_t k) {
    return OrderedPair{emotional[k / neutral.size()], neutral[k % neutral.size()]};
  };
  std::vector<OrderedPair> out;
  if (total <= max_pairs) {
    out.reserve(total);
    for (std::uint64_t k = 0; k < total; ++k) out.push_back(pair_at(k));
    return out;
  }
  Rng rng(seed);
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(max_pairs * 2);
  for (std::uint64_t j = total - max_pairs; j < total; ++j) {
    const std::uint64_t t = rng.uniform_int(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> keys(chosen.begin(), chosen.end());
  std::sort(keys.begin(), keys.end());
  out.reserve(keys.size());
  for (auto k : keys) out.push_back(pair_at(k));
  return out;
}

namespace detail {

struct Standardized {
  Eigen::MatrixXd z;  // rows = utterances
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

/// Standardizes using the statistics of the utterances referenced by pairs.
inline Standardized standardize(const Eigen::MatrixXd& features, std::span<const OrderedPair> pairs) {
  std::vector<char> used(static_cast<std::size_t>(features.rows()), 0);
  for (const auto& p : pairs) used[p.stronger] = used[p.weaker] = 1;
  const Eigen::Index d = features.cols();
  Standardized s;
  s.mean = Eigen::VectorXd::Zero(d);
  double count = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (!used[static_cast<std::size_t>(i)]) continue;
    s.mean += features.row(i).transpose();
    count += 1.0;
  }
  s.mean /= count;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (!used[static_cast<std::size_t>(i)]) continue;
    var += (features.row(i).transpose() - s.mean).cwiseAbs2();
  }
  s.std = (var / count).cwiseSqrt().cwiseMax(kStdFloor);
  s.z = (features.rowwise() - s.mean.transpose()).array().rowwise() / s.std.transpose().array();
  return s;
}

inline double primal_objective(const Eigen::VectorXd& w, const Eigen::VectorXd& scores,
                               std::span<const OrderedPair> pairs, double C) {
  double hinge = 0.0;
  for (const auto& p : pairs) hinge += std::max(0.0, 1.0 - (scores[static_cast<Eigen::Index>(p.stronger)] -
                                                            scores[static_cast<Eigen::Index>(p.weaker)]));
  return 0.5 * w.squaredNorm() + C * hinge;
}

}  // namespace detail

/// Minimizes 0.5 ||w||^2 + C * sum_pairs max(0, 1 - w.(z_s - z_w)) over
/// standardized features. The returned model carries the best iterate found.
inline RankModel train_ranksvm(std::span<const OrderedPair> pairs, const Eigen::MatrixXd& features,
                               Emotion emotion, const TrainOptions& opt) {
  if (pairs.empty()) throw Error("train_ranksvm: empty pair set");
  if (!(opt.C > 0.0)) throw Error("train_ranksvm: C must be positive");
  if (opt.epochs < 1) throw Error("train_ranksvm: epochs must be at least 1");
  const auto n = static_cast<std::size_t>(features.rows());
  for (const auto& p : pairs) {
    if (p.stronger >= n || p.weaker >= n) throw Error("train_ranksvm: pair index out of range");
    if (p.stronger == p.weaker) throw Error("train_ranksvm: degenerate pair");
  }
  if (!features.allFinite()) throw Error("train_ranksvm: non-finite features");

  const detail::Standardized st = detail::standardize(features, pairs);
  const Eigen::MatrixXd& z = st.z;
  const Eigen::Index d = z.cols();
  const double C = opt.C;

  RankModel model;
  model.emotion = emotion;
  model.feat_mean = st.mean;
  model.feat_std = st.std;
  model.C = C;
  model.seed = opt.seed;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd best_w = w;
  double best = detail::primal_objective(w, z * w, pairs, C);
  model.objective_trace.reserve(static_cast<std::size_t>(opt.epochs));

  auto record = [&]() {
    const double obj = detail::primal_objective(w, z * w, pairs, C);
    if (obj < best) {
      best = obj;
      best_w = w;
    }
    model.objective_trace.push_back(best);
  };

  if (opt.solver == Solver::dual_coordinate) {
    const std::size_t P = pairs.size();
    std::vector<double> alpha(P, 0.0);
    std::vector<double> q(P);
    for (std::size_t k = 0; k < P; ++k) {
      q[k] = (z.row(static_cast<Eigen::Index>(pairs[k].stronger)) -
              z.row(static_cast<Eigen::Index>(pairs[k].weaker))).squaredNorm();
    }
    std::vector<std::size_t> order(P);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(opt.seed);
    int epoch = 0;
    for (; epoch < opt.epochs; ++epoch) {
      for (std::size_t i = P; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
      double max_violation = 0.0;
      for (std::size_t k : order) {
        if (q[k] <= 0.0) continue;  // identical feature vectors carry a constant hinge
        const auto s = static_cast<Eigen::Index>(pairs[k].stronger);
        const auto v = static_cast<Eigen::Index>(pairs[k].weaker);
        const double grad = z.row(s).dot(w) - z.row(v).dot(w) - 1.0;
        double projected = grad;
        if (alpha[k] <= 0.0) projected = std::min(grad, 0.0);
        if (alpha[k] >= C) projected = std::max(grad, 0.0);
        max_violation = std::max(max_violation, std::abs(projected));
        if (projected == 0.0) continue;
        const double updated = std::clamp(alpha[k] - grad / q[k], 0.0, C);
        const double step = updated - alpha[k];
        if (step != 0.0) {
          w += step * (z.row(s) - z.row(v)).transpose();
          alpha[k] = updated;
        }
      }
      record();
      if (max_violation < opt.tolerance) {
        ++epoch;
        break;
      }
    }
    model.epochs = epoch;
  } else {
    // Steps act on the objective scaled by 1/(C * |pairs|); the minimizer is unchanged.
    const double scale = 1.0 / (C * static_cast<double>(pairs.size()));
    const double t_half = std::max(1.0, opt.epochs / 2.0);
    Eigen::VectorXd coeff(z.rows());
    for (int t = 0; t < opt.epochs; ++t) {
      const Eigen::VectorXd scores = z * w;
      coeff.setZero();
      for (const auto& p : pairs) {
        const auto s = static_cast<Eigen::Index>(p.stronger);
        const auto v = static_cast<Eigen::Index>(p.weaker);
        if (scores[s] - scores[v] < 1.0) {
          coeff[s] += 1.0;
          coeff[v] -= 1.0;
        }
      }
      const Eigen::VectorXd grad = w - C * (z.transpose() * coeff);
      const double eta = opt.eta0 / (1.0 + t / t_half);
      w -= eta * scale * grad;
      record();
    }
    model.epochs = opt.epochs;
  }

  model.w = best_w;
  model.objective = best;
  const Eigen::VectorXd scores = z * best_w;
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    if (scores[static_cast<Eigen::Index>(p.stronger)] > scores[static_cast<Eigen::Index>(p.weaker)]) ++correct;
  }
  model.pair_accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  return model;
}

/// Primal objective of an arbitrary weight vector (standardized space) for the
/// given pairs, under the model's standardization.
inline double ranksvm_objective(const RankModel& model, const Eigen::VectorXd& w, std::span<const OrderedPair> pairs,
                                const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd z =
      (features.rowwise() - model.feat_mean.transpose()).array().rowwise() / model.feat_std.transpose().array();
  return detail::primal_objective(w, z * w, pairs, model.C);
}

inline double rank_score(const RankModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.dim()) {
    throw Error("rank_score: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                std::to_string(model.dim()) + ")");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < model.dim(); ++i) {
    acc += model.w[i] * ((x[static_cast<std::size_t>(i)] - model.feat_mean[i]) / model.feat_std[i]);
  }
  return acc;
}

/// Min-max maps the scores of one emotion's utterances to [0,1]. All-equal
/// scores map to 0.5; neutral utterances always receive 0.
inline std::vector<double> normalize_strengths(std::span<const double> scores, std::span<const Emotion> labels) {
  if (scores.empty()) throw Error("normalize_strengths: empty score list");
  if (scores.size() != labels.size()) throw Error("normalize_strengths: scores and labels differ in length");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == Emotion::neutral) continue;
    if (!std::isfinite(scores[i])) throw Error("normalize_strengths: non-finite score");
    lo = std::min(lo, scores[i]);
    hi = std::max(hi, scores[i]);
  }
  std::vector<double> out(scores.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == Emotion::neutral) continue;
    out[i] = hi > lo ? std::clamp((scores[i] - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model persistence

inline corpusio::ModelArtifact to_artifact(const RankModel& m) {
  corpusio::ModelArtifact a;
  a.kind = corpusio::ArtifactKind::rank;
  const auto d = static_cast<std::size_t>(m.dim());
  a.tensors["w"] = {{d}, std::vector<double>(m.w.data(), m.w.data() + d)};
  a.tensors["feat_mean"] = {{d}, std::vector<double>(m.feat_mean.data(), m.feat_mean.data() + d)};
  a.tensors["feat_std"] = {{d}, std::vector<double>(m.feat_std.data(), m.feat_std.data() + d)};
  a.tensors["C"] = {{1}, {m.C}};
  a.metadata["emotion"] = std::string(to_string(m.emotion));
  a.metadata["epochs"] = std::to_string(m.epochs);
  a.metadata["seed"] = std::to_string(m.seed);
  return a;
}

inline RankModel from_artifact(const corpusio::ModelArtifact& a) {
  if (a.kind != corpusio::ArtifactKind::rank) throw Error("artifact is not a rank model");
  auto w_it = a.tensors.find("w");
  if (w_it == a.tensors.end() || w_it->second.shape.size() != 1) throw Error("rank artifact: bad tensor 'w'");
  const std::vector<std::size_t> shape = w_it->second.shape;
  RankModel m;
  auto vec = [&](const std::string& name) {
    const auto& t = a.tensor(name, shape);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size())));
  };
  m.w = vec("w");
  m.feat_mean = vec("feat_mean");
  m.feat_std = vec("feat_std");
  if ((m.feat_std.array() <= 0.0).any()) throw Error("rank artifact: feat_std must be positive");
  m.C = a.tensor("C", {1}).data[0];
  m.emotion = parse_emotion(a.meta("emotion"));
  m.epochs = std::stoi(a.meta("epochs"));
  m.seed = std::stoull(a.meta("seed"));
  return m;
}

// ---------------------------------------------------------------------------
// Corpus annotation

struct AnnotateOptions {
  double C = 1.0;
  int epochs = 200;
  std::size_t max_pairs = 100000;
  std::uint64_t seed = 0;
};

struct AnnotationResult {
  corpusio::AnnotatedManifest manifest;
  std::vector<RankModel> models;  // happiness, sadness, anger
};

/// Trains one ranker per non-neutral emotion and annotates every utterance.
/// features[i] belongs to manifest[i].
inline AnnotationResult annotate_corpus(const corpusio::CorpusManifest& manifest,
                                        std::span<const afeat::FeatureVector> features, const AnnotateOptions& opt) {
  if (features.size() != manifest.size()) throw Error("annotate_corpus: feature count does not match manifest");
  const auto n = static_cast<Eigen::Index>(manifest.size());
  Eigen::MatrixXd x(n, afeat::kFeatureDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < afeat::kFeatureDim; ++j) x(i, j) = features[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  std::vector<Emotion> labels;
  labels.reserve(manifest.size());
  for (const auto& r : manifest) labels.push_back(r.emotion);
  if (std::find(labels.begin(), labels.end(), Emotion::neutral) == labels.end()) {
    throw Error("annotate_corpus: corpus has no neutral utterances");
  }

  AnnotationResult result;
  result.manifest.resize(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    static_cast<corpusio::ManifestRecord&>(result.manifest[i]) = manifest[i];
    result.manifest[i].strength = 0.0;
  }

  for (std::size_t e = 0; e < kNonNeutralEmotions.size(); ++e) {
    const Emotion emotion = kNonNeutralEmotions[e];
    const std::uint64_t seed = opt.seed + e;
    const auto pairs = build_pairs(labels, emotion, opt.max_pairs, seed);
    TrainOptions topt;
    topt.C = opt.C;
    topt.epochs = opt.epochs;
    topt.seed = seed;
    RankModel model = train_ranksvm(pairs, x, emotion, topt);

    std::vector<std::size_t> members;
    std::vector<double> scores;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      if (labels[i] != emotion) continue;
      members.push_back(i);
      scores.push_back(rank_score(model, features[i]));
    }
    const std::vector<Emotion> member_labels(members.size(), emotion);
    const auto strengths = normalize_strengths(scores, member_labels);
    for (std::size_t k = 0; k < members.size(); ++k) result.manifest[members[k]].strength = strengths[k];
    result.models.push_back(std::move(model));
  }
  return result;
}

}  // namespace emopred::ranker
