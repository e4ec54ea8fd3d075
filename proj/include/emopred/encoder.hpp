// Joint emotion encoder: h = softplus(W_emb * lut[class] * (1 + w_str * strength)).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "emopred/common.hpp"
#include "emopred/corpusio.hpp"

namespace emopred::encoder {

inline constexpr int kEmbedDim = 32;

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct EncoderParams {
  MatrixXd lut;  // kNumEmotions x kEmbedDim, one class embedding per row
  MatrixXd W;    // kEmbedDim x kEmbedDim projection
  double w_str = 1.0;

  static EncoderParams zeros() {
    return {MatrixXd::Zero(kNumEmotions, kEmbedDim), MatrixXd::Zero(kEmbedDim, kEmbedDim), 0.0};
  }

  void validate() const {
    if (lut.rows() != kNumEmotions || lut.cols() != kEmbedDim || W.rows() != kEmbedDim || W.cols() != kEmbedDim) {
      throw Error("encoder parameters have wrong shapes");
    }
    if (!lut.allFinite() || !W.allFinite() || !std::isfinite(w_str)) {
      throw Error("encoder parameters contain non-finite values");
    }
  }

  bool operator==(const EncoderParams&) const = default;
};

/// lut ~ U[-0.5, 0.5], W = I + U[-0.05, 0.05], w_str = 1.
inline EncoderParams init_encoder(std::uint64_t seed) {
  EncoderParams p;
  Rng rng(seed);
  p.lut.resize(kNumEmotions, kEmbedDim);
  for (Eigen::Index r = 0; r < p.lut.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.lut.cols(); ++c) p.lut(r, c) = rng.uniform(-0.5, 0.5);
  }
  p.W = MatrixXd::Identity(kEmbedDim, kEmbedDim);
  for (Eigen::Index r = 0; r < kEmbedDim; ++r) {
    for (Eigen::Index c = 0; c < kEmbedDim; ++c) p.W(r, c) += rng.uniform(-0.05, 0.05);
  }
  p.w_str = 1.0;
  return p;
}

inline void check_strength(double strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) {
    throw Error("emotion strength " + std::to_string(strength) + " outside [0,1]");
  }
}

/// max(x, 0) + log1p(exp(-|x|)); never overflows.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Class direction W * lut[c] before strength scaling.
inline VectorXd class_direction(const EncoderParams& p, Emotion emotion) {
  const int c = index_of(emotion);
  if (c < 0 || c >= kNumEmotions) throw Error("unknown emotion label");
  return p.W * p.lut.row(c).transpose();
}

inline VectorXd preactivation(const EncoderParams& p, Emotion emotion, double strength) {
  check_strength(strength);
  return class_direction(p, emotion) * (1.0 + p.w_str * strength);
}

inline VectorXd encode(const EncoderParams& p, Emotion emotion, double strength) {
  return preactivation(p, emotion, strength).unaryExpr([](double x) { return softplus(x); });
}

// ---------------------------------------------------------------------------
// Geometry export

struct GridRow {
  Emotion emotion = Emotion::neutral;
  double strength = 0.0;
  VectorXd z;
  VectorXd h;
};

/// One row per (class, strength), class-major with strengths ascending.
inline std::vector<GridRow> export_grid(const EncoderParams& p, const std::array<std::vector<double>, kNumEmotions>& grid) {
  std::vector<GridRow> rows;
  for (Emotion e : kAllEmotions) {
    std::vector<double> strengths = grid[static_cast<std::size_t>(index_of(e))];
    for (double s : strengths) check_strength(s);
    std::sort(strengths.begin(), strengths.end());
    for (double s : strengths) {
      GridRow row{e, s, preactivation(p, e, s), {}};
      row.h = row.z.unaryExpr([](double x) { return softplus(x); });
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::vector<GridRow> export_grid(const EncoderParams& p, const std::vector<double>& strengths) {
  std::array<std::vector<double>, kNumEmotions> grid;
  grid.fill(strengths);
  return export_grid(p, grid);
}

/// n evenly spaced strengths 0, 1/(n-1), ..., 1.
inline std::vector<double> uniform_strengths(int n) {
  if (n < 1) throw Error("grid needs at least one strength");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
  return out;
}

inline std::string format_number(double v) { return nlohmann::json(v).dump(); }

inline void write_grid_csv(const std::vector<GridRow>& rows, std::ostream& out) {
  out << "class,strength";
  for (int i = 0; i < kEmbedDim; ++i) out << ",z_" << i;
  for (int i = 0; i < kEmbedDim; ++i) out << ",h_" << i;
  out << '\n';
  for (const auto& r : rows) {
    out << to_string(r.emotion) << ',' << format_number(r.strength);
    for (Eigen::Index i = 0; i < r.z.size(); ++i) out << ',' << format_number(r.z[i]);
    for (Eigen::Index i = 0; i < r.h.size(); ++i) out << ',' << format_number(r.h[i]);
    out << '\n';
  }
}

inline void write_grid_csv(const std::vector<GridRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_grid_csv(rows, out);
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Toy fitting against fixed per-(class, strength) targets

struct FitTarget {
  Emotion emotion = Emotion::neutral;
  double strength = 0.0;
  VectorXd target;  // kEmbedDim
};

struct FitLoss {
  double loss = 0.0;
  EncoderParams grad;
};

/// Mean squared error over all targets and components, with its gradient.
inline FitLoss fit_loss_and_gradient(const EncoderParams& p, std::span<const FitTarget> targets) {
  if (targets.empty()) throw Error("toy_fit: no targets");
  FitLoss out;
  out.grad = EncoderParams::zeros();
  const double scale = 1.0 / (static_cast<double>(targets.size()) * kEmbedDim);
  for (const auto& t : targets) {
    check_strength(t.strength);
    if (t.target.size() != kEmbedDim || !t.target.allFinite()) throw Error("toy_fit: invalid target vector");
    const int c = index_of(t.emotion);
    const VectorXd u = class_direction(p, t.emotion);
    const double a = 1.0 + p.w_str * t.strength;
    const VectorXd z = u * a;
    VectorXd dz(kEmbedDim);
    for (int i = 0; i < kEmbedDim; ++i) {
      const double diff = softplus(z[i]) - t.target[i];
      out.loss += diff * diff * scale;
      dz[i] = 2.0 * diff * scale * sigmoid(z[i]);
    }
    const VectorXd du = dz * a;
    out.grad.W += du * p.lut.row(c);
    out.grad.lut.row(c) += (p.W.transpose() * du).transpose();
    out.grad.w_str += dz.dot(u) * t.strength;
  }
  return out;
}

struct FitResult {
  EncoderParams params;
  /// Loss before each step, then the final loss (steps + 1 entries).
  std::vector<double> loss_trace;
};

/// Gradient descent on the fit loss. batch_size 0 uses every target per
/// step; otherwise each step draws a seeded mini-batch without replacement.
inline FitResult toy_fit(EncoderParams params, std::span<const FitTarget> targets, int steps, double learning_rate,
                         std::uint64_t seed, std::size_t batch_size = 0) {
  params.validate();
  if (targets.empty()) throw Error("toy_fit: no targets");
  if (steps < 0) throw Error("toy_fit: steps must be non-negative");
  if (!(learning_rate > 0.0)) throw Error("toy_fit: learning rate must be positive");
  FitResult result;
  Rng rng(seed);
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<FitTarget> batch;
  for (int step = 0; step < steps; ++step) {
    FitLoss fl;
    if (batch_size == 0 || batch_size >= targets.size()) {
      fl = fit_loss_and_gradient(params, targets);
      result.loss_trace.push_back(fl.loss);
    } else {
      result.loss_trace.push_back(fit_loss_and_gradient(params, targets).loss);
      for (std::size_t i = 0; i < batch_size; ++i) std::swap(order[i], order[i + rng.uniform_int(order.size() - i)]);
      batch.clear();
      for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(targets[order[i]]);
      fl = fit_loss_and_gradient(params, batch);
    }
    params.lut -= learning_rate * fl.grad.lut;
    params.W -= learning_rate * fl.grad.W;
    params.w_str -= learning_rate * fl.grad.w_str;
  }
  result.loss_trace.push_back(fit_loss_and_gradient(params, targets).loss);
  result.params = std::move(params);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

inline corpusio::ModelArtifact to_artifact(const EncoderParams& p,
                                           const std::map<std::string, std::string>& metadata = {}) {
  p.validate();
  corpusio::ModelArtifact a;
  a.kind = corpusio::ArtifactKind::encoder;
  a.metadata = metadata;
  auto mat = [&](const char* name, const MatrixXd& m) {
    corpusio::Tensor t;
    t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
    }
    a.tensors[name] = std::move(t);
  };
  mat("lut", p.lut);
  mat("W_emb", p.W);
  a.tensors["w_str"] = {{1}, {p.w_str}};
  return a;
}

inline EncoderParams from_artifact(const corpusio::ModelArtifact& a) {
  if (a.kind != corpusio::ArtifactKind::encoder) throw Error("artifact is not an encoder model");
  auto mat = [&](const char* name, std::size_t rows, std::size_t cols) {
    const auto& t = a.tensor(name, {rows, cols});
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.data[r * cols + c];
    }
    return m;
  };
  EncoderParams p;
  p.lut = mat("lut", kNumEmotions, kEmbedDim);
  p.W = mat("W_emb", kEmbedDim, kEmbedDim);
  p.w_str = a.tensor("w_str", {1}).data[0];
  p.validate();
  return p;
}

struct EmbeddingRecord {
  std::string id;
  Emotion emotion = Emotion::neutral;
  double strength = 0.0;
  VectorXd embedding;
};

inline nlohmann::json embedding_to_json(const EmbeddingRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["class"] = std::string(to_string(r.emotion));
  j["strength"] = r.strength;
  j["embedding"] = std::vector<double>(r.embedding.data(), r.embedding.data() + r.embedding.size());
  return j;
}

}  // namespace emopred::encoder
