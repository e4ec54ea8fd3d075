// Joint emotion predictor: two independent fully connected heads over a frozen
// sentence embedding. The class head ends in a 4-way softmax, the strength
// head in a linear unit; both are trained jointly on
//   L = (strength_raw - target)^2 + lambda_cls * CE(probs, target class).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "emopred/common.hpp"
#include "emopred/corpusio.hpp"
#include "emopred/textembed.hpp"

namespace emopred::predictor {

inline constexpr int kHidden = 256;
inline constexpr double kProbFloor = 1e-12;

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PredictorParams {
  MatrixXd W1c;  // kHidden x input
  VectorXd b1c;  // kHidden
  MatrixXd W2c;  // 4 x kHidden
  VectorXd b2c;  // 4
  MatrixXd W1s;  // kHidden x input
  VectorXd b1s;  // kHidden
  VectorXd w2s;  // kHidden (the 1 x kHidden output row)
  double b2s = 0.0;

  static PredictorParams zeros(int input_dim = textembed::kEmbeddingDim, int hidden = kHidden) {
    PredictorParams p;
    p.W1c = MatrixXd::Zero(hidden, input_dim);
    p.b1c = VectorXd::Zero(hidden);
    p.W2c = MatrixXd::Zero(kNumEmotions, hidden);
    p.b2c = VectorXd::Zero(kNumEmotions);
    p.W1s = MatrixXd::Zero(hidden, input_dim);
    p.b1s = VectorXd::Zero(hidden);
    p.w2s = VectorXd::Zero(hidden);
    p.b2s = 0.0;
    return p;
  }

  int input_dim() const { return static_cast<int>(W1c.cols()); }
  int hidden() const { return static_cast<int>(W1c.rows()); }

  void validate() const {
    const auto h = W1c.rows();
    const auto d = W1c.cols();
    if (b1c.size() != h || W2c.rows() != kNumEmotions || W2c.cols() != h || b2c.size() != kNumEmotions ||
        W1s.rows() != h || W1s.cols() != d || b1s.size() != h || w2s.size() != h) {
      throw Error("predictor parameters have inconsistent shapes");
    }
    if (!W1c.allFinite() || !b1c.allFinite() || !W2c.allFinite() || !b2c.allFinite() || !W1s.allFinite() ||
        !b1s.allFinite() || !w2s.allFinite() || !std::isfinite(b2s)) {
      throw Error("predictor parameters contain non-finite values");
    }
  }

  /// Visits every parameter block as a flat span, in a fixed order.
  template <typename Fn>
  void for_each_block(Fn&& fn) {
    fn("W1c", std::span<double>(W1c.data(), static_cast<std::size_t>(W1c.size())));
    fn("b1c", std::span<double>(b1c.data(), static_cast<std::size_t>(b1c.size())));
    fn("W2c", std::span<double>(W2c.data(), static_cast<std::size_t>(W2c.size())));
    fn("b2c", std::span<double>(b2c.data(), static_cast<std::size_t>(b2c.size())));
    fn("W1s", std::span<double>(W1s.data(), static_cast<std::size_t>(W1s.size())));
    fn("b1s", std::span<double>(b1s.data(), static_cast<std::size_t>(b1s.size())));
    fn("w2s", std::span<double>(w2s.data(), static_cast<std::size_t>(w2s.size())));
    fn("b2s", std::span<double>(&b2s, 1));
  }
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    const_cast<PredictorParams*>(this)->for_each_block(
        [&](const char* name, std::span<double> s) { fn(name, std::span<const double>(s.data(), s.size())); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](const char*, std::span<const double> s) { n += s.size(); });
    return n;
  }

  bool operator==(const PredictorParams& o) const {
    return W1c == o.W1c && b1c == o.b1c && W2c == o.W2c && b2c == o.b2c && W1s == o.W1s && b1s == o.b1s &&
           w2s == o.w2s && b2s == o.b2s;
  }
};

struct EmotionPrediction {
  std::array<double, kNumEmotions> probs{};
  Emotion cls = Emotion::neutral;
  double strength_raw = 0.0;
  double strength = 0.0;
};

struct TrainConfig {
  double lambda_cls = 0.01;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double lr_decay = 0.999;  // per epoch
  int batch_size = 32;
  int epochs = 200;
  std::uint64_t seed = 0;
  double init_scale = 1.0;

  void validate() const {
    if (!(lambda_cls >= 0.0)) throw Error("lambda_cls must be non-negative");
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
    if (batch_size < 1) throw Error("batch_size must be at least 1");
    if (epochs < 0) throw Error("epochs must be non-negative");
    if (!(init_scale >= 0.0)) throw Error("init_scale must be non-negative");
  }
};

/// Weights uniform in +/- init_scale / sqrt(fan_in), biases zero. Blocks are
/// drawn in the order W1c, W2c, W1s, w2s, each row-major.
inline PredictorParams init_params(std::uint64_t seed, double init_scale, int input_dim = textembed::kEmbeddingDim,
                                   int hidden = kHidden) {
  if (!(init_scale >= 0.0)) throw Error("init_scale must be non-negative");
  PredictorParams p = PredictorParams::zeros(input_dim, hidden);
  Rng rng(seed);
  auto fill = [&](MatrixXd& m) {
    const double bound = init_scale / std::sqrt(static_cast<double>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
    }
  };
  fill(p.W1c);
  fill(p.W2c);
  fill(p.W1s);
  const double bound = init_scale / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < p.w2s.size(); ++i) p.w2s[i] = rng.uniform(-bound, bound);
  return p;
}

/// Max-subtracted softmax with lowest-index argmax.
inline EmotionPrediction make_prediction(const VectorXd& logits, double strength_raw) {
  EmotionPrediction out;
  const double mx = logits.maxCoeff();
  double z = 0.0;
  for (int k = 0; k < kNumEmotions; ++k) {
    out.probs[static_cast<std::size_t>(k)] = std::exp(logits[k] - mx);
    z += out.probs[static_cast<std::size_t>(k)];
  }
  int best = 0;
  for (int k = 0; k < kNumEmotions; ++k) {
    out.probs[static_cast<std::size_t>(k)] /= z;
    if (out.probs[static_cast<std::size_t>(k)] > out.probs[static_cast<std::size_t>(best)]) best = k;
  }
  out.cls = emotion_from_index(best);
  out.strength_raw = strength_raw;
  out.strength = std::clamp(strength_raw, 0.0, 1.0);
  return out;
}

inline EmotionPrediction forward(const PredictorParams& p, const VectorXd& x) {
  if (x.size() != p.input_dim()) {
    throw Error("predictor input dimension mismatch: expected " + std::to_string(p.input_dim()) + ", got " +
                std::to_string(x.size()));
  }
  const VectorXd hc = (p.W1c * x + p.b1c).cwiseMax(0.0);
  const VectorXd logits = p.W2c * hc + p.b2c;
  const VectorXd hs = (p.W1s * x + p.b1s).cwiseMax(0.0);
  return make_prediction(logits, p.w2s.dot(hs) + p.b2s);
}

inline double loss(const EmotionPrediction& pred, Emotion target_class, double target_strength, double lambda_cls) {
  const double e = pred.strength_raw - target_strength;
  const double prob = std::max(pred.probs[static_cast<std::size_t>(index_of(target_class))], kProbFloor);
  return e * e + lambda_cls * -std::log(prob);
}

inline Emotion class_from_one_hot(std::span<const double> one_hot) {
  if (one_hot.size() != kNumEmotions) throw Error("invalid one-hot target: expected 4 entries");
  int hot = -1;
  for (int k = 0; k < kNumEmotions; ++k) {
    const double v = one_hot[static_cast<std::size_t>(k)];
    if (v == 1.0) {
      if (hot >= 0) throw Error("invalid one-hot target: more than one hot entry");
      hot = k;
    } else if (v != 0.0) {
      throw Error("invalid one-hot target: entries must be 0 or 1");
    }
  }
  if (hot < 0) throw Error("invalid one-hot target: no hot entry");
  return emotion_from_index(hot);
}

inline double loss(const EmotionPrediction& pred, std::span<const double> one_hot, double target_strength,
                   double lambda_cls) {
  return loss(pred, class_from_one_hot(one_hot), target_strength, lambda_cls);
}

struct Example {
  VectorXd x;
  Emotion cls = Emotion::neutral;
  double strength = 0.0;
};

struct GradientResult {
  PredictorParams grad;
  double mean_loss = 0.0;
};

/// Mean loss gradient over the batch. ReLU has subgradient 0 at 0; the
/// cross-entropy term has zero gradient where the probability floor is active.
namespace detail {

struct Activations {
  MatrixXd Ac, Hc, logits, As, Hs;
  Eigen::RowVectorXd s_raw;
};

// Column-batched forward pass, one input per column of X.
inline Activations activations(const PredictorParams& p, const MatrixXd& X) {
  Activations a;
  a.Ac = (p.W1c * X).colwise() + p.b1c;
  a.Hc = a.Ac.cwiseMax(0.0);
  a.logits = (p.W2c * a.Hc).colwise() + p.b2c;
  a.As = (p.W1s * X).colwise() + p.b1s;
  a.Hs = a.As.cwiseMax(0.0);
  a.s_raw = (p.w2s.transpose() * a.Hs).array() + p.b2s;
  return a;
}

inline MatrixXd stack_inputs(const PredictorParams& p, std::span<const Example> batch) {
  const auto d = static_cast<Eigen::Index>(p.input_dim());
  MatrixXd X(d, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].x.size() != d) throw Error("predictor input dimension mismatch");
    X.col(static_cast<Eigen::Index>(i)) = batch[i].x;
  }
  return X;
}

}  // namespace detail

inline GradientResult gradients(const PredictorParams& p, std::span<const Example> batch, double lambda_cls) {
  if (batch.empty()) throw Error("gradients: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const MatrixXd X = detail::stack_inputs(p, batch);
  const detail::Activations act = detail::activations(p, X);
  const MatrixXd& Ac = act.Ac;
  const MatrixXd& Hc = act.Hc;
  const MatrixXd& logits = act.logits;
  const MatrixXd& As = act.As;
  const MatrixXd& Hs = act.Hs;
  const Eigen::RowVectorXd& s_raw = act.s_raw;

  MatrixXd G_logits(kNumEmotions, B);
  Eigen::RowVectorXd G_s(B);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& ex = batch[static_cast<std::size_t>(i)];
    const EmotionPrediction pred = make_prediction(logits.col(i), s_raw[i]);
    total += loss(pred, ex.cls, ex.strength, lambda_cls);
    const auto y = static_cast<std::size_t>(index_of(ex.cls));
    const bool floored = pred.probs[y] < kProbFloor;
    for (int k = 0; k < kNumEmotions; ++k) {
      const double target = static_cast<std::size_t>(k) == y ? 1.0 : 0.0;
      G_logits(k, i) = floored ? 0.0 : lambda_cls * (pred.probs[static_cast<std::size_t>(k)] - target) * inv_b;
    }
    G_s[i] = 2.0 * (s_raw[i] - ex.strength) * inv_b;
  }

  GradientResult out;
  out.mean_loss = total * inv_b;
  PredictorParams& g = out.grad;
  g.W2c = G_logits * Hc.transpose();
  g.b2c = G_logits.rowwise().sum();
  const MatrixXd Gc = ((p.W2c.transpose() * G_logits).array() * (Ac.array() > 0.0).cast<double>()).matrix();
  g.W1c = Gc * X.transpose();
  g.b1c = Gc.rowwise().sum();

  g.w2s = Hs * G_s.transpose();
  g.b2s = G_s.sum();
  const MatrixXd Gs = ((p.w2s * G_s).array() * (As.array() > 0.0).cast<double>()).matrix();
  g.W1s = Gs * X.transpose();
  g.b1s = Gs.rowwise().sum();
  return out;
}

inline double mean_loss(const PredictorParams& p, std::span<const Example> data, double lambda_cls) {
  if (data.empty()) throw Error("mean_loss: empty data");
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const auto chunk = data.subspan(start, std::min(kChunk, data.size() - start));
    const detail::Activations act = detail::activations(p, detail::stack_inputs(p, chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      total += loss(make_prediction(act.logits.col(col), act.s_raw[col]), chunk[i].cls, chunk[i].strength, lambda_cls);
    }
  }
  return total / static_cast<double>(data.size());
}

struct TrainResult {
  PredictorParams params;
  /// Mean training loss at initialization followed by one entry per epoch.
  std::vector<double> loss_trace;
};

/// Mini-batch gradient descent with momentum, starting from `init`. Batches
/// follow a seeded per-epoch shuffle.
inline TrainResult train_from(PredictorParams init, std::span<const Example> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error("train: empty corpus");
  init.validate();
  TrainResult result;
  result.params = std::move(init);
  PredictorParams& p = result.params;
  PredictorParams velocity = PredictorParams::zeros(p.input_dim(), p.hidden());
  Rng rng(cfg.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;
  double lr = cfg.learning_rate;

  result.loss_trace.push_back(mean_loss(p, data, cfg.lambda_cls));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      const GradientResult g = gradients(p, batch, cfg.lambda_cls);
      std::vector<std::span<const double>> grads;
      g.grad.for_each_block([&](const char*, std::span<const double> s) { grads.push_back(s); });
      std::vector<std::span<double>> vel;
      velocity.for_each_block([&](const char*, std::span<double> s) { vel.push_back(s); });
      std::size_t block = 0;
      p.for_each_block([&](const char*, std::span<double> s) {
        for (std::size_t j = 0; j < s.size(); ++j) {
          vel[block][j] = cfg.momentum * vel[block][j] - lr * grads[block][j];
          s[j] += vel[block][j];
        }
        ++block;
      });
    }
    lr *= cfg.lr_decay;
    result.loss_trace.push_back(mean_loss(p, data, cfg.lambda_cls));
  }
  return result;
}

inline TrainResult train(std::span<const Example> data, const TrainConfig& cfg) {
  if (data.empty()) throw Error("train: empty corpus");
  return train_from(init_params(cfg.seed, cfg.init_scale, static_cast<int>(data.front().x.size())), data, cfg);
}

/// Embeds every utterance's text and trains on (class, strength) targets.
inline TrainResult train(const corpusio::AnnotatedManifest& corpus, const textembed::EmbeddingProvider& provider,
                         const TrainConfig& cfg) {
  if (corpus.empty()) throw Error("train: empty corpus");
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& r : corpus) texts.push_back(r.text);
  const auto embeddings = provider.embed(texts);
  if (embeddings.size() != corpus.size()) throw Error("train: provider returned wrong number of embeddings");
  std::vector<Example> data;
  data.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    corpusio::validate_annotation(corpus[i]);
    data.push_back({embeddings[i], corpus[i].emotion, corpus[i].strength});
  }
  return train(data, cfg);
}

// ---------------------------------------------------------------------------
// Inference

enum class ContextMode { single, paragraph };

inline ContextMode parse_context_mode(std::string_view s) {
  if (s == "single") return ContextMode::single;
  if (s == "paragraph") return ContextMode::paragraph;
  throw Error("unknown prediction mode '" + std::string(s) + "'");
}

/// Text actually embedded for each sentence: the sentence itself in single
/// mode, or the space-joined causal window of up to `window` sentences ending
/// at it in paragraph mode (window 0 = whole paragraph so far).
inline std::vector<std::string> context_inputs(std::span<const std::string> sentences, ContextMode mode,
                                               std::size_t window) {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (mode == ContextMode::single) {
      out.push_back(sentences[i]);
      continue;
    }
    const std::size_t first = (window == 0 || i + 1 < window) ? 0 : i + 1 - window;
    std::string joined;
    for (std::size_t k = first; k <= i; ++k) {
      if (k > first) joined += ' ';
      joined += sentences[k];
    }
    out.push_back(std::move(joined));
  }
  return out;
}

inline std::vector<EmotionPrediction> predict(std::span<const std::string> sentences, const PredictorParams& params,
                                              const textembed::EmbeddingProvider& provider, ContextMode mode,
                                              std::size_t window) {
  if (sentences.empty()) throw Error("predict: no input sentences");
  const auto inputs = context_inputs(sentences, mode, window);
  const auto embeddings = provider.embed(inputs);
  if (embeddings.size() != inputs.size()) throw Error("predict: provider returned wrong number of embeddings");
  std::vector<EmotionPrediction> out;
  out.reserve(embeddings.size());
  for (const auto& e : embeddings) out.push_back(forward(params, e));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Reference {
  Emotion cls = Emotion::neutral;
  double strength = 0.0;
};

struct Metrics {
  std::array<std::array<long long, kNumEmotions>, kNumEmotions> confusion{};  // [reference][predicted]
  /// Diagonal over row sum; empty when the class never occurs in the references.
  std::array<std::optional<double>, kNumEmotions> per_class_accuracy{};
  double macro_accuracy = 0.0;
  double strength_mse = 0.0;
  double strength_spearman = 0.0;
};

/// 1-based ranks with ties given their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation of average ranks; 0 when either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw Error("spearman: inputs must be equal-length and nonempty");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Macro accuracy averages the classes present in the references.
inline Metrics evaluate(std::span<const EmotionPrediction> predictions, std::span<const Reference> references) {
  if (predictions.size() != references.size()) {
    throw Error("evaluate: length mismatch (" + std::to_string(predictions.size()) + " predictions, " +
                std::to_string(references.size()) + " references)");
  }
  if (predictions.empty()) throw Error("evaluate: empty input");
  Metrics m;
  std::vector<double> pred_s, ref_s;
  double se = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ++m.confusion[static_cast<std::size_t>(index_of(references[i].cls))]
                 [static_cast<std::size_t>(index_of(predictions[i].cls))];
    const double e = predictions[i].strength - references[i].strength;
    se += e * e;
    pred_s.push_back(predictions[i].strength);
    ref_s.push_back(references[i].strength);
  }
  double acc_sum = 0.0;
  int present = 0;
  for (std::size_t r = 0; r < kNumEmotions; ++r) {
    const long long row = std::accumulate(m.confusion[r].begin(), m.confusion[r].end(), 0LL);
    if (row == 0) continue;
    const double acc = static_cast<double>(m.confusion[r][r]) / static_cast<double>(row);
    m.per_class_accuracy[r] = acc;
    acc_sum += acc;
    ++present;
  }
  m.macro_accuracy = acc_sum / present;
  m.strength_mse = se / static_cast<double>(predictions.size());
  m.strength_spearman = spearman(pred_s, ref_s);
  return m;
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["class_order"] = {"neutral", "happiness", "sadness", "anger"};
  j["confusion_matrix"] = m.confusion;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& a : m.per_class_accuracy) per.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  j["per_class_accuracy"] = per;
  j["macro_accuracy"] = m.macro_accuracy;
  j["strength_mse"] = m.strength_mse;
  j["strength_spearman"] = m.strength_spearman;
  return j;
}

// ---------------------------------------------------------------------------
// Serialization

struct PredictionRecord {
  std::string id;
  EmotionPrediction prediction;
};

inline nlohmann::json prediction_to_json(const PredictionRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["probs"] = r.prediction.probs;
  j["class"] = std::string(to_string(r.prediction.cls));
  j["strength"] = r.prediction.strength;
  return j;
}

inline void write_predictions(const std::vector<PredictionRecord>& records, const std::filesystem::path& path) {
  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(prediction_to_json(r));
  corpusio::write_lines(path, rows);
}

/// strength_raw is not serialized; read-back sets it to the clamped strength.
inline std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  corpusio::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    PredictionRecord r;
    r.id = corpusio::require_string(j, "id");
    const auto& probs = corpusio::require_field(j, "probs");
    if (!probs.is_array() || probs.size() != kNumEmotions) throw Error("field 'probs' must hold 4 numbers");
    for (std::size_t k = 0; k < kNumEmotions; ++k) r.prediction.probs[k] = probs[k].get<double>();
    r.prediction.cls = parse_emotion(corpusio::require_string(j, "class"));
    r.prediction.strength = corpusio::require_number(j, "strength");
    if (!(r.prediction.strength >= 0.0 && r.prediction.strength <= 1.0)) {
      throw Error("field 'strength' outside [0,1]");
    }
    r.prediction.strength_raw = r.prediction.strength;
    out.push_back(std::move(r));
  });
  return out;
}

inline corpusio::ModelArtifact to_artifact(const PredictorParams& p,
                                           const std::map<std::string, std::string>& metadata = {}) {
  p.validate();
  corpusio::ModelArtifact a;
  a.kind = corpusio::ArtifactKind::predictor;
  a.metadata = metadata;
  // Matrices are stored row-major.
  auto mat = [&](const char* name, const MatrixXd& m) {
    corpusio::Tensor t;
    t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
    }
    a.tensors[name] = std::move(t);
  };
  auto vec = [&](const char* name, const VectorXd& v) {
    a.tensors[name] = {{static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
  };
  mat("W1c", p.W1c);
  vec("b1c", p.b1c);
  mat("W2c", p.W2c);
  vec("b2c", p.b2c);
  mat("W1s", p.W1s);
  vec("b1s", p.b1s);
  MatrixXd w2s_row = p.w2s.transpose();
  mat("w2s", w2s_row);
  vec("b2s", VectorXd::Constant(1, p.b2s));
  return a;
}

inline PredictorParams from_artifact(const corpusio::ModelArtifact& a) {
  if (a.kind != corpusio::ArtifactKind::predictor) throw Error("artifact is not a predictor model");
  auto it = a.tensors.find("W1c");
  if (it == a.tensors.end() || it->second.shape.size() != 2) throw Error("predictor artifact: bad tensor 'W1c'");
  const std::size_t h = it->second.shape[0];
  const std::size_t d = it->second.shape[1];
  auto mat = [&](const char* name, std::size_t rows, std::size_t cols) {
    const auto& t = a.tensor(name, {rows, cols});
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.data[r * cols + c];
    }
    return m;
  };
  auto vec = [&](const char* name, std::size_t n) {
    const auto& t = a.tensor(name, {n});
    return VectorXd(Eigen::Map<const VectorXd>(t.data.data(), static_cast<Eigen::Index>(n)));
  };
  PredictorParams p;
  p.W1c = mat("W1c", h, d);
  p.b1c = vec("b1c", h);
  p.W2c = mat("W2c", kNumEmotions, h);
  p.b2c = vec("b2c", kNumEmotions);
  p.W1s = mat("W1s", h, d);
  p.b1s = vec("b1s", h);
  p.w2s = mat("w2s", 1, h).transpose();
  p.b2s = vec("b2s", 1)[0];
  p.validate();
  return p;
}

}  // namespace emopred::predictor
