#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "emopred/encoder.hpp"
#include "test_support.hpp"

using namespace emopred;
using namespace emopred::encoder;
using Eigen::VectorXd;

namespace {

double cosine(const VectorXd& a, const VectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

std::vector<FitTarget> targets_from(const EncoderParams& hidden, int strengths) {
  std::vector<FitTarget> out;
  for (const auto& row : export_grid(hidden, uniform_strengths(strengths))) out.push_back({row.emotion, row.strength, row.h});
  return out;
}

}  // namespace

TEST(Encoder, InitRanges) {
  const EncoderParams p = init_encoder(3);
  EXPECT_LE(p.lut.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_LE((p.W - Eigen::MatrixXd::Identity(kEmbedDim, kEmbedDim)).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_EQ(p.w_str, 1.0);
  EXPECT_EQ(init_encoder(3), p);
  EXPECT_FALSE(init_encoder(4) == p);
}

TEST(Encoder, ClosedForms) {
  const EncoderParams p = init_encoder(5);
  for (Emotion e : kAllEmotions) {
    const VectorXd u = p.W * p.lut.row(index_of(e)).transpose();
    EXPECT_EQ(preactivation(p, e, 0.0), u);
    EXPECT_EQ(preactivation(p, e, 1.0), 2.0 * u);
  }
  const VectorXd h = encode(EncoderParams::zeros(), Emotion::anger, 0.7);
  for (Eigen::Index i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], std::log(2.0), 1e-15);
}

TEST(Encoder, StrengthOutsideRangeRejected) {
  const EncoderParams p = init_encoder(1);
  EXPECT_THROW(encode(p, Emotion::sadness, 1.5), Error);
  EXPECT_THROW(encode(p, Emotion::sadness, -0.01), Error);
  EXPECT_THROW(encode(p, Emotion::sadness, std::nan("")), Error);
}

TEST(Softplus, StableAndAccurate) {
  EXPECT_LT(std::abs(softplus(1000.0) - 1000.0), 1e-12);
  EXPECT_GT(softplus(-1000.0), -1e-300);
  EXPECT_EQ(softplus(-1000.0), 0.0);
  for (double x = -20.0; x <= 20.0; x += 0.125) {
    const double naive = std::log(1.0 + std::exp(x));
    EXPECT_NEAR(softplus(x), naive, 1e-12 * std::max(1.0, naive)) << x;
  }
  for (double x = -30.0; x <= 30.0; x += 0.5) EXPECT_NEAR(sigmoid(x), 1.0 / (1.0 + std::exp(-x)), 1e-15);
}

// Exhaustive over four classes and 101 strengths.
TEST(Geometry, RaysScaleAndStayColinear) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EncoderParams p = init_encoder(seed);
    p.w_str = 0.3 + 0.4 * static_cast<double>(seed);
    const auto strengths = uniform_strengths(101);
    const auto rows = export_grid(p, strengths);
    ASSERT_EQ(rows.size(), 404u);
    for (const auto& r : rows) {
      const VectorXd base = preactivation(p, r.emotion, 0.0);
      EXPECT_NEAR(cosine(r.z, base), 1.0, 1e-12);
      EXPECT_LT((r.z - base * (1.0 + p.w_str * r.strength)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_GT(r.h.minCoeff(), 0.0);
    }
    for (Emotion a : kAllEmotions) {
      for (Emotion b : kAllEmotions) {
        if (index_of(a) >= index_of(b)) continue;
        const double d0 = (preactivation(p, a, 0.0) - preactivation(p, b, 0.0)).norm();
        for (double s : strengths) {
          const double ds = (preactivation(p, a, s) - preactivation(p, b, s)).norm();
          EXPECT_NEAR(ds, (1.0 + p.w_str * s) * d0, 1e-9 * (1.0 + d0));
        }
      }
    }
  }
}

TEST(Geometry, StrengthZeroIgnoresStrengthWeight) {
  EncoderParams p = init_encoder(8);
  const VectorXd a = encode(p, Emotion::happiness, 0.0);
  for (double w : {-3.0, 0.0, 0.5, 10.0}) {
    p.w_str = w;
    EXPECT_EQ(encode(p, Emotion::happiness, 0.0), a);
  }
}

TEST(Grid, RowsAndCsvHeader) {
  const auto rows = export_grid(init_encoder(2), uniform_strengths(11));
  ASSERT_EQ(rows.size(), 44u);
  EXPECT_EQ(rows[0].emotion, Emotion::neutral);
  EXPECT_EQ(rows[10].strength, 1.0);
  EXPECT_EQ(rows[11].emotion, Emotion::happiness);
  std::ostringstream out;
  write_grid_csv(rows, out);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("class,strength,z_0,z_1,", 0), 0u);
  EXPECT_NE(header.find(",z_31,h_0,"), std::string::npos);
  EXPECT_EQ(header.substr(header.size() - 5), ",h_31");
  int count = 0;
  while (std::getline(in, line)) {
    ++count;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 65);
  }
  EXPECT_EQ(count, 44);
  EXPECT_EQ(uniform_strengths(1), std::vector<double>{0.0});
  EXPECT_THROW(uniform_strengths(0), Error);
}

TEST(Fit, CentralFiniteDifferences) {
  Rng rng(9);
  EncoderParams p = init_encoder(10);
  p.w_str = 0.7;
  std::vector<FitTarget> targets;
  for (int i = 0; i < 12; ++i) {
    VectorXd t(kEmbedDim);
    for (int k = 0; k < kEmbedDim; ++k) t[k] = rng.uniform(0.0, 1.5);
    targets.push_back({emotion_from_index(i % 4), rng.uniform(), t});
  }
  const FitLoss fl = fit_loss_and_gradient(p, targets);
  const double h = 1e-5;
  auto check = [&](double& w, double analytic, const std::string& what) {
    const double saved = w;
    w = saved + h;
    const double up = fit_loss_and_gradient(p, targets).loss;
    w = saved - h;
    const double down = fit_loss_and_gradient(p, targets).loss;
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    EXPECT_LT(rel, 1e-4) << what << " analytic " << analytic << " numeric " << numeric;
  };
  int checked = 0;
  for (int k = 0; k < 60; ++k) {
    const auto r = static_cast<Eigen::Index>(rng.uniform_int(kNumEmotions));
    const auto c = static_cast<Eigen::Index>(rng.uniform_int(kEmbedDim));
    check(p.lut(r, c), fl.grad.lut(r, c), "lut");
    ++checked;
  }
  for (int k = 0; k < 60; ++k) {
    const auto r = static_cast<Eigen::Index>(rng.uniform_int(kEmbedDim));
    const auto c = static_cast<Eigen::Index>(rng.uniform_int(kEmbedDim));
    check(p.W(r, c), fl.grad.W(r, c), "W");
    ++checked;
  }
  check(p.w_str, fl.grad.w_str, "w_str");
  EXPECT_GE(checked + 1, 100);
}

TEST(Fit, ExactTargetsAreStationary) {
  const EncoderParams p = init_encoder(11);
  const auto targets = targets_from(p, 6);
  const FitLoss fl = fit_loss_and_gradient(p, targets);
  EXPECT_EQ(fl.loss, 0.0);
  EXPECT_EQ(fl.grad.lut.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(fl.grad.W.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(fl.grad.w_str, 0.0);
  const FitResult r = toy_fit(p, targets, 10, 0.5, 0);
  EXPECT_EQ(r.params, p);
}

TEST(Fit, RealizableTargetsAreRecovered) {
  EncoderParams hidden = init_encoder(12);
  hidden.w_str = 0.6;
  const auto targets = targets_from(hidden, 11);
  const FitResult r = toy_fit(init_encoder(13), targets, 5000, 20.0, 0);
  ASSERT_EQ(r.loss_trace.size(), 5001u);
  EXPECT_LT(r.loss_trace.back(), 1e-4) << "start " << r.loss_trace.front();
  EXPECT_GT(r.params.w_str, 0.0);

  // the fitted geometry keeps the ray structure
  const auto rows = export_grid(r.params, uniform_strengths(101));
  for (const auto& row : rows) EXPECT_NEAR(cosine(row.z, preactivation(r.params, row.emotion, 0.0)), 1.0, 1e-12);
  for (Emotion a : kAllEmotions) {
    for (Emotion b : kAllEmotions) {
      if (index_of(a) >= index_of(b)) continue;
      double prev = -1.0;
      for (double s : uniform_strengths(101)) {
        const double d = (preactivation(r.params, a, s) - preactivation(r.params, b, s)).norm();
        EXPECT_GT(d, prev);
        prev = d;
      }
    }
  }
}

TEST(Fit, MiniBatchesAreSeeded) {
  const auto targets = targets_from(init_encoder(14), 5);
  const FitResult a = toy_fit(init_encoder(15), targets, 50, 5.0, 1, 4);
  const FitResult b = toy_fit(init_encoder(15), targets, 50, 5.0, 1, 4);
  const FitResult c = toy_fit(init_encoder(15), targets, 50, 5.0, 2, 4);
  EXPECT_EQ(a.params, b.params);
  EXPECT_FALSE(a.params == c.params);
  EXPECT_LT(a.loss_trace.back(), a.loss_trace.front());
}

TEST(Fit, InvalidInputs) {
  const auto targets = targets_from(init_encoder(1), 2);
  EXPECT_THROW(toy_fit(init_encoder(1), std::vector<FitTarget>{}, 1, 0.1, 0), Error);
  EXPECT_THROW(toy_fit(init_encoder(1), targets, -1, 0.1, 0), Error);
  EXPECT_THROW(toy_fit(init_encoder(1), targets, 1, 0.0, 0), Error);
  std::vector<FitTarget> bad = targets;
  bad[0].target = VectorXd::Zero(3);
  EXPECT_THROW(fit_loss_and_gradient(init_encoder(1), bad), Error);
}

TEST(Persist, EncoderArtifactRoundTrip) {
  testsupport::TempDir dir("enc");
  EncoderParams p = init_encoder(16);
  p.w_str = 0.123456789012345;
  corpusio::save_model(to_artifact(p), dir / "e.json");
  const EncoderParams q = from_artifact(corpusio::load_model(dir / "e.json", corpusio::ArtifactKind::encoder));
  EXPECT_EQ(p, q);
  for (Emotion e : kAllEmotions) EXPECT_EQ(encode(p, e, 0.37), encode(q, e, 0.37));
  std::ostringstream a, b;
  write_grid_csv(export_grid(p, uniform_strengths(5)), a);
  write_grid_csv(export_grid(q, uniform_strengths(5)), b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Persist, EmbeddingJson) {
  const EmbeddingRecord r{"x1", Emotion::sadness, 0.5, encode(init_encoder(1), Emotion::sadness, 0.5)};
  const auto j = embedding_to_json(r);
  EXPECT_EQ(j["id"], "x1");
  EXPECT_EQ(j["class"], "sadness");
  EXPECT_EQ(j["embedding"].size(), 32u);
}
