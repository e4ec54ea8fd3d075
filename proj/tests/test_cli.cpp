#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "emopred/emopred.hpp"
#include "test_support.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace emopred;
using nlohmann::json;
using testsupport::run;
using testsupport::slurp;
using testsupport::spit;

namespace {

const std::string kExe = EMOPRED_CLI_PATH;

std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::vector<json> out;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

int closed_port() {
  httplib::Server probe;
  return probe.bind_to_any_port("127.0.0.1");
}

// synth corpus -> features -> annotations, shared by the suite
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testsupport::TempDir("cli");
    const auto& d = *dir_;
    ASSERT_EQ(run(kExe, "synth-corpus --out " + q(d / "corpus"), d.path()).exit_code, 0);
    ASSERT_EQ(run(kExe, "features --manifest " + q(d / "corpus/manifest.jsonl") + " --out " + q(d / "feats.jsonl"), d.path()).exit_code, 0);
    const auto r = run(kExe,
                       "annotate --manifest " + q(d / "corpus/manifest.jsonl") + " --features " + q(d / "feats.jsonl") +
                           " --out " + q(d / "ann.jsonl") + " --seed 3",
                       d.path());
    ASSERT_EQ(r.exit_code, 0) << r.err;
    ASSERT_EQ(run(kExe, "init-encoder --seed 1 --out " + q(d / "enc.json"), d.path()).exit_code, 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::filesystem::path at(const std::string& name) { return *dir_ / name; }

  static testsupport::TempDir* dir_;
};

testsupport::TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, FeaturesShapeAndDeterminism) {
  testsupport::TempDir d("cli_feat");
  std::vector<json> rows;
  for (int i = 0; i < 3; ++i) {
    const auto clip = testsupport::tone(200.0 + 100.0 * i, 16000, 0.5);
    write_wav(d / ("t" + std::to_string(i) + ".wav"), clip.samples, clip.sample_rate);
    corpusio::ManifestRecord r{"u" + std::to_string(i), "text", Emotion::neutral, "t" + std::to_string(i) + ".wav", corpusio::Split::train};
    rows.push_back(corpusio::record_to_json(r));
  }
  corpusio::write_lines(d / "m.jsonl", rows);
  ASSERT_EQ(run(kExe, "features --manifest " + q(d / "m.jsonl") + " --out " + q(d / "a.jsonl"), d.path()).exit_code, 0);
  ASSERT_EQ(run(kExe, "features --manifest " + q(d / "m.jsonl") + " --out " + q(d / "b.jsonl"), d.path()).exit_code, 0);
  ASSERT_EQ(run(kExe, "features --jobs 3 --manifest " + q(d / "m.jsonl") + " --out " + q(d / "c.jsonl"), d.path()).exit_code, 0);
  const auto lines = read_jsonl(d / "a.jsonl");
  ASSERT_EQ(lines.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(lines[static_cast<std::size_t>(i)]["id"], "u" + std::to_string(i));
    EXPECT_EQ(lines[static_cast<std::size_t>(i)]["features"].size(), 384u);
  }
  EXPECT_EQ(slurp(d / "a.jsonl"), slurp(d / "b.jsonl"));
  EXPECT_EQ(slurp(d / "a.jsonl"), slurp(d / "c.jsonl"));
}

TEST_F(Cli, MissingWavNamesUtterance) {
  testsupport::TempDir d("cli_missing");
  corpusio::ManifestRecord r{"ghost_7", "text", Emotion::anger, "nowhere.wav", corpusio::Split::train};
  corpusio::write_lines(d / "m.jsonl", {corpusio::record_to_json(r)});
  const auto res = run(kExe, "features --manifest " + q(d / "m.jsonl") + " --out " + q(d / "f.jsonl"), d.path());
  EXPECT_NE(res.exit_code, 0);
  EXPECT_NE(res.err.find("ghost_7"), std::string::npos) << res.err;
}

TEST_F(Cli, AnnotationsRespectStrengthContract) {
  const auto rows = read_jsonl(at("ann.jsonl"));
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& r : rows) {
    const double s = r["strength"].get<double>();
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    if (r["emotion"] == "neutral") {
      EXPECT_EQ(s, 0.0);
    }
  }
  testsupport::TempDir d("cli_ann");
  ASSERT_EQ(run(kExe,
                "annotate --manifest " + q(at("corpus/manifest.jsonl")) + " --features " + q(at("feats.jsonl")) +
                    " --out " + q(d / "again.jsonl") + " --seed 3 --models-dir " + q(d / "models"),
                d.path())
                .exit_code,
            0);
  EXPECT_EQ(slurp(d / "again.jsonl"), slurp(at("ann.jsonl")));
  EXPECT_TRUE(std::filesystem::exists(d / "models/rank_anger.json"));
}

TEST_F(Cli, AnnotateWithoutNeutralFails) {
  testsupport::TempDir d("cli_noneutral");
  std::vector<json> kept;
  for (auto& r : read_jsonl(at("corpus/manifest.jsonl"))) {
    if (r["emotion"] != "neutral") {
      r["audio_path"] = (at("corpus") / r["audio_path"].get<std::string>()).string();
      kept.push_back(r);
    }
  }
  corpusio::write_lines(d / "m.jsonl", kept);
  const auto res = run(kExe,
                       "annotate --manifest " + q(d / "m.jsonl") + " --features " + q(at("feats.jsonl")) + " --out " +
                           q(d / "a.jsonl"),
                       d.path());
  EXPECT_NE(res.exit_code, 0);
  EXPECT_NE(res.err.find("neutral"), std::string::npos) << res.err;
}

TEST_F(Cli, TrainEchoesDefaultsAndWritesTrace) {
  testsupport::TempDir d("cli_train");
  const auto res = run(kExe,
                       "train --annotated " + q(at("ann.jsonl")) + " --out " + q(d / "p.json") + " --epochs 5 --trace " +
                           q(d / "trace.jsonl"),
                       d.path());
  ASSERT_EQ(res.exit_code, 0) << res.err;
  EXPECT_NE(res.err.find("lambda-cls=0.01\n"), std::string::npos) << res.err;
  EXPECT_NE(res.err.find("epochs=5\n"), std::string::npos);
  const auto trace = read_jsonl(d / "trace.jsonl");
  ASSERT_EQ(trace.size(), 6u);
  for (std::size_t i = 0; i < trace.size(); ++i) EXPECT_EQ(trace[i]["epoch"], i);
  const auto art = corpusio::load_model(d / "p.json", corpusio::ArtifactKind::predictor);
  EXPECT_EQ(art.meta("lambda_cls"), "0.01");
  EXPECT_EQ(art.meta("train_utterances"), "8");
}

TEST_F(Cli, UnreachableRemoteProviderFails) {
  testsupport::TempDir d("cli_remote");
  const std::string endpoint = "http://127.0.0.1:" + std::to_string(closed_port());
  const auto res = run(kExe,
                       "train --annotated " + q(at("ann.jsonl")) + " --out " + q(d / "p.json") +
                           " --provider remote --timeout 1 --endpoint " + endpoint,
                       d.path());
  EXPECT_NE(res.exit_code, 0);
  EXPECT_NE(res.err.find("network failure"), std::string::npos) << res.err;
  EXPECT_FALSE(std::filesystem::exists(d / "p.json"));

  // the endpoint may come from the environment instead
  const auto env = run(kExe,
                       "train --annotated " + q(at("ann.jsonl")) + " --out " + q(d / "p.json") + " --provider remote --timeout 1",
                       d.path(), "EMOPRED_ENDPOINT=" + endpoint);
  EXPECT_NE(env.exit_code, 0);
  EXPECT_NE(env.err.find("endpoint=\"" + endpoint + "\""), std::string::npos) << env.err;
  EXPECT_NE(env.err.find("network failure"), std::string::npos) << env.err;
}

TEST_F(Cli, PredictModes) {
  testsupport::TempDir d("cli_predict");
  ASSERT_EQ(run(kExe, "train --annotated " + q(at("ann.jsonl")) + " --out " + q(d / "p.json") + " --epochs 20", d.path()).exit_code, 0);
  std::vector<json> texts = {
      {{"id", "a"}, {"text", "I can't believe it."}, {"paragraph", "p1"}},
      {{"id", "b"}, {"text", "This is wonderful."}, {"paragraph", "p1"}},
      {{"id", "c"}, {"text", "Leave me alone."}, {"paragraph", "p2"}},
      {{"id", "d"}, {"text", "Fine."}},
  };
  corpusio::write_lines(d / "texts.jsonl", texts);
  auto predict = [&](const std::string& mode, const std::string& out) {
    const auto r = run(kExe,
                       "predict --model " + q(d / "p.json") + " --texts " + q(d / "texts.jsonl") + " --mode " + mode +
                           " --out " + q(d / out),
                       d.path());
    EXPECT_EQ(r.exit_code, 0) << r.err;
    return read_jsonl(d / out);
  };
  const auto single = predict("single", "s.jsonl");
  const auto para = predict("paragraph", "p.jsonl");
  predict("paragraph", "p2.jsonl");
  ASSERT_EQ(single.size(), 4u);
  ASSERT_EQ(para.size(), 4u);
  EXPECT_EQ(single[0], para[0]);
  EXPECT_NE(single[1]["probs"], para[1]["probs"]);
  EXPECT_EQ(single[2], para[2]);  // first of its paragraph
  EXPECT_EQ(single[3], para[3]);  // stands alone
  EXPECT_EQ(slurp(d / "p.jsonl"), slurp(d / "p2.jsonl"));
  for (const auto& r : para) {
    double sum = 0.0;
    for (const auto& p : r["probs"]) sum += p.get<double>();
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST_F(Cli, EncodePredictionsAndGrid) {
  testsupport::TempDir d("cli_encode");
  std::vector<predictor::PredictionRecord> recs;
  for (int i = 0; i < 5; ++i) {
    predictor::EmotionPrediction p;
    p.cls = emotion_from_index(i % 4);
    p.probs[static_cast<std::size_t>(i % 4)] = 1.0;
    p.strength = p.strength_raw = 0.2 * i;
    recs.push_back({"r" + std::to_string(i), p});
  }
  predictor::write_predictions(recs, d / "preds.jsonl");
  ASSERT_EQ(run(kExe, "encode --encoder " + q(at("enc.json")) + " --predictions " + q(d / "preds.jsonl") + " --out " + q(d / "e.jsonl"), d.path()).exit_code, 0);
  const auto rows = read_jsonl(d / "e.jsonl");
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    ASSERT_EQ(r["embedding"].size(), 32u);
    for (const auto& v : r["embedding"]) EXPECT_GT(v.get<double>(), 0.0);
  }
  ASSERT_EQ(run(kExe, "encode --encoder " + q(at("enc.json")) + " --grid 11 --out " + q(d / "g.csv"), d.path()).exit_code, 0);
  const std::string csv = slurp(d / "g.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 45);  // header + 44 rows
  EXPECT_NE(run(kExe, "encode --encoder " + q(at("enc.json")) + " --out " + q(d / "x.csv"), d.path()).exit_code, 0);
}

TEST_F(Cli, EvalIdentityAndMismatch) {
  testsupport::TempDir d("cli_eval");
  std::vector<predictor::PredictionRecord> recs;
  for (const auto& r : corpusio::read_annotations(at("ann.jsonl"))) {
    predictor::EmotionPrediction p;
    p.cls = r.emotion;
    p.probs[static_cast<std::size_t>(index_of(r.emotion))] = 1.0;
    p.strength = p.strength_raw = r.strength;
    recs.push_back({r.id, p});
  }
  predictor::write_predictions(recs, d / "preds.jsonl");
  ASSERT_EQ(run(kExe, "eval --predictions " + q(d / "preds.jsonl") + " --references " + q(at("ann.jsonl")) + " --out " + q(d / "m.json"), d.path()).exit_code, 0);
  const json m = json::parse(slurp(d / "m.json"));
  EXPECT_EQ(m["macro_accuracy"], 1.0);
  for (const auto& a : m["per_class_accuracy"]) EXPECT_EQ(a, 1.0);
  EXPECT_EQ(m["strength_mse"], 0.0);

  recs.pop_back();
  predictor::write_predictions(recs, d / "short.jsonl");
  EXPECT_NE(run(kExe, "eval --predictions " + q(d / "short.jsonl") + " --references " + q(at("ann.jsonl")) + " --out " + q(d / "m2.json"), d.path()).exit_code, 0);
  recs.push_back({"stranger", recs.front().prediction});
  predictor::write_predictions(recs, d / "renamed.jsonl");
  const auto res = run(kExe, "eval --predictions " + q(d / "renamed.jsonl") + " --references " + q(at("ann.jsonl")) + " --out " + q(d / "m3.json"), d.path());
  EXPECT_NE(res.exit_code, 0);
  EXPECT_NE(res.err.find("stranger"), std::string::npos);
}

TEST_F(Cli, ConfigFile) {
  testsupport::TempDir d("cli_config");
  spit(d / "ok.ini", "[init-encoder]\nseed = 5\n");
  const auto ok = run(kExe, "--config " + q(d / "ok.ini") + " init-encoder --out " + q(d / "e.json"), d.path());
  ASSERT_EQ(ok.exit_code, 0) << ok.err;
  EXPECT_NE(ok.err.find("seed=5\n"), std::string::npos);
  EXPECT_EQ(encoder::from_artifact(corpusio::load_model(d / "e.json")), encoder::init_encoder(5));
  // flags win over the file
  ASSERT_EQ(run(kExe, "--config " + q(d / "ok.ini") + " init-encoder --seed 6 --out " + q(d / "e.json"), d.path()).exit_code, 0);
  EXPECT_EQ(encoder::from_artifact(corpusio::load_model(d / "e.json")), encoder::init_encoder(6));

  spit(d / "bad.ini", "[init-encoder]\nseed = 5\ncolour = blue\n");
  const auto bad = run(kExe, "--config " + q(d / "bad.ini") + " init-encoder --out " + q(d / "e2.json"), d.path());
  EXPECT_NE(bad.exit_code, 0);
  EXPECT_FALSE(std::filesystem::exists(d / "e2.json"));
}

TEST_F(Cli, UsageErrors) {
  testsupport::TempDir d("cli_usage");
  EXPECT_NE(run(kExe, "", d.path()).exit_code, 0);
  EXPECT_NE(run(kExe, "frobnicate", d.path()).exit_code, 0);
  EXPECT_NE(run(kExe, "features --manifest " + q(d / "none.jsonl") + " --out " + q(d / "f.jsonl"), d.path()).exit_code, 0);
  EXPECT_NE(run(kExe, "predict --model " + q(at("enc.json")) + " --texts x --out y", d.path()).exit_code, 0);
}
