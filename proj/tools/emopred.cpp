// emopred command line: one subcommand per pipeline stage.
#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

// emopred (Eigen) first; CLI11 and json after.
#include "emopred/emopred.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using namespace emopred;
using nlohmann::json;

namespace {

std::string num(double v) { return json(v).dump(); }

// --- features ----------------------------------------------------------------

struct FeaturesArgs {
  std::string manifest, out;
  int jobs = 1;
};

int cmd_features(const FeaturesArgs& a) {
  const auto manifest = corpusio::read_manifest(a.manifest);
  const fs::path base = fs::path(a.manifest).parent_path();
  std::vector<corpusio::FeatureRecord> records(manifest.size());
  std::vector<std::string> errors(manifest.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.size(); i = next++) {
      const auto& r = manifest[i];
      try {
        records[i].id = r.id;
        records[i].features = afeat::extract_features(load_audio(base / r.audio_path));
      } catch (const std::exception& e) {
        errors[i] = "utterance '" + r.id + "': " + e.what();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(a.jobs, static_cast<int>(std::max<std::size_t>(1, manifest.size()))));
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  corpusio::write_features(records, a.out);
  std::cerr << "features: " << records.size() << " utterances -> " << a.out << '\n';
  return 0;
}

// --- annotate ----------------------------------------------------------------

struct AnnotateArgs {
  std::string manifest, features, out, models_dir;
  double C = 1.0;
  int epochs = 200;
  std::uint64_t seed = 0;
  std::size_t max_pairs = 100000;
};

int cmd_annotate(const AnnotateArgs& a) {
  const auto manifest = corpusio::read_manifest(a.manifest);
  std::map<std::string, afeat::FeatureVector> by_id;
  for (auto& r : corpusio::read_features(a.features)) by_id[r.id] = r.features;
  std::vector<afeat::FeatureVector> features;
  for (const auto& r : manifest) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw Error("utterance '" + r.id + "' has no feature record");
    features.push_back(it->second);
  }
  ranker::AnnotateOptions opt;
  opt.C = a.C;
  opt.epochs = a.epochs;
  opt.seed = a.seed;
  opt.max_pairs = a.max_pairs;
  const auto result = ranker::annotate_corpus(manifest, features, opt);
  corpusio::write_annotations(result.manifest, a.out);
  if (!a.models_dir.empty()) {
    fs::create_directories(a.models_dir);
    for (const auto& m : result.models) {
      corpusio::save_model(ranker::to_artifact(m), fs::path(a.models_dir) / ("rank_" + std::string(to_string(m.emotion)) + ".json"));
    }
  }
  for (const auto& m : result.models) {
    std::cerr << "annotate: " << to_string(m.emotion) << " objective " << num(m.objective) << " pair accuracy "
              << num(m.pair_accuracy) << '\n';
  }
  return 0;
}

// --- provider options shared by train and predict -----------------------------

struct ProviderArgs {
  std::string mode = "local";
  std::string endpoint;
  double timeout = 30.0;
  std::uint64_t embed_seed = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--provider", mode, "Embedding provider")->check(CLI::IsMember({"local", "remote"}))->capture_default_str();
    cmd->add_option("--endpoint", endpoint, "Remote embedding service base URL")->envname("EMOPRED_ENDPOINT");
    cmd->add_option("--timeout", timeout, "Remote request timeout in seconds")->capture_default_str();
    cmd->add_option("--embed-seed", embed_seed, "Hash seed of the local provider")->capture_default_str();
  }

  std::unique_ptr<textembed::EmbeddingProvider> make() const {
    textembed::ProviderConfig cfg;
    cfg.mode = textembed::parse_mode(mode);
    cfg.endpoint = endpoint;
    cfg.timeout_seconds = timeout;
    cfg.seed = embed_seed;
    return textembed::make_provider(cfg);
  }
};

std::optional<corpusio::Split> split_filter(const std::string& s) {
  if (s == "all") return std::nullopt;
  return corpusio::parse_split(s);
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string annotated, out, trace, split = "train";
  ProviderArgs provider;
  predictor::TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
  corpusio::AnnotatedManifest corpus;
  const auto want = split_filter(a.split);
  for (auto& r : corpusio::read_annotations(a.annotated)) {
    if (!want || r.split == *want) corpus.push_back(std::move(r));
  }
  if (corpus.empty()) throw Error("no utterances in split '" + a.split + "'");
  const auto provider = a.provider.make();
  const auto result = predictor::train(corpus, *provider, a.cfg);

  std::map<std::string, std::string> meta = {
      {"seed", std::to_string(a.cfg.seed)},
      {"lambda_cls", num(a.cfg.lambda_cls)},
      {"learning_rate", num(a.cfg.learning_rate)},
      {"momentum", num(a.cfg.momentum)},
      {"lr_decay", num(a.cfg.lr_decay)},
      {"batch_size", std::to_string(a.cfg.batch_size)},
      {"epochs", std::to_string(a.cfg.epochs)},
      {"init_scale", num(a.cfg.init_scale)},
      {"provider", a.provider.mode},
      {"embed_seed", std::to_string(a.provider.embed_seed)},
      {"train_utterances", std::to_string(corpus.size())},
  };
  corpusio::save_model(predictor::to_artifact(result.params, meta), a.out);
  if (!a.trace.empty()) {
    std::vector<json> rows;
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) rows.push_back({{"epoch", i}, {"loss", result.loss_trace[i]}});
    corpusio::write_lines(a.trace, rows);
  }
  std::cerr << "train: " << corpus.size() << " utterances, loss " << num(result.loss_trace.front()) << " -> "
            << num(result.loss_trace.back()) << '\n';
  return 0;
}

// --- predict -----------------------------------------------------------------

struct PredictArgs {
  std::string model, texts, out, mode = "single", split = "all";
  int window = 0;
  ProviderArgs provider;
};

// Input lines carry {id, text}; consecutive lines with the same optional
// "paragraph" value form one paragraph, lines without one stand alone.
int cmd_predict(const PredictArgs& a) {
  const auto params = predictor::from_artifact(corpusio::load_model(a.model, corpusio::ArtifactKind::predictor));
  const auto mode = predictor::parse_context_mode(a.mode);
  if (a.window < 0) throw Error("--window must be non-negative");
  const auto want = split_filter(a.split);

  struct Item {
    std::string id, text;
  };
  std::vector<std::vector<Item>> paragraphs;
  std::optional<std::string> current;
  corpusio::for_each_jsonl(a.texts, [&](const json& j, std::size_t) {
    if (want) {
      auto it = j.find("split");
      if (it == j.end() || !it->is_string() || corpusio::parse_split(it->get<std::string>()) != *want) return;
    }
    Item item{corpusio::require_string(j, "id"), corpusio::require_string(j, "text")};
    std::optional<std::string> para;
    if (auto it = j.find("paragraph"); it != j.end() && !it->is_null()) para = it->is_string() ? it->get<std::string>() : it->dump();
    if (!para || !current || *para != *current || paragraphs.empty()) paragraphs.emplace_back();
    current = para;
    paragraphs.back().push_back(std::move(item));
  });

  const auto provider = a.provider.make();
  std::vector<predictor::PredictionRecord> records;
  for (const auto& p : paragraphs) {
    std::vector<std::string> sentences;
    for (const auto& it : p) sentences.push_back(it.text);
    const auto preds = predictor::predict(sentences, params, *provider, mode, a.window);
    for (std::size_t i = 0; i < p.size(); ++i) records.push_back({p[i].id, preds[i]});
  }
  predictor::write_predictions(records, a.out);
  std::cerr << "predict: " << records.size() << " predictions -> " << a.out << '\n';
  return 0;
}

// --- encoder -----------------------------------------------------------------

struct InitEncoderArgs {
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_init_encoder(const InitEncoderArgs& a) {
  corpusio::save_model(encoder::to_artifact(encoder::init_encoder(a.seed), {{"seed", std::to_string(a.seed)}}), a.out);
  return 0;
}

struct EncodeArgs {
  std::string encoder_path, predictions, out;
  int grid = 0;
};

int cmd_encode(const EncodeArgs& a) {
  const auto params = encoder::from_artifact(corpusio::load_model(a.encoder_path, corpusio::ArtifactKind::encoder));
  if (a.grid > 0) {
    if (!a.predictions.empty()) throw Error("--grid and --predictions are exclusive");
    encoder::write_grid_csv(encoder::export_grid(params, encoder::uniform_strengths(a.grid)), a.out);
    return 0;
  }
  if (a.predictions.empty()) throw Error("encode needs --predictions or --grid");
  std::vector<json> rows;
  for (const auto& r : predictor::read_predictions(a.predictions)) {
    // neutral has no strength axis
    const double s = r.prediction.cls == Emotion::neutral ? 0.0 : r.prediction.strength;
    rows.push_back(encoder::embedding_to_json({r.id, r.prediction.cls, s, encoder::encode(params, r.prediction.cls, s)}));
  }
  corpusio::write_lines(a.out, rows);
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string predictions, references, out, split = "all";
};

int cmd_eval(const EvalArgs& a) {
  const auto preds = predictor::read_predictions(a.predictions);
  const auto want = split_filter(a.split);
  std::map<std::string, predictor::Reference> refs;
  for (const auto& r : corpusio::read_annotations(a.references)) {
    if (!want || r.split == *want) refs[r.id] = {r.emotion, r.strength};
  }
  if (preds.size() != refs.size()) {
    throw Error("eval: " + std::to_string(preds.size()) + " predictions but " + std::to_string(refs.size()) + " references");
  }
  std::vector<predictor::EmotionPrediction> p;
  std::vector<predictor::Reference> r;
  for (const auto& rec : preds) {
    auto it = refs.find(rec.id);
    if (it == refs.end()) throw Error("eval: no reference for id '" + rec.id + "'");
    p.push_back(rec.prediction);
    r.push_back(it->second);
  }
  const json metrics = predictor::metrics_to_json(predictor::evaluate(p, r));
  std::ofstream out(a.out, std::ios::binary);
  out << metrics.dump(1) << '\n';
  if (!out) throw Error("cannot write " + a.out);
  std::cerr << "eval: macro accuracy " << num(metrics["macro_accuracy"].get<double>()) << '\n';
  return 0;
}

// --- synth-corpus --------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
};

// 12 utterances, three per emotion: neutral is a quiet steady tone, the others
// get pitch, loudness and tremolo that grow with the utterance index.
int cmd_synth(const SynthArgs& a) {
  const fs::path dir(a.out);
  fs::create_directories(dir / "wav");
  const int sr = 16000;
  const double base_f0[] = {120.0, 220.0, 150.0, 180.0};
  const double base_amp[] = {0.15, 0.4, 0.12, 0.6};
  const char* texts[4][3] = {
      {"The meeting starts at nine.", "Please close the door.", "The report is on the desk."},
      {"We won the whole thing!", "What a lovely surprise.", "I can't wait to see you!"},
      {"I miss the old house.", "Nobody came to the party.", "It was all for nothing."},
      {"Stop doing that right now!", "You lied to me again.", "This is completely unacceptable!"},
  };
  Rng rng(a.seed);
  std::vector<json> rows;
  for (int e = 0; e < kNumEmotions; ++e) {
    for (int k = 0; k < 3; ++k) {
      const std::string id = std::string(to_string(emotion_from_index(e))) + "_" + std::to_string(k);
      const double level = e == 0 ? 0.0 : 0.5 * k;
      const double f0 = base_f0[e] * (1.0 + 0.3 * level) * (1.0 + 0.02 * rng.uniform(-1.0, 1.0));
      const double amp = base_amp[e] * (1.0 + 0.5 * level);
      const double trem = e == 0 ? 0.0 : 0.1 + 0.3 * level;
      const std::size_t n = static_cast<std::size_t>(sr * (0.6 + 0.1 * k));
      std::vector<double> samples(n);
      double phase = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        phase += 2.0 * std::numbers::pi * f0 * (1.0 + 0.05 * level * std::sin(2.0 * std::numbers::pi * 2.0 * t)) / sr;
        const double env = amp * (1.0 - trem * 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * 5.0 * t)));
        samples[i] = env * (std::sin(phase) + 0.3 * std::sin(2.0 * phase)) + 0.003 * rng.normal();
      }
      const std::string rel = "wav/" + id + ".wav";
      write_wav(dir / rel, samples, sr);
      corpusio::ManifestRecord r{id, texts[e][k], emotion_from_index(e), rel, k < 2 ? corpusio::Split::train : corpusio::Split::test};
      rows.push_back(corpusio::record_to_json(r));
    }
  }
  corpusio::write_lines(dir / "manifest.jsonl", rows);
  std::cerr << "synth-corpus: 12 utterances -> " << (dir / "manifest.jsonl").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion class/strength annotation, prediction and embedding pipeline"};
  app.set_config("--config", "", "key = value configuration file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  FeaturesArgs fa;
  auto* features = app.add_subcommand("features", "Extract 384-dim acoustic features for every manifest entry");
  features->add_option("--manifest", fa.manifest)->required();
  features->add_option("--out", fa.out)->required();
  features->add_option("--jobs", fa.jobs, "Worker threads")->capture_default_str();

  AnnotateArgs aa;
  auto* annotate = app.add_subcommand("annotate", "Rank-based emotion strength annotation");
  annotate->add_option("--manifest", aa.manifest)->required();
  annotate->add_option("--features", aa.features)->required();
  annotate->add_option("--out", aa.out)->required();
  annotate->add_option("--models-dir", aa.models_dir, "Also save the per-emotion rankers here");
  annotate->add_option("--C", aa.C)->capture_default_str();
  annotate->add_option("--epochs", aa.epochs)->capture_default_str();
  annotate->add_option("--seed", aa.seed)->capture_default_str();
  annotate->add_option("--max-pairs", aa.max_pairs)->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the class/strength predictor on text embeddings");
  train->add_option("--annotated", ta.annotated)->required();
  train->add_option("--out", ta.out)->required();
  train->add_option("--trace", ta.trace, "Write the per-epoch loss trace (JSONL)");
  train->add_option("--split", ta.split, "train|valid|test|all")->capture_default_str();
  ta.provider.add(train);
  train->add_option("--lambda-cls", ta.cfg.lambda_cls, "Weight of the classification term")->capture_default_str();
  train->add_option("--lr", ta.cfg.learning_rate)->capture_default_str();
  train->add_option("--momentum", ta.cfg.momentum)->capture_default_str();
  train->add_option("--lr-decay", ta.cfg.lr_decay)->capture_default_str();
  train->add_option("--batch-size", ta.cfg.batch_size)->capture_default_str();
  train->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
  train->add_option("--seed", ta.cfg.seed)->capture_default_str();
  train->add_option("--init-scale", ta.cfg.init_scale)->capture_default_str();

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Predict emotion class and strength for texts");
  predict->add_option("--model", pa.model)->required();
  predict->add_option("--texts", pa.texts, "JSONL with id, text and optional paragraph")->required();
  predict->add_option("--out", pa.out)->required();
  predict->add_option("--mode", pa.mode)->check(CLI::IsMember({"single", "paragraph"}))->capture_default_str();
  predict->add_option("--window", pa.window, "Paragraph context in sentences, 0 = whole paragraph")->capture_default_str();
  predict->add_option("--split", pa.split, "Keep only lines whose split matches")->capture_default_str();
  pa.provider.add(predict);

  InitEncoderArgs ia;
  auto* init_enc = app.add_subcommand("init-encoder", "Write a freshly initialized emotion encoder");
  init_enc->add_option("--out", ia.out)->required();
  init_enc->add_option("--seed", ia.seed)->capture_default_str();

  EncodeArgs ea;
  auto* encode = app.add_subcommand("encode", "Joint emotion embeddings from predictions, or a strength grid");
  encode->add_option("--encoder", ea.encoder_path)->required();
  encode->add_option("--predictions", ea.predictions);
  encode->add_option("--grid", ea.grid, "Export N strengths per class as CSV instead");
  encode->add_option("--out", ea.out)->required();

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "Score predictions against annotated references");
  eval->add_option("--predictions", va.predictions)->required();
  eval->add_option("--references", va.references)->required();
  eval->add_option("--out", va.out)->required();
  eval->add_option("--split", va.split, "Keep only references in this split")->capture_default_str();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-corpus", "Generate the 12-utterance synthetic micro-corpus");
  synth->add_option("--out", sa.out)->required();
  synth->add_option("--seed", sa.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* active = app.get_subcommands().front();
  std::cerr << "# resolved config: " << active->get_name() << '\n' << active->config_to_str(true, false);
  try {
    if (*features) return cmd_features(fa);
    if (*annotate) return cmd_annotate(aa);
    if (*train) return cmd_train(ta);
    if (*predict) return cmd_predict(pa);
    if (*init_enc) return cmd_init_encoder(ia);
    if (*encode) return cmd_encode(ea);
    if (*eval) return cmd_eval(va);
    if (*synth) return cmd_synth(sa);
  } catch (const std::exception& e) {
    std::cerr << "emopred: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
