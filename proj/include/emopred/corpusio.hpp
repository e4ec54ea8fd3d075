// Corpus manifests (JSONL), feature files, dataset splits and the versioned
// model artifact format shared by the rank, predictor and encoder models.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emopred/afeat.hpp"
#include "emopred/base64.hpp"
#include "emopred/common.hpp"

namespace emopred::corpusio {

using nlohmann::json;

enum class Split { train, valid, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw Error("unknown split '" + std::string(s) + "'");
}

struct ManifestRecord {
  std::string id;
  std::string text;
  Emotion emotion = Emotion::neutral;
  std::string audio_path;
  Split split = Split::train;

  bool operator==(const ManifestRecord&) const = default;
};

struct AnnotatedRecord : ManifestRecord {
  double strength = 0.0;

  bool operator==(const AnnotatedRecord&) const = default;
};

using CorpusManifest = std::vector<ManifestRecord>;
using AnnotatedManifest = std::vector<AnnotatedRecord>;

// ---------------------------------------------------------------------------
// JSONL plumbing

/// Calls fn(json, line_number) for every non-blank line; parse errors name the line.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": parse error: " + e.what());
    }
    try {
      fn(j, line_no);
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void write_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

inline const json& require_field(const json& j, const char* name) {
  if (!j.is_object()) throw Error("record is not a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw Error(std::string("missing field '") + name + "'");
  return *it;
}

inline std::string require_string(const json& j, const char* name) {
  const json& v = require_field(j, name);
  if (!v.is_string()) throw Error(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

inline double require_number(const json& j, const char* name) {
  const json& v = require_field(j, name);
  if (!v.is_number()) throw Error(std::string("field '") + name + "' must be a number");
  return v.get<double>();
}

// ---------------------------------------------------------------------------
// Manifests

inline ManifestRecord record_from_json(const json& j) {
  ManifestRecord r;
  r.id = require_string(j, "id");
  r.text = require_string(j, "text");
  const std::string emo = require_string(j, "emotion");
  try {
    r.emotion = parse_emotion(emo);
  } catch (const Error& e) {
    throw Error(std::string("field 'emotion': ") + e.what());
  }
  r.audio_path = require_string(j, "audio_path");
  const std::string split = require_string(j, "split");
  try {
    r.split = parse_split(split);
  } catch (const Error& e) {
    throw Error(std::string("field 'split': ") + e.what());
  }
  return r;
}

inline json record_to_json(const ManifestRecord& r) {
  json j;
  j["id"] = r.id;
  j["text"] = r.text;
  j["emotion"] = std::string(emopred::to_string(r.emotion));
  j["audio_path"] = r.audio_path;
  j["split"] = std::string(to_string(r.split));
  return j;
}

inline void validate_annotation(const AnnotatedRecord& r) {
  if (!std::isfinite(r.strength) || r.strength < 0.0 || r.strength > 1.0) {
    throw Error("utterance '" + r.id + "': strength " + std::to_string(r.strength) + " outside [0,1]");
  }
  if (r.emotion == Emotion::neutral && r.strength != 0.0) {
    throw Error("utterance '" + r.id + "': neutral utterance must have strength 0");
  }
}

template <typename Record>
void check_unique_ids(const std::vector<Record>& records) {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) throw Error("duplicate id '" + r.id + "'");
  }
}

inline CorpusManifest read_manifest(const std::filesystem::path& path) {
  CorpusManifest out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    ManifestRecord r = record_from_json(j);
    if (!seen.insert(r.id).second) throw Error("duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

inline void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  check_unique_ids(manifest);
  std::vector<json> rows;
  rows.reserve(manifest.size());
  for (const auto& r : manifest) rows.push_back(record_to_json(r));
  write_lines(path, rows);
}

inline AnnotatedManifest read_annotations(const std::filesystem::path& path) {
  AnnotatedManifest out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    AnnotatedRecord r;
    static_cast<ManifestRecord&>(r) = record_from_json(j);
    r.strength = require_number(j, "strength");
    validate_annotation(r);
    if (!seen.insert(r.id).second) throw Error("duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

/// Validates every record before anything is written, so a violating
/// manifest never produces a partial file.
inline void write_annotations(const AnnotatedManifest& manifest, const std::filesystem::path& path) {
  check_unique_ids(manifest);
  for (const auto& r : manifest) validate_annotation(r);
  std::vector<json> rows;
  rows.reserve(manifest.size());
  for (const auto& r : manifest) {
    json j = record_to_json(r);
    j["strength"] = r.strength;
    rows.push_back(std::move(j));
  }
  write_lines(path, rows);
}

// ---------------------------------------------------------------------------
// Feature files: {"id": ..., "features": [384 numbers]}

struct FeatureRecord {
  std::string id;
  afeat::FeatureVector features{};
};

inline void write_features(const std::vector<FeatureRecord>& records, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["features"] = std::vector<double>(r.features.begin(), r.features.end());
    rows.push_back(std::move(j));
  }
  write_lines(path, rows);
}

inline std::vector<FeatureRecord> read_features(const std::filesystem::path& path) {
  std::vector<FeatureRecord> out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    FeatureRecord r;
    r.id = require_string(j, "id");
    const json& f = require_field(j, "features");
    if (!f.is_array() || f.size() != afeat::kFeatureDim) {
      throw Error("field 'features' must be an array of " + std::to_string(afeat::kFeatureDim) + " numbers");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!f[i].is_number()) throw Error("field 'features' contains a non-number");
      r.features[i] = f[i].get<double>();
    }
    if (!seen.insert(r.id).second) throw Error("duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSet {
  CorpusManifest train, valid, test;
};

inline SplitSet split_by_field(const CorpusManifest& manifest) {
  SplitSet out;
  for (const auto& r : manifest) {
    switch (r.split) {
      case Split::train: out.train.push_back(r); break;
      case Split::valid: out.valid.push_back(r); break;
      case Split::test: out.test.push_back(r); break;
    }
  }
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

/// Stratified random split: each emotion is shuffled with the seed and cut by
/// the rounded ratios; records keep their input order within each output and
/// their split field is rewritten.
inline SplitSet split_by_ratio(const CorpusManifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.valid + ratios.test;
  if (ratios.train < 0.0 || ratios.valid < 0.0 || ratios.test < 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error("split ratios must be non-negative and sum to 1");
  }
  std::vector<Split> assigned(manifest.size(), Split::train);
  Rng rng(seed);
  for (Emotion e : kAllEmotions) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      if (manifest[i].emotion == e) idx.push_back(i);
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    }
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * ratios.train));
    const auto n_valid = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(n * ratios.valid)));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      assigned[idx[k]] = k < n_train ? Split::train : (k < n_train + n_valid ? Split::valid : Split::test);
    }
  }
  SplitSet out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    ManifestRecord r = manifest[i];
    r.split = assigned[i];
    switch (r.split) {
      case Split::train: out.train.push_back(std::move(r)); break;
      case Split::valid: out.valid.push_back(std::move(r)); break;
      case Split::test: out.test.push_back(std::move(r)); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model artifacts

inline constexpr int kFormatVersion = 1;

enum class ArtifactKind { rank, predictor, encoder };

inline std::string_view to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::rank: return "rank";
    case ArtifactKind::predictor: return "predictor";
    case ArtifactKind::encoder: return "encoder";
  }
  return "?";
}

inline ArtifactKind parse_kind(std::string_view s) {
  if (s == "rank") return ArtifactKind::rank;
  if (s == "predictor") return ArtifactKind::predictor;
  if (s == "encoder") return ArtifactKind::encoder;
  throw Error("unknown artifact kind '" + std::string(s) + "'");
}

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  bool operator==(const Tensor&) const = default;
};

struct ModelArtifact {
  int format_version = kFormatVersion;
  ArtifactKind kind = ArtifactKind::rank;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  const Tensor& tensor(const std::string& name, const std::vector<std::size_t>& expected_shape) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("artifact is missing tensor '" + name + "'");
    if (it->second.shape != expected_shape) throw Error("tensor '" + name + "' has unexpected shape");
    return it->second;
  }

  const std::string& meta(const std::string& key) const {
    auto it = metadata.find(key);
    if (it == metadata.end()) throw Error("artifact is missing metadata '" + key + "'");
    return it->second;
  }
};

/// Little-endian IEEE-754 binary64 bytes, independent of host byte order.
inline std::vector<unsigned char> pack_f64(const std::vector<double>& values) {
  std::vector<unsigned char> out(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return out;
}

inline std::vector<double> unpack_f64(const std::vector<unsigned char>& bytes) {
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline json artifact_to_json(const ModelArtifact& a) {
  json shapes = json::object();
  json tensors = json::object();
  for (const auto& [name, t] : a.tensors) {
    if (t.data.size() != t.element_count()) throw Error("tensor '" + name + "' data does not match its shape");
    shapes[name] = t.shape;
    tensors[name] = base64::encode(pack_f64(t.data));
  }
  json j;
  j["format_version"] = a.format_version;
  j["kind"] = std::string(to_string(a.kind));
  j["shapes"] = std::move(shapes);
  j["tensors"] = std::move(tensors);
  j["metadata"] = a.metadata;
  return j;
}

inline ModelArtifact artifact_from_json(const json& j) {
  ModelArtifact a;
  const json& version = require_field(j, "format_version");
  if (!version.is_number_integer()) throw Error("format_version must be an integer");
  a.format_version = version.get<int>();
  if (a.format_version != kFormatVersion) {
    throw Error("unsupported version " + std::to_string(a.format_version));
  }
  a.kind = parse_kind(require_string(j, "kind"));
  const json& shapes = require_field(j, "shapes");
  const json& tensors = require_field(j, "tensors");
  if (!shapes.is_object() || !tensors.is_object()) throw Error("shapes and tensors must be objects");
  for (const auto& [name, payload] : tensors.items()) {
    auto sit = shapes.find(name);
    if (sit == shapes.end()) throw Error("tensor '" + name + "' has no shape");
    Tensor t;
    for (const auto& d : *sit) {
      if (!d.is_number_unsigned()) throw Error("tensor '" + name + "' has an invalid shape");
      t.shape.push_back(d.get<std::size_t>());
    }
    if (!payload.is_string()) throw Error("tensor '" + name + "' payload must be a base64 string");
    const auto bytes = base64::decode(payload.get<std::string>());
    if (bytes.size() != 8 * t.element_count()) {
      throw Error("tensor '" + name + "': byte length mismatch (" + std::to_string(bytes.size()) + " bytes for " +
                  std::to_string(t.element_count()) + " elements)");
    }
    t.data = unpack_f64(bytes);
    a.tensors.emplace(name, std::move(t));
  }
  for (const auto& [name, _] : shapes.items()) {
    if (!tensors.contains(name)) throw Error("shape given for missing tensor '" + name + "'");
  }
  if (auto mit = j.find("metadata"); mit != j.end()) {
    if (!mit->is_object()) throw Error("metadata must be an object");
    for (const auto& [k, v] : mit->items()) {
      if (!v.is_string()) throw Error("metadata value '" + k + "' must be a string");
      a.metadata[k] = v.get<std::string>();
    }
  }
  return a;
}

inline void save_model(const ModelArtifact& artifact, const std::filesystem::path& path) {
  const std::string text = artifact_to_json(artifact).dump(1) + "\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

inline ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error(path.string() + ": parse error: " + e.what());
  }
  try {
    return artifact_from_json(j);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline ModelArtifact load_model(const std::filesystem::path& path, ArtifactKind expected) {
  ModelArtifact a = load_model(path);
  if (a.kind != expected) {
    throw Error(path.string() + ": expected a '" + std::string(to_string(expected)) + "' artifact, found '" +
                std::string(to_string(a.kind)) + "'");
  }
  return a;
}

}  // namespace emopred::corpusio
