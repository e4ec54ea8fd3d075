// Sentence embedding providers: a client for a remote embedding service that
// fronts the frozen language model, and a deterministic hashed character
// n-gram fallback for offline use.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "emopred/common.hpp"

namespace emopred::textembed {

inline constexpr int kEmbeddingDim = 768;

using TextEmbedding = Eigen::VectorXd;

enum class ProviderMode { remote, local };

struct ProviderConfig {
  ProviderMode mode = ProviderMode::local;
  std::string endpoint;
  double timeout_seconds = 30.0;
  std::uint64_t seed = 0;
  int expected_dim = kEmbeddingDim;

  void validate() const {
    if (mode == ProviderMode::remote && endpoint.empty()) throw Error("remote provider requires an endpoint");
    if (!(timeout_seconds > 0.0)) throw Error("provider timeout must be positive");
    if (expected_dim <= 0) throw Error("expected_dim must be positive");
  }
};

inline std::string_view to_string(ProviderMode m) { return m == ProviderMode::remote ? "remote" : "local"; }

inline ProviderMode parse_mode(std::string_view s) {
  if (s == "remote") return ProviderMode::remote;
  if (s == "local") return ProviderMode::local;
  throw Error("unknown provider mode '" + std::string(s) + "'");
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// One embedding per text, in input order.
  virtual std::vector<TextEmbedding> embed(std::span<const std::string> texts) const = 0;
  virtual int dim() const = 0;
};

// ---------------------------------------------------------------------------
// Local hashed n-gram provider

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// UTF-8 to code points; undecodable bytes map to U+DC80..U+DCFF.
inline std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (ok) {
      out.push_back(cp);
      i += static_cast<std::size_t>(len);
    } else {
      out.push_back(0xDC00 + b0);
      ++i;
    }
  }
  return out;
}

}  // namespace detail

/// Character 1..3-gram counts hashed with a seeded signed hash into `dim`
/// bins, L2-normalized. The empty string maps to the zero vector.
inline TextEmbedding embed_local_one(std::string_view text, std::uint64_t seed, int dim = kEmbeddingDim) {
  TextEmbedding v = TextEmbedding::Zero(dim);
  const auto cps = detail::decode_utf8(text);
  const std::uint64_t base = detail::splitmix64(seed);
  for (std::size_t n = 1; n <= 3; ++n) {
    if (cps.size() < n) break;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      std::uint64_t h = base ^ (0x100000001b3ULL * n);
      for (std::size_t k = 0; k < n; ++k) {
        h ^= static_cast<std::uint64_t>(cps[i + k]);
        h *= 0x100000001b3ULL;
      }
      h = detail::splitmix64(h);
      const auto bin = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim));
      v[bin] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

inline std::vector<TextEmbedding> embed_local(std::span<const std::string> texts, std::uint64_t seed,
                                              int dim = kEmbeddingDim) {
  std::vector<TextEmbedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_local_one(t, seed, dim));
  return out;
}

class LocalProvider final : public EmbeddingProvider {
 public:
  explicit LocalProvider(std::uint64_t seed, int dim = kEmbeddingDim) : seed_(seed), dim_(dim) {}
  std::vector<TextEmbedding> embed(std::span<const std::string> texts) const override {
    return embed_local(texts, seed_, dim_);
  }
  int dim() const override { return dim_; }

 private:
  std::uint64_t seed_;
  int dim_;
};

// ---------------------------------------------------------------------------
// Remote provider: POST {endpoint}/embed {"texts": [...]} -> {"embeddings": [[...], ...]}

struct ParsedEndpoint {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // without trailing slash
};

inline ParsedEndpoint parse_endpoint(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0) throw Error("endpoint must be an http:// URL: '" + url + "'");
  const std::size_t slash = url.find('/', kScheme.size());
  ParsedEndpoint p;
  p.origin = url.substr(0, slash);
  if (p.origin.size() == kScheme.size()) throw Error("endpoint has no host: '" + url + "'");
  p.base_path = slash == std::string::npos ? "" : url.substr(slash);
  while (!p.base_path.empty() && p.base_path.back() == '/') p.base_path.pop_back();
  return p;
}

inline std::vector<TextEmbedding> parse_embed_response(const std::string& body, std::size_t expected_count,
                                                       int expected_dim) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw Error("malformed response body: not JSON");
  }
  if (!j.is_object() || !j.contains("embeddings") || !j["embeddings"].is_array()) {
    throw Error("malformed response body: missing 'embeddings' array");
  }
  const auto& rows = j["embeddings"];
  if (rows.size() != expected_count) {
    throw Error("malformed response body: expected " + std::to_string(expected_count) + " embeddings, got " +
                std::to_string(rows.size()));
  }
  std::vector<TextEmbedding> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (!row.is_array()) throw Error("malformed response body: embedding is not an array");
    if (row.size() != static_cast<std::size_t>(expected_dim)) {
      throw Error("embedding dimension mismatch: expected " + std::to_string(expected_dim) + ", got " +
                  std::to_string(row.size()));
    }
    TextEmbedding v(expected_dim);
    for (int i = 0; i < expected_dim; ++i) {
      const auto& x = row[static_cast<std::size_t>(i)];
      if (!x.is_number()) throw Error("malformed response body: non-numeric embedding value");
      v[i] = x.get<double>();
      if (!std::isfinite(v[i])) throw Error("malformed response body: non-finite embedding value");
    }
    out.push_back(std::move(v));
  }
  return out;
}

/// One HTTP request per call, no retries. Safe to call concurrently.
inline std::vector<TextEmbedding> embed_remote(std::span<const std::string> texts, const ProviderConfig& cfg) {
  cfg.validate();
  if (cfg.mode != ProviderMode::remote) throw Error("embed_remote: provider is not in remote mode");
  if (texts.empty()) throw Error("embed_remote: no texts");
  const ParsedEndpoint ep = parse_endpoint(cfg.endpoint);

  httplib::Client client(ep.origin);
  const auto timeout = std::chrono::microseconds(static_cast<long long>(cfg.timeout_seconds * 1e6));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  nlohmann::json body;
  body["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(ep.base_path + "/embed", body.dump(), "application/json; charset=utf-8");
  if (!res) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= 0.9 * cfg.timeout_seconds)) {
      throw Error("network failure: request to " + cfg.endpoint + " timed out after " +
                  std::to_string(cfg.timeout_seconds) + " s");
    }
    throw Error("network failure: request to " + cfg.endpoint + " failed (" + httplib::to_string(err) + ")");
  }
  if (res->status != 200) {
    throw Error("embedding service returned HTTP status " + std::to_string(res->status));
  }
  return parse_embed_response(res->body, texts.size(), cfg.expected_dim);
}

class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    parse_endpoint(cfg_.endpoint);
  }
  std::vector<TextEmbedding> embed(std::span<const std::string> texts) const override {
    return embed_remote(texts, cfg_);
  }
  int dim() const override { return cfg_.expected_dim; }

 private:
  ProviderConfig cfg_;
};

inline std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg) {
  cfg.validate();
  if (cfg.mode == ProviderMode::remote) return std::make_unique<RemoteProvider>(cfg);
  return std::make_unique<LocalProvider>(cfg.seed, cfg.expected_dim);
}

}  // namespace emopred::textembed
