#pragma once

#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "sgc/core.hpp"
#include "sgc/error.hpp"

namespace sgc::llm {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Compact SHA-256, used only to key the on-disk response cache.
class Sha256 {
 public:
  Sha256() { reset(); }

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    total_ += len;
    while (len > 0) {
      std::size_t take = std::min(len, std::size_t{64} - buf_len_);
      std::memcpy(buf_.data() + buf_len_, p, take);
      buf_len_ += take;
      p += take;
      len -= take;
      if (buf_len_ == 64) {
        process(buf_.data());
        buf_len_ = 0;
      }
    }
  }

  std::array<std::uint8_t, 32> digest() {
    std::uint64_t bits = total_ * 8;
    std::uint8_t pad = 0x80;
    update(&pad, 1);
    const std::uint8_t zero = 0;
    while (buf_len_ != 56) update(&zero, 1);
    std::uint8_t len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
    update(len_be, 8);
    std::array<std::uint8_t, 32> out{};
    for (int i = 0; i < 8; ++i) {
      out[4 * i + 0] = static_cast<std::uint8_t>(h_[i] >> 24);
      out[4 * i + 1] = static_cast<std::uint8_t>(h_[i] >> 16);
      out[4 * i + 2] = static_cast<std::uint8_t>(h_[i] >> 8);
      out[4 * i + 3] = static_cast<std::uint8_t>(h_[i]);
    }
    return out;
  }

 private:
  void reset() {
    h_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
          0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    buf_len_ = 0;
    total_ = 0;
  }

  static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void process(const std::uint8_t* p) {
    static constexpr std::uint32_t K[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
        0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
        0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
        0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
        0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
        0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
        0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
        0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3];
    std::uint32_t e = h_[4], f = h_[5], g = h_[6], h = h_[7];
    for (int i = 0; i < 64; ++i) {
      std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t t1 = h + S1 + ch + K[i] + w[i];
      std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t t2 = S0 + maj;
      h = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    h_[0] += a; h_[1] += b; h_[2] += c; h_[3] += d;
    h_[4] += e; h_[5] += f; h_[6] += g; h_[7] += h;
  }

  std::array<std::uint32_t, 8> h_{};
  std::array<std::uint8_t, 64> buf_{};
  std::size_t buf_len_ = 0;
  std::uint64_t total_ = 0;
};

inline std::string sha256_hex(std::string_view s) {
  Sha256 sha;
  sha.update(s.data(), s.size());
  const auto d = sha.digest();
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : d) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

enum class PromptKind { Initial, Summarize, SummaryCompare, DirectCompare };

inline const char* prompt_kind_name(PromptKind k) {
  switch (k) {
    case PromptKind::Initial: return "initial";
    case PromptKind::Summarize: return "summarize";
    case PromptKind::SummaryCompare: return "summary_compare";
    case PromptKind::DirectCompare: return "direct_compare";
  }
  return "?";
}

using Bindings = std::map<std::string, std::string>;

namespace detail {

inline const std::string& slot(const Bindings& b, const char* name, PromptKind k) {
  auto it = b.find(name);
  if (it == b.end())
    throw Error(Errc::MissingSlot, std::string("prompt '") + prompt_kind_name(k) +
                                       "' needs slot '" + name + "'");
  return it->second;
}

}  // namespace detail

/// Renders one of the four query templates with every slot filled.
inline std::string render_prompt(PromptKind kind, const Bindings& b) {
  using detail::slot;
  switch (kind) {
    case PromptKind::Initial:
      return "What features are useful to distinguish " +
             slot(b, "HOI category", kind) + " in a photo?";
    case PromptKind::Summarize:
      return "Summarize the following interactions with one sentence: " +
             slot(b, "category list", kind) + "?";
    case PromptKind::SummaryCompare:
      return "What features are useful to distinguish " +
             slot(b, "HOI category", kind) + " from " +
             slot(b, "subset description", kind) + "?";
    case PromptKind::DirectCompare:
      return "What features are useful to distinguish " +
             slot(b, "target category", kind) + " from " +
             slot(b, "other categories", kind) + " in a photo?";
  }
  throw Error(Errc::ParseError, "unknown prompt kind");
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

struct LlmResponse {
  std::string text;
  std::string provider_id;
  bool cached = false;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual LlmResponse complete(const std::string& prompt) = 0;
  virtual std::string id() const = 0;

  const std::vector<std::string>& call_log() const { return call_log_; }
  std::size_t calls() const { return call_log_.size(); }
  void reset_call_log() { call_log_.clear(); }

 protected:
  void record(const std::string& prompt) { call_log_.push_back(prompt); }

 private:
  std::vector<std::string> call_log_;
};

/// Table lookup over an exact prompt -> response map.
class FixtureProvider : public Provider {
 public:
  explicit FixtureProvider(std::map<std::string, std::string> table)
      : table_(std::move(table)) {}

  static FixtureProvider from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open fixture file " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw Error(Errc::ParseError, "fixture file " + path.string() + ": " + e.what());
    }
    if (!j.is_object())
      throw Error(Errc::ParseError, "fixture file must be a JSON object");
    std::map<std::string, std::string> table;
    for (auto& [k, v] : j.items()) {
      if (!v.is_string())
        throw Error(Errc::ParseError, "fixture values must be strings");
      table[k] = v.get<std::string>();
    }
    return FixtureProvider(std::move(table));
  }

  LlmResponse complete(const std::string& prompt) override {
    record(prompt);
    auto it = table_.find(prompt);
    if (it == table_.end())
      throw Error(Errc::FixtureMiss, "no fixture response for prompt \"" + prompt + "\"");
    return {it->second, id(), false};
  }

  std::string id() const override { return "fixture"; }

 private:
  std::map<std::string, std::string> table_;
};

/// Deterministic synthetic descriptions, seeded per prompt. Lets the whole
/// pipeline run offline with no fixture authoring.
class StubProvider : public Provider {
 public:
  explicit StubProvider(std::uint64_t seed = 0) : seed_(seed) {}

  LlmResponse complete(const std::string& prompt) override {
    record(prompt);
    std::mt19937_64 rng(detail::fnv1a64(prompt) ^ (seed_ * 0x9e3779b97f4a7c15ull + 1));
    static const char* adjectives[] = {"curled",   "extended", "raised",  "bent",
                                       "gripping", "open",     "angled",  "steady",
                                       "lowered",  "tense"};
    static const char* subjects[] = {"arm",   "hand",  "torso",    "gaze",
                                     "wrist", "elbow", "shoulder", "palm"};
    static const char* contexts[] = {"around the object", "toward the object",
                                     "at waist height",   "above the head",
                                     "close to the body", "at arm's length"};
    std::ostringstream out;
    const int n = 2 + static_cast<int>(rng() % 2);
    for (int i = 0; i < n; ++i) {
      if (i) out << "\n";
      out << "- " << adjectives[rng() % 10] << " " << subjects[rng() % 8] << " "
          << contexts[rng() % 6] << " (" << (rng() % 900 + 100) << ")";
    }
    return {out.str(), id(), false};
  }

  std::string id() const override { return "stub"; }

 private:
  std::uint64_t seed_;
};

struct HttpConfig {
  std::string endpoint;  // e.g. "http://localhost:8080/v1"
  std::string model = "gpt-3.5-turbo";
  std::string api_key;   // falls back to env SGC_LLM_API_KEY
  int timeout_ms = 30000;
  int retries = 0;
  int max_in_flight = 1;
  // decoding parameters passed through verbatim when set
  std::optional<double> temperature;
  std::optional<double> top_p;
};

/// Minimal chat-completions client against an OpenAI-compatible endpoint.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpConfig cfg)
      : cfg_(std::move(cfg)),
        gate_(std::max(1, cfg_.max_in_flight)) {
    if (cfg_.api_key.empty()) {
      if (const char* k = std::getenv("SGC_LLM_API_KEY")) cfg_.api_key = k;
    }
    split_endpoint();
  }

  LlmResponse complete(const std::string& prompt) override {
    record(prompt);
    nlohmann::json body = {
        {"model", cfg_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    if (cfg_.temperature) body["temperature"] = *cfg_.temperature;
    if (cfg_.top_p) body["top_p"] = *cfg_.top_p;

    httplib::Headers headers;
    if (!cfg_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    gate_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{gate_};

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      httplib::Client cli(base_);  // fresh connection per call, reentrant
      cli.set_connection_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
      cli.set_read_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
      auto res = cli.Post(path_ + "/chat/completions", headers, body.dump(),
                          "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;  // connection failure or timeout, retry if budget remains
      }
      if (res->status != 200) {
        last_error = "status " + std::to_string(res->status);
        if (res->status >= 500 && attempt < cfg_.retries) continue;
        throw Error(Errc::HttpBadStatus, "endpoint returned " + last_error);
      }
      return parse_response(res->body);
    }
    throw Error(Errc::HttpTimeout, "endpoint " + cfg_.endpoint + " unreachable (" +
                                       last_error + ")");
  }

  std::string id() const override { return "http:" + cfg_.model; }

 private:
  void split_endpoint() {
    const std::string& e = cfg_.endpoint;
    std::size_t scheme = e.find("://");
    if (scheme == std::string::npos)
      throw Error(Errc::BadEndpoint, "endpoint must start with http:// or https://");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (e.rfind("https://", 0) == 0)
      throw Error(Errc::BadEndpoint, "built without TLS support; use http://");
#endif
    std::size_t path = e.find('/', scheme + 3);
    if (path == std::string::npos) {
      base_ = e;
      path_ = "";
    } else {
      base_ = e.substr(0, path);
      path_ = e.substr(path);
      while (!path_.empty() && path_.back() == '/') path_.pop_back();
    }
  }

  LlmResponse parse_response(const std::string& body) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded())
      throw Error(Errc::MalformedResponse, "response is not valid JSON");
    try {
      std::string text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (text.empty())
        throw Error(Errc::MalformedResponse, "empty completion text");
      return {std::move(text), id(), false};
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedResponse,
                  std::string("unexpected response shape: ") + e.what());
    }
  }

  HttpConfig cfg_;
  std::string base_;  // scheme://host[:port]
  std::string path_;  // base path, no trailing slash
  std::counting_semaphore<> gate_;
};

/// Disk cache in front of any provider, keyed by SHA-256 of the prompt.
/// Writes are atomic (temp file + rename) so concurrent runs sharing a
/// cache directory stay consistent.
class CachingProvider : public Provider {
 public:
  CachingProvider(std::shared_ptr<Provider> inner, std::filesystem::path dir)
      : inner_(std::move(inner)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  LlmResponse complete(const std::string& prompt) override {
    record(prompt);
    const std::string key = detail::sha256_hex(prompt);
    const auto file = dir_ / (key + ".json");
    if (std::filesystem::exists(file)) {
      std::ifstream in(file);
      nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.value("prompt", "") == prompt) {
        return {j.at("response").get<std::string>(),
                j.value("provider", inner_->id()), true};
      }
      // corrupt or mismatched entry: fall through and rewrite
    }
    LlmResponse r = inner_->complete(prompt);
    nlohmann::json j = {{"prompt", prompt}, {"response", r.text}, {"provider", r.provider_id}};
    const auto tmp = dir_ / (key + ".tmp." + std::to_string(
        static_cast<unsigned long long>(detail::fnv1a64(prompt)) ^
        static_cast<unsigned long long>(
            std::chrono::steady_clock::now().time_since_epoch().count())));
    {
      std::ofstream out(tmp);
      if (!out) throw Error(Errc::IoError, "cannot write cache file " + tmp.string());
      out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, file);
    return r;
  }

  std::string id() const override { return inner_->id(); }

  Provider& inner() { return *inner_; }

 private:
  std::shared_ptr<Provider> inner_;
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Text encoding
// ---------------------------------------------------------------------------

/// Stand-in for a pretrained text encoder. FileBacked serves a fixed
/// description -> embedding table; DeterministicStub derives a unit vector
/// from a seeded hash of the input string.
struct TextEncoder {
  enum class Mode { DeterministicStub, FileBacked };

  Mode mode = Mode::DeterministicStub;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::map<std::string, Vec> table;

  static TextEncoder stub(std::size_t dim, std::uint64_t seed = 0) {
    TextEncoder e;
    e.mode = Mode::DeterministicStub;
    e.dim = dim;
    e.seed = seed;
    return e;
  }

  static TextEncoder file_backed(std::map<std::string, Vec> table) {
    TextEncoder e;
    e.mode = Mode::FileBacked;
    e.table = std::move(table);
    if (e.table.empty())
      throw Error(Errc::EmptyInput, "embedding table is empty");
    e.dim = e.table.begin()->second.size();
    for (const auto& [k, v] : e.table)
      if (v.size() != e.dim)
        throw Error(Errc::DimMismatch, "embedding table entry '" + k +
                                           "' has inconsistent dimension");
    return e;
  }

  static TextEncoder from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open embedding table " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw Error(Errc::ParseError, "embedding table " + path.string() + ": " + e.what());
    }
    std::map<std::string, Vec> table;
    for (auto& [k, v] : j.items()) table[k] = v.get<Vec>();
    return file_backed(std::move(table));
  }
};

inline Vec encode_text(const std::string& desc, const TextEncoder& enc) {
  if (desc.empty()) throw Error(Errc::EmptyInput, "cannot encode an empty description");
  if (enc.mode == TextEncoder::Mode::FileBacked) {
    auto it = enc.table.find(desc);
    if (it == enc.table.end())
      throw Error(Errc::UnknownDescription, "no embedding for \"" + desc + "\"");
    return l2_normalize(it->second);
  }
  // Box-Muller over raw engine draws keeps the stub identical across
  // standard libraries.
  std::mt19937_64 rng(detail::fnv1a64(desc) ^ (enc.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
  auto uniform = [&rng]() {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  };
  Vec v(enc.dim);
  for (std::size_t i = 0; i < enc.dim; i += 2) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < enc.dim) v[i + 1] = r * std::sin(2.0 * M_PI * u2);
  }
  return l2_normalize(v);
}

/// Splits a multi-line LLM answer into individual feature strings:
/// one per line, list bullets and enumeration prefixes stripped.
inline std::vector<std::string> split_features(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t b = 0, e = line.size();
    while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    // strip "-", "*", "1.", "2)" style prefixes
    std::size_t p = b;
    while (p < e && std::isdigit(static_cast<unsigned char>(line[p]))) ++p;
    if (p > b && p < e && (line[p] == '.' || line[p] == ')')) {
      b = p + 1;
    } else if (b < e && (line[b] == '-' || line[b] == '*')) {
      b += 1;
    }
    while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
    if (e > b) out.push_back(line.substr(b, e - b));
  }
  return out;
}

/// One embedding per description: the mean of its per-feature embeddings,
/// re-normalized.
inline Vec embed_description(const std::string& text, const TextEncoder& enc) {
  std::vector<std::string> feats = split_features(text);
  if (feats.empty()) throw Error(Errc::EmptyInput, "description has no features");
  std::vector<Vec> embs;
  embs.reserve(feats.size());
  for (const std::string& f : feats) embs.push_back(encode_text(f, enc));
  return l2_normalize(mean_of(embs));
}

}  // namespace sgc::llm
