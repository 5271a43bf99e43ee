#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eco/common.hpp"

namespace eco {

using json = nlohmann::json;

struct ModelEndpoint {
    std::string id;
    std::string tier = "edge";        // "edge" | "cloud"
    std::string base_url;
    double cost_alpha = 0.0;          // currency per input token
    double cost_beta = 0.0;           // currency per output token
    int max_tokens_default = 256;
    int timeout_ms = 30000;

    static ModelEndpoint from_json(const json& j);
    json to_json() const;

    // ECO_LLM_API_KEY_<ENDPOINT_ID>, uppercased, non-alnum folded to '_'.
    std::string api_key_env_var() const;
};

// cost = alpha * |q| + beta * max_tokens, exact, no rounding.
double estimate_cost(std::size_t query_tokens, const ModelEndpoint& endpoint,
                     std::size_t max_tokens);

struct GenerationResult {
    std::string text;
    double ttft_ms = 0.0;
    double total_ms = 0.0;
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

class UpstreamError : public Error {
public:
    UpstreamError(const std::string& msg, int status) : Error(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_ = 0;
};

class TextGenerationClient {
public:
    virtual ~TextGenerationClient() = default;
    virtual GenerationResult complete(const std::string& prompt, const json& params) = 0;
};

// Deterministic scripted responses keyed by request digest, with invocation
// counters. Unscripted prompts fall back to echoing the prompt tail.
struct MockScript {
    struct Entry {
        std::string text;
        double ttft_ms = 10.0;
        double accuracy_hint = 0.0;
    };

    void set(const std::string& digest, Entry entry);
    std::optional<Entry> get(const std::string& digest) const;
    void count(const std::string& key);
    std::uint64_t count_for(const std::string& key) const;
    std::uint64_t total_invocations() const;

    static std::string digest_of(const std::string& prompt);

private:
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
    std::map<std::string, std::uint64_t> counters_;
    std::atomic<std::uint64_t> total_{0};
};

class MockTextClient : public TextGenerationClient {
public:
    explicit MockTextClient(std::shared_ptr<MockScript> script = nullptr)
        : script_(script ? std::move(script) : std::make_shared<MockScript>()) {}

    GenerationResult complete(const std::string& prompt, const json& params) override;

    MockScript& script() { return *script_; }
    const MockScript& script() const { return *script_; }

private:
    std::shared_ptr<MockScript> script_;
};

// OpenAI-compatible /v1/chat/completions client. Streams so TTFT is the
// wall-clock time to the first content chunk.
class OpenAiClient : public TextGenerationClient {
public:
    explicit OpenAiClient(ModelEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

    GenerationResult complete(const std::string& prompt, const json& params) override;

    const ModelEndpoint& endpoint() const { return endpoint_; }

private:
    ModelEndpoint endpoint_;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::size_t dim() const = 0;
    virtual std::string id() const = 0;
};

// Builtin fallback: seeded feature hashing of character trigrams into `dim`
// buckets with a hash-derived sign, then L2 normalization. Fully
// deterministic; empty input yields the zero vector.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = 256, std::uint64_t seed = 0x9e3779b97f4a7c15ull)
        : dim_(dim), seed_(seed) {}

    std::vector<double> embed(const std::string& text) override;
    std::size_t dim() const override { return dim_; }
    std::string id() const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// /v1/embeddings client with the same wire shape as OpenAI.
class RemoteEmbedder : public Embedder {
public:
    RemoteEmbedder(ModelEndpoint endpoint, std::size_t dim)
        : endpoint_(std::move(endpoint)), dim_(dim) {}

    std::vector<double> embed(const std::string& text) override;
    std::size_t dim() const override { return dim_; }
    std::string id() const override { return endpoint_.id; }

private:
    ModelEndpoint endpoint_;
    std::size_t dim_;
};

}  // namespace eco
