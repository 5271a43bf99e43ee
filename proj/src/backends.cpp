#include "eco/backends.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "eco/tokenize.hpp"

namespace eco {

ModelEndpoint ModelEndpoint::from_json(const json& j) {
    ModelEndpoint ep;
    ep.id = j.at("id").get<std::string>();
    ep.tier = j.value("tier", "edge");
    ep.base_url = j.value("base_url", "");
    ep.cost_alpha = j.value("cost_alpha", 0.0);
    ep.cost_beta = j.value("cost_beta", 0.0);
    ep.max_tokens_default = j.value("max_tokens", 256);
    ep.timeout_ms = j.value("timeout_ms", 30000);
    if (ep.cost_alpha < 0 || ep.cost_beta < 0)
        throw Error("endpoint '" + ep.id + "' has negative cost factors");
    if (ep.max_tokens_default < 1)
        throw Error("endpoint '" + ep.id + "' must allow at least one output token");
    return ep;
}

json ModelEndpoint::to_json() const {
    return json{{"id", id},
                {"tier", tier},
                {"base_url", base_url},
                {"cost_alpha", cost_alpha},
                {"cost_beta", cost_beta},
                {"max_tokens", max_tokens_default},
                {"timeout_ms", timeout_ms}};
}

std::string ModelEndpoint::api_key_env_var() const {
    std::string var = "ECO_LLM_API_KEY_";
    for (unsigned char c : id)
        var.push_back(std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_');
    return var;
}

double estimate_cost(std::size_t query_tokens, const ModelEndpoint& endpoint,
                     std::size_t max_tokens) {
    return endpoint.cost_alpha * static_cast<double>(query_tokens) +
           endpoint.cost_beta * static_cast<double>(max_tokens);
}

// ---------------------------------------------------------------------------
// MockScript

void MockScript::set(const std::string& digest, Entry entry) {
    std::lock_guard lock(mu_);
    entries_[digest] = std::move(entry);
}

std::optional<MockScript::Entry> MockScript::get(const std::string& digest) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(digest);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void MockScript::count(const std::string& key) {
    std::lock_guard lock(mu_);
    ++counters_[key];
    total_.fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t MockScript::count_for(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = counters_.find(key);
    return it == counters_.end() ? 0 : it->second;
}

std::uint64_t MockScript::total_invocations() const {
    return total_.load(std::memory_order_relaxed);
}

std::string MockScript::digest_of(const std::string& prompt) {
    return hex64(fnv1a64(prompt));
}

GenerationResult MockTextClient::complete(const std::string& prompt, const json& params) {
    (void)params;
    std::string digest = MockScript::digest_of(prompt);
    script_->count(digest);
    GenerationResult result;
    if (auto entry = script_->get(digest)) {
        result.text = entry->text;
        result.ttft_ms = entry->ttft_ms;
    } else {
        // Echo mode: return the text after the last blank line, which is the
        // payload position in every prompt template we send.
        auto pos = prompt.rfind("\n\n");
        result.text = trim(pos == std::string::npos ? prompt : prompt.substr(pos + 2));
        result.ttft_ms = 5.0 + static_cast<double>(fnv1a64(digest) % 50);
    }
    result.total_ms = result.ttft_ms + 1.0;
    result.input_tokens = count_tokens(prompt);
    result.output_tokens = count_tokens(result.text);
    return result;
}

// ---------------------------------------------------------------------------
// OpenAI-compatible client

namespace {

// Splits "http://host:port" into client target and returns the path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    std::string rest = base_url;
    auto scheme = rest.find("://");
    std::string origin = rest;
    std::string prefix;
    if (scheme != std::string::npos) {
        auto path_pos = rest.find('/', scheme + 3);
        if (path_pos != std::string::npos) {
            origin = rest.substr(0, path_pos);
            prefix = rest.substr(path_pos);
            if (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        }
    }
    return {origin, prefix};
}

}  // namespace

GenerationResult OpenAiClient::complete(const std::string& prompt, const json& params) {
    auto [origin, prefix] = split_base_url(endpoint_.base_url);
    httplib::Client cli(origin);
    cli.set_connection_timeout(0, endpoint_.timeout_ms * 1000);
    cli.set_read_timeout(endpoint_.timeout_ms / 1000, (endpoint_.timeout_ms % 1000) * 1000);

    json body;
    body["model"] = params.value("model", endpoint_.id);
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
    body["stream"] = true;
    body["max_tokens"] = params.value("max_tokens", endpoint_.max_tokens_default);
    if (params.contains("temperature")) body["temperature"] = params["temperature"];

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env_var().c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    GenerationResult result;
    auto start = std::chrono::steady_clock::now();
    bool first_chunk = true;
    std::string buffer;

    auto consume_line = [&](std::string_view line) {
        if (line.rfind("data:", 0) != 0) return;
        std::string payload = trim(line.substr(5));
        if (payload.empty() || payload == "[DONE]") return;
        json chunk = json::parse(payload, nullptr, false);
        if (chunk.is_discarded()) return;
        for (const auto& choice : chunk.value("choices", json::array())) {
            const json& delta = choice.value("delta", json::object());
            if (delta.contains("content") && delta["content"].is_string()) {
                if (first_chunk) {
                    result.ttft_ms = std::chrono::duration<double, std::milli>(
                                         std::chrono::steady_clock::now() - start)
                                         .count();
                    first_chunk = false;
                }
                result.text += delta["content"].get<std::string>();
            }
        }
        if (chunk.contains("usage") && chunk["usage"].is_object()) {
            result.input_tokens = chunk["usage"].value("prompt_tokens", 0);
            result.output_tokens = chunk["usage"].value("completion_tokens", 0);
        }
    };

    httplib::Request req;
    req.method = "POST";
    req.path = prefix + "/v1/chat/completions";
    req.headers = headers;
    req.body = body.dump();
    req.set_header("Content-Type", "application/json");
    req.content_receiver = [&](const char* data, size_t len, std::uint64_t, std::uint64_t) {
        buffer.append(data, len);
        std::size_t pos;
        while ((pos = buffer.find('\n')) != std::string::npos) {
            consume_line(std::string_view(buffer).substr(0, pos));
            buffer.erase(0, pos + 1);
        }
        return true;
    };
    auto res = cli.send(req);

    if (!res) {
        auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
            throw TimeoutError("timeout contacting endpoint '" + endpoint_.id + "'");
        throw UpstreamError("endpoint '" + endpoint_.id + "' unreachable: " +
                                httplib::to_string(err),
                            0);
    }
    if (res->status < 200 || res->status >= 300)
        throw UpstreamError("endpoint '" + endpoint_.id + "' returned HTTP " +
                                std::to_string(res->status),
                            res->status);
    if (!buffer.empty()) consume_line(buffer);

    result.total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    if (first_chunk) result.ttft_ms = result.total_ms;
    if (result.input_tokens == 0) result.input_tokens = count_tokens(prompt);
    if (result.output_tokens == 0) result.output_tokens = count_tokens(result.text);
    return result;
}

// ---------------------------------------------------------------------------
// Embedders

std::vector<double> HashingEmbedder::embed(const std::string& text) {
    std::vector<double> vec(dim_, 0.0);
    if (text.empty()) return vec;  // degenerate zero vector by convention

    std::string lowered;
    lowered.reserve(text.size());
    for (unsigned char c : text) lowered.push_back(static_cast<char>(std::tolower(c)));

    const std::size_t n = 3;
    if (lowered.size() < n) {
        std::uint64_t h = fnv1a64(lowered, seed_);
        vec[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    } else {
        for (std::size_t i = 0; i + n <= lowered.size(); ++i) {
            std::uint64_t h = fnv1a64(std::string_view(lowered).substr(i, n), seed_);
            vec[h % dim_] += (h >> 63) ? -1.0 : 1.0;
        }
    }

    double norm_sq = 0.0;
    for (double x : vec) norm_sq += x * x;
    if (norm_sq > 0.0) {
        double inv = 1.0 / std::sqrt(norm_sq);
        for (double& x : vec) x *= inv;
    }
    return vec;
}

std::string HashingEmbedder::id() const {
    return "hashing-trigram-" + std::to_string(dim_);
}

std::vector<double> RemoteEmbedder::embed(const std::string& text) {
    auto [origin, prefix] = split_base_url(endpoint_.base_url);
    httplib::Client cli(origin);
    cli.set_read_timeout(endpoint_.timeout_ms / 1000, (endpoint_.timeout_ms % 1000) * 1000);

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env_var().c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    json body{{"model", endpoint_.id}, {"input", text}};
    auto res = cli.Post(prefix + "/v1/embeddings", headers, body.dump(), "application/json");
    if (!res)
        throw UpstreamError("embedder '" + endpoint_.id + "' unreachable", 0);
    if (res->status < 200 || res->status >= 300)
        throw UpstreamError("embedder '" + endpoint_.id + "' returned HTTP " +
                                std::to_string(res->status),
                            res->status);
    json doc = json::parse(res->body);
    auto vec = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
    if (vec.size() != dim_)
        throw Error("embedder '" + endpoint_.id + "' returned dimension " +
                    std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
    return vec;
}

}  // namespace eco
