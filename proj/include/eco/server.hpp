#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "eco/bundle.hpp"
#include "eco/rps.hpp"

namespace eco {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string bearer_token;  // empty -> no auth
    Profile default_profile = Profile::LatencyFirst;
    std::size_t knn_k = 5;
    double tau_acc = 0.6;
};

// OpenAI-compatible server over loaded builds. Extensions are confined to a
// top-level "eco" object in request and response bodies.
class EcoServer {
public:
    EcoServer(std::filesystem::path artifact_root, ServerOptions options = {});
    ~EcoServer();

    // Loads (or idempotently replaces) a build from <artifact_root>/<id>.
    void load_build(const std::string& build_id);

    json state() const;

    // Core handler, exposed for in-process testing.
    json handle_completion(const json& body);

    // Blocking listen on options.host:options.port.
    bool listen();

    // Background listener on an OS-assigned port; returns the port.
    int start();
    void stop();

private:
    struct Counters {
        std::atomic<std::uint64_t> requests{0};
        std::atomic<std::uint64_t> completions{0};
        std::atomic<std::uint64_t> estimate_violations{0};
        std::atomic<std::uint64_t> measured_violations{0};
        std::atomic<std::uint64_t> fallbacks{0};
        std::atomic<std::uint64_t> errors{0};
    };

    std::shared_ptr<const BuildBundle> bundle_for(const std::string& build_id) const;
    void append_audit(const json& record) const;
    void append_error(const std::string& where, const std::string& message) const;
    void setup_routes();
    bool authorized(const std::string& auth_header) const;

    std::filesystem::path artifact_root_;
    ServerOptions options_;
    mutable std::mutex builds_mu_;
    std::map<std::string, std::shared_ptr<const BuildBundle>> builds_;
    std::string default_build_;
    mutable std::mutex log_mu_;
    Counters counters_;
    PrefixCache serve_cache_;

    struct Impl;  // owns the httplib server
    std::unique_ptr<Impl> impl_;
    std::thread listener_;
};

}  // namespace eco
