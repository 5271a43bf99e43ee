#include "eco/server.hpp"

#include <httplib.h>

#include <ctime>

#include "eco/jsonl.hpp"
#include "eco/tokenize.hpp"

namespace eco {

namespace {

class NotFoundError : public Error {
public:
    using Error::Error;
};

json error_body(const std::string& message, const std::string& type) {
    return json{{"error", json{{"message", message}, {"type", type}}}};
}

}  // namespace

struct EcoServer::Impl {
    httplib::Server svr;
    int bound_port = 0;
};

EcoServer::EcoServer(std::filesystem::path artifact_root, ServerOptions options)
    : artifact_root_(std::move(artifact_root)),
      options_(std::move(options)),
      impl_(std::make_unique<Impl>()) {
    setup_routes();
}

EcoServer::~EcoServer() { stop(); }

void EcoServer::load_build(const std::string& build_id) {
    auto dir = artifact_root_ / build_id;
    if (!std::filesystem::exists(dir))
        throw NotFoundError("no artifacts for build '" + build_id + "'");
    auto bundle = std::make_shared<BuildBundle>(BuildBundle::load(dir, build_id));
    std::lock_guard lock(builds_mu_);
    builds_[build_id] = std::move(bundle);  // reload replaces idempotently
    if (default_build_.empty()) default_build_ = build_id;
}

std::shared_ptr<const BuildBundle> EcoServer::bundle_for(const std::string& build_id) const {
    std::lock_guard lock(builds_mu_);
    std::string id = build_id.empty() ? default_build_ : build_id;
    auto it = builds_.find(id);
    if (it == builds_.end())
        throw NotFoundError("build '" + (id.empty() ? "<none>" : id) + "' is not loaded");
    return it->second;
}

void EcoServer::append_audit(const json& record) const {
    std::lock_guard lock(log_mu_);
    append_jsonl(artifact_root_ / "selections.jsonl", record);
}

void EcoServer::append_error(const std::string& where, const std::string& message) const {
    std::lock_guard lock(log_mu_);
    append_jsonl(artifact_root_ / "errors.jsonl",
                 json{{"at", iso8601_now()}, {"where", where}, {"message", message}});
}

json EcoServer::state() const {
    json builds = json::array();
    {
        std::lock_guard lock(builds_mu_);
        for (const auto& [id, bundle] : builds_)
            builds.push_back(json{{"build_id", id},
                                  {"paths", bundle->paths.size()},
                                  {"records", bundle->records.size()},
                                  {"queries", bundle->queries.size()}});
    }
    return json{{"builds", builds},
                {"requests", counters_.requests.load()},
                {"completions", counters_.completions.load()},
                {"fallbacks", counters_.fallbacks.load()},
                {"errors", counters_.errors.load()},
                {"slo_violations",
                 json{{"estimate", counters_.estimate_violations.load()},
                      {"measured", counters_.measured_violations.load()}}},
                {"cache", json{{"hits", serve_cache_.hits()},
                               {"misses", serve_cache_.misses()}}}};
}

json EcoServer::handle_completion(const json& body) {
    const json eco_ext = body.value("eco", json::object());
    auto bundle = bundle_for(eco_ext.value("build_id", ""));

    std::string query;
    for (const auto& msg : body.value("messages", json::array())) {
        if (msg.value("role", "") == "user" && msg.contains("content") &&
            msg["content"].is_string())
            query = msg["content"].get<std::string>();
    }
    if (query.empty()) throw Error("request carries no user message");

    SloConstraint slo = SloConstraint::from_json(eco_ext.value("slo", json::object()));
    Profile profile = options_.default_profile;
    if (eco_ext.contains("profile")) profile = profile_from(eco_ext["profile"].get<std::string>());

    SelectOptions sel_opts;
    sel_opts.k = options_.knn_k;
    sel_opts.tau_acc = options_.tau_acc;
    sel_opts.profile = profile;
    SelectionResult sel =
        select(query, slo, bundle->encoder, bundle->stats, bundle->component_stats,
               bundle->index, bundle->paths_by_id, *bundle->embedder, sel_opts);

    TrainingQuery request_query;
    request_query.id = "req-" + hex64(fnv1a64(query));
    request_query.text = query;
    std::string response_text;
    ExecuteOptions exec_opts;
    exec_opts.build_id = bundle->build_id;
    EvalRecord record = execute_path(request_query, sel.path, *bundle->executor, &serve_cache_,
                                     nullptr, exec_opts, &response_text);
    if (!record.error.empty())
        throw UpstreamError("path '" + sel.path_id + "' failed: " + record.error, 502);

    if (sel.slo_violation_estimate) counters_.estimate_violations.fetch_add(1);
    bool measured_violation =
        (slo.max_latency_ms && record.ttft_ms > *slo.max_latency_ms) ||
        (slo.max_cost && record.cost > *slo.max_cost);
    if (measured_violation) counters_.measured_violations.fetch_add(1);
    if (sel.fallback) counters_.fallbacks.fetch_add(1);

    json audit = sel.audit_json(slo, query);
    audit["build_id"] = bundle->build_id;
    audit["measured"] = json{{"ttft_ms", record.ttft_ms},
                             {"cost", record.cost},
                             {"latency_violation", measured_violation}};
    append_audit(audit);

    std::uint64_t n = counters_.completions.fetch_add(1);
    json eco_block{{"build_id", bundle->build_id},
                   {"path", sel.path_id},
                   {"fallback", sel.fallback},
                   {"prototype", sel.prototype},
                   {"slo_violation_estimate", sel.slo_violation_estimate},
                   {"ttft_ms", record.ttft_ms},
                   {"cost", record.cost}};
    json estimates = json::object();
    if (sel.latency_estimate) estimates["latency_ms"] = *sel.latency_estimate;
    if (sel.cost_estimate) estimates["cost"] = *sel.cost_estimate;
    estimates["basis"] = std::string(latency_basis_name(sel.basis));
    eco_block["estimates"] = std::move(estimates);

    std::string model_name = resolved_model_id(sel.path.at(StageKind::ModelSelection));
    json response{
        {"id", "chatcmpl-" + hex64(fnv1a64(bundle->build_id + "|" + query + "|" +
                                           std::to_string(n)))},
        {"object", "chat.completion"},
        {"created", static_cast<long long>(std::time(nullptr))},
        {"model", model_name},
        {"choices",
         json::array({json{{"index", 0},
                           {"message", json{{"role", "assistant"}, {"content", response_text}}},
                           {"finish_reason", "stop"}}})},
        {"usage", json{{"prompt_tokens", count_tokens(query)},
                       {"completion_tokens", count_tokens(response_text)},
                       {"total_tokens",
                        count_tokens(query) + count_tokens(response_text)}}},
        {"eco", std::move(eco_block)}};
    return response;
}

bool EcoServer::authorized(const std::string& auth_header) const {
    if (options_.bearer_token.empty()) return true;
    return auth_header == "Bearer " + options_.bearer_token;
}

void EcoServer::setup_routes() {
    auto& svr = impl_->svr;

    svr.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"}}.dump(), "application/json");
    });

    svr.Get("/eco/state", [this](const httplib::Request& req, httplib::Response& res) {
        if (!authorized(req.get_header_value("Authorization"))) {
            res.status = 401;
            res.set_content(error_body("unauthorized", "auth_error").dump(),
                            "application/json");
            return;
        }
        res.set_content(state().dump(2), "application/json");
    });

    svr.Post("/eco/builds/([^/]+)/load",
             [this](const httplib::Request& req, httplib::Response& res) {
                 if (!authorized(req.get_header_value("Authorization"))) {
                     res.status = 401;
                     res.set_content(error_body("unauthorized", "auth_error").dump(),
                                     "application/json");
                     return;
                 }
                 std::string id = req.matches[1];
                 try {
                     load_build(id);
                     res.set_content(json{{"loaded", id}}.dump(), "application/json");
                 } catch (const NotFoundError& e) {
                     counters_.errors.fetch_add(1);
                     append_error("load_build", e.what());
                     res.status = 404;
                     res.set_content(error_body(e.what(), "not_found").dump(),
                                     "application/json");
                 } catch (const std::exception& e) {
                     counters_.errors.fetch_add(1);
                     append_error("load_build", e.what());
                     res.status = 409;
                     res.set_content(error_body(e.what(), "inconsistent_build").dump(),
                                     "application/json");
                 }
             });

    svr.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                            httplib::Response& res) {
        counters_.requests.fetch_add(1);
        if (!authorized(req.get_header_value("Authorization"))) {
            res.status = 401;
            res.set_content(error_body("unauthorized", "auth_error").dump(),
                            "application/json");
            return;
        }
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded()) {
            res.status = 400;
            res.set_content(error_body("request body is not valid JSON",
                                       "invalid_request_error")
                                .dump(),
                            "application/json");
            return;
        }
        try {
            json response = handle_completion(body);
            if (body.value("stream", false)) {
                // Single-shot SSE: role delta, content delta, eco-tagged stop.
                std::string id = response["id"];
                std::string model = response["model"];
                long long created = response["created"];
                std::string content =
                    response["choices"][0]["message"]["content"].get<std::string>();
                json head{{"id", id},
                          {"object", "chat.completion.chunk"},
                          {"created", created},
                          {"model", model},
                          {"choices", json::array({json{{"index", 0},
                                                        {"delta", json{{"role", "assistant"}}},
                                                        {"finish_reason", nullptr}}})}};
                json mid = head;
                mid["choices"][0]["delta"] = json{{"content", content}};
                json tail = head;
                tail["choices"][0]["delta"] = json::object();
                tail["choices"][0]["finish_reason"] = "stop";
                tail["eco"] = response["eco"];
                std::string payload = "data: " + head.dump() + "\n\ndata: " + mid.dump() +
                                      "\n\ndata: " + tail.dump() + "\n\ndata: [DONE]\n\n";
                res.set_content(payload, "text/event-stream");
            } else {
                res.set_content(response.dump(), "application/json");
            }
        } catch (const NotFoundError& e) {
            counters_.errors.fetch_add(1);
            append_error("chat.completions", e.what());
            res.status = 404;
            res.set_content(error_body(e.what(), "not_found").dump(), "application/json");
        } catch (const UpstreamError& e) {
            counters_.errors.fetch_add(1);
            append_error("chat.completions", e.what());
            res.status = 502;
            res.set_content(error_body(e.what(), "upstream_error").dump(),
                            "application/json");
        } catch (const std::exception& e) {
            counters_.errors.fetch_add(1);
            append_error("chat.completions", e.what());
            res.status = 400;
            res.set_content(error_body(e.what(), "invalid_request_error").dump(),
                            "application/json");
        }
    });
}

bool EcoServer::listen() {
    return impl_->svr.listen(options_.host, options_.port);
}

int EcoServer::start() {
    int port = impl_->svr.bind_to_any_port(options_.host);
    if (port <= 0) throw Error("failed to bind server socket");
    impl_->bound_port = port;
    listener_ = std::thread([this] { impl_->svr.listen_after_bind(); });
    impl_->svr.wait_until_ready();
    return port;
}

void EcoServer::stop() {
    if (impl_) impl_->svr.stop();
    if (listener_.joinable()) listener_.join();
}

}  // namespace eco
