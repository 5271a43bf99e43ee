// eco — end-to-end pipeline driver: context generation, path exploration,
// critical component analysis, encoder training, serving, and reporting.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "eco/bundle.hpp"
#include "eco/cca.hpp"
#include "eco/domain_context.hpp"
#include "eco/dsqe.hpp"
#include "eco/emulator.hpp"
#include "eco/jsonl.hpp"
#include "eco/report.hpp"
#include "eco/rps.hpp"
#include "eco/server.hpp"
#include "eco/synthetic.hpp"

namespace fs = std::filesystem;
using namespace eco;

namespace {

// Invalid user input (schema, missing artifacts, bad ids) exits with 2;
// runtime failures exit with 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct GlobalConfig {
    json raw;
    Registry registry;
    fs::path artifact_dir = "artifacts";
    fs::path docs_dir = "docs";
    std::string domain_description;
    double budget = 1.0;
    double tau = 0.1;
    int lambda = 1;
    DsqeConfig dsqe;
    double split_ratio = 0.75;
    int per_type_count = 1;
    std::size_t knn_k = 5;
    double tau_acc = 0.6;
    std::size_t embed_dim = 256;
    std::vector<ModelEndpoint> endpoints;
    bool clean_documents = false;
    std::string bearer_token;
};

void require(bool cond, const std::string& message) {
    if (!cond) throw ConfigError(message);
}

GlobalConfig load_config(const fs::path& path) {
    require(fs::exists(path), "config file '" + path.string() + "' does not exist");
    json doc;
    try {
        doc = read_json(path);
    } catch (const std::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    require(doc.is_object(), "config root must be a JSON object");

    GlobalConfig cfg;
    cfg.raw = doc;

    json registry_doc;
    if (doc.contains("registry")) {
        registry_doc = doc["registry"];
    } else if (doc.contains("registry_path")) {
        fs::path rp = doc["registry_path"].get<std::string>();
        if (rp.is_relative()) rp = path.parent_path() / rp;
        require(fs::exists(rp), "registry file '" + rp.string() + "' does not exist");
        registry_doc = read_json(rp);
    } else {
        throw ConfigError("config must provide 'registry' or 'registry_path'");
    }

    if (doc.contains("artifact_dir")) {
        require(doc["artifact_dir"].is_string(), "'artifact_dir' must be a string");
        cfg.artifact_dir = doc["artifact_dir"].get<std::string>();
        if (cfg.artifact_dir.is_relative()) cfg.artifact_dir = path.parent_path() / cfg.artifact_dir;
    } else {
        cfg.artifact_dir = path.parent_path() / "artifacts";
    }
    if (doc.contains("docs_dir")) {
        require(doc["docs_dir"].is_string(), "'docs_dir' must be a string");
        cfg.docs_dir = doc["docs_dir"].get<std::string>();
        if (cfg.docs_dir.is_relative()) cfg.docs_dir = path.parent_path() / cfg.docs_dir;
    }
    cfg.domain_description = doc.value("domain_description", "");
    cfg.clean_documents = doc.value("clean_documents", false);
    cfg.bearer_token = doc.value("bearer_token", "");

    const json defaults = doc.value("defaults", json::object());
    require(defaults.is_object(), "'defaults' must be an object");
    cfg.budget = defaults.value("budget", 1.0);
    cfg.tau = defaults.value("tau", 0.1);
    cfg.lambda = defaults.value("lambda", 1);
    require(cfg.lambda == 0 || cfg.lambda == 1, "'defaults.lambda' must be 0 or 1");
    cfg.split_ratio = defaults.value("split_ratio", 0.75);
    cfg.per_type_count = defaults.value("per_type_count", 1);
    cfg.knn_k = defaults.value("knn_k", 5);
    cfg.tau_acc = defaults.value("tau_acc", 0.6);
    cfg.embed_dim = defaults.value("embed_dim", 256);
    if (defaults.contains("dsqe")) {
        try {
            cfg.dsqe = DsqeConfig::from_json(defaults["dsqe"]);
        } catch (const std::exception& e) {
            throw ConfigError("invalid 'defaults.dsqe': " + std::string(e.what()));
        }
    }

    for (const auto& ej : doc.value("endpoints", json::array())) {
        try {
            cfg.endpoints.push_back(ModelEndpoint::from_json(ej));
        } catch (const std::exception& e) {
            throw ConfigError("invalid endpoint: " + std::string(e.what()));
        }
    }

    Registry raw_registry;
    try {
        raw_registry = Registry::from_json(registry_doc);
    } catch (const std::exception& e) {
        throw ConfigError("invalid registry: " + std::string(e.what()));
    }
    // Endpoints (and their cost factors) are part of the build configuration:
    // embed them so artifact bundles are self-contained and the build id
    // tracks pricing changes.
    if (!cfg.endpoints.empty()) {
        json eps = json::array();
        for (const auto& ep : cfg.endpoints) eps.push_back(ep.to_json());
        raw_registry.global["endpoints"] = std::move(eps);
    }

    // Resolver environment: configured values plus the available model list.
    std::map<std::string, json> environment;
    json models = json::array();
    for (const auto& ep : cfg.endpoints) models.push_back(ep.id);
    environment["available_models"] = models;
    if (doc.contains("environment"))
        for (const auto& [key, value] : doc.at("environment").items())
            environment[key] = value;
    try {
        cfg.registry = resolve_dynamic(raw_registry, environment);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

WarnSink stderr_warn() {
    return [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
}

fs::path build_dir(const GlobalConfig& cfg, const std::string& build_id) {
    return cfg.artifact_dir / build_id;
}

// The build directory's own registry is authoritative (synthetic worlds ship
// theirs); otherwise the config registry is materialized on first use.
Registry registry_for_build(const GlobalConfig& cfg, const std::string& build_id,
                            bool create) {
    fs::path dir = build_dir(cfg, build_id);
    if (fs::exists(dir / "registry.json")) {
        Registry reg = Registry::from_json(read_json(dir / "registry.json"));
        if (reg.build_id() != build_id)
            throw ConfigError("registry.json in '" + dir.string() +
                              "' does not hash to build '" + build_id + "'");
        return reg;
    }
    if (cfg.registry.build_id() != build_id)
        throw ConfigError("build '" + build_id + "' matches neither the config registry nor "
                          "an existing artifact directory");
    if (create) {
        fs::create_directories(dir);
        write_json(dir / "registry.json", cfg.registry.to_json());
    }
    return cfg.registry;
}

std::vector<TrainingQuery> load_queries(const fs::path& dir) {
    std::vector<TrainingQuery> queries;
    for_each_jsonl(dir / "queries.jsonl",
                   [&](const json& j) { queries.push_back(TrainingQuery::from_json(j)); });
    return queries;
}

struct BuildContext {
    Registry registry;
    std::shared_ptr<const World> world;  // when world.json is present
    std::unique_ptr<StageExecutor> executor;
    std::unique_ptr<Judge> judge;
    std::shared_ptr<Embedder> embedder;
};

BuildContext make_build_context(const GlobalConfig& cfg, const std::string& build_id,
                                bool create) {
    BuildContext ctx;
    ctx.registry = registry_for_build(cfg, build_id, create);
    ctx.embedder = std::make_shared<HashingEmbedder>(cfg.embed_dim);
    fs::path dir = build_dir(cfg, build_id);
    if (fs::exists(dir / "world.json")) {
        auto world = std::make_shared<World>(World::from_json(read_json(dir / "world.json")));
        ctx.world = world;
        ctx.executor = std::make_unique<WorldExecutor>(world);
        ctx.judge = std::make_unique<WorldJudge>(world);
    } else {
        std::vector<DocumentChunk> chunks;
        for_each_jsonl(dir / "chunks.jsonl",
                       [&](const json& j) { chunks.push_back(DocumentChunk::from_json(j)); });
        std::map<std::string, ModelEndpoint> endpoints;
        std::map<std::string, std::shared_ptr<TextGenerationClient>> clients;
        for (const auto& ep : cfg.endpoints) {
            clients[ep.id] = ep.base_url.empty()
                                 ? std::shared_ptr<TextGenerationClient>(
                                       std::make_shared<MockTextClient>())
                                 : std::make_shared<OpenAiClient>(ep);
            endpoints[ep.id] = ep;
        }
        ctx.executor = std::make_unique<BasicStageExecutor>(
            std::make_shared<MockTextClient>(), std::move(clients), std::move(endpoints),
            std::move(chunks), ctx.embedder);
        ctx.judge = std::make_unique<TokenF1Judge>();
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_generate(const GlobalConfig& cfg, std::uint64_t seed) {
    require(fs::exists(cfg.docs_dir) && fs::is_directory(cfg.docs_dir),
            "docs dir '" + cfg.docs_dir.string() + "' does not exist");

    std::vector<SourceDocument> docs;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(cfg.docs_dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension();
        if (ext == ".md" || ext == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), "docs dir '" + cfg.docs_dir.string() + "' has no .md or .txt files");

    MockQueryGenerator generator;
    for (const auto& file : files) {
        std::ifstream in(file);
        std::string body((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        require(!trim(body).empty(), "document '" + file.string() + "' is empty");
        if (cfg.clean_documents) body = clean_content(body, generator);
        docs.push_back(SourceDocument::from_markdown(file.stem().string(), body));
    }

    std::string build_id = cfg.registry.build_id();
    fs::path dir = build_dir(cfg, build_id);
    fs::create_directories(dir);
    write_json(dir / "registry.json", cfg.registry.to_json());

    auto chunks = chunk_documents(docs);
    {
        std::ofstream out(dir / "chunks.jsonl");
        for (const auto& c : chunks) out << c.to_json().dump() << '\n';
    }

    GenerateOptions gen_opts;
    gen_opts.per_type_count = cfg.per_type_count;
    auto queries = generate_queries(chunks, cfg.domain_description, generator, gen_opts,
                                    stderr_warn());
    require(!queries.empty(), "no queries were generated; documents may be too small");
    split_train_test(queries, cfg.split_ratio, seed, stderr_warn());
    {
        std::ofstream out(dir / "queries.jsonl");
        for (const auto& q : queries) out << q.to_json().dump() << '\n';
    }

    std::cout << "build " << build_id << ": " << chunks.size() << " chunks, "
              << queries.size() << " queries\n";
    return 0;
}

int cmd_explore(const GlobalConfig& cfg, std::string build_id, double budget, bool exhaustive,
                std::uint64_t seed, int workers, bool cold_latency) {
    if (build_id.empty()) build_id = cfg.registry.build_id();
    BuildContext ctx = make_build_context(cfg, build_id, true);
    fs::path dir = build_dir(cfg, build_id);

    std::vector<TrainingQuery> queries;
    if (ctx.world) {
        for (const auto& q : ctx.world->queries)
            if (q.split == "train") queries.push_back(q);
    } else {
        for (auto& q : load_queries(dir))
            if (q.split == "train") queries.push_back(std::move(q));
    }
    require(!queries.empty(), "no training queries in '" + dir.string() + "'; run generate first");

    ExplorationOptions opts;
    opts.budget_factor = budget;
    opts.exhaustive = exhaustive;
    opts.seed = seed;
    opts.workers = workers;
    opts.cold_latency = cold_latency;
    auto summary = run_exploration(build_id, queries, ctx.registry, *ctx.executor, *ctx.judge,
                                   *ctx.embedder, dir, opts, stderr_warn());
    std::cout << "build " << build_id << ": executed " << summary.executed << ", skipped "
              << summary.skipped << ", planned total " << summary.planned_total
              << ", cache hits " << summary.cache_hits << "\n";
    return 0;
}

int cmd_analyze(const GlobalConfig& cfg, std::string build_id, double tau, int lambda) {
    if (build_id.empty()) build_id = cfg.registry.build_id();
    Registry registry = registry_for_build(cfg, build_id, false);
    fs::path dir = build_dir(cfg, build_id);

    auto records = load_records(dir / "records.jsonl");
    require(!records.empty(), "no records in '" + dir.string() + "'; run explore first");

    std::map<std::string, PathSpec> paths_by_id;
    for (const auto& p : enumerate_paths(registry)) paths_by_id[p.canonical_id()] = p;

    auto phi = build_map(records, paths_by_id, tau, lambda, false, stderr_warn());
    json doc = phi.to_json();
    doc["build_id"] = build_id;
    write_json(dir / "cca.json", doc);
    std::cout << "build " << build_id << ": critical components for " << phi.map.size()
              << " queries (tau=" << tau << ", lambda=" << lambda << ")\n";
    return 0;
}

int cmd_train(const GlobalConfig& cfg, std::string build_id, DsqeConfig dsqe_cfg) {
    if (build_id.empty()) build_id = cfg.registry.build_id();
    fs::path dir = build_dir(cfg, build_id);
    require(fs::exists(dir / "cca.json"), "no cca.json in '" + dir.string() + "'; run analyze first");

    BuildContext ctx = make_build_context(cfg, build_id, false);
    CriticalComponentMap phi = CriticalComponentMap::from_json(read_json(dir / "cca.json"));
    require(!phi.map.empty(), "critical component map is empty");

    std::vector<TrainingQuery> train_queries;
    auto all = ctx.world ? ctx.world->queries : load_queries(dir);
    for (const auto& q : all)
        if (q.split == "train" && phi.map.count(q.id)) train_queries.push_back(q);
    require(!train_queries.empty(), "no training queries with critical component entries");

    EncoderModel model = train(train_queries, phi, *ctx.embedder, dsqe_cfg, stderr_warn());
    model.build_id = build_id;
    write_json(dir / "encoder.json", model.to_json());
    std::cout << "build " << build_id << ": trained encoder with "
              << model.params.prototypes.size() << " prototypes; final epoch loss "
              << (model.loss_history.empty() ? 0.0 : model.loss_history.back()) << "\n";
    return 0;
}

int cmd_serve(const GlobalConfig& cfg, const std::string& host, int port,
              std::vector<std::string> builds) {
    ServerOptions opts;
    opts.host = host;
    opts.port = port;
    opts.bearer_token = cfg.bearer_token;
    opts.knn_k = cfg.knn_k;
    opts.tau_acc = cfg.tau_acc;
    opts.default_profile = cfg.lambda == 1 ? Profile::LatencyFirst : Profile::CostFirst;

    EcoServer server(cfg.artifact_dir, opts);
    if (builds.empty()) builds.push_back(cfg.registry.build_id());
    for (const auto& id : builds) {
        server.load_build(id);
        std::cout << "loaded build " << id << "\n";
    }
    std::cout << "listening on " << host << ":" << port << "\n";
    if (!server.listen()) {
        std::cerr << "error: failed to listen on " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}

int cmd_report(const GlobalConfig& cfg, std::string build_id, const std::string& format,
               const std::string& out_path) {
    if (build_id.empty()) build_id = cfg.registry.build_id();
    fs::path dir = build_dir(cfg, build_id);
    auto records = load_records(dir / "records.jsonl");
    require(!records.empty(), "no records in '" + dir.string() + "'");

    Report report = build_report(records);
    std::string rendered;
    if (format == "json")
        rendered = report.to_json().dump(2) + "\n";
    else if (format == "csv")
        rendered = report.to_csv();
    else
        rendered = report.to_table();

    if (out_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream out(out_path);
        require(static_cast<bool>(out), "cannot write '" + out_path + "'");
        out << rendered;
    }
    return 0;
}

int cmd_world(const GlobalConfig& cfg, const std::string& spec_path, std::uint64_t seed) {
    WorldSpec spec;
    if (!spec_path.empty()) {
        require(fs::exists(spec_path), "world spec '" + spec_path + "' does not exist");
        spec = WorldSpec::from_json(read_json(spec_path));
    }
    spec.seed = seed;
    World world = make_world(spec);
    std::string build_id = world.registry.build_id();
    fs::path dir = build_dir(cfg, build_id);
    fs::create_directories(dir);
    write_json(dir / "registry.json", world.registry.to_json());
    write_json(dir / "world.json", world.to_json());
    {
        std::ofstream out(dir / "queries.jsonl");
        for (const auto& q : world.queries) out << q.to_json().dump() << '\n';
    }
    std::cout << "world build " << build_id << ": " << world.queries.size() << " queries, "
              << world.paths.size() << " paths\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"eco — edge-cloud LLM path exploration and SLO-aware serving"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "global configuration JSON")->required();

    std::string build_id;
    std::uint64_t seed = 0;

    auto* generate = app.add_subcommand("generate", "chunk documents and generate queries");
    generate->add_option("--seed", seed, "split seed");

    auto* explore = app.add_subcommand("explore", "evaluate (query, path) pairs under a budget");
    double budget = 1.0;
    bool exhaustive = false;
    int workers = 0;
    bool cold_latency = false;
    explore->add_option("--build", build_id, "build identifier");
    explore->add_option("--budget", budget, "budget factor B");
    explore->add_flag("--exhaustive", exhaustive, "evaluate every (query, path) pair");
    explore->add_option("--seed", seed, "sampling seed");
    explore->add_option("--workers", workers, "worker threads (0 = hardware)");
    explore->add_flag("--cold-latency", cold_latency,
                      "charge cached stage latency into ttft");

    auto* analyze = app.add_subcommand("analyze", "derive critical components per query");
    double tau = 0.1;
    int lambda = -1;
    analyze->add_option("--build", build_id, "build identifier");
    analyze->add_option("--tau", tau, "impact threshold");
    analyze->add_option("--lambda", lambda, "1 = latency-first, 0 = cost-first");

    auto* train_cmd = app.add_subcommand("train", "train the query encoder");
    std::uint64_t train_seed = 0;
    int epochs = -1;
    train_cmd->add_option("--build", build_id, "build identifier");
    train_cmd->add_option("--seed", train_seed, "training seed");
    train_cmd->add_option("--epochs", epochs, "override training epochs");

    auto* serve = app.add_subcommand("serve", "run the OpenAI-compatible server");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::vector<std::string> serve_builds;
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "listen port");
    serve->add_option("--build", serve_builds, "build id(s) to load");

    auto* report = app.add_subcommand("report", "per-path and per-profile metric tables");
    std::string format = "table";
    std::string out_path;
    report->add_option("--build", build_id, "build identifier");
    report->add_option("--format", format, "table | csv | json")
        ->check(CLI::IsMember({"table", "csv", "json"}));
    report->add_option("--out", out_path, "write to file instead of stdout");

    auto* world = app.add_subcommand("world", "materialize a synthetic world build");
    std::string world_spec;
    world->add_option("--spec", world_spec, "world spec JSON (defaults when omitted)");
    world->add_option("--seed", seed, "world seed");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        GlobalConfig cfg = load_config(config_path);
        if (lambda == -1) lambda = cfg.lambda;

        if (generate->parsed()) return cmd_generate(cfg, seed);
        if (explore->parsed())
            return cmd_explore(cfg, build_id, budget, exhaustive, seed, workers, cold_latency);
        if (analyze->parsed()) {
            require(lambda == 0 || lambda == 1, "--lambda must be 0 or 1");
            return cmd_analyze(cfg, build_id, tau, lambda);
        }
        if (train_cmd->parsed()) {
            DsqeConfig dsqe_cfg = cfg.dsqe;
            dsqe_cfg.seed = train_seed;
            if (epochs > 0) dsqe_cfg.epochs = epochs;
            return cmd_train(cfg, build_id, dsqe_cfg);
        }
        if (serve->parsed()) return cmd_serve(cfg, host, port, serve_builds);
        if (report->parsed()) return cmd_report(cfg, build_id, format, out_path);
        if (world->parsed()) return cmd_world(cfg, world_spec, seed);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
