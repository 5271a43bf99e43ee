#include "eco/bundle.hpp"

#include <algorithm>

#include "eco/jsonl.hpp"
#include "eco/tokenize.hpp"

namespace eco {

std::string resolved_model_id(const StageChoice& choice) {
    for (const char* key : {"name", "model", "model_name"}) {
        auto it = choice.config.find(key);
        if (it != choice.config.end() && it->second.is_string())
            return it->second.get<std::string>();
    }
    return choice.impl_id;
}

BasicStageExecutor::BasicStageExecutor(
    std::shared_ptr<TextGenerationClient> default_client,
    std::map<std::string, std::shared_ptr<TextGenerationClient>> model_clients,
    std::map<std::string, ModelEndpoint> endpoints, std::vector<DocumentChunk> chunks,
    std::shared_ptr<Embedder> embedder)
    : default_client_(std::move(default_client)),
      model_clients_(std::move(model_clients)),
      endpoints_(std::move(endpoints)),
      chunks_(std::move(chunks)),
      embedder_(std::move(embedder)) {
    chunk_embeddings_.reserve(chunks_.size());
    for (const auto& c : chunks_) chunk_embeddings_.push_back(embedder_->embed(c.text));
}

std::vector<std::string> BasicStageExecutor::top_chunks(const std::string& text,
                                                        std::size_t k) const {
    std::vector<std::pair<double, std::size_t>> scored;
    auto qv = embedder_->embed(text);
    double qn = 0.0;
    for (double x : qv) qn += x * x;
    if (qn <= 0.0) return {};
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        double dot = 0.0, cn = 0.0;
        for (std::size_t d = 0; d < qv.size(); ++d) {
            dot += qv[d] * chunk_embeddings_[i][d];
            cn += chunk_embeddings_[i][d] * chunk_embeddings_[i][d];
        }
        if (cn <= 0.0) continue;
        scored.push_back({dot / std::sqrt(qn * cn), i});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i)
        out.push_back(chunks_[scored[i].second].text);
    return out;
}

StageOutput BasicStageExecutor::run_query_processing(const StageChoice& choice,
                                                     const std::string& query) {
    if (choice.impl_id == "none") return StageOutput{query, 1.0, 0.0};
    std::string prompt =
        "Rewrite the following question so it is easier to answer from documentation. "
        "Keep every technical term.\n\nQuestion: " + query + "\n\nRewritten question:";
    auto result = default_client_->complete(prompt, json::object());
    std::string text = trim(result.text);
    if (text.empty()) text = query;
    return StageOutput{text, result.ttft_ms, 0.0};
}

StageOutput BasicStageExecutor::run_retrieval(const StageChoice& choice,
                                              const std::string& query) {
    if (choice.impl_id == "none") return StageOutput{"", 1.0, 0.0};
    std::size_t top_k = 4;
    auto it = choice.config.find("top_k");
    if (it != choice.config.end() && it->second.is_number())
        top_k = it->second.get<std::size_t>();

    std::string probe = query;
    double latency = 2.0;
    double cost = 0.0;
    if (choice.impl_id == "hyde") {
        std::string prompt =
            "Write a short passage that would answer this question.\n\nQuestion: " + query +
            "\n\nPassage:";
        auto result = default_client_->complete(prompt, json::object());
        if (!trim(result.text).empty()) probe = trim(result.text);
        latency += result.ttft_ms;
    }
    auto hits = top_chunks(probe, top_k);
    std::string context;
    for (const auto& h : hits) {
        if (!context.empty()) context += "\n\n";
        context += h;
    }
    return StageOutput{context, latency, cost};
}

StageOutput BasicStageExecutor::run_context_processing(const StageChoice& choice,
                                                       const std::string& upstream) {
    if (choice.impl_id == "none") return StageOutput{upstream, 1.0, 0.0};
    std::size_t budget = 512;
    auto it = choice.config.find("budget");
    if (it != choice.config.end() && it->second.is_number())
        budget = it->second.get<std::size_t>();
    // Deterministic local refinement: clip the context to the token budget.
    std::string out;
    std::size_t tokens = 0;
    bool in_tok = false;
    for (char ch : upstream) {
        bool alnum = std::isalnum(static_cast<unsigned char>(ch)) != 0;
        if (alnum && !in_tok) {
            if (tokens == budget) break;
            ++tokens;
        }
        in_tok = alnum;
        out.push_back(ch);
    }
    return StageOutput{out, 2.0, 0.0};
}

StageOutput BasicStageExecutor::run_model(const StageChoice& choice, const std::string& query,
                                          const std::string& context) {
    std::string prompt;
    if (context.empty()) {
        prompt = query;
    } else {
        prompt = "Use the following context to answer.\n\nContext:\n" + context +
                 "\n\nQuestion: " + query + "\nAnswer:";
    }
    std::string endpoint_id = resolved_model_id(choice);
    auto cit = model_clients_.find(endpoint_id);
    TextGenerationClient* client =
        cit != model_clients_.end() ? cit->second.get() : default_client_.get();

    json params = json::object();
    int max_tokens = 256;
    auto eit = endpoints_.find(endpoint_id);
    if (eit != endpoints_.end()) max_tokens = eit->second.max_tokens_default;
    auto mt = choice.config.find("max_tokens");
    if (mt != choice.config.end() && mt->second.is_number())
        max_tokens = mt->second.get<int>();
    params["max_tokens"] = max_tokens;
    auto tp = choice.config.find("temperature");
    if (tp != choice.config.end()) params["temperature"] = tp->second;

    auto result = client->complete(prompt, params);
    double cost = 0.0;
    if (eit != endpoints_.end())
        cost = estimate_cost(count_tokens(prompt), eit->second,
                             static_cast<std::size_t>(max_tokens));
    return StageOutput{result.text, result.ttft_ms, cost};
}

StageOutput BasicStageExecutor::run(StageKind stage, const StageChoice& choice,
                                    const std::string& query_text,
                                    const std::string& upstream) {
    switch (stage) {
        case StageKind::QueryProcessing: return run_query_processing(choice, query_text);
        case StageKind::Retrieval: return run_retrieval(choice, query_text);
        case StageKind::ContextProcessing: return run_context_processing(choice, upstream);
        case StageKind::ModelSelection: return run_model(choice, query_text, upstream);
    }
    throw Error("invalid stage");
}

// ---------------------------------------------------------------------------
// BuildBundle

BuildBundle BuildBundle::load(const std::filesystem::path& dir, const std::string& expected_id) {
    namespace fs = std::filesystem;
    BuildBundle bundle;

    if (!fs::exists(dir / "registry.json"))
        throw Error("build dir '" + dir.string() + "' has no registry.json");
    bundle.registry = Registry::from_json(read_json(dir / "registry.json"));
    bundle.build_id = bundle.registry.build_id();
    if (!expected_id.empty() && bundle.build_id != expected_id)
        throw Error("registry content hashes to '" + bundle.build_id +
                    "' but build '" + expected_id + "' was requested");

    bundle.paths = enumerate_paths(bundle.registry);
    for (const auto& p : bundle.paths) bundle.paths_by_id[p.canonical_id()] = p;

    for_each_jsonl(dir / "queries.jsonl", [&](const json& j) {
        bundle.queries.push_back(TrainingQuery::from_json(j));
    });

    bundle.records = load_records(dir / "records.jsonl");
    for (const auto& r : bundle.records) {
        if (!r.build_id.empty() && r.build_id != bundle.build_id)
            throw Error("records.jsonl carries build '" + r.build_id +
                        "', expected '" + bundle.build_id + "'");
    }
    if (bundle.records.empty())
        throw Error("build '" + bundle.build_id + "' has no evaluation records");

    json cca_doc = read_json(dir / "cca.json");
    std::string cca_build = cca_doc.value("build_id", "");
    if (!cca_build.empty() && cca_build != bundle.build_id)
        throw Error("cca.json carries build '" + cca_build + "', expected '" +
                    bundle.build_id + "'");
    bundle.cca = CriticalComponentMap::from_json(cca_doc);

    bundle.encoder = EncoderModel::from_json(read_json(dir / "encoder.json"));
    if (!bundle.encoder.build_id.empty() && bundle.encoder.build_id != bundle.build_id)
        throw Error("encoder.json carries build '" + bundle.encoder.build_id +
                    "', expected '" + bundle.build_id + "'");

    bundle.embedder = std::make_shared<HashingEmbedder>(bundle.encoder.dim);
    bundle.stats = build_path_stats(bundle.records);
    bundle.component_stats = build_component_stats(bundle.records, bundle.paths_by_id);

    std::vector<TrainingQuery> train;
    for (const auto& q : bundle.queries)
        if (q.split == "train") train.push_back(q);
    bundle.index = TrainingIndex::build(train, bundle.records, bundle.cca, bundle.encoder,
                                        *bundle.embedder, bundle.cca.lambda);

    if (fs::exists(dir / "world.json")) {
        auto world = std::make_shared<World>(World::from_json(read_json(dir / "world.json")));
        if (world->registry.build_id() != bundle.build_id)
            throw Error("world.json registry does not match build '" + bundle.build_id + "'");
        bundle.world = world;
        bundle.executor = std::make_shared<WorldExecutor>(world);
    } else {
        std::vector<DocumentChunk> chunks;
        for_each_jsonl(dir / "chunks.jsonl", [&](const json& j) {
            chunks.push_back(DocumentChunk::from_json(j));
        });
        std::map<std::string, ModelEndpoint> endpoints;
        std::map<std::string, std::shared_ptr<TextGenerationClient>> clients;
        for (const auto& ej : bundle.registry.global.value("endpoints", json::array())) {
            ModelEndpoint ep = ModelEndpoint::from_json(ej);
            std::shared_ptr<TextGenerationClient> client;
            if (ep.base_url.empty())
                client = std::make_shared<MockTextClient>();
            else
                client = std::make_shared<OpenAiClient>(ep);
            clients[ep.id] = std::move(client);
            endpoints[ep.id] = std::move(ep);
        }
        bundle.executor = std::make_shared<BasicStageExecutor>(
            std::make_shared<MockTextClient>(), std::move(clients), std::move(endpoints),
            std::move(chunks), bundle.embedder);
    }
    return bundle;
}

}  // namespace eco
