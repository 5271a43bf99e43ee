#pragma once

#include <filesystem>
#include <memory>

#include "eco/cca.hpp"
#include "eco/domain_context.hpp"
#include "eco/dsqe.hpp"
#include "eco/emulator.hpp"
#include "eco/rps.hpp"
#include "eco/synthetic.hpp"

namespace eco {

// Model-stage endpoint id: the implementation id, unless a (possibly
// dynamically resolved) model-name parameter overrides it.
std::string resolved_model_id(const StageChoice& choice);

// Stage executor backed by text-generation clients and a chunk index. The
// registered techniques are registry entries dispatched to backends; the
// final stage cost is the §3.3.1 cost model over the full prompt.
class BasicStageExecutor : public StageExecutor {
public:
    BasicStageExecutor(std::shared_ptr<TextGenerationClient> default_client,
                       std::map<std::string, std::shared_ptr<TextGenerationClient>> model_clients,
                       std::map<std::string, ModelEndpoint> endpoints,
                       std::vector<DocumentChunk> chunks, std::shared_ptr<Embedder> embedder);

    StageOutput run(StageKind stage, const StageChoice& choice, const std::string& query_text,
                    const std::string& upstream) override;

private:
    StageOutput run_query_processing(const StageChoice& choice, const std::string& query);
    StageOutput run_retrieval(const StageChoice& choice, const std::string& query);
    StageOutput run_context_processing(const StageChoice& choice, const std::string& upstream);
    StageOutput run_model(const StageChoice& choice, const std::string& query,
                          const std::string& context);

    std::vector<std::string> top_chunks(const std::string& text, std::size_t k) const;

    std::shared_ptr<TextGenerationClient> default_client_;
    std::map<std::string, std::shared_ptr<TextGenerationClient>> model_clients_;
    std::map<std::string, ModelEndpoint> endpoints_;
    std::vector<DocumentChunk> chunks_;
    std::vector<std::vector<double>> chunk_embeddings_;
    std::shared_ptr<Embedder> embedder_;
};

// Immutable, content-addressed bundle of a build's artifacts, ready to serve.
struct BuildBundle {
    std::string build_id;
    Registry registry;
    std::vector<PathSpec> paths;
    std::map<std::string, PathSpec> paths_by_id;
    std::vector<TrainingQuery> queries;
    std::vector<EvalRecord> records;
    CriticalComponentMap cca;
    EncoderModel encoder;
    PathStats stats;
    ComponentStats component_stats;
    TrainingIndex index;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<StageExecutor> executor;
    std::shared_ptr<const World> world;  // present for synthetic builds

    // Loads every artifact from `dir` and refuses id-inconsistent bundles.
    static BuildBundle load(const std::filesystem::path& dir, const std::string& expected_id);
};

}  // namespace eco
