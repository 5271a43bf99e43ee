#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eco/backends.hpp"
#include "eco/domain_context.hpp"
#include "eco/path_space.hpp"

namespace eco {

struct StageOutput {
    std::string text;
    double latency_ms = 0.0;
    double cost = 0.0;
};

// One of the module managers: runs a single stage of a path.
class StageExecutor {
public:
    virtual ~StageExecutor() = default;
    virtual StageOutput run(StageKind stage, const StageChoice& choice,
                            const std::string& query_text, const std::string& upstream) = 0;
};

struct EvalRecord {
    std::string build_id;
    std::string query_id;
    std::string path_id;
    double accuracy = 0.0;
    double ttft_ms = 0.0;
    double cost = 0.0;
    std::vector<std::string> cache_hit_stages;  // stage keys "q","r","c"
    std::string created_at;
    std::string error;  // annotation for failed executions

    json to_json() const;
    static EvalRecord from_json(const json& j);
};

struct BudgetPlan {
    std::vector<std::string> representatives;
    std::map<std::string, std::vector<std::string>> planned;  // remaining query -> path ids
    double budget_factor = 0.0;
    std::size_t path_count = 0;

    std::size_t total() const;
    json to_json() const;
    static BudgetPlan from_json(const json& j);
};

// Intermediate pipeline context keyed by (query, path prefix). Entries are
// immutable once written; first writer wins.
class PrefixCache {
public:
    struct Entry {
        std::string context;
        double latency_ms = 0.0;  // accumulated through the cached prefix
        double cost = 0.0;        // accumulated through the cached prefix
    };

    std::optional<Entry> get(const std::string& key) const;
    void put(const std::string& key, Entry entry);
    std::uint64_t hits() const { return hits_; }
    std::uint64_t misses() const { return misses_; }

private:
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
    mutable std::atomic<std::uint64_t> hits_{0};
    mutable std::atomic<std::uint64_t> misses_{0};
};

class Judge {
public:
    virtual ~Judge() = default;
    virtual double score(const std::string& response, const std::string& reference_answer,
                         const std::string& guideline) = 0;
};

// Mock judge: F1 over distinct normalized tokens of response vs reference.
class TokenF1Judge : public Judge {
public:
    double score(const std::string& response, const std::string& reference_answer,
                 const std::string& guideline) override;
};

// LLM judge: rubric prompt, parses a 0-1 score; one retry, then 0.
class LlmJudge : public Judge {
public:
    explicit LlmJudge(std::shared_ptr<TextGenerationClient> client)
        : client_(std::move(client)) {}
    double score(const std::string& response, const std::string& reference_answer,
                 const std::string& guideline) override;

private:
    std::shared_ptr<TextGenerationClient> client_;
};

// Alg. 1 line 1: representative selection. Target size min(|Q|,
// round(B*sqrt(|Q|))), allocated per type by largest remainder, then k-means
// over query embeddings within each type (25 iterations, seeded init) picking
// the query nearest each centroid.
std::vector<std::string> stratified_sample(const std::vector<TrainingQuery>& queries,
                                           double budget_factor, std::uint64_t seed,
                                           Embedder& embedder);

// Within each type: mean accuracy desc, mean ttft asc, canonical id.
std::map<QueryType, std::vector<std::string>> rank_paths_by_type(
    const std::vector<EvalRecord>& records,
    const std::map<std::string, QueryType>& query_types);

// Global ranking over all records, same ordering rule.
std::vector<std::string> rank_paths_global(const std::vector<EvalRecord>& records);

// Alg. 1 lines 4-7: k = max(1, floor(B*sqrt(|P|))); each remaining query gets
// ceil(0.8k) top-ranked paths for its type plus floor(0.2k) random
// non-duplicates.
BudgetPlan plan_evaluations(const std::vector<TrainingQuery>& queries,
                            const std::vector<std::string>& representatives,
                            const std::vector<PathSpec>& paths, double budget_factor,
                            const std::map<QueryType, std::vector<std::string>>& rankings,
                            const std::vector<std::string>& global_ranking,
                            std::uint64_t seed, const WarnSink& warn = nullptr);

struct ExecuteOptions {
    bool cold_latency = false;  // re-add cached stage latency into ttft
    std::string build_id;
};

EvalRecord execute_path(const TrainingQuery& query, const PathSpec& path,
                        StageExecutor& executor, PrefixCache* cache, Judge* judge,
                        const ExecuteOptions& options = {},
                        std::string* response_out = nullptr);

struct ExplorationOptions {
    double budget_factor = 1.0;
    bool exhaustive = false;
    std::uint64_t seed = 0;
    int workers = 0;  // 0 -> hardware concurrency
    bool cold_latency = false;
    bool use_cache = true;
};

struct ExplorationSummary {
    std::size_t executed = 0;
    std::size_t skipped = 0;   // already present in the store
    std::size_t planned_total = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
};

// Runs the representative phase then the planned phase, appending EvalRecords
// to records.jsonl under `out_dir`. Already-present (query, path) pairs are
// skipped, making reruns resumable and idempotent.
ExplorationSummary run_exploration(const std::string& build_id,
                                   const std::vector<TrainingQuery>& queries,
                                   const Registry& registry, StageExecutor& executor,
                                   Judge& judge, Embedder& embedder,
                                   const std::filesystem::path& out_dir,
                                   const ExplorationOptions& options,
                                   const WarnSink& warn = nullptr);

std::vector<EvalRecord> load_records(const std::filesystem::path& records_file);

}  // namespace eco
