#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eco/backends.hpp"

namespace eco {

struct SectionMarker {
    std::string heading;
    int level = 1;
    std::size_t begin = 0;  // char offsets into the document body
    std::size_t end = 0;
};

struct SourceDocument {
    std::string id;
    std::string title;
    std::string body;
    std::vector<SectionMarker> sections;

    // Plain text / markdown ingestion with '#'-style headings as section
    // markers. A document without headings becomes a single section.
    static SourceDocument from_markdown(const std::string& id, const std::string& text);
};

struct DocumentChunk {
    std::string id;
    std::string text;
    std::size_t token_count = 0;
    std::string section_title;
    std::string doc_id;

    json to_json() const;
    static DocumentChunk from_json(const json& j);
};

enum class QueryType {
    Retrieval = 0,
    Explanation,
    Analysis,
    Solving,
    Comparison,
    Recommendation
};

constexpr std::size_t kQueryTypeCount = 6;
const std::vector<QueryType>& all_query_types();
std::string_view query_type_name(QueryType t);
QueryType query_type_from(std::string_view name);

struct TrainingQuery {
    std::string id;
    std::string text;
    QueryType type = QueryType::Retrieval;
    std::string reference_answer;
    std::string evaluation_guideline;
    std::string split = "train";  // "train" | "test"
    std::string chunk_id;

    json to_json() const;
    static TrainingQuery from_json(const json& j);
};

using WarnSink = std::function<void(const std::string&)>;

// Deterministic stand-in for an LLM generator: answers the question prompt
// with JSON derived from the chunk content, echoes cleaning requests, and
// approves suitability probes. Lets the full pipeline run without a model.
class MockQueryGenerator : public TextGenerationClient {
public:
    GenerationResult complete(const std::string& prompt, const json& params) override;
};

// Sends the cleaning prompt with {CONTENT} substituted and returns the
// trimmed output. Empty input is returned as-is without a generator call.
std::string clean_content(const std::string& raw, TextGenerationClient& generator);

// Sections <200 tokens are merged forward until >=200 (titles concatenated);
// 200-2000 pass through; >2000 split at paragraph boundaries, oversized
// single paragraphs hard-split at token boundaries.
std::vector<DocumentChunk> chunk_documents(const std::vector<SourceDocument>& docs);

struct GenerateOptions {
    int per_type_count = 1;
    int max_in_flight = 4;
    std::size_t min_chunk_tokens = 100;
    bool probe_suitability = false;  // extra generator yes/no probe per chunk
};

std::vector<TrainingQuery> generate_queries(const std::vector<DocumentChunk>& chunks,
                                            const std::string& domain_description,
                                            TextGenerationClient& generator,
                                            const GenerateOptions& options = {},
                                            const WarnSink& warn = nullptr);

// Stratified by query type, deterministic per seed; per-type half-up
// rounding. Types with fewer than 2 queries go wholly to train.
void split_train_test(std::vector<TrainingQuery>& queries, double ratio, std::uint64_t seed,
                      const WarnSink& warn = nullptr);

}  // namespace eco
