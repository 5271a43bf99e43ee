#include "eco/domain_context.hpp"

#include <algorithm>
#include <cstring>
#include <future>
#include <sstream>

#include "eco/tokenize.hpp"

namespace eco {

namespace {

const char* kCleaningPrompt =
    "Clean and format the following text to make it grammatically correct and properly "
    "formatted. Remove unnecessary characters and fix indentation while preserving all "
    "important information. Do not summarize or explain the content. Only return the "
    "cleaned text.\n\nText to clean: {CONTENT}\n\nCleaned text:";

const char* kQuestionPrompt =
    "Generate a challenging {query_type} question from this content: {content}\n\n"
    "Requirements:\n"
    "- Make question highly specific and contextual\n"
    "- Combine multiple aspects or features\n"
    "- Include edge cases or conditional scenarios\n"
    "- Require deep system understanding\n"
    "- Answer should be comprehensive with technical details\n"
    "- Evaluation must check for nuanced understanding\n\n"
    "Return complex JSON:\n"
    "{ \"question\": \"sophisticated question requiring deep analysis\",\n"
    "  \"answer\": \"detailed technical answer with reasoning and edge cases\",\n"
    "  \"evaluation_guideline\": \"specific technical points and reasoning to verify\"}";

std::string substitute(std::string templ, std::string_view key, const std::string& value) {
    auto pos = templ.find(key);
    while (pos != std::string::npos) {
        templ.replace(pos, key.size(), value);
        pos = templ.find(key, pos + value.size());
    }
    return templ;
}

void emit_warning(const WarnSink& warn, const std::string& msg) {
    if (warn) warn(msg);
}

}  // namespace

SourceDocument SourceDocument::from_markdown(const std::string& id, const std::string& text) {
    SourceDocument doc;
    doc.id = id;
    doc.body = text;
    if (text.empty()) throw Error("document '" + id + "' has an empty body");

    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        if (!line.empty() && line[0] == '#') {
            int level = 0;
            while (static_cast<std::size_t>(level) < line.size() && line[level] == '#') ++level;
            SectionMarker marker;
            marker.level = level;
            marker.heading = trim(line.substr(level));
            marker.begin = pos;
            if (!doc.sections.empty()) doc.sections.back().end = pos;
            doc.sections.push_back(std::move(marker));
            if (doc.title.empty() && level == 1) doc.title = doc.sections.back().heading;
        }
        pos = eol + 1;
    }
    if (doc.sections.empty()) {
        doc.sections.push_back(SectionMarker{id, 1, 0, text.size()});
    } else {
        doc.sections.back().end = text.size();
        if (doc.sections.front().begin > 0) {
            // Preamble before the first heading counts as its own section.
            SectionMarker pre{id, 1, 0, doc.sections.front().begin};
            doc.sections.insert(doc.sections.begin(), pre);
        }
    }
    if (doc.title.empty()) doc.title = id;
    return doc;
}

json DocumentChunk::to_json() const {
    return json{{"id", id},
                {"text", text},
                {"token_count", token_count},
                {"section_title", section_title},
                {"doc_id", doc_id}};
}

DocumentChunk DocumentChunk::from_json(const json& j) {
    DocumentChunk c;
    c.id = j.at("id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.token_count = j.value("token_count", count_tokens(c.text));
    c.section_title = j.value("section_title", "");
    c.doc_id = j.value("doc_id", "");
    return c;
}

const std::vector<QueryType>& all_query_types() {
    static const std::vector<QueryType> types = {
        QueryType::Retrieval,  QueryType::Explanation, QueryType::Analysis,
        QueryType::Solving,    QueryType::Comparison,  QueryType::Recommendation};
    return types;
}

std::string_view query_type_name(QueryType t) {
    switch (t) {
        case QueryType::Retrieval: return "retrieval";
        case QueryType::Explanation: return "explanation";
        case QueryType::Analysis: return "analysis";
        case QueryType::Solving: return "solving";
        case QueryType::Comparison: return "comparison";
        case QueryType::Recommendation: return "recommendation";
    }
    throw Error("invalid query type");
}

QueryType query_type_from(std::string_view name) {
    for (QueryType t : all_query_types())
        if (query_type_name(t) == name) return t;
    throw Error("unknown query type '" + std::string(name) + "'");
}

json TrainingQuery::to_json() const {
    return json{{"id", id},
                {"text", text},
                {"type", std::string(query_type_name(type))},
                {"reference_answer", reference_answer},
                {"evaluation_guideline", evaluation_guideline},
                {"split", split},
                {"chunk_id", chunk_id}};
}

TrainingQuery TrainingQuery::from_json(const json& j) {
    TrainingQuery q;
    q.id = j.at("id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.type = query_type_from(j.at("type").get<std::string>());
    q.reference_answer = j.at("reference_answer").get<std::string>();
    q.evaluation_guideline = j.at("evaluation_guideline").get<std::string>();
    q.split = j.value("split", "train");
    q.chunk_id = j.value("chunk_id", "");
    return q;
}

std::string clean_content(const std::string& raw, TextGenerationClient& generator) {
    if (trim(raw).empty()) return raw;
    std::string prompt = substitute(kCleaningPrompt, "{CONTENT}", raw);
    return trim(generator.complete(prompt, json::object()).text);
}

GenerationResult MockQueryGenerator::complete(const std::string& prompt, const json& params) {
    (void)params;
    GenerationResult result;
    result.ttft_ms = 1.0;
    result.total_ms = 2.0;
    result.input_tokens = count_tokens(prompt);

    auto content_pos = prompt.find("from this content: ");
    if (content_pos != std::string::npos) {
        std::size_t begin = content_pos + std::strlen("from this content: ");
        std::size_t end = prompt.find("\n\nRequirements:", begin);
        std::string content =
            prompt.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
        std::string qtype = "retrieval";
        auto type_pos = prompt.find("Generate a challenging ");
        if (type_pos != std::string::npos) {
            std::size_t tb = type_pos + std::strlen("Generate a challenging ");
            std::size_t te = prompt.find(' ', tb);
            if (te != std::string::npos) qtype = prompt.substr(tb, te - tb);
        }
        auto tokens = tokenize(content);
        auto join = [&](std::size_t from, std::size_t count) {
            std::string s;
            for (std::size_t i = from; i < std::min(tokens.size(), from + count); ++i) {
                if (!s.empty()) s += ' ';
                s += tokens[i];
            }
            return s;
        };
        json out{{"question", "For " + qtype + ": what does the documentation state about " +
                                  join(0, 8) + "?"},
                 {"answer", join(0, 40)},
                 {"evaluation_guideline", "response should mention: " + join(2, 6)}};
        result.text = out.dump();
    } else if (prompt.rfind("Cleaned text:") != std::string::npos &&
               prompt.find("Text to clean: ") != std::string::npos) {
        std::size_t begin = prompt.find("Text to clean: ") + std::strlen("Text to clean: ");
        std::size_t end = prompt.rfind("\n\nCleaned text:");
        result.text = prompt.substr(begin, end - begin);
    } else {
        result.text = "yes";
    }
    result.output_tokens = count_tokens(result.text);
    return result;
}

// ---------------------------------------------------------------------------
// Chunking

namespace {

constexpr std::size_t kSmallBand = 200;
constexpr std::size_t kLargeBand = 2000;

struct RawSection {
    std::string title;
    std::string text;
    std::string doc_id;
};

std::vector<std::string> split_paragraphs(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find("\n\n", pos);
        if (next == std::string::npos) next = text.size();
        std::string para = text.substr(pos, next - pos);
        if (!trim(para).empty()) out.push_back(std::move(para));
        pos = next + 2;
    }
    return out;
}

// Hard split at token boundaries, keeping original characters.
std::vector<std::string> split_by_tokens(const std::string& text, std::size_t limit) {
    std::vector<std::string> pieces;
    std::size_t start = 0, tokens = 0;
    bool in_tok = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        bool alnum = std::isalnum(static_cast<unsigned char>(text[i])) != 0;
        if (alnum && !in_tok) {
            if (tokens == limit) {
                pieces.push_back(text.substr(start, i - start));
                start = i;
                tokens = 0;
            }
            ++tokens;
        }
        in_tok = alnum;
    }
    if (start < text.size()) pieces.push_back(text.substr(start));
    return pieces;
}

}  // namespace

std::vector<DocumentChunk> chunk_documents(const std::vector<SourceDocument>& docs) {
    std::vector<DocumentChunk> chunks;
    int counter = 0;
    auto emit = [&](const std::string& doc_id, const std::string& title, std::string text) {
        DocumentChunk chunk;
        chunk.doc_id = doc_id;
        chunk.section_title = title;
        chunk.text = std::move(text);
        chunk.token_count = count_tokens(chunk.text);
        chunk.id = doc_id + "-c" + std::to_string(counter++);
        chunks.push_back(std::move(chunk));
    };

    for (const auto& doc : docs) {
        // Pass 1: forward-merge small sections until they reach the band floor.
        std::vector<RawSection> merged;
        RawSection pending;
        bool has_pending = false;
        for (const auto& marker : doc.sections) {
            std::string text = doc.body.substr(marker.begin, marker.end - marker.begin);
            if (trim(text).empty()) continue;
            if (!has_pending) {
                pending = RawSection{marker.heading, std::move(text), doc.id};
                has_pending = true;
            } else {
                pending.title += " + " + marker.heading;
                pending.text += "\n\n" + text;
            }
            if (count_tokens(pending.text) >= kSmallBand) {
                merged.push_back(std::move(pending));
                has_pending = false;
            }
        }
        if (has_pending) merged.push_back(std::move(pending));

        // Pass 2: band handling.
        for (auto& section : merged) {
            std::size_t tokens = count_tokens(section.text);
            if (tokens <= kLargeBand) {
                emit(section.doc_id, section.title, std::move(section.text));
                continue;
            }
            // Greedy paragraph packing into <=2000-token pieces.
            std::string current;
            for (const auto& para : split_paragraphs(section.text)) {
                std::size_t para_tokens = count_tokens(para);
                if (para_tokens > kLargeBand) {
                    if (!current.empty()) {
                        emit(section.doc_id, section.title, std::move(current));
                        current.clear();
                    }
                    for (auto& piece : split_by_tokens(para, kLargeBand))
                        emit(section.doc_id, section.title, std::move(piece));
                    continue;
                }
                std::size_t current_tokens = count_tokens(current);
                if (!current.empty() && current_tokens + para_tokens > kLargeBand) {
                    emit(section.doc_id, section.title, std::move(current));
                    current.clear();
                }
                if (current.empty())
                    current = para;
                else
                    current += "\n\n" + para;
            }
            if (!current.empty()) emit(section.doc_id, section.title, std::move(current));
        }
    }
    return chunks;
}

// ---------------------------------------------------------------------------
// Query generation

namespace {

std::optional<json> parse_generator_json(const std::string& text) {
    std::string body = trim(text);
    json parsed = json::parse(body, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    // Tolerate prose around the object.
    auto open = body.find('{');
    auto close = body.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close <= open)
        return std::nullopt;
    parsed = json::parse(body.substr(open, close - open + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    return std::nullopt;
}

std::optional<TrainingQuery> make_query(const DocumentChunk& chunk, QueryType type,
                                        int ordinal, const json& fields) {
    if (!fields.contains("question") || !fields.contains("answer") ||
        !fields.contains("evaluation_guideline"))
        return std::nullopt;
    TrainingQuery q;
    q.text = trim(fields["question"].is_string() ? fields["question"].get<std::string>()
                                                 : fields["question"].dump());
    q.reference_answer =
        trim(fields["answer"].is_string() ? fields["answer"].get<std::string>()
                                          : fields["answer"].dump());
    q.evaluation_guideline = trim(fields["evaluation_guideline"].is_string()
                                      ? fields["evaluation_guideline"].get<std::string>()
                                      : fields["evaluation_guideline"].dump());
    if (q.text.empty() || q.reference_answer.empty() || q.evaluation_guideline.empty())
        return std::nullopt;
    q.type = type;
    q.chunk_id = chunk.id;
    q.id = chunk.id + "-" + std::string(query_type_name(type)) + "-" + std::to_string(ordinal);
    return q;
}

}  // namespace

std::vector<TrainingQuery> generate_queries(const std::vector<DocumentChunk>& chunks,
                                            const std::string& domain_description,
                                            TextGenerationClient& generator,
                                            const GenerateOptions& options,
                                            const WarnSink& warn) {
    struct Task {
        const DocumentChunk* chunk;
        QueryType type;
        int ordinal;
    };
    std::vector<Task> tasks;
    for (const auto& chunk : chunks) {
        if (chunk.token_count < options.min_chunk_tokens) continue;
        if (options.probe_suitability) {
            std::string probe = "Domain: " + domain_description +
                                "\n\nIs the following content suitable for generating "
                                "domain questions? Answer yes or no.\n\n" +
                                chunk.text;
            std::string verdict = trim(generator.complete(probe, json::object()).text);
            std::transform(verdict.begin(), verdict.end(), verdict.begin(), ::tolower);
            if (verdict.rfind("no", 0) == 0) continue;
        }
        for (QueryType type : all_query_types())
            for (int n = 0; n < options.per_type_count; ++n)
                tasks.push_back(Task{&chunk, type, n});
    }

    auto run_task = [&](const Task& task) -> std::optional<TrainingQuery> {
        std::string prompt = kQuestionPrompt;
        prompt = substitute(prompt, "{query_type}",
                            std::string(query_type_name(task.type)));
        prompt = substitute(prompt, "{content}", task.chunk->text);
        for (int attempt = 0; attempt < 2; ++attempt) {
            std::string out = generator.complete(prompt, json::object()).text;
            if (auto fields = parse_generator_json(out))
                if (auto q = make_query(*task.chunk, task.type, task.ordinal, *fields))
                    return q;
        }
        emit_warning(warn, "skipping (" + task.chunk->id + ", " +
                               std::string(query_type_name(task.type)) +
                               "): generator returned malformed JSON twice");
        return std::nullopt;
    };

    // Bounded in-flight batches; results collected in (chunk, type) order.
    std::vector<std::optional<TrainingQuery>> results(tasks.size());
    std::size_t batch = std::max(1, options.max_in_flight);
    for (std::size_t base = 0; base < tasks.size(); base += batch) {
        std::size_t end = std::min(tasks.size(), base + batch);
        std::vector<std::future<std::optional<TrainingQuery>>> futs;
        for (std::size_t i = base; i < end; ++i)
            futs.push_back(std::async(std::launch::async, run_task, std::cref(tasks[i])));
        for (std::size_t i = base; i < end; ++i) results[i] = futs[i - base].get();
    }

    std::vector<TrainingQuery> queries;
    for (auto& r : results)
        if (r) queries.push_back(std::move(*r));
    return queries;
}

void split_train_test(std::vector<TrainingQuery>& queries, double ratio, std::uint64_t seed,
                      const WarnSink& warn) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error("split ratio must be in (0, 1)");

    std::map<std::string, std::vector<std::size_t>> by_type;
    for (std::size_t i = 0; i < queries.size(); ++i)
        by_type[std::string(query_type_name(queries[i].type))].push_back(i);

    for (auto& [type_name, idxs] : by_type) {
        if (idxs.size() < 2) {
            for (std::size_t i : idxs) queries[i].split = "train";
            emit_warning(warn, "type '" + type_name +
                                   "' has fewer than 2 queries; assigning all to train");
            continue;
        }
        auto rng = seeded_rng(seed, type_name);
        std::shuffle(idxs.begin(), idxs.end(), rng);
        std::size_t n_train = static_cast<std::size_t>(
            round_half_up(ratio * static_cast<double>(idxs.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, idxs.size() - 1);
        for (std::size_t k = 0; k < idxs.size(); ++k)
            queries[idxs[k]].split = k < n_train ? "train" : "test";
    }
}

}  // namespace eco
