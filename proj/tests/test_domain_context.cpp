#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "eco/domain_context.hpp"
#include "eco/tokenize.hpp"

using namespace eco;

namespace {

// Test generator capturing every prompt it receives.
class RecordingClient : public TextGenerationClient {
public:
    explicit RecordingClient(std::function<std::string(const std::string&)> fn)
        : fn_(std::move(fn)) {}
    GenerationResult complete(const std::string& prompt, const json&) override {
        prompts.push_back(prompt);
        GenerationResult r;
        r.text = fn_(prompt);
        r.ttft_ms = 1.0;
        r.total_ms = 1.0;
        return r;
    }
    std::vector<std::string> prompts;

private:
    std::function<std::string(const std::string&)> fn_;
};

std::string words(std::size_t n, const std::string& stem = "tok") {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.empty()) out += ' ';
        out += stem + std::to_string(i);
    }
    return out;
}

std::string strip_nonalnum(const std::string& s) {
    std::string out;
    for (char c : s)
        if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(c));
    return out;
}

}  // namespace

TEST_CASE("clean_content substitutes the content and trims the reply") {
    RecordingClient echo([](const std::string& prompt) {
        // Echo back the payload between the prompt's fixed markers.
        auto b = prompt.find("Text to clean: ") + 15;
        auto e = prompt.rfind("\n\nCleaned text:");
        return "  " + prompt.substr(b, e - b) + "\n";
    });
    CHECK(clean_content("some raw content", echo) == "some raw content");
    REQUIRE(echo.prompts.size() == 1);
    CHECK(echo.prompts[0].find("Cleaned text:") != std::string::npos);
    CHECK(echo.prompts[0].find("Clean and format the following text") != std::string::npos);

    SUBCASE("empty content is skipped without a generator call") {
        echo.prompts.clear();
        CHECK(clean_content("   ", echo) == "   ");
        CHECK(echo.prompts.empty());
    }
}

TEST_CASE("chunking merges small sections forward") {
    // Three consecutive 80-token sections merge to one 240-token chunk.
    std::string text = "# A\n" + words(80, "a") + "\n# B\n" + words(80, "b") + "\n# C\n" +
                       words(80, "c") + "\n";
    auto doc = SourceDocument::from_markdown("doc", text);
    REQUIRE(doc.sections.size() == 3);
    auto chunks = chunk_documents({doc});
    REQUIRE(chunks.size() == 1);
    // Heading lines contribute one token each ("a", "b", "c" are part of the text).
    CHECK(chunks[0].token_count >= 240);
    CHECK(chunks[0].token_count <= 250);
    CHECK(chunks[0].section_title == "A + B + C");
}

TEST_CASE("mid-band sections pass through unchanged") {
    std::string body = words(500);
    auto doc = SourceDocument::from_markdown("doc", "# Top\n" + body + "\n");
    auto chunks = chunk_documents({doc});
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text.find(body) != std::string::npos);
    CHECK(chunks[0].token_count <= 2000);
}

TEST_CASE("oversized sections split at paragraph boundaries") {
    // 4500 tokens across three 1500-token paragraphs -> 3 chunks.
    std::string text = "# Big\n" + words(1500, "p1x") + "\n\n" + words(1500, "p2x") + "\n\n" +
                       words(1500, "p3x") + "\n";
    auto chunks = chunk_documents({SourceDocument::from_markdown("doc", text)});
    REQUIRE(chunks.size() == 3);
    for (const auto& c : chunks) CHECK(c.token_count <= 2000);
}

TEST_CASE("a single paragraph beyond the band is hard-split at token boundaries") {
    std::string text = "# Wall\n" + words(4100, "w") + "\n";
    auto chunks = chunk_documents({SourceDocument::from_markdown("doc", text)});
    REQUIRE(chunks.size() == 3);
    for (const auto& c : chunks) CHECK(c.token_count <= 2000);
}

TEST_CASE("chunk texts conserve the source characters") {
    std::string text = "# One\n" + words(250, "one") + "\n# Two\n" + words(80, "two") + "\n# Three\n" +
                       words(300, "three") + "\n\n" + words(120, "tail") + "\n";
    auto doc = SourceDocument::from_markdown("doc", text);
    auto chunks = chunk_documents({doc});
    std::string combined;
    for (const auto& c : chunks) combined += c.text;
    CHECK(strip_nonalnum(combined) == strip_nonalnum(text));

    // Band correctness: every chunk within the cap, no adjacent pair of
    // chunks that both came from sub-200-token originals.
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(chunks[i].token_count <= 2000);
        if (i + 1 < chunks.size())
            CHECK((chunks[i].token_count >= 200 || chunks[i + 1].token_count >= 200));
    }
}

TEST_CASE("generate_queries emits one query per suitable (chunk, type)") {
    std::string fixed =
        R"({"question": "What is the torque spec?", "answer": "Exactly 42 Nm.",)"
        R"( "evaluation_guideline": "Mentions 42 Nm."})";
    RecordingClient client([&](const std::string&) { return fixed; });

    std::vector<DocumentChunk> chunks;
    for (int i = 0; i < 2; ++i) {
        DocumentChunk c;
        c.id = "c" + std::to_string(i);
        c.text = words(150, "body");
        c.token_count = count_tokens(c.text);
        chunks.push_back(c);
    }

    auto queries = generate_queries(chunks, "appliance domain", client);
    CHECK(queries.size() == 12);  // 2 chunks x 6 types

    std::set<std::string> ids;
    for (const auto& q : queries) {
        ids.insert(q.id);
        CHECK(!q.text.empty());
        CHECK(!q.reference_answer.empty());
        CHECK(!q.evaluation_guideline.empty());
    }
    CHECK(ids.size() == 12);

    // The prompt must carry the verbatim question-prompt fragments.
    REQUIRE(!client.prompts.empty());
    CHECK(client.prompts[0].find("Return complex JSON") != std::string::npos);
    CHECK(client.prompts[0].find("Generate a challenging ") != std::string::npos);
}

TEST_CASE("malformed generator JSON is retried once then skipped") {
    int calls = 0;
    RecordingClient client([&](const std::string&) {
        ++calls;
        return "not json at all";
    });
    std::vector<DocumentChunk> chunks(1);
    chunks[0].id = "c0";
    chunks[0].text = words(150);
    chunks[0].token_count = count_tokens(chunks[0].text);

    std::vector<std::string> warnings;
    auto queries = generate_queries(chunks, "domain", client, {},
                                    [&](const std::string& w) { warnings.push_back(w); });
    CHECK(queries.empty());
    CHECK(calls == 12);  // 6 types x 2 attempts
    CHECK(warnings.size() == 6);
}

TEST_CASE("chunks below the suitability floor are skipped without calls") {
    RecordingClient client([](const std::string&) { return ""; });
    std::vector<DocumentChunk> chunks(1);
    chunks[0].id = "tiny";
    chunks[0].text = words(20);
    chunks[0].token_count = count_tokens(chunks[0].text);
    auto queries = generate_queries(chunks, "domain", client);
    CHECK(queries.empty());
    CHECK(client.prompts.empty());
}

namespace {

std::vector<TrainingQuery> synthetic_queries(std::size_t per_type) {
    std::vector<TrainingQuery> queries;
    int n = 0;
    for (QueryType t : all_query_types()) {
        for (std::size_t i = 0; i < per_type; ++i) {
            TrainingQuery q;
            q.id = "q" + std::to_string(n++);
            q.text = "question " + q.id;
            q.type = t;
            q.reference_answer = "ref";
            q.evaluation_guideline = "guide";
            queries.push_back(q);
        }
    }
    return queries;
}

}  // namespace

TEST_CASE("train/test split is stratified and deterministic") {
    SUBCASE("75/25 on a balanced set") {
        auto queries = synthetic_queries(4);  // 24 queries, 4 per type
        split_train_test(queries, 0.75, 7);
        std::map<std::string, std::pair<int, int>> per_type;
        int train = 0;
        for (const auto& q : queries) {
            auto& [tr, te] = per_type[std::string(query_type_name(q.type))];
            (q.split == "train" ? tr : te)++;
            if (q.split == "train") ++train;
        }
        CHECK(train == 18);
        for (const auto& [t, counts] : per_type) {
            CHECK(counts.first == 3);
            CHECK(counts.second == 1);
        }
    }

    SUBCASE("100 queries split 75/25") {
        std::vector<TrainingQuery> queries;
        for (int i = 0; i < 100; ++i) {
            TrainingQuery q;
            q.id = "q" + std::to_string(i);
            q.text = "t";
            q.type = QueryType::Retrieval;
            q.reference_answer = "r";
            q.evaluation_guideline = "g";
            queries.push_back(q);
        }
        split_train_test(queries, 0.75, 3);
        int train = 0;
        for (const auto& q : queries) train += q.split == "train";
        CHECK(train == 75);
    }

    SUBCASE("same seed twice gives identical splits") {
        auto a = synthetic_queries(5);
        auto b = synthetic_queries(5);
        split_train_test(a, 0.75, 42);
        split_train_test(b, 0.75, 42);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].split == b[i].split);

        auto c = synthetic_queries(5);
        split_train_test(c, 0.75, 43);
        bool any_diff = false;
        for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a[i].split != c[i].split;
        CHECK(any_diff);
    }

    SUBCASE("an undersized type goes wholly to train with a warning") {
        auto queries = synthetic_queries(3);
        TrainingQuery lone;
        lone.id = "lone";
        lone.text = "t";
        lone.type = QueryType::Retrieval;
        lone.reference_answer = "r";
        lone.evaluation_guideline = "g";
        std::vector<TrainingQuery> small{lone};
        std::vector<std::string> warnings;
        split_train_test(small, 0.75, 1, [&](const std::string& w) { warnings.push_back(w); });
        CHECK(small[0].split == "train");
        CHECK(warnings.size() == 1);
    }

    SUBCASE("invalid ratio is rejected") {
        auto queries = synthetic_queries(2);
        CHECK_THROWS_AS(split_train_test(queries, 0.0, 1), Error);
        CHECK_THROWS_AS(split_train_test(queries, 1.0, 1), Error);
    }
}

TEST_CASE("query metadata round-trips through JSON") {
    auto queries = synthetic_queries(1);
    split_train_test(queries, 0.75, 1, nullptr);
    for (const auto& q : queries) {
        TrainingQuery back = TrainingQuery::from_json(q.to_json());
        CHECK(back.id == q.id);
        CHECK(back.type == q.type);
        CHECK(back.split == q.split);
        CHECK(back.reference_answer == q.reference_answer);
        CHECK(back.evaluation_guideline == q.evaluation_guideline);
    }
}
