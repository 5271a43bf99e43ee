#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "eco/path_space.hpp"

using namespace eco;

namespace {

json impl(const std::string& id, const json& params = json::array(), bool null = false) {
    json j{{"id", id}};
    if (null) j["null"] = true;
    if (!params.empty()) j["params"] = params;
    return j;
}

json sweep(const std::string& name, const json& values) {
    return json{{"name", name}, {"kind", "sweep"}, {"values", values}};
}

// The registry from the counting example: (1+2)*3*1*2 = 18 paths.
Registry example_registry() {
    json doc{{"stages",
              json{{"q", json::array({impl("none", {}, true),
                                      impl("stepback",
                                           json::array({sweep("depth", {1, 2})}))})},
                   {"r", json::array({impl("rag", json::array({sweep("top_k", {2, 4, 8})}))})},
                   {"c", json::array({impl("none", {}, true)})},
                   {"m", json::array({impl("model-a"), impl("model-b")})}}}};
    return Registry::from_json(doc);
}

// Random registry generator for the count/enumerate agreement property.
Registry random_registry(std::mt19937_64& rng) {
    const char* stage_keys[4] = {"q", "r", "c", "m"};
    json stages = json::object();
    for (int s = 0; s < 4; ++s) {
        int n_impls = 1 + static_cast<int>(rng() % 3);
        json arr = json::array();
        for (int i = 0; i < n_impls; ++i) {
            std::string id = std::string(stage_keys[s]) + "impl" + std::to_string(i);
            int n_params = static_cast<int>(rng() % 3);
            json params = json::array();
            for (int p = 0; p < n_params; ++p) {
                int n_values = 1 + static_cast<int>(rng() % 3);
                int start = static_cast<int>(rng() % 100);
                std::uint64_t flavor = rng() % 3;
                json values = json::array();
                for (int v = 0; v < n_values; ++v) {
                    switch (flavor) {
                        case 0: values.push_back(start + v); break;
                        case 1: values.push_back("opt" + std::to_string(start + v)); break;
                        default:
                            values.push_back(0.25 * static_cast<double>(start + v));
                            break;
                    }
                }
                params.push_back(sweep("p" + std::to_string(p), values));
            }
            arr.push_back(impl(id, params));
        }
        stages[stage_keys[s]] = arr;
    }
    return Registry::from_json(json{{"stages", stages}});
}

}  // namespace

TEST_CASE("count_paths matches the per-stage product") {
    Registry reg = example_registry();
    CHECK(count_paths(reg) == 18);
}

TEST_CASE("count_paths is 1 for a single-configuration registry") {
    json doc{{"stages",
              json{{"q", json::array({impl("only")})},
                   {"r", json::array({impl("only")})},
                   {"c", json::array({impl("only")})},
                   {"m", json::array({impl("only")})}}}};
    CHECK(count_paths(Registry::from_json(doc)) == 1);
}

TEST_CASE("count equals exhaustive enumeration on random registries") {
    auto rng = seeded_rng(20240811);
    for (int trial = 0; trial < 100; ++trial) {
        Registry reg = random_registry(rng);
        auto paths = enumerate_paths(reg);
        CHECK(count_paths(reg) == paths.size());

        std::set<std::string> ids;
        for (const auto& p : paths) ids.insert(p.canonical_id());
        CHECK(ids.size() == paths.size());  // canonical ids are injective
    }
}

TEST_CASE("enumeration is deterministic and ordered") {
    Registry reg = example_registry();
    auto a = enumerate_paths(reg);
    auto b = enumerate_paths(reg);
    REQUIRE(a.size() == 18);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].canonical_id() == b[i].canonical_id());

    std::set<std::string> ids;
    for (const auto& p : a) ids.insert(p.canonical_id());
    CHECK(ids.size() == 18);
}

TEST_CASE("single-path registry resolves to the static values") {
    json doc{{"stages",
              json{{"q", json::array({impl("fixed",
                                           json::array({json{{"name", "mode"},
                                                             {"kind", "static"},
                                                             {"values", json::array({"fast"})}}}))})},
                   {"r", json::array({impl("rag")})},
                   {"c", json::array({impl("none", {}, true)})},
                   {"m", json::array({impl("model-a")})}}}};
    auto paths = enumerate_paths(Registry::from_json(doc));
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].at(StageKind::QueryProcessing).config.at("mode") == "fast");
    CHECK(paths[0].canonical_id() == "q=fixed{mode=fast}|r=rag{}|c=none{}|m=model-a{}");
}

TEST_CASE("two sweeps cross in row-major declared order") {
    json doc{{"stages",
              json{{"q", json::array({impl("none", {}, true)})},
                   {"r", json::array({impl("rag", json::array({sweep("a", {1, 2}),
                                                               sweep("b", {10, 20, 30})}))})},
                   {"c", json::array({impl("none", {}, true)})},
                   {"m", json::array({impl("model-a")})}}}};
    auto paths = enumerate_paths(Registry::from_json(doc));
    REQUIRE(paths.size() == 6);
    // Last declared param varies fastest.
    std::vector<std::pair<int, int>> expected = {{1, 10}, {1, 20}, {1, 30},
                                                 {2, 10}, {2, 20}, {2, 30}};
    for (std::size_t i = 0; i < 6; ++i) {
        const auto& cfg = paths[i].at(StageKind::Retrieval).config;
        CHECK(cfg.at("a").get<int>() == expected[i].first);
        CHECK(cfg.at("b").get<int>() == expected[i].second);
    }
}

TEST_CASE("prefix ids cover exactly the stages at or before upto") {
    Registry reg = example_registry();
    auto paths = enumerate_paths(reg);

    // Two paths identical except the model agree up to context processing.
    const PathSpec* first = nullptr;
    const PathSpec* second = nullptr;
    for (const auto& a : paths) {
        for (const auto& b : paths) {
            if (&a == &b) continue;
            if (path_prefix_id(a, StageKind::ContextProcessing) ==
                    path_prefix_id(b, StageKind::ContextProcessing) &&
                a.at(StageKind::ModelSelection).impl_id !=
                    b.at(StageKind::ModelSelection).impl_id) {
                first = &a;
                second = &b;
                break;
            }
        }
        if (first) break;
    }
    REQUIRE(first != nullptr);
    CHECK(path_prefix_id(*first, StageKind::ContextProcessing) ==
          path_prefix_id(*second, StageKind::ContextProcessing));
    CHECK(first->canonical_id() != second->canonical_id());

    for (const auto& p : paths) {
        for (StageKind s : kStageOrder)
            CHECK(path_prefix_id(p, s) == path_prefix_id(p, s));
        CHECK(path_prefix_id(p, StageKind::ModelSelection) == p.canonical_id());
    }
}

TEST_CASE("prefix equality is monotone toward earlier stages") {
    auto rng = seeded_rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Registry reg = random_registry(rng);
        auto paths = enumerate_paths(reg);
        if (paths.size() < 2) continue;
        for (std::size_t i = 0; i + 1 < std::min<std::size_t>(paths.size(), 12); ++i) {
            const auto& a = paths[i];
            const auto& b = paths[i + 1];
            for (std::size_t s = 1; s < kStageOrder.size(); ++s) {
                if (path_prefix_id(a, kStageOrder[s]) == path_prefix_id(b, kStageOrder[s])) {
                    for (std::size_t earlier = 0; earlier < s; ++earlier)
                        CHECK(path_prefix_id(a, kStageOrder[earlier]) ==
                              path_prefix_id(b, kStageOrder[earlier]));
                }
            }
        }
    }
}

TEST_CASE("paths differing in retrieval config differ at the retrieval prefix") {
    Registry reg = example_registry();
    auto paths = enumerate_paths(reg);
    for (const auto& a : paths)
        for (const auto& b : paths)
            if (a.at(StageKind::Retrieval).config != b.at(StageKind::Retrieval).config)
                CHECK(path_prefix_id(a, StageKind::Retrieval) !=
                      path_prefix_id(b, StageKind::Retrieval));
}

TEST_CASE("unresolved dynamic params fail with the param name") {
    json doc{{"stages",
              json{{"q", json::array({impl("none", {}, true)})},
                   {"r", json::array({impl("rag")})},
                   {"c", json::array({impl("none", {}, true)})},
                   {"m", json::array({impl("dyn", json::array({json{{"name", "model_name"},
                                                                    {"kind", "dynamic"},
                                                                    {"resolver",
                                                                     "available_models"}}}))})}}}};
    Registry reg = Registry::from_json(doc);
    CHECK_THROWS_WITH_AS(count_paths(reg),
                         doctest::Contains("model_name"), Error);

    SUBCASE("resolution turns the dynamic param into a sweep") {
        Registry resolved =
            resolve_dynamic(reg, {{"available_models", json::array({"model-a", "model-b"})}});
        CHECK(count_paths(resolved) == 2);
        auto paths = enumerate_paths(resolved);
        CHECK(paths[0].at(StageKind::ModelSelection).config.at("model_name") == "model-a");
        CHECK(paths[1].at(StageKind::ModelSelection).config.at("model_name") == "model-b");
    }

    SUBCASE("missing resolver is an error naming the resolver") {
        CHECK_THROWS_WITH_AS(resolve_dynamic(reg, {}),
                             doctest::Contains("available_models"), Error);
    }

    SUBCASE("empty resolver result is an error") {
        CHECK_THROWS_AS(resolve_dynamic(reg, {{"available_models", json::array()}}), Error);
    }
}

TEST_CASE("resolve_dynamic leaves static registries unchanged") {
    Registry reg = example_registry();
    Registry resolved = resolve_dynamic(reg, {});
    CHECK(resolved.to_json() == reg.to_json());
    CHECK(resolved.build_id() == reg.build_id());
}

TEST_CASE("numeric param values keep ids injective") {
    json doc{{"stages",
              json{{"q", json::array({impl("none", {}, true)})},
                   {"r", json::array({impl("rag", json::array({sweep("ratio",
                                                                     {0.1, 0.25, 1.0, 10.0})}))})},
                   {"c", json::array({impl("none", {}, true)})},
                   {"m", json::array({impl("model-a")})}}}};
    auto paths = enumerate_paths(Registry::from_json(doc));
    std::set<std::string> ids;
    for (const auto& p : paths) ids.insert(p.canonical_id());
    CHECK(ids.size() == 4);
}

TEST_CASE("build id is stable under re-serialization") {
    Registry reg = example_registry();
    std::string id = reg.build_id();
    CHECK(id.size() == 16);
    Registry round_trip = Registry::from_json(reg.to_json());
    CHECK(round_trip.build_id() == id);
}
