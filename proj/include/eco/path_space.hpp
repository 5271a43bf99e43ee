#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eco/common.hpp"

namespace eco {

using json = nlohmann::json;

// The four pipeline stages, in execution order.
enum class StageKind { QueryProcessing = 0, Retrieval = 1, ContextProcessing = 2, ModelSelection = 3 };

constexpr std::array<StageKind, 4> kStageOrder = {
    StageKind::QueryProcessing, StageKind::Retrieval,
    StageKind::ContextProcessing, StageKind::ModelSelection};

std::string_view stage_key(StageKind s);            // "q" | "r" | "c" | "m"
StageKind stage_from_key(std::string_view key);

enum class ParamKind { Static, Sweep, Dynamic };

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::Static;
    std::vector<json> values;   // static: exactly 1; sweep: >= 1
    std::string resolver;       // dynamic only

    void validate() const;
};

struct ImplementationSpec {
    std::string id;
    StageKind stage = StageKind::QueryProcessing;
    std::vector<ParamSpec> params;
    bool is_null = false;       // explicit skip option; no params allowed

    // Identifier used in canonical ids; null implementations print as "none".
    std::string canonical_name() const { return is_null ? "none" : id; }
};

struct Registry {
    std::array<std::vector<ImplementationSpec>, 4> stages;
    json global = json::object();

    const std::vector<ImplementationSpec>& at(StageKind s) const {
        return stages[static_cast<std::size_t>(s)];
    }
    std::vector<ImplementationSpec>& at(StageKind s) {
        return stages[static_cast<std::size_t>(s)];
    }

    static Registry from_json(const json& doc);
    json to_json() const;

    // Content-addressed build identifier (hex of the canonical JSON hash).
    std::string build_id() const;
};

struct StageChoice {
    std::string impl_id;                 // canonical name ("none" for null impls)
    std::map<std::string, json> config;  // resolved θ, keyed by param name

    // Canonical segment, e.g. "rag{chunk=512,top_k=4}".
    std::string segment() const;
};

struct PathSpec {
    std::array<StageChoice, 4> stages;

    const StageChoice& at(StageKind s) const { return stages[static_cast<std::size_t>(s)]; }
    StageChoice& at(StageKind s) { return stages[static_cast<std::size_t>(s)]; }

    // "q=<impl>{k=v,...}|r=...|c=...|m=..." with params sorted by name.
    std::string canonical_id() const;
};

// Shortest round-trip decimal form for scalar JSON values.
std::string scalar_to_string(const json& v);

// Total number of concrete paths: per-stage sum of implementation grid sizes,
// multiplied across stages. Throws on unresolved dynamic params.
std::uint64_t count_paths(const Registry& registry);

// Deterministic enumeration: stage order q,r,c,m; implementations in registry
// order; param values in declared order (last param varies fastest).
std::vector<PathSpec> enumerate_paths(const Registry& registry);

// Identifier covering the choices of all stages at or before `upto`.
std::string path_prefix_id(const PathSpec& path, StageKind upto);

// Replaces every dynamic param by a sweep over the resolver's values taken
// from `environment`. Missing resolver or empty result is an error.
Registry resolve_dynamic(const Registry& registry,
                         const std::map<std::string, json>& environment);

}  // namespace eco
