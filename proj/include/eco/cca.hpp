#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "eco/domain_context.hpp"
#include "eco/emulator.hpp"
#include "eco/path_space.hpp"

namespace eco {

// Impact sentinel for components with no observed alternative.
constexpr double kMandatoryImpact = std::numeric_limits<double>::infinity();

struct ComponentValue {
    StageKind stage = StageKind::QueryProcessing;
    std::string impl_id;
    std::map<std::string, json> config;

    // "m=big{temp=0.2}" — the canonical stage segment, prefixed by stage key.
    std::string key() const;
    bool matches(const PathSpec& path, bool impl_only = false) const;
    static ComponentValue of(const PathSpec& path, StageKind stage);

    json to_json() const;
    static ComponentValue from_json(const json& j);
};

struct CriticalComponentMap {
    double tau = 0.1;
    int lambda = 1;
    std::map<std::string, std::vector<ComponentValue>> map;  // query id -> Φ[q]

    json to_json() const;
    static CriticalComponentMap from_json(const json& j);
};

// Lexicographic best path: accuracy first, then (λ=1) min ttft or (λ=0) min
// cost among records within 0.01 absolute accuracy of the maximum; final ties
// broken by canonical id.
const EvalRecord& find_best_record(const std::vector<EvalRecord>& records_for_query,
                                   int lambda);
PathSpec find_best_path(const std::vector<EvalRecord>& records_for_query,
                        const std::map<std::string, PathSpec>& paths_by_id, int lambda);

// mean(accuracy | stage = value) - mean(accuracy | stage != value).
// Returns kMandatoryImpact when no record uses an alternative.
double impact(const std::vector<EvalRecord>& records_for_query,
              const std::map<std::string, PathSpec>& paths_by_id, const ComponentValue& value,
              bool impl_only = false);

std::vector<ComponentValue> critical_components(
    const std::vector<EvalRecord>& records_for_query,
    const std::map<std::string, PathSpec>& paths_by_id, double tau, int lambda,
    bool impl_only = false);

CriticalComponentMap build_map(const std::vector<EvalRecord>& records,
                               const std::map<std::string, PathSpec>& paths_by_id, double tau,
                               int lambda, bool impl_only = false,
                               const WarnSink& warn = nullptr);

// Per-query best path ids under the same lexicographic rule (used by the
// runtime's training index).
std::map<std::string, std::string> best_paths_by_query(const std::vector<EvalRecord>& records,
                                                       int lambda);

}  // namespace eco
