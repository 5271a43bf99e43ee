#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eco/cca.hpp"
#include "eco/dsqe.hpp"
#include "eco/emulator.hpp"
#include "eco/path_space.hpp"

namespace eco {

struct SloConstraint {
    std::optional<double> max_latency_ms;
    std::optional<double> max_cost;

    json to_json() const;
    static SloConstraint from_json(const json& j);
};

enum class Profile { LatencyFirst, CostFirst };
std::string_view profile_name(Profile p);
Profile profile_from(std::string_view name);

enum class LatencyBasis { Mean, P50, P90, P99 };
std::string_view latency_basis_name(LatencyBasis b);

struct PathStat {
    double mean_ttft = 0.0;
    double p50_ttft = 0.0;
    double p90_ttft = 0.0;
    double p99_ttft = 0.0;
    double mean_cost = 0.0;
    double mean_accuracy = 0.0;
    std::size_t samples = 0;

    double latency_estimate(LatencyBasis basis) const;
};

struct PathStats {
    std::map<std::string, PathStat> by_path;
    LatencyBasis basis = LatencyBasis::P90;
};

// Linear-interpolated percentile (index h = (n-1)*p over the sorted sample).
double percentile(std::vector<double> values, double p);

// Aggregates per-path statistics over all training records. The latency
// estimator defaults to p90 of observed ttft; the cost estimator is the mean
// observed cost (which, costs being linear in prompt tokens, equals the cost
// model evaluated at the mean observed prompt size).
PathStats build_path_stats(const std::vector<EvalRecord>& records,
                           LatencyBasis basis = LatencyBasis::P90);

// Keeps paths whose latency and cost estimates satisfy the SLO and which
// contain every critical component. Unbounded constraints pass automatically.
std::vector<std::string> filter_valid(const PathStats& stats,
                                      const std::map<std::string, PathSpec>& paths_by_id,
                                      const SloConstraint& slo,
                                      const std::vector<ComponentValue>& criticals);

struct TrainingIndexEntry {
    std::string query_id;
    Vec projected;
    std::string best_path_id;
    std::vector<ComponentValue> criticals;
};

struct TrainingIndex {
    std::vector<TrainingIndexEntry> entries;

    static TrainingIndex build(const std::vector<TrainingQuery>& train_queries,
                               const std::vector<EvalRecord>& records,
                               const CriticalComponentMap& phi, const EncoderModel& model,
                               Embedder& embedder, int lambda);
};

// kNN scoring: Score(P) = sum over the k nearest training queries of
// w_q * 1[P_q == P] * s_q, where s_q is the cosine similarity in projected
// space and w_q is the Jaccard similarity between critical component sets.
std::map<std::string, double> score_paths(const Vec& projected_query,
                                          const std::vector<ComponentValue>& criticals,
                                          const std::vector<std::string>& valid_paths,
                                          const TrainingIndex& index, std::size_t k);

// Global per-component-value statistics for the fallback strategy.
struct ComponentStats {
    struct Entry {
        double mean_accuracy = 0.0;
        double mean_cost = 0.0;
        double mean_ttft = 0.0;
        std::size_t samples = 0;
    };
    std::map<std::string, Entry> by_value;                      // key -> stats
    std::map<StageKind, std::vector<ComponentValue>> observed;  // per-stage values
};

ComponentStats build_component_stats(const std::vector<EvalRecord>& records,
                                     const std::map<std::string, PathSpec>& paths_by_id);

struct FallbackResult {
    PathSpec path;
    bool slo_violation_estimate = false;  // no estimate satisfied the SLO
    bool estimates_known = false;
};

// Appendix-C default strategy: critical stages fixed, non-critical stages get
// the cheapest component with mean accuracy >= tau_acc (max-accuracy when
// none qualifies). The SLO is re-checked against path statistics; when still
// violated, the profile-optimal observed path containing the criticals is
// returned with the violation flagged.
FallbackResult fallback_path(const std::vector<ComponentValue>& criticals,
                             const ComponentStats& component_stats, const PathStats& stats,
                             const std::map<std::string, PathSpec>& paths_by_id,
                             const SloConstraint& slo, double tau_acc, Profile profile);

struct SelectionResult {
    PathSpec path;
    std::string path_id;
    long prototype = -1;
    std::vector<ComponentValue> criticals;
    std::map<std::string, double> scores;  // over valid paths
    bool fallback = false;
    bool slo_violation_estimate = false;
    std::optional<double> latency_estimate;
    std::optional<double> cost_estimate;
    LatencyBasis basis = LatencyBasis::P90;
    std::size_t valid_count = 0;

    json audit_json(const SloConstraint& slo, const std::string& query_text) const;
};

struct SelectOptions {
    std::size_t k = 5;
    double tau_acc = 0.6;
    Profile profile = Profile::LatencyFirst;
};

SelectionResult select(const std::string& query_text, const SloConstraint& slo,
                       const EncoderModel& model, const PathStats& stats,
                       const ComponentStats& component_stats, const TrainingIndex& index,
                       const std::map<std::string, PathSpec>& paths_by_id, Embedder& embedder,
                       const SelectOptions& options = {});

}  // namespace eco
