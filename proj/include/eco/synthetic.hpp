#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "eco/cca.hpp"
#include "eco/domain_context.hpp"
#include "eco/emulator.hpp"
#include "eco/path_space.hpp"

namespace eco {

// Shape and planted structure for a deterministic synthetic world.
struct WorldSpec {
    std::uint64_t seed = 42;
    int clusters = 4;
    int queries_per_cluster = 24;
    double base_accuracy = 0.4;
    double effect_size = 0.25;      // additive accuracy per planted component
    int effects_per_cluster = 2;
    double noise_amplitude = 0.0;   // uniform in ±amplitude, seeded per (q, P)
    int lambda = 1;                 // tie-break metric for planted best paths

    // Stage shape: number of concrete component values per stage.
    int q_options = 3;
    int r_options = 3;
    int c_options = 2;
    int m_options = 2;

    int max_tokens = 128;
    double split_ratio = 0.75;

    json to_json() const;
    static WorldSpec from_json(const json& j);
};

struct World {
    WorldSpec spec;
    Registry registry;
    std::vector<PathSpec> paths;
    std::map<std::string, PathSpec> paths_by_id;
    std::vector<TrainingQuery> queries;
    std::map<std::string, int> cluster_of;                        // query id -> cluster
    std::vector<std::vector<ComponentValue>> effects;             // per cluster
    std::map<std::string, std::vector<ComponentValue>> planted_phi;
    std::map<std::string, std::string> planted_best;              // query id -> path id

    // Ground-truth metric tables keyed by component value key.
    std::map<std::string, double> stage_latency_ms;   // q/r/c values
    std::map<std::string, double> stage_cost;         // q/r/c values
    std::map<std::string, double> model_ttft_ms;      // m values
    std::map<std::string, std::pair<double, double>> model_cost;  // m -> (alpha, beta)

    double surface_accuracy(const std::string& query_id, const PathSpec& path) const;
    double path_ttft_ms(const PathSpec& path) const;  // cold, cache-free
    double path_cost(const std::string& query_text, const PathSpec& path) const;

    json to_json() const;
    static World from_json(const json& j);
};

// Builds the world: registry, typed queries with train/test split, planted
// critical components, per-query best paths, and the metric tables that the
// mock executors replay exactly. Refuses effect sizes at or below the noise
// amplitude.
World make_world(const WorldSpec& spec);

// Stage executor replaying the world's tables. Contexts chain the canonical
// stage segments, so cached prefixes reproduce identical downstream results.
class WorldExecutor : public StageExecutor {
public:
    explicit WorldExecutor(std::shared_ptr<const World> world,
                           std::shared_ptr<MockScript> script = nullptr)
        : world_(std::move(world)),
          script_(script ? std::move(script) : std::make_shared<MockScript>()) {}

    StageOutput run(StageKind stage, const StageChoice& choice, const std::string& query_text,
                    const std::string& upstream) override;

    MockScript& script() { return *script_; }

private:
    std::shared_ptr<const World> world_;
    std::shared_ptr<MockScript> script_;
};

// Judge resolving the (query, path) key embedded in a world response back to
// the ground-truth surface accuracy.
class WorldJudge : public Judge {
public:
    explicit WorldJudge(std::shared_ptr<const World> world);

    double score(const std::string& response, const std::string& reference_answer,
                 const std::string& guideline) override;

private:
    std::shared_ptr<const World> world_;
    std::map<std::string, std::string> query_by_digest_;
};

}  // namespace eco
