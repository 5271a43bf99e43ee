#include "eco/cca.hpp"

#include <algorithm>

namespace eco {

namespace {

constexpr double kAccuracyTolerance = 0.01;  // absolute, on the [0,1] scale

}  // namespace

std::string ComponentValue::key() const {
    StageChoice choice{impl_id, config};
    return std::string(stage_key(stage)) + "=" + choice.segment();
}

bool ComponentValue::matches(const PathSpec& path, bool impl_only) const {
    const StageChoice& choice = path.at(stage);
    if (choice.impl_id != impl_id) return false;
    return impl_only || choice.config == config;
}

ComponentValue ComponentValue::of(const PathSpec& path, StageKind stage) {
    const StageChoice& choice = path.at(stage);
    return ComponentValue{stage, choice.impl_id, choice.config};
}

json ComponentValue::to_json() const {
    json theta = json::object();
    for (const auto& [k, v] : config) theta[k] = v;
    return json{{"stage", std::string(stage_key(stage))}, {"impl", impl_id}, {"theta", theta}};
}

ComponentValue ComponentValue::from_json(const json& j) {
    ComponentValue v;
    v.stage = stage_from_key(j.at("stage").get<std::string>());
    v.impl_id = j.at("impl").get<std::string>();
    if (j.contains("theta"))
        for (const auto& [k, val] : j.at("theta").items()) v.config[k] = val;
    return v;
}

json CriticalComponentMap::to_json() const {
    json map_j = json::object();
    for (const auto& [qid, components] : map) {
        json arr = json::array();
        for (const auto& c : components) arr.push_back(c.to_json());
        map_j[qid] = std::move(arr);
    }
    return json{{"params", json{{"tau", tau}, {"lambda", lambda}}}, {"map", std::move(map_j)}};
}

CriticalComponentMap CriticalComponentMap::from_json(const json& j) {
    CriticalComponentMap m;
    m.tau = j.at("params").at("tau").get<double>();
    m.lambda = j.at("params").at("lambda").get<int>();
    for (const auto& [qid, arr] : j.at("map").items()) {
        std::vector<ComponentValue> components;
        for (const auto& cj : arr) components.push_back(ComponentValue::from_json(cj));
        m.map[qid] = std::move(components);
    }
    return m;
}

const EvalRecord& find_best_record(const std::vector<EvalRecord>& records_for_query,
                                   int lambda) {
    if (records_for_query.empty()) throw Error("no records for query");
    double best_acc = 0.0;
    for (const auto& r : records_for_query) best_acc = std::max(best_acc, r.accuracy);

    const EvalRecord* best = nullptr;
    for (const auto& r : records_for_query) {
        if (r.accuracy < best_acc - kAccuracyTolerance) continue;
        if (!best) {
            best = &r;
            continue;
        }
        double metric_r = lambda == 1 ? r.ttft_ms : r.cost;
        double metric_b = lambda == 1 ? best->ttft_ms : best->cost;
        if (metric_r < metric_b || (metric_r == metric_b && r.path_id < best->path_id))
            best = &r;
    }
    return *best;
}

PathSpec find_best_path(const std::vector<EvalRecord>& records_for_query,
                        const std::map<std::string, PathSpec>& paths_by_id, int lambda) {
    const EvalRecord& best = find_best_record(records_for_query, lambda);
    auto it = paths_by_id.find(best.path_id);
    if (it == paths_by_id.end())
        throw Error("record references unknown path '" + best.path_id + "'");
    return it->second;
}

double impact(const std::vector<EvalRecord>& records_for_query,
              const std::map<std::string, PathSpec>& paths_by_id, const ComponentValue& value,
              bool impl_only) {
    double with_sum = 0.0, without_sum = 0.0;
    std::size_t with_n = 0, without_n = 0;
    for (const auto& r : records_for_query) {
        auto it = paths_by_id.find(r.path_id);
        if (it == paths_by_id.end())
            throw Error("record references unknown path '" + r.path_id + "'");
        if (value.matches(it->second, impl_only)) {
            with_sum += r.accuracy;
            ++with_n;
        } else {
            without_sum += r.accuracy;
            ++without_n;
        }
    }
    if (with_n == 0)
        throw Error("component value '" + value.key() + "' not observed for query");
    if (without_n == 0) return kMandatoryImpact;
    return with_sum / static_cast<double>(with_n) -
           without_sum / static_cast<double>(without_n);
}

std::vector<ComponentValue> critical_components(
    const std::vector<EvalRecord>& records_for_query,
    const std::map<std::string, PathSpec>& paths_by_id, double tau, int lambda,
    bool impl_only) {
    PathSpec best = find_best_path(records_for_query, paths_by_id, lambda);
    std::vector<ComponentValue> criticals;
    for (StageKind stage : kStageOrder) {
        ComponentValue value = ComponentValue::of(best, stage);
        if (impl_only) value.config.clear();
        double score = impact(records_for_query, paths_by_id, value, impl_only);
        if (score >= tau) criticals.push_back(std::move(value));
    }
    return criticals;
}

CriticalComponentMap build_map(const std::vector<EvalRecord>& records,
                               const std::map<std::string, PathSpec>& paths_by_id, double tau,
                               int lambda, bool impl_only, const WarnSink& warn) {
    std::map<std::string, std::vector<EvalRecord>> by_query;
    for (const auto& r : records) by_query[r.query_id].push_back(r);

    CriticalComponentMap out;
    out.tau = tau;
    out.lambda = lambda;
    for (const auto& [qid, recs] : by_query) {
        if (recs.empty()) {
            if (warn) warn("query '" + qid + "' has no records; omitted from Φ");
            continue;
        }
        out.map[qid] = critical_components(recs, paths_by_id, tau, lambda, impl_only);
    }
    return out;
}

std::map<std::string, std::string> best_paths_by_query(const std::vector<EvalRecord>& records,
                                                       int lambda) {
    std::map<std::string, std::vector<EvalRecord>> by_query;
    for (const auto& r : records) by_query[r.query_id].push_back(r);
    std::map<std::string, std::string> out;
    for (const auto& [qid, recs] : by_query)
        out[qid] = find_best_record(recs, lambda).path_id;
    return out;
}

}  // namespace eco
