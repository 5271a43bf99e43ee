#include "eco/rps.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace eco {

json SloConstraint::to_json() const {
    json j = json::object();
    if (max_latency_ms) j["max_latency_ms"] = *max_latency_ms;
    if (max_cost) j["max_cost"] = *max_cost;
    return j;
}

SloConstraint SloConstraint::from_json(const json& j) {
    SloConstraint slo;
    if (j.contains("max_latency_ms") && !j["max_latency_ms"].is_null()) {
        slo.max_latency_ms = j["max_latency_ms"].get<double>();
        if (*slo.max_latency_ms <= 0) throw Error("max_latency_ms must be positive");
    }
    if (j.contains("max_cost") && !j["max_cost"].is_null()) {
        slo.max_cost = j["max_cost"].get<double>();
        if (*slo.max_cost <= 0) throw Error("max_cost must be positive");
    }
    return slo;
}

std::string_view profile_name(Profile p) {
    return p == Profile::LatencyFirst ? "latency_first" : "cost_first";
}

Profile profile_from(std::string_view name) {
    if (name == "latency_first" || name == "latency-first") return Profile::LatencyFirst;
    if (name == "cost_first" || name == "cost-first") return Profile::CostFirst;
    throw Error("unknown profile '" + std::string(name) + "'");
}

std::string_view latency_basis_name(LatencyBasis b) {
    switch (b) {
        case LatencyBasis::Mean: return "mean";
        case LatencyBasis::P50: return "p50";
        case LatencyBasis::P90: return "p90";
        case LatencyBasis::P99: return "p99";
    }
    return "p90";
}

double PathStat::latency_estimate(LatencyBasis basis) const {
    switch (basis) {
        case LatencyBasis::Mean: return mean_ttft;
        case LatencyBasis::P50: return p50_ttft;
        case LatencyBasis::P90: return p90_ttft;
        case LatencyBasis::P99: return p99_ttft;
    }
    return p90_ttft;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw Error("percentile of empty sample");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    double h = (static_cast<double>(values.size()) - 1.0) * p;
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = h - std::floor(h);
    return values[lo] + frac * (values[hi] - values[lo]);
}

PathStats build_path_stats(const std::vector<EvalRecord>& records, LatencyBasis basis) {
    std::map<std::string, std::vector<const EvalRecord*>> grouped;
    for (const auto& r : records) grouped[r.path_id].push_back(&r);

    PathStats stats;
    stats.basis = basis;
    for (const auto& [pid, recs] : grouped) {
        if (recs.empty()) continue;
        PathStat s;
        std::vector<double> ttfts;
        ttfts.reserve(recs.size());
        for (const auto* r : recs) {
            s.mean_ttft += r->ttft_ms;
            s.mean_cost += r->cost;
            s.mean_accuracy += r->accuracy;
            ttfts.push_back(r->ttft_ms);
        }
        double n = static_cast<double>(recs.size());
        s.mean_ttft /= n;
        s.mean_cost /= n;
        s.mean_accuracy /= n;
        s.p50_ttft = percentile(ttfts, 0.50);
        s.p90_ttft = percentile(ttfts, 0.90);
        s.p99_ttft = percentile(ttfts, 0.99);
        s.samples = recs.size();
        stats.by_path[pid] = s;
    }
    return stats;
}

namespace {

bool contains_all(const PathSpec& path, const std::vector<ComponentValue>& criticals) {
    for (const auto& c : criticals)
        if (!c.matches(path)) return false;
    return true;
}

bool satisfies_slo(const PathStat& s, LatencyBasis basis, const SloConstraint& slo) {
    if (slo.max_latency_ms && s.latency_estimate(basis) > *slo.max_latency_ms) return false;
    if (slo.max_cost && s.mean_cost > *slo.max_cost) return false;
    return true;
}

}  // namespace

std::vector<std::string> filter_valid(const PathStats& stats,
                                      const std::map<std::string, PathSpec>& paths_by_id,
                                      const SloConstraint& slo,
                                      const std::vector<ComponentValue>& criticals) {
    std::vector<std::string> valid;
    for (const auto& [pid, s] : stats.by_path) {
        if (!satisfies_slo(s, stats.basis, slo)) continue;
        auto it = paths_by_id.find(pid);
        if (it == paths_by_id.end()) continue;
        if (!contains_all(it->second, criticals)) continue;
        valid.push_back(pid);
    }
    return valid;
}

TrainingIndex TrainingIndex::build(const std::vector<TrainingQuery>& train_queries,
                                   const std::vector<EvalRecord>& records,
                                   const CriticalComponentMap& phi, const EncoderModel& model,
                                   Embedder& embedder, int lambda) {
    auto best = best_paths_by_query(records, lambda);
    TrainingIndex index;
    for (const auto& q : train_queries) {
        auto bit = best.find(q.id);
        if (bit == best.end()) continue;
        TrainingIndexEntry entry;
        entry.query_id = q.id;
        entry.projected = project(model.params, embedder.embed(q.text));
        double nrm = 0.0;
        for (double x : entry.projected) nrm += x * x;
        if (nrm <= 1e-24) continue;  // degenerate projections are unusable as neighbors
        entry.best_path_id = bit->second;
        auto pit = phi.map.find(q.id);
        if (pit != phi.map.end()) entry.criticals = pit->second;
        index.entries.push_back(std::move(entry));
    }
    return index;
}

namespace {

double jaccard(const std::vector<ComponentValue>& a, const std::vector<ComponentValue>& b) {
    std::set<std::string> sa, sb;
    for (const auto& c : a) sa.insert(c.key());
    for (const auto& c : b) sb.insert(c.key());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& k : sa) inter += sb.count(k);
    std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::map<std::string, double> score_paths(const Vec& projected_query,
                                          const std::vector<ComponentValue>& criticals,
                                          const std::vector<std::string>& valid_paths,
                                          const TrainingIndex& index, std::size_t k) {
    std::map<std::string, double> scores;
    for (const auto& pid : valid_paths) scores[pid] = 0.0;
    if (index.entries.empty()) return scores;

    k = std::min(k, index.entries.size());
    std::vector<std::pair<double, std::size_t>> sims;
    sims.reserve(index.entries.size());
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
        double s;
        try {
            s = cosine_sim(projected_query, index.entries[i].projected);
        } catch (const Error&) {
            continue;
        }
        sims.push_back({s, i});
    }
    std::stable_sort(sims.begin(), sims.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t rank = 0; rank < std::min(k, sims.size()); ++rank) {
        const auto& [sim, idx] = sims[rank];
        const auto& entry = index.entries[idx];
        auto it = scores.find(entry.best_path_id);
        if (it == scores.end()) continue;  // best path not in the valid set
        it->second += jaccard(entry.criticals, criticals) * sim;
    }
    return scores;
}

ComponentStats build_component_stats(const std::vector<EvalRecord>& records,
                                     const std::map<std::string, PathSpec>& paths_by_id) {
    struct Acc {
        double acc = 0, cost = 0, ttft = 0;
        std::size_t n = 0;
    };
    std::map<std::string, Acc> acc;
    std::map<StageKind, std::map<std::string, ComponentValue>> observed;
    for (const auto& r : records) {
        auto it = paths_by_id.find(r.path_id);
        if (it == paths_by_id.end()) continue;
        for (StageKind stage : kStageOrder) {
            ComponentValue v = ComponentValue::of(it->second, stage);
            auto key = v.key();
            auto& a = acc[key];
            a.acc += r.accuracy;
            a.cost += r.cost;
            a.ttft += r.ttft_ms;
            ++a.n;
            observed[stage].emplace(key, std::move(v));
        }
    }
    ComponentStats stats;
    for (const auto& [key, a] : acc) {
        double n = static_cast<double>(a.n);
        stats.by_value[key] = ComponentStats::Entry{a.acc / n, a.cost / n, a.ttft / n, a.n};
    }
    for (auto& [stage, values] : observed)
        for (auto& [key, v] : values) stats.observed[stage].push_back(v);
    return stats;
}

FallbackResult fallback_path(const std::vector<ComponentValue>& criticals,
                             const ComponentStats& component_stats, const PathStats& stats,
                             const std::map<std::string, PathSpec>& paths_by_id,
                             const SloConstraint& slo, double tau_acc, Profile profile) {
    FallbackResult result;

    std::map<StageKind, const ComponentValue*> fixed;
    for (const auto& c : criticals) fixed[c.stage] = &c;

    for (StageKind stage : kStageOrder) {
        auto fit = fixed.find(stage);
        if (fit != fixed.end()) {
            result.path.at(stage) = StageChoice{fit->second->impl_id, fit->second->config};
            continue;
        }
        auto oit = component_stats.observed.find(stage);
        if (oit == component_stats.observed.end() || oit->second.empty())
            throw Error("no observed components for stage '" +
                        std::string(stage_key(stage)) + "'");
        const ComponentValue* chosen = nullptr;
        const ComponentValue* most_accurate = nullptr;
        double best_cost = 0.0, best_acc = -1.0;
        for (const auto& v : oit->second) {
            const auto& e = component_stats.by_value.at(v.key());
            if (e.mean_accuracy > best_acc ||
                (e.mean_accuracy == best_acc && most_accurate && v.key() < most_accurate->key())) {
                best_acc = e.mean_accuracy;
                most_accurate = &v;
            }
            if (e.mean_accuracy < tau_acc) continue;
            if (!chosen || e.mean_cost < best_cost ||
                (e.mean_cost == best_cost && v.key() < chosen->key())) {
                chosen = &v;
                best_cost = e.mean_cost;
            }
        }
        if (!chosen) chosen = most_accurate;  // nothing met tau_acc
        result.path.at(stage) = StageChoice{chosen->impl_id, chosen->config};
    }

    // Re-check the SLO at the estimate level when the composed path has stats.
    auto sit = stats.by_path.find(result.path.canonical_id());
    if (sit != stats.by_path.end()) {
        result.estimates_known = true;
        if (!satisfies_slo(sit->second, stats.basis, slo)) {
            // Profile-optimal observed path containing the criticals.
            const std::string* best_pid = nullptr;
            double best_metric = 0.0;
            for (const auto& [pid, s] : stats.by_path) {
                auto pit = paths_by_id.find(pid);
                if (pit == paths_by_id.end() || !contains_all(pit->second, criticals)) continue;
                double metric = profile == Profile::LatencyFirst
                                    ? s.latency_estimate(stats.basis)
                                    : s.mean_cost;
                if (!best_pid || metric < best_metric ||
                    (metric == best_metric && pid < *best_pid)) {
                    best_pid = &pid;
                    best_metric = metric;
                }
            }
            result.slo_violation_estimate = true;
            if (best_pid) {
                result.path = paths_by_id.at(*best_pid);
                const auto& s = stats.by_path.at(*best_pid);
                result.slo_violation_estimate = !satisfies_slo(s, stats.basis, slo);
            }
        }
    }
    return result;
}

json SelectionResult::audit_json(const SloConstraint& slo, const std::string& query_text) const {
    // Top-5 scores, highest first.
    std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    json top = json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(5, ranked.size()); ++i)
        top.push_back(json{{"path", ranked[i].first}, {"score", ranked[i].second}});

    json criticals_j = json::array();
    for (const auto& c : criticals) criticals_j.push_back(c.to_json());

    json estimates = json::object();
    if (latency_estimate) estimates["latency_ms"] = *latency_estimate;
    if (cost_estimate) estimates["cost"] = *cost_estimate;
    estimates["basis"] = std::string(latency_basis_name(basis));

    return json{{"query_digest", hex64(fnv1a64(query_text))},
                {"prototype", prototype},
                {"criticals", std::move(criticals_j)},
                {"slo", slo.to_json()},
                {"valid_count", valid_count},
                {"chosen_path", path_id},
                {"scores_top5", std::move(top)},
                {"fallback", fallback},
                {"slo_violation_estimate", slo_violation_estimate},
                {"estimates", std::move(estimates)}};
}

SelectionResult select(const std::string& query_text, const SloConstraint& slo,
                       const EncoderModel& model, const PathStats& stats,
                       const ComponentStats& component_stats, const TrainingIndex& index,
                       const std::map<std::string, PathSpec>& paths_by_id, Embedder& embedder,
                       const SelectOptions& options) {
    SelectionResult result;
    result.basis = stats.basis;

    Vec embedding = embedder.embed(query_text);
    PrototypeAssignment assignment = assign_prototype_embedded(model, embedding);
    if (!assignment.degenerate) {
        result.prototype = static_cast<long>(assignment.index);
        result.criticals = assignment.components;
    }

    std::vector<std::string> valid = filter_valid(stats, paths_by_id, slo, result.criticals);
    result.valid_count = valid.size();

    if (valid.empty()) {
        FallbackResult fb = fallback_path(result.criticals, component_stats, stats,
                                          paths_by_id, slo, options.tau_acc, options.profile);
        result.fallback = true;
        result.path = fb.path;
        result.path_id = fb.path.canonical_id();
        result.slo_violation_estimate = fb.slo_violation_estimate;
        auto sit = stats.by_path.find(result.path_id);
        if (sit != stats.by_path.end()) {
            result.latency_estimate = sit->second.latency_estimate(stats.basis);
            result.cost_estimate = sit->second.mean_cost;
        }
        return result;
    }

    Vec projected = project(model.params, embedding);
    result.scores = score_paths(projected, result.criticals, valid, index, options.k);

    const std::string* chosen = nullptr;
    double chosen_score = -1.0;
    for (const auto& pid : valid) {
        double score = result.scores.at(pid);
        if (!chosen || score > chosen_score) {
            chosen = &pid;
            chosen_score = score;
            continue;
        }
        if (score < chosen_score) continue;
        const auto& s_new = stats.by_path.at(pid);
        const auto& s_cur = stats.by_path.at(*chosen);
        double metric_new = options.profile == Profile::LatencyFirst
                                ? s_new.latency_estimate(stats.basis)
                                : s_new.mean_cost;
        double metric_cur = options.profile == Profile::LatencyFirst
                                ? s_cur.latency_estimate(stats.basis)
                                : s_cur.mean_cost;
        if (metric_new < metric_cur || (metric_new == metric_cur && pid < *chosen))
            chosen = &pid;
    }
    result.path_id = *chosen;
    result.path = paths_by_id.at(*chosen);
    const auto& s = stats.by_path.at(*chosen);
    result.latency_estimate = s.latency_estimate(stats.basis);
    result.cost_estimate = s.mean_cost;
    return result;
}

}  // namespace eco
