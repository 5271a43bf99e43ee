#include "eco/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "eco/tokenize.hpp"

namespace eco {

json WorldSpec::to_json() const {
    return json{{"seed", seed},
                {"clusters", clusters},
                {"queries_per_cluster", queries_per_cluster},
                {"base_accuracy", base_accuracy},
                {"effect_size", effect_size},
                {"effects_per_cluster", effects_per_cluster},
                {"noise_amplitude", noise_amplitude},
                {"lambda", lambda},
                {"q_options", q_options},
                {"r_options", r_options},
                {"c_options", c_options},
                {"m_options", m_options},
                {"max_tokens", max_tokens},
                {"split_ratio", split_ratio}};
}

WorldSpec WorldSpec::from_json(const json& j) {
    WorldSpec s;
    s.seed = j.value("seed", s.seed);
    s.clusters = j.value("clusters", s.clusters);
    s.queries_per_cluster = j.value("queries_per_cluster", s.queries_per_cluster);
    s.base_accuracy = j.value("base_accuracy", s.base_accuracy);
    s.effect_size = j.value("effect_size", s.effect_size);
    s.effects_per_cluster = j.value("effects_per_cluster", s.effects_per_cluster);
    s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
    s.lambda = j.value("lambda", s.lambda);
    s.q_options = j.value("q_options", s.q_options);
    s.r_options = j.value("r_options", s.r_options);
    s.c_options = j.value("c_options", s.c_options);
    s.m_options = j.value("m_options", s.m_options);
    s.max_tokens = j.value("max_tokens", s.max_tokens);
    s.split_ratio = j.value("split_ratio", s.split_ratio);
    return s;
}

namespace {

// World registry shape: q and c have a null option plus swept variants,
// retrieval sweeps top_k, models are separate implementations.
Registry world_registry(const WorldSpec& spec) {
    json stages = json::object();

    auto swept = [](const std::string& id, const std::string& param, int n_values,
                    int start = 1) {
        json values = json::array();
        for (int i = 0; i < n_values; ++i) values.push_back(start + i);
        return json{{"id", id},
                    {"params", json::array({json{{"name", param},
                                                 {"kind", n_values > 1 ? "sweep" : "static"},
                                                 {"values", values}}})}};
    };

    json q = json::array({json{{"id", "none"}, {"null", true}}});
    if (spec.q_options > 1) q.push_back(swept("stepback", "depth", spec.q_options - 1));
    stages["q"] = q;

    json r = json::array();
    json topk = json::array();
    for (int i = 0; i < spec.r_options; ++i) topk.push_back(2 << i);
    r.push_back(json{{"id", "rag"},
                     {"params", json::array({json{{"name", "top_k"},
                                                  {"kind", spec.r_options > 1 ? "sweep" : "static"},
                                                  {"values", topk}}})}});
    stages["r"] = r;

    json c = json::array({json{{"id", "none"}, {"null", true}}});
    if (spec.c_options > 1) c.push_back(swept("refine", "level", spec.c_options - 1));
    stages["c"] = c;

    json m = json::array();
    for (int i = 0; i < spec.m_options; ++i)
        m.push_back(json{{"id", "model-" + std::to_string(i)}});
    stages["m"] = m;

    json doc{{"stages", stages},
             {"global", json{{"kind", "synthetic-world"}, {"seed", spec.seed}}}};
    return Registry::from_json(doc);
}

std::string random_word(std::mt19937_64& rng, std::size_t len = 8) {
    std::string w;
    for (std::size_t i = 0; i < len; ++i)
        w.push_back(static_cast<char>('a' + rng() % 26));
    return w;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

double World::surface_accuracy(const std::string& query_id, const PathSpec& path) const {
    auto cit = cluster_of.find(query_id);
    if (cit == cluster_of.end()) throw Error("unknown world query '" + query_id + "'");
    double acc = spec.base_accuracy;
    for (const auto& effect : effects.at(static_cast<std::size_t>(cit->second)))
        if (effect.matches(path)) acc += spec.effect_size;
    if (spec.noise_amplitude > 0.0) {
        auto rng = seeded_rng(spec.seed, "noise|" + query_id + "|" + path.canonical_id());
        acc += uniform_in(rng, -spec.noise_amplitude, spec.noise_amplitude);
    }
    return clamp01(acc);
}

double World::path_ttft_ms(const PathSpec& path) const {
    double total = 0.0;
    for (StageKind s : {StageKind::QueryProcessing, StageKind::Retrieval,
                        StageKind::ContextProcessing})
        total += stage_latency_ms.at(ComponentValue::of(path, s).key());
    total += model_ttft_ms.at(ComponentValue::of(path, StageKind::ModelSelection).key());
    return total;
}

double World::path_cost(const std::string& query_text, const PathSpec& path) const {
    double total = 0.0;
    std::string context;
    for (StageKind s : {StageKind::QueryProcessing, StageKind::Retrieval,
                        StageKind::ContextProcessing}) {
        auto key = ComponentValue::of(path, s).key();
        total += stage_cost.at(key);
        context += (context.empty() ? "" : "\xc2\xbb") + key;
    }
    const auto& [alpha, beta] =
        model_cost.at(ComponentValue::of(path, StageKind::ModelSelection).key());
    total += alpha * static_cast<double>(count_tokens(query_text + " " + context)) +
             beta * static_cast<double>(spec.max_tokens);
    return total;
}

json World::to_json() const {
    json queries_j = json::array();
    for (const auto& q : queries) queries_j.push_back(q.to_json());
    json clusters_j = json::object();
    for (const auto& [qid, c] : cluster_of) clusters_j[qid] = c;
    json effects_j = json::array();
    for (const auto& set : effects) {
        json arr = json::array();
        for (const auto& v : set) arr.push_back(v.to_json());
        effects_j.push_back(std::move(arr));
    }
    json best_j = json::object();
    for (const auto& [qid, pid] : planted_best) best_j[qid] = pid;
    json phi_j = json::object();
    for (const auto& [qid, set] : planted_phi) {
        json arr = json::array();
        for (const auto& v : set) arr.push_back(v.to_json());
        phi_j[qid] = std::move(arr);
    }
    json model_cost_j = json::object();
    for (const auto& [key, ab] : model_cost)
        model_cost_j[key] = json{{"alpha", ab.first}, {"beta", ab.second}};
    return json{{"spec", spec.to_json()},
                {"registry", registry.to_json()},
                {"queries", std::move(queries_j)},
                {"clusters", std::move(clusters_j)},
                {"effects", std::move(effects_j)},
                {"planted_phi", std::move(phi_j)},
                {"planted_best", std::move(best_j)},
                {"stage_latency_ms", stage_latency_ms},
                {"stage_cost", stage_cost},
                {"model_ttft_ms", model_ttft_ms},
                {"model_cost", std::move(model_cost_j)}};
}

World World::from_json(const json& j) {
    World w;
    w.spec = WorldSpec::from_json(j.at("spec"));
    w.registry = Registry::from_json(j.at("registry"));
    w.paths = enumerate_paths(w.registry);
    for (const auto& p : w.paths) w.paths_by_id[p.canonical_id()] = p;
    for (const auto& qj : j.at("queries")) w.queries.push_back(TrainingQuery::from_json(qj));
    for (const auto& [qid, c] : j.at("clusters").items()) w.cluster_of[qid] = c.get<int>();
    for (const auto& arr : j.at("effects")) {
        std::vector<ComponentValue> set;
        for (const auto& cj : arr) set.push_back(ComponentValue::from_json(cj));
        w.effects.push_back(std::move(set));
    }
    for (const auto& [qid, arr] : j.at("planted_phi").items()) {
        std::vector<ComponentValue> set;
        for (const auto& cj : arr) set.push_back(ComponentValue::from_json(cj));
        w.planted_phi[qid] = std::move(set);
    }
    for (const auto& [qid, pid] : j.at("planted_best").items())
        w.planted_best[qid] = pid.get<std::string>();
    w.stage_latency_ms = j.at("stage_latency_ms").get<std::map<std::string, double>>();
    w.stage_cost = j.at("stage_cost").get<std::map<std::string, double>>();
    w.model_ttft_ms = j.at("model_ttft_ms").get<std::map<std::string, double>>();
    for (const auto& [key, ab] : j.at("model_cost").items())
        w.model_cost[key] = {ab.at("alpha").get<double>(), ab.at("beta").get<double>()};
    return w;
}

World make_world(const WorldSpec& spec) {
    if (spec.clusters < 1) throw Error("world needs at least one cluster");
    if (spec.noise_amplitude > 0.0 && spec.effect_size <= spec.noise_amplitude)
        throw Error("planted effect size must exceed the noise amplitude");

    World world;
    world.spec = spec;
    world.registry = world_registry(spec);
    world.paths = enumerate_paths(world.registry);
    for (const auto& p : world.paths) world.paths_by_id[p.canonical_id()] = p;

    // Distinct observed component values per stage, in enumeration order.
    std::map<StageKind, std::vector<ComponentValue>> stage_values;
    for (StageKind s : kStageOrder) {
        std::set<std::string> seen;
        for (const auto& p : world.paths) {
            ComponentValue v = ComponentValue::of(p, s);
            if (seen.insert(v.key()).second) stage_values[s].push_back(std::move(v));
        }
    }

    // Metric tables, deterministic per value.
    auto rng = seeded_rng(spec.seed, "world-tables");
    for (StageKind s : {StageKind::QueryProcessing, StageKind::Retrieval,
                        StageKind::ContextProcessing}) {
        for (const auto& v : stage_values[s]) {
            bool is_null = v.impl_id == "none";
            world.stage_latency_ms[v.key()] = is_null ? 1.0 : uniform_in(rng, 20.0, 120.0);
            world.stage_cost[v.key()] = is_null ? 0.0 : uniform_in(rng, 0.0005, 0.002);
        }
    }
    {
        int i = 0;
        for (const auto& v : stage_values[StageKind::ModelSelection]) {
            bool edge = (i % 2) == 0;
            world.model_ttft_ms[v.key()] =
                edge ? uniform_in(rng, 30.0, 80.0) : uniform_in(rng, 300.0, 800.0);
            world.model_cost[v.key()] = edge ? std::make_pair(1e-5, 2e-5)
                                             : std::make_pair(2.5e-4, 1e-3);
            ++i;
        }
    }

    // Planted effects: cluster c picks one value per effect stage via a
    // mixed-radix decomposition of c, so component sets stay distinct as long
    // as the effect stages jointly offer enough combinations.
    const std::array<StageKind, 4> effect_cycle = {
        StageKind::ModelSelection, StageKind::Retrieval, StageKind::QueryProcessing,
        StageKind::ContextProcessing};
    std::set<std::string> set_keys;
    for (int c = 0; c < spec.clusters; ++c) {
        std::vector<ComponentValue> set;
        std::size_t radix = static_cast<std::size_t>(c);
        for (int e = 0; e < spec.effects_per_cluster; ++e) {
            StageKind stage = effect_cycle[static_cast<std::size_t>(e) % effect_cycle.size()];
            const auto& values = stage_values[stage];
            set.push_back(values[radix % values.size()]);
            radix /= values.size();
        }
        std::vector<std::string> keys;
        for (const auto& v : set) keys.push_back(v.key());
        std::sort(keys.begin(), keys.end());
        std::string set_key;
        for (const auto& k : keys) set_key += k + ";";
        if (!set_keys.insert(set_key).second)
            throw Error("world spec yields duplicate component sets across clusters; "
                        "increase stage option counts");
        world.effects.push_back(std::move(set));
    }

    // Queries: distinctive per-cluster vocabulary so the fallback embedder
    // separates clusters.
    for (int c = 0; c < spec.clusters; ++c) {
        auto vrng = seeded_rng(spec.seed, "vocab-" + std::to_string(c));
        std::vector<std::string> vocab;
        for (int w = 0; w < 8; ++w) vocab.push_back(random_word(vrng));
        for (int qi = 0; qi < spec.queries_per_cluster; ++qi) {
            TrainingQuery q;
            q.id = "w" + std::to_string(c) + "-" + std::to_string(qi);
            auto qrng = seeded_rng(spec.seed, "query-" + q.id);
            std::string text;
            for (int w = 0; w < 6; ++w) {
                if (w) text += ' ';
                text += vocab[qrng() % vocab.size()];
            }
            q.text = text + " #" + std::to_string(qi);
            q.type = all_query_types()[static_cast<std::size_t>(qi) % kQueryTypeCount];
            q.reference_answer = "reference for cluster " + std::to_string(c);
            q.evaluation_guideline = "graded against the cluster " + std::to_string(c) +
                                     " surface";
            q.chunk_id = "world-cluster-" + std::to_string(c);
            world.queries.push_back(std::move(q));
            world.cluster_of[world.queries.back().id] = c;
        }
    }
    split_train_test(world.queries, spec.split_ratio, spec.seed);

    // Planted Φ: the cluster's effects, plus any single-valued stage, which
    // has no observable alternative and is therefore mandatory.
    std::vector<ComponentValue> mandatory;
    for (StageKind s : kStageOrder)
        if (stage_values[s].size() == 1) mandatory.push_back(stage_values[s][0]);
    for (const auto& q : world.queries) {
        auto set = world.effects.at(static_cast<std::size_t>(world.cluster_of.at(q.id)));
        for (const auto& m : mandatory) {
            bool present = false;
            for (const auto& v : set) present |= v.key() == m.key();
            if (!present) set.push_back(m);
        }
        world.planted_phi[q.id] = std::move(set);
    }

    // Planted per-query best paths under the 1% lexicographic rule.
    for (const auto& q : world.queries) {
        double best_acc = -1.0;
        for (const auto& p : world.paths)
            best_acc = std::max(best_acc, world.surface_accuracy(q.id, p));
        const PathSpec* best = nullptr;
        double best_metric = 0.0;
        std::string best_id;
        for (const auto& p : world.paths) {
            if (world.surface_accuracy(q.id, p) < best_acc - 0.01) continue;
            double metric = spec.lambda == 1 ? world.path_ttft_ms(p)
                                             : world.path_cost(q.text, p);
            std::string pid = p.canonical_id();
            if (!best || metric < best_metric || (metric == best_metric && pid < best_id)) {
                best = &p;
                best_metric = metric;
                best_id = pid;
            }
        }
        world.planted_best[q.id] = best_id;
    }
    return world;
}

// ---------------------------------------------------------------------------
// Executor and judge

StageOutput WorldExecutor::run(StageKind stage, const StageChoice& choice,
                               const std::string& query_text, const std::string& upstream) {
    ComponentValue value{stage, choice.impl_id, choice.config};
    std::string key = value.key();
    script_->count(std::string(stage_key(stage)) + "|" + hex64(fnv1a64(upstream)) + "|" + key);

    StageOutput out;
    if (stage == StageKind::ModelSelection) {
        auto cit = world_->model_cost.find(key);
        auto lit = world_->model_ttft_ms.find(key);
        if (cit == world_->model_cost.end() || lit == world_->model_ttft_ms.end())
            throw Error("world has no tables for model value '" + key + "'");
        out.latency_ms = lit->second;
        out.cost = cit->second.first *
                       static_cast<double>(count_tokens(query_text + " " + upstream)) +
                   cit->second.second * static_cast<double>(world_->spec.max_tokens);
        out.text = "wkey(" + hex64(fnv1a64(query_text)) + "|" + upstream +
                   "\xc2\xbb" + key + ")";
    } else {
        auto lit = world_->stage_latency_ms.find(key);
        auto cit = world_->stage_cost.find(key);
        if (lit == world_->stage_latency_ms.end() || cit == world_->stage_cost.end())
            throw Error("world has no tables for stage value '" + key + "'");
        out.latency_ms = lit->second;
        out.cost = cit->second;
        out.text = upstream.empty() ? key : upstream + "\xc2\xbb" + key;
    }
    return out;
}

WorldJudge::WorldJudge(std::shared_ptr<const World> world) : world_(std::move(world)) {
    for (const auto& q : world_->queries)
        query_by_digest_[hex64(fnv1a64(q.text))] = q.id;
}

double WorldJudge::score(const std::string& response, const std::string& reference_answer,
                         const std::string& guideline) {
    (void)reference_answer;
    (void)guideline;
    auto open = response.find("wkey(");
    auto close = response.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close <= open + 5)
        throw Error("response does not carry a world key");
    std::string payload = response.substr(open + 5, close - open - 5);
    auto bar = payload.find('|');
    if (bar == std::string::npos) throw Error("malformed world key");
    std::string qdigest = payload.substr(0, bar);
    std::string chain = payload.substr(bar + 1);

    auto qit = query_by_digest_.find(qdigest);
    if (qit == query_by_digest_.end()) throw Error("world key names an unknown query");

    // The chain is the canonical id with "»" separators.
    std::string path_id;
    std::size_t pos = 0;
    const std::string sep = "\xc2\xbb";
    while (pos < chain.size()) {
        auto next = chain.find(sep, pos);
        if (next == std::string::npos) next = chain.size();
        if (!path_id.empty()) path_id += '|';
        path_id += chain.substr(pos, next - pos);
        pos = next + sep.size();
    }
    auto pit = world_->paths_by_id.find(path_id);
    if (pit == world_->paths_by_id.end())
        throw Error("world key names an unknown path '" + path_id + "'");
    return world_->surface_accuracy(qit->second, pit->second);
}

}  // namespace eco
