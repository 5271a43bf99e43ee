#include "eco/emulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <set>
#include <thread>

#include "eco/jsonl.hpp"
#include "eco/tokenize.hpp"

namespace eco {

json EvalRecord::to_json() const {
    json j{{"build_id", build_id},   {"query_id", query_id}, {"path_id", path_id},
           {"accuracy", accuracy},   {"ttft_ms", ttft_ms},   {"cost", cost},
           {"cache_hit_stages", cache_hit_stages},           {"created_at", created_at}};
    if (!error.empty()) j["error"] = error;
    return j;
}

EvalRecord EvalRecord::from_json(const json& j) {
    EvalRecord r;
    r.build_id = j.value("build_id", "");
    r.query_id = j.at("query_id").get<std::string>();
    r.path_id = j.at("path_id").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.ttft_ms = j.at("ttft_ms").get<double>();
    r.cost = j.at("cost").get<double>();
    r.cache_hit_stages = j.value("cache_hit_stages", std::vector<std::string>{});
    r.created_at = j.value("created_at", "");
    r.error = j.value("error", "");
    return r;
}

std::size_t BudgetPlan::total() const {
    std::size_t n = representatives.size() * path_count;
    for (const auto& [qid, paths] : planned) n += paths.size();
    return n;
}

json BudgetPlan::to_json() const {
    json planned_j = json::object();
    for (const auto& [qid, paths] : planned) planned_j[qid] = paths;
    return json{{"representatives", representatives},
                {"planned", planned_j},
                {"budget_factor", budget_factor},
                {"path_count", path_count}};
}

BudgetPlan BudgetPlan::from_json(const json& j) {
    BudgetPlan p;
    p.representatives = j.at("representatives").get<std::vector<std::string>>();
    for (const auto& [qid, paths] : j.at("planned").items())
        p.planned[qid] = paths.get<std::vector<std::string>>();
    p.budget_factor = j.value("budget_factor", 0.0);
    p.path_count = j.value("path_count", 0);
    return p;
}

std::optional<PrefixCache::Entry> PrefixCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        ++misses_;
        return std::nullopt;
    }
    ++hits_;
    return it->second;
}

void PrefixCache::put(const std::string& key, Entry entry) {
    std::lock_guard lock(mu_);
    entries_.try_emplace(key, std::move(entry));  // first writer wins
}

// ---------------------------------------------------------------------------
// Judges

double TokenF1Judge::score(const std::string& response, const std::string& reference_answer,
                           const std::string& guideline) {
    (void)guideline;
    auto rtok = tokenize(response);
    auto ftok = tokenize(reference_answer);
    std::set<std::string> rset(rtok.begin(), rtok.end());
    std::set<std::string> fset(ftok.begin(), ftok.end());
    if (rset.empty() && fset.empty()) return 1.0;
    if (rset.empty() || fset.empty()) return 0.0;
    std::size_t common = 0;
    for (const auto& t : rset) common += fset.count(t);
    if (common == 0) return 0.0;
    double precision = static_cast<double>(common) / static_cast<double>(rset.size());
    double recall = static_cast<double>(common) / static_cast<double>(fset.size());
    return 2.0 * precision * recall / (precision + recall);
}

namespace {

std::optional<double> parse_score(const std::string& text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        try {
            std::size_t used = 0;
            double v = std::stod(text.substr(i), &used);
            if (v >= 0.0 && v <= 1.0) return v;
            if (v > 1.0 && v <= 100.0) return v / 100.0;  // tolerate percentage replies
        } catch (const std::exception&) {
        }
        while (i < text.size() &&
               (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.'))
            ++i;
    }
    return std::nullopt;
}

}  // namespace

double LlmJudge::score(const std::string& response, const std::string& reference_answer,
                       const std::string& guideline) {
    std::string prompt =
        "You are grading an assistant response.\n\nEvaluation guideline:\n" + guideline +
        "\n\nReference answer:\n" + reference_answer + "\n\nResponse to grade:\n" + response +
        "\n\nScore the response between 0 and 1 against the guideline and reference. "
        "Reply with only the number.";
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string out = client_->complete(prompt, json::object()).text;
        if (auto v = parse_score(out)) return *v;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Stratified sampling

namespace {

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

// Largest-remainder allocation of `n` slots proportional to group sizes.
std::vector<std::size_t> largest_remainder(const std::vector<std::size_t>& sizes,
                                           std::size_t n) {
    std::size_t total = 0;
    for (std::size_t s : sizes) total += s;
    std::vector<std::size_t> alloc(sizes.size(), 0);
    if (total == 0) return alloc;
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        double target = static_cast<double>(n) * static_cast<double>(sizes[i]) /
                        static_cast<double>(total);
        alloc[i] = static_cast<std::size_t>(std::floor(target));
        assigned += alloc[i];
        remainders.push_back({target - std::floor(target), i});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n && k < remainders.size(); ++k) {
        std::size_t i = remainders[k].second;
        if (alloc[i] < sizes[i]) {
            ++alloc[i];
            ++assigned;
        }
    }
    return alloc;
}

// Seeded k-means (25 iterations), returning the index nearest each centroid.
std::vector<std::size_t> kmeans_pick(const std::vector<std::vector<double>>& points,
                                     std::size_t k, std::mt19937_64& rng) {
    std::size_t n = points.size();
    if (k >= n) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<double>> centroids;
    for (std::size_t i = 0; i < k; ++i) centroids.push_back(points[order[i]]);

    std::vector<std::size_t> assign(n, 0);
    for (int iter = 0; iter < 25; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = sq_distance(points[i], centroids[0]);
            std::size_t best_k = 0;
            for (std::size_t c = 1; c < k; ++c) {
                double d = sq_distance(points[i], centroids[c]);
                if (d < best) {
                    best = d;
                    best_k = c;
                }
            }
            assign[i] = best_k;
        }
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> mean(points[0].size(), 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += points[i][d];
                ++count;
            }
            if (count > 0) {
                for (double& x : mean) x /= static_cast<double>(count);
                centroids[c] = std::move(mean);
            }
        }
    }

    std::vector<std::size_t> picked;
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            double d = sq_distance(points[i], centroids[c]);
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        if (best_i < n) {
            taken[best_i] = true;
            picked.push_back(best_i);
        }
    }
    return picked;
}

}  // namespace

std::vector<std::string> stratified_sample(const std::vector<TrainingQuery>& queries,
                                           double budget_factor, std::uint64_t seed,
                                           Embedder& embedder) {
    if (!(budget_factor > 0.0)) throw Error("budget factor must be positive");
    std::size_t n_total = queries.size();
    if (n_total == 0) return {};
    std::size_t n = static_cast<std::size_t>(std::max<long long>(
        0, round_half_up(budget_factor * std::sqrt(static_cast<double>(n_total)))));
    n = std::min(n, n_total);
    if (n == n_total) {
        std::vector<std::string> all;
        for (const auto& q : queries) all.push_back(q.id);
        return all;
    }
    if (n == 0) return {};

    std::vector<QueryType> present_types;
    std::map<QueryType, std::vector<std::size_t>> by_type;
    for (QueryType t : all_query_types()) by_type[t] = {};
    for (std::size_t i = 0; i < queries.size(); ++i) by_type[queries[i].type].push_back(i);
    std::vector<std::size_t> sizes;
    for (QueryType t : all_query_types()) {
        if (by_type[t].empty()) continue;
        present_types.push_back(t);
        sizes.push_back(by_type[t].size());
    }
    auto alloc = largest_remainder(sizes, n);

    std::vector<std::string> picked;
    for (std::size_t ti = 0; ti < present_types.size(); ++ti) {
        if (alloc[ti] == 0) continue;
        const auto& idxs = by_type[present_types[ti]];
        std::vector<std::vector<double>> points;
        points.reserve(idxs.size());
        for (std::size_t i : idxs) points.push_back(embedder.embed(queries[i].text));
        auto rng = seeded_rng(seed, "kmeans:" + std::string(query_type_name(present_types[ti])));
        for (std::size_t local : kmeans_pick(points, alloc[ti], rng))
            picked.push_back(queries[idxs[local]].id);
    }
    return picked;
}

// ---------------------------------------------------------------------------
// Ranking and planning

namespace {

struct PathAgg {
    double acc_sum = 0.0;
    double ttft_sum = 0.0;
    std::size_t n = 0;
};

std::vector<std::string> sort_ranked(std::map<std::string, PathAgg>& agg) {
    std::vector<std::string> ids;
    ids.reserve(agg.size());
    for (const auto& [id, a] : agg) ids.push_back(id);
    std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
        const auto& pa = agg[a];
        const auto& pb = agg[b];
        double acc_a = pa.acc_sum / static_cast<double>(pa.n);
        double acc_b = pb.acc_sum / static_cast<double>(pb.n);
        if (acc_a != acc_b) return acc_a > acc_b;
        double ttft_a = pa.ttft_sum / static_cast<double>(pa.n);
        double ttft_b = pb.ttft_sum / static_cast<double>(pb.n);
        if (ttft_a != ttft_b) return ttft_a < ttft_b;
        return a < b;
    });
    return ids;
}

}  // namespace

std::map<QueryType, std::vector<std::string>> rank_paths_by_type(
    const std::vector<EvalRecord>& records,
    const std::map<std::string, QueryType>& query_types) {
    std::map<QueryType, std::map<std::string, PathAgg>> per_type;
    for (const auto& r : records) {
        auto it = query_types.find(r.query_id);
        if (it == query_types.end()) continue;
        auto& agg = per_type[it->second][r.path_id];
        agg.acc_sum += r.accuracy;
        agg.ttft_sum += r.ttft_ms;
        ++agg.n;
    }
    std::map<QueryType, std::vector<std::string>> out;
    for (auto& [type, agg] : per_type) out[type] = sort_ranked(agg);
    return out;
}

std::vector<std::string> rank_paths_global(const std::vector<EvalRecord>& records) {
    std::map<std::string, PathAgg> agg;
    for (const auto& r : records) {
        auto& a = agg[r.path_id];
        a.acc_sum += r.accuracy;
        a.ttft_sum += r.ttft_ms;
        ++a.n;
    }
    return sort_ranked(agg);
}

BudgetPlan plan_evaluations(const std::vector<TrainingQuery>& queries,
                            const std::vector<std::string>& representatives,
                            const std::vector<PathSpec>& paths, double budget_factor,
                            const std::map<QueryType, std::vector<std::string>>& rankings,
                            const std::vector<std::string>& global_ranking,
                            std::uint64_t seed, const WarnSink& warn) {
    BudgetPlan plan;
    plan.budget_factor = budget_factor;
    plan.path_count = paths.size();
    plan.representatives = representatives;

    std::vector<std::string> all_ids;
    all_ids.reserve(paths.size());
    for (const auto& p : paths) all_ids.push_back(p.canonical_id());

    std::size_t k = static_cast<std::size_t>(std::max(
        1.0, std::floor(budget_factor * std::sqrt(static_cast<double>(paths.size())))));

    std::set<std::string> rep_set(representatives.begin(), representatives.end());
    std::set<QueryType> warned;
    for (const auto& q : queries) {
        if (rep_set.count(q.id)) continue;
        if (k >= paths.size()) {
            plan.planned[q.id] = all_ids;
            continue;
        }
        std::size_t top_n = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(k)));
        top_n = std::min(top_n, k);
        std::size_t rand_n = k - top_n;

        const std::vector<std::string>* ranking = nullptr;
        auto it = rankings.find(q.type);
        if (it != rankings.end() && !it->second.empty()) {
            ranking = &it->second;
        } else {
            ranking = &global_ranking;
            if (warn && !warned.count(q.type)) {
                warned.insert(q.type);
                warn("no ranking for type '" + std::string(query_type_name(q.type)) +
                     "'; falling back to global ranking");
            }
        }

        std::vector<std::string> chosen;
        std::set<std::string> chosen_set;
        for (const auto& pid : *ranking) {
            if (chosen.size() >= top_n) break;
            if (chosen_set.insert(pid).second) chosen.push_back(pid);
        }
        // Rankings only cover observed paths; pad from enumeration order.
        for (const auto& pid : all_ids) {
            if (chosen.size() >= top_n) break;
            if (chosen_set.insert(pid).second) chosen.push_back(pid);
        }

        if (rand_n > 0) {
            std::vector<std::string> pool;
            for (const auto& pid : all_ids)
                if (!chosen_set.count(pid)) pool.push_back(pid);
            auto rng = seeded_rng(seed, "plan:" + q.id);
            std::shuffle(pool.begin(), pool.end(), rng);
            for (std::size_t i = 0; i < rand_n && i < pool.size(); ++i) {
                chosen.push_back(pool[i]);
                chosen_set.insert(pool[i]);
            }
        }
        plan.planned[q.id] = std::move(chosen);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Path execution

namespace {

std::string cache_key(const std::string& query_id, const PathSpec& path, StageKind upto) {
    return query_id + '\x1f' + path_prefix_id(path, upto);
}

constexpr std::array<StageKind, 3> kNonFinalStages = {
    StageKind::QueryProcessing, StageKind::Retrieval, StageKind::ContextProcessing};

}  // namespace

EvalRecord execute_path(const TrainingQuery& query, const PathSpec& path,
                        StageExecutor& executor, PrefixCache* cache, Judge* judge,
                        const ExecuteOptions& options, std::string* response_out) {
    EvalRecord record;
    record.build_id = options.build_id;
    record.query_id = query.id;
    record.path_id = path.canonical_id();
    record.created_at = iso8601_now();

    std::string context;
    double executed_latency = 0.0;
    double cached_latency = 0.0;
    double cost = 0.0;

    // Resume from the deepest cached prefix.
    int resume_after = -1;
    if (cache) {
        for (int s = static_cast<int>(kNonFinalStages.size()) - 1; s >= 0; --s) {
            auto entry = cache->get(cache_key(query.id, path, kNonFinalStages[s]));
            if (entry) {
                context = entry->context;
                cached_latency = entry->latency_ms;
                cost = entry->cost;
                resume_after = s;
                for (int h = 0; h <= s; ++h)
                    record.cache_hit_stages.push_back(
                        std::string(stage_key(kNonFinalStages[h])));
                break;
            }
        }
    }

    try {
        for (std::size_t s = static_cast<std::size_t>(resume_after + 1);
             s < kNonFinalStages.size(); ++s) {
            StageKind stage = kNonFinalStages[s];
            StageOutput out = executor.run(stage, path.at(stage), query.text, context);
            context = out.text;
            executed_latency += out.latency_ms;
            cost += out.cost;
            if (cache)
                cache->put(cache_key(query.id, path, stage),
                           PrefixCache::Entry{context, cached_latency + executed_latency, cost});
        }
        StageOutput final_out = executor.run(StageKind::ModelSelection,
                                             path.at(StageKind::ModelSelection), query.text,
                                             context);
        if (response_out) *response_out = final_out.text;
        cost += final_out.cost;
        double ttft = executed_latency + final_out.latency_ms;
        if (options.cold_latency) ttft += cached_latency;
        record.ttft_ms = std::max(ttft, 1e-3);
        record.cost = cost;
        record.accuracy = judge ? judge->score(final_out.text, query.reference_answer,
                                               query.evaluation_guideline)
                                : 0.0;
        record.error.clear();
        if (judge) record.accuracy = std::clamp(record.accuracy, 0.0, 1.0);
    } catch (const std::exception& e) {
        record.accuracy = 0.0;
        record.cost = cost;
        double ttft = executed_latency + (options.cold_latency ? cached_latency : 0.0);
        record.ttft_ms = std::max(ttft, 1e-3);
        record.error = e.what();
    }
    return record;
}

// ---------------------------------------------------------------------------
// Exploration

std::vector<EvalRecord> load_records(const std::filesystem::path& records_file) {
    std::vector<EvalRecord> records;
    for_each_jsonl(records_file,
                   [&](const json& j) { records.push_back(EvalRecord::from_json(j)); });
    return records;
}

namespace {

struct QueryTasks {
    const TrainingQuery* query;
    std::vector<const PathSpec*> paths;
};

// Executes tasks on a worker pool. The unit of work is one query (cache keys
// are per-query, so a query's paths run sequentially and deterministically
// while different queries run in parallel). Records are appended to the store
// in task order as soon as a contiguous prefix completes, so interrupted runs
// leave a consistent, resumable file.
std::vector<EvalRecord> execute_batch(const std::vector<QueryTasks>& groups,
                                      StageExecutor& executor, Judge& judge,
                                      PrefixCache* cache, const ExecuteOptions& exec_opts,
                                      int workers, const std::filesystem::path& records_file) {
    std::size_t total = 0;
    std::vector<std::size_t> offsets;
    for (const auto& g : groups) {
        offsets.push_back(total);
        total += g.paths.size();
    }

    std::vector<std::unique_ptr<EvalRecord>> slots(total);
    std::vector<bool> done(total, false);
    std::atomic<std::size_t> next_group{0};
    std::mutex mu;
    std::condition_variable cv;

    auto work = [&]() {
        while (true) {
            std::size_t g = next_group.fetch_add(1);
            if (g >= groups.size()) break;
            const auto& group = groups[g];
            for (std::size_t i = 0; i < group.paths.size(); ++i) {
                EvalRecord rec = execute_path(*group.query, *group.paths[i], executor, cache,
                                              &judge, exec_opts);
                {
                    std::lock_guard lock(mu);
                    slots[offsets[g] + i] = std::make_unique<EvalRecord>(std::move(rec));
                    done[offsets[g] + i] = true;
                }
                cv.notify_one();
            }
        }
    };

    int n_workers = workers > 0 ? workers
                                : std::max(1u, std::thread::hardware_concurrency());
    n_workers = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(n_workers), std::max<std::size_t>(groups.size(), 1)));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);

    std::vector<EvalRecord> out;
    out.reserve(total);
    {
        std::ofstream file(records_file, std::ios::app);
        if (!file) throw Error("cannot open '" + records_file.string() + "' for append");
        for (std::size_t frontier = 0; frontier < total; ++frontier) {
            std::unique_lock lock(mu);
            cv.wait(lock, [&] { return done[frontier]; });
            file << slots[frontier]->to_json().dump() << '\n';
            file.flush();
            out.push_back(std::move(*slots[frontier]));
            slots[frontier].reset();
        }
    }
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace

ExplorationSummary run_exploration(const std::string& build_id,
                                   const std::vector<TrainingQuery>& queries,
                                   const Registry& registry, StageExecutor& executor,
                                   Judge& judge, Embedder& embedder,
                                   const std::filesystem::path& out_dir,
                                   const ExplorationOptions& options, const WarnSink& warn) {
    std::filesystem::create_directories(out_dir);
    auto records_file = out_dir / "records.jsonl";

    std::vector<PathSpec> paths = enumerate_paths(registry);
    std::map<std::string, const PathSpec*> path_by_id;
    for (const auto& p : paths) path_by_id[p.canonical_id()] = &p;
    std::map<std::string, const TrainingQuery*> query_by_id;
    for (const auto& q : queries) query_by_id[q.id] = &q;

    std::vector<EvalRecord> existing = load_records(records_file);
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& r : existing) seen.insert({r.query_id, r.path_id});

    ExplorationSummary summary;
    PrefixCache cache;
    PrefixCache* cache_ptr = options.use_cache ? &cache : nullptr;
    ExecuteOptions exec_opts{options.cold_latency, build_id};

    // Phase 1: representatives get every path.
    std::vector<std::string> reps;
    if (options.exhaustive) {
        for (const auto& q : queries) reps.push_back(q.id);
    } else {
        reps = stratified_sample(queries, options.budget_factor, options.seed, embedder);
    }

    std::vector<QueryTasks> tasks;
    for (const auto& qid : reps) {
        QueryTasks group{query_by_id.at(qid), {}};
        for (const auto& p : paths) {
            if (seen.count({qid, p.canonical_id()})) {
                ++summary.skipped;
                continue;
            }
            group.paths.push_back(&p);
        }
        if (!group.paths.empty()) tasks.push_back(std::move(group));
    }
    auto phase1 = execute_batch(tasks, executor, judge, cache_ptr, exec_opts, options.workers,
                                records_file);
    summary.executed += phase1.size();
    for (const auto& r : phase1) seen.insert({r.query_id, r.path_id});

    BudgetPlan plan;
    plan.budget_factor = options.exhaustive ? -1.0 : options.budget_factor;
    plan.path_count = paths.size();
    plan.representatives = reps;

    if (!options.exhaustive) {
        // Rankings come from the representative phase (plus any resumed records).
        std::set<std::string> rep_set(reps.begin(), reps.end());
        std::vector<EvalRecord> rep_records;
        for (const auto& r : existing)
            if (rep_set.count(r.query_id)) rep_records.push_back(r);
        for (const auto& r : phase1) rep_records.push_back(r);

        std::map<std::string, QueryType> query_types;
        for (const auto& q : queries) query_types[q.id] = q.type;
        auto rankings = rank_paths_by_type(rep_records, query_types);
        auto global_ranking = rank_paths_global(rep_records);

        plan = plan_evaluations(queries, reps, paths, options.budget_factor, rankings,
                                global_ranking, options.seed, warn);

        std::vector<QueryTasks> tasks2;
        for (const auto& q : queries) {
            auto it = plan.planned.find(q.id);
            if (it == plan.planned.end()) continue;
            QueryTasks group{&q, {}};
            for (const auto& pid : it->second) {
                if (seen.count({q.id, pid})) {
                    ++summary.skipped;
                    continue;
                }
                group.paths.push_back(path_by_id.at(pid));
            }
            if (!group.paths.empty()) tasks2.push_back(std::move(group));
        }
        auto phase2 = execute_batch(tasks2, executor, judge, cache_ptr, exec_opts,
                                    options.workers, records_file);
        summary.executed += phase2.size();
    }

    write_json(out_dir / "plan.json", plan.to_json());
    summary.planned_total = plan.total();
    summary.cache_hits = cache.hits();
    summary.cache_misses = cache.misses();
    return summary;
}

}  // namespace eco
