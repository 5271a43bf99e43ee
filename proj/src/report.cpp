#include "eco/report.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "eco/cca.hpp"

namespace eco {

bool dominates(const ReportRow& a, const ReportRow& b) {
    if (a.accuracy < b.accuracy || a.ttft_ms > b.ttft_ms || a.cost_per_1k > b.cost_per_1k)
        return false;
    return a.accuracy > b.accuracy || a.ttft_ms < b.ttft_ms || a.cost_per_1k < b.cost_per_1k;
}

Report build_report(const std::vector<EvalRecord>& records) {
    Report report;

    std::map<std::string, std::vector<const EvalRecord*>> by_path;
    for (const auto& r : records) by_path[r.path_id].push_back(&r);
    for (const auto& [pid, recs] : by_path) {
        ReportRow row;
        row.path_id = pid;
        row.samples = recs.size();
        for (const auto* r : recs) {
            row.accuracy += r->accuracy;
            row.ttft_ms += r->ttft_ms;
            row.cost_per_1k += r->cost;
        }
        double n = static_cast<double>(recs.size());
        row.accuracy /= n;
        row.ttft_ms /= n;
        row.cost_per_1k = row.cost_per_1k / n * 1000.0;
        report.per_path.push_back(std::move(row));
    }
    std::stable_sort(report.per_path.begin(), report.per_path.end(),
                     [](const ReportRow& a, const ReportRow& b) {
                         if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
                         return a.path_id < b.path_id;
                     });

    // Per-profile: lexicographic best record per query, averaged.
    std::map<std::string, std::vector<EvalRecord>> by_query;
    for (const auto& r : records) by_query[r.query_id].push_back(r);
    for (int lambda : {1, 0}) {
        ProfileRow row;
        row.profile = lambda == 1 ? "latency_first" : "cost_first";
        for (const auto& [qid, recs] : by_query) {
            const EvalRecord& best = find_best_record(recs, lambda);
            row.accuracy += best.accuracy;
            row.ttft_ms += best.ttft_ms;
            row.cost_per_1k += best.cost;
            ++row.queries;
        }
        if (row.queries > 0) {
            double n = static_cast<double>(row.queries);
            row.accuracy /= n;
            row.ttft_ms /= n;
            row.cost_per_1k = row.cost_per_1k / n * 1000.0;
        }
        report.per_profile.push_back(std::move(row));
    }

    for (const auto& row : report.per_path) {
        bool dominated = false;
        for (const auto& other : report.per_path) {
            if (&other == &row) continue;
            if (dominates(other, row)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) report.pareto.push_back(row);
    }
    return report;
}

namespace {

json row_json(const ReportRow& r) {
    return json{{"path", r.path_id},
                {"samples", r.samples},
                {"accuracy", r.accuracy},
                {"ttft_ms", r.ttft_ms},
                {"cost_per_1k", r.cost_per_1k}};
}

}  // namespace

json Report::to_json() const {
    json paths = json::array();
    for (const auto& r : per_path) paths.push_back(row_json(r));
    json profiles = json::array();
    for (const auto& p : per_profile)
        profiles.push_back(json{{"profile", p.profile},
                                {"accuracy", p.accuracy},
                                {"ttft_ms", p.ttft_ms},
                                {"cost_per_1k", p.cost_per_1k},
                                {"queries", p.queries}});
    json pareto_j = json::array();
    for (const auto& r : pareto) pareto_j.push_back(row_json(r));
    return json{{"per_path", paths}, {"per_profile", profiles}, {"pareto", pareto_j}};
}

std::string Report::to_csv() const {
    std::ostringstream out;
    out << "section,path_or_profile,samples,accuracy,ttft_ms,cost_per_1k\n";
    for (const auto& r : per_path)
        out << "per_path," << r.path_id << ',' << r.samples << ',' << r.accuracy << ','
            << r.ttft_ms << ',' << r.cost_per_1k << '\n';
    for (const auto& p : per_profile)
        out << "per_profile," << p.profile << ',' << p.queries << ',' << p.accuracy << ','
            << p.ttft_ms << ',' << p.cost_per_1k << '\n';
    for (const auto& r : pareto)
        out << "pareto," << r.path_id << ',' << r.samples << ',' << r.accuracy << ','
            << r.ttft_ms << ',' << r.cost_per_1k << '\n';
    return out.str();
}

std::string Report::to_table() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "== per-path ==\n";
    out << std::left << std::setw(60) << "path" << std::right << std::setw(8) << "n"
        << std::setw(10) << "acc" << std::setw(12) << "ttft_ms" << std::setw(14)
        << "$/1k" << '\n';
    for (const auto& r : per_path)
        out << std::left << std::setw(60) << r.path_id << std::right << std::setw(8)
            << r.samples << std::setw(10) << r.accuracy << std::setw(12) << r.ttft_ms
            << std::setw(14) << r.cost_per_1k << '\n';
    out << "\n== per-profile ==\n";
    for (const auto& p : per_profile)
        out << p.profile << ": accuracy " << p.accuracy << ", ttft " << p.ttft_ms
            << " ms, $/1k " << p.cost_per_1k << " over " << p.queries << " queries\n";
    out << "\n== pareto front ==\n";
    for (const auto& r : pareto)
        out << r.path_id << "  (acc " << r.accuracy << ", ttft " << r.ttft_ms << ", $/1k "
            << r.cost_per_1k << ")\n";
    return out.str();
}

}  // namespace eco
