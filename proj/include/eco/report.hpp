#pragma once

#include <string>
#include <vector>

#include "eco/emulator.hpp"

namespace eco {

struct ReportRow {
    std::string path_id;
    std::size_t samples = 0;
    double accuracy = 0.0;
    double ttft_ms = 0.0;
    double cost_per_1k = 0.0;  // mean cost scaled to currency per 1k queries
};

struct ProfileRow {
    std::string profile;
    double accuracy = 0.0;
    double ttft_ms = 0.0;
    double cost_per_1k = 0.0;
    std::size_t queries = 0;
};

struct Report {
    std::vector<ReportRow> per_path;     // sorted by accuracy desc
    std::vector<ProfileRow> per_profile; // latency_first and cost_first
    std::vector<ReportRow> pareto;       // non-dominated per-path rows

    json to_json() const;
    std::string to_csv() const;
    std::string to_table() const;
};

Report build_report(const std::vector<EvalRecord>& records);

// True when `a` dominates `b`: accuracy no worse, ttft and cost no higher,
// at least one strictly better.
bool dominates(const ReportRow& a, const ReportRow& b);

}  // namespace eco
