#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "eco/common.hpp"

namespace eco {

inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const nlohmann::json&)>& fn) {
    std::ifstream in(path);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (!j.is_discarded()) fn(j);
    }
}

inline void append_jsonl(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error("cannot open '" + path.string() + "' for append");
    out << j.dump() << '\n';
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for write");
    out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return nlohmann::json::parse(in);
}

}  // namespace eco
