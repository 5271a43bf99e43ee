#include "eco/path_space.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>

namespace eco {

std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string_view stage_key(StageKind s) {
    switch (s) {
        case StageKind::QueryProcessing: return "q";
        case StageKind::Retrieval: return "r";
        case StageKind::ContextProcessing: return "c";
        case StageKind::ModelSelection: return "m";
    }
    throw Error("invalid stage kind");
}

StageKind stage_from_key(std::string_view key) {
    if (key == "q") return StageKind::QueryProcessing;
    if (key == "r") return StageKind::Retrieval;
    if (key == "c") return StageKind::ContextProcessing;
    if (key == "m") return StageKind::ModelSelection;
    throw Error("unknown stage key '" + std::string(key) + "'");
}

void ParamSpec::validate() const {
    switch (kind) {
        case ParamKind::Static:
            if (values.size() != 1)
                throw Error("static param '" + name + "' must have exactly one value");
            break;
        case ParamKind::Sweep:
            if (values.empty())
                throw Error("sweep param '" + name + "' must have at least one value");
            break;
        case ParamKind::Dynamic:
            if (resolver.empty())
                throw Error("dynamic param '" + name + "' must name a resolver");
            break;
    }
    // Duplicate values would enumerate duplicate paths.
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::size_t j = i + 1; j < values.size(); ++j)
            if (values[i] == values[j])
                throw Error("param '" + name + "' lists duplicate value " +
                            scalar_to_string(values[i]));
}

std::string scalar_to_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof(buf), v.get<double>());
        return std::string(buf, res.ptr);
    }
    throw Error("param values must be scalars, got: " + v.dump());
}

std::string StageChoice::segment() const {
    std::string out = impl_id;
    out += '{';
    bool first = true;
    for (const auto& [name, value] : config) {
        if (!first) out += ',';
        first = false;
        out += name;
        out += '=';
        out += scalar_to_string(value);
    }
    out += '}';
    return out;
}

std::string PathSpec::canonical_id() const {
    std::string out;
    for (StageKind s : kStageOrder) {
        if (!out.empty()) out += '|';
        out += stage_key(s);
        out += '=';
        out += at(s).segment();
    }
    return out;
}

std::string path_prefix_id(const PathSpec& path, StageKind upto) {
    std::string out;
    for (StageKind s : kStageOrder) {
        if (!out.empty()) out += '|';
        out += stage_key(s);
        out += '=';
        out += path.at(s).segment();
        if (s == upto) break;
    }
    return out;
}

namespace {

ParamKind param_kind_from(const std::string& s) {
    if (s == "static") return ParamKind::Static;
    if (s == "sweep") return ParamKind::Sweep;
    if (s == "dynamic") return ParamKind::Dynamic;
    throw Error("unknown param kind '" + s + "'");
}

const char* param_kind_name(ParamKind k) {
    switch (k) {
        case ParamKind::Static: return "static";
        case ParamKind::Sweep: return "sweep";
        case ParamKind::Dynamic: return "dynamic";
    }
    return "static";
}

// Grid size of one implementation: cross product of its param value lists.
std::uint64_t grid_size(const ImplementationSpec& impl) {
    std::uint64_t n = 1;
    for (const auto& p : impl.params) {
        if (p.kind == ParamKind::Dynamic)
            throw Error("unresolved dynamic param '" + p.name + "' on implementation '" +
                        impl.id + "'");
        n *= static_cast<std::uint64_t>(p.values.size());
    }
    return n;
}

}  // namespace

Registry Registry::from_json(const json& doc) {
    Registry reg;
    if (!doc.is_object() || !doc.contains("stages") || !doc["stages"].is_object())
        throw Error("registry document must contain a 'stages' object");
    for (StageKind s : kStageOrder) {
        std::string key(stage_key(s));
        if (!doc["stages"].contains(key)) continue;
        const json& impls = doc["stages"][key];
        if (!impls.is_array()) throw Error("stage '" + key + "' must be an array");
        bool saw_null = false;
        for (const json& ij : impls) {
            ImplementationSpec impl;
            impl.stage = s;
            impl.id = ij.at("id").get<std::string>();
            impl.is_null = ij.value("null", false);
            if (impl.is_null) {
                if (saw_null) throw Error("stage '" + key + "' declares more than one null implementation");
                saw_null = true;
            }
            for (const json& pj : ij.value("params", json::array())) {
                ParamSpec p;
                p.name = pj.at("name").get<std::string>();
                p.kind = param_kind_from(pj.value("kind", "static"));
                if (p.kind == ParamKind::Dynamic) {
                    p.resolver = pj.value("resolver", "");
                } else {
                    const json& vals = pj.at("values");
                    if (vals.is_array())
                        p.values.assign(vals.begin(), vals.end());
                    else
                        p.values.push_back(vals);
                }
                p.validate();
                impl.params.push_back(std::move(p));
            }
            if (impl.is_null && !impl.params.empty())
                throw Error("null implementation '" + impl.id + "' may not declare params");
            for (const auto& other : reg.at(s))
                if (other.id == impl.id)
                    throw Error("duplicate implementation id '" + impl.id + "' in stage '" + key + "'");
            reg.at(s).push_back(std::move(impl));
        }
    }
    for (StageKind s : kStageOrder) {
        if (reg.at(s).empty())
            throw Error("stage '" + std::string(stage_key(s)) + "' has no implementations");
    }
    reg.global = doc.value("global", json::object());
    return reg;
}

json Registry::to_json() const {
    json stages_j = json::object();
    for (StageKind s : kStageOrder) {
        json arr = json::array();
        for (const auto& impl : at(s)) {
            json ij;
            ij["id"] = impl.id;
            if (impl.is_null) ij["null"] = true;
            json params = json::array();
            for (const auto& p : impl.params) {
                json pj;
                pj["name"] = p.name;
                pj["kind"] = param_kind_name(p.kind);
                if (p.kind == ParamKind::Dynamic) {
                    pj["resolver"] = p.resolver;
                } else {
                    pj["values"] = json::array();
                    for (const auto& v : p.values) pj["values"].push_back(v);
                }
                params.push_back(std::move(pj));
            }
            if (!params.empty()) ij["params"] = std::move(params);
            arr.push_back(std::move(ij));
        }
        stages_j[std::string(stage_key(s))] = std::move(arr);
    }
    json doc;
    doc["stages"] = std::move(stages_j);
    doc["global"] = global;
    return doc;
}

std::string Registry::build_id() const {
    // nlohmann::json keeps object keys sorted, so dump() is canonical.
    return hex64(fnv1a64(to_json().dump()));
}

std::uint64_t count_paths(const Registry& registry) {
    std::uint64_t total = 1;
    for (StageKind s : kStageOrder) {
        std::uint64_t stage_sum = 0;
        for (const auto& impl : registry.at(s)) stage_sum += grid_size(impl);
        total *= stage_sum;
    }
    return total;
}

namespace {

// All resolved configs of one implementation, last param varying fastest.
std::vector<StageChoice> impl_choices(const ImplementationSpec& impl) {
    std::uint64_t n = grid_size(impl);
    std::vector<StageChoice> out;
    out.reserve(n);
    for (std::uint64_t idx = 0; idx < n; ++idx) {
        StageChoice choice;
        choice.impl_id = impl.canonical_name();
        std::uint64_t rem = idx;
        for (auto it = impl.params.rbegin(); it != impl.params.rend(); ++it) {
            std::uint64_t k = it->values.size();
            choice.config[it->name] = it->values[rem % k];
            rem /= k;
        }
        out.push_back(std::move(choice));
    }
    return out;
}

}  // namespace

std::vector<PathSpec> enumerate_paths(const Registry& registry) {
    std::array<std::vector<StageChoice>, 4> per_stage;
    for (StageKind s : kStageOrder) {
        auto& list = per_stage[static_cast<std::size_t>(s)];
        for (const auto& impl : registry.at(s)) {
            auto choices = impl_choices(impl);
            list.insert(list.end(), choices.begin(), choices.end());
        }
    }
    std::vector<PathSpec> out;
    out.reserve(static_cast<std::size_t>(count_paths(registry)));
    for (const auto& q : per_stage[0])
        for (const auto& r : per_stage[1])
            for (const auto& c : per_stage[2])
                for (const auto& m : per_stage[3])
                    out.push_back(PathSpec{{q, r, c, m}});
    return out;
}

Registry resolve_dynamic(const Registry& registry,
                         const std::map<std::string, json>& environment) {
    Registry out = registry;
    for (StageKind s : kStageOrder) {
        for (auto& impl : out.at(s)) {
            for (auto& p : impl.params) {
                if (p.kind != ParamKind::Dynamic) continue;
                auto it = environment.find(p.resolver);
                if (it == environment.end())
                    throw Error("missing resolver '" + p.resolver + "' for dynamic param '" +
                                p.name + "'");
                const json& resolved = it->second;
                std::vector<json> values;
                if (resolved.is_array())
                    values.assign(resolved.begin(), resolved.end());
                else
                    values.push_back(resolved);
                if (values.empty())
                    throw Error("resolver '" + p.resolver + "' produced no values for param '" +
                                p.name + "'");
                p.kind = ParamKind::Sweep;
                p.values = std::move(values);
                p.resolver.clear();
            }
        }
    }
    return out;
}

}  // namespace eco
