#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shield/common.hpp"
#include "shield/vrp.hpp"

namespace shield::gen {

using nlohmann::ordered_json;

/// Where customer/depot coordinates come from: i.i.d. uniform on the unit
/// square, or sampling without replacement from a fixed normalized point set.
struct DistributionSource {
    enum class Kind { Uniform, MapPoints };
    Kind kind = Kind::Uniform;
    std::vector<vrp::Vec2> points;  // map kind only, already in [0,1]^2
    std::string name = "uniform";

    static DistributionSource uniform() { return {}; }
};

struct GenConfig {
    int n = 20;
    double capacity = 30.0;
    std::vector<int> demand_choices = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    double backhaul_fraction = 0.2;
    double duration_cap = 3.0;
    double depot_close = 3.0;
    double service_time = 0.2;
    double tw_halfwidth_lo = 0.1;
    double tw_halfwidth_hi = 1.0;
    uint64_t seed = 0;

    void check() const {
        if (n < 1) throw ConfigError("gen: n must be positive");
        if (capacity <= 0.0) throw ConfigError("gen: capacity must be positive");
        if (demand_choices.empty()) throw ConfigError("gen: demand_choices empty");
        if (backhaul_fraction < 0.0 || backhaul_fraction >= 1.0)
            throw ConfigError("gen: backhaul_fraction must be in [0,1)");
        if (duration_cap <= 0.0 || depot_close <= 0.0 || service_time <= 0.0)
            throw ConfigError("gen: scalars must be positive");
        if (tw_halfwidth_lo <= 0.0 || tw_halfwidth_hi < tw_halfwidth_lo)
            throw ConfigError("gen: bad half-width range");
    }
};

/// Counters for rare generator events.
struct GenStats {
    long tw_center_clamped = 0;
};

/// Draws `count` points: uniform kind samples i.i.d., map kind samples
/// distinct points without replacement. Index 0 is the depot.
inline std::vector<vrp::Vec2> sample_coords(const DistributionSource& src, int count, Rng& rng) {
    if (count < 1) throw SizeError("sample_coords: count must be positive");
    std::vector<vrp::Vec2> out(static_cast<size_t>(count));
    if (src.kind == DistributionSource::Kind::Uniform) {
        for (auto& p : out) {
            p.x = rng.uniform();
            p.y = rng.uniform();
        }
        return out;
    }
    if (static_cast<int>(src.points.size()) < count)
        throw SizeError("sample_coords: map '" + src.name + "' has only " +
                        std::to_string(src.points.size()) + " points, need " +
                        std::to_string(count));
    const auto idx = rng.choose(static_cast<int>(src.points.size()), count);
    for (int i = 0; i < count; ++i) out[static_cast<size_t>(i)] = src.points[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    return out;
}

/// Fills demands, backhauls, duration cap and time windows for one task on
/// the given coordinates. Draw order is fixed (demands, backhaul picks,
/// then per-customer window center and half-width) so results are
/// reproducible from the RNG stream alone.
inline vrp::Instance generate_instance(const std::vector<vrp::Vec2>& coords,
                                       const vrp::TaskSpec& task, const GenConfig& cfg, Rng& rng,
                                       GenStats* stats = nullptr) {
    cfg.check();
    if (static_cast<int>(coords.size()) != cfg.n + 1)
        throw SizeError("generate_instance: coords must hold n+1 points");
    vrp::Instance inst;
    inst.n = cfg.n;
    inst.coords = coords;
    const size_t m = coords.size();
    inst.demand.assign(m, 0.0);
    inst.tw_open.assign(m, 0.0);
    inst.tw_close.assign(m, 0.0);
    inst.service.assign(m, 0.0);
    inst.capacity = cfg.capacity;
    for (size_t i = 1; i < m; ++i) {
        const int raw = cfg.demand_choices[rng.below(cfg.demand_choices.size())];
        inst.demand[i] = static_cast<double>(raw) / cfg.capacity;
    }
    if (task.backhaul) {
        const int k = static_cast<int>(std::floor(cfg.backhaul_fraction * cfg.n));
        for (int c : rng.choose(cfg.n, k)) inst.demand[static_cast<size_t>(c) + 1] *= -1.0;
    }
    if (task.duration_limit) inst.duration_cap = cfg.duration_cap;
    if (task.time_window) {
        inst.tw_open[0] = 0.0;
        inst.tw_close[0] = cfg.depot_close;
        for (size_t i = 1; i < m; ++i) {
            const double d0 = vrp::dist(coords[0], coords[i]);
            const double lo = d0;
            const double hi = cfg.depot_close - d0 - cfg.service_time;
            double center;
            if (lo < hi) {
                center = rng.uniform(lo, hi);
            } else {
                center = 0.5 * (lo + hi);  // d0 too large for a proper interval
                if (stats) ++stats->tw_center_clamped;
            }
            const double half = rng.uniform(cfg.tw_halfwidth_lo, cfg.tw_halfwidth_hi);
            inst.tw_open[i] = std::max(0.0, center - half);
            inst.tw_close[i] = std::min(cfg.depot_close, center + half);
            inst.service[i] = cfg.service_time;
        }
    }
    inst.check(task);
    return inst;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Map files are plain text, one "id x y" per line, '#' starts a comment.
/// Coordinates are min-max normalized per axis onto [0,1].
inline DistributionSource load_map_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open map file: " + path);
    DistributionSource src;
    src.kind = DistributionSource::Kind::MapPoints;
    const auto slash = path.find_last_of('/');
    std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
    const auto dot = stem.find_last_of('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);
    src.name = stem;

    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::string id;
        double x, y;
        if (!(ls >> id >> x >> y))
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'id x y'");
        src.points.push_back({x, y});
    }
    if (src.points.empty()) throw ParseError(path + ": no points");

    double min_x = src.points[0].x, max_x = min_x, min_y = src.points[0].y, max_y = min_y;
    for (const auto& p : src.points) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    for (auto& p : src.points) {
        p.x = max_x > min_x ? (p.x - min_x) / (max_x - min_x) : 0.5;
        p.y = max_y > min_y ? (p.y - min_y) / (max_y - min_y) : 0.5;
    }
    return src;
}

struct InstanceRecord {
    vrp::TaskSpec task;
    vrp::Instance instance;
    bool operator==(const InstanceRecord&) const = default;
};

inline ordered_json record_to_json(const InstanceRecord& rec) {
    const auto& inst = rec.instance;
    ordered_json j;
    j["task"] = rec.task.name();
    j["n"] = inst.n;
    auto coords = ordered_json::array();
    for (const auto& p : inst.coords) coords.push_back({p.x, p.y});
    j["coords"] = std::move(coords);
    j["demand"] = inst.demand;
    auto tw = ordered_json::array();
    for (size_t i = 0; i < inst.tw_open.size(); ++i) tw.push_back({inst.tw_open[i], inst.tw_close[i]});
    j["tw"] = std::move(tw);
    j["service"] = inst.service;
    j["L"] = inst.duration_cap;
    j["Q"] = inst.capacity;
    return j;
}

inline InstanceRecord record_from_json(const ordered_json& j, const std::string& where) {
    try {
        InstanceRecord rec;
        rec.task = vrp::TaskSpec::from_name(j.at("task").get<std::string>());
        auto& inst = rec.instance;
        inst.n = j.at("n").get<int>();
        for (const auto& p : j.at("coords")) inst.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        inst.demand = j.at("demand").get<std::vector<double>>();
        for (const auto& w : j.at("tw")) {
            inst.tw_open.push_back(w.at(0).get<double>());
            inst.tw_close.push_back(w.at(1).get<double>());
        }
        inst.service = j.at("service").get<std::vector<double>>();
        inst.duration_cap = j.at("L").get<double>();
        inst.capacity = j.at("Q").get<double>();
        inst.check(rec.task);
        return rec;
    } catch (const ordered_json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
}

inline void write_instances(const std::string& path, const std::vector<InstanceRecord>& recs) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write instance file: " + path);
    for (const auto& rec : recs) out << record_to_json(rec).dump() << '\n';
}

inline std::vector<InstanceRecord> read_instances(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open instance file: " + path);
    std::vector<InstanceRecord> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const ordered_json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        out.push_back(record_from_json(j, where));
    }
    return out;
}

/// Reference solutions, line-aligned with an instance file.
struct RefSolution {
    double cost = 0.0;
    vrp::Solution solution;
};

inline void write_solutions(const std::string& path, const std::vector<RefSolution>& refs) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write solution file: " + path);
    for (const auto& r : refs) {
        ordered_json j;
        j["cost"] = r.cost;
        j["tours"] = r.solution.tours;
        out << j.dump() << '\n';
    }
}

inline std::vector<RefSolution> read_solutions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open solution file: " + path);
    std::vector<RefSolution> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = ordered_json::parse(line);
            RefSolution r;
            r.cost = j.at("cost").get<double>();
            r.solution.tours = j.at("tours").get<std::vector<std::vector<int>>>();
            out.push_back(std::move(r));
        } catch (const ordered_json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Capacity defaults from the classic attention-model setups; any other
/// size must state the capacity explicitly.
inline std::optional<double> default_capacity(int n) {
    switch (n) {
        case 10: return 20.0;
        case 20: return 30.0;
        case 50: return 40.0;
        case 100: return 50.0;
        default: return std::nullopt;
    }
}

}  // namespace shield::gen
