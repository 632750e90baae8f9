#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "shield/common.hpp"

namespace shield::vrp {

struct Vec2 {
    double x = 0.0, y = 0.0;
    bool operator==(const Vec2&) const = default;
};

inline double dist(const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

/// One of the 16 variants: capacity is always active, the four optional
/// constraints are open routes (O), time windows (TW), a per-route duration
/// limit (L) and mixed backhauls (B).
struct TaskSpec {
    bool open = false;
    bool time_window = false;
    bool duration_limit = false;
    bool backhaul = false;

    bool operator==(const TaskSpec&) const = default;

    std::string name() const {
        if (!open && !time_window && !duration_limit && !backhaul) return "CVRP";
        std::string s = open ? "OVRP" : "VRP";
        if (backhaul) s += "B";
        if (duration_limit) s += "L";
        if (time_window) s += "TW";
        return s;
    }

    /// Constraint vector in the order (open, time window, route length,
    /// backhaul).
    std::array<double, 4> onehot() const {
        return {open ? 1.0 : 0.0, time_window ? 1.0 : 0.0, duration_limit ? 1.0 : 0.0,
                backhaul ? 1.0 : 0.0};
    }

    static const std::array<TaskSpec, 16>& all() {
        static const std::array<TaskSpec, 16> tasks = [] {
            std::array<TaskSpec, 16> ts{};
            for (int bits = 0; bits < 16; ++bits)
                ts[static_cast<size_t>(bits)] = TaskSpec{(bits & 1) != 0, (bits & 2) != 0,
                                                         (bits & 4) != 0, (bits & 8) != 0};
            return ts;
        }();
        return tasks;
    }

    static TaskSpec from_name(const std::string& name) {
        for (const TaskSpec& t : all())
            if (t.name() == name) return t;
        std::string names;
        for (const TaskSpec& t : all()) names += (names.empty() ? "" : ", ") + t.name();
        throw ValueError("unknown task '" + name + "' (expected one of: " + names + ")");
    }
};

/// Static description of one problem: depot at index 0, customers 1..n.
/// Demands are stored normalized by the capacity; inactive-constraint fields
/// are zero-filled so a single layout serves all 16 variants.
struct Instance {
    int n = 0;
    std::vector<Vec2> coords;       // n+1
    std::vector<double> demand;     // n+1, depot 0, sign marks backhauls
    double capacity = 0.0;          // Q used for normalization
    std::vector<double> tw_open;    // n+1
    std::vector<double> tw_close;   // n+1
    std::vector<double> service;    // n+1
    double duration_cap = 0.0;      // 0 when the limit constraint is off

    bool operator==(const Instance&) const = default;

    double dist(int i, int j) const {
        return vrp::dist(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
    }

    void check(const TaskSpec& task) const {
        const size_t m = static_cast<size_t>(n) + 1;
        if (n < 1) throw ValidationError("instance: needs at least one customer");
        if (coords.size() != m || demand.size() != m || tw_open.size() != m ||
            tw_close.size() != m || service.size() != m)
            throw ValidationError("instance: field lengths disagree with n");
        for (const Vec2& p : coords)
            if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
                throw ValidationError("instance: coordinates outside the unit square");
        if (demand[0] != 0.0) throw ValidationError("instance: depot demand must be 0");
        for (size_t i = 1; i < m; ++i) {
            if (demand[i] == 0.0) throw ValidationError("instance: zero customer demand");
            if (demand[i] < 0.0 && !task.backhaul)
                throw ValidationError("instance: negative demand on a task without backhauls");
        }
        if (task.duration_limit) {
            if (duration_cap <= 0.0) throw ValidationError("instance: missing duration cap");
        } else if (duration_cap != 0.0) {
            throw ValidationError("instance: duration cap set on a task without the limit");
        }
        for (size_t i = 0; i < m; ++i) {
            if (tw_open[i] > tw_close[i]) throw ValidationError("instance: inverted time window");
            if (!task.time_window &&
                (tw_open[i] != 0.0 || tw_close[i] != 0.0 || service[i] != 0.0))
                throw ValidationError("instance: time-window fields set on a non-TW task");
        }
        if (task.time_window && (tw_open[0] != 0.0 || tw_close[0] <= 0.0))
            throw ValidationError("instance: depot window must be [0, w_close] with w_close > 0");
    }
};

/// Per-agent dynamic decoding state. Owned by exactly one rollout.
struct RolloutState {
    int position = 0;
    double load = 1.0;       // z_t, remaining normalized capacity
    double time = 0.0;       // t_t
    double route_len = 0.0;  // l_t of the current open sub-tour
    bool open_flag = false;  // o_t
    std::vector<uint8_t> visited;  // n+1, index 0 stays false
    int visited_count = 0;
    bool done = false;
};

/// Customer-only tour sequences; the depot legs are implicit.
struct Solution {
    std::vector<std::vector<int>> tours;
    bool operator==(const Solution&) const = default;
};

inline RolloutState initial_state(const Instance& inst, const TaskSpec& task) {
    inst.check(task);
    RolloutState s;
    s.position = 0;
    s.load = 1.0;
    s.time = 0.0;
    s.route_len = 0.0;
    s.open_flag = task.open;
    s.visited.assign(static_cast<size_t>(inst.n) + 1, 0);
    s.visited_count = 0;
    s.done = false;
    return s;
}

namespace detail {

inline bool any_unvisited_linehaul(const RolloutState& s, const Instance& inst) {
    for (int j = 1; j <= inst.n; ++j)
        if (!s.visited[static_cast<size_t>(j)] && inst.demand[static_cast<size_t>(j)] > 0.0)
            return true;
    return false;
}

/// Feasibility of a single action. `linehaul_left` caches
/// any_unvisited_linehaul for mask loops; pass -1 to compute on demand.
inline bool action_feasible(const RolloutState& s, const Instance& inst, const TaskSpec& task,
                            int j, int linehaul_left = -1) {
    if (j == 0) return s.position != 0;  // depot legal once the sub-tour is non-empty
    if (j < 0 || j > inst.n) return false;
    const size_t ju = static_cast<size_t>(j);
    if (s.visited[ju]) return false;
    const double delta = inst.demand[ju];
    if (delta > 0.0) {
        if (delta > s.load) return false;
    } else if (s.position == 0) {
        // A fresh tour may start at a backhaul only when no linehaul remains.
        const bool lh = linehaul_left >= 0 ? linehaul_left != 0 : any_unvisited_linehaul(s, inst);
        if (lh) return false;
    }
    const double d_ij = inst.dist(s.position, j);
    if (task.duration_limit) {
        const double back = task.open ? 0.0 : inst.dist(j, 0);
        if (s.route_len + d_ij + back > inst.duration_cap) return false;
    }
    if (task.time_window) {
        const double arrive = s.time + d_ij;
        if (arrive > inst.tw_close[ju]) return false;
        if (!task.open) {
            const double begin = std::max(arrive, inst.tw_open[ju]);
            if (begin + inst.service[ju] + inst.dist(j, 0) > inst.tw_close[0]) return false;
        }
    }
    return true;
}

}  // namespace detail

/// Entry j is true iff visiting j next keeps the tour feasible; entry 0 is
/// the depot. Throws InfeasibilityError when nothing is feasible in a
/// non-done state (that would mean a broken instance or transition bug).
inline std::vector<uint8_t> feasible_mask(const RolloutState& s, const Instance& inst,
                                          const TaskSpec& task) {
    if (s.done) throw ContractViolation("feasible_mask: state is already done");
    std::vector<uint8_t> mask(static_cast<size_t>(inst.n) + 1, 0);
    const int lh = detail::any_unvisited_linehaul(s, inst) ? 1 : 0;
    bool any = false;
    for (int j = 0; j <= inst.n; ++j) {
        if (detail::action_feasible(s, inst, task, j, lh)) {
            mask[static_cast<size_t>(j)] = 1;
            any = true;
        }
    }
    if (!any) throw InfeasibilityError("feasible_mask: no feasible action in a non-done state");
    return mask;
}

/// Applies one feasible action. A depot visit resets the vehicle (each
/// sub-tour is an independent vehicle with its own clock); a customer visit
/// updates load/time/length with waiting and service semantics.
inline RolloutState step(const RolloutState& s, const Instance& inst, const TaskSpec& task,
                         int action) {
    if (!detail::action_feasible(s, inst, task, action))
        throw ContractViolation("step: infeasible action " + std::to_string(action));
    RolloutState out = s;
    if (action == 0) {
        out.position = 0;
        out.load = 1.0;
        out.time = 0.0;
        out.route_len = 0.0;
        return out;
    }
    const size_t ju = static_cast<size_t>(action);
    out.visited[ju] = 1;
    ++out.visited_count;
    out.load = std::min(1.0, std::max(0.0, s.load - inst.demand[ju]));
    const double d_ij = inst.dist(s.position, action);
    out.route_len += d_ij;
    out.time = std::max(s.time + d_ij, inst.tw_open[ju]) + inst.service[ju];
    out.position = action;
    out.done = out.visited_count == inst.n;
    return out;
}

struct Violation {
    enum Kind {
        VisitCount,
        EmptyTour,
        BadIndex,
        Capacity,
        Duration,
        TimeWindow,
        BackhaulStart,
    };
    Kind kind;
    std::string detail;
};

/// Independent checker over a whole solution; slightly more permissive than
/// the exact mask arithmetic (1e-9 slack) so FP noise on isometric variants
/// never flags a constructed solution.
inline std::vector<Violation> validate(const Instance& inst, const Solution& sol,
                                       const TaskSpec& task) {
    constexpr double kSlack = 1e-9;
    std::vector<Violation> out;
    std::vector<int> count(static_cast<size_t>(inst.n) + 1, 0);
    bool backhaul_only_phase = false;
    for (size_t ti = 0; ti < sol.tours.size(); ++ti) {
        const auto& tour = sol.tours[ti];
        if (tour.empty()) {
            out.push_back({Violation::EmptyTour, "tour " + std::to_string(ti) + " is empty"});
            continue;
        }
        double load = 1.0, t = 0.0, len = 0.0;
        int prev = 0;
        for (size_t k = 0; k < tour.size(); ++k) {
            const int j = tour[k];
            if (j < 1 || j > inst.n) {
                out.push_back({Violation::BadIndex,
                               "tour " + std::to_string(ti) + ": node " + std::to_string(j)});
                continue;
            }
            const size_t ju = static_cast<size_t>(j);
            ++count[ju];
            const double delta = inst.demand[ju];
            if (task.backhaul) {
                if (k == 0 && delta < 0.0) backhaul_only_phase = true;
                if (backhaul_only_phase && delta > 0.0)
                    out.push_back({Violation::BackhaulStart,
                                   "linehaul " + std::to_string(j) +
                                       " after a backhaul-started tour"});
            }
            if (delta > load + kSlack)
                out.push_back({Violation::Capacity, "tour " + std::to_string(ti) + ": node " +
                                                        std::to_string(j) + " demand exceeds load"});
            load = std::min(1.0, std::max(0.0, load - delta));
            const double d = inst.dist(prev, j);
            len += d;
            if (task.time_window) {
                const double arrive = t + d;
                if (arrive > inst.tw_close[ju] + kSlack)
                    out.push_back({Violation::TimeWindow, "tour " + std::to_string(ti) + ": node " +
                                                              std::to_string(j) + " window missed"});
                t = std::max(arrive, inst.tw_open[ju]) + inst.service[ju];
            }
            prev = j;
        }
        if (!task.open && prev != 0) {
            const double back = inst.dist(prev, 0);
            len += back;
            if (task.time_window && t + back > inst.tw_close[0] + kSlack)
                out.push_back({Violation::TimeWindow,
                               "tour " + std::to_string(ti) + ": depot close time missed"});
        }
        if (task.duration_limit && len > inst.duration_cap + kSlack)
            out.push_back({Violation::Duration,
                           "tour " + std::to_string(ti) + " exceeds the duration cap"});
    }
    for (int j = 1; j <= inst.n; ++j)
        if (count[static_cast<size_t>(j)] != 1)
            out.push_back({Violation::VisitCount, "customer " + std::to_string(j) + " visited " +
                                                      std::to_string(count[static_cast<size_t>(j)]) +
                                                      " times"});
    return out;
}

/// Total Euclidean length over all sub-tours; the closing depot leg of each
/// sub-tour is omitted for open tasks.
inline double solution_cost(const Instance& inst, const Solution& sol, const TaskSpec& task) {
    const auto violations = validate(inst, sol, task);
    if (!violations.empty()) throw ValidationError("solution_cost: " + violations.front().detail);
    double cost = 0.0;
    for (const auto& tour : sol.tours) {
        int prev = 0;
        for (int j : tour) {
            cost += inst.dist(prev, j);
            prev = j;
        }
        if (!task.open) cost += inst.dist(prev, 0);
    }
    return cost;
}

/// Rebuilds the tour list from a rollout's move sequence (0 = depot).
inline Solution solution_from_actions(const std::vector<int>& actions) {
    Solution sol;
    std::vector<int> cur;
    for (int a : actions) {
        if (a == 0) {
            if (!cur.empty()) sol.tours.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(a);
        }
    }
    if (!cur.empty()) sol.tours.push_back(std::move(cur));
    return sol;
}

struct BruteForceResult {
    bool feasible = false;
    Solution solution;
    double cost = 0.0;
};

namespace detail {

struct BruteCtx {
    const Instance& inst;
    const TaskSpec& task;
    double best_cost;
    std::vector<int> best_moves;
    std::vector<int> moves;

    /// Admissible lower bound: every unvisited customer still needs one
    /// incoming edge, so the sum of cheapest possible in-edges is a bound.
    double lower_bound(const RolloutState& s) const {
        double lb = 0.0;
        for (int j = 1; j <= inst.n; ++j) {
            if (s.visited[static_cast<size_t>(j)]) continue;
            double m = inst.dist(0, j);
            m = std::min(m, inst.dist(s.position, j));
            for (int k = 1; k <= inst.n; ++k)
                if (k != j && !s.visited[static_cast<size_t>(k)]) m = std::min(m, inst.dist(k, j));
            lb += m;
        }
        return lb;
    }

    void search(const RolloutState& s, double cost) {
        if (s.done) {
            const double total = cost + (task.open ? 0.0 : inst.dist(s.position, 0));
            if (total < best_cost) {
                best_cost = total;
                best_moves = moves;
            }
            return;
        }
        if (cost + lower_bound(s) >= best_cost) return;
        const int lh = any_unvisited_linehaul(s, inst) ? 1 : 0;
        // Ascending action order (depot first) makes the first optimum found
        // the lexicographically smallest one.
        for (int j = 0; j <= inst.n; ++j) {
            if (!action_feasible(s, inst, task, j, lh)) continue;
            const double leg =
                j == 0 ? (task.open ? 0.0 : inst.dist(s.position, 0)) : inst.dist(s.position, j);
            if (cost + leg >= best_cost) continue;
            moves.push_back(j);
            search(step(s, inst, task, j), cost + leg);
            moves.pop_back();
        }
    }
};

/// Nearest-feasible-neighbor construction; seeds the exhaustive search.
inline std::optional<double> greedy_cost(const Instance& inst, const TaskSpec& task) {
    RolloutState s = initial_state(inst, task);
    double cost = 0.0;
    while (!s.done) {
        int pick = -1;
        double best = 0.0;
        const int lh = any_unvisited_linehaul(s, inst) ? 1 : 0;
        for (int j = 1; j <= inst.n; ++j) {
            if (!action_feasible(s, inst, task, j, lh)) continue;
            const double d = inst.dist(s.position, j);
            if (pick < 0 || d < best) {
                pick = j;
                best = d;
            }
        }
        if (pick < 0) {
            if (s.position == 0) return std::nullopt;  // stuck at the depot: infeasible
            cost += task.open ? 0.0 : inst.dist(s.position, 0);
            s = step(s, inst, task, 0);
            continue;
        }
        cost += best;
        s = step(s, inst, task, pick);
    }
    cost += task.open ? 0.0 : inst.dist(s.position, 0);
    return cost;
}

}  // namespace detail

/// Exhaustive optimum over all feasible move sequences for n <= 8; ties are
/// broken toward the lexicographically smallest move sequence.
inline BruteForceResult brute_force_optimal(const Instance& inst, const TaskSpec& task) {
    if (inst.n > 8) throw SizeError("brute_force_optimal: n must be at most 8");
    RolloutState s0 = initial_state(inst, task);
    detail::BruteCtx ctx{inst, task, std::numeric_limits<double>::infinity(), {}, {}};
    if (auto seed = detail::greedy_cost(inst, task)) ctx.best_cost = *seed + 1e-9;
    ctx.search(s0, 0.0);
    BruteForceResult out;
    if (ctx.best_moves.empty()) return out;  // infeasible
    out.feasible = true;
    out.solution = solution_from_actions(ctx.best_moves);
    out.cost = ctx.best_cost;
    return out;
}

}  // namespace shield::vrp
