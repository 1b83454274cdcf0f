#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "odmts/model.hpp"
#include "odmts/router.hpp"
#include "odmts/simplex.hpp"

// Benders decomposition for the fixed-demand design problem: the master
// selects which bus arcs to open subject to per-hub frequency balance and
// at-most-one parallel frequency; every trip is a routing subproblem whose
// dual yields an optimality cut
//
//   theta_t >= constant - sum_a sigma_a z_a        (sigma_a >= 0, closed arcs)
//
// built from shortest-distance-to-destination potentials over the open arcs.
// The master is solved exactly by branch-and-bound over the binary design
// with an LP-relaxation bound; the solver sits behind an interface so an
// external MILP backend can be swapped in.

namespace odmts {

struct BendersCut {
  std::string trip_id;                          // empty for an aggregated cut
  double constant = 0.0;                        // potential at the trip origin
  std::map<std::string, double> coefficients;   // bus arc id -> sigma_a > 0
};

struct BendersState {
  std::vector<BendersCut> cuts;
  double lower_bound = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();
  DesignVector incumbent;
  int iteration = 0;
};

// The leader problem with a frozen rider set: every trip is must-serve.
struct FixedDemandInstance {
  TransitNetwork network;
  std::vector<Trip> trips;
  CostParameters params;
};

namespace detail {

constexpr double kCutEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Primary-cost potentials toward the trip destination over usable arcs.
// Bounded: to_dest[r][v] = cheapest cost from v to dest using <= r arcs.
// Unbounded: single layer, plain backward Dijkstra.
struct Potentials {
  bool bounded = false;
  std::vector<std::vector<double>> to_dest;

  double at_origin(int origin) const { return to_dest.back()[static_cast<std::size_t>(origin)]; }
};

inline Potentials dest_potentials(const TripGraph& g, const TransitNetwork& net, int dest,
                                  std::optional<int> hop_cap) {
  const int n = static_cast<int>(net.node_count());
  Potentials p;
  p.bounded = hop_cap.has_value();
  if (!p.bounded) {
    std::vector<double> dist(static_cast<std::size_t>(n), kInf);
    std::vector<char> done(static_cast<std::size_t>(n), 0);
    dist[static_cast<std::size_t>(dest)] = 0.0;
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    queue.emplace(0.0, dest);
    while (!queue.empty()) {
      auto [d, v] = queue.top();
      queue.pop();
      if (done[static_cast<std::size_t>(v)] || d != dist[static_cast<std::size_t>(v)]) continue;
      done[static_cast<std::size_t>(v)] = 1;
      for (int ai : net.in_arcs(v)) {
        if (!g.usable[static_cast<std::size_t>(ai)]) continue;
        const int u = net.tail_of(ai);
        const double cand = d + g.gamma[static_cast<std::size_t>(ai)];
        if (cand < dist[static_cast<std::size_t>(u)]) {
          dist[static_cast<std::size_t>(u)] = cand;
          queue.emplace(cand, u);
        }
      }
    }
    p.to_dest.push_back(std::move(dist));
    return p;
  }

  const int cap = *hop_cap;
  p.to_dest.assign(static_cast<std::size_t>(cap) + 1,
                   std::vector<double>(static_cast<std::size_t>(n), kInf));
  p.to_dest[0][static_cast<std::size_t>(dest)] = 0.0;
  for (int r = 1; r <= cap; ++r) {
    auto& cur = p.to_dest[static_cast<std::size_t>(r)];
    const auto& prev = p.to_dest[static_cast<std::size_t>(r) - 1];
    cur = prev;
    for (int v = 0; v < n; ++v) {
      for (int ai : net.out_arcs(v)) {
        if (!g.usable[static_cast<std::size_t>(ai)]) continue;
        const double tail_cost = prev[static_cast<std::size_t>(net.head_of(ai))];
        if (tail_cost == kInf) continue;
        const double cand = g.gamma[static_cast<std::size_t>(ai)] + tail_cost;
        if (cand < cur[static_cast<std::size_t>(v)]) cur[static_cast<std::size_t>(v)] = cand;
      }
    }
  }
  return p;
}

}  // namespace detail

// Routing value of a trip when only the always-open arcs (shuttle, rail) are
// usable: the shuttle-path fallback that caps every dual potential. Throws
// when the trip cannot be served at all, since every trip is must-serve.
inline double shuttle_fallback_value(const Trip& trip, const TransitNetwork& net,
                                     const CostParameters& params) {
  const DesignVector closed = make_design(net, false);
  const detail::TripGraph g = detail::build_trip_graph(trip, net, closed, params);
  const detail::Potentials pot =
      detail::dest_potentials(g, net, net.location_index(trip.destination), params.transfer_limit);
  const double v = pot.at_origin(net.location_index(trip.origin));
  if (v == detail::kInf)
    throw ValidationError("trip '" + trip.id +
                          "': no shuttle/rail path within the transfer limit; "
                          "the trip cannot be served under every design");
  return v;
}

// Routing value with every bus arc open: a design-independent lower bound on
// the trip's routing cost, used to floor the master's theta variables.
inline double all_open_floor(const Trip& trip, const TransitNetwork& net,
                             const CostParameters& params) {
  const DesignVector open = make_design(net, true);
  const detail::TripGraph g = detail::build_trip_graph(trip, net, open, params);
  const detail::Potentials pot =
      detail::dest_potentials(g, net, net.location_index(trip.destination), params.transfer_limit);
  const double v = pot.at_origin(net.location_index(trip.origin));
  if (v == detail::kInf)
    throw ValidationError("trip '" + trip.id +
                          "': unreachable even with every arc open under the transfer limit");
  return v;
}

struct CutResult {
  BendersCut cut;
  double path_value = 0.0;  // routing value at the generating design (= cut constant)
};

// Benders optimality cut for one trip at a fixed design. Potentials are the
// cheapest-cost-to-destination labels over open arcs, capped by the trip's
// shuttle fallback value so closed-off regions never produce unbounded
// coefficients; sigma_a measures how much opening closed arc a could relax
// the potential gap across it.
inline CutResult generate_cut(const Trip& trip, const TransitNetwork& net,
                              const DesignVector& design, const CostParameters& params,
                              std::optional<double> fallback_value = {}) {
  validate_design(design, net);
  const double cap = fallback_value ? *fallback_value : shuttle_fallback_value(trip, net, params);

  const detail::TripGraph g = detail::build_trip_graph(trip, net, design, params);
  const detail::Potentials pot =
      detail::dest_potentials(g, net, net.location_index(trip.destination), params.transfer_limit);

  auto phi = [&](std::size_t layer, int node) {
    return std::min(pot.to_dest[layer][static_cast<std::size_t>(node)], cap);
  };

  CutResult out;
  out.cut.trip_id = trip.id;
  out.cut.constant = phi(pot.to_dest.size() - 1, net.location_index(trip.origin));
  out.path_value = out.cut.constant;

  for (const std::string& id : net.bus_arc_ids()) {
    if (design.is_open(id)) continue;
    const int ai = net.arc_index(id);
    const double gamma = g.gamma[static_cast<std::size_t>(ai)];
    const int tail = net.tail_of(ai);
    const int head = net.head_of(ai);
    double sigma = 0.0;
    if (!pot.bounded) {
      sigma = phi(0, tail) - gamma - phi(0, head);
    } else {
      sigma = -detail::kInf;
      for (std::size_t r = 1; r < pot.to_dest.size(); ++r)
        sigma = std::max(sigma, phi(r, tail) - gamma - phi(r - 1, head));
    }
    if (sigma > 0.0) out.cut.coefficients[id] = sigma;
  }
  return out;
}

// Evaluate what a cut pool implies for one theta at an integral design.
inline double theta_from_cuts(const std::vector<BendersCut>& cuts, const std::string& trip_id,
                              double floor, const DesignVector& design) {
  double theta = floor;
  for (const BendersCut& c : cuts) {
    if (c.trip_id != trip_id) continue;
    double v = c.constant;
    for (const auto& [arc, sigma] : c.coefficients)
      if (design.is_open(arc)) v -= sigma;
    theta = std::max(theta, v);
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Master problem
// ---------------------------------------------------------------------------

struct MasterOptions {
  // Per-trip theta floors (routing value with every arc open). Computed when
  // empty. Must be valid lower bounds for every design.
  std::map<std::string, double> theta_floors;
  std::set<std::string> forced_open;  // bus arcs pinned open by the adoption loop
  bool aggregate_cuts = false;        // one theta for the whole rider set
  long node_limit = 2000000;
  double time_limit_s = 0.0;  // 0 = unlimited
};

struct MasterResult {
  DesignVector design;
  double lower_bound = 0.0;  // exact master optimum when optimal
  bool optimal = false;
  long nodes_explored = 0;
};

// Prepared master instance handed to a solver backend.
struct MasterModel {
  const TransitNetwork* net = nullptr;
  std::vector<std::string> bus_ids;  // sorted; defines z indexing
  std::vector<double> beta;
  std::vector<int> frequency;
  std::vector<int> fix;  // -1 free, 0 closed, 1 open (forced)

  struct BalanceRow {
    std::vector<std::pair<int, int>> terms;  // (z index, +f or -f)
  };
  std::vector<BalanceRow> balance;
  std::vector<std::vector<int>> pair_groups;  // parallel-frequency groups, >= 2 arcs

  struct CutRow {
    int theta = 0;  // theta slot
    double constant = 0.0;
    std::vector<std::pair<int, double>> sigma;  // (z index, coefficient)
  };
  std::vector<CutRow> cuts;
  std::vector<double> theta_floor;  // one per slot
  long node_limit = 2000000;
  double time_limit_s = 0.0;
};

class MasterSolver {
 public:
  virtual ~MasterSolver() = default;
  virtual MasterResult solve(const MasterModel& model) = 0;
};

namespace detail {

inline LpProblem master_relaxation(const MasterModel& m, const std::vector<int>& fix) {
  const std::size_t nb = m.bus_ids.size();
  const std::size_t nt = m.theta_floor.size();
  LpProblem lp;
  lp.objective.assign(nb + nt, 0.0);
  lp.lower.assign(nb + nt, 0.0);
  lp.upper.assign(nb + nt, 0.0);
  for (std::size_t i = 0; i < nb; ++i) {
    lp.objective[i] = m.beta[i];
    lp.lower[i] = fix[i] == 1 ? 1.0 : 0.0;
    lp.upper[i] = fix[i] == 0 ? 0.0 : 1.0;
  }
  for (std::size_t t = 0; t < nt; ++t) {
    lp.objective[nb + t] = 1.0;
    lp.lower[nb + t] = m.theta_floor[t];
    lp.upper[nb + t] = std::numeric_limits<double>::infinity();
  }
  for (const auto& row : m.balance) {
    LpRow r;
    r.coeffs.assign(nb + nt, 0.0);
    for (auto [zi, f] : row.terms) r.coeffs[static_cast<std::size_t>(zi)] = f;
    r.sense = LpSense::eq;
    r.rhs = 0.0;
    lp.rows.push_back(std::move(r));
  }
  for (const auto& group : m.pair_groups) {
    LpRow r;
    r.coeffs.assign(nb + nt, 0.0);
    for (int zi : group) r.coeffs[static_cast<std::size_t>(zi)] = 1.0;
    r.sense = LpSense::le;
    r.rhs = 1.0;
    lp.rows.push_back(std::move(r));
  }
  for (const auto& c : m.cuts) {
    LpRow r;
    r.coeffs.assign(nb + nt, 0.0);
    r.coeffs[nb + static_cast<std::size_t>(c.theta)] = 1.0;
    for (auto [zi, s] : c.sigma) r.coeffs[static_cast<std::size_t>(zi)] = s;
    r.sense = LpSense::ge;
    r.rhs = c.constant;
    lp.rows.push_back(std::move(r));
  }
  return lp;
}

inline double master_value_at(const MasterModel& m, const std::vector<int>& z) {
  double value = 0.0;
  for (std::size_t i = 0; i < m.bus_ids.size(); ++i)
    if (z[i] == 1) value += m.beta[i];
  for (std::size_t t = 0; t < m.theta_floor.size(); ++t) {
    double theta = m.theta_floor[t];
    for (const auto& c : m.cuts) {
      if (c.theta != static_cast<int>(t)) continue;
      double v = c.constant;
      for (auto [zi, s] : c.sigma)
        if (z[static_cast<std::size_t>(zi)] == 1) v -= s;
      theta = std::max(theta, v);
    }
    value += theta;
  }
  return value;
}

inline bool balanced_exactly(const MasterModel& m, const std::vector<int>& z) {
  for (const auto& row : m.balance) {
    long long sum = 0;
    for (auto [zi, f] : row.terms)
      if (z[static_cast<std::size_t>(zi)] == 1) sum += f;
    if (sum != 0) return false;
  }
  for (const auto& group : m.pair_groups) {
    int open = 0;
    for (int zi : group) open += z[static_cast<std::size_t>(zi)] == 1;
    if (open > 1) return false;
  }
  return true;
}

}  // namespace detail

// Exact reference backend: depth-first branch-and-bound over the binary
// design with LP-relaxation bounds. Ties between optimal designs resolve to
// the lexicographically smallest open-arc id set.
class BranchAndBoundMaster : public MasterSolver {
 public:
  MasterResult solve(const MasterModel& m) override {
    const std::size_t nb = m.bus_ids.size();
    const auto started = std::chrono::steady_clock::now();

    double best_value = std::numeric_limits<double>::infinity();
    std::vector<int> best_z;
    bool have_best = false;
    long nodes = 0;
    bool aborted = false;

    std::vector<std::vector<int>> stack;
    stack.push_back(m.fix);

    while (!stack.empty()) {
      if (m.node_limit > 0 && nodes >= m.node_limit) { aborted = true; break; }
      if (m.time_limit_s > 0.0) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        if (elapsed.count() > m.time_limit_s) { aborted = true; break; }
      }
      std::vector<int> fix = std::move(stack.back());
      stack.pop_back();
      ++nodes;

      const LpSolution lp = solve_lp(detail::master_relaxation(m, fix));
      if (lp.status == LpStatus::infeasible) continue;
      if (lp.status != LpStatus::optimal)
        throw std::logic_error("master relaxation: unexpected LP status");
      if (lp.objective > best_value + 1e-9) continue;

      int branch_var = -1;
      for (std::size_t i = 0; i < nb; ++i) {
        if (fix[i] != -1) continue;
        const double v = lp.x[i];
        if (std::fabs(v - std::round(v)) > 1e-7) { branch_var = static_cast<int>(i); break; }
      }

      if (branch_var < 0) {
        std::vector<int> z(nb, 0);
        for (std::size_t i = 0; i < nb; ++i)
          z[i] = fix[i] != -1 ? fix[i] : static_cast<int>(std::llround(lp.x[i]));
        if (!detail::balanced_exactly(m, z)) continue;  // guards LP round-off
        const double value = detail::master_value_at(m, z);
        if (!have_best || value < best_value - 1e-9) {
          best_value = value;
          best_z = z;
          have_best = true;
        } else if (value <= best_value + 1e-9 && open_set_less(m, z, best_z)) {
          best_value = std::min(best_value, value);
          best_z = z;
        }
        continue;
      }

      // Children pushed closed-first; the stack pops them open-last so the
      // all-closed side is explored first.
      std::vector<int> open_child = fix;
      open_child[static_cast<std::size_t>(branch_var)] = 1;
      std::vector<int> closed_child = std::move(fix);
      closed_child[static_cast<std::size_t>(branch_var)] = 0;
      stack.push_back(std::move(open_child));
      stack.push_back(std::move(closed_child));
    }

    MasterResult result;
    result.nodes_explored = nodes;
    result.optimal = !aborted && have_best;
    if (!have_best) {
      if (!aborted) throw std::logic_error("master: no feasible design found");
      return result;
    }
    for (std::size_t i = 0; i < nb; ++i) result.design.open[m.bus_ids[i]] = best_z[i] == 1;
    result.lower_bound = best_value;
    return result;
  }

 private:
  static bool open_set_less(const MasterModel& m, const std::vector<int>& a,
                            const std::vector<int>& b) {
    std::vector<std::string> oa, ob;
    for (std::size_t i = 0; i < m.bus_ids.size(); ++i) {
      if (a[i] == 1) oa.push_back(m.bus_ids[i]);
      if (b[i] == 1) ob.push_back(m.bus_ids[i]);
    }
    return oa < ob;
  }
};

inline MasterModel build_master_model(const std::vector<BendersCut>& cuts,
                                      const TransitNetwork& net, const std::vector<Trip>& trips,
                                      const CostParameters& params, const MasterOptions& opts) {
  MasterModel m;
  m.net = &net;
  m.bus_ids = net.bus_arc_ids();
  m.node_limit = opts.node_limit;
  m.time_limit_s = opts.time_limit_s;

  std::map<std::string, int> z_index;
  for (std::size_t i = 0; i < m.bus_ids.size(); ++i) z_index[m.bus_ids[i]] = static_cast<int>(i);

  m.beta.resize(m.bus_ids.size());
  m.frequency.resize(m.bus_ids.size());
  m.fix.assign(m.bus_ids.size(), -1);
  for (std::size_t i = 0; i < m.bus_ids.size(); ++i) {
    const Arc& a = net.arc(m.bus_ids[i]);
    m.beta[i] = arc_fixed_cost(a, params);
    m.frequency[i] = a.frequency;
    if (opts.forced_open.count(m.bus_ids[i])) m.fix[i] = 1;
  }
  for (const std::string& forced : opts.forced_open)
    if (!z_index.count(forced))
      throw ValidationError("forced-open arc '" + forced + "' is not a bus arc of the network");

  // Frequency balance at every hub touched by a bus arc.
  std::map<int, MasterModel::BalanceRow> rows;
  for (std::size_t i = 0; i < m.bus_ids.size(); ++i) {
    const int ai = net.arc_index(m.bus_ids[i]);
    rows[net.tail_of(ai)].terms.emplace_back(static_cast<int>(i), m.frequency[i]);
    rows[net.head_of(ai)].terms.emplace_back(static_cast<int>(i), -m.frequency[i]);
  }
  for (auto& [node, row] : rows) m.balance.push_back(std::move(row));

  // At most one frequency among parallel bus arcs on the same ordered pair.
  std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
  for (std::size_t i = 0; i < m.bus_ids.size(); ++i) {
    const Arc& a = net.arc(m.bus_ids[i]);
    groups[{a.tail, a.head}].push_back(static_cast<int>(i));
  }
  for (auto& [pair, group] : groups)
    if (group.size() >= 2) m.pair_groups.push_back(std::move(group));

  // Theta slots: one per trip, or a single slot when cuts are aggregated.
  std::map<std::string, int> theta_slot;
  if (opts.aggregate_cuts) {
    double floor_sum = 0.0;
    for (const Trip& t : trips) {
      auto it = opts.theta_floors.find(t.id);
      floor_sum += it != opts.theta_floors.end() ? it->second : all_open_floor(t, net, params);
    }
    m.theta_floor.push_back(trips.empty() ? 0.0 : floor_sum);
  } else {
    for (const Trip& t : trips) {
      auto it = opts.theta_floors.find(t.id);
      theta_slot[t.id] = static_cast<int>(m.theta_floor.size());
      m.theta_floor.push_back(it != opts.theta_floors.end() ? it->second
                                                            : all_open_floor(t, net, params));
    }
  }

  for (const BendersCut& c : cuts) {
    MasterModel::CutRow row;
    if (opts.aggregate_cuts) {
      row.theta = 0;
    } else {
      auto it = theta_slot.find(c.trip_id);
      if (it == theta_slot.end())
        throw ValidationError("cut references unknown trip '" + c.trip_id + "'");
      row.theta = it->second;
    }
    row.constant = c.constant;
    for (const auto& [arc, sigma] : c.coefficients) {
      auto zi = z_index.find(arc);
      if (zi == z_index.end())
        throw ValidationError("cut references unknown bus arc '" + arc + "'");
      row.sigma.emplace_back(zi->second, sigma);
    }
    m.cuts.push_back(std::move(row));
  }
  return m;
}

// Solve the restricted master for the current cut pool. With an empty pool
// the thetas sit on their floors and the all-closed design is optimal.
inline MasterResult solve_master(const std::vector<BendersCut>& cuts, const TransitNetwork& net,
                                 const std::vector<Trip>& trips, const CostParameters& params,
                                 const MasterOptions& opts = {}, MasterSolver* solver = nullptr) {
  const MasterModel model = build_master_model(cuts, net, trips, params, opts);
  BranchAndBoundMaster fallback;
  return (solver ? *solver : static_cast<MasterSolver&>(fallback)).solve(model);
}

// ---------------------------------------------------------------------------
// Decomposition loop
// ---------------------------------------------------------------------------

struct BendersOptions {
  double tolerance = 1e-6;  // relative optimality gap
  int max_iterations = 500;
  double time_limit_s = 0.0;
  bool aggregate_cuts = false;
  std::set<std::string> forced_open;
  std::optional<BendersState> resume_from;
  std::function<void(const BendersState&)> on_iteration;  // checkpoint hook
  long master_node_limit = 2000000;
};

struct ObjectiveBreakdown {
  double bus_fixed_cost = 0.0;
  double shuttle_cost = 0.0;
  double inconvenience = 0.0;

  double total() const { return bus_fixed_cost + shuttle_cost + inconvenience; }
};

struct DesignSolution {
  DesignVector design;
  std::map<std::string, RoutedPath> routes;  // per trip, at the final design
  ObjectiveBreakdown objective;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  double gap = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<BendersCut> cuts;
};

inline ObjectiveBreakdown objective_breakdown(const TransitNetwork& net,
                                              const std::vector<Trip>& trips,
                                              const CostParameters& params,
                                              const DesignVector& design,
                                              const std::map<std::string, RoutedPath>& routes) {
  ObjectiveBreakdown b;
  for (const std::string& id : design.open_ids())
    b.bus_fixed_cost += arc_fixed_cost(net.arc(id), params);
  for (const Trip& t : trips) {
    auto it = routes.find(t.id);
    if (it == routes.end())
      throw std::logic_error("objective_breakdown: missing route for trip '" + t.id + "'");
    for (const std::string& arc_id : it->second.arcs) {
      const Arc& a = net.arc(arc_id);
      if (a.mode == Mode::shuttle) {
        b.shuttle_cost +=
            t.riders * (1.0 - params.alpha) * a.distance * params.shuttle_cost_per_mile * a.cost_scale;
        b.inconvenience += t.riders * params.alpha * a.travel_time;
      } else {
        b.inconvenience += t.riders * params.alpha * (a.travel_time + a.wait_time);
      }
    }
  }
  return b;
}

inline DesignSolution solve_fixed_demand(const FixedDemandInstance& inst,
                                         const BendersOptions& opts = {},
                                         MasterSolver* solver = nullptr) {
  if (!(opts.tolerance > 0.0)) throw ValidationError("benders: tolerance must be > 0");
  const TransitNetwork& net = inst.network;
  const auto started = std::chrono::steady_clock::now();

  // Precompute per-trip fallback caps and all-open floors; both double as
  // must-serve feasibility checks.
  std::map<std::string, double> fallback, floors;
  for (const Trip& t : inst.trips) {
    fallback[t.id] = shuttle_fallback_value(t, net, inst.params);
    floors[t.id] = all_open_floor(t, net, inst.params);
  }

  BendersState state;
  if (opts.resume_from) state = *opts.resume_from;
  double& lb = state.lower_bound;
  double& ub = state.upper_bound;

  MasterOptions mopts;
  mopts.theta_floors = floors;
  mopts.forced_open = opts.forced_open;
  mopts.aggregate_cuts = opts.aggregate_cuts;
  mopts.node_limit = opts.master_node_limit;

  bool converged = false;
  bool master_clean = true;
  auto open_ids_of = [](const DesignVector& d) { return d.open_ids(); };

  while (state.iteration < opts.max_iterations) {
    if (opts.time_limit_s > 0.0) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      if (elapsed.count() > opts.time_limit_s) { master_clean = false; break; }
    }

    const MasterResult master = solve_master(state.cuts, net, inst.trips, inst.params, mopts, solver);
    if (!master.optimal) { master_clean = false; break; }
    lb = std::max(lb, master.lower_bound);

    // Subproblems: one cut and one routing value per trip.
    double candidate = 0.0;
    for (const std::string& id : master.design.open_ids())
      candidate += arc_fixed_cost(net.arc(id), inst.params);
    std::vector<BendersCut> fresh;
    for (const Trip& t : inst.trips) {
      CutResult r = generate_cut(t, net, master.design, inst.params, fallback[t.id]);
      candidate += r.path_value;
      fresh.push_back(std::move(r.cut));
    }
    if (opts.aggregate_cuts && !fresh.empty()) {
      BendersCut agg;
      agg.trip_id.clear();
      for (const BendersCut& c : fresh) {
        agg.constant += c.constant;
        for (const auto& [arc, sigma] : c.coefficients) agg.coefficients[arc] += sigma;
      }
      fresh.assign(1, std::move(agg));
    }
    for (BendersCut& c : fresh) {
      const bool duplicate = std::any_of(
          state.cuts.begin(), state.cuts.end(), [&](const BendersCut& e) {
            return e.trip_id == c.trip_id && e.constant == c.constant &&
                   e.coefficients == c.coefficients;
          });
      if (!duplicate) state.cuts.push_back(std::move(c));
    }

    if (candidate < ub - 1e-12) {
      ub = candidate;
      state.incumbent = master.design;
    } else if (candidate <= ub + 1e-9 &&
               open_ids_of(master.design) < open_ids_of(state.incumbent)) {
      state.incumbent = master.design;
    }

    ++state.iteration;
    if (opts.on_iteration) opts.on_iteration(state);

    const double gap = (ub - lb) / std::max(1.0, std::fabs(ub));
    if (gap <= opts.tolerance) { converged = true; break; }
  }

  if (state.incumbent.open.size() != net.bus_arc_ids().size()) {
    // No iteration completed (exhausted budget on entry): all closed, plus
    // whatever the caller pinned open.
    state.incumbent = make_design(net, false);
    for (const std::string& forced : opts.forced_open) state.incumbent.open.at(forced) = true;
  }

  DesignSolution out;
  out.design = state.incumbent;
  out.iterations = state.iteration;
  out.converged = converged && master_clean;
  out.lower_bound = lb;
  out.upper_bound = ub;
  out.gap = (ub - lb) / std::max(1.0, std::fabs(ub));
  out.cuts = state.cuts;
  for (const Trip& t : inst.trips) {
    auto path = solve_follower(t, net, out.design, inst.params);
    if (!path)
      throw std::logic_error("fixed demand: incumbent design cannot serve trip '" + t.id + "'");
    out.routes[t.id] = *path;
  }
  out.objective = objective_breakdown(net, inst.trips, inst.params, out.design, out.routes);
  return out;
}

}  // namespace odmts
