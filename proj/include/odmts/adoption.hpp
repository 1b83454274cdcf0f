#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "odmts/benders.hpp"
#include "odmts/model.hpp"
#include "odmts/router.hpp"

// Iterative bilevel approximation: alternate a fixed-demand design (existing
// riders plus the potentials that currently adopt) with a choice evaluation
// of all potential riders, permanently fixing bus arcs that carry adopted
// flow between rounds. Stops when an adopter set repeats or the round cap is
// hit, and returns the best-objective solution visited. The loop is a
// heuristic; the adopter set it settles on need not be leader-optimal.

namespace odmts {

struct SolveLimits {
  double benders_tolerance = 1e-6;
  int benders_max_iterations = 500;
  int max_rounds = 20;
  double time_limit_s = 0.0;  // per fixed-demand solve; 0 = unlimited
  bool aggregate_cuts = false;
};

struct RiderOutcome {
  RoutedPath route;      // trip_length includes post-processed waits
  bool adopted = false;  // always true for existing riders
  double ratio = 0.0;    // trip_length / car_time when car_time > 0
};

struct RoundRecord {
  int round = 0;
  std::uint64_t adopter_hash = 0;
  double objective = 0.0;
  std::vector<std::string> open_arcs;   // design evaluated this round
  std::vector<std::string> fixed_arcs;  // arcs pinned when that design was solved
};

struct BilevelSolution {
  DesignVector design;
  std::map<std::string, RiderOutcome> riders;  // every trip
  double leader_objective = 0.0;
  ObjectiveBreakdown objective;  // over existing riders and adopters
  double ticket_benefit_total = 0.0;
  std::set<std::string> fixed_open_arcs;
  std::vector<RoundRecord> history;
  int rounds = 0;
  bool converged = false;        // adopter set repeated within the round cap
  bool inner_converged = true;   // every fixed-demand solve closed its gap
};

inline std::uint64_t adopter_set_hash(const std::set<std::string>& adopted) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const std::string& id : adopted) {
    for (char c : id) mix(static_cast<unsigned char>(c));
    mix(0x1f);
  }
  return h;
}

// Leader objective: bus fixed cost, routing value of existing riders, and
// routing value net of ticket revenue for the adopting potentials.
inline double leader_objective(const TransitNetwork& net, const std::vector<Trip>& trips,
                               const CostParameters& params, const DesignVector& design,
                               const std::map<std::string, RoutedPath>& routes,
                               const std::map<std::string, bool>& adopted) {
  double value = 0.0;
  for (const std::string& id : design.open_ids())
    value += arc_fixed_cost(net.arc(id), params);
  for (const Trip& t : trips) {
    const bool active = t.rider_class == RiderClass::existing ||
                        (adopted.count(t.id) && adopted.at(t.id));
    if (!active) continue;
    auto it = routes.find(t.id);
    if (it == routes.end())
      throw std::logic_error("leader_objective: missing route for active trip '" + t.id + "'");
    value += it->second.primary_value;
    if (t.rider_class == RiderClass::potential) value -= ticket_benefit(t, params);
  }
  return value;
}

namespace detail {

struct RoundSolution {
  DesignVector design;
  std::map<std::string, RiderOutcome> riders;
  std::map<std::string, RoutedPath> routes;      // raw primaries for the objective
  std::map<std::string, bool> adopted_flags;     // potentials only
  std::set<std::string> adopters;
  double objective = 0.0;
  ObjectiveBreakdown breakdown;
  double ticket_total = 0.0;
};

// Route everyone on a design, post-process waits, and evaluate the choice
// function for the potentials.
inline RoundSolution evaluate_round(const TransitNetwork& net, const std::vector<Trip>& trips,
                                    const CostParameters& params, const DesignVector& design) {
  RoundSolution rs;
  rs.design = design;
  for (const Trip& t : trips) {
    auto path = solve_follower(t, net, design, params);
    if (!path)
      throw std::logic_error("bilevel: design cannot serve trip '" + t.id + "'");
    rs.routes[t.id] = *path;
    RiderOutcome outcome;
    outcome.route = apply_wait_postprocessing(*path, net, params);
    if (t.rider_class == RiderClass::potential) {
      const AdoptionDecision d = evaluate_choice(outcome.route, t, params);
      outcome.adopted = d.adopted;
      outcome.ratio = d.ratio;
      rs.adopted_flags[t.id] = d.adopted;
      if (d.adopted) rs.adopters.insert(t.id);
    } else {
      outcome.adopted = true;
      outcome.ratio = t.car_time > 0.0 ? outcome.route.trip_length / t.car_time : 0.0;
    }
    rs.riders[t.id] = std::move(outcome);
  }
  rs.objective = leader_objective(net, trips, params, design, rs.routes, rs.adopted_flags);

  std::vector<Trip> active;
  for (const Trip& t : trips)
    if (rs.riders.at(t.id).adopted) active.push_back(t);
  rs.breakdown = objective_breakdown(net, active, params, design, rs.routes);
  for (const Trip& t : active)
    if (t.rider_class == RiderClass::potential) rs.ticket_total += ticket_benefit(t, params);
  return rs;
}

}  // namespace detail

inline BilevelSolution solve_bilevel(const TransitNetwork& net, const std::vector<Trip>& trips,
                                     const CostParameters& params, const SolveLimits& limits = {}) {
  if (limits.max_rounds < 1) throw ValidationError("bilevel: max_rounds must be >= 1");
  std::vector<Trip> existing;
  for (const Trip& t : trips)
    if (t.rider_class == RiderClass::existing) existing.push_back(t);

  BendersOptions bopts;
  bopts.tolerance = limits.benders_tolerance;
  bopts.max_iterations = limits.benders_max_iterations;
  bopts.time_limit_s = limits.time_limit_s;
  bopts.aggregate_cuts = limits.aggregate_cuts;

  BilevelSolution out;

  // Round 0: design for the existing riders alone.
  DesignSolution fd = solve_fixed_demand({net, existing, params}, bopts);
  out.inner_converged = fd.converged;
  DesignVector design = fd.design;
  std::vector<BendersCut> warm_cuts = fd.cuts;

  std::set<std::uint64_t> seen;
  std::set<std::string> fixed_open;
  std::set<std::string> fixed_at_solve;  // pin set used for the current design
  std::set<std::string> prev_active;
  for (const Trip& t : existing) prev_active.insert(t.id);

  bool have_best = false;
  detail::RoundSolution best;
  int round = 0;

  for (round = 1; round <= limits.max_rounds; ++round) {
    detail::RoundSolution rs = detail::evaluate_round(net, trips, params, design);
    const std::uint64_t h = adopter_set_hash(rs.adopters);
    out.history.push_back({round, h, rs.objective, design.open_ids(),
                           {fixed_at_solve.begin(), fixed_at_solve.end()}});

    if (!have_best || rs.objective < best.objective - 1e-12) {
      best = rs;
      have_best = true;
    }
    if (seen.count(h)) {
      out.converged = true;
      break;
    }
    seen.insert(h);
    if (round == limits.max_rounds) break;  // cap reached, no redesign left to do

    // Fix open bus arcs that carry adopted flow, then redesign over the new
    // active set with those arcs pinned open.
    std::set<std::string> new_fixed = fixed_open;
    for (const std::string& id : rs.adopters)
      for (const std::string& arc_id : rs.riders.at(id).route.arcs)
        if (net.arc(arc_id).mode == Mode::bus) new_fixed.insert(arc_id);

    std::set<std::string> active_ids;
    std::vector<Trip> active = existing;
    for (const Trip& t : existing) active_ids.insert(t.id);
    for (const Trip& t : trips)
      if (rs.adopters.count(t.id)) {
        active.push_back(t);
        active_ids.insert(t.id);
      }

    if (active_ids == prev_active && new_fixed == fixed_open) continue;  // design unchanged

    fixed_open = std::move(new_fixed);
    prev_active = std::move(active_ids);

    BendersOptions ropts = bopts;
    ropts.forced_open = fixed_open;
    if (!limits.aggregate_cuts) {
      BendersState warm;
      std::set<std::string> active_set;
      for (const Trip& t : active) active_set.insert(t.id);
      for (const BendersCut& c : warm_cuts)
        if (active_set.count(c.trip_id)) warm.cuts.push_back(c);
      ropts.resume_from = std::move(warm);
    }
    fd = solve_fixed_demand({net, active, params}, ropts);
    out.inner_converged = out.inner_converged && fd.converged;
    design = fd.design;
    warm_cuts = fd.cuts;
    fixed_at_solve = fixed_open;
  }

  out.rounds = std::min(round, limits.max_rounds);
  out.design = best.design;
  out.leader_objective = best.objective;
  out.riders = best.riders;
  out.objective = best.breakdown;
  out.ticket_benefit_total = best.ticket_total;
  out.fixed_open_arcs = fixed_open;
  return out;
}

struct SweepEntry {
  double rho = 0.0;
  BilevelSolution solution;
};

// Re-solve the bilevel problem for each adoption factor. rho = 0 is allowed
// here as the degenerate no-adoption case.
inline std::vector<SweepEntry> sweep_adoption_factor(const TransitNetwork& net,
                                                     const std::vector<Trip>& trips,
                                                     const CostParameters& base,
                                                     const std::vector<double>& rho_values,
                                                     const SolveLimits& limits = {}) {
  std::vector<SweepEntry> out;
  for (double rho : rho_values) {
    if (!(rho >= 0.0) || !std::isfinite(rho))
      throw ValidationError("sweep: adoption factor must be finite and >= 0");
    CostParameters p = base;
    p.adoption_factor = rho;
    out.push_back({rho, solve_bilevel(net, trips, p, limits)});
  }
  return out;
}

}  // namespace odmts
