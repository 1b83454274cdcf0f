#include <random>

#include "doctest.h"
#include "odmts/benders.hpp"
#include "odmts/io.hpp"
#include "oracles.hpp"

using namespace odmts;

namespace {

// One bus corridor between two hubs, shuttle access on both sides, and an
// expensive direct shuttle. Calibrated so opening the corridor pays off.
oracle::Fixture corridor_fixture() {
  oracle::Fixture f;
  std::vector<Location> locs = {{"H1", 0.0, 0.0, LocationKind::hub},
                                {"H2", 0.0, 0.5, LocationKind::hub},
                                {"V1", 0.0, -0.05, LocationKind::virtual_stop},
                                {"V2", 0.0, 0.55, LocationKind::virtual_stop}};
  std::vector<Arc> arcs = {
      {"b_fwd", "H1", "H2", Mode::bus, 3, 30.0, 20.0, 0.0},
      {"b_rev", "H2", "H1", Mode::bus, 3, 30.0, 20.0, 0.0},
      {"s_in", "V1", "H1", Mode::shuttle, 0, 5.0, 2.0, 0.0},
      {"s_out", "H2", "V2", Mode::shuttle, 0, 5.0, 2.0, 0.0},
      {"s_direct", "V1", "V2", Mode::shuttle, 0, 40.0, 30.0, 0.0},
  };
  f.net = TransitNetwork::build(std::move(locs), std::move(arcs));
  Trip t;
  t.id = "t1";
  t.origin = "V1";
  t.destination = "V2";
  t.riders = 10;
  t.rider_class = RiderClass::existing;
  t.car_time = 35.0;
  f.trips.push_back(t);
  f.params.alpha = 0.1078;
  f.params.bus_cost_per_hour = 72.15;
  f.params.shuttle_cost_per_mile = 1.0;
  return f;
}

// Exact hand values for the corridor fixture.
constexpr double kBetaPair = 2 * 96.558345;   // (1-alpha) * 0.5h * f3 * 72.15 each way
constexpr double kViaBus = 78.808;            // 23.234 + 32.34 + 23.234
constexpr double kDirect = 310.78;            // 10 * (0.8922*30 + 0.1078*40)

// Four hubs, three balanced bus corridors (6 bus arcs), rail between H1 and
// H4, five trips with direct shuttle fallbacks.
oracle::Fixture four_hub_fixture() {
  oracle::Fixture f;
  std::vector<Location> locs = {
      {"H1", 0.0, 0.0, LocationKind::hub},  {"H2", 0.0, 0.3, LocationKind::hub},
      {"H3", 0.3, 0.0, LocationKind::hub},  {"H4", 0.3, 0.3, LocationKind::hub},
      {"V1", -0.05, 0.0, LocationKind::virtual_stop},
      {"V2", 0.0, 0.35, LocationKind::virtual_stop},
      {"V3", 0.35, 0.3, LocationKind::virtual_stop}};
  std::vector<Arc> arcs = {
      {"b12", "H1", "H2", Mode::bus, 4, 14.0, 8.0, 0.0},
      {"b21", "H2", "H1", Mode::bus, 4, 15.0, 8.0, 0.0},
      {"b24", "H2", "H4", Mode::bus, 5, 11.0, 7.0, 0.0},
      {"b42", "H4", "H2", Mode::bus, 5, 12.0, 7.0, 0.0},
      {"b13", "H1", "H3", Mode::bus, 3, 17.0, 9.0, 0.0},
      {"b31", "H3", "H1", Mode::bus, 3, 18.0, 9.0, 0.0},
      {"r14", "H1", "H4", Mode::rail, 8, 22.0, 12.0, 0.0},
      {"r41", "H4", "H1", Mode::rail, 8, 22.0, 12.0, 0.0},
      {"s1", "V1", "H1", Mode::shuttle, 0, 4.0, 1.5, 0.0},
      {"s1r", "H1", "V1", Mode::shuttle, 0, 4.5, 1.5, 0.0},
      {"s2", "V2", "H2", Mode::shuttle, 0, 3.0, 1.0, 0.0},
      {"s2r", "H2", "V2", Mode::shuttle, 0, 3.5, 1.0, 0.0},
      {"s3", "V3", "H4", Mode::shuttle, 0, 5.0, 2.0, 0.0},
      {"s3r", "H4", "V3", Mode::shuttle, 0, 5.5, 2.0, 0.0},
      {"d1", "V1", "V3", Mode::shuttle, 0, 38.0, 26.0, 0.0},
      {"d2", "V2", "V3", Mode::shuttle, 0, 30.0, 21.0, 0.0},
      {"d3", "V1", "V2", Mode::shuttle, 0, 24.0, 16.0, 0.0},
      {"d4", "V3", "V1", Mode::shuttle, 0, 38.0, 26.0, 0.0},
      {"d5", "H3", "V3", Mode::shuttle, 0, 28.0, 18.0, 0.0},
  };
  f.net = TransitNetwork::build(std::move(locs), std::move(arcs));
  auto add_trip = [&](const std::string& id, const std::string& o, const std::string& d,
                      int riders) {
    Trip t;
    t.id = id;
    t.origin = o;
    t.destination = d;
    t.riders = riders;
    t.rider_class = RiderClass::existing;
    t.car_time = 30.0;
    f.trips.push_back(t);
  };
  add_trip("t1", "V1", "V3", 12);
  add_trip("t2", "V2", "V3", 9);
  add_trip("t3", "V1", "V2", 7);
  add_trip("t4", "V3", "V1", 10);
  add_trip("t5", "H3", "V3", 5);
  f.params.alpha = 0.15;
  f.params.bus_cost_per_hour = 45.0;
  f.params.shuttle_cost_per_mile = 1.2;
  return f;
}

}  // namespace

TEST_CASE("empty cut pool: master closes everything and sits on the theta floors") {
  const oracle::Fixture f = corridor_fixture();
  const MasterResult r = solve_master({}, f.net, f.trips, f.params);
  REQUIRE(r.optimal);
  for (const auto& [id, open] : r.design.open) CHECK(!open);
  // The floors are the all-arcs-open routing values: the only valid
  // design-independent lower bound on each theta.
  CHECK(r.lower_bound == doctest::Approx(kViaBus).epsilon(1e-9));
}

TEST_CASE("a profitable cut opens the corridor and its return arc") {
  const oracle::Fixture f = corridor_fixture();
  const CutResult cut = generate_cut(f.trips[0], f.net, make_design(f.net, false), f.params);
  CHECK(cut.path_value == doctest::Approx(kDirect).epsilon(1e-9));
  CHECK(cut.cut.constant == doctest::Approx(kDirect).epsilon(1e-9));
  REQUIRE(cut.cut.coefficients.count("b_fwd"));
  CHECK(cut.cut.coefficients.at("b_fwd") ==
        doctest::Approx(kDirect - 32.34 - 23.234).epsilon(1e-9));
  CHECK(!cut.cut.coefficients.count("b_rev"));  // negative gap clamps to zero

  const MasterResult r = solve_master({cut.cut}, f.net, f.trips, f.params);
  REQUIRE(r.optimal);
  CHECK(r.design.open.at("b_fwd"));
  CHECK(r.design.open.at("b_rev"));  // frequency balance forces the pair
}

TEST_CASE("fixed-demand solve opens the corridor pair at the hand-computed objective") {
  const oracle::Fixture f = corridor_fixture();
  const DesignSolution sol = solve_fixed_demand({f.net, f.trips, f.params});
  CHECK(sol.converged);
  CHECK(sol.design.open.at("b_fwd"));
  CHECK(sol.design.open.at("b_rev"));
  CHECK(sol.objective.total() == doctest::Approx(kBetaPair + kViaBus).epsilon(1e-9));
  CHECK(sol.objective.bus_fixed_cost == doctest::Approx(kBetaPair).epsilon(1e-9));
  CHECK(sol.upper_bound == doctest::Approx(kBetaPair + kViaBus).epsilon(1e-6));
  CHECK(sol.gap <= 1e-6);

  const oracle::DesignOracleResult oracle_best =
      oracle::fixed_demand_optimum(f.net, f.trips, f.params);
  CHECK(sol.objective.total() == doctest::Approx(oracle_best.value).epsilon(1e-9));
}

TEST_CASE("at most one parallel frequency is opened") {
  oracle::Fixture f = corridor_fixture();
  std::vector<Arc> arcs = f.net.arcs();
  arcs.push_back({"b_fwd_hi", "H1", "H2", Mode::bus, 6, 30.0, 20.0, 0.0});
  arcs.push_back({"b_rev_hi", "H2", "H1", Mode::bus, 6, 30.0, 20.0, 0.0});
  f.net = TransitNetwork::build(f.net.locations(), std::move(arcs));

  const DesignSolution sol = solve_fixed_demand({f.net, f.trips, f.params});
  CHECK(sol.converged);
  const int fwd_open = sol.design.open.at("b_fwd") + sol.design.open.at("b_fwd_hi");
  const int rev_open = sol.design.open.at("b_rev") + sol.design.open.at("b_rev_hi");
  CHECK(fwd_open <= 1);
  CHECK(rev_open <= 1);
  CHECK(fwd_open == 1);  // corridor still worth opening at the cheap frequency
}

TEST_CASE("cut generation on a small fixture, by hand") {
  std::vector<Location> locs = {{"O", 0.0, 0.0, LocationKind::virtual_stop},
                                {"H1", 0.0, 0.1, LocationKind::hub},
                                {"H2", 0.0, 0.2, LocationKind::hub},
                                {"D", 0.0, 0.3, LocationKind::virtual_stop}};
  std::vector<Arc> arcs = {
      {"s1", "O", "H1", Mode::shuttle, 0, 4.0, 4.0, 0.0},
      {"b1", "H1", "H2", Mode::bus, 2, 6.0, 3.0, 0.0},
      {"b2", "H2", "H1", Mode::bus, 2, 6.0, 3.0, 0.0},
      {"s2", "H2", "D", Mode::shuttle, 0, 2.0, 2.0, 0.0},
      {"s3", "O", "D", Mode::shuttle, 0, 20.0, 20.0, 0.0},
  };
  const TransitNetwork net = TransitNetwork::build(locs, arcs);
  Trip t;
  t.id = "t1";
  t.origin = "O";
  t.destination = "D";
  t.riders = 1;
  t.rider_class = RiderClass::existing;
  CostParameters p;
  p.alpha = 0.5;
  p.shuttle_cost_per_mile = 1.0;

  // gamma: s1 = 4, b1 = 3, s2 = 2, s3 = 20. All-closed potentials capped at
  // the fallback value 20: phi(D)=0, phi(H2)=2, phi(H1)=20 (unreachable,
  // capped), phi(O)=20.
  const CutResult r = generate_cut(t, net, make_design(net, false), p);
  CHECK(r.path_value == doctest::Approx(20.0));
  CHECK(r.cut.constant == doctest::Approx(20.0));
  REQUIRE(r.cut.coefficients.size() == 1);
  CHECK(r.cut.coefficients.at("b1") == doctest::Approx(15.0));  // 20 - 3 - 2

  // Tight at the generating design, valid at every design.
  for (const DesignVector& d : oracle::all_designs(net)) {
    const auto path = oracle::best_path(t, net, d, p);
    REQUIRE(path.has_value());
    double rhs = r.cut.constant;
    for (const auto& [arc, sigma] : r.cut.coefficients)
      if (d.open.at(arc)) rhs -= sigma;
    CHECK(path->primary >= rhs - 1e-9);
  }
}

TEST_CASE("cut evaluated at its generating design reproduces the routing value") {
  std::mt19937 rng(505);
  for (int i = 0; i < 15; ++i) {
    const oracle::Fixture f = oracle::random_benders_fixture(rng);
    for (const DesignVector& d : oracle::feasible_designs(f.net)) {
      for (const Trip& t : f.trips) {
        const CutResult r = generate_cut(t, f.net, d, f.params);
        double rhs = r.cut.constant;
        for (const auto& [arc, sigma] : r.cut.coefficients)
          if (d.open.at(arc)) rhs -= sigma;
        CHECK(r.path_value == doctest::Approx(rhs).epsilon(1e-12));
        const auto path = oracle::best_path(t, f.net, d, f.params);
        REQUIRE(path.has_value());
        CHECK(r.path_value == doctest::Approx(path->primary).epsilon(1e-9));
      }
      if (f.net.bus_arc_ids().size() > 6) break;  // keep the sweep small
    }
  }
}

TEST_CASE("fixed-demand matches the exhaustive design oracle on random fixtures") {
  std::mt19937 rng(606);
  int nontrivial = 0;
  for (int i = 0; i < 12; ++i) {
    const oracle::Fixture f = oracle::random_benders_fixture(rng);
    const oracle::DesignOracleResult want = oracle::fixed_demand_optimum(f.net, f.trips, f.params);

    std::vector<BendersState> states;
    BendersOptions opts;
    opts.on_iteration = [&states](const BendersState& s) { states.push_back(s); };
    const DesignSolution got = solve_fixed_demand({f.net, f.trips, f.params}, opts);

    CHECK(got.converged);
    CHECK(got.objective.total() ==
          doctest::Approx(want.value).epsilon(1e-6));
    if (!want.best.open_ids().empty()) ++nontrivial;

    // Bound sandwich around the true optimum, bounds monotone.
    double prev_lb = -1e300, prev_ub = 1e300;
    for (const BendersState& s : states) {
      CHECK(s.lower_bound <= want.value + 1e-6);
      CHECK(s.upper_bound >= want.value - 1e-6);
      CHECK(s.lower_bound <= s.upper_bound + 1e-6);
      CHECK(s.lower_bound >= prev_lb - 1e-12);
      CHECK(s.upper_bound <= prev_ub + 1e-12);
      prev_lb = s.lower_bound;
      prev_ub = s.upper_bound;
    }

    // Every cut in the final pool is valid for every design.
    for (const DesignVector& d : oracle::all_designs(f.net)) {
      std::map<std::string, double> oracle_value;
      for (const Trip& t : f.trips)
        oracle_value[t.id] = oracle::best_path(t, f.net, d, f.params)->primary;
      for (const BendersCut& c : got.cuts) {
        double rhs = c.constant;
        for (const auto& [arc, sigma] : c.coefficients)
          if (d.open.at(arc)) rhs -= sigma;
        CHECK(oracle_value.at(c.trip_id) >= rhs - 1e-9);
      }
    }

    // Frequency balance holds exactly on the incumbent.
    CHECK(oracle::design_feasible(f.net, got.design));
  }
  CHECK(nontrivial >= 3);  // the sweep actually exercises designs that open arcs
}

TEST_CASE("four-hub fixture: oracle equality and bus-cost monotonicity") {
  const oracle::Fixture f = four_hub_fixture();
  REQUIRE(f.net.bus_arc_ids().size() == 6);

  const DesignSolution sol = solve_fixed_demand({f.net, f.trips, f.params});
  const oracle::DesignOracleResult want = oracle::fixed_demand_optimum(f.net, f.trips, f.params);
  CHECK(sol.converged);
  CHECK(sol.objective.total() == doctest::Approx(want.value).epsilon(1e-6));
  CHECK(sol.design.open_ids() == want.best.open_ids());

  // Doubling the bus cost never reduces the closed arcs' total frequency.
  auto closed_frequency = [&](const DesignVector& d) {
    long sum = 0;
    for (const std::string& id : f.net.bus_arc_ids())
      if (!d.open.at(id)) sum += f.net.arc(id).frequency;
    return sum;
  };
  CostParameters doubled = f.params;
  doubled.bus_cost_per_hour *= 2.0;
  const oracle::DesignOracleResult pricier =
      oracle::fixed_demand_optimum(f.net, f.trips, doubled);
  CHECK(closed_frequency(pricier.best) >= closed_frequency(want.best));
}

TEST_CASE("no bus arcs degenerates to the pure shuttle solution") {
  std::vector<Location> locs = {{"a", 0.0, 0.0, LocationKind::virtual_stop},
                                {"b", 0.0, 0.1, LocationKind::virtual_stop}};
  std::vector<Arc> arcs = {{"s", "a", "b", Mode::shuttle, 0, 12.0, 6.0, 0.0}};
  const TransitNetwork net = TransitNetwork::build(locs, arcs);
  Trip t;
  t.id = "t1";
  t.origin = "a";
  t.destination = "b";
  t.riders = 3;
  t.rider_class = RiderClass::existing;
  CostParameters p;
  p.alpha = 0.25;
  p.shuttle_cost_per_mile = 1.0;

  const DesignSolution sol = solve_fixed_demand({net, {t}, p});
  CHECK(sol.converged);
  CHECK(sol.design.open.empty());
  CHECK(sol.objective.bus_fixed_cost == 0.0);
  CHECK(sol.objective.total() ==
        doctest::Approx(arc_trip_contribution(net.arc("s"), t, p)).epsilon(1e-12));
}

TEST_CASE("unserveable trips are rejected up front") {
  std::vector<Location> locs = {{"H1", 0.0, 0.0, LocationKind::hub},
                                {"H2", 0.0, 0.1, LocationKind::hub}};
  std::vector<Arc> arcs = {{"b", "H1", "H2", Mode::bus, 2, 10.0, 5.0, 0.0},
                           {"br", "H2", "H1", Mode::bus, 2, 10.0, 5.0, 0.0}};
  const TransitNetwork net = TransitNetwork::build(locs, arcs);
  Trip t;
  t.id = "t1";
  t.origin = "H1";
  t.destination = "H2";
  t.riders = 1;
  t.rider_class = RiderClass::existing;
  // Only a bus connects the hubs: with every bus closed there is no fallback.
  CHECK_THROWS_WITH_AS(solve_fixed_demand({net, {t}, CostParameters{}}),
                       doctest::Contains("t1"), ValidationError);
}

TEST_CASE("checkpointing resumes to the same optimum") {
  const oracle::Fixture f = four_hub_fixture();

  const DesignSolution straight = solve_fixed_demand({f.net, f.trips, f.params});
  REQUIRE(straight.converged);

  BendersOptions first;
  first.max_iterations = 1;
  BendersState snapshot;
  first.on_iteration = [&snapshot](const BendersState& s) { snapshot = s; };
  const DesignSolution partial = solve_fixed_demand({f.net, f.trips, f.params}, first);
  CHECK(!partial.converged);

  // Round-trip the checkpoint through JSON like the CLI does.
  const std::string path =
      (std::filesystem::temp_directory_path() / "odmts_checkpoint_test.json").string();
  save_checkpoint(snapshot, path);
  const BendersState restored = load_checkpoint(path, f.net);
  CHECK(restored.cuts.size() == snapshot.cuts.size());
  CHECK(restored.incumbent.open_ids() == snapshot.incumbent.open_ids());

  BendersOptions resume;
  resume.resume_from = restored;
  const DesignSolution finished = solve_fixed_demand({f.net, f.trips, f.params}, resume);
  CHECK(finished.converged);
  CHECK(finished.objective.total() == doctest::Approx(straight.objective.total()).epsilon(1e-9));
  CHECK(finished.design.open_ids() == straight.design.open_ids());
  std::filesystem::remove(path);
}

TEST_CASE("exhausted budgets surface as non-convergence, not wrong answers") {
  const oracle::Fixture f = corridor_fixture();

  SUBCASE("wall-clock budget") {
    BendersOptions opts;
    opts.time_limit_s = 1e-9;
    const DesignSolution sol = solve_fixed_demand({f.net, f.trips, f.params}, opts);
    CHECK(!sol.converged);
    CHECK(sol.design.open.size() == f.net.bus_arc_ids().size());  // still a usable design
    CHECK(sol.routes.size() == f.trips.size());
  }

  SUBCASE("master node budget") {
    // One cut makes the relaxation fractional, so a single node cannot prove
    // optimality.
    const CutResult cut = generate_cut(f.trips[0], f.net, make_design(f.net, false), f.params);
    MasterOptions mopts;
    mopts.node_limit = 1;
    const MasterResult r = solve_master({cut.cut}, f.net, f.trips, f.params, mopts);
    CHECK(!r.optimal);

    BendersOptions opts;
    opts.master_node_limit = 1;
    const DesignSolution sol = solve_fixed_demand({f.net, f.trips, f.params}, opts);
    CHECK(!sol.converged);
  }
}

TEST_CASE("aggregated cuts reach the same objective") {
  const oracle::Fixture f = four_hub_fixture();
  BendersOptions agg;
  agg.aggregate_cuts = true;
  const DesignSolution a = solve_fixed_demand({f.net, f.trips, f.params}, agg);
  const DesignSolution b = solve_fixed_demand({f.net, f.trips, f.params});
  CHECK(a.converged);
  CHECK(a.objective.total() == doctest::Approx(b.objective.total()).epsilon(1e-6));
}
