#include <filesystem>
#include <random>

#include "doctest.h"
#include "odmts/io.hpp"
#include "odmts/scenario.hpp"
#include "oracles.hpp"

using namespace odmts;

namespace {

// Three QRLs; q2 is the one closest to q1.
QrlSet three_qrls() {
  QrlSet q;
  q.points = {{"q1", 0.0, 0.0}, {"q2", 0.0, 0.1}, {"q3", 1.0, 1.0}};
  return q;
}

std::vector<TravelTimeQuery> demo_queries() {
  return {
      {"q1", "q2", 10.0, 12.0, 18.0},
      {"q2", "q1", 10.0, 11.0, 14.0},
      {"q1", "q3", 20.0, 24.0, 30.0},
      {"q3", "q1", 20.0, 22.0, 28.0},
      {"q2", "q3", 15.0, 15.0, 22.5},
      {"q3", "q2", 15.0, 16.5, 21.0},
  };
}

}  // namespace

TEST_CASE("scaling factors are scenario ratios over the baseline") {
  const auto queries = demo_queries();

  const ScalingMatrix expected = build_scaling_matrix(queries, ScenarioTag::expected);
  CHECK(expected.at("q1", "q2") == doctest::Approx(1.2));

  const ScalingMatrix pessimistic = build_scaling_matrix(queries, ScenarioTag::pessimistic);
  CHECK(pessimistic.at("q1", "q2") == doctest::Approx(1.8));

  const ScalingMatrix fifty = build_scaling_matrix(queries, ScenarioTag::fifty_fifty);
  CHECK(fifty.at("q1", "q2") == doctest::Approx(1.5));  // midpoint of 1.2 and 1.8

  const ScalingMatrix baseline = build_scaling_matrix(queries, ScenarioTag::baseline);
  for (const auto& [pair, f] : baseline.factors) CHECK(f == 1.0);
}

TEST_CASE("scaling matrix rejects zero baselines and missing pairs") {
  CHECK_THROWS_AS(build_scaling_matrix({{"a", "b", 0.0, 5.0, 6.0}}, ScenarioTag::expected),
                  ValidationError);
  const ScalingMatrix m = build_scaling_matrix(demo_queries(), ScenarioTag::expected);
  CHECK_THROWS_WITH_AS(m.at("q1", "missing"), doctest::Contains("(q1,missing)"), ValidationError);
}

TEST_CASE("scale_od_time multiplies the basis by the nearest-pair factor") {
  const QrlSet qrls = three_qrls();
  ScalingMatrix m;
  m.scenario = ScenarioTag::custom;
  m.factors[{"q1", "q2"}] = 1.1;
  m.factors[{"q2", "q1"}] = 1.05;
  m.factors[{"q1", "q3"}] = 1.3;
  m.factors[{"q3", "q1"}] = 1.25;
  m.factors[{"q2", "q3"}] = 1.15;
  m.factors[{"q3", "q2"}] = 1.2;

  // origin near q1, destination near q3.
  CHECK(scale_od_time(0.01, 0.0, 0.99, 1.0, 20.0, qrls, m) == doctest::Approx(26.0));

  // Both endpoints map to q1: fall back to (q1, nearest-other = q2).
  CHECK(scale_od_time(0.0, 0.001, 0.0, 0.002, 10.0, qrls, m) == doctest::Approx(11.0));

  const ScalingMatrix baseline = build_scaling_matrix(demo_queries(), ScenarioTag::baseline);
  CHECK(scale_od_time(0.01, 0.0, 0.99, 1.0, 37.5, qrls, baseline) == 37.5);

  CHECK_THROWS_AS(scale_od_time(0.0, 0.0, 1.0, 1.0, 10.0, QrlSet{}, m), ValidationError);
}

namespace {

// Two hubs in different QRL regions plus a close-by virtual stop, with a bus
// pair and one shuttle.
Instance corridor_instance() {
  Instance inst;
  std::vector<Location> locs = {{"A", 0.0, 0.01, LocationKind::hub},
                                {"B", 0.0, 0.99, LocationKind::hub},
                                {"V", 0.0, 0.02, LocationKind::virtual_stop}};
  std::vector<Arc> arcs = {
      {"ab", "A", "B", Mode::bus, 6, 10.0, 30.0, 0.0},
      {"ba", "B", "A", Mode::bus, 6, 10.0, 30.0, 0.0},
      {"va", "V", "A", Mode::shuttle, 0, 8.0, 4.0, 0.0},
      {"rab", "A", "B", Mode::rail, 10, 25.0, 30.0, 0.0},
  };
  inst.network = TransitNetwork::build(std::move(locs), std::move(arcs));
  Trip t;
  t.id = "t1";
  t.origin = "V";
  t.destination = "B";
  t.riders = 2;
  t.rider_class = RiderClass::potential;
  t.car_time = 30.0;
  t.ticket_price = 5.0;
  inst.trips.push_back(t);
  return inst;
}

QrlSet corridor_qrls() {
  QrlSet q;
  q.points = {{"q1", 0.0, 0.0}, {"q2", 0.0, 1.0}};
  return q;
}

ScalingMatrix corridor_matrix(double fwd, double rev, double local) {
  ScalingMatrix m;
  m.scenario = ScenarioTag::custom;
  m.factors[{"q1", "q2"}] = fwd;
  m.factors[{"q2", "q1"}] = rev;
  (void)local;
  return m;
}

}  // namespace

TEST_CASE("apply_congestion scales road arcs, leaves rail, honors the overlay") {
  const Instance inst = corridor_instance();
  const QrlSet qrls = corridor_qrls();
  const ScalingMatrix m = corridor_matrix(1.2, 1.5, 1.2);

  SUBCASE("hand-traced scaling") {
    const CongestionResult r = apply_congestion(inst.network, qrls, m);
    CHECK(r.network.arc("ab").travel_time == doctest::Approx(12.0));   // q1->q2: 1.2
    CHECK(r.network.arc("ba").travel_time == doctest::Approx(15.0));   // q2->q1: 1.5
    CHECK(r.network.arc("va").travel_time == doctest::Approx(9.6));    // q1->q1 -> (q1,q2): 1.2
    CHECK(r.network.arc("va").cost_scale == doctest::Approx(1.2));     // shuttle $/mile tracks R
    CHECK(r.network.arc("ab").cost_scale == 1.0);
    CHECK(r.network.arc("rab").travel_time == 25.0);                   // rail keeps its timetable
    CHECK(inst.network.arc("ab").travel_time == 10.0);                 // input unchanged
  }

  SUBCASE("overlay pins the free-flow time regardless of the factor") {
    DblOverlay overlay;
    overlay.freeflow_minutes["ab"] = 7.0;
    const CongestionResult r = apply_congestion(inst.network, qrls, m, overlay);
    CHECK(r.network.arc("ab").travel_time == 7.0);
    CHECK(r.network.arc("ba").travel_time == doctest::Approx(15.0));
    CHECK(r.warnings.empty());
  }

  SUBCASE("overlay above the congested time warns but applies") {
    DblOverlay overlay;
    overlay.freeflow_minutes["ab"] = 99.0;
    const CongestionResult r = apply_congestion(inst.network, qrls, m, overlay);
    CHECK(r.network.arc("ab").travel_time == 99.0);
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("ab") != std::string::npos);
  }

  SUBCASE("overlay referencing a non-bus or unknown arc is a configuration error") {
    DblOverlay overlay;
    overlay.freeflow_minutes["va"] = 5.0;
    CHECK_THROWS_AS(apply_congestion(inst.network, qrls, m, overlay), ValidationError);
    DblOverlay unknown;
    unknown.freeflow_minutes["nope"] = 5.0;
    CHECK_THROWS_WITH_AS(apply_congestion(inst.network, qrls, m, unknown),
                         doctest::Contains("nope"), ValidationError);
  }

  SUBCASE("baseline matrix reproduces input times exactly") {
    ScalingMatrix baseline = corridor_matrix(1.0, 1.0, 1.0);
    baseline.scenario = ScenarioTag::baseline;
    const CongestionResult r = apply_congestion(inst.network, qrls, baseline);
    for (const Arc& a : inst.network.arcs())
      CHECK(r.network.arc(a.id).travel_time == a.travel_time);
  }
}

TEST_CASE("apply_scenario also scales trip car times") {
  const Instance inst = corridor_instance();
  const ScenarioResult r =
      apply_scenario(inst, corridor_qrls(), corridor_matrix(1.2, 1.5, 1.2));
  CHECK(r.instance.trips.at(0).car_time == doctest::Approx(36.0));  // V->B crosses q1->q2
}

TEST_CASE("scenario scaling is monotone and the overlay idempotent") {
  std::mt19937 rng(23);
  const QrlSet qrls = corridor_qrls();
  for (int i = 0; i < 25; ++i) {
    const Instance inst = corridor_instance();
    const double f1 = oracle::uniform(rng, 0.8, 1.6);
    const double f2 = f1 + oracle::uniform(rng, 0.0, 0.8);
    const double r1 = oracle::uniform(rng, 0.8, 1.6);
    const double r2 = r1 + oracle::uniform(rng, 0.0, 0.8);
    const CongestionResult low = apply_congestion(inst.network, qrls, corridor_matrix(f1, r1, f1));
    const CongestionResult high = apply_congestion(inst.network, qrls, corridor_matrix(f2, r2, f2));
    for (const Arc& a : inst.network.arcs())
      CHECK(low.network.arc(a.id).travel_time <= high.network.arc(a.id).travel_time + 1e-12);

    // DBL dominance when the free-flow invariant holds, and idempotence.
    DblOverlay overlay;
    overlay.freeflow_minutes["ab"] = oracle::uniform(rng, 1.0, 7.9);
    const CongestionResult once = apply_congestion(inst.network, qrls,
                                                   corridor_matrix(f2, r2, f2), overlay);
    CHECK(once.warnings.empty());
    CHECK(once.network.arc("ab").travel_time <= high.network.arc("ab").travel_time);
    std::vector<Arc> arcs = once.network.arcs();
    for (Arc& a : arcs) {
      auto it = overlay.freeflow_minutes.find(a.id);
      if (it != overlay.freeflow_minutes.end()) a.travel_time = it->second;
    }
    const TransitNetwork twice = TransitNetwork::build(once.network.locations(), arcs);
    for (const Arc& a : twice.arcs())
      CHECK(a.travel_time == once.network.arc(a.id).travel_time);
  }
}

TEST_CASE("nearest qrl ties break toward the lowest id") {
  QrlSet q;
  q.points = {{"qb", 0.0, 0.1}, {"qa", 0.0, -0.1}};  // equidistant from the origin
  CHECK(nearest_qrl(q, 0.0, 0.0).id == "qa");
}

TEST_CASE("qrl and query dump csv parsing") {
  const std::string dir = std::filesystem::temp_directory_path().string();
  const std::string qrl_path = dir + "/odmts_test_qrls.csv";
  write_text_file(qrl_path, "id,lat,lon\nq1,33.9,-84.1\nq2,33.8,-84.4\n");
  const QrlSet qrls = load_qrls_csv(qrl_path);
  CHECK(qrls.points.size() == 2);
  CHECK(qrls.points[1].lon == doctest::Approx(-84.4));

  const std::string dump_path = dir + "/odmts_test_queries.csv";
  write_text_file(dump_path,
                  "from_id,to_id,baseline_min,expected_min,pessimistic_min\n"
                  "q1,q2,10,12,18\nq2,q1,10,11,14\n");
  const auto queries = load_query_dump_csv(dump_path);
  CHECK(queries.size() == 2);
  CHECK(build_scaling_matrix(queries, ScenarioTag::fifty_fifty).at("q1", "q2") ==
        doctest::Approx(1.5));

  write_text_file(dump_path, "q1,q2,10,not_a_number,18\n");
  CHECK_THROWS_AS(load_query_dump_csv(dump_path), ValidationError);
  std::filesystem::remove(qrl_path);
  std::filesystem::remove(dump_path);
}
