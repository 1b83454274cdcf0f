#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "odmts/adoption.hpp"
#include "odmts/io.hpp"
#include "odmts/model.hpp"
#include "odmts/scenario.hpp"

// Reporting: solution JSON (the canonical artifact, stable key order),
// adoption and mode-distribution tables, cost/revenue summary, GeoJSON
// export, and the experiment driver used by the CLI. Every table row is a
// pure view over the solution JSON.

namespace odmts {

// Mode combination of a routed path, named after the reporting categories.
inline std::string classify_mode(const RoutedPath& path, const TransitNetwork& net) {
  bool shuttle = false, bus = false, rail = false;
  for (const std::string& id : path.arcs) {
    switch (net.arc(id).mode) {
      case Mode::shuttle: shuttle = true; break;
      case Mode::bus: bus = true; break;
      case Mode::rail: rail = true; break;
    }
  }
  if (shuttle && bus && rail) return "Shuttle, Bus, and Rail";
  if (shuttle && bus) return "Shuttle and Bus";
  if (shuttle && rail) return "Shuttle and Rail";
  if (bus && rail) return "Bus and Rail";
  if (bus) return "Bus";
  if (rail) return "Rail";
  if (shuttle) return "Shuttle only";
  return "None";
}

inline const std::vector<std::string>& mode_categories() {
  static const std::vector<std::string> kCategories = {
      "Bus",          "Bus and Rail",     "Shuttle and Bus", "Shuttle, Bus, and Rail",
      "Shuttle only", "Shuttle and Rail", "Rail"};
  return kCategories;
}

struct CostReport {
  double total_cost = 0.0;
  double bus_cost = 0.0;
  double shuttle_cost = 0.0;
  double revenue = 0.0;
  double net_profit_per_rider = 0.0;
  long ridership = 0;  // adopting potential riders
};

// Unweighted dollar accounting (no alpha), matching how operators see cost:
// bus cost from opened frequencies, shuttle cost from miles actually ridden
// by active riders, revenue from adopter tickets.
inline CostReport cost_report(const TransitNetwork& net, const std::vector<Trip>& trips,
                              const CostParameters& params, const BilevelSolution& sol) {
  CostReport r;
  for (const std::string& id : sol.design.open_ids()) {
    const Arc& a = net.arc(id);
    r.bus_cost += (a.travel_time / 60.0) * a.frequency * params.bus_cost_per_hour;
  }
  for (const Trip& t : trips) {
    const RiderOutcome& o = sol.riders.at(t.id);
    if (!o.adopted) continue;
    for (const std::string& id : o.route.arcs) {
      const Arc& a = net.arc(id);
      if (a.mode == Mode::shuttle)
        r.shuttle_cost += t.riders * a.distance * params.shuttle_cost_per_mile * a.cost_scale;
    }
    if (t.rider_class == RiderClass::potential) {
      r.revenue += t.riders * t.ticket_price;
      r.ridership += t.riders;
    }
  }
  r.total_cost = r.bus_cost + r.shuttle_cost;
  r.net_profit_per_rider =
      r.ridership > 0 ? (r.revenue - r.total_cost) / static_cast<double>(r.ridership) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Solution JSON
// ---------------------------------------------------------------------------

struct RunConfigEcho {
  std::string scenario = "baseline";
  bool dbl = false;
  double rho = 1.5;
  bool sync = false;
  double tolerance = 1e-6;
  int max_rounds = 20;
};

inline njson solution_to_json(const TransitNetwork& net, const std::vector<Trip>& trips,
                              const CostParameters& params, const BilevelSolution& sol,
                              const RunConfigEcho& echo) {
  njson doc;
  doc["schema"] = "odmts-solution/1";
  njson cfg;
  cfg["scenario"] = echo.scenario;
  cfg["dbl"] = echo.dbl;
  cfg["rho"] = echo.rho;
  cfg["sync"] = echo.sync;
  cfg["tolerance"] = echo.tolerance;
  cfg["max_rounds"] = echo.max_rounds;
  doc["config"] = std::move(cfg);

  njson design;
  design["open_arcs"] = njson::array();
  for (const std::string& id : sol.design.open_ids()) design["open_arcs"].push_back(id);
  doc["design"] = std::move(design);

  njson obj;
  obj["leader"] = sol.leader_objective;
  obj["bus_fixed_cost"] = sol.objective.bus_fixed_cost;
  obj["shuttle_cost"] = sol.objective.shuttle_cost;
  obj["inconvenience"] = sol.objective.inconvenience;
  obj["ticket_benefit"] = sol.ticket_benefit_total;
  doc["objective"] = std::move(obj);

  njson conv;
  conv["rounds"] = sol.rounds;
  conv["converged"] = sol.converged;
  conv["inner_converged"] = sol.inner_converged;
  doc["convergence"] = std::move(conv);

  doc["fixed_open_arcs"] = njson::array();
  for (const std::string& id : sol.fixed_open_arcs) doc["fixed_open_arcs"].push_back(id);

  long existing_count = 0, potential_count = 0, adopted_count = 0;
  njson riders = njson::array();
  std::map<std::string, const Trip*> by_id;
  for (const Trip& t : trips) by_id[t.id] = &t;
  for (const auto& [id, outcome] : sol.riders) {
    const Trip& t = *by_id.at(id);
    if (t.rider_class == RiderClass::existing) existing_count += t.riders;
    else {
      potential_count += t.riders;
      if (outcome.adopted) adopted_count += t.riders;
    }
    njson j;
    j["trip"] = id;
    j["class"] = to_string(t.rider_class);
    j["locality"] = to_string(t.locality);
    j["riders"] = t.riders;
    j["adopted"] = outcome.adopted;
    j["ratio"] = outcome.ratio;
    j["car_time"] = t.car_time;
    j["primary"] = outcome.route.primary_value;
    j["length"] = outcome.route.trip_length;
    j["hops"] = outcome.route.hop_count;
    j["mode_combination"] = classify_mode(outcome.route, net);
    j["arcs"] = njson::array();
    for (const std::string& arc : outcome.route.arcs) j["arcs"].push_back(arc);
    riders.push_back(std::move(j));
  }
  doc["counts"] = njson{{"existing_riders", existing_count},
                        {"potential_riders", potential_count},
                        {"adopted_riders", adopted_count}};
  doc["riders"] = std::move(riders);

  const CostReport cr = cost_report(net, trips, params, sol);
  njson cost;
  cost["ridership"] = cr.ridership;
  cost["total_cost"] = cr.total_cost;
  cost["bus_cost"] = cr.bus_cost;
  cost["shuttle_cost"] = cr.shuttle_cost;
  cost["revenue"] = cr.revenue;
  cost["net_profit_per_rider"] = cr.net_profit_per_rider;
  doc["cost_report"] = std::move(cost);
  return doc;
}

// Fixed-demand (design) result as JSON.
inline njson design_solution_to_json(const DesignSolution& sol) {
  njson doc;
  doc["schema"] = "odmts-design/1";
  njson design;
  design["open_arcs"] = njson::array();
  for (const std::string& id : sol.design.open_ids()) design["open_arcs"].push_back(id);
  doc["design"] = std::move(design);
  njson obj;
  obj["bus_fixed_cost"] = sol.objective.bus_fixed_cost;
  obj["shuttle_cost"] = sol.objective.shuttle_cost;
  obj["inconvenience"] = sol.objective.inconvenience;
  obj["total"] = sol.objective.total();
  doc["objective"] = std::move(obj);
  njson bounds;
  bounds["lower"] = sol.lower_bound;
  bounds["upper"] = sol.upper_bound;
  bounds["gap"] = sol.gap;
  doc["bounds"] = std::move(bounds);
  doc["iterations"] = sol.iterations;
  doc["converged"] = sol.converged;
  njson routes = njson::array();
  for (const auto& [id, path] : sol.routes) {
    njson j;
    j["trip"] = id;
    j["primary"] = path.primary_value;
    j["length"] = path.trip_length;
    j["hops"] = path.hop_count;
    j["arcs"] = njson::array();
    for (const std::string& arc : path.arcs) j["arcs"].push_back(arc);
    routes.push_back(std::move(j));
  }
  doc["routes"] = std::move(routes);
  return doc;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find(',') == std::string::npos) return s;
  return "\"" + s + "\"";
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string fmt_rate(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Per-class accumulators for the adoption table, all weighted by rider count.
struct ClassStats {
  long existing = 0;
  long potential = 0;
  long adopted = 0;
  double car_existing_minutes = 0.0;
  long car_existing_riders = 0;
  double odmts_existing_minutes = 0.0;
  double car_adopted_minutes = 0.0;
  long car_adopted_riders = 0;
  double odmts_adopted_minutes = 0.0;
};

}  // namespace detail

// Adoption / travel-time table for one run. Rows: local, non_local, all.
inline std::string adoption_table_csv(const std::vector<Trip>& trips,
                                      const BilevelSolution& sol) {
  std::map<std::string, detail::ClassStats> stats;
  auto& all = stats["all"];
  for (const Trip& t : trips) {
    const RiderOutcome& o = sol.riders.at(t.id);
    auto& s = stats[to_string(t.locality)];
    for (detail::ClassStats* c : {&s, &all}) {
      if (t.rider_class == RiderClass::existing) {
        c->existing += t.riders;
        c->odmts_existing_minutes += t.riders * o.route.trip_length;
        if (t.car_time > 0.0) {
          c->car_existing_minutes += t.riders * t.car_time;
          c->car_existing_riders += t.riders;
        }
      } else {
        c->potential += t.riders;
        if (o.adopted) {
          c->adopted += t.riders;
          c->odmts_adopted_minutes += t.riders * o.route.trip_length;
          if (t.car_time > 0.0) {
            c->car_adopted_minutes += t.riders * t.car_time;
            c->car_adopted_riders += t.riders;
          }
        }
      }
    }
  }
  std::string csv =
      "class,existing_count,potential_count,adoption_count,adoption_rate,"
      "avg_car_existing,avg_odmts_existing,avg_car_adopted,avg_odmts_adopted\n";
  for (const std::string& cls : {std::string("local"), std::string("non_local"), std::string("all")}) {
    const detail::ClassStats& s = stats[cls];
    const double rate = s.potential > 0 ? static_cast<double>(s.adopted) / s.potential : 0.0;
    csv += cls;
    csv += "," + std::to_string(s.existing);
    csv += "," + std::to_string(s.potential);
    csv += "," + std::to_string(s.adopted);
    csv += "," + detail::fmt_rate(rate);
    csv += "," + detail::fmt(s.car_existing_riders > 0 ? s.car_existing_minutes / s.car_existing_riders : 0.0);
    csv += "," + detail::fmt(s.existing > 0 ? s.odmts_existing_minutes / s.existing : 0.0);
    csv += "," + detail::fmt(s.car_adopted_riders > 0 ? s.car_adopted_minutes / s.car_adopted_riders : 0.0);
    csv += "," + detail::fmt(s.adopted > 0 ? s.odmts_adopted_minutes / s.adopted : 0.0);
    csv += "\n";
  }
  return csv;
}

// Mode distribution of adopted potential riders.
inline std::string mode_table_csv(const TransitNetwork& net, const std::vector<Trip>& trips,
                                  const BilevelSolution& sol) {
  std::map<std::string, std::pair<long, long>> counts;  // category -> (local, non_local)
  for (const Trip& t : trips) {
    if (t.rider_class != RiderClass::potential) continue;
    const RiderOutcome& o = sol.riders.at(t.id);
    if (!o.adopted) continue;
    auto& c = counts[classify_mode(o.route, net)];
    (t.locality == Locality::local ? c.first : c.second) += t.riders;
  }
  std::string csv = "mode_combination,local,non_local,total\n";
  for (const std::string& cat : mode_categories()) {
    const auto it = counts.find(cat);
    const long l = it != counts.end() ? it->second.first : 0;
    const long n = it != counts.end() ? it->second.second : 0;
    csv += detail::csv_field(cat) + "," + std::to_string(l) + "," + std::to_string(n) + "," +
           std::to_string(l + n) + "\n";
  }
  return csv;
}

inline std::string cost_report_csv(const CostReport& r) {
  std::string csv = "ridership,total_cost,bus_cost,shuttle_cost,revenue,net_profit_per_rider\n";
  csv += std::to_string(r.ridership);
  csv += "," + detail::fmt(r.total_cost);
  csv += "," + detail::fmt(r.bus_cost);
  csv += "," + detail::fmt(r.shuttle_cost);
  csv += "," + detail::fmt(r.revenue);
  csv += "," + detail::fmt(r.net_profit_per_rider);
  csv += "\n";
  return csv;
}

// ---------------------------------------------------------------------------
// GeoJSON
// ---------------------------------------------------------------------------

// Network map: every open bus arc, every rail arc, and every shuttle arc that
// carries at least one active rider. `riders` weights the line like the map
// figures' thickness.
inline njson network_geojson(const TransitNetwork& net, const std::vector<Trip>& trips,
                             const BilevelSolution& sol) {
  std::map<std::string, long> usage;
  for (const Trip& t : trips) {
    const RiderOutcome& o = sol.riders.at(t.id);
    if (!o.adopted) continue;
    for (const std::string& id : o.route.arcs) usage[id] += t.riders;
  }
  njson features = njson::array();
  for (const Arc& a : net.arcs()) {  // network order is input order; sort below
    bool include = false;
    if (a.mode == Mode::rail) include = true;
    else if (a.mode == Mode::bus) include = sol.design.is_open(a.id);
    else include = usage.count(a.id) && usage.at(a.id) > 0;
    if (!include) continue;
    const Location& t = net.location(a.tail);
    const Location& h = net.location(a.head);
    njson f;
    f["type"] = "Feature";
    f["geometry"] = njson{{"type", "LineString"},
                          {"coordinates", njson::array({njson::array({t.lon, t.lat}),
                                                        njson::array({h.lon, h.lat})})}};
    njson props;
    props["arc"] = a.id;
    props["mode"] = to_string(a.mode);
    props["open"] = a.mode != Mode::bus || sol.design.is_open(a.id);
    props["riders"] = usage.count(a.id) ? usage.at(a.id) : 0;
    props["travel_time"] = a.travel_time;
    if (a.mode != Mode::shuttle) props["frequency"] = a.frequency;
    f["properties"] = std::move(props);
    features.push_back(std::move(f));
  }
  std::sort(features.begin(), features.end(), [](const njson& a, const njson& b) {
    return a["properties"]["arc"].get<std::string>() < b["properties"]["arc"].get<std::string>();
  });
  njson doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  return doc;
}

// ---------------------------------------------------------------------------
// Paired (no-DBL vs DBL) comparison, from two solution JSON files
// ---------------------------------------------------------------------------

struct SolutionView {
  struct Rider {
    std::string trip;
    RiderClass cls = RiderClass::existing;
    Locality locality = Locality::local;
    long riders = 1;
    bool adopted = false;
    double length = 0.0;
    double car_time = 0.0;
    std::string mode_combination;
    std::vector<std::string> arcs;
  };
  std::map<std::string, Rider> riders;
  std::vector<std::string> open_arcs;
};

inline SolutionView load_solution_view(const std::string& path) {
  const njson doc = parse_json_file(path);
  if (!doc.contains("schema") || doc["schema"] != "odmts-solution/1")
    throw ValidationError("'" + path + "': not an odmts-solution/1 document");
  SolutionView view;
  for (const njson& id : doc["design"]["open_arcs"]) view.open_arcs.push_back(id.get<std::string>());
  for (const njson& j : doc["riders"]) {
    SolutionView::Rider r;
    r.trip = j["trip"].get<std::string>();
    r.cls = j["class"] == "existing" ? RiderClass::existing : RiderClass::potential;
    r.locality = j["locality"] == "local" ? Locality::local : Locality::non_local;
    r.riders = j["riders"].get<long>();
    r.adopted = j["adopted"].get<bool>();
    r.length = j["length"].get<double>();
    r.car_time = j["car_time"].get<double>();
    r.mode_combination = j["mode_combination"].get<std::string>();
    for (const njson& arc : j["arcs"]) r.arcs.push_back(arc.get<std::string>());
    view.riders[r.trip] = std::move(r);
  }
  return view;
}

// GeoJSON rebuilt from a saved solution (the `export-geojson` verb). Pass the
// same scaled instance the run used so travel times match.
inline njson network_geojson_from_view(const TransitNetwork& net, const SolutionView& view) {
  std::set<std::string> open(view.open_arcs.begin(), view.open_arcs.end());
  std::map<std::string, long> usage;
  for (const auto& [id, r] : view.riders) {
    if (!r.adopted) continue;
    for (const std::string& arc : r.arcs) usage[arc] += r.riders;
  }
  njson features = njson::array();
  for (const Arc& a : net.arcs()) {
    bool include = false;
    if (a.mode == Mode::rail) include = true;
    else if (a.mode == Mode::bus) include = open.count(a.id) > 0;
    else include = usage.count(a.id) && usage.at(a.id) > 0;
    if (!include) continue;
    const Location& t = net.location(a.tail);
    const Location& h = net.location(a.head);
    njson f;
    f["type"] = "Feature";
    f["geometry"] = njson{{"type", "LineString"},
                          {"coordinates", njson::array({njson::array({t.lon, t.lat}),
                                                        njson::array({h.lon, h.lat})})}};
    njson props;
    props["arc"] = a.id;
    props["mode"] = to_string(a.mode);
    props["open"] = a.mode != Mode::bus || open.count(a.id) > 0;
    props["riders"] = usage.count(a.id) ? usage.at(a.id) : 0;
    props["travel_time"] = a.travel_time;
    if (a.mode != Mode::shuttle) props["frequency"] = a.frequency;
    f["properties"] = std::move(props);
    features.push_back(std::move(f));
  }
  std::sort(features.begin(), features.end(), [](const njson& a, const njson& b) {
    return a["properties"]["arc"].get<std::string>() < b["properties"]["arc"].get<std::string>();
  });
  njson doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  return doc;
}

// Adoption table with PreDBL/PostDBL split: adopters of the DBL run are
// PreDBL when the base (no-DBL) run also adopted them, PostDBL otherwise.
inline std::string paired_adoption_table_csv(const SolutionView& base, const SolutionView& dbl) {
  struct Row {
    long existing = 0, potential = 0, adopted = 0, pre = 0, post = 0;
    double car_existing = 0.0;
    long car_existing_riders = 0;
    double odmts_existing = 0.0, odmts_pre = 0.0, odmts_post = 0.0;
  };
  std::map<std::string, Row> rows;
  for (const auto& [id, r] : dbl.riders) {
    auto bit = base.riders.find(id);
    if (bit == base.riders.end())
      throw ValidationError("paired report: trip '" + id + "' missing from the base run");
    const auto& b = bit->second;
    auto apply = [&](Row& row) {
      if (r.cls == RiderClass::existing) {
        row.existing += r.riders;
        row.odmts_existing += r.riders * r.length;
        if (r.car_time > 0.0) {
          row.car_existing += r.riders * r.car_time;
          row.car_existing_riders += r.riders;
        }
        return;
      }
      row.potential += r.riders;
      if (!r.adopted) return;
      row.adopted += r.riders;
      if (b.adopted) {
        row.pre += r.riders;
        row.odmts_pre += r.riders * r.length;
      } else {
        row.post += r.riders;
        row.odmts_post += r.riders * r.length;
      }
    };
    apply(rows[to_string(r.locality)]);
    apply(rows["all"]);
  }
  std::string csv =
      "class,existing_count,potential_count,adoption_count,adoption_rate,pre_dbl,post_dbl,"
      "avg_car_existing,avg_odmts_existing,avg_odmts_predbl,avg_odmts_postdbl\n";
  for (const std::string& cls : {std::string("local"), std::string("non_local"), std::string("all")}) {
    const Row& s = rows[cls];
    const double rate = s.potential > 0 ? static_cast<double>(s.adopted) / s.potential : 0.0;
    csv += cls;
    csv += "," + std::to_string(s.existing);
    csv += "," + std::to_string(s.potential);
    csv += "," + std::to_string(s.adopted);
    csv += "," + detail::fmt_rate(rate);
    csv += "," + std::to_string(s.pre);
    csv += "," + std::to_string(s.post);
    csv += "," + detail::fmt(s.car_existing_riders > 0 ? s.car_existing / s.car_existing_riders : 0.0);
    csv += "," + detail::fmt(s.existing > 0 ? s.odmts_existing / s.existing : 0.0);
    csv += "," + detail::fmt(s.pre > 0 ? s.odmts_pre / s.pre : 0.0);
    csv += "," + detail::fmt(s.post > 0 ? s.odmts_post / s.post : 0.0);
    csv += "\n";
  }
  return csv;
}

inline std::string paired_mode_table_csv(const SolutionView& base, const SolutionView& dbl) {
  std::map<std::string, std::array<long, 4>> counts;  // base_l, base_nl, dbl_l, dbl_nl
  auto tally = [&](const SolutionView& v, int offset) {
    for (const auto& [id, r] : v.riders) {
      if (r.cls != RiderClass::potential || !r.adopted) continue;
      counts[r.mode_combination][static_cast<std::size_t>(
          offset + (r.locality == Locality::local ? 0 : 1))] += r.riders;
    }
  };
  tally(base, 0);
  tally(dbl, 2);
  std::string csv = "mode_combination,no_dbl_local,no_dbl_non_local,dbl_local,dbl_non_local\n";
  for (const std::string& cat : mode_categories()) {
    const auto it = counts.find(cat);
    const std::array<long, 4> c = it != counts.end() ? it->second : std::array<long, 4>{0, 0, 0, 0};
    csv += detail::csv_field(cat);
    for (long v : c) csv += "," + std::to_string(v);
    csv += "\n";
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string instance_path;
  ScenarioTag scenario = ScenarioTag::baseline;
  std::string qrl_path;      // required when scaling
  std::string queries_path;  // build the matrix from a query dump...
  std::string matrix_path;   // ...or load a prebuilt one
  std::string overlay_path;  // DBL overlay; empty = no DBL
  std::vector<double> rho_values = {1.5};
  bool sync = false;
  double tolerance = 1e-6;
  int max_rounds = 20;
  int benders_max_iterations = 500;
  std::string out_dir;
};

struct PreparedInputs {
  Instance instance;
  std::vector<std::string> warnings;
  bool dbl = false;
};

// Resolve scenario inputs: load the instance and apply scaling and the DBL
// overlay as configured. A baseline run without QRL inputs skips scaling but
// still honors the overlay.
inline PreparedInputs prepare_inputs(const ExperimentConfig& cfg) {
  PreparedInputs prep;
  prep.instance = load_instance(cfg.instance_path);
  prep.dbl = !cfg.overlay_path.empty();

  std::optional<DblOverlay> overlay;
  if (prep.dbl) {
    overlay = load_overlay(cfg.overlay_path);
    overlay->validate(prep.instance.network);
  }

  const bool have_factors = !cfg.matrix_path.empty() || !cfg.queries_path.empty();
  if (cfg.scenario != ScenarioTag::baseline && !have_factors)
    throw ValidationError("scenario '" + std::string(to_string(cfg.scenario)) +
                          "' needs --matrix or --queries");
  if (have_factors) {
    if (cfg.qrl_path.empty()) throw ValidationError("scaling requires --qrl");
    const QrlSet qrls = load_qrls_csv(cfg.qrl_path);
    ScalingMatrix matrix;
    if (!cfg.matrix_path.empty()) {
      matrix = load_matrix(cfg.matrix_path);
      // Hand-built factor sets carry the 'custom' tag and pass under any run.
      if (matrix.scenario != cfg.scenario && matrix.scenario != ScenarioTag::custom)
        throw ValidationError(std::string("matrix file is tagged '") + to_string(matrix.scenario) +
                              "' but the run asks for '" + to_string(cfg.scenario) + "'");
    } else {
      matrix = build_scaling_matrix(load_query_dump_csv(cfg.queries_path), cfg.scenario);
    }
    ScenarioResult scaled = apply_scenario(prep.instance, qrls, matrix, overlay);
    prep.instance = std::move(scaled.instance);
    prep.warnings = std::move(scaled.warnings);
  } else if (overlay) {
    // Overlay alone: free-flow minutes replace the (unscaled) bus times.
    std::vector<Arc> arcs = prep.instance.network.arcs();
    for (Arc& a : arcs) {
      auto it = overlay->freeflow_minutes.find(a.id);
      if (it != overlay->freeflow_minutes.end()) a.travel_time = it->second;
    }
    prep.instance.network = TransitNetwork::build(prep.instance.network.locations(), std::move(arcs));
  }
  if (cfg.sync) prep.instance.params.synchronized = true;
  return prep;
}

struct ExperimentResult {
  std::vector<SweepEntry> entries;
  std::vector<std::string> written;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string rho_dir_name(double rho) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "rho_%g", rho);
  return buf;
}

inline void write_tracked(std::vector<std::string>& written, const std::string& path,
                          const std::string& text) {
  write_text_file(path, text);
  written.push_back(path);
}

inline void write_run_artifacts(const PreparedInputs& prep, const ExperimentConfig& cfg,
                                double rho, const BilevelSolution& sol, const std::string& dir,
                                std::vector<std::string>& written) {
  std::filesystem::create_directories(dir);
  RunConfigEcho echo;
  echo.scenario = to_string(cfg.scenario);
  echo.dbl = prep.dbl;
  echo.rho = rho;
  echo.sync = cfg.sync;
  echo.tolerance = cfg.tolerance;
  echo.max_rounds = cfg.max_rounds;
  const Instance& inst = prep.instance;
  write_tracked(written, dir + "/solution.json",
                solution_to_json(inst.network, inst.trips, inst.params, sol, echo).dump(2) + "\n");
  write_tracked(written, dir + "/adoption_table.csv", adoption_table_csv(inst.trips, sol));
  write_tracked(written, dir + "/mode_table.csv", mode_table_csv(inst.network, inst.trips, sol));
  write_tracked(written, dir + "/cost_report.csv",
                cost_report_csv(cost_report(inst.network, inst.trips, inst.params, sol)));
  write_tracked(written, dir + "/network.geojson",
                network_geojson(inst.network, inst.trips, sol).dump(2) + "\n");
}

}  // namespace detail

// Run one experiment (single rho) or a sweep (several). Writes all artifacts
// under cfg.out_dir; on failure, removes whatever was already written.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  try {
    PreparedInputs prep = prepare_inputs(cfg);
    result.warnings = prep.warnings;

    SolveLimits limits;
    limits.benders_tolerance = cfg.tolerance;
    limits.max_rounds = cfg.max_rounds;
    limits.benders_max_iterations = cfg.benders_max_iterations;

    std::filesystem::create_directories(cfg.out_dir);
    const bool sweep = cfg.rho_values.size() > 1;

    for (double rho : cfg.rho_values) {
      CostParameters params = prep.instance.params;
      if (!(rho >= 0.0) || !std::isfinite(rho))
        throw ValidationError("rho must be finite and >= 0");
      params.adoption_factor = rho;
      BilevelSolution sol = solve_bilevel(prep.instance.network, prep.instance.trips, params, limits);
      const std::string dir = sweep ? cfg.out_dir + "/" + detail::rho_dir_name(rho) : cfg.out_dir;
      PreparedInputs run = prep;
      run.instance.params = params;
      detail::write_run_artifacts(run, cfg, rho, sol, dir, result.written);
      result.entries.push_back({rho, std::move(sol)});
    }

    if (sweep) {
      std::string summary =
          "rho,adoption_count_local,adoption_rate_local,adoption_count_non_local,"
          "adoption_rate_non_local,adoption_count_all,adoption_rate_all,leader_objective\n";
      std::string ratios = "rho,trip,locality,riders,ratio,adopted\n";
      for (const SweepEntry& e : result.entries) {
        long adopted_l = 0, pot_l = 0, adopted_n = 0, pot_n = 0;
        for (const Trip& t : prep.instance.trips) {
          if (t.rider_class != RiderClass::potential) continue;
          const RiderOutcome& o = e.solution.riders.at(t.id);
          (t.locality == Locality::local ? pot_l : pot_n) += t.riders;
          if (o.adopted) (t.locality == Locality::local ? adopted_l : adopted_n) += t.riders;
          ratios += detail::fmt(e.rho) + "," + t.id + "," + to_string(t.locality) + "," +
                    std::to_string(t.riders) + "," + detail::fmt_rate(o.ratio) + "," +
                    (o.adopted ? "1" : "0") + "\n";
        }
        const long pot_all = pot_l + pot_n, adopted_all = adopted_l + adopted_n;
        summary += detail::fmt(e.rho);
        summary += "," + std::to_string(adopted_l);
        summary += "," + detail::fmt_rate(pot_l > 0 ? static_cast<double>(adopted_l) / pot_l : 0.0);
        summary += "," + std::to_string(adopted_n);
        summary += "," + detail::fmt_rate(pot_n > 0 ? static_cast<double>(adopted_n) / pot_n : 0.0);
        summary += "," + std::to_string(adopted_all);
        summary += "," + detail::fmt_rate(pot_all > 0 ? static_cast<double>(adopted_all) / pot_all : 0.0);
        summary += "," + detail::fmt(e.solution.leader_objective);
        summary += "\n";
      }
      detail::write_tracked(result.written, cfg.out_dir + "/sweep_summary.csv", summary);
      detail::write_tracked(result.written, cfg.out_dir + "/ratios.csv", ratios);
    }
  } catch (...) {
    std::error_code ec;
    for (const std::string& path : result.written) std::filesystem::remove(path, ec);
    throw;
  }
  return result;
}

}  // namespace odmts
