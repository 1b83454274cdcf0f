#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "odmts/benders.hpp"
#include "odmts/model.hpp"
#include "odmts/scenario.hpp"

// File formats. Instances are one JSON document with arrays `locations`,
// `arcs`, `trips` and an object `parameters`; QRLs and query dumps are CSV;
// scaling matrices, DBL overlays, and solver checkpoints are JSON. All
// output uses ordered keys so repeated runs are byte-identical.

namespace odmts {

using njson = nlohmann::ordered_json;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed while reading '" + path + "'");
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed while writing '" + path + "'");
}

inline njson parse_json_file(const std::string& path) {
  try {
    return njson::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
}

namespace detail {

inline const njson& require_key(const njson& obj, const std::string& key,
                                const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(context + ": missing field '" + key + "'");
  return *it;
}

inline double require_number(const njson& obj, const std::string& key,
                             const std::string& context) {
  const njson& v = require_key(obj, key, context);
  if (!v.is_number()) throw ValidationError(context + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline double number_or(const njson& obj, const std::string& key, double fallback,
                        const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) throw ValidationError(context + ": field '" + key + "' must be a number");
  return it->get<double>();
}

inline std::string require_string(const njson& obj, const std::string& key,
                                  const std::string& context) {
  const njson& v = require_key(obj, key, context);
  if (!v.is_string()) throw ValidationError(context + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline int require_int(const njson& obj, const std::string& key, const std::string& context) {
  const njson& v = require_key(obj, key, context);
  if (!v.is_number_integer())
    throw ValidationError(context + ": field '" + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Instance
// ---------------------------------------------------------------------------

inline Instance instance_from_json(const njson& doc) {
  Instance inst;

  std::vector<Location> locations;
  for (const njson& j : detail::require_key(doc, "locations", "instance")) {
    const std::string id = detail::require_string(j, "id", "location");
    const std::string ctx = "location '" + id + "'";
    Location loc;
    loc.id = id;
    loc.lat = detail::require_number(j, "lat", ctx);
    loc.lon = detail::require_number(j, "lon", ctx);
    const std::string kind = detail::require_string(j, "kind", ctx);
    if (kind == "hub") loc.kind = LocationKind::hub;
    else if (kind == "virtual_stop") loc.kind = LocationKind::virtual_stop;
    else throw ValidationError(ctx + ": unknown kind '" + kind + "'");
    locations.push_back(std::move(loc));
  }

  std::vector<Arc> arcs;
  for (const njson& j : detail::require_key(doc, "arcs", "instance")) {
    const std::string id = detail::require_string(j, "id", "arc");
    const std::string ctx = "arc '" + id + "'";
    Arc a;
    a.id = id;
    a.tail = detail::require_string(j, "tail", ctx);
    a.head = detail::require_string(j, "head", ctx);
    const std::string mode = detail::require_string(j, "mode", ctx);
    if (mode == "shuttle") a.mode = Mode::shuttle;
    else if (mode == "bus") a.mode = Mode::bus;
    else if (mode == "rail") a.mode = Mode::rail;
    else throw ValidationError(ctx + ": unknown mode '" + mode + "'");
    a.travel_time = detail::require_number(j, "travel_time", ctx);
    a.distance = detail::number_or(j, "distance", 0.0, ctx);
    a.wait_time = detail::number_or(j, "wait_time", 0.0, ctx);
    a.cost_scale = detail::number_or(j, "cost_scale", 1.0, ctx);
    if (a.mode != Mode::shuttle) {
      a.frequency = detail::require_int(j, "frequency", ctx);
    } else if (j.contains("frequency")) {
      throw ValidationError(ctx + ": shuttle arcs carry no frequency");
    }
    arcs.push_back(std::move(a));
  }

  inst.network = TransitNetwork::build(std::move(locations), std::move(arcs));

  for (const njson& j : detail::require_key(doc, "trips", "instance")) {
    const std::string id = detail::require_string(j, "id", "trip");
    const std::string ctx = "trip '" + id + "'";
    Trip t;
    t.id = id;
    t.origin = detail::require_string(j, "origin", ctx);
    t.destination = detail::require_string(j, "destination", ctx);
    const njson& riders = detail::require_key(j, "riders", ctx);
    if (!riders.is_number_integer())
      throw ValidationError(ctx + ": riders must be an integer (fractional demand rejected)");
    t.riders = riders.get<int>();
    const std::string cls = detail::require_string(j, "rider_class", ctx);
    if (cls == "existing") t.rider_class = RiderClass::existing;
    else if (cls == "potential") t.rider_class = RiderClass::potential;
    else throw ValidationError(ctx + ": unknown rider_class '" + cls + "'");
    if (j.contains("locality")) {
      const std::string loc = detail::require_string(j, "locality", ctx);
      if (loc == "local") t.locality = Locality::local;
      else if (loc == "non_local") t.locality = Locality::non_local;
      else throw ValidationError(ctx + ": unknown locality '" + loc + "'");
    }
    t.car_time = detail::number_or(j, "car_time", 0.0, ctx);
    t.ticket_price = detail::number_or(j, "ticket_price", 0.0, ctx);
    inst.trips.push_back(std::move(t));
  }

  if (doc.contains("parameters")) {
    const njson& p = doc["parameters"];
    const std::string ctx = "parameters";
    inst.params.alpha = detail::number_or(p, "alpha", inst.params.alpha, ctx);
    inst.params.bus_cost_per_hour =
        detail::number_or(p, "bus_cost_per_hour", inst.params.bus_cost_per_hour, ctx);
    inst.params.shuttle_cost_per_mile =
        detail::number_or(p, "shuttle_cost_per_mile", inst.params.shuttle_cost_per_mile, ctx);
    inst.params.adoption_factor =
        detail::number_or(p, "adoption_factor", inst.params.adoption_factor, ctx);
    inst.params.wait_minutes_bus_rail =
        detail::number_or(p, "wait_minutes_bus_rail", inst.params.wait_minutes_bus_rail, ctx);
    if (p.contains("transfer_limit")) {
      const njson& k = p["transfer_limit"];
      if (k.is_string()) {
        if (k.get<std::string>() != "unbounded")
          throw ValidationError("parameters: transfer_limit must be an integer or \"unbounded\"");
        inst.params.transfer_limit.reset();
      } else if (k.is_null()) {
        inst.params.transfer_limit.reset();
      } else if (k.is_number_integer()) {
        inst.params.transfer_limit = k.get<int>();
      } else {
        throw ValidationError("parameters: transfer_limit must be an integer or \"unbounded\"");
      }
    }
    if (p.contains("synchronized")) {
      if (!p["synchronized"].is_boolean())
        throw ValidationError("parameters: synchronized must be a boolean");
      inst.params.synchronized = p["synchronized"].get<bool>();
    }
  }

  inst.validate();
  return inst;
}

inline Instance load_instance(const std::string& path) {
  return instance_from_json(parse_json_file(path));
}

inline njson instance_to_json(const Instance& inst) {
  njson doc;
  doc["locations"] = njson::array();
  for (const Location& l : inst.network.locations()) {
    njson j;
    j["id"] = l.id;
    j["lat"] = l.lat;
    j["lon"] = l.lon;
    j["kind"] = to_string(l.kind);
    doc["locations"].push_back(std::move(j));
  }
  doc["arcs"] = njson::array();
  for (const Arc& a : inst.network.arcs()) {
    njson j;
    j["id"] = a.id;
    j["tail"] = a.tail;
    j["head"] = a.head;
    j["mode"] = to_string(a.mode);
    if (a.mode != Mode::shuttle) j["frequency"] = a.frequency;
    j["travel_time"] = a.travel_time;
    j["distance"] = a.distance;
    if (a.wait_time != 0.0) j["wait_time"] = a.wait_time;
    if (a.cost_scale != 1.0) j["cost_scale"] = a.cost_scale;
    doc["arcs"].push_back(std::move(j));
  }
  doc["trips"] = njson::array();
  for (const Trip& t : inst.trips) {
    njson j;
    j["id"] = t.id;
    j["origin"] = t.origin;
    j["destination"] = t.destination;
    j["riders"] = t.riders;
    j["rider_class"] = to_string(t.rider_class);
    j["locality"] = to_string(t.locality);
    if (t.car_time != 0.0) j["car_time"] = t.car_time;
    if (t.ticket_price != 0.0) j["ticket_price"] = t.ticket_price;
    doc["trips"].push_back(std::move(j));
  }
  njson p;
  p["alpha"] = inst.params.alpha;
  p["bus_cost_per_hour"] = inst.params.bus_cost_per_hour;
  p["shuttle_cost_per_mile"] = inst.params.shuttle_cost_per_mile;
  if (inst.params.transfer_limit) p["transfer_limit"] = *inst.params.transfer_limit;
  else p["transfer_limit"] = "unbounded";
  p["adoption_factor"] = inst.params.adoption_factor;
  p["wait_minutes_bus_rail"] = inst.params.wait_minutes_bus_rail;
  p["synchronized"] = inst.params.synchronized;
  doc["parameters"] = std::move(p);
  return doc;
}

inline void save_instance(const Instance& inst, const std::string& path) {
  write_text_file(path, instance_to_json(inst).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV inputs
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  for (std::string& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return fields;
}

inline double parse_minutes(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(context + ": '" + s + "' is not a number");
  }
}

}  // namespace detail

// QRL file: CSV `id,lat,lon` with optional header.
inline QrlSet load_qrls_csv(const std::string& path) {
  QrlSet qrls;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv_line(line);
    if (lineno == 1 && f.size() >= 1 && f[0] == "id") continue;
    if (f.size() != 3)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected id,lat,lon");
    const std::string ctx = path + ":" + std::to_string(lineno);
    qrls.points.push_back({f[0], detail::parse_minutes(f[1], ctx), detail::parse_minutes(f[2], ctx)});
  }
  qrls.validate();
  return qrls;
}

// Query dump: CSV `from_id,to_id,baseline_min,expected_min,pessimistic_min`.
inline std::vector<TravelTimeQuery> load_query_dump_csv(const std::string& path) {
  std::vector<TravelTimeQuery> queries;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv_line(line);
    if (lineno == 1 && f.size() >= 1 && f[0] == "from_id") continue;
    if (f.size() != 5)
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": expected from_id,to_id,baseline_min,expected_min,pessimistic_min");
    const std::string ctx = path + ":" + std::to_string(lineno);
    queries.push_back({f[0], f[1], detail::parse_minutes(f[2], ctx),
                       detail::parse_minutes(f[3], ctx), detail::parse_minutes(f[4], ctx)});
  }
  return queries;
}

// ---------------------------------------------------------------------------
// Scaling matrix / DBL overlay
// ---------------------------------------------------------------------------

inline njson matrix_to_json(const ScalingMatrix& m) {
  njson doc;
  doc["scenario"] = to_string(m.scenario);
  doc["factors"] = njson::array();
  for (const auto& [pair, f] : m.factors) {
    njson j;
    j["from"] = pair.first;
    j["to"] = pair.second;
    j["factor"] = f;
    doc["factors"].push_back(std::move(j));
  }
  return doc;
}

inline void save_matrix(const ScalingMatrix& m, const std::string& path) {
  write_text_file(path, matrix_to_json(m).dump(2) + "\n");
}

inline ScalingMatrix load_matrix(const std::string& path) {
  const njson doc = parse_json_file(path);
  ScalingMatrix m;
  m.scenario = parse_scenario_tag(detail::require_string(doc, "scenario", "scaling matrix"));
  for (const njson& j : detail::require_key(doc, "factors", "scaling matrix")) {
    const std::string from = detail::require_string(j, "from", "scaling matrix factor");
    const std::string to = detail::require_string(j, "to", "scaling matrix factor");
    m.factors[{from, to}] =
        detail::require_number(j, "factor", "scaling matrix (" + from + "," + to + ")");
  }
  m.validate();
  return m;
}

inline DblOverlay load_overlay(const std::string& path) {
  const njson doc = parse_json_file(path);
  DblOverlay overlay;
  for (const njson& j : detail::require_key(doc, "arcs", "dbl overlay")) {
    const std::string id = detail::require_string(j, "id", "dbl overlay arc");
    overlay.freeflow_minutes[id] =
        detail::require_number(j, "freeflow_minutes", "dbl overlay arc '" + id + "'");
  }
  return overlay;
}

inline njson overlay_to_json(const DblOverlay& overlay) {
  njson doc;
  doc["arcs"] = njson::array();
  for (const auto& [id, ff] : overlay.freeflow_minutes) {
    njson j;
    j["id"] = id;
    j["freeflow_minutes"] = ff;
    doc["arcs"].push_back(std::move(j));
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Benders checkpoint
// ---------------------------------------------------------------------------

inline njson checkpoint_to_json(const BendersState& s) {
  njson doc;
  doc["iteration"] = s.iteration;
  doc["lower_bound"] = std::isfinite(s.lower_bound) ? njson(s.lower_bound) : njson(nullptr);
  doc["upper_bound"] = std::isfinite(s.upper_bound) ? njson(s.upper_bound) : njson(nullptr);
  doc["incumbent_open"] = njson::array();
  for (const std::string& id : s.incumbent.open_ids()) doc["incumbent_open"].push_back(id);
  doc["cuts"] = njson::array();
  for (const BendersCut& c : s.cuts) {
    njson j;
    j["trip"] = c.trip_id;
    j["constant"] = c.constant;
    njson coeffs;
    for (const auto& [arc, sigma] : c.coefficients) coeffs[arc] = sigma;
    j["coefficients"] = std::move(coeffs);
    doc["cuts"].push_back(std::move(j));
  }
  return doc;
}

inline void save_checkpoint(const BendersState& s, const std::string& path) {
  write_text_file(path, checkpoint_to_json(s).dump(2) + "\n");
}

inline BendersState load_checkpoint(const std::string& path, const TransitNetwork& net) {
  const njson doc = parse_json_file(path);
  BendersState s;
  s.iteration = detail::require_int(doc, "iteration", "checkpoint");
  if (doc.contains("lower_bound") && doc["lower_bound"].is_number())
    s.lower_bound = doc["lower_bound"].get<double>();
  if (doc.contains("upper_bound") && doc["upper_bound"].is_number())
    s.upper_bound = doc["upper_bound"].get<double>();
  s.incumbent = make_design(net, false);
  for (const njson& id : detail::require_key(doc, "incumbent_open", "checkpoint")) {
    const std::string arc = id.get<std::string>();
    if (!s.incumbent.open.count(arc))
      throw ValidationError("checkpoint: incumbent arc '" + arc + "' is not a bus arc");
    s.incumbent.open[arc] = true;
  }
  for (const njson& j : detail::require_key(doc, "cuts", "checkpoint")) {
    BendersCut c;
    c.trip_id = detail::require_string(j, "trip", "checkpoint cut");
    c.constant = detail::require_number(j, "constant", "checkpoint cut");
    if (j.contains("coefficients"))
      for (const auto& [arc, sigma] : j["coefficients"].items())
        c.coefficients[arc] = sigma.get<double>();
    s.cuts.push_back(std::move(c));
  }
  return s;
}

}  // namespace odmts
