#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Core network/trip model for on-demand multimodal transit (ODMTS) design:
// a directed multigraph of hubs and virtual stops with shuttle/bus/rail arcs,
// rider trips, and the cost coefficients used by the design optimization.
//
// Unit conventions (fixed here, used everywhere):
//   - travel times and waits in minutes
//   - distances in miles
//   - bus operating cost given in $/hour and converted internally
//   - the convex weight alpha trades dollars against minutes directly

namespace odmts {

// Input data violates the schema or an invariant. Messages name the record id.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File could not be read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { shuttle, bus, rail };
enum class LocationKind { hub, virtual_stop };
enum class RiderClass { existing, potential };
enum class Locality { local, non_local };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::shuttle: return "shuttle";
    case Mode::bus: return "bus";
    case Mode::rail: return "rail";
  }
  return "?";
}

inline const char* to_string(LocationKind k) {
  return k == LocationKind::hub ? "hub" : "virtual_stop";
}

inline const char* to_string(RiderClass c) {
  return c == RiderClass::existing ? "existing" : "potential";
}

inline const char* to_string(Locality l) {
  return l == Locality::local ? "local" : "non_local";
}

struct Location {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  LocationKind kind = LocationKind::virtual_stop;
};

struct Arc {
  std::string id;
  std::string tail;  // departure location id
  std::string head;  // arrival location id
  Mode mode = Mode::shuttle;
  int frequency = 0;        // vehicles per planning horizon; bus/rail only
  double travel_time = 0.0; // minutes
  double distance = 0.0;    // miles
  double wait_time = 0.0;   // minutes; always zero for shuttle
  // Per-mile shuttle cost multiplier. 1.0 on ingestion; the congestion module
  // sets it to the arc's scaling factor so shuttle operating cost tracks
  // travel-time growth on the same road.
  double cost_scale = 1.0;
};

struct Trip {
  std::string id;
  std::string origin;
  std::string destination;
  int riders = 1;  // travelers bundled on this OD pair
  RiderClass rider_class = RiderClass::existing;
  Locality locality = Locality::local;
  double car_time = 0.0;     // minutes by car; required positive for potential riders
  double ticket_price = 0.0; // $ per rider; revenue only counted for potential riders
};

struct CostParameters {
  double alpha = 0.1078;              // convex weight: (1-alpha) cost, alpha inconvenience
  double bus_cost_per_hour = 72.15;   // $ per bus-hour
  double shuttle_cost_per_mile = 1.0; // $ per shuttle-mile, before congestion scaling
  std::optional<int> transfer_limit;  // max arcs per trip; nullopt = unbounded
  double adoption_factor = 1.5;       // rho: adopt iff trip length <= rho * car time
  double wait_minutes_bus_rail = 5.0; // post-processing wait per bus/rail boarding
  bool synchronized = false;          // fully synchronized system: no post-processed waits
};

inline void validate(const CostParameters& p) {
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0))
    throw ValidationError("parameters: alpha must be in [0,1]");
  if (!(p.bus_cost_per_hour >= 0.0) || !std::isfinite(p.bus_cost_per_hour))
    throw ValidationError("parameters: bus_cost_per_hour must be >= 0");
  if (!(p.shuttle_cost_per_mile >= 0.0) || !std::isfinite(p.shuttle_cost_per_mile))
    throw ValidationError("parameters: shuttle_cost_per_mile must be >= 0");
  if (p.transfer_limit && *p.transfer_limit < 1)
    throw ValidationError("parameters: transfer_limit must be >= 1 or unbounded");
  if (!(p.adoption_factor > 0.0) || !std::isfinite(p.adoption_factor))
    throw ValidationError("parameters: adoption_factor must be > 0");
  if (!(p.wait_minutes_bus_rail >= 0.0))
    throw ValidationError("parameters: wait_minutes_bus_rail must be >= 0");
}

// Directed multigraph over locations. Immutable after build(); safe to share
// read-only across parallel workers.
class TransitNetwork {
 public:
  TransitNetwork() = default;

  static TransitNetwork build(std::vector<Location> locations, std::vector<Arc> arcs) {
    TransitNetwork net;
    net.locations_ = std::move(locations);
    net.arcs_ = std::move(arcs);
    net.index();
    net.validate();
    return net;
  }

  const std::vector<Location>& locations() const { return locations_; }
  const std::vector<Arc>& arcs() const { return arcs_; }

  std::size_t node_count() const { return locations_.size(); }
  std::size_t arc_count() const { return arcs_.size(); }

  bool has_location(const std::string& id) const { return loc_index_.count(id) > 0; }

  int location_index(const std::string& id) const {
    auto it = loc_index_.find(id);
    if (it == loc_index_.end())
      throw ValidationError("unknown location id '" + id + "'");
    return it->second;
  }

  const Location& location(const std::string& id) const {
    return locations_[static_cast<std::size_t>(location_index(id))];
  }

  int arc_index(const std::string& id) const {
    auto it = arc_index_.find(id);
    if (it == arc_index_.end())
      throw ValidationError("unknown arc id '" + id + "'");
    return it->second;
  }

  const Arc& arc(const std::string& id) const {
    return arcs_[static_cast<std::size_t>(arc_index(id))];
  }

  bool is_hub(int node) const {
    return locations_[static_cast<std::size_t>(node)].kind == LocationKind::hub;
  }

  const std::vector<int>& out_arcs(int node) const {
    return out_arcs_[static_cast<std::size_t>(node)];
  }
  const std::vector<int>& in_arcs(int node) const {
    return in_arcs_[static_cast<std::size_t>(node)];
  }

  int tail_of(int arc) const { return arc_tail_[static_cast<std::size_t>(arc)]; }
  int head_of(int arc) const { return arc_head_[static_cast<std::size_t>(arc)]; }

  // Bus arc ids sorted lexicographically: the design vector's key set.
  const std::vector<std::string>& bus_arc_ids() const { return bus_arc_ids_; }

 private:
  void index() {
    loc_index_.clear();
    arc_index_.clear();
    for (std::size_t i = 0; i < locations_.size(); ++i) {
      if (!loc_index_.emplace(locations_[i].id, static_cast<int>(i)).second)
        throw ValidationError("location '" + locations_[i].id + "': duplicate id");
    }
    out_arcs_.assign(locations_.size(), {});
    in_arcs_.assign(locations_.size(), {});
    arc_tail_.resize(arcs_.size());
    arc_head_.resize(arcs_.size());
    bus_arc_ids_.clear();
    for (std::size_t i = 0; i < arcs_.size(); ++i) {
      const Arc& a = arcs_[i];
      if (!arc_index_.emplace(a.id, static_cast<int>(i)).second)
        throw ValidationError("arc '" + a.id + "': duplicate id");
      auto t = loc_index_.find(a.tail);
      auto h = loc_index_.find(a.head);
      if (t == loc_index_.end())
        throw ValidationError("arc '" + a.id + "': unknown tail location '" + a.tail + "'");
      if (h == loc_index_.end())
        throw ValidationError("arc '" + a.id + "': unknown head location '" + a.head + "'");
      arc_tail_[i] = t->second;
      arc_head_[i] = h->second;
      out_arcs_[static_cast<std::size_t>(t->second)].push_back(static_cast<int>(i));
      in_arcs_[static_cast<std::size_t>(h->second)].push_back(static_cast<int>(i));
      if (a.mode == Mode::bus) bus_arc_ids_.push_back(a.id);
    }
    std::sort(bus_arc_ids_.begin(), bus_arc_ids_.end());
  }

  void validate() const {
    // Per-arc invariants. Hub-only endpoints for bus/rail; shuttles carry no
    // frequency and no per-arc wait; parallel bus arcs on a hub pair may
    // differ only in frequency.
    std::map<std::pair<std::string, std::string>, const Arc*> first_bus_on_pair;
    for (const Arc& a : arcs_) {
      if (!(a.travel_time >= 0.0) || !std::isfinite(a.travel_time))
        throw ValidationError("arc '" + a.id + "': travel_time must be finite and >= 0");
      if (!(a.distance >= 0.0) || !std::isfinite(a.distance))
        throw ValidationError("arc '" + a.id + "': distance must be finite and >= 0");
      if (!(a.wait_time >= 0.0) || !std::isfinite(a.wait_time))
        throw ValidationError("arc '" + a.id + "': wait_time must be finite and >= 0");
      if (a.mode == Mode::shuttle) {
        if (a.frequency != 0)
          throw ValidationError("arc '" + a.id + "': shuttle arcs carry no frequency");
        if (a.wait_time != 0.0)
          throw ValidationError("arc '" + a.id + "': shuttle arcs have zero wait_time");
      } else {
        if (a.frequency < 1)
          throw ValidationError("arc '" + a.id + "': " + to_string(a.mode) +
                                " arcs need a positive integer frequency");
        const Location& t = locations_[static_cast<std::size_t>(tail_of(arc_index_.at(a.id)))];
        const Location& h = locations_[static_cast<std::size_t>(head_of(arc_index_.at(a.id)))];
        if (t.kind != LocationKind::hub)
          throw ValidationError("arc '" + a.id + "': tail '" + t.id + "' is not a hub");
        if (h.kind != LocationKind::hub)
          throw ValidationError("arc '" + a.id + "': head '" + h.id + "' is not a hub");
      }
      if (a.mode == Mode::bus) {
        auto key = std::make_pair(a.tail, a.head);
        auto [it, inserted] = first_bus_on_pair.emplace(key, &a);
        if (!inserted) {
          const Arc& b = *it->second;
          if (a.travel_time != b.travel_time || a.distance != b.distance ||
              a.wait_time != b.wait_time)
            throw ValidationError("arc '" + a.id + "': parallel bus arcs on (" + a.tail +
                                  "," + a.head + ") may differ only in frequency (see arc '" +
                                  b.id + "')");
        }
      }
    }
  }

  std::vector<Location> locations_;
  std::vector<Arc> arcs_;
  std::unordered_map<std::string, int> loc_index_;
  std::unordered_map<std::string, int> arc_index_;
  std::vector<std::vector<int>> out_arcs_;
  std::vector<std::vector<int>> in_arcs_;
  std::vector<int> arc_tail_;
  std::vector<int> arc_head_;
  std::vector<std::string> bus_arc_ids_;
};

inline void validate_trip(const Trip& t, const TransitNetwork& net) {
  if (!net.has_location(t.origin))
    throw ValidationError("trip '" + t.id + "': unknown origin '" + t.origin + "'");
  if (!net.has_location(t.destination))
    throw ValidationError("trip '" + t.id + "': unknown destination '" + t.destination + "'");
  if (t.origin == t.destination)
    throw ValidationError("trip '" + t.id + "': origin equals destination");
  if (t.riders < 1)
    throw ValidationError("trip '" + t.id + "': riders must be a positive integer");
  if (t.rider_class == RiderClass::potential &&
      (!(t.car_time > 0.0) || !std::isfinite(t.car_time)))
    throw ValidationError("trip '" + t.id + "': potential riders need a finite car_time > 0");
  if (!(t.ticket_price >= 0.0) || !std::isfinite(t.ticket_price))
    throw ValidationError("trip '" + t.id + "': ticket_price must be finite and >= 0");
}

// A full problem instance: network, demand, and cost parameters.
struct Instance {
  TransitNetwork network;
  std::vector<Trip> trips;
  CostParameters params;

  void validate() const {
    odmts::validate(params);
    std::set<std::string> seen;
    for (const Trip& t : trips) {
      if (!seen.insert(t.id).second)
        throw ValidationError("trip '" + t.id + "': duplicate id");
      validate_trip(t, network);
    }
  }
};

// ---------------------------------------------------------------------------
// Cost coefficients
// ---------------------------------------------------------------------------

// Fixed cost of opening a bus arc: (1-alpha) * hours * frequency * $/bus-hour.
inline double arc_fixed_cost(const Arc& arc, const CostParameters& p) {
  if (arc.mode != Mode::bus)
    throw std::invalid_argument("arc_fixed_cost: arc '" + arc.id + "' is not a bus arc");
  return (1.0 - p.alpha) * (arc.travel_time / 60.0) * arc.frequency * p.bus_cost_per_hour;
}

// Objective contribution of routing one trip over one arc. Shuttles pay
// distance cost plus time inconvenience; bus/rail only time inconvenience
// (their operating cost is the fixed cost above).
inline double arc_trip_contribution(const Arc& arc, const Trip& t, const CostParameters& p) {
  if (arc.mode == Mode::shuttle)
    return t.riders * ((1.0 - p.alpha) * arc.distance * p.shuttle_cost_per_mile * arc.cost_scale +
                       p.alpha * arc.travel_time);
  return t.riders * p.alpha * (arc.travel_time + arc.wait_time);
}

// Ticket revenue gained when a potential rider adopts. Revenue from existing
// riders is a constant and stays out of every objective.
inline double ticket_benefit(const Trip& t, const CostParameters& p) {
  if (t.rider_class != RiderClass::potential)
    throw std::invalid_argument("ticket_benefit: trip '" + t.id + "' is not a potential rider");
  return (1.0 - p.alpha) * t.riders * t.ticket_price;
}

}  // namespace odmts
