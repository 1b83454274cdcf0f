#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "odmts/model.hpp"

// Congestion scenarios. Travel times for a scenario are obtained by scaling a
// travel-time basis with region-pair factors. The factors are derived from a
// small set of query reference locations (QRLs): for an OD pair, the factor of
// the (nearest-QRL-to-origin, nearest-QRL-to-destination) pair applies. A
// dedicated-bus-lane overlay replaces the scaled time of selected bus arcs
// with their free-flow time.
//
// Factors are always read from pre-computed query dumps; nothing is fetched
// live, so runs are reproducible.

namespace odmts {

struct Qrl {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
};

struct QrlSet {
  std::vector<Qrl> points;

  void validate() const {
    if (points.size() < 2)
      throw ValidationError("qrl set: needs at least 2 points");
    std::set<std::string> seen;
    for (const Qrl& q : points)
      if (!seen.insert(q.id).second)
        throw ValidationError("qrl '" + q.id + "': duplicate id");
  }
};

enum class ScenarioTag { baseline, expected, fifty_fifty, pessimistic, custom };

inline const char* to_string(ScenarioTag t) {
  switch (t) {
    case ScenarioTag::baseline: return "baseline";
    case ScenarioTag::expected: return "expected";
    case ScenarioTag::fifty_fifty: return "50-50";
    case ScenarioTag::pessimistic: return "pessimistic";
    case ScenarioTag::custom: return "custom";
  }
  return "?";
}

inline ScenarioTag parse_scenario_tag(const std::string& s) {
  if (s == "baseline") return ScenarioTag::baseline;
  if (s == "expected") return ScenarioTag::expected;
  if (s == "50-50" || s == "fifty_fifty" || s == "fifty-fifty") return ScenarioTag::fifty_fifty;
  if (s == "pessimistic") return ScenarioTag::pessimistic;
  if (s == "custom") return ScenarioTag::custom;
  throw ValidationError("unknown scenario tag '" + s + "'");
}

// One row of a query dump: measured minutes between a QRL pair for the
// baseline and for the two queried traffic models.
struct TravelTimeQuery {
  std::string from;
  std::string to;
  double baseline_minutes = 0.0;
  double expected_minutes = 0.0;
  double pessimistic_minutes = 0.0;
};

// Region-pair scaling factors R[(i,j)] for one scenario.
struct ScalingMatrix {
  ScenarioTag scenario = ScenarioTag::custom;
  std::map<std::pair<std::string, std::string>, double> factors;

  double at(const std::string& from, const std::string& to) const {
    auto it = factors.find({from, to});
    if (it == factors.end())
      throw ValidationError("scaling matrix: no factor for QRL pair (" + from + "," + to + ")");
    return it->second;
  }

  void validate() const {
    for (const auto& [pair, f] : factors)
      if (!(f > 0.0) || !std::isfinite(f))
        throw ValidationError("scaling matrix: factor for (" + pair.first + "," + pair.second +
                              ") must be finite and > 0");
  }
};

// Bus arcs granted a dedicated lane, with the free-flow minutes that replace
// their congested travel time.
struct DblOverlay {
  std::map<std::string, double> freeflow_minutes;  // bus arc id -> minutes

  void validate(const TransitNetwork& net) const {
    for (const auto& [id, ff] : freeflow_minutes) {
      const Arc* a = nullptr;
      try {
        a = &net.arc(id);
      } catch (const ValidationError&) {
        throw ValidationError("dbl overlay: unknown arc '" + id + "'");
      }
      if (a->mode != Mode::bus)
        throw ValidationError("dbl overlay: arc '" + id + "' is not a bus arc");
      if (!(ff >= 0.0) || !std::isfinite(ff))
        throw ValidationError("dbl overlay: arc '" + id + "': free-flow minutes must be >= 0");
    }
  }
};

// ---------------------------------------------------------------------------

// Great-circle distance in miles (haversine).
inline double great_circle_miles(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusMiles = 3958.7613;
  constexpr double kDegToRad = 0.017453292519943295;
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlam = (lon2 - lon1) * kDegToRad;
  const double s = std::sin(dphi / 2.0);
  const double t = std::sin(dlam / 2.0);
  const double h = s * s + std::cos(phi1) * std::cos(phi2) * t * t;
  return 2.0 * kEarthRadiusMiles * std::asin(std::min(1.0, std::sqrt(h)));
}

// Nearest QRL to a coordinate; ties broken by lowest QRL id so assignments
// are reproducible.
inline const Qrl& nearest_qrl(const QrlSet& qrls, double lat, double lon,
                              const std::string& exclude_id = {}) {
  if (qrls.points.empty())
    throw ValidationError("qrl set: empty");
  const Qrl* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const Qrl& q : qrls.points) {
    if (!exclude_id.empty() && q.id == exclude_id) continue;
    const double d = great_circle_miles(lat, lon, q.lat, q.lon);
    if (d < best_dist || (d == best_dist && best != nullptr && q.id < best->id)) {
      best = &q;
      best_dist = d;
    }
  }
  if (best == nullptr)
    throw ValidationError("qrl set: no candidate QRL (after excluding '" + exclude_id + "')");
  return *best;
}

// Build the factor matrix for one scenario from a query dump.
//   expected     -> expected / baseline
//   pessimistic  -> pessimistic / baseline
//   50-50        -> mean(expected, pessimistic) / baseline
//   baseline     -> 1 for every pair
inline ScalingMatrix build_scaling_matrix(const std::vector<TravelTimeQuery>& queries,
                                          ScenarioTag scenario) {
  ScalingMatrix m;
  m.scenario = scenario;
  for (const TravelTimeQuery& q : queries) {
    if (!(q.baseline_minutes > 0.0) || !std::isfinite(q.baseline_minutes))
      throw ValidationError("query (" + q.from + "," + q.to + "): baseline minutes must be > 0");
    if (!(q.expected_minutes > 0.0) || !(q.pessimistic_minutes > 0.0))
      throw ValidationError("query (" + q.from + "," + q.to + "): scenario minutes must be > 0");
    double factor = 1.0;
    switch (scenario) {
      case ScenarioTag::baseline: factor = 1.0; break;
      case ScenarioTag::expected: factor = q.expected_minutes / q.baseline_minutes; break;
      case ScenarioTag::pessimistic: factor = q.pessimistic_minutes / q.baseline_minutes; break;
      case ScenarioTag::fifty_fifty:
        factor = 0.5 * (q.expected_minutes + q.pessimistic_minutes) / q.baseline_minutes;
        break;
      case ScenarioTag::custom:
        throw ValidationError("build_scaling_matrix: 'custom' matrices are loaded, not built");
    }
    auto key = std::make_pair(q.from, q.to);
    if (m.factors.count(key))
      throw ValidationError("query (" + q.from + "," + q.to + "): duplicate pair");
    m.factors[key] = factor;
  }
  m.validate();
  return m;
}

// Scaling factor that applies to travel between two coordinates. When origin
// and destination map to the same QRL i, the factor of (i, QRL closest to i)
// is used instead.
inline double od_scaling_factor(double o_lat, double o_lon, double d_lat, double d_lon,
                                const QrlSet& qrls, const ScalingMatrix& matrix) {
  const Qrl& qo = nearest_qrl(qrls, o_lat, o_lon);
  const Qrl& qd = nearest_qrl(qrls, d_lat, d_lon);
  if (qo.id != qd.id) return matrix.at(qo.id, qd.id);
  const Qrl& other = nearest_qrl(qrls, qo.lat, qo.lon, /*exclude_id=*/qo.id);
  return matrix.at(qo.id, other.id);
}

// Scenario travel time for an OD pair: basis minutes times the region-pair factor.
inline double scale_od_time(double o_lat, double o_lon, double d_lat, double d_lon,
                            double basis_minutes, const QrlSet& qrls,
                            const ScalingMatrix& matrix) {
  if (!(basis_minutes >= 0.0))
    throw ValidationError("scale_od_time: basis minutes must be >= 0");
  return basis_minutes * od_scaling_factor(o_lat, o_lon, d_lat, d_lon, qrls, matrix);
}

struct CongestionResult {
  TransitNetwork network;
  std::vector<std::string> warnings;
};

// Apply a congestion scenario (and optional DBL overlay) to a network,
// returning a new network. Shuttle and bus arcs are scaled by their
// endpoint-pair factor; shuttle arcs additionally record the factor as their
// per-mile cost multiplier. Rail runs on its own right-of-way and keeps its
// timetable times. Overlay arcs get their free-flow minutes instead of the
// scaled time.
inline CongestionResult apply_congestion(const TransitNetwork& network, const QrlSet& qrls,
                                         const ScalingMatrix& matrix,
                                         const std::optional<DblOverlay>& overlay = {}) {
  qrls.validate();
  matrix.validate();
  if (overlay) overlay->validate(network);

  std::vector<Arc> arcs = network.arcs();
  std::vector<std::string> warnings;
  for (Arc& a : arcs) {
    if (a.mode == Mode::rail) continue;
    const Location& t = network.location(a.tail);
    const Location& h = network.location(a.head);
    const double factor = od_scaling_factor(t.lat, t.lon, h.lat, h.lon, qrls, matrix);
    const double scaled = a.travel_time * factor;
    if (a.mode == Mode::shuttle) {
      a.travel_time = scaled;
      a.cost_scale = a.cost_scale * factor;
    } else {  // bus
      if (overlay) {
        auto it = overlay->freeflow_minutes.find(a.id);
        if (it != overlay->freeflow_minutes.end()) {
          if (it->second > scaled)
            warnings.push_back("dbl overlay: arc '" + a.id + "': free-flow " +
                               std::to_string(it->second) + " min exceeds scaled time " +
                               std::to_string(scaled) + " min");
          a.travel_time = it->second;
          continue;
        }
      }
      a.travel_time = scaled;
    }
  }
  return {TransitNetwork::build(network.locations(), std::move(arcs)), std::move(warnings)};
}

struct ScenarioResult {
  Instance instance;
  std::vector<std::string> warnings;
};

// Instance-level scenario application: scales the network and also each
// trip's car time by its OD factor, since driving shares the same congested
// roads. The DBL overlay never touches car times.
inline ScenarioResult apply_scenario(const Instance& in, const QrlSet& qrls,
                                     const ScalingMatrix& matrix,
                                     const std::optional<DblOverlay>& overlay = {}) {
  CongestionResult net = apply_congestion(in.network, qrls, matrix, overlay);
  ScenarioResult out{{std::move(net.network), in.trips, in.params}, std::move(net.warnings)};
  for (Trip& t : out.instance.trips) {
    if (t.car_time <= 0.0) continue;
    const Location& o = in.network.location(t.origin);
    const Location& d = in.network.location(t.destination);
    t.car_time = scale_od_time(o.lat, o.lon, d.lat, d.lon, t.car_time, qrls, matrix);
  }
  out.instance.validate();
  return out;
}

}  // namespace odmts
