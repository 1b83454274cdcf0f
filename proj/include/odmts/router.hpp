#pragma once

#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include "odmts/model.hpp"

// Follower problem: for a fixed design, route one trip on the lexicographic
// objective (cost+inconvenience, trip length) over paths that use at most K
// arcs and only open arcs. Shuttle and rail arcs are always open; bus arcs
// are open iff the design says so.
//
// Solved by label-setting over (node, hops-used) states with exact pair
// comparison; unbounded K collapses to single-layer labeling. Ties on both
// components are broken toward the smallest arc-id sequence.

namespace odmts {

// Open/closed flag per bus arc. Keys are exactly the network's bus arc ids.
struct DesignVector {
  std::map<std::string, bool> open;

  bool is_open(const std::string& bus_arc_id) const {
    auto it = open.find(bus_arc_id);
    if (it == open.end())
      throw ValidationError("design vector: missing bus arc '" + bus_arc_id + "'");
    return it->second;
  }

  std::vector<std::string> open_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, is_open] : open)
      if (is_open) ids.push_back(id);
    return ids;  // std::map keeps them sorted
  }
};

inline DesignVector make_design(const TransitNetwork& net, bool open_all) {
  DesignVector d;
  for (const std::string& id : net.bus_arc_ids()) d.open[id] = open_all;
  return d;
}

inline void validate_design(const DesignVector& d, const TransitNetwork& net) {
  if (d.open.size() != net.bus_arc_ids().size())
    throw ValidationError("design vector: keys must be exactly the network's bus arcs");
  for (const std::string& id : net.bus_arc_ids())
    if (!d.open.count(id))
      throw ValidationError("design vector: missing bus arc '" + id + "'");
}

struct RoutedPath {
  std::vector<std::string> arcs;  // in travel order, chaining origin -> destination
  double primary_value = 0.0;     // sum of per-arc trip contributions
  double trip_length = 0.0;       // minutes, sum of travel + per-arc waits
  int hop_count = 0;
};

struct AdoptionDecision {
  bool adopted = false;
  double ratio = 0.0;  // trip length / car time
};

namespace detail {

struct LexLabel {
  double primary = std::numeric_limits<double>::infinity();
  double length = std::numeric_limits<double>::infinity();

  bool operator<(const LexLabel& o) const {
    if (primary != o.primary) return primary < o.primary;
    return length < o.length;
  }
  bool operator==(const LexLabel& o) const {
    return primary == o.primary && length == o.length;
  }
};

// Arc weights for one trip under one design: per-arc contribution (primary)
// and in-vehicle minutes (secondary), with closed bus arcs masked out.
struct TripGraph {
  std::vector<double> gamma;
  std::vector<double> minutes;
  std::vector<char> usable;
};

inline TripGraph build_trip_graph(const Trip& trip, const TransitNetwork& net,
                                  const DesignVector& design, const CostParameters& params) {
  TripGraph g;
  const auto& arcs = net.arcs();
  g.gamma.resize(arcs.size());
  g.minutes.resize(arcs.size());
  g.usable.resize(arcs.size());
  for (std::size_t i = 0; i < arcs.size(); ++i) {
    const Arc& a = arcs[i];
    g.gamma[i] = arc_trip_contribution(a, trip, params);
    g.minutes[i] = a.travel_time + a.wait_time;
    g.usable[i] = a.mode != Mode::bus || design.is_open(a.id);
  }
  return g;
}

// Reconstructs the arc sequence of a state by walking parent pointers.
template <typename ParentAt>
std::vector<int> backtrack(int state, ParentAt&& parent_at) {
  std::vector<int> seq;
  int s = state;
  while (s >= 0) {
    auto [prev, arc] = parent_at(s);
    if (arc >= 0) seq.push_back(arc);
    s = prev;
  }
  std::reverse(seq.begin(), seq.end());
  return seq;
}

// Smallest arc-id sequence order, used only to break exact label ties.
inline bool arc_seq_less(const std::vector<int>& a, const std::vector<int>& b,
                         const TransitNetwork& net) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] == b[i]) continue;
    return net.arcs()[static_cast<std::size_t>(a[i])].id <
           net.arcs()[static_cast<std::size_t>(b[i])].id;
  }
  return a.size() < b.size();
}

}  // namespace detail

// Lexicographically optimal hop-bounded path for a trip, or nullopt when the
// transfer limit makes the trip unreachable.
inline std::optional<RoutedPath> solve_follower(const Trip& trip, const TransitNetwork& net,
                                                const DesignVector& design,
                                                const CostParameters& params) {
  validate_design(design, net);
  const int origin = net.location_index(trip.origin);
  const int dest = net.location_index(trip.destination);
  const int n = static_cast<int>(net.node_count());

  // Unbounded K never needs more arcs than a simple path can use.
  const bool bounded = params.transfer_limit.has_value();
  const int hop_cap = bounded ? *params.transfer_limit : n;
  const int layers = bounded ? hop_cap + 1 : 1;

  const detail::TripGraph g = detail::build_trip_graph(trip, net, design, params);

  const int num_states = n * layers;
  std::vector<detail::LexLabel> label(static_cast<std::size_t>(num_states));
  std::vector<std::pair<int, int>> parent(static_cast<std::size_t>(num_states), {-1, -1});
  std::vector<char> done(static_cast<std::size_t>(num_states), 0);

  auto state_of = [&](int node, int hops) { return bounded ? node * layers + hops : node; };
  auto parent_at = [&](int s) { return parent[static_cast<std::size_t>(s)]; };

  using QueueEntry = std::tuple<double, double, int>;  // primary, length, state
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> queue;

  const int start = state_of(origin, 0);
  label[static_cast<std::size_t>(start)] = {0.0, 0.0};
  queue.emplace(0.0, 0.0, start);

  while (!queue.empty()) {
    auto [qp, ql, s] = queue.top();
    queue.pop();
    detail::LexLabel& cur = label[static_cast<std::size_t>(s)];
    if (done[static_cast<std::size_t>(s)] || qp != cur.primary || ql != cur.length) continue;
    done[static_cast<std::size_t>(s)] = 1;

    const int node = bounded ? s / layers : s;
    const int hops = bounded ? s % layers : 0;
    if (bounded && hops == hop_cap) continue;

    for (int ai : net.out_arcs(node)) {
      if (!g.usable[static_cast<std::size_t>(ai)]) continue;
      const int next = state_of(net.head_of(ai), bounded ? hops + 1 : 0);
      if (done[static_cast<std::size_t>(next)]) continue;
      detail::LexLabel cand{cur.primary + g.gamma[static_cast<std::size_t>(ai)],
                            cur.length + g.minutes[static_cast<std::size_t>(ai)]};
      detail::LexLabel& best = label[static_cast<std::size_t>(next)];
      if (cand < best) {
        best = cand;
        parent[static_cast<std::size_t>(next)] = {s, ai};
        queue.emplace(cand.primary, cand.length, next);
      } else if (cand == best) {
        // Same value on both components: keep the smaller arc-id sequence.
        auto incumbent = detail::backtrack(next, parent_at);
        auto challenger = detail::backtrack(s, parent_at);
        challenger.push_back(ai);
        if (detail::arc_seq_less(challenger, incumbent, net))
          parent[static_cast<std::size_t>(next)] = {s, ai};
      }
    }
  }

  // Pick the best destination state (any hop layer).
  int best_state = -1;
  for (int h = 0; h < layers; ++h) {
    const int s = state_of(dest, h);
    const detail::LexLabel& l = label[static_cast<std::size_t>(s)];
    if (l.primary == std::numeric_limits<double>::infinity()) continue;
    if (best_state < 0) {
      best_state = s;
      continue;
    }
    const detail::LexLabel& b = label[static_cast<std::size_t>(best_state)];
    if (l < b) {
      best_state = s;
    } else if (l == b) {
      auto cur = detail::backtrack(best_state, parent_at);
      auto cand = detail::backtrack(s, parent_at);
      if (detail::arc_seq_less(cand, cur, net)) best_state = s;
    }
  }
  if (best_state < 0) return std::nullopt;

  RoutedPath path;
  const detail::LexLabel& final_label = label[static_cast<std::size_t>(best_state)];
  path.primary_value = final_label.primary;
  path.trip_length = final_label.length;
  for (int ai : detail::backtrack(best_state, parent_at))
    path.arcs.push_back(net.arcs()[static_cast<std::size_t>(ai)].id);
  path.hop_count = static_cast<int>(path.arcs.size());
  return path;
}

// Choice function: a potential rider adopts iff the offered trip length is at
// most rho times the car travel time (boundary adopts).
inline AdoptionDecision evaluate_choice(const RoutedPath& path, const Trip& trip,
                                        const CostParameters& params) {
  if (trip.rider_class != RiderClass::potential)
    throw std::invalid_argument("evaluate_choice: trip '" + trip.id +
                                "' is not a potential rider");
  AdoptionDecision d;
  d.ratio = path.trip_length / trip.car_time;
  d.adopted = path.trip_length <= params.adoption_factor * trip.car_time;
  return d;
}

// Adds the boarding wait to a path routed with zero per-arc waits: one wait
// per maximal run of consecutive bus arcs and one per maximal run of rail
// arcs. Shuttles are readily available and add nothing. A synchronized
// system adds nothing at all.
inline RoutedPath apply_wait_postprocessing(const RoutedPath& path, const TransitNetwork& net,
                                            const CostParameters& params) {
  RoutedPath out = path;
  if (params.synchronized) return out;
  int boardings = 0;
  Mode prev = Mode::shuttle;
  bool first = true;
  for (const std::string& id : path.arcs) {
    const Mode m = net.arc(id).mode;
    if (m != Mode::shuttle && (first || m != prev)) ++boardings;
    prev = m;
    first = false;
  }
  out.trip_length += boardings * params.wait_minutes_bus_rail;
  return out;
}

}  // namespace odmts
