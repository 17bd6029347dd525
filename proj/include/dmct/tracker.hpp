#pragma once

// Online frame-to-frame association.
//
// Every live trajectory is linked either to a detection within the gating
// radius of its predicted position or to its own prediction node (coasting).
// Costs are quantized to millimeters and the node-disjoint extension of minimal
// total cost is found as a min-cost max-flow:
//
//   source -> trajectory (cap 1)
//   trajectory -> detection (cap 1, distance), trajectory -> own prediction (cap 1, miss penalty)
//   detection -> sink, prediction -> sink (cap 1)

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "dmct/appearance.hpp"
#include "dmct/error.hpp"
#include "dmct/flow.hpp"
#include "dmct/geometry.hpp"

namespace dmct {

/// Cost quantization: one unit is a millimeter.
inline constexpr double kCostScale = 1000.0;

struct TrackerParams {
  double gate_radius = 4.0 / 15.0;     // max person speed (m/s) / frame rate
  std::optional<double> miss_penalty;  // meters; 0.6 * gate_radius when unset
  int max_misses = 100;
  double velocity_decay = 0.5;
  bool use_color = false;
  double color_weight = 0.5;
  double appearance_blend = 0.5;  // weight of the newest histogram in a trajectory's model

  double miss_cost() const { return miss_penalty.value_or(0.6 * gate_radius); }

  void validate() const {
    if (!(gate_radius > 0.0)) throw ConfigError("gate radius must be positive");
    if (!(miss_cost() >= 0.0)) throw ConfigError("miss penalty must be non-negative");
    if (max_misses < 1) throw ConfigError("max_misses must be at least 1");
    if (!(velocity_decay >= 0.0 && velocity_decay <= 1.0)) throw ConfigError("velocity decay must be in [0,1]");
    if (!(color_weight >= 0.0)) throw ConfigError("color weight must be non-negative");
  }
};

struct TrackState {
  int frame = 0;
  Vec2 position = Vec2::Zero();
  bool matched = true;
};

struct Trajectory {
  int id = 0;
  std::vector<TrackState> states;
  int misses = 0;
  Vec2 velocity = Vec2::Zero();  // meters per frame
  std::optional<ColorHistogram> appearance;

  const TrackState& last() const { return states.back(); }
};

/// Constant-velocity extrapolation one frame ahead.
inline Vec2 predict(const Trajectory& t) {
  if (t.states.empty()) throw RuntimeError("cannot predict an empty trajectory");
  return t.states.size() == 1 ? t.last().position : Vec2(t.last().position + t.velocity);
}

struct TrackInput {
  Vec2 position = Vec2::Zero();
  std::optional<ColorHistogram> appearance;
};

struct AssociationEdge {
  int trajectory = 0;  // index into AssociationGraph::trajectory_ids
  int detection = -1;  // -1 is the trajectory's prediction node
  std::int64_t cost = 0;
};

struct AssociationGraph {
  std::vector<int> trajectory_ids;
  std::vector<Vec2> predictions;
  int detections = 0;
  std::vector<AssociationEdge> edges;
};

struct FrameAssignment {
  std::vector<std::pair<int, int>> matches;  // (trajectory id, detection index)
  std::vector<int> unmatched_trajectories;
  std::vector<int> unmatched_detections;
  std::int64_t cost = 0;
};

/// Extra association cost in meters for trajectory `t` and detection `d` at ground distance `dist`.
using AssociationCost = std::function<double(std::size_t t, std::size_t d, double dist)>;

inline std::int64_t quantize_cost(double meters) { return static_cast<std::int64_t>(std::llround(kCostScale * meters)); }

inline AssociationGraph build_graph(std::span<const Trajectory> trajectories, std::span<const Vec2> detections,
                                    double gate_radius, double miss_penalty, const AssociationCost& cost_fn = {}) {
  if (!(gate_radius > 0.0)) throw ConfigError("gate radius must be positive");
  AssociationGraph g;
  g.detections = static_cast<int>(detections.size());
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    g.trajectory_ids.push_back(trajectories[t].id);
    const Vec2 pred = predict(trajectories[t]);
    g.predictions.push_back(pred);
    for (std::size_t d = 0; d < detections.size(); ++d) {
      const double dist = (detections[d] - pred).norm();
      if (dist > gate_radius) continue;
      const double c = cost_fn ? cost_fn(t, d, dist) : dist;
      g.edges.push_back({static_cast<int>(t), static_cast<int>(d), quantize_cost(c)});
    }
    g.edges.push_back({static_cast<int>(t), -1, quantize_cost(miss_penalty)});
  }
  return g;
}

inline FrameAssignment solve_assignment(const AssociationGraph& g) {
  const int T = static_cast<int>(g.trajectory_ids.size());
  const int D = g.detections;
  const int source = 0, sink = 1 + T + D + T;
  MinCostFlow flow(sink + 1);
  const auto traj_node = [](int t) { return 1 + t; };
  const auto det_node = [T](int d) { return 1 + T + d; };
  const auto pred_node = [T, D](int t) { return 1 + T + D + t; };
  for (int t = 0; t < T; ++t) {
    flow.add_edge(source, traj_node(t), 1, 0);
    flow.add_edge(pred_node(t), sink, 1, 0);
  }
  for (int d = 0; d < D; ++d) flow.add_edge(det_node(d), sink, 1, 0);
  std::vector<std::pair<int, int>> handles;
  handles.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    if (e.cost < 0) throw RuntimeError("association costs must be non-negative");
    handles.push_back(flow.add_edge(traj_node(e.trajectory), e.detection < 0 ? pred_node(e.trajectory) : det_node(e.detection),
                                    1, e.cost));
  }
  const auto result = flow.solve(source, sink);

  FrameAssignment out;
  out.cost = result.cost;
  std::vector<char> traj_matched(T, 0), det_used(D, 0);
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    if (e.detection < 0 || flow.flow_on(handles[i]) == 0) continue;
    out.matches.emplace_back(g.trajectory_ids[e.trajectory], e.detection);
    traj_matched[e.trajectory] = 1;
    det_used[e.detection] = 1;
  }
  for (int t = 0; t < T; ++t)
    if (!traj_matched[t]) out.unmatched_trajectories.push_back(g.trajectory_ids[t]);
  for (int d = 0; d < D; ++d)
    if (!det_used[d]) out.unmatched_detections.push_back(d);
  return out;
}

struct TrackRow {
  int frame = 0;
  int id = 0;
  Vec2 position = Vec2::Zero();
  bool matched = true;
};

/// Trajectory set with lifecycle: match, coast, retire after `max_misses`
/// consecutive misses, and immediate birth for unclaimed detections.
/// Not thread-safe; calls to `step` must be serialized.
class Tracker {
 public:
  explicit Tracker(TrackerParams params = {}) : params_(std::move(params)) { params_.validate(); }

  struct StepResult {
    FrameAssignment assignment;
    std::vector<int> born;
    std::vector<int> retired;
    std::vector<TrackRow> rows;  // state of every live trajectory at this frame
  };

  StepResult step(std::span<const TrackInput> detections, int frame) {
    if (last_frame_ && frame != *last_frame_ + 1)
      throw RuntimeError("tracker frames must be consecutive (got " + std::to_string(frame) + " after " +
                         std::to_string(*last_frame_) + ")");
    last_frame_ = frame;

    std::vector<Vec2> positions;
    positions.reserve(detections.size());
    for (const auto& d : detections) positions.push_back(d.position);

    AssociationCost cost_fn;
    if (params_.use_color) {
      cost_fn = [&](std::size_t t, std::size_t d, double dist) {
        const auto& a = live_[t].appearance;
        const auto& b = detections[d].appearance;
        if (!a || !b || a->empty || b->empty) return dist;
        return dist + params_.color_weight * params_.gate_radius * (1.0 - similarity(*a, *b));
      };
    }
    StepResult res;
    res.assignment = solve_assignment(build_graph(live_, positions, params_.gate_radius, params_.miss_cost(), cost_fn));

    std::vector<int> match_of(live_.size(), -1);
    for (const auto& [id, d] : res.assignment.matches) match_of[index_of(id)] = d;

    std::vector<Trajectory> next;
    next.reserve(live_.size() + res.assignment.unmatched_detections.size());
    for (std::size_t t = 0; t < live_.size(); ++t) {
      Trajectory& tr = live_[t];
      const Vec2 prev = tr.last().position;
      if (match_of[t] >= 0) {
        const auto& det = detections[match_of[t]];
        tr.states.push_back({frame, det.position, true});
        tr.misses = 0;
        blend_appearance(tr, det.appearance);
      } else {
        tr.states.push_back({frame, predict(tr), false});
        ++tr.misses;
      }
      tr.velocity = params_.velocity_decay * tr.velocity + (1.0 - params_.velocity_decay) * (tr.last().position - prev);
      if (tr.misses >= params_.max_misses) {
        res.retired.push_back(tr.id);
        continue;
      }
      next.push_back(std::move(tr));
    }
    for (int d : res.assignment.unmatched_detections) {
      Trajectory tr;
      tr.id = next_id_++;
      tr.states.push_back({frame, detections[d].position, true});
      tr.appearance = detections[d].appearance;
      res.born.push_back(tr.id);
      next.push_back(std::move(tr));
    }
    live_ = std::move(next);
    for (const auto& tr : live_) res.rows.push_back({frame, tr.id, tr.last().position, tr.last().matched});
    return res;
  }

  const std::vector<Trajectory>& trajectories() const { return live_; }
  const TrackerParams& params() const { return params_; }

 private:
  std::size_t index_of(int id) const {
    for (std::size_t i = 0; i < live_.size(); ++i)
      if (live_[i].id == id) return i;
    throw RuntimeError("unknown trajectory id");
  }

  void blend_appearance(Trajectory& tr, const std::optional<ColorHistogram>& h) const {
    if (!h || h->empty) return;
    if (!tr.appearance || tr.appearance->empty) {
      tr.appearance = h;
      return;
    }
    const double a = params_.appearance_blend;
    for (std::size_t i = 0; i < h->mass.size(); ++i)
      tr.appearance->mass[i] = (1.0 - a) * tr.appearance->mass[i] + a * h->mass[i];
  }

  TrackerParams params_;
  std::vector<Trajectory> live_;
  std::optional<int> last_frame_;
  int next_id_ = 1;
};

inline void write_tracks_header(std::ostream& os) { os << "frame,id,x_m,y_m,matched\n"; }

inline void write_tracks(std::ostream& os, std::span<const TrackRow> rows, bool include_coasted = true) {
  char buf[128];
  for (const auto& r : rows) {
    if (!r.matched && !include_coasted) continue;
    std::snprintf(buf, sizeof buf, "%d,%d,%.4f,%.4f,%d\n", r.frame, r.id, r.position.x(), r.position.y(), r.matched ? 1 : 0);
    os << buf;
  }
}

}  // namespace dmct
