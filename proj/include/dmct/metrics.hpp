#pragma once

// CLEAR-MOT and identity metrics on the ground plane.
//
// Every ground-truth and predicted point is a fixed-size axis-aligned square;
// a pair may correspond when 1 - IoU <= 1 - iou_threshold. Per-frame matching
// first keeps last frame's pairs that are still valid, then solves the
// remaining pairs as a maximum-cardinality, minimum-distance assignment. A
// ground-truth object matched to a different hypothesis than last time counts
// as an identity switch.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmct/error.hpp"
#include "dmct/flow.hpp"
#include "dmct/geometry.hpp"

namespace dmct {

struct EvalConfig {
  double box_side = 1.0;
  double iou_threshold = 0.5;

  void validate() const {
    if (!(box_side > 0.0)) throw ConfigError("box_side must be positive");
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou_threshold must be in (0,1]");
  }
};

/// IoU of squares given by min corner and side, computed the way box
/// evaluation tools do (union = area_a + area_b - intersection).
inline double box_iou(const Vec2& a_center, const Vec2& b_center, double side) {
  const Vec2 a0 = a_center.array() - side / 2, b0 = b_center.array() - side / 2;
  const Vec2 a1 = a0.array() + side, b1 = b0.array() + side;
  const double ix = std::max(0.0, std::min(a1.x(), b1.x()) - std::max(a0.x(), b0.x()));
  const double iy = std::max(0.0, std::min(a1.y(), b1.y()) - std::max(a0.y(), b0.y()));
  const double inter = ix * iy;
  const double uni = side * side + side * side - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct FrameObjects {
  std::vector<int> ids;
  std::vector<Vec2> positions;

  void add(int id, const Vec2& p) {
    ids.push_back(id);
    positions.push_back(p);
  }
  std::size_t size() const { return ids.size(); }
};

struct MatchEvent {
  int oid = 0;
  int hid = 0;
  double distance = 0.0;  // 1 - IoU
  bool is_switch = false;
};

struct FrameCorrespondence {
  int frame = 0;
  std::vector<int> gt_ids;
  std::vector<int> pred_ids;
  std::vector<MatchEvent> matches;
  std::vector<int> misses;
  std::vector<int> false_positives;
  std::vector<std::pair<int, int>> valid_pairs;  // every (oid, hid) within the IoU threshold
};

/// Last hypothesis each ground-truth id was matched to.
using MatchHistory = std::map<int, int>;

inline FrameCorrespondence match_frame(int frame, const FrameObjects& gt, const FrameObjects& pred,
                                       const EvalConfig& config, MatchHistory& history) {
  config.validate();
  const std::size_t no = gt.size(), nh = pred.size();
  const double max_dist = 1.0 - config.iou_threshold;
  std::vector<double> dist(no * nh, std::nan(""));
  FrameCorrespondence fc;
  fc.frame = frame;
  fc.gt_ids = gt.ids;
  fc.pred_ids = pred.ids;
  for (std::size_t i = 0; i < no; ++i)
    for (std::size_t j = 0; j < nh; ++j) {
      const double d = 1.0 - box_iou(gt.positions[i], pred.positions[j], config.box_side);
      if (d <= max_dist) {
        dist[i * nh + j] = d;
        fc.valid_pairs.emplace_back(gt.ids[i], pred.ids[j]);
      }
    }

  std::vector<char> o_used(no, 0), h_used(nh, 0);
  if (no > 0 && nh > 0) {
    // Carry forward last frame's correspondences that are still valid.
    for (std::size_t i = 0; i < no; ++i) {
      const auto it = history.find(gt.ids[i]);
      if (it == history.end()) continue;
      for (std::size_t j = 0; j < nh; ++j) {
        if (h_used[j] || pred.ids[j] != it->second) continue;
        if (!std::isnan(dist[i * nh + j])) {
          o_used[i] = h_used[j] = 1;
          fc.matches.push_back({gt.ids[i], pred.ids[j], dist[i * nh + j], false});
        }
        break;
      }
    }
    // Optimal assignment of the rest.
    const int O = static_cast<int>(no), H = static_cast<int>(nh);
    MinCostFlow flow(O + H + 2);
    const int source = O + H, sink = O + H + 1;
    std::vector<std::tuple<std::size_t, std::size_t, std::pair<int, int>>> edges;
    for (int i = 0; i < O; ++i) {
      if (o_used[i]) continue;
      flow.add_edge(source, i, 1, 0);
      for (int j = 0; j < H; ++j) {
        const double d = dist[i * nh + j];
        if (h_used[j] || std::isnan(d)) continue;
        edges.emplace_back(i, j, flow.add_edge(i, O + j, 1, static_cast<MinCostFlow::Cost>(std::llround(d * 1e9))));
      }
    }
    for (int j = 0; j < H; ++j)
      if (!h_used[j]) flow.add_edge(O + j, sink, 1, 0);
    flow.solve(source, sink);
    for (const auto& [i, j, handle] : edges) {
      if (flow.flow_on(handle) == 0) continue;
      const int o = gt.ids[i], h = pred.ids[j];
      const auto it = history.find(o);
      const bool sw = it != history.end() && it->second != h;
      fc.matches.push_back({o, h, dist[i * nh + j], sw});
      o_used[i] = h_used[j] = 1;
      history[o] = h;
    }
  }
  for (std::size_t i = 0; i < no; ++i)
    if (!o_used[i]) fc.misses.push_back(gt.ids[i]);
  for (std::size_t j = 0; j < nh; ++j)
    if (!h_used[j]) fc.false_positives.push_back(pred.ids[j]);
  return fc;
}

/// Percentages are in [0, 100] (MOTA can be negative); counts are absolute.
struct MotReport {
  double idf1 = 0, idp = 0, idr = 0;
  double mt = 0, ml = 0;  // percent of ground-truth ids
  long fp = 0, fn = 0, ids = 0, fm = 0;
  double mota = 0, motp = 0;

  long num_objects = 0;      // ground-truth boxes
  long num_predictions = 0;  // predicted boxes
  long num_matches = 0;      // including switches
  long idtp = 0;
  long num_unique_objects = 0;
  long mostly_tracked = 0, mostly_lost = 0;
};

namespace detail {
/// Largest total overlap over one-to-one (gt id, hypothesis id) pairings.
inline long max_identity_overlap(const std::map<std::pair<int, int>, long>& overlap) {
  std::map<int, int> oidx, hidx;
  long best = 0;
  for (const auto& [k, v] : overlap) {
    oidx.emplace(k.first, static_cast<int>(oidx.size()));
    hidx.emplace(k.second, static_cast<int>(hidx.size()));
    best = std::max(best, v);
  }
  const int O = static_cast<int>(oidx.size()), H = static_cast<int>(hidx.size());
  if (O == 0) return 0;
  const MinCostFlow::Cost K = best + 1;
  MinCostFlow flow(O + H + 2);
  const int source = O + H, sink = O + H + 1;
  for (int i = 0; i < O; ++i) {
    flow.add_edge(source, i, 1, 0);
    flow.add_edge(i, sink, 1, K);
  }
  for (int j = 0; j < H; ++j) flow.add_edge(O + j, sink, 1, 0);
  for (const auto& [k, v] : overlap) flow.add_edge(oidx[k.first], O + hidx[k.second], 1, K - v);
  const auto res = flow.solve(source, sink);
  return static_cast<long>(O) * K - res.cost;
}
}  // namespace detail

inline MotReport accumulate(std::span<const FrameCorrespondence> frames) {
  MotReport rep;
  std::map<int, long> obj_freq, obj_tracked, hyp_freq;
  std::map<int, std::vector<char>> obj_seq;  // per gt id: 1 = tracked, 0 = missed, in frame order
  std::map<std::pair<int, int>, long> overlap;
  double dist_sum = 0.0;
  for (const auto& f : frames) {
    rep.num_objects += static_cast<long>(f.gt_ids.size());
    rep.num_predictions += static_cast<long>(f.pred_ids.size());
    rep.fp += static_cast<long>(f.false_positives.size());
    rep.fn += static_cast<long>(f.misses.size());
    std::set<int> tracked;
    for (const auto& m : f.matches) {
      ++rep.num_matches;
      rep.ids += m.is_switch;
      dist_sum += m.distance;
      tracked.insert(m.oid);
    }
    for (int o : f.gt_ids) {
      ++obj_freq[o];
      const bool t = tracked.count(o) > 0;
      obj_tracked[o] += t;
      obj_seq[o].push_back(t);
    }
    for (int h : f.pred_ids) ++hyp_freq[h];
    for (const auto& p : f.valid_pairs) ++overlap[p];
  }
  if (rep.num_objects == 0) throw DataError("ground truth is empty");

  rep.num_unique_objects = static_cast<long>(obj_freq.size());
  for (const auto& [o, n] : obj_freq) {
    const double ratio = static_cast<double>(obj_tracked[o]) / static_cast<double>(n);
    rep.mostly_tracked += ratio >= 0.8;
    rep.mostly_lost += ratio < 0.2;
    // Fragmentations: tracked -> missed transitions between first and last tracked frame.
    const auto& seq = obj_seq[o];
    const auto first = std::find(seq.begin(), seq.end(), 1);
    if (first == seq.end()) continue;
    const auto last = std::find(seq.rbegin(), seq.rend(), 1).base();
    for (auto it = first + 1; it < last; ++it) rep.fm += (*(it - 1) == 1 && *it == 0);
  }

  rep.idtp = detail::max_identity_overlap(overlap);
  const double no = static_cast<double>(rep.num_objects), nh = static_cast<double>(rep.num_predictions);
  rep.idp = nh > 0 ? 100.0 * rep.idtp / nh : 0.0;
  rep.idr = 100.0 * rep.idtp / no;
  rep.idf1 = 100.0 * 2.0 * rep.idtp / (no + nh);
  rep.mota = 100.0 * (1.0 - static_cast<double>(rep.fn + rep.fp + rep.ids) / no);
  rep.motp = rep.num_matches > 0 ? 100.0 * (1.0 - dist_sum / rep.num_matches) : 0.0;
  rep.mt = 100.0 * rep.mostly_tracked / rep.num_unique_objects;
  rep.ml = 100.0 * rep.mostly_lost / rep.num_unique_objects;
  return rep;
}

/// Stateful per-sequence evaluation.
class MotAccumulator {
 public:
  explicit MotAccumulator(EvalConfig config = {}) : config_(config) { config_.validate(); }

  const FrameCorrespondence& update(int frame, const FrameObjects& gt, const FrameObjects& pred) {
    frames_.push_back(match_frame(frame, gt, pred, config_, history_));
    return frames_.back();
  }
  MotReport report() const { return accumulate(frames_); }
  const std::vector<FrameCorrespondence>& frames() const { return frames_; }

 private:
  EvalConfig config_;
  MatchHistory history_;
  std::vector<FrameCorrespondence> frames_;
};

// --- track files -------------------------------------------------------------

struct TrackTable {
  std::map<int, FrameObjects> frames;
};

/// Reads "frame,id,x_m,y_m,matched" rows; coasted rows (matched = 0) are kept
/// only when requested.
inline TrackTable parse_track_csv(std::istream& in, bool include_coasted = false) {
  TrackTable table;
  std::string line;
  if (!std::getline(in, line)) return table;
  if (line.rfind("frame", 0) != 0) throw DataError("track CSV must start with a header row");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    int frame = 0, id = 0, matched = 1;
    double x = 0, y = 0;
    if (!(row >> frame >> id >> x >> y)) throw DataError("malformed track CSV row " + std::to_string(lineno));
    if (!(row >> matched)) matched = 1;
    if (!matched && !include_coasted) continue;
    table.frames[frame].add(id, Vec2(x, y));
  }
  return table;
}

inline TrackTable read_track_csv(const std::filesystem::path& path, bool include_coasted = false) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_track_csv(in, include_coasted);
}

/// Evaluates over the union of frames present in either table.
inline MotReport evaluate(const TrackTable& gt, const TrackTable& pred, const EvalConfig& config = {}) {
  std::set<int> frames;
  for (const auto& [f, _] : gt.frames) frames.insert(f);
  for (const auto& [f, _] : pred.frames) frames.insert(f);
  MotAccumulator acc(config);
  const FrameObjects none;
  for (int f : frames) {
    const auto g = gt.frames.find(f);
    const auto p = pred.frames.find(f);
    acc.update(f, g == gt.frames.end() ? none : g->second, p == pred.frames.end() ? none : p->second);
  }
  return acc.report();
}

inline nlohmann::json report_to_json(const MotReport& r) {
  return {{"IDF1", r.idf1}, {"IDP", r.idp}, {"IDR", r.idr}, {"MT", r.mt}, {"ML", r.ml},
          {"FP", r.fp},     {"FN", r.fn},   {"IDs", r.ids}, {"FM", r.fm}, {"MOTA", r.mota},
          {"MOTP", r.motp}, {"num_objects", r.num_objects}, {"num_predictions", r.num_predictions},
          {"num_matches", r.num_matches}, {"IDTP", r.idtp}, {"num_unique_objects", r.num_unique_objects}};
}

/// Aligned text table, one row per named report.
inline std::string format_report_table(const std::vector<std::pair<std::string, MotReport>>& rows) {
  std::size_t w = 6;
  for (const auto& [name, _] : rows) w = std::max(w, name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %6s %6s %6s %6s %6s %6s %6s %5s %5s %7s %6s\n", static_cast<int>(w), "Method",
                "IDF1", "IDP", "IDR", "MT", "ML", "FP", "FN", "IDs", "FM", "MOTA", "MOTP");
  out += buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %6.1f %6.1f %6.1f %5.1f%% %5.1f%% %6ld %6ld %5ld %5ld %7.1f %6.1f\n",
                  static_cast<int>(w), name.c_str(), r.idf1, r.idp, r.idr, r.mt, r.ml, r.fp, r.fn, r.ids, r.fm, r.mota,
                  r.motp);
    out += buf;
  }
  return out;
}

}  // namespace dmct
