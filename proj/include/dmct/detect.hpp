#pragma once

// Proposal generation on fused ground maps, proposal labeling against ground
// truth and the classification stage that turns proposals into detections.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <tuple>
#include <vector>

#include "dmct/error.hpp"
#include "dmct/fusion.hpp"
#include "dmct/glimpse.hpp"
#include "dmct/proposal.hpp"

namespace dmct {

struct DetectParams {
  double min_score = 0.3;
  double min_separation_m = 0.3;
  double iou_threshold = 0.5;  // proposal labeling threshold
  double box_side = 1.0;
};

/// Cells that are >= min_score and >= all 8 neighbors. Connected plateaus of
/// equal value yield one proposal at their lexicographically smallest
/// (row, col) cell, and only if no cell bordering the plateau is higher.
/// Proposals closer than `min_separation` cells to a higher-scoring one are
/// dropped. Output is sorted by (row, col).
inline std::vector<Proposal> local_maxima(const OccupancyMap& map, const GroundGrid& grid, double min_score,
                                          double min_separation) {
  if (!(min_score >= 0.0 && min_score <= 1.0)) throw ConfigError("min_score must be in [0,1]");
  if (map.rows() != grid.rows || map.cols() != grid.cols) throw ConfigError("map does not match the grid");
  const int R = map.rows();
  const int C = map.cols();
  std::vector<Proposal> found;
  std::vector<char> visited(map.size(), 0);
  std::vector<std::pair<int, int>> queue;
  const auto floor_score = static_cast<float>(min_score);

  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      const float v = map(r, c);
      if (v < floor_score || v <= 0.0f) continue;
      bool higher = false, equal = false;
      for (int dr = -1; dr <= 1 && !higher; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr | dc) == 0 || !map.in_bounds(r + dr, c + dc)) continue;
          const float n = map(r + dr, c + dc);
          if (n > v) {
            higher = true;
            break;
          }
          equal |= (n == v);
        }
      if (higher) continue;
      if (!equal) {
        found.push_back({r, c, grid.cell_center(r, c), v});
        continue;
      }
      const std::size_t idx = static_cast<std::size_t>(r) * C + c;
      if (visited[idx]) continue;
      // Flood the plateau; row-major scan order means (r, c) is its smallest cell.
      bool is_max = true;
      queue.assign(1, {r, c});
      visited[idx] = 1;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const auto [pr, pc] = queue[q];
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int nr = pr + dr, nc = pc + dc;
            if ((dr | dc) == 0 || !map.in_bounds(nr, nc)) continue;
            const float n = map(nr, nc);
            if (n > v) is_max = false;
            const std::size_t nidx = static_cast<std::size_t>(nr) * C + nc;
            if (n == v && !visited[nidx]) {
              visited[nidx] = 1;
              queue.emplace_back(nr, nc);
            }
          }
      }
      if (is_max) found.push_back({r, c, grid.cell_center(r, c), v});
    }
  }

  if (min_separation > 0.0 && found.size() > 1) {
    std::vector<std::size_t> order(found.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return found[a].score > found[b].score; });
    std::vector<Proposal> kept;
    const double sep2 = min_separation * min_separation;
    for (auto i : order) {
      const auto& p = found[i];
      const bool close = std::any_of(kept.begin(), kept.end(), [&](const Proposal& k) {
        const double dr = k.row - p.row, dc = k.col - p.col;
        return dr * dr + dc * dc < sep2;
      });
      if (!close) kept.push_back(p);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    return kept;
  }
  return found;
}

inline std::vector<Proposal> local_maxima(const FusedMap& map, double min_score, double min_separation) {
  return local_maxima(map.mean, map.grid, min_score, min_separation);
}

/// IoU of two axis-aligned squares of side `side` centered at `a` and `b`.
inline double square_iou(const Vec2& a, const Vec2& b, double side) {
  const double ox = std::max(0.0, side - std::abs(a.x() - b.x()));
  const double oy = std::max(0.0, side - std::abs(a.y() - b.y()));
  const double inter = ox * oy;
  return inter / (2.0 * side * side - inter);
}

struct ProposalLabel {
  double iou = 0.0;
  bool positive = false;
};

/// Labels each proposal by its IoU with the nearest ground-truth point.
inline std::vector<ProposalLabel> label_proposals(std::span<const Proposal> proposals, std::span<const Vec2> truth,
                                                  double box_side, double iou_threshold) {
  if (!(box_side > 0.0)) throw ConfigError("box_side must be positive");
  std::vector<ProposalLabel> labels;
  labels.reserve(proposals.size());
  for (const auto& p : proposals) {
    ProposalLabel l;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : truth) {
      const double d = (t - p.position).squaredNorm();
      if (d < best) {
        best = d;
        l.iou = square_iou(p.position, t, box_side);
      }
    }
    l.positive = l.iou >= iou_threshold;
    labels.push_back(l);
  }
  return labels;
}

/// Scores proposals from the newest map of `history` (oldest first). With no
/// model every proposal is accepted with class score 1.
inline std::vector<Detection> classify(std::span<const Proposal> proposals, std::span<const FusedMap* const> history,
                                       const GlimpseModel* model) {
  std::vector<Detection> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) {
    Detection d{p, 1.0, true};
    if (model) {
      d.class_score = score(model->classifier, extract_features(p, history, model->config, model->source));
      d.accepted = d.class_score >= model->threshold;
    }
    out.push_back(d);
  }
  return out;
}

inline void write_detections_header(std::ostream& os) { os << "frame,x_m,y_m,peak_score,class_score,accepted\n"; }

inline void write_detections(std::ostream& os, int frame, std::span<const Detection> dets) {
  for (const auto& d : dets) {
    os << frame << ',' << d.proposal.position.x() << ',' << d.proposal.position.y() << ',' << d.proposal.score << ','
       << d.class_score << ',' << (d.accepted ? 1 : 0) << '\n';
  }
}

}  // namespace dmct
