#pragma once

// Min-cost max-flow by successive shortest augmenting paths with Johnson
// potentials. Integer capacities and costs keep the arithmetic exact.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "dmct/error.hpp"

namespace dmct {

class MinCostFlow {
 public:
  using Cost = std::int64_t;

  struct Edge {
    int to;
    int rev;  // index of the reverse edge in adj[to]
    int cap;
    Cost cost;
  };

  explicit MinCostFlow(int nodes) : adj_(static_cast<std::size_t>(nodes)) {}

  int nodes() const { return static_cast<int>(adj_.size()); }

  /// Returns a handle usable with `flow_on`.
  std::pair<int, int> add_edge(int from, int to, int cap, Cost cost) {
    if (from < 0 || to < 0 || from >= nodes() || to >= nodes()) throw RuntimeError("flow edge endpoint out of range");
    if (cap < 0) throw RuntimeError("flow edge capacity must be non-negative");
    const int fi = static_cast<int>(adj_[from].size());
    const int ti = static_cast<int>(adj_[to].size()) + (from == to ? 1 : 0);
    adj_[from].push_back({to, ti, cap, cost});
    adj_[to].push_back({from, fi, 0, -cost});
    if (cost < 0) has_negative_ = true;
    return {from, fi};
  }

  int flow_on(std::pair<int, int> handle) const {
    const Edge& e = adj_[handle.first][handle.second];
    return adj_[e.to][e.rev].cap;
  }

  struct Result {
    int flow = 0;
    Cost cost = 0;
  };

  Result solve(int source, int sink, int max_flow = std::numeric_limits<int>::max()) {
    const int n = nodes();
    std::vector<Cost> potential(n, 0);
    if (has_negative_) potential = bellman_ford(source);

    Result res;
    std::vector<Cost> dist(n);
    std::vector<int> prev_node(n), prev_edge(n);
    using Item = std::pair<Cost, int>;
    while (res.flow < max_flow) {
      std::fill(dist.begin(), dist.end(), kInf);
      dist[source] = 0;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      pq.emplace(0, source);
      while (!pq.empty()) {
        const auto [d, u] = pq.top();
        pq.pop();
        if (d != dist[u]) continue;
        for (int i = 0; i < static_cast<int>(adj_[u].size()); ++i) {
          const Edge& e = adj_[u][i];
          if (e.cap <= 0 || potential[e.to] == kInf) continue;
          const Cost nd = d + e.cost + potential[u] - potential[e.to];
          if (nd < dist[e.to]) {
            dist[e.to] = nd;
            prev_node[e.to] = u;
            prev_edge[e.to] = i;
            pq.emplace(nd, e.to);
          }
        }
      }
      if (dist[sink] == kInf) break;
      for (int v = 0; v < n; ++v)
        if (dist[v] != kInf) potential[v] += dist[v];

      int push = max_flow - res.flow;
      for (int v = sink; v != source; v = prev_node[v]) push = std::min(push, adj_[prev_node[v]][prev_edge[v]].cap);
      for (int v = sink; v != source; v = prev_node[v]) {
        Edge& e = adj_[prev_node[v]][prev_edge[v]];
        e.cap -= push;
        adj_[v][e.rev].cap += push;
        res.cost += static_cast<Cost>(push) * e.cost;
      }
      res.flow += push;
    }
    return res;
  }

 private:
  static constexpr Cost kInf = std::numeric_limits<Cost>::max() / 4;

  std::vector<Cost> bellman_ford(int source) const {
    const int n = nodes();
    std::vector<Cost> d(n, kInf);
    d[source] = 0;
    for (int it = 0; it < n; ++it) {
      bool changed = false;
      for (int u = 0; u < n; ++u) {
        if (d[u] == kInf) continue;
        for (const Edge& e : adj_[u])
          if (e.cap > 0 && d[u] + e.cost < d[e.to]) {
            d[e.to] = d[u] + e.cost;
            changed = true;
          }
      }
      if (!changed) return d;
    }
    throw RuntimeError("negative cost cycle in flow network");
  }

  std::vector<std::vector<Edge>> adj_;
  bool has_negative_ = false;
};

}  // namespace dmct
