#pragma once

// Exact transport LP by negative-cycle cancelling, started from the
// north-west corner plan.  Dense and slow; meant for instances with a
// handful of rows and columns.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace oracle {

struct LpResult {
    double cost = 0.0;
    std::vector<double> flow; // rows x cols
};

inline LpResult min_cost_transport(std::span<const double> supply, std::span<const double> demand,
                                   std::span<const double> cost) {
    const std::size_t R = supply.size(), C = demand.size(), V = R + C;
    std::vector<double> flow(R * C, 0.0);
    {
        std::vector<double> a(supply.begin(), supply.end()), b(demand.begin(), demand.end());
        std::size_t i = 0, j = 0;
        while (i < R && j < C) {
            const double x = std::min(a[i], b[j]);
            flow[i * C + j] += x;
            a[i] -= x;
            b[j] -= x;
            if (a[i] <= b[j]) ++i;
            else ++j;
        }
        // float leftovers go to the last cell of their row
        for (std::size_t r = 0; r < R; ++r)
            if (a[r] > 0.0) flow[r * C + C - 1] += a[r];
    }

    constexpr double kMinGain = 1e-13;
    constexpr double kMinFlow = 1e-16;
    // residual arcs: row i -> col j always (cost c), col j -> row i when flow > 0 (cost -c)
    auto arc_cost = [&](std::size_t u, std::size_t v) {
        return u < R ? cost[u * C + (v - R)] : -cost[v * C + (u - R)];
    };
    auto arc_open = [&](std::size_t u, std::size_t v) {
        if (u < R) return v >= R;
        return v < R && flow[v * C + (u - R)] > kMinFlow;
    };

    for (int round = 0; round < 100000; ++round) {
        std::vector<double> dist(V, 0.0);
        std::vector<std::size_t> pred(V, SIZE_MAX);
        std::size_t touched = SIZE_MAX;
        for (std::size_t pass = 0; pass < V; ++pass) {
            touched = SIZE_MAX;
            for (std::size_t u = 0; u < V; ++u)
                for (std::size_t v = 0; v < V; ++v) {
                    if (!arc_open(u, v)) continue;
                    const double nd = dist[u] + arc_cost(u, v);
                    if (nd < dist[v] - kMinGain) {
                        dist[v] = nd;
                        pred[v] = u;
                        touched = v;
                    }
                }
            if (touched == SIZE_MAX) break;
        }
        if (touched == SIZE_MAX) break;
        std::size_t x = touched;
        for (std::size_t k = 0; k < V; ++k) x = pred[x];
        std::vector<std::size_t> cycle{x};
        for (std::size_t y = pred[x]; y != x; y = pred[y]) cycle.push_back(y);
        std::reverse(cycle.begin(), cycle.end()); // forward order
        double total = 0.0, push = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cycle.size(); ++k) {
            const std::size_t u = cycle[k], v = cycle[(k + 1) % cycle.size()];
            total += arc_cost(u, v);
            if (u >= R) push = std::min(push, flow[v * C + (u - R)]);
        }
        if (total >= -kMinGain || !(push < std::numeric_limits<double>::infinity())) break;
        for (std::size_t k = 0; k < cycle.size(); ++k) {
            const std::size_t u = cycle[k], v = cycle[(k + 1) % cycle.size()];
            if (u < R) flow[u * C + (v - R)] += push;
            else flow[v * C + (u - R)] -= push;
        }
    }

    LpResult res;
    res.flow = flow;
    for (std::size_t k = 0; k < R * C; ++k) res.cost += flow[k] * cost[k];
    return res;
}

} // namespace oracle
