#pragma once

// Exact optimal-transport oracle for uniform marginals by exhaustive vertex
// enumeration of the transportation polytope: every basic feasible solution is
// supported on a spanning tree of K_{n,m}; enumerate all edge subsets of size
// n+m-1, keep the trees, solve the unique flow by leaf peeling, and take the
// cheapest nonnegative one. Independent of the production Sinkhorn path.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracles {

inline double lp_transport_cost(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    const int edges = n * m;
    const int k = n + m - 1;
    std::vector<int> comb(static_cast<std::size_t>(k));
    std::iota(comb.begin(), comb.end(), 0);
    double best = std::numeric_limits<double>::infinity();

    auto advance = [&]() {
        int i = k - 1;
        while (i >= 0 && comb[static_cast<std::size_t>(i)] == edges - k + i) --i;
        if (i < 0) return false;
        ++comb[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
        return true;
    };

    std::vector<int> parent(static_cast<std::size_t>(n + m));
    std::function<int(int)> find = [&](int x) { return parent[static_cast<std::size_t>(x)] == x ? x : parent[static_cast<std::size_t>(x)] = find(parent[static_cast<std::size_t>(x)]); };

    do {
        // Spanning-tree test over vertices {rows 0..n-1} u {cols n..n+m-1}.
        std::iota(parent.begin(), parent.end(), 0);
        bool tree = true;
        for (int e = 0; e < k && tree; ++e) {
            const int r = comb[static_cast<std::size_t>(e)] / m;
            const int c = n + comb[static_cast<std::size_t>(e)] % m;
            const int ra = find(r), ca = find(c);
            if (ra == ca) tree = false;
            else parent[static_cast<std::size_t>(ra)] = ca;
        }
        if (!tree) continue;

        // Leaf peeling solves the unique flow on the tree.
        std::vector<double> need(static_cast<std::size_t>(n + m));
        for (int i = 0; i < n; ++i) need[static_cast<std::size_t>(i)] = 1.0 / n;
        for (int j = 0; j < m; ++j) need[static_cast<std::size_t>(n + j)] = 1.0 / m;
        std::vector<char> edge_done(static_cast<std::size_t>(k), 0);
        std::vector<double> flow(static_cast<std::size_t>(k), 0.0);
        std::vector<int> deg(static_cast<std::size_t>(n + m), 0);
        for (int e = 0; e < k; ++e) {
            ++deg[static_cast<std::size_t>(comb[static_cast<std::size_t>(e)] / m)];
            ++deg[static_cast<std::size_t>(n + comb[static_cast<std::size_t>(e)] % m)];
        }
        bool ok = true;
        for (int round = 0; round < k; ++round) {
            int pick = -1, leaf = -1;
            for (int e = 0; e < k && pick < 0; ++e) {
                if (edge_done[static_cast<std::size_t>(e)]) continue;
                const int r = comb[static_cast<std::size_t>(e)] / m;
                const int c = n + comb[static_cast<std::size_t>(e)] % m;
                if (deg[static_cast<std::size_t>(r)] == 1) { pick = e; leaf = r; }
                else if (deg[static_cast<std::size_t>(c)] == 1) { pick = e; leaf = c; }
            }
            if (pick < 0) { ok = false; break; }
            const int r = comb[static_cast<std::size_t>(pick)] / m;
            const int c = n + comb[static_cast<std::size_t>(pick)] % m;
            const int other = (leaf == r) ? c : r;
            flow[static_cast<std::size_t>(pick)] = need[static_cast<std::size_t>(leaf)];
            need[static_cast<std::size_t>(other)] -= need[static_cast<std::size_t>(leaf)];
            need[static_cast<std::size_t>(leaf)] = 0.0;
            edge_done[static_cast<std::size_t>(pick)] = 1;
            --deg[static_cast<std::size_t>(r)];
            --deg[static_cast<std::size_t>(c)];
        }
        if (!ok) continue;
        double total = 0.0;
        bool feasible = true;
        for (int e = 0; e < k; ++e) {
            if (flow[static_cast<std::size_t>(e)] < -1e-12) { feasible = false; break; }
            total += std::max(0.0, flow[static_cast<std::size_t>(e)]) *
                     cost(comb[static_cast<std::size_t>(e)] / m, comb[static_cast<std::size_t>(e)] % m);
        }
        if (feasible) best = std::min(best, total);
    } while (advance());
    return best;
}

} // namespace oracles
