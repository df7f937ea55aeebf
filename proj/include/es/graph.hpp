#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "es/errors.hpp"

namespace es {

class Rng;

/// Simple undirected graph on a dense adjacency; symmetric, no self-loops.
struct Graph {
    int n = 0;
    std::vector<std::uint8_t> adj; // row-major n*n

    static Graph empty(int n);
    static Graph complete(int n);

    bool edge(int u, int v) const { return adj[static_cast<std::size_t>(u) * n + v] != 0; }
    void set_edge(int u, int v, bool on);
    int degree(int v) const;
    std::vector<std::pair<int, int>> edges() const; // u < v
    bool connected() const;
};

/// L = D - A as a dense double matrix (row sums are exactly zero).
Eigen::MatrixXd laplacian(const Graph& g);

/// lambda_2 - lambda_1 of the Laplacian, eigenvalues ascending. Computed in
/// double; eigenvalues below 1e-9 * max(1, lambda_max) are treated as zero
/// (Laplacians are PSD with an exact zero mode), so disconnected graphs report
/// exactly 0 and small integer spectra land exactly on their values in float.
double spectral_gap_d(const Graph& g);
float spectral_gap(const Graph& g);

/// Uniform-ish random r-regular simple graph via stub pairing with retries.
Graph random_regular(int n, int r, Rng& rng);

struct CodeGraph {
    Graph graph;
    int class_id = -1;
    float gap = 0.0f;
    int degree = 0;
    std::uint64_t seed = 0;
};

/// Accepted-step gap trace; non-decreasing by construction.
using HillClimbTrace = std::vector<double>;

/// Start from a connected random r-regular graph and hill-climb double-edge
/// swaps, accepting only strict spectral-gap increases (connectivity follows).
/// iters == 0 returns the initial graph untouched.
CodeGraph build_code_graph(int vertices, int degree, int iters, std::uint64_t seed, int class_id = -1,
                           HillClimbTrace* trace = nullptr);

/// One "u v" pair per line, ascending.
void save_edge_list(const Graph& g, const std::string& path);
/// JSON metadata record for a code graph (class, gap, degree, seed).
void save_code_graph_meta(const CodeGraph& g, const std::string& path);

} // namespace es
