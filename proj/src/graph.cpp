#include "es/graph.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>

#include "es/rng.hpp"
#include "json.hpp"

namespace es {

Graph Graph::empty(int n) {
    if (n < 0) throw ParamError("graph size must be >= 0");
    Graph g;
    g.n = n;
    g.adj.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
    return g;
}

Graph Graph::complete(int n) {
    Graph g = empty(n);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (u != v) g.adj[static_cast<std::size_t>(u) * n + v] = 1;
    return g;
}

void Graph::set_edge(int u, int v, bool on) {
    if (u == v) throw ParamError("self-loops are not allowed");
    if (u < 0 || v < 0 || u >= n || v >= n) throw ParamError("vertex out of range");
    adj[static_cast<std::size_t>(u) * n + v] = on ? 1 : 0;
    adj[static_cast<std::size_t>(v) * n + u] = on ? 1 : 0;
}

int Graph::degree(int v) const {
    int d = 0;
    for (int u = 0; u < n; ++u) d += adj[static_cast<std::size_t>(v) * n + u];
    return d;
}

std::vector<std::pair<int, int>> Graph::edges() const {
    std::vector<std::pair<int, int>> out;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (edge(u, v)) out.emplace_back(u, v);
    return out;
}

bool Graph::connected() const {
    if (n == 0) return true;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v = 0; v < n; ++v)
            if (edge(u, v) && !seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                ++visited;
                stack.push_back(v);
            }
    }
    return visited == n;
}

Eigen::MatrixXd laplacian(const Graph& g) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(g.n, g.n);
    for (int u = 0; u < g.n; ++u) {
        int deg = 0;
        for (int v = 0; v < g.n; ++v)
            if (g.edge(u, v)) {
                L(u, v) = -1.0;
                ++deg;
            }
        L(u, u) = deg;
    }
    return L;
}

double spectral_gap_d(const Graph& g) {
    if (g.n < 2) throw ParamError("spectral gap needs at least 2 vertices");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian(g), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("eigensolver failed on graph Laplacian");
    Eigen::VectorXd ev = solver.eigenvalues(); // ascending
    const double tau = 1e-9 * std::max(1.0, ev(g.n - 1));
    for (int i = 0; i < g.n; ++i)
        if (std::abs(ev(i)) < tau) ev(i) = 0.0;
    return ev(1) - ev(0);
}

float spectral_gap(const Graph& g) { return static_cast<float>(spectral_gap_d(g)); }

Graph random_regular(int n, int r, Rng& rng) {
    if (n < 1 || r < 0 || r >= n) throw ParamError("random_regular: need 0 <= r < n");
    if ((static_cast<long long>(n) * r) % 2 != 0) throw ParamError("random_regular: n*r must be even");
    for (int attempt = 0; attempt < 2000; ++attempt) {
        std::vector<int> stubs;
        stubs.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(r));
        for (int v = 0; v < n; ++v)
            for (int k = 0; k < r; ++k) stubs.push_back(v);
        rng.shuffle(stubs);
        Graph g = Graph::empty(n);
        bool ok = true;
        for (std::size_t i = 0; i + 1 < stubs.size() && ok; i += 2) {
            const int u = stubs[i], v = stubs[i + 1];
            if (u == v || g.edge(u, v)) ok = false;
            else g.set_edge(u, v, true);
        }
        if (ok) return g;
    }
    throw NumericError("random_regular: pairing failed to produce a simple graph");
}

CodeGraph build_code_graph(int vertices, int degree, int iters, std::uint64_t seed, int class_id,
                           HillClimbTrace* trace) {
    if (degree < 2 || degree >= vertices) throw ParamError("build_code_graph: need 2 <= r < L");
    if ((static_cast<long long>(vertices) * degree) % 2 != 0)
        throw ParamError("build_code_graph: r*L must be even");
    Rng rng(seed);
    Graph g = random_regular(vertices, degree, rng);
    for (int guard = 0; !g.connected(); ++guard) {
        if (guard > 500) throw NumericError("build_code_graph: could not draw a connected regular graph");
        g = random_regular(vertices, degree, rng);
    }
    double gap = spectral_gap_d(g);
    if (trace) trace->push_back(gap);
    for (int it = 0; it < iters; ++it) {
        auto es_ = g.edges();
        if (es_.size() < 2) break;
        const auto [a, b] = es_[rng.below(es_.size())];
        const auto [c, d] = es_[rng.below(es_.size())];
        // Double-edge swap (a-b, c-d) -> (a-c, b-d); keeps all degrees.
        if (a == c || a == d || b == c || b == d) continue;
        if (g.edge(a, c) || g.edge(b, d)) continue;
        g.set_edge(a, b, false);
        g.set_edge(c, d, false);
        g.set_edge(a, c, true);
        g.set_edge(b, d, true);
        bool accept = g.connected();
        double new_gap = gap;
        if (accept) {
            new_gap = spectral_gap_d(g);
            accept = new_gap > gap + 1e-12;
        }
        if (accept) {
            gap = new_gap;
            if (trace) trace->push_back(gap);
        } else {
            g.set_edge(a, c, false);
            g.set_edge(b, d, false);
            g.set_edge(a, b, true);
            g.set_edge(c, d, true);
        }
    }
    CodeGraph out;
    out.graph = std::move(g);
    out.class_id = class_id;
    out.gap = static_cast<float>(gap);
    out.degree = degree;
    out.seed = seed;
    return out;
}

void save_edge_list(const Graph& g, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    for (const auto& [u, v] : g.edges()) f << u << " " << v << "\n";
}

void save_code_graph_meta(const CodeGraph& g, const std::string& path) {
    nlohmann::json j;
    j["class"] = g.class_id;
    j["gap"] = g.gap;
    j["degree"] = g.degree;
    j["seed"] = g.seed;
    j["vertices"] = g.graph.n;
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

} // namespace es
