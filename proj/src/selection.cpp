#include "es/selection.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "es/rng.hpp"

namespace es {

namespace {

std::uint64_t key_of(const std::vector<int>& tuple, int m) {
    std::uint64_t k = 0;
    for (int r : tuple) k = k * static_cast<std::uint64_t>(m) + static_cast<std::uint64_t>(r);
    return k;
}

bool diagonal(const std::vector<int>& tuple) {
    for (std::size_t j = 1; j < tuple.size(); ++j)
        if (tuple[j] != tuple[0]) return false;
    return true;
}

} // namespace

std::uint64_t count_combinations(std::uint64_t m, std::uint64_t L) {
    if (m < 1 || L < 1) throw ParamError("count_combinations: need m >= 1 and L >= 1");
    unsigned __int128 acc = 1;
    for (std::uint64_t i = 0; i < L; ++i) {
        acc *= m;
        if (acc > static_cast<unsigned __int128>(UINT64_MAX))
            throw ArithmeticError("count_combinations: m^L exceeds 64-bit range");
    }
    return static_cast<std::uint64_t>(acc) - m;
}

SelectionMatrix selection_matrix(int iteration, int m, int L, std::uint64_t seed) {
    if (m < L) throw CapacityError("selection_matrix: need m >= L, got m=" + std::to_string(m) + " L=" + std::to_string(L));
    if (L < 1) throw ParamError("selection_matrix: L must be >= 1");
    if (iteration < 0) throw ParamError("selection_matrix: iteration must be >= 0");
    Rng root(seed);
    SelectionMatrix s;
    s.m = m;
    s.L = L;
    s.power = iteration;
    // M: one 1 per column, in distinct rows.
    std::vector<int> rows_pool(static_cast<std::size_t>(m));
    std::iota(rows_pool.begin(), rows_pool.end(), 0);
    Rng mr = root.fork(1);
    mr.shuffle(rows_pool);
    s.base.assign(rows_pool.begin(), rows_pool.begin() + L);
    // P: seeded permutation of the m rows.
    s.perm.resize(static_cast<std::size_t>(m));
    std::iota(s.perm.begin(), s.perm.end(), 0);
    Rng pr = root.fork(2);
    pr.shuffle(s.perm);
    s.rows = s.base;
    for (int step = 0; step < iteration; ++step)
        for (int j = 0; j < L; ++j) s.rows[static_cast<std::size_t>(j)] = s.perm[static_cast<std::size_t>(s.rows[static_cast<std::size_t>(j)])];
    return s;
}

Tensor SelectionMatrix::to_dense() const {
    Tensor t = Tensor::zeros({m, L});
    for (int j = 0; j < L; ++j) t.v[static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)]) * L + j] = 1.0f;
    return t;
}

std::vector<std::vector<int>> selection_plan(int m, int L, int count, std::uint64_t seed) {
    if (count < 0) throw ParamError("selection_plan: count must be >= 0");
    const std::uint64_t capacity = count_combinations(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(L));
    if (static_cast<std::uint64_t>(count) > capacity)
        throw CapacityError("selection_plan: need " + std::to_string(count) + " combinations but m=" +
                            std::to_string(m) + ", L=" + std::to_string(L) + " admits only " + std::to_string(capacity));
    std::vector<std::vector<int>> out;
    std::unordered_set<std::uint64_t> seen;
    out.reserve(static_cast<std::size_t>(count));
    auto push = [&](const std::vector<int>& tuple) {
        if (diagonal(tuple)) return false;
        if (!seen.insert(key_of(tuple, m)).second) return false;
        out.push_back(tuple);
        return true;
    };
    // Phase 1: powers of the seeded permutation applied to the base selection.
    if (m >= L && L >= 2) {
        SelectionMatrix s0 = selection_matrix(0, m, L, seed);
        std::vector<int> rows = s0.base;
        for (int t = 0; t < 4 * m && static_cast<int>(out.size()) < count; ++t) {
            push(rows);
            for (int j = 0; j < L; ++j) rows[static_cast<std::size_t>(j)] = s0.perm[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])];
        }
    }
    // Phase 2: seeded rejection over the full non-diagonal tuple space.
    Rng rng(seed ^ 0x5e1ec7ull);
    long long budget = 400ll * (count + 4) + 4000;
    std::vector<int> tuple(static_cast<std::size_t>(L));
    while (static_cast<int>(out.size()) < count && budget-- > 0) {
        for (int j = 0; j < L; ++j) tuple[static_cast<std::size_t>(j)] = rng.below_int(m);
        push(tuple);
    }
    if (static_cast<int>(out.size()) < count) {
        // Phase 3: the space is small enough to enumerate outright.
        std::uint64_t space = 1;
        for (int j = 0; j < L; ++j) space *= static_cast<std::uint64_t>(m);
        if (space > (1ull << 22))
            throw CapacityError("selection_plan: sampling exhausted near capacity on a large tuple space");
        std::vector<std::uint64_t> keys(space);
        std::iota(keys.begin(), keys.end(), 0ull);
        Rng er(seed ^ 0xe11e5ull);
        er.shuffle(keys);
        for (std::uint64_t k : keys) {
            if (static_cast<int>(out.size()) >= count) break;
            std::uint64_t rest = k;
            for (int j = L - 1; j >= 0; --j) {
                tuple[static_cast<std::size_t>(j)] = static_cast<int>(rest % static_cast<std::uint64_t>(m));
                rest /= static_cast<std::uint64_t>(m);
            }
            push(tuple);
        }
    }
    if (static_cast<int>(out.size()) < count)
        throw CapacityError("selection_plan: could not realize the requested number of combinations");
    return out;
}

} // namespace es
