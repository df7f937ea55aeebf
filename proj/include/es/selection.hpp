#pragma once

#include <cstdint>
#include <vector>

#include "es/errors.hpp"
#include "es/tensor.hpp"

namespace es {

/// m^L - m: every column-selection tuple minus the m "diagonal" ones that
/// reproduce an original datapoint. Throws ArithmeticError on u64 overflow.
std::uint64_t count_combinations(std::uint64_t m, std::uint64_t L);

/// S = P^i M. `rows[j]` holds the selected row for column j (exactly one 1 per
/// column); M picks L distinct rows, P is a seeded permutation of the m rows.
struct SelectionMatrix {
    int m = 0;
    int L = 0;
    int power = 0;
    std::vector<int> rows; // per column
    std::vector<int> base; // M's row per column
    std::vector<int> perm; // P as a mapping v -> perm[v]

    Tensor to_dense() const; // {m, L} of 0/1
};

SelectionMatrix selection_matrix(int iteration, int m, int L, std::uint64_t seed);

/// `count` pairwise-distinct non-diagonal selection tuples (one source row per
/// column). Walks the P^i M family first, then tops up with general seeded
/// draws; falls back to full enumeration for small spaces. CapacityError when
/// count exceeds m^L - m.
std::vector<std::vector<int>> selection_plan(int m, int L, int count, std::uint64_t seed);

} // namespace es
