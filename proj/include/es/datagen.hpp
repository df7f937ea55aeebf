#pragma once

#include "es/dataset.hpp"

namespace es {

/// Deterministic 10-class 28x28 digit corpus: stroke glyphs rendered under
/// random affine jitter (rotation, scale, shear, shift), varying stroke
/// thickness and additive noise. Classes are balanced (label = index mod 10).
/// Stands in for MNIST when no IDX corpus is available; goes through the same
/// ingestion path once written with save_idx_corpus.
LabeledDataset make_digit_corpus(int count, std::uint64_t seed,
                                 LabeledDataset::Role role = LabeledDataset::Role::original);

} // namespace es
