#pragma once

#include "es/dataset.hpp"

namespace es {

struct AugmentOpts {
    int max_shift = 2;           // pixels, per axis
    bool horizontal_flip = false; // enabled for CIFAR-style corpora
    float max_brightness = 0.1f;
};

/// Classical label-preserving augmentation baseline: originals once, plus
/// (ratio-1) jittered copies of each (shift, optional flip, brightness),
/// clamped back to [0,1]. Per-class counts scale exactly by `ratio`.
LabeledDataset classical_augment(const LabeledDataset& x, int ratio, std::uint64_t seed,
                                 const AugmentOpts& opts = {});

} // namespace es
