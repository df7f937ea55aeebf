#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "es/tensor.hpp"

namespace es {

/// Labeled image set. Images live in (count, channels, height, width) layout
/// with values in [0,1]; immutable by convention after construction.
struct LabeledDataset {
    enum class Role { original, pretrain, expanded, merged, test };

    Tensor images;
    std::vector<int> labels;
    int class_count = 0;
    Role role = Role::original;

    int count() const { return images.shape.empty() ? 0 : images.shape[0]; }
    int channels() const { return images.shape[1]; }
    int height() const { return images.shape[2]; }
    int width() const { return images.shape[3]; }
    std::int64_t item_size() const {
        return static_cast<std::int64_t>(channels()) * height() * width();
    }

    /// Enforces the construction invariants: label/image counts equal, labels
    /// inside [0, class_count), pixels inside [0,1].
    void validate() const;

    LabeledDataset subset(const std::vector<int>& indices) const;
    std::vector<std::vector<int>> indices_by_class() const;
    LabeledDataset with_role(Role r) const;

    /// FNV-1a over shape, labels and image bytes; stable across runs.
    std::uint64_t checksum() const;

    static LabeledDataset empty_like(int channels, int height, int width, int class_count, Role role);
    static LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b, Role role);
};

struct SamplePlan {
    int per_class = 1;
    std::uint64_t seed = 0;
    std::vector<int> class_whitelist; // empty = all classes
};

struct SplitResult {
    LabeledDataset selected;
    LabeledDataset remainder;
};

/// Draw exactly per_class items of every requested class; remainder is the
/// disjoint complement (indices preserved in ascending corpus order on both
/// sides). Deterministic under plan.seed.
SplitResult sample_per_class(const LabeledDataset& corpus, const SamplePlan& plan);

} // namespace es
