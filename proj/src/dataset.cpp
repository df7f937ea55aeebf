#include "es/dataset.hpp"

#include <algorithm>

#include "es/rng.hpp"

namespace es {

void LabeledDataset::validate() const {
    if (images.shape.size() != 4)
        throw ShapeError("dataset images must be 4-D, got " + shape_str(images.shape));
    if (static_cast<int>(labels.size()) != count())
        throw ConsistencyError("dataset has " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(count()) + " images");
    for (int l : labels)
        if (l < 0 || l >= class_count)
            throw LabelError("label " + std::to_string(l) + " outside [0," + std::to_string(class_count) + ")");
    if (count() > 0) {
        const float lo = images.v.minCoeff();
        const float hi = images.v.maxCoeff();
        if (lo < 0.0f || hi > 1.0f)
            throw ConsistencyError("pixel range [" + std::to_string(lo) + "," + std::to_string(hi) + "] outside [0,1]");
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<int>& indices) const {
    LabeledDataset out;
    out.class_count = class_count;
    out.role = role;
    const std::int64_t isz = item_size();
    out.images = Tensor::zeros({static_cast<int>(indices.size()), channels(), height(), width()});
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const int i = indices[k];
        if (i < 0 || i >= count()) throw ParamError("subset index out of range");
        out.images.v.segment(static_cast<Eigen::Index>(k) * isz, isz) =
            images.v.segment(static_cast<Eigen::Index>(i) * isz, isz);
        out.labels.push_back(labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<std::vector<int>> LabeledDataset::indices_by_class() const {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(class_count));
    for (int i = 0; i < count(); ++i) by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    return by_class;
}

LabeledDataset LabeledDataset::with_role(Role r) const {
    LabeledDataset out = *this;
    out.role = r;
    return out;
}

std::uint64_t LabeledDataset::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    for (int e : images.shape) mix(&e, sizeof(e));
    mix(&class_count, sizeof(class_count));
    for (int l : labels) mix(&l, sizeof(l));
    if (images.v.size() > 0) mix(images.v.data(), static_cast<std::size_t>(images.v.size()) * sizeof(float));
    return h;
}

LabeledDataset LabeledDataset::empty_like(int channels, int height, int width, int class_count, Role role) {
    LabeledDataset out;
    out.images = Tensor::zeros({0, channels, height, width});
    out.class_count = class_count;
    out.role = role;
    return out;
}

LabeledDataset LabeledDataset::concat(const LabeledDataset& a, const LabeledDataset& b, Role role) {
    if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width())
        throw ShapeError("concat: incompatible image shapes");
    if (a.class_count != b.class_count) throw ConsistencyError("concat: class counts differ");
    LabeledDataset out;
    out.class_count = a.class_count;
    out.role = role;
    out.images = Tensor::zeros({a.count() + b.count(), a.channels(), a.height(), a.width()});
    out.images.v.head(a.images.v.size()) = a.images.v;
    out.images.v.tail(b.images.v.size()) = b.images.v;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

SplitResult sample_per_class(const LabeledDataset& corpus, const SamplePlan& plan) {
    if (plan.per_class < 1) throw ParamError("per_class must be >= 1");
    corpus.validate();
    std::vector<int> wanted = plan.class_whitelist;
    if (wanted.empty())
        for (int c = 0; c < corpus.class_count; ++c) wanted.push_back(c);
    std::sort(wanted.begin(), wanted.end());

    auto by_class = corpus.indices_by_class();
    std::vector<char> picked(static_cast<std::size_t>(corpus.count()), 0);
    Rng rng(plan.seed);
    for (int c : wanted) {
        if (c < 0 || c >= corpus.class_count) throw ParamError("class " + std::to_string(c) + " not in corpus");
        auto& pool = by_class[static_cast<std::size_t>(c)];
        if (static_cast<int>(pool.size()) < plan.per_class)
            throw CapacityError("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                                " items, need " + std::to_string(plan.per_class));
        Rng crng = rng.fork(static_cast<std::uint64_t>(c));
        std::vector<int> shuffled = pool;
        crng.shuffle(shuffled);
        for (int k = 0; k < plan.per_class; ++k) picked[static_cast<std::size_t>(shuffled[static_cast<std::size_t>(k)])] = 1;
    }
    std::vector<int> sel, rem;
    for (int i = 0; i < corpus.count(); ++i) (picked[static_cast<std::size_t>(i)] ? sel : rem).push_back(i);
    SplitResult out{corpus.subset(sel), corpus.subset(rem)};
    out.selected.role = LabeledDataset::Role::original;
    out.remainder.role = LabeledDataset::Role::pretrain;
    return out;
}

} // namespace es
