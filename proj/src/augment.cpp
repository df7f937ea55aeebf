#include "es/augment.hpp"

#include <algorithm>

#include "es/rng.hpp"

namespace es {

namespace {

void jitter_into(const float* src, float* dst, int c, int h, int w, Rng& rng, const AugmentOpts& opts) {
    const int dx = rng.below_int(2 * opts.max_shift + 1) - opts.max_shift;
    const int dy = rng.below_int(2 * opts.max_shift + 1) - opts.max_shift;
    const bool flip = opts.horizontal_flip && rng.below(2) == 1;
    const float brightness = rng.uniform(-opts.max_brightness, opts.max_brightness);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int sx0 = flip ? w - 1 - x : x;
                const int sy = y - dy;
                const int sx = sx0 - dx;
                float v = 0.0f;
                if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                    v = src[(static_cast<std::int64_t>(ch) * h + sy) * w + sx];
                v += brightness;
                dst[(static_cast<std::int64_t>(ch) * h + y) * w + x] = std::clamp(v, 0.0f, 1.0f);
            }
}

} // namespace

LabeledDataset classical_augment(const LabeledDataset& x, int ratio, std::uint64_t seed, const AugmentOpts& opts) {
    if (ratio < 1) throw ParamError("augmentation ratio must be >= 1");
    x.validate();
    LabeledDataset out;
    out.class_count = x.class_count;
    out.role = LabeledDataset::Role::merged;
    const int n = x.count();
    out.images = Tensor::zeros({n * ratio, x.channels(), x.height(), x.width()});
    out.labels.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(ratio));
    const std::int64_t item = x.item_size();
    // Block 0 is the originals verbatim; blocks 1..ratio-1 are jittered copies.
    out.images.v.head(x.images.v.size()) = x.images.v;
    std::copy(x.labels.begin(), x.labels.end(), out.labels.begin());
    Rng root(seed);
    for (int rep = 1; rep < ratio; ++rep) {
        for (int i = 0; i < n; ++i) {
            Rng rng = root.fork(static_cast<std::uint64_t>(rep) * 0x10000ull + static_cast<std::uint64_t>(i));
            const std::int64_t di = (static_cast<std::int64_t>(rep) * n + i) * item;
            jitter_into(x.images.v.data() + static_cast<std::int64_t>(i) * item, out.images.v.data() + di,
                        x.channels(), x.height(), x.width(), rng, opts);
            out.labels[static_cast<std::size_t>(rep) * n + i] = x.labels[static_cast<std::size_t>(i)];
        }
    }
    return out;
}

} // namespace es
