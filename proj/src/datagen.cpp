#include "es/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "es/rng.hpp"

namespace es {

namespace {

struct P {
    float x, y;
};

using Stroke = std::vector<P>;

std::vector<Stroke> ellipse(float cx, float cy, float rx, float ry, int pts = 20) {
    Stroke s;
    for (int i = 0; i <= pts; ++i) {
        const float a = 6.2831853f * static_cast<float>(i) / static_cast<float>(pts);
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return {s};
}

std::vector<Stroke> glyph_strokes(int digit) {
    switch (digit) {
        case 0:
            return ellipse(0.50f, 0.50f, 0.26f, 0.36f);
        case 1:
            return {{{0.36f, 0.30f}, {0.56f, 0.14f}, {0.56f, 0.86f}}};
        case 2:
            return {{{0.30f, 0.34f},
                     {0.34f, 0.21f},
                     {0.47f, 0.14f},
                     {0.60f, 0.17f},
                     {0.69f, 0.27f},
                     {0.69f, 0.40f},
                     {0.30f, 0.86f},
                     {0.72f, 0.86f}}};
        case 3:
            return {{{0.32f, 0.20f},
                     {0.48f, 0.13f},
                     {0.64f, 0.20f},
                     {0.67f, 0.33f},
                     {0.52f, 0.46f},
                     {0.69f, 0.57f},
                     {0.68f, 0.75f},
                     {0.50f, 0.87f},
                     {0.32f, 0.79f}}};
        case 4:
            return {{{0.62f, 0.86f}, {0.62f, 0.14f}, {0.29f, 0.62f}, {0.75f, 0.62f}}};
        case 5:
            return {{{0.68f, 0.14f},
                     {0.34f, 0.14f},
                     {0.32f, 0.45f},
                     {0.52f, 0.41f},
                     {0.68f, 0.51f},
                     {0.69f, 0.70f},
                     {0.52f, 0.86f},
                     {0.32f, 0.78f}}};
        case 6:
            return {{{0.63f, 0.15f},
                     {0.45f, 0.22f},
                     {0.35f, 0.42f},
                     {0.33f, 0.62f},
                     {0.42f, 0.82f},
                     {0.60f, 0.84f},
                     {0.68f, 0.70f},
                     {0.63f, 0.55f},
                     {0.46f, 0.51f},
                     {0.35f, 0.59f}}};
        case 7:
            return {{{0.29f, 0.16f}, {0.71f, 0.16f}, {0.45f, 0.86f}}};
        case 8: {
            auto top = ellipse(0.50f, 0.32f, 0.17f, 0.17f, 16);
            auto bot = ellipse(0.50f, 0.66f, 0.20f, 0.20f, 16);
            top.push_back(bot[0]);
            return top;
        }
        case 9:
            return {{{0.64f, 0.35f},
                     {0.58f, 0.21f},
                     {0.42f, 0.18f},
                     {0.33f, 0.30f},
                     {0.36f, 0.45f},
                     {0.52f, 0.50f},
                     {0.64f, 0.40f},
                     {0.64f, 0.35f}},
                    {{0.64f, 0.38f}, {0.61f, 0.86f}}};
        default:
            throw ParamError("digit out of range");
    }
}

float seg_dist(P q, P a, P b) {
    const float vx = b.x - a.x, vy = b.y - a.y;
    const float wx = q.x - a.x, wy = q.y - a.y;
    const float vv = vx * vx + vy * vy;
    float t = vv > 0.0f ? (wx * vx + wy * vy) / vv : 0.0f;
    t = std::clamp(t, 0.0f, 1.0f);
    const float dx = q.x - (a.x + t * vx);
    const float dy = q.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

// Subdivide a polyline so smooth warps bend the strokes, not just their
// endpoints.
Stroke subdivide(const Stroke& s, float max_len) {
    Stroke out;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const P a = s[i], b = s[i + 1];
        const float len = std::sqrt((b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y));
        const int pieces = std::max(1, static_cast<int>(len / max_len));
        for (int k = 0; k < pieces; ++k) {
            const float t = static_cast<float>(k) / static_cast<float>(pieces);
            out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
        }
    }
    out.push_back(s.back());
    return out;
}

void render_digit(float* out, int digit, Rng& rng) {
    constexpr int N = 28;
    const float theta = rng.uniform(-0.22f, 0.22f);
    const float sx = rng.uniform(0.8f, 1.05f);
    const float sy = rng.uniform(0.8f, 1.05f);
    const float shear = rng.uniform(-0.12f, 0.12f);
    const float tx = rng.uniform(-0.1f, 0.1f);
    const float ty = rng.uniform(-0.1f, 0.1f);
    const float thick = rng.uniform(0.095f, 0.16f);
    const float intensity = rng.uniform(0.92f, 1.0f);
    const float noise = 0.015f;

    const float ct = std::cos(theta), st = std::sin(theta);
    auto warp = [&](P p) {
        float x = p.x - 0.5f, y = p.y - 0.5f;
        x += shear * y;
        x *= sx;
        y *= sy;
        const float rx = ct * x - st * y;
        const float ry = st * x + ct * y;
        return P{rx + 0.5f + tx, ry + 0.5f + ty};
    };

    // Smooth elastic field: two low-frequency sinusoids per axis. This is the
    // dominant intra-class variation; it bends strokes the way handwriting
    // styles do, which pixel shifts cannot imitate.
    struct Wave {
        float ax, ay, fx, fy, phx, phy;
    };
    Wave waves[2];
    for (Wave& w : waves) {
        w.ax = rng.uniform(0.02f, 0.055f);
        w.ay = rng.uniform(0.02f, 0.055f);
        w.fx = rng.uniform(0.8f, 2.2f);
        w.fy = rng.uniform(0.8f, 2.2f);
        w.phx = rng.uniform(0.0f, 6.2831853f);
        w.phy = rng.uniform(0.0f, 6.2831853f);
    }
    auto elastic = [&](P p) {
        float dx = 0.0f, dy = 0.0f;
        for (const Wave& w : waves) {
            dx += w.ax * std::sin(6.2831853f * (w.fx * p.x + w.fy * p.y) + w.phx);
            dy += w.ay * std::sin(6.2831853f * (w.fy * p.x + w.fx * p.y) + w.phy);
        }
        return P{p.x + dx, p.y + dy};
    };

    std::vector<Stroke> strokes = glyph_strokes(digit);
    for (auto& s : strokes) {
        s = subdivide(s, 0.05f);
        for (auto& p : s) p = elastic(warp(p));
    }

    constexpr float aa = 0.022f;
    for (int py = 0; py < N; ++py)
        for (int px = 0; px < N; ++px) {
            const P q{(static_cast<float>(px) + 0.5f) / N, (static_cast<float>(py) + 0.5f) / N};
            float d = 1e9f;
            for (const auto& s : strokes)
                for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, seg_dist(q, s[i], s[i + 1]));
            float v = std::clamp((thick - d) / aa + 0.5f, 0.0f, 1.0f) * intensity;
            v += noise * rng.normal();
            out[py * N + px] = std::clamp(v, 0.0f, 1.0f);
        }
}

} // namespace

LabeledDataset make_digit_corpus(int count, std::uint64_t seed, LabeledDataset::Role role) {
    if (count < 0) throw ParamError("corpus count must be >= 0");
    LabeledDataset ds;
    ds.images = Tensor::zeros({count, 1, 28, 28});
    ds.labels.resize(static_cast<std::size_t>(count));
    ds.class_count = 10;
    ds.role = role;
    Rng root(seed);
    for (int i = 0; i < count; ++i) {
        const int digit = i % 10;
        Rng rng = root.fork(static_cast<std::uint64_t>(i));
        render_digit(ds.images.v.data() + static_cast<std::int64_t>(i) * 28 * 28, digit, rng);
        ds.labels[static_cast<std::size_t>(i)] = digit;
    }
    if (count == 0) ds.class_count = 10;
    return ds;
}

} // namespace es
