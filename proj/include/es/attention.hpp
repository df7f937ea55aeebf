#pragma once

#include <string>
#include <vector>

#include "es/nn_ops.hpp"
#include "es/param_store.hpp"

namespace es {

enum class AttnMode { spatial, rowwise };

/// Multi-head spatial self-attention over a patchified latent feature map
/// (Cl, h, w), the fold of a latent vector. No positional encoding.
struct AttnConfig {
    AttnMode mode = AttnMode::spatial;
    int heads = 4;
    int head_dim = 16;
    int patch = 2;
    int map_c = 1;
    int map_h = 8;
    int map_w = 8;

    int latent_dim() const { return map_c * map_h * map_w; }
    int embed_dim() const { return heads * head_dim; }
    int grid_h() const { return mode == AttnMode::spatial ? map_h / patch : map_h; }
    int grid_w() const { return mode == AttnMode::spatial ? map_w / patch : 1; }
    int tokens() const { return grid_h() * grid_w(); }
    int token_dim() const { return mode == AttnMode::spatial ? patch * patch * map_c : map_w * map_c; }
    void validate() const;
};

/// Token extraction order for a (Cl,h,w) map under the config; unpatchify uses
/// the inverse permutation, so the pair is an exact bijection.
std::vector<int> patchify_index(const AttnConfig& cfg);
std::vector<int> unpatchify_index(const AttnConfig& cfg);

/// Plain-tensor patch grid (used standalone and by tests).
struct PatchGrid {
    Tensor tokens; // (T, token_dim)
    int gh = 0, gw = 0;
};
PatchGrid patchify(const Tensor& map, int p);
Tensor unpatchify(const PatchGrid& grid, int c, int h, int w);

/// Graph-side tokenization.
Var patchify_var(Tape& tp, Var map, const AttnConfig& cfg);
Var unpatchify_var(Tape& tp, Var tokens, const AttnConfig& cfg);

/// Attention parameters under `prefix`. The init is identity-preserving:
/// orthonormal token embedding, value/output projections composing to the
/// identity, and shared query/key maps whose self-logits dominate, so an
/// untrained pass reproduces the input map up to soft content clustering.
/// (Deliberate deviation from plain fan-in init: the expansion loop runs few
/// updates and needs a content-preserving starting point.)
void init_attention_params(ParamStore& store, const AttnConfig& cfg, std::uint64_t seed,
                           const std::string& prefix = "attn");

struct MhssaOut {
    Var attended; // (T, token_dim)
    std::vector<Var> head_attn; // per head, (T, T), rows sum to 1
};
MhssaOut mhssa(Tape& tp, BoundParams& p, Var tokens, const AttnConfig& cfg, const std::string& prefix = "attn");

struct CropBox {
    int r0 = 0, c0 = 0, h = 0, w = 0;
};

/// Per-datapoint, per-head attention features: full mass maps plus crop boxes.
struct FeatureSet {
    std::vector<Tensor> maps;    // (gh, gw), each sums to 1
    std::vector<CropBox> crops;  // one per head once attention_crop ran
    int class_id = -1;
    int index = -1;
};

/// Column mass of one head's attention, reshaped to the grid, normalized to
/// sum 1.
Tensor head_mass_map(const Tensor& attn, int gh, int gw);

FeatureSet extract_head_features(const std::vector<Tensor>& head_attns, int gh, int gw, int class_id = -1,
                                 int index = -1);

/// Smallest axis-aligned box grown greedily from the argmax cell holding at
/// least q of the mass, clamped to 2x2 minimum; growth ties resolve in the
/// fixed order up, left, down, right.
CropBox attention_crop_box(const Tensor& mass, float q);
void attention_crop(FeatureSet& fs, float q);

/// Debug: dump per-head mass maps as binary PGM images into `dir`.
void dump_attention_pgm(const FeatureSet& fs, const std::string& dir, const std::string& stem);

} // namespace es
