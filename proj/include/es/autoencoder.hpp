#pragma once

#include <array>
#include <optional>

#include "es/dataset.hpp"
#include "es/nn_ops.hpp"
#include "es/param_store.hpp"
#include "es/rng.hpp"

namespace es {

struct AeConfig {
    int in_channels = 1;
    int in_h = 28;
    int in_w = 28;
    std::array<int, 3> channels{16, 32, 64};
    int latent_dim = 64;
    bool skips = false;

    static AeConfig mnist();
    static AeConfig cifar10();

    int h_after(int block) const; // spatial extent after `block` stride-2 convs
    int w_after(int block) const;
    int flat_dim() const { return channels[2] * h_after(3) * w_after(3); }
};

/// Encoded batch: rows of Y with class tags; `sampled` records whether rows
/// are mu or mu + sigma * noise.
struct LatentBatch {
    Tensor y; // (n, d)
    std::vector<int> labels;
    int class_count = 0;
    bool sampled = false;

    int rows() const { return y.shape.empty() ? 0 : y.shape[0]; }
    int dim() const { return y.shape[1]; }
};

/// Convolutional variational autoencoder: three stride-2 conv blocks with
/// per-channel scale/shift hooks, dense mu/logvar heads, mirrored
/// transposed-conv decoder ending in a sigmoid. Optional gated encoder-to-
/// decoder skip connections at matching resolutions (gates start at zero).
class Autoencoder {
  public:
    Autoencoder(AeConfig cfg, ParamStore store);
    static Autoencoder init(const AeConfig& cfg, std::uint64_t seed);

    const AeConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    struct EncNodes {
        Var mu, logvar, z;
        Var skip1, skip2; // post-activation block outputs (valid when skips on)
    };
    EncNodes encode_nodes(Tape& tp, BoundParams& p, Var images, bool sample, Rng* noise) const;
    Var decode_nodes(Tape& tp, BoundParams& p, Var latents, const EncNodes* enc = nullptr) const;
    struct ReconNodes {
        Var loss, nll, kl;
    };
    ReconNodes recon_nodes(Tape& tp, BoundParams& p, Var images, bool sample, Rng* noise) const;

    LatentBatch encode(const LabeledDataset& x, bool sample, std::uint64_t seed = 0) const;
    LabeledDataset decode(const LatentBatch& y) const;

    struct ReconStats {
        double nll = 0.0, kl = 0.0, total = 0.0;
    };
    ReconStats reconstruction_loss(const LabeledDataset& x, bool sample = false, std::uint64_t seed = 0) const;

    struct EpochStats {
        int epoch;
        double nll, kl, total;
    };
    /// Trains conv/dense weights with scale/shift frozen at identity.
    std::vector<EpochStats> pretrain(const LabeledDataset& corpus, int epochs, float lr, int batch_size,
                                     std::uint64_t seed);
    /// Trains only gamma/beta (all conv layers), skip gates and the dense
    /// heads; filter weights stay frozen.
    std::vector<EpochStats> finetune_scale_shift(const LabeledDataset& x, int epochs, float lr, std::uint64_t seed,
                                                 int batch_size = 64);

    void set_pretrain_trainable();
    void set_finetune_trainable();

    /// Adds zero-initialized skip gates when the config asks for skips but the
    /// checkpoint predates them.
    void ensure_skip_params();

  private:
    AeConfig cfg_;
    ParamStore store_;
    std::array<int, 3> out_pads_{};

    std::vector<EpochStats> train_loop(const LabeledDataset& data, int epochs, float lr, int batch_size,
                                       std::uint64_t seed, const char* what);
};

} // namespace es
