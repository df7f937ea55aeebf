#pragma once

#include "es/dataset.hpp"
#include "es/nn_ops.hpp"
#include "es/param_store.hpp"

namespace es {

/// Small conv net: two stride-2 conv blocks, layer-normalized flat features,
/// dense head. Identical architecture and init seed across comparison arms.
struct ClassifierConfig {
    int in_channels = 1;
    int in_h = 28;
    int in_w = 28;
    int classes = 10;
    int c1 = 16;
    int c2 = 32;

    int flat_dim() const;
    std::uint64_t arch_hash() const;
};

void init_classifier_params(ParamStore& store, const ClassifierConfig& cfg, std::uint64_t seed,
                            const std::string& prefix = "cls");

Var classifier_logits(Tape& tp, BoundParams& p, Var images, const ClassifierConfig& cfg,
                      const std::string& prefix = "cls");

class Classifier {
  public:
    static Classifier init(const ClassifierConfig& cfg, std::uint64_t seed);

    const ClassifierConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }

    /// Adam on cross-entropy; deterministic under seed. Throws TrainingError
    /// on divergence.
    void train(const LabeledDataset& data, int epochs, float lr, int batch_size, std::uint64_t seed);

    std::vector<int> predict(const LabeledDataset& data) const;
    /// Percent correct; argmax ties resolve to the lowest class index.
    double evaluate(const LabeledDataset& test) const;

    double train_accuracy(const LabeledDataset& data) const { return evaluate(data); }

  private:
    Classifier(ClassifierConfig cfg, ParamStore store) : cfg_(cfg), store_(std::move(store)) {}
    ClassifierConfig cfg_;
    ParamStore store_;
};

} // namespace es
