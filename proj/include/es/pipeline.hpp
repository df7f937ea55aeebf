#pragma once

#include <array>
#include <optional>
#include <string>

#include "es/attention.hpp"
#include "es/autoencoder.hpp"
#include "es/classifier.hpp"
#include "es/losses.hpp"
#include "es/synthesis.hpp"

namespace es {

/// Cumulative ablation ladder; `full` aliases the last rung for the default
/// pipeline configuration.
enum class Rung { baseline = 0, rwa = 1, sa = 2, sc = 3, mhsa = 4, egm = 5, full = 5 };
const char* rung_name(Rung r);

enum class Combiner { egm, lin_interp };

struct ExpansionConfig {
    std::string dataset = "digits"; // digits | mnist | cifar10
    int per_class = 10;
    int er = 10;
    int epochs = 30;       // N, expansion training epochs
    int class_count = 10;  // M
    std::array<float, 4> alpha{1.0f, 0.5f, 0.1f, 0.01f};

    // attention
    int heads = 4;
    int head_dim = 16;
    int patch = 2;
    float crop_q = 0.6f;

    // code graphs
    int graph_degree = 3;
    int graph_iters = 300;

    // optimal transport
    float ot_epsilon = 0.05f;
    int ot_iters = 200;

    // seeds (all explicit; no wall-clock defaults anywhere)
    std::uint64_t seed_data = 1;
    std::uint64_t seed_model = 2;
    std::uint64_t seed_expansion = 3;

    // training knobs
    float lr = 1e-3f;
    int finetune_epochs = 20;
    float finetune_lr = 1e-3f;
    int pretrain_epochs = 20;
    float pretrain_lr = 1e-3f;
    int pretrain_batch = 64;
    int pretrain_items = 5000; // leading slab of the corpus reserved for X''
    int classifier_epochs = 45;
    float classifier_lr = 1e-3f;
    int classifier_batch = 32;
    bool skips = false;

    Rung rung = Rung::full;

    AeConfig ae_config() const;
    AttnConfig attn_config() const;       // honors the rung's attention setting
    ClassifierConfig classifier_config(int class_count_override = -1) const;
    Combiner combiner() const { return rung == Rung::egm ? Combiner::egm : Combiner::lin_interp; }

    std::string echo() const;             // stable, order-fixed key=value line
    std::uint64_t hash() const;
    void validate() const;

    /// The rung's derived settings applied onto a copy of this config.
    ExpansionConfig for_rung(Rung r) const;
};

struct LossRow {
    int epoch;
    int class_id;
    float re, ce, w, cov, total;
};

struct ArmResult {
    std::string name;
    int items = 0;
    double accuracy = 0.0;
};

struct RunReport {
    std::string kind;
    std::vector<ArmResult> arms;
    std::vector<LossRow> loss_series;
    std::uint64_t test_checksum = 0;
    std::uint64_t classifier_hash = 0; // arch + init seed + epochs + test set
    std::string config_echo;

    std::string to_text() const;
    std::string arms_csv() const;
    std::string loss_csv() const;
};

struct ExpansionResult {
    LabeledDataset xprime;
    std::vector<LossRow> loss_series;
    std::vector<CodeGraph> graphs;
    ParamStore params; // trained joint state (ae.*, attn.*, convt.*, incls.*)
    AttnConfig attn;
};

/// Algorithm: per epoch, per class — encode, attend, expand, decode, evaluate
/// the four weighted losses on that class, update the trainable parameters.
/// Epoch 0 in the series is a pre-update evaluation pass. N == 0 performs a
/// single forward expansion with the given weights and changes nothing.
ExpansionResult run_expansion(const ExpansionConfig& cfg, const LabeledDataset& x, const Autoencoder& pretrained);

/// Splits a corpus into the pretraining slab X'' (leading `pretrain_items`,
/// disjoint from everything sampled later) and the few-shot pool.
struct CorpusSplit {
    LabeledDataset pretrain;
    LabeledDataset fewshot_pool;
};
CorpusSplit split_corpus(const LabeledDataset& corpus, const ExpansionConfig& cfg);

/// Three arms under one classifier seed: original X, classical augmentation,
/// expansive synthesis. The pretrained autoencoder is cloned per run.
RunReport run_comparison(const ExpansionConfig& cfg, const LabeledDataset& fewshot_pool, const LabeledDataset& test,
                         const Autoencoder& pretrained);

/// Cumulative ladder baseline -> +RwA -> +SA -> +SC -> +MHSA -> +EGM.
RunReport run_ablation(const ExpansionConfig& cfg, const LabeledDataset& fewshot_pool, const LabeledDataset& test,
                       const Autoencoder& pretrained, int rungs = 6);

/// Classifier trained on one dataset arm, evaluated on `test`.
double train_and_evaluate_arm(const ExpansionConfig& cfg, const LabeledDataset& arm, const LabeledDataset& test);

} // namespace es
