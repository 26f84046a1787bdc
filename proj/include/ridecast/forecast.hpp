#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ridecast/common.hpp"
#include "ridecast/nn.hpp"
#include "ridecast/tape.hpp"
#include "ridecast/tensor.hpp"

namespace ridecast {

// Stage-2 forecasting: patch encoding of the indicator plus exogenous
// channels, a textual series description fed through a hashed text embedder,
// retrieval from a learnable prompt memory pool keyed by the Stage-1 region
// embeddings, cross-modal fusion, and a frozen pretrained backbone adapted
// with low-rank (LoRA) updates.

// ---- patching ---------------------------------------------------------------

struct PatchSpec {
    int lookback = 336; // L, half-hour steps (one week)
    int horizon = 48;   // T, half-hour steps (one day)
    int patch = 48;     // P, steps per non-overlapping patch
    int d = 64;         // D, feature dimension
    int n_patches() const { return lookback / patch; }
    void validate() const;
};

// Registers "<prefix>.embed" (P -> D), "<prefix>.eos" {1, D},
// "<prefix>.pos" {L/P + 1, D}, "<prefix>.attn" (MHA), "<prefix>.mlp1/.mlp2".
void add_patch_encoder(ParamSet& ps, const std::string& prefix, const PatchSpec& spec,
                       Rng& rng);

// Splits a {1, L} window into L/P patches, applies the linear patch embedding
// plus position embeddings, appends the learned end-of-sequence token, runs
// one self-attention block with a residual MLP, and returns the
// end-of-sequence row {1, D}.
Var patch_encode(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                 const PatchSpec& spec, int heads, Var window);

// ---- textual description ----------------------------------------------------

// Deterministic five-slot description of a series window: nature attribute,
// trend (least-squares slope sign), periodicity (dominant autocorrelation lag
// among the daily/weekly candidates), stability (coefficient-of-variation
// bucket), and noise (residual-variance bucket after removing trend and the
// dominant cycle). `indicator` selects the nature-attribute phrase.
std::string describe_series(const std::vector<double>& window, const std::string& indicator);

// ---- prompt memory pool ------------------------------------------------------

struct PromptRetrieval {
    Var features;             // {1, d} weighted sum of selected values
    std::vector<int> indices; // selected pool rows: score descending, index ascending
    Var alpha;                // {1, k_p} softmax weights over the selection
};

// Cosine-matches the query {1, d} against all M key rows, keeps the k_p
// best (ties by similarity, then by lower pool index), softmaxes the selected
// similarities and returns the weighted sum of the corresponding value rows.
// Non-selected values receive weight zero. Rejects zero-norm queries and
// k_p outside [1, M].
PromptRetrieval prompt_retrieve(Tape& t, Var keys, Var values, Var query, int k_p);

// ---- cross-modal fusion ------------------------------------------------------

// F = softmax((T Wq)(U Wk)^T / sqrt(d)) (U Wv) with parameters
// "<prefix>.Wq/.Wk/.Wv"; text rows attend over the fused series rows.
Var cross_modal_fuse(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                     Var text, Var u);
// The attention matrix alone, {n_text, n_u}; rows sum to 1.
Var cross_modal_weights(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                        Var text, Var u);

// ---- frozen backbone ---------------------------------------------------------

struct BackboneSpec {
    int layers = 2;
    int d = 64;
    int heads = 4;
    int hidden = 128;
    int patch = 48; // patch length of the next-patch pretraining objective
    void validate() const;
};

struct Backbone {
    BackboneSpec spec;
    ParamSet params; // trunk + pretraining embed/head; frozen downstream
    std::uint64_t seed = 0;
};

Backbone make_backbone(const BackboneSpec& spec, std::uint64_t seed);

// Runs the residual attention+MLP trunk over the rows of x ({n, d} -> {n, d}).
// When `adapters` is non-null, LoRA adapters named
// "<adapter_prefix>.l<j>.{q,k,v}" modulate every attention projection.
Var backbone_encode(Tape& t, const ParamSet::Bound& frozen, const BackboneSpec& spec,
                    Var x, const ParamSet::Bound* adapters = nullptr,
                    const std::string& adapter_prefix = "lora", double lora_scale = 1.0);

struct BackbonePretrainConfig {
    BackboneSpec spec;
    int steps = 120;
    double lr = 1e-3;
    double holdout_fraction = 0.25;
    std::uint64_t seed = 0;
};

struct BackbonePretrainResult {
    Backbone backbone;
    std::vector<double> loss_curve; // training loss per step
    double holdout_initial = 0.0;   // next-patch loss at initialization
    double holdout_final = 0.0;     // next-patch loss after training
};

// Next-patch prediction over per-window z-scored series. Every corpus window
// must be a positive multiple of spec.patch with at least two patches.
BackbonePretrainResult pretrain_backbone(const std::vector<std::vector<double>>& corpus,
                                         const BackbonePretrainConfig& cfg);

// Checkpoint directory: backbone.json (dims, seed, weights hash) +
// backbone.f32 (binary32 little-endian). Loading verifies the content hash.
void save_backbone(const Backbone& b, const std::string& dir);
Backbone load_backbone(const std::string& dir);

// ---- forecaster --------------------------------------------------------------

struct ForecasterConfig {
    PatchSpec patch;
    int heads = 4;          // patch-encoder attention heads
    int pool_m = 64;        // memory pool size M
    int pool_kp = 16;       // retrieval width k_p
    int lora_rank = 4;      // r
    double lora_scale = 2.0;
    int text_dim = 32;      // hashed text embedding width
    int h_dim = 32;         // Stage-1 embedding dimension
    bool use_prompt = true; // retrieval features replaced by zeros when false
    bool use_lora = true;   // backbone runs unadapted when false
    bool use_events = true; // exogenous channels zeroed when false
    std::uint64_t seed = 0;
    void validate() const;
};

struct Forecaster {
    ForecasterConfig cfg;
    Backbone backbone; // frozen
    ParamSet params;   // all trainable parts
};

Forecaster make_forecaster(const ForecasterConfig& cfg, Backbone backbone);

struct ForecastInput {
    Tensor window;  // {N_c, L} raw indicator lookback
    Tensor rain;    // {N_c, L}
    Tensor event;   // {N_c, L}
    Tensor holiday; // {1, L} shared across counties
    Tensor h;       // {N_c, h_dim} Stage-1 county embeddings
    std::string indicator = "call";
};

// Full forward pass; returns predictions {T, N_c} on the raw scale. Windows
// are z-scored per region internally and predictions de-normalized with the
// same statistics, so the pipeline is equivariant to per-region affine
// rescaling of the input window. Rejects non-finite inputs.
Var forecast_forward(Tape& t, const Forecaster& f, const ParamSet::Bound& trainable,
                     const ParamSet::Bound& frozen, const ForecastInput& in);

// Convenience wrapper: binds parameters on a fresh tape and returns values.
Tensor forecast_predict(const Forecaster& f, const ForecastInput& in);

struct ForecastSample {
    ForecastInput input;
    Tensor target; // {N_c, T} raw scale
};

struct ForecastDataset {
    std::vector<std::string> region_ids; // county ids, row order of the tensors
    std::string indicator = "call";
    std::vector<ForecastSample> train;
    std::vector<ForecastSample> val;
};

struct ForecastTrainConfig {
    ForecasterConfig model;
    std::string backbone_dir; // checkpoint produced by save_backbone (required)
    int max_steps = 300;
    int batch = 32;    // windows per optimizer step
    int eval_every = 20;
    int patience = 3;  // evaluation rounds without val improvement
    double lr = 1e-3;
};

struct ForecastTrainResult {
    Forecaster model;
    std::vector<double> train_curve; // mean training MAE per evaluation round
    std::vector<double> val_curve;   // validation WMAPE per evaluation round
    int best_round = 0;              // index into val_curve
};

// Minimizes horizon MAE with Adam; the backbone base stays frozen. Early
// stopping restores the best-validation-WMAPE snapshot. Aborts when the
// backbone checkpoint is missing.
ForecastTrainResult train_forecaster(const ForecastDataset& data,
                                     const ForecastTrainConfig& cfg);

// Checkpoint directory: forecaster.json + trainable.f32 + backbone.f32,
// hashes verified on load.
void save_forecaster(const Forecaster& f, const std::string& dir);
Forecaster load_forecaster(const std::string& dir);

// Rows ordered horizon-step-major: timestamps.size() == T rows of N_c regions.
void write_predictions_csv(const std::string& path,
                           const std::vector<std::int64_t>& timestamps,
                           const std::vector<std::string>& region_ids,
                           const std::string& indicator, const Tensor& pred);

} // namespace ridecast
