#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ridecast/city.hpp"
#include "ridecast/mobility.hpp"
#include "ridecast/panel.hpp"
#include "ridecast/poi_repr.hpp"

namespace ridecast {

struct ContrastiveConfig {
    double tau = 0.1;
    int n_negatives = 16; // per anchor, drawn without replacement from the batch
};

// Registers the cross-view parameters: shared dual-attention projections
// (cross.Wq/Wk/Wv), the 2d -> d fusion projection (fuse.*) and the county
// attentional pooling head (county.*).
void add_fusion_params(ParamSet& ps, int d, Rng& rng);

// M_att = softmax((Z_M Wq)(Z_P Wk)^T / sqrt(d)) (Z_P Wv) and I_att with the
// view roles swapped; the projections are shared. Attention runs over the
// region axis, rows stay region-aligned.
std::pair<Var, Var> dual_cross_attention(Tape& t, const ParamSet::Bound& P, Var z_m, Var z_p);

// Z_F = (I_att ++ M_att) W + b, projected back to d.
Var fuse_views(Tape& t, const ParamSet::Bound& P, Var i_att, Var m_att);

// Cosine similarities between `a` ({1, d}) and every row of B, as {1, rows(B)}.
// Rejects zero-norm vectors.
Var cosine_rows(Tape& t, Var a, Var b);

// -log[ exp(sim(a,p)/tau) / (exp(sim(a,p)/tau) + sum_j exp(sim(a,n_j)/tau)) ]
// with cosine similarity; anchor/positive {1, d}, negatives {N_L, d}.
Var info_nce(Tape& t, Var anchor, Var positive, Var negatives, double tau);

// Multi-view consistency losses (L_MVC_P, L_MVC_M): every region is an anchor
// in Z_F, the positive is its own row in the single-view matrix and the
// negatives are n_negatives other rows of that matrix, sampled without
// replacement per anchor from `seed`. Each loss is averaged over anchors.
std::pair<Var, Var> mvc_losses(Tape& t, Var z_f, Var z_p, Var z_m,
                               const ContrastiveConfig& cfg, std::uint64_t seed);

// County rows pooled from member-grid rows of Z_F with the county.* head.
Var pool_to_county(Tape& t, const ParamSet::Bound& P, Var z_f, const City& city);

// Pooling weights over one county's member grids, {1, n_members}.
Var county_pool_weights(Tape& t, const ParamSet::Bound& P, Var z_f, const City& city,
                        int county);

// L_HP: anchors H_i against each member grid's Z_F row as positive, with
// n_negatives grid rows from other counties; averaged over (county, grid)
// pairs. Needs at least two counties.
Var holistic_part_loss(Tape& t, Var h, Var z_f, const City& city,
                       const ContrastiveConfig& cfg, std::uint64_t seed);

// ---- Stage-1 pretraining -----------------------------------------------------

struct PretrainConfig {
    int d = 32;
    double tau = 0.1;
    int n_negatives = 16; // clamped to the largest feasible count for tiny cities
    int knn_k = 10;
    int walk_len = 8;
    int walks_per_node = 4;
    double lambda_hcs = 0.1;
    double w_mvc_p = 1.0;
    double w_mvc_m = 1.0;
    double w_hp = 1.0;
    int steps_poi = 150;    // phase (a): POI encoders
    int steps_fusion = 200; // phase (b): everything downstream of the frozen encoders
    double lr = 1e-2;
    int mobility_hidden = 64;
    int mobility_heads = 4;
    int text_dim = 32;
    bool joint = false; // keep POI encoders trainable during phase (b)
    std::uint64_t seed = 0;
};

struct FusionLosses {
    Var total, mvc_p, mvc_m, hp;
};

// The phase-(b) composite loss on an already-built tape. Negative sampling is
// fully determined by `seed`, so equal seeds give equal losses.
FusionLosses fusion_losses(Tape& t, Var z_f, Var z_p, Var z_m, Var h, const City& city,
                           const PretrainConfig& cfg, std::uint64_t seed);

struct PretrainResult {
    SemanticModel semantic;
    MobilityModel mobility;
    ParamSet fusion;
    Tensor z_p, z_m, z_f; // {n_grids, d}
    Tensor h;             // {n_counties, d}
    std::vector<double> loss_curve_poi;
    std::vector<double> loss_curve_fusion;
};

// Sequential Stage-1 schedule: (a) F_s on the spatial-proximity loss and F_h
// on the hierarchical loss; (b) POI encoders frozen (unless cfg.joint), the
// pooling heads, mobility encoder and fusion block trained on the weighted
// consistency losses. Grids inherit their county's mobility profile. The
// panel should already be restricted to the pretraining window.
PretrainResult pretrain(const City& city, const SeriesPanel& panel, const PretrainConfig& cfg);

} // namespace ridecast
