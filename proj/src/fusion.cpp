#include "ridecast/fusion.hpp"

#include <cmath>
#include <string>
#include <tuple>

namespace ridecast {

void add_fusion_params(ParamSet& ps, int d, Rng& rng) {
    require(d >= 1, "add_fusion_params: d must be positive");
    ps.add_uniform("cross.Wq", d, d, d, rng);
    ps.add_uniform("cross.Wk", d, d, d, rng);
    ps.add_uniform("cross.Wv", d, d, d, rng);
    add_linear(ps, "fuse", 2 * d, d, rng);
    add_attn_pool(ps, "county", d, d, rng);
}

namespace {

Var one_direction(Tape& t, Var q_view, Var kv_view, Var wq, Var wk, Var wv) {
    const int d = t.value(q_view).cols();
    Var scores = t.scale(t.matmul(t.matmul(q_view, wq), t.transpose(t.matmul(kv_view, wk))),
                         1.0 / std::sqrt(double(d)));
    return t.matmul(t.softmax_rows(scores), t.matmul(kv_view, wv));
}

} // namespace

std::pair<Var, Var> dual_cross_attention(Tape& t, const ParamSet::Bound& P, Var z_m, Var z_p) {
    const Tensor& m = t.value(z_m);
    const Tensor& p = t.value(z_p);
    require(m.rows() == p.rows(), "dual_cross_attention: views must be row-aligned by region");
    require(m.cols() == p.cols(), "dual_cross_attention: views must share the feature dimension");
    Var wq = pvar(P, "cross.Wq"), wk = pvar(P, "cross.Wk"), wv = pvar(P, "cross.Wv");
    Var m_att = one_direction(t, z_m, z_p, wq, wk, wv);
    Var i_att = one_direction(t, z_p, z_m, wq, wk, wv);
    return {m_att, i_att};
}

Var fuse_views(Tape& t, const ParamSet::Bound& P, Var i_att, Var m_att) {
    require(t.value(i_att).same_shape(t.value(m_att)), "fuse_views: shape mismatch");
    return linear(t, P, "fuse", t.concat_cols({i_att, m_att}));
}

Var cosine_rows(Tape& t, Var a, Var b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.rows() == 1, "cosine_rows: anchor must be a single row");
    require(av.cols() == bv.cols(), "cosine_rows: dimension mismatch");
    for (int r = 0; r < bv.rows(); ++r) {
        double n = 0.0;
        for (int c = 0; c < bv.cols(); ++c) n += bv.at(r, c) * bv.at(r, c);
        require(n > 0.0, "cosine_rows: zero-norm row");
    }
    require(l2_norm(av) > 0.0, "cosine_rows: zero-norm anchor");
    Var dots = t.matmul(a, t.transpose(b));                          // {1, m}
    Var na = t.sqrt(t.row_sums(t.mul(a, a)));                        // {1, 1}
    Var nb = t.transpose(t.sqrt(t.row_sums(t.mul(b, b))));           // {1, m}
    return t.div(dots, t.mul(nb, na));
}

Var info_nce(Tape& t, Var anchor, Var positive, Var negatives, double tau) {
    require(tau > 0.0, "info_nce: temperature must be positive");
    require(t.value(positive).rows() == 1, "info_nce: positive must be a single row");
    require(t.value(negatives).rows() >= 1, "info_nce: at least one negative required");
    Var sp = cosine_rows(t, anchor, positive);   // {1, 1}
    Var sn = cosine_rows(t, anchor, negatives);  // {1, N_L}
    Var all = t.scale(t.concat_cols({sp, sn}), 1.0 / tau);
    return t.sub(t.logsumexp_rows(all), t.scale(sp, 1.0 / tau));
}

namespace {

// n_k distinct indices from [0, n) \ {skip}
std::vector<int> draw_negatives(Rng& rng, int n, int n_k, int skip) {
    std::vector<int> picks = rng.sample_without_replacement(n - 1, n_k);
    for (int& p : picks)
        if (p >= skip) ++p;
    return picks;
}

} // namespace

std::pair<Var, Var> mvc_losses(Tape& t, Var z_f, Var z_p, Var z_m,
                               const ContrastiveConfig& cfg, std::uint64_t seed) {
    const int n = t.value(z_f).rows();
    require(t.value(z_p).rows() == n && t.value(z_m).rows() == n,
            "mvc_losses: matrices must be row-aligned");
    require(cfg.n_negatives >= 1, "mvc_losses: need at least one negative");
    require(n >= cfg.n_negatives + 1, "mvc_losses: batch smaller than n_negatives + 1");
    Rng base(seed);
    Rng rng_p = base.fork(1), rng_m = base.fork(2);
    std::vector<Var> terms_p, terms_m;
    terms_p.reserve(size_t(n));
    terms_m.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        Var anchor = t.slice_rows(z_f, i, i + 1);
        terms_p.push_back(info_nce(t, anchor, t.slice_rows(z_p, i, i + 1),
                                   t.gather_rows(z_p, draw_negatives(rng_p, n, cfg.n_negatives, i)),
                                   cfg.tau));
        terms_m.push_back(info_nce(t, anchor, t.slice_rows(z_m, i, i + 1),
                                   t.gather_rows(z_m, draw_negatives(rng_m, n, cfg.n_negatives, i)),
                                   cfg.tau));
    }
    return {t.mean_all(t.concat_rows(terms_p)), t.mean_all(t.concat_rows(terms_m))};
}

Var pool_to_county(Tape& t, const ParamSet::Bound& P, Var z_f, const City& city) {
    require(!city.counties.empty(), "pool_to_county: no counties");
    std::vector<Var> rows;
    rows.reserve(city.counties.size());
    for (const County& c : city.counties) {
        require(!c.grid_indexes.empty(), "pool_to_county: county without grids: " + c.id);
        rows.push_back(attn_pool(t, P, "county", t.gather_rows(z_f, c.grid_indexes)));
    }
    return t.concat_rows(rows);
}

Var county_pool_weights(Tape& t, const ParamSet::Bound& P, Var z_f, const City& city,
                        int county) {
    require(county >= 0 && county < static_cast<int>(city.counties.size()),
            "county_pool_weights: county out of range");
    const County& c = city.counties[static_cast<size_t>(county)];
    return attn_pool_weights(t, P, "county", t.gather_rows(z_f, c.grid_indexes));
}

Var holistic_part_loss(Tape& t, Var h, Var z_f, const City& city,
                       const ContrastiveConfig& cfg, std::uint64_t seed) {
    const int n_counties = static_cast<int>(city.counties.size());
    const int n_grids = t.value(z_f).rows();
    require(n_counties >= 2, "holistic_part_loss: needs at least two counties");
    require(t.value(h).rows() == n_counties, "holistic_part_loss: H rows must match counties");
    require(cfg.n_negatives >= 1, "holistic_part_loss: need at least one negative");
    Rng rng(seed);
    std::vector<Var> terms;
    for (int i = 0; i < n_counties; ++i) {
        const County& c = city.counties[static_cast<size_t>(i)];
        std::vector<int> others;
        others.reserve(size_t(n_grids));
        std::vector<char> mine(static_cast<size_t>(n_grids), 0);
        for (int g : c.grid_indexes) mine[static_cast<size_t>(g)] = 1;
        for (int g = 0; g < n_grids; ++g)
            if (!mine[static_cast<size_t>(g)]) others.push_back(g);
        require(static_cast<int>(others.size()) >= cfg.n_negatives,
                "holistic_part_loss: not enough other-county grids for negatives");
        Var anchor = t.slice_rows(h, i, i + 1);
        for (int g : c.grid_indexes) {
            std::vector<int> negs;
            for (int pick : rng.sample_without_replacement(static_cast<int>(others.size()),
                                                           cfg.n_negatives))
                negs.push_back(others[static_cast<size_t>(pick)]);
            terms.push_back(info_nce(t, anchor, t.slice_rows(z_f, g, g + 1),
                                     t.gather_rows(z_f, negs), cfg.tau));
        }
    }
    return t.mean_all(t.concat_rows(terms));
}

FusionLosses fusion_losses(Tape& t, Var z_f, Var z_p, Var z_m, Var h, const City& city,
                           const PretrainConfig& cfg, std::uint64_t seed) {
    ContrastiveConfig cc{cfg.tau, cfg.n_negatives};
    Rng base(seed);
    Rng seeder = base.fork(7);
    const std::uint64_t mvc_seed = seeder.next_u64();
    const std::uint64_t hp_seed = seeder.next_u64();
    auto [mvc_p, mvc_m] = mvc_losses(t, z_f, z_p, z_m, cc, mvc_seed);
    Var hp = holistic_part_loss(t, h, z_f, city, cc, hp_seed);
    Var total = t.add(t.add(t.scale(mvc_p, cfg.w_mvc_p), t.scale(mvc_m, cfg.w_mvc_m)),
                      t.scale(hp, cfg.w_hp));
    return {total, mvc_p, mvc_m, hp};
}

// ---- Stage-1 pretraining -----------------------------------------------------

namespace {

// Z_M rows for every grid: counties encoded once, grids inherit their county's row.
Var grid_mobility_rows(Tape& t, const MobilityModel& mob, const ParamSet::Bound& P,
                       const std::vector<MobilityProfiles>& county_profiles, const City& city) {
    Var county_rows = encode_mobility_rows(t, mob, P, county_profiles);
    std::vector<int> county_of(city.grids.size());
    for (size_t g = 0; g < city.grids.size(); ++g) county_of[g] = city.grids[g].county;
    return t.gather_rows(county_rows, county_of);
}

} // namespace

PretrainResult pretrain(const City& city, const SeriesPanel& panel, const PretrainConfig& cfg) {
    city.validate();
    require(cfg.d >= 1 && cfg.lr > 0.0, "pretrain: bad config");
    require(cfg.steps_poi >= 0 && cfg.steps_fusion >= 0, "pretrain: negative step counts");
    const int n_grids = static_cast<int>(city.grids.size());
    const int n_counties = static_cast<int>(city.counties.size());
    require(n_counties >= 2, "pretrain: needs at least two counties");
    require(static_cast<int>(city.pois.size()) >= 2, "pretrain: needs at least two POIs");

    Rng seeder(cfg.seed);
    const std::uint64_t semantic_seed = seeder.next_u64();
    const std::uint64_t mobility_seed = seeder.next_u64();
    const std::uint64_t fusion_seed = seeder.next_u64();
    const std::uint64_t walk_seed = seeder.next_u64();
    const std::uint64_t phase_b_seed = seeder.next_u64();

    PretrainResult res;
    HashedBowEmbedder embedder(cfg.text_dim);
    res.semantic = make_semantic_model(city.vocab, embedder, cfg.d, semantic_seed);
    res.mobility = make_mobility_model(cfg.d, cfg.mobility_hidden, cfg.mobility_heads,
                                       mobility_seed);
    Rng fusion_rng(fusion_seed);
    add_fusion_params(res.fusion, cfg.d, fusion_rng);

    const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

    // phase (a): POI encoders on their contrastive objectives
    const int k = std::min(cfg.knn_k, static_cast<int>(city.pois.size()) - 1);
    std::vector<int> centers(city.pois.size());
    for (size_t i = 0; i < city.pois.size(); ++i) centers[i] = static_cast<int>(i);
    const auto neighbor_sets = all_knn_neighbor_sets(city.pois, k);
    const double sigma = median_knn_distance(city.pois, k);
    const WalkSet walks = sample_random_walks(build_poi_graph(city.pois, k, sigma),
                                              cfg.walk_len, cfg.walks_per_node, walk_seed);
    for (int step = 0; step < cfg.steps_poi; ++step) {
        Tape ts;
        auto Ps = res.semantic.fs.params.bind(ts);
        Var lsp = spatial_proximity_loss(ts, res.semantic.fs, Ps, city.pois, centers,
                                         neighbor_sets);
        const double lsp_v = ts.value(lsp).item();
        ensure(std::isfinite(lsp_v),
               "pretrain: spatial-proximity loss diverged at step " + std::to_string(step));
        ts.backward(lsp);
        res.semantic.fs.params.adam_step_all(ts, Ps, adam);

        Tape th;
        auto Ph = res.semantic.fh.params.bind(th);
        Var lhcs = hierarchical_loss(th, res.semantic.fh, Ph, city.vocab, city.pois, walks,
                                     cfg.lambda_hcs);
        const double lhcs_v = th.value(lhcs).item();
        ensure(std::isfinite(lhcs_v),
               "pretrain: hierarchical loss diverged at step " + std::to_string(step));
        th.backward(lhcs);
        res.semantic.fh.params.adam_step_all(th, Ph, adam);

        res.loss_curve_poi.push_back(lsp_v + lhcs_v);
    }

    // county mobility profiles; grids inherit them
    std::vector<MobilityProfiles> county_profiles;
    county_profiles.reserve(static_cast<size_t>(n_counties));
    for (const County& c : city.counties)
        county_profiles.push_back(aggregate_profiles(panel, panel.region_index(c.id)));

    // negatives clamped so tiny cities stay trainable
    PretrainConfig eff = cfg;
    eff.n_negatives = std::min(cfg.n_negatives, n_grids - 1);
    for (const County& c : city.counties)
        eff.n_negatives =
            std::min(eff.n_negatives, n_grids - static_cast<int>(c.grid_indexes.size()));
    require(eff.n_negatives >= 1, "pretrain: no negatives available for contrastive losses");

    auto forward = [&](Tape& t, const SemanticBound& SB, const ParamSet::Bound& MB,
                       const ParamSet::Bound& FB) {
        Var z_p = grid_semantic_repr(t, res.semantic, SB, city);
        Var z_m = grid_mobility_rows(t, res.mobility, MB, county_profiles, city);
        auto [m_att, i_att] = dual_cross_attention(t, FB, z_m, z_p);
        Var z_f = fuse_views(t, FB, i_att, m_att);
        Var h = pool_to_county(t, FB, z_f, city);
        return std::tuple<Var, Var, Var, Var>{z_p, z_m, z_f, h};
    };

    // phase (b): fusion, pooling and mobility training with frozen POI encoders
    Rng phase_b(phase_b_seed);
    for (int step = 0; step < cfg.steps_fusion; ++step) {
        Tape t;
        SemanticBound SB;
        SB.fs = res.semantic.fs.params.bind(t, cfg.joint);
        SB.fh = res.semantic.fh.params.bind(t, cfg.joint);
        SB.pool = res.semantic.pool.bind(t, true);
        auto MB = res.mobility.params.bind(t, true);
        auto FB = res.fusion.bind(t, true);
        auto [z_p, z_m, z_f, h] = forward(t, SB, MB, FB);
        FusionLosses L = fusion_losses(t, z_f, z_p, z_m, h, city, eff, phase_b.next_u64());
        const double loss_v = t.value(L.total).item();
        ensure(std::isfinite(loss_v),
               "pretrain: fusion loss diverged at step " + std::to_string(step));
        t.backward(L.total);
        res.semantic.pool.adam_step_all(t, SB.pool, adam);
        res.mobility.params.adam_step_all(t, MB, adam);
        res.fusion.adam_step_all(t, FB, adam);
        if (cfg.joint) {
            res.semantic.fs.params.adam_step_all(t, SB.fs, adam);
            res.semantic.fh.params.adam_step_all(t, SB.fh, adam);
        }
        res.loss_curve_fusion.push_back(loss_v);
    }

    // final frozen forward pass for the exported embeddings
    Tape t;
    SemanticBound SB = bind_semantic(t, res.semantic, false);
    auto MB = res.mobility.params.bind(t, false);
    auto FB = res.fusion.bind(t, false);
    auto [z_p, z_m, z_f, h] = forward(t, SB, MB, FB);
    res.z_p = t.value(z_p);
    res.z_m = t.value(z_m);
    res.z_f = t.value(z_f);
    res.h = t.value(h);
    ensure(res.z_f.all_finite() && res.h.all_finite(), "pretrain: non-finite embeddings");
    return res;
}

} // namespace ridecast
