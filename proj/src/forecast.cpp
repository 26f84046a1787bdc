#include "ridecast/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "nlohmann/json.hpp"
#include "ridecast/csvio.hpp"
#include "ridecast/embedlib.hpp"
#include "ridecast/fusion.hpp"
#include "ridecast/poi_repr.hpp"
#include "ridecast/timeutil.hpp"

namespace fs = std::filesystem;

namespace ridecast {

namespace {

void check_finite(const Tensor& x, const char* what) {
    for (double v : x.data)
        require(std::isfinite(v), std::string(what) + ": non-finite values");
}

struct RowStats {
    std::vector<double> mean, sd;
};

RowStats row_stats(const Tensor& x) {
    RowStats s;
    const int n = x.rows(), m = x.cols();
    s.mean.resize(static_cast<size_t>(n));
    s.sd.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < m; ++j) sum += x.at(i, j);
        const double mu = sum / m;
        double var = 0.0;
        for (int j = 0; j < m; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        s.mean[static_cast<size_t>(i)] = mu;
        s.sd[static_cast<size_t>(i)] = std::sqrt(var / m);
    }
    return s;
}

// (x - mean) / sd per row; rows with zero spread map to zeros.
Tensor normalize_rows(const Tensor& x, const RowStats& s) {
    Tensor out = x;
    for (int i = 0; i < x.rows(); ++i) {
        const double inv =
            s.sd[static_cast<size_t>(i)] > 0.0 ? 1.0 / s.sd[static_cast<size_t>(i)] : 0.0;
        for (int j = 0; j < x.cols(); ++j)
            out.at(i, j) = (x.at(i, j) - s.mean[static_cast<size_t>(i)]) * inv;
    }
    return out;
}

// Location-free view used for the textual description: (w - min) / sd, which
// is invariant under positive affine rescaling of the window.
std::vector<double> shape_normalize(const Tensor& x, int row, double sd) {
    std::vector<double> w(static_cast<size_t>(x.cols()));
    double lo = x.at(row, 0);
    for (int j = 1; j < x.cols(); ++j) lo = std::min(lo, x.at(row, j));
    const double inv = sd > 0.0 ? 1.0 / sd : 0.0;
    for (int j = 0; j < x.cols(); ++j)
        w[static_cast<size_t>(j)] = (x.at(row, j) - lo) * inv;
    return w;
}

struct SeriesTraits {
    double mean = 0.0, var = 0.0, sd = 0.0, slope = 0.0;
    int best_lag = 0;    // 0 = no dominant cycle
    double best_r = 0.0; // autocorrelation at best_lag
};

SeriesTraits series_traits(const std::vector<double>& w) {
    SeriesTraits tr;
    const int n = static_cast<int>(w.size());
    for (double v : w) tr.mean += v;
    tr.mean /= n;
    for (double v : w) tr.var += (v - tr.mean) * (v - tr.mean);
    tr.var /= n;
    tr.sd = std::sqrt(tr.var);

    if (n >= 2) {
        const double tbar = (n - 1) / 2.0;
        double sxy = 0.0, sxx = 0.0;
        for (int i = 0; i < n; ++i) {
            sxy += (i - tbar) * (w[static_cast<size_t>(i)] - tr.mean);
            sxx += (i - tbar) * (i - tbar);
        }
        tr.slope = sxy / sxx;
    }

    if (tr.var > 0.0) {
        for (int lag : {kStepsPerDay, kStepsPerWeek}) {
            if (n <= lag) continue;
            double num = 0.0;
            for (int i = 0; i + lag < n; ++i)
                num += (w[static_cast<size_t>(i)] - tr.mean) *
                       (w[static_cast<size_t>(i + lag)] - tr.mean);
            const double r = num / (tr.var * n);
            if (r > tr.best_r) {
                tr.best_r = r;
                tr.best_lag = lag;
            }
        }
        if (tr.best_r <= 0.2) tr.best_lag = 0;
    }
    return tr;
}

Tensor text_feature_rows(const Tensor& window, const RowStats& stats,
                         const std::string& indicator, const TextEmbedder& embedder) {
    Tensor rows = Tensor::zeros({window.rows(), embedder.dim()});
    for (int i = 0; i < window.rows(); ++i) {
        const std::vector<double> shaped =
            shape_normalize(window, i, stats.sd[static_cast<size_t>(i)]);
        const Tensor e = embedder.embed(describe_series(shaped, indicator));
        for (int j = 0; j < e.cols(); ++j) rows.at(i, j) = e.at(0, j);
    }
    return rows;
}

std::string lora_layer_prefix(const std::string& base, int layer) {
    return base + ".l" + std::to_string(layer);
}

nlohmann::json backbone_spec_json(const BackboneSpec& s) {
    return nlohmann::json{{"layers", s.layers}, {"d", s.d},           {"heads", s.heads},
                          {"hidden", s.hidden}, {"patch", s.patch}};
}

BackboneSpec backbone_spec_from_json(const nlohmann::json& j) {
    BackboneSpec s;
    s.layers = j.at("layers").get<int>();
    s.d = j.at("d").get<int>();
    s.heads = j.at("heads").get<int>();
    s.hidden = j.at("hidden").get<int>();
    s.patch = j.at("patch").get<int>();
    return s;
}

std::vector<unsigned char> read_binary_file(const std::string& path) {
    const std::string text = read_text_file(path);
    return std::vector<unsigned char>(text.begin(), text.end());
}

void write_binary_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    write_text_file(path, std::string(bytes.begin(), bytes.end()));
}

} // namespace

// ---- patching ---------------------------------------------------------------

void PatchSpec::validate() const {
    require(lookback > 0 && horizon > 0 && patch > 0 && d > 0,
            "PatchSpec: all dimensions must be positive");
    require(lookback % patch == 0, "PatchSpec: lookback must be a multiple of the patch length");
}

void add_patch_encoder(ParamSet& ps, const std::string& prefix, const PatchSpec& spec,
                       Rng& rng) {
    spec.validate();
    add_linear(ps, prefix + ".embed", spec.patch, spec.d, rng);
    ps.add_uniform(prefix + ".eos", 1, spec.d, spec.d, rng);
    ps.add_uniform(prefix + ".pos", spec.n_patches() + 1, spec.d, spec.d, rng);
    add_mha(ps, prefix + ".attn", spec.d, rng);
    add_linear(ps, prefix + ".mlp1", spec.d, spec.d, rng);
    add_linear(ps, prefix + ".mlp2", spec.d, spec.d, rng);
}

Var patch_encode(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                 const PatchSpec& spec, int heads, Var window) {
    spec.validate();
    require(heads > 0 && spec.d % heads == 0, "patch_encode: heads must divide the feature dim");
    const Tensor& w = t.value(window);
    require(w.rows() == 1 && w.cols() == spec.lookback,
            "patch_encode: window must be {1, lookback}");
    const int np = spec.n_patches();

    Var patches = t.reshape(window, {np, spec.patch});
    Var emb = linear(t, P, prefix + ".embed", patches);            // {np, D}
    Var toks = t.concat_rows({emb, pvar(P, prefix + ".eos")});     // {np+1, D}
    toks = t.add(toks, pvar(P, prefix + ".pos"));
    Var attn = multi_head_attention(t, P, prefix + ".attn", toks, toks, toks, heads);
    Var mlp = linear(t, P, prefix + ".mlp2", t.tanh(linear(t, P, prefix + ".mlp1", attn)));
    Var out = t.add(attn, mlp);
    return t.slice_rows(out, np, np + 1); // the appended end-of-sequence token
}

// ---- textual description ----------------------------------------------------

std::string describe_series(const std::vector<double>& window, const std::string& indicator) {
    require(!window.empty(), "describe_series: window is empty");
    for (double v : window) require(std::isfinite(v), "describe_series: non-finite values");
    const int n = static_cast<int>(window.size());
    const SeriesTraits tr = series_traits(window);

    std::string nature;
    if (indicator == "call")
        nature = "ride-hailing call volume sampled every 30 minutes";
    else if (indicator == "tsh")
        nature = "ride-hailing transaction supply hours sampled every 30 minutes";
    else
        nature = "the " + indicator + " series sampled every 30 minutes";

    const double total_change = tr.slope * (n - 1);
    std::string trend;
    if (std::abs(total_change) <= 1e-9 * (1.0 + tr.sd))
        trend = "flat";
    else
        trend = tr.slope > 0.0 ? "increasing" : "decreasing";

    std::string period = "no clear cycle";
    if (tr.best_lag == kStepsPerDay)
        period = "a daily cycle";
    else if (tr.best_lag == kStepsPerWeek)
        period = "a weekly cycle";

    std::string stability;
    if (tr.var == 0.0) {
        stability = "constant";
    } else if (std::abs(tr.mean) <= 1e-12) {
        stability = "volatile";
    } else {
        const double cv = tr.sd / std::abs(tr.mean);
        stability = cv < 0.1 ? "steady" : cv < 0.5 ? "moderately variable" : "volatile";
    }

    std::string noise;
    if (tr.var == 0.0) {
        noise = "none";
    } else {
        // Per-phase means absorb the detected cycle (and the mean) exactly, so
        // they run before the trend fit — a pure cycle leaves zero residual.
        std::vector<double> resid = window;
        if (tr.best_lag > 0) {
            std::vector<double> phase_sum(static_cast<size_t>(tr.best_lag), 0.0);
            std::vector<int> phase_cnt(static_cast<size_t>(tr.best_lag), 0);
            for (int i = 0; i < n; ++i) {
                phase_sum[static_cast<size_t>(i % tr.best_lag)] += resid[static_cast<size_t>(i)];
                phase_cnt[static_cast<size_t>(i % tr.best_lag)]++;
            }
            for (int i = 0; i < n; ++i)
                resid[static_cast<size_t>(i)] -=
                    phase_sum[static_cast<size_t>(i % tr.best_lag)] /
                    phase_cnt[static_cast<size_t>(i % tr.best_lag)];
        }
        const SeriesTraits rt = series_traits(resid);
        const double tbar = (n - 1) / 2.0;
        double nvar = 0.0;
        for (int i = 0; i < n; ++i) {
            const double e =
                resid[static_cast<size_t>(i)] - (rt.mean + rt.slope * (i - tbar));
            nvar += e * e;
        }
        nvar /= n;
        const double f = nvar / tr.var;
        noise = f < 1e-6 ? "none" : f < 0.1 ? "low" : f < 0.4 ? "moderate" : "high";
    }

    return "Nature: " + nature + ". Trend: " + trend + ". Periodicity: " + period +
           ". Stability: " + stability + ". Noise: " + noise + ".";
}

// ---- prompt memory pool ------------------------------------------------------

PromptRetrieval prompt_retrieve(Tape& t, Var keys, Var values, Var query, int k_p) {
    const Tensor& kv = t.value(keys);
    const Tensor& vv = t.value(values);
    const Tensor& qv = t.value(query);
    require(kv.ndim() == 2 && vv.ndim() == 2, "prompt_retrieve: pool must be 2-dimensional");
    require(kv.rows() == vv.rows(), "prompt_retrieve: keys and values must be row-aligned");
    require(qv.rows() == 1 && qv.cols() == kv.cols(),
            "prompt_retrieve: query must be {1, key dim}");
    const int m = kv.rows();
    require(k_p >= 1 && k_p <= m, "prompt_retrieve: k_p must lie in [1, M]");

    Var sims = cosine_rows(t, query, keys); // {1, M}; rejects zero-norm query
    const Tensor& sv = t.value(sims);
    std::vector<int> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (sv.at(0, a) != sv.at(0, b)) return sv.at(0, a) > sv.at(0, b);
        return a < b;
    });
    order.resize(static_cast<size_t>(k_p));

    PromptRetrieval out;
    out.indices = order;
    Var picked = t.gather_rows(t.transpose(sims), order);       // {k_p, 1}
    out.alpha = t.softmax_rows(t.reshape(picked, {1, k_p}));    // {1, k_p}
    out.features = t.matmul(out.alpha, t.gather_rows(values, order)); // {1, d}
    return out;
}

// ---- cross-modal fusion ------------------------------------------------------

namespace {

Var cross_modal_scores(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                       Var text, Var u) {
    Var wq = pvar(P, prefix + ".Wq");
    Var wk = pvar(P, prefix + ".Wk");
    const int d = t.value(wq).rows();
    require(t.value(text).cols() == d, "cross_modal_fuse: text feature dim mismatch");
    require(t.value(u).cols() == d, "cross_modal_fuse: series feature dim mismatch");
    Var scores = t.matmul(t.matmul(text, wq), t.transpose(t.matmul(u, wk)));
    return t.softmax_rows(t.scale(scores, 1.0 / std::sqrt(static_cast<double>(d))));
}

} // namespace

Var cross_modal_fuse(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                     Var text, Var u) {
    Var attn = cross_modal_scores(t, P, prefix, text, u);
    return t.matmul(attn, t.matmul(u, pvar(P, prefix + ".Wv")));
}

Var cross_modal_weights(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                        Var text, Var u) {
    return cross_modal_scores(t, P, prefix, text, u);
}

// ---- frozen backbone ---------------------------------------------------------

void BackboneSpec::validate() const {
    require(layers >= 1 && d >= 1 && heads >= 1 && hidden >= 1 && patch >= 1,
            "BackboneSpec: all dimensions must be positive");
    require(d % heads == 0, "BackboneSpec: heads must divide the model dim");
}

Backbone make_backbone(const BackboneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Backbone b;
    b.spec = spec;
    b.seed = seed;
    Rng rng(seed);
    add_linear(b.params, "in.embed", spec.patch, spec.d, rng);
    for (int l = 0; l < spec.layers; ++l) {
        const std::string pfx = "l" + std::to_string(l);
        add_mha(b.params, pfx + ".attn", spec.d, rng);
        add_linear(b.params, pfx + ".mlp1", spec.d, spec.hidden, rng);
        add_linear(b.params, pfx + ".mlp2", spec.hidden, spec.d, rng);
    }
    add_linear(b.params, "next.head", spec.d, spec.patch, rng);
    return b;
}

Var backbone_encode(Tape& t, const ParamSet::Bound& frozen, const BackboneSpec& spec,
                    Var x, const ParamSet::Bound* adapters,
                    const std::string& adapter_prefix, double lora_scale) {
    spec.validate();
    require(t.value(x).cols() == spec.d, "backbone_encode: input dim mismatch");
    Var h = x;
    for (int l = 0; l < spec.layers; ++l) {
        const std::string pfx = "l" + std::to_string(l);
        LoraRef ref;
        if (adapters != nullptr)
            ref = LoraRef{adapters, lora_layer_prefix(adapter_prefix, l), lora_scale};
        Var attn = multi_head_attention(t, frozen, pfx + ".attn", h, h, h, spec.heads, ref);
        h = t.add(h, attn);
        Var mlp = linear(t, frozen, pfx + ".mlp2", t.tanh(linear(t, frozen, pfx + ".mlp1", h)));
        h = t.add(h, mlp);
    }
    return h;
}

BackbonePretrainResult pretrain_backbone(const std::vector<std::vector<double>>& corpus,
                                         const BackbonePretrainConfig& cfg) {
    cfg.spec.validate();
    require(cfg.steps >= 1, "pretrain_backbone: steps must be positive");
    require(cfg.lr > 0.0, "pretrain_backbone: learning rate must be positive");
    require(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0,
            "pretrain_backbone: holdout fraction must lie in (0, 1)");
    require(corpus.size() >= 2, "pretrain_backbone: need at least two corpus windows");

    // Per-window z-scored patch matrices {n_p, P}.
    std::vector<Tensor> patches;
    for (const std::vector<double>& w : corpus) {
        const int len = static_cast<int>(w.size());
        require(len > 0 && len % cfg.spec.patch == 0,
                "pretrain_backbone: window length must be a positive multiple of the patch length");
        const int np = len / cfg.spec.patch;
        require(np >= 2, "pretrain_backbone: windows need at least two patches");
        Tensor row = Tensor::matrix(1, len, w);
        check_finite(row, "pretrain_backbone");
        const RowStats st = row_stats(row);
        Tensor norm = normalize_rows(row, st);
        Tensor pm = Tensor::zeros({np, cfg.spec.patch});
        for (int i = 0; i < len; ++i) pm.data[static_cast<size_t>(i)] = norm.data[static_cast<size_t>(i)];
        patches.push_back(std::move(pm));
    }

    const int n = static_cast<int>(patches.size());
    const int n_hold = std::max(1, static_cast<int>(std::lround(cfg.holdout_fraction * n)));
    require(n_hold < n, "pretrain_backbone: holdout fraction leaves no training windows");

    BackbonePretrainResult res;
    res.backbone = make_backbone(cfg.spec, cfg.seed);

    // Next-patch objective: encode each strict prefix of the token sequence
    // and predict the following patch from the last encoded token.
    auto corpus_loss = [&](Tape& t, const ParamSet::Bound& P, int lo, int hi) {
        std::vector<Var> losses;
        for (int wi = lo; wi < hi; ++wi) {
            const Tensor& pm = patches[static_cast<size_t>(wi)];
            Var toks = linear(t, P, "in.embed", t.constant(pm)); // {np, d}
            const int np = pm.rows();
            for (int j = 1; j < np; ++j) {
                Var enc = backbone_encode(t, P, cfg.spec, t.slice_rows(toks, 0, j));
                Var pred = linear(t, P, "next.head", t.slice_rows(enc, j - 1, j));
                Tensor target = Tensor::zeros({1, cfg.spec.patch});
                for (int c = 0; c < cfg.spec.patch; ++c) target.at(0, c) = pm.at(j, c);
                Var diff = t.sub(pred, t.constant(target));
                losses.push_back(t.mean_all(t.mul(diff, diff)));
            }
        }
        return t.mean_all(t.concat_rows(losses));
    };

    auto eval_holdout = [&]() {
        Tape t;
        ParamSet::Bound P = res.backbone.params.bind(t, false);
        const double v = t.value(corpus_loss(t, P, n - n_hold, n)).item();
        ensure(std::isfinite(v), "pretrain_backbone: holdout loss diverged");
        return v;
    };

    res.holdout_initial = eval_holdout();
    const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    for (int step = 0; step < cfg.steps; ++step) {
        Tape t;
        ParamSet::Bound P = res.backbone.params.bind(t, true);
        Var loss = corpus_loss(t, P, 0, n - n_hold);
        const double lv = t.value(loss).item();
        ensure(std::isfinite(lv),
               "pretrain_backbone: loss diverged at step " + std::to_string(step));
        t.backward(loss);
        res.backbone.params.adam_step_all(t, P, adam);
        res.loss_curve.push_back(lv);
    }
    res.holdout_final = eval_holdout();
    return res;
}

void save_backbone(const Backbone& b, const std::string& dir) {
    fs::create_directories(dir);
    const std::vector<unsigned char> bytes = b.params.serialize_f32();
    write_binary_file((fs::path(dir) / "backbone.f32").string(), bytes);
    nlohmann::json j;
    j["version"] = "1";
    j["spec"] = backbone_spec_json(b.spec);
    j["seed"] = b.seed;
    j["weights_hash"] = fnv1a64_hex(bytes.data(), bytes.size());
    write_text_file((fs::path(dir) / "backbone.json").string(), j.dump(2) + "\n");
}

Backbone load_backbone(const std::string& dir) {
    const fs::path root(dir);
    ensure(fs::exists(root / "backbone.json"),
           "load_backbone: missing checkpoint " + (root / "backbone.json").string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file((root / "backbone.json").string()));
    } catch (const nlohmann::json::exception& e) {
        throw runtime_failure("load_backbone: malformed backbone.json: " + std::string(e.what()));
    }
    Backbone b;
    try {
        b = make_backbone(backbone_spec_from_json(j.at("spec")), j.at("seed").get<std::uint64_t>());
        const std::string expect_hash = j.at("weights_hash").get<std::string>();
        const std::vector<unsigned char> bytes =
            read_binary_file((root / "backbone.f32").string());
        ensure(fnv1a64_hex(bytes.data(), bytes.size()) == expect_hash,
               "load_backbone: weight file hash mismatch in " + dir);
        b.params.deserialize_f32(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw runtime_failure("load_backbone: backbone.json missing fields: " +
                              std::string(e.what()));
    }
    return b;
}

// ---- forecaster --------------------------------------------------------------

void ForecasterConfig::validate() const {
    patch.validate();
    require(heads >= 1 && patch.d % heads == 0,
            "ForecasterConfig: heads must divide the feature dim");
    require(pool_m >= 1, "ForecasterConfig: pool size must be positive");
    require(pool_kp >= 1 && pool_kp <= pool_m,
            "ForecasterConfig: retrieval width must lie in [1, M]");
    require(lora_rank >= 1 && lora_rank <= patch.d, "ForecasterConfig: LoRA rank out of range");
    require(lora_scale >= 1.0, "ForecasterConfig: LoRA scale must be >= 1");
    require(text_dim >= 1 && h_dim >= 1, "ForecasterConfig: embedding dims must be positive");
}

Forecaster make_forecaster(const ForecasterConfig& cfg, Backbone backbone) {
    cfg.validate();
    require(backbone.spec.d == cfg.patch.d,
            "make_forecaster: backbone dim must match the feature dim");
    Forecaster f;
    f.cfg = cfg;
    f.backbone = std::move(backbone);
    Rng rng(cfg.seed);
    const int d = cfg.patch.d;
    for (const char* ch : {"call", "rain", "holiday", "event"})
        add_patch_encoder(f.params, std::string("px.") + ch, cfg.patch, rng);
    add_linear(f.params, "hproj", cfg.h_dim, d, rng);
    f.params.add_uniform("pool.keys", cfg.pool_m, d, d, rng);
    f.params.add_uniform("pool.values", cfg.pool_m, d, d, rng);
    add_linear(f.params, "uproj", 5 * d, d, rng);
    add_linear(f.params, "text.proj", cfg.text_dim, d, rng);
    f.params.add_uniform("xmodal.Wq", d, d, d, rng);
    f.params.add_uniform("xmodal.Wk", d, d, d, rng);
    f.params.add_uniform("xmodal.Wv", d, d, d, rng);
    // Adapters are registered regardless of the toggle so that checkpoints
    // keep one layout; a fresh adapter is a no-op (up = 0) anyway.
    for (int l = 0; l < f.backbone.spec.layers; ++l)
        for (const char* w : {"q", "k", "v"})
            add_lora(f.params, lora_layer_prefix("lora", l) + "." + w, d, d, cfg.lora_rank, rng);
    add_linear(f.params, "head", d, cfg.patch.horizon, rng);
    return f;
}

Var forecast_forward(Tape& t, const Forecaster& f, const ParamSet::Bound& trainable,
                     const ParamSet::Bound& frozen, const ForecastInput& in) {
    const ForecasterConfig& cfg = f.cfg;
    cfg.validate();
    const int L = cfg.patch.lookback;
    const int nc = in.window.rows();
    require(nc >= 1 && in.window.cols() == L, "forecast_forward: window must be {N_c, L}");
    require(in.rain.rows() == nc && in.rain.cols() == L,
            "forecast_forward: rainfall channel must be {N_c, L}");
    require(in.event.rows() == nc && in.event.cols() == L,
            "forecast_forward: event channel must be {N_c, L}");
    require(in.holiday.rows() == 1 && in.holiday.cols() == L,
            "forecast_forward: holiday channel must be {1, L}");
    require(in.h.rows() == nc && in.h.cols() == cfg.h_dim,
            "forecast_forward: embeddings must be {N_c, h_dim}");
    check_finite(in.window, "forecast_forward");
    check_finite(in.rain, "forecast_forward");
    check_finite(in.event, "forecast_forward");
    check_finite(in.holiday, "forecast_forward");
    check_finite(in.h, "forecast_forward");

    const Tensor rain_raw = cfg.use_events ? in.rain : Tensor::zeros({nc, L});
    const Tensor event_raw = cfg.use_events ? in.event : Tensor::zeros({nc, L});
    const Tensor holiday_raw = cfg.use_events ? in.holiday : Tensor::zeros({1, L});

    const RowStats stats = row_stats(in.window);
    Var wn = t.constant(normalize_rows(in.window, stats));
    Var rn = t.constant(normalize_rows(rain_raw, row_stats(rain_raw)));
    Var en = t.constant(normalize_rows(event_raw, row_stats(event_raw)));
    Var hn = t.constant(normalize_rows(holiday_raw, row_stats(holiday_raw)));

    Var hol_hat = patch_encode(t, trainable, "px.holiday", cfg.patch, cfg.heads, hn);

    const HashedBowEmbedder embedder(cfg.text_dim);
    Var text = linear(t, trainable, "text.proj",
                      t.constant(text_feature_rows(in.window, stats, in.indicator, embedder)));

    Var h_all = t.constant(in.h);
    std::vector<Var> u_rows;
    u_rows.reserve(static_cast<size_t>(nc));
    for (int i = 0; i < nc; ++i) {
        Var x_call = patch_encode(t, trainable, "px.call", cfg.patch, cfg.heads,
                                  t.slice_rows(wn, i, i + 1));
        Var x_rain = patch_encode(t, trainable, "px.rain", cfg.patch, cfg.heads,
                                  t.slice_rows(rn, i, i + 1));
        Var x_evt = patch_encode(t, trainable, "px.event", cfg.patch, cfg.heads,
                                 t.slice_rows(en, i, i + 1));
        Var prompt;
        if (cfg.use_prompt) {
            Var query = linear(t, trainable, "hproj", t.slice_rows(h_all, i, i + 1));
            prompt = prompt_retrieve(t, pvar(trainable, "pool.keys"),
                                     pvar(trainable, "pool.values"), query, cfg.pool_kp)
                         .features;
        } else {
            prompt = t.constant(Tensor::zeros({1, cfg.patch.d}));
        }
        u_rows.push_back(linear(t, trainable, "uproj",
                                t.concat_cols({prompt, x_call, x_rain, hol_hat, x_evt})));
    }
    Var u = nc == 1 ? u_rows[0] : t.concat_rows(u_rows); // {N_c, d}

    Var fused = cross_modal_fuse(t, trainable, "xmodal", text, u);
    Var enc = backbone_encode(t, frozen, f.backbone.spec, fused,
                              cfg.use_lora ? &trainable : nullptr, "lora", cfg.lora_scale);
    Var y_norm = linear(t, trainable, "head", enc); // {N_c, T}

    Tensor sd_col = Tensor::zeros({nc, 1});
    Tensor mean_col = Tensor::zeros({nc, 1});
    for (int i = 0; i < nc; ++i) {
        sd_col.at(i, 0) = stats.sd[static_cast<size_t>(i)];
        mean_col.at(i, 0) = stats.mean[static_cast<size_t>(i)];
    }
    Var pred = t.add(t.mul(y_norm, t.constant(sd_col)), t.constant(mean_col));
    return t.transpose(pred); // {T, N_c}
}

Tensor forecast_predict(const Forecaster& f, const ForecastInput& in) {
    Tape t;
    ParamSet::Bound trainable = f.params.bind(t, false);
    ParamSet::Bound frozen = f.backbone.params.bind(t, false);
    return t.value(forecast_forward(t, f, trainable, frozen, in));
}

// ---- training ----------------------------------------------------------------

namespace {

void check_dataset(const ForecastDataset& data, const ForecasterConfig& cfg) {
    require(!data.region_ids.empty(), "train_forecaster: dataset has no regions");
    require(!data.train.empty(), "train_forecaster: no training windows");
    require(!data.val.empty(), "train_forecaster: no validation windows");
    const int nc = static_cast<int>(data.region_ids.size());
    auto check_sample = [&](const ForecastSample& s) {
        require(s.input.window.rows() == nc, "train_forecaster: sample region count mismatch");
        require(s.target.rows() == nc && s.target.cols() == cfg.patch.horizon,
                "train_forecaster: target must be {N_c, T}");
        check_finite(s.target, "train_forecaster");
    };
    for (const ForecastSample& s : data.train) check_sample(s);
    for (const ForecastSample& s : data.val) check_sample(s);
}

} // namespace

ForecastTrainResult train_forecaster(const ForecastDataset& data,
                                     const ForecastTrainConfig& cfg) {
    require(!cfg.backbone_dir.empty(), "train_forecaster: backbone checkpoint dir required");
    require(cfg.max_steps >= 1 && cfg.batch >= 1 && cfg.eval_every >= 1 && cfg.patience >= 1,
            "train_forecaster: loop parameters must be positive");
    require(cfg.lr > 0.0, "train_forecaster: learning rate must be positive");
    Backbone backbone = load_backbone(cfg.backbone_dir); // aborts when missing
    cfg.model.validate();
    check_dataset(data, cfg.model);

    ForecastTrainResult res;
    res.model = make_forecaster(cfg.model, std::move(backbone));
    Forecaster& model = res.model;

    auto eval_val = [&]() {
        double num = 0.0, den = 0.0;
        for (const ForecastSample& s : data.val) {
            ForecastInput input = s.input;
            input.indicator = data.indicator;
            const Tensor pred = forecast_predict(model, input);
            for (int ti = 0; ti < pred.rows(); ++ti)
                for (int ci = 0; ci < pred.cols(); ++ci) {
                    num += std::abs(s.target.at(ci, ti) - pred.at(ti, ci));
                    den += std::abs(s.target.at(ci, ti));
                }
        }
        ensure(den > 0.0, "train_forecaster: validation actuals are all zero");
        return num / den;
    };

    Rng order_rng(cfg.model.seed ^ 0x5eedb10c0ffee123ull);
    std::vector<int> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    size_t cursor = 0;
    auto next_index = [&]() {
        if (cursor == order.size()) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    double best = std::numeric_limits<double>::infinity();
    std::vector<unsigned char> best_bytes = model.params.serialize_f32();
    int rounds_since_best = 0;
    double running = 0.0;
    int running_n = 0;

    for (int step = 0; step < cfg.max_steps; ++step) {
        Tape t;
        ParamSet::Bound trainP = model.params.bind(t, true);
        ParamSet::Bound frozenP = model.backbone.params.bind(t, false);
        std::vector<Var> losses;
        for (int b = 0; b < cfg.batch; ++b) {
            const ForecastSample& s = data.train[static_cast<size_t>(next_index())];
            ForecastInput input = s.input;
            input.indicator = data.indicator;
            Var pred = forecast_forward(t, model, trainP, frozenP, input);
            Var diff = t.sub(pred, t.transpose(t.constant(s.target)));
            losses.push_back(t.mean_all(t.abs(diff)));
        }
        Var loss = t.mean_all(t.concat_rows(losses));
        const double lv = t.value(loss).item();
        ensure(std::isfinite(lv),
               "train_forecaster: loss diverged at step " + std::to_string(step));
        t.backward(loss);
        model.params.adam_step_all(t, trainP, adam);
        running += lv;
        running_n += 1;

        if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.max_steps) {
            res.train_curve.push_back(running / running_n);
            running = 0.0;
            running_n = 0;
            const double v = eval_val();
            res.val_curve.push_back(v);
            if (v < best - 1e-12) {
                best = v;
                best_bytes = model.params.serialize_f32();
                res.best_round = static_cast<int>(res.val_curve.size()) - 1;
                rounds_since_best = 0;
            } else {
                rounds_since_best += 1;
                if (rounds_since_best >= cfg.patience) break;
            }
        }
    }
    model.params.deserialize_f32(best_bytes);
    model.params.reset_optimizer();
    return res;
}

// ---- persistence ---------------------------------------------------------------

void save_forecaster(const Forecaster& f, const std::string& dir) {
    fs::create_directories(dir);
    const std::vector<unsigned char> tb = f.params.serialize_f32();
    const std::vector<unsigned char> bb = f.backbone.params.serialize_f32();
    write_binary_file((fs::path(dir) / "trainable.f32").string(), tb);
    write_binary_file((fs::path(dir) / "backbone.f32").string(), bb);
    nlohmann::json j;
    j["version"] = "1";
    j["config"] = {{"lookback", f.cfg.patch.lookback},
                   {"horizon", f.cfg.patch.horizon},
                   {"patch", f.cfg.patch.patch},
                   {"d", f.cfg.patch.d},
                   {"heads", f.cfg.heads},
                   {"pool_m", f.cfg.pool_m},
                   {"pool_kp", f.cfg.pool_kp},
                   {"lora_rank", f.cfg.lora_rank},
                   {"lora_scale", f.cfg.lora_scale},
                   {"text_dim", f.cfg.text_dim},
                   {"h_dim", f.cfg.h_dim},
                   {"use_prompt", f.cfg.use_prompt},
                   {"use_lora", f.cfg.use_lora},
                   {"use_events", f.cfg.use_events},
                   {"seed", f.cfg.seed}};
    j["backbone"] = backbone_spec_json(f.backbone.spec);
    j["backbone_seed"] = f.backbone.seed;
    j["trainable_hash"] = fnv1a64_hex(tb.data(), tb.size());
    j["backbone_hash"] = fnv1a64_hex(bb.data(), bb.size());
    write_text_file((fs::path(dir) / "forecaster.json").string(), j.dump(2) + "\n");
}

Forecaster load_forecaster(const std::string& dir) {
    const fs::path root(dir);
    ensure(fs::exists(root / "forecaster.json"),
           "load_forecaster: missing checkpoint " + (root / "forecaster.json").string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file((root / "forecaster.json").string()));
    } catch (const nlohmann::json::exception& e) {
        throw runtime_failure("load_forecaster: malformed forecaster.json: " +
                              std::string(e.what()));
    }
    try {
        const nlohmann::json& c = j.at("config");
        ForecasterConfig cfg;
        cfg.patch.lookback = c.at("lookback").get<int>();
        cfg.patch.horizon = c.at("horizon").get<int>();
        cfg.patch.patch = c.at("patch").get<int>();
        cfg.patch.d = c.at("d").get<int>();
        cfg.heads = c.at("heads").get<int>();
        cfg.pool_m = c.at("pool_m").get<int>();
        cfg.pool_kp = c.at("pool_kp").get<int>();
        cfg.lora_rank = c.at("lora_rank").get<int>();
        cfg.lora_scale = c.at("lora_scale").get<double>();
        cfg.text_dim = c.at("text_dim").get<int>();
        cfg.h_dim = c.at("h_dim").get<int>();
        cfg.use_prompt = c.at("use_prompt").get<bool>();
        cfg.use_lora = c.at("use_lora").get<bool>();
        cfg.use_events = c.at("use_events").get<bool>();
        cfg.seed = c.at("seed").get<std::uint64_t>();

        Backbone bb = make_backbone(backbone_spec_from_json(j.at("backbone")),
                                    j.at("backbone_seed").get<std::uint64_t>());
        const std::vector<unsigned char> bbytes =
            read_binary_file((root / "backbone.f32").string());
        ensure(fnv1a64_hex(bbytes.data(), bbytes.size()) ==
                   j.at("backbone_hash").get<std::string>(),
               "load_forecaster: backbone weight hash mismatch in " + dir);
        bb.params.deserialize_f32(bbytes);

        Forecaster f = make_forecaster(cfg, std::move(bb));
        const std::vector<unsigned char> tbytes =
            read_binary_file((root / "trainable.f32").string());
        ensure(fnv1a64_hex(tbytes.data(), tbytes.size()) ==
                   j.at("trainable_hash").get<std::string>(),
               "load_forecaster: trainable weight hash mismatch in " + dir);
        f.params.deserialize_f32(tbytes);
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw runtime_failure("load_forecaster: forecaster.json missing fields: " +
                              std::string(e.what()));
    }
}

void write_predictions_csv(const std::string& path,
                           const std::vector<std::int64_t>& timestamps,
                           const std::vector<std::string>& region_ids,
                           const std::string& indicator, const Tensor& pred) {
    require(pred.ndim() == 2, "write_predictions_csv: predictions must be 2-dimensional");
    require(static_cast<int>(timestamps.size()) == pred.rows(),
            "write_predictions_csv: one timestamp per horizon row required");
    require(static_cast<int>(region_ids.size()) == pred.cols(),
            "write_predictions_csv: one region per column required");
    std::ostringstream out;
    out << "timestamp,region_id,indicator,prediction\n";
    char buf[40];
    for (int ti = 0; ti < pred.rows(); ++ti)
        for (int ci = 0; ci < pred.cols(); ++ci) {
            std::snprintf(buf, sizeof(buf), "%.9g", pred.at(ti, ci));
            out << format_iso_minutes(timestamps[static_cast<size_t>(ti)]) << ","
                << region_ids[static_cast<size_t>(ci)] << "," << indicator << "," << buf
                << "\n";
        }
    write_text_file(path, out.str());
}

} // namespace ridecast
