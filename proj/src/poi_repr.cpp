#include "ridecast/poi_repr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <unordered_map>

#include "ridecast/csvio.hpp"

namespace ridecast {

namespace {

double poi_dist(const Poi& a, const Poi& b) {
    const double dx = a.x_m - b.x_m, dy = a.y_m - b.y_m;
    return std::sqrt(dx * dx + dy * dy);
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

// ---- spatial neighborhoods --------------------------------------------------

std::vector<int> knn_neighbors(const std::vector<Poi>& pois, int i, int k) {
    const int n = static_cast<int>(pois.size());
    require(i >= 0 && i < n, "knn_neighbors: POI index out of range");
    require(k >= 1, "knn_neighbors: k must be positive");
    require(k < n, "knn_neighbors: k must be smaller than the number of POIs");
    std::vector<std::pair<double, int>> by_dist;
    by_dist.reserve(static_cast<size_t>(n) - 1);
    for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        by_dist.emplace_back(poi_dist(pois[static_cast<size_t>(i)], pois[static_cast<size_t>(j)]), j);
    }
    std::sort(by_dist.begin(), by_dist.end());
    std::vector<int> out(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) out[static_cast<size_t>(j)] = by_dist[static_cast<size_t>(j)].second;
    return out;
}

std::vector<std::vector<int>> all_knn_neighbor_sets(const std::vector<Poi>& pois, int k) {
    std::vector<std::vector<int>> sets(pois.size());
    for (int i = 0; i < static_cast<int>(pois.size()); ++i)
        sets[static_cast<size_t>(i)] = knn_neighbors(pois, i, k);
    return sets;
}

double median_knn_distance(const std::vector<Poi>& pois, int k) {
    std::vector<double> dists;
    dists.reserve(pois.size() * static_cast<size_t>(k));
    for (int i = 0; i < static_cast<int>(pois.size()); ++i)
        for (int j : knn_neighbors(pois, i, k))
            dists.push_back(poi_dist(pois[static_cast<size_t>(i)], pois[static_cast<size_t>(j)]));
    std::sort(dists.begin(), dists.end());
    const size_t n = dists.size();
    return (n % 2 == 1) ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
}

// ---- category encoders --------------------------------------------------------

Var CategoryEncoder::encode_all(Tape& t, const ParamSet::Bound& P) const {
    Var h = t.tanh(linear(t, P, "mlp1", pvar(P, "emb")));
    return linear(t, P, "mlp2", h);
}

CategoryEncoder make_category_encoder(int n_cats, int d, Rng& rng, int d_emb, int d_hidden) {
    require(n_cats >= 1 && d >= 1, "make_category_encoder: needs at least one category and d >= 1");
    CategoryEncoder enc;
    enc.n_cats = n_cats;
    enc.d = d;
    enc.d_emb = d_emb > 0 ? d_emb : d;
    enc.d_hidden = d_hidden > 0 ? d_hidden : d;
    enc.params.add_uniform("emb", n_cats, enc.d_emb, enc.d_emb, rng);
    add_linear(enc.params, "mlp1", enc.d_emb, enc.d_hidden, rng);
    add_linear(enc.params, "mlp2", enc.d_hidden, d, rng);
    return enc;
}

Var category_skipgram_loss(Tape& t, Var E, const std::vector<int>& center_cats,
                           const std::vector<int>& context_cats) {
    require(!center_cats.empty(), "category_skipgram_loss: empty pair batch");
    require(center_cats.size() == context_cats.size(),
            "category_skipgram_loss: center/context size mismatch");
    const int n_cats = t.value(E).rows();
    const int b = static_cast<int>(center_cats.size());
    for (int i = 0; i < b; ++i) {
        require(center_cats[static_cast<size_t>(i)] >= 0 && center_cats[static_cast<size_t>(i)] < n_cats,
                "category_skipgram_loss: center category out of range");
        require(context_cats[static_cast<size_t>(i)] >= 0 && context_cats[static_cast<size_t>(i)] < n_cats,
                "category_skipgram_loss: context category out of range");
    }
    Var z = t.gather_rows(E, center_cats);            // {b, d}
    Var logits = t.matmul(z, t.transpose(E));          // {b, n_cats}
    Var lse = t.logsumexp_rows(logits);                // {b, 1}
    Tensor onehot = Tensor::zeros({b, n_cats});
    for (int i = 0; i < b; ++i) onehot.at(i, context_cats[static_cast<size_t>(i)]) = 1.0;
    Var picked = t.row_sums(t.mul(logits, t.constant(std::move(onehot))));
    return t.sum_all(t.sub(lse, picked));
}

Var spatial_proximity_loss(Tape& t, const CategoryEncoder& fs, const ParamSet::Bound& P,
                           const std::vector<Poi>& pois, const std::vector<int>& centers,
                           const std::vector<std::vector<int>>& neighbor_sets) {
    require(centers.size() == neighbor_sets.size(),
            "spatial_proximity_loss: one neighbor set per center required");
    require(!centers.empty(), "spatial_proximity_loss: empty batch");
    const int n = static_cast<int>(pois.size());
    std::vector<int> center_cats, context_cats;
    for (size_t b = 0; b < centers.size(); ++b) {
        const int i = centers[b];
        require(i >= 0 && i < n, "spatial_proximity_loss: center POI index out of range");
        require(!neighbor_sets[b].empty(), "spatial_proximity_loss: empty neighbor set");
        for (int j : neighbor_sets[b]) {
            require(j >= 0 && j < n, "spatial_proximity_loss: neighbor POI index out of range");
            center_cats.push_back(pois[static_cast<size_t>(i)].primary_cat);
            context_cats.push_back(pois[static_cast<size_t>(j)].primary_cat);
        }
    }
    return category_skipgram_loss(t, fs.encode_all(t, P), center_cats, context_cats);
}

// ---- POI graph and random walks ----------------------------------------------

PoiGraph build_poi_graph(const std::vector<Poi>& pois, int k, double sigma) {
    const int n = static_cast<int>(pois.size());
    require(n >= 1, "build_poi_graph: no POIs");
    require(k >= 0 && k < n, "build_poi_graph: k must be in [0, |pois|)");
    require(sigma > 0.0 && std::isfinite(sigma), "build_poi_graph: sigma must be positive");
    std::vector<std::map<int, double>> adj(static_cast<size_t>(n));
    for (int i = 0; i < n && k > 0; ++i) {
        for (int j : knn_neighbors(pois, i, k)) {
            const double w =
                std::exp(-poi_dist(pois[static_cast<size_t>(i)], pois[static_cast<size_t>(j)]) / sigma);
            adj[static_cast<size_t>(i)].emplace(j, w);
            adj[static_cast<size_t>(j)].emplace(i, w);
        }
    }
    PoiGraph g;
    g.n = n;
    g.adj.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        g.adj[static_cast<size_t>(i)].assign(adj[static_cast<size_t>(i)].begin(),
                                             adj[static_cast<size_t>(i)].end());
    return g;
}

WalkSet sample_random_walks(const PoiGraph& g, int walk_len, int walks_per_node,
                            std::uint64_t seed) {
    require(g.n >= 1, "sample_random_walks: empty graph");
    require(walk_len >= 2, "sample_random_walks: walk length must be at least 2");
    require(walks_per_node >= 1, "sample_random_walks: walks_per_node must be positive");
    Rng rng(seed);
    WalkSet ws;
    ws.walks.reserve(static_cast<size_t>(g.n) * static_cast<size_t>(walks_per_node));
    for (int start = 0; start < g.n; ++start) {
        for (int w = 0; w < walks_per_node; ++w) {
            std::vector<int> walk{start};
            int cur = start;
            while (static_cast<int>(walk.size()) < walk_len) {
                const auto& edges = g.adj[static_cast<size_t>(cur)];
                if (edges.empty()) break;
                double total = 0.0;
                for (const auto& e : edges) total += e.second;
                const double draw = rng.uniform() * total;
                double cum = 0.0;
                int next = edges.back().first;
                for (const auto& e : edges) {
                    cum += e.second;
                    if (draw < cum) {
                        next = e.first;
                        break;
                    }
                }
                walk.push_back(next);
                cur = next;
            }
            ws.truncated.push_back(static_cast<int>(walk.size()) < walk_len ? 1 : 0);
            ws.walks.push_back(std::move(walk));
        }
    }
    return ws;
}

Var hierarchical_loss(Tape& t, const CategoryEncoder& fh, const ParamSet::Bound& P,
                      const CategoryVocab& vocab, const std::vector<Poi>& pois,
                      const WalkSet& walks, double lambda) {
    require(lambda >= 0.0, "hierarchical_loss: lambda must be nonnegative");
    require(fh.n_cats == vocab.n_secondary(),
            "hierarchical_loss: encoder size does not match secondary vocabulary");
    const int n = static_cast<int>(pois.size());
    std::vector<int> center_cats, context_cats;
    std::vector<int> reg_target, reg_cat;
    for (const auto& walk : walks.walks) {
        if (walk.size() < 2) continue;
        for (int node : walk)
            require(node >= 0 && node < n, "hierarchical_loss: walk node out of range");
        const int ci = pois[static_cast<size_t>(walk[0])].secondary_cat;
        for (size_t j = 1; j < walk.size(); ++j) {
            center_cats.push_back(ci);
            context_cats.push_back(pois[static_cast<size_t>(walk[j])].secondary_cat);
        }
        const int group = vocab.secondary_to_primary[static_cast<size_t>(ci)];
        for (int l = 0; l < vocab.n_secondary(); ++l) {
            if (vocab.secondary_to_primary[static_cast<size_t>(l)] != group) continue;
            reg_target.push_back(ci);
            reg_cat.push_back(l);
        }
    }
    require(!center_cats.empty(), "hierarchical_loss: no walk of length >= 2 in batch");
    Var E = fh.encode_all(t, P);
    Var loss = category_skipgram_loss(t, E, center_cats, context_cats);
    if (lambda == 0.0) return loss;
    Var diff = t.sub(t.gather_rows(E, reg_target), t.gather_rows(E, reg_cat));
    return t.add(loss, t.scale(t.sum_all(t.mul(diff, diff)), lambda));
}

// ---- textual semantics ---------------------------------------------------------

HashedBowEmbedder::HashedBowEmbedder(int dim) : dim_(dim) {
    require(dim >= 1, "HashedBowEmbedder: dimension must be positive");
}

Tensor HashedBowEmbedder::embed(const std::string& text) const {
    Tensor acc = Tensor::zeros({1, dim_});
    std::string token;
    bool any = false;
    auto flush = [&]() {
        if (token.empty()) return;
        const std::uint64_t h = fnv1a64(token);
        const int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
        acc[bucket] += ((h >> 32) & 1ull) ? 1.0 : -1.0;
        any = true;
        token.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        else
            flush();
    }
    flush();
    require(any, "HashedBowEmbedder: text has no tokens");
    double norm = l2_norm(acc);
    if (norm == 0.0) {
        // signed buckets cancelled exactly; fall back to a single whole-text bucket
        acc[static_cast<int>(fnv1a64(text) % static_cast<std::uint64_t>(dim_))] = 1.0;
        norm = 1.0;
    }
    for (double& v : acc.data) v /= norm;
    return acc;
}

namespace {

struct PrimaryPhrases {
    std::string function, demographics, temporal, spatial;
};

PrimaryPhrases phrases_for_primary(const std::string& name) {
    static const std::unordered_map<std::string, PrimaryPhrases> curated = {
        {"retail",
         {"a commercial destination for shopping and everyday purchases",
          "shoppers, households and errand runners",
          "from late morning through the evening, strongest on weekends",
          "along commercial corridors and near residential catchments"}},
        {"dining",
         {"a food and beverage venue for meals and social gatherings",
          "diners, office workers and families",
          "around midday and again during dinner hours",
          "clustered near offices, retail streets and nightlife areas"}},
        {"residence",
         {"a living space where people reside and return daily",
          "residents and long-term tenants",
          "in the early morning and evening, with quiet middays",
          "inside residential blocks away from arterial roads"}},
        {"industry",
         {"a production or logistics site for goods and materials",
          "shift workers and freight operators",
          "during weekday working hours with pronounced shift changes",
          "in industrial zones toward the urban periphery"}},
        {"transport",
         {"a mobility hub for boarding, transfer and parking",
          "commuters and travelers",
          "during weekday morning and evening rush hours",
          "at interchanges and along major transit corridors"}},
        {"leisure",
         {"a recreational venue for entertainment and wellbeing",
          "visitors, families and young adults",
          "in the evenings and on weekends and holidays",
          "near parks, plazas and cultural districts"}},
    };
    auto it = curated.find(name);
    if (it != curated.end()) return it->second;
    // deterministic fallback for taxonomies outside the curated set
    static const std::vector<std::string> fns = {
        "a general service location", "a specialized facility",
        "a public-facing establishment", "a mixed-use urban site"};
    static const std::vector<std::string> dems = {
        "local residents and passers-by", "dedicated patrons and staff",
        "a broad cross-section of the city", "occasional and seasonal visitors"};
    static const std::vector<std::string> tmps = {
        "during standard daytime hours", "at varied hours through the week",
        "in concentrated bursts around scheduled activity", "steadily across the day"};
    static const std::vector<std::string> spts = {
        "throughout the urban fabric", "near complementary land uses",
        "where access and visibility are high", "in purpose-built districts"};
    const std::uint64_t h = fnv1a64(name);
    return {fns[h % fns.size()], dems[(h >> 16) % dems.size()], tmps[(h >> 32) % tmps.size()],
            spts[(h >> 48) % spts.size()]};
}

std::string human_name(std::string s) {
    for (char& c : s)
        if (c == '_') c = ' ';
    return s;
}

} // namespace

std::string describe_category(const CategoryVocab& vocab, int secondary_id) {
    require(secondary_id >= 0 && secondary_id < vocab.n_secondary(),
            "describe_category: unknown secondary category id");
    const std::string sec = human_name(vocab.secondary_names[static_cast<size_t>(secondary_id)]);
    const int p = vocab.secondary_to_primary[static_cast<size_t>(secondary_id)];
    const std::string pri = vocab.primary_names[static_cast<size_t>(p)];
    int group_size = 0;
    for (int m : vocab.secondary_to_primary)
        if (m == p) ++group_size;
    const PrimaryPhrases ph = phrases_for_primary(pri);
    std::string out;
    out += "Category: " + sec + ".\n";
    out += "Core Function: A " + sec + " is " + ph.function + ".\n";
    out += "Hierarchy: A secondary category under the " + human_name(pri) +
           " primary group, one of " + std::to_string(group_size) + " place types in that group.\n";
    out += "Target Demographics: Mainly serves " + ph.demographics + ".\n";
    out += "Temporal Pattern: Activity peaks " + ph.temporal + ".\n";
    out += "Spatial Context: Typically found " + ph.spatial + ".\n";
    return out;
}

Tensor category_text_features(const CategoryVocab& vocab, const TextEmbedder& embedder) {
    vocab.validate();
    Tensor out = Tensor::zeros({vocab.n_secondary(), embedder.dim()});
    for (int s = 0; s < vocab.n_secondary(); ++s) {
        const Tensor v = embedder.embed(describe_category(vocab, s));
        require(v.rows() == 1 && v.cols() == embedder.dim(),
                "category_text_features: embedder returned a wrong shape");
        for (int j = 0; j < v.cols(); ++j) out.at(s, j) = v.at(0, j);
    }
    return out;
}

void write_category_descriptions(const CategoryVocab& vocab, const std::string& dir) {
    vocab.validate();
    std::filesystem::create_directories(dir);
    for (int s = 0; s < vocab.n_secondary(); ++s)
        write_text_file(dir + "/" + vocab.secondary_names[static_cast<size_t>(s)] + ".txt",
                        describe_category(vocab, s));
}

// ---- grid-level semantic view ---------------------------------------------------

SemanticModel make_semantic_model(const CategoryVocab& vocab, const TextEmbedder& embedder,
                                  int d, std::uint64_t seed) {
    vocab.validate();
    require(d >= 1, "make_semantic_model: d must be positive");
    SemanticModel m;
    m.d = d;
    m.d_text = embedder.dim();
    Rng rng(seed);
    Rng rs = rng.fork(1), rh = rng.fork(2), rp = rng.fork(3);
    m.fs = make_category_encoder(vocab.n_primary(), d, rs);
    m.fh = make_category_encoder(vocab.n_secondary(), d, rh);
    m.text_features = category_text_features(vocab, embedder);
    m.pool.add_uniform("view1.W", d, d, d, rp);
    m.pool.add_uniform("view2.W", d, d, d, rp);
    m.pool.add_uniform("view3.W", m.d_text, d, m.d_text, rp);
    add_attn_pool(m.pool, "attn", d, d, rp);
    m.pool.add_uniform("empty", 1, d, d, rp);
    return m;
}

SemanticBound bind_semantic(Tape& t, const SemanticModel& m, bool trainable) {
    return SemanticBound{m.fs.params.bind(t, trainable), m.fh.params.bind(t, trainable),
                         m.pool.bind(t, trainable)};
}

namespace {

// Stacks the three projected view vectors for one nonempty grid as {3, d}.
Var grid_view_stack(Tape& t, const SemanticBound& B, const City& city, Var Es, Var Eh, Var Et,
                    int g) {
    const auto& poi_idx = city.pois_by_grid[static_cast<size_t>(g)];
    std::vector<int> prim, sec;
    prim.reserve(poi_idx.size());
    sec.reserve(poi_idx.size());
    for (int p : poi_idx) {
        prim.push_back(city.pois[static_cast<size_t>(p)].primary_cat);
        sec.push_back(city.pois[static_cast<size_t>(p)].secondary_cat);
    }
    Var v1 = t.mean_rows(t.gather_rows(Es, prim));
    Var v2 = t.mean_rows(t.gather_rows(Eh, sec));
    Var v3 = t.mean_rows(t.gather_rows(Et, sec));
    return t.concat_rows({t.matmul(v1, pvar(B.pool, "view1.W")),
                          t.matmul(v2, pvar(B.pool, "view2.W")),
                          t.matmul(v3, pvar(B.pool, "view3.W"))});
}

} // namespace

Var grid_semantic_repr(Tape& t, const SemanticModel& m, const SemanticBound& B, const City& city) {
    require(!city.grids.empty(), "grid_semantic_repr: city has no grids");
    Var Es = m.fs.encode_all(t, B.fs);
    Var Eh = m.fh.encode_all(t, B.fh);
    Var Et = t.constant(m.text_features);
    std::vector<Var> rows;
    rows.reserve(city.grids.size());
    for (int g = 0; g < static_cast<int>(city.grids.size()); ++g) {
        if (city.pois_by_grid[static_cast<size_t>(g)].empty()) {
            rows.push_back(pvar(B.pool, "empty"));
            continue;
        }
        Var stack = grid_view_stack(t, B, city, Es, Eh, Et, g);
        rows.push_back(attn_pool(t, B.pool, "attn", stack));
    }
    return t.concat_rows(rows);
}

Var semantic_view_weights(Tape& t, const SemanticModel& m, const SemanticBound& B,
                          const City& city) {
    require(!city.grids.empty(), "semantic_view_weights: city has no grids");
    Var Es = m.fs.encode_all(t, B.fs);
    Var Eh = m.fh.encode_all(t, B.fh);
    Var Et = t.constant(m.text_features);
    std::vector<Var> rows;
    rows.reserve(city.grids.size());
    for (int g = 0; g < static_cast<int>(city.grids.size()); ++g) {
        if (city.pois_by_grid[static_cast<size_t>(g)].empty()) {
            rows.push_back(t.constant(Tensor::full({1, 3}, 1.0 / 3.0)));
            continue;
        }
        Var stack = grid_view_stack(t, B, city, Es, Eh, Et, g);
        rows.push_back(attn_pool_weights(t, B.pool, "attn", stack));
    }
    return t.concat_rows(rows);
}

} // namespace ridecast
