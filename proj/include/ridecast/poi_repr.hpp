#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ridecast/city.hpp"
#include "ridecast/nn.hpp"
#include "ridecast/tape.hpp"

namespace ridecast {

// ---- spatial neighborhoods --------------------------------------------------

// Indices of the k nearest POIs to pois[i] by Euclidean distance, nearest
// first. Excludes i itself; distance ties break toward the lower index.
// Rejects k >= |pois|.
std::vector<int> knn_neighbors(const std::vector<Poi>& pois, int i, int k);

// knn_neighbors for every POI at once.
std::vector<std::vector<int>> all_knn_neighbor_sets(const std::vector<Poi>& pois, int k);

// Median distance over all (POI, k-nearest-neighbor) pairs; the default length
// scale for graph edge weights.
double median_knn_distance(const std::vector<Poi>& pois, int k);

// ---- category encoders --------------------------------------------------------

// Embedding table + two-layer MLP mapping a category one-hot to a d-dim
// vector. Because the input is a one-hot, encoding category l is row l of
// encode_all's output; that same row serves as the class vector e_l in the
// contrastive losses.
struct CategoryEncoder {
    int n_cats = 0;
    int d_emb = 0;
    int d_hidden = 0;
    int d = 0;
    ParamSet params;

    // {n_cats, d}; row l is the encoding of category l.
    Var encode_all(Tape& t, const ParamSet::Bound& P) const;
};

// d_emb/d_hidden default to d when 0.
CategoryEncoder make_category_encoder(int n_cats, int d, Rng& rng, int d_emb = 0, int d_hidden = 0);

// Full-softmax skip-gram loss over (center, context) category index pairs:
// sum_b [ logsumexp_l(e_l . z_cb) - e_ctx . z_cb ] where z and e are rows of E.
Var category_skipgram_loss(Tape& t, Var E, const std::vector<int>& center_cats,
                           const std::vector<int>& context_cats);

// Contrastive loss pulling each center POI's encoding toward its spatial
// neighbors' encodings, normalized over all primary categories. centers[b] is
// a POI index, neighbor_sets[b] its (nonempty) neighbor POI indices.
Var spatial_proximity_loss(Tape& t, const CategoryEncoder& fs, const ParamSet::Bound& P,
                           const std::vector<Poi>& pois, const std::vector<int>& centers,
                           const std::vector<std::vector<int>>& neighbor_sets);

// ---- POI graph and random walks ----------------------------------------------

struct PoiGraph {
    int n = 0;
    // adj[i] = (neighbor index, edge weight), ascending by neighbor index.
    std::vector<std::vector<std::pair<int, double>>> adj;
};

// Undirected graph connecting every POI to its k nearest neighbors with edge
// weight exp(-dist / sigma). k = 0 yields an edgeless graph.
PoiGraph build_poi_graph(const std::vector<Poi>& pois, int k, double sigma);

struct WalkSet {
    std::vector<std::vector<int>> walks; // node indices; walks[w][0] is the target
    std::vector<char> truncated;         // 1 when the walk hit an isolated node early
};

// walks_per_node random walks from every node, transitions proportional to
// edge weight. A walk that reaches a node with no edges stops and is flagged.
WalkSet sample_random_walks(const PoiGraph& g, int walk_len, int walks_per_node,
                            std::uint64_t seed);

// Skip-gram loss over walk (target, context) secondary-category pairs plus
// lambda * sum of squared distances between each walk target's encoding and
// every category row in the same primary group. Walks shorter than 2 nodes
// carry no co-occurrence evidence and are skipped.
Var hierarchical_loss(Tape& t, const CategoryEncoder& fh, const ParamSet::Bound& P,
                      const CategoryVocab& vocab, const std::vector<Poi>& pois,
                      const WalkSet& walks, double lambda);

// ---- textual semantics ---------------------------------------------------------

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual int dim() const = 0;
    // {1, dim()} with L2 norm 1; equal text must give equal vectors.
    virtual Tensor embed(const std::string& text) const = 0;
};

// Default embedder: lowercase alphanumeric tokens, each hashed into a signed
// bucket of a dim-wide accumulator, then L2-normalized. Deterministic and
// dependency-free; richer language models can plug in behind TextEmbedder.
class HashedBowEmbedder : public TextEmbedder {
public:
    explicit HashedBowEmbedder(int dim = 32);
    int dim() const override { return dim_; }
    Tensor embed(const std::string& text) const override;

private:
    int dim_;
};

// Five-perspective description (Core Function, Hierarchy, Target Demographics,
// Temporal Pattern, Spatial Context) of one secondary category. Deterministic;
// unknown ids rejected.
std::string describe_category(const CategoryVocab& vocab, int secondary_id);

// One embedded description per secondary category; {n_secondary, embedder dim},
// every row unit norm.
Tensor category_text_features(const CategoryVocab& vocab, const TextEmbedder& embedder);

// Renders every description to `dir/<secondary_name>.txt` (UTF-8).
void write_category_descriptions(const CategoryVocab& vocab, const std::string& dir);

// ---- grid-level semantic view ---------------------------------------------------

// The complete semantic-attribute view: two category encoders, fixed text
// features, per-view projections and the attentional pooling head that fuses
// the three perspectives into one d-dim vector per grid.
struct SemanticModel {
    int d = 0;
    int d_text = 0;
    CategoryEncoder fs; // primary categories
    CategoryEncoder fh; // secondary categories
    Tensor text_features; // {n_secondary, d_text}
    ParamSet pool;        // view1.W, view2.W, view3.W, attn.*, empty
};

SemanticModel make_semantic_model(const CategoryVocab& vocab, const TextEmbedder& embedder,
                                  int d, std::uint64_t seed);

struct SemanticBound {
    ParamSet::Bound fs, fh, pool;
};

SemanticBound bind_semantic(Tape& t, const SemanticModel& m, bool trainable = true);

// Z_P: one row per grid. Per grid each view's POI features are mean-pooled,
// projected to d, stacked as three view slots and attentionally pooled; grids
// with no POIs get the learned default row.
Var grid_semantic_repr(Tape& t, const SemanticModel& m, const SemanticBound& B, const City& city);

// {N_r, 3} attention weights over the view slots (uniform rows for empty grids).
Var semantic_view_weights(Tape& t, const SemanticModel& m, const SemanticBound& B,
                          const City& city);

} // namespace ridecast
