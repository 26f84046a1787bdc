#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ridecast/common.hpp"
#include "ridecast/tensor.hpp"

namespace ridecast {

// Versioned on-disk library of region embeddings. A library version is a
// directory holding three files:
//
//   manifest.json   version, dimension, record count, creation timestamp,
//                   content hash of the vector file, and the hash of the
//                   configuration that produced the vectors
//   index.csv       row,region_id,level   (row is 0-based, file order)
//   vectors.f32     row-major binary32 little-endian, one row per record
//
// Version directories are immutable: saving refuses to write into a
// directory that already contains a manifest, and nothing here mutates a
// saved version in place.

struct EmbeddingRecord {
    std::string region_id;
    std::string level; // "grid" or "county"
    std::vector<float> vec;
};

struct LibraryManifest {
    std::string version;
    int dimension = 0;
    int count = 0;
    std::string created;            // ISO minutes, e.g. "2024-03-04T10:30"
    std::string vector_hash;        // FNV-1a 64 over vectors.f32, hex
    std::string source_config_hash; // hash of the producing config ("" if unknown)
};

struct EmbeddingLibrary {
    LibraryManifest manifest;
    std::vector<EmbeddingRecord> records;
};

// FNV-1a 64-bit over a byte buffer, rendered as 16 lowercase hex digits.
std::string fnv1a64_hex(const unsigned char* data, std::size_t n);
std::string fnv1a64_hex(const std::string& s);

// Writes manifest.json / index.csv / vectors.f32 into `dir` (created if
// missing). Rejects empty record sets, inhomogeneous dimensions, levels other
// than grid/county, duplicate region ids within a level, zero-norm vectors,
// and directories that already contain a manifest. Returns the manifest that
// was written.
LibraryManifest save_library(const std::vector<EmbeddingRecord>& records,
                             const std::string& dir, const std::string& version,
                             const std::string& created,
                             const std::string& source_config_hash = "");

// Loads a library directory. Any inconsistency is a hard error: missing
// files, malformed manifest, wrong vector-file size, row indices out of
// order, or a content hash that does not match the bytes on disk.
EmbeddingLibrary load_library(const std::string& dir);

struct SimilarityHit {
    std::string region_id;
    std::string level;
    double score = 0.0; // cosine similarity
};

// Exhaustive cosine search over the library. `level` restricts the candidate
// set ("" searches both levels). Results are sorted by score descending with
// ties broken by region_id ascending. Requires a nonzero-norm query of the
// library's dimension and 1 <= k <= candidate count.
std::vector<SimilarityHit> top_k_similar(const EmbeddingLibrary& lib,
                                         const std::vector<float>& query, int k,
                                         const std::string& level = "");

struct KMeansResult {
    std::vector<int> assignment; // size n, values in [0, k)
    Tensor centroids;            // {k, d}
    double inertia = 0.0;        // sum of squared distances to assigned centroid
    std::vector<double> inertia_curve; // one entry per assignment pass
};

// Lloyd's algorithm with seeded k-means++ initialisation. A cluster that
// loses all members is re-seeded from the point farthest from its assigned
// centroid, so the inertia curve is non-increasing. Requires 1 <= k <= n.
KMeansResult kmeans(const Tensor& vectors, int k, std::uint64_t seed,
                    int max_iters = 100);

// Eigen-decomposition of a symmetric matrix via cyclic Jacobi rotations.
// Returns eigenvalues in descending order with matching eigenvector columns.
std::pair<std::vector<double>, Tensor> symmetric_eigen(const Tensor& s);

// Projects {n, d} vectors onto their top-2 principal axes (mean-centred).
// Sign convention: each axis is flipped so that its largest-magnitude
// loading is positive (first such index on ties). Requires n >= 2; for d == 1
// the second coordinate is zero.
Tensor project_2d(const Tensor& vectors);

// Writes "region_id,x,y,cluster" rows. Sizes must agree.
void write_projection_csv(const std::vector<std::string>& region_ids,
                          const Tensor& coords, const std::vector<int>& cluster,
                          const std::string& path);

} // namespace ridecast
