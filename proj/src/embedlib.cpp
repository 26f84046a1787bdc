#include "ridecast/embedlib.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "nlohmann/json.hpp"
#include "ridecast/csvio.hpp"
#include "ridecast/rng.hpp"

namespace fs = std::filesystem;

namespace ridecast {

namespace {

bool valid_level(const std::string& level) {
    return level == "grid" || level == "county";
}

std::vector<unsigned char> pack_f32_le(const std::vector<EmbeddingRecord>& records) {
    std::vector<unsigned char> out;
    out.reserve(records.size() * records.front().vec.size() * 4);
    for (const EmbeddingRecord& r : records) {
        for (float f : r.vec) {
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            out.push_back(static_cast<unsigned char>(u & 0xff));
            out.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
            out.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
            out.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
        }
    }
    return out;
}

float unpack_f32_le(const unsigned char* p) {
    const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                            (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    ensure(in.good(), "embedlib: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    ensure(!in.bad(), "embedlib: failed reading " + path);
    return bytes;
}

double sq_dist_row(const Tensor& a, int i, const Tensor& b, int j) {
    double s = 0.0;
    for (int c = 0; c < a.cols(); ++c) {
        const double d = a.at(i, c) - b.at(j, c);
        s += d * d;
    }
    return s;
}

// One assignment pass: fills `assignment` with the nearest centroid (ties to
// the lower index) and returns the resulting inertia.
double assign_points(const Tensor& x, const Tensor& centroids,
                     std::vector<int>& assignment) {
    double inertia = 0.0;
    for (int i = 0; i < x.rows(); ++i) {
        int best = 0;
        double best_d = sq_dist_row(x, i, centroids, 0);
        for (int j = 1; j < centroids.rows(); ++j) {
            const double d = sq_dist_row(x, i, centroids, j);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        assignment[static_cast<size_t>(i)] = best;
        inertia += best_d;
    }
    return inertia;
}

} // namespace

std::string fnv1a64_hex(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<std::uint64_t>(data[i]);
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string fnv1a64_hex(const std::string& s) {
    return fnv1a64_hex(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

LibraryManifest save_library(const std::vector<EmbeddingRecord>& records,
                             const std::string& dir, const std::string& version,
                             const std::string& created,
                             const std::string& source_config_hash) {
    require(!records.empty(), "save_library: no records");
    require(!version.empty(), "save_library: version must be non-empty");
    require(!created.empty(), "save_library: creation timestamp must be non-empty");
    const int dim = static_cast<int>(records.front().vec.size());
    require(dim > 0, "save_library: zero-dimensional vectors");
    std::set<std::pair<std::string, std::string>> seen;
    for (const EmbeddingRecord& r : records) {
        require(static_cast<int>(r.vec.size()) == dim,
                "save_library: record " + r.region_id + " has dimension " +
                    std::to_string(r.vec.size()) + ", expected " + std::to_string(dim));
        require(valid_level(r.level),
                "save_library: record " + r.region_id + " has invalid level '" +
                    r.level + "'");
        require(seen.emplace(r.level, r.region_id).second,
                "save_library: duplicate record " + r.level + "/" + r.region_id);
        double norm2 = 0.0;
        bool finite = true;
        for (float f : r.vec) {
            if (!std::isfinite(f)) finite = false;
            norm2 += static_cast<double>(f) * static_cast<double>(f);
        }
        require(finite, "save_library: record " + r.region_id + " has non-finite values");
        require(norm2 > 0.0, "save_library: record " + r.region_id + " has zero norm");
    }

    fs::create_directories(dir);
    const fs::path root(dir);
    require(!fs::exists(root / "manifest.json"),
            "save_library: " + dir + " already contains a library version");

    const std::vector<unsigned char> bytes = pack_f32_le(records);
    {
        std::ofstream out(root / "vectors.f32", std::ios::binary);
        ensure(out.good(), "save_library: cannot write vectors.f32 in " + dir);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        ensure(out.good(), "save_library: failed writing vectors.f32 in " + dir);
    }

    std::ostringstream index;
    index << "row,region_id,level\n";
    for (size_t i = 0; i < records.size(); ++i)
        index << i << "," << records[i].region_id << "," << records[i].level << "\n";
    write_text_file((root / "index.csv").string(), index.str());

    LibraryManifest m;
    m.version = version;
    m.dimension = dim;
    m.count = static_cast<int>(records.size());
    m.created = created;
    m.vector_hash = fnv1a64_hex(bytes.data(), bytes.size());
    m.source_config_hash = source_config_hash;

    nlohmann::json j;
    j["version"] = m.version;
    j["dimension"] = m.dimension;
    j["count"] = m.count;
    j["created"] = m.created;
    j["vector_hash"] = m.vector_hash;
    j["source_config_hash"] = m.source_config_hash;
    write_text_file((root / "manifest.json").string(), j.dump(2) + "\n");
    return m;
}

EmbeddingLibrary load_library(const std::string& dir) {
    const fs::path root(dir);
    ensure(fs::exists(root / "manifest.json"),
           "load_library: missing manifest.json in " + dir);

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file((root / "manifest.json").string()));
    } catch (const nlohmann::json::exception& e) {
        throw runtime_failure("load_library: malformed manifest.json in " + dir + ": " +
                              e.what());
    }
    EmbeddingLibrary lib;
    try {
        lib.manifest.version = j.at("version").get<std::string>();
        lib.manifest.dimension = j.at("dimension").get<int>();
        lib.manifest.count = j.at("count").get<int>();
        lib.manifest.created = j.at("created").get<std::string>();
        lib.manifest.vector_hash = j.at("vector_hash").get<std::string>();
        lib.manifest.source_config_hash = j.at("source_config_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw runtime_failure("load_library: manifest.json in " + dir +
                              " is missing fields: " + e.what());
    }
    ensure(lib.manifest.dimension > 0, "load_library: non-positive dimension in manifest");
    ensure(lib.manifest.count > 0, "load_library: non-positive count in manifest");

    const std::vector<unsigned char> bytes = read_bytes((root / "vectors.f32").string());
    const size_t expect = static_cast<size_t>(lib.manifest.count) *
                          static_cast<size_t>(lib.manifest.dimension) * 4;
    ensure(bytes.size() == expect,
           "load_library: vectors.f32 holds " + std::to_string(bytes.size()) +
               " bytes, manifest implies " + std::to_string(expect));
    const std::string hash = fnv1a64_hex(bytes.data(), bytes.size());
    ensure(hash == lib.manifest.vector_hash,
           "load_library: vector content hash " + hash + " does not match manifest " +
               lib.manifest.vector_hash);

    const CsvFile idx = read_csv((root / "index.csv").string());
    expect_header(idx, {"row", "region_id", "level"}, (root / "index.csv").string());
    ensure(static_cast<int>(idx.rows.size()) == lib.manifest.count,
           "load_library: index.csv row count does not match manifest");
    lib.records.resize(idx.rows.size());
    for (size_t i = 0; i < idx.rows.size(); ++i) {
        ensure(parse_int_field(idx.rows[i], 0, "row") == static_cast<long long>(i),
               "load_library: index.csv rows out of order at line " +
                   std::to_string(idx.rows[i].line));
        EmbeddingRecord& r = lib.records[i];
        r.region_id = idx.rows[i].fields[1];
        r.level = idx.rows[i].fields[2];
        ensure(valid_level(r.level), "load_library: invalid level '" + r.level +
                                         "' at line " + std::to_string(idx.rows[i].line));
        r.vec.resize(static_cast<size_t>(lib.manifest.dimension));
        const unsigned char* base =
            bytes.data() + i * static_cast<size_t>(lib.manifest.dimension) * 4;
        for (int c = 0; c < lib.manifest.dimension; ++c)
            r.vec[static_cast<size_t>(c)] = unpack_f32_le(base + static_cast<size_t>(c) * 4);
    }
    return lib;
}

std::vector<SimilarityHit> top_k_similar(const EmbeddingLibrary& lib,
                                         const std::vector<float>& query, int k,
                                         const std::string& level) {
    require(level.empty() || valid_level(level),
            "top_k_similar: invalid level filter '" + level + "'");
    require(static_cast<int>(query.size()) == lib.manifest.dimension,
            "top_k_similar: query dimension " + std::to_string(query.size()) +
                " does not match library dimension " +
                std::to_string(lib.manifest.dimension));
    double qn = 0.0;
    for (float f : query) qn += static_cast<double>(f) * static_cast<double>(f);
    require(qn > 0.0, "top_k_similar: query has zero norm");
    qn = std::sqrt(qn);

    std::vector<SimilarityHit> hits;
    for (const EmbeddingRecord& r : lib.records) {
        if (!level.empty() && r.level != level) continue;
        double dot = 0.0, rn = 0.0;
        for (size_t c = 0; c < query.size(); ++c) {
            dot += static_cast<double>(r.vec[c]) * static_cast<double>(query[c]);
            rn += static_cast<double>(r.vec[c]) * static_cast<double>(r.vec[c]);
        }
        ensure(rn > 0.0, "top_k_similar: stored vector " + r.region_id + " has zero norm");
        hits.push_back({r.region_id, r.level, dot / (std::sqrt(rn) * qn)});
    }
    require(k >= 1, "top_k_similar: k must be positive");
    require(k <= static_cast<int>(hits.size()),
            "top_k_similar: k=" + std::to_string(k) + " exceeds candidate count " +
                std::to_string(hits.size()));
    std::sort(hits.begin(), hits.end(), [](const SimilarityHit& a, const SimilarityHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.region_id < b.region_id;
    });
    hits.resize(static_cast<size_t>(k));
    return hits;
}

KMeansResult kmeans(const Tensor& vectors, int k, std::uint64_t seed, int max_iters) {
    require(vectors.ndim() == 2, "kmeans: vectors must be 2-dimensional");
    const int n = vectors.rows();
    const int d = vectors.cols();
    require(k >= 1, "kmeans: k must be positive");
    require(k <= n, "kmeans: k exceeds the number of points");
    require(max_iters >= 1, "kmeans: max_iters must be positive");
    for (double v : vectors.data)
        require(std::isfinite(v), "kmeans: non-finite input");

    Rng rng(seed);
    KMeansResult res;
    res.centroids = Tensor::zeros({k, d});
    res.assignment.assign(static_cast<size_t>(n), 0);

    // k-means++ initialisation: first centre uniform, later centres sampled
    // with probability proportional to squared distance from the nearest
    // centre chosen so far.
    std::vector<int> chosen;
    chosen.push_back(rng.uniform_int(n));
    std::vector<double> d2(static_cast<size_t>(n), 0.0);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int used : chosen)
                best = std::min(best, sq_dist_row(vectors, i, vectors, used));
            d2[static_cast<size_t>(i)] = best;
            total += best;
        }
        int pick;
        if (total <= 0.0) {
            // All remaining points coincide with existing centres.
            pick = rng.uniform_int(n);
        } else {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += d2[static_cast<size_t>(i)];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        chosen.push_back(pick);
    }
    for (int c = 0; c < k; ++c)
        for (int j = 0; j < d; ++j) res.centroids.at(c, j) = vectors.at(chosen[static_cast<size_t>(c)], j);

    std::vector<int> prev;
    for (int iter = 0; iter < max_iters; ++iter) {
        res.inertia = assign_points(vectors, res.centroids, res.assignment);
        res.inertia_curve.push_back(res.inertia);
        if (res.assignment == prev) break;
        prev = res.assignment;

        Tensor sums = Tensor::zeros({k, d});
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            const int a = res.assignment[static_cast<size_t>(i)];
            counts[static_cast<size_t>(a)]++;
            for (int j = 0; j < d; ++j) sums.at(a, j) += vectors.at(i, j);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // Re-seed an emptied cluster from the point farthest from its
                // assigned centroid; that point's cost drops to zero on the
                // next pass, so the curve stays non-increasing.
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double dist = sq_dist_row(
                        vectors, i, res.centroids, res.assignment[static_cast<size_t>(i)]);
                    if (dist > far_d) {
                        far_d = dist;
                        far = i;
                    }
                }
                for (int j = 0; j < d; ++j) res.centroids.at(c, j) = vectors.at(far, j);
                prev.clear(); // force at least one more pass
            } else {
                for (int j = 0; j < d; ++j)
                    res.centroids.at(c, j) =
                        sums.at(c, j) / static_cast<double>(counts[static_cast<size_t>(c)]);
            }
        }
    }
    // Final assignment against the last centroid update (no-op if converged).
    res.inertia = assign_points(vectors, res.centroids, res.assignment);
    if (res.inertia_curve.empty() || res.inertia_curve.back() != res.inertia)
        res.inertia_curve.push_back(res.inertia);
    return res;
}

std::pair<std::vector<double>, Tensor> symmetric_eigen(const Tensor& s) {
    require(s.ndim() == 2 && s.rows() == s.cols(), "symmetric_eigen: matrix must be square");
    const int d = s.rows();
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            require(std::abs(s.at(i, j) - s.at(j, i)) <= 1e-9 * (1.0 + std::abs(s.at(i, j))),
                    "symmetric_eigen: matrix is not symmetric");

    Tensor a = s;
    Tensor v = Tensor::zeros({d, d});
    for (int i = 0; i < d; ++i) v.at(i, i) = 1.0;

    // The Frobenius norm is invariant under the rotations, so it gives a
    // stable scale for the stopping rule.
    double frob2 = 0.0;
    for (double x : s.data) frob2 += x * x;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += a.at(p, q) * a.at(p, q);
        if (off <= frob2 * 1e-26 + 1e-300) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (int i = 0; i < d; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - sn * aiq;
                    a.at(i, q) = sn * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - sn * aqi;
                    a.at(q, i) = sn * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    const double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - sn * viq;
                    v.at(i, q) = sn * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return a.at(x, x) > a.at(y, y); });
    std::vector<double> eig(static_cast<size_t>(d));
    Tensor vec = Tensor::zeros({d, d});
    for (int c = 0; c < d; ++c) {
        eig[static_cast<size_t>(c)] = a.at(order[static_cast<size_t>(c)], order[static_cast<size_t>(c)]);
        for (int i = 0; i < d; ++i) vec.at(i, c) = v.at(i, order[static_cast<size_t>(c)]);
    }
    return {eig, vec};
}

Tensor project_2d(const Tensor& vectors) {
    require(vectors.ndim() == 2, "project_2d: vectors must be 2-dimensional");
    const int n = vectors.rows();
    const int d = vectors.cols();
    require(n >= 2, "project_2d: need at least two points");
    require(d >= 1, "project_2d: need at least one column");
    for (double x : vectors.data)
        require(std::isfinite(x), "project_2d: non-finite input");

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += vectors.at(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    Tensor x = vectors;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x.at(i, j) -= mean[static_cast<size_t>(j)];

    // Scatter matrix X^T X; its eigenvalues are the per-axis sums of squares.
    Tensor scatter = Tensor::zeros({d, d});
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < d; ++p)
            for (int q = 0; q < d; ++q) scatter.at(p, q) += x.at(i, p) * x.at(i, q);

    const auto [eig, vec] = symmetric_eigen(scatter);
    (void)eig;
    Tensor coords = Tensor::zeros({n, 2});
    const int axes = std::min(2, d);
    for (int c = 0; c < axes; ++c) {
        // Flip so the largest-magnitude loading is positive.
        int arg = 0;
        for (int i = 1; i < d; ++i)
            if (std::abs(vec.at(i, c)) > std::abs(vec.at(arg, c))) arg = i;
        const double sign = vec.at(arg, c) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) {
            double t = 0.0;
            for (int j = 0; j < d; ++j) t += x.at(i, j) * vec.at(j, c);
            coords.at(i, c) = sign * t;
        }
    }
    return coords;
}

void write_projection_csv(const std::vector<std::string>& region_ids,
                          const Tensor& coords, const std::vector<int>& cluster,
                          const std::string& path) {
    require(coords.ndim() == 2 && coords.cols() == 2,
            "write_projection_csv: coords must be {n, 2}");
    require(static_cast<int>(region_ids.size()) == coords.rows(),
            "write_projection_csv: region count does not match coords");
    require(cluster.size() == region_ids.size(),
            "write_projection_csv: cluster count does not match coords");
    std::ostringstream out;
    out << "region_id,x,y,cluster\n";
    char buf[64];
    for (size_t i = 0; i < region_ids.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g", coords.at(static_cast<int>(i), 0),
                      coords.at(static_cast<int>(i), 1));
        out << region_ids[i] << "," << buf << "," << cluster[i] << "\n";
    }
    write_text_file(path, out.str());
}

} // namespace ridecast
