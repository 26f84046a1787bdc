#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "ridecast/csvio.hpp"
#include "ridecast/embedlib.hpp"
#include "ridecast/rng.hpp"
#include "support/test_util.hpp"

using namespace ridecast;

namespace {

std::string temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("ridecast_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

bool same_bits(float a, float b) {
    std::uint32_t ua, ub;
    std::memcpy(&ua, &a, 4);
    std::memcpy(&ub, &b, 4);
    return ua == ub;
}

std::vector<EmbeddingRecord> random_records(Rng& rng, int n, int dim) {
    std::vector<EmbeddingRecord> recs;
    for (int i = 0; i < n; ++i) {
        EmbeddingRecord r;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%s%03d", i % 3 == 0 ? "c" : "g", i);
        r.region_id = buf;
        r.level = i % 3 == 0 ? "county" : "grid";
        r.vec.resize(static_cast<size_t>(dim));
        for (float& f : r.vec) f = static_cast<float>(rng.normal());
        recs.push_back(r);
    }
    return recs;
}

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}

void dump(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

double inertia_of(const Tensor& x, const std::vector<int>& assign, int k) {
    const int n = x.rows(), d = x.cols();
    Tensor sums = Tensor::zeros({k, d});
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
        counts[static_cast<size_t>(assign[static_cast<size_t>(i)])]++;
        for (int j = 0; j < d; ++j) sums.at(assign[static_cast<size_t>(i)], j) += x.at(i, j);
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int a = assign[static_cast<size_t>(i)];
        for (int j = 0; j < d; ++j) {
            const double diff = x.at(i, j) - sums.at(a, j) / counts[static_cast<size_t>(a)];
            total += diff * diff;
        }
    }
    return total;
}

} // namespace

TEST_CASE("embedlib: fnv-1a hash matches published vectors") {
    CHECK(fnv1a64_hex("") == "cbf29ce484222325");
    CHECK(fnv1a64_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a64_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("embedlib: save/load round-trip is bit-identical") {
    Rng rng(41);
    const auto recs = random_records(rng, 10, 16);
    const std::string dir = temp_dir("emb_rt");
    const LibraryManifest written =
        save_library(recs, dir, "v1", "2024-03-04T10:30", fnv1a64_hex("cfg"));
    CHECK(written.count == 10);
    CHECK(written.dimension == 16);

    const EmbeddingLibrary lib = load_library(dir);
    CHECK(lib.manifest.version == "v1");
    CHECK(lib.manifest.dimension == 16);
    CHECK(lib.manifest.count == 10);
    CHECK(lib.manifest.created == "2024-03-04T10:30");
    CHECK(lib.manifest.vector_hash == written.vector_hash);
    CHECK(lib.manifest.source_config_hash == fnv1a64_hex("cfg"));
    REQUIRE(lib.records.size() == recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        CHECK(lib.records[i].region_id == recs[i].region_id);
        CHECK(lib.records[i].level == recs[i].level);
        REQUIRE(lib.records[i].vec.size() == recs[i].vec.size());
        for (size_t c = 0; c < recs[i].vec.size(); ++c)
            CHECK(same_bits(lib.records[i].vec[c], recs[i].vec[c]));
    }
}

TEST_CASE("embedlib: corrupted or resized vector files are rejected") {
    Rng rng(42);
    const auto recs = random_records(rng, 6, 8);
    const std::string dir = temp_dir("emb_corrupt");
    save_library(recs, dir, "v1", "2024-03-04T10:30");
    const std::string vf = dir + "/vectors.f32";

    SUBCASE("one flipped byte fails the content hash") {
        auto bytes = slurp(vf);
        bytes[7] ^= 0x5a;
        dump(vf, bytes);
        CHECK_THROWS_AS(load_library(dir), runtime_failure);
    }
    SUBCASE("appended bytes fail the size check") {
        auto bytes = slurp(vf);
        bytes.insert(bytes.end(), {0, 0, 0, 0});
        dump(vf, bytes);
        CHECK_THROWS_AS(load_library(dir), runtime_failure);
    }
    SUBCASE("truncation fails the size check") {
        auto bytes = slurp(vf);
        bytes.resize(bytes.size() - 4);
        dump(vf, bytes);
        CHECK_THROWS_AS(load_library(dir), runtime_failure);
    }
    SUBCASE("untouched library still loads") {
        CHECK(load_library(dir).records.size() == 6);
    }
}

TEST_CASE("embedlib: save validation") {
    Rng rng(43);
    auto recs = random_records(rng, 4, 6);
    const std::string dir = temp_dir("emb_savechk");

    CHECK_THROWS_AS(save_library({}, dir, "v1", "2024-01-01T00:00"), invalid_input);
    CHECK_THROWS_AS(save_library(recs, dir, "", "2024-01-01T00:00"), invalid_input);
    CHECK_THROWS_AS(save_library(recs, dir, "v1", ""), invalid_input);

    auto mixed = recs;
    mixed[2].vec.resize(5);
    CHECK_THROWS_AS(save_library(mixed, dir, "v1", "2024-01-01T00:00"), invalid_input);

    auto bad_level = recs;
    bad_level[1].level = "block";
    CHECK_THROWS_AS(save_library(bad_level, dir, "v1", "2024-01-01T00:00"), invalid_input);

    auto dup = recs;
    dup[3].region_id = dup[1].region_id;
    dup[3].level = dup[1].level;
    CHECK_THROWS_AS(save_library(dup, dir, "v1", "2024-01-01T00:00"), invalid_input);

    auto zero = recs;
    std::fill(zero[0].vec.begin(), zero[0].vec.end(), 0.0f);
    CHECK_THROWS_AS(save_library(zero, dir, "v1", "2024-01-01T00:00"), invalid_input);

    auto nan = recs;
    nan[0].vec[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(save_library(nan, dir, "v1", "2024-01-01T00:00"), invalid_input);

    // Version directories are immutable: a second save into the same
    // directory must fail rather than overwrite.
    save_library(recs, dir, "v1", "2024-01-01T00:00");
    CHECK_THROWS_AS(save_library(recs, dir, "v2", "2024-01-02T00:00"), invalid_input);
}

TEST_CASE("embedlib: load validation") {
    CHECK_THROWS_AS(load_library(temp_dir("emb_missing")), runtime_failure);

    Rng rng(44);
    const auto recs = random_records(rng, 3, 4);

    const std::string dir_bad = temp_dir("emb_badjson");
    save_library(recs, dir_bad, "v1", "2024-01-01T00:00");
    write_text_file(dir_bad + "/manifest.json", "{not json");
    CHECK_THROWS_AS(load_library(dir_bad), runtime_failure);

    const std::string dir_dim = temp_dir("emb_baddim");
    save_library(recs, dir_dim, "v1", "2024-01-01T00:00");
    std::string manifest = read_text_file(dir_dim + "/manifest.json");
    const size_t pos = manifest.find("\"dimension\": 4");
    REQUIRE(pos != std::string::npos);
    manifest.replace(pos, 14, "\"dimension\": 8");
    write_text_file(dir_dim + "/manifest.json", manifest);
    CHECK_THROWS_AS(load_library(dir_dim), runtime_failure);

    const std::string dir_idx = temp_dir("emb_badidx");
    save_library(recs, dir_idx, "v1", "2024-01-01T00:00");
    write_text_file(dir_idx + "/index.csv", "row,region_id,level\n0,g1,grid\n1,g2,grid\n");
    CHECK_THROWS_AS(load_library(dir_idx), runtime_failure);
}

TEST_CASE("embedlib: exact match scores one and ranks first") {
    std::vector<EmbeddingRecord> recs;
    Rng rng(45);
    for (int i = 0; i < 8; ++i) {
        EmbeddingRecord r;
        r.region_id = "g" + std::to_string(i);
        r.level = "grid";
        r.vec.resize(12);
        for (float& f : r.vec) f = static_cast<float>(rng.normal());
        recs.push_back(r);
    }
    const std::string dir = temp_dir("emb_exact");
    save_library(recs, dir, "v1", "2024-01-01T00:00");
    const EmbeddingLibrary lib = load_library(dir);

    std::vector<float> query = recs[5].vec;
    for (float& f : query) f *= 2.5f; // cosine ignores positive scaling
    const auto hits = top_k_similar(lib, query, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].region_id == "g5");
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hits[1].score <= hits[0].score);
    CHECK(hits[2].score <= hits[1].score);
}

TEST_CASE("embedlib: top-k matches a brute-force oracle on 500 records") {
    Rng rng(46);
    const int n = 500, dim = 24;
    const auto recs = random_records(rng, n, dim);
    const std::string dir = temp_dir("emb_oracle");
    save_library(recs, dir, "v1", "2024-01-01T00:00");
    const EmbeddingLibrary lib = load_library(dir);

    std::vector<float> query(static_cast<size_t>(dim));
    for (float& f : query) f = static_cast<float>(rng.normal());

    // Independent exhaustive ranking with the same tie rule.
    double qn = 0.0;
    for (float f : query) qn += static_cast<double>(f) * static_cast<double>(f);
    qn = std::sqrt(qn);
    std::vector<std::pair<double, std::string>> expect;
    for (const EmbeddingRecord& r : lib.records) {
        double dot = 0.0, rn = 0.0;
        for (size_t c = 0; c < query.size(); ++c) {
            dot += static_cast<double>(r.vec[c]) * static_cast<double>(query[c]);
            rn += static_cast<double>(r.vec[c]) * static_cast<double>(r.vec[c]);
        }
        expect.emplace_back(dot / (std::sqrt(rn) * qn), r.region_id);
    }
    std::sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    const auto hits = top_k_similar(lib, query, n);
    REQUIRE(hits.size() == static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        CHECK(hits[static_cast<size_t>(i)].region_id == expect[static_cast<size_t>(i)].second);
        CHECK(hits[static_cast<size_t>(i)].score == expect[static_cast<size_t>(i)].first);
    }
    // Scores are globally non-increasing.
    for (int i = 1; i < n; ++i)
        CHECK(hits[static_cast<size_t>(i)].score <= hits[static_cast<size_t>(i - 1)].score);
}

TEST_CASE("embedlib: equal scores rank by region id ascending") {
    std::vector<EmbeddingRecord> recs;
    for (const char* id : {"r_c", "r_a", "r_b"}) {
        EmbeddingRecord r;
        r.region_id = id;
        r.level = "grid";
        r.vec = {1.0f, 0.0f, 0.0f};
        recs.push_back(r);
    }
    recs.push_back({"r_z", "grid", {0.0f, 1.0f, 0.0f}});
    const std::string dir = temp_dir("emb_ties");
    save_library(recs, dir, "v1", "2024-01-01T00:00");
    const EmbeddingLibrary lib = load_library(dir);

    const auto hits = top_k_similar(lib, {2.0f, 0.0f, 0.0f}, 4);
    REQUIRE(hits.size() == 4);
    CHECK(hits[0].region_id == "r_a");
    CHECK(hits[1].region_id == "r_b");
    CHECK(hits[2].region_id == "r_c");
    CHECK(hits[3].region_id == "r_z");
    CHECK(hits[0].score == hits[2].score);
}

TEST_CASE("embedlib: level filter and query validation") {
    Rng rng(47);
    const auto recs = random_records(rng, 9, 5); // ids c000,g001,g002,c003,...
    const std::string dir = temp_dir("emb_filter");
    save_library(recs, dir, "v1", "2024-01-01T00:00");
    const EmbeddingLibrary lib = load_library(dir);

    int n_county = 0;
    for (const auto& r : recs) n_county += r.level == "county" ? 1 : 0;
    std::vector<float> q(5, 0.5f);

    const auto county_hits = top_k_similar(lib, q, n_county, "county");
    CHECK(county_hits.size() == static_cast<size_t>(n_county));
    for (const auto& h : county_hits) CHECK(h.level == "county");

    const auto grid_hits = top_k_similar(lib, q, 9 - n_county, "grid");
    for (const auto& h : grid_hits) CHECK(h.level == "grid");

    CHECK_THROWS_AS(top_k_similar(lib, q, n_county + 1, "county"), invalid_input);
    CHECK_THROWS_AS(top_k_similar(lib, q, 0), invalid_input);
    CHECK_THROWS_AS(top_k_similar(lib, q, 1, "block"), invalid_input);
    CHECK_THROWS_AS(top_k_similar(lib, {0.0f, 0.0f, 0.0f, 0.0f, 0.0f}, 1), invalid_input);
    CHECK_THROWS_AS(top_k_similar(lib, {1.0f, 2.0f}, 1), invalid_input);
}

TEST_CASE("embedlib: k-means separates two well-separated pairs") {
    const Tensor pts = Tensor::matrix(4, 2, {0.0, 0.0, 0.1, 0.0, 10.0, 10.0, 10.1, 10.0});
    const KMeansResult res = kmeans(pts, 2, /*seed=*/7);
    CHECK(res.assignment[0] == res.assignment[1]);
    CHECK(res.assignment[2] == res.assignment[3]);
    CHECK(res.assignment[0] != res.assignment[2]);
    CHECK(res.inertia == doctest::Approx(0.01).epsilon(1e-9));
    // Centroids sit at the pair midpoints (in some order).
    std::vector<double> xs = {res.centroids.at(0, 0), res.centroids.at(1, 0)};
    std::sort(xs.begin(), xs.end());
    CHECK(xs[0] == doctest::Approx(0.05));
    CHECK(xs[1] == doctest::Approx(10.05));
}

TEST_CASE("embedlib: k equal to the point count drives inertia to zero") {
    Rng rng(48);
    Tensor pts = Tensor::zeros({6, 3});
    for (double& v : pts.data) v = rng.normal();
    const KMeansResult res = kmeans(pts, 6, 9);
    CHECK(res.inertia == 0.0);
    std::vector<int> sorted = res.assignment;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 6; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
}

TEST_CASE("embedlib: converged inertia beats a fixed-stripe baseline on blobs") {
    Rng rng(49);
    const int n = 100, d = 5;
    Tensor pts = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
        const int blob = i % 3;
        for (int j = 0; j < d; ++j)
            pts.at(i, j) = 6.0 * blob + 0.3 * rng.normal();
    }
    const KMeansResult res = kmeans(pts, 3, 11);

    // Baseline: an arbitrary balanced partition with its own mean centroids.
    std::vector<int> stripes(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) stripes[static_cast<size_t>(i)] = (i / 7) % 3;
    const double baseline = inertia_of(pts, stripes, 3);
    CHECK(res.inertia <= baseline + 1e-9);
    CHECK(res.inertia < 0.5 * baseline); // blobs are far apart, so the gap is large

    for (size_t i = 1; i < res.inertia_curve.size(); ++i)
        CHECK(res.inertia_curve[i] <= res.inertia_curve[i - 1] + 1e-9);
    // Every blob lands in its own cluster.
    CHECK(res.assignment[0] != res.assignment[1]);
    CHECK(res.assignment[1] != res.assignment[2]);
    CHECK(res.assignment[0] != res.assignment[2]);
    for (int i = 0; i < n; ++i)
        CHECK(res.assignment[static_cast<size_t>(i)] ==
              res.assignment[static_cast<size_t>(i % 3)]);
}

TEST_CASE("embedlib: k-means is deterministic and rejects invalid arguments") {
    Rng rng(50);
    Tensor pts = Tensor::zeros({20, 4});
    for (double& v : pts.data) v = rng.uniform(-1.0, 1.0);

    const KMeansResult a = kmeans(pts, 4, 123);
    const KMeansResult b = kmeans(pts, 4, 123);
    CHECK(a.assignment == b.assignment);
    CHECK(testutil::tensors_bit_identical(a.centroids, b.centroids));
    CHECK(a.inertia == b.inertia);

    CHECK_THROWS_AS(kmeans(pts, 0, 1), invalid_input);
    CHECK_THROWS_AS(kmeans(pts, 21, 1), invalid_input);
    CHECK_THROWS_AS(kmeans(pts, 4, 1, 0), invalid_input);
    Tensor bad = pts;
    bad.at(3, 2) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(kmeans(bad, 4, 1), invalid_input);
}

TEST_CASE("embedlib: k-means stays monotone on duplicate-heavy data") {
    // Fewer distinct points than clusters forces duplicate initial centres
    // and exercises the empty-cluster path; the curve must stay monotone and
    // the result well-formed.
    Tensor pts = Tensor::zeros({12, 2});
    for (int i = 0; i < 12; ++i) pts.at(i, 0) = i < 6 ? 0.0 : 1.0;
    const KMeansResult res = kmeans(pts, 3, 5, 20);
    CHECK(res.inertia == doctest::Approx(0.0));
    for (int a : res.assignment) {
        CHECK(a >= 0);
        CHECK(a < 3);
    }
    for (size_t i = 1; i < res.inertia_curve.size(); ++i)
        CHECK(res.inertia_curve[i] <= res.inertia_curve[i - 1] + 1e-12);

    Rng rng(51);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor grid = Tensor::zeros({15, 2});
        for (double& v : grid.data) v = static_cast<double>(rng.uniform_int(3));
        const KMeansResult r = kmeans(grid, 4, 1000 + static_cast<std::uint64_t>(trial));
        for (size_t i = 1; i < r.inertia_curve.size(); ++i)
            CHECK(r.inertia_curve[i] <= r.inertia_curve[i - 1] + 1e-9);
        CHECK(std::isfinite(r.inertia));
    }
}

TEST_CASE("embedlib: jacobi eigensolver matches hand-computed spectra") {
    const Tensor m2 = Tensor::matrix(2, 2, {2.0, 1.0, 1.0, 2.0});
    const auto [e2, v2] = symmetric_eigen(m2);
    CHECK(e2[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(e2[1] == doctest::Approx(1.0).epsilon(1e-12));
    // A v = lambda v for each column.
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 2; ++i) {
            double av = 0.0;
            for (int j = 0; j < 2; ++j) av += m2.at(i, j) * v2.at(j, c);
            CHECK(av == doctest::Approx(e2[static_cast<size_t>(c)] * v2.at(i, c)).epsilon(1e-10));
        }

    const Tensor diag = Tensor::matrix(3, 3, {5, 0, 0, 0, 2, 0, 0, 0, 7});
    const auto [e3, v3] = symmetric_eigen(diag);
    CHECK(e3[0] == doctest::Approx(7.0));
    CHECK(e3[1] == doctest::Approx(5.0));
    CHECK(e3[2] == doctest::Approx(2.0));

    Rng rng(52);
    const int d = 6;
    Tensor sym = Tensor::zeros({d, d});
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const double v = rng.normal();
            sym.at(i, j) = v;
            sym.at(j, i) = v;
        }
    const auto [eig, vec] = symmetric_eigen(sym);
    double trace = 0.0;
    for (int i = 0; i < d; ++i) trace += sym.at(i, i);
    double eig_sum = 0.0;
    for (double e : eig) eig_sum += e;
    CHECK(eig_sum == doctest::Approx(trace).epsilon(1e-9));
    for (int c = 1; c < d; ++c)
        CHECK(eig[static_cast<size_t>(c)] <= eig[static_cast<size_t>(c - 1)]);
    for (int c = 0; c < d; ++c) {
        for (int i = 0; i < d; ++i) {
            double av = 0.0;
            for (int j = 0; j < d; ++j) av += sym.at(i, j) * vec.at(j, c);
            CHECK(std::abs(av - eig[static_cast<size_t>(c)] * vec.at(i, c)) < 1e-8);
        }
    }
    // Columns are orthonormal.
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double dot = 0.0;
            for (int i = 0; i < d; ++i) dot += vec.at(i, a) * vec.at(i, b);
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
}

TEST_CASE("embedlib: projection flattens collinear points onto one axis") {
    const int n = 25;
    Tensor pts = Tensor::zeros({n, 3});
    const double dir[3] = {3.0 / 13.0, 4.0 / 13.0, 12.0 / 13.0};
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i - 12);
        for (int j = 0; j < 3; ++j) pts.at(i, j) = t * dir[j];
    }
    const Tensor coords = project_2d(pts);
    REQUIRE(coords.rows() == n);
    REQUIRE(coords.cols() == 2);
    double var2 = 0.0;
    for (int i = 0; i < n; ++i) var2 += coords.at(i, 1) * coords.at(i, 1);
    CHECK(var2 / n < 1e-9);
    // Largest-magnitude loading (the 12/13 component) is made positive, so
    // the first coordinate recovers t itself.
    for (int i = 0; i < n; ++i)
        CHECK(coords.at(i, 0) == doctest::Approx(static_cast<double>(i - 12)).epsilon(1e-9));
}

TEST_CASE("embedlib: projection of 2-d input preserves pairwise distances") {
    Rng rng(53);
    const int n = 15;
    Tensor pts = Tensor::zeros({n, 2});
    for (double& v : pts.data) v = rng.uniform(-2.0, 2.0);
    const Tensor coords = project_2d(pts);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double dx0 = pts.at(i, 0) - pts.at(j, 0);
            const double dy0 = pts.at(i, 1) - pts.at(j, 1);
            const double dx1 = coords.at(i, 0) - coords.at(j, 0);
            const double dy1 = coords.at(i, 1) - coords.at(j, 1);
            CHECK(std::sqrt(dx1 * dx1 + dy1 * dy1) ==
                  doctest::Approx(std::sqrt(dx0 * dx0 + dy0 * dy0)).epsilon(1e-9));
        }
}

TEST_CASE("embedlib: projection residual equals the trailing eigenvalue sum") {
    Rng rng(54);
    const int n = 40, d = 6;
    Tensor pts = Tensor::zeros({n, d});
    for (double& v : pts.data) v = rng.normal();
    const Tensor coords = project_2d(pts);

    // Centred data and its scatter matrix, computed independently here.
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += pts.at(i, j) / n;
    double total_ss = 0.0;
    Tensor scatter = Tensor::zeros({d, d});
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < d; ++p) {
            const double xp = pts.at(i, p) - mean[static_cast<size_t>(p)];
            total_ss += xp * xp;
            for (int q = 0; q < d; ++q)
                scatter.at(p, q) += xp * (pts.at(i, q) - mean[static_cast<size_t>(q)]);
        }
    const auto [eig, vec] = symmetric_eigen(scatter);
    (void)vec;

    double projected_ss = 0.0;
    for (int i = 0; i < n; ++i)
        projected_ss += coords.at(i, 0) * coords.at(i, 0) + coords.at(i, 1) * coords.at(i, 1);
    const double residual = total_ss - projected_ss;
    double trailing = 0.0;
    for (int c = 2; c < d; ++c) trailing += eig[static_cast<size_t>(c)];
    CHECK(residual == doctest::Approx(trailing).epsilon(1e-6));
    // The projected energy is the top-2 eigenvalue sum.
    CHECK(projected_ss == doctest::Approx(eig[0] + eig[1]).epsilon(1e-6));
}

TEST_CASE("embedlib: projection csv export and validation") {
    const Tensor coords = Tensor::matrix(3, 2, {0.25, -1.5, 3.0, 0.0, -0.125, 2.75});
    const std::vector<std::string> ids = {"g1", "g2", "c1"};
    const std::vector<int> cluster = {0, 1, 1};
    const std::string dir = temp_dir("emb_proj");
    write_projection_csv(ids, coords, cluster, dir + "/projection.csv");

    const CsvFile csv = read_csv(dir + "/projection.csv");
    expect_header(csv, {"region_id", "x", "y", "cluster"}, "projection.csv");
    REQUIRE(csv.rows.size() == 3);
    CHECK(csv.rows[0].fields[0] == "g1");
    CHECK(parse_double_field(csv.rows[0], 1, "x") == doctest::Approx(0.25));
    CHECK(parse_double_field(csv.rows[0], 2, "y") == doctest::Approx(-1.5));
    CHECK(parse_int_field(csv.rows[2], 3, "cluster") == 1);

    CHECK_THROWS_AS(write_projection_csv({"a"}, coords, cluster, dir + "/bad.csv"),
                    invalid_input);
    CHECK_THROWS_AS(write_projection_csv(ids, coords, {0, 1}, dir + "/bad.csv"),
                    invalid_input);

    Tensor one = Tensor::zeros({1, 2});
    CHECK_THROWS_AS(project_2d(one), invalid_input);
    Tensor nonfinite = Tensor::zeros({3, 2});
    nonfinite.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(project_2d(nonfinite), invalid_input);
}
