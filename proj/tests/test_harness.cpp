#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "nlohmann/json.hpp"
#include "ridecast/city.hpp"
#include "ridecast/csvio.hpp"
#include "ridecast/harness.hpp"
#include "ridecast/rng.hpp"
#include "ridecast/synthcity.hpp"
#include "support/test_util.hpp"

using namespace ridecast;

namespace {

std::string temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("ridecast_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos < text.size()) {
        const size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out.push_back(text.substr(pos));
            break;
        }
        out.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        const size_t c = line.find(',', pos);
        if (c == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, c - pos));
        pos = c + 1;
    }
}

// Shared end-to-end fixture: a small synthetic city, a four-week panel, a
// county embedding library, and a pretrained backbone checkpoint on disk.
struct HarnessFixture {
    std::string root;
    ExperimentPaths paths; // out_dir left empty; each test picks its own
    City city;
    SeriesPanel panel;
    ExogenousPanel exo;
    Tensor h; // {counties, 6}
};

HarnessFixture build_fixture() {
    HarnessFixture f;
    f.root = temp_dir("harness_fixture");

    CityConfig cc;
    cc.counties = 4;
    cc.grids_per_county = 3;
    cc.archetype_mix = {1, 1, 1, 1};
    cc.pois_per_grid = 4;
    cc.seed = 7;
    f.city = generate_city(cc);
    f.paths.city_dir = f.root + "/city";
    write_city(f.city, f.paths.city_dir);

    PanelConfig pc;
    pc.weeks = 4;
    pc.seed = 9;
    auto pe = generate_panel(f.city, pc);
    f.paths.panel_csv = f.root + "/panel.csv";
    write_panel_csv(pe.first, pe.second, f.paths.panel_csv);
    // Hold the round-tripped panel so oracles see exactly what the runner reads.
    auto rt = read_panel_csv(f.paths.panel_csv);
    f.panel = std::move(rt.first);
    f.exo = std::move(rt.second);

    std::vector<EmbeddingRecord> recs;
    Rng erng(123);
    for (const std::string& id : f.panel.region_ids) {
        EmbeddingRecord r;
        r.region_id = id;
        r.level = "county";
        for (int j = 0; j < 6; ++j) r.vec.push_back(static_cast<float>(erng.uniform(-1.0, 1.0)));
        recs.push_back(std::move(r));
    }
    EmbeddingRecord g; // a grid-level record must never satisfy county lookups
    g.region_id = f.panel.region_ids[0];
    g.level = "grid";
    for (int j = 0; j < 6; ++j) g.vec.push_back(1.0f);
    recs.push_back(std::move(g));
    f.paths.embeddings_dir = f.root + "/emb";
    save_library(recs, f.paths.embeddings_dir, "v1", "2026-01-01T00:00");

    BackbonePretrainConfig bc;
    bc.spec.layers = 1;
    bc.spec.d = 8;
    bc.spec.heads = 2;
    bc.spec.hidden = 16;
    bc.spec.patch = 48;
    bc.steps = 3;
    bc.seed = 11;
    std::vector<std::vector<double>> corpus;
    for (int w = 0; w < 6; ++w) {
        std::vector<double> win;
        for (int i = 0; i < 96; ++i) win.push_back(f.panel.call.at(w * 48 + i, w % 4));
        corpus.push_back(std::move(win));
    }
    auto pre = pretrain_backbone(corpus, bc);
    f.paths.backbone_dir = f.root + "/backbone";
    save_backbone(pre.backbone, f.paths.backbone_dir);

    f.h = county_embeddings(load_library(f.paths.embeddings_dir), f.panel.region_ids);
    return f;
}

const HarnessFixture& fixture() {
    static HarnessFixture f = build_fixture();
    return f;
}

ExperimentConfig base_config(const std::string& out_dir) {
    const HarnessFixture& f = fixture();
    ExperimentConfig cfg;
    cfg.paths = f.paths;
    cfg.paths.out_dir = out_dir;
    cfg.split = split_by_weeks(2, 1, 1);
    cfg.model.patch = PatchSpec{96, 48, 48, 8};
    cfg.model.heads = 2;
    cfg.model.pool_m = 4;
    cfg.model.pool_kp = 2;
    cfg.model.lora_rank = 1;
    cfg.model.lora_scale = 1.0;
    cfg.model.text_dim = 8;
    cfg.model.h_dim = 6;
    cfg.model.seed = 42;
    cfg.max_steps = 2;
    cfg.batch = 2;
    cfg.eval_every = 1;
    cfg.patience = 5;
    cfg.lr = 1e-3;
    cfg.train_stride = 96;
    cfg.baseline_stride = 48;
    cfg.indicators = {"call"};
    return cfg;
}

} // namespace

TEST_CASE("metrics match the hand examples and a naive-loop oracle") {
    const Tensor y1 = Tensor::row({1.0, 1.0});
    const Tensor p1 = Tensor::row({0.0, 2.0});
    CHECK(wmape(y1, p1) == 1.0);
    CHECK(wmape(y1, y1) == 0.0);

    const Tensor y2 = Tensor::row({1.0, 3.0});
    const Tensor p2 = Tensor::row({2.0, 5.0});
    CHECK(mae(y2, p2) == 1.5);
    CHECK(mae(y2, y2) == 0.0);

    Rng rng(77);
    const Tensor y = testutil::random_tensor(rng, 6, 5, 0.5, 4.0);
    const Tensor p = testutil::random_tensor(rng, 6, 5, -1.0, 5.0);
    std::vector<unsigned char> mask(static_cast<size_t>(y.size()));
    for (auto& b : mask) b = rng.uniform() < 0.6 ? 1 : 0;
    mask[3] = 1; // keep the mask nonempty

    double num = 0.0, den = 0.0, count = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        num += std::fabs(y[i] - p[i]);
        den += std::fabs(y[i]);
        count += 1.0;
    }
    CHECK(std::fabs(wmape(y, p, mask) - num / den) <= 1e-12);
    CHECK(std::fabs(mae(y, p, mask) - num / count) <= 1e-12);

    SUBCASE("scale equivariance and joint-scaling invariance") {
        const double a = 3.25;
        Tensor ya = y, pa = p;
        for (double& v : ya.data) v *= a;
        for (double& v : pa.data) v *= a;
        CHECK(mae(ya, pa) == doctest::Approx(a * mae(y, p)).epsilon(1e-12));
        CHECK(wmape(ya, pa) == doctest::Approx(wmape(y, p)).epsilon(1e-12));
    }
    SUBCASE("degenerate inputs are rejected") {
        const Tensor zeros = Tensor::zeros({2, 2});
        CHECK_THROWS_AS(wmape(zeros, zeros), invalid_input);
        const std::vector<unsigned char> none(static_cast<size_t>(y.size()), 0);
        CHECK_THROWS_AS(mae(y, p, none), invalid_input);
        CHECK_THROWS_AS(wmape(y, p, none), invalid_input);
        CHECK_THROWS_AS(wmape(y1, y2, std::vector<unsigned char>(1, 1)), invalid_input);
        CHECK_THROWS_AS(mae(y1, Tensor::zeros({1, 3})), invalid_input);
        Tensor bad = y1;
        bad.data[0] = std::nan("");
        CHECK_THROWS_AS(wmape(y1, bad), invalid_input);
    }
}

TEST_CASE("split validation enforces order, disjointness, and bounds") {
    const SplitSpec s = split_by_weeks(20, 1, 2);
    CHECK(s.train.begin == 0);
    CHECK(s.train.end == 20 * kStepsPerWeek);
    CHECK(s.val.begin == 20 * kStepsPerWeek);
    CHECK(s.val.end == 21 * kStepsPerWeek);
    CHECK(s.test.begin == 21 * kStepsPerWeek);
    CHECK(s.test.end == 23 * kStepsPerWeek);
    CHECK_NOTHROW(s.validate(23 * kStepsPerWeek));
    CHECK_THROWS_AS(s.validate(23 * kStepsPerWeek - 1), invalid_input);

    SplitSpec gap;
    gap.train = {0, 100};
    gap.val = {150, 200};
    gap.test = {300, 400};
    CHECK_NOTHROW(gap.validate(400)); // ordered but not contiguous is fine

    SplitSpec bad = gap;
    bad.val = {90, 200}; // overlaps train
    CHECK_THROWS_AS(bad.validate(400), invalid_input);
    bad = gap;
    bad.test = {150, 250}; // overlaps val
    CHECK_THROWS_AS(bad.validate(400), invalid_input);
    bad = gap;
    bad.train = {50, 50}; // empty
    CHECK_THROWS_AS(bad.validate(400), invalid_input);
    bad = gap;
    bad.train = {-10, 100};
    CHECK_THROWS_AS(bad.validate(400), invalid_input);

    CHECK_THROWS_AS(split_by_weeks(0, 1, 1), invalid_input);
}

TEST_CASE("effective window mask selects exactly 34 slots per day") {
    const std::int64_t midnight = parse_iso_minutes("2025-01-06T00:00");

    CHECK(in_effective_window(parse_iso_minutes("2025-01-06T06:00")));
    CHECK(in_effective_window(parse_iso_minutes("2025-01-06T22:30")));
    CHECK_FALSE(in_effective_window(parse_iso_minutes("2025-01-06T05:30")));
    CHECK_FALSE(in_effective_window(parse_iso_minutes("2025-01-06T23:00")));
    CHECK(kEvalSlotsPerDay == 34);

    const auto day = effective_window_mask(midnight, kStepsPerDay, 1);
    int on = 0;
    for (auto b : day) on += b;
    CHECK(on == 34);
    CHECK(day[11] == 0); // 05:30
    CHECK(day[12] == 1); // 06:00
    CHECK(day[45] == 1); // 22:30
    CHECK(day[46] == 0); // 23:00

    // Any 48-step span covers one full cycle of slots regardless of phase.
    const auto offset = effective_window_mask(midnight + 6 * 60, kStepsPerDay, 1);
    on = 0;
    for (auto b : offset) on += b;
    CHECK(on == 34);

    const auto week = effective_window_mask(midnight, kStepsPerWeek, 2);
    on = 0;
    for (auto b : week) on += b;
    CHECK(on == 34 * 7 * 2);

    const auto multi = effective_window_mask(midnight, 2, 3);
    CHECK(multi.size() == 6);
    for (size_t i = 0; i < 3; ++i) CHECK(multi[i] == multi[0]); // uniform across regions

    CHECK_THROWS_AS(effective_window_mask(midnight, 0, 1), invalid_input);
    CHECK_THROWS_AS(effective_window_mask(midnight + 7, 4, 1), invalid_input);
}

TEST_CASE("weekly counterpart matches index arithmetic and is exact on periodic panels") {
    Rng rng(31);
    const Tensor series = testutil::random_tensor(rng, 3 * kStepsPerWeek, 3, 1.0, 9.0);

    const int t = 700, T = 48;
    const Tensor pred = weekly_counterpart(series, t, T);
    CHECK(pred.rows() == T);
    CHECK(pred.cols() == 3);
    for (int s = 0; s < T; ++s)
        for (int c = 0; c < 3; ++c) CHECK(pred.at(s, c) == series.at(t + s - kStepsPerWeek, c));

    SUBCASE("exact on a week-periodic panel") {
        Tensor periodic = Tensor::zeros({3 * kStepsPerWeek, 2});
        for (int i = 0; i < periodic.rows(); ++i)
            for (int c = 0; c < 2; ++c)
                periodic.at(i, c) = 5.0 + c + std::sin(2.0 * 3.14159265358979323846 *
                                                       (i % kStepsPerWeek) / 336.0);
        for (int origin : {336, 700, 2 * kStepsPerWeek + 100}) {
            const Tensor hat = weekly_counterpart(periodic, origin, T);
            Tensor truth = Tensor::zeros({T, 2});
            for (int s = 0; s < T; ++s)
                for (int c = 0; c < 2; ++c) truth.at(s, c) = periodic.at(origin + s, c);
            CHECK(wmape(truth, hat) <= 1e-12);
        }
    }
    SUBCASE("a single changed value a week prior moves only the aligned slot") {
        Tensor altered = series;
        altered.at(t - kStepsPerWeek + 5, 1) += 3.0;
        const Tensor base = weekly_counterpart(series, t, T);
        const Tensor moved = weekly_counterpart(altered, t, T);
        for (int s = 0; s < T; ++s)
            for (int c = 0; c < 3; ++c) {
                const double want = (s == 5 && c == 1) ? 3.0 : 0.0;
                CHECK(moved.at(s, c) - base.at(s, c) == want);
            }
    }
    SUBCASE("insufficient history is rejected") {
        CHECK_THROWS_AS(weekly_counterpart(series, kStepsPerWeek - 1, T), invalid_input);
        // The horizon may extend past the recorded series as long as the
        // borrowed week exists; one step beyond that week does not.
        CHECK_NOTHROW(weekly_counterpart(series, 3 * kStepsPerWeek, kStepsPerWeek));
        CHECK_THROWS_AS(weekly_counterpart(series, 3 * kStepsPerWeek, kStepsPerWeek + 1),
                        invalid_input);
        CHECK_THROWS_AS(weekly_counterpart(series, t, 0), invalid_input);
    }
}

TEST_CASE("linear baseline fits constants exactly and noiseless trends to near zero") {
    SUBCASE("constant series predicts the constant") {
        Tensor series = Tensor::zeros({40, 2});
        for (int i = 0; i < 40; ++i) {
            series.at(i, 0) = 5.0;
            series.at(i, 1) = 7.0;
        }
        const LinearBaselineModel m = linear_baseline_train(series, 6, 3, 1e-6, 1);
        const Tensor pred = linear_baseline_predict(m, series, 20);
        CHECK(pred.rows() == 3);
        CHECK(pred.cols() == 2);
        for (int s = 0; s < 3; ++s) {
            CHECK(pred.at(s, 0) == doctest::Approx(5.0).epsilon(1e-9));
            CHECK(pred.at(s, 1) == doctest::Approx(7.0).epsilon(1e-9));
        }
        // The same design without the ridge term is singular.
        CHECK_THROWS_AS(linear_baseline_train(series, 6, 3, 0.0, 1), runtime_failure);
    }
    SUBCASE("noiseless linear trend trains to MAE below 1e-6") {
        Tensor series = Tensor::zeros({60, 2});
        for (int i = 0; i < 60; ++i) {
            series.at(i, 0) = 2.0 + 0.5 * i;
            series.at(i, 1) = 90.0 - 0.2 * i;
        }
        const int L = 6, T = 3;
        const LinearBaselineModel m = linear_baseline_train(series, L, T, 1e-6, 1);
        double err = 0.0;
        int count = 0;
        for (int t = L; t + T <= 60; ++t) {
            const Tensor pred = linear_baseline_predict(m, series, t);
            for (int s = 0; s < T; ++s)
                for (int c = 0; c < 2; ++c) {
                    err += std::fabs(pred.at(s, c) - series.at(t + s, c));
                    ++count;
                }
        }
        CHECK(err / count < 1e-6);
    }
    SUBCASE("coefficients match a hand-solved normal system") {
        // L = 2, T = 1, one region: solve (X^T X + diag(r, r, 0)) w = X^T y
        // by Cramer's rule on the 3x3 system and compare.
        const std::vector<double> vals = {1.0, 2.0, 1.5, 3.0, 2.5, 4.0};
        Tensor series = Tensor::zeros({6, 1});
        for (int i = 0; i < 6; ++i) series.at(i, 0) = vals[static_cast<size_t>(i)];
        const double r = 0.5;
        const LinearBaselineModel m = linear_baseline_train(series, 2, 1, r, 1);

        double A[3][3] = {{r, 0, 0}, {0, r, 0}, {0, 0, 0}};
        double bb[3] = {0, 0, 0};
        for (int t = 2; t + 1 <= 6; ++t) {
            const double x[3] = {series.at(t - 2, 0), series.at(t - 1, 0), 1.0};
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) A[i][j] += x[i] * x[j];
                bb[i] += x[i] * series.at(t, 0);
            }
        }
        auto det3 = [](const double M[3][3]) {
            return M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
                   M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                   M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
        };
        const double den = det3(A);
        for (int i = 0; i < 3; ++i) {
            double Ai[3][3];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) Ai[a][b] = A[a][b];
            for (int a = 0; a < 3; ++a) Ai[a][i] = bb[a];
            const double want = det3(Ai) / den;
            CHECK(m.coef[0].at(i, 0) == doctest::Approx(want).epsilon(1e-10));
        }
    }
    SUBCASE("degenerate inputs are rejected") {
        const Tensor tiny = Tensor::zeros({5, 1});
        CHECK_THROWS_AS(linear_baseline_train(tiny, 4, 2, 1e-6, 1), invalid_input);
        CHECK_THROWS_AS(linear_baseline_train(tiny, 0, 2, 1e-6, 1), invalid_input);
        CHECK_THROWS_AS(linear_baseline_train(tiny, 2, 2, -1.0, 1), invalid_input);
        CHECK_THROWS_AS(linear_baseline_train(tiny, 2, 2, 1e-6, 0), invalid_input);
        Tensor series = Tensor::zeros({40, 1});
        for (int i = 0; i < 40; ++i) series.at(i, 0) = i;
        const LinearBaselineModel m = linear_baseline_train(series, 6, 3, 1e-6, 1);
        CHECK_THROWS_AS(linear_baseline_predict(m, series, 5), invalid_input);
        CHECK_THROWS_AS(linear_baseline_predict(m, Tensor::zeros({40, 2}), 20), invalid_input);
    }
}

TEST_CASE("forecast inputs copy panel blocks and origins respect the lookback") {
    const HarnessFixture& f = fixture();
    const int n = f.panel.regions();
    const int t = 200, L = 96, T = 48;

    const ForecastInput in = make_forecast_input(f.panel, f.exo, f.h, "call", t, L);
    CHECK(in.window.rows() == n);
    CHECK(in.window.cols() == L);
    for (int i = 0; i < L; ++i) {
        const int step = t - L + i;
        CHECK(in.holiday.at(0, i) == static_cast<double>(f.exo.holiday[static_cast<size_t>(step)]));
        for (int c = 0; c < n; ++c) {
            CHECK(in.window.at(c, i) == f.panel.call.at(step, c));
            CHECK(in.rain.at(c, i) == f.exo.rainfall.at(step, c));
            CHECK(in.event.at(c, i) == static_cast<double>(f.exo.event_at(step, c, n)));
        }
    }

    const ForecastSample s = make_forecast_sample(f.panel, f.exo, f.h, "tsh", t, L, T);
    CHECK(s.input.indicator == "tsh");
    for (int i = 0; i < T; ++i)
        for (int c = 0; c < n; ++c) CHECK(s.target.at(c, i) == f.panel.tsh.at(t + i, c));
    for (int c = 0; c < n; ++c) CHECK(s.input.window.at(c, 0) == f.panel.tsh.at(t - L, c));

    SUBCASE("origin enumeration") {
        const std::vector<int> a = sample_origins({0, 672}, 96, 48, 96);
        CHECK(a == std::vector<int>{96, 192, 288, 384, 480, 576});
        const std::vector<int> b = sample_origins({336, 672}, 336, 48, 48);
        CHECK(b == std::vector<int>{336, 384, 432, 480, 528, 576, 624});
        CHECK(sample_origins({0, 80}, 96, 48, 48).empty());
        CHECK_THROWS_AS(sample_origins({0, 672}, 96, 48, 0), invalid_input);
        CHECK_THROWS_AS(sample_origins({100, 100}, 96, 48, 48), invalid_input);
    }
    SUBCASE("bad inputs are rejected") {
        CHECK_THROWS_AS(make_forecast_input(f.panel, f.exo, f.h, "call", 50, 96), invalid_input);
        CHECK_THROWS_AS(make_forecast_input(f.panel, f.exo, f.h, "demand", t, L), invalid_input);
        CHECK_THROWS_AS(make_forecast_input(f.panel, f.exo, Tensor::zeros({3, 6}), "call", t, L),
                        invalid_input);
        CHECK_THROWS_AS(make_forecast_sample(f.panel, f.exo, f.h, "call",
                                             f.panel.steps() - 10, L, T),
                        invalid_input);
    }
}

TEST_CASE("county embedding lookup is order-preserving and level-aware") {
    const HarnessFixture& f = fixture();
    const EmbeddingLibrary lib = load_library(f.paths.embeddings_dir);

    CHECK(f.h.rows() == static_cast<int>(f.panel.region_ids.size()));
    CHECK(f.h.cols() == 6);
    for (size_t r = 0; r < f.panel.region_ids.size(); ++r) {
        const EmbeddingRecord* rec = nullptr;
        for (const auto& cand : lib.records)
            if (cand.level == "county" && cand.region_id == f.panel.region_ids[r]) rec = &cand;
        REQUIRE(rec != nullptr);
        for (int j = 0; j < 6; ++j)
            CHECK(f.h.at(static_cast<int>(r), j) == static_cast<double>(rec->vec[static_cast<size_t>(j)]));
    }

    std::vector<std::string> reversed(f.panel.region_ids.rbegin(), f.panel.region_ids.rend());
    const Tensor hr = county_embeddings(lib, reversed);
    for (int r = 0; r < f.h.rows(); ++r)
        for (int j = 0; j < 6; ++j) CHECK(hr.at(f.h.rows() - 1 - r, j) == f.h.at(r, j));

    CHECK_THROWS_AS(county_embeddings(lib, {"no-such-county"}), runtime_failure);

    // A record present only at grid level must not satisfy a county lookup.
    const std::string dir = temp_dir("harness_gridonly");
    std::vector<EmbeddingRecord> recs;
    EmbeddingRecord g;
    g.region_id = "cX";
    g.level = "grid";
    g.vec = {1.0f, 2.0f};
    recs.push_back(g);
    save_library(recs, dir, "v1", "2026-01-01T00:00");
    CHECK_THROWS_AS(county_embeddings(load_library(dir), {"cX"}), runtime_failure);
}

TEST_CASE("experiment run produces a traceable report") {
    const HarnessFixture& f = fixture();
    const std::string out = temp_dir("harness_run_a");
    ExperimentConfig cfg = base_config(out);
    cfg.indicators = {"call", "tsh"};

    const Report rep = run_experiment(cfg);

    CHECK(rep.label == "full");
    CHECK(rep.seed == 42);
    CHECK(rep.toggles.prompt);
    CHECK(rep.toggles.lora);
    CHECK(rep.toggles.events);
    CHECK(rep.wall_seconds > 0.0);
    CHECK(rep.region_ids == f.panel.region_ids);
    REQUIRE(rep.indicators.size() == 2);

    const int n = f.panel.regions();
    const IndicatorReport& call = rep.indicators[0];
    CHECK(call.indicator == "call");
    CHECK(call.origins == 7);
    CHECK(call.masked_points == 7 * 34 * n);
    REQUIRE(call.model.county_wmape.size() == static_cast<size_t>(n));
    REQUIRE(call.weekly.county_mae.size() == static_cast<size_t>(n));

    SUBCASE("weekly counterpart cell matches a naive index-arithmetic recomputation") {
        double num = 0.0, den = 0.0, cnt = 0.0;
        std::vector<double> cnum(static_cast<size_t>(n)), cden(static_cast<size_t>(n));
        for (int o = 0; o < 7; ++o) {
            const int t = cfg.split.test.begin + o * kStepsPerDay;
            for (int s = 0; s < 48; ++s) {
                if (!in_effective_window(f.panel.minutes_at(t + s))) continue;
                for (int c = 0; c < n; ++c) {
                    const double y = f.panel.call.at(t + s, c);
                    const double hat = f.panel.call.at(t + s - kStepsPerWeek, c);
                    num += std::fabs(y - hat);
                    den += std::fabs(y);
                    cnt += 1.0;
                    cnum[static_cast<size_t>(c)] += std::fabs(y - hat);
                    cden[static_cast<size_t>(c)] += std::fabs(y);
                }
            }
        }
        CHECK(call.weekly.wmape == doctest::Approx(num / den).epsilon(1e-12));
        CHECK(call.weekly.mae == doctest::Approx(num / cnt).epsilon(1e-12));
        for (int c = 0; c < n; ++c)
            CHECK(call.weekly.county_wmape[static_cast<size_t>(c)] ==
                  doctest::Approx(cnum[static_cast<size_t>(c)] / cden[static_cast<size_t>(c)])
                      .epsilon(1e-12));
    }

    SUBCASE("metric cells trace to stored prediction files") {
        namespace fs = std::filesystem;
        for (const IndicatorReport& ir : rep.indicators)
            for (const MetricCell* cell : {&ir.model, &ir.weekly, &ir.linear}) {
                CHECK_FALSE(cell->predictions_file.empty());
                CHECK(fs::exists(fs::path(out) / cell->predictions_file));
            }
        CHECK(fs::exists(fs::path(out) / "report.json"));
        CHECK(fs::exists(fs::path(out) / "report.csv"));
        CHECK(fs::exists(fs::path(out) / "predictions.csv"));
        CHECK(fs::exists(fs::path(out) / "series_export.csv"));
        CHECK(fs::exists(fs::path(out) / "config.json"));

        // Recompute the pooled model WMAPE from the stored file alone.
        const auto lines = split_lines(read_text_file(out + "/" + call.model.predictions_file));
        REQUIRE(lines.size() == 1 + static_cast<size_t>(7 * 48 * n));
        CHECK(lines[0] == "timestamp,region_id,indicator,prediction");
        double num = 0.0, den = 0.0;
        for (int o = 0; o < 7; ++o) {
            const int t = cfg.split.test.begin + o * kStepsPerDay;
            for (int s = 0; s < 48; ++s) {
                if (!in_effective_window(f.panel.minutes_at(t + s))) continue;
                for (int c = 0; c < n; ++c) {
                    const size_t row = 1 + static_cast<size_t>((o * 48 + s) * n + c);
                    const auto fields = split_fields(lines[row]);
                    REQUIRE(fields.size() == 4);
                    CHECK(fields[0] == format_iso_minutes(f.panel.minutes_at(t + s)));
                    CHECK(fields[1] == f.panel.region_ids[static_cast<size_t>(c)]);
                    CHECK(fields[2] == "call");
                    const double y = f.panel.call.at(t + s, c);
                    num += std::fabs(y - std::stod(fields[3]));
                    den += std::fabs(y);
                }
            }
        }
        CHECK(call.model.wmape == doctest::Approx(num / den).epsilon(1e-6));
    }

    SUBCASE("report json and csv round-trip the cells") {
        const nlohmann::json j = nlohmann::json::parse(read_text_file(out + "/report.json"));
        CHECK(j.at("label") == "full");
        CHECK(j.at("seed") == 42);
        CHECK(j.at("toggles").at("events") == true);
        REQUIRE(j.at("indicators").size() == 2);
        CHECK(j.at("indicators")[0].at("model").at("wmape").get<double>() == call.model.wmape);
        CHECK(j.at("indicators")[0].at("weekly").at("county_wmape").size() ==
              static_cast<size_t>(n));

        const auto lines = split_lines(read_text_file(out + "/report.csv"));
        CHECK(lines[0] == "label,indicator,category,scope,wmape,mae,predictions_file");
        CHECK(lines.size() == 1 + 2 * 3 * (1 + static_cast<size_t>(n)));
        CHECK(contains(lines[1], "full,call,model,pooled,"));
    }

    SUBCASE("series export covers the test range with truth, rain, and weekend flags") {
        const auto lines = split_lines(read_text_file(out + "/series_export.csv"));
        CHECK(lines[0] == "timestamp,region_id,indicator,truth,prediction,rainfall_mm,weekend");
        REQUIRE(lines.size() == 1 + 2 * static_cast<size_t>(7 * 48 * n));
        const auto first = split_fields(lines[1]);
        REQUIRE(first.size() == 7);
        const std::int64_t t0 = f.panel.minutes_at(cfg.split.test.begin);
        CHECK(first[0] == format_iso_minutes(t0));
        CHECK(first[1] == f.panel.region_ids[0]);
        CHECK(first[2] == "call");
        CHECK(std::stod(first[3]) ==
              doctest::Approx(f.panel.call.at(cfg.split.test.begin, 0)).epsilon(1e-7));
        // The panel starts on a Sunday, so the test range does too.
        CHECK(weekday_of(t0) == 6);
        CHECK(first[6] == "1");
        // Monday rows carry a zero weekend flag.
        const auto monday = split_fields(lines[1 + static_cast<size_t>(48 * n)]);
        CHECK(weekday_of(parse_iso_minutes(monday[0])) == 0);
        CHECK(monday[6] == "0");
    }
}

TEST_CASE("reports are bit-for-bit reproducible for a fixed seed") {
    ExperimentConfig cfg_b = base_config(temp_dir("harness_run_b"));
    ExperimentConfig cfg_c = base_config(temp_dir("harness_run_c"));

    const Report rb = run_experiment(cfg_b);
    const Report rc = run_experiment(cfg_c);

    CHECK(rb.config_hash == rc.config_hash); // out_dir does not enter the hash
    CHECK(report_signature(rb) == report_signature(rc));
    REQUIRE(rb.indicators.size() == 1);
    CHECK(rb.indicators[0].model.wmape == rc.indicators[0].model.wmape);
    CHECK(rb.indicators[0].model.mae == rc.indicators[0].model.mae);
    CHECK(rb.indicators[0].best_round == rc.indicators[0].best_round);

    SUBCASE("config hash reacts to toggles but signatures ignore the wall clock") {
        const std::string cj = config_canonical_json(cfg_b, ExperimentToggles{});
        CHECK_FALSE(contains(cj, "out_dir"));
        ExperimentToggles off;
        off.events = false;
        CHECK(config_canonical_json(cfg_b, off) != cj);
        CHECK(fnv1a64_hex(config_canonical_json(cfg_b, off)) != rb.config_hash);

        Report shifted = rb;
        shifted.wall_seconds = rb.wall_seconds + 10.0;
        CHECK(report_signature(shifted) == report_signature(rb));
    }
}

TEST_CASE("ablation runs the four variants side by side") {
    namespace fs = std::filesystem;
    const std::string out = temp_dir("harness_ablate");
    const ExperimentConfig cfg = base_config(out);

    const std::vector<Report> reports = ablate(cfg);
    REQUIRE(reports.size() == 4);
    CHECK(reports[0].label == "full");
    CHECK(reports[1].label == "pgn_off");
    CHECK(reports[2].label == "lora_off");
    CHECK(reports[3].label == "ev_off");
    CHECK_FALSE(reports[1].toggles.prompt);
    CHECK(reports[1].toggles.lora);
    CHECK_FALSE(reports[2].toggles.lora);
    CHECK_FALSE(reports[3].toggles.events);
    for (const char* label : {"full", "pgn_off", "lora_off", "ev_off"})
        CHECK(fs::exists(fs::path(out) / label / "report.json"));

    const auto lines = split_lines(read_text_file(out + "/ablation.csv"));
    CHECK(lines[0] == "label,indicator,wmape,mae");
    CHECK(lines.size() == 5);
    CHECK(contains(lines[1], "full,call,"));
    CHECK(contains(lines[4], "ev_off,call,"));

    // The no-toggle variant reproduces a plain run of the same config.
    const Report direct = run_experiment(base_config(temp_dir("harness_ablate_direct")));
    CHECK(report_signature(reports[0]) == report_signature(direct));

    // Each disabled stage changes the config hash.
    CHECK(reports[1].config_hash != reports[0].config_hash);
    CHECK(reports[2].config_hash != reports[0].config_hash);
    CHECK(reports[3].config_hash != reports[0].config_hash);
}

TEST_CASE("missing artifacts abort before any training") {
    namespace fs = std::filesystem;

    SUBCASE("missing backbone checkpoint") {
        const std::string out =
            (fs::temp_directory_path() / "ridecast_test_harness_missing_a").string();
        fs::remove_all(out);
        ExperimentConfig cfg = base_config(out);
        cfg.paths.backbone_dir = fixture().root + "/no-such-backbone";
        CHECK_THROWS_AS(run_experiment(cfg), runtime_failure);
        CHECK_FALSE(fs::exists(out)); // aborted before anything was written
    }
    SUBCASE("missing panel file") {
        ExperimentConfig cfg = base_config(temp_dir("harness_missing_b"));
        cfg.paths.panel_csv = fixture().root + "/no-such-panel.csv";
        CHECK_THROWS_AS(run_experiment(cfg), runtime_failure);
    }
    SUBCASE("missing embedding library") {
        ExperimentConfig cfg = base_config(temp_dir("harness_missing_c"));
        cfg.paths.embeddings_dir = fixture().root + "/no-such-library";
        CHECK_THROWS_AS(run_experiment(cfg), runtime_failure);
    }
    SUBCASE("missing city directory") {
        ExperimentConfig cfg = base_config(temp_dir("harness_missing_d"));
        cfg.paths.city_dir = fixture().root + "/no-such-city";
        CHECK_THROWS_AS(run_experiment(cfg), runtime_failure);
    }
    SUBCASE("dimension mismatches are rejected up front") {
        ExperimentConfig cfg = base_config(temp_dir("harness_missing_e"));
        cfg.model.h_dim = 5;
        CHECK_THROWS_AS(run_experiment(cfg), invalid_input);
        cfg = base_config(temp_dir("harness_missing_f"));
        cfg.model.patch.d = 16;
        CHECK_THROWS_AS(run_experiment(cfg), invalid_input);
        cfg = base_config(temp_dir("harness_missing_g"));
        cfg.split = split_by_weeks(3, 1, 1); // five weeks against a four-week panel
        CHECK_THROWS_AS(run_experiment(cfg), invalid_input);
        cfg = base_config(temp_dir("harness_missing_h"));
        cfg.indicators = {"demand"};
        CHECK_THROWS_AS(run_experiment(cfg), invalid_input);
    }
}

TEST_CASE("report and series writers emit the documented formats") {
    Report r;
    r.label = "full";
    r.config_hash = "00ff00ff00ff00ff";
    r.seed = 7;
    r.region_ids = {"c00", "c01"};
    IndicatorReport ir;
    ir.indicator = "call";
    ir.origins = 2;
    ir.masked_points = 136;
    ir.best_round = 1;
    ir.model = {0.25, 1.5, {0.2, 0.3}, {1.0, 2.0}, "m.csv"};
    ir.weekly = {0.5, 3.0, {0.4, 0.6}, {2.0, 4.0}, "w.csv"};
    ir.linear = {0.75, 4.5, {0.7, 0.8}, {3.0, 6.0}, "l.csv"};
    r.indicators.push_back(ir);

    const std::string dir = temp_dir("harness_writers");
    write_report_json(r, dir + "/report.json");
    const nlohmann::json j = nlohmann::json::parse(read_text_file(dir + "/report.json"));
    CHECK(j.at("config_hash") == "00ff00ff00ff00ff");
    CHECK(j.at("indicators")[0].at("linear").at("mae").get<double>() == 4.5);
    CHECK(j.at("indicators")[0].at("model").at("county_wmape")[1].get<double>() == 0.3);
    CHECK(j.at("indicators")[0].at("weekly").at("predictions_file") == "w.csv");

    write_report_csv(r, dir + "/report.csv");
    const auto lines = split_lines(read_text_file(dir + "/report.csv"));
    REQUIRE(lines.size() == 1 + 3 * 3);
    CHECK(lines[0] == "label,indicator,category,scope,wmape,mae,predictions_file");
    CHECK(lines[1] == "full,call,model,pooled,0.25,1.5,m.csv");
    CHECK(lines[2] == "full,call,model,c00,0.2,1,m.csv");
    CHECK(lines[4] == "full,call,weekly_counterpart,pooled,0.5,3,w.csv");

    Report r2 = r;
    r2.label = "ev_off";
    write_ablation_csv({r, r2}, dir + "/ablation.csv");
    const auto ab = split_lines(read_text_file(dir + "/ablation.csv"));
    REQUIRE(ab.size() == 3);
    CHECK(ab[1] == "full,call,0.25,1.5");
    CHECK(ab[2] == "ev_off,call,0.25,1.5");

    SUBCASE("series export golden rows") {
        const std::vector<std::int64_t> ts = {parse_iso_minutes("2025-01-04T10:00"),
                                              parse_iso_minutes("2025-01-06T10:00")};
        const Tensor truth = Tensor::matrix(2, 1, {1.0, 2.0});
        const Tensor pred = Tensor::matrix(2, 1, {2.0, 1.75});
        const Tensor rain = Tensor::matrix(2, 1, {0.5, 0.0});
        write_series_export_csv(dir + "/series.csv", ts, {"r0"}, "call", truth, pred, rain);
        const auto rows = split_lines(read_text_file(dir + "/series.csv"));
        REQUIRE(rows.size() == 3);
        CHECK(rows[0] == "timestamp,region_id,indicator,truth,prediction,rainfall_mm,weekend");
        CHECK(rows[1] == "2025-01-04T10:00:00,r0,call,1,2,0.5,1");  // Saturday
        CHECK(rows[2] == "2025-01-06T10:00:00,r0,call,2,1.75,0,0"); // Monday
        CHECK_THROWS_AS(write_series_export_csv(dir + "/bad.csv", ts, {"r0"}, "call", truth,
                                                Tensor::zeros({1, 1}), rain),
                        invalid_input);
    }
}
