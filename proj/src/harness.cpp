#include "ridecast/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "ridecast/city.hpp"
#include "ridecast/csvio.hpp"

namespace ridecast {

namespace fs = std::filesystem;

namespace {

// Shortest decimal form that parses back to the same double.
std::string fmt_full(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    ensure(res.ec == std::errc(), "fmt_full: conversion failed");
    return std::string(buf, res.ptr);
}

std::string join_full(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += fmt_full(v[i]);
    }
    return out;
}

} // namespace

// ---- splits ------------------------------------------------------------------

void SplitSpec::validate(int panel_steps) const {
    require(train.begin >= 0 && train.begin < train.end, "split: train range empty or negative");
    require(val.begin < val.end, "split: val range empty");
    require(test.begin < test.end, "split: test range empty");
    require(train.end <= val.begin, "split: train must precede val");
    require(val.end <= test.begin, "split: val must precede test");
    require(test.end <= panel_steps, "split: test range exceeds the panel");
}

SplitSpec split_by_weeks(int train_weeks, int val_weeks, int test_weeks) {
    require(train_weeks >= 1 && val_weeks >= 1 && test_weeks >= 1,
            "split_by_weeks: each split needs at least one week");
    SplitSpec s;
    s.train = {0, train_weeks * kStepsPerWeek};
    s.val = {s.train.end, s.train.end + val_weeks * kStepsPerWeek};
    s.test = {s.val.end, s.val.end + test_weeks * kStepsPerWeek};
    return s;
}

// ---- effective evaluation window ----------------------------------------------

bool in_effective_window(std::int64_t minutes) {
    const int slot = slot_of_day(minutes);
    return slot >= kEvalStartSlot && slot <= kEvalEndSlot;
}

std::vector<unsigned char> effective_window_mask(std::int64_t start_minutes, int steps,
                                                 int regions) {
    require(steps >= 1 && regions >= 1, "effective_window_mask: sizes must be positive");
    require(half_hour_aligned(start_minutes), "effective_window_mask: unaligned start");
    std::vector<unsigned char> mask(static_cast<size_t>(steps) * static_cast<size_t>(regions));
    for (int i = 0; i < steps; ++i) {
        const unsigned char on = in_effective_window(start_minutes + i * kStepMinutes) ? 1 : 0;
        for (int c = 0; c < regions; ++c)
            mask[static_cast<size_t>(i) * static_cast<size_t>(regions) +
                 static_cast<size_t>(c)] = on;
    }
    return mask;
}

// ---- baselines -----------------------------------------------------------------

Tensor weekly_counterpart(const Tensor& series, int t, int horizon) {
    require(series.ndim() == 2, "weekly_counterpart: series must be {steps, regions}");
    require(horizon >= 1, "weekly_counterpart: horizon must be positive");
    require(t >= kStepsPerWeek, "weekly_counterpart: need a full week of history");
    require(t + horizon - kStepsPerWeek <= series.rows(),
            "weekly_counterpart: series too short for this origin");
    const int n = series.cols();
    Tensor out = Tensor::zeros({horizon, n});
    for (int s = 0; s < horizon; ++s)
        for (int c = 0; c < n; ++c) out.at(s, c) = series.at(t + s - kStepsPerWeek, c);
    return out;
}

namespace {

// Solves A X = B for SPD A in place; A is {m, m} row-major, B is {m, k}.
void cholesky_solve(std::vector<double>& a, std::vector<double>& b, int m, int k) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[static_cast<size_t>(i) * m + j];
            for (int p = 0; p < j; ++p)
                sum -= a[static_cast<size_t>(i) * m + p] * a[static_cast<size_t>(j) * m + p];
            if (i == j) {
                ensure(sum > 0.0, "linear baseline: singular design; increase the ridge term");
                a[static_cast<size_t>(i) * m + j] = std::sqrt(sum);
            } else {
                a[static_cast<size_t>(i) * m + j] = sum / a[static_cast<size_t>(j) * m + j];
            }
        }
    }
    for (int col = 0; col < k; ++col) {
        for (int i = 0; i < m; ++i) { // forward: L y = b
            double sum = b[static_cast<size_t>(i) * k + col];
            for (int p = 0; p < i; ++p)
                sum -= a[static_cast<size_t>(i) * m + p] * b[static_cast<size_t>(p) * k + col];
            b[static_cast<size_t>(i) * k + col] = sum / a[static_cast<size_t>(i) * m + i];
        }
        for (int i = m - 1; i >= 0; --i) { // backward: L^T x = y
            double sum = b[static_cast<size_t>(i) * k + col];
            for (int p = i + 1; p < m; ++p)
                sum -= a[static_cast<size_t>(p) * m + i] * b[static_cast<size_t>(p) * k + col];
            b[static_cast<size_t>(i) * k + col] = sum / a[static_cast<size_t>(i) * m + i];
        }
    }
}

} // namespace

LinearBaselineModel linear_baseline_train(const Tensor& series, int lookback, int horizon,
                                          double ridge, int stride) {
    require(series.ndim() == 2, "linear baseline: series must be {steps, regions}");
    require(lookback >= 1 && horizon >= 1, "linear baseline: window sizes must be positive");
    require(ridge >= 0.0, "linear baseline: ridge must be nonnegative");
    require(stride >= 1, "linear baseline: stride must be positive");
    const int steps = series.rows();
    const int n = series.cols();
    require(steps >= lookback + horizon, "linear baseline: no training windows available");
    require(series.all_finite(), "linear baseline: series has non-finite values");

    std::vector<int> origins;
    for (int t = lookback; t + horizon <= steps; t += stride) origins.push_back(t);

    const int m = lookback + 1; // window features plus intercept
    LinearBaselineModel model;
    model.lookback = lookback;
    model.horizon = horizon;
    model.ridge = ridge;
    model.coef.reserve(static_cast<size_t>(n));

    std::vector<double> x(static_cast<size_t>(m));
    for (int c = 0; c < n; ++c) {
        std::vector<double> a(static_cast<size_t>(m) * static_cast<size_t>(m), 0.0);
        std::vector<double> b(static_cast<size_t>(m) * static_cast<size_t>(horizon), 0.0);
        for (int t : origins) {
            for (int i = 0; i < lookback; ++i) x[static_cast<size_t>(i)] = series.at(t - lookback + i, c);
            x[static_cast<size_t>(lookback)] = 1.0;
            for (int i = 0; i < m; ++i) {
                const double xi = x[static_cast<size_t>(i)];
                if (xi == 0.0) continue;
                for (int j = 0; j <= i; ++j)
                    a[static_cast<size_t>(i) * m + j] += xi * x[static_cast<size_t>(j)];
                for (int s = 0; s < horizon; ++s)
                    b[static_cast<size_t>(i) * horizon + s] += xi * series.at(t + s, c);
            }
        }
        for (int i = 0; i < m; ++i) // mirror the lower triangle
            for (int j = i + 1; j < m; ++j)
                a[static_cast<size_t>(i) * m + j] = a[static_cast<size_t>(j) * m + i];
        for (int i = 0; i < lookback; ++i) // intercept left unpenalized
            a[static_cast<size_t>(i) * m + i] += ridge;
        cholesky_solve(a, b, m, horizon);
        model.coef.push_back(Tensor({m, horizon}, std::move(b)));
    }
    return model;
}

Tensor linear_baseline_predict(const LinearBaselineModel& m, const Tensor& series, int t) {
    require(series.ndim() == 2, "linear baseline: series must be {steps, regions}");
    const int n = series.cols();
    require(static_cast<int>(m.coef.size()) == n, "linear baseline: region count mismatch");
    require(t >= m.lookback && t <= series.rows(),
            "linear baseline: window out of range for this origin");
    Tensor out = Tensor::zeros({m.horizon, n});
    for (int c = 0; c < n; ++c) {
        const Tensor& w = m.coef[static_cast<size_t>(c)];
        for (int s = 0; s < m.horizon; ++s) {
            double acc = w.at(m.lookback, s);
            for (int i = 0; i < m.lookback; ++i)
                acc += series.at(t - m.lookback + i, c) * w.at(i, s);
            out.at(s, c) = acc;
        }
    }
    return out;
}

// ---- experiment assembly ----------------------------------------------------------

ForecastInput make_forecast_input(const SeriesPanel& panel, const ExogenousPanel& exo,
                                  const Tensor& h, const std::string& indicator, int t,
                                  int lookback) {
    require(indicator == "call" || indicator == "tsh",
            "make_forecast_input: indicator must be call or tsh");
    const int n = panel.regions();
    const int steps = panel.steps();
    require(lookback >= 1, "make_forecast_input: lookback must be positive");
    require(t >= lookback && t <= steps, "make_forecast_input: lookback out of range");
    require(exo.rainfall.rows() == steps && exo.rainfall.cols() == n,
            "make_forecast_input: rainfall shape mismatch");
    require(static_cast<int>(exo.holiday.size()) == steps,
            "make_forecast_input: holiday length mismatch");
    require(static_cast<int>(exo.event.size()) == steps * n,
            "make_forecast_input: event length mismatch");
    require(h.ndim() == 2 && h.rows() == n, "make_forecast_input: embedding rows mismatch");

    const Tensor& src = indicator == "call" ? panel.call : panel.tsh;
    ForecastInput in;
    in.indicator = indicator;
    in.window = Tensor::zeros({n, lookback});
    in.rain = Tensor::zeros({n, lookback});
    in.event = Tensor::zeros({n, lookback});
    in.holiday = Tensor::zeros({1, lookback});
    in.h = h;
    for (int i = 0; i < lookback; ++i) {
        const int step = t - lookback + i;
        in.holiday.at(0, i) = static_cast<double>(exo.holiday[static_cast<size_t>(step)]);
        for (int c = 0; c < n; ++c) {
            in.window.at(c, i) = src.at(step, c);
            in.rain.at(c, i) = exo.rainfall.at(step, c);
            in.event.at(c, i) = static_cast<double>(exo.event_at(step, c, n));
        }
    }
    return in;
}

ForecastSample make_forecast_sample(const SeriesPanel& panel, const ExogenousPanel& exo,
                                    const Tensor& h, const std::string& indicator, int t,
                                    int lookback, int horizon) {
    require(horizon >= 1, "make_forecast_sample: horizon must be positive");
    require(t + horizon <= panel.steps(), "make_forecast_sample: horizon out of range");
    ForecastSample s;
    s.input = make_forecast_input(panel, exo, h, indicator, t, lookback);
    const Tensor& src = indicator == "call" ? panel.call : panel.tsh;
    const int n = panel.regions();
    s.target = Tensor::zeros({n, horizon});
    for (int i = 0; i < horizon; ++i)
        for (int c = 0; c < n; ++c) s.target.at(c, i) = src.at(t + i, c);
    return s;
}

std::vector<int> sample_origins(const StepRange& range, int lookback, int horizon,
                                int stride) {
    require(lookback >= 1 && horizon >= 1, "sample_origins: window sizes must be positive");
    require(stride >= 1, "sample_origins: stride must be positive");
    require(range.begin >= 0 && range.begin < range.end, "sample_origins: bad range");
    std::vector<int> out;
    for (int t = range.begin; t + horizon <= range.end; t += stride)
        if (t >= lookback) out.push_back(t);
    return out;
}

Tensor county_embeddings(const EmbeddingLibrary& lib,
                         const std::vector<std::string>& region_ids) {
    require(!region_ids.empty(), "county_embeddings: no regions requested");
    const int d = lib.manifest.dimension;
    Tensor out = Tensor::zeros({static_cast<int>(region_ids.size()), d});
    for (size_t r = 0; r < region_ids.size(); ++r) {
        const EmbeddingRecord* hit = nullptr;
        for (const EmbeddingRecord& rec : lib.records)
            if (rec.level == "county" && rec.region_id == region_ids[r]) {
                hit = &rec;
                break;
            }
        ensure(hit != nullptr,
               "county_embeddings: no county vector for region " + region_ids[r]);
        for (int j = 0; j < d; ++j)
            out.at(static_cast<int>(r), j) = static_cast<double>(hit->vec[static_cast<size_t>(j)]);
    }
    return out;
}

// ---- reports -----------------------------------------------------------------------

std::string config_canonical_json(const ExperimentConfig& cfg,
                                  const ExperimentToggles& toggles) {
    ForecasterConfig mc = cfg.model;
    mc.use_prompt = mc.use_prompt && toggles.prompt;
    mc.use_lora = mc.use_lora && toggles.lora;
    mc.use_events = mc.use_events && toggles.events;
    nlohmann::json j;
    // out_dir intentionally omitted: the metrics do not depend on where the
    // run writes its files.
    j["paths"] = {{"city_dir", cfg.paths.city_dir},
                  {"panel_csv", cfg.paths.panel_csv},
                  {"embeddings_dir", cfg.paths.embeddings_dir},
                  {"backbone_dir", cfg.paths.backbone_dir}};
    j["split"] = {{"train", {cfg.split.train.begin, cfg.split.train.end}},
                  {"val", {cfg.split.val.begin, cfg.split.val.end}},
                  {"test", {cfg.split.test.begin, cfg.split.test.end}}};
    j["model"] = {{"lookback", mc.patch.lookback},
                  {"horizon", mc.patch.horizon},
                  {"patch", mc.patch.patch},
                  {"d", mc.patch.d},
                  {"heads", mc.heads},
                  {"pool_m", mc.pool_m},
                  {"pool_kp", mc.pool_kp},
                  {"lora_rank", mc.lora_rank},
                  {"lora_scale", mc.lora_scale},
                  {"text_dim", mc.text_dim},
                  {"h_dim", mc.h_dim},
                  {"use_prompt", mc.use_prompt},
                  {"use_lora", mc.use_lora},
                  {"use_events", mc.use_events},
                  {"seed", mc.seed}};
    j["train"] = {{"max_steps", cfg.max_steps},
                  {"batch", cfg.batch},
                  {"eval_every", cfg.eval_every},
                  {"patience", cfg.patience},
                  {"lr", cfg.lr},
                  {"train_stride", cfg.train_stride}};
    j["baseline"] = {{"stride", cfg.baseline_stride}, {"ridge", cfg.ridge}};
    j["indicators"] = cfg.indicators;
    return j.dump();
}

namespace {

void append_cell_signature(std::string& out, const std::string& name, const MetricCell& c) {
    out += name + " wmape=" + fmt_full(c.wmape) + " mae=" + fmt_full(c.mae) +
           " file=" + c.predictions_file + "\n";
    out += name + " county_wmape=" + join_full(c.county_wmape) + "\n";
    out += name + " county_mae=" + join_full(c.county_mae) + "\n";
}

} // namespace

std::string report_signature(const Report& r) {
    std::string out;
    out += "label=" + r.label + "\n";
    out += "config=" + r.config_hash + "\n";
    out += "seed=" + std::to_string(r.seed) + "\n";
    out += std::string("toggles=") + (r.toggles.prompt ? "1" : "0") +
           (r.toggles.lora ? "1" : "0") + (r.toggles.events ? "1" : "0") + "\n";
    out += "regions=";
    for (size_t i = 0; i < r.region_ids.size(); ++i) {
        if (i) out += ';';
        out += r.region_ids[i];
    }
    out += "\n";
    for (const IndicatorReport& ir : r.indicators) {
        out += "indicator=" + ir.indicator + " origins=" + std::to_string(ir.origins) +
               " masked=" + std::to_string(ir.masked_points) +
               " best_round=" + std::to_string(ir.best_round) + "\n";
        append_cell_signature(out, "model", ir.model);
        append_cell_signature(out, "weekly", ir.weekly);
        append_cell_signature(out, "linear", ir.linear);
    }
    return out;
}

namespace {

nlohmann::json cell_json(const MetricCell& c) {
    return nlohmann::json{{"wmape", c.wmape},
                          {"mae", c.mae},
                          {"county_wmape", c.county_wmape},
                          {"county_mae", c.county_mae},
                          {"predictions_file", c.predictions_file}};
}

void append_report_rows(std::string& out, const Report& r, const IndicatorReport& ir,
                        const std::string& category, const MetricCell& c) {
    out += r.label + "," + ir.indicator + "," + category + ",pooled," + fmt_full(c.wmape) +
           "," + fmt_full(c.mae) + "," + c.predictions_file + "\n";
    for (size_t i = 0; i < r.region_ids.size(); ++i)
        out += r.label + "," + ir.indicator + "," + category + "," + r.region_ids[i] + "," +
               fmt_full(c.county_wmape[i]) + "," + fmt_full(c.county_mae[i]) + "," +
               c.predictions_file + "\n";
}

} // namespace

void write_report_json(const Report& r, const std::string& path) {
    nlohmann::json j;
    j["label"] = r.label;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["toggles"] = {{"prompt", r.toggles.prompt},
                    {"lora", r.toggles.lora},
                    {"events", r.toggles.events}};
    j["wall_seconds"] = r.wall_seconds;
    j["regions"] = r.region_ids;
    j["indicators"] = nlohmann::json::array();
    for (const IndicatorReport& ir : r.indicators)
        j["indicators"].push_back({{"indicator", ir.indicator},
                                   {"origins", ir.origins},
                                   {"masked_points", ir.masked_points},
                                   {"best_round", ir.best_round},
                                   {"model", cell_json(ir.model)},
                                   {"weekly", cell_json(ir.weekly)},
                                   {"linear", cell_json(ir.linear)}});
    write_text_file(path, j.dump(2) + "\n");
}

void write_report_csv(const Report& r, const std::string& path) {
    std::string out = "label,indicator,category,scope,wmape,mae,predictions_file\n";
    for (const IndicatorReport& ir : r.indicators) {
        append_report_rows(out, r, ir, "model", ir.model);
        append_report_rows(out, r, ir, "weekly_counterpart", ir.weekly);
        append_report_rows(out, r, ir, "linear_baseline", ir.linear);
    }
    write_text_file(path, out);
}

void write_ablation_csv(const std::vector<Report>& reports, const std::string& path) {
    require(!reports.empty(), "write_ablation_csv: no reports");
    std::string out = "label,indicator,wmape,mae\n";
    for (const Report& r : reports)
        for (const IndicatorReport& ir : r.indicators)
            out += r.label + "," + ir.indicator + "," + fmt_full(ir.model.wmape) + "," +
                   fmt_full(ir.model.mae) + "\n";
    write_text_file(path, out);
}

namespace {

void append_series_rows(std::string& out, const std::vector<std::int64_t>& timestamps,
                        const std::vector<std::string>& region_ids,
                        const std::string& indicator, const Tensor& truth, const Tensor& pred,
                        const Tensor& rainfall) {
    const int steps = static_cast<int>(timestamps.size());
    const int n = static_cast<int>(region_ids.size());
    require(truth.ndim() == 2 && truth.rows() == steps && truth.cols() == n,
            "series export: truth shape mismatch");
    require(pred.same_shape(truth) && rainfall.same_shape(truth),
            "series export: prediction/rainfall shape mismatch");
    char buf[128];
    for (int i = 0; i < steps; ++i) {
        const int weekend = weekday_of(timestamps[static_cast<size_t>(i)]) >= 5 ? 1 : 0;
        for (int c = 0; c < n; ++c) {
            std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,%.9g,%d", truth.at(i, c),
                          pred.at(i, c), rainfall.at(i, c), weekend);
            out += format_iso_minutes(timestamps[static_cast<size_t>(i)]) + "," +
                   region_ids[static_cast<size_t>(c)] + "," + indicator + buf + "\n";
        }
    }
}

} // namespace

void write_series_export_csv(const std::string& path,
                             const std::vector<std::int64_t>& timestamps,
                             const std::vector<std::string>& region_ids,
                             const std::string& indicator, const Tensor& truth,
                             const Tensor& pred, const Tensor& rainfall) {
    std::string out = "timestamp,region_id,indicator,truth,prediction,rainfall_mm,weekend\n";
    append_series_rows(out, timestamps, region_ids, indicator, truth, pred, rainfall);
    write_text_file(path, out);
}

// ---- experiment runner ---------------------------------------------------------------

namespace {

// Masked metrics restricted to one region column of a {steps, regions} block.
void per_county_metrics(const Tensor& truth, const Tensor& pred,
                        const std::vector<unsigned char>& mask, MetricCell& cell) {
    const int n = truth.cols();
    cell.county_wmape.resize(static_cast<size_t>(n));
    cell.county_mae.resize(static_cast<size_t>(n));
    std::vector<unsigned char> col_mask(mask.size());
    for (int c = 0; c < n; ++c) {
        for (size_t i = 0; i < mask.size(); ++i)
            col_mask[i] = mask[i] && static_cast<int>(i) % n == c ? 1 : 0;
        cell.county_wmape[static_cast<size_t>(c)] = wmape(truth, pred, col_mask);
        cell.county_mae[static_cast<size_t>(c)] = mae(truth, pred, col_mask);
    }
}

void fill_cell(MetricCell& cell, const Tensor& truth, const Tensor& pred,
               const std::vector<unsigned char>& mask, std::string file) {
    cell.wmape = wmape(truth, pred, mask);
    cell.mae = mae(truth, pred, mask);
    cell.predictions_file = std::move(file);
    per_county_metrics(truth, pred, mask, cell);
}

} // namespace

Report run_experiment(const ExperimentConfig& cfg, const ExperimentToggles& toggles,
                      const std::string& label) {
    const auto t0 = std::chrono::steady_clock::now();
    require(!label.empty(), "run_experiment: label must be nonempty");
    require(!cfg.indicators.empty(), "run_experiment: no indicators requested");
    for (const std::string& ind : cfg.indicators)
        require(ind == "call" || ind == "tsh", "run_experiment: unknown indicator " + ind);
    require(cfg.train_stride >= 1 && cfg.baseline_stride >= 1,
            "run_experiment: strides must be positive");

    // Resolve every artifact up front; a missing or corrupt one aborts here,
    // before any training starts.
    ensure(fs::is_directory(cfg.paths.city_dir),
           "run_experiment: missing city directory " + cfg.paths.city_dir);
    ensure(fs::is_regular_file(cfg.paths.panel_csv),
           "run_experiment: missing panel file " + cfg.paths.panel_csv);
    ensure(fs::is_directory(cfg.paths.embeddings_dir),
           "run_experiment: missing embedding library " + cfg.paths.embeddings_dir);
    ensure(fs::is_directory(cfg.paths.backbone_dir),
           "run_experiment: missing backbone checkpoint " + cfg.paths.backbone_dir);
    const City city = read_city(cfg.paths.city_dir);
    auto [panel, exo] = read_panel_csv(cfg.paths.panel_csv);
    const EmbeddingLibrary lib = load_library(cfg.paths.embeddings_dir);
    const Backbone backbone = load_backbone(cfg.paths.backbone_dir);
    const Tensor h = county_embeddings(lib, panel.region_ids);

    for (const std::string& id : panel.region_ids)
        require(std::any_of(city.counties.begin(), city.counties.end(),
                            [&](const County& c) { return c.id == id; }),
                "run_experiment: panel region " + id + " not in the city");
    require(lib.manifest.dimension == cfg.model.h_dim,
            "run_experiment: embedding dimension does not match model h_dim");
    require(backbone.spec.d == cfg.model.patch.d,
            "run_experiment: backbone width does not match model d");
    cfg.split.validate(panel.steps());

    ForecasterConfig mc = cfg.model;
    mc.use_prompt = mc.use_prompt && toggles.prompt;
    mc.use_lora = mc.use_lora && toggles.lora;
    mc.use_events = mc.use_events && toggles.events;
    const int L = mc.patch.lookback;
    const int T = mc.patch.horizon;

    fs::create_directories(cfg.paths.out_dir);
    const fs::path out(cfg.paths.out_dir);

    Report rep;
    rep.label = label;
    rep.config_hash = fnv1a64_hex(config_canonical_json(cfg, toggles));
    rep.seed = mc.seed;
    rep.toggles = toggles;
    rep.region_ids = panel.region_ids;

    const int n = panel.regions();
    std::string combined = "timestamp,region_id,indicator,prediction\n";
    std::string series_export = "timestamp,region_id,indicator,truth,prediction,rainfall_mm,weekend\n";

    for (const std::string& ind : cfg.indicators) {
        const Tensor& src = ind == "call" ? panel.call : panel.tsh;

        ForecastDataset data;
        data.region_ids = panel.region_ids;
        data.indicator = ind;
        for (int t : sample_origins(cfg.split.train, L, T, cfg.train_stride))
            data.train.push_back(make_forecast_sample(panel, exo, h, ind, t, L, T));
        for (int t : sample_origins(cfg.split.val, L, T, kStepsPerDay))
            data.val.push_back(make_forecast_sample(panel, exo, h, ind, t, L, T));
        require(!data.train.empty(), "run_experiment: train range yields no windows");
        require(!data.val.empty(), "run_experiment: val range yields no windows");

        ForecastTrainConfig tc;
        tc.model = mc;
        tc.backbone_dir = cfg.paths.backbone_dir;
        tc.max_steps = cfg.max_steps;
        tc.batch = cfg.batch;
        tc.eval_every = cfg.eval_every;
        tc.patience = cfg.patience;
        tc.lr = cfg.lr;
        ForecastTrainResult tr = train_forecaster(data, tc);

        const std::vector<int> origins = sample_origins(cfg.split.test, L, T, kStepsPerDay);
        require(!origins.empty(), "run_experiment: test range yields no windows");
        const int rows = static_cast<int>(origins.size()) * T;

        // The ridge baseline fits on everything before the test range.
        Tensor pre_test = Tensor::zeros({cfg.split.val.end, n});
        for (int t = 0; t < cfg.split.val.end; ++t)
            for (int c = 0; c < n; ++c) pre_test.at(t, c) = src.at(t, c);
        const LinearBaselineModel lb =
            linear_baseline_train(pre_test, L, T, cfg.ridge, cfg.baseline_stride);

        Tensor truth = Tensor::zeros({rows, n});
        Tensor pred_model = Tensor::zeros({rows, n});
        Tensor pred_weekly = Tensor::zeros({rows, n});
        Tensor pred_linear = Tensor::zeros({rows, n});
        Tensor rain = Tensor::zeros({rows, n});
        std::vector<std::int64_t> timestamps;
        timestamps.reserve(static_cast<size_t>(rows));
        std::vector<unsigned char> mask;
        mask.reserve(static_cast<size_t>(rows) * static_cast<size_t>(n));

        for (size_t o = 0; o < origins.size(); ++o) {
            const int t = origins[o];
            const Tensor pm =
                forecast_predict(tr.model, make_forecast_input(panel, exo, h, ind, t, L));
            const Tensor pw = weekly_counterpart(src, t, T);
            const Tensor pl = linear_baseline_predict(lb, src, t);
            const std::vector<unsigned char> block_mask =
                effective_window_mask(panel.minutes_at(t), T, n);
            mask.insert(mask.end(), block_mask.begin(), block_mask.end());
            for (int s = 0; s < T; ++s) {
                const int row = static_cast<int>(o) * T + s;
                timestamps.push_back(panel.minutes_at(t + s));
                for (int c = 0; c < n; ++c) {
                    truth.at(row, c) = src.at(t + s, c);
                    pred_model.at(row, c) = pm.at(s, c);
                    pred_weekly.at(row, c) = pw.at(s, c);
                    pred_linear.at(row, c) = pl.at(s, c);
                    rain.at(row, c) = exo.rainfall.at(t + s, c);
                }
            }
        }

        IndicatorReport ir;
        ir.indicator = ind;
        ir.origins = static_cast<int>(origins.size());
        ir.best_round = tr.best_round;
        for (unsigned char b : mask) ir.masked_points += b ? 1 : 0;

        const std::string f_model = "predictions_" + ind + "_model.csv";
        const std::string f_weekly = "predictions_" + ind + "_weekly.csv";
        const std::string f_linear = "predictions_" + ind + "_linear.csv";
        write_predictions_csv((out / f_model).string(), timestamps, panel.region_ids, ind,
                              pred_model);
        write_predictions_csv((out / f_weekly).string(), timestamps, panel.region_ids, ind,
                              pred_weekly);
        write_predictions_csv((out / f_linear).string(), timestamps, panel.region_ids, ind,
                              pred_linear);
        fill_cell(ir.model, truth, pred_model, mask, f_model);
        fill_cell(ir.weekly, truth, pred_weekly, mask, f_weekly);
        fill_cell(ir.linear, truth, pred_linear, mask, f_linear);
        rep.indicators.push_back(std::move(ir));

        char buf[48];
        for (int i = 0; i < rows; ++i)
            for (int c = 0; c < n; ++c) {
                std::snprintf(buf, sizeof(buf), ",%.9g", pred_model.at(i, c));
                combined += format_iso_minutes(timestamps[static_cast<size_t>(i)]) + "," +
                            panel.region_ids[static_cast<size_t>(c)] + "," + ind + buf + "\n";
            }
        append_series_rows(series_export, timestamps, panel.region_ids, ind, truth,
                           pred_model, rain);
    }

    write_text_file((out / "predictions.csv").string(), combined);
    write_text_file((out / "series_export.csv").string(), series_export);
    write_text_file((out / "config.json").string(),
                    config_canonical_json(cfg, toggles) + "\n");

    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_report_json(rep, (out / "report.json").string());
    write_report_csv(rep, (out / "report.csv").string());
    return rep;
}

std::vector<Report> ablate(const ExperimentConfig& cfg) {
    struct Variant {
        const char* label;
        ExperimentToggles toggles;
    };
    const Variant variants[] = {{"full", {true, true, true}},
                                {"pgn_off", {false, true, true}},
                                {"lora_off", {true, false, true}},
                                {"ev_off", {true, true, false}}};
    std::vector<Report> reports;
    for (const Variant& v : variants) {
        ExperimentConfig sub = cfg;
        sub.paths.out_dir = (fs::path(cfg.paths.out_dir) / v.label).string();
        reports.push_back(run_experiment(sub, v.toggles, v.label));
    }
    fs::create_directories(cfg.paths.out_dir);
    write_ablation_csv(reports, (fs::path(cfg.paths.out_dir) / "ablation.csv").string());
    return reports;
}

} // namespace ridecast
