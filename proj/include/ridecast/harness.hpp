#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ridecast/common.hpp"
#include "ridecast/embedlib.hpp"
#include "ridecast/eval.hpp"
#include "ridecast/forecast.hpp"
#include "ridecast/panel.hpp"
#include "ridecast/tensor.hpp"
#include "ridecast/timeutil.hpp"

namespace ridecast {

// Experiment harness: chronological splits, the effective-window evaluation
// mask, reference baselines (weekly counterpart, per-region ridge regression),
// rolling-origin evaluation of trained forecasters, ablation toggles, and
// report export. Reports are pure functions of (config, seed, data files).

// ---- splits ------------------------------------------------------------------

// Half-open range of panel step indices.
struct StepRange {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
};

struct SplitSpec {
    StepRange train;
    StepRange val;
    StepRange test;
    // Nonempty, ordered train < val < test, pairwise disjoint (contiguity is
    // not required), and contained in [0, panel_steps).
    void validate(int panel_steps) const;
};

// Contiguous whole-week split starting at step 0.
SplitSpec split_by_weeks(int train_weeks, int val_weeks, int test_weeks);

// ---- effective evaluation window ----------------------------------------------

// Metrics count only the 06:00..22:30 slots (both endpoints included):
// 34 of the 48 half-hour slots per day.
constexpr int kEvalStartSlot = 12;
constexpr int kEvalEndSlot = 45;
constexpr int kEvalSlotsPerDay = kEvalEndSlot - kEvalStartSlot + 1;

bool in_effective_window(std::int64_t minutes);

// Mask aligned with a {steps, regions} row-major block whose first row is at
// `start_minutes`; an entry is 1 iff its slot of day falls in the window.
std::vector<unsigned char> effective_window_mask(std::int64_t start_minutes, int steps,
                                                 int regions);

// ---- baselines ----------------------------------------------------------------

// Predicts each horizon slot with the value one week (336 steps) earlier:
// yhat(t + s) = y(t + s - 336). `series` is {steps, regions}; the result is
// {horizon, regions}. Requires one full week of history before t.
Tensor weekly_counterpart(const Tensor& series, int t, int horizon);

// Per-region ridge regression from the L-step lookback window (plus an
// unpenalized intercept) to the T-step horizon, fit on every origin of the
// given stride with the full sample span inside `series`.
struct LinearBaselineModel {
    int lookback = 0;
    int horizon = 0;
    double ridge = 0.0;
    std::vector<Tensor> coef; // per region {lookback + 1, horizon}; last row intercept
};

LinearBaselineModel linear_baseline_train(const Tensor& series, int lookback, int horizon,
                                          double ridge = 1e-6, int stride = 1);
// Applies the fitted map to the window ending at t; returns {horizon, regions}.
Tensor linear_baseline_predict(const LinearBaselineModel& m, const Tensor& series, int t);

// ---- experiment assembly --------------------------------------------------------

// Builds the model input for the horizon starting at step t: lookback windows
// of the indicator and the exogenous channels (codes carried as doubles) plus
// the Stage-1 county embeddings `h` ({regions, h_dim}, panel region order).
ForecastInput make_forecast_input(const SeriesPanel& panel, const ExogenousPanel& exo,
                                  const Tensor& h, const std::string& indicator, int t,
                                  int lookback);
ForecastSample make_forecast_sample(const SeriesPanel& panel, const ExogenousPanel& exo,
                                    const Tensor& h, const std::string& indicator, int t,
                                    int lookback, int horizon);

// Horizon starts t in [range.begin, range.end - horizon] at the given stride,
// keeping only origins with a full lookback of panel history (the lookback may
// reach into earlier ranges).
std::vector<int> sample_origins(const StepRange& range, int lookback, int horizon,
                                int stride);

// Fetches county-level vectors for the given region ids as a {n, d} tensor;
// every id must be present in the library at level "county".
Tensor county_embeddings(const EmbeddingLibrary& lib,
                         const std::vector<std::string>& region_ids);

// ---- experiment configuration and reports ----------------------------------------

struct ExperimentPaths {
    std::string city_dir;       // write_city output
    std::string panel_csv;      // write_panel_csv output
    std::string embeddings_dir; // embedding library holding county vectors
    std::string backbone_dir;   // save_backbone checkpoint
    std::string out_dir;        // reports and prediction files are written here
};

struct ExperimentToggles {
    bool prompt = true; // off: retrieved prompt features forced to zero
    bool lora = true;   // off: backbone runs without adapters
    bool events = true; // off: exogenous channels zeroed
};

struct ExperimentConfig {
    ExperimentPaths paths;
    SplitSpec split;
    ForecasterConfig model; // model.seed seeds the whole run
    int max_steps = 60;
    int batch = 8;
    int eval_every = 10;
    int patience = 3;
    double lr = 2e-3;
    int train_stride = kStepsPerDay;    // origin stride for training samples
    int baseline_stride = 12;           // origin stride for the ridge baseline fit
    double ridge = 1e-6;
    std::vector<std::string> indicators{"call", "tsh"};
};

// One (indicator, category) metric block. Per-county entries follow the
// report's region order; `predictions_file` names the stored prediction file
// (relative to the run directory) every cell is computed from.
struct MetricCell {
    double wmape = 0.0;
    double mae = 0.0;
    std::vector<double> county_wmape;
    std::vector<double> county_mae;
    std::string predictions_file;
};

struct IndicatorReport {
    std::string indicator;
    int origins = 0;       // rolling-origin count over the test range
    int masked_points = 0; // evaluated (step, region) pairs
    int best_round = 0;    // early-stopping round of the trained model
    MetricCell model;
    MetricCell weekly;
    MetricCell linear;
};

struct Report {
    std::string label; // "full", "pgn_off", "lora_off", "ev_off"
    std::string config_hash;
    std::uint64_t seed = 0;
    ExperimentToggles toggles;
    double wall_seconds = 0.0;
    std::vector<std::string> region_ids;
    std::vector<IndicatorReport> indicators;
};

// Canonical JSON of the config and toggles (hash input; also what makes two
// runs comparable).
std::string config_canonical_json(const ExperimentConfig& cfg,
                                  const ExperimentToggles& toggles);
// Everything in the report except the wall clock, canonically formatted;
// equal signatures mean bit-identical metrics.
std::string report_signature(const Report& r);

// Loads all artifacts (aborting before any training if one is missing),
// trains one forecaster per indicator on the train/val split with the toggles
// applied, evaluates test-range predictions rolling-origin at daily stride
// under the effective-window mask against the weekly-counterpart and ridge
// baselines, and writes per-category prediction files, `predictions.csv`,
// `series_export.csv`, `report.json`, and `report.csv` into paths.out_dir.
Report run_experiment(const ExperimentConfig& cfg, const ExperimentToggles& toggles = {},
                      const std::string& label = "full");

// Runs "full", "pgn_off", "lora_off", and "ev_off" side by side (same seed,
// one subdirectory of paths.out_dir each) and writes a combined
// `ablation.csv` summary.
std::vector<Report> ablate(const ExperimentConfig& cfg);

void write_report_json(const Report& r, const std::string& path);
void write_report_csv(const Report& r, const std::string& path);
void write_ablation_csv(const std::vector<Report>& reports, const std::string& path);

// Plot-ready long-form export: one row per (timestamp, region, indicator)
// with ground truth, model prediction, rainfall, and a weekend flag.
void write_series_export_csv(const std::string& path,
                             const std::vector<std::int64_t>& timestamps,
                             const std::vector<std::string>& region_ids,
                             const std::string& indicator, const Tensor& truth,
                             const Tensor& pred, const Tensor& rainfall);

} // namespace ridecast
