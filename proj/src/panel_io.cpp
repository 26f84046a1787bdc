#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "ridecast/csvio.hpp"
#include "ridecast/panel.hpp"

namespace ridecast {

int SeriesPanel::region_index(const std::string& id) const {
    for (size_t i = 0; i < region_ids.size(); ++i)
        if (region_ids[i] == id) return static_cast<int>(i);
    throw invalid_input("unknown region " + id);
}

void SeriesPanel::validate() const {
    require(half_hour_aligned(start_minutes), "panel start must be half-hour aligned");
    require(!region_ids.empty(), "panel has no regions");
    require(call.ndim() == 2 && tsh.ndim() == 2, "panel values must be matrices");
    require(call.cols() == regions() && tsh.cols() == regions(),
            "panel column count must match the region list");
    require(call.rows() == tsh.rows(), "call and tsh must cover the same steps");
    for (double v : call.data) require(v >= 0.0, "call values must be nonnegative");
    for (double v : tsh.data) require(v >= 0.0, "tsh values must be nonnegative");
}

namespace {

std::string fmt_value(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
}

} // namespace

void write_panel_csv(const SeriesPanel& panel, const ExogenousPanel& exo, const std::string& path) {
    panel.validate();
    const int steps = panel.steps(), regions = panel.regions();
    require(exo.rainfall.rows() == steps && exo.rainfall.cols() == regions,
            "exogenous rainfall shape mismatch");
    require(static_cast<int>(exo.holiday.size()) == steps, "exogenous holiday length mismatch");
    require(exo.event.size() == static_cast<size_t>(steps) * static_cast<size_t>(regions),
            "exogenous event shape mismatch");

    std::ostringstream out;
    out << "timestamp,region_id,call,tsh,rainfall_mm,holiday_code,event_code\n";
    for (int t = 0; t < steps; ++t) {
        const std::string ts = format_iso_minutes(panel.minutes_at(t));
        for (int c = 0; c < regions; ++c)
            out << ts << ',' << panel.region_ids[static_cast<size_t>(c)] << ','
                << fmt_value(panel.call.at(t, c)) << ',' << fmt_value(panel.tsh.at(t, c)) << ','
                << fmt_value(exo.rainfall.at(t, c)) << ',' << exo.holiday[static_cast<size_t>(t)]
                << ',' << exo.event_at(t, c, regions) << '\n';
    }
    write_text_file(path, out.str());
}

std::pair<SeriesPanel, ExogenousPanel> read_panel_csv(const std::string& path) {
    CsvFile csv = read_csv(path);
    expect_header(csv, {"timestamp", "region_id", "call", "tsh", "rainfall_mm", "holiday_code",
                        "event_code"},
                  path);
    require(!csv.rows.empty(), path + " has no data rows");

    // discover the timestamp grid and the region set
    std::vector<std::int64_t> times;
    std::map<std::int64_t, int> time_index;
    std::vector<std::string> regions;
    std::map<std::string, int> region_index;
    for (const CsvRow& row : csv.rows) {
        std::int64_t m;
        try {
            m = parse_iso_minutes(row.fields[0]);
        } catch (const invalid_input& e) {
            throw invalid_input(path + " line " + std::to_string(row.line) + ": " + e.what());
        }
        require(half_hour_aligned(m), path + " line " + std::to_string(row.line) +
                                          ": timestamp not half-hour aligned");
        if (time_index.emplace(m, 0).second) times.push_back(m);
        if (region_index.emplace(row.fields[1], 0).second) regions.push_back(row.fields[1]);
    }
    std::sort(times.begin(), times.end());
    for (size_t i = 0; i < times.size(); ++i) {
        time_index[times[i]] = static_cast<int>(i);
        if (i > 0)
            require(times[i] - times[i - 1] == kStepMinutes,
                    path + ": non-contiguous half-hour grid (gap before " +
                        format_iso_minutes(times[i]) + ")");
    }
    for (size_t i = 0; i < regions.size(); ++i) region_index[regions[i]] = static_cast<int>(i);

    const int steps = static_cast<int>(times.size());
    const int n_regions = static_cast<int>(regions.size());
    SeriesPanel panel;
    panel.start_minutes = times.front();
    panel.region_ids = regions;
    panel.call = Tensor::zeros({steps, n_regions});
    panel.tsh = Tensor::zeros({steps, n_regions});
    ExogenousPanel exo;
    exo.rainfall = Tensor::zeros({steps, n_regions});
    exo.holiday.assign(static_cast<size_t>(steps), -1);
    exo.event.assign(static_cast<size_t>(steps) * static_cast<size_t>(n_regions), 0);

    std::vector<char> seen(static_cast<size_t>(steps) * static_cast<size_t>(n_regions), 0);
    for (const CsvRow& row : csv.rows) {
        const int t = time_index[parse_iso_minutes(row.fields[0])];
        const int c = region_index[row.fields[1]];
        auto& cell = seen[static_cast<size_t>(t) * static_cast<size_t>(n_regions) +
                          static_cast<size_t>(c)];
        require(!cell, path + " line " + std::to_string(row.line) + ": duplicate (timestamp, region)");
        cell = 1;

        const double call = parse_double_field(row, 2, "call");
        const double tsh = parse_double_field(row, 3, "tsh");
        const double rain = parse_double_field(row, 4, "rainfall_mm");
        const long long hol = parse_int_field(row, 5, "holiday_code");
        const long long ev = parse_int_field(row, 6, "event_code");
        require(call >= 0.0, path + " line " + std::to_string(row.line) + ": call must be >= 0");
        require(tsh >= 0.0, path + " line " + std::to_string(row.line) + ": tsh must be >= 0");
        require(rain >= 0.0,
                path + " line " + std::to_string(row.line) + ": rainfall_mm must be >= 0");
        require(hol >= 0, path + " line " + std::to_string(row.line) + ": holiday_code must be >= 0");
        require(ev >= 0, path + " line " + std::to_string(row.line) + ": event_code must be >= 0");

        panel.call.at(t, c) = call;
        panel.tsh.at(t, c) = tsh;
        exo.rainfall.at(t, c) = rain;
        exo.event[static_cast<size_t>(t) * static_cast<size_t>(n_regions) + static_cast<size_t>(c)] =
            static_cast<int>(ev);
        auto& h = exo.holiday[static_cast<size_t>(t)];
        if (h < 0)
            h = static_cast<int>(hol);
        else
            require(h == static_cast<int>(hol),
                    path + " line " + std::to_string(row.line) +
                        ": holiday_code differs across regions at one timestamp");
    }
    for (char s : seen) require(s == 1, path + ": missing (timestamp, region) combinations");

    panel.validate();
    return {std::move(panel), std::move(exo)};
}

std::pair<SeriesPanel, ExogenousPanel> slice_panel(const SeriesPanel& panel,
                                                   const ExogenousPanel& exo, int step0, int step1) {
    require(0 <= step0 && step0 < step1 && step1 <= panel.steps(), "slice range invalid");
    const int n = panel.regions();
    SeriesPanel p2;
    p2.start_minutes = panel.minutes_at(step0);
    p2.region_ids = panel.region_ids;
    p2.call = Tensor::zeros({step1 - step0, n});
    p2.tsh = Tensor::zeros({step1 - step0, n});
    ExogenousPanel e2;
    e2.rainfall = Tensor::zeros({step1 - step0, n});
    e2.holiday.assign(static_cast<size_t>(step1 - step0), 0);
    e2.event.assign(static_cast<size_t>(step1 - step0) * static_cast<size_t>(n), 0);
    for (int t = step0; t < step1; ++t) {
        e2.holiday[static_cast<size_t>(t - step0)] = exo.holiday[static_cast<size_t>(t)];
        for (int c = 0; c < n; ++c) {
            p2.call.at(t - step0, c) = panel.call.at(t, c);
            p2.tsh.at(t - step0, c) = panel.tsh.at(t, c);
            e2.rainfall.at(t - step0, c) = exo.rainfall.at(t, c);
            e2.event[static_cast<size_t>(t - step0) * static_cast<size_t>(n) +
                     static_cast<size_t>(c)] = exo.event_at(t, c, n);
        }
    }
    return {std::move(p2), std::move(e2)};
}

} // namespace ridecast
