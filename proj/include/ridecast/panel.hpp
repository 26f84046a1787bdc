#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ridecast/tensor.hpp"
#include "ridecast/timeutil.hpp"

namespace ridecast {

// Half-hourly Call / TSH values per region (county), plus aligned exogenous
// channels. Rows are time steps, columns are regions in region_ids order.
struct SeriesPanel {
    std::int64_t start_minutes = 0; // half-hour aligned
    std::vector<std::string> region_ids;
    Tensor call; // {steps, regions}, all values >= 0
    Tensor tsh;  // {steps, regions}, all values >= 0

    int steps() const { return call.data.empty() ? 0 : call.rows(); }
    int regions() const { return static_cast<int>(region_ids.size()); }
    std::int64_t minutes_at(int step) const { return start_minutes + step * kStepMinutes; }
    int region_index(const std::string& id) const;
    void validate() const;
};

struct ExogenousPanel {
    Tensor rainfall;               // {steps, regions}, mm >= 0
    std::vector<int> holiday;      // per step, same code for every region
    std::vector<int> event;        // steps * regions, row-major; 0 = none

    int event_at(int step, int region, int regions) const {
        return event[static_cast<size_t>(step) * static_cast<size_t>(regions) +
                     static_cast<size_t>(region)];
    }
};

// CSV schema: timestamp,region_id,call,tsh,rainfall_mm,holiday_code,event_code
void write_panel_csv(const SeriesPanel& panel, const ExogenousPanel& exo, const std::string& path);
std::pair<SeriesPanel, ExogenousPanel> read_panel_csv(const std::string& path);

// Row slice [step0, step1) of both panels.
std::pair<SeriesPanel, ExogenousPanel> slice_panel(const SeriesPanel& panel,
                                                   const ExogenousPanel& exo, int step0, int step1);

} // namespace ridecast
