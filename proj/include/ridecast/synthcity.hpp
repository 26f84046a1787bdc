#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ridecast/city.hpp"
#include "ridecast/panel.hpp"

namespace ridecast {

struct CityConfig {
    int counties = 8;
    int grids_per_county = 15;
    std::vector<std::string> archetypes = {"downtown", "residential", "industrial", "rural"};
    std::vector<int> archetype_mix = {2, 2, 2, 2}; // counties per archetype; sums to `counties`
    int primary_categories = 6;
    int secondary_categories = 18;
    double hex_edge_m = 600.0;
    double pois_per_grid = 6.0; // scaled by the archetype's density factor
    std::uint64_t seed = 0;
};

struct PanelConfig {
    int weeks = 4;
    std::string start_timestamp = "2025-01-05T00:00:00"; // a Monday-aligned grid is not required
    double base_level = 100.0;
    double seasonality = 1.0;    // 0 flattens every template to base_level
    double noise_level = 0.05;   // relative noise scale; 0 disables
    double event_density = 0.5;  // expected events per county per week
    double rain_probability = 0.08; // chance a (county, day) has a rain episode
    double holiday_probability = 0.04; // chance a day carries a holiday code
    int n_holiday_codes = 3;     // N_h
    int n_event_codes = 4;       // N_e
    std::uint64_t seed = 0;
};

// Smooth weekly demand/supply template for one archetype, evaluated on the
// half-hour grid. Multiplicative modifiers and additive noise come on top.
double archetype_template(const std::string& archetype, const PanelConfig& cfg,
                          const std::string& indicator, int weekday, int slot_of_day);

City generate_city(const CityConfig& cfg);
std::pair<SeriesPanel, ExogenousPanel> generate_panel(const City& city, const PanelConfig& cfg);

// The built-in taxonomy used when primary/secondary counts match the defaults;
// otherwise names are generated ("primary<i>" / "secondary<j>").
CategoryVocab make_vocab(int n_primary, int n_secondary);

} // namespace ridecast
