#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ridecast/nn.hpp"
#include "ridecast/panel.hpp"
#include "ridecast/tape.hpp"

namespace ridecast {

// Daily/weekly rhythm summary of one region's series. Half-hour observations
// are paired into hourly values, bucketed by (weekday, hour) and averaged;
// counts carry the number of raw observations behind each cell so weighted
// means reproduce the raw series mean exactly.
struct MobilityProfiles {
    std::vector<double> daily;  // 24, count-weighted column means
    std::vector<double> weekly; // 7, count-weighted row means
    Tensor hour_day;            // {7, 24}
    Tensor counts;              // {7, 24} raw 30-min observations per cell

    // true when every (weekday, hour) cell has at least one observation
    bool complete() const;
};

// Aggregates raw (minutes-since-epoch, value) observations. Input order is
// irrelevant: observations are sorted by (timestamp, value) first.
MobilityProfiles aggregate_observations(std::vector<std::pair<std::int64_t, double>> obs);

// Profiles of one panel region; indicator is "call" or "tsh".
MobilityProfiles aggregate_profiles(const SeriesPanel& panel, int region,
                                    const std::string& indicator = "call");

// 7x24 matrix with weekday/hour headers, one row per weekday.
void write_profiles_csv(const MobilityProfiles& p, const std::string& path);

// daily (24) + weekly (7) + hour-day (168) as one {1, 199} row.
Tensor flatten_profiles(const MobilityProfiles& p);

// MLP over the flattened profile, reshaped to 7 weekday tokens, projected to
// d, self-attended and mean-pooled into one d-dim row per region.
struct MobilityModel {
    int d = 0;
    int hidden = 0;
    int heads = 0;
    bool normalize = true; // z-score each flattened profile before encoding
    ParamSet params;
};

MobilityModel make_mobility_model(int d, int hidden, int heads, std::uint64_t seed,
                                  bool normalize = true);

// One Z_M row, {1, d}. Requires complete profiles.
Var encode_mobility(Tape& t, const MobilityModel& m, const ParamSet::Bound& P,
                    const MobilityProfiles& profiles);

// Z_M for a batch of regions, {N_r, d}.
Var encode_mobility_rows(Tape& t, const MobilityModel& m, const ParamSet::Bound& P,
                         const std::vector<MobilityProfiles>& profiles);

} // namespace ridecast
