#pragma once

#include <string>
#include <vector>

#include "ridecast/common.hpp"

namespace ridecast {

struct GridCell {
    std::string id;   // "g<n>"
    int q = 0, r = 0; // axial hex coordinates
    double x_m = 0.0, y_m = 0.0;
    int county = -1; // index into City::counties
};

struct County {
    std::string id; // "c<n>"
    std::string archetype;
    std::vector<int> grid_indexes; // nonempty; partitions the grid set
};

struct Poi {
    std::string id;
    double x_m = 0.0, y_m = 0.0;
    int primary_cat = -1;
    int secondary_cat = -1;
};

// Two-tier POI category taxonomy; each secondary maps to exactly one primary.
struct CategoryVocab {
    std::vector<std::string> primary_names;
    std::vector<std::string> secondary_names;
    std::vector<int> secondary_to_primary;

    int n_primary() const { return static_cast<int>(primary_names.size()); }
    int n_secondary() const { return static_cast<int>(secondary_names.size()); }
    void validate() const;
};

struct City {
    double hex_edge_m = 600.0;
    std::vector<GridCell> grids;
    std::vector<County> counties;
    std::vector<Poi> pois;
    CategoryVocab vocab;
    std::vector<std::vector<int>> pois_by_grid; // poi indexes per grid, ascending

    void validate() const;
    int county_of_grid(int grid_index) const { return grids[static_cast<size_t>(grid_index)].county; }
};

// Nearest grid center (Euclidean); ties by lower grid index.
int nearest_grid(const City& city, double x_m, double y_m);

// grids.csv, counties.csv, pois.csv, vocab.csv under `dir`
void write_city(const City& city, const std::string& dir);
City read_city(const std::string& dir);

} // namespace ridecast
