#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>

#include "ridecast/city.hpp"
#include "ridecast/csvio.hpp"

namespace ridecast {

void CategoryVocab::validate() const {
    require(!primary_names.empty() && !secondary_names.empty(), "vocabulary must be nonempty");
    require(secondary_to_primary.size() == secondary_names.size(),
            "secondary->primary map must be total");
    for (int p : secondary_to_primary)
        require(p >= 0 && p < n_primary(), "secondary maps to an unknown primary category");
}

void City::validate() const {
    require(!grids.empty(), "city must have at least one grid");
    require(!counties.empty(), "city must have at least one county");
    vocab.validate();
    std::vector<int> seen(grids.size(), 0);
    for (const County& c : counties) {
        require(!c.grid_indexes.empty(), "county " + c.id + " has no grids");
        for (int g : c.grid_indexes) {
            require(g >= 0 && static_cast<size_t>(g) < grids.size(), "county grid index out of range");
            seen[static_cast<size_t>(g)] += 1;
            require(grids[static_cast<size_t>(g)].county ==
                        static_cast<int>(&c - counties.data()),
                    "grid/county assignment mismatch");
        }
    }
    for (int s : seen) require(s == 1, "counties must partition the grid set");
    for (const Poi& p : pois) {
        require(p.secondary_cat >= 0 && p.secondary_cat < vocab.n_secondary(),
                "poi has an unknown secondary category");
        require(p.primary_cat == vocab.secondary_to_primary[static_cast<size_t>(p.secondary_cat)],
                "poi primary/secondary categories disagree with the vocabulary");
    }
    require(pois_by_grid.size() == grids.size(), "pois_by_grid must cover every grid");
}

int nearest_grid(const City& city, double x_m, double y_m) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < city.grids.size(); ++i) {
        const double dx = city.grids[i].x_m - x_m;
        const double dy = city.grids[i].y_m - y_m;
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
}

} // namespace

void write_city(const City& city, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ostringstream out;
        out << "grid_id,q,r,center_x_m,center_y_m,county_id\n";
        for (const GridCell& g : city.grids)
            out << g.id << ',' << g.q << ',' << g.r << ',' << fmt(g.x_m) << ',' << fmt(g.y_m)
                << ',' << city.counties[static_cast<size_t>(g.county)].id << '\n';
        write_text_file(dir + "/grids.csv", out.str());
    }
    {
        std::ostringstream out;
        out << "county_id,archetype\n";
        for (const County& c : city.counties) out << c.id << ',' << c.archetype << '\n';
        write_text_file(dir + "/counties.csv", out.str());
    }
    {
        std::ostringstream out;
        out << "poi_id,x_m,y_m,primary_cat,secondary_cat\n";
        for (const Poi& p : city.pois)
            out << p.id << ',' << fmt(p.x_m) << ',' << fmt(p.y_m) << ',' << p.primary_cat << ','
                << p.secondary_cat << '\n';
        write_text_file(dir + "/pois.csv", out.str());
    }
    {
        std::ostringstream out;
        out << "secondary_id,secondary_name,primary_id,primary_name\n";
        for (int j = 0; j < city.vocab.n_secondary(); ++j) {
            const int p = city.vocab.secondary_to_primary[static_cast<size_t>(j)];
            out << j << ',' << city.vocab.secondary_names[static_cast<size_t>(j)] << ',' << p
                << ',' << city.vocab.primary_names[static_cast<size_t>(p)] << '\n';
        }
        write_text_file(dir + "/vocab.csv", out.str());
    }
}

City read_city(const std::string& dir) {
    City city;

    CsvFile vocab = read_csv(dir + "/vocab.csv");
    expect_header(vocab, {"secondary_id", "secondary_name", "primary_id", "primary_name"},
                  dir + "/vocab.csv");
    std::map<int, std::pair<std::string, int>> secondaries;
    std::map<int, std::string> primaries;
    for (const CsvRow& row : vocab.rows) {
        const int sid = static_cast<int>(parse_int_field(row, 0, "secondary_id"));
        const int pid = static_cast<int>(parse_int_field(row, 2, "primary_id"));
        require(secondaries.emplace(sid, std::make_pair(row.fields[1], pid)).second,
                "line " + std::to_string(row.line) + ": duplicate secondary_id");
        auto it = primaries.find(pid);
        if (it == primaries.end())
            primaries.emplace(pid, row.fields[3]);
        else
            require(it->second == row.fields[3],
                    "line " + std::to_string(row.line) + ": primary name conflicts");
    }
    require(!secondaries.empty(), dir + "/vocab.csv has no categories");
    const int np = primaries.rbegin()->first + 1;
    const int ns = secondaries.rbegin()->first + 1;
    require(static_cast<int>(primaries.size()) == np && static_cast<int>(secondaries.size()) == ns,
            dir + "/vocab.csv: category ids must be dense 0..n-1");
    city.vocab.primary_names.resize(static_cast<size_t>(np));
    for (auto& [pid, name] : primaries) city.vocab.primary_names[static_cast<size_t>(pid)] = name;
    city.vocab.secondary_names.resize(static_cast<size_t>(ns));
    city.vocab.secondary_to_primary.resize(static_cast<size_t>(ns));
    for (auto& [sid, v] : secondaries) {
        city.vocab.secondary_names[static_cast<size_t>(sid)] = v.first;
        city.vocab.secondary_to_primary[static_cast<size_t>(sid)] = v.second;
    }

    CsvFile counties = read_csv(dir + "/counties.csv");
    expect_header(counties, {"county_id", "archetype"}, dir + "/counties.csv");
    std::map<std::string, int> county_index;
    for (const CsvRow& row : counties.rows) {
        require(county_index.emplace(row.fields[0], static_cast<int>(city.counties.size())).second,
                "line " + std::to_string(row.line) + ": duplicate county_id " + row.fields[0]);
        County c;
        c.id = row.fields[0];
        c.archetype = row.fields[1];
        city.counties.push_back(std::move(c));
    }

    CsvFile grids = read_csv(dir + "/grids.csv");
    expect_header(grids, {"grid_id", "q", "r", "center_x_m", "center_y_m", "county_id"},
                  dir + "/grids.csv");
    for (const CsvRow& row : grids.rows) {
        GridCell g;
        g.id = row.fields[0];
        g.q = static_cast<int>(parse_int_field(row, 1, "q"));
        g.r = static_cast<int>(parse_int_field(row, 2, "r"));
        g.x_m = parse_double_field(row, 3, "center_x_m");
        g.y_m = parse_double_field(row, 4, "center_y_m");
        auto it = county_index.find(row.fields[5]);
        require(it != county_index.end(),
                "line " + std::to_string(row.line) + ": unknown county_id " + row.fields[5]);
        g.county = it->second;
        city.counties[static_cast<size_t>(g.county)].grid_indexes.push_back(
            static_cast<int>(city.grids.size()));
        city.grids.push_back(std::move(g));
    }

    // recover the hex edge from the closest pair of grid centers
    double min_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < city.grids.size(); ++i)
        for (size_t j = i + 1; j < city.grids.size(); ++j) {
            const double dx = city.grids[i].x_m - city.grids[j].x_m;
            const double dy = city.grids[i].y_m - city.grids[j].y_m;
            min_d = std::min(min_d, std::sqrt(dx * dx + dy * dy));
        }
    city.hex_edge_m = std::isfinite(min_d) ? min_d / std::sqrt(3.0) : 600.0;

    CsvFile pois = read_csv(dir + "/pois.csv");
    expect_header(pois, {"poi_id", "x_m", "y_m", "primary_cat", "secondary_cat"},
                  dir + "/pois.csv");
    city.pois_by_grid.assign(city.grids.size(), {});
    for (const CsvRow& row : pois.rows) {
        Poi p;
        p.id = row.fields[0];
        p.x_m = parse_double_field(row, 1, "x_m");
        p.y_m = parse_double_field(row, 2, "y_m");
        p.primary_cat = static_cast<int>(parse_int_field(row, 3, "primary_cat"));
        p.secondary_cat = static_cast<int>(parse_int_field(row, 4, "secondary_cat"));
        require(p.secondary_cat >= 0 && p.secondary_cat < city.vocab.n_secondary(),
                "line " + std::to_string(row.line) + ": unknown secondary_cat");
        require(p.primary_cat ==
                    city.vocab.secondary_to_primary[static_cast<size_t>(p.secondary_cat)],
                "line " + std::to_string(row.line) +
                    ": primary_cat disagrees with the vocabulary mapping");
        city.pois_by_grid[static_cast<size_t>(nearest_grid(city, p.x_m, p.y_m))].push_back(
            static_cast<int>(city.pois.size()));
        city.pois.push_back(std::move(p));
    }

    city.validate();
    return city;
}

} // namespace ridecast
