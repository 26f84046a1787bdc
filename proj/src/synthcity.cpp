#include "ridecast/synthcity.hpp"

#include <algorithm>
#include <cmath>

#include "ridecast/rng.hpp"

namespace ridecast {

namespace {

// Per-archetype generator parameters. The four canonical archetypes use a
// curated table; any other name gets stable hash-derived values so custom
// archetype sets still work.
struct ArchParams {
    double scale = 1.0;       // overall demand level multiplier
    double morning_amp = 1.0; // morning peak height (relative)
    double evening_amp = 1.0; // evening peak height
    double morning_h = 8.5;   // peak hours
    double evening_h = 18.0;
    double width = 1.6; // gaussian peak width in hours
    double weekend = 1.0;
    double poi_density = 1.0;
    double rain_gain = 0.2;
    std::vector<double> cat_weights; // over primary categories, sums to 1
};

std::uint64_t name_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<double> derived_weights(const std::string& arch, int n_primary) {
    Rng rng(name_hash(arch) ^ 0x5bd1e995u);
    std::vector<double> w(static_cast<size_t>(n_primary));
    double sum = 0.0;
    for (double& v : w) {
        v = 0.3 + rng.uniform();
        sum += v;
    }
    for (double& v : w) v /= sum;
    return w;
}

ArchParams archetype_params(const std::string& arch, int n_primary) {
    ArchParams p;
    if (arch == "downtown") {
        p = {1.8, 0.9, 1.5, 8.5, 18.5, 1.7, 0.85, 2.0, 0.30, {}};
        if (n_primary == 6) p.cat_weights = {0.25, 0.25, 0.05, 0.05, 0.20, 0.20};
    } else if (arch == "residential") {
        p = {1.0, 1.3, 0.9, 8.0, 18.5, 1.5, 1.10, 1.2, 0.20, {}};
        if (n_primary == 6) p.cat_weights = {0.15, 0.12, 0.45, 0.03, 0.10, 0.15};
    } else if (arch == "industrial") {
        p = {0.7, 1.5, 1.1, 7.5, 17.0, 1.3, 0.50, 0.8, 0.12, {}};
        if (n_primary == 6) p.cat_weights = {0.05, 0.10, 0.05, 0.60, 0.15, 0.05};
    } else if (arch == "rural") {
        p = {0.35, 0.5, 0.55, 9.0, 18.0, 2.2, 1.25, 0.35, 0.15, {}};
        if (n_primary == 6) p.cat_weights = {0.10, 0.10, 0.30, 0.15, 0.10, 0.25};
    } else {
        Rng rng(name_hash(arch));
        p.scale = 0.4 + 1.6 * rng.uniform();
        p.morning_amp = 0.4 + 1.2 * rng.uniform();
        p.evening_amp = 0.4 + 1.2 * rng.uniform();
        p.morning_h = 7.0 + 2.5 * rng.uniform();
        p.evening_h = 17.0 + 2.5 * rng.uniform();
        p.weekend = 0.6 + 0.7 * rng.uniform();
        p.poi_density = 0.3 + 1.7 * rng.uniform();
        p.rain_gain = 0.1 + 0.25 * rng.uniform();
    }
    if (p.cat_weights.empty()) p.cat_weights = derived_weights(arch, n_primary);
    return p;
}

double gauss(double h, double center, double width) {
    // wrap around midnight so the 23:30 slot sits next to 00:00
    double d = std::fabs(h - center);
    d = std::min(d, 24.0 - d);
    return std::exp(-d * d / (2.0 * width * width));
}

// axial spiral: center, then rings of increasing radius
std::vector<std::pair<int, int>> hex_spiral(int n) {
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<size_t>(n));
    out.emplace_back(0, 0);
    const int dq[6] = {1, 0, -1, -1, 0, 1};
    const int dr[6] = {-1, -1, 0, 1, 1, 0};
    for (int ring = 1; static_cast<int>(out.size()) < n; ++ring) {
        int q = 0, r = ring; // start at the "south" corner of the ring
        for (int side = 0; side < 6 && static_cast<int>(out.size()) < n; ++side)
            for (int step = 0; step < ring && static_cast<int>(out.size()) < n; ++step) {
                out.emplace_back(q, r);
                q += dq[side];
                r += dr[side];
            }
    }
    return out;
}

int poisson_draw(Rng& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

int categorical_draw(Rng& rng, const std::vector<double>& weights) {
    double u = rng.uniform();
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

bool inside_hex(double x, double y, double edge) {
    // flat-top hexagon centered at the origin
    const double s3 = std::sqrt(3.0);
    return std::fabs(x) <= edge && std::fabs(y) <= s3 / 2.0 * edge &&
           std::fabs(y) <= s3 * (edge - std::fabs(x)) + 1e-9;
}

double holiday_multiplier(int code, bool is_call) {
    if (code <= 0) return 1.0;
    Rng rng(static_cast<std::uint64_t>(code) * 7919u + (is_call ? 1u : 2u));
    return is_call ? 0.85 + 0.55 * rng.uniform() : 0.90 + 0.35 * rng.uniform();
}

} // namespace

CategoryVocab make_vocab(int n_primary, int n_secondary) {
    require(n_primary >= 1, "need at least one primary category");
    require(n_secondary >= n_primary, "need at least one secondary per primary");
    CategoryVocab v;
    if (n_primary == 6 && n_secondary == 18) {
        v.primary_names = {"retail", "dining", "residence", "industry", "transport", "leisure"};
        v.secondary_names = {"shopping_mall",     "convenience_store", "supermarket",
                             "restaurant",        "cafe",              "fast_food",
                             "apartment_complex", "dormitory",         "villa_district",
                             "factory",           "warehouse",         "business_park",
                             "metro_station",     "bus_terminal",      "parking_lot",
                             "cinema",            "gym",               "city_park"};
    } else {
        for (int i = 0; i < n_primary; ++i) v.primary_names.push_back("primary" + std::to_string(i));
        for (int j = 0; j < n_secondary; ++j)
            v.secondary_names.push_back("secondary" + std::to_string(j));
    }
    v.secondary_to_primary.resize(static_cast<size_t>(n_secondary));
    for (int j = 0; j < n_secondary; ++j)
        v.secondary_to_primary[static_cast<size_t>(j)] =
            static_cast<int>(static_cast<long long>(j) * n_primary / n_secondary);
    v.validate();
    return v;
}

City generate_city(const CityConfig& cfg) {
    require(cfg.counties >= 1, "county count must be positive");
    require(cfg.grids_per_county >= 1, "grids per county must be positive");
    require(cfg.primary_categories >= 1 && cfg.secondary_categories >= 1,
            "category counts must be positive");
    require(!cfg.archetypes.empty(), "archetype list must be nonempty");
    require(cfg.archetype_mix.size() == cfg.archetypes.size(),
            "archetype_mix must have one entry per archetype");
    require(cfg.hex_edge_m > 0.0, "hex edge must be positive");
    int mix_total = 0;
    for (int m : cfg.archetype_mix) {
        require(m >= 0, "archetype_mix entries must be nonnegative");
        mix_total += m;
    }
    require(mix_total == cfg.counties, "archetype_mix must sum to the county count");

    City city;
    city.hex_edge_m = cfg.hex_edge_m;
    city.vocab = make_vocab(cfg.primary_categories, cfg.secondary_categories);

    // spread the county patches far enough apart that they never touch
    int ring = 0;
    while (1 + 3 * ring * (ring + 1) < cfg.grids_per_county) ++ring;
    const int stride = 2 * ring + 3;
    const auto county_bases = hex_spiral(cfg.counties);
    const auto cell_offsets = hex_spiral(cfg.grids_per_county);

    std::vector<std::string> county_arch;
    for (size_t a = 0; a < cfg.archetypes.size(); ++a)
        for (int i = 0; i < cfg.archetype_mix[a]; ++i) county_arch.push_back(cfg.archetypes[a]);

    const double s3 = std::sqrt(3.0);
    for (int c = 0; c < cfg.counties; ++c) {
        County county;
        county.id = "c" + std::to_string(c);
        county.archetype = county_arch[static_cast<size_t>(c)];
        for (int i = 0; i < cfg.grids_per_county; ++i) {
            GridCell cell;
            cell.q = county_bases[static_cast<size_t>(c)].first * stride +
                     cell_offsets[static_cast<size_t>(i)].first;
            cell.r = county_bases[static_cast<size_t>(c)].second * stride +
                     cell_offsets[static_cast<size_t>(i)].second;
            cell.id = "g" + std::to_string(city.grids.size());
            cell.x_m = cfg.hex_edge_m * 1.5 * cell.q;
            cell.y_m = cfg.hex_edge_m * s3 * (cell.r + cell.q / 2.0);
            cell.county = c;
            county.grid_indexes.push_back(static_cast<int>(city.grids.size()));
            city.grids.push_back(cell);
        }
        city.counties.push_back(std::move(county));
    }

    // POIs, archetype-flavored
    Rng prng = Rng(cfg.seed).fork(11);
    city.pois_by_grid.assign(city.grids.size(), {});
    for (size_t gi = 0; gi < city.grids.size(); ++gi) {
        const GridCell& cell = city.grids[gi];
        const ArchParams ap =
            archetype_params(city.counties[static_cast<size_t>(cell.county)].archetype,
                             cfg.primary_categories);
        const int count = poisson_draw(prng, cfg.pois_per_grid * ap.poi_density);
        for (int k = 0; k < count; ++k) {
            Poi poi;
            poi.id = "p" + std::to_string(city.pois.size());
            double dx, dy;
            do {
                dx = prng.uniform(-cfg.hex_edge_m, cfg.hex_edge_m);
                dy = prng.uniform(-s3 / 2.0 * cfg.hex_edge_m, s3 / 2.0 * cfg.hex_edge_m);
            } while (!inside_hex(dx, dy, cfg.hex_edge_m));
            poi.x_m = cell.x_m + dx;
            poi.y_m = cell.y_m + dy;
            poi.primary_cat = categorical_draw(prng, ap.cat_weights);
            // uniform over the secondaries of that primary
            std::vector<int> secs;
            for (int j = 0; j < city.vocab.n_secondary(); ++j)
                if (city.vocab.secondary_to_primary[static_cast<size_t>(j)] == poi.primary_cat)
                    secs.push_back(j);
            poi.secondary_cat = secs[static_cast<size_t>(prng.uniform_int(static_cast<int>(secs.size())))];
            city.pois_by_grid[gi].push_back(static_cast<int>(city.pois.size()));
            city.pois.push_back(poi);
        }
    }

    city.validate();
    return city;
}

double archetype_template(const std::string& archetype, const PanelConfig& cfg,
                          const std::string& indicator, int weekday, int slot) {
    require(indicator == "call" || indicator == "tsh", "unknown indicator " + indicator);
    const ArchParams p = archetype_params(archetype, 6);
    const double h = slot / 2.0 + 0.25; // half-hour slot center
    const bool call = indicator == "call";

    double profile;
    if (call) {
        profile = 0.40 + p.morning_amp * gauss(h, p.morning_h, p.width) +
                  p.evening_amp * gauss(h, p.evening_h, p.width) + 0.50 * gauss(h, 14.0, 4.5);
    } else {
        // supply ramps up a little earlier and decays later than demand
        profile = 0.55 + 0.7 * p.morning_amp * gauss(h, p.morning_h - 0.5, p.width + 0.4) +
                  0.7 * p.evening_amp * gauss(h, p.evening_h + 0.5, p.width + 0.4) +
                  0.45 * gauss(h, 14.0, 5.5);
    }
    const double weekend = weekday >= 5 ? (call ? p.weekend : std::sqrt(p.weekend)) : 1.0;
    const double scale = call ? p.scale : 1.2 * p.scale;

    const double shape = 1.0 + cfg.seasonality * (profile - 1.0);
    const double scale_eff = 1.0 + cfg.seasonality * (scale - 1.0);
    const double weekend_eff = 1.0 + cfg.seasonality * (weekend - 1.0);
    return cfg.base_level * scale_eff * weekend_eff * shape;
}

std::pair<SeriesPanel, ExogenousPanel> generate_panel(const City& city, const PanelConfig& cfg) {
    require(cfg.weeks >= 1, "weeks must be >= 1");
    require(cfg.base_level > 0.0, "base level must be positive");
    require(cfg.noise_level >= 0.0 && cfg.event_density >= 0.0 && cfg.rain_probability >= 0.0 &&
                cfg.holiday_probability >= 0.0,
            "panel config rates must be nonnegative");
    require(cfg.n_holiday_codes >= 1 && cfg.n_event_codes >= 1, "code vocabularies must be nonempty");

    const int n_regions = static_cast<int>(city.counties.size());
    const int steps = cfg.weeks * kStepsPerWeek;
    const int days = cfg.weeks * 7;
    const std::int64_t start = parse_iso_minutes(cfg.start_timestamp);
    require(half_hour_aligned(start), "start timestamp must be half-hour aligned");

    SeriesPanel panel;
    panel.start_minutes = start;
    for (const County& c : city.counties) panel.region_ids.push_back(c.id);
    panel.call = Tensor::zeros({steps, n_regions});
    panel.tsh = Tensor::zeros({steps, n_regions});

    ExogenousPanel exo;
    exo.rainfall = Tensor::zeros({steps, n_regions});
    exo.holiday.assign(static_cast<size_t>(steps), 0);
    exo.event.assign(static_cast<size_t>(steps) * static_cast<size_t>(n_regions), 0);

    const Rng root(cfg.seed);

    // holiday calendar, shared across counties
    {
        Rng hrng = root.fork(1);
        for (int day = 0; day < days; ++day) {
            if (hrng.uniform() < cfg.holiday_probability) {
                const int code = 1 + hrng.uniform_int(cfg.n_holiday_codes);
                for (int s = 0; s < kStepsPerDay; ++s)
                    exo.holiday[static_cast<size_t>(day * kStepsPerDay + s)] = code;
            }
        }
    }

    // event response factors per (event type, archetype), fixed per seed
    std::vector<std::vector<double>> event_factor(static_cast<size_t>(cfg.n_event_codes) + 1);
    {
        Rng erng = root.fork(2);
        for (int type = 1; type <= cfg.n_event_codes; ++type) {
            auto& per_arch = event_factor[static_cast<size_t>(type)];
            per_arch.resize(city.counties.size());
            for (size_t c = 0; c < city.counties.size(); ++c) {
                // keyed by archetype so same-archetype counties respond alike
                Rng a(erng.fork(name_hash(city.counties[c].archetype)).next_u64() ^
                      static_cast<std::uint64_t>(type));
                per_arch[c] = 1.6 + 1.0 * a.uniform();
            }
        }
    }

    // event windows per county
    for (int c = 0; c < n_regions; ++c) {
        Rng ev = root.fork(100 + static_cast<std::uint64_t>(c));
        const int n_events = poisson_draw(ev, cfg.event_density * cfg.weeks);
        for (int e = 0; e < n_events; ++e) {
            const int day = ev.uniform_int(days);
            const int start_slot = 16 + ev.uniform_int(26); // 08:00..20:30
            const int duration = 3 + ev.uniform_int(6);     // 1.5h..4h
            const int type = 1 + ev.uniform_int(cfg.n_event_codes);
            for (int s = start_slot; s < std::min(start_slot + duration, kStepsPerDay); ++s)
                exo.event[static_cast<size_t>(day * kStepsPerDay + s) * n_regions +
                          static_cast<size_t>(c)] = type;
        }
    }

    // rain episodes per (county, day)
    for (int c = 0; c < n_regions; ++c) {
        Rng rr = root.fork(200 + static_cast<std::uint64_t>(c));
        for (int day = 0; day < days; ++day) {
            if (rr.uniform() >= cfg.rain_probability) continue;
            const int start_slot = rr.uniform_int(kStepsPerDay - 4);
            const int duration = 4 + rr.uniform_int(13);
            const double peak = 2.0 + 18.0 * rr.uniform();
            for (int s = start_slot; s < std::min(start_slot + duration, kStepsPerDay); ++s) {
                // hat-shaped episode
                const double frac = (s - start_slot + 0.5) / duration;
                const double mm = peak * (1.0 - std::fabs(2.0 * frac - 1.0));
                exo.rainfall.at(day * kStepsPerDay + s, c) = mm;
            }
        }
    }

    // assemble the series
    std::vector<Rng> noise;
    noise.reserve(static_cast<size_t>(n_regions));
    for (int c = 0; c < n_regions; ++c) noise.push_back(root.fork(300 + static_cast<std::uint64_t>(c)));

    for (int t = 0; t < steps; ++t) {
        const std::int64_t minutes = panel.minutes_at(t);
        const int wd = weekday_of(minutes);
        const int slot = slot_of_day(minutes);
        const int hcode = exo.holiday[static_cast<size_t>(t)];
        for (int c = 0; c < n_regions; ++c) {
            const std::string& arch = city.counties[static_cast<size_t>(c)].archetype;
            const ArchParams ap = archetype_params(arch, 6);
            const int ecode = exo.event_at(t, c, n_regions);
            const double mm = exo.rainfall.at(t, c);

            for (int ind = 0; ind < 2; ++ind) {
                const bool call = ind == 0;
                double v = archetype_template(arch, cfg, call ? "call" : "tsh", wd, slot);
                v *= holiday_multiplier(hcode, call);
                if (ecode > 0) {
                    const double f = event_factor[static_cast<size_t>(ecode)][static_cast<size_t>(c)];
                    v *= call ? f : 1.0 + 0.5 * (f - 1.0);
                }
                const double rain_gain = call ? ap.rain_gain : 0.5 * ap.rain_gain;
                v *= 1.0 + rain_gain * (1.0 - std::exp(-mm / 8.0));
                if (cfg.noise_level > 0.0)
                    v = std::max(0.0, v * (1.0 + cfg.noise_level * noise[static_cast<size_t>(c)].normal()));
                (call ? panel.call : panel.tsh).at(t, c) = v;
            }
        }
    }

    panel.validate();
    return {std::move(panel), std::move(exo)};
}

} // namespace ridecast
