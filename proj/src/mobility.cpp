#include "ridecast/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ridecast/csvio.hpp"
#include "ridecast/timeutil.hpp"

namespace ridecast {

bool MobilityProfiles::complete() const {
    for (double c : counts.data)
        if (c <= 0.0) return false;
    return true;
}

MobilityProfiles aggregate_observations(std::vector<std::pair<std::int64_t, double>> obs) {
    require(!obs.empty(), "aggregate_observations: no observations");
    for (const auto& o : obs)
        require(std::isfinite(o.second), "aggregate_observations: non-finite value");
    std::sort(obs.begin(), obs.end());

    MobilityProfiles p;
    p.hour_day = Tensor::zeros({7, 24});
    p.counts = Tensor::zeros({7, 24});
    Tensor sums = Tensor::zeros({7, 24});

    // pair 30-min slots into hourly means first, then bucket; carrying the raw
    // observation count per hour keeps weighted means equal to raw means even
    // when an hour at a panel boundary has a single slot
    size_t i = 0;
    while (i < obs.size()) {
        const std::int64_t hour_epoch = obs[i].first / 60;
        double sum = 0.0;
        int cnt = 0;
        while (i < obs.size() && obs[i].first / 60 == hour_epoch) {
            sum += obs[i].second;
            ++cnt;
            ++i;
        }
        const std::int64_t minutes = hour_epoch * 60;
        const int w = weekday_of(minutes);
        const int h = hour_of(minutes);
        // weighting the hourly mean (sum/cnt) by its cnt collapses to the raw sum
        sums.at(w, h) += sum;
        p.counts.at(w, h) += cnt;
    }

    for (int w = 0; w < 7; ++w)
        for (int h = 0; h < 24; ++h)
            p.hour_day.at(w, h) = p.counts.at(w, h) > 0.0 ? sums.at(w, h) / p.counts.at(w, h) : 0.0;

    p.daily.assign(24, 0.0);
    for (int h = 0; h < 24; ++h) {
        double total = 0.0, n = 0.0;
        for (int w = 0; w < 7; ++w) {
            total += p.hour_day.at(w, h) * p.counts.at(w, h);
            n += p.counts.at(w, h);
        }
        p.daily[static_cast<size_t>(h)] = n > 0.0 ? total / n : 0.0;
    }
    p.weekly.assign(7, 0.0);
    for (int w = 0; w < 7; ++w) {
        double total = 0.0, n = 0.0;
        for (int h = 0; h < 24; ++h) {
            total += p.hour_day.at(w, h) * p.counts.at(w, h);
            n += p.counts.at(w, h);
        }
        p.weekly[static_cast<size_t>(w)] = n > 0.0 ? total / n : 0.0;
    }
    return p;
}

MobilityProfiles aggregate_profiles(const SeriesPanel& panel, int region,
                                    const std::string& indicator) {
    require(region >= 0 && region < panel.regions(), "aggregate_profiles: region out of range");
    require(indicator == "call" || indicator == "tsh",
            "aggregate_profiles: indicator must be 'call' or 'tsh'");
    const Tensor& series = indicator == "call" ? panel.call : panel.tsh;
    std::vector<std::pair<std::int64_t, double>> obs;
    obs.reserve(static_cast<size_t>(panel.steps()));
    for (int s = 0; s < panel.steps(); ++s)
        obs.emplace_back(panel.minutes_at(s), series.at(s, region));
    return aggregate_observations(std::move(obs));
}

void write_profiles_csv(const MobilityProfiles& p, const std::string& path) {
    static const char* kDays[7] = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
    std::string out = "weekday";
    for (int h = 0; h < 24; ++h) out += ",h" + std::to_string(h);
    out += "\n";
    char buf[64];
    for (int w = 0; w < 7; ++w) {
        out += kDays[w];
        for (int h = 0; h < 24; ++h) {
            std::snprintf(buf, sizeof(buf), ",%.9g", p.hour_day.at(w, h));
            out += buf;
        }
        out += "\n";
    }
    write_text_file(path, out);
}

Tensor flatten_profiles(const MobilityProfiles& p) {
    require(p.daily.size() == 24 && p.weekly.size() == 7 && p.hour_day.size() == 168,
            "flatten_profiles: malformed profiles");
    Tensor flat = Tensor::zeros({1, 199});
    int j = 0;
    for (double v : p.daily) flat[j++] = v;
    for (double v : p.weekly) flat[j++] = v;
    for (double v : p.hour_day.data) flat[j++] = v;
    return flat;
}

MobilityModel make_mobility_model(int d, int hidden, int heads, std::uint64_t seed,
                                  bool normalize) {
    require(d >= 1 && hidden >= 1 && heads >= 1, "make_mobility_model: bad dimensions");
    require(d % heads == 0, "make_mobility_model: heads must divide d");
    MobilityModel m;
    m.d = d;
    m.hidden = hidden;
    m.heads = heads;
    m.normalize = normalize;
    Rng rng(seed);
    add_linear(m.params, "mlp1", 199, hidden, rng);
    add_linear(m.params, "mlp2", hidden, 168, rng);
    add_linear(m.params, "tok", 24, d, rng);
    add_mha(m.params, "attn", d, rng);
    return m;
}

Var encode_mobility(Tape& t, const MobilityModel& m, const ParamSet::Bound& P,
                    const MobilityProfiles& profiles) {
    require(profiles.complete(), "encode_mobility: profiles must cover every weekday-hour cell");
    Tensor flat = flatten_profiles(profiles);
    if (m.normalize) {
        double mean = 0.0;
        for (double v : flat.data) mean += v;
        mean /= flat.size();
        double var = 0.0;
        for (double v : flat.data) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / flat.size());
        for (double& v : flat.data) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    }
    Var h = t.tanh(linear(t, P, "mlp1", t.constant(std::move(flat))));
    Var grid = t.reshape(linear(t, P, "mlp2", h), {7, 24});
    Var tokens = linear(t, P, "tok", grid); // {7, d}
    Var attended = multi_head_attention(t, P, "attn", tokens, tokens, tokens, m.heads);
    return t.mean_rows(attended);
}

Var encode_mobility_rows(Tape& t, const MobilityModel& m, const ParamSet::Bound& P,
                         const std::vector<MobilityProfiles>& profiles) {
    require(!profiles.empty(), "encode_mobility_rows: no profiles");
    std::vector<Var> rows;
    rows.reserve(profiles.size());
    for (const auto& p : profiles) rows.push_back(encode_mobility(t, m, P, p));
    return t.concat_rows(rows);
}

} // namespace ridecast
