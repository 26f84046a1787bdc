#include "ridecast/uplift.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "ridecast/csvio.hpp"

namespace ridecast {

namespace {

std::string fmt_shortest(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    ensure(res.ec == std::errc(), "fmt_shortest: conversion failed");
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void check_samples(const std::vector<UpliftSample>& samples, int in_dim, int n_treatments) {
    require(!samples.empty(), "uplift: no samples");
    for (const UpliftSample& s : samples) {
        require(static_cast<int>(s.features.size()) == in_dim,
                "uplift: sample " + s.sample_id + " has a mismatched feature dimension");
        require(s.treatment >= 0 && s.treatment < n_treatments,
                "uplift: sample " + s.sample_id + " names an unknown treatment");
        require(s.converted == 0 || s.converted == 1,
                "uplift: sample " + s.sample_id + " outcome must be 0 or 1");
        for (double f : s.features)
            require(std::isfinite(f), "uplift: sample " + s.sample_id + " has non-finite features");
    }
}

Tensor batch_features(const std::vector<UpliftSample>& batch, int in_dim) {
    Tensor x = Tensor::zeros({static_cast<int>(batch.size()), in_dim});
    for (size_t i = 0; i < batch.size(); ++i)
        for (int j = 0; j < in_dim; ++j)
            x.at(static_cast<int>(i), j) = batch[i].features[static_cast<size_t>(j)];
    return x;
}

std::string head_name(int i) { return "head" + std::to_string(i); }

} // namespace

// ---- treatments and samples -----------------------------------------------------

int TreatmentSet::index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

void TreatmentSet::validate() const {
    require(!names.empty(), "treatments: the control slot is required");
    for (size_t i = 0; i < names.size(); ++i) {
        require(!names[i].empty(), "treatments: empty name");
        for (size_t j = i + 1; j < names.size(); ++j)
            require(names[i] != names[j], "treatments: duplicate name " + names[i]);
    }
}

std::vector<double> augment_features(const UpliftSample& sample, const EmbeddingLibrary& lib,
                                     const std::string& level) {
    require(level == "grid" || level == "county", "augment_features: unknown level " + level);
    const EmbeddingRecord* hit = nullptr;
    for (const EmbeddingRecord& rec : lib.records)
        if (rec.level == level && rec.region_id == sample.region_id) {
            hit = &rec;
            break;
        }
    ensure(hit != nullptr, "augment_features: no " + level + " embedding for region " +
                               sample.region_id);
    std::vector<double> out = sample.features;
    out.reserve(out.size() + hit->vec.size());
    for (float v : hit->vec) out.push_back(static_cast<double>(v));
    return out;
}

std::vector<UpliftSample> augment_samples(const std::vector<UpliftSample>& samples,
                                          const EmbeddingLibrary& lib,
                                          const std::string& level) {
    std::vector<UpliftSample> out = samples;
    for (UpliftSample& s : out) s.features = augment_features(s, lib, level);
    return out;
}

// ---- model ------------------------------------------------------------------------

void UpliftConfig::validate() const {
    require(in_dim >= 1, "uplift config: in_dim must be positive");
    require(hidden >= 1, "uplift config: hidden width must be positive");
    require(max_steps >= 1 && batch >= 1 && eval_every >= 1,
            "uplift config: step counts must be positive");
    require(lr > 0.0, "uplift config: learning rate must be positive");
}

UpliftModel make_uplift_model(const UpliftConfig& cfg, const TreatmentSet& treatments) {
    cfg.validate();
    treatments.validate();
    UpliftModel m;
    m.cfg = cfg;
    m.treatments = treatments;
    Rng rng(cfg.seed ^ 0x9d2c5680aull);
    add_linear(m.params, "trunk0", cfg.in_dim, cfg.hidden, rng);
    add_linear(m.params, "trunk1", cfg.hidden, cfg.hidden, rng);
    for (int i = 0; i < treatments.count(); ++i)
        add_linear(m.params, head_name(i), cfg.hidden, 1, rng);
    return m;
}

Var uplift_logits(Tape& t, const UpliftModel& m, const ParamSet::Bound& P, const Tensor& x) {
    require(x.ndim() == 2 && x.cols() == m.cfg.in_dim, "uplift_logits: bad feature shape");
    require(x.all_finite(), "uplift_logits: non-finite features");
    Var h = t.tanh(linear(t, P, "trunk0", t.constant(x)));
    h = t.tanh(linear(t, P, "trunk1", h));
    std::vector<Var> heads;
    heads.reserve(static_cast<size_t>(m.treatments.count()));
    for (int i = 0; i < m.treatments.count(); ++i)
        heads.push_back(linear(t, P, head_name(i), h));
    return t.concat_cols(heads);
}

Var uplift_observed_ce(Tape& t, const UpliftModel& m, const ParamSet::Bound& P,
                       const std::vector<UpliftSample>& batch) {
    check_samples(batch, m.cfg.in_dim, m.treatments.count());
    const int n = static_cast<int>(batch.size());
    const int k = m.treatments.count();

    const Var logits = uplift_logits(t, m, P, batch_features(batch, m.cfg.in_dim));
    Tensor onehot = Tensor::zeros({n, k});
    Tensor y = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i) {
        onehot.at(i, batch[static_cast<size_t>(i)].treatment) = 1.0;
        y.at(i, 0) = static_cast<double>(batch[static_cast<size_t>(i)].converted);
    }
    // Only the observed head contributes, so the others receive no gradient.
    const Var z = t.row_sums(t.mul(logits, t.constant(onehot)));
    // Stable softplus(z) = relu(z) + log(1 + exp(-|z|)); CE = softplus(z) - y*z.
    const Var softplus = t.add(t.relu(z), t.log(t.add_scalar(t.exp(t.neg(t.abs(z))), 1.0)));
    return t.mean_all(t.sub(softplus, t.mul(t.constant(y), z)));
}

UpliftTrainResult train_uplift(const std::vector<UpliftSample>& samples,
                               const UpliftConfig& cfg, const TreatmentSet& treatments) {
    treatments.validate();
    UpliftConfig effective = cfg;
    if (effective.in_dim == 0 && !samples.empty())
        effective.in_dim = static_cast<int>(samples[0].features.size());
    effective.validate();
    check_samples(samples, effective.in_dim, treatments.count());

    std::vector<int> seen(static_cast<size_t>(treatments.count()), 0);
    for (const UpliftSample& s : samples) seen[static_cast<size_t>(s.treatment)] = 1;
    for (int i = 0; i < treatments.count(); ++i)
        require(seen[static_cast<size_t>(i)] == 1,
                "train_uplift: treatment " + treatments.names[static_cast<size_t>(i)] +
                    " is never observed");

    UpliftTrainResult out;
    out.model = make_uplift_model(effective, treatments);

    const int n = static_cast<int>(samples.size());
    Rng order_rng(effective.seed ^ 0x7e57ab1e5eedull);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    size_t cursor = 0;
    auto next_index = [&]() {
        if (cursor == order.size()) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    AdamConfig adam;
    adam.lr = effective.lr;
    double window_sum = 0.0;
    int window_count = 0;
    for (int step = 1; step <= effective.max_steps; ++step) {
        std::vector<UpliftSample> batch;
        batch.reserve(static_cast<size_t>(std::min(effective.batch, n)));
        for (int b = 0; b < std::min(effective.batch, n); ++b)
            batch.push_back(samples[static_cast<size_t>(next_index())]);

        Tape tape;
        const ParamSet::Bound bound = out.model.params.bind(tape, true);
        const Var loss = uplift_observed_ce(tape, out.model, bound, batch);
        const double lv = tape.value(loss).item();
        ensure(std::isfinite(lv), "train_uplift: loss diverged at step " + std::to_string(step));
        tape.backward(loss);
        out.model.params.adam_step_all(tape, bound, adam);

        window_sum += lv;
        window_count += 1;
        if (step % effective.eval_every == 0 || step == effective.max_steps) {
            out.loss_curve.push_back(window_sum / window_count);
            window_sum = 0.0;
            window_count = 0;
        }
    }
    return out;
}

Tensor uplift_probabilities(const UpliftModel& m, const std::vector<double>& x) {
    require(static_cast<int>(x.size()) == m.cfg.in_dim,
            "uplift_probabilities: feature dimension mismatch");
    Tape t;
    const ParamSet::Bound P = m.params.bind(t, false);
    const Var logits = uplift_logits(t, m, P, Tensor::row(x));
    Tensor p = t.value(logits);
    for (double& v : p.data) v = 1.0 / (1.0 + std::exp(-v));
    return p;
}

double uplift(const UpliftModel& m, const std::vector<double>& x,
              const std::string& treatment) {
    const int idx = m.treatments.index_of(treatment);
    require(idx >= 0, "uplift: unknown treatment " + treatment);
    const Tensor p = uplift_probabilities(m, x);
    return p.at(0, idx) - p.at(0, 0);
}

// ---- Qini -------------------------------------------------------------------------

double qini(const std::vector<double>& scores, const std::vector<int>& outcomes,
            const std::vector<int>& treatments, int control) {
    const size_t n = scores.size();
    require(n >= 1, "qini: no samples");
    require(outcomes.size() == n && treatments.size() == n, "qini: length mismatch");
    int treated = 0, controls = 0;
    for (size_t i = 0; i < n; ++i) {
        require(std::isfinite(scores[i]), "qini: non-finite score");
        require(outcomes[i] == 0 || outcomes[i] == 1, "qini: outcomes must be 0 or 1");
        (treatments[i] == control ? controls : treated) += 1;
    }
    require(treated >= 1, "qini: no treated samples");
    require(controls >= 1, "qini: no control samples");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });

    // Curve values at every prefix, then the mean gap to the diagonal.
    std::vector<double> curve(n, 0.0);
    double conv_t = 0.0, conv_c = 0.0;
    int n_t = 0, n_c = 0;
    for (size_t k = 0; k < n; ++k) {
        const int i = order[k];
        if (treatments[static_cast<size_t>(i)] == control) {
            n_c += 1;
            conv_c += outcomes[static_cast<size_t>(i)];
        } else {
            n_t += 1;
            conv_t += outcomes[static_cast<size_t>(i)];
        }
        curve[k] = conv_t - (n_c > 0 ? conv_c * static_cast<double>(n_t) / n_c : 0.0);
    }
    const double final_value = curve[n - 1];
    double area = 0.0;
    for (size_t k = 0; k < n; ++k)
        area += curve[k] - final_value * static_cast<double>(k + 1) / static_cast<double>(n);
    return area / static_cast<double>(n);
}

std::vector<double> evaluate_qini(const UpliftModel& m,
                                  const std::vector<UpliftSample>& samples) {
    const int k = m.treatments.count();
    check_samples(samples, m.cfg.in_dim, k);

    // One batched forward pass for all sample probabilities.
    Tape t;
    const ParamSet::Bound P = m.params.bind(t, false);
    const Var logits = uplift_logits(t, m, P, batch_features(samples, m.cfg.in_dim));
    Tensor p = t.value(logits);
    for (double& v : p.data) v = 1.0 / (1.0 + std::exp(-v));

    std::vector<double> out(static_cast<size_t>(k), 0.0);
    for (int ti = 1; ti < k; ++ti) {
        std::vector<double> scores;
        std::vector<int> outcomes, groups;
        for (size_t i = 0; i < samples.size(); ++i) {
            const int obs = samples[i].treatment;
            if (obs != 0 && obs != ti) continue;
            scores.push_back(p.at(static_cast<int>(i), ti) - p.at(static_cast<int>(i), 0));
            outcomes.push_back(samples[i].converted);
            groups.push_back(obs);
        }
        out[static_cast<size_t>(ti)] = qini(scores, outcomes, groups, 0);
    }
    return out;
}

void write_qini_report_json(const TreatmentSet& treatments,
                            const std::vector<double>& qini_per_treatment,
                            const std::string& path) {
    treatments.validate();
    require(qini_per_treatment.size() == treatments.names.size(),
            "qini report: one coefficient per treatment required");
    nlohmann::json j;
    j["control"] = treatments.names[0];
    j["treatments"] = nlohmann::json::array();
    for (size_t i = 1; i < treatments.names.size(); ++i)
        j["treatments"].push_back(
            {{"name", treatments.names[i]}, {"qini", qini_per_treatment[i]}});
    write_text_file(path, j.dump(2) + "\n");
}

// ---- synthetic data -----------------------------------------------------------------

void UpliftDataConfig::validate() const {
    treatments.validate();
    require(treatments.count() >= 2, "uplift data: need the control plus one treatment");
    require(n_samples >= 1, "uplift data: sample count must be positive");
    require(n_order_features >= 1, "uplift data: need at least one order feature");
    require(base_rate > 0.0 && base_rate < 1.0, "uplift data: base rate must be in (0, 1)");
    require(order_weight >= 0.0 && interaction_scale >= 0.0,
            "uplift data: effect scales must be nonnegative");
}

double uplift_true_effect(const std::string& archetype, int treatment,
                          const UpliftDataConfig& cfg) {
    require(treatment >= 0 && treatment < cfg.treatments.count(),
            "uplift_true_effect: unknown treatment index");
    if (treatment == 0) return 0.0;
    Rng rng(fnv1a64(archetype) ^ (cfg.seed * 0x9e3779b97f4a7c15ull) ^
            (static_cast<std::uint64_t>(treatment) * 0xbf58476d1ce4e5b9ull));
    return cfg.interaction_scale * rng.uniform(-1.0, 1.0);
}

std::vector<UpliftSample> generate_uplift_data(const City& city, const UpliftDataConfig& cfg) {
    cfg.validate();
    require(!city.counties.empty(), "uplift data: city has no counties");
    Rng rng(cfg.seed ^ 0x0b5e55edull);
    std::vector<UpliftSample> out;
    out.reserve(static_cast<size_t>(cfg.n_samples));
    char idbuf[24];
    for (int i = 0; i < cfg.n_samples; ++i) {
        const int ci = rng.uniform_int(static_cast<int>(city.counties.size()));
        const County& county = city.counties[static_cast<size_t>(ci)];
        UpliftSample s;
        std::snprintf(idbuf, sizeof(idbuf), "s%06d", i);
        s.sample_id = idbuf;
        s.region_id = county.id;
        s.treatment = rng.uniform_int(cfg.treatments.count());
        double order_effect = 0.0;
        for (int j = 0; j < cfg.n_order_features; ++j) {
            s.features.push_back(rng.uniform(-1.0, 1.0));
            order_effect += s.features.back();
        }
        order_effect *= cfg.order_weight / cfg.n_order_features;
        const double p = std::clamp(cfg.base_rate + order_effect +
                                        uplift_true_effect(county.archetype, s.treatment, cfg),
                                    0.02, 0.98);
        s.converted = rng.uniform() < p ? 1 : 0;
        out.push_back(std::move(s));
    }
    return out;
}

// ---- samples CSV ----------------------------------------------------------------------

void write_uplift_csv(const std::vector<UpliftSample>& samples,
                      const TreatmentSet& treatments, const std::string& path) {
    treatments.validate();
    require(!samples.empty(), "uplift csv: no samples");
    const size_t dim = samples[0].features.size();
    std::string out = "sample_id,region_id,treatment,converted";
    for (size_t j = 0; j < dim; ++j) out += ",f" + std::to_string(j);
    out += "\n";
    for (const UpliftSample& s : samples) {
        require(s.features.size() == dim, "uplift csv: ragged feature dimensions");
        require(s.treatment >= 0 && s.treatment < treatments.count(),
                "uplift csv: sample " + s.sample_id + " names an unknown treatment");
        out += s.sample_id + "," + s.region_id + "," +
               treatments.names[static_cast<size_t>(s.treatment)] + "," +
               std::to_string(s.converted);
        for (double f : s.features) out += "," + fmt_shortest(f);
        out += "\n";
    }
    write_text_file(path, out);
}

std::vector<UpliftSample> read_uplift_csv(const std::string& path,
                                          const TreatmentSet& treatments) {
    treatments.validate();
    const CsvFile csv = read_csv(path);
    require(csv.header.size() >= 5, "uplift csv: expected at least one feature column");
    std::vector<std::string> expected = {"sample_id", "region_id", "treatment", "converted"};
    for (size_t j = 0; j + 4 < csv.header.size(); ++j) expected.push_back("f" + std::to_string(j));
    expect_header(csv, expected, path);
    const size_t dim = csv.header.size() - 4;

    std::vector<UpliftSample> out;
    out.reserve(csv.rows.size());
    for (const CsvRow& row : csv.rows) {
        UpliftSample s;
        s.sample_id = row.fields[0];
        s.region_id = row.fields[1];
        s.treatment = treatments.index_of(row.fields[2]);
        require(s.treatment >= 0, "uplift csv: unknown treatment " + row.fields[2] +
                                      " at line " + std::to_string(row.line));
        const long long conv = parse_int_field(row, 3, path);
        require(conv == 0 || conv == 1,
                "uplift csv: outcome must be 0 or 1 at line " + std::to_string(row.line));
        s.converted = static_cast<int>(conv);
        for (size_t j = 0; j < dim; ++j)
            s.features.push_back(parse_double_field(row, 4 + j, path));
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace ridecast
