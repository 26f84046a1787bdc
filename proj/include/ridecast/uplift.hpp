#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ridecast/city.hpp"
#include "ridecast/common.hpp"
#include "ridecast/embedlib.hpp"
#include "ridecast/nn.hpp"
#include "ridecast/tape.hpp"
#include "ridecast/tensor.hpp"

namespace ridecast {

// Multi-treatment uplift modeling: a shared MLP trunk with one sigmoid head
// per treatment, trained with cross-entropy on each sample's observed
// treatment only, scored by per-treatment conversion-probability lift over
// control, and evaluated with the Qini coefficient.

// ---- treatments and samples ----------------------------------------------------

struct TreatmentSet {
    // names[0] is the control treatment ST_0; labels are opaque.
    std::vector<std::string> names{"control"};
    int count() const { return static_cast<int>(names.size()); }
    // Index of a treatment name, -1 when absent.
    int index_of(const std::string& name) const;
    // Nonempty with unique names (the control slot is names[0] by position).
    void validate() const;
};

struct UpliftSample {
    std::string sample_id;
    std::string region_id;
    int treatment = 0; // index into TreatmentSet::names
    int converted = 0; // {0, 1}
    std::vector<double> features;

    bool operator==(const UpliftSample&) const = default;
};

// Appends the region's embedding vector at the given level to the sample's
// features ("county" or "grid"). A missing region fails naming the region.
std::vector<double> augment_features(const UpliftSample& sample,
                                     const EmbeddingLibrary& lib,
                                     const std::string& level = "county");
std::vector<UpliftSample> augment_samples(const std::vector<UpliftSample>& samples,
                                          const EmbeddingLibrary& lib,
                                          const std::string& level = "county");

// ---- model ----------------------------------------------------------------------

struct UpliftConfig {
    int in_dim = 0;  // feature dimension (set to the data's width)
    int hidden = 32; // trunk width; two tanh layers
    int max_steps = 300;
    int batch = 64;
    int eval_every = 10; // steps per logged loss entry
    double lr = 1e-2;
    std::uint64_t seed = 0;
    void validate() const;
};

struct UpliftModel {
    UpliftConfig cfg;
    TreatmentSet treatments;
    ParamSet params; // "trunk0", "trunk1", "head<i>"
};

UpliftModel make_uplift_model(const UpliftConfig& cfg, const TreatmentSet& treatments);

// All-head logits for a feature matrix X {n, in_dim} -> {n, n_treatments}.
Var uplift_logits(Tape& t, const UpliftModel& m, const ParamSet::Bound& P, const Tensor& x);

// Mean cross-entropy of the observed-treatment head over the batch, computed
// through a numerically stable softplus. Gradients reach only the shared
// trunk and each sample's observed head.
Var uplift_observed_ce(Tape& t, const UpliftModel& m, const ParamSet::Bound& P,
                       const std::vector<UpliftSample>& batch);

struct UpliftTrainResult {
    UpliftModel model;
    std::vector<double> loss_curve; // mean training CE per logged evaluation
};

// Adam on shuffled minibatches, seeded by cfg.seed. Requires every treatment
// to be observed at least once and homogeneous feature dimensions.
UpliftTrainResult train_uplift(const std::vector<UpliftSample>& samples,
                               const UpliftConfig& cfg, const TreatmentSet& treatments);

// Conversion probabilities under every treatment for one feature vector,
// {1, n_treatments}, each in (0, 1).
Tensor uplift_probabilities(const UpliftModel& m, const std::vector<double>& x);

// U(treatment | x): predicted conversion lift over control. Zero for the
// control itself; unknown treatment names are rejected.
double uplift(const UpliftModel& m, const std::vector<double>& x,
              const std::string& treatment);

// ---- Qini -----------------------------------------------------------------------

// Rank-based uplift quality. Samples are ordered by score descending (ties by
// original index); at each prefix the curve value is
//   Q(k) = treated conversions - control conversions * (treated count / control count)
// (zero while the prefix has no controls), and the coefficient is the mean
// gap between the curve and the straight line to Q(n), i.e.
//   (1/n) * sum_k [Q(k) - (k/n) Q(n)].
// Requires equal lengths, binary outcomes, and both treated and control
// samples present. Invariant under strictly monotone score transformations.
double qini(const std::vector<double>& scores, const std::vector<int>& outcomes,
            const std::vector<int>& treatments, int control = 0);

// Per-treatment Qini of the model's uplift scores over the given samples:
// entry i scores treatment i against control on the subset observed under
// {control, i}. Entry 0 is zero by definition.
std::vector<double> evaluate_qini(const UpliftModel& m,
                                  const std::vector<UpliftSample>& samples);

void write_qini_report_json(const TreatmentSet& treatments,
                            const std::vector<double>& qini_per_treatment,
                            const std::string& path);

// ---- synthetic data ----------------------------------------------------------------

// Randomized-assignment synthetic conversions whose treatment response is an
// archetype-by-treatment interaction: order features carry no interaction
// signal, so region-aware features have a structural advantage.
struct UpliftDataConfig {
    TreatmentSet treatments{{"control", "85%-x", "80%-x", "75%-x", "70%-x", "60%-x"}};
    int n_samples = 2000;
    int n_order_features = 4;
    double base_rate = 0.3;          // control conversion level
    double order_weight = 0.1;       // order-feature nuisance effect
    double interaction_scale = 0.25; // archetype-by-treatment effect size
    std::uint64_t seed = 0;
    void validate() const;
};

// The deterministic interaction effect used by the generator (zero for the
// control column); exposed so tests can score with the true uplift.
double uplift_true_effect(const std::string& archetype, int treatment,
                          const UpliftDataConfig& cfg);

std::vector<UpliftSample> generate_uplift_data(const City& city, const UpliftDataConfig& cfg);

// ---- samples CSV ---------------------------------------------------------------------

// Schema: sample_id,region_id,treatment,converted,f0..fn — treatment stored
// by name; every row carries the same feature count.
void write_uplift_csv(const std::vector<UpliftSample>& samples,
                      const TreatmentSet& treatments, const std::string& path);
std::vector<UpliftSample> read_uplift_csv(const std::string& path,
                                          const TreatmentSet& treatments);

} // namespace ridecast
