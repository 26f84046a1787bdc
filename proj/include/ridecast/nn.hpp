#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ridecast/rng.hpp"
#include "ridecast/tape.hpp"

namespace ridecast {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Tensor m, v;
    long long t = 0;
};

// One bias-corrected Adam update on a single tensor.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg);

// Named parameter collection with per-parameter optimizer state. Iteration is
// in insertion order so training runs are reproducible.
class ParamSet {
public:
    using Bound = std::map<std::string, Var>;

    Tensor& add(const std::string& name, Tensor init);
    Tensor& add_uniform(const std::string& name, int rows, int cols, int fan_in, Rng& rng);
    Tensor& add_zeros(const std::string& name, int rows, int cols);

    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }

    // Registers every parameter as a tape leaf. trainable=false binds them as
    // constants (frozen weights).
    Bound bind(Tape& tape, bool trainable = true) const;

    // Reads gradients of the bound vars (tape.backward must have run) and
    // applies one Adam step per parameter.
    void adam_step_all(const Tape& tape, const Bound& bound, const AdamConfig& cfg);

    void reset_optimizer();

    // Parameters flattened to IEEE 754 binary32 little-endian, insertion order.
    // deserialize_f32 requires an identically laid-out set (same names/shapes).
    std::vector<unsigned char> serialize_f32() const;
    void deserialize_f32(const std::vector<unsigned char>& bytes);

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<Tensor> values_;
    std::vector<AdamState> states_;
};

// Bound-map lookup with a readable error instead of std::out_of_range.
Var pvar(const ParamSet::Bound& P, const std::string& name);

// ---- building blocks --------------------------------------------------------
// Parameters are registered under "<prefix>.<name>" and the apply functions
// look the same names up in a Bound map built from the owning ParamSet.

void add_linear(ParamSet& ps, const std::string& prefix, int in, int out, Rng& rng, bool bias = true);
void add_linear_zero(ParamSet& ps, const std::string& prefix, int in, int out, bool bias = true);
Var linear(Tape& t, const ParamSet::Bound& P, const std::string& prefix, Var x, bool bias = true);

// Optional low-rank adapter reference for attention projections.
struct LoraRef {
    const ParamSet::Bound* bound = nullptr;
    std::string prefix;
    double scale = 1.0;
    bool attached() const { return bound != nullptr; }
};

void add_mha(ParamSet& ps, const std::string& prefix, int d, Rng& rng);
// Multi-head attention with d-by-d projections. q_in/k_in/v_in are {n,d}.
// When `lora` is attached, adapters named "<lora.prefix>.{q,k,v}" modulate the
// corresponding projections.
Var multi_head_attention(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                         Var q_in, Var k_in, Var v_in, int heads,
                         const LoraRef& lora = LoraRef{});

void add_attn_pool(ParamSet& ps, const std::string& prefix, int in_dim, int d, Rng& rng);
// Learned query attends over the rows of x ({n,in_dim}); returns {1,d}.
Var attn_pool(Tape& t, const ParamSet::Bound& P, const std::string& prefix, Var x);
// The attention weights alone, {1,n}; rows sum to 1.
Var attn_pool_weights(Tape& t, const ParamSet::Bound& P, const std::string& prefix, Var x);

// Registers "<prefix>.down" (d-by-r, uniform init) and "<prefix>.up" (r-by-k,
// zero init so a fresh adapter is a no-op).
void add_lora(ParamSet& ps, const std::string& prefix, int d, int k, int r, Rng& rng);
// h = x W + scale * x W_down W_up
Var lora_linear(Tape& t, Var x, Var W, const ParamSet::Bound& A, const std::string& adapter_prefix,
                double scale);

} // namespace ridecast
