#include "ridecast/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>

namespace ridecast {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
    require(param.same_shape(grad), "adam_step: gradient shape mismatch");
    require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0,
            "adam_step: betas must lie in [0, 1)");
    if (state.t == 0) {
        state.m = Tensor::zeros(param.shape);
        state.v = Tensor::zeros(param.shape);
    }
    require(state.m.same_shape(param) && state.v.same_shape(param),
            "adam_step: optimizer state shape mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (int i = 0; i < param.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

Tensor& ParamSet::add(const std::string& name, Tensor init) {
    require(index_.find(name) == index_.end(), "ParamSet: duplicate parameter " + name);
    index_[name] = values_.size();
    order_.push_back(name);
    values_.push_back(std::move(init));
    states_.push_back(AdamState{});
    return values_.back();
}

Tensor& ParamSet::add_uniform(const std::string& name, int rows, int cols, int fan_in, Rng& rng) {
    require(fan_in > 0, "ParamSet: fan_in must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = Tensor::zeros({rows, cols});
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return add(name, std::move(t));
}

Tensor& ParamSet::add_zeros(const std::string& name, int rows, int cols) {
    return add(name, Tensor::zeros({rows, cols}));
}

bool ParamSet::has(const std::string& name) const { return index_.find(name) != index_.end(); }

Tensor& ParamSet::get(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamSet: unknown parameter " + name);
    return values_[it->second];
}

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamSet: unknown parameter " + name);
    return values_[it->second];
}

ParamSet::Bound ParamSet::bind(Tape& tape, bool trainable) const {
    Bound out;
    for (size_t i = 0; i < order_.size(); ++i)
        out.emplace(order_[i], tape.leaf(values_[i], trainable));
    return out;
}

void ParamSet::adam_step_all(const Tape& tape, const Bound& bound, const AdamConfig& cfg) {
    for (size_t i = 0; i < order_.size(); ++i) {
        auto it = bound.find(order_[i]);
        require(it != bound.end(), "adam_step_all: parameter " + order_[i] + " is not bound");
        const Tensor& g = tape.grad(it->second);
        ensure(!g.data.empty(), "adam_step_all: gradients missing (backward not run?)");
        adam_step(values_[i], g, states_[i], cfg);
    }
}

void ParamSet::reset_optimizer() {
    for (auto& s : states_) s = AdamState{};
}

std::vector<unsigned char> ParamSet::serialize_f32() const {
    std::vector<unsigned char> out;
    for (const Tensor& t : values_) {
        for (double d : t.data) {
            const float f = static_cast<float>(d);
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            out.push_back(static_cast<unsigned char>(u & 0xff));
            out.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
            out.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
            out.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
        }
    }
    return out;
}

void ParamSet::deserialize_f32(const std::vector<unsigned char>& bytes) {
    size_t total = 0;
    for (const Tensor& t : values_) total += static_cast<size_t>(t.size());
    require(bytes.size() == total * 4, "ParamSet: serialized size does not match layout");
    size_t off = 0;
    for (Tensor& t : values_) {
        for (double& d : t.data) {
            std::uint32_t u = static_cast<std::uint32_t>(bytes[off]) |
                              (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
            float f;
            std::memcpy(&f, &u, 4);
            d = static_cast<double>(f);
            off += 4;
        }
    }
}

Var pvar(const ParamSet::Bound& P, const std::string& name) {
    auto it = P.find(name);
    require(it != P.end(), "unbound parameter " + name);
    return it->second;
}

// ---- linear -----------------------------------------------------------------

void add_linear(ParamSet& ps, const std::string& prefix, int in, int out, Rng& rng, bool bias) {
    ps.add_uniform(prefix + ".W", in, out, in, rng);
    if (bias) ps.add_uniform(prefix + ".b", 1, out, in, rng);
}

void add_linear_zero(ParamSet& ps, const std::string& prefix, int in, int out, bool bias) {
    ps.add_zeros(prefix + ".W", in, out);
    if (bias) ps.add_zeros(prefix + ".b", 1, out);
}

Var linear(Tape& t, const ParamSet::Bound& P, const std::string& prefix, Var x, bool bias) {
    Var h = t.matmul(x, pvar(P, prefix + ".W"));
    if (bias) h = t.add(h, pvar(P, prefix + ".b"));
    return h;
}

// ---- multi-head attention -----------------------------------------------------

void add_mha(ParamSet& ps, const std::string& prefix, int d, Rng& rng) {
    ps.add_uniform(prefix + ".Wq", d, d, d, rng);
    ps.add_uniform(prefix + ".Wk", d, d, d, rng);
    ps.add_uniform(prefix + ".Wv", d, d, d, rng);
    ps.add_uniform(prefix + ".Wo", d, d, d, rng);
}

Var multi_head_attention(Tape& t, const ParamSet::Bound& P, const std::string& prefix,
                         Var q_in, Var k_in, Var v_in, int heads, const LoraRef& lora) {
    const Tensor& qv = t.value(q_in);
    const int d = qv.cols();
    require(heads > 0 && d % heads == 0, "multi_head_attention: model dim must divide by heads");
    require(t.value(k_in).cols() == d && t.value(v_in).cols() == d,
            "multi_head_attention: input dims must agree");
    require(t.value(k_in).rows() == t.value(v_in).rows(),
            "multi_head_attention: key/value row counts must agree");

    auto project = [&](Var x, const char* which) {
        Var w = pvar(P, prefix + "." + (which[0] == 'q' ? "Wq" : which[0] == 'k' ? "Wk" : "Wv"));
        if (lora.attached())
            return lora_linear(t, x, w, *lora.bound, lora.prefix + "." + which, lora.scale);
        return t.matmul(x, w);
    };
    Var Q = project(q_in, "q");
    Var K = project(k_in, "k");
    Var V = project(v_in, "v");

    const int dh = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> head_outputs;
    head_outputs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Var Qh = t.slice_cols(Q, h * dh, (h + 1) * dh);
        Var Kh = t.slice_cols(K, h * dh, (h + 1) * dh);
        Var Vh = t.slice_cols(V, h * dh, (h + 1) * dh);
        Var attn = t.softmax_rows(t.scale(t.matmul(Qh, t.transpose(Kh)), inv));
        head_outputs.push_back(t.matmul(attn, Vh));
    }
    Var O = heads == 1 ? head_outputs[0] : t.concat_cols(head_outputs);
    return t.matmul(O, pvar(P, prefix + ".Wo"));
}

// ---- attentional pooling -------------------------------------------------------

void add_attn_pool(ParamSet& ps, const std::string& prefix, int in_dim, int d, Rng& rng) {
    ps.add_uniform(prefix + ".q", 1, d, d, rng);
    ps.add_uniform(prefix + ".Wk", in_dim, d, in_dim, rng);
    ps.add_uniform(prefix + ".Wv", in_dim, d, in_dim, rng);
}

Var attn_pool_weights(Tape& t, const ParamSet::Bound& P, const std::string& prefix, Var x) {
    Var keys = t.matmul(x, pvar(P, prefix + ".Wk")); // {n,d}
    Var q = pvar(P, prefix + ".q");                  // {1,d}
    const int d = t.value(q).cols();
    Var scores = t.scale(t.matmul(q, t.transpose(keys)), 1.0 / std::sqrt(static_cast<double>(d)));
    return t.softmax_rows(scores); // {1,n}
}

Var attn_pool(Tape& t, const ParamSet::Bound& P, const std::string& prefix, Var x) {
    Var w = attn_pool_weights(t, P, prefix, x);
    Var values = t.matmul(x, pvar(P, prefix + ".Wv")); // {n,d}
    return t.matmul(w, values);                        // {1,d}
}

// ---- LoRA ----------------------------------------------------------------------

void add_lora(ParamSet& ps, const std::string& prefix, int d, int k, int r, Rng& rng) {
    require(r >= 1 && r <= std::min(d, k), "add_lora: rank out of range");
    ps.add_uniform(prefix + ".down", d, r, d, rng);
    ps.add_zeros(prefix + ".up", r, k);
}

Var lora_linear(Tape& t, Var x, Var W, const ParamSet::Bound& A, const std::string& adapter_prefix,
                double scale) {
    Var base = t.matmul(x, W);
    Var down = pvar(A, adapter_prefix + ".down");
    Var up = pvar(A, adapter_prefix + ".up");
    require(t.value(down).rows() == t.value(W).rows() && t.value(up).cols() == t.value(W).cols(),
            "lora_linear: adapter shape does not match base projection");
    require(t.value(down).cols() == t.value(up).rows(), "lora_linear: adapter rank mismatch");
    Var delta = t.matmul(t.matmul(x, down), up);
    return t.add(base, t.scale(delta, scale));
}

} // namespace ridecast
