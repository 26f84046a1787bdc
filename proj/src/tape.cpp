#include "ridecast/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ridecast {

namespace {

// Broadcast category of b against a: 0 same shape, 1 row {1,m}, 2 col {n,1},
// 3 scalar {1,1}. Throws when incompatible.
int broadcast_kind(const Tensor& a, const Tensor& b) {
    require(a.ndim() == 2 && b.ndim() == 2, "elementwise ops require rank-2 tensors");
    if (a.shape == b.shape) return 0;
    if (b.rows() == 1 && b.cols() == 1) return 3;
    if (b.rows() == 1 && b.cols() == a.cols()) return 1;
    if (b.cols() == 1 && b.rows() == a.rows()) return 2;
    throw invalid_input("elementwise shapes are incompatible for broadcasting");
}

double bval(const Tensor& b, int kind, int i, int j) {
    switch (kind) {
        case 0: return b.at(i, j);
        case 1: return b.at(0, j);
        case 2: return b.at(i, 0);
        default: return b.data[0];
    }
}

void baccum(Tensor& gb, int kind, int i, int j, double g) {
    switch (kind) {
        case 0: gb.at(i, j) += g; break;
        case 1: gb.at(0, j) += g; break;
        case 2: gb.at(i, 0) += g; break;
        default: gb.data[0] += g; break;
    }
}

} // namespace

Var Tape::make(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1, this};
}

Tape::Node& Tape::node(Var v) {
    check_mine(v);
    return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    check_mine(v);
    return nodes_[static_cast<size_t>(v.id)];
}

void Tape::check_mine(Var v) const {
    require(v.tape == this && v.id >= 0 && static_cast<size_t>(v.id) < nodes_.size(),
            "Var does not belong to this tape");
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    return make(std::move(value), requires_grad, nullptr);
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    require(n.needs_grad, "grad() requested for a node that does not require gradients");
    return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }

void Tape::backward(Var root) {
    check_mine(root);
    require(value(root).size() == 1, "backward() requires a scalar root");
    require(!ran_backward_, "backward() may be called once per tape");
    ran_backward_ = true;
    for (auto& n : nodes_)
        if (n.needs_grad) n.grad = Tensor::zeros(n.value.shape);
    if (!node(root).needs_grad) return; // nothing depends on a trainable leaf
    grad_buf(root.id).data[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.needs_grad && n.back) n.back(*this);
    }
}

// ---- arithmetic ------------------------------------------------------------

Var Tape::add(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    const int kind = broadcast_kind(va, vb);
    Tensor out = va;
    for (int i = 0; i < va.rows(); ++i)
        for (int j = 0; j < va.cols(); ++j) out.at(i, j) += bval(vb, kind, i, j);
    const bool req = requires_grad(a) || requires_grad(b);
    const int ia = a.id, ib = b.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), req, [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) baccum(gb, kind, i, j, g.at(i, j));
        }
    });
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    const int kind = broadcast_kind(va, vb);
    Tensor out = va;
    for (int i = 0; i < va.rows(); ++i)
        for (int j = 0; j < va.cols(); ++j) out.at(i, j) *= bval(vb, kind, i, j);
    const bool req = requires_grad(a) || requires_grad(b);
    const int ia = a.id, ib = b.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), req, [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& xa = t.nodes_[static_cast<size_t>(ia)].value;
        const Tensor& xb = t.nodes_[static_cast<size_t>(ib)].value;
        if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) ga.at(i, j) += g.at(i, j) * bval(xb, kind, i, j);
        }
        if (t.nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) baccum(gb, kind, i, j, g.at(i, j) * xa.at(i, j));
        }
    });
}

Var Tape::div(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    const int kind = broadcast_kind(va, vb);
    Tensor out = va;
    for (int i = 0; i < va.rows(); ++i)
        for (int j = 0; j < va.cols(); ++j) out.at(i, j) /= bval(vb, kind, i, j);
    const bool req = requires_grad(a) || requires_grad(b);
    const int ia = a.id, ib = b.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), req, [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& xa = t.nodes_[static_cast<size_t>(ia)].value;
        const Tensor& xb = t.nodes_[static_cast<size_t>(ib)].value;
        if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) ga.at(i, j) += g.at(i, j) / bval(xb, kind, i, j);
        }
        if (t.nodes_[static_cast<size_t>(ib)].needs_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) {
                    const double d = bval(xb, kind, i, j);
                    baccum(gb, kind, i, j, -g.at(i, j) * xa.at(i, j) / (d * d));
                }
        }
    });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

Var Tape::add_scalar(Var a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v += c;
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

// ---- linear algebra --------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    Tensor out = ridecast::matmul(value(a), value(b));
    const bool req = requires_grad(a) || requires_grad(b);
    const int ia = a.id, ib = b.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), req, [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& xa = t.nodes_[static_cast<size_t>(ia)].value;
        const Tensor& xb = t.nodes_[static_cast<size_t>(ib)].value;
        if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
            // dA = G * B^T
            Tensor& ga = t.grad_buf(ia);
            const int n = g.rows(), m = g.cols(), k = xa.cols();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    const double gij = g.at(i, j);
                    if (gij == 0.0) continue;
                    for (int kk = 0; kk < k; ++kk) ga.at(i, kk) += gij * xb.at(kk, j);
                }
        }
        if (t.nodes_[static_cast<size_t>(ib)].needs_grad) {
            // dB = A^T * G
            Tensor& gb = t.grad_buf(ib);
            const int n = g.rows(), m = g.cols(), k = xa.cols();
            for (int i = 0; i < n; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    const double aik = xa.at(i, kk);
                    if (aik == 0.0) continue;
                    for (int j = 0; j < m; ++j) gb.at(kk, j) += aik * g.at(i, j);
                }
        }
    });
}

Var Tape::transpose(Var a) {
    Tensor out = ridecast::transpose(value(a));
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
    });
}

// ---- elementwise functions ---------------------------------------------------

Var Tape::exp(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::exp(v);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
}

Var Tape::log(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::log(v);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    });
}

Var Tape::sqrt(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::sqrt(v);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / y[i];
    });
}

Var Tape::tanh(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::tanh(v);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var Tape::relu(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

Var Tape::abs(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::fabs(v);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) {
            if (x[i] > 0.0) ga[i] += g[i];
            else if (x[i] < 0.0) ga[i] -= g[i];
        }
    });
}

// ---- reductions --------------------------------------------------------------

Var Tape::softmax_rows(Var a) {
    Tensor out = ridecast::softmax(value(a), 1);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < y.cols(); ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var Tape::logsumexp_rows(Var a) {
    const Tensor& x = value(a);
    require(x.ndim() == 2, "logsumexp_rows requires a rank-2 tensor");
    require(x.all_finite(), "logsumexp_rows rejects non-finite input");
    Tensor out = Tensor::zeros({x.rows(), 1});
    for (int i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
        double s = 0.0;
        for (int j = 0; j < x.cols(); ++j) s += std::exp(x.at(i, j) - mx);
        out.at(i, 0) = mx + std::log(s);
    }
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].value;
        const Tensor& xv = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < xv.rows(); ++i)
            for (int j = 0; j < xv.cols(); ++j)
                ga.at(i, j) += g.at(i, 0) * std::exp(xv.at(i, j) - y.at(i, 0));
    });
}

Var Tape::row_sums(Var a) {
    const Tensor& x = value(a);
    Tensor out = Tensor::zeros({x.rows(), 1});
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i, 0) += x.at(i, j);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x2 = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < x2.rows(); ++i)
            for (int j = 0; j < x2.cols(); ++j) ga.at(i, j) += g.at(i, 0);
    });
}

Var Tape::mean_rows(Var a) {
    const Tensor& x = value(a);
    const double inv = 1.0 / x.rows();
    Tensor out = Tensor::zeros({1, x.cols()});
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(0, j) += x.at(i, j) * inv;
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x2 = t.nodes_[static_cast<size_t>(ia)].value;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < x2.rows(); ++i)
            for (int j = 0; j < x2.cols(); ++j) ga.at(i, j) += g.at(0, j) * inv;
    });
}

Var Tape::sum_all(Var a) {
    const Tensor& x = value(a);
    double s = 0.0;
    for (double v : x.data) s += v;
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(Tensor::scalar(s), requires_grad(a), [=](Tape& t) {
        const double g = t.nodes_[static_cast<size_t>(self)].grad.data[0];
        Tensor& ga = t.grad_buf(ia);
        for (double& v : ga.data) v += g;
    });
}

Var Tape::mean_all(Var a) {
    return scale(sum_all(a), 1.0 / value(a).size());
}

// ---- structure -----------------------------------------------------------------

Var Tape::reshape(Var a, Shape s) {
    const Tensor& x = value(a);
    require(shape_size(s) == x.size(), "reshape must preserve element count");
    Tensor out(s, x.data);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
    const Tensor& x = value(a);
    require(x.ndim() == 2, "gather_rows requires a rank-2 tensor");
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), x.cols()});
    for (size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] >= 0 && idx[r] < x.rows(), "gather_rows index out of range");
        for (int j = 0; j < x.cols(); ++j) out.at(static_cast<int>(r), j) = x.at(idx[r], j);
    }
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=, indices = std::move(idx)](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (size_t r = 0; r < indices.size(); ++r)
            for (int j = 0; j < g.cols(); ++j) ga.at(indices[r], j) += g.at(static_cast<int>(r), j);
    });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
    const Tensor& x = value(a);
    require(x.ndim() == 2 && 0 <= r0 && r0 < r1 && r1 <= x.rows(), "slice_rows range invalid");
    Tensor out = Tensor::zeros({r1 - r0, x.cols()});
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i - r0, j) = x.at(i, j);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) ga.at(i + r0, j) += g.at(i, j);
    });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    const Tensor& x = value(a);
    require(x.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= x.cols(), "slice_cols range invalid");
    Tensor out = Tensor::zeros({x.rows(), c1 - c0});
    for (int i = 0; i < x.rows(); ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = x.at(i, j);
    const int ia = a.id, self = static_cast<int>(nodes_.size());
    return make(std::move(out), requires_grad(a), [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) ga.at(i, j + c0) += g.at(i, j);
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows needs at least one part");
    const int cols = value(parts[0]).cols();
    int rows = 0;
    bool req = false;
    for (Var p : parts) {
        require(value(p).cols() == cols, "concat_rows column counts must agree");
        rows += value(p).rows();
        req = req || requires_grad(p);
    }
    Tensor out = Tensor::zeros({rows, cols});
    int r = 0;
    std::vector<int> ids;
    std::vector<int> offsets;
    for (Var p : parts) {
        const Tensor& x = value(p);
        ids.push_back(p.id);
        offsets.push_back(r);
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < cols; ++j) out.at(r + i, j) = x.at(i, j);
        r += x.rows();
    }
    const int self = static_cast<int>(nodes_.size());
    return make(std::move(out), req, [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        for (size_t p = 0; p < ids.size(); ++p) {
            if (!t.nodes_[static_cast<size_t>(ids[p])].needs_grad) continue;
            Tensor& gp = t.grad_buf(ids[p]);
            for (int i = 0; i < gp.rows(); ++i)
                for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(offsets[p] + i, j);
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols needs at least one part");
    const int rows = value(parts[0]).rows();
    int cols = 0;
    bool req = false;
    for (Var p : parts) {
        require(value(p).rows() == rows, "concat_cols row counts must agree");
        cols += value(p).cols();
        req = req || requires_grad(p);
    }
    Tensor out = Tensor::zeros({rows, cols});
    int c = 0;
    std::vector<int> ids;
    std::vector<int> offsets;
    for (Var p : parts) {
        const Tensor& x = value(p);
        ids.push_back(p.id);
        offsets.push_back(c);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < x.cols(); ++j) out.at(i, c + j) = x.at(i, j);
        c += x.cols();
    }
    const int self = static_cast<int>(nodes_.size());
    return make(std::move(out), req, [=](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        for (size_t p = 0; p < ids.size(); ++p) {
            if (!t.nodes_[static_cast<size_t>(ids[p])].needs_grad) continue;
            Tensor& gp = t.grad_buf(ids[p]);
            for (int i = 0; i < gp.rows(); ++i)
                for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(i, offsets[p] + j);
        }
    });
}

} // namespace ridecast
