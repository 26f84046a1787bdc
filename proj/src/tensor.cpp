#include "ridecast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ridecast {

int shape_size(const Shape& s) {
    require(!s.empty(), "tensor shape must be non-empty");
    long long n = 1;
    for (int d : s) {
        require(d > 0, "tensor dimensions must be positive");
        n *= d;
    }
    return static_cast<int>(n);
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    require(static_cast<size_t>(shape_size(shape)) == data.size(),
            "tensor data length must equal the product of its shape");
}

Tensor Tensor::zeros(const Shape& s) {
    return Tensor(s, std::vector<double>(static_cast<size_t>(shape_size(s)), 0.0));
}

Tensor Tensor::full(const Shape& s, double v) {
    return Tensor(s, std::vector<double>(static_cast<size_t>(shape_size(s)), v));
}

Tensor Tensor::row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
}

Tensor Tensor::col(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n, 1}, std::move(v));
}

Tensor Tensor::matrix(int r, int c, std::vector<double> v) {
    return Tensor({r, c}, std::move(v));
}

int Tensor::rows() const {
    require(ndim() == 2, "rows() requires a rank-2 tensor");
    return shape[0];
}

int Tensor::cols() const {
    require(ndim() == 2, "cols() requires a rank-2 tensor");
    return shape[1];
}

double& Tensor::at(int r, int c) {
    return data[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)];
}

double Tensor::at(int r, int c) const {
    return data[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    require(size() == 1, "item() requires a single-element tensor");
    return data[0];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.ndim() == 2 && b.ndim() == 2, "matmul requires rank-2 tensors");
    require(a.cols() == b.rows(), "matmul inner dimensions must agree");
    const int n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out = Tensor::zeros({n, m});
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* po = out.data.data();
    for (int i = 0; i < n; ++i) {
        const double* ai = pa + static_cast<size_t>(i) * k;
        double* oi = po + static_cast<size_t>(i) * m;
        for (int kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            if (aik == 0.0) continue;
            const double* bk = pb + static_cast<size_t>(kk) * m;
            for (int j = 0; j < m; ++j) oi[j] += aik * bk[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require(a.ndim() == 2, "transpose requires a rank-2 tensor");
    Tensor out = Tensor::zeros({a.cols(), a.rows()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    require(x.ndim() == 2, "softmax requires a rank-2 tensor");
    require(axis == 0 || axis == 1, "softmax axis must be 0 or 1");
    require(x.all_finite(), "softmax rejects non-finite input");
    Tensor out = Tensor::zeros(x.shape);
    const int n = x.rows(), m = x.cols();
    if (axis == 1) {
        for (int i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < m; ++j) mx = std::max(mx, x.at(i, j));
            double sum = 0.0;
            for (int j = 0; j < m; ++j) {
                const double e = std::exp(x.at(i, j) - mx);
                out.at(i, j) = e;
                sum += e;
            }
            for (int j = 0; j < m; ++j) out.at(i, j) /= sum;
        }
    } else {
        for (int j = 0; j < m; ++j) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) mx = std::max(mx, x.at(i, j));
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e = std::exp(x.at(i, j) - mx);
                out.at(i, j) = e;
                sum += e;
            }
            for (int i = 0; i < n; ++i) out.at(i, j) /= sum;
        }
    }
    return out;
}

double l2_norm(const Tensor& v) {
    double s = 0.0;
    for (double x : v.data) s += x * x;
    return std::sqrt(s);
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), "cosine similarity requires equal lengths");
    const double na = l2_norm(a), nb = l2_norm(b);
    require(na > 0.0 && nb > 0.0, "cosine similarity rejects zero-norm vectors");
    double dot = 0.0;
    for (int i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot / (na * nb);
}

} // namespace ridecast
