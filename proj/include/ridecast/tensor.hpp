#pragma once

#include <vector>

#include "ridecast/common.hpp"

namespace ridecast {

using Shape = std::vector<int>;

int shape_size(const Shape& s);

// Dense row-major tensor of doubles. Rank is arbitrary but nearly all of the
// code treats tensors as matrices ({rows, cols}); scalars are {1, 1}.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, double v);
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<double> v);
    static Tensor col(std::vector<double> v);
    static Tensor matrix(int r, int c, std::vector<double> v);

    int ndim() const { return static_cast<int>(shape.size()); }
    int size() const { return static_cast<int>(data.size()); }
    int rows() const;
    int cols() const;

    double& at(int r, int c);
    double at(int r, int c) const;
    double& operator[](int i) { return data[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    double item() const; // requires size() == 1
};

// ---- plain (non-differentiable) kernels, shared with the tape -------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Numerically stable softmax along `axis` (0 = down columns, 1 = across rows).
// Rejects non-finite input.
Tensor softmax(const Tensor& x, int axis);

double l2_norm(const Tensor& v);

// Cosine similarity of two tensors viewed as flat vectors. Rejects zero norm.
double cosine_similarity(const Tensor& a, const Tensor& b);

} // namespace ridecast
