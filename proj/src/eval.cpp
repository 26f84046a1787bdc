#include "ridecast/eval.hpp"

#include <cmath>

namespace ridecast {

namespace {

void check_metric_inputs(const Tensor& y, const Tensor& yhat,
                         const std::vector<unsigned char>& mask, const char* what) {
    require(y.same_shape(yhat), std::string(what) + ": shapes must match");
    require(mask.size() == static_cast<size_t>(y.size()),
            std::string(what) + ": mask length must match the tensor size");
    for (int i = 0; i < y.size(); ++i)
        require(std::isfinite(y[i]) && std::isfinite(yhat[i]),
                std::string(what) + ": non-finite values");
}

} // namespace

double wmape(const Tensor& y, const Tensor& yhat, const std::vector<unsigned char>& mask) {
    check_metric_inputs(y, yhat, mask, "wmape");
    double num = 0.0, den = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        num += std::abs(y[i] - yhat[i]);
        den += std::abs(y[i]);
    }
    require(den > 0.0, "wmape: actuals under the mask are all zero");
    return num / den;
}

double wmape(const Tensor& y, const Tensor& yhat) {
    return wmape(y, yhat, std::vector<unsigned char>(static_cast<size_t>(y.size()), 1));
}

double mae(const Tensor& y, const Tensor& yhat, const std::vector<unsigned char>& mask) {
    check_metric_inputs(y, yhat, mask, "mae");
    double num = 0.0;
    long long count = 0;
    for (int i = 0; i < y.size(); ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        num += std::abs(y[i] - yhat[i]);
        ++count;
    }
    require(count > 0, "mae: mask selects no entries");
    return num / static_cast<double>(count);
}

double mae(const Tensor& y, const Tensor& yhat) {
    return mae(y, yhat, std::vector<unsigned char>(static_cast<size_t>(y.size()), 1));
}

} // namespace ridecast
