#pragma once

#include <string>
#include <vector>

#include "ridecast/common.hpp"
#include "ridecast/tensor.hpp"

namespace ridecast {

// Metrics operate elementwise over equally shaped tensors; `mask` marks the
// entries that count (same length as y.data). The unmasked overloads use
// every entry.

// Sum |y - yhat| / sum |y| over the masked entries. Rejects a mask whose
// actuals are all zero (the ratio would be undefined).
double wmape(const Tensor& y, const Tensor& yhat, const std::vector<unsigned char>& mask);
double wmape(const Tensor& y, const Tensor& yhat);

// Mean |y - yhat| over the masked entries. Rejects an empty mask.
double mae(const Tensor& y, const Tensor& yhat, const std::vector<unsigned char>& mask);
double mae(const Tensor& y, const Tensor& yhat);

} // namespace ridecast
