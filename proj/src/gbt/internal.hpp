#pragma once

#include "tdcast/gbt/booster.hpp"

#include <vector>

namespace tdcast::gbt {

/// Raw scores of the training rows, routed through the stored split bins.
std::vector<double> predict_binned_raw(const GbtModel& model, const BinnedData& data);

}  // namespace tdcast::gbt
