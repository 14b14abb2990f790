#pragma once

#include "ilrm/gradcheck.hpp"

namespace ilrm::testing {

using ilrm::GradCheck;
using ilrm::gradcheck;
using ilrm::random_tensor;
using ilrm::weighted_sum;

} // namespace ilrm::testing
