#pragma once

#include <string>
#include <vector>

#include "dcdsm/optim.hpp"

namespace dcdsm {

/// Names accepted by gradcheck_target: unet, wfen, wfca, wfen_loss.
std::vector<std::string> gradcheck_target_names();

/// Finite-difference check of one differentiable module on 8x8 inputs with
/// small random weights. Unknown names throw InvalidArgument.
GradcheckReport gradcheck_target(const std::string& target, std::uint64_t seed = 0,
                                 const GradcheckOptions& options = {});

}  // namespace dcdsm
