#pragma once

#include <stdexcept>
#include <string>

namespace flsim {

// Mismatched vector lengths or model architectures.
struct dimension_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input that is structurally valid but has no meaningful answer (zero-norm
// vector fed to an angular distance).
struct degenerate_input_error : std::domain_error {
    using std::domain_error::domain_error;
};

// Training produced a non-finite loss.
struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Experiment configuration rejected during validation; message carries the
// offending field path.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace flsim
