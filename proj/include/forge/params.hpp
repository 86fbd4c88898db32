#pragma once

#include <optional>
#include <stdexcept>

namespace forge {

// Everything downstream (profile exponents, cutoff sharpness, energy weights)
// is a function of the spatial dimension and the nonlinearity power alone.
struct ModelParams {
    int dim = 1;          // spatial dimension, 1..4
    double p = 3.0;       // nonlinearity power, subconformal range
    int J = 0;            // number of correction levels
    int q0 = 0;           // regularity order of admissible surfaces, 2*J + 3
    double lambda = 0.0;  // decay exponent of the energy functional, in (0, 1/2]
    int k = 0;            // flatness order of the bump envelope
    double kappa0 = 0.0;  // amplitude of the self-similar profile
    double R = 2.0;       // localization radius bound used by grids, >= 2
};

class ParamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Derives the dependent constants from (dim, p).  k_override must satisfy the
// same lower bounds as the derived k and exists for refinement experiments.
ModelParams derive_params(int dim, double p,
                          std::optional<int> k_override = std::nullopt);

// Largest admissible p for the given dimension (no bound below dim 3).
double p_upper_limit(int dim);

}  // namespace forge
