#ifndef GSE_PROX_HPP
#define GSE_PROX_HPP

#include "gse/tensor.hpp"

namespace gse {

// Magnitudes at or below this threshold are sent to zero by the prox;
// ties resolve to zero (strict inequality in the selection set).
double prox_half_threshold(double lam);

// Closed-form proximal operator of lam*|.|^(1/2):
//   argmin_y (1/(2 lam)) (y - w)^2 + |y|^(1/2)
// lam = 0 returns w unchanged. Sign is preserved, |result| <= |w|.
double prox_half_scalar(double w, double lam);

// Element-wise prox with a per-entry tradeoff field (shapes must match).
ImageTensor prox_half_field(const ImageTensor& w, const ImageTensor& lam_field);

// Uniform-lambda convenience used by the splitting attack.
ImageTensor prox_half_uniform(const ImageTensor& w, double lam);

}  // namespace gse

#endif
