#ifndef GSE_LAMBDA_ADJUST_HPP
#define GSE_LAMBDA_ADJUST_HPP

#include "gse/tensor.hpp"

namespace gse {

// Per-entry tradeoff parameters. Updates are per pixel, so entries across
// channels at a pixel stay equal for the lifetime of the field. The initial
// scalar value is kept around for later support extraction.
struct LambdaField {
    ImageTensor values;
    double initial = 0.0;

    LambdaField() = default;
    LambdaField(int h, int w, int c, double lambda0)
        : values(h, w, c, lambda0), initial(lambda0) {}
};

// m_{ij} = 1 iff any channel magnitude at (i,j) is numerically nonzero.
PixelMask perturbation_mask(const ImageTensor& w, double tol = kZeroTol);

// One tradeoff update: blur the perturbation mask, then divide each pixel's
// lambda by (blurred + 1) where the blur reached, by q elsewhere. Pixels
// within blur radius of a perturbed pixel get strictly smaller lambda; all
// others grow (q < 1) or stay put (q = 1). Entries are capped at
// initial * 1e6 so never-perturbed pixels cannot overflow across many
// iterations; the cap never affects the strictly-below-initial support test.
LambdaField adjust_lambda(const LambdaField& lam, const ImageTensor& w,
                          const BlurKernel& kernel, double q);

}  // namespace gse

#endif
