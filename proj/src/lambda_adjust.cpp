#include "gse/lambda_adjust.hpp"

#include <cmath>
#include <stdexcept>

namespace gse {

PixelMask perturbation_mask(const ImageTensor& w, double tol) {
    const Grid sums = channel_abs_sum(w);
    PixelMask m(w.height, w.width);
    for (int i = 0; i < w.height; ++i) {
        for (int j = 0; j < w.width; ++j) {
            m.at(i, j) = sums.at(i, j) > tol ? 1 : 0;
        }
    }
    return m;
}

LambdaField adjust_lambda(const LambdaField& lam, const ImageTensor& w,
                          const BlurKernel& kernel, double q) {
    if (!(q > 0.0) || q > 1.0) throw std::invalid_argument("adjust_lambda: q must be in (0, 1]");
    if (lam.values.height != w.height || lam.values.width != w.width ||
        lam.values.channels != w.channels) {
        throw std::invalid_argument("adjust_lambda: shape mismatch");
    }
    const Grid blurred = conv2d_same(perturbation_mask(w), kernel);
    const double cap = lam.initial * 1e6;
    LambdaField out = lam;
    for (int i = 0; i < w.height; ++i) {
        for (int j = 0; j < w.width; ++j) {
            const double b = blurred.at(i, j);
            const double divisor = b > kZeroTol ? b + 1.0 : q;
            for (int c = 0; c < w.channels; ++c) {
                double v = lam.values.at(i, j, c) / divisor;
                out.values.at(i, j, c) = std::min(v, cap);
            }
        }
    }
    return out;
}

}  // namespace gse
