#include "gse/prox.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gse {

double prox_half_threshold(double lam) {
    if (lam < 0.0) throw std::invalid_argument("prox_half_threshold: lam must be nonnegative");
    if (lam == 0.0) return 0.0;
    // (54^(1/3)/4) * (2 lam)^(2/3)
    return std::cbrt(54.0) / 4.0 * std::pow(2.0 * lam, 2.0 / 3.0);
}

double prox_half_scalar(double w, double lam) {
    if (!std::isfinite(w) || !std::isfinite(lam)) {
        throw std::invalid_argument("prox_half_scalar: non-finite input");
    }
    if (lam < 0.0) throw std::invalid_argument("prox_half_scalar: lam must be nonnegative");
    if (lam == 0.0) return w;
    const double aw = std::fabs(w);
    if (aw <= prox_half_threshold(lam)) return 0.0;
    // arccos argument is <= 1/sqrt(2) exactly at the threshold and decreases
    // with |w|; the clamp only absorbs floating-point overshoot.
    double arg = lam / 4.0 * std::pow(aw / 3.0, -1.5);
    arg = std::min(1.0, std::max(-1.0, arg));
    const double phi = std::acos(arg);
    return 2.0 / 3.0 * w * (1.0 + std::cos(2.0 * std::numbers::pi / 3.0 - 2.0 * phi / 3.0));
}

ImageTensor prox_half_field(const ImageTensor& w, const ImageTensor& lam_field) {
    if (!w.same_shape(lam_field)) throw std::invalid_argument("prox_half_field: shape mismatch");
    ImageTensor out = zeros_like(w);
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        out.data[i] = prox_half_scalar(w.data[i], lam_field.data[i]);
    }
    return out;
}

ImageTensor prox_half_uniform(const ImageTensor& w, double lam) {
    ImageTensor out = zeros_like(w);
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        out.data[i] = prox_half_scalar(w.data[i], lam);
    }
    return out;
}

}  // namespace gse
