#include "gse/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace gse {

std::vector<double> ModelOracle::logits(const ImageTensor& x) const {
    return model_logits(model_, x);
}

double ModelOracle::ce_loss_and_grad(const ImageTensor& x, int label, ImageTensor* grad) const {
    ForwardCache cache = model_forward(model_, x);
    std::vector<double> dlogits;
    const double loss = softmax_cross_entropy(cache.logits, label, grad ? &dlogits : nullptr);
    if (grad) *grad = model_input_gradient(model_, x, cache, dlogits);
    return loss;
}

ImageTensor ModelOracle::logit_input_gradient(const ImageTensor& x, int class_index) const {
    if (class_index < 0 || class_index >= model_.num_classes) {
        throw std::invalid_argument("logit_input_gradient: class index out of range");
    }
    ForwardCache cache = model_forward(model_, x);
    std::vector<double> dlogits(model_.num_classes, 0.0);
    dlogits[class_index] = 1.0;
    return model_input_gradient(model_, x, cache, dlogits);
}

double Objective::value(const ImageTensor& w) const {
    const ImageTensor candidate = linear_combination(1.0, *image, 1.0, w);
    const double ce = oracle->ce_loss_and_grad(candidate, label, nullptr);
    const double sign = mode == AttackMode::Targeted ? 1.0 : -1.0;
    return sign * ce + mu * l2_norm(w);
}

double Objective::value_and_grad(const ImageTensor& w, ImageTensor& grad) const {
    const ImageTensor candidate = linear_combination(1.0, *image, 1.0, w);
    const double ce = oracle->ce_loss_and_grad(candidate, label, &grad);
    const double sign = mode == AttackMode::Targeted ? 1.0 : -1.0;
    double value = sign * ce;
    if (sign < 0.0) {
        for (double& g : grad.data) g = -g;
    }
    const double norm = l2_norm(w);
    if (mu > 0.0 && norm > kZeroTol) {
        value += mu * norm;
        for (std::size_t i = 0; i < grad.data.size(); ++i) {
            grad.data[i] += mu * w.data[i] / norm;
        }
    } else {
        value += mu * norm;  // zero subgradient at the origin
    }
    if (!std::isfinite(value) || !all_finite(grad)) {
        throw DivergedError("objective produced a non-finite loss or gradient");
    }
    return value;
}

ImageTensor fd_objective_gradient(const Objective& obj, const ImageTensor& w, double step) {
    ImageTensor grad = zeros_like(w);
    ImageTensor probe = w;
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + step;
        const double up = obj.value(probe);
        probe.data[i] = saved - step;
        const double down = obj.value(probe);
        probe.data[i] = saved;
        grad.data[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

ImageTensor fd_logit_gradient(const GradientOracle& oracle, const ImageTensor& x, int class_index,
                              double step) {
    ImageTensor grad = zeros_like(x);
    ImageTensor probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + step;
        const double up = oracle.logits(probe)[class_index];
        probe.data[i] = saved - step;
        const double down = oracle.logits(probe)[class_index];
        probe.data[i] = saved;
        grad.data[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double max_relative_error(const ImageTensor& a, const ImageTensor& b, double floor) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_relative_error: shape mismatch");
    const double scale = std::max({max_abs(a), max_abs(b), floor});
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    }
    return worst / scale;
}

}  // namespace gse
