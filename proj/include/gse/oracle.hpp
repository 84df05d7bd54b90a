#ifndef GSE_ORACLE_HPP
#define GSE_ORACLE_HPP

#include <array>
#include <memory>
#include <stdexcept>
#include <vector>

#include "gse/model.hpp"
#include "gse/tensor.hpp"

namespace gse {

// Raised when a loss or gradient turns non-finite mid-optimization.
struct DivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Classifier abstraction used by the attacks and metrics. Implementations
// must be safe for concurrent read-only use from parallel attack workers.
class GradientOracle {
  public:
    virtual ~GradientOracle() = default;
    virtual int num_classes() const = 0;
    virtual std::array<int, 3> input_shape() const = 0;  // {height, width, channels}
    virtual std::vector<double> logits(const ImageTensor& x) const = 0;
    // Cross-entropy toward `label`; writes the input gradient when grad != nullptr.
    virtual double ce_loss_and_grad(const ImageTensor& x, int label, ImageTensor* grad) const = 0;
    // Gradient of the single logit `class_index` with respect to every input entry.
    virtual ImageTensor logit_input_gradient(const ImageTensor& x, int class_index) const = 0;
};

class ModelOracle : public GradientOracle {
  public:
    explicit ModelOracle(ToyModel model) : model_(std::move(model)) {}

    int num_classes() const override { return model_.num_classes; }
    std::array<int, 3> input_shape() const override {
        return {model_.height, model_.width, model_.channels};
    }
    std::vector<double> logits(const ImageTensor& x) const override;
    double ce_loss_and_grad(const ImageTensor& x, int label, ImageTensor* grad) const override;
    ImageTensor logit_input_gradient(const ImageTensor& x, int class_index) const override;

    const ToyModel& model() const { return model_; }

  private:
    ToyModel model_;
};

enum class AttackMode { Targeted, Untargeted };

// The smooth objective the solvers descend:
//   targeted:    f(w) =  CE(x+w, label) + mu * |w|_2
//   untargeted:  f(w) = -CE(x+w, label) + mu * |w|_2
// Iterates are not clipped during optimization; clipping happens once on the
// final perturbation. The |.|_2 gradient at the origin is taken as zero.
struct Objective {
    const GradientOracle* oracle = nullptr;
    const ImageTensor* image = nullptr;
    int label = 0;
    AttackMode mode = AttackMode::Untargeted;
    double mu = 0.0;

    double value(const ImageTensor& w) const;
    // Throws DivergedError on non-finite loss.
    double value_and_grad(const ImageTensor& w, ImageTensor& grad) const;
};

// Central-difference reference gradients; independent of the analytic
// backward passes (they only call the forward evaluations).
ImageTensor fd_objective_gradient(const Objective& obj, const ImageTensor& w, double step);
ImageTensor fd_logit_gradient(const GradientOracle& oracle, const ImageTensor& x, int class_index,
                              double step);

// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|, floor)
double max_relative_error(const ImageTensor& a, const ImageTensor& b, double floor = 1e-10);

}  // namespace gse

#endif
