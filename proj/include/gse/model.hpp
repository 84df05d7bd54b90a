#ifndef GSE_MODEL_HPP
#define GSE_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "gse/data.hpp"
#include "gse/tensor.hpp"

namespace gse {

enum class Arch { Linear, Mlp, SmallConv };

Arch arch_from_string(const std::string& s);
std::string arch_to_string(Arch a);

// Small differentiable classifiers with analytic input/parameter gradients.
//   linear:     logits = W x + b
//   mlp:        logits = W2 tanh(W1 x + b1) + b2
//   small_conv: logits = W vec(tanh(conv3x3_same(x))) + b
// tanh keeps the loss surface smooth so finite-difference checks hold tightly.
struct ToyModel {
    Arch arch = Arch::Linear;
    int height = 0, width = 0, channels = 0;
    int num_classes = 0;
    int hidden = 0;  // mlp units / conv filters; 0 for linear
    std::vector<double> w_hidden, b_hidden;  // first layer (empty for linear)
    std::vector<double> w_out, b_out;        // output layer

    int input_dim() const { return height * width * channels; }
    int hidden_dim() const;  // length of the first-layer activation vector
    void validate_input(const ImageTensor& x) const;
};

ToyModel init_model(Arch arch, int height, int width, int channels, int num_classes,
                    int hidden, std::uint64_t seed);

// Activations cached by the forward pass for reuse in backward passes.
struct ForwardCache {
    std::vector<double> hidden_act;  // post-tanh first layer (empty for linear)
    std::vector<double> logits;
};

std::vector<double> model_logits(const ToyModel& m, const ImageTensor& x);
ForwardCache model_forward(const ToyModel& m, const ImageTensor& x);

// Gradient of sum_k dlogits[k] * z_k(x) with respect to the input.
ImageTensor model_input_gradient(const ToyModel& m, const ImageTensor& x,
                                 const ForwardCache& cache, const std::vector<double>& dlogits);

struct ParamGradients {
    std::vector<double> w_hidden, b_hidden, w_out, b_out;
    explicit ParamGradients(const ToyModel& m);
};

// Accumulates (+=) parameter gradients of sum_k dlogits[k] * z_k(x).
void model_param_gradients(const ToyModel& m, const ImageTensor& x, const ForwardCache& cache,
                           const std::vector<double>& dlogits, ParamGradients& acc);

// Numerically stable cross-entropy; dlogits receives softmax(z) - e_label.
double softmax_cross_entropy(const std::vector<double>& logits, int label,
                             std::vector<double>* dlogits);

int argmax_class(const std::vector<double>& logits);

struct TrainOptions {
    int epochs = 200;
    double learning_rate = 0.01;
    int batch = 64;
    int hidden = 32;
    std::uint64_t seed = 0;
};

struct TrainReport {
    ToyModel model;
    double final_loss = 0.0;
    double train_accuracy = 0.0;
};

// Adam on softmax cross-entropy; deterministic given the seed. Zero epochs
// returns the initialized model untouched. Non-finite loss aborts.
TrainReport train_toy(const LabeledDataset& ds, Arch arch, const TrainOptions& opt);

double dataset_accuracy(const ToyModel& m, const LabeledDataset& ds);

// Model file format: magic "GSEM", u32 JSON header length, JSON header
// (arch, shapes, activation), then all weight arrays as little-endian f32
// in order w_hidden, b_hidden, w_out, b_out.
void save_model(const ToyModel& m, const std::string& path, double train_accuracy = -1.0);
ToyModel load_model(const std::string& path);

}  // namespace gse

#endif
