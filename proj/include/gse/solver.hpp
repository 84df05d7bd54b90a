#ifndef GSE_SOLVER_HPP
#define GSE_SOLVER_HPP

#include <functional>
#include <stdexcept>
#include <vector>

#include "gse/lambda_adjust.hpp"
#include "gse/oracle.hpp"
#include "gse/prox.hpp"
#include "gse/tensor.hpp"

namespace gse {

// Phase 1 selected no pixels; the sparsity weight was too large.
struct EmptySupportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Momentum coefficients: beta_0 = 0, beta_k = (1 + sqrt(1 + 4 beta_{k-1}^2))/2,
// alpha_k = (1 - beta_k)/beta_{k+1}. alpha_0 = 1 and alpha_k <= 0 afterwards.
struct NesterovSequence {
    double beta = 0.0;  // beta_k for the next iteration index
    double next_alpha();
};

double nesterov_alpha(int k);

inline constexpr double kLambdaAuto = -1.0;

struct AttackConfig {
    AttackMode mode = AttackMode::Untargeted;
    double lambda = kLambdaAuto;  // <= 0 selects per-image section search
    double mu = 1.0;
    double sigma = 0.005;  // gradient step size
    double q = 0.25;
    int khat = 30;    // selection-phase iterations
    int iters = 200;  // total iterations
    int kernel_size = 3;
    double kernel_sigma = 1.0;
    double domain_lo = 0.0;
    double domain_hi = 1.0;
    // section search
    double lambda_seed = 1e-4;
    int max_doublings = 40;
    int bisection_steps = 10;
};

struct AttackResult {
    ImageTensor perturbation;  // final iterate, unclipped
    ImageTensor adversarial;   // clip(x + perturbation)
    bool success = false;
    double lambda_used = 0.0;
    std::size_t support_size = 0;
    int iterations = 0;
    double seconds = 0.0;
};

// Coordinates eligible for phase-2 updates; channel-complete per pixel since
// tradeoff updates are per-pixel.
struct SupportSet {
    int height = 0, width = 0, channels = 0;
    std::vector<std::uint8_t> included;

    std::size_t count() const;
    bool empty() const { return count() == 0; }
    bool contains(int i, int j, int c) const {
        return included[(static_cast<std::size_t>(i) * width + j) * channels + c] != 0;
    }
};

// Coordinate included iff its tradeoff strictly decreased from the start.
SupportSet support_set(const ImageTensor& lam_init, const ImageTensor& lam_final);

// Zeros entries outside the support, leaves the rest unchanged. Idempotent.
ImageTensor project_support(const ImageTensor& w, const SupportSet& v);

using GradFn = std::function<void(const ImageTensor& w, ImageTensor& grad_out)>;

// One accelerated step: gradient step, momentum combination, optional
// projection of the combined iterate (the gradient-step tensor is kept
// unprojected for the next combination).
struct MomentumState {
    ImageTensor w;
    ImageTensor step_prev;  // previous gradient-step result
    NesterovSequence seq;
};

void nag_step(MomentumState& st, const GradFn& grad, double sigma, const SupportSet* support);

enum class AttackKind { Fbs, Gse };

AttackKind attack_kind_from_string(const std::string& s);
std::string attack_kind_to_string(AttackKind k);

// Splitting attack: repeated gradient step on the classification loss
// followed by the half-quasinorm prox with uniform weight. Step sizes are a
// constant sigma; no momentum, no norm regularizer.
AttackResult fbs_attack(const ImageTensor& x, int label, const AttackConfig& cfg,
                        const GradientOracle& oracle);

// Two-phase attack: accelerated proximal descent with per-pixel tradeoff
// adaptation for the first khat iterations, then accelerated descent
// projected onto the selected support for the rest.
AttackResult gse_attack(const ImageTensor& x, int label, const AttackConfig& cfg,
                        const GradientOracle& oracle);

// Stage A doubles lambda from lambda_seed until the very first prox step
// comes out all-zero, bounding the useful range. Stage B bisects (0, max]
// toward the largest lambda whose full attack succeeds. Probes that diverge
// or select no pixels count as failures.
AttackResult section_search_attack(AttackKind kind, const ImageTensor& x, int label,
                                   const AttackConfig& cfg, const GradientOracle& oracle);

// Dispatch helper: runs section search when cfg.lambda <= 0. Fills seconds.
AttackResult attack_image(AttackKind kind, const ImageTensor& x, int label,
                          const AttackConfig& cfg, const GradientOracle& oracle);

bool attack_succeeded(const GradientOracle& oracle, const ImageTensor& x, const ImageTensor& w,
                      int label, AttackMode mode, double lo, double hi);

}  // namespace gse

#endif
