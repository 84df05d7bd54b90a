#include "gse/solver.hpp"

#include <chrono>
#include <cmath>

namespace gse {

double NesterovSequence::next_alpha() {
    const double beta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * beta * beta));
    const double alpha = (1.0 - beta) / beta_next;
    beta = beta_next;
    return alpha;
}

double nesterov_alpha(int k) {
    if (k < 0) throw std::invalid_argument("nesterov_alpha: k must be nonnegative");
    NesterovSequence seq;
    double alpha = 0.0;
    for (int i = 0; i <= k; ++i) alpha = seq.next_alpha();
    return alpha;
}

std::size_t SupportSet::count() const {
    std::size_t n = 0;
    for (auto v : included) n += v;
    return n;
}

SupportSet support_set(const ImageTensor& lam_init, const ImageTensor& lam_final) {
    if (!lam_init.same_shape(lam_final)) throw std::invalid_argument("support_set: shape mismatch");
    SupportSet v;
    v.height = lam_init.height;
    v.width = lam_init.width;
    v.channels = lam_init.channels;
    v.included.resize(lam_init.data.size());
    for (std::size_t i = 0; i < lam_init.data.size(); ++i) {
        v.included[i] = lam_final.data[i] < lam_init.data[i] ? 1 : 0;
    }
    return v;
}

ImageTensor project_support(const ImageTensor& w, const SupportSet& v) {
    if (w.height != v.height || w.width != v.width || w.channels != v.channels) {
        throw std::invalid_argument("project_support: shape mismatch");
    }
    ImageTensor out = w;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (!v.included[i]) out.data[i] = 0.0;
    }
    return out;
}

void nag_step(MomentumState& st, const GradFn& grad, double sigma, const SupportSet* support) {
    ImageTensor g = zeros_like(st.w);
    grad(st.w, g);
    ImageTensor stepped = linear_combination(1.0, st.w, -sigma, g);
    const double alpha = st.seq.next_alpha();
    ImageTensor combined = linear_combination(1.0 - alpha, stepped, alpha, st.step_prev);
    st.w = support ? project_support(combined, *support) : std::move(combined);
    st.step_prev = std::move(stepped);
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "fbs") return AttackKind::Fbs;
    if (s == "gse") return AttackKind::Gse;
    throw std::invalid_argument("unknown attack: " + s);
}

std::string attack_kind_to_string(AttackKind k) {
    return k == AttackKind::Fbs ? "fbs" : "gse";
}

bool attack_succeeded(const GradientOracle& oracle, const ImageTensor& x, const ImageTensor& w,
                      int label, AttackMode mode, double lo, double hi) {
    const ImageTensor adv = clip_to_domain(linear_combination(1.0, x, 1.0, w), lo, hi);
    const int predicted = argmax_class(oracle.logits(adv));
    return mode == AttackMode::Targeted ? predicted == label : predicted != label;
}

namespace {

void validate_common(const AttackConfig& cfg) {
    if (!(cfg.sigma > 0.0)) throw std::invalid_argument("attack: sigma must be positive");
    if (cfg.mu < 0.0) throw std::invalid_argument("attack: mu must be nonnegative");
    if (cfg.iters < 1) throw std::invalid_argument("attack: iters must be positive");
    if (cfg.domain_lo > cfg.domain_hi) throw std::invalid_argument("attack: bad domain");
}

AttackResult finish_result(const GradientOracle& oracle, const ImageTensor& x, ImageTensor w,
                           int label, const AttackConfig& cfg, double lambda_used,
                           std::size_t support_size) {
    AttackResult res;
    res.adversarial =
        clip_to_domain(linear_combination(1.0, x, 1.0, w), cfg.domain_lo, cfg.domain_hi);
    res.success = cfg.mode == AttackMode::Targeted
                      ? argmax_class(oracle.logits(res.adversarial)) == label
                      : argmax_class(oracle.logits(res.adversarial)) != label;
    res.perturbation = std::move(w);
    res.lambda_used = lambda_used;
    res.support_size = support_size;
    res.iterations = cfg.iters;
    return res;
}

}  // namespace

AttackResult fbs_attack(const ImageTensor& x, int label, const AttackConfig& cfg,
                        const GradientOracle& oracle) {
    validate_common(cfg);
    if (cfg.lambda < 0.0) throw std::invalid_argument("fbs_attack: lambda must be concrete");
    Objective obj{&oracle, &x, label, cfg.mode, 0.0};  // pure classification loss
    ImageTensor w = zeros_like(x);
    ImageTensor g = zeros_like(x);
    for (int k = 0; k < cfg.iters; ++k) {
        obj.value_and_grad(w, g);
        w = prox_half_uniform(linear_combination(1.0, w, -cfg.sigma, g), cfg.sigma * cfg.lambda);
    }
    const std::size_t nnz = count_nonzero(w, 0.0);
    return finish_result(oracle, x, std::move(w), label, cfg, cfg.lambda, nnz);
}

AttackResult gse_attack(const ImageTensor& x, int label, const AttackConfig& cfg,
                        const GradientOracle& oracle) {
    validate_common(cfg);
    if (cfg.lambda <= 0.0) throw std::invalid_argument("gse_attack: lambda must be positive");
    if (cfg.khat < 1) throw std::invalid_argument("gse_attack: khat must be at least 1");
    if (cfg.khat >= cfg.iters) throw std::invalid_argument("gse_attack: khat must be below iters");
    if (!(cfg.q > 0.0) || cfg.q > 1.0) throw std::invalid_argument("gse_attack: q must be in (0,1]");

    const BlurKernel kernel = gaussian_kernel(cfg.kernel_size, cfg.kernel_sigma);
    Objective obj{&oracle, &x, label, cfg.mode, cfg.mu};
    LambdaField lam(x.height, x.width, x.channels, cfg.lambda);
    const ImageTensor lam_init = lam.values;

    MomentumState st;
    st.w = zeros_like(x);
    st.step_prev = zeros_like(x);  // prox output for iteration 0's combination
    ImageTensor g = zeros_like(x);

    // Selection phase: proximal steps with per-pixel tradeoffs.
    for (int k = 0; k < cfg.khat; ++k) {
        obj.value_and_grad(st.w, g);
        ImageTensor stepped = linear_combination(1.0, st.w, -cfg.sigma, g);
        ImageTensor scaled_lam = lam.values;
        for (double& v : scaled_lam.data) v *= cfg.sigma;
        ImageTensor prox_out = prox_half_field(stepped, scaled_lam);
        const double alpha = st.seq.next_alpha();
        st.w = linear_combination(1.0 - alpha, prox_out, alpha, st.step_prev);
        lam = adjust_lambda(lam, st.w, kernel, cfg.q);
        st.step_prev = std::move(prox_out);
    }

    const SupportSet v = support_set(lam_init, lam.values);
    if (v.empty()) {
        throw EmptySupportError("gse_attack: no pixels selected; lambda too large");
    }

    // Refinement phase: projected accelerated descent on the support.
    GradFn grad_fn = [&obj](const ImageTensor& w, ImageTensor& out) {
        obj.value_and_grad(w, out);
    };
    for (int k = cfg.khat; k < cfg.iters; ++k) {
        nag_step(st, grad_fn, cfg.sigma, &v);
    }
    return finish_result(oracle, x, std::move(st.w), label, cfg, cfg.lambda, v.count());
}

namespace {

AttackResult run_concrete(AttackKind kind, const ImageTensor& x, int label,
                          const AttackConfig& cfg, const GradientOracle& oracle) {
    return kind == AttackKind::Fbs ? fbs_attack(x, label, cfg, oracle)
                                   : gse_attack(x, label, cfg, oracle);
}

}  // namespace

AttackResult section_search_attack(AttackKind kind, const ImageTensor& x, int label,
                                   const AttackConfig& cfg, const GradientOracle& oracle) {
    validate_common(cfg);
    // Stage A: the first prox input is fixed across lambda, so bracket on it.
    const double mu = kind == AttackKind::Gse ? cfg.mu : 0.0;
    Objective obj{&oracle, &x, label, cfg.mode, mu};
    ImageTensor g = zeros_like(x);
    const ImageTensor origin = zeros_like(x);
    obj.value_and_grad(origin, g);
    const ImageTensor first_step = linear_combination(0.0, origin, -cfg.sigma, g);

    double lambda_max = cfg.lambda_seed;
    int doublings = 0;
    while (count_nonzero(prox_half_uniform(first_step, cfg.sigma * lambda_max), 0.0) > 0) {
        lambda_max *= 2.0;
        if (++doublings > cfg.max_doublings) {
            throw std::runtime_error("section_search: failed to bracket lambda");
        }
    }

    // Stage B: bisect toward the largest lambda that still succeeds.
    double lo = 0.0;
    double hi = lambda_max;
    AttackResult best;
    bool found = false;
    for (int b = 0; b < cfg.bisection_steps; ++b) {
        const double mid = 0.5 * (lo + hi);
        AttackConfig probe = cfg;
        probe.lambda = mid;
        bool ok = false;
        AttackResult res;
        try {
            res = run_concrete(kind, x, label, probe, oracle);
            ok = res.success;
        } catch (const EmptySupportError&) {
            ok = false;
        } catch (const DivergedError&) {
            ok = false;
        }
        if (ok) {
            best = std::move(res);
            found = true;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (found) return best;

    AttackResult failure;
    failure.perturbation = zeros_like(x);
    failure.adversarial = clip_to_domain(x, cfg.domain_lo, cfg.domain_hi);
    failure.success = false;
    failure.lambda_used = hi;
    failure.iterations = 0;
    return failure;
}

AttackResult attack_image(AttackKind kind, const ImageTensor& x, int label,
                          const AttackConfig& cfg, const GradientOracle& oracle) {
    const auto t0 = std::chrono::steady_clock::now();
    AttackResult res = cfg.lambda <= 0.0 ? section_search_attack(kind, x, label, cfg, oracle)
                                         : run_concrete(kind, x, label, cfg, oracle);
    const auto t1 = std::chrono::steady_clock::now();
    res.seconds = std::chrono::duration<double>(t1 - t0).count();
    return res;
}

}  // namespace gse
