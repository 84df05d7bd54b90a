#include "gse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace gse {

AcpResult acp(const std::vector<PixelMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("acp: no masks");
    double total = 0.0;
    const double pixels = static_cast<double>(masks.front().height) * masks.front().width;
    for (const auto& m : masks) total += static_cast<double>(m.count_ones());
    AcpResult r;
    r.count = total / static_cast<double>(masks.size());
    r.fraction = r.count / pixels;
    return r;
}

int anc(const PixelMask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8) {
        throw std::invalid_argument("anc: connectivity must be 4 or 8");
    }
    static constexpr int di8[] = {-1, 1, 0, 0, -1, -1, 1, 1};
    static constexpr int dj8[] = {0, 0, -1, 1, -1, 1, -1, 1};
    const int neighbors = connectivity == 4 ? 4 : 8;

    std::vector<std::uint8_t> visited(mask.data.size(), 0);
    std::vector<std::pair<int, int>> stack;
    int components = 0;
    for (int i = 0; i < mask.height; ++i) {
        for (int j = 0; j < mask.width; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * mask.width + j;
            if (!mask.data[idx] || visited[idx]) continue;
            ++components;
            visited[idx] = 1;
            stack.push_back({i, j});
            while (!stack.empty()) {
                const auto [ci, cj] = stack.back();
                stack.pop_back();
                for (int n = 0; n < neighbors; ++n) {
                    const int ni = ci + di8[n];
                    const int nj = cj + dj8[n];
                    if (ni < 0 || ni >= mask.height || nj < 0 || nj >= mask.width) continue;
                    const std::size_t nidx = static_cast<std::size_t>(ni) * mask.width + nj;
                    if (mask.data[nidx] && !visited[nidx]) {
                        visited[nidx] = 1;
                        stack.push_back({ni, nj});
                    }
                }
            }
        }
    }
    return components;
}

int d20(const ImageTensor& w, int np, double tol) {
    if (np < 1 || np >= std::min(w.height, w.width)) {
        throw std::invalid_argument("d20: patch side must be in [1, min(M,N))");
    }
    int hits = 0;
    for (int i0 = 0; i0 + np <= w.height; ++i0) {
        for (int j0 = 0; j0 + np <= w.width; ++j0) {
            double ss = 0.0;
            for (int i = i0; i < i0 + np; ++i) {
                for (int j = j0; j < j0 + np; ++j) {
                    for (int c = 0; c < w.channels; ++c) {
                        const double v = w.at(i, j, c);
                        ss += v * v;
                    }
                }
            }
            if (std::sqrt(ss) > tol) ++hits;
        }
    }
    return hits;
}

ImageTensor adversarial_saliency_map(const GradientOracle& oracle, const ImageTensor& x,
                                     int true_label, int target_label) {
    if (true_label == target_label) {
        throw std::invalid_argument("adversarial_saliency_map: labels must differ");
    }
    const ImageTensor g_target = oracle.logit_input_gradient(x, target_label);
    const ImageTensor g_true = oracle.logit_input_gradient(x, true_label);
    ImageTensor out = zeros_like(x);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double gt = g_target.data[i];
        const double gl = g_true.data[i];
        out.data[i] = (gt >= 0.0 && gl <= 0.0) ? gt * std::fabs(gl) : 0.0;
    }
    return out;
}

double percentile_nearest_rank(std::vector<double> values, double nu) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (nu < 0.0 || nu >= 100.0) throw std::invalid_argument("percentile: nu must be in [0, 100)");
    const std::size_t rank =
        static_cast<std::size_t>(std::ceil(nu / 100.0 * static_cast<double>(values.size())));
    if (rank == 0) return -std::numeric_limits<double>::infinity();
    std::sort(values.begin(), values.end());
    return values[rank - 1];
}

double is_score(const ImageTensor& w, const ImageTensor& saliency, double nu) {
    if (!w.same_shape(saliency)) throw std::invalid_argument("is_score: shape mismatch");
    const double norm = l2_norm(w);
    if (norm <= kZeroTol) throw std::invalid_argument("is_score: zero perturbation");
    const double threshold = percentile_nearest_rank(saliency.data, nu);
    double masked = 0.0;
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        if (saliency.data[i] > threshold) masked += w.data[i] * w.data[i];
    }
    return std::sqrt(masked) / norm;
}

std::vector<std::pair<double, double>> is_curve(const ImageTensor& w, const ImageTensor& saliency,
                                                const std::vector<double>& nus) {
    std::vector<std::pair<double, double>> curve;
    curve.reserve(nus.size());
    for (double nu : nus) curve.push_back({nu, is_score(w, saliency, nu)});
    return curve;
}

MetricReport summarize_cells(const std::vector<AttackCell>& cells, int image_pixels) {
    MetricReport r;
    if (cells.empty()) return r;
    double successes = 0.0, count = 0.0, clusters = 0.0, patches = 0.0, l2 = 0.0, secs = 0.0;
    for (const auto& c : cells) {
        secs += c.seconds;
        if (!c.success) continue;
        successes += 1.0;
        count += c.changed_pixels;
        clusters += c.clusters;
        patches += c.patches;
        l2 += c.l2;
    }
    r.asr = successes / static_cast<double>(cells.size());
    r.seconds_per_image = secs / static_cast<double>(cells.size());
    if (successes > 0.0) {
        r.has_values = true;
        r.acp_count = count / successes;
        r.acp_fraction = r.acp_count / static_cast<double>(image_pixels);
        r.anc = clusters / successes;
        r.d20 = patches / successes;
        r.l2 = l2 / successes;
    }
    return r;
}

namespace {

// Selection key for per-image best/worst target: fewest changed pixels,
// ties broken by l2.
bool cell_less(const AttackCell& a, const AttackCell& b) {
    if (a.changed_pixels != b.changed_pixels) return a.changed_pixels < b.changed_pixels;
    return a.l2 < b.l2;
}

MetricReport mean_of_chosen(const std::vector<AttackCell>& chosen, std::size_t num_images,
                            std::size_t qualifying, int image_pixels) {
    MetricReport r;
    r.asr = num_images == 0 ? 0.0 : static_cast<double>(qualifying) / static_cast<double>(num_images);
    if (chosen.empty()) return r;
    double count = 0.0, clusters = 0.0, patches = 0.0, l2 = 0.0, secs = 0.0;
    for (const auto& c : chosen) {
        count += c.changed_pixels;
        clusters += c.clusters;
        patches += c.patches;
        l2 += c.l2;
        secs += c.seconds;
    }
    const double n = static_cast<double>(chosen.size());
    r.has_values = true;
    r.acp_count = count / n;
    r.acp_fraction = r.acp_count / static_cast<double>(image_pixels);
    r.anc = clusters / n;
    r.d20 = patches / n;
    r.l2 = l2 / n;
    r.seconds_per_image = secs / n;
    return r;
}

}  // namespace

TargetedReports aggregate_targeted(const std::vector<std::vector<AttackCell>>& per_image,
                                   int image_pixels) {
    TargetedReports out;
    const std::size_t n = per_image.size();

    std::vector<AttackCell> all_cells;
    std::vector<AttackCell> best_chosen, worst_chosen;
    std::size_t best_qualifying = 0, worst_qualifying = 0;
    for (const auto& cells : per_image) {
        all_cells.insert(all_cells.end(), cells.begin(), cells.end());
        const AttackCell* best = nullptr;
        const AttackCell* worst = nullptr;
        bool all_success = !cells.empty();
        for (const auto& c : cells) {
            if (!c.success) {
                all_success = false;
                continue;
            }
            if (!best || cell_less(c, *best)) best = &c;
            if (!worst || cell_less(*worst, c)) worst = &c;
        }
        if (best) {
            ++best_qualifying;
            best_chosen.push_back(*best);
        }
        if (all_success && worst) {
            ++worst_qualifying;
            worst_chosen.push_back(*worst);
        }
    }
    out.average = summarize_cells(all_cells, image_pixels);
    out.best = mean_of_chosen(best_chosen, n, best_qualifying, image_pixels);
    out.worst = mean_of_chosen(worst_chosen, n, worst_qualifying, image_pixels);
    return out;
}

std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void write_summary_header(std::ostream& os) {
    os << "attack,mode,case,asr,acp_count,acp_fraction,anc,d20,l2,time_per_image_s\n";
}

void write_summary_row(std::ostream& os, const std::string& attack, const std::string& mode,
                       const std::string& case_name, const MetricReport& r, bool include_time) {
    os << attack << ',' << mode << ',' << case_name << ',' << format_float(r.asr) << ',';
    if (r.has_values) {
        os << format_float(r.acp_count) << ',' << format_float(r.acp_fraction) << ','
           << format_float(r.anc) << ',' << format_float(r.d20) << ',' << format_float(r.l2);
    } else {
        os << "NA,NA,NA,NA,NA";
    }
    os << ',' << format_float(include_time ? r.seconds_per_image : 0.0) << '\n';
}

}  // namespace gse
