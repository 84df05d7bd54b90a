#ifndef GSE_METRICS_HPP
#define GSE_METRICS_HPP

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gse/oracle.hpp"
#include "gse/tensor.hpp"

namespace gse {

struct AcpResult {
    double count = 0.0;     // mean changed pixels per successful attack
    double fraction = 0.0;  // count / (M*N)
};

// Mean mask population over successful-attack masks; empty input is an error.
AcpResult acp(const std::vector<PixelMask>& masks);

// Connected components of 1-entries; connectivity is 4 or 8. Iterative DFS.
int anc(const PixelMask& mask, int connectivity);

// Number of overlapping np x np patches (fully inside, all channels pooled)
// whose l2 norm is numerically nonzero.
int d20(const ImageTensor& w, int np, double tol = kZeroTol);

// Per-entry class-discriminative importance: the target-logit gradient times
// the true-logit gradient magnitude, kept only where the target gradient is
// nonnegative and the true gradient nonpositive. Nonnegative by construction.
ImageTensor adversarial_saliency_map(const GradientOracle& oracle, const ImageTensor& x,
                                     int true_label, int target_label);

// Nearest-rank percentile; nu = 0 means no threshold (returns -infinity).
double percentile_nearest_rank(std::vector<double> values, double nu);

// |B o w|_2 / |w|_2 where B marks saliency entries strictly above the nu-th
// percentile of the saliency map. In [0,1]; zero perturbation is an error.
double is_score(const ImageTensor& w, const ImageTensor& saliency, double nu);

std::vector<std::pair<double, double>> is_curve(const ImageTensor& w, const ImageTensor& saliency,
                                                const std::vector<double>& nus);

// One attack outcome (one image and, in targeted mode, one target label).
struct AttackCell {
    bool success = false;
    double changed_pixels = 0.0;
    int clusters = 0;
    int patches = 0;
    double l2 = 0.0;
    double seconds = 0.0;
};

struct MetricReport {
    double asr = 0.0;
    bool has_values = false;  // false = no successful attacks, metric fields are N/A
    double acp_count = 0.0;
    double acp_fraction = 0.0;
    double anc = 0.0;
    double d20 = 0.0;
    double l2 = 0.0;
    double seconds_per_image = 0.0;
};

// ASR over all cells, metric means over the successful ones.
MetricReport summarize_cells(const std::vector<AttackCell>& cells, int image_pixels);

struct TargetedReports {
    MetricReport best, average, worst;
};

// Per-image best/worst-target convention: best picks, per image, the
// successful target minimizing (changed pixels, then l2); worst requires all
// targets to succeed and picks the maximizing one; average pools every
// successful (image, target) attack. ASR: >=1 target / fraction of pairs /
// all targets.
TargetedReports aggregate_targeted(const std::vector<std::vector<AttackCell>>& per_image,
                                   int image_pixels);

// One row per experiment cell, mirroring the summary tables.
void write_summary_header(std::ostream& os);
void write_summary_row(std::ostream& os, const std::string& attack, const std::string& mode,
                       const std::string& case_name, const MetricReport& report,
                       bool include_time);

// Six significant digits, locale-independent.
std::string format_float(double v);

}  // namespace gse

#endif
