#ifndef GSE_HARNESS_HPP
#define GSE_HARNESS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gse/data.hpp"
#include "gse/metrics.hpp"
#include "gse/oracle.hpp"
#include "gse/solver.hpp"

namespace gse {

inline constexpr const char* kCodeVersion = "gse 0.1.0";

// Runs fn(0..n-1) across a small thread pool; exceptions are rethrown on the
// caller thread. Task order is arbitrary but results are index-addressed, so
// output ordering never depends on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);

struct RunOptions {
    AttackKind attack = AttackKind::Gse;
    AttackConfig config;
    int count = -1;    // images to attack; -1 = all
    int targets = 0;   // wrong labels per image; 0 = untargeted
    int connectivity = 4;
    int patch_np = 4;
    std::uint64_t seed = 0;
    int workers = 1;
    bool only_correct = false;       // restrict to correctly classified images
    bool include_time = true;        // false zeroes every time field in the CSVs
    bool keep_perturbations = false; // retain effective perturbations (IS curves)
};

struct PerImageRow {
    int image_index = 0;
    int true_label = 0;
    int target_label = -1;   // -1 in untargeted mode
    int predicted_label = -1;  // class of the clipped adversarial example
    AttackCell cell;
    double lambda_used = 0.0;
    std::size_t support_size = 0;
    int iterations = 0;
};

struct BatchOutcome {
    std::vector<PerImageRow> rows;                     // ordered by (image, target)
    std::vector<std::vector<AttackCell>> per_image;    // grouped for aggregation
    std::vector<int> image_indices;
    std::vector<ImageTensor> effective;  // clip(x+w)-x per row, when kept
    int image_pixels = 0;
    int num_images = 0;
};

// Metrics are computed on the effective perturbation clip(x+w) - x.
AttackCell evaluate_cell(const AttackResult& result, const ImageTensor& x, int connectivity,
                         int patch_np);

BatchOutcome run_batch(const LabeledDataset& ds, const GradientOracle& oracle,
                       const RunOptions& opt);

MetricReport untargeted_summary(const BatchOutcome& outcome);
TargetedReports targeted_summary(const BatchOutcome& outcome);

void write_per_image_csv(std::ostream& os, const BatchOutcome& outcome, const RunOptions& opt);
void write_attack_summary_csv(std::ostream& os, const BatchOutcome& outcome,
                              const RunOptions& opt);

// JSON snapshot sufficient to reproduce a run byte-for-byte (seed, full
// config, dataset/model identity) plus bookkeeping (row count, wall time).
std::string make_run_manifest(const RunOptions& opt, const std::string& dataset_name,
                              const std::string& model_hash_hex, std::size_t row_count,
                              double wall_seconds, const std::string& csv_path);

struct GridCell {
    double q = 0.0, sigma = 0.0, mu = 0.0;
    int khat = 0;
    MetricReport report;
};

struct GridSearchOutcome {
    std::vector<GridCell> cells;
    std::optional<std::size_t> best;  // min acp_count + anc among asr == 1 cells
};

GridSearchOutcome run_grid_search(const LabeledDataset& ds, const GradientOracle& oracle,
                                  const RunOptions& base, const std::vector<double>& q_grid,
                                  const std::vector<double>& sigma_grid,
                                  const std::vector<double>& mu_grid,
                                  const std::vector<int>& khat_grid);

void write_grid_csv(std::ostream& os, const GridSearchOutcome& outcome, bool include_time);

struct AblationRow {
    int khat = 0;
    MetricReport report;
};

std::vector<AblationRow> run_khat_ablation(const LabeledDataset& ds, const GradientOracle& oracle,
                                           const RunOptions& base, const std::vector<int>& khat_grid);

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows, bool include_time);

}  // namespace gse

#endif
