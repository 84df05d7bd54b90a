#include "gse/harness.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "gse/lambda_adjust.hpp"

namespace gse {

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const int pool = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (pool == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_lock;
    std::exception_ptr first_error;
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> guard(err_lock);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (int t = 0; t < pool; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        hash ^= data[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("fnv1a64_file: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    return fnv1a64(buf.data(), buf.size());
}

AttackCell evaluate_cell(const AttackResult& result, const ImageTensor& x, int connectivity,
                         int patch_np) {
    const ImageTensor effective = linear_combination(1.0, result.adversarial, -1.0, x);
    const PixelMask mask = perturbation_mask(effective);
    AttackCell cell;
    cell.success = result.success;
    cell.changed_pixels = static_cast<double>(mask.count_ones());
    cell.clusters = anc(mask, connectivity);
    cell.patches = d20(effective, patch_np);
    cell.l2 = l2_norm(effective);
    cell.seconds = result.seconds;
    return cell;
}

namespace {

std::vector<int> pick_indices(const LabeledDataset& ds, const GradientOracle& oracle,
                              const RunOptions& opt) {
    std::vector<int> indices;
    const std::size_t want =
        opt.count < 0 ? ds.size() : std::min<std::size_t>(ds.size(), opt.count);
    for (std::size_t i = 0; i < ds.size() && indices.size() < want; ++i) {
        if (opt.only_correct &&
            argmax_class(oracle.logits(ds.images[i])) != ds.labels[i]) {
            continue;
        }
        indices.push_back(static_cast<int>(i));
    }
    return indices;
}

}  // namespace

BatchOutcome run_batch(const LabeledDataset& ds, const GradientOracle& oracle,
                       const RunOptions& opt) {
    if (opt.targets > 0 && opt.config.mode != AttackMode::Targeted) {
        throw std::invalid_argument("run_batch: targets require targeted mode");
    }
    if (opt.targets == 0 && opt.config.mode == AttackMode::Targeted) {
        throw std::invalid_argument("run_batch: targeted mode requires targets");
    }
    BatchOutcome outcome;
    if (ds.size() > 0) {
        outcome.image_pixels = ds.images.front().height * ds.images.front().width;
    }
    outcome.image_indices = pick_indices(ds, oracle, opt);
    outcome.num_images = static_cast<int>(outcome.image_indices.size());
    if (outcome.num_images == 0) return outcome;

    const int per_image = opt.targets > 0 ? opt.targets : 1;
    std::optional<TargetPlan> plan;
    if (opt.targets > 0) plan = make_target_plan(opt.targets, ds.num_classes, opt.seed);

    struct Task {
        int image_index;
        int true_label;
        int target_label;  // -1 untargeted
    };
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(outcome.num_images) * per_image);
    for (int idx : outcome.image_indices) {
        const int label = ds.labels[idx];
        if (opt.targets > 0) {
            for (int t : make_targets(label, *plan, ds.num_classes)) {
                tasks.push_back({idx, label, t});
            }
        } else {
            tasks.push_back({idx, label, -1});
        }
    }

    outcome.rows.resize(tasks.size());
    if (opt.keep_perturbations) outcome.effective.resize(tasks.size());
    parallel_for(tasks.size(), opt.workers, [&](std::size_t i) {
        const Task& task = tasks[i];
        const ImageTensor& x = ds.images[task.image_index];
        const int attack_label = task.target_label >= 0 ? task.target_label : task.true_label;
        const AttackResult result =
            attack_image(opt.attack, x, attack_label, opt.config, oracle);
        PerImageRow row;
        row.image_index = task.image_index;
        row.true_label = task.true_label;
        row.target_label = task.target_label;
        row.predicted_label = argmax_class(oracle.logits(result.adversarial));
        row.cell = evaluate_cell(result, x, opt.connectivity, opt.patch_np);
        row.lambda_used = result.lambda_used;
        row.support_size = result.support_size;
        row.iterations = result.iterations;
        outcome.rows[i] = std::move(row);
        if (opt.keep_perturbations) {
            outcome.effective[i] = linear_combination(1.0, result.adversarial, -1.0, x);
        }
    });

    outcome.per_image.resize(outcome.num_images);
    for (std::size_t i = 0; i < outcome.rows.size(); ++i) {
        outcome.per_image[i / per_image].push_back(outcome.rows[i].cell);
    }
    return outcome;
}

MetricReport untargeted_summary(const BatchOutcome& outcome) {
    std::vector<AttackCell> cells;
    cells.reserve(outcome.rows.size());
    for (const auto& r : outcome.rows) cells.push_back(r.cell);
    return summarize_cells(cells, outcome.image_pixels);
}

TargetedReports targeted_summary(const BatchOutcome& outcome) {
    return aggregate_targeted(outcome.per_image, outcome.image_pixels);
}

void write_per_image_csv(std::ostream& os, const BatchOutcome& outcome, const RunOptions& opt) {
    os << "image_index,true_label,target_label,attack,mode,success,lambda,changed_pixels,"
          "anc,d20,l2,support_size,iterations,time_s\n";
    const std::string attack = attack_kind_to_string(opt.attack);
    const std::string mode =
        opt.config.mode == AttackMode::Targeted ? "targeted" : "untargeted";
    for (const auto& r : outcome.rows) {
        os << r.image_index << ',' << r.true_label << ',' << r.target_label << ',' << attack
           << ',' << mode << ',' << (r.cell.success ? 1 : 0) << ','
           << format_float(r.lambda_used) << ',' << format_float(r.cell.changed_pixels) << ','
           << r.cell.clusters << ',' << r.cell.patches << ',' << format_float(r.cell.l2) << ','
           << r.support_size << ',' << r.iterations << ','
           << format_float(opt.include_time ? r.cell.seconds : 0.0) << '\n';
    }
}

void write_attack_summary_csv(std::ostream& os, const BatchOutcome& outcome,
                              const RunOptions& opt) {
    write_summary_header(os);
    const std::string attack = attack_kind_to_string(opt.attack);
    if (opt.config.mode == AttackMode::Targeted) {
        const TargetedReports reports = targeted_summary(outcome);
        write_summary_row(os, attack, "targeted", "best", reports.best, opt.include_time);
        write_summary_row(os, attack, "targeted", "average", reports.average, opt.include_time);
        write_summary_row(os, attack, "targeted", "worst", reports.worst, opt.include_time);
    } else {
        write_summary_row(os, attack, "untargeted", "all", untargeted_summary(outcome),
                          opt.include_time);
    }
}

std::string make_run_manifest(const RunOptions& opt, const std::string& dataset_name,
                              const std::string& model_hash_hex, std::size_t row_count,
                              double wall_seconds, const std::string& csv_path) {
    nlohmann::json j;
    j["version"] = kCodeVersion;
    j["seed"] = opt.seed;
    j["dataset"] = dataset_name;
    j["model_hash"] = model_hash_hex;
    j["csv"] = csv_path;
    j["rows"] = row_count;
    j["wall_seconds"] = wall_seconds;
    nlohmann::json cfg;
    cfg["attack"] = attack_kind_to_string(opt.attack);
    cfg["mode"] = opt.config.mode == AttackMode::Targeted ? "targeted" : "untargeted";
    cfg["lambda"] = opt.config.lambda;
    cfg["mu"] = opt.config.mu;
    cfg["sigma"] = opt.config.sigma;
    cfg["q"] = opt.config.q;
    cfg["khat"] = opt.config.khat;
    cfg["iters"] = opt.config.iters;
    cfg["kernel_size"] = opt.config.kernel_size;
    cfg["kernel_sigma"] = opt.config.kernel_sigma;
    cfg["lambda_seed"] = opt.config.lambda_seed;
    cfg["max_doublings"] = opt.config.max_doublings;
    cfg["bisection_steps"] = opt.config.bisection_steps;
    cfg["count"] = opt.count;
    cfg["targets"] = opt.targets;
    cfg["connectivity"] = opt.connectivity;
    cfg["patch_np"] = opt.patch_np;
    cfg["workers"] = opt.workers;
    cfg["only_correct"] = opt.only_correct;
    cfg["timing"] = opt.include_time ? "wall" : "none";
    j["config"] = std::move(cfg);
    return j.dump(2) + "\n";
}

GridSearchOutcome run_grid_search(const LabeledDataset& ds, const GradientOracle& oracle,
                                  const RunOptions& base, const std::vector<double>& q_grid,
                                  const std::vector<double>& sigma_grid,
                                  const std::vector<double>& mu_grid,
                                  const std::vector<int>& khat_grid) {
    if (q_grid.empty() || sigma_grid.empty() || mu_grid.empty() || khat_grid.empty()) {
        throw std::invalid_argument("run_grid_search: empty grid");
    }
    GridSearchOutcome outcome;
    for (double q : q_grid) {
        for (double sigma : sigma_grid) {
            for (double mu : mu_grid) {
                for (int khat : khat_grid) {
                    RunOptions opt = base;
                    opt.config.q = q;
                    opt.config.sigma = sigma;
                    opt.config.mu = mu;
                    opt.config.khat = khat;
                    const BatchOutcome batch = run_batch(ds, oracle, opt);
                    GridCell cell;
                    cell.q = q;
                    cell.sigma = sigma;
                    cell.mu = mu;
                    cell.khat = khat;
                    cell.report = opt.config.mode == AttackMode::Targeted
                                      ? targeted_summary(batch).average
                                      : untargeted_summary(batch);
                    outcome.cells.push_back(cell);
                }
            }
        }
    }
    for (std::size_t i = 0; i < outcome.cells.size(); ++i) {
        const MetricReport& r = outcome.cells[i].report;
        if (r.asr < 1.0) continue;
        if (!outcome.best) {
            outcome.best = i;
            continue;
        }
        const MetricReport& b = outcome.cells[*outcome.best].report;
        if (r.acp_count + r.anc < b.acp_count + b.anc) outcome.best = i;
    }
    return outcome;
}

void write_grid_csv(std::ostream& os, const GridSearchOutcome& outcome, bool include_time) {
    os << "q,sigma,mu,khat,asr,acp_count,acp_fraction,anc,d20,l2,time_per_image_s\n";
    for (const auto& c : outcome.cells) {
        const MetricReport& r = c.report;
        os << format_float(c.q) << ',' << format_float(c.sigma) << ',' << format_float(c.mu)
           << ',' << c.khat << ',' << format_float(r.asr) << ',';
        if (r.has_values) {
            os << format_float(r.acp_count) << ',' << format_float(r.acp_fraction) << ','
               << format_float(r.anc) << ',' << format_float(r.d20) << ','
               << format_float(r.l2);
        } else {
            os << "NA,NA,NA,NA,NA";
        }
        os << ',' << format_float(include_time ? r.seconds_per_image : 0.0) << '\n';
    }
}

std::vector<AblationRow> run_khat_ablation(const LabeledDataset& ds, const GradientOracle& oracle,
                                           const RunOptions& base,
                                           const std::vector<int>& khat_grid) {
    if (khat_grid.empty()) throw std::invalid_argument("run_khat_ablation: empty grid");
    for (int k : khat_grid) {
        if (k < 1 || k >= base.config.iters) {
            throw std::invalid_argument("run_khat_ablation: khat must be in [1, iters)");
        }
    }
    std::vector<AblationRow> rows;
    for (int khat : khat_grid) {
        RunOptions opt = base;
        opt.config.khat = khat;
        const BatchOutcome batch = run_batch(ds, oracle, opt);
        AblationRow row;
        row.khat = khat;
        row.report = opt.config.mode == AttackMode::Targeted ? targeted_summary(batch).average
                                                             : untargeted_summary(batch);
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows,
                        bool include_time) {
    os << "khat,asr,acp_count,acp_fraction,anc,d20,l2,time_per_image_s\n";
    for (const auto& row : rows) {
        const MetricReport& r = row.report;
        os << row.khat << ',' << format_float(r.asr) << ',';
        if (r.has_values) {
            os << format_float(r.acp_count) << ',' << format_float(r.acp_fraction) << ','
               << format_float(r.anc) << ',' << format_float(r.d20) << ','
               << format_float(r.l2);
        } else {
            os << "NA,NA,NA,NA,NA";
        }
        os << ',' << format_float(include_time ? r.seconds_per_image : 0.0) << '\n';
    }
}

}  // namespace gse
