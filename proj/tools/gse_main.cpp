#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gse/data.hpp"
#include "gse/harness.hpp"
#include "gse/metrics.hpp"
#include "gse/model.hpp"
#include "gse/oracle.hpp"
#include "gse/pipe_oracle.hpp"
#include "gse/solver.hpp"

namespace fs = std::filesystem;
using namespace gse;

namespace {

struct AttackFlags {
    std::string attack = "gse";
    std::string mode = "untargeted";
    std::string model_path;
    std::string data_path;
    int count = -1;
    int targets = 0;
    std::string lambda = "auto";
    double mu = 1.0;
    double sigma = 0.005;
    double q = 0.25;
    int khat = 30;
    int iters = 200;
    int kernel_size = 3;
    double kernel_sigma = 1.0;
    int connectivity = 4;
    int patch_np = 4;
    std::uint64_t seed = 0;
    std::string out = "results.csv";
    int workers = 1;
    bool only_correct = false;
    std::string timing = "wall";
    std::string is_out;
};

void add_common_attack_flags(CLI::App* cmd, AttackFlags& f) {
    cmd->add_option("--attack", f.attack, "Attack engine")->check(CLI::IsMember({"fbs", "gse"}));
    cmd->add_option("--mode", f.mode, "Attack goal")
        ->check(CLI::IsMember({"targeted", "untargeted"}));
    cmd->add_option("--model", f.model_path, "Model file (.gsem)")->required();
    cmd->add_option("--data", f.data_path, "Dataset: CIFAR-10 .bin file/dir or tensor dir")
        ->required();
    cmd->add_option("--count", f.count, "Images to attack (-1 = all)");
    cmd->add_option("--lambda", f.lambda, "Sparsity weight, or 'auto' for section search");
    cmd->add_option("--mu", f.mu, "Magnitude regularizer weight");
    cmd->add_option("--sigma", f.sigma, "Gradient step size");
    cmd->add_option("--q", f.q, "Tradeoff growth divisor for unperturbed pixels, in (0,1]");
    cmd->add_option("--khat", f.khat, "Selection-phase iterations");
    cmd->add_option("--iters", f.iters, "Total iterations");
    cmd->add_option("--kernel-size", f.kernel_size, "Blur kernel side (odd)");
    cmd->add_option("--kernel-sigma", f.kernel_sigma, "Blur kernel sigma");
    cmd->add_option("--connectivity", f.connectivity, "Cluster connectivity")
        ->check(CLI::IsMember({4, 8}));
    cmd->add_option("--patch-np", f.patch_np, "Patch side for the group-sparsity score");
    cmd->add_option("--seed", f.seed, "Run seed")->envname("GSE_SEED");
    cmd->add_option("--out", f.out, "Summary CSV path");
    cmd->add_option("--workers", f.workers, "Parallel attack workers");
    cmd->add_flag("--only-correct", f.only_correct, "Attack only correctly classified images");
    cmd->add_option("--timing", f.timing, "Time columns: wall or none (byte-reproducible)")
        ->check(CLI::IsMember({"wall", "none"}));
}

RunOptions to_run_options(const AttackFlags& f, int num_classes) {
    RunOptions opt;
    opt.attack = attack_kind_from_string(f.attack);
    opt.config.mode = f.mode == "targeted" ? AttackMode::Targeted : AttackMode::Untargeted;
    opt.config.lambda = f.lambda == "auto" ? kLambdaAuto : std::stod(f.lambda);
    opt.config.mu = f.mu;
    opt.config.sigma = f.sigma;
    opt.config.q = f.q;
    opt.config.khat = f.khat;
    opt.config.iters = f.iters;
    opt.config.kernel_size = f.kernel_size;
    opt.config.kernel_sigma = f.kernel_sigma;
    opt.config.domain_lo = kDomainLo;
    opt.config.domain_hi = kDomainHi;
    opt.count = f.count;
    opt.targets = f.targets;
    if (opt.config.mode == AttackMode::Targeted && opt.targets == 0) {
        opt.targets = num_classes - 1;
    }
    opt.connectivity = f.connectivity;
    opt.patch_np = f.patch_np;
    opt.seed = f.seed;
    opt.workers = f.workers;
    opt.only_correct = f.only_correct;
    opt.include_time = f.timing == "wall";
    return opt;
}

std::string sibling_path(const std::string& out, const std::string& suffix) {
    fs::path p(out);
    fs::path stem = p.parent_path() / p.stem();
    return stem.string() + suffix;
}

std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << content;
    if (!f) throw std::runtime_error("write failed for " + path);
}

void write_is_curves(const std::string& path, const BatchOutcome& outcome,
                     const ModelOracle& oracle, const LabeledDataset& ds) {
    const std::vector<double> nus = {10, 20, 30, 40, 50, 60, 70, 80, 90};
    std::vector<double> sums(nus.size(), 0.0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < outcome.rows.size(); ++i) {
        const PerImageRow& row = outcome.rows[i];
        if (!row.cell.success || l2_norm(outcome.effective[i]) <= kZeroTol) continue;
        const int t = row.target_label >= 0 ? row.target_label : row.predicted_label;
        if (t == row.true_label) continue;
        const ImageTensor saliency = adversarial_saliency_map(
            oracle, ds.images[row.image_index], row.true_label, t);
        const auto curve = is_curve(outcome.effective[i], saliency, nus);
        for (std::size_t k = 0; k < nus.size(); ++k) sums[k] += curve[k].second;
        ++used;
    }
    std::ostringstream os;
    os << "nu,is\n";
    for (std::size_t k = 0; k < nus.size(); ++k) {
        os << format_float(nus[k]) << ','
           << format_float(used ? sums[k] / static_cast<double>(used) : 0.0) << '\n';
    }
    write_file(path, os.str());
}

int cmd_attack(const AttackFlags& flags) {
    const auto t0 = std::chrono::steady_clock::now();
    const ToyModel model = load_model(flags.model_path);
    const LabeledDataset ds = load_dataset(flags.data_path);
    const ModelOracle oracle(model);
    RunOptions opt = to_run_options(flags, ds.num_classes);
    opt.keep_perturbations = !flags.is_out.empty();

    const BatchOutcome outcome = run_batch(ds, oracle, opt);

    std::ostringstream summary;
    write_attack_summary_csv(summary, outcome, opt);
    write_file(flags.out, summary.str());

    std::ostringstream per_image;
    write_per_image_csv(per_image, outcome, opt);
    write_file(sibling_path(flags.out, ".per_image.csv"), per_image.str());

    if (!flags.is_out.empty()) write_is_curves(flags.is_out, outcome, oracle, ds);

    const auto t1 = std::chrono::steady_clock::now();
    const double wall = std::chrono::duration<double>(t1 - t0).count();
    write_file(sibling_path(flags.out, ".manifest.json"),
               make_run_manifest(opt, ds.name, hash_hex(fnv1a64_file(flags.model_path)),
                                 outcome.rows.size(), wall, flags.out));

    std::cout << summary.str();
    return 0;
}

int cmd_gridsearch(const AttackFlags& flags, const std::vector<double>& q_grid,
                   const std::vector<double>& sigma_grid, const std::vector<double>& mu_grid,
                   const std::vector<int>& khat_grid, int sample) {
    const ToyModel model = load_model(flags.model_path);
    const LabeledDataset ds = load_dataset(flags.data_path);
    const ModelOracle oracle(model);
    RunOptions base = to_run_options(flags, ds.num_classes);
    base.count = sample;

    const GridSearchOutcome outcome =
        run_grid_search(ds, oracle, base, q_grid, sigma_grid, mu_grid, khat_grid);
    std::ostringstream os;
    write_grid_csv(os, outcome, base.include_time);
    write_file(flags.out, os.str());
    std::cout << os.str();
    if (!outcome.best) {
        std::cerr << "gridsearch: no cell reached asr 1\n";
        return 2;
    }
    const GridCell& best = outcome.cells[*outcome.best];
    std::cout << "best: q=" << format_float(best.q) << " sigma=" << format_float(best.sigma)
              << " mu=" << format_float(best.mu) << " khat=" << best.khat
              << " objective=" << format_float(best.report.acp_count + best.report.anc) << "\n";
    return 0;
}

int cmd_ablate(const AttackFlags& flags, const std::vector<int>& khat_grid) {
    const ToyModel model = load_model(flags.model_path);
    const LabeledDataset ds = load_dataset(flags.data_path);
    const ModelOracle oracle(model);
    const RunOptions base = to_run_options(flags, ds.num_classes);
    const auto rows = run_khat_ablation(ds, oracle, base, khat_grid);
    std::ostringstream os;
    write_ablation_csv(os, rows, base.include_time);
    write_file(flags.out, os.str());
    std::cout << os.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group-wise sparse adversarial attacks with a built-in toy classifier"};
    app.require_subcommand(1);

    AttackFlags attack_flags;
    CLI::App* attack = app.add_subcommand("attack", "Run attacks and emit metric CSVs");
    add_common_attack_flags(attack, attack_flags);
    attack->add_option("--targets", attack_flags.targets,
                       "Wrong labels per image (targeted mode; 0 = classes-1)");
    attack->add_option("--is-out", attack_flags.is_out,
                       "Optional CSV of mean interpretability scores vs percentile");

    AttackFlags grid_flags;
    std::vector<double> grid_q{0.25}, grid_sigma{0.005}, grid_mu{1.0};
    std::vector<int> grid_khat{30};
    int grid_sample = 50;
    CLI::App* grid = app.add_subcommand("gridsearch", "Hyperparameter grid search");
    add_common_attack_flags(grid, grid_flags);
    grid->add_option("--grid-q", grid_q, "q grid")->delimiter(',');
    grid->add_option("--grid-sigma", grid_sigma, "sigma grid")->delimiter(',');
    grid->add_option("--grid-mu", grid_mu, "mu grid")->delimiter(',');
    grid->add_option("--grid-khat", grid_khat, "khat grid")->delimiter(',');
    grid->add_option("--sample", grid_sample, "Images per cell");
    grid->add_option("--targets", grid_flags.targets, "Wrong labels per image (targeted mode)");

    AttackFlags ablate_flags;
    std::vector<int> ablate_grid{5, 10, 20, 40};
    CLI::App* ablate = app.add_subcommand("ablate-khat", "Sweep selection-phase length");
    add_common_attack_flags(ablate, ablate_flags);
    ablate->add_option("--khat-grid", ablate_grid, "khat values")->delimiter(',');
    ablate->add_option("--targets", ablate_flags.targets, "Wrong labels per image");

    std::string train_data, train_arch = "mlp", train_out = "model.gsem";
    int train_epochs = 200, train_batch = 64, train_hidden = 32;
    double train_lr = 0.01;
    std::uint64_t train_seed = 0;
    CLI::App* train = app.add_subcommand("train", "Train a built-in toy classifier");
    train->add_option("--data", train_data)->required();
    train->add_option("--arch", train_arch)->check(CLI::IsMember({"linear", "mlp", "small_conv"}));
    train->add_option("--epochs", train_epochs);
    train->add_option("--lr", train_lr);
    train->add_option("--batch", train_batch);
    train->add_option("--hidden", train_hidden, "Hidden units / conv filters");
    train->add_option("--seed", train_seed)->envname("GSE_SEED");
    train->add_option("--out", train_out);

    int synth_classes = 3, synth_per_class = 50, synth_h = 16, synth_w = 16, synth_c = 3;
    std::uint64_t synth_seed = 0;
    std::string synth_out = "synth_data";
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
    synth->add_option("--classes", synth_classes);
    synth->add_option("--per-class", synth_per_class);
    synth->add_option("--height", synth_h);
    synth->add_option("--width", synth_w);
    synth->add_option("--channels", synth_c);
    synth->add_option("--seed", synth_seed)->envname("GSE_SEED");
    synth->add_option("--out", synth_out)->required();

    std::string serve_model;
    CLI::App* serve = app.add_subcommand("serve", "Serve a model over stdin/stdout frames");
    serve->add_option("--model", serve_model)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(attack)) return cmd_attack(attack_flags);
        if (app.got_subcommand(grid)) {
            return cmd_gridsearch(grid_flags, grid_q, grid_sigma, grid_mu, grid_khat, grid_sample);
        }
        if (app.got_subcommand(ablate)) return cmd_ablate(ablate_flags, ablate_grid);
        if (app.got_subcommand(train)) {
            const LabeledDataset ds = load_dataset(train_data);
            TrainOptions opt;
            opt.epochs = train_epochs;
            opt.learning_rate = train_lr;
            opt.batch = train_batch;
            opt.hidden = train_hidden;
            opt.seed = train_seed;
            const TrainReport report = train_toy(ds, arch_from_string(train_arch), opt);
            save_model(report.model, train_out, report.train_accuracy);
            std::cout << "arch=" << train_arch << " train_accuracy="
                      << format_float(report.train_accuracy)
                      << " final_loss=" << format_float(report.final_loss) << "\n";
            return 0;
        }
        if (app.got_subcommand(synth)) {
            const LabeledDataset ds = synth_dataset(synth_classes, synth_per_class, synth_h,
                                                    synth_w, synth_c, synth_seed);
            save_tensor_dir(ds, synth_out);
            std::cout << "wrote " << ds.size() << " images to " << synth_out << "\n";
            return 0;
        }
        if (app.got_subcommand(serve)) {
            return serve_model_frames(load_model(serve_model), std::cin, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
