#include "gse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace gse {

namespace {

constexpr std::size_t kCifarRecord = 3073;
constexpr int kCifarSide = 32;
constexpr int kCifarChannels = 3;

// All ingestion paths pass pixel values through f32 so GSET round-trips
// are bit-exact.
double byte_pixel(std::uint8_t b) {
    return static_cast<double>(static_cast<float>(b) / 255.0f);
}

void parse_cifar_stream(const std::vector<std::uint8_t>& bytes, const std::string& origin,
                        std::size_t base_offset, LabeledDataset& out) {
    if (bytes.size() % kCifarRecord != 0) {
        throw std::runtime_error("load_cifar10: " + origin + " truncated at byte " +
                                 std::to_string(base_offset + bytes.size() -
                                                bytes.size() % kCifarRecord));
    }
    const std::size_t records = bytes.size() / kCifarRecord;
    for (std::size_t r = 0; r < records; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
        const int label = rec[0];
        if (label > 9) {
            throw std::runtime_error("load_cifar10: " + origin + " bad label " +
                                     std::to_string(label) + " at byte " +
                                     std::to_string(base_offset + r * kCifarRecord));
        }
        ImageTensor img(kCifarSide, kCifarSide, kCifarChannels);
        for (int c = 0; c < kCifarChannels; ++c) {
            for (int i = 0; i < kCifarSide; ++i) {
                for (int j = 0; j < kCifarSide; ++j) {
                    img.at(i, j, c) = byte_pixel(rec[1 + c * 1024 + i * kCifarSide + j]);
                }
            }
        }
        out.images.push_back(std::move(img));
        out.labels.push_back(label);
    }
}

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

}  // namespace

LabeledDataset load_cifar10(const std::string& path) {
    LabeledDataset ds;
    ds.num_classes = 10;
    ds.name = "cifar10:" + path;
    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.path().extension() == ".bin") files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw std::runtime_error("load_cifar10: no .bin files in " + path);
        for (const auto& f : files) parse_cifar_stream(read_all_bytes(f), f, 0, ds);
    } else {
        parse_cifar_stream(read_all_bytes(path), path, 0, ds);
    }
    return ds;
}

void save_cifar10_records(const LabeledDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_cifar10_records: cannot open " + path);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const ImageTensor& img = ds.images[r];
        if (img.height != kCifarSide || img.width != kCifarSide || img.channels != kCifarChannels) {
            throw std::invalid_argument("save_cifar10_records: images must be 32x32x3");
        }
        std::vector<std::uint8_t> rec(kCifarRecord);
        rec[0] = static_cast<std::uint8_t>(ds.labels[r]);
        for (int c = 0; c < kCifarChannels; ++c) {
            for (int i = 0; i < kCifarSide; ++i) {
                for (int j = 0; j < kCifarSide; ++j) {
                    const double v = img.at(i, j, c);
                    rec[1 + c * 1024 + i * kCifarSide + j] =
                        static_cast<std::uint8_t>(std::lround(v * 255.0));
                }
            }
        }
        f.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    }
    if (!f) throw std::runtime_error("save_cifar10_records: write failed");
}

LabeledDataset synth_dataset(int num_classes, int per_class, int height, int width,
                             int channels, std::uint64_t seed) {
    if (num_classes <= 0 || height <= 0 || width <= 0 || channels <= 0 || per_class < 0) {
        throw std::invalid_argument("synth_dataset: parameters must be positive");
    }
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.name = "synth-" + std::to_string(num_classes) + "c-" + std::to_string(height) + "x" +
              std::to_string(width) + "x" + std::to_string(channels) + "-seed" +
              std::to_string(seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> background(0.30, 0.06);
    std::normal_distribution<double> patch(0.85, 0.05);

    // Class anchors on a g x g grid so patch position encodes the class.
    const int grid = std::max(1, static_cast<int>(std::ceil(std::sqrt(double(num_classes)))));
    const int side = std::max(3, std::min(height, width) / 3);

    for (int cls = 0; cls < num_classes; ++cls) {
        const int gi = cls / grid;
        const int gj = cls % grid;
        const int row0 = grid == 1 ? (height - side) / 2
                                   : gi * std::max(1, (height - side)) / std::max(1, grid - 1);
        const int col0 = grid == 1 ? (width - side) / 2
                                   : gj * std::max(1, (width - side)) / std::max(1, grid - 1);
        for (int n = 0; n < per_class; ++n) {
            ImageTensor img(height, width, channels);
            for (double& v : img.data) v = background(rng);
            for (int i = row0; i < std::min(height, row0 + side); ++i) {
                for (int j = col0; j < std::min(width, col0 + side); ++j) {
                    for (int c = 0; c < channels; ++c) {
                        // Emphasize one channel per class so color also carries signal.
                        const double scale = (c == cls % channels) ? 1.0 : 0.55;
                        img.at(i, j, c) = patch(rng) * scale;
                    }
                }
            }
            for (double& v : img.data) {
                const double clipped = std::min(1.0, std::max(0.0, v));
                v = byte_pixel(static_cast<std::uint8_t>(std::lround(clipped * 255.0)));
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(cls);
        }
    }
    return ds;
}

void save_tensor_dir(const LabeledDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["name"] = ds.name;
    manifest["num_classes"] = ds.num_classes;
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%06zu.gset", i);
        save_tensor(ds.images[i], (fs::path(dir) / name).string());
        items.push_back({{"file", name}, {"label", ds.labels[i]}});
    }
    manifest["items"] = std::move(items);
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("save_tensor_dir: cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

LabeledDataset load_tensor_dir(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("load_tensor_dir: missing manifest.json in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(f);
    LabeledDataset ds;
    ds.name = manifest.value("name", dir);
    ds.num_classes = manifest.at("num_classes").get<int>();
    for (const auto& item : manifest.at("items")) {
        const std::string file = item.at("file").get<std::string>();
        const int label = item.at("label").get<int>();
        if (label < 0 || label >= ds.num_classes) {
            throw std::runtime_error("load_tensor_dir: label out of range for " + file);
        }
        ds.images.push_back(load_tensor((fs::path(dir) / file).string()));
        ds.labels.push_back(label);
    }
    return ds;
}

LabeledDataset load_dataset(const std::string& path) {
    if (fs::is_directory(path) && fs::exists(fs::path(path) / "manifest.json")) {
        return load_tensor_dir(path);
    }
    return load_cifar10(path);
}

TargetPlan make_target_plan(int num_targets, int num_classes, std::uint64_t seed) {
    if (num_targets < 1) throw std::invalid_argument("make_target_plan: need at least one target");
    if (num_classes <= num_targets) {
        throw std::invalid_argument("make_target_plan: need num_classes > num_targets");
    }
    std::vector<int> pool(num_classes - 1);
    std::iota(pool.begin(), pool.end(), 1);  // nonzero offsets mod num_classes
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    TargetPlan plan;
    plan.seed = seed;
    plan.offsets.assign(pool.begin(), pool.begin() + num_targets);
    return plan;
}

std::vector<int> make_targets(int true_label, const TargetPlan& plan, int num_classes) {
    std::vector<int> targets;
    targets.reserve(plan.offsets.size());
    for (int a : plan.offsets) {
        if (a % num_classes == 0) throw std::invalid_argument("make_targets: zero offset");
        targets.push_back((true_label + a) % num_classes);
    }
    return targets;
}

}  // namespace gse
