#ifndef GSE_DATA_HPP
#define GSE_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "gse/tensor.hpp"

namespace gse {

// Pixel domain is [0,1] repo-wide.
inline constexpr double kDomainLo = 0.0;
inline constexpr double kDomainHi = 1.0;

struct LabeledDataset {
    std::string name;
    int num_classes = 0;
    std::vector<ImageTensor> images;  // entries in [0,1]
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
};

// CIFAR-10 binary records: 1 label byte + 3072 pixel bytes (channel-major
// R,G,B planes of 32x32), pixels scaled by 1/255. `path` may be a single
// .bin file or a directory of *.bin batch files (loaded in sorted order).
LabeledDataset load_cifar10(const std::string& path);

// Inverse of the record parse; images must be 32x32x3 on the 1/255 grid.
void save_cifar10_records(const LabeledDataset& ds, const std::string& path);

// Class-dependent localized patches plus Gaussian noise, clipped to [0,1]
// and quantized to the 8-bit grid. Deterministic per seed.
LabeledDataset synth_dataset(int num_classes, int per_class, int height, int width,
                             int channels, std::uint64_t seed);

// Directory of GSET tensors plus a manifest.json index; accepts any shape.
void save_tensor_dir(const LabeledDataset& ds, const std::string& dir);
LabeledDataset load_tensor_dir(const std::string& dir);

// Loads either format based on what the path points at.
LabeledDataset load_dataset(const std::string& path);

// Distinct nonzero offsets; target labels for true label l are (l + a_i) mod
// num_classes, so they are distinct and never equal to l.
struct TargetPlan {
    std::vector<int> offsets;
    std::uint64_t seed = 0;
};

TargetPlan make_target_plan(int num_targets, int num_classes, std::uint64_t seed);
std::vector<int> make_targets(int true_label, const TargetPlan& plan, int num_classes);

}  // namespace gse

#endif
