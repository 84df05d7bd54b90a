#ifndef GSE_TENSOR_HPP
#define GSE_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace gse {

// Entries with magnitude at or below this count as numerically zero
// everywhere a "nonzero" test appears (masks, patch norms, norm guards).
inline constexpr double kZeroTol = 1e-12;

// Dense M x N x C real tensor, row-major (i, j, c). Images, perturbations,
// gradients and tradeoff fields all share this layout.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    bool same_shape(const ImageTensor& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    double& at(int i, int j, int c) {
        return data[(static_cast<std::size_t>(i) * width + j) * channels + c];
    }
    double at(int i, int j, int c) const {
        return data[(static_cast<std::size_t>(i) * width + j) * channels + c];
    }
};

// M x N binary mask, entries are exactly 0 or 1.
struct PixelMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    PixelMask() = default;
    PixelMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int i, int j) { return data[static_cast<std::size_t>(i) * width + j]; }
    std::uint8_t at(int i, int j) const { return data[static_cast<std::size_t>(i) * width + j]; }
    std::size_t count_ones() const;
};

// M x N real matrix (blurred masks, channel reductions).
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Grid() = default;
    Grid(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * width + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * width + j]; }
};

// Square blur kernel; odd size, nonnegative weights summing to 1 so that a
// {0,1} mask convolved with it stays in [0,1].
struct BlurKernel {
    int size = 0;
    double sigma = 0.0;
    std::vector<double> weights;  // size x size, row-major

    double at(int a, int b) const { return weights[static_cast<std::size_t>(a) * size + b]; }
};

ImageTensor clip_to_domain(const ImageTensor& x, double lo, double hi);

// Normalized Gaussian weights around the kernel center; n must be odd.
BlurKernel gaussian_kernel(int n, double sigma);

// Same-size 2-D convolution with zero padding outside the mask.
Grid conv2d_same(const PixelMask& m, const BlurKernel& k);

// Per-pixel sum of channel magnitudes.
Grid channel_abs_sum(const ImageTensor& w);

// Element-wise helpers shared by the solvers.
ImageTensor zeros_like(const ImageTensor& x);
double l2_norm(const ImageTensor& x);
double max_abs(const ImageTensor& x);
bool all_finite(const ImageTensor& x);
std::size_t count_nonzero(const ImageTensor& x, double tol = kZeroTol);
// out = a*u + b*v
ImageTensor linear_combination(double a, const ImageTensor& u, double b, const ImageTensor& v);

// Binary tensor file format: magic "GSET", u32 height/width/channels, then
// height*width*channels little-endian f32 values in row-major (i, j, c) order.
void save_tensor(const ImageTensor& x, const std::string& path);
ImageTensor load_tensor(const std::string& path);
std::vector<std::uint8_t> tensor_to_bytes(const ImageTensor& x);
ImageTensor tensor_from_bytes(const std::uint8_t* bytes, std::size_t len);

}  // namespace gse

#endif
