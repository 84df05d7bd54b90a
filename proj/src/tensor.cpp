#include "gse/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gse {

ImageTensor::ImageTensor(int h, int w, int c, double fill)
    : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0) {
        throw std::invalid_argument("ImageTensor: dimensions must be positive");
    }
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

std::size_t PixelMask::count_ones() const {
    std::size_t n = 0;
    for (auto v : data) n += v;
    return n;
}

ImageTensor clip_to_domain(const ImageTensor& x, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("clip_to_domain: lo > hi");
    ImageTensor out = x;
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return out;
}

BlurKernel gaussian_kernel(int n, double sigma) {
    if (n < 1 || n % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd and positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    BlurKernel k;
    k.size = n;
    k.sigma = sigma;
    k.weights.resize(static_cast<std::size_t>(n) * n);
    const int half = n / 2;
    double sum = 0.0;
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            const double da = a - half;
            const double db = b - half;
            const double w = std::exp(-(da * da + db * db) / (2.0 * sigma * sigma));
            k.weights[static_cast<std::size_t>(a) * n + b] = w;
            sum += w;
        }
    }
    for (double& w : k.weights) w /= sum;
    return k;
}

Grid conv2d_same(const PixelMask& m, const BlurKernel& k) {
    if (k.size >= std::min(m.height, m.width)) {
        throw std::invalid_argument("conv2d_same: kernel must be smaller than the mask");
    }
    const int half = k.size / 2;
    Grid out(m.height, m.width);
    for (int i = 0; i < m.height; ++i) {
        for (int j = 0; j < m.width; ++j) {
            double acc = 0.0;
            for (int a = -half; a <= half; ++a) {
                const int ii = i + a;
                if (ii < 0 || ii >= m.height) continue;
                for (int b = -half; b <= half; ++b) {
                    const int jj = j + b;
                    if (jj < 0 || jj >= m.width) continue;
                    acc += k.at(a + half, b + half) * m.at(ii, jj);
                }
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

Grid channel_abs_sum(const ImageTensor& w) {
    Grid out(w.height, w.width);
    for (int i = 0; i < w.height; ++i) {
        for (int j = 0; j < w.width; ++j) {
            double acc = 0.0;
            for (int c = 0; c < w.channels; ++c) acc += std::fabs(w.at(i, j, c));
            out.at(i, j) = acc;
        }
    }
    return out;
}

ImageTensor zeros_like(const ImageTensor& x) {
    return ImageTensor(x.height, x.width, x.channels, 0.0);
}

double l2_norm(const ImageTensor& x) {
    double acc = 0.0;
    for (double v : x.data) acc += v * v;
    return std::sqrt(acc);
}

double max_abs(const ImageTensor& x) {
    double m = 0.0;
    for (double v : x.data) m = std::max(m, std::fabs(v));
    return m;
}

bool all_finite(const ImageTensor& x) {
    for (double v : x.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::size_t count_nonzero(const ImageTensor& x, double tol) {
    std::size_t n = 0;
    for (double v : x.data) {
        if (std::fabs(v) > tol) ++n;
    }
    return n;
}

ImageTensor linear_combination(double a, const ImageTensor& u, double b, const ImageTensor& v) {
    if (!u.same_shape(v)) throw std::invalid_argument("linear_combination: shape mismatch");
    ImageTensor out = zeros_like(u);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = a * u.data[i] + b * v.data[i];
    }
    return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> tensor_to_bytes(const ImageTensor& x) {
    std::vector<std::uint8_t> buf;
    buf.reserve(16 + x.data.size() * 4);
    buf.push_back('G');
    buf.push_back('S');
    buf.push_back('E');
    buf.push_back('T');
    put_u32(buf, static_cast<std::uint32_t>(x.height));
    put_u32(buf, static_cast<std::uint32_t>(x.width));
    put_u32(buf, static_cast<std::uint32_t>(x.channels));
    for (double v : x.data) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        put_u32(buf, bits);
    }
    return buf;
}

ImageTensor tensor_from_bytes(const std::uint8_t* bytes, std::size_t len) {
    if (len < 16 || bytes[0] != 'G' || bytes[1] != 'S' || bytes[2] != 'E' || bytes[3] != 'T') {
        throw std::runtime_error("tensor_from_bytes: bad magic or truncated header");
    }
    const std::uint32_t h = get_u32(bytes + 4);
    const std::uint32_t w = get_u32(bytes + 8);
    const std::uint32_t c = get_u32(bytes + 12);
    const std::size_t n = static_cast<std::size_t>(h) * w * c;
    if (h == 0 || w == 0 || c == 0 || len != 16 + n * 4) {
        throw std::runtime_error("tensor_from_bytes: payload length does not match header");
    }
    ImageTensor out(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = get_u32(bytes + 16 + i * 4);
        out.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return out;
}

void save_tensor(const ImageTensor& x, const std::string& path) {
    const auto buf = tensor_to_bytes(x);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_tensor: cannot open " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("save_tensor: write failed for " + path);
}

ImageTensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_tensor: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return tensor_from_bytes(buf.data(), buf.size());
}

}  // namespace gse
