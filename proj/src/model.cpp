#include "gse/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace gse {

namespace {

constexpr int kConvK = 3;  // small_conv kernel side

std::size_t conv_w_index(int f, int a, int b, int c, int channels) {
    return ((static_cast<std::size_t>(f) * kConvK + a) * kConvK + b) * channels + c;
}

}  // namespace

Arch arch_from_string(const std::string& s) {
    if (s == "linear") return Arch::Linear;
    if (s == "mlp") return Arch::Mlp;
    if (s == "small_conv" || s == "conv") return Arch::SmallConv;
    throw std::invalid_argument("unknown architecture: " + s);
}

std::string arch_to_string(Arch a) {
    switch (a) {
        case Arch::Linear: return "linear";
        case Arch::Mlp: return "mlp";
        case Arch::SmallConv: return "small_conv";
    }
    return "?";
}

int ToyModel::hidden_dim() const {
    switch (arch) {
        case Arch::Linear: return 0;
        case Arch::Mlp: return hidden;
        case Arch::SmallConv: return height * width * hidden;
    }
    return 0;
}

void ToyModel::validate_input(const ImageTensor& x) const {
    if (x.height != height || x.width != width || x.channels != channels) {
        throw std::invalid_argument("model input shape mismatch");
    }
}

ToyModel init_model(Arch arch, int height, int width, int channels, int num_classes,
                    int hidden, std::uint64_t seed) {
    if (height <= 0 || width <= 0 || channels <= 0 || num_classes <= 0) {
        throw std::invalid_argument("init_model: bad shape");
    }
    if (arch != Arch::Linear && hidden <= 0) {
        throw std::invalid_argument("init_model: hidden must be positive");
    }
    ToyModel m;
    m.arch = arch;
    m.height = height;
    m.width = width;
    m.channels = channels;
    m.num_classes = num_classes;
    m.hidden = arch == Arch::Linear ? 0 : hidden;

    const int dim = m.input_dim();
    std::mt19937_64 rng(seed);
    auto fill = [&rng](std::vector<double>& v, std::size_t n, int fan_in, int fan_out) {
        const double r = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-r, r);
        v.resize(n);
        for (double& x : v) x = dist(rng);
    };

    switch (arch) {
        case Arch::Linear:
            fill(m.w_out, static_cast<std::size_t>(num_classes) * dim, dim, num_classes);
            m.b_out.assign(num_classes, 0.0);
            break;
        case Arch::Mlp:
            fill(m.w_hidden, static_cast<std::size_t>(hidden) * dim, dim, hidden);
            m.b_hidden.assign(hidden, 0.0);
            fill(m.w_out, static_cast<std::size_t>(num_classes) * hidden, hidden, num_classes);
            m.b_out.assign(num_classes, 0.0);
            break;
        case Arch::SmallConv: {
            const int rf = kConvK * kConvK * channels;
            fill(m.w_hidden, static_cast<std::size_t>(hidden) * rf, rf, hidden);
            m.b_hidden.assign(hidden, 0.0);
            const int flat = height * width * hidden;
            fill(m.w_out, static_cast<std::size_t>(num_classes) * flat, flat, num_classes);
            m.b_out.assign(num_classes, 0.0);
            break;
        }
    }
    return m;
}

ForwardCache model_forward(const ToyModel& m, const ImageTensor& x) {
    m.validate_input(x);
    ForwardCache cache;
    const int dim = m.input_dim();
    switch (m.arch) {
        case Arch::Linear: {
            cache.logits.assign(m.num_classes, 0.0);
            for (int k = 0; k < m.num_classes; ++k) {
                double acc = m.b_out[k];
                const double* row = m.w_out.data() + static_cast<std::size_t>(k) * dim;
                for (int d = 0; d < dim; ++d) acc += row[d] * x.data[d];
                cache.logits[k] = acc;
            }
            break;
        }
        case Arch::Mlp: {
            cache.hidden_act.assign(m.hidden, 0.0);
            for (int u = 0; u < m.hidden; ++u) {
                double acc = m.b_hidden[u];
                const double* row = m.w_hidden.data() + static_cast<std::size_t>(u) * dim;
                for (int d = 0; d < dim; ++d) acc += row[d] * x.data[d];
                cache.hidden_act[u] = std::tanh(acc);
            }
            cache.logits.assign(m.num_classes, 0.0);
            for (int k = 0; k < m.num_classes; ++k) {
                double acc = m.b_out[k];
                const double* row = m.w_out.data() + static_cast<std::size_t>(k) * m.hidden;
                for (int u = 0; u < m.hidden; ++u) acc += row[u] * cache.hidden_act[u];
                cache.logits[k] = acc;
            }
            break;
        }
        case Arch::SmallConv: {
            const int flat = m.height * m.width * m.hidden;
            cache.hidden_act.assign(flat, 0.0);
            for (int i = 0; i < m.height; ++i) {
                for (int j = 0; j < m.width; ++j) {
                    for (int f = 0; f < m.hidden; ++f) {
                        double acc = m.b_hidden[f];
                        for (int a = 0; a < kConvK; ++a) {
                            const int ii = i + a - 1;
                            if (ii < 0 || ii >= m.height) continue;
                            for (int b = 0; b < kConvK; ++b) {
                                const int jj = j + b - 1;
                                if (jj < 0 || jj >= m.width) continue;
                                for (int c = 0; c < m.channels; ++c) {
                                    acc += m.w_hidden[conv_w_index(f, a, b, c, m.channels)] *
                                           x.at(ii, jj, c);
                                }
                            }
                        }
                        cache.hidden_act[(static_cast<std::size_t>(i) * m.width + j) * m.hidden + f] =
                            std::tanh(acc);
                    }
                }
            }
            cache.logits.assign(m.num_classes, 0.0);
            for (int k = 0; k < m.num_classes; ++k) {
                double acc = m.b_out[k];
                const double* row = m.w_out.data() + static_cast<std::size_t>(k) * flat;
                for (int d = 0; d < flat; ++d) acc += row[d] * cache.hidden_act[d];
                cache.logits[k] = acc;
            }
            break;
        }
    }
    return cache;
}

std::vector<double> model_logits(const ToyModel& m, const ImageTensor& x) {
    return model_forward(m, x).logits;
}

ImageTensor model_input_gradient(const ToyModel& m, const ImageTensor& x,
                                 const ForwardCache& cache, const std::vector<double>& dlogits) {
    m.validate_input(x);
    if (static_cast<int>(dlogits.size()) != m.num_classes) {
        throw std::invalid_argument("model_input_gradient: dlogits size mismatch");
    }
    ImageTensor grad = zeros_like(x);
    const int dim = m.input_dim();
    switch (m.arch) {
        case Arch::Linear: {
            for (int k = 0; k < m.num_classes; ++k) {
                const double g = dlogits[k];
                if (g == 0.0) continue;
                const double* row = m.w_out.data() + static_cast<std::size_t>(k) * dim;
                for (int d = 0; d < dim; ++d) grad.data[d] += g * row[d];
            }
            break;
        }
        case Arch::Mlp: {
            std::vector<double> dpre(m.hidden, 0.0);
            for (int u = 0; u < m.hidden; ++u) {
                double acc = 0.0;
                for (int k = 0; k < m.num_classes; ++k) {
                    acc += dlogits[k] * m.w_out[static_cast<std::size_t>(k) * m.hidden + u];
                }
                const double h = cache.hidden_act[u];
                dpre[u] = acc * (1.0 - h * h);
            }
            for (int u = 0; u < m.hidden; ++u) {
                const double g = dpre[u];
                if (g == 0.0) continue;
                const double* row = m.w_hidden.data() + static_cast<std::size_t>(u) * dim;
                for (int d = 0; d < dim; ++d) grad.data[d] += g * row[d];
            }
            break;
        }
        case Arch::SmallConv: {
            const int flat = m.height * m.width * m.hidden;
            std::vector<double> dpre(flat, 0.0);
            for (int d = 0; d < flat; ++d) {
                double acc = 0.0;
                for (int k = 0; k < m.num_classes; ++k) {
                    acc += dlogits[k] * m.w_out[static_cast<std::size_t>(k) * flat + d];
                }
                const double h = cache.hidden_act[d];
                dpre[d] = acc * (1.0 - h * h);
            }
            for (int p = 0; p < m.height; ++p) {
                for (int q = 0; q < m.width; ++q) {
                    for (int c = 0; c < m.channels; ++c) {
                        double acc = 0.0;
                        for (int a = 0; a < kConvK; ++a) {
                            const int i = p - (a - 1);
                            if (i < 0 || i >= m.height) continue;
                            for (int b = 0; b < kConvK; ++b) {
                                const int j = q - (b - 1);
                                if (j < 0 || j >= m.width) continue;
                                for (int f = 0; f < m.hidden; ++f) {
                                    acc += m.w_hidden[conv_w_index(f, a, b, c, m.channels)] *
                                           dpre[(static_cast<std::size_t>(i) * m.width + j) * m.hidden + f];
                                }
                            }
                        }
                        grad.at(p, q, c) = acc;
                    }
                }
            }
            break;
        }
    }
    return grad;
}

ParamGradients::ParamGradients(const ToyModel& m)
    : w_hidden(m.w_hidden.size(), 0.0),
      b_hidden(m.b_hidden.size(), 0.0),
      w_out(m.w_out.size(), 0.0),
      b_out(m.b_out.size(), 0.0) {}

void model_param_gradients(const ToyModel& m, const ImageTensor& x, const ForwardCache& cache,
                           const std::vector<double>& dlogits, ParamGradients& acc) {
    const int dim = m.input_dim();
    switch (m.arch) {
        case Arch::Linear: {
            for (int k = 0; k < m.num_classes; ++k) {
                const double g = dlogits[k];
                acc.b_out[k] += g;
                if (g == 0.0) continue;
                double* row = acc.w_out.data() + static_cast<std::size_t>(k) * dim;
                for (int d = 0; d < dim; ++d) row[d] += g * x.data[d];
            }
            break;
        }
        case Arch::Mlp: {
            std::vector<double> dpre(m.hidden, 0.0);
            for (int u = 0; u < m.hidden; ++u) {
                double s = 0.0;
                for (int k = 0; k < m.num_classes; ++k) {
                    s += dlogits[k] * m.w_out[static_cast<std::size_t>(k) * m.hidden + u];
                }
                const double h = cache.hidden_act[u];
                dpre[u] = s * (1.0 - h * h);
            }
            for (int k = 0; k < m.num_classes; ++k) {
                const double g = dlogits[k];
                acc.b_out[k] += g;
                double* row = acc.w_out.data() + static_cast<std::size_t>(k) * m.hidden;
                for (int u = 0; u < m.hidden; ++u) row[u] += g * cache.hidden_act[u];
            }
            for (int u = 0; u < m.hidden; ++u) {
                const double g = dpre[u];
                acc.b_hidden[u] += g;
                if (g == 0.0) continue;
                double* row = acc.w_hidden.data() + static_cast<std::size_t>(u) * dim;
                for (int d = 0; d < dim; ++d) row[d] += g * x.data[d];
            }
            break;
        }
        case Arch::SmallConv: {
            const int flat = m.height * m.width * m.hidden;
            std::vector<double> dpre(flat, 0.0);
            for (int d = 0; d < flat; ++d) {
                double s = 0.0;
                for (int k = 0; k < m.num_classes; ++k) {
                    s += dlogits[k] * m.w_out[static_cast<std::size_t>(k) * flat + d];
                }
                const double h = cache.hidden_act[d];
                dpre[d] = s * (1.0 - h * h);
            }
            for (int k = 0; k < m.num_classes; ++k) {
                const double g = dlogits[k];
                acc.b_out[k] += g;
                double* row = acc.w_out.data() + static_cast<std::size_t>(k) * flat;
                for (int d = 0; d < flat; ++d) row[d] += g * cache.hidden_act[d];
            }
            for (int i = 0; i < m.height; ++i) {
                for (int j = 0; j < m.width; ++j) {
                    for (int f = 0; f < m.hidden; ++f) {
                        const double g = dpre[(static_cast<std::size_t>(i) * m.width + j) * m.hidden + f];
                        acc.b_hidden[f] += g;
                        if (g == 0.0) continue;
                        for (int a = 0; a < kConvK; ++a) {
                            const int ii = i + a - 1;
                            if (ii < 0 || ii >= m.height) continue;
                            for (int b = 0; b < kConvK; ++b) {
                                const int jj = j + b - 1;
                                if (jj < 0 || jj >= m.width) continue;
                                for (int c = 0; c < m.channels; ++c) {
                                    acc.w_hidden[conv_w_index(f, a, b, c, m.channels)] +=
                                        g * x.at(ii, jj, c);
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
    }
}

double softmax_cross_entropy(const std::vector<double>& logits, int label,
                             std::vector<double>* dlogits) {
    if (label < 0 || label >= static_cast<int>(logits.size())) {
        throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double lse = zmax + std::log(sum);
    if (dlogits) {
        dlogits->resize(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k) {
            (*dlogits)[k] = std::exp(logits[k] - lse);
        }
        (*dlogits)[label] -= 1.0;
    }
    return lse - logits[label];
}

int argmax_class(const std::vector<double>& logits) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double dataset_accuracy(const ToyModel& m, const LabeledDataset& ds) {
    if (ds.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (argmax_class(model_logits(m, ds.images[i])) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace {

struct AdamState {
    std::vector<double> m1, m2;
    explicit AdamState(std::size_t n) : m1(n, 0.0), m2(n, 0.0) {}
};

void adam_step(std::vector<double>& w, const std::vector<double>& g, AdamState& st, double lr,
               int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double corr1 = 1.0 - std::pow(b1, t);
    const double corr2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
        st.m1[i] = b1 * st.m1[i] + (1.0 - b1) * g[i];
        st.m2[i] = b2 * st.m2[i] + (1.0 - b2) * g[i] * g[i];
        w[i] -= lr * (st.m1[i] / corr1) / (std::sqrt(st.m2[i] / corr2) + eps);
    }
}

}  // namespace

TrainReport train_toy(const LabeledDataset& ds, Arch arch, const TrainOptions& opt) {
    if (ds.size() == 0) throw std::invalid_argument("train_toy: empty dataset");
    for (int l : ds.labels) {
        if (l < 0 || l >= ds.num_classes) throw std::invalid_argument("train_toy: label out of range");
    }
    const ImageTensor& first = ds.images.front();
    TrainReport report;
    report.model = init_model(arch, first.height, first.width, first.channels, ds.num_classes,
                              opt.hidden, opt.seed);
    ToyModel& m = report.model;

    AdamState s_wh(m.w_hidden.size()), s_bh(m.b_hidden.size());
    AdamState s_wo(m.w_out.size()), s_bo(m.b_out.size());
    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    const int batch = std::max(1, std::min<int>(opt.batch, static_cast<int>(ds.size())));

    int step = 0;
    double last_loss = 0.0;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            ParamGradients grads(m);
            double batch_loss = 0.0;
            std::vector<double> dlogits;
            for (std::size_t idx = start; idx < end; ++idx) {
                const std::size_t i = order[idx];
                ForwardCache cache = model_forward(m, ds.images[i]);
                batch_loss += softmax_cross_entropy(cache.logits, ds.labels[i], &dlogits);
                const double scale = 1.0 / static_cast<double>(end - start);
                for (double& g : dlogits) g *= scale;
                model_param_gradients(m, ds.images[i], cache, dlogits, grads);
            }
            batch_loss /= static_cast<double>(end - start);
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train_toy: loss diverged (non-finite)");
            }
            ++step;
            adam_step(m.w_hidden, grads.w_hidden, s_wh, opt.learning_rate, step);
            adam_step(m.b_hidden, grads.b_hidden, s_bh, opt.learning_rate, step);
            adam_step(m.w_out, grads.w_out, s_wo, opt.learning_rate, step);
            adam_step(m.b_out, grads.b_out, s_bo, opt.learning_rate, step);
            epoch_loss += batch_loss * static_cast<double>(end - start);
        }
        last_loss = epoch_loss / static_cast<double>(ds.size());
    }
    report.final_loss = last_loss;
    report.train_accuracy = dataset_accuracy(m, ds);
    return report;
}

namespace {

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_floats(std::vector<std::uint8_t>& buf, const std::vector<double>& v) {
    for (double x : v) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
}

void get_floats(const std::uint8_t*& p, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = static_cast<double>(std::bit_cast<float>(get_u32(p)));
        p += 4;
    }
}

}  // namespace

void save_model(const ToyModel& m, const std::string& path, double train_accuracy) {
    nlohmann::json header;
    header["format"] = "gse-model";
    header["arch"] = arch_to_string(m.arch);
    header["height"] = m.height;
    header["width"] = m.width;
    header["channels"] = m.channels;
    header["classes"] = m.num_classes;
    header["hidden"] = m.hidden;
    header["activation"] = "tanh";
    if (train_accuracy >= 0.0) header["train_accuracy"] = train_accuracy;
    const std::string js = header.dump();

    std::vector<std::uint8_t> buf;
    buf.push_back('G');
    buf.push_back('S');
    buf.push_back('E');
    buf.push_back('M');
    put_u32(buf, static_cast<std::uint32_t>(js.size()));
    buf.insert(buf.end(), js.begin(), js.end());
    put_floats(buf, m.w_hidden);
    put_floats(buf, m.b_hidden);
    put_floats(buf, m.w_out);
    put_floats(buf, m.b_out);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_model: cannot open " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("save_model: write failed for " + path);
}

ToyModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_model: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || buf[0] != 'G' || buf[1] != 'S' || buf[2] != 'E' || buf[3] != 'M') {
        throw std::runtime_error("load_model: bad magic in " + path);
    }
    const std::uint32_t jlen = get_u32(buf.data() + 4);
    if (buf.size() < 8 + jlen) throw std::runtime_error("load_model: truncated header in " + path);
    const nlohmann::json header =
        nlohmann::json::parse(buf.begin() + 8, buf.begin() + 8 + jlen);
    if (header.value("format", "") != "gse-model") {
        throw std::runtime_error("load_model: unexpected format field");
    }

    ToyModel m;
    m.arch = arch_from_string(header.at("arch").get<std::string>());
    m.height = header.at("height").get<int>();
    m.width = header.at("width").get<int>();
    m.channels = header.at("channels").get<int>();
    m.num_classes = header.at("classes").get<int>();
    m.hidden = header.at("hidden").get<int>();

    std::size_t n_wh = 0, n_bh = 0;
    switch (m.arch) {
        case Arch::Linear:
            break;
        case Arch::Mlp:
            n_wh = static_cast<std::size_t>(m.hidden) * m.input_dim();
            n_bh = m.hidden;
            break;
        case Arch::SmallConv:
            n_wh = static_cast<std::size_t>(m.hidden) * kConvK * kConvK * m.channels;
            n_bh = m.hidden;
            break;
    }
    const std::size_t flat = m.arch == Arch::Mlp      ? static_cast<std::size_t>(m.hidden)
                             : m.arch == Arch::Linear ? static_cast<std::size_t>(m.input_dim())
                                                      : static_cast<std::size_t>(m.hidden_dim());
    const std::size_t n_wo = static_cast<std::size_t>(m.num_classes) * flat;
    const std::size_t n_bo = m.num_classes;
    const std::size_t expect = 8 + jlen + 4 * (n_wh + n_bh + n_wo + n_bo);
    if (buf.size() != expect) {
        throw std::runtime_error("load_model: payload size mismatch in " + path);
    }
    const std::uint8_t* p = buf.data() + 8 + jlen;
    get_floats(p, m.w_hidden, n_wh);
    get_floats(p, m.b_hidden, n_bh);
    get_floats(p, m.w_out, n_wo);
    get_floats(p, m.b_out, n_bo);
    return m;
}

}  // namespace gse
