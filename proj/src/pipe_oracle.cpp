#include "gse/pipe_oracle.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "gse/wire.hpp"

namespace gse {

namespace {

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
    while (len > 0) {
        const ssize_t n = ::write(fd, data, len);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error(std::string("pipe write failed: ") + std::strerror(errno));
        }
        data += n;
        len -= static_cast<std::size_t>(n);
    }
}

bool read_exact(int fd, std::uint8_t* data, std::size_t len) {
    while (len > 0) {
        const ssize_t n = ::read(fd, data, len);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error(std::string("pipe read failed: ") + std::strerror(errno));
        }
        if (n == 0) return false;  // EOF
        data += n;
        len -= static_cast<std::size_t>(n);
    }
    return true;
}

void write_frame_fd(int fd, const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> header;
    wire::put_u32(header, static_cast<std::uint32_t>(payload.size()));
    write_all(fd, header.data(), header.size());
    write_all(fd, payload.data(), payload.size());
}

bool read_frame_fd(int fd, std::vector<std::uint8_t>& payload) {
    std::uint8_t header[4];
    if (!read_exact(fd, header, 4)) return false;
    payload.resize(wire::get_u32(header));
    if (!payload.empty() && !read_exact(fd, payload.data(), payload.size())) {
        throw std::runtime_error("pipe oracle: truncated frame");
    }
    return true;
}

constexpr std::size_t kMaxFrame = 1u << 28;

}  // namespace

PipeOracle::PipeOracle(const std::vector<std::string>& argv) {
    if (argv.empty()) throw std::invalid_argument("PipeOracle: empty command");
    int to_pipe[2], from_pipe[2];
    if (::pipe(to_pipe) != 0 || ::pipe(from_pipe) != 0) {
        throw std::runtime_error("PipeOracle: pipe() failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("PipeOracle: fork() failed");
    if (pid == 0) {
        ::dup2(to_pipe[0], STDIN_FILENO);
        ::dup2(from_pipe[1], STDOUT_FILENO);
        ::close(to_pipe[0]);
        ::close(to_pipe[1]);
        ::close(from_pipe[0]);
        ::close(from_pipe[1]);
        std::vector<char*> args;
        args.reserve(argv.size() + 1);
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(to_pipe[0]);
    ::close(from_pipe[1]);
    to_child_ = to_pipe[1];
    from_child_ = from_pipe[0];
    pid_ = pid;

    const auto info = roundtrip({'I'});
    if (info.size() != 16) throw std::runtime_error("PipeOracle: bad info response");
    shape_ = {static_cast<int>(wire::get_u32(info.data())),
              static_cast<int>(wire::get_u32(info.data() + 4)),
              static_cast<int>(wire::get_u32(info.data() + 8))};
    classes_ = static_cast<int>(wire::get_u32(info.data() + 12));
}

PipeOracle::~PipeOracle() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (pid_ > 0) {
        int status = 0;
        ::waitpid(static_cast<pid_t>(pid_), &status, 0);
    }
}

std::vector<std::uint8_t> PipeOracle::roundtrip(const std::vector<std::uint8_t>& payload) const {
    std::lock_guard<std::mutex> guard(lock_);
    write_frame_fd(to_child_, payload);
    std::vector<std::uint8_t> response;
    if (!read_frame_fd(from_child_, response)) {
        throw std::runtime_error("PipeOracle: server closed the stream");
    }
    if (response.empty()) throw std::runtime_error("PipeOracle: empty response");
    if (response[0] != 0) {
        throw std::runtime_error("PipeOracle: server error: " +
                                 std::string(response.begin() + 1, response.end()));
    }
    response.erase(response.begin());
    return response;
}

std::vector<double> PipeOracle::logits(const ImageTensor& x) const {
    std::vector<std::uint8_t> payload{'Z'};
    const auto tensor = tensor_to_bytes(x);
    payload.insert(payload.end(), tensor.begin(), tensor.end());
    const auto body = roundtrip(payload);
    if (body.size() < 4) throw std::runtime_error("PipeOracle: short logits response");
    const std::uint32_t count = wire::get_u32(body.data());
    if (body.size() != 4 + count * 4) throw std::runtime_error("PipeOracle: bad logits length");
    std::vector<double> out(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        out[i] = static_cast<double>(wire::get_f32(body.data() + 4 + i * 4));
    }
    return out;
}

double PipeOracle::ce_loss_and_grad(const ImageTensor& x, int label, ImageTensor* grad) const {
    std::vector<std::uint8_t> payload{'C'};
    wire::put_u32(payload, static_cast<std::uint32_t>(label));
    const auto tensor = tensor_to_bytes(x);
    payload.insert(payload.end(), tensor.begin(), tensor.end());
    const auto body = roundtrip(payload);
    if (body.size() < 4) throw std::runtime_error("PipeOracle: short loss response");
    const double loss = static_cast<double>(wire::get_f32(body.data()));
    if (grad) *grad = tensor_from_bytes(body.data() + 4, body.size() - 4);
    return loss;
}

ImageTensor PipeOracle::logit_input_gradient(const ImageTensor& x, int class_index) const {
    std::vector<std::uint8_t> payload{'T'};
    wire::put_u32(payload, static_cast<std::uint32_t>(class_index));
    const auto tensor = tensor_to_bytes(x);
    payload.insert(payload.end(), tensor.begin(), tensor.end());
    const auto body = roundtrip(payload);
    return tensor_from_bytes(body.data(), body.size());
}

namespace {

bool read_frame_stream(std::istream& in, std::vector<std::uint8_t>& payload) {
    std::uint8_t header[4];
    in.read(reinterpret_cast<char*>(header), 4);
    if (in.gcount() == 0 && in.eof()) return false;
    if (in.gcount() != 4) throw std::runtime_error("serve: truncated frame header");
    const std::uint32_t len = wire::get_u32(header);
    if (len > kMaxFrame) throw std::runtime_error("serve: oversized frame");
    payload.resize(len);
    if (len > 0) {
        in.read(reinterpret_cast<char*>(payload.data()), len);
        if (static_cast<std::uint32_t>(in.gcount()) != len) {
            throw std::runtime_error("serve: truncated frame payload");
        }
    }
    return true;
}

void write_frame_stream(std::ostream& out, const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> header;
    wire::put_u32(header, static_cast<std::uint32_t>(payload.size()));
    out.write(reinterpret_cast<const char*>(header.data()), 4);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    out.flush();
}

std::vector<std::uint8_t> handle_request(const ModelOracle& oracle,
                                         const std::vector<std::uint8_t>& req) {
    if (req.empty()) throw std::runtime_error("empty request");
    std::vector<std::uint8_t> body{0};
    switch (req[0]) {
        case 'I': {
            const auto shape = oracle.input_shape();
            wire::put_u32(body, static_cast<std::uint32_t>(shape[0]));
            wire::put_u32(body, static_cast<std::uint32_t>(shape[1]));
            wire::put_u32(body, static_cast<std::uint32_t>(shape[2]));
            wire::put_u32(body, static_cast<std::uint32_t>(oracle.num_classes()));
            return body;
        }
        case 'Z': {
            const ImageTensor x = tensor_from_bytes(req.data() + 1, req.size() - 1);
            const auto logits = oracle.logits(x);
            wire::put_u32(body, static_cast<std::uint32_t>(logits.size()));
            for (double z : logits) wire::put_f32(body, static_cast<float>(z));
            return body;
        }
        case 'C': {
            if (req.size() < 5) throw std::runtime_error("short loss request");
            const int label = static_cast<int>(wire::get_u32(req.data() + 1));
            const ImageTensor x = tensor_from_bytes(req.data() + 5, req.size() - 5);
            ImageTensor grad;
            const double loss = oracle.ce_loss_and_grad(x, label, &grad);
            wire::put_f32(body, static_cast<float>(loss));
            const auto tensor = tensor_to_bytes(grad);
            body.insert(body.end(), tensor.begin(), tensor.end());
            return body;
        }
        case 'T': {
            if (req.size() < 5) throw std::runtime_error("short gradient request");
            const int cls = static_cast<int>(wire::get_u32(req.data() + 1));
            const ImageTensor x = tensor_from_bytes(req.data() + 5, req.size() - 5);
            const auto tensor = tensor_to_bytes(oracle.logit_input_gradient(x, cls));
            body.insert(body.end(), tensor.begin(), tensor.end());
            return body;
        }
        default:
            throw std::runtime_error("unknown opcode");
    }
}

}  // namespace

int serve_model_frames(const ToyModel& model, std::istream& in, std::ostream& out) {
    const ModelOracle oracle(model);
    std::vector<std::uint8_t> request;
    while (read_frame_stream(in, request)) {
        std::vector<std::uint8_t> response;
        try {
            response = handle_request(oracle, request);
        } catch (const std::exception& e) {
            response.clear();
            response.push_back(1);
            const std::string msg = e.what();
            response.insert(response.end(), msg.begin(), msg.end());
        }
        write_frame_stream(out, response);
    }
    return 0;
}

}  // namespace gse
