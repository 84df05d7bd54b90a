#ifndef GSE_PIPE_ORACLE_HPP
#define GSE_PIPE_ORACLE_HPP

#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

#include "gse/model.hpp"
#include "gse/oracle.hpp"

namespace gse {

// Classifier served by a child process over stdin/stdout.
//
// Both directions use length-prefixed frames: u32 payload length (little
// endian) followed by the payload. Request payloads start with an opcode:
//   'I'                      -> u32 height, width, channels, classes
//   'Z' + tensor             -> u32 count + count f32 logits
//   'C' + u32 label + tensor -> f32 cross-entropy + gradient tensor
//   'T' + u32 class + tensor -> gradient tensor of that logit
// Tensors travel in the GSET binary format. Every response payload begins
// with a status byte: 0 followed by the data above, or 1 followed by a
// UTF-8 error message. The server exits cleanly on EOF.
class PipeOracle : public GradientOracle {
  public:
    explicit PipeOracle(const std::vector<std::string>& argv);
    ~PipeOracle() override;

    PipeOracle(const PipeOracle&) = delete;
    PipeOracle& operator=(const PipeOracle&) = delete;

    int num_classes() const override { return classes_; }
    std::array<int, 3> input_shape() const override { return shape_; }
    std::vector<double> logits(const ImageTensor& x) const override;
    double ce_loss_and_grad(const ImageTensor& x, int label, ImageTensor* grad) const override;
    ImageTensor logit_input_gradient(const ImageTensor& x, int class_index) const override;

  private:
    std::vector<std::uint8_t> roundtrip(const std::vector<std::uint8_t>& payload) const;

    int to_child_ = -1;
    int from_child_ = -1;
    long pid_ = -1;
    int classes_ = 0;
    std::array<int, 3> shape_{0, 0, 0};
    mutable std::mutex lock_;
};

// Serves a model over the frame protocol until EOF. Returns 0 on a clean
// shutdown. Used by the CLI `serve` subcommand; any process implementing the
// same protocol can stand in for it.
int serve_model_frames(const ToyModel& model, std::istream& in, std::ostream& out);

}  // namespace gse

#endif
