#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace surfgest::model {

struct SepCnnConfig {
  std::size_t in_channels = 4;
  std::size_t num_blocks = 6;
  std::size_t block_width = 32;
  std::size_t kernel_size = 15;  // odd, shared by every depthwise layer
  double dropout_p = 0.2;
  std::size_t pool_out = 1;  // adaptive average pool output length
  std::size_t classifier_hidden = 32;
  std::size_t num_classes = 6;
  std::size_t input_length = 1250;  // samples per window after pre-processing

  // Throws ConfigError on an invalid field or when the pooling chain would
  // shrink the time axis below pool_out.
  void validate() const;

  // Time-axis length entering each block, plus the length after the last one.
  std::vector<std::size_t> time_chain() const;
  std::size_t classifier_input() const { return block_width * pool_out; }

  bool operator==(const SepCnnConfig&) const = default;
};

// Named slice of the flat parameter vector.
struct ParamTensor {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
  bool decay = false;  // weight tensors; biases and batch-norm affine are exempt

  std::size_t size() const;
};

enum class Mode { kTrain, kEval };

// Layer order inside a block: depthwise conv (same padding) -> pointwise conv
// -> batch norm -> max-pool(2) -> ReLU -> dropout. After the last block:
// adaptive average pool, flatten, dense -> ReLU -> dense.
//
// Parameters live in one flat vector in this order, per block:
//   b<i>.dw.weight [C_in x K], b<i>.dw.bias [C_in],
//   b<i>.pw.weight [C_out x C_in], b<i>.pw.bias [C_out],
//   b<i>.bn.gamma [C_out], b<i>.bn.beta [C_out]
// then fc1.weight [hidden x flat], fc1.bias, fc2.weight [classes x hidden],
// fc2.bias. Batch-norm running statistics are kept apart, per block
// mean [C_out] then var [C_out].
template <typename T>
class SepCnn {
 public:
  // He-uniform weights (fan-in), zero biases, gamma 1, beta 0, running mean 0
  // and variance 1. Deterministic per seed.
  static SepCnn build(const SepCnnConfig& cfg, std::uint64_t seed);

  const SepCnnConfig& config() const noexcept { return cfg_; }
  const std::vector<ParamTensor>& layout() const noexcept { return layout_; }

  std::span<T> params() noexcept { return params_; }
  std::span<const T> params() const noexcept { return params_; }
  std::span<T> param(const std::string& name);
  std::span<const T> param(const std::string& name) const;

  std::span<T> running_stats() noexcept { return running_; }
  std::span<const T> running_stats() const noexcept { return running_; }

  // Learnable scalars only; running statistics excluded.
  std::size_t count_parameters() const noexcept { return params_.size(); }

  // Logits [n x classes]. Train mode uses batch statistics, updates running
  // statistics (momentum 0.1) and draws inverted-dropout masks from rng; the
  // activations are kept for a following backward(). Eval mode ignores rng.
  std::vector<T> forward(std::span<const float> batch, std::size_t n, Mode mode, std::mt19937_64* rng);

  // Eval-mode inference without touching model state; safe to call
  // concurrently on a shared model.
  std::vector<T> predict(std::span<const float> batch, std::size_t n) const;

  // Mean softmax cross-entropy of a train-mode pass and its gradient with
  // respect to every parameter (same layout as params()). Labels out of range
  // throw InvalidArgumentError.
  T loss_and_grad(std::span<const float> batch, std::span<const int> labels, std::span<T> grad,
                  std::mt19937_64& rng);

  // Replaces the running statistics with exact eval-mode population
  // statistics over data, block by block: block i is measured with blocks
  // before it already normalized by their new statistics and dropout off.
  void recalibrate_statistics(std::span<const float> data, std::size_t n, std::size_t chunk = 64);

  // Elementwise conversion to another precision.
  template <typename U>
  SepCnn<U> cast() const;

 private:
  template <typename U>
  friend class SepCnn;

  struct BlockCache {
    std::vector<T> input;     // [n x C_in x L]; unused for block 0 (see input_)
    std::vector<T> dw_out;    // [n x C_in x L]
    std::vector<T> xhat;      // [n x C_out x L]
    std::vector<T> bn_out;    // [n x C_out x L] pre-norm
    std::vector<T> mask;      // dropout multipliers, empty when no dropout
    std::vector<T> inv_std;   // [C_out]
  };

  struct Cache {
    std::size_t n = 0;
    Mode mode = Mode::kEval;
    std::vector<T> input;  // block 0 input converted to T
    std::vector<BlockCache> blocks;
    std::vector<T> block_out;  // output of the last block
    std::vector<T> flat;       // [n x flat]
    std::vector<T> hidden;     // post-ReLU [n x hidden]
    std::vector<T> logits;
  };

  // Per-channel sums of one block's pre-norm activations, offset by shift.
  struct StatTap {
    std::size_t block = 0;
    std::vector<double> shift;
    std::vector<double> sum;
    std::vector<double> sum_sq;
    double count = 0.0;
  };

  // With a tap, stops after the tapped block's pointwise layer and returns
  // nothing.
  std::vector<T> run(std::span<const float> batch, std::size_t n, Mode mode, std::mt19937_64* rng,
                     Cache& cache, bool update_running, StatTap* tap = nullptr);
  void backward(const Cache& cache, std::span<const T> dlogits, std::span<T> grad) const;

  SepCnnConfig cfg_;
  std::vector<ParamTensor> layout_;
  std::vector<T> params_;
  std::vector<T> running_;
  Cache cache_;
};

extern template class SepCnn<float>;
extern template class SepCnn<double>;

// Convenience for callers that only have a config.
std::size_t count_parameters(const SepCnnConfig& cfg);

// Weight checkpoint, little-endian: magic "SEPW", u16 version, config fields
// (u16 in_channels, u16 num_blocks, u16 block_width, u16 kernel_size,
// f64 dropout_p, u16 pool_out, u16 classifier_hidden, u16 num_classes,
// u32 input_length), u64 parameter count, u64 running-stat count, then the
// float32 parameters in layout order followed by the running statistics.
void save_checkpoint(const std::filesystem::path& path, const SepCnn<float>& model);
SepCnn<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace surfgest::model
