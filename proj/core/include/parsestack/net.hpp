#pragma once

#include <map>
#include <string>
#include <vector>

#include "parsestack/hierarchy.hpp"
#include "parsestack/ops.hpp"
#include "parsestack/tensor.hpp"

namespace pstk {

enum class ArchMode { standalone, stack_full, stack_fc, stack_fc_skip };

ArchMode arch_mode_from_string(const std::string& s);
std::string to_string(ArchMode m);

struct EncoderBlockSpec {
  int channels = 0;
  int conv_layers = 1;
  bool downsample = false;  // 2x maxpool at block end
};

struct EncoderConfig {
  std::vector<EncoderBlockSpec> blocks;

  int num_blocks() const { return static_cast<int>(blocks.size()); }
  int downsample_factor() const;
  void validate() const;
};

struct HeadLevelSpec {
  int num_classes = 0;
  int tap_block = 0;  // 1-based encoder block index; 0 = no skip connection
};

struct StackedHeadConfig {
  std::vector<HeadLevelSpec> levels;  // coarse -> fine
  int head_channels = 16;
  int head_conv_layers = 2;  // >= 1; the final layer is 1x1 to num_classes

  int num_levels() const { return static_cast<int>(levels.size()); }
  void validate(const EncoderConfig& enc, ArchMode mode) const;
};

template <typename T>
struct ConvParam {
  Tensor<T> weight, bias;
  int stride = 1, padding = 0;
};

// Shared encoder plus prediction heads. For stacked modes the net carries one
// head per granularity level; standalone and stack_full sub-nets carry a
// single head bound to `level`.
template <typename T>
class ParserNet {
 public:
  ParserNet() = default;

  // level < 0 builds all heads (stacked modes); otherwise one head for that
  // level. in_channels is 3 for raw images; stack_full sub-nets past the
  // first take 3 + previous-level class count.
  ParserNet(EncoderConfig enc, StackedHeadConfig heads, ArchMode mode,
            const LabelHierarchy& hier, uint64_t init_seed, int level = -1,
            int in_channels = 3);

  ArchMode mode() const { return mode_; }
  int level() const { return level_; }
  int in_channels() const { return in_channels_; }
  const EncoderConfig& encoder_config() const { return enc_cfg_; }
  const StackedHeadConfig& head_config() const { return head_cfg_; }

  struct EncodeResult {
    Tensor<T> f0;
    std::map<int, Tensor<T>> taps;  // 1-based block index -> pre-pool output
  };

  // One encoder pass; taps are collected for every block named by a level's
  // tap_block (stack_fc_skip only).
  EncodeResult encode(const Tensor<T>& image) const;

  // Eq.-style stacked forward: P1 = F1(f0); finer heads consume
  // concat(Up(f0), Up(P_{t-1})[, Up(f_{-t})]) upsampled to the largest input.
  std::vector<Tensor<T>> forward_stacked(const Tensor<T>& image) const;

  // Single head on f0, no stacking, no skips.
  Tensor<T> forward_standalone(const Tensor<T>& image) const;

  std::vector<Tensor<T>> parameters();
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters();

  std::vector<ConvParam<T>>& head_convs(int head_index) {
    return heads_[static_cast<size_t>(head_index)];
  }
  int num_heads() const { return static_cast<int>(heads_.size()); }

 private:
  Tensor<T> run_head(int head_index, const Tensor<T>& input) const;

  EncoderConfig enc_cfg_;
  StackedHeadConfig head_cfg_;
  ArchMode mode_ = ArchMode::stack_fc_skip;
  int level_ = -1;
  int in_channels_ = 3;
  std::vector<std::vector<ConvParam<T>>> enc_blocks_;
  std::vector<std::vector<ConvParam<T>>> heads_;

  template <typename U>
  friend struct Model;
};

// Stacked full FCNs: net t consumes image (+) Up(softmax(P_{t-1}))
// concatenated at image resolution.
template <typename T>
std::vector<Tensor<T>> forward_stack_full(const std::vector<ParserNet<T>>& nets,
                                          const Tensor<T>& image);

// A trainable model: one ParserNet for standalone/stack_fc/stack_fc_skip,
// one per level for stack_full.
template <typename T>
struct Model {
  ArchMode mode = ArchMode::stack_fc_skip;
  LabelHierarchy hierarchy;
  std::vector<ParserNet<T>> nets;
  int standalone_level = -1;

  // Score maps in level order (a single map for standalone).
  std::vector<Tensor<T>> forward(const Tensor<T>& image) const;

  // Levels covered by forward() outputs, coarse -> fine (all levels, or just
  // standalone_level).
  std::vector<int> output_levels() const;

  std::vector<Tensor<T>> parameters();
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters();
};

template <typename T>
Model<T> build_model(const EncoderConfig& enc, const StackedHeadConfig& heads,
                     ArchMode mode, const LabelHierarchy& hier, uint64_t seed,
                     int standalone_level = -1);

// Per-level argmax over channels of the score map bilinearly upsampled to the
// input size; ties resolve to the lowest class index.
template <typename T>
LabelMapSet predict(const Model<T>& model, const Tensor<T>& image);

}  // namespace pstk
