#include "parsestack/net.hpp"

#include <algorithm>
#include <cmath>

#include "parsestack/rng.hpp"

namespace pstk {

ArchMode arch_mode_from_string(const std::string& s) {
  if (s == "standalone") return ArchMode::standalone;
  if (s == "stack_full") return ArchMode::stack_full;
  if (s == "stack_fc") return ArchMode::stack_fc;
  if (s == "stack_fc_skip") return ArchMode::stack_fc_skip;
  fail(cat("unknown architecture mode '", s,
           "' (expected standalone|stack_full|stack_fc|stack_fc_skip)"));
}

std::string to_string(ArchMode m) {
  switch (m) {
    case ArchMode::standalone: return "standalone";
    case ArchMode::stack_full: return "stack_full";
    case ArchMode::stack_fc: return "stack_fc";
    case ArchMode::stack_fc_skip: return "stack_fc_skip";
  }
  return "?";
}

int EncoderConfig::downsample_factor() const {
  int f = 1;
  for (const EncoderBlockSpec& b : blocks)
    if (b.downsample) f *= 2;
  return f;
}

void EncoderConfig::validate() const {
  check(!blocks.empty(), "encoder config: no blocks");
  for (const EncoderBlockSpec& b : blocks) {
    check(b.channels > 0, "encoder config: channel counts must be positive");
    check(b.conv_layers > 0, "encoder config: conv layers per block must be positive");
  }
}

void StackedHeadConfig::validate(const EncoderConfig& enc, ArchMode mode) const {
  check(!levels.empty(), "head config: no levels");
  check(head_channels > 0, "head config: head_channels must be positive");
  check(head_conv_layers >= 1, "head config: head_conv_layers must be >= 1");
  for (const HeadLevelSpec& l : levels)
    check(l.num_classes >= 1, "head config: num_classes must be positive");
  check(levels[0].tap_block == 0, "head config: the coarsest level takes no tap");
  if (mode == ArchMode::stack_fc_skip) {
    int prev = enc.num_blocks() + 1;
    for (size_t i = 1; i < levels.size(); ++i) {
      const int tap = levels[i].tap_block;
      check(tap >= 1 && tap <= enc.num_blocks(),
            cat("head config: tap block ", tap, " out of range [1,",
                enc.num_blocks(), "]"));
      check(tap < prev,
            cat("head config: tap blocks must be strictly shallower for finer "
                "levels, got ", tap, " after ", prev));
      prev = tap;
    }
  }
}

namespace {

template <typename T>
ConvParam<T> make_conv(int cin, int cout, int k, int padding, Rng& rng) {
  ConvParam<T> c;
  c.stride = 1;
  c.padding = padding;
  const int64_t fan_in = static_cast<int64_t>(cin) * k * k;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> w(static_cast<size_t>(cout) * cin * k * k);
  for (T& x : w) x = static_cast<T>(rng.uniform(-bound, bound));
  c.weight = Tensor<T>::from({cout, cin, k, k}, std::move(w));
  c.weight.set_requires_grad(true);
  c.bias = Tensor<T>::zeros({cout});
  c.bias.set_requires_grad(true);
  return c;
}

// Upsample every part to the largest spatial size among them, then
// concatenate in the given order.
template <typename T>
Tensor<T> fuse_inputs(const std::vector<Tensor<T>>& parts) {
  int64_t th = 0, tw = 0;
  for (const Tensor<T>& p : parts) {
    th = std::max(th, p.dim(2));
    tw = std::max(tw, p.dim(3));
  }
  std::vector<Tensor<T>> up;
  up.reserve(parts.size());
  for (const Tensor<T>& p : parts)
    up.push_back(upsample_bilinear(p, static_cast<int>(th), static_cast<int>(tw)));
  return concat_channels(up);
}

}  // namespace

template <typename T>
ParserNet<T>::ParserNet(EncoderConfig enc, StackedHeadConfig heads, ArchMode mode,
                        const LabelHierarchy& hier, uint64_t init_seed, int level,
                        int in_channels)
    : enc_cfg_(std::move(enc)),
      head_cfg_(std::move(heads)),
      mode_(mode),
      level_(level),
      in_channels_(in_channels) {
  enc_cfg_.validate();
  head_cfg_.validate(enc_cfg_, mode_);
  check(head_cfg_.num_levels() == hier.num_levels(),
        cat("parser net: head levels (", head_cfg_.num_levels(),
            ") do not match hierarchy levels (", hier.num_levels(), ")"));
  for (int k = 0; k < hier.num_levels(); ++k)
    check(head_cfg_.levels[static_cast<size_t>(k)].num_classes == hier.num_classes(k),
          cat("parser net: level ", k, " class count ",
              head_cfg_.levels[static_cast<size_t>(k)].num_classes,
              " does not match hierarchy (", hier.num_classes(k), ")"));
  const bool single_head =
      (mode_ == ArchMode::standalone || mode_ == ArchMode::stack_full);
  check(single_head == (level_ >= 0),
        "parser net: standalone/stack_full sub-nets need a level; stacked nets do not");
  if (level_ >= 0)
    check(level_ < head_cfg_.num_levels(), "parser net: level out of range");

  Rng rng(init_seed);
  int cin = in_channels_;
  for (const EncoderBlockSpec& b : enc_cfg_.blocks) {
    std::vector<ConvParam<T>> block;
    for (int l = 0; l < b.conv_layers; ++l) {
      block.push_back(make_conv<T>(cin, b.channels, 3, 1, rng));
      cin = b.channels;
    }
    enc_blocks_.push_back(std::move(block));
  }

  auto build_head = [&](int lvl) {
    // Input channels: f0 for the coarsest head or single-head nets; stacked
    // finer heads read f0 + previous score map (+ tap in skip mode).
    const int f0_ch = enc_cfg_.blocks.back().channels;
    int hin = f0_ch;
    if (!single_head && lvl > 0) {
      hin += head_cfg_.levels[static_cast<size_t>(lvl - 1)].num_classes;
      if (mode_ == ArchMode::stack_fc_skip) {
        const int tap = head_cfg_.levels[static_cast<size_t>(lvl)].tap_block;
        hin += enc_cfg_.blocks[static_cast<size_t>(tap - 1)].channels;
      }
    }
    std::vector<ConvParam<T>> head;
    int c = hin;
    for (int l = 0; l + 1 < head_cfg_.head_conv_layers; ++l) {
      head.push_back(make_conv<T>(c, head_cfg_.head_channels, 3, 1, rng));
      c = head_cfg_.head_channels;
    }
    head.push_back(make_conv<T>(c, head_cfg_.levels[static_cast<size_t>(lvl)].num_classes,
                                1, 0, rng));
    heads_.push_back(std::move(head));
  };

  if (single_head) {
    build_head(level_);
  } else {
    for (int lvl = 0; lvl < head_cfg_.num_levels(); ++lvl) build_head(lvl);
  }
}

template <typename T>
typename ParserNet<T>::EncodeResult ParserNet<T>::encode(const Tensor<T>& image) const {
  check(image.rank() == 4, "encode: image must be [N,C,H,W], got " +
                               shape_str(image.shape()));
  check(image.dim(1) == in_channels_,
        cat("encode: image channels ", image.dim(1), " != expected ", in_channels_));
  const int factor = enc_cfg_.downsample_factor();
  if (image.dim(2) % factor != 0 || image.dim(3) % factor != 0)
    fail(cat("encode: spatial size ", image.dim(2), "x", image.dim(3),
             " must be divisible by the total downsampling factor ", factor));

  std::vector<bool> wanted(static_cast<size_t>(enc_cfg_.num_blocks() + 1), false);
  if (mode_ == ArchMode::stack_fc_skip)
    for (const HeadLevelSpec& l : head_cfg_.levels)
      if (l.tap_block >= 1) wanted[static_cast<size_t>(l.tap_block)] = true;

  EncodeResult res;
  Tensor<T> x = image;
  for (int b = 0; b < enc_cfg_.num_blocks(); ++b) {
    for (const ConvParam<T>& conv : enc_blocks_[static_cast<size_t>(b)])
      x = relu(conv2d(x, conv.weight, conv.bias, conv.stride, conv.padding));
    if (wanted[static_cast<size_t>(b + 1)]) res.taps[b + 1] = x;  // pre-pool
    if (enc_cfg_.blocks[static_cast<size_t>(b)].downsample) x = maxpool2d(x, 2, 2);
  }
  res.f0 = x;
  return res;
}

template <typename T>
Tensor<T> ParserNet<T>::run_head(int head_index, const Tensor<T>& input) const {
  Tensor<T> x = input;
  const std::vector<ConvParam<T>>& convs = heads_[static_cast<size_t>(head_index)];
  for (size_t l = 0; l < convs.size(); ++l) {
    x = conv2d(x, convs[l].weight, convs[l].bias, convs[l].stride, convs[l].padding);
    if (l + 1 < convs.size()) x = relu(x);
  }
  return x;
}

template <typename T>
std::vector<Tensor<T>> ParserNet<T>::forward_stacked(const Tensor<T>& image) const {
  check(mode_ == ArchMode::stack_fc || mode_ == ArchMode::stack_fc_skip,
        cat("forward_stacked: net mode is ", to_string(mode_)));
  EncodeResult enc = encode(image);
  std::vector<Tensor<T>> scores;
  scores.reserve(static_cast<size_t>(head_cfg_.num_levels()));
  for (int t = 0; t < head_cfg_.num_levels(); ++t) {
    if (t == 0) {
      scores.push_back(run_head(0, enc.f0));
      continue;
    }
    std::vector<Tensor<T>> parts{enc.f0, scores.back()};
    if (mode_ == ArchMode::stack_fc_skip)
      parts.push_back(enc.taps.at(head_cfg_.levels[static_cast<size_t>(t)].tap_block));
    scores.push_back(run_head(t, fuse_inputs(parts)));
  }
  return scores;
}

template <typename T>
Tensor<T> ParserNet<T>::forward_standalone(const Tensor<T>& image) const {
  check(mode_ == ArchMode::standalone || mode_ == ArchMode::stack_full,
        cat("forward_standalone: net mode is ", to_string(mode_)));
  EncodeResult enc = encode(image);
  return run_head(0, enc.f0);
}

template <typename T>
std::vector<Tensor<T>> forward_stack_full(const std::vector<ParserNet<T>>& nets,
                                          const Tensor<T>& image) {
  check(!nets.empty(), "forward_stack_full: no nets");
  const int H = static_cast<int>(image.dim(2)), W = static_cast<int>(image.dim(3));
  std::vector<Tensor<T>> scores;
  Tensor<T> input = image;
  for (size_t t = 0; t < nets.size(); ++t) {
    check(nets[t].mode() == ArchMode::stack_full,
          "forward_stack_full: all nets must be stack_full sub-nets");
    if (input.dim(1) != nets[t].in_channels())
      fail(cat("forward_stack_full: net ", t, " expects ", nets[t].in_channels(),
               " input channels, got ", input.dim(1)));
    scores.push_back(nets[t].forward_standalone(input));
    if (t + 1 < nets.size()) {
      // A separate network expects bounded inputs, so the score map crosses
      // as softmax probabilities (unlike the stacked-FC raw-logit feed).
      Tensor<T> prob = softmax_channels(scores.back());
      input = concat_channels<T>({image, upsample_bilinear(prob, H, W)});
    }
  }
  return scores;
}

template <typename T>
std::vector<Tensor<T>> ParserNet<T>::parameters() {
  std::vector<Tensor<T>> ps;
  for (auto& block : enc_blocks_)
    for (ConvParam<T>& c : block) {
      ps.push_back(c.weight);
      ps.push_back(c.bias);
    }
  for (auto& head : heads_)
    for (ConvParam<T>& c : head) {
      ps.push_back(c.weight);
      ps.push_back(c.bias);
    }
  return ps;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ParserNet<T>::named_parameters() {
  std::vector<std::pair<std::string, Tensor<T>>> ps;
  for (size_t b = 0; b < enc_blocks_.size(); ++b)
    for (size_t l = 0; l < enc_blocks_[b].size(); ++l) {
      ps.emplace_back(cat("enc.block", b + 1, ".conv", l, ".weight"),
                      enc_blocks_[b][l].weight);
      ps.emplace_back(cat("enc.block", b + 1, ".conv", l, ".bias"),
                      enc_blocks_[b][l].bias);
    }
  for (size_t h = 0; h < heads_.size(); ++h) {
    const int lvl = (level_ >= 0) ? level_ : static_cast<int>(h);
    for (size_t l = 0; l < heads_[h].size(); ++l) {
      ps.emplace_back(cat("head", lvl, ".conv", l, ".weight"), heads_[h][l].weight);
      ps.emplace_back(cat("head", lvl, ".conv", l, ".bias"), heads_[h][l].bias);
    }
  }
  return ps;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::forward(const Tensor<T>& image) const {
  switch (mode) {
    case ArchMode::standalone:
      return {nets[0].forward_standalone(image)};
    case ArchMode::stack_full:
      return forward_stack_full(nets, image);
    case ArchMode::stack_fc:
    case ArchMode::stack_fc_skip:
      return nets[0].forward_stacked(image);
  }
  fail("model: invalid mode");
}

template <typename T>
std::vector<int> Model<T>::output_levels() const {
  if (mode == ArchMode::standalone) return {standalone_level};
  std::vector<int> ls(static_cast<size_t>(hierarchy.num_levels()));
  for (size_t i = 0; i < ls.size(); ++i) ls[i] = static_cast<int>(i);
  return ls;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::parameters() {
  std::vector<Tensor<T>> ps;
  for (ParserNet<T>& n : nets)
    for (Tensor<T>& p : n.parameters()) ps.push_back(p);
  return ps;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::named_parameters() {
  std::vector<std::pair<std::string, Tensor<T>>> ps;
  for (size_t i = 0; i < nets.size(); ++i)
    for (auto& [name, p] : nets[i].named_parameters())
      ps.emplace_back(cat("net", i, ".", name), p);
  return ps;
}

template <typename T>
Model<T> build_model(const EncoderConfig& enc, const StackedHeadConfig& heads,
                     ArchMode mode, const LabelHierarchy& hier, uint64_t seed,
                     int standalone_level) {
  Model<T> m;
  m.mode = mode;
  m.hierarchy = hier;
  m.standalone_level = -1;
  switch (mode) {
    case ArchMode::standalone:
      check(standalone_level >= 0 && standalone_level < hier.num_levels(),
            "build_model: standalone mode requires a level");
      m.standalone_level = standalone_level;
      m.nets.emplace_back(enc, heads, mode, hier, seed, standalone_level, 3);
      break;
    case ArchMode::stack_full: {
      for (int t = 0; t < hier.num_levels(); ++t) {
        const int cin = t == 0 ? 3 : 3 + hier.num_classes(t - 1);
        m.nets.emplace_back(enc, heads, mode, hier, mix_seed(seed, static_cast<uint64_t>(t)),
                            t, cin);
      }
      break;
    }
    case ArchMode::stack_fc:
    case ArchMode::stack_fc_skip:
      m.nets.emplace_back(enc, heads, mode, hier, seed, -1, 3);
      break;
  }
  return m;
}

template <typename T>
LabelMapSet predict(const Model<T>& model, const Tensor<T>& image) {
  const int H = static_cast<int>(image.dim(2)), W = static_cast<int>(image.dim(3));
  const int64_t N = image.dim(0);
  std::vector<Tensor<T>> scores = model.forward(image);
  LabelMapSet out;
  out.reserve(scores.size());
  for (Tensor<T>& s : scores) {
    Tensor<T> up = upsample_bilinear(s, H, W);
    const int64_t C = up.dim(1);
    IntMap labels(static_cast<int>(N), H, W);
    const T* p = up.ptr();
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t q = 0; q < plane; ++q) {
        const T* col = p + n * C * plane + q;
        int best = 0;
        T bv = col[0];
        for (int64_t c = 1; c < C; ++c)
          if (col[c * plane] > bv) {  // ties keep the lowest class index
            bv = col[c * plane];
            best = static_cast<int>(c);
          }
        labels.v[static_cast<size_t>(n * plane + q)] = best;
      }
    out.push_back(std::move(labels));
  }
  return out;
}

#define PSTK_INSTANTIATE(T)                                                     \
  template class ParserNet<T>;                                                  \
  template std::vector<Tensor<T>> forward_stack_full<T>(                        \
      const std::vector<ParserNet<T>>&, const Tensor<T>&);                      \
  template struct Model<T>;                                                     \
  template Model<T> build_model<T>(const EncoderConfig&, const StackedHeadConfig&, \
                                   ArchMode, const LabelHierarchy&, uint64_t, int); \
  template LabelMapSet predict<T>(const Model<T>&, const Tensor<T>&);

PSTK_INSTANTIATE(float)
PSTK_INSTANTIATE(double)
#undef PSTK_INSTANTIATE

}  // namespace pstk
