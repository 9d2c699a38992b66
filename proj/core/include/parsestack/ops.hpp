#pragma once

#include <functional>
#include <vector>

#include "parsestack/intmap.hpp"
#include "parsestack/tensor.hpp"

namespace pstk {

// All operations record their backward rule on the thread's active tape when
// one is set and some input lies on a gradient path; with no active tape they
// are plain kernels.

// Cross-correlation (no kernel flip). input [N,Cin,H,W], weight
// [Cout,Cin,kh,kw], bias [Cout]. Output H' = (H + 2*padding - kh)/stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride = 1, int padding = 0);

// Per-window maximum; gradient routes to the first maximal position in
// row-major window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int window, int stride);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Bilinear upsampling with the align-corners convention:
// src = dst * (in-1)/(out-1), where (in-1)/(out-1) is 0 when out == 1.
// Only upsampling is supported; same-size is an exact copy.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int out_h, int out_w);

// Channel-axis concatenation in argument order; all parts share N,H,W.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

// Softmax over the channel axis of [N,C,H,W], max-stabilized.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x);

// Mean over non-ignored pixels of -log softmax(logits)[label].
// labels holds values in [0,C) or ignore_index (pass a negative
// ignore_index to disable ignoring).
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const IntMap& labels,
                                int ignore_index = -1);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);

// SGD with momentum: v <- momentum*v + grad; p <- p - lr*v; grads are
// released after the step. Velocity buffers persist across steps.
template <typename T>
class Sgd {
 public:
  explicit Sgd(std::vector<Tensor<T>> params);
  void step(double lr, double momentum);

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> velocity_;
};

// Test instrumentation: invoked once per conv2d forward with the weight
// tensor's impl pointer. Not for production use.
using ConvProbe = std::function<void(const void*)>;
void set_conv_probe(ConvProbe probe);

}  // namespace pstk
