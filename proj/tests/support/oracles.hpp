#pragma once

// Independent reference implementations ("oracles"). Direct transcriptions of
// the operation definitions as plain nested loops over raw buffers; they must
// not call into the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

inline std::vector<double> conv2d(const std::vector<double>& in, int N, int Cin,
                                  int H, int W, const std::vector<double>& weight,
                                  int Cout, int kh, int kw,
                                  const std::vector<double>& bias, int stride,
                                  int pad, int* OH_out, int* OW_out) {
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  *OH_out = OH;
  *OW_out = OW;
  std::vector<double> out(static_cast<size_t>(N) * Cout * OH * OW, 0.0);
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int y = oy * stride + ky - pad;
                const int x = ox * stride + kx - pad;
                if (y < 0 || y >= H || x < 0 || x >= W) continue;
                acc += in[((static_cast<size_t>(n) * Cin + ci) * H + y) * W + x] *
                       weight[((static_cast<size_t>(co) * Cin + ci) * kh + ky) * kw + kx];
              }
          out[((static_cast<size_t>(n) * Cout + co) * OH + oy) * OW + ox] =
              acc + bias[static_cast<size_t>(co)];
        }
  return out;
}

inline std::vector<double> maxpool2d(const std::vector<double>& in, int N, int C,
                                     int H, int W, int window, int stride,
                                     int* OH_out, int* OW_out) {
  const int OH = (H - window) / stride + 1;
  const int OW = (W - window) / stride + 1;
  *OH_out = OH;
  *OW_out = OW;
  std::vector<double> out(static_cast<size_t>(N) * C * OH * OW);
  for (int nc = 0; nc < N * C; ++nc)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        double best = -1e300;
        for (int dy = 0; dy < window; ++dy)
          for (int dx = 0; dx < window; ++dx)
            best = std::max(best, in[(static_cast<size_t>(nc) * H + oy * stride + dy) * W +
                                     ox * stride + dx]);
        out[(static_cast<size_t>(nc) * OH + oy) * OW + ox] = best;
      }
  return out;
}

// Scalar closed-form align-corners sample of one output pixel.
inline double bilinear_sample(const std::vector<double>& plane, int H, int W,
                              int oy, int ox, int OH, int OW) {
  const double sy = OH == 1 ? 0.0 : static_cast<double>(oy) * (H - 1) / (OH - 1);
  const double sx = OW == 1 ? 0.0 : static_cast<double>(ox) * (W - 1) / (OW - 1);
  const int y0 = std::min(static_cast<int>(sy), H >= 2 ? H - 2 : 0);
  const int x0 = std::min(static_cast<int>(sx), W >= 2 ? W - 2 : 0);
  const int y1 = std::min(y0 + 1, H - 1);
  const int x1 = std::min(x0 + 1, W - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * plane[static_cast<size_t>(y0) * W + x0] +
                     fx * plane[static_cast<size_t>(y0) * W + x1]) +
         fy * ((1 - fx) * plane[static_cast<size_t>(y1) * W + x0] +
               fx * plane[static_cast<size_t>(y1) * W + x1]);
}

inline std::vector<double> upsample_bilinear(const std::vector<double>& in, int N,
                                             int C, int H, int W, int OH, int OW) {
  std::vector<double> out(static_cast<size_t>(N) * C * OH * OW);
  for (int nc = 0; nc < N * C; ++nc) {
    std::vector<double> plane(in.begin() + static_cast<int64_t>(nc) * H * W,
                              in.begin() + static_cast<int64_t>(nc + 1) * H * W);
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        out[(static_cast<size_t>(nc) * OH + oy) * OW + ox] =
            bilinear_sample(plane, H, W, oy, ox, OH, OW);
  }
  return out;
}

// Mean over non-ignored pixels of -log softmax(logits)[label], per-pixel
// scalar evaluation.
inline double cross_entropy(const std::vector<double>& logits, int N, int C, int H,
                            int W, const std::vector<int32_t>& labels,
                            int ignore_index = -1) {
  double sum = 0.0;
  int64_t count = 0;
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int n = 0; n < N; ++n)
    for (int64_t q = 0; q < plane; ++q) {
      const int32_t lab = labels[static_cast<size_t>(n * plane + q)];
      if (ignore_index >= 0 && lab == ignore_index) continue;
      double mx = -1e300;
      for (int c = 0; c < C; ++c)
        mx = std::max(mx, logits[static_cast<size_t>((n * C + c) * plane + q)]);
      double z = 0.0;
      for (int c = 0; c < C; ++c)
        z += std::exp(logits[static_cast<size_t>((n * C + c) * plane + q)] - mx);
      sum += std::log(z) + mx - logits[static_cast<size_t>((n * C + lab) * plane + q)];
      ++count;
    }
  return sum / static_cast<double>(count);
}

struct AtrRef {
  double acc = 0.0, fg_acc = 0.0, avg_prec = 0.0, avg_recall = 0.0, avg_f1 = 0.0;
  bool fg_defined = false;
};

// cm indexed [gt * C + pred].
inline double miou(const std::vector<uint64_t>& cm, int C, bool absent_as_zero) {
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < C; ++c) {
    uint64_t row = 0, col = 0;
    for (int j = 0; j < C; ++j) {
      row += cm[static_cast<size_t>(c) * C + j];
      col += cm[static_cast<size_t>(j) * C + c];
    }
    const uint64_t inter = cm[static_cast<size_t>(c) * C + c];
    const uint64_t uni = row + col - inter;
    if (uni == 0) {
      if (absent_as_zero) ++n;
      continue;
    }
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++n;
  }
  return sum / n;
}

inline AtrRef atr(const std::vector<uint64_t>& cm, int C, int bg) {
  AtrRef r;
  uint64_t total = 0, trace = 0;
  for (int g = 0; g < C; ++g)
    for (int p = 0; p < C; ++p) {
      total += cm[static_cast<size_t>(g) * C + p];
      if (g == p) trace += cm[static_cast<size_t>(g) * C + p];
    }
  r.acc = total ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
  uint64_t fg_total = 0, fg_correct = 0;
  for (int g = 0; g < C; ++g) {
    if (g == bg) continue;
    for (int p = 0; p < C; ++p) fg_total += cm[static_cast<size_t>(g) * C + p];
    fg_correct += cm[static_cast<size_t>(g) * C + g];
  }
  if (fg_total == 0) return r;
  r.fg_defined = true;
  r.fg_acc = static_cast<double>(fg_correct) / static_cast<double>(fg_total);
  int k = 0;
  for (int c = 0; c < C; ++c) {
    if (c == bg) continue;
    uint64_t row = 0, col = 0;
    for (int j = 0; j < C; ++j) {
      row += cm[static_cast<size_t>(c) * C + j];
      col += cm[static_cast<size_t>(j) * C + c];
    }
    const double tp = static_cast<double>(cm[static_cast<size_t>(c) * C + c]);
    const double prec = col ? tp / static_cast<double>(col) : 0.0;
    const double rec = row ? tp / static_cast<double>(row) : 0.0;
    r.avg_prec += prec;
    r.avg_recall += rec;
    r.avg_f1 += (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    ++k;
  }
  r.avg_prec /= k;
  r.avg_recall /= k;
  r.avg_f1 /= k;
  return r;
}

}  // namespace oracle
