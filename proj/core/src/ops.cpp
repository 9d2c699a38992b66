#include "parsestack/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "parsestack/threads.hpp"

namespace pstk {

namespace {

ConvProbe g_conv_probe;

// C[M x N] += A[M x K] * B[K x N], row-major. k stays outermost within a row
// so the accumulation order matches a direct nested-loop evaluation.
template <typename T>
void gemm_acc(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
  for (int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const T av = a[k];
      if (av == T(0)) continue;
      const T* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M x N] += A[M x K'] * B[N x K']^T (dot of contiguous rows).
template <typename T>
void gemm_abt_acc(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
  for (int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc = T(0);
      for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] += acc;
    }
  }
}

// col layout: [Cin*kh*kw, OH*OW], k index ordered (ci, ky, kx).
template <typename T>
void im2col(const T* in, int64_t C, int64_t H, int64_t W, int kh, int kw,
            int stride, int pad, int64_t OH, int64_t OW, T* col) {
  const int64_t P = OH * OW;
  for (int64_t ci = 0; ci < C; ++ci) {
    const T* src = in + ci * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* dst = col + ((ci * kh + ky) * kw + kx) * P;
        for (int64_t oy = 0; oy < OH; ++oy) {
          const int64_t y = oy * stride + ky - pad;
          if (y < 0 || y >= H) {
            std::fill(dst, dst + OW, T(0));
            dst += OW;
            continue;
          }
          const T* row = src + y * W;
          for (int64_t ox = 0; ox < OW; ++ox) {
            const int64_t x = ox * stride + kx - pad;
            *dst++ = (x < 0 || x >= W) ? T(0) : row[x];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* col, int64_t C, int64_t H, int64_t W, int kh, int kw,
                int stride, int pad, int64_t OH, int64_t OW, T* in_grad) {
  const int64_t P = OH * OW;
  for (int64_t ci = 0; ci < C; ++ci) {
    T* dst_ch = in_grad + ci * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* src = col + ((ci * kh + ky) * kw + kx) * P;
        for (int64_t oy = 0; oy < OH; ++oy, src += OW) {
          const int64_t y = oy * stride + ky - pad;
          if (y < 0 || y >= H) continue;
          T* row = dst_ch + y * W;
          for (int64_t ox = 0; ox < OW; ++ox) {
            const int64_t x = ox * stride + kx - pad;
            if (x >= 0 && x < W) row[x] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void maybe_record(const Tensor<T>& out, std::function<void()> fn) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return;
  const_cast<Tensor<T>&>(out).mark_from_op();
  tape->record(std::move(fn));
}

template <typename T>
bool any_grad_path(std::initializer_list<const Tensor<T>*> ts) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : ts)
    if (t->defined() && t->needs_grad_path()) return true;
  return false;
}

// Align-corners source mapping for one axis.
struct LerpIndex {
  int64_t i0, i1;
  double w1;  // weight of i1; weight of i0 is 1 - w1
};

inline LerpIndex lerp_index(int64_t dst, int64_t in, int64_t out) {
  if (out == 1 || in == 1) return {0, 0, 0.0};
  const double src =
      static_cast<double>(dst) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  int64_t i0 = static_cast<int64_t>(src);
  if (i0 > in - 2) i0 = in - 2;
  double w1 = src - static_cast<double>(i0);
  return {i0, i0 + 1, w1};
}

}  // namespace

void set_conv_probe(ConvProbe probe) { g_conv_probe = std::move(probe); }

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  check(input.rank() == 4, "conv2d: input must be [N,Cin,H,W], got " +
                               shape_str(input.shape()));
  check(weight.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got " +
                                shape_str(weight.shape()));
  const int64_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != Cin)
    fail(cat("conv2d: input channels ", Cin, " (shape ", shape_str(input.shape()),
             ") do not match weight channels ", weight.dim(1), " (shape ",
             shape_str(weight.shape()), ")"));
  check(bias.defined() && bias.rank() == 1 && bias.dim(0) == Cout,
        "conv2d: bias must be [Cout]");
  check(stride >= 1, "conv2d: stride must be positive");
  check(padding >= 0, "conv2d: padding must be nonnegative");
  if (H + 2 * padding < kh || W + 2 * padding < kw)
    fail(cat("conv2d: kernel ", kh, "x", kw, " larger than padded input ",
             H + 2 * padding, "x", W + 2 * padding));

  const int64_t OH = (H + 2 * padding - kh) / stride + 1;
  const int64_t OW = (W + 2 * padding - kw) / stride + 1;
  const int64_t K = Cin * kh * kw;
  const int64_t P = OH * OW;

  if (g_conv_probe) g_conv_probe(weight.impl().get());

  Tensor<T> out = Tensor<T>::zeros({N, Cout, OH, OW});
  {
    const T* in_p = input.ptr();
    const T* w_p = weight.ptr();
    const T* b_p = bias.ptr();
    T* out_p = out.ptr();
    parallel_for(0, N, [&](int64_t n0, int64_t n1) {
      std::vector<T> col(static_cast<size_t>(K * P));
      for (int64_t n = n0; n < n1; ++n) {
        im2col(in_p + n * Cin * H * W, Cin, H, W, static_cast<int>(kh),
               static_cast<int>(kw), stride, padding, OH, OW, col.data());
        T* o = out_p + n * Cout * P;
        gemm_acc(Cout, P, K, w_p, col.data(), o);
        for (int64_t co = 0; co < Cout; ++co) {
          const T b = b_p[co];
          if (b == T(0)) continue;
          T* oc = o + co * P;
          for (int64_t p = 0; p < P; ++p) oc[p] += b;
        }
      }
    });
  }

  if (any_grad_path<T>({&input, &weight, &bias})) {
    auto in_i = input.impl();
    auto w_i = weight.impl();
    auto b_i = bias.impl();
    auto out_i = out.impl();
    const int s = stride, p = padding;
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      const T* go = out_i->grad.data();
      const bool need_dw = w_i->requires_grad || w_i->from_op;
      const bool need_db = b_i->requires_grad || b_i->from_op;
      const bool need_dx = in_i->requires_grad || in_i->from_op;
      if (need_dw || need_dx) {
        std::vector<T> col(static_cast<size_t>(K * P));
        std::vector<T> dcol(static_cast<size_t>(K * P));
        if (need_dw && w_i->grad.empty()) w_i->grad.assign(w_i->data.size(), T(0));
        if (need_dx && in_i->grad.empty()) in_i->grad.assign(in_i->data.size(), T(0));
        for (int64_t n = 0; n < N; ++n) {
          const T* gon = go + n * Cout * P;
          if (need_dw) {
            im2col(in_i->data.data() + n * Cin * H * W, Cin, H, W,
                   static_cast<int>(kh), static_cast<int>(kw), s, p, OH, OW,
                   col.data());
            gemm_abt_acc(Cout, K, P, gon, col.data(), w_i->grad.data());
          }
          if (need_dx) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            // dcol[K,P] += W^T[K,Cout] * gout[Cout,P]
            for (int64_t co = 0; co < Cout; ++co) {
              const T* w_row = w_i->data.data() + co * K;
              const T* g_row = gon + co * P;
              for (int64_t k = 0; k < K; ++k) {
                const T wv = w_row[k];
                if (wv == T(0)) continue;
                T* d = dcol.data() + k * P;
                for (int64_t q = 0; q < P; ++q) d[q] += wv * g_row[q];
              }
            }
            col2im_acc(dcol.data(), Cin, H, W, static_cast<int>(kh),
                       static_cast<int>(kw), s, p, OH, OW,
                       in_i->grad.data() + n * Cin * H * W);
          }
        }
      }
      if (need_db) {
        if (b_i->grad.empty()) b_i->grad.assign(b_i->data.size(), T(0));
        for (int64_t n = 0; n < N; ++n)
          for (int64_t co = 0; co < Cout; ++co) {
            const T* g_row = go + (n * Cout + co) * P;
            T acc = T(0);
            for (int64_t q = 0; q < P; ++q) acc += g_row[q];
            b_i->grad[static_cast<size_t>(co)] += acc;
          }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int window, int stride) {
  check(input.rank() == 4, "maxpool2d: input must be [N,C,H,W], got " +
                               shape_str(input.shape()));
  check(window >= 1 && stride >= 1, "maxpool2d: window and stride must be positive");
  const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H < window || W < window)
    fail(cat("maxpool2d: window ", window, " larger than spatial extent ", H, "x", W));
  const int64_t OH = (H - window) / stride + 1;
  const int64_t OW = (W - window) / stride + 1;

  Tensor<T> out = Tensor<T>::zeros({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(N * C * OH * OW));
  {
    const T* in_p = input.ptr();
    T* out_p = out.ptr();
    int64_t* am = argmax->data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const T* plane = in_p + nc * H * W;
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
          const int64_t y0 = oy * stride, x0 = ox * stride;
          T best = plane[y0 * W + x0];
          int64_t best_idx = y0 * W + x0;
          for (int dy = 0; dy < window; ++dy)
            for (int dx = 0; dx < window; ++dx) {
              const int64_t idx = (y0 + dy) * W + (x0 + dx);
              if (plane[idx] > best) {  // strict: first occurrence wins ties
                best = plane[idx];
                best_idx = idx;
              }
            }
          out_p[nc * OH * OW + oy * OW + ox] = best;
          am[nc * OH * OW + oy * OW + ox] = best_idx;
        }
    }
  }

  if (any_grad_path<T>({&input})) {
    auto in_i = input.impl();
    auto out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      if (in_i->grad.empty()) in_i->grad.assign(in_i->data.size(), T(0));
      const T* go = out_i->grad.data();
      const int64_t* am = argmax->data();
      for (int64_t nc = 0; nc < N * C; ++nc) {
        T* gi = in_i->grad.data() + nc * H * W;
        const T* g = go + nc * OH * OW;
        const int64_t* a = am + nc * OH * OW;
        for (int64_t q = 0; q < OH * OW; ++q) gi[a[q]] += g[q];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* in_p = x.ptr();
  T* out_p = out.ptr();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out_p[i] = in_p[i] > T(0) ? in_p[i] : T(0);

  if (any_grad_path<T>({&x})) {
    auto x_i = x.impl();
    auto out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      if (x_i->grad.empty()) x_i->grad.assign(x_i->data.size(), T(0));
      const T* g = out_i->grad.data();
      const T* xd = x_i->data.data();
      T* gi = x_i->grad.data();
      const int64_t m = static_cast<int64_t>(x_i->data.size());
      for (int64_t i = 0; i < m; ++i)
        if (xd[i] > T(0)) gi[i] += g[i];  // subgradient 0 at exactly 0
    });
  }
  return out;
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  check(x.rank() == 4, "upsample_bilinear: input must be [N,C,h,w], got " +
                           shape_str(x.shape()));
  check(out_h >= 1 && out_w >= 1,
        cat("upsample_bilinear: target extents must be positive, got ", out_h, "x",
            out_w));
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h < H || out_w < W)
    fail(cat("upsample_bilinear: target ", out_h, "x", out_w,
             " smaller than input ", H, "x", W, " (only upsampling is supported)"));

  Tensor<T> out = Tensor<T>::zeros({N, C, out_h, out_w});
  const bool identity = (out_h == H && out_w == W);
  const T* in_p = x.ptr();
  T* out_p = out.ptr();

  std::vector<LerpIndex> ly, lx;
  if (identity) {
    std::memcpy(out_p, in_p, sizeof(T) * static_cast<size_t>(x.numel()));
  } else {
    ly.resize(static_cast<size_t>(out_h));
    lx.resize(static_cast<size_t>(out_w));
    for (int64_t i = 0; i < out_h; ++i) ly[static_cast<size_t>(i)] = lerp_index(i, H, out_h);
    for (int64_t j = 0; j < out_w; ++j) lx[static_cast<size_t>(j)] = lerp_index(j, W, out_w);
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const T* plane = in_p + nc * H * W;
      T* o = out_p + nc * out_h * out_w;
      for (int64_t i = 0; i < out_h; ++i) {
        const LerpIndex& a = ly[static_cast<size_t>(i)];
        const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
        for (int64_t j = 0; j < out_w; ++j) {
          const LerpIndex& b = lx[static_cast<size_t>(j)];
          const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
          o[i * out_w + j] = wy0 * (wx0 * plane[a.i0 * W + b.i0] + wx1 * plane[a.i0 * W + b.i1]) +
                             wy1 * (wx0 * plane[a.i1 * W + b.i0] + wx1 * plane[a.i1 * W + b.i1]);
        }
      }
    }
  }

  if (any_grad_path<T>({&x})) {
    auto x_i = x.impl();
    auto out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      if (x_i->grad.empty()) x_i->grad.assign(x_i->data.size(), T(0));
      const T* g = out_i->grad.data();
      T* gi = x_i->grad.data();
      if (identity) {
        const int64_t m = static_cast<int64_t>(x_i->data.size());
        for (int64_t i = 0; i < m; ++i) gi[i] += g[i];
        return;
      }
      for (int64_t nc = 0; nc < N * C; ++nc) {
        T* gplane = gi + nc * H * W;
        const T* go = g + nc * out_h * out_w;
        for (int64_t i = 0; i < out_h; ++i) {
          const LerpIndex& a = ly[static_cast<size_t>(i)];
          const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
          for (int64_t j = 0; j < out_w; ++j) {
            const LerpIndex& b = lx[static_cast<size_t>(j)];
            const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
            const T gv = go[i * out_w + j];
            gplane[a.i0 * W + b.i0] += wy0 * wx0 * gv;
            gplane[a.i0 * W + b.i1] += wy0 * wx1 * gv;
            gplane[a.i1 * W + b.i0] += wy1 * wx0 * gv;
            gplane[a.i1 * W + b.i1] += wy1 * wx1 * gv;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_channels: no parts");
  const Tensor<T>& first = parts.front();
  check(first.rank() == 4, "concat_channels: parts must be [N,C,H,W]");
  const int64_t N = first.dim(0), H = first.dim(2), W = first.dim(3);
  int64_t Ctot = 0;
  for (const Tensor<T>& p : parts) {
    check(p.rank() == 4, "concat_channels: parts must be [N,C,H,W]");
    if (p.dim(0) != N || p.dim(2) != H || p.dim(3) != W)
      fail(cat("concat_channels: spatial/batch mismatch between ",
               shape_str(first.shape()), " and ", shape_str(p.shape()),
               " (upsample inputs before concatenation)"));
    Ctot += p.dim(1);
  }

  Tensor<T> out = Tensor<T>::zeros({N, Ctot, H, W});
  const int64_t plane = H * W;
  {
    T* out_p = out.ptr();
    for (int64_t n = 0; n < N; ++n) {
      int64_t off = 0;
      for (const Tensor<T>& p : parts) {
        const int64_t c = p.dim(1);
        std::memcpy(out_p + (n * Ctot + off) * plane, p.ptr() + n * c * plane,
                    sizeof(T) * static_cast<size_t>(c * plane));
        off += c;
      }
    }
  }

  bool needs = false;
  for (const Tensor<T>& p : parts)
    if (p.needs_grad_path()) needs = true;
  if (needs && Tape<T>::active() != nullptr) {
    std::vector<std::shared_ptr<typename Tensor<T>::Impl>> part_impls;
    part_impls.reserve(parts.size());
    for (const Tensor<T>& p : parts) part_impls.push_back(p.impl());
    auto out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      const T* go = out_i->grad.data();
      for (int64_t n = 0; n < N; ++n) {
        int64_t off = 0;
        for (const auto& pi : part_impls) {
          const int64_t c = pi->shape[1];
          if (pi->requires_grad || pi->from_op) {
            if (pi->grad.empty()) pi->grad.assign(pi->data.size(), T(0));
            T* gi = pi->grad.data() + n * c * plane;
            const T* g = go + (n * Ctot + off) * plane;
            for (int64_t m = 0; m < c * plane; ++m) gi[m] += g[m];
          }
          off += c;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  check(x.rank() == 4, "softmax_channels: input must be [N,C,H,W]");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t plane = H * W;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* in_p = x.ptr();
  T* out_p = out.ptr();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t q = 0; q < plane; ++q) {
      const T* col = in_p + n * C * plane + q;
      T* o = out_p + n * C * plane + q;
      T mx = col[0];
      for (int64_t c = 1; c < C; ++c) mx = std::max(mx, col[c * plane]);
      T sum = T(0);
      for (int64_t c = 0; c < C; ++c) {
        const T e = std::exp(col[c * plane] - mx);
        o[c * plane] = e;
        sum += e;
      }
      for (int64_t c = 0; c < C; ++c) o[c * plane] /= sum;
    }

  if (any_grad_path<T>({&x})) {
    auto x_i = x.impl();
    auto out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      if (x_i->grad.empty()) x_i->grad.assign(x_i->data.size(), T(0));
      const T* s = out_i->data.data();
      const T* g = out_i->grad.data();
      T* gi = x_i->grad.data();
      for (int64_t n = 0; n < N; ++n)
        for (int64_t q = 0; q < plane; ++q) {
          const int64_t base = n * C * plane + q;
          T dot = T(0);
          for (int64_t c = 0; c < C; ++c) dot += g[base + c * plane] * s[base + c * plane];
          for (int64_t c = 0; c < C; ++c)
            gi[base + c * plane] += s[base + c * plane] * (g[base + c * plane] - dot);
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const IntMap& labels,
                                int ignore_index) {
  check(logits.rank() == 4, "softmax_cross_entropy: logits must be [N,C,H,W]");
  const int64_t N = logits.dim(0), C = logits.dim(1), H = logits.dim(2),
                W = logits.dim(3);
  check(labels.n == N && labels.h == H && labels.w == W,
        cat("softmax_cross_entropy: labels [", labels.n, ",", labels.h, ",",
            labels.w, "] do not match logits ", shape_str(logits.shape())));
  const int64_t plane = H * W;

  const T* in_p = logits.ptr();
  double loss_sum = 0.0;
  int64_t count = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t q = 0; q < plane; ++q) {
      const int32_t lab = labels.v[static_cast<size_t>(n * plane + q)];
      if (ignore_index >= 0 && lab == ignore_index) continue;
      if (lab < 0 || lab >= C)
        fail(cat("softmax_cross_entropy: label ", lab, " out of range [0,", C,
                 ") at (n=", n, ",y=", q / W, ",x=", q % W, ")"));
      const T* col = in_p + n * C * plane + q;
      T mx = col[0];
      for (int64_t c = 1; c < C; ++c) mx = std::max(mx, col[c * plane]);
      double sum = 0.0;
      for (int64_t c = 0; c < C; ++c)
        sum += std::exp(static_cast<double>(col[c * plane] - mx));
      loss_sum += std::log(sum) + static_cast<double>(mx) -
                  static_cast<double>(col[lab * plane]);
      ++count;
    }
  check(count > 0, "softmax_cross_entropy: no non-ignored pixels");
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss_sum / static_cast<double>(count)));

  if (any_grad_path<T>({&logits})) {
    auto x_i = logits.impl();
    auto out_i = out.impl();
    auto labs = std::make_shared<IntMap>(labels);
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      const T gscale = out_i->grad[0] / static_cast<T>(count);
      if (x_i->grad.empty()) x_i->grad.assign(x_i->data.size(), T(0));
      const T* in = x_i->data.data();
      T* gi = x_i->grad.data();
      for (int64_t n = 0; n < N; ++n)
        for (int64_t q = 0; q < plane; ++q) {
          const int32_t lab = labs->v[static_cast<size_t>(n * plane + q)];
          if (ignore_index >= 0 && lab == ignore_index) continue;
          const int64_t base = n * C * plane + q;
          T mx = in[base];
          for (int64_t c = 1; c < C; ++c) mx = std::max(mx, in[base + c * plane]);
          T sum = T(0);
          for (int64_t c = 0; c < C; ++c) sum += std::exp(in[base + c * plane] - mx);
          for (int64_t c = 0; c < C; ++c) {
            const T soft = std::exp(in[base + c * plane] - mx) / sum;
            gi[base + c * plane] += gscale * (soft - (c == lab ? T(1) : T(0)));
          }
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), cat("add: shape mismatch ", shape_str(a.shape()),
                                    " vs ", shape_str(b.shape())));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] + b.ptr()[i];
  if (any_grad_path<T>({&a, &b})) {
    auto a_i = a.impl(), b_i = b.impl(), out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      const T* g = out_i->grad.data();
      const size_t m = out_i->grad.size();
      for (auto& t : {a_i, b_i}) {
        if (!(t->requires_grad || t->from_op)) continue;
        if (t->grad.empty()) t->grad.assign(t->data.size(), T(0));
        for (size_t i = 0; i < m; ++i) t->grad[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), cat("mul: shape mismatch ", shape_str(a.shape()),
                                    " vs ", shape_str(b.shape())));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] * b.ptr()[i];
  if (any_grad_path<T>({&a, &b})) {
    auto a_i = a.impl(), b_i = b.impl(), out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      const T* g = out_i->grad.data();
      const size_t m = out_i->grad.size();
      if (a_i->requires_grad || a_i->from_op) {
        if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), T(0));
        for (size_t i = 0; i < m; ++i) a_i->grad[i] += g[i] * b_i->data[i];
      }
      if (b_i->requires_grad || b_i->from_op) {
        if (b_i->grad.empty()) b_i->grad.assign(b_i->data.size(), T(0));
        for (size_t i = 0; i < m; ++i) b_i->grad[i] += g[i] * a_i->data[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T sv = static_cast<T>(s);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] * sv;
  if (any_grad_path<T>({&a})) {
    auto a_i = a.impl(), out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      if (a_i->grad.empty()) a_i->grad.assign(a_i->data.size(), T(0));
      const T* g = out_i->grad.data();
      for (size_t i = 0; i < out_i->grad.size(); ++i) a_i->grad[i] += g[i] * sv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = T(0);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += x.ptr()[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (any_grad_path<T>({&x})) {
    auto x_i = x.impl(), out_i = out.impl();
    maybe_record(out, [=]() {
      if (out_i->grad.empty()) return;
      if (x_i->grad.empty()) x_i->grad.assign(x_i->data.size(), T(0));
      const T g = out_i->grad[0];
      for (size_t i = 0; i < x_i->grad.size(); ++i) x_i->grad[i] += g;
    });
  }
  return out;
}

template <typename T>
Sgd<T>::Sgd(std::vector<Tensor<T>> params) : params_(std::move(params)) {
  velocity_.reserve(params_.size());
  for (const Tensor<T>& p : params_)
    velocity_.emplace_back(static_cast<size_t>(p.numel()), T(0));
}

template <typename T>
void Sgd<T>::step(double lr, double momentum) {
  check(lr >= 0.0, "sgd: learning rate must be nonnegative");
  check(momentum >= 0.0 && momentum < 1.0, "sgd: momentum must be in [0,1)");
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor<T>& p = params_[pi];
    if (!p.has_grad())
      fail(cat("sgd: parameter ", pi, " has no gradient (run backward first)"));
    const std::vector<T>& g = p.grad();
    std::vector<T>& v = velocity_[pi];
    T* d = p.ptr();
    const T m = static_cast<T>(momentum), l = static_cast<T>(lr);
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = m * v[i] + g[i];
      d[i] -= l * v[i];
    }
    p.clear_grad();
  }
}

#define PSTK_INSTANTIATE(T)                                                        \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&,                \
                               const Tensor<T>&, int, int);                       \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, int, int);                    \
  template Tensor<T> relu<T>(const Tensor<T>&);                                   \
  template Tensor<T> upsample_bilinear<T>(const Tensor<T>&, int, int);            \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);           \
  template Tensor<T> softmax_channels<T>(const Tensor<T>&);                       \
  template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, const IntMap&,    \
                                              int);                               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scale<T>(const Tensor<T>&, double);                          \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                \
  template class Sgd<T>;

PSTK_INSTANTIATE(float)
PSTK_INSTANTIATE(double)
#undef PSTK_INSTANTIATE

}  // namespace pstk
