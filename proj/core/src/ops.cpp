#include "mininet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace mininet {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw InvalidShape(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw InvalidShape(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D dydx) {
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  if (!x.tracked()) return y;
  Tensor<T> xv = x.detach();
  Tensor<T> yv = y.detach();
  return x.tape()->record(y, {x}, [xv, yv, dydx](std::span<const T> g, std::span<const std::span<T>> gi) {
    auto xs = xv.data();
    auto ys = yv.data();
    auto gx = gi[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xs[i], ys[i]);
  });
}

// Binary op over equal shapes; `da`/`db` return partial derivatives.
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA da, DB db) {
  require_same(a.shape(), b.shape(), name);
  Tensor<T> y(a.shape());
  auto as = a.data();
  auto bs = b.data();
  auto ys = y.mutable_data();
  for (std::size_t i = 0; i < as.size(); ++i) ys[i] = f(as[i], bs[i]);
  Tape<T>* tape = common_tape<T>({&a, &b});
  if (!tape) return y;
  Tensor<T> av = a.detach();
  Tensor<T> bv = b.detach();
  return tape->record(y, {a, b}, [av, bv, da, db](std::span<const T> g, std::span<const std::span<T>> gi) {
    auto as = av.data();
    auto bs = bv.data();
    if (!gi[0].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * da(as[i], bs[i]);
    }
    if (!gi[1].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] += g[i] * db(as[i], bs[i]);
    }
  });
}

struct Nchw {
  std::int64_t n, c, h, w;
};

Nchw dims4(const Shape& s, const char* op) {
  require_rank(s, 4, op);
  return {s[0], s[1], s[2], s[3]};
}

// Rows = channels of one group, columns = output pixels.
template <typename T>
void im2col(const T* img, std::int64_t channels, std::int64_t h, std::int64_t w, int k, int stride, int pad,
            std::int64_t oh, std::int64_t ow, T* col) {
  for (std::int64_t c = 0; c < channels; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        T* row = col + ((c * k + kh) * k + kw) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          std::int64_t iy = y * stride - pad + kh;
          if (iy < 0 || iy >= h) {
            std::fill(row + y * ow, row + (y + 1) * ow, T(0));
            continue;
          }
          const T* src = img + (c * h + iy) * w;
          for (std::int64_t x = 0; x < ow; ++x) {
            std::int64_t ix = x * stride - pad + kw;
            row[y * ow + x] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::int64_t channels, std::int64_t h, std::int64_t w, int k, int stride, int pad,
            std::int64_t oh, std::int64_t ow, T* img) {
  for (std::int64_t c = 0; c < channels; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + ((c * k + kh) * k + kw) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          std::int64_t iy = y * stride - pad + kh;
          if (iy < 0 || iy >= h) continue;
          T* dst = img + (c * h + iy) * w;
          for (std::int64_t x = 0; x < ow; ++x) {
            std::int64_t ix = x * stride - pad + kw;
            if (ix >= 0 && ix < w) dst[ix] += row[y * ow + x];
          }
        }
      }
    }
  }
}

// Output columns [lo, hi) whose tap at kernel column `kw` lands inside the row.
inline void tap_range(std::int64_t in_w, std::int64_t ow, int kw, int stride, int pad, std::int64_t& lo,
                      std::int64_t& hi) {
  const std::int64_t off = kw - pad;
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const std::int64_t last = in_w - 1 - off;
  hi = last < 0 ? 0 : std::min(ow, last / stride + 1);
  if (hi < lo) hi = lo;
}

// Tap-major loops so the innermost loop walks contiguous output pixels.
template <typename T>
void depthwise_forward(const T* x, const T* w, const T* b, Nchw in, int k, int stride, int pad, std::int64_t oh,
                       std::int64_t ow, T* y) {
  for (std::int64_t n = 0; n < in.n; ++n) {
    for (std::int64_t c = 0; c < in.c; ++c) {
      const T* img = x + (n * in.c + c) * in.h * in.w;
      const T* ker = w + c * k * k;
      T* out = y + (n * in.c + c) * oh * ow;
      std::fill(out, out + oh * ow, b ? b[c] : T(0));
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          const T wk = ker[kh * k + kw];
          std::int64_t lo, hi;
          tap_range(in.w, ow, kw, stride, pad, lo, hi);
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t iy = oy * stride - pad + kh;
            if (iy < 0 || iy >= in.h) continue;
            const T* row = img + iy * in.w + (kw - pad);
            T* o = out + oy * ow;
            if (stride == 1) {
              for (std::int64_t ox = lo; ox < hi; ++ox) o[ox] += wk * row[ox];
            } else {
              for (std::int64_t ox = lo; ox < hi; ++ox) o[ox] += wk * row[ox * stride];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* g, Nchw in, int k, int stride, int pad, std::int64_t oh,
                        std::int64_t ow, T* gx, T* gw, T* gb) {
  for (std::int64_t n = 0; n < in.n; ++n) {
    for (std::int64_t c = 0; c < in.c; ++c) {
      const T* img = x + (n * in.c + c) * in.h * in.w;
      const T* ker = w + c * k * k;
      const T* go = g + (n * in.c + c) * oh * ow;
      T* gimg = gx ? gx + (n * in.c + c) * in.h * in.w : nullptr;
      T* gker = gw ? gw + c * k * k : nullptr;
      if (gb) {
        T bsum = 0;
        for (std::int64_t i = 0; i < oh * ow; ++i) bsum += go[i];
        gb[c] += bsum;
      }
      for (int kh = 0; kh < k; ++kh) {
        for (int kw = 0; kw < k; ++kw) {
          const T wk = ker[kh * k + kw];
          std::int64_t lo, hi;
          tap_range(in.w, ow, kw, stride, pad, lo, hi);
          T acc = 0;
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t iy = oy * stride - pad + kh;
            if (iy < 0 || iy >= in.h) continue;
            const std::int64_t base = iy * in.w + (kw - pad);
            const T* grow = go + oy * ow;
            if (gimg) {
              T* dst = gimg + base;
              for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * stride] += grow[ox] * wk;
            }
            if (gker) {
              const T* src = img + base;
              for (std::int64_t ox = lo; ox < hi; ++ox) acc += grow[ox] * src[ox * stride];
            }
          }
          if (gker) gker[kh * k + kw] += acc;
        }
      }
    }
  }
}

}  // namespace

// --- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> relu6(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::clamp(v, T(0), T(6)); },
      [](T v, T) { return (v > T(0) && v < T(6)) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& x) {
  return unary(x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "add", [](T u, T v) { return u + v; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "sub", [](T u, T v) { return u - v; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "mul", [](T u, T v) { return u * v; }, [](T, T v) { return v; }, [](T u, T) { return u; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "div", [](T u, T v) { return u / v; }, [](T, T v) { return T(1) / v; },
      [](T u, T v) { return -u / (v * v); });
}

template <typename T>
Tensor<T> elementwise_min(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "elementwise_min", [](T u, T v) { return v < u ? v : u; }, [](T u, T v) { return v < u ? T(0) : T(1); },
      [](T u, T v) { return v < u ? T(1) : T(0); });
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& x, T s) {
  return unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

// --- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (auto& v : gi[0]) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw InvalidShape("mean of empty tensor");
  const T inv = T(1) / static_cast<T>(x.size());
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc * inv);
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [inv](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (auto& v : gi[0]) v += g[0] * inv;
  });
}

template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {
  auto d = dims4(x.shape(), "channel_mean");
  const std::int64_t hw = d.h * d.w;
  Tensor<T> y({d.n, 1, d.h, d.w});
  const T inv = T(1) / static_cast<T>(d.c);
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t n = 0; n < d.n; ++n) {
    for (std::int64_t c = 0; c < d.c; ++c) {
      for (std::int64_t i = 0; i < hw; ++i) ys[n * hw + i] += xs[(n * d.c + c) * hw + i] * inv;
    }
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [d, hw, inv](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t c = 0; c < d.c; ++c) {
        for (std::int64_t i = 0; i < hw; ++i) gi[0][(n * d.c + c) * hw + i] += g[n * hw + i] * inv;
      }
    }
  });
}

template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  auto d = dims4(x.shape(), "spatial_mean");
  const std::int64_t hw = d.h * d.w;
  if (hw == 0) throw InvalidShape("spatial_mean over empty spatial extent");
  Tensor<T> y({d.n, d.c, 1, 1});
  const T inv = T(1) / static_cast<T>(hw);
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
    T acc = 0;
    for (std::int64_t i = 0; i < hw; ++i) acc += xs[nc * hw + i];
    ys[nc] = acc * inv;
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [d, hw, inv](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
      for (std::int64_t i = 0; i < hw; ++i) gi[0][nc * hw + i] += g[nc] * inv;
    }
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  auto d = dims4(x.shape(), "global_avg_pool");
  return spatial_mean(x).reshaped({d.n, d.c});
}

// --- broadcasting ----------------------------------------------------------

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s) {
  if (x.rank() < 2) throw InvalidShape("scale_channels: rank < 2 input " + to_string(x.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1);
  if (s.size() != n * c) {
    throw InvalidShape("scale_channels: scale " + to_string(s.shape()) + " does not match " + to_string(x.shape()));
  }
  const std::int64_t inner = x.size() / std::max<std::int64_t>(1, n * c);
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ss = s.data();
  auto ys = y.mutable_data();
  for (std::int64_t nc = 0; nc < n * c; ++nc) {
    for (std::int64_t i = 0; i < inner; ++i) ys[nc * inner + i] = xs[nc * inner + i] * ss[nc];
  }
  Tape<T>* tape = common_tape<T>({&x, &s});
  if (!tape) return y;
  Tensor<T> xv = x.detach(), sv = s.detach();
  return tape->record(y, {x, s}, [xv, sv, n, c, inner](std::span<const T> g, std::span<const std::span<T>> gi) {
    auto xs = xv.data();
    auto ss = sv.data();
    for (std::int64_t nc = 0; nc < n * c; ++nc) {
      T acc = 0;
      for (std::int64_t i = 0; i < inner; ++i) {
        const T gv = g[nc * inner + i];
        if (!gi[0].empty()) gi[0][nc * inner + i] += gv * ss[nc];
        acc += gv * xs[nc * inner + i];
      }
      if (!gi[1].empty()) gi[1][nc] += acc;
    }
  });
}

// --- structural ------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw InvalidShape("concat_channels: no inputs");
  const Shape& ref = parts[0].shape();
  if (ref.size() < 2) throw InvalidShape("concat_channels: rank < 2 input " + to_string(ref));
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size() && s[0] == ref[0];
    for (std::size_t i = 2; ok && i < s.size(); ++i) ok = s[i] == ref[i];
    if (!ok) throw InvalidShape("concat_channels: " + to_string(s) + " incompatible with " + to_string(ref));
    channels += s[1];
  }
  Shape out_shape = ref;
  out_shape[1] = channels;
  const std::int64_t n = ref[0];
  const std::int64_t inner = numel(ref) / std::max<std::int64_t>(1, ref[0] * ref[1]);
  Tensor<T> y(out_shape);
  auto ys = y.mutable_data();
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::int64_t pc = p.dim(1);
    auto ps = p.data();
    for (std::int64_t b = 0; b < n; ++b) {
      std::copy_n(ps.begin() + b * pc * inner, pc * inner, ys.begin() + (b * channels + off) * inner);
    }
    off += pc;
    if (p.tracked()) {
      if (tape && tape != p.tape()) throw ContractViolation("operation mixes tensors from different tapes");
      tape = p.tape();
    }
  }
  if (!tape) return y;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return tape->record(y, parts, [offsets, widths, n, channels, inner](std::span<const T> g,
                                                                       std::span<const std::span<T>> gi) {
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (gi[k].empty()) continue;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* src = g.data() + (b * channels + offsets[k]) * inner;
        T* dst = gi[k].data() + b * widths[k] * inner;
        for (std::int64_t i = 0; i < widths[k] * inner; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end) {
  if (x.rank() < 2 || begin < 0 || end > x.dim(1) || begin >= end) {
    throw InvalidShape("slice_channels: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                       to_string(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), w = end - begin;
  const std::int64_t inner = x.size() / std::max<std::int64_t>(1, n * c);
  Shape out_shape = x.shape();
  out_shape[1] = w;
  Tensor<T> y(out_shape);
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t b = 0; b < n; ++b) {
    std::copy_n(xs.begin() + (b * c + begin) * inner, w * inner, ys.begin() + b * w * inner);
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [n, c, w, begin, inner](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t i = 0; i < w * inner; ++i) gi[0][(b * c + begin) * inner + i] += g[b * w * inner + i];
    }
  });
}

// --- layers ----------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dParams p) {
  auto in = dims4(x.shape(), "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  const std::int64_t out_c = w.dim(0);
  const int k = static_cast<int>(w.dim(2));
  if (p.stride < 1 || p.groups < 1 || p.padding < 0) throw InvalidShape("conv2d: invalid stride/groups/padding");
  if (w.dim(3) != k) throw InvalidShape("conv2d: non-square kernel " + to_string(w.shape()));
  if (in.c % p.groups != 0 || out_c % p.groups != 0) {
    throw InvalidShape("conv2d: channels " + std::to_string(in.c) + "->" + std::to_string(out_c) +
                       " not divisible by groups " + std::to_string(p.groups));
  }
  const std::int64_t cg = in.c / p.groups;
  const std::int64_t og = out_c / p.groups;
  if (w.dim(1) != cg) {
    throw InvalidShape("conv2d: weight " + to_string(w.shape()) + " expects " + std::to_string(w.dim(1) * p.groups) +
                       " input channels, got " + std::to_string(in.c));
  }
  if (!bias.empty() && bias.size() != out_c) throw InvalidShape("conv2d: bias " + to_string(bias.shape()));
  const std::int64_t oh = conv_out_size(in.h, k, p.stride, p.padding);
  const std::int64_t ow = conv_out_size(in.w, k, p.stride, p.padding);
  if (oh <= 0 || ow <= 0) throw InvalidShape("conv2d: input " + to_string(x.shape()) + " too small for kernel");

  Tensor<T> y({in.n, out_c, oh, ow});
  const bool depthwise = cg == 1 && og == 1;
  const bool pointwise = k == 1 && p.stride == 1 && p.padding == 0;
  const std::int64_t ohw = oh * ow;
  const std::int64_t ckk = cg * k * k;

  if (depthwise) {
    depthwise_forward(x.ptr(), w.ptr(), bias.empty() ? nullptr : bias.ptr(), in, k, p.stride, p.padding, oh, ow,
                      y.mutable_ptr());
  } else {
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk * ohw));
    for (std::int64_t n = 0; n < in.n; ++n) {
      for (std::int64_t g = 0; g < p.groups; ++g) {
        const T* img = x.ptr() + (n * in.c + g * cg) * in.h * in.w;
        const T* colp = img;
        if (!pointwise) {
          im2col(img, cg, in.h, in.w, k, p.stride, p.padding, oh, ow, col.data());
          colp = col.data();
        }
        CMapR<T> wm(w.ptr() + g * og * ckk, og, ckk);
        CMapR<T> cm(colp, ckk, ohw);
        MapR<T> ym(y.mutable_ptr() + (n * out_c + g * og) * ohw, og, ohw);
        ym.noalias() = wm * cm;
      }
      if (!bias.empty()) {
        for (std::int64_t o = 0; o < out_c; ++o) {
          T* row = y.mutable_ptr() + (n * out_c + o) * ohw;
          const T b = bias[o];
          for (std::int64_t i = 0; i < ohw; ++i) row[i] += b;
        }
      }
    }
  }

  Tape<T>* tape = common_tape<T>({&x, &w, &bias});
  if (!tape) return y;
  Tensor<T> xv = x.detach(), wv = w.detach();
  std::vector<Tensor<T>> inputs{x, w};
  if (!bias.empty()) inputs.push_back(bias);
  const bool has_bias = !bias.empty();
  return tape->record(y, inputs, [=](std::span<const T> gout, std::span<const std::span<T>> gi) {
    T* gx = gi[0].empty() ? nullptr : gi[0].data();
    T* gw = gi[1].empty() ? nullptr : gi[1].data();
    T* gb = (has_bias && !gi[2].empty()) ? gi[2].data() : nullptr;
    if (depthwise) {
      depthwise_backward(xv.ptr(), wv.ptr(), gout.data(), in, k, p.stride, p.padding, oh, ow, gx, gw, gb);
      return;
    }
    std::vector<T> col(static_cast<std::size_t>(ckk * ohw));
    for (std::int64_t n = 0; n < in.n; ++n) {
      for (std::int64_t g = 0; g < p.groups; ++g) {
        CMapR<T> go(gout.data() + (n * out_c + g * og) * ohw, og, ohw);
        const T* img = xv.ptr() + (n * in.c + g * cg) * in.h * in.w;
        if (gw) {
          const T* colp = img;
          if (!pointwise) {
            im2col(img, cg, in.h, in.w, k, p.stride, p.padding, oh, ow, col.data());
            colp = col.data();
          }
          CMapR<T> cm(colp, ckk, ohw);
          MapR<T> gwm(gw + g * og * ckk, og, ckk);
          gwm.noalias() += go * cm.transpose();
        }
        if (gx) {
          CMapR<T> wm(wv.ptr() + g * og * ckk, og, ckk);
          T* gimg = gx + (n * in.c + g * cg) * in.h * in.w;
          if (pointwise) {
            MapR<T> gxm(gimg, cg, ohw);
            gxm.noalias() += wm.transpose() * go;
          } else {
            MapR<T> cm(col.data(), ckk, ohw);
            cm.noalias() = wm.transpose() * go;
            col2im(col.data(), cg, in.h, in.w, k, p.stride, p.padding, oh, ow, gimg);
          }
        }
      }
      if (gb) {
        for (std::int64_t o = 0; o < out_c; ++o) {
          const T* row = gout.data() + (n * out_c + o) * ohw;
          T acc = 0;
          for (std::int64_t i = 0; i < ohw; ++i) acc += row[i];
          gb[o] += acc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "fully_connected input");
  require_rank(w.shape(), 2, "fully_connected weight");
  const std::int64_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in) {
    throw InvalidShape("fully_connected: weight " + to_string(w.shape()) + " vs input " + to_string(x.shape()));
  }
  if (!bias.empty() && bias.size() != out) throw InvalidShape("fully_connected: bias " + to_string(bias.shape()));
  Tensor<T> y({n, out});
  CMapR<T> xm(x.ptr(), n, in);
  CMapR<T> wm(w.ptr(), out, in);
  MapR<T> ym(y.mutable_ptr(), n, out);
  ym.noalias() = xm * wm.transpose();
  if (!bias.empty()) {
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t o = 0; o < out; ++o) ym(b, o) += bias[o];
    }
  }
  Tape<T>* tape = common_tape<T>({&x, &w, &bias});
  if (!tape) return y;
  Tensor<T> xv = x.detach(), wv = w.detach();
  std::vector<Tensor<T>> inputs{x, w};
  if (!bias.empty()) inputs.push_back(bias);
  const bool has_bias = !bias.empty();
  return tape->record(y, inputs, [=](std::span<const T> g, std::span<const std::span<T>> gi) {
    CMapR<T> gm(g.data(), n, out);
    if (!gi[0].empty()) {
      MapR<T> gx(gi[0].data(), n, in);
      gx.noalias() += gm * CMapR<T>(wv.ptr(), out, in);
    }
    if (!gi[1].empty()) {
      MapR<T> gw(gi[1].data(), out, in);
      gw.noalias() += gm.transpose() * CMapR<T>(xv.ptr(), n, in);
    }
    if (has_bias && !gi[2].empty()) {
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t o = 0; o < out; ++o) gi[2][o] += gm(b, o);
      }
    }
  });
}

template <typename T>
Tensor<T> nearest_upsample2x(const Tensor<T>& x) {
  auto d = dims4(x.shape(), "nearest_upsample2x");
  const std::int64_t oh = d.h * 2, ow = d.w * 2;
  Tensor<T> y({d.n, d.c, oh, ow});
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
    for (std::int64_t r = 0; r < oh; ++r) {
      for (std::int64_t q = 0; q < ow; ++q) ys[(nc * oh + r) * ow + q] = xs[(nc * d.h + r / 2) * d.w + q / 2];
    }
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [d, oh, ow](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
      for (std::int64_t r = 0; r < oh; ++r) {
        for (std::int64_t q = 0; q < ow; ++q) gi[0][(nc * d.h + r / 2) * d.w + q / 2] += g[(nc * oh + r) * ow + q];
      }
    }
  });
}

namespace {

struct Tap {
  std::int64_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

// Half-pixel-centre source taps for resizing `in` samples to `out`.
std::vector<Tap> resize_taps(std::int64_t in, std::int64_t out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  auto d = dims4(x.shape(), "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw InvalidShape("bilinear_resize: output size must be >= 1");
  if (out_h == d.h && out_w == d.w) {
    // Exact identity: every tap lands on a source sample with weight 1.
    Tensor<T> y = x.clone();
    if (!x.tracked()) return y;
    return x.tape()->record(y, {x}, [](std::span<const T> g, std::span<const std::span<T>> gi) {
      for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
    });
  }
  auto ty = resize_taps(d.h, out_h);
  auto tx = resize_taps(d.w, out_w);
  Tensor<T> y({d.n, d.c, out_h, out_w});
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
    const T* img = xs.data() + nc * d.h * d.w;
    for (std::int64_t r = 0; r < out_h; ++r) {
      const auto& a = ty[static_cast<std::size_t>(r)];
      const T wy = static_cast<T>(a.w1);
      for (std::int64_t q = 0; q < out_w; ++q) {
        const auto& b = tx[static_cast<std::size_t>(q)];
        const T wx = static_cast<T>(b.w1);
        const T top = img[a.i0 * d.w + b.i0] * (T(1) - wx) + img[a.i0 * d.w + b.i1] * wx;
        const T bot = img[a.i1 * d.w + b.i0] * (T(1) - wx) + img[a.i1 * d.w + b.i1] * wx;
        ys[(nc * out_h + r) * out_w + q] = top * (T(1) - wy) + bot * wy;
      }
    }
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [d, ty, tx, out_h, out_w](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
      T* gimg = gi[0].data() + nc * d.h * d.w;
      for (std::int64_t r = 0; r < out_h; ++r) {
        const auto& a = ty[static_cast<std::size_t>(r)];
        const T wy = static_cast<T>(a.w1);
        for (std::int64_t q = 0; q < out_w; ++q) {
          const auto& b = tx[static_cast<std::size_t>(q)];
          const T wx = static_cast<T>(b.w1);
          const T gv = g[(nc * out_h + r) * out_w + q];
          gimg[a.i0 * d.w + b.i0] += gv * (T(1) - wy) * (T(1) - wx);
          gimg[a.i0 * d.w + b.i1] += gv * (T(1) - wy) * wx;
          gimg[a.i1 * d.w + b.i0] += gv * wy * (T(1) - wx);
          gimg[a.i1 * d.w + b.i1] += gv * wy * wx;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int padding) {
  auto d = dims4(x.shape(), "max_pool2d");
  const std::int64_t oh = conv_out_size(d.h, kernel, stride, padding);
  const std::int64_t ow = conv_out_size(d.w, kernel, stride, padding);
  if (oh <= 0 || ow <= 0) throw InvalidShape("max_pool2d: input too small " + to_string(x.shape()));
  Tensor<T> y({d.n, d.c, oh, ow});
  std::vector<std::int64_t> arg(static_cast<std::size_t>(y.size()));
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
    for (std::int64_t r = 0; r < oh; ++r) {
      for (std::int64_t q = 0; q < ow; ++q) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t bi = -1;
        for (int kh = 0; kh < kernel; ++kh) {
          const std::int64_t iy = r * stride - padding + kh;
          if (iy < 0 || iy >= d.h) continue;
          for (int kw = 0; kw < kernel; ++kw) {
            const std::int64_t ix = q * stride - padding + kw;
            if (ix < 0 || ix >= d.w) continue;
            const std::int64_t idx = (nc * d.h + iy) * d.w + ix;
            if (bi < 0 || xs[idx] > best) {
              best = xs[idx];
              bi = idx;
            }
          }
        }
        const std::int64_t o = (nc * oh + r) * ow + q;
        ys[o] = best;
        arg[static_cast<std::size_t>(o)] = bi;
      }
    }
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [arg = std::move(arg)](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::size_t o = 0; o < g.size(); ++o) gi[0][arg[o]] += g[o];
  });
}

template <typename T>
Tensor<T> box_filter(const Tensor<T>& x, int window) {
  auto d = dims4(x.shape(), "box_filter");
  if (window < 1 || window % 2 == 0) throw InvalidShape("box_filter: window must be odd and positive");
  const int r = window / 2;
  const T inv = T(1) / static_cast<T>(window * window);
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.mutable_data();
  auto clampi = [](std::int64_t v, std::int64_t hi) { return std::clamp<std::int64_t>(v, 0, hi - 1); };
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
    const T* img = xs.data() + nc * d.h * d.w;
    for (std::int64_t i = 0; i < d.h; ++i) {
      for (std::int64_t j = 0; j < d.w; ++j) {
        T acc = 0;
        for (int a = -r; a <= r; ++a) {
          const std::int64_t yy = clampi(i + a, d.h);
          for (int b = -r; b <= r; ++b) acc += img[yy * d.w + clampi(j + b, d.w)];
        }
        ys[(nc * d.h + i) * d.w + j] = acc * inv;
      }
    }
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [d, r, inv, clampi](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
      T* gimg = gi[0].data() + nc * d.h * d.w;
      for (std::int64_t i = 0; i < d.h; ++i) {
        for (std::int64_t j = 0; j < d.w; ++j) {
          const T gv = g[(nc * d.h + i) * d.w + j] * inv;
          for (int a = -r; a <= r; ++a) {
            const std::int64_t yy = clampi(i + a, d.h);
            for (int b = -r; b <= r; ++b) gimg[yy * d.w + clampi(j + b, d.w)] += gv;
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> diff_x(const Tensor<T>& x) {
  auto d = dims4(x.shape(), "diff_x");
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t row = 0; row < d.n * d.c * d.h; ++row) {
    for (std::int64_t j = 0; j + 1 < d.w; ++j) ys[row * d.w + j] = xs[row * d.w + j + 1] - xs[row * d.w + j];
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [d](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t row = 0; row < d.n * d.c * d.h; ++row) {
      for (std::int64_t j = 0; j + 1 < d.w; ++j) {
        const T gv = g[row * d.w + j];
        gi[0][row * d.w + j + 1] += gv;
        gi[0][row * d.w + j] -= gv;
      }
    }
  });
}

template <typename T>
Tensor<T> diff_y(const Tensor<T>& x) {
  auto d = dims4(x.shape(), "diff_y");
  Tensor<T> y(x.shape());
  auto xs = x.data();
  auto ys = y.mutable_data();
  for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
    for (std::int64_t i = 0; i + 1 < d.h; ++i) {
      for (std::int64_t j = 0; j < d.w; ++j) {
        const std::int64_t o = (nc * d.h + i) * d.w + j;
        ys[o] = xs[o + d.w] - xs[o];
      }
    }
  }
  if (!x.tracked()) return y;
  return x.tape()->record(y, {x}, [d](std::span<const T> g, std::span<const std::span<T>> gi) {
    for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
      for (std::int64_t i = 0; i + 1 < d.h; ++i) {
        for (std::int64_t j = 0; j < d.w; ++j) {
          const std::int64_t o = (nc * d.h + i) * d.w + j;
          gi[0][o + d.w] += g[o];
          gi[0][o] -= g[o];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, bool training, T momentum, T eps) {
  auto d = dims4(x.shape(), "batch_norm2d");
  if (gamma.size() != d.c || beta.size() != d.c || running_mean.size() != d.c || running_var.size() != d.c) {
    throw InvalidShape("batch_norm2d: parameter size does not match " + std::to_string(d.c) + " channels");
  }
  const std::int64_t hw = d.h * d.w;
  const std::int64_t count = d.n * hw;
  std::vector<T> mu(static_cast<std::size_t>(d.c)), inv_std(static_cast<std::size_t>(d.c));
  auto xs = x.data();
  if (training) {
    if (count < 2) throw InvalidShape("batch_norm2d: training needs more than one value per channel");
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::int64_t c = 0; c < d.c; ++c) {
      double s = 0, s2 = 0;
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* p = xs.data() + (n * d.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* p = xs.data() + (n * d.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s2 += (p[i] - m) * (p[i] - m);
      }
      const double var = s2 / static_cast<double>(count);
      mu[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      rm[c] = (T(1) - momentum) * rm[c] + momentum * static_cast<T>(m);
      rv[c] = (T(1) - momentum) * rv[c] + momentum * static_cast<T>(s2 / static_cast<double>(count - 1));
    }
  } else {
    for (std::int64_t c = 0; c < d.c; ++c) {
      mu[c] = running_mean[c];
      inv_std[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }
  Tensor<T> xhat(x.shape());
  Tensor<T> y(x.shape());
  auto xh = xhat.mutable_data();
  auto ys = y.mutable_data();
  for (std::int64_t n = 0; n < d.n; ++n) {
    for (std::int64_t c = 0; c < d.c; ++c) {
      const std::int64_t base = (n * d.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        xh[base + i] = (xs[base + i] - mu[c]) * inv_std[c];
        ys[base + i] = xh[base + i] * gamma[c] + beta[c];
      }
    }
  }
  Tape<T>* tape = common_tape<T>({&x, &gamma, &beta});
  if (!tape) return y;
  Tensor<T> gv = gamma.detach();
  return tape->record(y, {x, gamma, beta}, [=](std::span<const T> g, std::span<const std::span<T>> gi) {
    auto xh = xhat.data();
    for (std::int64_t c = 0; c < d.c; ++c) {
      T sg = 0, sgx = 0;
      for (std::int64_t n = 0; n < d.n; ++n) {
        const std::int64_t base = (n * d.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          sg += g[base + i];
          sgx += g[base + i] * xh[base + i];
        }
      }
      if (!gi[1].empty()) gi[1][c] += sgx;
      if (!gi[2].empty()) gi[2][c] += sg;
      if (gi[0].empty()) continue;
      const T scale = gv[c] * inv_std[c];
      const T inv_count = T(1) / static_cast<T>(count);
      for (std::int64_t n = 0; n < d.n; ++n) {
        const std::int64_t base = (n * d.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          if (training) {
            gi[0][base + i] += scale * (g[base + i] - inv_count * sg - xh[base + i] * inv_count * sgx);
          } else {
            gi[0][base + i] += scale * g[base + i];
          }
        }
      }
    }
  });
}

#define MININET_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                                    \
  template Tensor<T> relu6(const Tensor<T>&);                                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                                 \
  template Tensor<T> exp(const Tensor<T>&);                                                                     \
  template Tensor<T> abs(const Tensor<T>&);                                                                     \
  template Tensor<T> square(const Tensor<T>&);                                                                  \
  template Tensor<T> reciprocal(const Tensor<T>&);                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> elementwise_min(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> scalar_mul(const Tensor<T>&, T);                                                           \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                           \
  template Tensor<T> sum(const Tensor<T>&);                                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                                    \
  template Tensor<T> channel_mean(const Tensor<T>&);                                                            \
  template Tensor<T> spatial_mean(const Tensor<T>&);                                                            \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                         \
  template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                            \
  template Tensor<T> slice_channels(const Tensor<T>&, std::int64_t, std::int64_t);                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dParams);                \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> nearest_upsample2x(const Tensor<T>&);                                                      \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::int64_t, std::int64_t);                             \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int, int);                                               \
  template Tensor<T> box_filter(const Tensor<T>&, int);                                                         \
  template Tensor<T> diff_x(const Tensor<T>&);                                                                  \
  template Tensor<T> diff_y(const Tensor<T>&);                                                                  \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&, \
                                  bool, T, T);

MININET_INSTANTIATE_OPS(float)
MININET_INSTANTIATE_OPS(double)

}  // namespace mininet
