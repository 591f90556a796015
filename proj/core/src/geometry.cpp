#include "mininet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mininet/ops.hpp"

namespace mininet {

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("intrinsics require fx, fy > 0");
}

Intrinsics Intrinsics::resized(std::int64_t from_w, std::int64_t from_h, std::int64_t to_w, std::int64_t to_h) const {
  const double sx = static_cast<double>(to_w) / static_cast<double>(from_w);
  const double sy = static_cast<double>(to_h) / static_cast<double>(from_h);
  return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5};
}

CameraFile read_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open intrinsics file " + path);
  CameraFile cam;
  if (!(in >> cam.k.fx >> cam.k.fy >> cam.k.cx >> cam.k.cy >> cam.width >> cam.height)) {
    throw IoError("intrinsics file " + path + " must hold 'fx fy cx cy' and 'width height'");
  }
  cam.k.validate();
  if (cam.width <= 0 || cam.height <= 0) throw IoError("intrinsics file " + path + " has a non-positive resolution");
  return cam;
}

void write_intrinsics(const std::string& path, const CameraFile& cam) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write intrinsics file " + path);
  out.precision(17);
  out << cam.k.fx << ' ' << cam.k.fy << ' ' << cam.k.cx << ' ' << cam.k.cy << '\n'
      << cam.width << ' ' << cam.height << '\n';
}

RigidTransform RigidTransform::from_rt(const Mat3& r, const Vec3& t) {
  RigidTransform out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.m[i][j] = r[i][j];
    out.m[i][3] = t[static_cast<std::size_t>(i)];
  }
  return out;
}

Mat3 RigidTransform::rotation() const {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r[i][j] = m[i][j];
  }
  return r;
}

Vec3 RigidTransform::translation() const { return {m[0][3], m[1][3], m[2][3]}; }

RigidTransform RigidTransform::operator*(const RigidTransform& o) const {
  RigidTransform out;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += m[i][k] * o.m[k][j];
      out.m[i][j] = acc;
    }
  }
  return out;
}

RigidTransform RigidTransform::inverse() const {
  Mat3 rt{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) rt[i][j] = m[j][i];
  }
  Vec3 t = translation();
  Vec3 ti{};
  for (int i = 0; i < 3; ++i) ti[i] = -(rt[i][0] * t[0] + rt[i][1] * t[1] + rt[i][2] * t[2]);
  return from_rt(rt, ti);
}

Vec3 RigidTransform::apply(const Vec3& p) const {
  Vec3 out{};
  for (int i = 0; i < 3; ++i) out[i] = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3];
  return out;
}

namespace {

Mat3 skew(const Vec3& w) { return {{{0, -w[2], w[1]}, {w[2], 0, -w[0]}, {-w[1], w[0], 0}}}; }

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
  }
  return out;
}

// A = sin(t)/t, B = (1 - cos t)/t^2, C = A'(t)/t, D = B'(t)/t.
struct RodriguesCoeffs {
  double a, b, c, d;
};

RodriguesCoeffs rodrigues_coeffs(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-2) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, -1.0 / 3.0 + t2 / 30.0,
            -1.0 / 12.0 + t2 / 180.0};
  }
  const double s = std::sin(theta), co = std::cos(theta);
  return {s / theta, (1.0 - co) / t2, (theta * co - s) / (t2 * theta), (theta * s - 2.0 * (1.0 - co)) / (t2 * t2)};
}

}  // namespace

Mat3 rodrigues(const Vec3& omega) {
  const double theta = std::sqrt(omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]);
  const auto k = rodrigues_coeffs(theta);
  const Mat3 w = skew(omega);
  const Mat3 w2 = matmul(w, w);
  Mat3 r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r[i][j] = (i == j ? 1.0 : 0.0) + k.a * w[i][j] + k.b * w2[i][j];
  }
  return r;
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& omega) {
  const double theta = std::sqrt(omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]);
  const auto k = rodrigues_coeffs(theta);
  const Mat3 w = skew(omega);
  const Mat3 w2 = matmul(w, w);
  std::array<Mat3, 3> out{};
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 e{};
    e[static_cast<std::size_t>(axis)] = 1.0;
    const Mat3 ek = skew(e);
    const Mat3 ekw = matmul(ek, w);
    const Mat3 wek = matmul(w, ek);
    const double wk = omega[static_cast<std::size_t>(axis)];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        out[static_cast<std::size_t>(axis)][i][j] =
            k.a * ek[i][j] + k.b * (ekw[i][j] + wek[i][j]) + wk * (k.c * w[i][j] + k.d * w2[i][j]);
      }
    }
  }
  return out;
}

Vec3 rotation_log(const Mat3& r) {
  const double cos_theta = std::clamp((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3 v{r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]};
  if (theta < 1e-6) return {0.5 * v[0], 0.5 * v[1], 0.5 * v[2]};
  if (M_PI - theta > 1e-4) {
    const double f = theta / (2.0 * std::sin(theta));
    return {f * v[0], f * v[1], f * v[2]};
  }
  // Near pi: axis from the largest diagonal entry of (R + I) / 2.
  int i = 0;
  if (r[1][1] > r[i][i]) i = 1;
  if (r[2][2] > r[i][i]) i = 2;
  Vec3 axis{};
  const double d = std::sqrt(std::max(0.0, (r[i][i] + 1.0) / 2.0));
  for (int j = 0; j < 3; ++j) axis[j] = (j == i) ? d : (r[i][j] + r[j][i]) / (4.0 * d);
  if (axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2] < 0) {
    for (auto& a : axis) a = -a;
  }
  return {theta * axis[0], theta * axis[1], theta * axis[2]};
}

template <typename T>
Tensor<T> disp_to_depth(const Tensor<T>& disparity, const DepthConstants& k) {
  return reciprocal(add_scalar(scalar_mul(disparity, static_cast<T>(k.a)), static_cast<T>(k.b)));
}

namespace {

constexpr double kMinDepth = 1e-3;

struct BatchPose {
  Mat3 r;
  Vec3 t;
};

template <typename T>
Projection<T> project_impl(const Tensor<T>& depth, const std::vector<BatchPose>& poses, const Intrinsics& k) {
  if (depth.rank() != 4 || depth.dim(1) != 1) {
    throw InvalidShape("project: depth must be N x 1 x H x W, got " + to_string(depth.shape()));
  }
  k.validate();
  const std::int64_t n = depth.dim(0), h = depth.dim(2), w = depth.dim(3), hw = h * w;
  Projection<T> out{Tensor<T>({n, 2, h, w}), Tensor<T>({n, 1, h, w})};
  auto d = depth.data();
  auto c = out.coords.mutable_data();
  auto f = out.in_front.mutable_data();
  for (std::int64_t b = 0; b < n; ++b) {
    const auto& p = poses[static_cast<std::size_t>(b)];
    // The generic path rounds fx * (z * rx) / z + cx away from j.
    const bool identity = p.r == Mat3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} && p.t == Vec3{0, 0, 0};
    for (std::int64_t i = 0; i < h; ++i) {
      const double ry = (static_cast<double>(i) - k.cy) / k.fy;
      for (std::int64_t j = 0; j < w; ++j) {
        const double rx = (static_cast<double>(j) - k.cx) / k.fx;
        const double z = static_cast<double>(d[b * hw + i * w + j]);
        if (identity) {
          const std::int64_t o = b * 2 * hw + i * w + j;
          if (z > kMinDepth) {
            c[o] = static_cast<T>(j);
            c[o + hw] = static_cast<T>(i);
            f[b * hw + i * w + j] = T(1);
          } else {
            c[o] = T(-1);
            c[o + hw] = T(-1);
          }
          continue;
        }
        double X[3];
        for (int a = 0; a < 3; ++a) X[a] = z * (p.r[a][0] * rx + p.r[a][1] * ry + p.r[a][2]) + p.t[a];
        const std::int64_t o = b * 2 * hw + i * w + j;
        if (X[2] > kMinDepth) {
          c[o] = static_cast<T>(k.fx * X[0] / X[2] + k.cx);
          c[o + hw] = static_cast<T>(k.fy * X[1] / X[2] + k.cy);
          f[b * hw + i * w + j] = T(1);
        } else {
          c[o] = T(-1);
          c[o + hw] = T(-1);
        }
      }
    }
  }
  return out;
}

// Accumulates d(loss)/d(depth) and, when requested, d(loss)/dR and d(loss)/dt.
template <typename T>
void project_backward(std::span<const T> g, const Tensor<T>& depth, const std::vector<BatchPose>& poses,
                      const Intrinsics& k, std::span<T> gdepth, std::vector<Mat3>* grot, std::vector<Vec3>* gtrans) {
  const std::int64_t n = depth.dim(0), h = depth.dim(2), w = depth.dim(3), hw = h * w;
  auto d = depth.data();
  for (std::int64_t b = 0; b < n; ++b) {
    const auto& p = poses[static_cast<std::size_t>(b)];
    for (std::int64_t i = 0; i < h; ++i) {
      const double ry = (static_cast<double>(i) - k.cy) / k.fy;
      for (std::int64_t j = 0; j < w; ++j) {
        const double rx = (static_cast<double>(j) - k.cx) / k.fx;
        const double ray[3] = {rx, ry, 1.0};
        const double z = static_cast<double>(d[b * hw + i * w + j]);
        double rr[3], X[3];
        for (int a = 0; a < 3; ++a) {
          rr[a] = p.r[a][0] * rx + p.r[a][1] * ry + p.r[a][2];
          X[a] = z * rr[a] + p.t[a];
        }
        if (!(X[2] > kMinDepth)) continue;
        const std::int64_t o = b * 2 * hw + i * w + j;
        const double gu = static_cast<double>(g[o]);
        const double gv = static_cast<double>(g[o + hw]);
        const double iz = 1.0 / X[2];
        const double gX[3] = {gu * k.fx * iz, gv * k.fy * iz, -(gu * k.fx * X[0] + gv * k.fy * X[1]) * iz * iz};
        if (!gdepth.empty()) gdepth[b * hw + i * w + j] += static_cast<T>(gX[0] * rr[0] + gX[1] * rr[1] + gX[2] * rr[2]);
        if (grot) {
          auto& gr = (*grot)[static_cast<std::size_t>(b)];
          for (int a = 0; a < 3; ++a) {
            for (int q = 0; q < 3; ++q) gr[a][q] += gX[a] * z * ray[q];
          }
        }
        if (gtrans) {
          auto& gt = (*gtrans)[static_cast<std::size_t>(b)];
          for (int a = 0; a < 3; ++a) gt[a] += gX[a];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Projection<T> project(const Tensor<T>& depth, const Tensor<T>& pose, const Intrinsics& k) {
  if (pose.rank() != 2 || pose.dim(1) != 6 || depth.rank() != 4 || pose.dim(0) != depth.dim(0)) {
    throw InvalidShape("project: pose " + to_string(pose.shape()) + " must be N x 6 for depth " +
                       to_string(depth.shape()));
  }
  const std::int64_t n = pose.dim(0);
  std::vector<BatchPose> poses;
  std::vector<Vec3> omegas;
  for (std::int64_t b = 0; b < n; ++b) {
    Vec3 om{}, t{};
    for (int a = 0; a < 3; ++a) {
      om[a] = static_cast<double>(pose[b * 6 + a]);
      t[a] = static_cast<double>(pose[b * 6 + 3 + a]);
    }
    poses.push_back({rodrigues(om), t});
    omegas.push_back(om);
  }
  auto out = project_impl(depth, poses, k);
  Tape<T>* tape = common_tape<T>({&depth, &pose});
  if (!tape) return out;
  Tensor<T> dv = depth.detach();
  out.coords = tape->record(out.coords, {depth, pose}, [dv, poses, omegas, k, n](std::span<const T> g,
                                                                                  std::span<const std::span<T>> gi) {
    std::vector<Mat3> grot(static_cast<std::size_t>(n), Mat3{});
    std::vector<Vec3> gtrans(static_cast<std::size_t>(n), Vec3{});
    const bool want_pose = !gi[1].empty();
    project_backward<T>(g, dv, poses, k, gi[0], want_pose ? &grot : nullptr, want_pose ? &gtrans : nullptr);
    if (!want_pose) return;
    for (std::int64_t b = 0; b < n; ++b) {
      const auto jac = rodrigues_jacobian(omegas[static_cast<std::size_t>(b)]);
      const auto& gr = grot[static_cast<std::size_t>(b)];
      for (int a = 0; a < 3; ++a) {
        double acc = 0;
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) acc += gr[i][j] * jac[static_cast<std::size_t>(a)][i][j];
        }
        gi[1][b * 6 + a] += static_cast<T>(acc);
        gi[1][b * 6 + 3 + a] += static_cast<T>(gtrans[static_cast<std::size_t>(b)][a]);
      }
    }
  });
  return out;
}

template <typename T>
Projection<T> project(const Tensor<T>& depth, const std::vector<RigidTransform>& transforms, const Intrinsics& k) {
  if (depth.rank() != 4) throw InvalidShape("project: depth must be N x 1 x H x W, got " + to_string(depth.shape()));
  const std::int64_t n = depth.dim(0);
  if (transforms.size() != 1 && static_cast<std::int64_t>(transforms.size()) != n) {
    throw InvalidShape("project: need 1 or " + std::to_string(n) + " transforms, got " +
                       std::to_string(transforms.size()));
  }
  std::vector<BatchPose> poses;
  for (std::int64_t b = 0; b < n; ++b) {
    const auto& t = transforms[transforms.size() == 1 ? 0 : static_cast<std::size_t>(b)];
    poses.push_back({t.rotation(), t.translation()});
  }
  auto out = project_impl(depth, poses, k);
  if (!depth.tracked()) return out;
  Tensor<T> dv = depth.detach();
  out.coords = depth.tape()->record(out.coords, {depth}, [dv, poses, k](std::span<const T> g,
                                                                        std::span<const std::span<T>> gi) {
    project_backward<T>(g, dv, poses, k, gi[0], nullptr, nullptr);
  });
  return out;
}

template <typename T>
WarpResult<T> inverse_warp(const Tensor<T>& source, const Tensor<T>& coords) {
  if (source.rank() != 4 || coords.rank() != 4 || coords.dim(1) != 2 || coords.dim(0) != source.dim(0)) {
    throw InvalidShape("inverse_warp: source " + to_string(source.shape()) + " / coords " + to_string(coords.shape()));
  }
  const std::int64_t n = source.dim(0), ch = source.dim(1), sh = source.dim(2), sw = source.dim(3);
  const std::int64_t h = coords.dim(2), w = coords.dim(3), hw = h * w;
  if (sh < 1 || sw < 1) throw InvalidShape("inverse_warp: empty source image");

  // Per output pixel: clamped position, lower taps, fractional weights and
  // whether each axis was clamped (which zeroes its coordinate gradient).
  struct Sample {
    std::int64_t x0, y0, x1, y1;
    T wx, wy;
    bool clamped_x, clamped_y;
  };
  std::vector<Sample> samples(static_cast<std::size_t>(n * hw));
  WarpResult<T> out{Tensor<T>({n, ch, h, w}), Tensor<T>({n, 1, h, w})};
  auto cs = coords.data();
  auto src = source.data();
  auto img = out.image.mutable_data();
  auto valid = out.valid.mutable_data();
  auto axis = [](T v, std::int64_t size, std::int64_t& i0, std::int64_t& i1, T& frac, bool& clamped) {
    const T hi = static_cast<T>(size - 1);
    clamped = !(v >= T(0) && v <= hi);
    const T vc = std::clamp(std::isfinite(v) ? v : T(0), T(0), hi);
    i0 = static_cast<std::int64_t>(std::floor(vc));
    if (i0 >= size - 1) i0 = std::max<std::int64_t>(0, size - 2);
    i1 = std::min(i0 + 1, size - 1);
    frac = size > 1 ? vc - static_cast<T>(i0) : T(0);
  };
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      Sample s{};
      axis(cs[b * 2 * hw + p], sw, s.x0, s.x1, s.wx, s.clamped_x);
      axis(cs[b * 2 * hw + hw + p], sh, s.y0, s.y1, s.wy, s.clamped_y);
      samples[static_cast<std::size_t>(b * hw + p)] = s;
      valid[b * hw + p] = (s.clamped_x || s.clamped_y) ? T(0) : T(1);
      for (std::int64_t c = 0; c < ch; ++c) {
        const T* plane = src.data() + (b * ch + c) * sh * sw;
        const T top = plane[s.y0 * sw + s.x0] * (T(1) - s.wx) + plane[s.y0 * sw + s.x1] * s.wx;
        const T bot = plane[s.y1 * sw + s.x0] * (T(1) - s.wx) + plane[s.y1 * sw + s.x1] * s.wx;
        img[(b * ch + c) * hw + p] = top * (T(1) - s.wy) + bot * s.wy;
      }
    }
  }
  Tape<T>* tape = common_tape<T>({&source, &coords});
  if (!tape) return out;
  Tensor<T> sv = source.detach();
  out.image = tape->record(out.image, {source, coords}, [sv, samples = std::move(samples), n, ch, sh, sw, hw](
                                                             std::span<const T> g, std::span<const std::span<T>> gi) {
    auto src = sv.data();
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t p = 0; p < hw; ++p) {
        const auto& s = samples[static_cast<std::size_t>(b * hw + p)];
        T gu = 0, gv = 0;
        for (std::int64_t c = 0; c < ch; ++c) {
          const T go = g[(b * ch + c) * hw + p];
          const std::int64_t base = (b * ch + c) * sh * sw;
          if (!gi[0].empty()) {
            gi[0][base + s.y0 * sw + s.x0] += go * (T(1) - s.wx) * (T(1) - s.wy);
            gi[0][base + s.y0 * sw + s.x1] += go * s.wx * (T(1) - s.wy);
            gi[0][base + s.y1 * sw + s.x0] += go * (T(1) - s.wx) * s.wy;
            gi[0][base + s.y1 * sw + s.x1] += go * s.wx * s.wy;
          }
          const T* plane = src.data() + base;
          const T v00 = plane[s.y0 * sw + s.x0], v01 = plane[s.y0 * sw + s.x1];
          const T v10 = plane[s.y1 * sw + s.x0], v11 = plane[s.y1 * sw + s.x1];
          gu += go * ((T(1) - s.wy) * (v01 - v00) + s.wy * (v11 - v10));
          gv += go * ((T(1) - s.wx) * (v10 - v00) + s.wx * (v11 - v01));
        }
        if (!gi[1].empty()) {
          if (!s.clamped_x && sw > 1) gi[1][b * 2 * hw + p] += gu;
          if (!s.clamped_y && sh > 1) gi[1][b * 2 * hw + hw + p] += gv;
        }
      }
    }
  });
  return out;
}

template <typename T>
WarpResult<T> synthesize_view(const Tensor<T>& source, const Tensor<T>& depth, const Tensor<T>& pose,
                              const Intrinsics& k) {
  auto proj = project(depth, pose, k);
  auto warp = inverse_warp(source, proj.coords);
  auto v = warp.valid.mutable_data();
  auto f = proj.in_front.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= f[i];
  return warp;
}

template <typename T>
Tensor<T> pixel_grid(std::int64_t n, std::int64_t h, std::int64_t w) {
  Tensor<T> g({n, 2, h, w});
  auto d = g.mutable_data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        d[(b * 2) * h * w + i * w + j] = static_cast<T>(j);
        d[(b * 2 + 1) * h * w + i * w + j] = static_cast<T>(i);
      }
    }
  }
  return g;
}

#define MININET_INSTANTIATE_GEOMETRY(T)                                                                  \
  template Tensor<T> disp_to_depth(const Tensor<T>&, const DepthConstants&);                             \
  template Projection<T> project(const Tensor<T>&, const Tensor<T>&, const Intrinsics&);                 \
  template Projection<T> project(const Tensor<T>&, const std::vector<RigidTransform>&, const Intrinsics&); \
  template WarpResult<T> inverse_warp(const Tensor<T>&, const Tensor<T>&);                               \
  template WarpResult<T> synthesize_view(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                         const Intrinsics&);                                             \
  template Tensor<T> pixel_grid(std::int64_t, std::int64_t, std::int64_t);

MININET_INSTANTIATE_GEOMETRY(float)
MININET_INSTANTIATE_GEOMETRY(double)

}  // namespace mininet
