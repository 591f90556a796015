#include "mininet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mininet {

void SynthSceneConfig::validate() const {
  if (width < 8 || height < 8) throw ConfigError("synthetic scene must be at least 8x8");
  if (num_frames < 3) throw ConfigError("synthetic sequence needs at least 3 frames");
  if (!(focal_scale > 0)) throw ConfigError("focal_scale must be positive");
  if (!(camera_height > 0) || !(wall_depth > 1)) throw ConfigError("scene geometry must be positive");
  if (!(texture_period_px > 0)) throw ConfigError("texture_period_px must be positive");
  if (supersample < 1) throw ConfigError("supersample must be >= 1");
  if (!(min_in_frame > 0 && min_in_frame <= 1)) throw ConfigError("min_in_frame must lie in (0, 1]");
}

RigidTransform SynthSequence::relative(std::size_t t, std::size_t s) const {
  return poses.at(s).inverse() * poses.at(t);
}

Pose6DoF SynthSequence::relative_pose(std::size_t t, std::size_t s) const {
  const auto m = relative(t, s);
  return {rotation_log(m.rotation()), m.translation()};
}

template <typename T>
Triplet<T> SynthSequence::triplet(std::size_t center) const {
  if (center < 1 || center + 1 >= frames.size()) {
    throw ContractViolation("triplet center " + std::to_string(center) + " out of range");
  }
  auto convert = [](const Tensor<float>& x) {
    std::vector<T> v(x.data().begin(), x.data().end());
    return Tensor<T>(x.shape(), std::move(v));
  };
  return {convert(frames[center - 1]), convert(frames[center]), convert(frames[center + 1]), camera.k};
}

template Triplet<float> SynthSequence::triplet<float>(std::size_t) const;
template Triplet<double> SynthSequence::triplet<double>(std::size_t) const;

namespace {

constexpr double kMaxDepth = 100.0;

struct Octave {
  double period_mult, amplitude, cos_a, sin_a;
  std::array<double, 3> phase;
};

struct PlaneTexture {
  std::array<double, 3> base;
  double period;
  std::vector<Octave> octaves;

  std::array<double, 3> at(double a, double b) const {
    std::array<double, 3> c = base;
    for (const auto& o : octaves) {
      const double x = 2.0 * std::numbers::pi * (a * o.cos_a + b * o.sin_a) / (period * o.period_mult);
      for (int ch = 0; ch < 3; ++ch) c[ch] += o.amplitude * std::sin(x + o.phase[ch]);
    }
    return c;
  }
};

PlaneTexture make_texture(double period, Rng& rng) {
  std::uniform_real_distribution<double> base(0.35, 0.65), angle(0.0, std::numbers::pi), phase(0.0, 6.283185307179586);
  PlaneTexture t;
  for (auto& b : t.base) b = base(rng);
  t.period = period;
  const double mults[3] = {1.0, 2.2, 4.7};
  const double amps[3] = {0.10, 0.12, 0.13};
  for (int i = 0; i < 3; ++i) {
    const double a = angle(rng);
    Octave o{mults[i], amps[i], std::cos(a), std::sin(a), {}};
    for (auto& p : o.phase) p = phase(rng);
    t.octaves.push_back(o);
  }
  return t;
}

struct Scene {
  SynthSceneConfig cfg;
  Intrinsics k;
  PlaneTexture floor, wall;

  // Nearest intersection along a world ray; returns the ray parameter and colour.
  double trace(const Vec3& o, const Vec3& d, std::array<double, 3>* colour) const {
    double best = kMaxDepth;
    int hit = -1;
    if (cfg.scene == SceneKind::TwoPlane && d[1] > 1e-9) {
      const double t = (cfg.camera_height - o[1]) / d[1];
      if (t > 0 && t < best) best = t, hit = 0;
    }
    if (d[2] > 1e-9) {
      const double t = (cfg.wall_depth - o[2]) / d[2];
      if (t > 0 && t < best) best = t, hit = 1;
    }
    if (colour) {
      const Vec3 p{o[0] + best * d[0], o[1] + best * d[1], o[2] + best * d[2]};
      *colour = hit == 0 ? floor.at(p[0], p[2]) : wall.at(p[0], p[1]);
    }
    return best;
  }

  void render(const RigidTransform& cam_to_world, Tensor<float>& image, Tensor<float>& depth) const {
    const auto w = cfg.width, h = cfg.height, hw = w * h;
    image = Tensor<float>({1, 3, h, w});
    depth = Tensor<float>({1, 1, h, w});
    auto img = image.mutable_data();
    auto dep = depth.mutable_data();
    const Mat3 r = cam_to_world.rotation();
    const Vec3 o = cam_to_world.translation();
    const int ss = cfg.supersample;
    auto world_dir = [&](double u, double v) {
      const double c[3] = {(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
      Vec3 d{};
      for (int i = 0; i < 3; ++i) d[i] = r[i][0] * c[0] + r[i][1] * c[1] + r[i][2] * c[2];
      return d;
    };
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        // The direction has unit camera-frame z, so the ray parameter is depth.
        dep[i * w + j] = static_cast<float>(trace(o, world_dir(static_cast<double>(j), static_cast<double>(i)), nullptr));
        std::array<double, 3> acc{};
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const double u = static_cast<double>(j) + (sx + 0.5) / ss - 0.5;
            const double v = static_cast<double>(i) + (sy + 0.5) / ss - 0.5;
            std::array<double, 3> c{};
            trace(o, world_dir(u, v), &c);
            for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
          }
        }
        for (int ch = 0; ch < 3; ++ch) {
          img[ch * hw + i * w + j] = static_cast<float>(std::clamp(acc[ch] / (ss * ss), 0.0, 1.0));
        }
      }
    }
  }
};

RigidTransform motion_step(const Vec3& omega, const Vec3& t) { return RigidTransform::from_rt(rodrigues(omega), t); }

}  // namespace

double in_frame_fraction(const Tensor<float>& depth, const RigidTransform& t_to_s, const Intrinsics& k) {
  const auto h = depth.dim(2), w = depth.dim(3);
  std::int64_t inside = 0;
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      const double z = depth[i * w + j];
      const Vec3 p{z * (static_cast<double>(j) - k.cx) / k.fx, z * (static_cast<double>(i) - k.cy) / k.fy, z};
      const Vec3 q = t_to_s.apply(p);
      if (q[2] <= 1e-3) continue;
      const double u = k.fx * q[0] / q[2] + k.cx, v = k.fy * q[1] / q[2] + k.cy;
      if (u >= 0 && u <= static_cast<double>(w - 1) && v >= 0 && v <= static_cast<double>(h - 1)) ++inside;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(h * w);
}

SynthSequence generate_synthetic_sequence(const SynthSceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Scene scene;
  scene.cfg = cfg;
  const double f = cfg.focal_scale * static_cast<double>(cfg.width);
  scene.k = {f, f, (static_cast<double>(cfg.width) - 1) / 2, (static_cast<double>(cfg.height) - 1) / 2};
  // World-space periods chosen so the finest octave spans texture_period_px
  // pixels at a representative depth of each plane.
  const double floor_ref = cfg.camera_height * f / (static_cast<double>(cfg.height) / 4);
  scene.floor = make_texture(cfg.texture_period_px * floor_ref / f, rng);
  scene.wall = make_texture(cfg.texture_period_px * cfg.wall_depth / f, rng);

  SynthSequence seq;
  seq.camera = {scene.k, cfg.width, cfg.height};
  std::normal_distribution<double> noise(0.0, 1.0);
  RigidTransform pose;
  for (int n = 0; n < cfg.num_frames; ++n) {
    Tensor<float> img, dep;
    scene.render(pose, img, dep);
    seq.frames.push_back(img);
    seq.depths.push_back(dep);
    seq.poses.push_back(pose);
    if (n + 1 == cfg.num_frames) break;
    Vec3 omega{}, t{};
    for (auto& o : omega) o = cfg.rotation_jitter * noise(rng);
    t[0] = cfg.lateral_speed + cfg.translation_jitter * noise(rng);
    t[1] = 0.25 * cfg.translation_jitter * noise(rng);
    t[2] = cfg.translation_jitter * noise(rng);
    RigidTransform step = motion_step(omega, t);
    // Damp until enough of the current view stays visible from the next one.
    for (int attempt = 0; attempt < 20; ++attempt) {
      const RigidTransform next = pose * step;
      const RigidTransform t_to_s = next.inverse() * pose;
      if (in_frame_fraction(dep, t_to_s, scene.k) >= cfg.min_in_frame) break;
      for (auto& o : omega) o *= 0.5;
      for (auto& v : t) v *= 0.5;
      step = motion_step(omega, t);
    }
    pose = pose * step;
  }
  return seq;
}

}  // namespace mininet
