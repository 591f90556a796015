#include "mininet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mininet {

void DepthEvalConfig::validate() const {
  if (!(cap_min >= 0) || !(cap_min < cap_max)) throw ConfigError("depth evaluation needs 0 <= cap_min < cap_max");
}

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lo + hi) / 2.0;
}

}  // namespace

DepthMetrics depth_metrics(std::span<const double> pred, std::span<const double> gt, const DepthEvalConfig& cfg,
                           std::span<const std::uint8_t> mask) {
  cfg.validate();
  if (pred.size() != gt.size() || (!mask.empty() && mask.size() != gt.size())) {
    throw InvalidShape("depth_metrics: prediction, ground truth and mask sizes differ");
  }
  std::vector<double> p, g;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    if (!(gt[i] > cfg.cap_min && gt[i] < cfg.cap_max)) continue;
    p.push_back(pred[i]);
    g.push_back(gt[i]);
  }
  if (g.empty()) throw EmptyEvaluation("no ground-truth pixels inside (" + std::to_string(cfg.cap_min) + ", " +
                                       std::to_string(cfg.cap_max) + ")");
  if (cfg.median_scaling) {
    // Dividing first keeps the result unchanged when every prediction is
    // scaled by the same factor, as long as the scaled values are exact.
    const double mp = median(p), mg = median(g);
    if (!(mp > 0)) throw ContractViolation("depth_metrics: median prediction must be positive");
    for (auto& v : p) v = (v / mp) * mg;
  }
  DepthMetrics m;
  const double n = static_cast<double>(g.size());
  int d1 = 0, d2 = 0, d3 = 0;
  double sq = 0, sq_log = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double pv = std::clamp(p[i], cfg.cap_min, cfg.cap_max), gv = g[i];
    if (!(pv > 0)) throw ContractViolation("depth_metrics: predictions must be positive");
    const double diff = gv - pv;
    m.abs_rel += std::fabs(diff) / gv;
    m.sq_rel += diff * diff / gv;
    sq += diff * diff;
    const double dl = std::log10(gv) - std::log10(pv);
    sq_log += dl * dl;
    const double ratio = std::max(gv / pv, pv / gv);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
  }
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(sq / n);
  m.rmse_log = std::sqrt(sq_log / n);
  m.delta1 = d1 / n;
  m.delta2 = d2 / n;
  m.delta3 = d3 / n;
  m.count = static_cast<std::int64_t>(g.size());
  return m;
}

template <typename T>
DepthMetrics depth_metrics(const Tensor<T>& pred, const Tensor<T>& gt, const DepthEvalConfig& cfg) {
  if (pred.shape() != gt.shape()) {
    throw InvalidShape("depth_metrics: prediction " + to_string(pred.shape()) + " vs ground truth " +
                       to_string(gt.shape()));
  }
  std::vector<double> p(pred.data().begin(), pred.data().end()), g(gt.data().begin(), gt.data().end());
  return depth_metrics(p, g, cfg);
}

template DepthMetrics depth_metrics(const Tensor<float>&, const Tensor<float>&, const DepthEvalConfig&);
template DepthMetrics depth_metrics(const Tensor<double>&, const Tensor<double>&, const DepthEvalConfig&);

DepthMetrics average(const std::vector<DepthMetrics>& per_image) {
  if (per_image.empty()) throw EmptyEvaluation("no images to average");
  DepthMetrics out;
  for (const auto& m : per_image) {
    out.abs_rel += m.abs_rel;
    out.sq_rel += m.sq_rel;
    out.rmse += m.rmse;
    out.rmse_log += m.rmse_log;
    out.delta1 += m.delta1;
    out.delta2 += m.delta2;
    out.delta3 += m.delta3;
    out.count += m.count;
  }
  const double n = static_cast<double>(per_image.size());
  out.abs_rel /= n;
  out.sq_rel /= n;
  out.rmse /= n;
  out.rmse_log /= n;
  out.delta1 /= n;
  out.delta2 /= n;
  out.delta3 /= n;
  return out;
}

std::string metrics_csv_header() { return "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3"; }

std::string metrics_csv_row(const DepthMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", m.abs_rel, m.sq_rel, m.rmse, m.rmse_log,
                m.delta1, m.delta2, m.delta3);
  return buf;
}

CropWindow make3d_crop_window(std::int64_t height, std::int64_t width) {
  if (height <= 0 || width <= 0) throw InvalidCrop("make3d crop of an empty image");
  const std::int64_t target = width / 2;
  if (height < target) {
    throw InvalidCrop("image " + std::to_string(width) + "x" + std::to_string(height) + " is shorter than a 2:1 crop");
  }
  return {(height - target) / 2, target};
}

CropWindow proportional_crop_window(std::int64_t rows, std::int64_t image_height, std::int64_t image_width) {
  const auto img = make3d_crop_window(image_height, image_width);
  const auto h = static_cast<std::int64_t>(std::llround(static_cast<double>(rows) * static_cast<double>(img.height) /
                                                        static_cast<double>(image_height)));
  if (h < 1 || h > rows) throw InvalidCrop("proportional crop of " + std::to_string(rows) + " rows is empty");
  return {(rows - h) / 2, h};
}

template <typename T>
Tensor<T> crop_rows(const Tensor<T>& x, const CropWindow& w) {
  if (x.rank() < 2) throw InvalidCrop("crop_rows needs at least two dimensions");
  const auto r = static_cast<std::size_t>(x.rank());
  const std::int64_t rows = x.dim(r - 2), cols = x.dim(r - 1);
  if (w.top < 0 || w.height < 1 || w.top + w.height > rows) throw InvalidCrop("crop window outside the map");
  Shape s = x.shape();
  s[r - 2] = w.height;
  Tensor<T> out(s);
  const std::int64_t planes = x.size() / (rows * cols);
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::int64_t p = 0; p < planes; ++p) {
    std::copy_n(src.begin() + (p * rows + w.top) * cols, w.height * cols, dst.begin() + p * w.height * cols);
  }
  return out;
}

template <typename T>
Tensor<T> make3d_crop(const Tensor<T>& image) {
  if (image.rank() < 2) throw InvalidCrop("make3d_crop needs at least two dimensions");
  const auto r = static_cast<std::size_t>(image.rank());
  return crop_rows(image, make3d_crop_window(image.dim(r - 2), image.dim(r - 1)));
}

template <typename T>
Tensor<T> make3d_crop_depth(const Tensor<T>& depth, std::int64_t image_height, std::int64_t image_width) {
  if (depth.rank() < 2) throw InvalidCrop("make3d_crop_depth needs at least two dimensions");
  const auto r = static_cast<std::size_t>(depth.rank());
  return crop_rows(depth, proportional_crop_window(depth.dim(r - 2), image_height, image_width));
}

#define MININET_INSTANTIATE_CROP(T)                                       \
  template Tensor<T> crop_rows(const Tensor<T>&, const CropWindow&);      \
  template Tensor<T> make3d_crop(const Tensor<T>&);                       \
  template Tensor<T> make3d_crop_depth(const Tensor<T>&, std::int64_t, std::int64_t);

MININET_INSTANTIATE_CROP(float)
MININET_INSTANTIATE_CROP(double)

double ate_from_positions(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size() || gt.empty()) throw InvalidShape("ATE needs equally long, non-empty trajectories");
  double gp = 0, pp = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      gp += gt[i][a] * pred[i][a];
      pp += pred[i][a] * pred[i][a];
    }
  }
  const double scale = pp > 0 ? gp / pp : 1.0;
  double err = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double e = scale * pred[i][a] - gt[i][a];
      err += e * e;
    }
  }
  return std::sqrt(err) / static_cast<double>(gt.size());
}

double ate_5frame(const std::vector<RigidTransform>& pred, const std::vector<RigidTransform>& gt) {
  if (pred.size() != 4 || gt.size() != 5) {
    throw InvalidShape("ate_5frame needs 4 relative motions and 5 ground-truth poses, got " +
                       std::to_string(pred.size()) + " and " + std::to_string(gt.size()));
  }
  std::vector<Vec3> p, g;
  RigidTransform acc;
  const RigidTransform g0_inv = gt[0].inverse();
  for (std::size_t i = 0; i < 5; ++i) {
    if (i > 0) acc = acc * pred[i - 1];
    p.push_back(acc.translation());
    g.push_back((g0_inv * gt[i]).translation());
  }
  return ate_from_positions(p, g);
}

double ate_5frame(const std::vector<Pose6DoF>& pred, const std::vector<RigidTransform>& gt) {
  std::vector<RigidTransform> m;
  for (const auto& p : pred) m.push_back(pose_to_matrix(p));
  return ate_5frame(m, gt);
}

RigidTransform next_camera_in_current(const Pose6DoF& t_to_next) { return pose_to_matrix(t_to_next).inverse(); }

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw EmptyEvaluation("mean_std of an empty set");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

std::string format_mean_std(const MeanStd& m, int precision) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", precision, m.mean, precision, m.std);
  return buf;
}

}  // namespace mininet
