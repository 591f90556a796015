#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mininet/error.hpp"
#include "mininet/eval.hpp"
#include "mininet/gradcheck.hpp"
#include "mininet/io.hpp"
#include "mininet/ops.hpp"
#include "mininet/profiler.hpp"
#include "mininet/synthetic.hpp"
#include "mininet/trainer.hpp"

namespace fs = std::filesystem;
using namespace mininet;

namespace {

// Kernels run on the calling thread; the variable is checked so that a typo
// does not go unnoticed.
void check_thread_env() {
  const char* v = std::getenv("MININET_THREADS");
  if (!v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) {
    throw ConfigError(std::string("MININET_THREADS must be a positive integer, got '") + v + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  N x{};
  in >> x;
  if (!in || !(in >> std::ws).eof()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

void apply_setting(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "batch_size") c.batch_size = parse_number<std::int64_t>(key, v);
  else if (key == "epochs") c.epochs = parse_number<int>(key, v);
  else if (key == "max_steps") c.max_steps = parse_number<std::int64_t>(key, v);
  else if (key == "lr0") c.lr0 = parse_number<double>(key, v);
  else if (key == "lr_decay_epochs") c.lr_decay_epochs = parse_number<int>(key, v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "augment") c.augment = parse_bool(key, v);
  else throw ConfigError("unknown training setting '" + key + "'");
}

// Either a JSON object or "key = value" lines with # comments.
TrainConfig read_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  TrainConfig c;
  if (trim(text).starts_with("{")) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    for (const auto& [key, value] : j.items()) {
      apply_setting(c, key, value.is_string() ? value.get<std::string>() : value.dump());
    }
  } else {
    std::istringstream lines(text);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      ++n;
      line = trim(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key = value");
      apply_setting(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  return c;
}

DepthNetConfig depth_config(const std::string& variant, const std::string& res, bool no_share, bool std_conv) {
  DepthNetConfig c;
  c.variant = parse_variant(variant);
  c.output_res = parse_output_res(res);
  c.share_recurrent_weights = !no_share;
  c.lightweight_decoder = !std_conv;
  return c;
}

Tensor<float> as_batch(const Tensor<float>& chw) { return chw.reshaped({1, chw.dim(0), chw.dim(1), chw.dim(2)}); }

std::vector<fs::path> list_files(const fs::path& p, const std::vector<std::string>& exts) {
  std::vector<fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file() && std::find(exts.begin(), exts.end(), e.path().extension().string()) != exts.end()) {
        out.push_back(e.path());
      }
    }
    std::sort(out.begin(), out.end());
  } else if (fs::is_regular_file(p)) {
    out.push_back(p);
  } else {
    throw IoError("no such file or directory: " + p.string());
  }
  if (out.empty()) throw IoError("no matching files in " + p.string());
  return out;
}

struct Common {
  std::uint64_t seed = 0;
  bool seed_set = false;
};

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data, out = "run", config, variant = "original", res = "F";
  bool synthetic = false, no_share = false, std_conv = false, no_augment = false;
  std::int64_t width = 0, height = 0;
  int frames = 48;
  double pose_width = 1.0;
  std::int64_t batch = 0, max_steps = -1;
  int epochs = 0;
  double lr = 0;
};

int run_train(const TrainArgs& a, const Common& common) {
  TrainConfig tc = a.config.empty() ? TrainConfig{} : read_train_config(a.config);
  if (a.batch > 0) tc.batch_size = a.batch;
  if (a.epochs > 0) tc.epochs = a.epochs;
  if (a.max_steps >= 0) tc.max_steps = a.max_steps;
  if (a.lr > 0) tc.lr0 = a.lr;
  if (common.seed_set) tc.seed = common.seed;
  if (a.no_augment) tc.augment = false;
  tc.validate();
  if (a.data.empty() == !a.synthetic) throw ConfigError("train needs exactly one of --data or --synthetic");
  const auto dc = depth_config(a.variant, a.res, a.no_share, a.std_conv);

  // Everything is validated and loaded before the output directory is touched.
  std::int64_t h = a.height, w = a.width;
  std::vector<Triplet<float>> triplets;
  if (a.synthetic) {
    SynthSceneConfig sc;
    if (w > 0) sc.width = w;
    if (h > 0) sc.height = h;
    sc.num_frames = a.frames;
    sc.seed = tc.seed;
    sc.validate();
    h = sc.height;
    w = sc.width;
    dc.validate_input(h, w);
    const auto seq = generate_synthetic_sequence(sc);
    for (std::size_t c = 1; c + 1 < seq.size(); ++c) triplets.push_back(seq.triplet<float>(c));
  } else {
    if (h <= 0) h = 192;
    if (w <= 0) w = 640;
    dc.validate_input(h, w);
    const auto ds = SequenceDataset::open(a.data);
    if (ds.size() < 3) throw ConfigError(a.data + ": need at least 3 frames");
    if (ds.camera().width != w || ds.camera().height != h) {
      std::fprintf(stderr, "resizing %lldx%lld frames to %lldx%lld; intrinsics rescaled\n",
                   static_cast<long long>(ds.camera().width), static_cast<long long>(ds.camera().height),
                   static_cast<long long>(w), static_cast<long long>(h));
    }
    for (std::size_t c = 1; c + 1 < ds.size(); ++c) triplets.push_back(ds.triplet(c, h, w));
  }
  PoseNetConfig pc;
  pc.width_multiplier = a.pose_width;

  Rng rng(tc.seed);
  DepthNet<float> depth(dc, rng);
  PoseNet<float> pose(pc, rng);
  Trainer<float> trainer(depth, pose, tc);

  fs::create_directories(a.out);
  std::ofstream log(fs::path(a.out) / "loss.csv");
  if (!log) throw IoError("cannot write " + (fs::path(a.out) / "loss.csv").string());
  log << "step,L_ph,L_md,total\n";

  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at_epoch(epoch, tc);
    double epoch_loss = 0;
    std::int64_t epoch_steps = 0;
    for (std::size_t b = 0; b + static_cast<std::size_t>(tc.batch_size) <= order.size() || b == 0;
         b += static_cast<std::size_t>(tc.batch_size)) {
      if (tc.max_steps > 0 && step >= tc.max_steps) break;
      std::vector<Triplet<float>> items;
      for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(tc.batch_size)); ++i) {
        const auto& t = triplets[order[i]];
        items.push_back(tc.augment ? augment(t, rng) : t);
      }
      const auto rep = trainer.step(stack_triplets(items), lr);
      ++step;
      log << step << ',' << rep.photometric.item() << ',' << rep.md_smoothness.item() << ',' << rep.total.item()
          << '\n';
      epoch_loss += rep.total.item();
      ++epoch_steps;
    }
    log.flush();
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch + 1);
    save_checkpoint((fs::path(a.out) / name).string(), depth, &pose, step);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "epoch %d: %lld steps, mean loss %.5f, lr %.2e, %.0f s\n", epoch + 1,
                 static_cast<long long>(epoch_steps), epoch_steps ? epoch_loss / epoch_steps : 0.0, lr, secs);
    if (tc.max_steps > 0 && step >= tc.max_steps) break;
  }
  save_checkpoint((fs::path(a.out) / "last.ckpt").string(), depth, &pose, step);
  return 0;
}

// ---- infer ---------------------------------------------------------------

struct InferArgs {
  std::string checkpoint, input, out = "disparity";
  std::int64_t width = 640, height = 192;
};

int run_infer(const InferArgs& a) {
  const auto meta = read_checkpoint_meta(a.checkpoint);
  meta.depth.validate_input(a.height, a.width);
  const auto files = list_files(a.input, {".ppm", ".pgm"});
  Rng rng(0);
  DepthNet<float> depth(meta.depth, rng);
  load_checkpoint<float>(a.checkpoint, depth, nullptr);
  fs::create_directories(a.out);
  for (const auto& f : files) {
    auto img = as_batch(load_image(f.string()));
    if (img.dim(2) != a.height || img.dim(3) != a.width) img = bilinear_resize(img, a.height, a.width);
    const auto disp = depth.forward(normalize(img)).back();
    const auto base = (fs::path(a.out) / f.stem()).string() + "_disp";
    save_disparity(base, disp);
    std::printf("%s -> %s.tensor\n", f.string().c_str(), base.c_str());
  }
  return 0;
}

// ---- eval-depth ----------------------------------------------------------

struct EvalDepthArgs {
  std::string pred, gt;
  double cap_min = 1e-3, cap_max = 80.0;
  bool no_median = false, per_image = false;
};

int run_eval_depth(const EvalDepthArgs& a) {
  DepthEvalConfig cfg{a.cap_min, a.cap_max, !a.no_median};
  if (!(cfg.cap_min > 0) || !(cfg.cap_max > cfg.cap_min)) throw ConfigError("need 0 < cap-min < cap-max");
  const auto preds = list_files(a.pred, {".tensor"});
  const auto gts = list_files(a.gt, {".tensor"});
  if (preds.size() != gts.size()) {
    throw ConfigError("found " + std::to_string(preds.size()) + " predictions but " + std::to_string(gts.size()) +
                      " ground-truth maps");
  }
  std::vector<DepthMetrics> all;
  if (a.per_image) std::printf("file,%s\n", metrics_csv_header().c_str());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto p = read_tensor_file<double>(preds[i].string());
    auto g = read_tensor_file<double>(gts[i].string());
    if (p.size() != g.size()) {
      throw InvalidShape(preds[i].string() + " and " + gts[i].string() + " differ in size");
    }
    all.push_back(depth_metrics(p, g, cfg));
    if (a.per_image) std::printf("%s,%s\n", preds[i].filename().string().c_str(), metrics_csv_row(all.back()).c_str());
  }
  if (!a.per_image) std::printf("%s\n", metrics_csv_header().c_str());
  std::printf("%s%s\n", a.per_image ? "mean," : "", metrics_csv_row(average(all)).c_str());
  return 0;
}

// ---- eval-pose -----------------------------------------------------------

struct EvalPoseArgs {
  std::string checkpoint, data;
  std::int64_t width = 640, height = 192;
};

int run_eval_pose(const EvalPoseArgs& a) {
  const auto meta = read_checkpoint_meta(a.checkpoint);
  if (!meta.has_pose) throw CheckpointError(a.checkpoint + ": no pose network stored");
  const auto ds = SequenceDataset::open(a.data);
  if (!ds.has_poses()) throw IoError(a.data + ": no poses.txt");
  if (ds.size() < 5) throw ConfigError(a.data + ": need at least 5 frames");
  Rng rng(0);
  DepthNet<float> depth(meta.depth, rng);
  PoseNet<float> pose(meta.pose, rng);
  load_checkpoint<float>(a.checkpoint, depth, &pose);

  // Camera i+1 in camera i for every consecutive pair.
  std::vector<RigidTransform> steps;
  std::vector<Tensor<float>> frames;
  for (std::size_t i = 0; i < ds.size(); ++i) frames.push_back(normalize(ds.frame(i, a.height, a.width)));
  for (std::size_t i = 0; i + 1 < ds.size(); ++i) {
    const auto p = pose.forward(frames[i], frames[i + 1], nullptr, false);
    steps.push_back(next_camera_in_current(pose_from_row(p, 0)));
  }
  std::vector<double> errors;
  for (std::size_t s = 0; s + 5 <= ds.size(); ++s) {
    std::vector<RigidTransform> pred(steps.begin() + static_cast<std::ptrdiff_t>(s),
                                     steps.begin() + static_cast<std::ptrdiff_t>(s + 4));
    std::vector<RigidTransform> gt(ds.poses().begin() + static_cast<std::ptrdiff_t>(s),
                                   ds.poses().begin() + static_cast<std::ptrdiff_t>(s + 5));
    errors.push_back(ate_5frame(pred, gt));
  }
  std::printf("ATE over %zu snippets: %s\n", errors.size(), format_mean_std(mean_std(errors)).c_str());
  return 0;
}

// ---- profile -------------------------------------------------------------

struct ProfileArgs {
  std::vector<std::string> variants{"original"}, resolutions{"F"};
  std::int64_t width = 640, height = 192;
  bool no_share = false, std_conv = false, csv = false;
  std::string breakdown;
};

int run_profile(const ProfileArgs& a) {
  auto expand = [](const std::vector<std::string>& xs, const std::vector<std::string>& all) {
    return xs.size() == 1 && xs[0] == "all" ? all : xs;
  };
  std::vector<DepthNetConfig> cfgs;
  for (const auto& v : expand(a.variants, {"original", "medium", "small"})) {
    for (const auto& r : expand(a.resolutions, {"F", "H", "Q", "E"})) {
      cfgs.push_back(depth_config(v, r, a.no_share, a.std_conv));
      cfgs.back().validate_input(a.height, a.width);
    }
  }
  std::vector<ProfileReport> reports;
  for (const auto& c : cfgs) reports.push_back(profile(c, a.height, a.width));
  std::fputs((a.csv ? profile_table_csv(reports) : profile_table_text(reports)).c_str(), stdout);
  if (!a.breakdown.empty()) {
    std::ofstream out(a.breakdown);
    if (!out) throw IoError("cannot write " + a.breakdown);
    out << breakdown_csv(reports.front());
  }
  return 0;
}

// ---- synth-data ----------------------------------------------------------

struct SynthArgs {
  std::string out, scene = "two-plane";
  std::int64_t width = 128, height = 64;
  int frames = 48;
  double speed = 0.15;
};

int run_synth(const SynthArgs& a, const Common& common) {
  SynthSceneConfig sc;
  sc.width = a.width;
  sc.height = a.height;
  sc.num_frames = a.frames;
  sc.lateral_speed = a.speed;
  sc.seed = common.seed;
  if (a.scene == "two-plane") sc.scene = SceneKind::TwoPlane;
  else if (a.scene == "wall") sc.scene = SceneKind::FrontoParallel;
  else throw ConfigError("unknown scene '" + a.scene + "' (two-plane or wall)");
  sc.validate();
  write_sequence(a.out, generate_synthetic_sequence(sc));
  std::printf("wrote %d frames to %s\n", a.frames, a.out.c_str());
  return 0;
}

// ---- gradcheck -----------------------------------------------------------

struct GradArgs {
  bool skip_e2e = false;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradArgs& a, const Common& common) {
  GradCheckConfig cfg;
  cfg.tolerance = a.tolerance;
  cfg.include_end_to_end = !a.skip_e2e;
  if (common.seed_set) cfg.seed = common.seed;
  int failed = 0;
  for (const auto& r : run_gradcheck_suite(cfg)) {
    std::printf("%-40s %s  max rel %.3e  (%lld probes)\n", r.name.c_str(), r.passed ? "ok  " : "FAIL", r.max_rel_error,
                static_cast<long long>(r.probes));
    failed += !r.passed;
  }
  std::printf("%s\n", failed ? "gradcheck FAILED" : "gradcheck passed");
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight self-supervised monocular depth: training, inference, evaluation, profiling"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option_function<std::uint64_t>(
      "--seed",
      [&](const std::uint64_t& s) {
        common.seed = s;
        common.seed_set = true;
      },
      "Random seed")->expected(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train depth and pose networks");
  train->add_option("--data", ta.data, "SequenceDataset directory");
  train->add_flag("--synthetic", ta.synthetic, "Train on a generated two-plane scene");
  train->add_option("--frames", ta.frames, "Synthetic sequence length")->check(CLI::PositiveNumber);
  train->add_option("--out", ta.out, "Output directory for checkpoints and loss.csv");
  train->add_option("--config", ta.config, "Training settings (JSON or key = value)")->check(CLI::ExistingFile);
  train->add_option("--variant", ta.variant, "original, medium or small");
  train->add_option("--out-res", ta.res, "F, H, Q or E");
  train->add_flag("--no-share", ta.no_share, "Separate weights per recurrent iteration");
  train->add_flag("--std-conv", ta.std_conv, "Standard 3x3 convolutions in the decoder");
  train->add_option("--width", ta.width, "Input width");
  train->add_option("--height", ta.height, "Input height");
  train->add_option("--pose-width", ta.pose_width, "PoseNet width multiplier")->check(CLI::PositiveNumber);
  train->add_option("--batch", ta.batch, "Batch size");
  train->add_option("--epochs", ta.epochs, "Epochs");
  train->add_option("--max-steps", ta.max_steps, "Stop after this many optimizer steps");
  train->add_option("--lr", ta.lr, "Initial learning rate");
  train->add_flag("--no-augment", ta.no_augment, "Disable flips and colour jitter");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Write disparity maps for images");
  infer->add_option("--checkpoint", ia.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", ia.input, "Image file or directory of .ppm/.pgm")->required();
  infer->add_option("--out", ia.out, "Output directory");
  infer->add_option("--width", ia.width, "Network input width");
  infer->add_option("--height", ia.height, "Network input height");

  EvalDepthArgs ea;
  auto* eval_depth = app.add_subcommand("eval-depth", "Depth metrics over tensor files");
  eval_depth->add_option("--pred", ea.pred, "Predicted depth tensor file or directory")->required();
  eval_depth->add_option("--gt", ea.gt, "Ground-truth depth tensor file or directory")->required();
  eval_depth->add_option("--cap-min", ea.cap_min, "Lower depth cap");
  eval_depth->add_option("--cap-max", ea.cap_max, "Upper depth cap (80 or 50)");
  eval_depth->add_flag("--no-median-scaling", ea.no_median, "Compare raw predictions");
  eval_depth->add_flag("--per-image", ea.per_image, "Also print one row per file");

  EvalPoseArgs pa;
  auto* eval_pose = app.add_subcommand("eval-pose", "5-frame ATE of the pose network on a sequence");
  eval_pose->add_option("--checkpoint", pa.checkpoint, "Checkpoint with a pose network")->required()->check(
      CLI::ExistingFile);
  eval_pose->add_option("--data", pa.data, "SequenceDataset directory with poses.txt")->required();
  eval_pose->add_option("--width", pa.width, "Network input width");
  eval_pose->add_option("--height", pa.height, "Network input height");

  ProfileArgs pr;
  auto* prof = app.add_subcommand("profile", "Parameter, size and FLOP table");
  prof->add_option("--variant", pr.variants, "original, medium, small or all");
  prof->add_option("--out-res", pr.resolutions, "F, H, Q, E or all");
  prof->add_option("--width", pr.width, "Input width");
  prof->add_option("--height", pr.height, "Input height");
  prof->add_flag("--no-share", pr.no_share, "Separate weights per recurrent iteration");
  prof->add_flag("--std-conv", pr.std_conv, "Standard 3x3 convolutions in the decoder");
  prof->add_flag("--csv", pr.csv, "Comma-separated output");
  prof->add_option("--breakdown", pr.breakdown, "Write the per-layer table of the first configuration here");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic SequenceDataset");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--width", sa.width, "Frame width");
  synth->add_option("--height", sa.height, "Frame height");
  synth->add_option("--frames", sa.frames, "Number of frames")->check(CLI::PositiveNumber);
  synth->add_option("--scene", sa.scene, "two-plane or wall");
  synth->add_option("--speed", sa.speed, "Mean sideways motion per frame");

  GradArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable piece");
  grad->add_flag("--skip-end-to-end", ga.skip_e2e, "Leave out the slow full-objective case");
  grad->add_option("--tolerance", ga.tolerance, "Largest accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    check_thread_env();
    if (*train) return run_train(ta, common);
    if (*infer) return run_infer(ia);
    if (*eval_depth) return run_eval_depth(ea);
    if (*eval_pose) return run_eval_pose(pa);
    if (*prof) return run_profile(pr);
    if (*synth) return run_synth(sa, common);
    if (*grad) return run_gradcheck(ga, common);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
