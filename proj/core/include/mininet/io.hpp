#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mininet/depthnet.hpp"
#include "mininet/geometry.hpp"
#include "mininet/posenet.hpp"
#include "mininet/synthetic.hpp"
#include "mininet/trainer.hpp"

namespace mininet {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

/// One named array inside a checkpoint; payload is little-endian.
struct Record {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::vector<std::uint8_t> payload;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "MININETW", u32 version, u32 record count, the records, then a CRC-32 of
/// everything before it.
void write_records(const std::string& path, const std::vector<Record>& records);
/// Verifies magic, checksum and version before parsing.
std::vector<Record> read_records(const std::string& path);

struct CheckpointMeta {
  DepthNetConfig depth;
  bool has_pose = false;
  PoseNetConfig pose;
  std::int64_t step = 0;
};

template <typename T>
void save_checkpoint(const std::string& path, DepthNet<T>& depth, PoseNet<T>* pose, std::int64_t step = 0);

/// Restores every tensor bit-exactly. Any record that is unknown to the
/// target networks or has a different shape raises CheckpointError naming
/// it; so do missing tensors and a differing stored configuration.
template <typename T>
void load_checkpoint(const std::string& path, DepthNet<T>& depth, PoseNet<T>* pose);

CheckpointMeta read_checkpoint_meta(const std::string& path);

/// "MINITNSR", u8 dtype, u32 rank, u64 dims, little-endian payload.
template <typename T>
void write_tensor_file(const std::string& path, const Tensor<T>& t);
/// Reads F32 or F64 payloads, converting to T.
template <typename T>
Tensor<T> read_tensor_file(const std::string& path);

/// 8-bit binary PPM (P6) or PGM (P5) as a 3 x H x W tensor in [0, 1];
/// grey images are replicated to three channels.
Tensor<float> load_image(const std::string& path);
/// Writes a 3 x H x W (or 1 x 3 x H x W) tensor as P6, rounding value * 255.
void save_image(const std::string& path, const Tensor<float>& image);
/// 16-bit binary PGM of a single-channel map in [0, 1], rounding half up.
void save_gray16(const std::string& path, const Tensor<float>& map);
std::vector<std::uint16_t> read_gray16(const std::string& path, std::int64_t* height, std::int64_t* width);

/// Writes `<base>.tensor` with exact values and `<base>.pgm` for viewing.
void save_disparity(const std::string& base, const Tensor<float>& disparity);

/// Directory layout: frames 000000.ppm, 000001.ppm, ...; intrinsics.txt;
/// optional depth/000000.tensor, ...; optional poses.txt (12 numbers per
/// line, row-major 3 x 4 camera-to-world).
class SequenceDataset {
 public:
  static SequenceDataset open(const std::string& dir);

  std::size_t size() const { return frames_.size(); }
  const CameraFile& camera() const { return camera_; }
  bool has_depth() const { return !depths_.empty(); }
  bool has_poses() const { return !poses_.empty(); }
  const std::vector<RigidTransform>& poses() const { return poses_; }

  /// Frame i as 1 x 3 x h x w, bilinearly resized when needed.
  Tensor<float> frame(std::size_t i, std::int64_t h, std::int64_t w) const;
  Tensor<float> depth(std::size_t i) const;
  Intrinsics intrinsics(std::int64_t h, std::int64_t w) const;
  Triplet<float> triplet(std::size_t center, std::int64_t h, std::int64_t w) const;

 private:
  std::string dir_;
  CameraFile camera_;
  std::vector<std::string> frames_;
  std::vector<std::string> depths_;
  std::vector<RigidTransform> poses_;
};

/// Materialises a synthetic sequence in the SequenceDataset layout.
void write_sequence(const std::string& dir, const SynthSequence& seq);

std::vector<RigidTransform> read_poses(const std::string& path);
void write_poses(const std::string& path, const std::vector<RigidTransform>& poses);

}  // namespace mininet
