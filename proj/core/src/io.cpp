#include "mininet/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <regex>
#include <sstream>

#include "json.hpp"
#include "mininet/ops.hpp"

namespace mininet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'I', 'N', 'I', 'N', 'E', 'T', 'W'};
constexpr char kTensorMagic[8] = {'M', 'I', 'N', 'I', 'T', 'N', 'S', 'R'};
const char* const kMetaRecord = "__meta__";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n, std::string what) : p_(p), n_(n), what_(std::move(what)) {}
  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(p_ + pos_, p_ + pos_ + n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (k > n_ - pos_) throw CheckpointError(what_ + ": unexpected end of data");
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::string& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path);
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  throw CheckpointError("unknown dtype tag " + std::to_string(static_cast<int>(d)));
}

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::F32 : DType::F64;
}

template <typename T>
std::vector<std::uint8_t> encode(const Tensor<T>& t) {
  Writer w;
  for (T v : t.data()) {
    if constexpr (sizeof(T) == 4) {
      w.le(std::bit_cast<std::uint32_t>(v));
    } else {
      w.le(std::bit_cast<std::uint64_t>(v));
    }
  }
  return w.data();
}

template <typename T>
std::vector<T> decode(DType d, const std::vector<std::uint8_t>& payload, const std::string& what) {
  Reader r(payload.data(), payload.size(), what);
  const std::size_t n = payload.size() / dtype_size(d);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (d) {
      case DType::F32: out[i] = static_cast<T>(std::bit_cast<float>(r.le<std::uint32_t>())); break;
      case DType::F64: out[i] = static_cast<T>(std::bit_cast<double>(r.le<std::uint64_t>())); break;
      case DType::U8: out[i] = static_cast<T>(r.le<std::uint8_t>()); break;
    }
  }
  return out;
}

json to_json(const DepthNetConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"output_res", to_string(c.output_res)},
          {"base_channels", c.base_channels},
          {"iterations", c.iterations},
          {"share_recurrent_weights", c.share_recurrent_weights},
          {"lightweight_decoder", c.lightweight_decoder},
          {"se_reduction", c.se_reduction}};
}

DepthNetConfig depth_from_json(const json& j) {
  DepthNetConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.output_res = parse_output_res(j.at("output_res").get<std::string>());
  c.base_channels = j.at("base_channels").get<std::int64_t>();
  c.iterations = j.at("iterations").get<int>();
  c.share_recurrent_weights = j.at("share_recurrent_weights").get<bool>();
  c.lightweight_decoder = j.at("lightweight_decoder").get<bool>();
  c.se_reduction = j.at("se_reduction").get<int>();
  return c;
}

std::string ppm_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  throw IoError("truncated image header");
}

}  // namespace

void write_records(const std::string& path, const std::vector<Record>& records) {
  Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint32_t>(records.size()));
  std::vector<std::string> seen;
  for (const auto& r : records) {
    if (std::find(seen.begin(), seen.end(), r.name) != seen.end()) {
      throw CheckpointError("duplicate record name '" + r.name + "'");
    }
    seen.push_back(r.name);
    if (r.payload.size() != static_cast<std::size_t>(numel(r.shape)) * dtype_size(r.dtype)) {
      throw CheckpointError("record '" + r.name + "' payload does not match its shape");
    }
    w.le(static_cast<std::uint32_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    w.le(static_cast<std::uint8_t>(r.dtype));
    w.le(static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) w.le(static_cast<std::uint64_t>(d));
    w.le(static_cast<std::uint64_t>(r.payload.size()));
    w.bytes(r.payload.data(), r.payload.size());
  }
  auto data = w.data();
  const auto crc = static_cast<std::uint32_t>(crc32(0L, data.data(), static_cast<uInt>(data.size())));
  for (int i = 0; i < 4; ++i) data.push_back(static_cast<std::uint8_t>((crc >> (8 * i)) & 0xFF));
  spill(path, data);
}

std::vector<Record> read_records(const std::string& path) {
  const auto data = slurp(path);
  if (data.size() < 20 || std::memcmp(data.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError(path + ": not a checkpoint (bad magic or truncated header)");
  }
  const std::size_t body = data.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(data[body + static_cast<std::size_t>(i)]) << (8 * i);
  const auto actual = static_cast<std::uint32_t>(crc32(0L, data.data(), static_cast<uInt>(body)));
  if (stored != actual) throw CheckpointError(path + ": checksum mismatch (file corrupt or truncated)");
  Reader r(data.data() + 8, body - 8, path);
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>();
  std::vector<Record> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    const auto name_len = r.le<std::uint32_t>();
    const auto name = r.bytes(name_len);
    rec.name.assign(name.begin(), name.end());
    rec.dtype = static_cast<DType>(r.le<std::uint8_t>());
    const auto rank = r.le<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) rec.shape.push_back(static_cast<std::int64_t>(r.le<std::uint64_t>()));
    const auto bytes = r.le<std::uint64_t>();
    if (bytes != static_cast<std::uint64_t>(numel(rec.shape)) * dtype_size(rec.dtype)) {
      throw CheckpointError(path + ": record '" + rec.name + "' payload does not match its shape");
    }
    rec.payload = r.bytes(static_cast<std::size_t>(bytes));
    out.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw CheckpointError(path + ": trailing bytes after the last record");
  return out;
}

template <typename T>
void save_checkpoint(const std::string& path, DepthNet<T>& depth, PoseNet<T>* pose, std::int64_t step) {
  std::vector<Record> records;
  json meta = {{"depth", to_json(depth.config())}, {"step", step}, {"has_pose", pose != nullptr}};
  if (pose) {
    meta["pose"] = {{"width_multiplier", pose->config().width_multiplier},
                    {"output_scale", pose->config().output_scale}};
  }
  const auto text = meta.dump();
  records.push_back({kMetaRecord, DType::U8, {static_cast<std::int64_t>(text.size())},
                     std::vector<std::uint8_t>(text.begin(), text.end())});
  auto add = [&](const ParamList<T>& ps) {
    for (const auto& p : ps) records.push_back({p.name, dtype_of<T>(), p.tensor->shape(), encode(*p.tensor)});
  };
  add(depth.parameters());
  if (pose) add(pose->parameters());
  write_records(path, records);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  for (const auto& r : read_records(path)) {
    if (r.name != kMetaRecord) continue;
    try {
      const auto j = json::parse(std::string(r.payload.begin(), r.payload.end()));
      CheckpointMeta m;
      m.depth = depth_from_json(j.at("depth"));
      m.step = j.value("step", std::int64_t{0});
      m.has_pose = j.value("has_pose", false);
      if (m.has_pose) {
        m.pose.width_multiplier = j.at("pose").at("width_multiplier").get<double>();
        m.pose.output_scale = j.at("pose").at("output_scale").get<double>();
      }
      return m;
    } catch (const json::exception& e) {
      throw CheckpointError(path + ": malformed " + kMetaRecord + " record: " + e.what());
    } catch (const ConfigError& e) {
      throw CheckpointError(path + ": malformed " + kMetaRecord + " record: " + e.what());
    }
  }
  throw CheckpointError(path + ": missing " + std::string(kMetaRecord) + " record");
}

template <typename T>
void load_checkpoint(const std::string& path, DepthNet<T>& depth, PoseNet<T>* pose) {
  const auto records = read_records(path);
  std::map<std::string, Tensor<T>*> targets;
  for (auto& p : depth.parameters()) targets[p.name] = p.tensor;
  if (pose) {
    for (auto& p : pose->parameters()) targets[p.name] = p.tensor;
  }
  // Validate everything before touching any tensor.
  std::map<std::string, const Record*> matched;
  for (const auto& r : records) {
    if (r.name == kMetaRecord) continue;
    auto it = targets.find(r.name);
    if (it == targets.end()) {
      if (!pose && r.name.rfind("pose.", 0) == 0) continue;
      throw CheckpointError(path + ": record '" + r.name + "' " + to_string(r.shape) +
                            " does not exist in the target network (shape mismatch)");
    }
    if (it->second->shape() != r.shape) {
      throw CheckpointError(path + ": record '" + r.name + "' has shape " + to_string(r.shape) + ", expected " +
                            to_string(it->second->shape()));
    }
    if (r.dtype != DType::F32 && r.dtype != DType::F64) {
      throw CheckpointError(path + ": record '" + r.name + "' has a non-floating dtype");
    }
    matched[r.name] = &r;
  }
  for (const auto& [name, tensor] : targets) {
    if (!matched.count(name)) throw CheckpointError(path + ": record '" + name + "' missing from checkpoint");
  }
  const auto meta = read_checkpoint_meta(path);
  if (!(meta.depth == depth.config())) {
    throw CheckpointError(path + ": stored depth configuration " + to_string(meta.depth.variant) + "/" +
                          to_string(meta.depth.output_res) + " differs from the target " +
                          to_string(depth.config().variant) + "/" + to_string(depth.config().output_res));
  }
  for (const auto& [name, rec] : matched) {
    auto values = decode<T>(rec->dtype, rec->payload, path + ":" + name);
    auto dst = targets[name]->mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

template <typename T>
void write_tensor_file(const std::string& path, const Tensor<T>& t) {
  Writer w;
  w.bytes(kTensorMagic, 8);
  w.le(static_cast<std::uint8_t>(dtype_of<T>()));
  w.le(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.le(static_cast<std::uint64_t>(d));
  const auto payload = encode(t);
  w.bytes(payload.data(), payload.size());
  spill(path, w.data());
}

template <typename T>
Tensor<T> read_tensor_file(const std::string& path) {
  const auto data = slurp(path);
  if (data.size() < 13 || std::memcmp(data.data(), kTensorMagic, 8) != 0) {
    throw IoError(path + ": not a tensor file");
  }
  try {
    Reader r(data.data() + 8, data.size() - 8, path);
    const auto dtype = static_cast<DType>(r.le<std::uint8_t>());
    if (dtype != DType::F32 && dtype != DType::F64) throw IoError(path + ": unsupported tensor dtype");
    const auto rank = r.le<std::uint32_t>();
    Shape s;
    for (std::uint32_t i = 0; i < rank; ++i) s.push_back(static_cast<std::int64_t>(r.le<std::uint64_t>()));
    const std::size_t bytes = static_cast<std::size_t>(numel(s)) * dtype_size(dtype);
    if (r.remaining() != bytes) throw IoError(path + ": payload length does not match shape " + to_string(s));
    return Tensor<T>(s, decode<T>(dtype, r.bytes(bytes), path));
  } catch (const CheckpointError& e) {
    throw IoError(e.what());
  }
}

#define MININET_INSTANTIATE_IO(T)                                                              \
  template void save_checkpoint(const std::string&, DepthNet<T>&, PoseNet<T>*, std::int64_t); \
  template void load_checkpoint(const std::string&, DepthNet<T>&, PoseNet<T>*);               \
  template void write_tensor_file(const std::string&, const Tensor<T>&);                      \
  template Tensor<T> read_tensor_file(const std::string&);

MININET_INSTANTIATE_IO(float)
MININET_INSTANTIATE_IO(double)

Tensor<float> load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  const std::string magic = ppm_token(in);
  if (magic != "P6" && magic != "P5") throw IoError(path + ": only binary PPM (P6) and PGM (P5) are supported");
  std::int64_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoll(ppm_token(in));
    h = std::stoll(ppm_token(in));
    maxval = std::stoll(ppm_token(in));
  } catch (const std::logic_error&) {
    throw IoError(path + ": malformed image header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError(path + ": expected an 8-bit image with positive size");
  in.get();
  const std::int64_t channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path + ": truncated pixel data");
  Tensor<float> out({3, h, w});
  auto d = out.mutable_data();
  for (std::int64_t i = 0; i < h * w; ++i) {
    for (std::int64_t c = 0; c < 3; ++c) {
      const auto v = raw[static_cast<std::size_t>(i * channels + (channels == 3 ? c : 0))];
      d[c * h * w + i] = static_cast<float>(v) / 255.0f;
    }
  }
  return out;
}

void save_image(const std::string& path, const Tensor<float>& image) {
  Tensor<float> img = image;
  if (img.rank() == 4 && img.dim(0) == 1) img = img.reshaped({img.dim(1), img.dim(2), img.dim(3)});
  if (img.rank() != 3 || img.dim(0) != 3) throw InvalidShape("save_image expects 3 x H x W, got " + to_string(image.shape()));
  const std::int64_t h = img.dim(1), w = img.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t i = 0; i < h * w; ++i) {
    for (std::int64_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(img[c * h * w + i]), 0.0, 1.0);
      raw[static_cast<std::size_t>(i * 3 + c)] = static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write to " + path);
}

void save_gray16(const std::string& path, const Tensor<float>& map) {
  if (map.rank() < 2) throw InvalidShape("save_gray16 expects a map, got " + to_string(map.shape()));
  const auto r = static_cast<std::size_t>(map.rank());
  const std::int64_t h = map.dim(r - 2), w = map.dim(r - 1);
  if (map.size() != h * w) throw InvalidShape("save_gray16 expects a single channel, got " + to_string(map.shape()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path);
  out << "P5\n" << w << ' ' << h << "\n65535\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(2 * h * w));
  for (std::int64_t i = 0; i < h * w; ++i) {
    const double v = std::clamp(static_cast<double>(map[i]), 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::floor(v * 65535.0 + 0.5));
    // PGM stores 16-bit samples most significant byte first.
    raw[static_cast<std::size_t>(2 * i)] = static_cast<unsigned char>(q >> 8);
    raw[static_cast<std::size_t>(2 * i + 1)] = static_cast<unsigned char>(q & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write to " + path);
}

std::vector<std::uint16_t> read_gray16(const std::string& path, std::int64_t* height, std::int64_t* width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  if (ppm_token(in) != "P5") throw IoError(path + ": not a binary PGM");
  std::int64_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoll(ppm_token(in));
    h = std::stoll(ppm_token(in));
    maxval = std::stoll(ppm_token(in));
  } catch (const std::logic_error&) {
    throw IoError(path + ": malformed image header");
  }
  if (maxval != 65535 || w <= 0 || h <= 0) throw IoError(path + ": expected a 16-bit PGM");
  in.get();
  std::vector<unsigned char> raw(static_cast<std::size_t>(2 * w * h));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path + ": truncated pixel data");
  std::vector<std::uint16_t> out(static_cast<std::size_t>(w * h));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  if (height) *height = h;
  if (width) *width = w;
  return out;
}

void save_disparity(const std::string& base, const Tensor<float>& disparity) {
  write_tensor_file(base + ".tensor", disparity);
  save_gray16(base + ".pgm", disparity);
}

std::vector<RigidTransform> read_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file " + path);
  std::vector<RigidTransform> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    RigidTransform t;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (!(ls >> t.m[i][j])) throw IoError(path + ":" + std::to_string(lineno) + ": expected 12 numbers");
      }
    }
    out.push_back(t);
  }
  return out;
}

void write_poses(const std::string& path, const std::vector<RigidTransform>& poses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose file " + path);
  out << std::setprecision(17);
  for (const auto& p : poses) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) out << p.m[i][j] << ((i == 2 && j == 3) ? '\n' : ' ');
    }
  }
}

SequenceDataset SequenceDataset::open(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir + " does not exist");
  SequenceDataset ds;
  ds.dir_ = dir;
  ds.camera_ = read_intrinsics((fs::path(dir) / "intrinsics.txt").string());
  const std::regex frame_re(R"((\d{6})\.ppm)");
  std::map<long, std::string> frames;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, frame_re)) frames[std::stol(m[1].str())] = e.path().string();
  }
  if (frames.empty()) throw IoError(dir + ": no frames named NNNNNN.ppm");
  long expected = 0;
  for (const auto& [idx, path] : frames) {
    if (idx != expected) throw IoError(dir + ": frame numbering is not contiguous at " + std::to_string(expected));
    ds.frames_.push_back(path);
    ++expected;
  }
  const auto depth_dir = fs::path(dir) / "depth";
  if (fs::is_directory(depth_dir)) {
    for (std::size_t i = 0; i < ds.frames_.size(); ++i) {
      std::ostringstream name;
      name << std::setw(6) << std::setfill('0') << i << ".tensor";
      const auto p = depth_dir / name.str();
      if (!fs::exists(p)) throw IoError(dir + ": missing ground-truth depth " + p.string());
      ds.depths_.push_back(p.string());
    }
  }
  const auto poses = fs::path(dir) / "poses.txt";
  if (fs::exists(poses)) {
    ds.poses_ = read_poses(poses.string());
    if (ds.poses_.size() != ds.frames_.size()) {
      throw IoError(dir + ": poses.txt has " + std::to_string(ds.poses_.size()) + " entries for " +
                    std::to_string(ds.frames_.size()) + " frames");
    }
  }
  return ds;
}

Tensor<float> SequenceDataset::frame(std::size_t i, std::int64_t h, std::int64_t w) const {
  auto img = load_image(frames_.at(i));
  if (img.dim(1) != camera_.height || img.dim(2) != camera_.width) {
    throw IoError(frames_[i] + ": resolution differs from intrinsics.txt");
  }
  auto x = img.reshaped({1, 3, img.dim(1), img.dim(2)});
  if (x.dim(2) == h && x.dim(3) == w) return x;
  return bilinear_resize(x, h, w);
}

Tensor<float> SequenceDataset::depth(std::size_t i) const {
  if (depths_.empty()) throw IoError(dir_ + ": dataset has no ground-truth depth");
  return read_tensor_file<float>(depths_.at(i));
}

Intrinsics SequenceDataset::intrinsics(std::int64_t h, std::int64_t w) const {
  return camera_.k.resized(camera_.width, camera_.height, w, h);
}

Triplet<float> SequenceDataset::triplet(std::size_t center, std::int64_t h, std::int64_t w) const {
  if (center < 1 || center + 1 >= size()) throw ContractViolation("triplet center out of range");
  return {frame(center - 1, h, w), frame(center, h, w), frame(center + 1, h, w), intrinsics(h, w)};
}

void write_sequence(const std::string& dir, const SynthSequence& seq) {
  fs::create_directories(fs::path(dir) / "depth");
  write_intrinsics((fs::path(dir) / "intrinsics.txt").string(), seq.camera);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i;
    save_image((fs::path(dir) / (name.str() + ".ppm")).string(), seq.frames[i]);
    write_tensor_file((fs::path(dir) / "depth" / (name.str() + ".tensor")).string(), seq.depths[i]);
  }
  write_poses((fs::path(dir) / "poses.txt").string(), seq.poses);
}

}  // namespace mininet
