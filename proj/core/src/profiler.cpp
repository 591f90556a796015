#include "mininet/profiler.hpp"

#include <cstdio>
#include <sstream>

namespace mininet {

template <typename T>
std::int64_t count_params(DepthNet<T>& net, std::vector<ParamRecord>* breakdown) {
  std::int64_t total = 0;
  for (const auto& p : net.parameters()) {
    if (!p.trainable) continue;
    total += p.tensor->size();
    if (breakdown) breakdown->push_back({p.name, p.tensor->size()});
  }
  return total;
}

template std::int64_t count_params(DepthNet<float>&, std::vector<ParamRecord>*);
template std::int64_t count_params(DepthNet<double>&, std::vector<ParamRecord>*);

namespace {

class Counter {
 public:
  explicit Counter(std::int64_t n) : n_(n) {}

  void conv(const std::string& name, std::int64_t in, std::int64_t out, int k, int groups, int stride,
            std::int64_t& h, std::int64_t& w) {
    const std::int64_t oh = conv_out_size(h, k, stride, k / 2), ow = conv_out_size(w, k, stride, k / 2);
    const std::int64_t outputs = n_ * out * oh * ow;
    LayerRecord r{name, "conv", Conv2d<float>::param_count(in, out, k, groups, true),
                  outputs * (in / groups) * k * k, outputs, {n_, out, oh, ow}};
    push(std::move(r));
    h = oh;
    w = ow;
  }

  void fc(const std::string& name, std::int64_t in, std::int64_t out) {
    push({name, "fc", in * out + out, n_ * in * out, n_ * out, {n_, out}});
  }

  void elementwise(const std::string& name, Shape s) { push({name, "elementwise", 0, 0, numel(s), std::move(s)}); }
  void pool(const std::string& name, Shape s) { push({name, "pool", 0, 0, numel(s), std::move(s)}); }
  void resample(const std::string& name, Shape s) { push({name, "resample", 0, 0, numel(s), std::move(s)}); }

  std::int64_t n() const { return n_; }
  std::size_t size() const { return out_.breakdown.size(); }
  /// Shared weights: records from `first` on carry no parameters of their own.
  void drop_params_from(std::size_t first) {
    for (std::size_t i = first; i < out_.breakdown.size(); ++i) out_.breakdown[i].params = 0;
  }
  FlopCount take() { return std::move(out_); }

 private:
  void push(LayerRecord r) {
    out_.macs += r.macs;
    out_.other_flops += r.other_flops;
    out_.breakdown.push_back(std::move(r));
  }

  std::int64_t n_;
  FlopCount out_;
};

void count_ds(Counter& c, const std::string& name, const ResidualDSConvConfig& cfg, std::int64_t h, std::int64_t w) {
  std::int64_t hh = h, ww = w;
  if (cfg.lightweight) {
    c.conv(name + ".dw", cfg.in_channels, cfg.in_channels, 3, static_cast<int>(cfg.in_channels), 1, hh, ww);
    c.conv(name + ".pw", cfg.in_channels, cfg.out_channels, 1, 1, 1, hh, ww);
  } else {
    c.conv(name + ".conv", cfg.in_channels, cfg.out_channels, 3, 1, 1, hh, ww);
  }
  const Shape s{c.n(), cfg.out_channels, h, w};
  if (!cfg.head) c.elementwise(name + ".relu", s);
  if (cfg.has_shortcut()) c.elementwise(name + ".add", s);
}

}  // namespace

FlopCount count_flops(const DepthNetConfig& cfg, std::int64_t input_h, std::int64_t input_w) {
  cfg.validate();
  cfg.validate_input(input_h, input_w);
  Counter c(1);
  const auto ch = cfg.base_channels;
  std::int64_t h = input_h, w = input_w;
  c.conv("depth.conv1", 3, ch, 3, 1, 2, h, w);
  c.elementwise("depth.conv1.relu", {1, ch, h, w});
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto blocks = cfg.module_blocks();
    const std::size_t first_record = c.size();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& bc = blocks[b];
      const std::string name = "depth.module.iter" + std::to_string(it) + ".block" + std::to_string(b);
      const auto hid = bc.hidden();
      std::int64_t hh = h, ww = w;
      c.conv(name + ".expand", bc.channels, hid, 1, 1, 1, hh, ww);
      c.elementwise(name + ".expand.relu6", {1, hid, hh, ww});
      c.conv(name + ".dw", hid, hid, 3, static_cast<int>(hid), bc.stride, hh, ww);
      c.elementwise(name + ".dw.relu6", {1, hid, hh, ww});
      c.pool(name + ".se.pool", {1, hid});
      c.fc(name + ".se.fc1", hid, bc.se().hidden());
      c.elementwise(name + ".se.relu", {1, bc.se().hidden()});
      c.fc(name + ".se.fc2", bc.se().hidden(), hid);
      c.elementwise(name + ".se.sigmoid", {1, hid});
      c.elementwise(name + ".se.scale", {1, hid, hh, ww});
      c.conv(name + ".project", hid, bc.channels, 1, 1, 1, hh, ww);
      if (bc.has_shortcut()) c.elementwise(name + ".add", {1, bc.channels, hh, ww});
      h = hh;
      w = ww;
    }
    if (cfg.share_recurrent_weights && it > 0) c.drop_params_from(first_record);
  }
  const auto dec = cfg.decoder_blocks();
  for (std::size_t k = 0; k < dec.size(); ++k) {
    const auto& d = dec[k];
    const std::string name = "depth.up" + std::to_string(k);
    count_ds(c, name + ".ds1", d.first(), h, w);
    h *= 2;
    w *= 2;
    c.resample(name + ".upsample", {1, ch, h, w});
    count_ds(c, name + ".ds2", d.second(), h, w);
    if (d.emits_disparity) {
      count_ds(c, name + ".head", d.head(), h, w);
      c.elementwise(name + ".sigmoid", {1, 1, h, w});
      if (h != input_h || w != input_w) c.resample(name + ".resize", {1, 1, input_h, input_w});
    }
  }
  return c.take();
}

std::string config_label(const DepthNetConfig& cfg) {
  std::string s = to_string(cfg.variant) + "-" + to_string(cfg.output_res);
  if (!cfg.share_recurrent_weights) s += "-noshare";
  if (!cfg.lightweight_decoder) s += "-stdconv";
  return s;
}

ProfileReport profile(const DepthNetConfig& cfg, std::int64_t input_h, std::int64_t input_w) {
  Rng rng(0);
  DepthNet<float> net(cfg, rng);
  ProfileReport r;
  r.label = config_label(cfg);
  r.input_h = input_h;
  r.input_w = input_w;
  r.params = count_params(net, &r.param_breakdown);
  r.model_size_bytes = model_size_bytes(r.params);
  r.flops = count_flops(cfg, input_h, input_w);
  return r;
}

namespace {

struct Row {
  std::string label, params, params_m, mb, gflops, gflops_1mac;
};

std::vector<Row> rows(const std::vector<ProfileReport>& reports) {
  std::vector<Row> out{{"config", "params", "params_M", "size_MB", "gflops_2mac", "gflops_1mac"}};
  char buf[64];
  for (const auto& r : reports) {
    Row row;
    row.label = r.label + "@" + std::to_string(r.input_w) + "x" + std::to_string(r.input_h);
    row.params = std::to_string(r.params);
    std::snprintf(buf, sizeof buf, "%.3f", static_cast<double>(r.params) / 1e6);
    row.params_m = buf;
    std::snprintf(buf, sizeof buf, "%.3f", r.model_size_mb());
    row.mb = buf;
    std::snprintf(buf, sizeof buf, "%.3f", r.gflops());
    row.gflops = buf;
    std::snprintf(buf, sizeof buf, "%.3f", r.gflops_1mac());
    row.gflops_1mac = buf;
    out.push_back(row);
  }
  return out;
}

}  // namespace

std::string profile_table_csv(const std::vector<ProfileReport>& reports) {
  std::ostringstream os;
  for (const auto& r : rows(reports)) {
    os << r.label << ',' << r.params << ',' << r.params_m << ',' << r.mb << ',' << r.gflops << ',' << r.gflops_1mac
       << '\n';
  }
  return os.str();
}

std::string profile_table_text(const std::vector<ProfileReport>& reports) {
  const auto rs = rows(reports);
  std::size_t width[6] = {};
  for (const auto& r : rs) {
    const std::string* cells[6] = {&r.label, &r.params, &r.params_m, &r.mb, &r.gflops, &r.gflops_1mac};
    for (int i = 0; i < 6; ++i) width[i] = std::max(width[i], cells[i]->size());
  }
  std::ostringstream os;
  for (const auto& r : rs) {
    const std::string* cells[6] = {&r.label, &r.params, &r.params_m, &r.mb, &r.gflops, &r.gflops_1mac};
    for (int i = 0; i < 6; ++i) {
      if (i == 0) {
        os << *cells[i] << std::string(width[i] - cells[i]->size(), ' ');
      } else {
        os << "  " << std::string(width[i] - cells[i]->size(), ' ') << *cells[i];
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string breakdown_csv(const ProfileReport& report) {
  std::ostringstream os;
  os << "layer,kind,params,macs,flops\n";
  for (const auto& l : report.flops.breakdown) {
    os << l.name << ',' << l.kind << ',' << l.params << ',' << l.macs << ',' << l.flops() << '\n';
  }
  return os.str();
}

}  // namespace mininet
