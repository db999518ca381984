#include "lmc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "lmc/binio.hpp"

namespace lmc {

namespace {
constexpr char kMagic[8] = {'P', 'N', 'L', 'C', '0', '0', '0', '1'};
}

void save_checkpoint(const std::string& path, const Network& net, const CheckpointMeta& meta) {
  ByteWriter w;
  w.raw(kMagic, 8);
  w.u32(net.arch == ArchKind::Mlp ? 0 : 1);
  w.u32(static_cast<uint32_t>(net.in_shape.c));
  w.u32(static_cast<uint32_t>(net.in_shape.h));
  w.u32(static_cast<uint32_t>(net.in_shape.w));
  w.u32(static_cast<uint32_t>(net.num_classes));
  w.u64(net.init_seed);
  w.u32(static_cast<uint32_t>(net.layers.size()));
  for (const Layer& l : net.layers) {
    w.u32(l.kind == LayerKind::Dense ? 0 : 1);
    w.u32(l.act == Activation::Relu ? 0 : 1);
    w.u32(l.bias.empty() ? 0 : 1);
    if (l.kind == LayerKind::Dense) {
      w.u32(static_cast<uint32_t>(l.out_units));
      w.u32(static_cast<uint32_t>(l.in_units));
      w.u32(static_cast<uint32_t>(l.in_block));
    } else {
      w.u32(static_cast<uint32_t>(l.out_ch));
      w.u32(static_cast<uint32_t>(l.in_ch));
      w.u32(static_cast<uint32_t>(l.kh));
      w.u32(static_cast<uint32_t>(l.kw));
      w.u32(static_cast<uint32_t>(l.stride));
      w.u32(static_cast<uint32_t>(l.pad));
      w.u32(static_cast<uint32_t>(l.in_spatial.c));
      w.u32(static_cast<uint32_t>(l.in_spatial.h));
      w.u32(static_cast<uint32_t>(l.in_spatial.w));
    }
    w.u32(static_cast<uint32_t>(l.weight.size()));
    for (float v : l.weight) w.f32(v);
    w.u32(static_cast<uint32_t>(l.bias.size()));
    for (float v : l.bias) w.f32(v);
  }

  w.u32(meta.has_train ? 1 : 0);
  if (meta.has_train) {
    const TrainConfig& cfg = meta.train_cfg;
    w.f64(cfg.lr);
    w.u32(cfg.lr_schedule == LrSchedule::Fixed ? 0 : 1);
    w.u32(static_cast<uint32_t>(cfg.batch_size));
    w.u32(static_cast<uint32_t>(cfg.max_epochs));
    w.f64(cfg.momentum);
    w.f64(cfg.stop_loss);
    w.u64(cfg.seed);
    w.u32(static_cast<uint32_t>(meta.train_stats.epochs_run));
    w.f64(meta.train_stats.final_train_loss);
    w.f64(meta.train_stats.final_train_error);
    w.u32(meta.train_stats.hit_stop_loss ? 1 : 0);
  }

  w.u32(meta.perm.has_value() ? 1 : 0);
  if (meta.perm.has_value()) {
    const Permutation& p = *meta.perm;
    w.u32(static_cast<uint32_t>(p.per_layer.size()));
    for (const auto& v : p.per_layer) {
      w.u32(static_cast<uint32_t>(v.size()));
      for (int idx : v) w.u32(static_cast<uint32_t>(idx));
    }
  }

  w.u32(crc32(w.bytes.data(), w.bytes.size()));
  write_file_bytes(path, w.bytes);
}

Network load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 12) throw std::runtime_error("checkpoint: truncated: " + path);

  const uint32_t stored_crc = static_cast<uint32_t>(bytes[bytes.size() - 4]) |
                              (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
                              (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
                              (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw std::runtime_error("checkpoint: CRC mismatch (corrupt file): " + path);

  ByteReader r(bytes.data(), bytes.size() - 4);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, "PNLC", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: unsupported version: " + path);

  Network net;
  net.arch = r.u32() == 0 ? ArchKind::Mlp : ArchKind::ShallowCnn;
  net.in_shape.c = static_cast<int>(r.u32());
  net.in_shape.h = static_cast<int>(r.u32());
  net.in_shape.w = static_cast<int>(r.u32());
  net.num_classes = static_cast<int>(r.u32());
  net.init_seed = r.u64();
  const uint32_t layer_count = r.u32();
  for (uint32_t li = 0; li < layer_count; ++li) {
    Layer l;
    l.kind = r.u32() == 0 ? LayerKind::Dense : LayerKind::Conv2d;
    l.act = r.u32() == 0 ? Activation::Relu : Activation::None;
    const bool has_bias = r.u32() != 0;
    if (l.kind == LayerKind::Dense) {
      l.out_units = static_cast<int>(r.u32());
      l.in_units = static_cast<int>(r.u32());
      l.in_block = static_cast<int>(r.u32());
    } else {
      l.out_ch = static_cast<int>(r.u32());
      l.in_ch = static_cast<int>(r.u32());
      l.kh = static_cast<int>(r.u32());
      l.kw = static_cast<int>(r.u32());
      l.stride = static_cast<int>(r.u32());
      l.pad = static_cast<int>(r.u32());
      l.in_spatial.c = static_cast<int>(r.u32());
      l.in_spatial.h = static_cast<int>(r.u32());
      l.in_spatial.w = static_cast<int>(r.u32());
    }
    const uint32_t nw = r.u32();
    l.weight.resize(nw);
    for (uint32_t k = 0; k < nw; ++k) l.weight[k] = r.f32();
    const uint32_t nb = r.u32();
    if (has_bias != (nb > 0))
      throw std::runtime_error("checkpoint: inconsistent bias record");
    l.bias.resize(nb);
    for (uint32_t k = 0; k < nb; ++k) l.bias[k] = r.f32();
    net.layers.push_back(std::move(l));
  }

  CheckpointMeta local;
  if (r.u32() != 0) {
    local.has_train = true;
    local.train_cfg.lr = r.f64();
    local.train_cfg.lr_schedule = r.u32() == 0 ? LrSchedule::Fixed : LrSchedule::Cosine;
    local.train_cfg.batch_size = static_cast<int>(r.u32());
    local.train_cfg.max_epochs = static_cast<int>(r.u32());
    local.train_cfg.momentum = r.f64();
    local.train_cfg.stop_loss = r.f64();
    local.train_cfg.seed = r.u64();
    local.train_stats.epochs_run = static_cast<int>(r.u32());
    local.train_stats.final_train_loss = r.f64();
    local.train_stats.final_train_error = r.f64();
    local.train_stats.hit_stop_loss = r.u32() != 0;
  }
  if (r.u32() != 0) {
    Permutation p;
    const uint32_t layers = r.u32();
    p.per_layer.resize(layers);
    for (uint32_t l = 0; l < layers; ++l) {
      const uint32_t len = r.u32();
      p.per_layer[l].resize(len);
      for (uint32_t k = 0; k < len; ++k) p.per_layer[l][k] = static_cast<int>(r.u32());
    }
    local.perm = std::move(p);
  }
  if (r.pos != r.n) throw std::runtime_error("checkpoint: trailing bytes: " + path);
  if (meta) *meta = std::move(local);
  return net;
}

void save_perm_json(const std::string& path, const Permutation& p) {
  nlohmann::json j;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& v : p.per_layer) layers.push_back(v);
  j["per_layer"] = layers;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << j.dump(2) << '\n';
}

Permutation load_perm_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  f >> j;
  Permutation p;
  for (const auto& layer : j.at("per_layer"))
    p.per_layer.push_back(layer.get<std::vector<int>>());
  return p;
}

}  // namespace lmc
