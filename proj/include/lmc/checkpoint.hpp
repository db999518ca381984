#ifndef LMC_CHECKPOINT_HPP
#define LMC_CHECKPOINT_HPP

#include <optional>
#include <string>

#include "lmc/net.hpp"
#include "lmc/perm.hpp"

namespace lmc {

// Binary container: magic "PNLC0001", little-endian, per-layer shape
// headers with raw float32 parameters, CRC32 trailer. Round-trips are
// bit-identical; a bad magic, version or CRC refuses to load.
struct CheckpointMeta {
  bool has_train = false;
  TrainConfig train_cfg;
  TrainStats train_stats;
  std::optional<Permutation> perm;
};

void save_checkpoint(const std::string& path, const Network& net, const CheckpointMeta& meta);
Network load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

// permutation files: JSON integer arrays, {"per_layer": [[...], ...]}
void save_perm_json(const std::string& path, const Permutation& p);
Permutation load_perm_json(const std::string& path);

}  // namespace lmc

#endif
