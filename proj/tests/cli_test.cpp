#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lmc/binio.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/cli_app.hpp"
#include "lmc/dataset.hpp"
#include "lmc/net.hpp"
#include "lmc/perm.hpp"

using namespace lmc;

namespace {

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool same_params(const Network& a, const Network& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight != b.layers[i].weight) return false;
    if (a.layers[i].bias != b.layers[i].bias) return false;
  }
  return true;
}

const std::string kBlobs = "blobs:dim=2,classes=2,sep=4";

int cli(std::initializer_list<std::string> args) { return run_cli(std::vector<std::string>(args)); }

}  // namespace

TEST_CASE("checkpoint round trip is bit-identical") {
  const Network net = build_mlp(2, 5, 3, 4, 77);
  CheckpointMeta meta;
  meta.has_train = true;
  meta.train_cfg = TrainConfig::mlp_defaults();
  meta.train_cfg.seed = 123;
  meta.train_stats.epochs_run = 9;
  meta.train_stats.final_train_loss = 0.5;
  meta.perm = random_perm(net, 5);
  const std::string path = tmp("lmc_ck1.ckpt");
  save_checkpoint(path, net, meta);

  CheckpointMeta back;
  const Network loaded = load_checkpoint(path, &back);
  CHECK(same_params(net, loaded));
  CHECK(loaded.arch == net.arch);
  CHECK(loaded.num_classes == net.num_classes);
  CHECK(loaded.init_seed == net.init_seed);
  CHECK(back.has_train);
  CHECK(back.train_cfg.seed == 123);
  CHECK(back.train_stats.epochs_run == 9);
  REQUIRE(back.perm.has_value());
  CHECK(*back.perm == *meta.perm);

  // resave gives identical bytes
  const std::string path2 = tmp("lmc_ck2.ckpt");
  save_checkpoint(path2, loaded, back);
  CHECK(read_file_bytes(path) == read_file_bytes(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoint with a conv net round trips") {
  const Network net = build_shallow_cnn(2, 4, Shape3{1, 6, 6}, 3, 5);
  const std::string path = tmp("lmc_ck3.ckpt");
  save_checkpoint(path, net, {});
  const Network loaded = load_checkpoint(path);
  CHECK(same_params(net, loaded));
  CHECK(loaded.layers[0].kind == LayerKind::Conv2d);
  CHECK(loaded.layers[2].in_block == 36);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint refuses corruption and version mismatch") {
  const Network net = build_mlp(1, 4, 2, 2, 1);
  const std::string path = tmp("lmc_ck4.ckpt");
  save_checkpoint(path, net, {});

  // flipped byte in the middle -> CRC error
  std::vector<uint8_t> bytes = read_file_bytes(path);
  bytes[bytes.size() / 2] ^= 0x40;
  write_file_bytes(path, bytes);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("CRC"), std::runtime_error);

  // version bump with a fixed-up CRC -> refuses as unsupported version
  save_checkpoint(path, net, {});
  bytes = read_file_bytes(path);
  bytes[7] = '2';  // PNLC0002
  const uint32_t crc = crc32(bytes.data(), bytes.size() - 4);
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + static_cast<size_t>(i)] =
      static_cast<uint8_t>(crc >> (8 * i));
  write_file_bytes(path, bytes);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint of build_mlp(1,4,2,2) has exactly 2 layer records") {
  const Network net = build_mlp(1, 4, 2, 2, 9);
  const std::string path = tmp("lmc_ck5.ckpt");
  save_checkpoint(path, net, {});
  const Network loaded = load_checkpoint(path);
  CHECK(loaded.layers.size() == 2);
  std::remove(path.c_str());
}

TEST_CASE("perm JSON round trip") {
  const Network net = build_mlp(2, 5, 3, 2, 3);
  const Permutation p = random_perm(net, 8);
  const std::string path = tmp("lmc_perm.json");
  save_perm_json(path, p);
  CHECK(load_perm_json(path) == p);
  std::remove(path.c_str());
}

TEST_CASE("cli: train, eval, self-barrier prints zero") {
  const std::string ckpt = tmp("lmc_cli_a.ckpt");
  CHECK(cli({"train", "--dataset", kBlobs, "--n-train", "160", "--n-test", "40",
             "--width", "6", "--epochs", "20", "--stop-loss", "0.05", "--out", ckpt,
             "--seed", "5"}) == 0);
  CHECK(cli({"eval", ckpt, "--dataset", kBlobs, "--n-train", "160", "--n-test", "40"}) == 0);
  CHECK(cli({"barrier", ckpt, ckpt, "--dataset", kBlobs, "--n-train", "160",
             "--n-test", "40"}) == 0);
  std::remove(ckpt.c_str());
}

TEST_CASE("cli: permute with the identity keeps parameters byte-identical") {
  const std::string ckpt = tmp("lmc_cli_b.ckpt");
  const std::string permuted = tmp("lmc_cli_b_perm.ckpt");
  const std::string permfile = tmp("lmc_cli_b_perm.json");
  CHECK(cli({"train", "--dataset", kBlobs, "--n-train", "160", "--n-test", "40",
             "--width", "5", "--epochs", "10", "--out", ckpt, "--seed", "6"}) == 0);
  const Network net = load_checkpoint(ckpt);
  save_perm_json(permfile, identity_perm(net));
  CHECK(cli({"permute", ckpt, permfile, "--out", permuted}) == 0);
  CHECK(same_params(load_checkpoint(permuted), net));
  for (const std::string& p : {ckpt, permuted, permfile}) std::remove(p.c_str());
}

TEST_CASE("cli: brute search above the width limit exits 2 with a message") {
  const std::string a = tmp("lmc_cli_w9a.ckpt"), b = tmp("lmc_cli_w9b.ckpt");
  CHECK(cli({"train", "--dataset", kBlobs, "--n-train", "160", "--n-test", "40",
             "--width", "9", "--epochs", "5", "--out", a, "--seed", "7"}) == 0);
  CHECK(cli({"train", "--dataset", kBlobs, "--n-train", "160", "--n-test", "40",
             "--width", "9", "--epochs", "5", "--out", b, "--seed", "8"}) == 0);
  CHECK(cli({"search", "brute", a, b, "--dataset", kBlobs, "--n-train", "160",
             "--n-test", "40"}) == 2);
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("cli: unknown subcommand and unknown flags exit 1") {
  CHECK(cli({"frobnicate"}) == 1);
  CHECK(cli({"eval", "--bogus-flag"}) == 1);
  CHECK(cli({}) == 1);  // missing subcommand
}

TEST_CASE("cli: search fd writes perm and result files") {
  const std::string a = tmp("lmc_cli_fa.ckpt"), b = tmp("lmc_cli_fb.ckpt");
  const std::string out = tmp("lmc_cli_f.json"), perm = tmp("lmc_cli_f_perm.json");
  CHECK(cli({"train", "--dataset", kBlobs, "--n-train", "160", "--n-test", "40",
             "--width", "4", "--epochs", "20", "--out", a, "--seed", "9"}) == 0);
  CHECK(cli({"train", "--dataset", kBlobs, "--n-train", "160", "--n-test", "40",
             "--width", "4", "--epochs", "20", "--out", b, "--seed", "10"}) == 0);
  CHECK(cli({"search", "fd", a, b, "--dataset", kBlobs, "--n-train", "160", "--n-test",
             "40", "--out", out, "--save-perm", perm}) == 0);
  const Permutation p = load_perm_json(perm);
  CHECK(p.per_layer.size() == 1);
  CHECK(p.per_layer[0].size() == 4);
  std::ifstream f(out);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str().find("final_energy") != std::string::npos);
  for (const std::string& q : {a, b, out, perm}) std::remove(q.c_str());
}

TEST_CASE("cli: experiment spec runs and emits the report files") {
  const std::string spec = tmp("lmc_cli_spec.cfg");
  const std::string outdir = tmp("lmc_cli_out");
  {
    std::ofstream f(spec);
    f << "experiment = width_sweep\nwidths = 4\ndepths = 1\ndataset = blobs\n"
      << "blob_dim = 2\nblob_classes = 2\nblob_separation = 4\n"
      << "n_train = 160\nn_test = 40\nn_seeds = 2\npairs = 1\nmax_epochs = 10\n"
      << "master_seed = 3\n";
  }
  CHECK(cli({"experiment", spec, "--out-dir", outdir}) == 0);
  CHECK(std::filesystem::exists(outdir + "/report.csv"));
  CHECK(std::filesystem::exists(outdir + "/report.json"));

  // identical rerun produces byte-identical CSV
  std::vector<uint8_t> first = read_file_bytes(outdir + "/report.csv");
  CHECK(cli({"experiment", spec, "--out-dir", outdir}) == 0);
  CHECK(read_file_bytes(outdir + "/report.csv") == first);

  std::filesystem::remove_all(outdir);
  std::remove(spec.c_str());
}
