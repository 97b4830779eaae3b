#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "propdistill/config.hpp"
#include "propdistill/data.hpp"
#include "propdistill/io.hpp"

using namespace propdistill;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("propdistill_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

Graph sample_graph(std::uint64_t seed = 3) {
  return gen_homophily_regular(40, 4, 0.75, 2, seed, 5, 0.8);
}

}  // namespace

TEST(DatasetBundle, BitExactRoundTrip) {
  TempDir dir;
  const Graph g = sample_graph();
  save_dataset(dir.path, g);
  const Graph back = load_dataset(dir.path);
  EXPECT_EQ(back.num_nodes, g.num_nodes);
  EXPECT_EQ(back.num_classes, g.num_classes);
  EXPECT_EQ(back.edges, g.edges);
  EXPECT_EQ(back.labels, g.labels);
  ASSERT_EQ(back.features.rows(), g.features.rows());
  EXPECT_EQ((back.features - g.features).cwiseAbs().maxCoeff(), 0.0);
}

TEST(DatasetBundle, MinimalBundleLoads) {
  TempDir dir;
  std::ofstream(dir.path / "edges.tsv") << "0\t1\n";
  std::ofstream(dir.path / "features.csv") << "0.5\n-1.25\n3\n";
  std::ofstream(dir.path / "labels.csv") << "0\n1\n0\n";
  std::ofstream(dir.path / "meta.json")
      << R"({"num_nodes":3,"num_classes":2,"feature_dim":1})";
  const Graph g = load_dataset(dir.path);
  EXPECT_EQ(g.num_nodes, 3);
  EXPECT_EQ(g.num_edges(), 1);
  EXPECT_DOUBLE_EQ(g.features(1, 0), -1.25);
}

TEST(DatasetBundle, MissingFileAndCountMismatch) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.path), std::runtime_error);

  std::ofstream(dir.path / "edges.tsv") << "0\t1\n";
  std::ofstream(dir.path / "features.csv") << "0.5\n-1.25\n3\n";
  std::ofstream(dir.path / "labels.csv") << "0\n1\n";  // too short
  std::ofstream(dir.path / "meta.json")
      << R"({"num_nodes":3,"num_classes":2,"feature_dim":1})";
  EXPECT_THROW(load_dataset(dir.path), std::runtime_error);

  std::ofstream(dir.path / "labels.csv") << "0\n1\n0\n";
  std::ofstream(dir.path / "meta.json")
      << R"({"num_nodes":3,"num_classes":2,"feature_dim":1,"num_edges":7})";
  EXPECT_THROW(load_dataset(dir.path), std::runtime_error);
}

TEST(MatrixCsv, RoundTripsDoublesExactly) {
  TempDir dir;
  Rng rng(7);
  Matrix m(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.normal() * 1e-7;
  m(0, 0) = 1.0 / 3.0;
  m(5, 2) = -1e300;
  const fs::path p = dir.path / "m.csv";
  write_matrix_csv(p, m);
  const Matrix back = read_matrix_csv(p);
  EXPECT_EQ((back - m).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Checkpoints, MlpRoundTripExact) {
  TempDir dir;
  Rng rng(11);
  MlpModel m = make_mlp(7, {5, 4}, 3, 0.3, rng);
  const fs::path p = dir.path / "mlp.json";
  save_checkpoint(p, m);
  const MlpModel back = load_mlp_checkpoint(p);
  EXPECT_EQ(back.dropout_rate, m.dropout_rate);
  ASSERT_EQ(back.layers.size(), m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_EQ((back.layers[l].w - m.layers[l].w).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((back.layers[l].b - m.layers[l].b).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Checkpoints, SageAndAppnpRoundTrip) {
  TempDir dir;
  Rng rng(13);
  SageModel s = make_sage(6, 5, 3, 0.2, rng);
  save_checkpoint(dir.path / "sage.json", s);
  const SageModel sback = load_sage_checkpoint(dir.path / "sage.json");
  EXPECT_EQ((sback.l1.w_neigh - s.l1.w_neigh).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((sback.l2.w_self - s.l2.w_self).cwiseAbs().maxCoeff(), 0.0);

  AppnpModel a = make_appnp(6, {5}, 3, 0.2, 0.85, 7, rng);
  save_checkpoint(dir.path / "appnp.json", a);
  const AppnpModel aback = load_appnp_checkpoint(dir.path / "appnp.json");
  EXPECT_EQ(aback.power_steps, 7);
  EXPECT_EQ(aback.gamma, 0.85);
  EXPECT_EQ(
      (aback.base.layers[0].w - a.base.layers[0].w).cwiseAbs().maxCoeff(),
      0.0);
}

TEST(Checkpoints, ArchMismatchRejected) {
  TempDir dir;
  Rng rng(17);
  SageModel s = make_sage(4, 3, 2, 0.0, rng);
  save_checkpoint(dir.path / "m.json", s);
  EXPECT_THROW(load_mlp_checkpoint(dir.path / "m.json"), std::runtime_error);
}

TEST(RunConfig, SchemaRejectsUnknownKeys) {
  RunConfig cfg;
  EXPECT_NO_THROW(cfg.set("gamma", "0.5"));
  EXPECT_THROW(cfg.set("gamna", "0.5"), std::invalid_argument);
}

TEST(RunConfig, FileParsingAndTypes) {
  TempDir dir;
  const fs::path p = dir.path / "run.cfg";
  std::ofstream(p) << "# comment\n"
                   << "gamma = 0.25\n"
                   << "steps=7\n"
                   << "loss = pnd   # trailing comment\n"
                   << "self_loops = true\n";
  RunConfig cfg;
  cfg.load_file(p);
  EXPECT_DOUBLE_EQ(cfg.get_double("gamma", 0), 0.25);
  EXPECT_EQ(cfg.get_int("steps", 0), 7);
  EXPECT_EQ(cfg.get_str("loss"), "pnd");
  EXPECT_TRUE(cfg.get_bool("self_loops", false));
  EXPECT_THROW(cfg.get_int("gamma", 0), std::invalid_argument);

  std::ofstream(p) << "bogus_key = 1\n";
  RunConfig bad;
  EXPECT_THROW(bad.load_file(p), std::invalid_argument);
}

TEST(RunConfig, EnvOverridesFile) {
  TempDir dir;
  const fs::path p = dir.path / "run.cfg";
  std::ofstream(p) << "gamma = 0.25\nsteps = 3\n";
  ::setenv("PROPDISTILL_GAMMA", "0.75", 1);
  RunConfig cfg;
  cfg.load_file(p);
  cfg.load_env();
  ::unsetenv("PROPDISTILL_GAMMA");
  EXPECT_DOUBLE_EQ(cfg.get_double("gamma", 0), 0.75);
  EXPECT_EQ(cfg.get_int("steps", 0), 3);
  // a flag layered on top wins over both
  cfg.set("gamma", "0.9");
  EXPECT_DOUBLE_EQ(cfg.get_double("gamma", 0), 0.9);
}

TEST(RunConfig, SeedListParsing) {
  RunConfig cfg;
  cfg.set("seeds", "0, 3,17");
  const auto seeds = cfg.get_seeds({});
  ASSERT_EQ(seeds.size(), 3u);
  EXPECT_EQ(seeds[2], 17u);
}

TEST(ChainsStructure, RecoveredFromBundle) {
  TempDir dir;
  const ChainsData original = gen_chains(6, 5, 3, 9, 0.4);
  save_dataset(dir.path, original.graph);
  const Graph loaded = load_dataset(dir.path);
  const ChainsData derived = derive_chains_structure(loaded);
  EXPECT_EQ(derived.split.train_idx, original.split.train_idx);
  EXPECT_EQ(derived.split.val_idx, original.split.val_idx);
  EXPECT_EQ(derived.far_idx, original.far_idx);
}

TEST(ChainsStructure, RejectsNonChainBundle) {
  const Graph g = sample_graph();
  EXPECT_THROW(derive_chains_structure(g), std::invalid_argument);
}
