#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spdnn/ingest.hpp"
#include "support/random_models.hpp"

using namespace spdnn;
namespace fs = std::filesystem;

namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("spdnn-ingest-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("load_layer_tsv transcribes 1-based triplets") {
  std::istringstream in("1\t1\t0.0625\n2\t1\t0.0625");
  auto layer = load_layer_tsv(in, 2);
  CHECK(layer.row_ptr == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(layer.col_idx == std::vector<Index>{0, 0});
  CHECK(layer.values == std::vector<Real>{0.0625f, 0.0625f});
}

TEST_CASE("load_layer_tsv on an empty stream") {
  std::istringstream in("");
  auto layer = load_layer_tsv(in, 3);
  CHECK(layer.row_ptr == std::vector<std::uint64_t>{0, 0, 0, 0});
  CHECK(layer.nnz() == 0);
}

TEST_CASE("load_layer_tsv errors") {
  CHECK(error_of([] {
          std::istringstream in("3\t1\t1.0");
          load_layer_tsv(in, 2);
        }) == "row index out of range, line 1");
  CHECK(error_of([] {
          std::istringstream in("1\t1\t1.0\n1\t0\t1.0");
          load_layer_tsv(in, 2);
        }) == "column index out of range, line 2");
  CHECK(error_of([] {
          std::istringstream in("1\t2\t1.0\n\n1\t2\t3.0\n");
          load_layer_tsv(in, 2);
        }) == "duplicate entry (1, 2)");
  CHECK(error_of([] {
          std::istringstream in("1\tx\t1.0");
          load_layer_tsv(in, 2);
        }).find("parse error") == 0);
  CHECK(error_of([] {
          std::istringstream in("1\t1");
          load_layer_tsv(in, 2);
        }) == "parse error: expected 3 fields, line 1");
}

TEST_CASE("load_layer_tsv is insensitive to line order") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto layer = testing::random_layer(rng, 40, 1, 9);
    std::ostringstream out;
    write_layer_tsv(out, layer);
    std::vector<std::string> lines;
    std::istringstream split(out.str());
    for (std::string line; std::getline(split, line);) lines.push_back(line);
    std::shuffle(lines.begin(), lines.end(), rng);
    std::string shuffled;
    for (const auto& line : lines) shuffled += line + "\n";
    std::istringstream in(shuffled);
    CHECK(load_layer_tsv(in, 40) == layer);
  }
}

TEST_CASE("load_features_tsv builds column-major features") {
  std::istringstream in("1\t1\t1\n1\t3\t1");
  auto batch = load_features_tsv(in, 4, 1);
  CHECK(batch.data == std::vector<Real>{1, 0, 1, 0});
  CHECK(batch.categories == std::vector<Index>{0});

  std::istringstream empty("");
  auto zeros = load_features_tsv(empty, 3, 2);
  CHECK(zeros.data == std::vector<Real>(6, 0.0f));
  CHECK(zeros.categories == std::vector<Index>{0, 1});
  CHECK(zeros.total_inputs == 2);

  std::istringstream too_far("3\t1\t1");
  CHECK_THROWS_AS(load_features_tsv(too_far, 4, 2), Error);
  std::istringstream bad_neuron("1\t5\t1");
  CHECK_THROWS_AS(load_features_tsv(bad_neuron, 4, 2), Error);
}

TEST_CASE("load_truth_categories sorts and rejects duplicates") {
  std::istringstream a("1\n3\n4");
  CHECK(load_truth_categories(a) == std::vector<Index>{0, 2, 3});
  std::istringstream b("");
  CHECK(load_truth_categories(b).empty());
  std::istringstream c("4\n1");
  CHECK(load_truth_categories(c) == std::vector<Index>{0, 3});
  std::istringstream d("2\n2");
  CHECK_THROWS_AS(load_truth_categories(d), Error);
  std::istringstream e("0");
  CHECK_THROWS_AS(load_truth_categories(e), Error);
}

TEST_CASE("generate_synthetic_network") {
  SUBCASE("K == N gives a dense layer") {
    GeneratorSpec spec;
    spec.neurons = 4;
    spec.connections_per_neuron = 4;
    spec.layers = 1;
    auto model = generate_synthetic_network(spec);
    REQUIRE(model.layers.size() == 1);
    CHECK(model.layers[0].col_idx == std::vector<Index>{0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3});
    CHECK(std::all_of(model.layers[0].values.begin(), model.layers[0].values.end(),
                      [](Real v) { return v == 0.0625f; }));
  }
  SUBCASE("exactly K entries of 1/16 per row") {
    GeneratorSpec spec;
    spec.neurons = 64;
    spec.connections_per_neuron = 8;
    spec.layers = 4;
    auto model = generate_synthetic_network(spec);
    for (const auto& layer : model.layers) {
      for (std::size_t r = 0; r < 64; ++r) CHECK(layer.row_nnz(r) == 8);
      CHECK(std::all_of(layer.values.begin(), layer.values.end(), [](Real v) { return v == 0.0625f; }));
    }
    CHECK(model.bias == std::vector<Real>(64, -0.3f));
  }
  SUBCASE("deterministic for a fixed seed") {
    GeneratorSpec spec;  // N=1024, L=120, K=32
    spec.seed = 77;
    CHECK(generate_synthetic_network(spec) == generate_synthetic_network(spec));
    auto other = spec;
    other.seed = 78;
    CHECK_FALSE(generate_synthetic_network(other) == generate_synthetic_network(spec));
  }
  SUBCASE("K > N is rejected") {
    GeneratorSpec spec;
    spec.neurons = 8;
    spec.connections_per_neuron = 9;
    CHECK_THROWS_AS(generate_synthetic_network(spec), Error);
  }
}

TEST_CASE("generated networks validate for random specs") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    GeneratorSpec spec;
    spec.neurons = testing::uniform_int(rng, 1, 200);
    spec.connections_per_neuron = testing::uniform_int(rng, 0, spec.neurons);
    spec.layers = testing::uniform_int(rng, 0, 3);
    spec.seed = rng();
    auto model = generate_synthetic_network(spec);
    REQUIRE(validate_model(model).empty());
    CHECK(count_edges(model) == spec.neurons * spec.connections_per_neuron * spec.layers);
  }
}

TEST_CASE("generate_synthetic_inputs") {
  auto ones = generate_synthetic_inputs(16, 5, 1.0, 1);
  CHECK(std::all_of(ones.data.begin(), ones.data.end(), [](Real v) { return v == 1.0f; }));
  auto zeros = generate_synthetic_inputs(16, 5, 0.0, 1);
  CHECK(std::all_of(zeros.data.begin(), zeros.data.end(), [](Real v) { return v == 0.0f; }));
  CHECK(generate_synthetic_inputs(32, 9, 0.4, 5) == generate_synthetic_inputs(32, 9, 0.4, 5));

  auto batch = generate_synthetic_inputs(1024, 6000, 0.1, 12345);
  const auto nonzero = std::count(batch.data.begin(), batch.data.end(), 1.0f);
  const double fraction = static_cast<double>(nonzero) / static_cast<double>(batch.data.size());
  CHECK(fraction == doctest::Approx(0.1).epsilon(0.1));
  CHECK(static_cast<std::size_t>(nonzero) + std::count(batch.data.begin(), batch.data.end(), 0.0f) ==
        batch.data.size());
}

TEST_CASE("binary model cache round trips") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto model = testing::random_model(rng, 30, 3, 5, -0.25f);
    std::stringstream io;
    write_binary(io, model);
    CHECK(read_model_binary(io) == model);
  }
}

TEST_CASE("binary model layout is fixed little-endian") {
  NetworkModel model;
  model.neurons = 1;
  model.bias = {0.5f};
  LayerCSR l;
  l.row_ptr = {0, 1};
  l.col_idx = {0};
  l.values = {1.0f};
  model.layers = {l};
  std::stringstream io;
  write_binary(io, model);
  const std::string bytes = io.str();
  // magic, version, N, L, nnz, row_ptr[2], col, value, bias
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 8 + 16 + 4 + 4 + 4);
  CHECK(bytes.substr(0, 4) == "SPDN");
  CHECK(bytes.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
  CHECK(bytes.substr(bytes.size() - 4) == std::string("\x00\x00\x00\x3f", 4));
}

TEST_CASE("binary cache errors") {
  NetworkModel model;
  model.neurons = 2;
  model.bias = {0, 0};
  model.layers = {LayerCSR{{0, 0, 0}, {}, {}}};
  std::stringstream io;
  write_binary(io, model);
  std::string bytes = io.str();

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    std::istringstream in(bytes);
    CHECK(error_of([&] { read_model_binary(in); }) == "bad magic");
  }
  SUBCASE("big-endian header is rejected") {
    std::swap(bytes[4], bytes[7]);
    std::swap(bytes[5], bytes[6]);
    std::istringstream in(bytes);
    CHECK(error_of([&] { read_model_binary(in); }).find("unsupported version") == 0);
  }
  SUBCASE("truncation") {
    std::istringstream in(bytes.substr(0, bytes.size() - 3));
    CHECK(error_of([&] { read_model_binary(in); }) == "truncated binary file");
  }
  SUBCASE("features magic is not a model") {
    std::stringstream f;
    write_binary(f, FeatureBatch::zeros(2, 2));
    CHECK(error_of([&] { read_model_binary(f); }) == "bad magic");
  }
}

TEST_CASE("binary feature cache round trips") {
  std::mt19937_64 rng(9);
  auto batch = testing::random_features(rng, 17, 11, 0.3);
  std::stringstream io;
  write_binary(io, batch);
  CHECK(read_features_binary(io) == batch);
}

TEST_CASE("TSV, binary and TSV-again loads agree") {
  std::mt19937_64 rng(10);
  auto model = testing::random_model(rng, 25, 2, 4, -0.3f);
  auto dir = scratch_dir("tsv-bin");
  save_model(dir / "model", model);
  auto from_tsv = load_model(dir / "model");
  CHECK(from_tsv == model);
  save_model(dir / "model.bin", from_tsv);
  auto from_bin = load_model(dir / "model.bin");
  CHECK(from_bin == model);
  save_model(dir / "again", from_bin);
  CHECK(load_model(dir / "again") == model);

  auto features = testing::random_features(rng, 25, 7, 0.5);
  save_features(dir / "inputs.tsv", features);
  save_features(dir / "inputs.bin", features);
  CHECK(load_features(dir / "inputs.tsv", 25, 7) == features);
  CHECK(load_features(dir / "inputs.bin") == features);
  CHECK_THROWS_AS(load_features(dir / "inputs.tsv"), Error);
  CHECK_THROWS_AS(load_model(dir / "missing.bin"), Error);
  fs::remove_all(dir);
}
