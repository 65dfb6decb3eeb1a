#include <fstream>
#include <string>

#include "spdnn/ingest.hpp"

namespace spdnn {
namespace fs = std::filesystem;
namespace {

// A TSV model directory holds n<N>-l<k>.tsv per layer (k from 1) and
// bias.tsv as a one-column matrix, "<neuron>\t1\t<value>" per neuron.
fs::path layer_file(const fs::path& dir, std::size_t neurons, std::size_t l) {
  return dir / ("n" + std::to_string(neurons) + "-l" + std::to_string(l + 1) + ".tsv");
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

bool is_tsv(const fs::path& path) { return path.extension() == ".tsv"; }

}  // namespace

void save_model(const fs::path& path, const NetworkModel& model) {
  if (path.extension() == ".bin") {
    auto out = open_out(path);
    write_binary(out, model);
    return;
  }
  fs::create_directories(path);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto out = open_out(layer_file(path, model.neurons, l));
    write_layer_tsv(out, model.layers[l]);
  }
  auto out = open_out(path / "bias.tsv");
  LayerCSR bias_column;
  bias_column.row_ptr.assign(model.neurons + 1, 0);
  for (std::size_t i = 0; i < model.neurons; ++i) {
    bias_column.row_ptr[i + 1] = i + 1;
    bias_column.col_idx.push_back(0);
    bias_column.values.push_back(model.bias[i]);
  }
  write_layer_tsv(out, bias_column);
}

NetworkModel load_model(const fs::path& path) {
  if (!fs::is_directory(path)) {
    auto in = open_in(path);
    return read_model_binary(in);
  }
  NetworkModel model;
  {
    auto in = open_in(path / "bias.tsv");
    std::string line;
    std::size_t neurons = 0;
    while (std::getline(in, line)) neurons += line.find_first_not_of(" \t\r") != std::string::npos;
    in.clear();
    in.seekg(0);
    auto column = load_layer_tsv(in, neurons);
    bool single_column = column.nnz() == neurons;
    for (auto c : column.col_idx) single_column = single_column && c == 0;
    if (!single_column) throw Error("bias.tsv must list every neuron once in column 1");
    model.neurons = neurons;
    model.bias = column.values;
  }
  for (std::size_t l = 0;; ++l) {
    auto file = layer_file(path, model.neurons, l);
    if (!fs::exists(file)) break;
    auto in = open_in(file);
    model.layers.push_back(load_layer_tsv(in, model.neurons));
  }
  return model;
}

void save_features(const fs::path& path, const FeatureBatch& features) {
  auto out = open_out(path);
  if (is_tsv(path)) {
    write_features_tsv(out, features);
  } else {
    write_binary(out, features);
  }
}

FeatureBatch load_features(const fs::path& path, std::size_t neurons, std::size_t inputs) {
  auto in = open_in(path);
  if (is_tsv(path)) {
    if (neurons == 0) throw Error("loading TSV features needs the neuron count");
    return load_features_tsv(in, neurons, inputs);
  }
  return read_features_binary(in);
}

}  // namespace spdnn
