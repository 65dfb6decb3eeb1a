#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "spdnn/ingest.hpp"

namespace spdnn {
namespace {

constexpr std::array<char, 4> kModelMagic{'S', 'P', 'D', 'N'};
constexpr std::array<char, 4> kFeatureMagic{'S', 'P', 'D', 'F'};
constexpr std::uint32_t kVersion = 1;

class LittleEndianWriter {
 public:
  explicit LittleEndianWriter(std::ostream& out) : out_(out) {}

  void bytes(const char* data, std::size_t size) { out_.write(data, static_cast<std::streamsize>(size)); }

  template <typename T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U raw = std::bit_cast<U>(value);
    char buffer[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buffer[i] = static_cast<char>((raw >> (8 * i)) & 0xff);
    bytes(buffer, sizeof(U));
  }

 private:
  std::ostream& out_;
};

class LittleEndianReader {
 public:
  explicit LittleEndianReader(std::istream& in) : in_(in) {}

  void bytes(char* data, std::size_t size) {
    in_.read(data, static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in_.gcount()) != size) throw Error("truncated binary file");
  }

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char buffer[sizeof(U)];
    bytes(reinterpret_cast<char*>(buffer), sizeof(U));
    U raw = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) raw |= static_cast<U>(buffer[i]) << (8 * i);
    return std::bit_cast<T>(raw);
  }

  // Guards allocations driven by header fields of a corrupt file.
  template <typename T>
  void reserve_checked(std::vector<T>& v, std::uint64_t count) {
    constexpr std::uint64_t kLimit = std::uint64_t{1} << 34;
    if (count > kLimit) throw Error("binary header declares implausible size");
    v.reserve(static_cast<std::size_t>(count));
  }

 private:
  std::istream& in_;
};

void read_header(LittleEndianReader& reader, const std::array<char, 4>& magic) {
  std::array<char, 4> seen{};
  reader.bytes(seen.data(), seen.size());
  if (seen != magic) throw Error("bad magic");
  auto version = reader.get<std::uint32_t>();
  if (version != kVersion) throw Error("unsupported version " + std::to_string(version));
}

std::uint32_t narrow_u32(std::size_t value, const char* what) {
  if (value > 0xffffffffu) throw Error(std::string(what) + " does not fit the binary format");
  return static_cast<std::uint32_t>(value);
}

}  // namespace

void write_binary(std::ostream& out, const NetworkModel& model) {
  LittleEndianWriter w(out);
  w.bytes(kModelMagic.data(), kModelMagic.size());
  w.put(kVersion);
  w.put(narrow_u32(model.neurons, "neuron count"));
  w.put(narrow_u32(model.layers.size(), "layer count"));
  for (const auto& layer : model.layers) {
    w.put(static_cast<std::uint64_t>(layer.nnz()));
    for (auto p : layer.row_ptr) w.put(p);
    for (auto c : layer.col_idx) w.put(c);
    for (auto v : layer.values) w.put(v);
  }
  for (auto b : model.bias) w.put(b);
  if (!out) throw Error("write failed");
}

NetworkModel read_model_binary(std::istream& in) {
  LittleEndianReader r(in);
  read_header(r, kModelMagic);
  NetworkModel model;
  model.neurons = r.get<std::uint32_t>();
  auto depth = r.get<std::uint32_t>();
  model.layers.resize(depth);
  for (auto& layer : model.layers) {
    auto nnz = r.get<std::uint64_t>();
    layer.row_ptr.clear();
    r.reserve_checked(layer.row_ptr, model.neurons + 1);
    for (std::size_t i = 0; i <= model.neurons; ++i) layer.row_ptr.push_back(r.get<std::uint64_t>());
    r.reserve_checked(layer.col_idx, nnz);
    for (std::uint64_t i = 0; i < nnz; ++i) layer.col_idx.push_back(r.get<std::uint32_t>());
    r.reserve_checked(layer.values, nnz);
    for (std::uint64_t i = 0; i < nnz; ++i) layer.values.push_back(r.get<float>());
  }
  r.reserve_checked(model.bias, model.neurons);
  for (std::size_t i = 0; i < model.neurons; ++i) model.bias.push_back(r.get<float>());
  return model;
}

void write_binary(std::ostream& out, const FeatureBatch& features) {
  std::uint64_t nnz = 0;
  for (auto v : features.data) nnz += v != 0.0f;

  LittleEndianWriter w(out);
  w.bytes(kFeatureMagic.data(), kFeatureMagic.size());
  w.put(kVersion);
  w.put(narrow_u32(features.neurons, "neuron count"));
  w.put(narrow_u32(features.total_inputs, "input count"));
  w.put(nnz);
  for (std::size_t j = 0; j < features.active_count(); ++j) {
    const Real* col = features.column(j);
    for (std::size_t i = 0; i < features.neurons; ++i) {
      if (col[i] == 0.0f) continue;
      w.put(static_cast<std::uint32_t>(i));
      w.put(features.categories[j]);
      w.put(col[i]);
    }
  }
  if (!out) throw Error("write failed");
}

FeatureBatch read_features_binary(std::istream& in) {
  LittleEndianReader r(in);
  read_header(r, kFeatureMagic);
  auto neurons = r.get<std::uint32_t>();
  auto inputs = r.get<std::uint32_t>();
  auto nnz = r.get<std::uint64_t>();
  if (std::uint64_t{neurons} * inputs > (std::uint64_t{1} << 34)) {
    throw Error("binary header declares implausible size");
  }
  auto batch = FeatureBatch::zeros(neurons, inputs);
  for (std::uint64_t n = 0; n < nnz; ++n) {
    auto row = r.get<std::uint32_t>();
    auto col = r.get<std::uint32_t>();
    auto value = r.get<float>();
    if (row >= neurons || col >= inputs) throw Error("feature entry out of range");
    batch.data[std::size_t{col} * neurons + row] = value;
  }
  return batch;
}

}  // namespace spdnn
