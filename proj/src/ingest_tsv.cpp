#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "spdnn/ingest.hpp"

namespace spdnn {
namespace {

std::string at_line(std::size_t line) { return ", line " + std::to_string(line); }

// Splits one TSV line into whitespace-separated fields.
std::size_t split_fields(std::string_view line, std::string_view* fields, std::size_t max_fields) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == '\t' || line[pos] == ' ' || line[pos] == '\r')) ++pos;
    if (pos == line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != '\t' && line[end] != ' ' && line[end] != '\r') ++end;
    if (count == max_fields) return max_fields + 1;
    fields[count++] = line.substr(pos, end - pos);
    pos = end;
  }
  return count;
}

std::uint64_t parse_index(std::string_view field, const char* what, std::size_t line) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(std::string("parse error: bad ") + what + " '" + std::string(field) + "'" + at_line(line));
  }
  return value;
}

Real parse_value(std::string_view field, std::size_t line) {
  Real value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error("parse error: bad value '" + std::string(field) + "'" + at_line(line));
  }
  return value;
}

struct Triplet {
  Index row;
  Index col;
  Real value;
};

// Reads 1-based triplets, checking both indices against their bounds
// (a zero bound means "unbounded").
std::vector<Triplet> read_triplets(std::istream& in, std::uint64_t row_bound, std::uint64_t col_bound,
                                   const char* row_name, const char* col_name) {
  std::vector<Triplet> triplets;
  std::string text;
  std::size_t line = 0;
  std::string_view fields[3];
  while (std::getline(in, text)) {
    ++line;
    auto count = split_fields(text, fields, 3);
    if (count == 0) continue;
    if (count != 3) throw Error("parse error: expected 3 fields" + at_line(line));
    auto row = parse_index(fields[0], row_name, line);
    auto col = parse_index(fields[1], col_name, line);
    auto value = parse_value(fields[2], line);
    if (row == 0 || (row_bound != 0 && row > row_bound)) {
      throw Error(std::string(row_name) + " index out of range" + at_line(line));
    }
    if (col == 0 || (col_bound != 0 && col > col_bound)) {
      throw Error(std::string(col_name) + " index out of range" + at_line(line));
    }
    triplets.push_back({static_cast<Index>(row - 1), static_cast<Index>(col - 1), value});
  }
  return triplets;
}

void sort_and_reject_duplicates(std::vector<Triplet>& triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t i = 1; i < triplets.size(); ++i) {
    if (triplets[i].row == triplets[i - 1].row && triplets[i].col == triplets[i - 1].col) {
      throw Error("duplicate entry (" + std::to_string(triplets[i].row + 1) + ", " +
                  std::to_string(triplets[i].col + 1) + ")");
    }
  }
}

void put_real(std::ostream& out, Real value) {
  char buffer[32];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  out.write(buffer, ptr - buffer);
}

}  // namespace

LayerCSR load_layer_tsv(std::istream& in, std::size_t neurons) {
  auto triplets = read_triplets(in, neurons, neurons, "row", "column");
  sort_and_reject_duplicates(triplets);

  LayerCSR layer;
  layer.row_ptr.assign(neurons + 1, 0);
  layer.col_idx.reserve(triplets.size());
  layer.values.reserve(triplets.size());
  for (const auto& t : triplets) {
    ++layer.row_ptr[t.row + 1];
    layer.col_idx.push_back(t.col);
    layer.values.push_back(t.value);
  }
  for (std::size_t r = 0; r < neurons; ++r) layer.row_ptr[r + 1] += layer.row_ptr[r];
  return layer;
}

FeatureBatch load_features_tsv(std::istream& in, std::size_t neurons, std::size_t max_inputs) {
  // Rows of the file are images; they become columns of the batch.
  auto triplets = read_triplets(in, max_inputs, neurons, "image", "neuron");
  sort_and_reject_duplicates(triplets);

  std::size_t inputs = max_inputs;
  if (inputs == 0 && !triplets.empty()) inputs = triplets.back().row + 1;
  auto batch = FeatureBatch::zeros(neurons, inputs);
  for (const auto& t : triplets) batch.data[std::size_t{t.row} * neurons + t.col] = t.value;
  return batch;
}

std::vector<Index> load_truth_categories(std::istream& in) {
  std::vector<Index> categories;
  std::string text;
  std::size_t line = 0;
  std::string_view fields[1];
  while (std::getline(in, text)) {
    ++line;
    auto count = split_fields(text, fields, 1);
    if (count == 0) continue;
    if (count != 1) throw Error("parse error: expected one category" + at_line(line));
    auto value = parse_index(fields[0], "category", line);
    if (value == 0) throw Error("category index out of range" + at_line(line));
    categories.push_back(static_cast<Index>(value - 1));
  }
  std::sort(categories.begin(), categories.end());
  auto dup = std::adjacent_find(categories.begin(), categories.end());
  if (dup != categories.end()) throw Error("duplicate category " + std::to_string(*dup + 1));
  return categories;
}

void write_layer_tsv(std::ostream& out, const LayerCSR& layer) {
  for (std::size_t r = 0; r < layer.rows(); ++r) {
    for (auto n = layer.row_ptr[r]; n < layer.row_ptr[r + 1]; ++n) {
      out << r + 1 << '\t' << layer.col_idx[n] + 1 << '\t';
      put_real(out, layer.values[n]);
      out << '\n';
    }
  }
}

void write_features_tsv(std::ostream& out, const FeatureBatch& features) {
  for (std::size_t j = 0; j < features.active_count(); ++j) {
    const Real* col = features.column(j);
    for (std::size_t i = 0; i < features.neurons; ++i) {
      if (col[i] == 0.0f) continue;
      out << features.categories[j] + 1 << '\t' << i + 1 << '\t';
      put_real(out, col[i]);
      out << '\n';
    }
  }
}

void write_categories(std::ostream& out, const std::vector<Index>& categories) {
  for (auto c : categories) out << c + 1 << '\n';
}

}  // namespace spdnn
