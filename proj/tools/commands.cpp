#include "commands.hpp"

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>

#include "report.hpp"
#include "spdnn/ingest.hpp"
#include "spdnn/oracle.hpp"
#include "spdnn/parallel.hpp"

namespace spdnn::cli {
namespace fs = std::filesystem;

namespace {

// Dense reference work above which generate falls back to the baseline engine
// for ground truth.
constexpr double kOracleBudget = 2e9;

struct DataOptions {
  GeneratorSpec spec;
  std::string data_dir;
  std::string model_path;
  std::string features_path;
  std::string truth_path;
};

struct EngineOptions {
  std::string mode = "optimized";
  std::string streaming = "off";
  InferenceConfig config;
};

void add_spec_flags(CLI::App& app, GeneratorSpec& spec) {
  app.add_option("--neurons", spec.neurons, "Neurons per layer")->capture_default_str();
  app.add_option("--layers", spec.layers, "Layer count")->capture_default_str();
  app.add_option("--inputs", spec.input_count, "Input feature count")->capture_default_str();
  app.add_option("--connections", spec.connections_per_neuron, "Nonzeros per weight row")->capture_default_str();
  app.add_option("--bias", spec.bias_value, "Bias of every neuron")->capture_default_str();
  app.add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  app.add_option("--density", spec.input_density, "Fraction of nonzero input entries")->capture_default_str();
}

void add_data_flags(CLI::App& app, DataOptions& data) {
  add_spec_flags(app, data.spec);
  app.add_option("--data", data.data_dir, "Directory written by generate");
  app.add_option("--model", data.model_path, "Model file (.bin) or TSV layer directory");
  app.add_option("--features", data.features_path, "Input features (.bin or .tsv)");
  app.add_option("--truth", data.truth_path, "Ground-truth categories, one 1-based index per line");
}

void add_engine_flags(CLI::App& app, EngineOptions& e) {
  auto& c = e.config;
  app.add_option("--minibatch", c.minibatch, "Features per register tile")->capture_default_str();
  app.add_option("--block-size", c.block_size, "Rows per block")->capture_default_str();
  app.add_option("--warp-size", c.warp_size, "Rows per warp")->capture_default_str();
  app.add_option("--buffer-capacity", c.buffer_capacity, "Staging buffer slots")->capture_default_str();
  app.add_option("--rebalance-threshold", c.rebalance_threshold, "Imbalance ratio that triggers rebalancing")
      ->capture_default_str();
  app.add_option("--streaming", e.streaming, "Double-buffered weight streaming")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  app.add_option("--threads", c.threads, "OpenMP threads (0 = runtime default)")->capture_default_str();
}

std::vector<Index> read_categories_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return load_truth_categories(in);
}

void write_categories_file(const fs::path& path, const std::vector<Index>& categories) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_categories(out, categories);
  if (!out) throw Error("write failed: " + path.string());
}

struct Dataset {
  NetworkModel model;
  FeatureBatch inputs;
  std::optional<std::vector<Index>> truth;
};

fs::path first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
  for (auto name : names) {
    if (fs::exists(dir / name)) return dir / name;
  }
  throw Error("no " + std::string(*names.begin()) + " in " + dir.string());
}

Dataset load_dataset(const DataOptions& data, bool inputs_given) {
  Dataset set;
  std::string model_path = data.model_path;
  std::string features_path = data.features_path;
  std::string truth_path = data.truth_path;
  if (!data.data_dir.empty()) {
    const fs::path dir = data.data_dir;
    if (model_path.empty()) model_path = first_existing(dir, {"model.bin", "model"}).string();
    if (features_path.empty()) features_path = first_existing(dir, {"inputs.bin", "inputs.tsv"}).string();
    if (truth_path.empty() && fs::exists(dir / "truth.tsv")) truth_path = (dir / "truth.tsv").string();
  }
  if (model_path.empty() != features_path.empty()) throw Error("--model and --features go together");

  if (model_path.empty()) {
    data.spec.validate();
    set.model = generate_synthetic_network(data.spec);
    set.inputs = generate_synthetic_inputs(data.spec.neurons, data.spec.input_count, data.spec.input_density,
                                           data.spec.seed);
  } else {
    set.model = load_model(model_path);
    set.inputs = load_features(features_path, set.model.neurons, inputs_given ? data.spec.input_count : 0);
  }
  require_valid(set.model);
  if (!truth_path.empty()) set.truth = read_categories_file(truth_path);
  return set;
}

InferenceConfig engine_config(const EngineOptions& e, std::size_t workers) {
  auto config = e.config;
  config.workers = workers;
  config.streaming = e.streaming == "on";
  config.validate();
  return config;
}

RunReport run_once(const Dataset& set, const InferenceConfig& config, Mode mode,
                   const std::optional<LayoutSummary>& layout, std::vector<Index>* categories) {
  RunReport report;
  if (config.workers > 1) {
    auto parallel = run_batch_parallel(set.model, set.inputs, config, mode);
    report = make_report(set.model, config, mode, parallel.result, layout);
    report.comm_matrix = parallel.comm;
    report.balance_report = parallel.balance;
    if (categories) *categories = parallel.result.categories;
  } else {
    auto result = infer(set.model, set.inputs, config, mode);
    report = make_report(set.model, config, mode, result, layout);
    if (categories) *categories = result.categories;
  }
  return report;
}

int cmd_generate(const GeneratorSpec& spec, const std::string& format, const fs::path& out_dir,
                 std::ostream& out) {
  spec.validate();
  if (format == "bin" && spec.neurons > 0) {
    // The binary cache feeds the two-byte index layout.
    narrow_indices(std::array<Index, 1>{static_cast<Index>(std::min<std::size_t>(
        spec.neurons - 1, std::numeric_limits<Index>::max()))});
  }
  const auto model = generate_synthetic_network(spec);
  const auto inputs = generate_synthetic_inputs(spec.neurons, spec.input_count, spec.input_density, spec.seed);

  std::vector<Index> truth;
  std::string source;
  const double dense_work = static_cast<double>(spec.neurons) * static_cast<double>(spec.neurons) *
                            static_cast<double>(spec.input_count) * static_cast<double>(spec.layers);
  if (spec.neurons <= oracle::kMaxNeurons && dense_work <= kOracleBudget) {
    truth = oracle::reference_infer(model, inputs).categories;
    source = "oracle";
  } else {
    truth = infer(model, inputs, InferenceConfig{}, Mode::baseline).categories;
    source = "baseline";
  }

  fs::create_directories(out_dir);
  const auto model_path = out_dir / (format == "bin" ? "model.bin" : "model");
  const auto inputs_path = out_dir / (format == "bin" ? "inputs.bin" : "inputs.tsv");
  const auto truth_path = out_dir / "truth.tsv";
  if (format == "tsv") fs::remove_all(model_path);
  save_model(model_path, model);
  save_features(inputs_path, inputs);
  write_categories_file(truth_path, truth);

  YAML::Emitter y;
  y << YAML::BeginMap;
  y << YAML::Key << "model" << YAML::Value << model_path.string();
  y << YAML::Key << "inputs" << YAML::Value << inputs_path.string();
  y << YAML::Key << "truth" << YAML::Value << truth_path.string();
  y << YAML::Key << "truth_source" << YAML::Value << source;
  y << YAML::Key << "edges" << YAML::Value << count_edges(model);
  y << YAML::Key << "categories" << YAML::Value << truth.size();
  y << YAML::EndMap;
  out << y.c_str() << '\n';
  return kExitOk;
}

int cmd_verify(const fs::path& result_path, const fs::path& truth_path, std::ostream& out) {
  const auto result = read_categories_file(result_path);
  const auto truth = read_categories_file(truth_path);
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < result.size() || j < truth.size()) {
    if (i < result.size() && j < truth.size() && result[i] == truth[j]) {
      ++i;
      ++j;
      continue;
    }
    if (j == truth.size() || (i < result.size() && result[i] < truth[j])) {
      out << "unexpected category " << result[i] + 1 << '\n';
    } else {
      out << "missing category " << truth[j] + 1 << '\n';
    }
    return kExitMismatch;
  }
  out << "ok: " << truth.size() << " categories match\n";
  return kExitOk;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(current);
  return parts;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Sparse DNN inference engine and benchmark", "spdnn");
  app.require_subcommand(1);

  GeneratorSpec gen_spec;
  std::string gen_format = "bin";
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic model, inputs and ground truth");
  add_spec_flags(*generate, gen_spec);
  generate->add_option("--format", gen_format, "Model and input format")
      ->check(CLI::IsMember({"bin", "tsv"}))
      ->capture_default_str();
  generate->add_option("--out", gen_out, "Output directory")->required();

  DataOptions run_data;
  EngineOptions run_engine;
  std::size_t run_workers = 1;
  std::string categories_out;
  auto* run = app.add_subcommand("run", "Run inference and print a report");
  add_data_flags(*run, run_data);
  add_engine_flags(*run, run_engine);
  run->add_option("--mode", run_engine.mode, "Kernel")
      ->check(CLI::IsMember({"baseline", "optimized"}))
      ->capture_default_str();
  run->add_option("--workers", run_workers, "Simulated workers")->capture_default_str();
  run->add_option("--categories-out", categories_out, "Write surviving categories here");

  std::string verify_result;
  std::string verify_truth;
  auto* verify = app.add_subcommand("verify", "Compare a categories file with ground truth");
  verify->add_option("--result", verify_result, "Categories produced by run")->required();
  verify->add_option("--truth", verify_truth, "Ground-truth categories")->required();

  DataOptions bench_data;
  EngineOptions bench_engine;
  std::string bench_modes = "baseline,optimized";
  std::string bench_workers = "1";
  auto* bench = app.add_subcommand("bench", "Sweep modes and worker counts");
  add_data_flags(*bench, bench_data);
  add_engine_flags(*bench, bench_engine);
  bench->add_option("--mode", bench_modes, "Comma-separated kernels")->capture_default_str();
  bench->add_option("--workers", bench_workers, "Comma-separated worker counts")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(gen_spec, gen_format, gen_out, out);

    if (*verify) return cmd_verify(verify_result, verify_truth, out);

    if (*run) {
      const auto set = load_dataset(run_data, run->count("--inputs") > 0);
      const auto config = engine_config(run_engine, run_workers);
      const auto mode = parse_mode(run_engine.mode);
      std::vector<Index> categories;
      auto report = run_once(set, config, mode, summarize_layout(set.model, config), &categories);
      if (set.truth) report.verified = categories == *set.truth;
      if (!categories_out.empty()) write_categories_file(categories_out, categories);
      out << to_yaml(report);
      return report.verified.value_or(true) ? kExitOk : kExitMismatch;
    }

    if (*bench) {
      const auto set = load_dataset(bench_data, bench->count("--inputs") > 0);
      std::vector<Mode> modes;
      for (const auto& m : split_list(bench_modes)) modes.push_back(parse_mode(m));
      std::vector<std::size_t> worker_counts;
      for (const auto& w : split_list(bench_workers)) {
        try {
          worker_counts.push_back(std::stoul(w));
        } catch (const std::exception&) {
          throw Error("bad worker count '" + w + "'");
        }
      }
      const auto layout = summarize_layout(set.model, engine_config(bench_engine, 1));
      BenchSummary summary;
      std::optional<RunReport> first_baseline;
      std::optional<RunReport> first_optimized;
      bool all_verified = true;
      for (auto workers : worker_counts) {
        const auto config = engine_config(bench_engine, workers);
        for (auto mode : modes) {
          std::vector<Index> categories;
          auto report = run_once(set, config, mode, layout, &categories);
          if (set.truth) {
            report.verified = categories == *set.truth;
            all_verified = all_verified && *report.verified;
          }
          if (workers == worker_counts.front()) {
            (mode == Mode::baseline ? first_baseline : first_optimized) = report;
          }
          summary.reports.push_back(std::move(report));
        }
      }
      if (first_baseline && first_optimized) summary.reads = read_ratio(*first_baseline, *first_optimized);
      out << to_yaml(summary);
      return all_verified ? kExitOk : kExitMismatch;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace spdnn::cli
