#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "collagan/checkpoint.hpp"
#include "collagan/config.hpp"
#include "collagan/errors.hpp"
#include "collagan/evaluation.hpp"
#include "collagan/gradcheck.hpp"
#include "collagan/image_io.hpp"
#include "collagan/synth.hpp"
#include "collagan/training.hpp"

namespace fs = std::filesystem;
using namespace collagan;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

void print_resolved(const std::string& command, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::cout << "# " << command << " resolved config\n";
  for (const auto& [k, v] : entries) std::cout << k << " = " << v << "\n";
  std::cout.flush();
}

bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

struct GenDataArgs {
  std::string out;
  std::size_t subjects = 20;
  std::size_t domains = 4;
  std::size_t size = 32;
  std::uint64_t seed = 1;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  print_resolved("gen-data", {{"out", a.out},
                              {"subjects", std::to_string(a.subjects)},
                              {"domains", std::to_string(a.domains)},
                              {"size", std::to_string(a.size)},
                              {"seed", std::to_string(a.seed)},
                              {"force", a.force ? "true" : "false"}});
  if (fs::exists(a.out) && !fs::is_directory(a.out)) throw DataError("'" + a.out + "' exists and is not a directory");
  if (non_empty_dir(a.out) && !a.force) {
    throw DataError("output directory '" + a.out + "' is not empty (use --force to overwrite)");
  }
  const auto ds = synth_dataset(a.subjects, a.domains, a.size, a.size, a.seed);
  write_dataset_folder(a.out, ds.samples);
  std::ofstream manifest(fs::path(a.out) / "manifest.txt", std::ios::trunc);
  manifest << "seed = " << a.seed << "\n";
  manifest << "size = " << a.size << "\n";
  for (std::size_t d = 0; d < ds.domain_names.size(); ++d) manifest << "domain " << d << " = " << ds.domain_names[d] << "\n";
  for (const auto& s : ds.samples) manifest << "subject " << s.subject_id << "\n";
  if (!manifest) throw DataError("failed writing manifest");
  std::cout << "wrote " << ds.samples.size() * a.domains << " images for " << ds.samples.size() << " subjects to "
            << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::vector<std::string> set;
  std::optional<std::size_t> joint_steps;
  std::optional<std::uint64_t> seed;
};

std::string override_text(const TrainArgs& a) {
  std::string text;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open config file '" + a.config + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text += ss.str() + "\n";
  }
  for (const auto& kv : a.set) {
    if (kv.find('=') == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    text += kv + "\n";
  }
  if (a.joint_steps) text += "joint_steps = " + std::to_string(*a.joint_steps) + "\n";
  if (a.seed) text += "seed = " + std::to_string(*a.seed) + "\n";
  return text;
}

int cmd_train(const TrainArgs& a) {
  const std::string overrides = override_text(a);
  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    trainer.emplace(Trainer::from_checkpoint(load_checkpoint(a.resume), overrides));
  } else {
    trainer.emplace(TrainConfig::from_text(overrides));
  }
  std::cout << "# train resolved config\ndata = " << a.data << "\nout = " << a.out << "\n";
  if (!a.resume.empty()) std::cout << "resume = " << a.resume << "\n";
  std::cout << trainer->config().to_text();
  std::cout.flush();
  const std::size_t found = detect_domain_count(a.data);
  if (found != trainer->config().n_domains) {
    throw DataError("dataset has " + std::to_string(found) + " domains, config expects " +
                    std::to_string(trainer->config().n_domains));
  }
  const auto samples = read_dataset_folder(a.data, trainer->config().n_domains);
  const auto result = trainer->train(samples, a.out);
  for (const auto& row : result.metrics) {
    std::printf("step %llu  nmse %.6f  ssim %.6f\n", static_cast<unsigned long long>(row.step), row.nmse, row.ssim);
  }
  std::cout << "wrote " << (fs::path(a.out) / "final.clgn").string() << "\n";
  return 0;
}

struct ImputeArgs {
  std::string ckpt;
  std::vector<std::string> inputs;
  std::size_t target = 0;
  std::string out;
};

int cmd_impute(const ImputeArgs& a) {
  print_resolved("impute", {{"ckpt", a.ckpt},
                            {"inputs", [&] {
                               std::string s;
                               for (const auto& i : a.inputs) s += (s.empty() ? "" : " ") + i;
                               return s;
                             }()},
                            {"target", std::to_string(a.target)},
                            {"out", a.out}});
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const TrainConfig config = TrainConfig::from_text(ckpt.config_text);
  const std::size_t n = config.n_domains;
  if (a.inputs.size() != n) {
    throw ConfigError("--inputs needs " + std::to_string(n) + " entries (use '-' for a missing domain), got " +
                      std::to_string(a.inputs.size()));
  }
  if (a.target >= n) throw ConfigError("--target must be below " + std::to_string(n));
  DomainSample sample;
  sample.subject_id = "input";
  std::optional<Shape> shape;
  for (std::size_t d = 0; d < n; ++d) {
    const bool given = a.inputs[d] != "-" && d != a.target;
    sample.available.push_back(given);
    sample.images.push_back(given ? read_image(a.inputs[d]) : Tensor());
    if (given) {
      if (!shape) shape = sample.images[d].shape();
      if (sample.images[d].shape() != *shape) throw DataError("input images differ in shape");
    }
  }
  if (!shape) throw DataError("no information to impute from: every complement input is missing");
  const Shape expected{config.in_channels, config.image_size, config.image_size};
  if (*shape != expected) {
    throw DataError("input shape " + shape_str(*shape) + " does not match the model's " + shape_str(expected));
  }
  for (std::size_t d = 0; d < n; ++d) {
    if (!sample.available[d]) sample.images[d] = Tensor(*shape);
  }
  const Generator<float> generator = load_generator(ckpt);
  const Tensor image = impute(generator, sample, a.target);
  write_image(a.out, image);
  std::ofstream side(a.out + ".slots.txt", std::ios::trunc);
  std::size_t live = 0;
  for (std::size_t d = 0; d < n; ++d) {
    const char* state = d == a.target ? "target" : (sample.available[d] ? "live" : "nulled");
    if (d != a.target && sample.available[d]) ++live;
    side << "slot " << d << " " << state << "\n";
  }
  side << "live " << live << "\n";
  if (!side) throw DataError("failed writing slot sidecar");
  std::cout << "wrote " << a.out << " (" << live << " live inputs)\n";
  return 0;
}

struct EvaluateArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  bool oracle = false;
  std::string subjects = "test";
  std::size_t live_inputs = 0;
  std::size_t montage_rows = 4;
};

int cmd_evaluate(const EvaluateArgs& a) {
  print_resolved("evaluate", {{"ckpt", a.ckpt},
                              {"data", a.data},
                              {"out", a.out},
                              {"oracle", a.oracle ? "true" : "false"},
                              {"subjects", a.subjects},
                              {"live_inputs", std::to_string(a.live_inputs)},
                              {"montage_rows", std::to_string(a.montage_rows)}});
  if (a.ckpt.empty() && !a.oracle) throw ConfigError("evaluate needs --ckpt or --oracle");
  if (a.subjects != "test" && a.subjects != "all") throw ConfigError("--subjects must be 'test' or 'all'");
  std::optional<Checkpoint> ckpt;
  std::optional<TrainConfig> config;
  if (!a.ckpt.empty()) {
    ckpt = load_checkpoint(a.ckpt);
    config = TrainConfig::from_text(ckpt->config_text);
  }
  const std::size_t n = config ? config->n_domains : detect_domain_count(a.data);
  const auto samples = read_dataset_folder(a.data, n);
  std::vector<const DomainSample*> chosen;
  if (a.subjects == "test" && config) {
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.subject_id);
    chosen = select_subjects(samples, split_by_subject(ids, config->split, config->seed).test);
  }
  if (chosen.empty()) {
    for (const auto& s : samples) chosen.push_back(&s);
  }
  std::optional<Generator<float>> generator;
  Predictor predictor;
  if (a.oracle) {
    predictor = oracle_predictor();
  } else {
    generator.emplace(load_generator(*ckpt));
    predictor = generator_predictor(*generator);
  }
  const auto table = evaluate(predictor, chosen, a.live_inputs);
  fs::create_directories(a.out);
  write_domain_table(fs::path(a.out) / "evaluation.csv", table);
  std::cout << format_domain_table(table);
  const std::size_t rows = std::min(a.montage_rows, chosen.size());
  for (std::size_t target = 0; target < n && rows > 0; ++target) {
    std::vector<Tensor> montage;
    for (std::size_t i = 0; i < rows; ++i) {
      montage.push_back(montage_row(*chosen[i], target, predictor(*chosen[i], target, {})));
    }
    write_image(fs::path(a.out) / ("montage_target" + std::to_string(target) + (montage[0].dim(0) == 1 ? ".pgm" : ".ppm")),
                stack_rows(montage));
  }
  std::cout << "wrote " << (fs::path(a.out) / "evaluation.csv").string() << "\n";
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 1;
  double tolerance = 0.0;
  std::string precision = "both";
};

int cmd_gradcheck(const GradcheckArgs& a) {
  print_resolved("gradcheck", {{"seed", std::to_string(a.seed)},
                               {"tolerance", a.tolerance > 0 ? std::to_string(a.tolerance) : "default"},
                               {"precision", a.precision}});
  if (a.precision != "64" && a.precision != "32" && a.precision != "both") {
    throw ConfigError("--precision must be 64, 32 or both");
  }
  GradCheckOptions options;
  options.seed = a.seed;
  options.tolerance = a.tolerance;
  std::size_t failures = 0;
  auto report = [&](const char* label, const std::vector<GradCheckResult>& results) {
    for (const auto& r : results) {
      std::printf("%s %-26s max_rel_error %.3e  tolerance %.0e  %s\n", label, r.name.c_str(), r.max_rel_error,
                  r.tolerance, r.passed ? "ok" : "FAILED");
      if (!r.passed) ++failures;
    }
  };
  if (a.precision != "32") report("f64", run_gradcheck_suite<double>(options));
  if (a.precision != "64") report("f32", run_gradcheck_suite<float>(options));
  if (failures > 0) {
    std::printf("%zu op(s) failed\n", failures);
    return kExitNumerical;
  }
  std::printf("all ops within tolerance\n");
  return 0;
}

struct MetricsArgs {
  std::string a;
  std::string b;
};

int cmd_metrics(const MetricsArgs& m) {
  print_resolved("metrics", {{"a", m.a}, {"b", m.b}});
  const Tensor64 x = cast_tensor<double>(read_image(m.a));
  const Tensor64 ref = cast_tensor<double>(read_image(m.b));
  if (x.shape() != ref.shape()) {
    throw ShapeError("images differ in shape: " + shape_str(x.shape()) + " vs " + shape_str(ref.shape()));
  }
  std::printf("nmse=%.6g ssim=%.6g\n", nmse(x, ref), mean_ssim(x, ref, SsimConfig{}));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain missing-image imputation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic multi-domain dataset");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--subjects", gen.subjects, "Number of subjects");
  gen_cmd->add_option("--domains", gen.domains, "Number of domains (at most 5)");
  gen_cmd->add_option("--size", gen.size, "Image height and width");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_flag("--force", gen.force, "Write into a non-empty directory");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Pretrain the classifier, then train jointly");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--config", train.config, "key = value config file");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--set", train.set, "Config override key=value (repeatable)");
  train_cmd->add_option("--joint-steps", train.joint_steps, "Override joint_steps");
  train_cmd->add_option("--seed", train.seed, "Override seed");
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");

  ImputeArgs imp;
  auto* impute_cmd = app.add_subcommand("impute", "Impute one missing domain image");
  impute_cmd->add_option("--ckpt", imp.ckpt, "Checkpoint")->required();
  impute_cmd->add_option("--inputs", imp.inputs, "One image path per domain, '-' when missing")->required();
  impute_cmd->add_option("--target", imp.target, "Domain index to impute")->required();
  impute_cmd->add_option("--out", imp.out, "Output image path")->required();

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Per-domain NMSE/SSIM table and montages");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_flag("--oracle", ev.oracle, "Use the ground-truth passthrough model");
  eval_cmd->add_option("--subjects", ev.subjects, "'test' (split from the checkpoint config) or 'all'");
  eval_cmd->add_option("--live-inputs", ev.live_inputs, "Complement domains kept live (0 = all)");
  eval_cmd->add_option("--montage-rows", ev.montage_rows, "Samples per montage");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op, layer and loss");
  gc_cmd->add_option("--seed", gc.seed, "Random seed");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Max relative error (default 1e-5 in 64-bit, 1e-3 in 32-bit)");
  gc_cmd->add_option("--precision", gc.precision, "64, 32 or both");

  MetricsArgs met;
  auto* met_cmd = app.add_subcommand("metrics", "NMSE and mean SSIM of --a against reference --b");
  met_cmd->add_option("--a", met.a, "Image")->required();
  met_cmd->add_option("--b", met.b, "Reference image")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train);
    if (*impute_cmd) return cmd_impute(imp);
    if (*eval_cmd) return cmd_evaluate(ev);
    if (*gc_cmd) return cmd_gradcheck(gc);
    if (*met_cmd) return cmd_metrics(met);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
