#include "deshadow/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "deshadow/config.hpp"
#include "deshadow/dataset.hpp"
#include "deshadow/error.hpp"
#include "deshadow/evaluation.hpp"
#include "deshadow/image.hpp"
#include "deshadow/masking.hpp"
#include "deshadow/profiling.hpp"
#include "deshadow/training.hpp"
#include "deshadow/weights_file.hpp"

namespace deshadow::cli {

namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "override, key=value (repeatable)");
}

// Built-in defaults, then the file, then --set, then dedicated flags.
Config resolve_config(const ConfigArgs& args) {
  Config config = Config::defaults();
  if (!args.config_path.empty()) config.load_file(args.config_path);
  for (const auto& o : args.overrides) config.apply_override(o);
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
}

// Records the invocation next to the artifacts it produced.
void write_run_record(const fs::path& dir, const std::string& command, int argc, const char* const* argv,
                      const std::string& config_text) {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["command"] = command;
  std::vector<std::string> args(argv, argv + argc);
  j["argv"] = args;
  if (!config_text.empty()) j["config"] = config_text;
  write_text(dir / "run.json", j.dump(2) + "\n");
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Config, "input directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_prediction(const fs::path& path, const torch::Tensor& image, bool float_output) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (float_output) {
    fs::path pfm = path;
    pfm.replace_extension(".pfm");
    write_image(pfm, denormalize_image_float(image));
  } else {
    write_image(path, denormalize_image(image));
  }
}

struct TrainArgs {
  ConfigArgs config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string data_root;
  std::string layout;
  std::optional<bool> deterministic;
  std::string resume;
  std::optional<std::int64_t> max_g_steps;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  Config config = resolve_config(a.config);
  if (a.seed) config.set("seed", std::to_string(*a.seed));
  if (!a.data_root.empty()) config.set("data.root", a.data_root);
  if (!a.layout.empty()) config.set("data.layout", a.layout);
  if (a.deterministic) config.set("deterministic", *a.deterministic ? "true" : "false");
  if (a.max_g_steps) config.set("max_g_steps", std::to_string(*a.max_g_steps));

  const fs::path dir = a.output_dir;
  fs::create_directories(dir);
  const std::string text = config.to_text();
  write_text(dir / "config.cfg", text);
  err << "resolved config written to " << (dir / "config.cfg").string() << '\n';

  const TrainConfig train = to_train_config(config);
  TrainData data = prepare_training_data(train);
  err << "train records: " << data.train.size() << ", scenes: " << data.train.scene_ids().size()
      << ", pairs: " << data.pairs.size() << ", references: " << data.references.size() << '\n';
  if (data.validation) err << "validation records: " << data.validation->size() << '\n';

  Trainer trainer(train, std::move(data), load_backbones(train), text);
  if (!a.resume.empty()) {
    trainer.load_checkpoint(a.resume);
    err << "resumed at epoch " << trainer.epoch() << ", generator step " << trainer.g_steps() << '\n';
  } else {
    std::ofstream(dir / "metrics.jsonl", std::ios::trunc);
  }
  const auto checkpoints = trainer.run(dir);
  for (const auto& c : checkpoints) out << c.string() << '\n';
  return kExitOk;
}

struct InferArgs {
  std::string checkpoint, input, output, input_dir, output_dir;
  bool float_output = false;
};

int cmd_infer(const InferArgs& a, int argc, const char* const* argv, std::ostream& out) {
  const bool single = !a.input.empty();
  if (single == !a.input_dir.empty())
    fail(ErrorKind::Usage, "give either --input/--output or --input-dir/--output-dir");
  if (single && a.output.empty()) fail(ErrorKind::Usage, "--output is required with --input");
  if (!single && a.output_dir.empty()) fail(ErrorKind::Usage, "--output-dir is required with --input-dir");

  auto model = load_inference_model(a.checkpoint);
  if (single) {
    write_prediction(a.output, model(load_image_tensor(a.input)), a.float_output);
    out << a.output << '\n';
    return kExitOk;
  }
  write_run_record(a.output_dir, "infer", argc, argv, model.config_text);
  for (const auto& in : list_images(a.input_dir)) {
    fs::path target = fs::path(a.output_dir) / in.filename();
    target.replace_extension(".png");
    write_prediction(target, model(load_image_tensor(in)), a.float_output);
  }
  out << a.output_dir << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string pred_dir, checkpoint, data_root, layout = "istd", split = "test", out, output_dir;
  int threads = 1;
};

int cmd_eval(const EvalArgs& a, int argc, const char* const* argv, std::ostream& out) {
  if (a.pred_dir.empty() == a.checkpoint.empty()) fail(ErrorKind::Usage, "give exactly one of --pred-dir, --checkpoint");
  const auto manifest = load_manifest(a.data_root, parse_split(a.split), parse_layout(a.layout));
  EvalReport report;
  if (!a.pred_dir.empty()) {
    report = evaluate(manifest, predictions_from_directory(a.pred_dir), a.threads);
  } else {
    auto model = load_inference_model(a.checkpoint);
    PredictionSource source;
    source.available = [](const ManifestRecord&) { return true; };
    source.load = [&model](const ManifestRecord& r) {
      return denormalize_image(model(load_image_tensor(r.shadow_path)));
    };
    report = evaluate(manifest, source, a.threads);
  }
  auto json = report.to_json();
  if (!a.output_dir.empty()) {
    write_run_record(a.output_dir, "eval", argc, argv, {});
    write_text(fs::path(a.output_dir) / "report.json", json.dump(2) + "\n");
  }
  if (!a.out.empty()) {
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    write_text(a.out, json.dump(2) + "\n");
  }
  json.erase("images");
  out << json.dump(2) << '\n';
  return kExitOk;
}

struct MaskArgs {
  std::string input, prediction, checkpoint, out;
};

int cmd_mask(const MaskArgs& a, std::ostream& out) {
  if (a.prediction.empty() == a.checkpoint.empty())
    fail(ErrorKind::Usage, "give exactly one of --prediction, --checkpoint");
  const auto input = load_image_tensor(a.input);
  torch::Tensor output;
  if (!a.prediction.empty()) {
    output = load_image_tensor(a.prediction);
    if (image_size(output) != image_size(input)) fail(ErrorKind::Shape, "prediction and input sizes differ");
  } else {
    auto model = load_inference_model(a.checkpoint);
    output = model(input);
  }
  const auto mask = compute_shadow_mask(input, output).values().reshape({input.size(-2), input.size(-1)});
  const auto bytes = (mask * 255).to(torch::kUInt8).contiguous();
  cv::Mat image(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1, bytes.data_ptr());
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_image(a.out, image.clone());
  out << a.out << '\n';
  return kExitOk;
}

struct ProfileArgs {
  ConfigArgs config;
  int height = 480, width = 640;
  std::string compare;
};

// Lines of `name <TAB> params <TAB> train_gflops`; `#` starts a comment.
struct PublishedModel {
  std::string name;
  double params = 0.0;
  double gflops = 0.0;
};

std::vector<PublishedModel> read_comparison(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read comparison file " + path.string());
  std::vector<PublishedModel> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    PublishedModel m;
    std::string params, gflops;
    if (!std::getline(fields, m.name, '\t') || !std::getline(fields, params, '\t') || !std::getline(fields, gflops))
      fail(ErrorKind::Data, path.string() + ":" + std::to_string(number) + ": expected name<TAB>params<TAB>gflops");
    try {
      m.params = std::stod(params);
      m.gflops = std::stod(gflops);
    } catch (const std::exception&) {
      fail(ErrorKind::Data, path.string() + ":" + std::to_string(number) + ": not a number");
    }
    rows.push_back(m);
  }
  return rows;
}

int cmd_profile(const ProfileArgs& a, std::ostream& out) {
  const auto train = to_train_config(resolve_config(a.config));
  if (a.height <= 0 || a.width <= 0) fail(ErrorKind::Usage, "resolution must be positive");
  const auto weights = train.effective_weights();
  const auto report = profile(train.generator, train.critic, {a.height, a.width}, train.d_steps_per_g,
                              train.vgg19_taps, weights.perc > 0.0, weights.feat > 0.0);
  out << report.to_json().dump(2) << '\n';
  if (a.compare.empty()) return kExitOk;

  auto rows = read_comparison(a.compare);
  rows.push_back({"this model", static_cast<double>(report.total_params), report.train_step_gflops});
  out << '\n' << std::left << std::setw(24) << "model" << std::right << std::setw(16) << "params (M)"
      << std::setw(16) << "train GFLOPS" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(24) << r.name << std::right << std::fixed << std::setprecision(2) << std::setw(16)
        << r.params / 1e6 << std::setw(16) << r.gflops << '\n';
  }
  return kExitOk;
}

int cmd_make_backbone(const std::string& variant, std::uint64_t seed, const std::string& path, std::ostream& out) {
  const fs::path target = path;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  write_weights_file(target, FeatureBackboneImpl::random_weights(parse_backbone_variant(variant), seed));
  out << sha256_file(target) << "  " << target.string() << '\n';
  return kExitOk;
}

int cmd_manifest(const std::string& root, const std::string& split, const std::string& layout, const std::string& path,
                 std::ostream& out) {
  const auto manifest = load_manifest(root, parse_split(split), parse_layout(layout));
  if (path.empty()) {
    write_manifest(out, manifest);
  } else {
    std::ofstream file(path, std::ios::trunc);
    write_manifest(file, manifest);
    if (!file) fail(ErrorKind::Io, "cannot write " + path);
  }
  return kExitOk;
}

int cmd_count_pairs(const std::string& root, const std::string& layout, std::ostream& out) {
  const auto manifest = load_manifest(root, Split::Train, parse_layout(layout));
  nlohmann::ordered_json j;
  j["records"] = manifest.size();
  j["scenes"] = manifest.scene_ids().size();
  j["pairs"] = expected_pair_count(manifest);
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_select_best(const ConfigArgs& config_args, const std::vector<std::string>& checkpoints, int threads,
                    std::ostream& out) {
  const auto train = to_train_config(resolve_config(config_args));
  const auto manifest = load_manifest(train.data_root, Split::Train, train.layout);
  const auto [rest, validation] = split_validation(manifest, train.val_fraction);
  if (!validation) fail(ErrorKind::Config, "val_fraction leaves no validation scenes");
  std::vector<fs::path> paths(checkpoints.begin(), checkpoints.end());
  out << paths[select_best_checkpoint(paths, *validation, threads)].string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised shadow removal: train, infer, eval, mask, profile"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train generator and critic");
  add_config_options(train_cmd, train.config);
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--output-dir", train.output_dir)->required();
  train_cmd->add_option("--data-root", train.data_root);
  train_cmd->add_option("--layout", train.layout, "istd or aistd");
  train_cmd->add_flag("--deterministic,!--no-deterministic", train.deterministic);
  train_cmd->add_option("--resume", train.resume, "checkpoint to continue from");
  train_cmd->add_option("--max-g-steps", train.max_g_steps);

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "de-shadow images with a trained generator");
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint)->required();
  infer_cmd->add_option("--input", infer_args.input);
  infer_cmd->add_option("--output", infer_args.output);
  infer_cmd->add_option("--input-dir", infer_args.input_dir);
  infer_cmd->add_option("--output-dir", infer_args.output_dir);
  infer_cmd->add_flag("--float-output", infer_args.float_output, "write float PFM instead of 8-bit");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Lab-space error against ground truth");
  eval_cmd->add_option("--pred-dir", eval.pred_dir);
  eval_cmd->add_option("--checkpoint", eval.checkpoint);
  eval_cmd->add_option("--data-root", eval.data_root)->required();
  eval_cmd->add_option("--layout", eval.layout);
  eval_cmd->add_option("--split", eval.split);
  eval_cmd->add_option("--out", eval.out, "full JSON report path");
  eval_cmd->add_option("--output-dir", eval.output_dir);
  eval_cmd->add_option("--threads", eval.threads)->check(CLI::PositiveNumber);

  MaskArgs mask;
  auto* mask_cmd = app.add_subcommand("mask", "Otsu shadow mask of an input/output pair");
  mask_cmd->add_option("--input", mask.input)->required();
  mask_cmd->add_option("--prediction", mask.prediction);
  mask_cmd->add_option("--checkpoint", mask.checkpoint);
  mask_cmd->add_option("--out", mask.out)->required();

  ProfileArgs prof;
  auto* profile_cmd = app.add_subcommand("profile", "parameter counts and train-time GFLOPS");
  add_config_options(profile_cmd, prof.config);
  profile_cmd->add_option("--height", prof.height);
  profile_cmd->add_option("--width", prof.width);
  profile_cmd->add_option("--compare", prof.compare, "published numbers: name<TAB>params<TAB>gflops");

  std::string variant, backbone_out;
  std::uint64_t backbone_seed = 0;
  auto* backbone_cmd = app.add_subcommand("make-backbone", "write randomly initialized VGG weights");
  backbone_cmd->add_option("--variant", variant)->required();
  backbone_cmd->add_option("--seed", backbone_seed);
  backbone_cmd->add_option("--out", backbone_out)->required();

  std::string m_root, m_split = "train", m_layout = "istd", m_out;
  auto* manifest_cmd = app.add_subcommand("manifest", "list dataset records as TSV");
  manifest_cmd->add_option("--data-root", m_root)->required();
  manifest_cmd->add_option("--split", m_split);
  manifest_cmd->add_option("--layout", m_layout);
  manifest_cmd->add_option("--out", m_out);

  std::string c_root, c_layout = "istd";
  auto* count_cmd = app.add_subcommand("count-pairs", "records, scenes and training pairs of a train split");
  count_cmd->add_option("--data-root", c_root)->required();
  count_cmd->add_option("--layout", c_layout);

  ConfigArgs select_config;
  std::vector<std::string> select_checkpoints;
  int select_threads = 1;
  auto* select_cmd = app.add_subcommand("select-best", "checkpoint with the lowest validation RMSE(A)");
  add_config_options(select_cmd, select_config);
  select_cmd->add_option("checkpoints", select_checkpoints)->required();
  select_cmd->add_option("--threads", select_threads)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << error_kind_name(ErrorKind::Usage) << ": " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train, out, err);
    if (*infer_cmd) return cmd_infer(infer_args, argc, argv, out);
    if (*eval_cmd) return cmd_eval(eval, argc, argv, out);
    if (*mask_cmd) return cmd_mask(mask, out);
    if (*profile_cmd) return cmd_profile(prof, out);
    if (*backbone_cmd) return cmd_make_backbone(variant, backbone_seed, backbone_out, out);
    if (*manifest_cmd) return cmd_manifest(m_root, m_split, m_layout, m_out, out);
    if (*count_cmd) return cmd_count_pairs(c_root, c_layout, out);
    if (*select_cmd) return cmd_select_best(select_config, select_checkpoints, select_threads, out);
  } catch (const Error& e) {
    err << "error: " << error_kind_name(e.kind()) << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::Usage ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::string message = e.what();
    message = message.substr(0, message.find('\n'));
    err << "error: runtime_error: " << message << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace deshadow::cli
