#include "deshadow/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deshadow/error.hpp"

namespace deshadow {

const std::vector<std::pair<std::string, std::string>>& config_schema() {
  static const std::vector<std::pair<std::string, std::string>> schema = {
      {"seed", "0"},
      {"deterministic", "true"},
      {"epochs", "30"},
      {"lr", "0.0005"},
      {"lr_step", "10"},
      {"lr_gamma", "0.1"},
      {"adam_beta1", "0.0"},
      {"adam_beta2", "0.9"},
      {"d_steps_per_g", "5"},
      {"batch_size", "1"},
      {"max_g_steps", "0"},
      {"max_pairs_per_epoch", "0"},
      {"checkpoint_every_g_steps", "0"},
      {"val_fraction", "0.1"},
      {"lambda_gp", "10"},
      {"lambda_os", "1"},
      {"lambda_perc", "2"},
      {"lambda_sfr", "5"},
      {"lambda_feat", "2"},
      {"lambda_id", "1"},
      {"use_os", "true"},
      {"use_perc", "true"},
      {"use_sfr", "true"},
      {"use_feat", "true"},
      {"use_id", "true"},
      {"data.root", ""},
      {"data.layout", "istd"},
      {"data.resize", ""},
      {"data.reference_dir", ""},
      {"data.cache_mb", "1024"},
      {"compose.activation", "clamp"},
      {"generator.base_width", "64"},
      {"generator.num_downsamples", "3"},
      {"generator.num_residual_blocks", "9"},
      {"generator.pad_to_divisible", "true"},
      {"critic.base_width", "64"},
      {"critic.max_width", "512"},
      {"critic.num_scales", "2"},
      {"critic.layers_per_scale", "4"},
      {"backbone.vgg19.path", "vgg19.dsw"},
      {"backbone.vgg19.sha256", ""},
      {"backbone.vgg19.taps", "conv1_2,conv2_2,conv3_2,conv4_2,conv5_2"},
      {"backbone.vgg16.path", "vgg16.dsw"},
      {"backbone.vgg16.sha256", ""},
      {"trace.param_checksums", "false"},
  };
  return schema;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const auto& [k, v] : config_schema()) c.values_[k] = v;
  return c;
}

Config Config::from_text(std::string_view text) {
  Config c = defaults();
  c.merge_text(text, "<text>");
  return c;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void Config::merge_text(std::string_view text, std::string_view origin) {
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Config, std::string(origin) + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) fail(ErrorKind::Config, "unknown config key '" + key + "'");
  values_[key] = value;
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) fail(ErrorKind::Config, "override must be key=value: " + std::string(assignment));
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::Config, "unknown config key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    auto out = std::stoll(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Config, "config key '" + key + "' expects an integer, got '" + v + "'");
}

double Config::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    auto out = std::stod(v, &used);
    if (used == v.size() && std::isfinite(out)) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Config, "config key '" + key + "' expects a number, got '" + v + "'");
}

bool Config::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::Config, "config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, _] : config_schema()) out += k + " = " + values_.at(k) + "\n";
  return out;
}

std::optional<ImageSize> parse_size(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  const auto x = t.find('x');
  try {
    if (x != std::string::npos) {
      ImageSize s{std::stoi(t.substr(x + 1)), std::stoi(t.substr(0, x))};
      if (s.width > 0 && s.height > 0) return s;
    }
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Config, "size must be WxH, got '" + t + "'");
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (!use_os) w.os = 0.0;
  if (!use_perc) w.perc = 0.0;
  if (!use_sfr) w.sfr = 0.0;
  if (!use_feat) w.feat = 0.0;
  if (!use_id) w.id = 0.0;
  return w;
}

double TrainConfig::learning_rate_at(int epoch) const {
  return lr * std::pow(lr_gamma, static_cast<double>(epoch / lr_step));
}

TrainConfig to_train_config(const Config& c) {
  TrainConfig t;
  t.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  t.deterministic = c.get_bool("deterministic");
  t.epochs = static_cast<int>(c.get_int("epochs"));
  t.lr = c.get_double("lr");
  t.lr_step = static_cast<int>(c.get_int("lr_step"));
  t.lr_gamma = c.get_double("lr_gamma");
  t.adam_beta1 = c.get_double("adam_beta1");
  t.adam_beta2 = c.get_double("adam_beta2");
  t.d_steps_per_g = static_cast<int>(c.get_int("d_steps_per_g"));
  t.batch_size = static_cast<int>(c.get_int("batch_size"));
  t.max_g_steps = c.get_int("max_g_steps");
  t.max_pairs_per_epoch = c.get_int("max_pairs_per_epoch");
  t.checkpoint_every_g_steps = c.get_int("checkpoint_every_g_steps");
  t.val_fraction = c.get_double("val_fraction");

  t.weights.gp = c.get_double("lambda_gp");
  t.weights.os = c.get_double("lambda_os");
  t.weights.perc = c.get_double("lambda_perc");
  t.weights.sfr = c.get_double("lambda_sfr");
  t.weights.feat = c.get_double("lambda_feat");
  t.weights.id = c.get_double("lambda_id");
  t.use_os = c.get_bool("use_os");
  t.use_perc = c.get_bool("use_perc");
  t.use_sfr = c.get_bool("use_sfr");
  t.use_feat = c.get_bool("use_feat");
  t.use_id = c.get_bool("use_id");

  t.data_root = c.get("data.root");
  t.layout = parse_layout(c.get("data.layout"));
  t.resize = parse_size(c.get("data.resize"));
  t.reference_dir = c.get("data.reference_dir");
  t.cache_bytes = static_cast<std::size_t>(c.get_int("data.cache_mb")) << 20;

  t.compose = parse_compose_activation(c.get("compose.activation"));
  t.generator.base_width = static_cast<int>(c.get_int("generator.base_width"));
  t.generator.num_downsamples = static_cast<int>(c.get_int("generator.num_downsamples"));
  t.generator.num_residual_blocks = static_cast<int>(c.get_int("generator.num_residual_blocks"));
  t.generator.pad_to_divisible = c.get_bool("generator.pad_to_divisible");
  t.critic.base_width = static_cast<int>(c.get_int("critic.base_width"));
  t.critic.max_width = static_cast<int>(c.get_int("critic.max_width"));
  t.critic.num_scales = static_cast<int>(c.get_int("critic.num_scales"));
  t.critic.layers_per_scale = static_cast<int>(c.get_int("critic.layers_per_scale"));

  std::filesystem::path backbone_dir;
  if (const char* env = std::getenv("DESHADOW_BACKBONE_DIR")) backbone_dir = env;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_relative() && !backbone_dir.empty()) ? backbone_dir / path : path;
  };
  t.vgg19_path = resolve(c.get("backbone.vgg19.path"));
  t.vgg16_path = resolve(c.get("backbone.vgg16.path"));
  t.vgg19_sha256 = c.get("backbone.vgg19.sha256");
  t.vgg16_sha256 = c.get("backbone.vgg16.sha256");
  t.vgg19_taps = split_list(c.get("backbone.vgg19.taps"));
  t.trace_param_checksums = c.get_bool("trace.param_checksums");

  if (t.d_steps_per_g < 1) fail(ErrorKind::Config, "d_steps_per_g must be >= 1");
  if (!(t.lr > 0.0)) fail(ErrorKind::Config, "lr must be positive");
  if (t.adam_beta1 < 0.0 || t.adam_beta1 >= 1.0 || t.adam_beta2 < 0.0 || t.adam_beta2 >= 1.0) {
    fail(ErrorKind::Config, "adam betas must lie in [0, 1)");
  }
  if (t.lr_step < 1) fail(ErrorKind::Config, "lr_step must be >= 1");
  if (t.epochs < 1) fail(ErrorKind::Config, "epochs must be >= 1");
  if (t.batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
  for (double w : {t.weights.gp, t.weights.os, t.weights.perc, t.weights.sfr, t.weights.feat, t.weights.id}) {
    if (w < 0.0) fail(ErrorKind::Config, "loss weights must be non-negative");
  }
  if (t.vgg19_taps.empty()) fail(ErrorKind::Config, "backbone.vgg19.taps must list at least one layer");
  return t;
}

}  // namespace deshadow
