#include "deshadow/training.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deshadow/error.hpp"
#include "deshadow/evaluation.hpp"
#include "deshadow/masking.hpp"

namespace fs = std::filesystem;

namespace deshadow {

void configure_runtime(bool deterministic, std::uint64_t seed) {
  torch::manual_seed(seed);
  if (deterministic) at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/false);
}

TrainData prepare_training_data(const TrainConfig& config) {
  if (config.data_root.empty()) fail(ErrorKind::Config, "data.root is not set");
  auto manifest = load_manifest(config.data_root, Split::Train, config.layout);
  auto [train, validation] = split_validation(manifest, config.val_fraction);
  auto pairs = build_training_pairs(train, config.seed);
  auto references = config.reference_dir.empty() ? reference_pool_from_manifest(train)
                                                  : reference_pool_from_directory(config.reference_dir);
  if (references.empty()) fail(ErrorKind::Data, "reference pool is empty");
  return TrainData{std::move(train), std::move(validation), std::move(pairs), std::move(references)};
}

Backbones load_backbones(const TrainConfig& config) {
  Backbones b;
  const auto w = config.effective_weights();
  if (w.perc != 0.0) {
    b.vgg19 = load_backbone(BackboneVariant::Vgg19Multiscale, config.vgg19_path,
                            config.vgg19_sha256.empty() ? std::nullopt : std::optional(config.vgg19_sha256),
                            config.vgg19_taps);
  }
  if (w.feat != 0.0) {
    b.vgg16 = load_backbone(BackboneVariant::Vgg16Conv22, config.vgg16_path,
                            config.vgg16_sha256.empty() ? std::nullopt : std::optional(config.vgg16_sha256));
  }
  return b;
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j["kind"] = r.kind == StepKind::Critic ? "d" : "g";
  j["step"] = r.step;
  j["g_step"] = r.g_step;
  j["d_step"] = r.d_step;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["l_g"] = opt(r.losses.l_g);
  j["l_os"] = opt(r.losses.l_os);
  j["l_perc"] = opt(r.losses.l_perc);
  j["l_sfr"] = opt(r.losses.l_sfr);
  j["l_feat"] = opt(r.losses.l_feat);
  j["l_id"] = opt(r.losses.l_id);
  j["total"] = opt(r.losses.total);
  j["l_d"] = opt(r.losses.l_d);
  j["wasserstein"] = opt(r.losses.wasserstein);
  j["gp"] = opt(r.losses.gp);
  if (r.score_fake) j["score_fake"] = *r.score_fake;
  if (r.score_real) j["score_real"] = *r.score_real;
  if (r.checksum_before_a) j["checksum_before_a"] = *r.checksum_before_a;
  if (r.checksum_between_branches) j["checksum_between_branches"] = *r.checksum_between_branches;
  return j.dump();
}

Trainer::Trainer(TrainConfig config, TrainData data, Backbones backbones, std::string resolved_config)
    : config_(std::move(config)),
      data_(std::move(data)),
      backbones_(std::move(backbones)),
      resolved_config_(std::move(resolved_config)),
      cache_(config_.resize, config_.cache_bytes) {
  configure_runtime(config_.deterministic, config_.seed);
  generator_ = Generator(config_.generator);
  critic_ = Critic(config_.critic);
  const auto betas = std::make_tuple(config_.adam_beta1, config_.adam_beta2);
  optim_g_ = std::make_unique<torch::optim::Adam>(generator_->parameters(),
                                                  torch::optim::AdamOptions(config_.lr).betas(betas));
  optim_d_ = std::make_unique<torch::optim::Adam>(critic_->parameters(),
                                                  torch::optim::AdamOptions(config_.lr).betas(betas));
  const auto w = config_.effective_weights();
  if (w.perc != 0.0 && !backbones_.vgg19) fail(ErrorKind::Backbone, "perceptual loss enabled but no VGG-19 loaded");
  if (w.feat != 0.0 && !backbones_.vgg16) fail(ErrorKind::Backbone, "feature loss enabled but no VGG-16 loaded");
  if (pairs_per_epoch() < config_.batch_size) fail(ErrorKind::Config, "fewer pairs per epoch than batch_size");
  apply_learning_rate();
}

std::int64_t Trainer::pairs_per_epoch() const {
  auto n = static_cast<std::int64_t>(data_.pairs.size());
  return config_.max_pairs_per_epoch > 0 ? std::min(n, config_.max_pairs_per_epoch) : n;
}

std::vector<ScenePair> Trainer::epoch_order(int epoch) const {
  auto order = data_.pairs;
  Rng rng = Rng::for_counter(config_.seed, streams::kEpochShuffle, static_cast<std::uint64_t>(epoch));
  rng.shuffle(std::span<ScenePair>(order));
  return order;
}

void Trainer::apply_learning_rate() {
  const double lr = current_lr();
  for (auto* opt : {optim_g_.get(), optim_d_.get()}) {
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

CriticFn Trainer::critic_fn() {
  return [this](const torch::Tensor& x) { return reduce_scores(critic_->forward(x)); };
}

torch::Tensor Trainer::load_images(std::span<const fs::path> paths) {
  std::vector<torch::Tensor> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(cache_.load(p));
  return torch::stack(images);
}

PairBatch Trainer::load_pairs(std::span<const ScenePair> pairs) {
  PairBatch batch;
  std::vector<fs::path> a, b;
  for (const auto& p : pairs) {
    batch.scene_ids.push_back(p.scene_id);
    a.push_back(data_.train[p.index_a].shadow_path);
    b.push_back(data_.train[p.index_b].shadow_path);
  }
  batch.image_a = load_images(a);
  batch.image_b = load_images(b);
  return batch;
}

torch::Tensor Trainer::branch_forward(const torch::Tensor& image) {
  return compose_output(image, generator_->forward(image), config_.compose);
}

StepRecord Trainer::begin_record(StepKind kind) const {
  StepRecord r;
  r.kind = kind;
  r.step = g_step_ + d_step_;
  r.g_step = g_step_;
  r.d_step = d_step_;
  r.epoch = epoch_;
  r.lr = current_lr();
  return r;
}

void Trainer::guard_finite(const StepRecord& record, const std::vector<torch::Tensor>& batch) const {
  const auto& l = record.losses;
  bool ok = true;
  for (const auto* v : {&l.l_g, &l.l_os, &l.l_perc, &l.l_sfr, &l.l_feat, &l.l_id, &l.total, &l.l_d, &l.wasserstein, &l.gp}) {
    if (*v && !std::isfinite(**v)) ok = false;
  }
  if (ok) return;
  fs::path dir = dump_dir_.empty() ? fs::temp_directory_path() : dump_dir_;
  fs::path dump = dir / ("nonfinite_step" + std::to_string(record.step) + ".pt");
  try {
    torch::save(batch, dump.string());
  } catch (const std::exception&) {
    dump = "<dump failed>";
  }
  fail(ErrorKind::NonFinite, "non-finite loss at step " + std::to_string(record.step) + ": " + to_json_line(record) +
                                 " (batch dumped to " + dump.string() + ")");
}

StepRecord Trainer::train_step_d(const PairBatch& pair, const torch::Tensor& reference, Rng& rng) {
  StepRecord record = begin_record(StepKind::Critic);
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = torch::cat({branch_forward(pair.image_a), branch_forward(pair.image_b)}, 0);
  }
  critic_->train();
  auto loss = adversarial_d(critic_fn(), reference, fake, config_.weights.gp, rng);

  record.losses.l_d = loss.l_d.item<double>();
  record.losses.wasserstein = loss.wasserstein.item<double>();
  record.losses.gp = loss.gp.item<double>();
  record.score_fake = loss.score_fake.item<double>();
  record.score_real = loss.score_real.item<double>();
  guard_finite(record, {pair.image_a, pair.image_b, reference});

  optim_d_->zero_grad();
  loss.l_d.backward();
  optim_d_->step();
  ++d_step_;
  return record;
}

StepRecord Trainer::train_step_g(const PairBatch& pair, const torch::Tensor& identity,
                                 std::span<const std::string> identity_scenes) {
  if (identity_scenes.size() != pair.scene_ids.size()) fail(ErrorKind::Shape, "identity batch size mismatch");
  for (std::size_t i = 0; i < identity_scenes.size(); ++i) {
    if (identity_scenes[i] == pair.scene_ids[i]) {
      fail(ErrorKind::Data, "identity input shares scene '" + identity_scenes[i] + "' with its pair");
    }
  }
  StepRecord record = begin_record(StepKind::Generator);
  const auto w = config_.effective_weights();

  std::vector<torch::Tensor> critic_params = critic_->parameters();
  for (auto& p : critic_params) p.set_requires_grad(false);
  struct Restore {
    std::vector<torch::Tensor>& params;
    ~Restore() {
      for (auto& p : params) p.set_requires_grad(true);
    }
  } restore{critic_params};

  generator_->train();
  if (config_.trace_param_checksums) record.checksum_before_a = parameter_checksum(*generator_);
  auto out_a = branch_forward(pair.image_a);
  if (config_.trace_param_checksums) record.checksum_between_branches = parameter_checksum(*generator_);
  auto out_b = branch_forward(pair.image_b);

  GeneratorTerms terms;
  terms.l_g = adversarial_g(critic_fn(), out_a, out_b);
  if (w.os != 0.0) terms.os = loss_os(out_a, out_b);
  if (w.perc != 0.0) terms.perc = loss_perc(out_a, out_b, backbones_.vgg19);
  if (w.sfr != 0.0) {
    // Masks come from this step's outputs and are constants for the gradient.
    auto keep_a = compute_shadow_mask(pair.image_a, out_a).inverted();
    auto keep_b = compute_shadow_mask(pair.image_b, out_b).inverted();
    terms.sfr = loss_sfr(pair.image_a, out_a, keep_a, pair.image_b, out_b, keep_b);
  }
  if (w.feat != 0.0) terms.feat = loss_feat(pair.image_a, out_a, pair.image_b, out_b, backbones_.vgg16);
  if (w.id != 0.0) terms.id = loss_id(identity, branch_forward(identity));

  auto objective = total_generator_loss(terms, w);
  record.losses = objective.breakdown;
  guard_finite(record, {pair.image_a, pair.image_b, identity});

  optim_g_->zero_grad();
  objective.total.backward();
  optim_g_->step();
  ++g_step_;
  return record;
}

std::vector<StepRecord> Trainer::iterate() {
  if (finished()) fail(ErrorKind::Config, "training already finished");
  if (order_epoch_ != epoch_) {
    order_ = epoch_order(epoch_);
    order_epoch_ = epoch_;
    apply_learning_rate();
  }
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  std::vector<StepRecord> records;

  for (int k = 0; k < config_.d_steps_per_g; ++k) {
    const auto counter = static_cast<std::uint64_t>(d_step_);
    Rng pick = Rng::for_counter(config_.seed, streams::kCriticPair, counter);
    Rng ref_rng = Rng::for_counter(config_.seed, streams::kReference, counter);
    Rng mix = Rng::for_counter(config_.seed, streams::kPenaltyMix, counter);
    std::vector<ScenePair> chosen;
    std::vector<fs::path> refs;
    for (std::size_t i = 0; i < batch; ++i) {
      chosen.push_back(data_.pairs[static_cast<std::size_t>(pick.uniform_index(data_.pairs.size()))]);
      refs.push_back(sample_reference(data_.references, ref_rng).path);
    }
    auto pairs = load_pairs(chosen);
    auto reference = load_images(refs);
    records.push_back(train_step_d(pairs, reference, mix));
  }

  std::span<const ScenePair> slice(order_.data() + cursor_, batch);
  auto pairs = load_pairs(slice);
  Rng id_rng = Rng::for_counter(config_.seed, streams::kIdentity, static_cast<std::uint64_t>(g_step_));
  std::vector<fs::path> id_paths;
  std::vector<std::string> id_scenes;
  for (const auto& p : slice) {
    const auto& rec = data_.train[sample_identity_input(data_.train, p.scene_id, id_rng)];
    id_paths.push_back(*rec.free_path);
    id_scenes.push_back(rec.scene_id);
  }
  records.push_back(train_step_g(pairs, load_images(id_paths), id_scenes));

  cursor_ += config_.batch_size;
  if (cursor_ + config_.batch_size > pairs_per_epoch()) {
    ++epoch_;
    cursor_ = 0;
  }
  return records;
}

bool Trainer::finished() const {
  return epoch_ >= config_.epochs || (config_.max_g_steps > 0 && g_step_ >= config_.max_g_steps);
}

std::vector<fs::path> Trainer::run(const fs::path& output_dir, const std::function<void(const StepRecord&)>& observer) {
  fs::create_directories(output_dir);
  dump_dir_ = output_dir;
  std::ofstream log(output_dir / "metrics.jsonl", std::ios::app);
  if (!log) fail(ErrorKind::Io, "cannot open metrics log in " + output_dir.string());

  std::vector<fs::path> checkpoints;
  auto checkpoint = [&](const std::string& name) {
    auto path = output_dir / name;
    save_checkpoint(path);
    checkpoints.push_back(path);
  };
  while (!finished()) {
    const int epoch_before = epoch_;
    for (const auto& r : iterate()) {
      log << to_json_line(r) << '\n';
      if (observer) observer(r);
    }
    log.flush();
    if (!log) fail(ErrorKind::Io, "failed writing metrics log");
    if (epoch_ != epoch_before) {
      std::ostringstream name;
      name << "ckpt_epoch_" << std::setw(3) << std::setfill('0') << epoch_before << ".pt";
      checkpoint(name.str());
    } else if (config_.checkpoint_every_g_steps > 0 && g_step_ % config_.checkpoint_every_g_steps == 0) {
      std::ostringstream name;
      name << "ckpt_step_" << std::setw(7) << std::setfill('0') << g_step_ << ".pt";
      checkpoint(name.str());
    }
  }
  if (checkpoints.empty() || cursor_ != 0) checkpoint("ckpt_final.pt");
  return checkpoints;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  const fs::path tmp = path.string() + ".tmp";
  try {
    torch::serialize::OutputArchive archive;
    archive.write("format_version", c10::IValue(kCheckpointFormatVersion));
    archive.write("config", c10::IValue(resolved_config_));
    archive.write("epoch", c10::IValue(static_cast<std::int64_t>(epoch_)));
    archive.write("cursor", c10::IValue(cursor_));
    archive.write("g_step", c10::IValue(g_step_));
    archive.write("d_step", c10::IValue(d_step_));
    archive.write("lr", c10::IValue(current_lr()));
    torch::serialize::OutputArchive gen, crit, og, od;
    generator_->save(gen);
    critic_->save(crit);
    optim_g_->save(og);
    optim_d_->save(od);
    archive.write("generator", gen);
    archive.write("critic", crit);
    archive.write("optim_g", og);
    archive.write("optim_d", od);
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove(tmp, ec);
    fail(ErrorKind::Io, "failed to write checkpoint " + path.string() + ": " + e.what());
  }
}

namespace {

std::int64_t read_int(torch::serialize::InputArchive& archive, const std::string& key) {
  c10::IValue v;
  archive.read(key, v);
  return v.toInt();
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
  c10::IValue v;
  archive.read(key, v);
  return v.toStringRef();
}

torch::serialize::InputArchive open_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::Io, "checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const std::exception& e) {
    fail(ErrorKind::Io, "cannot read checkpoint " + path.string() + ": " + e.what());
  }
  const auto version = read_int(archive, "format_version");
  if (version != kCheckpointFormatVersion) {
    fail(ErrorKind::Io, "unsupported checkpoint format version " + std::to_string(version));
  }
  return archive;
}

}  // namespace

void Trainer::load_checkpoint(const fs::path& path) {
  auto archive = open_checkpoint(path);
  torch::serialize::InputArchive gen, crit, og, od;
  archive.read("generator", gen);
  archive.read("critic", crit);
  archive.read("optim_g", og);
  archive.read("optim_d", od);
  generator_->load(gen);
  critic_->load(crit);
  optim_g_->load(og);
  optim_d_->load(od);
  epoch_ = static_cast<int>(read_int(archive, "epoch"));
  cursor_ = read_int(archive, "cursor");
  g_step_ = read_int(archive, "g_step");
  d_step_ = read_int(archive, "d_step");
  order_epoch_ = -1;
  if (!finished()) {
    order_ = epoch_order(epoch_);
    order_epoch_ = epoch_;
  }
  apply_learning_rate();
}

torch::Tensor infer(Generator& generator, const torch::Tensor& image, ComposeActivation activation) {
  torch::NoGradGuard no_grad;
  generator->eval();
  const bool single = image.dim() == 3;
  auto batch = single ? image.unsqueeze(0) : image;
  auto out = compose_output(batch, generator->forward(batch), activation);
  return single ? out[0] : out;
}

InferenceModel load_inference_model(const fs::path& checkpoint) {
  auto archive = open_checkpoint(checkpoint);
  InferenceModel model;
  model.config_text = read_string(archive, "config");
  const auto config = to_train_config(Config::from_text(model.config_text));
  model.compose = config.compose;
  model.epoch = static_cast<int>(read_int(archive, "epoch"));
  model.g_step = read_int(archive, "g_step");
  model.generator = Generator(config.generator);
  torch::serialize::InputArchive gen;
  archive.read("generator", gen);
  model.generator->load(gen);
  model.generator->eval();
  return model;
}

std::size_t select_best_checkpoint(std::span<const fs::path> checkpoints, const DatasetManifest& validation,
                                   int threads) {
  if (checkpoints.empty()) fail(ErrorKind::Config, "no checkpoints to choose from");
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    auto model = load_inference_model(checkpoints[i]);
    PredictionSource source;
    source.available = [](const ManifestRecord&) { return true; };
    source.load = [&model](const ManifestRecord& r) {
      return denormalize_image(model(load_image_tensor(r.shadow_path)));
    };
    const auto report = evaluate(validation, source, threads);
    if (i == 0 || report.rmse_all < best_score) {
      best = i;
      best_score = report.rmse_all;
    }
  }
  return best;
}

}  // namespace deshadow
