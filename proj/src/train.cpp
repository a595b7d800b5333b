#include "tgan/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace tgan {

using nlohmann::json;

std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::Wgan: return "wgan";
    case LossKind::Gan: return "gan";
  }
  throw ValueError("unknown loss kind");
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "wgan") return LossKind::Wgan;
  if (name == "gan") return LossKind::Gan;
  throw ValueError("unknown loss kind: " + name);
}

std::string clip_kind_name(ClipKind k) {
  switch (k) {
    case ClipKind::Svc: return "svc";
    case ClipKind::Weight: return "weight";
    case ClipKind::None: return "none";
  }
  throw ValueError("unknown clip kind");
}

ClipKind clip_kind_from_name(const std::string& name) {
  if (name == "svc") return ClipKind::Svc;
  if (name == "weight") return ClipKind::Weight;
  if (name == "none") return ClipKind::None;
  throw ValueError("unknown clip kind: " + name);
}

void TrainConfig::validate() const {
  if (alpha <= 0.0) throw ValueError("alpha must be > 0");
  if (n_d < 1) throw ValueError("n_d must be >= 1");
  if (n_clip < 1) throw ValueError("n_clip must be >= 1");
  if (c <= 0.0) throw ValueError("c must be > 0");
  if (batch_size < 2)
    throw ValueError("batch_size must be >= 2 (batch statistics)");
  if (total_iters < 1) throw ValueError("total_iters must be >= 1");
  if (noise_sigma < 0.0) throw ValueError("noise_sigma must be >= 0");
  if (checkpoint_every < 0) throw ValueError("checkpoint_every must be >= 0");
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"alpha", c.alpha},
              {"n_d", c.n_d},
              {"n_clip", c.n_clip},
              {"c", c.c},
              {"loss_kind", loss_kind_name(c.loss_kind)},
              {"clip_kind", clip_kind_name(c.clip_kind)},
              {"batch_size", c.batch_size},
              {"total_iters", c.total_iters},
              {"seed", c.seed},
              {"noise_sigma", c.noise_sigma},
              {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.n_d = j.at("n_d").get<int64_t>();
  c.n_clip = j.at("n_clip").get<int64_t>();
  c.c = j.at("c").get<double>();
  c.loss_kind = loss_kind_from_name(j.at("loss_kind").get<std::string>());
  c.clip_kind = clip_kind_from_name(j.at("clip_kind").get<std::string>());
  c.batch_size = j.at("batch_size").get<int64_t>();
  c.total_iters = j.at("total_iters").get<int64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  return c;
}

std::pair<Tensor, Tensor> wgan_losses(const Tensor& real_scores,
                                      const Tensor& fake_scores) {
  if (real_scores.numel() == 0 || fake_scores.numel() == 0)
    throw ValueError("wgan_losses: empty batch");
  if (!real_scores.all_finite() || !fake_scores.all_finite())
    throw NumericalError("wgan_losses: non-finite scores");
  Tensor l_d = sub(mean(fake_scores), mean(real_scores));
  Tensor l_g = scale(mean(fake_scores), -1.0);
  return {l_d, l_g};
}

std::pair<Tensor, Tensor> gan_losses(const Tensor& real_probs,
                                     const Tensor& fake_probs) {
  if (real_probs.numel() == 0 || fake_probs.numel() == 0)
    throw ValueError("gan_losses: empty batch");
  const double lo = 1e-7, hi = 1.0 - 1e-7;
  Tensor pr = clamp_op(real_probs, lo, hi);
  Tensor pf = clamp_op(fake_probs, lo, hi);
  // 1 - pf via (-1) * (pf - 1)
  Tensor one_minus_pf = scale(add_scalar(pf, -1.0), -1.0);
  Tensor l_d = sub(scale(mean(log_op(pr)), -1.0), mean(log_op(one_minus_pf)));
  Tensor l_g = scale(mean(log_op(pf)), -1.0);
  return {l_d, l_g};
}

void rmsprop_update(ParamStore& params, const std::string& prefix,
                    OptState& state, double alpha) {
  constexpr double kRho = 0.9, kEps = 1e-8;
  for (auto& [name, t] : params.params) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (!t.has_grad()) continue;
    auto& v = state.v[name];
    if (v.size() != t.data().size()) v.assign(t.data().size(), 0.0);
    const auto& g = t.grad();
    auto& data = t.mutable_data();
    for (size_t i = 0; i < data.size(); ++i) {
      v[i] = kRho * v[i] + (1.0 - kRho) * g[i] * g[i];
      data[i] -= alpha * g[i] / (std::sqrt(v[i]) + kEps);
    }
  }
  ++state.step;
}

void weight_clip(ParamStore& params, double c, const std::string& prefix) {
  if (c <= 0.0) throw ValueError("weight_clip: c must be > 0");
  for (auto& [name, t] : params.params) {
    if (name.rfind(prefix, 0) != 0) continue;
    for (double& v : t.mutable_data()) v = std::min(c, std::max(-c, v));
  }
}

namespace {

Tensor indices_to_onehot(const Tensor& indices, int64_t v) {
  const int64_t n = indices.numel();
  Tensor out = zeros({n, v});
  for (int64_t i = 0; i < n; ++i) {
    const auto label = static_cast<int64_t>(indices.at(i));
    if (label < 0 || label >= v)
      throw ValueError("train: dataset label out of range for the model");
    out.mutable_data()[static_cast<size_t>(i * v + label)] = 1.0;
  }
  return out;
}

Tensor random_onehot(int64_t n, int64_t v, Rng& rng) {
  std::uniform_int_distribution<int64_t> dist(0, v - 1);
  Tensor out = zeros({n, v});
  for (int64_t i = 0; i < n; ++i)
    out.mutable_data()[static_cast<size_t>(i * v + dist(rng))] = 1.0;
  return out;
}

}  // namespace

TrainStats train(const TrainConfig& config, ParamStore& model,
                 const DatasetHandle& data,
                 const std::filesystem::path& out_dir) {
  config.validate();
  model.config.validate();
  if (data.num_clips() == 0) throw ValueError("train: empty dataset");
  const ModelConfig& mc = model.config;
  if (data.config.resolution != mc.resolution)
    throw ValueError("train: dataset resolution does not match the model");
  if (mc.channels != 1)
    throw ValueError("train: bouncing-shapes data is single-channel");
  if (mc.frames > data.config.clip_len)
    throw ValueError("train: model frames exceed clip length");
  if (mc.num_categories > 0 && !data.config.labeled)
    throw ValueError("train: conditional model needs a labeled dataset");

  std::filesystem::create_directories(out_dir);
  std::ofstream metrics(out_dir / "metrics.jsonl");
  if (!metrics)
    throw ValueError("train: cannot write metrics log in " + out_dir.string());

  Rng rng(derive_seed(config.seed, 0x7121));
  OptState opt_d, opt_g;
  TrainStats stats;
  const int64_t v = mc.num_categories;
  const bool gan_mode = config.loss_kind == LossKind::Gan;

  DiscOptions dopts;
  dopts.mode = BnMode::Train;
  if (gan_mode) {
    dopts.noise_sigma = config.noise_sigma;
    dopts.use_gamma = false;  // BN scale disabled in the noise baseline
    dopts.rng = &rng;
  }

  auto abort_diverged = [&](int64_t iter, const char* which) {
    metrics << json{{"iter", iter}, {"diverged", which}}.dump() << "\n";
    metrics.flush();
    save_checkpoint(out_dir / "ckpt_diverged", model);
    throw NumericalError("train: non-finite " + std::string(which) +
                         " loss at iteration " + std::to_string(iter) +
                         " (diagnostic checkpoint written)");
  };

  for (int64_t t = 1; t <= config.total_iters; ++t) {
    const auto tick = std::chrono::steady_clock::now();
    double loss_d_val = 0.0;

    // Critic updates.
    model.set_requires_grad("g0.", false);
    model.set_requires_grad("g1.", false);
    model.set_requires_grad("d.", true);
    for (int64_t j = 0; j < config.n_d; ++j) {
      Batch real = sample_batch(data, mc.frames, config.batch_size, rng);
      std::optional<Tensor> real_labels, fake_labels;
      Tensor real_in = real.videos;
      if (v > 0) {
        real_labels = indices_to_onehot(*real.labels, v);
        fake_labels = random_onehot(config.batch_size, v, rng);
        real_in = attach_label_voxel(real_in, *real_labels);
      }
      Tensor z0 = sample_z0(mc, config.batch_size, rng);
      Tensor fake =
          generate_batch(model, z0, fake_labels, BnMode::Train).detach();
      Tensor fake_in =
          v > 0 ? attach_label_voxel(fake, *fake_labels) : fake;

      Tensor rs = discriminate_batch(model, real_in, dopts);
      Tensor fs = discriminate_batch(model, fake_in, dopts);
      Tensor l_d = gan_mode ? gan_losses(sigmoid(rs), sigmoid(fs)).first
                            : wgan_losses(rs, fs).first;
      loss_d_val = l_d.item();
      if (!std::isfinite(loss_d_val)) abort_diverged(t, "critic");

      model.zero_grad("d.");
      backward(l_d);
      rmsprop_update(model, "d.", opt_d, config.alpha);
      model.zero_grad("d.");
      if (config.clip_kind == ClipKind::Weight) weight_clip(model, config.c);
      ++stats.critic_updates;
    }

    // Singular Value Clipping at iterations {1, 1+n_clip, 1+2 n_clip, ...}.
    std::optional<double> max_sigma;
    if (config.clip_kind == ClipKind::Svc && (t - 1) % config.n_clip == 0) {
      ParamStore clipped = svc_apply(model);
      for (auto& [name, p] : clipped.params)
        if (name.rfind("d.", 0) == 0)
          model.at(name).mutable_data() = p.data();
      LipschitzCertificate cert = compose_bound(model, t);
      double worst = 0.0;
      for (const auto& layer : cert.layers)
        if (layer.kind == "conv3d" || layer.kind == "linear")
          worst = std::max(worst, layer.k);
      max_sigma = worst;
      stats.clip_iters.push_back(t);
    }

    // Generator update.
    model.set_requires_grad("d.", false);
    model.set_requires_grad("g0.", true);
    model.set_requires_grad("g1.", true);
    std::optional<Tensor> gen_labels;
    if (v > 0) gen_labels = random_onehot(config.batch_size, v, rng);
    Tensor z0 = sample_z0(mc, config.batch_size, rng);
    Tensor fake = generate_batch(model, z0, gen_labels, BnMode::Train);
    Tensor fake_in = v > 0 ? attach_label_voxel(fake, *gen_labels) : fake;
    Tensor fs = discriminate_batch(model, fake_in, dopts);
    Tensor l_g;
    if (gan_mode) {
      Tensor pf = clamp_op(sigmoid(fs), 1e-7, 1.0 - 1e-7);
      l_g = scale(mean(log_op(pf)), -1.0);
    } else {
      l_g = scale(mean(fs), -1.0);
    }
    const double loss_g_val = l_g.item();
    if (!std::isfinite(loss_g_val)) abort_diverged(t, "generator");

    model.zero_grad("g0.");
    model.zero_grad("g1.");
    backward(l_g);
    rmsprop_update(model, "g0.", opt_g, config.alpha);
    rmsprop_update(model, "g1.", opt_g, config.alpha);
    model.zero_grad("g0.");
    model.zero_grad("g1.");
    ++stats.generator_updates;

    const auto tock = std::chrono::steady_clock::now();
    json record{{"iter", t},
                {"loss_d", loss_d_val},
                {"loss_g", loss_g_val},
                {"wall_ms",
                 std::chrono::duration<double, std::milli>(tock - tick)
                     .count()}};
    if (max_sigma) record["max_sigma"] = *max_sigma;
    metrics << record.dump() << "\n";
    metrics.flush();

    if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0)
      save_checkpoint(out_dir / ("ckpt_" + std::to_string(t)), model);
    stats.iters_completed = t;
  }

  model.set_requires_grad("d.", true);
  save_checkpoint(out_dir / "ckpt_final", model);
  return stats;
}

}  // namespace tgan
