#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "tgan/eval.hpp"
#include "tgan/io.hpp"
#include "tgan/train.hpp"

using namespace tgan;
using nlohmann::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed,
                  const std::string& context) {
  if (!j.is_object()) throw ValueError(context + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ValueError(context + ": unknown key \"" + key + "\"");
}

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValueError("cannot open config file: " + path);
  json j = json::parse(is, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ValueError("invalid JSON in " + path);
  return j;
}

void check_data_config_keys(const json& j) {
  require_keys(j,
               {"num_clips", "clip_len", "train_frames", "resolution",
                "num_shapes", "kinds", "speed_min", "speed_max", "seed",
                "labeled"},
               "data config");
}

void check_model_config_keys(const json& j) {
  require_keys(j,
               {"k0", "k1", "frames", "resolution", "channels",
                "base_channels", "num_categories", "image_uses_z0",
                "image_base_size", "image_branch_channels", "leaky_slope",
                "temporal_stack", "image_stack", "disc_stack"},
               "model config");
}

void check_train_config_keys(const json& j) {
  require_keys(j,
               {"alpha", "n_d", "n_clip", "c", "loss_kind", "clip_kind",
                "batch_size", "total_iters", "seed", "noise_sigma",
                "checkpoint_every"},
               "train config");
}

// Honored for interface compatibility; all computation is single-threaded.
void read_thread_cap() {
  if (const char* env = std::getenv("TGAN_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1)
      throw ValueError("TGAN_THREADS must be a positive integer");
  }
}

int cmd_make_data(const std::string& config_path, const std::string& out_dir) {
  json j = load_json(config_path);
  check_data_config_keys(j);
  DataConfig config = data_config_from_json(j);
  DatasetHandle handle = synthesize(config, out_dir);
  std::cout << "wrote " << handle.num_clips() << " clips to " << out_dir
            << "\n";
  return 0;
}

struct RunConfig {
  ModelConfig model;
  uint64_t model_seed = 0;
  TrainConfig train_cfg;
};

RunConfig parse_run_config(const json& j) {
  require_keys(j, {"model_preset", "model", "model_seed", "train"},
               "run config");
  RunConfig rc;
  if (j.contains("model_preset") == j.contains("model"))
    throw ValueError("run config: give exactly one of model_preset / model");
  if (j.contains("model_preset")) {
    rc.model = ModelConfig::preset(j.at("model_preset").get<std::string>());
  } else {
    check_model_config_keys(j.at("model"));
    rc.model = config_from_json(j.at("model"));
    rc.model.validate();
  }
  if (j.contains("model_seed"))
    rc.model_seed = j.at("model_seed").get<uint64_t>();
  check_train_config_keys(j.at("train"));
  rc.train_cfg = train_config_from_json(j.at("train"));
  return rc;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& clip_override,
              int64_t iters_override) {
  RunConfig rc = parse_run_config(load_json(config_path));
  if (!clip_override.empty())
    rc.train_cfg.clip_kind = clip_kind_from_name(clip_override);
  if (iters_override > 0) rc.train_cfg.total_iters = iters_override;
  DatasetHandle data = open_dataset(data_dir);
  ParamStore model = build(rc.model, rc.model_seed);
  TrainStats stats = train(rc.train_cfg, model, data, out_dir);
  std::cout << "trained " << stats.iters_completed << " iterations ("
            << stats.critic_updates << " critic updates, "
            << stats.clip_iters.size() << " clip events); checkpoint at "
            << out_dir << "/ckpt_final\n";
  return 0;
}

int cmd_generate(const std::string& checkpoint, uint64_t seed,
                 const std::string& out_dir, int64_t label, int64_t factor) {
  ParamStore model = load_checkpoint(checkpoint);
  Rng rng(seed);
  Tensor z0 = sample_z0(model.config, 1, rng);
  std::optional<int64_t> lab;
  if (model.config.num_categories > 0) {
    if (label < 0)
      throw ValueError("conditional checkpoint: --label is required");
    lab = label;
  } else if (label >= 0) {
    throw ValueError("--label given but the checkpoint is unconditional");
  }
  VideoClip clip = interpolate_frames(model, z0, factor, lab);
  std::filesystem::create_directories(out_dir);
  save_tensor(std::filesystem::path(out_dir) / "clip.tnsr", clip.frames);
  export_frames(clip, std::filesystem::path(out_dir) / "frames");
  std::cout << "wrote " << clip.frames.size(0) << " frames to " << out_dir
            << "\n";
  return 0;
}

int cmd_clip_weights(const std::string& checkpoint,
                     const std::string& out_dir) {
  ParamStore model = load_checkpoint(checkpoint);
  ParamStore clipped = svc_apply(model);
  save_checkpoint(out_dir, clipped);
  LipschitzCertificate cert = compose_bound(clipped);
  const auto cert_path = std::filesystem::path(out_dir) / "certificate.json";
  std::ofstream os(cert_path);
  os << cert.to_json().dump(2) << "\n";
  std::cout << "clipped checkpoint at " << out_dir << " (K = " << cert.k
            << ")\n";
  return 0;
}

int cmd_certify(const std::string& checkpoint, const std::string& out_path) {
  ParamStore model = load_checkpoint(checkpoint);
  LipschitzCertificate cert = compose_bound(model);
  const std::string text = cert.to_json().dump(2);
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw ValueError("cannot write " + out_path);
    os << text << "\n";
  }
  std::cout << text << "\n";
  return 0;
}

int cmd_eval_gam(const std::string& ckpt_a, const std::string& ckpt_b,
                 const std::string& data_dir, int64_t samples, uint64_t seed,
                 const std::string& out_path) {
  ParamStore a = load_checkpoint(ckpt_a);
  ParamStore b = load_checkpoint(ckpt_b);
  DatasetHandle data = open_dataset(data_dir);
  Rng rng(seed);
  GamReport report = gam_score(a, b, data, samples, rng);
  const std::string text = report.to_json().dump(2);
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw ValueError("cannot write " + out_path);
    os << text << "\n";
  }
  std::cout << text << "\n";
  return 0;
}

double rel_err(const Tensor& got, const Tensor& want) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < got.data().size(); ++i) {
    num = std::max(num, std::abs(got.data()[i] - want.data()[i]));
    den = std::max(den, std::abs(want.data()[i]));
  }
  return num / std::max(den, 1e-12);
}

double check_grad(const std::function<Tensor(const Tensor&)>& f, Tensor x) {
  x.set_requires_grad(true);
  x.zero_grad();
  backward(f(x));
  std::vector<double> got = x.grad();
  Tensor fd = finite_diff_grad(
      [&](const Tensor& t) { return f(t).item(); }, x);
  Tensor got_t = from_data(x.shape(), std::move(got));
  return rel_err(got_t, fd);
}

int cmd_grad_check(uint64_t seed) {
  Rng rng(seed);
  struct Row {
    std::string name;
    double err;
  };
  std::vector<Row> rows;
  auto run = [&](const std::string& name,
                 const std::function<Tensor(const Tensor&)>& f, Tensor x) {
    rows.push_back({name, check_grad(f, std::move(x))});
  };

  Tensor w_lin = uniform({3, 5}, -1.0, 1.0, rng);
  Tensor b_lin = uniform({3}, -1.0, 1.0, rng);
  run("linear",
      [&](const Tensor& x) { return sum(linear_forward(x, w_lin, b_lin)); },
      uniform({2, 5}, -1.0, 1.0, rng));

  Tensor w1 = uniform({3, 2, 4}, -1.0, 1.0, rng);
  run("deconv1d",
      [&](const Tensor& x) {
        return sum(deconv_forward(x, w1, std::nullopt, 2, 1));
      },
      uniform({2, 2, 3}, -1.0, 1.0, rng));

  Tensor w2 = uniform({2, 3, 4, 4}, -1.0, 1.0, rng);
  run("deconv2d",
      [&](const Tensor& x) {
        return sum(deconv_forward(x, w2, std::nullopt, 2, 1));
      },
      uniform({1, 3, 4, 4}, -1.0, 1.0, rng));

  Tensor w3 = uniform({2, 1, 3, 3, 3}, -1.0, 1.0, rng);
  run("conv3d",
      [&](const Tensor& x) {
        return sum(conv_forward(x, w3, std::nullopt, 2, 1));
      },
      uniform({1, 1, 4, 6, 6}, -1.0, 1.0, rng));

  Tensor gamma = uniform({3}, 0.5, 1.5, rng);
  Tensor beta = uniform({3}, -0.5, 0.5, rng);
  run("batchnorm",
      [&](const Tensor& x) {
        BnState state(3);
        return sum(mul(batchnorm_forward(x, gamma, beta, state, BnMode::Train),
                       x));
      },
      uniform({4, 3}, -1.0, 1.0, rng));

  run("leaky_relu",
      [&](const Tensor& x) { return sum(leaky_relu(x, 0.2)); },
      uniform({40}, 0.1, 1.0, rng));
  run("tanh", [&](const Tensor& x) { return sum(tanh_op(x)); },
      uniform({40}, -2.0, 2.0, rng));
  run("sigmoid", [&](const Tensor& x) { return sum(sigmoid(x)); },
      uniform({40}, -2.0, 2.0, rng));

  Tensor fake_scores = uniform({4}, -1.0, 1.0, rng);
  run("wgan_loss",
      [&](const Tensor& x) { return wgan_losses(x, fake_scores).first; },
      uniform({4}, -1.0, 1.0, rng));
  run("gan_loss",
      [&](const Tensor& x) {
        return gan_losses(sigmoid(x), sigmoid(fake_scores)).first;
      },
      uniform({4}, -1.0, 1.0, rng));

  bool all_pass = true;
  std::cout << "layer            max-rel-err   status\n";
  for (const auto& row : rows) {
    const bool pass = row.err < 1e-4;
    all_pass = all_pass && pass;
    std::printf("%-16s %.3e     %s\n", row.name.c_str(), row.err,
                pass ? "pass" : "FAIL");
  }
  if (!all_pass) throw NumericalError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal GAN trainer with singular value clipping"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, checkpoint, out_path;
  std::string ckpt_a, ckpt_b, clip_override;
  uint64_t seed = 0;
  int64_t label = -1, factor = 2, samples = 128, iters_override = 0;

  auto* make_data = app.add_subcommand("make-data", "Synthesize a dataset");
  make_data->add_option("--config", config_path)->required();
  make_data->add_option("--out", out_dir)->required();

  auto* train_cmd = app.add_subcommand("train", "Run the training loop");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--data", data_dir)->required();
  train_cmd->add_option("--out", out_dir)->required();
  train_cmd->add_option("--clip", clip_override,
                        "Override clip kind: svc|weight|none");
  train_cmd->add_option("--iters", iters_override,
                        "Override total iterations");

  auto* generate = app.add_subcommand("generate", "Sample one video");
  generate->add_option("--checkpoint", checkpoint)->required();
  generate->add_option("--seed", seed)->required();
  generate->add_option("--out", out_dir)->required();
  generate->add_option("--label", label);

  auto* interpolate =
      app.add_subcommand("interpolate", "Sample with latent upsampling");
  interpolate->add_option("--checkpoint", checkpoint)->required();
  interpolate->add_option("--seed", seed)->required();
  interpolate->add_option("--out", out_dir)->required();
  interpolate->add_option("--factor", factor);
  interpolate->add_option("--label", label);

  auto* clip_weights =
      app.add_subcommand("clip-weights", "Singular value clipping");
  clip_weights->add_option("--checkpoint", checkpoint)->required();
  clip_weights->add_option("--out", out_dir)->required();

  auto* eval_gam = app.add_subcommand("eval-gam", "Compare two models");
  eval_gam->add_option("--checkpoint-a", ckpt_a)->required();
  eval_gam->add_option("--checkpoint-b", ckpt_b)->required();
  eval_gam->add_option("--data", data_dir)->required();
  eval_gam->add_option("--samples", samples);
  eval_gam->add_option("--seed", seed);
  eval_gam->add_option("--out", out_path);

  auto* grad_check =
      app.add_subcommand("grad-check", "Finite-difference self test");
  grad_check->add_option("--seed", seed);

  auto* certify = app.add_subcommand("certify", "Lipschitz certificate");
  certify->add_option("--checkpoint", checkpoint)->required();
  certify->add_option("--out", out_path);

  try {
    app.parse(argc, argv);
    read_thread_cap();
    if (*make_data) return cmd_make_data(config_path, out_dir);
    if (*train_cmd)
      return cmd_train(config_path, data_dir, out_dir, clip_override,
                       iters_override);
    if (*generate) return cmd_generate(checkpoint, seed, out_dir, label, 1);
    if (*interpolate) {
      if (factor < 1) throw ValueError("--factor must be >= 1");
      return cmd_generate(checkpoint, seed, out_dir, label, factor);
    }
    if (*clip_weights) return cmd_clip_weights(checkpoint, out_dir);
    if (*eval_gam)
      return cmd_eval_gam(ckpt_a, ckpt_b, data_dir, samples, seed, out_path);
    if (*grad_check) return cmd_grad_check(seed);
    if (*certify) return cmd_certify(checkpoint, out_path);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
