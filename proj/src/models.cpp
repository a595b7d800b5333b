#include "tgan/models.hpp"

#include <fstream>

#include "json.hpp"
#include "tgan/io.hpp"

namespace tgan {

using nlohmann::json;

namespace {

LayerSpec deconv_spec(LayerKind kind, int64_t k, int64_t out, int64_t pad,
                      int64_t stride) {
  LayerSpec s;
  s.kind = kind;
  s.kernel = k;
  s.out_channels = out;
  s.padding = pad;
  s.stride = stride;
  return s;
}

std::string file_name_for(const std::string& param_name) {
  std::string f = param_name;
  for (char& c : f)
    if (c == '.') c = '_';
  return f + ".tnsr";
}

json spec_to_json(const LayerSpec& s) {
  return json{{"kind", layer_kind_name(s.kind)},
              {"kernel", s.kernel},
              {"out_channels", s.out_channels},
              {"padding", s.padding},
              {"stride", s.stride}};
}

LayerSpec spec_from_json(const json& j) {
  LayerSpec s;
  s.kind = layer_kind_from_name(j.at("kind").get<std::string>());
  s.kernel = j.at("kernel").get<int64_t>();
  s.out_channels = j.at("out_channels").get<int64_t>();
  s.padding = j.at("padding").get<int64_t>();
  s.stride = j.at("stride").get<int64_t>();
  return s;
}

json stacks_to_json(const std::vector<LayerSpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) arr.push_back(spec_to_json(s));
  return arr;
}

std::vector<LayerSpec> stacks_from_json(const json& arr) {
  std::vector<LayerSpec> out;
  for (const auto& j : arr) out.push_back(spec_from_json(j));
  return out;
}

}  // namespace

json config_to_json(const ModelConfig& c) {
  return json{{"k0", c.k0},
              {"k1", c.k1},
              {"frames", c.frames},
              {"resolution", c.resolution},
              {"channels", c.channels},
              {"base_channels", c.base_channels},
              {"num_categories", c.num_categories},
              {"image_uses_z0", c.image_uses_z0},
              {"image_base_size", c.image_base_size},
              {"image_branch_channels", c.image_branch_channels},
              {"leaky_slope", c.leaky_slope},
              {"temporal_stack", stacks_to_json(c.temporal_stack)},
              {"image_stack", stacks_to_json(c.image_stack)},
              {"disc_stack", stacks_to_json(c.disc_stack)}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.k0 = j.at("k0").get<int64_t>();
  c.k1 = j.at("k1").get<int64_t>();
  c.frames = j.at("frames").get<int64_t>();
  c.resolution = j.at("resolution").get<int64_t>();
  c.channels = j.at("channels").get<int64_t>();
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.num_categories = j.at("num_categories").get<int64_t>();
  c.image_uses_z0 = j.at("image_uses_z0").get<bool>();
  c.image_base_size = j.at("image_base_size").get<int64_t>();
  c.image_branch_channels = j.at("image_branch_channels").get<int64_t>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.temporal_stack = stacks_from_json(j.at("temporal_stack"));
  c.image_stack = stacks_from_json(j.at("image_stack"));
  c.disc_stack = stacks_from_json(j.at("disc_stack"));
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  if (name == "paper64") {
    c.temporal_stack = {deconv_spec(LayerKind::Deconv1d, 1, 512, 0, 1),
                        deconv_spec(LayerKind::Deconv1d, 4, 256, 1, 2),
                        deconv_spec(LayerKind::Deconv1d, 4, 128, 1, 2),
                        deconv_spec(LayerKind::Deconv1d, 4, 128, 1, 2),
                        deconv_spec(LayerKind::Deconv1d, 4, 100, 1, 2)};
    c.image_stack = {deconv_spec(LayerKind::Deconv2d, 4, 256, 1, 2),
                     deconv_spec(LayerKind::Deconv2d, 4, 128, 1, 2),
                     deconv_spec(LayerKind::Deconv2d, 4, 64, 1, 2),
                     deconv_spec(LayerKind::Deconv2d, 4, 32, 1, 2),
                     deconv_spec(LayerKind::Deconv2d, 3, 3, 1, 1)};
    c.disc_stack = {deconv_spec(LayerKind::Conv3d, 4, 64, 1, 2),
                    deconv_spec(LayerKind::Conv3d, 4, 128, 1, 2),
                    deconv_spec(LayerKind::Conv3d, 4, 256, 1, 2),
                    deconv_spec(LayerKind::Conv3d, 4, 512, 1, 2)};
  } else if (name == "desk32") {
    c.k0 = 25;
    c.k1 = 25;
    c.resolution = 32;
    c.channels = 1;
    c.base_channels = 16;
    c.image_branch_channels = 64;
    c.temporal_stack = {deconv_spec(LayerKind::Deconv1d, 1, 128, 0, 1),
                        deconv_spec(LayerKind::Deconv1d, 4, 64, 1, 2),
                        deconv_spec(LayerKind::Deconv1d, 4, 32, 1, 2),
                        deconv_spec(LayerKind::Deconv1d, 4, 32, 1, 2),
                        deconv_spec(LayerKind::Deconv1d, 4, 25, 1, 2)};
    c.image_stack = {deconv_spec(LayerKind::Deconv2d, 4, 64, 1, 2),
                     deconv_spec(LayerKind::Deconv2d, 4, 32, 1, 2),
                     deconv_spec(LayerKind::Deconv2d, 4, 16, 1, 2),
                     deconv_spec(LayerKind::Deconv2d, 3, 1, 1, 1)};
    c.disc_stack = {deconv_spec(LayerKind::Conv3d, 4, 16, 1, 2),
                    deconv_spec(LayerKind::Conv3d, 4, 32, 1, 2),
                    deconv_spec(LayerKind::Conv3d, 4, 64, 1, 2)};
  } else {
    throw ValueError("unknown preset: " + name);
  }
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (k0 < 1 || k1 < 1) throw ValueError("latent dims must be >= 1");
  if (frames < 1 || resolution < 4 || channels < 1)
    throw ValueError("invalid frames/resolution/channels");
  if (num_categories < 0) throw ValueError("num_categories must be >= 0");
  if (temporal_stack.empty() || image_stack.empty() || disc_stack.empty())
    throw ValueError("all three layer stacks must be non-empty");

  int64_t len = 1;
  for (const auto& s : temporal_stack) {
    if (s.kind != LayerKind::Deconv1d)
      throw ValueError("temporal stack must contain deconv1d layers");
    s.validate();
    len = deconv_out_size(len, s.kernel, s.stride, s.padding);
    if (len < 1) throw ValueError("temporal stack collapses to length 0");
  }
  if (len != frames)
    throw ValueError("temporal stack length trace ends at " +
                     std::to_string(len) + ", expected T = " +
                     std::to_string(frames));
  if (temporal_stack.back().out_channels != k1)
    throw ValueError("last temporal layer must emit K1 channels");

  int64_t size = image_base_size;
  for (const auto& s : image_stack) {
    if (s.kind != LayerKind::Deconv2d)
      throw ValueError("image stack must contain deconv2d layers");
    s.validate();
    size = deconv_out_size(size, s.kernel, s.stride, s.padding);
    if (size < 1) throw ValueError("image stack collapses to size 0");
  }
  if (size != resolution)
    throw ValueError("image stack spatial trace ends at " +
                     std::to_string(size) + ", expected resolution " +
                     std::to_string(resolution));
  if (image_stack.back().out_channels != channels)
    throw ValueError("last image layer must emit the video channel count");

  int64_t t = frames, hw = resolution;
  for (const auto& s : disc_stack) {
    if (s.kind != LayerKind::Conv3d)
      throw ValueError("discriminator stack must contain conv3d layers");
    s.validate();
    t = conv_out_size(t, s.kernel, s.stride, s.padding);
    hw = conv_out_size(hw, s.kernel, s.stride, s.padding);
    if (t < 1 || hw < 1)
      throw ValueError("discriminator stack reduces the input to nothing");
  }
}

int64_t ModelConfig::disc_flat_size() const {
  int64_t t = frames, hw = resolution;
  for (const auto& s : disc_stack) {
    t = conv_out_size(t, s.kernel, s.stride, s.padding);
    hw = conv_out_size(hw, s.kernel, s.stride, s.padding);
  }
  return disc_stack.back().out_channels * t * hw * hw;
}

std::string param_kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::LinearWeight: return "linear_weight";
    case ParamKind::ConvWeight: return "conv_weight";
    case ParamKind::Bias: return "bias";
    case ParamKind::BnGamma: return "bn_gamma";
    case ParamKind::BnBeta: return "bn_beta";
  }
  throw ValueError("unknown param kind");
}

ParamKind param_kind_from_name(const std::string& name) {
  for (ParamKind k : {ParamKind::LinearWeight, ParamKind::ConvWeight,
                      ParamKind::Bias, ParamKind::BnGamma, ParamKind::BnBeta})
    if (param_kind_name(k) == name) return k;
  throw ValueError("unknown param kind: " + name);
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ValueError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ValueError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::add(const std::string& name, ParamKind kind, Tensor t) {
  if (params.count(name)) throw ValueError("duplicate parameter: " + name);
  params.emplace(name, std::move(t));
  kinds.emplace(name, kind);
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  out.config = config;
  out.kinds = kinds;
  out.bn = bn;
  for (const auto& [name, t] : params) out.params.emplace(name, t.clone());
  return out;
}

void ParamStore::set_requires_grad(const std::string& prefix, bool value) {
  for (auto& [name, t] : params)
    if (name.rfind(prefix, 0) == 0) t.set_requires_grad(value);
}

void ParamStore::zero_grad(const std::string& prefix) {
  for (auto& [name, t] : params)
    if (name.rfind(prefix, 0) == 0) t.zero_grad();
}

bool ParamStore::allclose(const ParamStore& other, double atol) const {
  if (params.size() != other.params.size()) return false;
  for (const auto& [name, t] : params) {
    auto it = other.params.find(name);
    if (it == other.params.end()) return false;
    if (t.shape() != it->second.shape()) return false;
    for (size_t i = 0; i < t.data().size(); ++i)
      if (std::abs(t.data()[i] - it->second.data()[i]) > atol) return false;
  }
  return true;
}

Tensor one_hot(int64_t label, int64_t count) {
  if (count < 1) throw ValueError("one_hot: category count must be >= 1");
  if (label < 0 || label >= count)
    throw ValueError("one_hot: label out of range");
  Tensor t = zeros({1, count});
  t.mutable_data()[static_cast<size_t>(label)] = 1.0;
  return t;
}

ParamStore build(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ParamStore store;
  store.config = config;
  Rng rng(seed);

  auto add_bn = [&](const std::string& name, int64_t channels,
                    const LayerSpec& spec) {
    store.add(name + ".gamma", ParamKind::BnGamma, ones({channels}));
    store.add(name + ".beta", ParamKind::BnBeta, zeros({channels}));
    store.bn.emplace(name, BnState(channels, spec.bn_momentum, spec.bn_eps));
  };

  // Temporal generator: HeNormal weights, BN + ReLU after every deconv
  // except the last (tanh). BN is also placed after the first deconv; the
  // choice is echoed in the checkpoint manifest.
  int64_t in_ch = config.g0_in_channels();
  for (size_t i = 0; i < config.temporal_stack.size(); ++i) {
    const auto& s = config.temporal_stack[i];
    const std::string base = "g0.deconv" + std::to_string(i);
    store.add(base + ".w", ParamKind::ConvWeight,
              he_normal({s.out_channels, in_ch, s.kernel}, rng));
    store.add(base + ".b", ParamKind::Bias, zeros({s.out_channels}));
    if (i + 1 < config.temporal_stack.size())
      add_bn("g0.bn" + std::to_string(i), s.out_channels, s);
    in_ch = s.out_channels;
  }

  // Image generator: uniform(-0.01, 0.01) weights.
  const int64_t bc = config.image_branch_channels;
  const int64_t bs = config.image_base_size;
  const int64_t branch_out = bc * bs * bs;
  auto add_branch = [&](const std::string& name, int64_t in) {
    store.add(name + ".w", ParamKind::LinearWeight,
              uniform({branch_out, in}, -0.01, 0.01, rng));
    store.add(name + ".b", ParamKind::Bias, zeros({branch_out}));
  };
  if (config.image_uses_z0) add_branch("g1.lin_z0", config.k0);
  add_branch("g1.lin_z1", config.k1);
  if (config.num_categories > 0)
    add_branch("g1.lin_label", config.num_categories);
  add_bn("g1.bn_in", bc * config.image_branch_count(),
         config.image_stack.front());
  in_ch = bc * config.image_branch_count();
  for (size_t i = 0; i < config.image_stack.size(); ++i) {
    const auto& s = config.image_stack[i];
    const std::string base = "g1.deconv" + std::to_string(i);
    store.add(base + ".w", ParamKind::ConvWeight,
              uniform({s.out_channels, in_ch, s.kernel, s.kernel}, -0.01,
                      0.01, rng));
    store.add(base + ".b", ParamKind::Bias, zeros({s.out_channels}));
    if (i + 1 < config.image_stack.size())
      add_bn("g1.bn" + std::to_string(i), s.out_channels, s);
    in_ch = s.out_channels;
  }

  // Discriminator: HeNormal, LeakyReLU everywhere, BN after every conv but
  // the first; biases only where no BN follows.
  in_ch = config.disc_in_channels();
  for (size_t i = 0; i < config.disc_stack.size(); ++i) {
    const auto& s = config.disc_stack[i];
    const std::string base = "d.conv" + std::to_string(i);
    store.add(base + ".w", ParamKind::ConvWeight,
              he_normal({s.out_channels, in_ch, s.kernel, s.kernel, s.kernel},
                        rng));
    if (i == 0)
      store.add(base + ".b", ParamKind::Bias, zeros({s.out_channels}));
    else
      add_bn("d.bn" + std::to_string(i), s.out_channels, s);
    in_ch = s.out_channels;
  }
  store.add("d.fc.w", ParamKind::LinearWeight,
            he_normal({1, config.disc_flat_size()}, rng));
  store.add("d.fc.b", ParamKind::Bias, zeros({1}));
  return store;
}

Tensor temporal_forward(const ParamStore& store, const Tensor& z0_full,
                        BnMode mode) {
  const auto& c = store.config;
  if (z0_full.dim() != 2 || z0_full.size(1) != c.g0_in_channels())
    throw ValueError("temporal_forward: expected [N, K0" +
                     std::string(c.num_categories > 0 ? "+V" : "") + "] input");
  const int64_t n = z0_full.size(0);
  Tensor x = reshape(z0_full, {n, c.g0_in_channels(), 1});
  for (size_t i = 0; i < c.temporal_stack.size(); ++i) {
    const auto& s = c.temporal_stack[i];
    const std::string base = "g0.deconv" + std::to_string(i);
    x = deconv_forward(x, store.at(base + ".w"), store.at(base + ".b"),
                       s.stride, s.padding);
    if (i + 1 < c.temporal_stack.size()) {
      const std::string bn = "g0.bn" + std::to_string(i);
      x = batchnorm_forward(x, store.at(bn + ".gamma"), store.at(bn + ".beta"),
                            store.bn.at(bn), mode);
      x = relu(x);
    }
  }
  x = tanh_op(x);          // [N, K1, T]
  return permute(x, {0, 2, 1});  // [N, T, K1]
}

Tensor image_forward(const ParamStore& store, const Tensor& z0,
                     const Tensor& z1, const std::optional<Tensor>& labels,
                     BnMode mode) {
  const auto& c = store.config;
  const int64_t n = z1.size(0);
  const int64_t bc = c.image_branch_channels;
  const int64_t bs = c.image_base_size;
  auto branch = [&](const std::string& name, const Tensor& in) {
    Tensor h = linear_forward(in, store.at(name + ".w"), store.at(name + ".b"));
    return reshape(h, {n, bc, bs, bs});
  };
  Tensor x = branch("g1.lin_z1", z1);
  if (c.image_uses_z0) x = concat(branch("g1.lin_z0", z0), x, 1);
  if (c.num_categories > 0) {
    if (!labels) throw ValueError("image_forward: labels required (V > 0)");
    x = concat(x, branch("g1.lin_label", *labels), 1);
  }
  x = batchnorm_forward(x, store.at("g1.bn_in.gamma"),
                        store.at("g1.bn_in.beta"), store.bn.at("g1.bn_in"),
                        mode);
  x = relu(x);
  for (size_t i = 0; i < c.image_stack.size(); ++i) {
    const auto& s = c.image_stack[i];
    const std::string base = "g1.deconv" + std::to_string(i);
    x = deconv_forward(x, store.at(base + ".w"), store.at(base + ".b"),
                       s.stride, s.padding);
    if (i + 1 < c.image_stack.size()) {
      const std::string bn = "g1.bn" + std::to_string(i);
      x = batchnorm_forward(x, store.at(bn + ".gamma"), store.at(bn + ".beta"),
                            store.bn.at(bn), mode);
      x = relu(x);
    }
  }
  return tanh_op(x);  // [N, C, H, W] in (-1, 1)
}

Tensor generate_batch(const ParamStore& store, const Tensor& z0,
                      const std::optional<Tensor>& labels, BnMode mode) {
  const auto& c = store.config;
  const int64_t n = z0.size(0);
  Tensor g0_in = labels ? concat(z0, *labels, 1) : z0;
  Tensor z1_seq = temporal_forward(store, g0_in, mode);  // [N, T, K1]
  Tensor z1_flat = reshape(z1_seq, {n * c.frames, c.k1});
  Tensor z0_rep = repeat_rows(z0, c.frames);
  std::optional<Tensor> label_rep;
  if (labels) label_rep = repeat_rows(*labels, c.frames);
  Tensor frames = image_forward(store, z0_rep, z1_flat, label_rep, mode);
  Tensor vid = reshape(
      frames, {n, c.frames, c.channels, c.resolution, c.resolution});
  return permute(vid, {0, 2, 1, 3, 4});  // [N, C, T, H, W]
}

VideoClip generate_video(const ParamStore& store, const Tensor& z0,
                         std::optional<int64_t> label, BnMode mode) {
  return interpolate_frames(store, z0, 1, label);
}

VideoClip interpolate_frames(const ParamStore& store, const Tensor& z0,
                             int64_t factor, std::optional<int64_t> label) {
  const auto& c = store.config;
  if (factor < 1) throw ValueError("interpolate_frames: factor must be >= 1");
  if (z0.dim() != 2 || z0.size(0) != 1 || z0.size(1) != c.k0)
    throw ValueError("interpolate_frames: z0 must be [1, K0]");
  std::optional<Tensor> labels;
  if (label) labels = one_hot(*label, c.num_categories);
  Tensor g0_in = labels ? concat(z0, *labels, 1) : z0;
  Tensor z1_seq = temporal_forward(store, g0_in, BnMode::Infer);  // [1,T,K1]

  const int64_t out_len = factor * (c.frames - 1) + 1;
  // Endpoint-aligned linear interpolation: indices at multiples of `factor`
  // copy the original latents bitwise.
  std::vector<double> latents(static_cast<size_t>(out_len * c.k1));
  for (int64_t j = 0; j < out_len; ++j) {
    const int64_t q = j / factor, r = j % factor;
    for (int64_t k = 0; k < c.k1; ++k) {
      const double a = z1_seq.at(q * c.k1 + k);
      if (r == 0) {
        latents[static_cast<size_t>(j * c.k1 + k)] = a;
      } else {
        const double b = z1_seq.at((q + 1) * c.k1 + k);
        const double w = static_cast<double>(r) / static_cast<double>(factor);
        latents[static_cast<size_t>(j * c.k1 + k)] = (1.0 - w) * a + w * b;
      }
    }
  }

  // Render frame by frame so frame values do not depend on the batch size.
  std::vector<Tensor> rendered;
  for (int64_t j = 0; j < out_len; ++j) {
    std::vector<double> row(
        latents.begin() + j * c.k1, latents.begin() + (j + 1) * c.k1);
    Tensor z1 = from_data({1, c.k1}, std::move(row));
    rendered.push_back(
        image_forward(store, z0, z1, labels, BnMode::Infer));
  }
  Tensor frames = rendered[0];
  for (size_t j = 1; j < rendered.size(); ++j)
    frames = concat(frames, rendered[j], 0);  // [T', C, H, W]
  VideoClip clip;
  clip.frames = frames.detach();
  clip.label = label;
  return clip;
}

Tensor attach_label_voxel(const Tensor& batch, const Tensor& labels) {
  if (batch.dim() != 5) throw ValueError("attach_label_voxel: need 5D batch");
  const int64_t n = batch.size(0), t = batch.size(2), h = batch.size(3),
                w = batch.size(4);
  const int64_t v = labels.size(1);
  if (labels.size(0) != n)
    throw ValueError("attach_label_voxel: batch/label count mismatch");
  Tensor voxel = zeros({n, v, t, h, w});
  const int64_t vol = t * h * w;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < v; ++ch) {
      const double val = labels.at(b * v + ch);
      if (val != 0.0)
        std::fill_n(voxel.mutable_data().begin() + (b * v + ch) * vol, vol,
                    val);
    }
  return concat(batch, voxel, 1);
}

Tensor discriminate_batch(const ParamStore& store, const Tensor& x,
                          const DiscOptions& opts) {
  const auto& c = store.config;
  if (x.dim() != 5 || x.size(1) != c.disc_in_channels() ||
      x.size(2) != c.frames || x.size(3) != c.resolution ||
      x.size(4) != c.resolution)
    throw ValueError("discriminate_batch: input shape " +
                     shape_str(x.shape()) + " does not match config");
  if (opts.noise_sigma > 0.0 && opts.rng == nullptr)
    throw ValueError("discriminate_batch: noise injection needs an rng");

  auto maybe_noise = [&](Tensor h) {
    if (opts.noise_sigma <= 0.0) return h;
    return add(h, normal(h.shape(), 0.0, opts.noise_sigma, *opts.rng));
  };

  Tensor h = x;
  for (size_t i = 0; i < c.disc_stack.size(); ++i) {
    const auto& s = c.disc_stack[i];
    const std::string base = "d.conv" + std::to_string(i);
    h = maybe_noise(h);
    std::optional<Tensor> bias;
    if (i == 0) bias = store.at(base + ".b");
    h = conv_forward(h, store.at(base + ".w"), bias, s.stride, s.padding);
    if (i > 0) {
      const std::string bn = "d.bn" + std::to_string(i);
      Tensor gamma = opts.use_gamma
                         ? store.at(bn + ".gamma")
                         : ones({c.disc_stack[i].out_channels});
      h = batchnorm_forward(h, gamma, store.at(bn + ".beta"),
                            store.bn.at(bn), opts.mode);
    }
    h = leaky_relu(h, c.leaky_slope);
  }
  h = reshape(h, {x.size(0), c.disc_flat_size()});
  h = maybe_noise(h);
  return linear_forward(h, store.at("d.fc.w"), store.at("d.fc.b"));
}

double discriminate(const ParamStore& store, const VideoClip& clip,
                    const DiscOptions& opts) {
  const auto& c = store.config;
  Tensor x = permute(clip.frames, {1, 0, 2, 3});  // [C, T, H, W]
  x = reshape(x, {1, c.channels, c.frames, c.resolution, c.resolution});
  if (c.num_categories > 0) {
    if (!clip.label)
      throw ValueError("discriminate: conditional model needs a labeled clip");
    x = attach_label_voxel(x, one_hot(*clip.label, c.num_categories));
  }
  return discriminate_batch(store, x, opts).item();
}

std::vector<DiscLayerRef> discriminator_layer_plan(const ModelConfig& config) {
  std::vector<DiscLayerRef> plan;
  for (size_t i = 0; i < config.disc_stack.size(); ++i) {
    plan.push_back({LayerKind::Conv3d, "d.conv" + std::to_string(i) + ".w",
                    config.leaky_slope});
    if (i > 0)
      plan.push_back(
          {LayerKind::BatchNorm, "d.bn" + std::to_string(i),
           config.leaky_slope});
    plan.push_back({LayerKind::LeakyRelu, "", config.leaky_slope});
  }
  plan.push_back({LayerKind::Linear, "d.fc.w", config.leaky_slope});
  return plan;
}

Tensor sample_z0(const ModelConfig& config, int64_t n, Rng& rng) {
  return uniform({n, config.k0}, -1.0, 1.0, rng);
}

void save_checkpoint(const std::filesystem::path& dir,
                     const ParamStore& store) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["config"] = config_to_json(store.config);
  manifest["notes"] = {{"temporal_first_bn", true}};
  json params = json::array();
  for (const auto& [name, t] : store.params) {
    const std::string file = file_name_for(name);
    params.push_back({{"name", name},
                      {"kind", param_kind_name(store.kinds.at(name))},
                      {"shape", t.shape()},
                      {"dtype", t.dtype() == DType::f64 ? "f64" : "f32"},
                      {"file", file}});
    save_tensor(dir / file, t);
  }
  manifest["params"] = params;
  json bn = json::object();
  for (const auto& [name, state] : store.bn)
    bn[name] = {{"running_mean", state.running_mean},
                {"running_std", state.running_std},
                {"momentum", state.momentum},
                {"eps", state.eps}};
  manifest["bn"] = bn;
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream os(tmp);
    os << manifest.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir / "manifest.json");
}

ParamStore load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is)
    throw ValueError("checkpoint: missing manifest.json in " + dir.string());
  json manifest = json::parse(is, nullptr, /*allow_exceptions=*/false);
  if (manifest.is_discarded())
    throw ValueError("checkpoint: manifest.json is not valid JSON");
  ParamStore store;
  store.config = config_from_json(manifest.at("config"));
  for (const auto& p : manifest.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    Tensor t = load_tensor(dir / p.at("file").get<std::string>());
    const Shape expect = p.at("shape").get<Shape>();
    if (t.shape() != expect)
      throw ValueError("checkpoint: shape mismatch for " + name);
    store.add(name, param_kind_from_name(p.at("kind").get<std::string>()),
              std::move(t));
  }
  for (const auto& [name, j] : manifest.at("bn").items()) {
    BnState state(0, j.at("momentum").get<double>(), j.at("eps").get<double>());
    state.running_mean = j.at("running_mean").get<std::vector<double>>();
    state.running_std = j.at("running_std").get<std::vector<double>>();
    store.bn.emplace(name, std::move(state));
  }
  return store;
}

}  // namespace tgan
