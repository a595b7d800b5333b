#include "tgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tgan/io.hpp"

namespace tgan {

using nlohmann::json;

std::string shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Dot: return "dot";
    case ShapeKind::Square: return "square";
    case ShapeKind::Cross: return "cross";
  }
  throw ValueError("unknown shape kind");
}

ShapeKind shape_kind_from_name(const std::string& name) {
  for (ShapeKind k : {ShapeKind::Dot, ShapeKind::Square, ShapeKind::Cross})
    if (shape_kind_name(k) == name) return k;
  throw ValueError("unknown shape kind: " + name);
}

int64_t shape_extent(ShapeKind k) {
  switch (k) {
    case ShapeKind::Dot: return 1;
    case ShapeKind::Square: return 2;
    case ShapeKind::Cross: return 2;
  }
  throw ValueError("unknown shape kind");
}

void DataConfig::validate() const {
  if (num_clips < 1) throw ValueError("num_clips must be >= 1");
  if (clip_len < train_frames)
    throw ValueError("clip_len must be >= train_frames");
  if (train_frames < 1) throw ValueError("train_frames must be >= 1");
  if (resolution < 8) throw ValueError("resolution must be >= 8");
  if (num_shapes != 1 && num_shapes != 2)
    throw ValueError("num_shapes must be 1 or 2");
  if (kinds.empty()) throw ValueError("at least one shape kind required");
  if (speed_min <= 0.0 || speed_max < speed_min)
    throw ValueError("need 0 < speed_min <= speed_max");
  for (ShapeKind k : kinds)
    if (2 * shape_extent(k) + 1 >= resolution)
      throw ValueError("shape larger than patch");
}

json data_config_to_json(const DataConfig& c) {
  json kinds = json::array();
  for (ShapeKind k : c.kinds) kinds.push_back(shape_kind_name(k));
  return json{{"num_clips", c.num_clips},
              {"clip_len", c.clip_len},
              {"train_frames", c.train_frames},
              {"resolution", c.resolution},
              {"num_shapes", c.num_shapes},
              {"kinds", kinds},
              {"speed_min", c.speed_min},
              {"speed_max", c.speed_max},
              {"seed", c.seed},
              {"labeled", c.labeled}};
}

DataConfig data_config_from_json(const json& j) {
  DataConfig c;
  c.num_clips = j.at("num_clips").get<int64_t>();
  c.clip_len = j.at("clip_len").get<int64_t>();
  c.train_frames = j.at("train_frames").get<int64_t>();
  c.resolution = j.at("resolution").get<int64_t>();
  c.num_shapes = j.at("num_shapes").get<int64_t>();
  c.kinds.clear();
  for (const auto& k : j.at("kinds"))
    c.kinds.push_back(shape_kind_from_name(k.get<std::string>()));
  c.speed_min = j.at("speed_min").get<double>();
  c.speed_max = j.at("speed_max").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.labeled = j.at("labeled").get<bool>();
  return c;
}

void reflect_axis(double& pos, double& vel, double lo, double hi) {
  if (hi <= lo) throw ValueError("reflect_axis: empty interval");
  for (int guard = 0; guard < 64; ++guard) {
    if (pos < lo) {
      pos = 2.0 * lo - pos;
      vel = -vel;
    } else if (pos > hi) {
      pos = 2.0 * hi - pos;
      vel = -vel;
    } else {
      return;
    }
  }
  throw NumericalError("reflect_axis: did not settle (speed too large?)");
}

namespace {

bool in_mask(ShapeKind kind, int64_t dy, int64_t dx) {
  switch (kind) {
    case ShapeKind::Dot: return std::abs(dy) + std::abs(dx) <= 1;
    case ShapeKind::Square: return true;  // full box
    case ShapeKind::Cross: return dy == 0 || dx == 0;
  }
  return false;
}

void stamp(std::vector<double>& frame, int64_t res, ShapeKind kind, double y,
           double x) {
  const int64_t e = shape_extent(kind);
  const int64_t cy = std::llround(y), cx = std::llround(x);
  for (int64_t dy = -e; dy <= e; ++dy)
    for (int64_t dx = -e; dx <= e; ++dx)
      if (in_mask(kind, dy, dx))
        // Max-compositing: overlapping shapes just stay foreground.
        frame[static_cast<size_t>((cy + dy) * res + (cx + dx))] = 1.0;
}

std::string clip_file_name(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%05d.tnsr", static_cast<int>(index));
  return buf;
}

struct ShapeState {
  ShapeKind kind;
  double y, x, vy, vx;
};

}  // namespace

DatasetHandle synthesize(const DataConfig& config,
                         const std::filesystem::path& dir) {
  config.validate();
  std::filesystem::create_directories(dir);
  const int64_t res = config.resolution;

  DatasetHandle handle;
  handle.dir = dir;
  handle.config = config;

  for (int64_t i = 0; i < config.num_clips; ++i) {
    Rng rng(derive_seed(config.seed, static_cast<uint64_t>(i)));
    std::vector<ShapeState> shapes;
    ClipMeta meta;
    meta.file = clip_file_name(i);
    for (int64_t s = 0; s < config.num_shapes; ++s) {
      std::uniform_int_distribution<size_t> kind_dist(0,
                                                      config.kinds.size() - 1);
      const ShapeKind kind = config.kinds[kind_dist(rng)];
      const double e = static_cast<double>(shape_extent(kind));
      std::uniform_real_distribution<double> pos_dist(
          e, static_cast<double>(res - 1) - e);
      std::uniform_real_distribution<double> angle_dist(
          0.0, 2.0 * 3.14159265358979323846);
      std::uniform_real_distribution<double> speed_dist(config.speed_min,
                                                        config.speed_max);
      ShapeState st;
      st.kind = kind;
      st.y = pos_dist(rng);
      st.x = pos_dist(rng);
      const double angle = angle_dist(rng);
      const double speed = speed_dist(rng);
      st.vy = speed * std::sin(angle);
      st.vx = speed * std::cos(angle);
      shapes.push_back(st);
      meta.shapes.push_back({kind, st.y, st.x, st.vy, st.vx});
    }
    if (config.labeled) {
      const auto it = std::find(config.kinds.begin(), config.kinds.end(),
                                shapes.front().kind);
      meta.label = static_cast<int64_t>(it - config.kinds.begin());
    }

    std::vector<double> clip(
        static_cast<size_t>(config.clip_len * res * res), -1.0);
    for (int64_t t = 0; t < config.clip_len; ++t) {
      std::vector<double> frame(static_cast<size_t>(res * res), -1.0);
      for (auto& st : shapes) stamp(frame, res, st.kind, st.y, st.x);
      std::copy(frame.begin(), frame.end(),
                clip.begin() + t * res * res);
      for (auto& st : shapes) {
        const double e = static_cast<double>(shape_extent(st.kind));
        const double hi = static_cast<double>(res - 1) - e;
        st.y += st.vy;
        st.x += st.vx;
        reflect_axis(st.y, st.vy, e, hi);
        reflect_axis(st.x, st.vx, e, hi);
      }
    }
    Tensor t = from_data({1, config.clip_len, res, res}, std::move(clip),
                         DType::f32);
    save_tensor(dir / meta.file, t);
    handle.clips.push_back(std::move(meta));
  }

  json manifest;
  manifest["version"] = 1;
  manifest["config"] = data_config_to_json(config);
  json clips = json::array();
  for (const auto& m : handle.clips) {
    json shapes = json::array();
    for (const auto& s : m.shapes)
      shapes.push_back({{"kind", shape_kind_name(s.kind)},
                        {"y0", s.y0},
                        {"x0", s.x0},
                        {"vy0", s.vy0},
                        {"vx0", s.vx0}});
    json entry = {{"file", m.file}, {"shapes", shapes}};
    if (m.label) entry["label"] = *m.label;
    clips.push_back(std::move(entry));
  }
  manifest["clips"] = clips;
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream os(tmp);
    os << manifest.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir / "manifest.json");
  return handle;
}

DatasetHandle open_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ValueError("dataset: missing manifest.json in " + dir.string());
  json manifest = json::parse(is, nullptr, /*allow_exceptions=*/false);
  if (manifest.is_discarded())
    throw ValueError("dataset: manifest.json is not valid JSON");
  DatasetHandle handle;
  handle.dir = dir;
  handle.config = data_config_from_json(manifest.at("config"));
  for (const auto& entry : manifest.at("clips")) {
    ClipMeta m;
    m.file = entry.at("file").get<std::string>();
    if (entry.contains("label")) m.label = entry.at("label").get<int64_t>();
    for (const auto& s : entry.at("shapes"))
      m.shapes.push_back({shape_kind_from_name(s.at("kind").get<std::string>()),
                          s.at("y0").get<double>(), s.at("x0").get<double>(),
                          s.at("vy0").get<double>(), s.at("vx0").get<double>()});
    if (!std::filesystem::exists(dir / m.file))
      throw ValueError("dataset: missing clip file " + m.file);
    handle.clips.push_back(std::move(m));
  }
  if (handle.clips.empty()) throw ValueError("dataset: no clips listed");
  return handle;
}

Tensor DatasetHandle::load_clip(int64_t index) const {
  if (index < 0 || index >= num_clips())
    throw ValueError("load_clip: index out of range");
  Tensor t = load_tensor(dir / clips[static_cast<size_t>(index)].file);
  const Shape expect{1, config.clip_len, config.resolution, config.resolution};
  if (t.shape() != expect)
    throw ValueError("load_clip: unexpected shape " + shape_str(t.shape()));
  return t;
}

Batch sample_batch(const DatasetHandle& handle, int64_t t, int64_t batch_size,
                   Rng& rng) {
  if (handle.num_clips() == 0) throw ValueError("sample_batch: empty dataset");
  if (t < 1 || t > handle.config.clip_len)
    throw ValueError("sample_batch: window longer than clips");
  if (batch_size < 1) throw ValueError("sample_batch: batch_size must be >= 1");

  std::uniform_int_distribution<int64_t> clip_dist(0, handle.num_clips() - 1);
  std::uniform_int_distribution<int64_t> off_dist(0,
                                                  handle.config.clip_len - t);
  Tensor videos;
  std::vector<double> labels;
  for (int64_t b = 0; b < batch_size; ++b) {
    const int64_t ci = clip_dist(rng);
    const int64_t off = off_dist(rng);
    Tensor clip = handle.load_clip(ci);  // [1, L, H, W]
    Tensor window = slice(clip, 1, off, t);
    window = reshape(window, {1, 1, t, handle.config.resolution,
                              handle.config.resolution});
    videos = b == 0 ? window : concat(videos, window, 0);
    if (handle.config.labeled)
      labels.push_back(
          static_cast<double>(*handle.clips[static_cast<size_t>(ci)].label));
  }
  Batch batch;
  batch.videos = videos;
  if (handle.config.labeled)
    batch.labels = from_data({batch_size}, std::move(labels));
  return batch;
}

void export_frames(const VideoClip& clip, const std::filesystem::path& dir) {
  if (clip.frames.dim() != 4)
    throw ValueError("export_frames: expected [T, C, H, W] frames");
  const int64_t t = clip.frames.size(0), c = clip.frames.size(1),
                h = clip.frames.size(2), w = clip.frames.size(3);
  if (c != 1 && c != 3)
    throw ValueError("export_frames: only 1 or 3 channels supported");
  std::filesystem::create_directories(dir);
  const char* ext = c == 1 ? "pgm" : "ppm";
  for (int64_t f = 0; f < t; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.%s", static_cast<int>(f),
                  ext);
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw ValueError("export_frames: cannot write to " +
                              (dir / name).string());
    os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w * c));
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch) {
          const double v =
              clip.frames.at(((f * c + ch) * h + y) * w + x);
          // [-1, 1] -> [0, 255], round half up.
          double mapped = std::floor((v + 1.0) * 127.5 + 0.5);
          mapped = std::min(255.0, std::max(0.0, mapped));
          row[static_cast<size_t>(x * c + ch)] =
              static_cast<unsigned char>(mapped);
        }
      os.write(reinterpret_cast<const char*>(row.data()),
               static_cast<std::streamsize>(row.size()));
    }
  }
}

}  // namespace tgan
