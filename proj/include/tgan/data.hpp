#pragma once

#include "tgan/models.hpp"

namespace tgan {

enum class ShapeKind { Dot, Square, Cross };

std::string shape_kind_name(ShapeKind k);
ShapeKind shape_kind_from_name(const std::string& name);
// Half-width of the rasterized shape in pixels.
int64_t shape_extent(ShapeKind k);

// Bouncing-shapes dataset: shapes move linearly and bounce elastically off
// the patch edges. Labels (when enabled) are the first shape's index into
// `kinds`, so a conditional model uses V = kinds.size() categories.
struct DataConfig {
  int64_t num_clips = 100;
  int64_t clip_len = 20;
  int64_t train_frames = 16;  // T extracted per training window
  int64_t resolution = 32;
  int64_t num_shapes = 1;  // 1 or 2
  std::vector<ShapeKind> kinds = {ShapeKind::Dot, ShapeKind::Square,
                                  ShapeKind::Cross};
  double speed_min = 0.5;
  double speed_max = 2.0;
  uint64_t seed = 0;
  bool labeled = false;

  void validate() const;
};

nlohmann::json data_config_to_json(const DataConfig& c);
DataConfig data_config_from_json(const nlohmann::json& j);

// Ground truth recorded per shape so physics can be audited from the
// manifest without re-running the simulation.
struct ShapeMeta {
  ShapeKind kind = ShapeKind::Dot;
  double y0 = 0.0, x0 = 0.0;  // initial sub-pixel centre
  double vy0 = 0.0, vx0 = 0.0;
};

struct ClipMeta {
  std::string file;
  std::optional<int64_t> label;
  std::vector<ShapeMeta> shapes;
};

struct DatasetHandle {
  std::filesystem::path dir;
  DataConfig config;
  std::vector<ClipMeta> clips;

  int64_t num_clips() const { return static_cast<int64_t>(clips.size()); }
  // [1, clip_len, H, W], values in {-1, 1}.
  Tensor load_clip(int64_t index) const;
};

// One elastic reflection step on a single axis: positions outside [lo, hi]
// are mirrored back and the velocity component negated.
void reflect_axis(double& pos, double& vel, double lo, double hi);

DatasetHandle synthesize(const DataConfig& config,
                         const std::filesystem::path& dir);
DatasetHandle open_dataset(const std::filesystem::path& dir);

struct Batch {
  Tensor videos;                 // [N, 1, T, H, W]
  std::optional<Tensor> labels;  // [N] label indices, when labeled
};

// Contiguous random T-frame windows from random clips.
Batch sample_batch(const DatasetHandle& handle, int64_t t, int64_t batch_size,
                   Rng& rng);

// One portable pixmap per frame: P5 for grayscale, P6 for RGB; values
// mapped [-1, 1] -> [0, 255] with round-half-up.
void export_frames(const VideoClip& clip, const std::filesystem::path& dir);

}  // namespace tgan
