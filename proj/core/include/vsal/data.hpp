#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vsal/rng.hpp"
#include "vsal/tensor.hpp"

namespace vsal::data {

struct Frame {
    Tensor image;  // [3,H,W] in [0,1]
};

struct FlowMap {
    Tensor uv;        // [2,H,W], pixels of displacement (u = plane 0, v = plane 1)
    Tensor rendered;  // [3,H,W] in [0,1]; deterministic function of uv
};

struct FixationMap {
    Tensor density;  // [H,W] in [0,1]; max is 1 whenever any fixation exists
};

/// Per-pixel ternary annotation: 0 = unlabeled, 1 = foreground, 2 = background.
struct ScribbleLabel {
    Tensor labels;           // [H,W], codes {0,1,2}
    bool annotated = true;   // false when the fixation map was empty
    bool warning = false;    // set when the mask had no foreground to scribble
};

struct ClipSample {
    std::vector<Frame> frames;
    std::vector<FlowMap> flows;  // flows[0] is the zero field (no previous frame)
    std::vector<FixationMap> fixations;
    std::vector<ScribbleLabel> scribbles;
    std::vector<Tensor> masks;  // dense {0,1} ground truth; empty when unavailable
    std::string clip_id;

    int length() const { return static_cast<int>(frames.size()); }
    int height() const { return frames.empty() ? 0 : frames[0].image.dim(1); }
    int width() const { return frames.empty() ? 0 : frames[0].image.dim(2); }
};

struct SynthConfig {
    int n_objects = 2;
    std::string motion_model = "linear";  // {static, linear, bounce}
    std::uint64_t texture_seed = 0;
    int t = 12;
    int h = 64;
    int w = 64;
};

// Scene description behind the generator; exposed so tests can set up exact
// geometry (e.g. one square translating by a known displacement).
struct SceneObject {
    enum class Shape { Rect, Disk };
    Shape shape = Shape::Rect;
    double cy = 0, cx = 0;       // center at t = 0
    double vy = 0, vx = 0;       // per-frame velocity (integers keep flow exact)
    int half_h = 4, half_w = 4;  // disk radius = half_w
    double color[3] = {0.5, 0.5, 0.5};
    double texture_amp = 0.0;
    std::uint64_t texture_key = 0;
    bool bounce = false;
};

struct Scene {
    int t = 2, h = 64, w = 64;
    std::vector<SceneObject> objects;  // objects[0] is the salient one
    double bg_color[3] = {0.3, 0.3, 0.3};
    double bg_amp = 0.0;
    std::uint64_t bg_key = 0;
    double fixation_sigma = 4.0;
    std::uint64_t scribble_seed = 0;
};

/// Object center at frame t (handles bouncing off the borders).
void object_center(const SceneObject& o, const Scene& s, int t, double* cy, double* cx);

Scene make_scene(const SynthConfig& cfg, std::uint64_t seed);
ClipSample render_scene(const Scene& scene);

/// Deterministic synthetic clip: exact masks, analytic flow, Gaussian
/// fixations on the salient object and fixation-guided scribbles.
ClipSample synthesize_clip(const SynthConfig& cfg, std::uint64_t seed);

/// Single-frame stand-in for a static-image saliency sample (T = 1, zero flow).
ClipSample synthesize_static_clip(const SynthConfig& cfg, std::uint64_t seed);

/// Foreground stroke = subsampled skeleton of the mask component under the
/// fixation peak; background stroke = skeleton of a ring around the dilated
/// mask. An empty fixation yields an unannotated frame (no foreground); an
/// empty mask yields a background-only scribble with the warning flag set.
ScribbleLabel scribble_from_mask(const Tensor& mask, const FixationMap& fixation,
                                 std::uint64_t rng_seed);

/// Color-wheel rendering of a displacement field: hue = atan2(v,u),
/// saturation = |uv| / max_magnitude, value = 1. A non-positive
/// max_magnitude means "normalize by this field's own maximum".
Tensor flow_render(const Tensor& uv, double max_magnitude = 0.0);

/// Fill `rendered` for every flow map, normalizing by the clip-wide maximum.
void render_clip_flows(std::vector<FlowMap>& flows);

double max_flow_magnitude(const std::vector<FlowMap>& flows);

/// Forward-warp a mask by integer displacements (exactness check harness).
Tensor warp_mask_forward(const Tensor& mask, const Tensor& uv);

// Clip directory layout:
//   images/%05d.png  8-bit RGB
//   flow/%05d.flo    "PIEH" magic, int32 width/height, float32 u then v plane
//   fix/%05d.png     8-bit gray
//   scribble/%05d.png codes {0,1,2}
//   mask/%05d.png    {0,255} (optional)
//   meta.json        clip_id, T, H, W, per-frame annotation flags
void save_clip(const std::string& dir, const ClipSample& clip);
ClipSample load_clip(const std::string& dir);

}  // namespace vsal::data
