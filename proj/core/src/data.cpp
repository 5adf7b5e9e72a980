#include "vsal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vsal/errors.hpp"
#include "vsal/image.hpp"
#include "vsal/morphology.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace vsal::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string frame_name(int t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", t);
    return buf;
}

std::string flo_name(int t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.flo", t);
    return buf;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Texture value in object-local integer coordinates so patterns translate
// rigidly with the object.
double textured(double base, double amp, std::int64_t ly, std::int64_t lx, std::uint64_t key, int ch) {
    if (amp == 0.0) return clamp01(base);
    const double n = hash01(static_cast<std::uint64_t>(ly) * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(lx),
                            key, static_cast<std::uint64_t>(ch));
    return clamp01(base + amp * (n - 0.5));
}

bool covers(const SceneObject& o, double cy, double cx, int y, int x) {
    const double dy = y - cy, dx = x - cx;
    if (o.shape == SceneObject::Shape::Disk) {
        const double r = o.half_w;
        return dy * dy + dx * dx <= r * r;
    }
    return std::abs(dy) <= o.half_h && std::abs(dx) <= o.half_w;
}

}  // namespace

void object_center(const SceneObject& o, const Scene& s, int t, double* cy, double* cx) {
    if (!o.bounce) {
        *cy = o.cy + o.vy * t;
        *cx = o.cx + o.vx * t;
        return;
    }
    // Reflect off a margin box so bouncing trajectories stay inside.
    const double lo_y = o.half_h + 2, hi_y = s.h - 1.0 - o.half_h - 2;
    const double lo_x = o.half_w + 2, hi_x = s.w - 1.0 - o.half_w - 2;
    double y = o.cy, x = o.cx, vy = o.vy, vx = o.vx;
    for (int i = 0; i < t; ++i) {
        if (y + vy < lo_y || y + vy > hi_y) vy = -vy;
        if (x + vx < lo_x || x + vx > hi_x) vx = -vx;
        y += vy;
        x += vx;
    }
    *cy = y;
    *cx = x;
}

ScribbleLabel scribble_from_mask(const Tensor& mask, const FixationMap& fixation,
                                 std::uint64_t rng_seed) {
    if (!mask.same_shape(fixation.density))
        throw ShapeError("scribble_from_mask: mask and fixation shapes differ");
    const int h = mask.dim(0), w = mask.dim(1);
    ScribbleLabel out;
    out.labels = Tensor({h, w});
    Rng rng(rng_seed);

    const bool mask_empty = count_nonzero(mask) == 0;
    const bool fix_empty = fixation.density.max_abs() == 0.0;

    // Foreground: skeleton of the component under the fixation peak, thinned
    // to at most 20% of its pixels (never below one).
    if (!mask_empty && !fix_empty) {
        int py = 0, px = 0;
        double best = -1.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (fixation.density.at(y, x) > best) {
                    best = fixation.density.at(y, x);
                    py = y;
                    px = x;
                }
        if (mask.at(py, px) == 0.0) nearest_on(mask, py, px, &py, &px);
        Tensor comp = component_at(mask, py, px);
        Tensor skel = skeletonize(comp);
        std::vector<int> idx;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (skel.at(y, x) != 0.0) idx.push_back(y * w + x);
        if (!idx.empty()) {
            const int keep = std::max<int>(1, static_cast<int>(idx.size()) / 5);
            for (int i = 0; i < keep; ++i) {  // partial Fisher-Yates
                const int j = rng.uniform_int(i, static_cast<int>(idx.size()) - 1);
                std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
                out.labels[idx[static_cast<size_t>(i)]] = 1.0;
            }
        }
    }
    out.annotated = !mask_empty && !fix_empty;
    out.warning = mask_empty;

    // Background: skeleton of the ring between dilation radii 3 and 6.
    Tensor bg_band({h, w});
    if (!mask_empty) {
        Tensor outer = dilate(mask, 6);
        Tensor inner = dilate(mask, 3);
        for (std::int64_t i = 0; i < bg_band.size(); ++i)
            bg_band[i] = (outer[i] != 0.0 && inner[i] == 0.0) ? 1.0 : 0.0;
        bg_band = skeletonize(bg_band);
    }
    if (count_nonzero(bg_band) == 0) {
        // Fallback ring two pixels in from the border (everything is
        // background when there is no object nearby).
        Tensor inner = mask_empty ? Tensor({h, w}) : dilate(mask, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int d = std::min(std::min(y, h - 1 - y), std::min(x, w - 1 - x));
                if (d == 2 && inner.at(y, x) == 0.0) bg_band.at(y, x) = 1.0;
            }
    }
    for (std::int64_t i = 0; i < bg_band.size(); ++i)
        if (bg_band[i] != 0.0 && out.labels[i] == 0.0) out.labels[i] = 2.0;
    return out;
}

Tensor flow_render(const Tensor& uv, double max_magnitude) {
    if (uv.ndim() != 3 || uv.dim(0) != 2) throw ShapeError("flow_render: expected [2,H,W]");
    if (!uv.all_finite()) throw ShapeError("flow_render: non-finite flow");
    const int h = uv.dim(1), w = uv.dim(2);
    double mx = max_magnitude;
    if (mx <= 0.0) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                mx = std::max(mx, std::hypot(uv.at(0, y, x), uv.at(1, y, x)));
    }
    Tensor out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = uv.at(0, y, x), v = uv.at(1, y, x);
            const double mag = std::hypot(u, v);
            const double sat = mx > 0.0 ? std::min(1.0, mag / mx) : 0.0;
            double hue = std::atan2(v, u) / (2.0 * kPi);
            if (hue < 0.0) hue += 1.0;
            // HSV -> RGB with value 1
            const double h6 = hue * 6.0;
            const int sector = std::min(5, static_cast<int>(h6));
            const double f = h6 - sector;
            const double p = 1.0 - sat;
            const double q = 1.0 - f * sat;
            const double tt = 1.0 - (1.0 - f) * sat;
            double r, g, b;
            switch (sector) {
                case 0: r = 1.0, g = tt, b = p; break;
                case 1: r = q, g = 1.0, b = p; break;
                case 2: r = p, g = 1.0, b = tt; break;
                case 3: r = p, g = q, b = 1.0; break;
                case 4: r = tt, g = p, b = 1.0; break;
                default: r = 1.0, g = p, b = q; break;
            }
            out.at(0, y, x) = r;
            out.at(1, y, x) = g;
            out.at(2, y, x) = b;
        }
    return out;
}

double max_flow_magnitude(const std::vector<FlowMap>& flows) {
    double mx = 0.0;
    for (const FlowMap& f : flows) {
        const int h = f.uv.dim(1), w = f.uv.dim(2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) mx = std::max(mx, std::hypot(f.uv.at(0, y, x), f.uv.at(1, y, x)));
    }
    return mx;
}

void render_clip_flows(std::vector<FlowMap>& flows) {
    const double mx = max_flow_magnitude(flows);
    for (FlowMap& f : flows) f.rendered = flow_render(f.uv, mx > 0.0 ? mx : -1.0);
}

Tensor warp_mask_forward(const Tensor& mask, const Tensor& uv) {
    const int h = mask.dim(0), w = mask.dim(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x) == 0.0) continue;
            const int ny = y + static_cast<int>(std::lround(uv.at(1, y, x)));
            const int nx = x + static_cast<int>(std::lround(uv.at(0, y, x)));
            if (ny >= 0 && ny < h && nx >= 0 && nx < w) out.at(ny, nx) = 1.0;
        }
    return out;
}

Scene make_scene(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.n_objects < 1) throw ConfigError("synth: n_objects must be >= 1");
    if (cfg.motion_model != "static" && cfg.motion_model != "linear" && cfg.motion_model != "bounce")
        throw ConfigError("synth: unknown motion model '" + cfg.motion_model + "'");
    Rng rng(seed);
    Scene s;
    s.t = cfg.t;
    s.h = cfg.h;
    s.w = cfg.w;
    s.scribble_seed = splitmix64(seed ^ 0x5C21BB1E5EEDULL);
    s.bg_key = splitmix64(cfg.texture_seed ^ 0xB6ULL);
    s.bg_amp = 0.05;
    for (int c = 0; c < 3; ++c) s.bg_color[c] = rng.uniform(0.15, 0.45);

    const int half_hi = std::max(3, std::min(6, (std::min(cfg.h, cfg.w) - 20) / 4));
    const int half_lo = std::min(4, half_hi);

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<SceneObject> objs;
        bool ok = true;
        for (int i = 0; i < cfg.n_objects && ok; ++i) {
            SceneObject o;
            o.shape = rng.bernoulli(0.5) ? SceneObject::Shape::Rect : SceneObject::Shape::Disk;
            o.half_h = rng.uniform_int(half_lo, half_hi);
            o.half_w = o.shape == SceneObject::Shape::Disk ? o.half_h : rng.uniform_int(half_lo, half_hi);
            for (int tries = 0;; ++tries) {
                double dist = 0.0;
                for (int c = 0; c < 3; ++c) {
                    o.color[c] = rng.uniform(0.1, 0.9);
                    dist = std::max(dist, std::abs(o.color[c] - s.bg_color[c]));
                }
                if (dist >= 0.25 || tries > 50) break;
            }
            o.texture_amp = 0.06;
            o.texture_key = splitmix64(cfg.texture_seed ^ (0xC0FFEEULL + static_cast<std::uint64_t>(i)));
            const bool moving = i == 0 && cfg.motion_model != "static";
            if (moving) {
                do {
                    o.vy = rng.uniform_int(-2, 2);
                    o.vx = rng.uniform_int(-2, 2);
                } while (o.vy == 0 && o.vx == 0);
                o.bounce = cfg.motion_model == "bounce";
            }
            // Keep the salient object at least 8px inside so its background
            // ring fits; distractors only need to stay on canvas.
            const int margin = i == 0 ? 8 : 2;
            const double span_y = o.bounce ? 0.0 : o.vy * (cfg.t - 1);
            const double span_x = o.bounce ? 0.0 : o.vx * (cfg.t - 1);
            const int lo_y = margin + o.half_h + static_cast<int>(std::max(0.0, -span_y));
            const int hi_y = cfg.h - 1 - margin - o.half_h - static_cast<int>(std::max(0.0, span_y));
            const int lo_x = margin + o.half_w + static_cast<int>(std::max(0.0, -span_x));
            const int hi_x = cfg.w - 1 - margin - o.half_w - static_cast<int>(std::max(0.0, span_x));
            if (lo_y > hi_y || lo_x > hi_x) {
                ok = false;
                break;
            }
            o.cy = rng.uniform_int(lo_y, hi_y);
            o.cx = rng.uniform_int(lo_x, hi_x);
            objs.push_back(o);
        }
        if (!ok) continue;

        // Objects must stay disjoint at every frame; distractors also keep
        // clear of the salient object's scribble ring (radius 6).
        bool disjoint = true;
        for (int t = 0; t < cfg.t && disjoint; ++t) {
            for (size_t i = 0; i < objs.size() && disjoint; ++i)
                for (size_t j = i + 1; j < objs.size() && disjoint; ++j) {
                    double cyi, cxi, cyj, cxj;
                    Scene tmp = s;
                    tmp.objects = objs;
                    object_center(objs[i], tmp, t, &cyi, &cxi);
                    object_center(objs[j], tmp, t, &cyj, &cxj);
                    const int pad = (i == 0 || j == 0) ? 8 : 2;
                    const bool sep_y = std::abs(cyi - cyj) > objs[i].half_h + objs[j].half_h + pad;
                    const bool sep_x = std::abs(cxi - cxj) > objs[i].half_w + objs[j].half_w + pad;
                    disjoint = sep_y || sep_x;
                }
        }
        if (!disjoint) continue;

        s.objects = std::move(objs);
        s.fixation_sigma = std::max(2.0, 0.6 * std::min(s.objects[0].half_h, s.objects[0].half_w));
        return s;
    }
    throw ConfigError("synth: could not place " + std::to_string(cfg.n_objects) + " objects on " +
                      std::to_string(cfg.h) + "x" + std::to_string(cfg.w));
}

ClipSample render_scene(const Scene& s) {
    ClipSample clip;
    const int t_len = s.t, h = s.h, w = s.w;
    std::vector<std::vector<std::pair<double, double>>> centers(
        static_cast<size_t>(t_len), std::vector<std::pair<double, double>>(s.objects.size()));
    for (int t = 0; t < t_len; ++t)
        for (size_t i = 0; i < s.objects.size(); ++i)
            object_center(s.objects[i], s, t, &centers[static_cast<size_t>(t)][i].first,
                          &centers[static_cast<size_t>(t)][i].second);

    auto top_object = [&](int t, int y, int x) -> int {
        for (size_t i = 0; i < s.objects.size(); ++i) {
            const auto& c = centers[static_cast<size_t>(t)][i];
            if (covers(s.objects[i], c.first, c.second, y, x)) return static_cast<int>(i);
        }
        return -1;
    };

    for (int t = 0; t < t_len; ++t) {
        Frame fr;
        fr.image = Tensor({3, h, w});
        Tensor mask({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int oi = top_object(t, y, x);
                if (oi >= 0) {
                    const SceneObject& o = s.objects[static_cast<size_t>(oi)];
                    const auto& c = centers[static_cast<size_t>(t)][static_cast<size_t>(oi)];
                    const std::int64_t ly = y - static_cast<std::int64_t>(std::lround(c.first));
                    const std::int64_t lx = x - static_cast<std::int64_t>(std::lround(c.second));
                    for (int ch = 0; ch < 3; ++ch)
                        fr.image.at(ch, y, x) = textured(o.color[ch], o.texture_amp, ly, lx, o.texture_key, ch);
                    if (oi == 0) mask.at(y, x) = 1.0;
                } else {
                    for (int ch = 0; ch < 3; ++ch)
                        fr.image.at(ch, y, x) = textured(s.bg_color[ch], s.bg_amp, y, x, s.bg_key, ch);
                }
            }
        fr.image = quantize8(fr.image);
        clip.frames.push_back(std::move(fr));
        clip.masks.push_back(std::move(mask));

        FlowMap fm;
        fm.uv = Tensor({2, h, w});
        if (t > 0) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int oi = top_object(t - 1, y, x);
                    if (oi < 0) continue;
                    const auto& prev = centers[static_cast<size_t>(t - 1)][static_cast<size_t>(oi)];
                    const auto& cur = centers[static_cast<size_t>(t)][static_cast<size_t>(oi)];
                    fm.uv.at(0, y, x) = cur.second - prev.second;  // u: x displacement
                    fm.uv.at(1, y, x) = cur.first - prev.first;    // v: y displacement
                }
        }
        clip.flows.push_back(std::move(fm));

        FixationMap fx;
        fx.density = Tensor({h, w});
        const auto& sc = centers[static_cast<size_t>(t)][0];
        const double inv2s2 = 1.0 / (2.0 * s.fixation_sigma * s.fixation_sigma);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dy = y - sc.first, dx = x - sc.second;
                fx.density.at(y, x) = std::exp(-(dy * dy + dx * dx) * inv2s2);
            }
        fx.density = quantize8(fx.density);
        clip.fixations.push_back(std::move(fx));
    }
    for (int t = 0; t < t_len; ++t)
        clip.scribbles.push_back(
            scribble_from_mask(clip.masks[static_cast<size_t>(t)], clip.fixations[static_cast<size_t>(t)],
                               s.scribble_seed + static_cast<std::uint64_t>(t)));
    render_clip_flows(clip.flows);
    return clip;
}

ClipSample synthesize_clip(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.t < 2) throw ConfigError("synth: clip length must be >= 2");
    if (cfg.h < 32 || cfg.w < 32) throw ConfigError("synth: spatial size must be >= 32");
    ClipSample clip = render_scene(make_scene(cfg, seed));
    clip.clip_id = "clip-" + std::to_string(seed);
    return clip;
}

ClipSample synthesize_static_clip(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.h < 32 || cfg.w < 32) throw ConfigError("synth: spatial size must be >= 32");
    SynthConfig one = cfg;
    one.t = 1;
    one.motion_model = "static";
    ClipSample clip = render_scene(make_scene(one, seed));
    clip.clip_id = "static-" + std::to_string(seed);
    return clip;
}

// ---------------------------------------------------------------------------
// persistence

namespace {

void write_flo(const std::string& path, const Tensor& uv) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    const char magic[4] = {'P', 'I', 'E', 'H'};
    f.write(magic, 4);
    const std::int32_t w = uv.dim(2), h = uv.dim(1);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> plane(static_cast<size_t>(h) * w);
    for (int p = 0; p < 2; ++p) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                plane[static_cast<size_t>(y) * w + x] = static_cast<float>(uv.at(p, y, x));
        f.write(reinterpret_cast<const char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
    }
}

Tensor read_flo(const std::string& path, int expect_h, int expect_w) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("missing file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PIEH", 4) != 0) throw DataError("bad flow magic in " + path);
    std::int32_t w = 0, h = 0;
    f.read(reinterpret_cast<char*>(&w), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    if (!f || h != expect_h || w != expect_w)
        throw DataError("size mismatch in " + path);
    Tensor uv({2, h, w});
    std::vector<float> plane(static_cast<size_t>(h) * w);
    for (int p = 0; p < 2; ++p) {
        f.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size() * 4));
        if (!f) throw DataError("truncated flow file: " + path);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) uv.at(p, y, x) = plane[static_cast<size_t>(y) * w + x];
    }
    return uv;
}

}  // namespace

void save_clip(const std::string& dir, const ClipSample& clip) {
    const fs::path root(dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "flow");
    fs::create_directories(root / "fix");
    fs::create_directories(root / "scribble");
    if (!clip.masks.empty()) fs::create_directories(root / "mask");

    json meta;
    meta["clip_id"] = clip.clip_id;
    meta["T"] = clip.length();
    meta["H"] = clip.height();
    meta["W"] = clip.width();
    meta["has_masks"] = !clip.masks.empty();
    json annotated = json::array(), warning = json::array();

    for (int t = 0; t < clip.length(); ++t) {
        const size_t ti = static_cast<size_t>(t);
        write_png((root / "images" / frame_name(t)).string(), tensor_to_rgb(clip.frames[ti].image));
        write_flo((root / "flow" / flo_name(t)).string(), clip.flows[ti].uv);
        write_png((root / "fix" / frame_name(t)).string(), tensor_to_gray(clip.fixations[ti].density));

        const Tensor& lab = clip.scribbles[ti].labels;
        ImageU8 simg;
        simg.height = lab.dim(0);
        simg.width = lab.dim(1);
        simg.channels = 1;
        simg.pixels.resize(static_cast<size_t>(simg.height) * simg.width);
        for (std::int64_t i = 0; i < lab.size(); ++i)
            simg.pixels[static_cast<size_t>(i)] = static_cast<std::uint8_t>(lab[i]);
        write_png((root / "scribble" / frame_name(t)).string(), simg);

        if (!clip.masks.empty()) {
            const Tensor& m = clip.masks[ti];
            ImageU8 mimg;
            mimg.height = m.dim(0);
            mimg.width = m.dim(1);
            mimg.channels = 1;
            mimg.pixels.resize(static_cast<size_t>(mimg.height) * mimg.width);
            for (std::int64_t i = 0; i < m.size(); ++i)
                mimg.pixels[static_cast<size_t>(i)] = m[i] != 0.0 ? 255 : 0;
            write_png((root / "mask" / frame_name(t)).string(), mimg);
        }
        annotated.push_back(clip.scribbles[ti].annotated);
        warning.push_back(clip.scribbles[ti].warning);
    }
    meta["annotated"] = annotated;
    meta["warning"] = warning;
    std::ofstream mf(root / "meta.json");
    mf << meta.dump(2) << "\n";
}

ClipSample load_clip(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream mf(root / "meta.json");
    if (!mf) throw DataError("missing file: " + (root / "meta.json").string());
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw DataError("bad meta.json in " + dir + ": " + e.what());
    }
    ClipSample clip;
    clip.clip_id = meta.value("clip_id", std::string());
    const int t_len = meta.at("T").get<int>();
    const int h = meta.at("H").get<int>();
    const int w = meta.at("W").get<int>();
    if (t_len < 1) throw DataError("meta.json: T must be >= 1 in " + dir);
    const bool has_masks = meta.value("has_masks", false);

    auto require_file = [](const fs::path& p) {
        if (!fs::exists(p)) throw DataError("missing file: " + p.string());
    };

    for (int t = 0; t < t_len; ++t) {
        const size_t ti = static_cast<size_t>(t);
        const fs::path ipath = root / "images" / frame_name(t);
        require_file(ipath);
        ImageU8 img = read_png(ipath.string());
        if (img.height != h || img.width != w || img.channels != 3)
            throw DataError("size mismatch in " + ipath.string());
        Frame fr;
        fr.image = rgb_to_tensor(img);
        clip.frames.push_back(std::move(fr));

        const fs::path fpath = root / "flow" / flo_name(t);
        require_file(fpath);
        FlowMap fm;
        fm.uv = read_flo(fpath.string(), h, w);
        clip.flows.push_back(std::move(fm));

        const fs::path xpath = root / "fix" / frame_name(t);
        require_file(xpath);
        ImageU8 fimg = read_png(xpath.string());
        if (fimg.height != h || fimg.width != w || fimg.channels != 1)
            throw DataError("size mismatch in " + xpath.string());
        FixationMap fx;
        fx.density = gray_to_tensor(fimg);
        clip.fixations.push_back(std::move(fx));

        const fs::path spath = root / "scribble" / frame_name(t);
        require_file(spath);
        ImageU8 simg = read_png(spath.string());
        if (simg.height != h || simg.width != w || simg.channels != 1)
            throw DataError("size mismatch in " + spath.string());
        ScribbleLabel sl;
        sl.labels = Tensor({h, w});
        for (std::int64_t i = 0; i < sl.labels.size(); ++i) {
            const std::uint8_t code = simg.pixels[static_cast<size_t>(i)];
            if (code > 2) throw DataError("invalid scribble code " + std::to_string(code) + " in " + spath.string());
            sl.labels[i] = code;
        }
        if (meta.contains("annotated")) sl.annotated = meta["annotated"].at(ti).get<bool>();
        if (meta.contains("warning")) sl.warning = meta["warning"].at(ti).get<bool>();
        clip.scribbles.push_back(std::move(sl));

        if (has_masks) {
            const fs::path mpath = root / "mask" / frame_name(t);
            require_file(mpath);
            ImageU8 mimg = read_png(mpath.string());
            if (mimg.height != h || mimg.width != w || mimg.channels != 1)
                throw DataError("size mismatch in " + mpath.string());
            Tensor m({h, w});
            for (std::int64_t i = 0; i < m.size(); ++i) {
                const std::uint8_t v = mimg.pixels[static_cast<size_t>(i)];
                if (v != 0 && v != 255) throw DataError("invalid mask value in " + mpath.string());
                m[i] = v == 255 ? 1.0 : 0.0;
            }
            clip.masks.push_back(std::move(m));
        }
    }
    render_clip_flows(clip.flows);
    return clip;
}

}  // namespace vsal::data
