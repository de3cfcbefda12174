#include "pgv/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "pgv/pgvt_io.hpp"
#include "pgv/rng.hpp"

namespace pgv {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ObjectSpec {
    bool is_disc;
    int class_id;
    float color[3];
    float half_h, half_w;  // rect half extents; discs use radius
    float radius;
    float cy, cx;  // center
    float vy, vx;  // velocity, px per frame
    float cell_y0, cell_y1, cell_x0, cell_x1;  // center bounds (bounce walls)
};

struct ShotSpec {
    int begin, end;  // frame range [begin, end)
    float bg[3];
    int tex_fx, tex_fy;
    float tex_px, tex_py;
    std::vector<ObjectSpec> objects;
};

float clampf(float v, float lo, float hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Saturated hue wheel for the foreground classes.
void class_base_color(int class_id, int num_classes, float out[3]) {
    double hue = static_cast<double>(class_id - 1) / (num_classes - 1);  // [0,1)
    double h6 = hue * 6.0;
    int i = static_cast<int>(h6) % 6;
    double f = h6 - std::floor(h6);
    double p = 0.15, q = 0.95;
    double r = q, g = q, b = q;
    switch (i) {
    case 0: r = q; g = p + f * (q - p); b = p; break;
    case 1: r = q - f * (q - p); g = q; b = p; break;
    case 2: r = p; g = q; b = p + f * (q - p); break;
    case 3: r = p; g = q - f * (q - p); b = q; break;
    case 4: r = p + f * (q - p); g = p; b = q; break;
    default: r = q; g = p; b = q - f * (q - p); break;
    }
    out[0] = static_cast<float>(r);
    out[1] = static_cast<float>(g);
    out[2] = static_cast<float>(b);
}

std::vector<int> choose_boundaries(int frames, int shots, Rng& rng) {
    std::vector<int> cuts;
    if (shots <= 1) return cuts;
    int jmax = std::max(0, frames / (4 * shots));
    int prev = 0;
    for (int i = 1; i < shots; ++i) {
        int base = static_cast<int>(std::lround(static_cast<double>(i) * frames / shots));
        int jitter = jmax > 0 ? rng.uniform_int(2 * jmax + 1) - jmax : 0;
        int cut = std::clamp(base + jitter, prev + 2, frames - 2 * (shots - i));
        cuts.push_back(cut);
        prev = cut;
    }
    return cuts;
}

}  // namespace

void SynthConfig::validate() const {
    if (num_videos < 1) fail(ErrorKind::Config, "num_videos must be >= 1");
    if (frames_per_video < 1) fail(ErrorKind::Config, "frames_per_video must be >= 1");
    if (shots_min < 1 || shots_max < shots_min)
        fail(ErrorKind::Config, "shot range must satisfy 1 <= shots_min <= shots_max");
    if (shots_max > 1 && frames_per_video < 2 * shots_max)
        fail(ErrorKind::Config, "frames_per_video too small for requested shots");
    if (num_classes < 3)
        fail(ErrorKind::Config, "num_classes must be >= 3 (background + 2 foreground)");
    if (resolution < 16) fail(ErrorKind::Config, "resolution must be >= 16");
    if (objects_min < 1 || objects_max < objects_min)
        fail(ErrorKind::Config, "object count range must satisfy 1 <= objects_min <= objects_max");
    if (motion_speed < 0.0f) fail(ErrorKind::Config, "motion_speed must be >= 0");
    if (noise_amp < 0.0f || noise_amp > 0.5f) fail(ErrorKind::Config, "noise_amp must be in [0, 0.5]");
    if (palette_jitter < 0.0f || palette_jitter > 0.4f)
        fail(ErrorKind::Config, "palette_jitter must be in [0, 0.4]");
}

void VideoDataset::validate() const {
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (const auto& video : videos) {
        int frames = static_cast<int>(video.frames.size());
        int prev = 0;
        for (int b : video.true_shot_boundaries) {
            if (b <= prev || b >= frames)
                fail(ErrorKind::Data, "shot boundary out of range or not increasing");
            prev = b;
        }
        for (const auto& frame : video.frames) {
            if (frame.image.rank() != 3 || frame.image.dim(0) != 3 || frame.image.dim(1) != height ||
                frame.image.dim(2) != width)
                fail(ErrorKind::Data, "frame image has wrong shape");
            if (frame.label.h != height || frame.label.w != width)
                fail(ErrorKind::Data, "frame label has wrong shape");
            for (float v : frame.image.data)
                if (!(v >= 0.0f && v <= 1.0f)) fail(ErrorKind::Data, "image value outside [0,1]");
            for (std::int32_t c : frame.label.v) {
                if (c < 0 || c >= num_classes) fail(ErrorKind::Data, "label value outside [0, C)");
                seen[static_cast<std::size_t>(c)] = true;
            }
        }
    }
    for (int c = 0; c < num_classes; ++c)
        if (!seen[static_cast<std::size_t>(c)])
            fail(ErrorKind::Data, "class " + std::to_string(c) + " absent from generated dataset");
}

VideoDataset generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    const int res = cfg.resolution;
    const int radius = cfg.object_radius();

    VideoDataset ds;
    ds.num_classes = cfg.num_classes;
    ds.height = res;
    ds.width = res;
    ds.videos.resize(static_cast<std::size_t>(cfg.num_videos));

    Rng master(cfg.seed);
    // Background luma ladder; consecutive shots take different rungs so the
    // histogram change across a boundary is large.
    const float luma_ladder[3] = {0.22f, 0.52f, 0.82f};

    for (int v = 0; v < cfg.num_videos; ++v) {
        Rng rng = master.fork("video", static_cast<std::uint64_t>(v));
        Video& video = ds.videos[static_cast<std::size_t>(v)];

        int shots = cfg.shots_min + rng.uniform_int(cfg.shots_max - cfg.shots_min + 1);
        video.true_shot_boundaries = choose_boundaries(cfg.frames_per_video, shots, rng);

        std::vector<ShotSpec> shot_specs;
        int object_counter = 0;
        for (int s = 0; s < shots; ++s) {
            ShotSpec shot;
            shot.begin = s == 0 ? 0 : video.true_shot_boundaries[static_cast<std::size_t>(s - 1)];
            shot.end = s == shots - 1 ? cfg.frames_per_video
                                      : video.true_shot_boundaries[static_cast<std::size_t>(s)];

            float luma = luma_ladder[(v + s) % 3] + rng.uniform_float(-0.04f, 0.04f);
            for (int ch = 0; ch < 3; ++ch)
                shot.bg[ch] = clampf(luma + rng.uniform_float(-0.06f, 0.06f), 0.02f, 0.98f);
            shot.tex_fx = 1 + rng.uniform_int(3);
            shot.tex_fy = 1 + rng.uniform_int(3);
            shot.tex_px = rng.uniform_float(0.0f, static_cast<float>(2.0 * kPi));
            shot.tex_py = rng.uniform_float(0.0f, static_cast<float>(2.0 * kPi));

            int count = cfg.objects_min + rng.uniform_int(cfg.objects_max - cfg.objects_min + 1);
            // One cell per object; objects bounce inside their cell so shapes
            // never overlap or clip at the frame border.
            int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
            int grid_rows = (count + grid_cols - 1) / grid_cols;
            float cell_w = static_cast<float>(res) / grid_cols;
            float cell_h = static_cast<float>(res) / grid_rows;
            float margin = static_cast<float>(radius) + 2.0f;
            if (cell_w < 2 * margin + 2 || cell_h < 2 * margin + 2)
                fail(ErrorKind::Config,
                     "resolution too small to place " + std::to_string(count) + " objects of radius " +
                         std::to_string(radius));

            for (int k = 0; k < count; ++k) {
                ObjectSpec obj;
                obj.is_disc = rng.uniform_int(2) == 0;
                obj.class_id = 1 + (v + object_counter) % (cfg.num_classes - 1);
                ++object_counter;
                class_base_color(obj.class_id, cfg.num_classes, obj.color);
                for (int ch = 0; ch < 3; ++ch)
                    obj.color[ch] = clampf(
                        obj.color[ch] + rng.uniform_float(-cfg.palette_jitter, cfg.palette_jitter),
                        0.05f, 0.95f);
                obj.radius = static_cast<float>(radius);
                if (obj.is_disc) {
                    obj.half_h = obj.half_w = obj.radius;
                } else {
                    // area-matched rectangle: 4*a*b == pi*r^2
                    float half = obj.radius * static_cast<float>(std::sqrt(kPi)) / 2.0f;
                    float aspect = rng.uniform_float(0.85f, 1.18f);
                    obj.half_h = half * aspect;
                    obj.half_w = half / aspect;
                }
                int row = k / grid_cols, col = k % grid_cols;
                obj.cell_y0 = row * cell_h + margin;
                obj.cell_y1 = (row + 1) * cell_h - margin - 1.0f;
                obj.cell_x0 = col * cell_w + margin;
                obj.cell_x1 = (col + 1) * cell_w - margin - 1.0f;
                obj.cy = rng.uniform_float(obj.cell_y0, obj.cell_y1);
                obj.cx = rng.uniform_float(obj.cell_x0, obj.cell_x1);
                float angle = rng.uniform_float(0.0f, static_cast<float>(2.0 * kPi));
                obj.vy = cfg.motion_speed * std::sin(angle);
                obj.vx = cfg.motion_speed * std::cos(angle);
                shot.objects.push_back(obj);
            }
            shot_specs.push_back(std::move(shot));
        }

        // Render. The background plane is fixed per shot; objects advance by
        // their velocity each frame, reflecting at cell walls.
        video.frames.reserve(static_cast<std::size_t>(cfg.frames_per_video));
        for (auto& shot : shot_specs) {
            Tensor bg_plane = Tensor::zeros({3, res, res});
            for (int y = 0; y < res; ++y) {
                for (int x = 0; x < res; ++x) {
                    float tex = 0.05f * (std::sin(static_cast<float>(2.0 * kPi) * shot.tex_fx * x /
                                                      res + shot.tex_px) +
                                         std::sin(static_cast<float>(2.0 * kPi) * shot.tex_fy * y /
                                                      res + shot.tex_py)) *
                                0.5f;
                    for (int ch = 0; ch < 3; ++ch)
                        bg_plane.at(ch, y, x) = clampf(shot.bg[ch] + tex, 0.01f, 0.99f);
                }
            }
            for (int t = shot.begin; t < shot.end; ++t) {
                Frame frame;
                frame.image = bg_plane;
                frame.label = LabelMap(res, res, 0);
                for (auto& obj : shot.objects) {
                    int y_lo = std::max(0, static_cast<int>(std::floor(obj.cy - obj.half_h - 1)));
                    int y_hi = std::min(res - 1, static_cast<int>(std::ceil(obj.cy + obj.half_h + 1)));
                    int x_lo = std::max(0, static_cast<int>(std::floor(obj.cx - obj.half_w - 1)));
                    int x_hi = std::min(res - 1, static_cast<int>(std::ceil(obj.cx + obj.half_w + 1)));
                    for (int y = y_lo; y <= y_hi; ++y) {
                        for (int x = x_lo; x <= x_hi; ++x) {
                            float dy = static_cast<float>(y) - obj.cy;
                            float dx = static_cast<float>(x) - obj.cx;
                            bool inside = obj.is_disc
                                              ? dy * dy + dx * dx <= obj.radius * obj.radius
                                              : std::fabs(dy) <= obj.half_h &&
                                                    std::fabs(dx) <= obj.half_w;
                            if (!inside) continue;
                            frame.label.at(y, x) = obj.class_id;
                            for (int ch = 0; ch < 3; ++ch)
                                frame.image.at(ch, y, x) = obj.color[ch];
                        }
                    }
                    obj.cy += obj.vy;
                    obj.cx += obj.vx;
                    if (obj.cy < obj.cell_y0) { obj.cy = 2 * obj.cell_y0 - obj.cy; obj.vy = -obj.vy; }
                    if (obj.cy > obj.cell_y1) { obj.cy = 2 * obj.cell_y1 - obj.cy; obj.vy = -obj.vy; }
                    if (obj.cx < obj.cell_x0) { obj.cx = 2 * obj.cell_x0 - obj.cx; obj.vx = -obj.vx; }
                    if (obj.cx > obj.cell_x1) { obj.cx = 2 * obj.cell_x1 - obj.cx; obj.vx = -obj.vx; }
                }
                for (float& p : frame.image.data)
                    p = clampf(p + rng.uniform_float(-cfg.noise_amp, cfg.noise_amp), 0.0f, 1.0f);
                video.frames.push_back(std::move(frame));
            }
        }
    }

    ds.validate();
    return ds;
}

namespace {

std::string video_file_name(int v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "video_%03d.pgvt", v);
    return buf;
}

}  // namespace

void write_dataset(const VideoDataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create directory: " + dir.string());

    nlohmann::json manifest;
    manifest["format"] = "pgv-dataset";
    manifest["num_videos"] = ds.videos.size();
    manifest["frames_per_video"] = ds.frames_per_video();
    manifest["num_classes"] = ds.num_classes;
    manifest["height"] = ds.height;
    manifest["width"] = ds.width;
    std::vector<int> class_ids(static_cast<std::size_t>(ds.num_classes));
    for (int c = 0; c < ds.num_classes; ++c) class_ids[static_cast<std::size_t>(c)] = c;
    manifest["class_ids"] = class_ids;

    std::ofstream mf(dir / "manifest.json", std::ios::binary);
    if (!mf) fail(ErrorKind::Io, "cannot write manifest: " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";
    mf.close();

    for (std::size_t v = 0; v < ds.videos.size(); ++v) {
        const Video& video = ds.videos[v];
        int frames = static_cast<int>(video.frames.size());
        Tensor images = Tensor::zeros({frames, 3, ds.height, ds.width});
        Tensor labels = Tensor::zeros({frames, ds.height, ds.width});
        std::size_t img_stride = static_cast<std::size_t>(3) * ds.height * ds.width;
        std::size_t lab_stride = static_cast<std::size_t>(ds.height) * ds.width;
        for (int t = 0; t < frames; ++t) {
            const Frame& fr = video.frames[static_cast<std::size_t>(t)];
            std::copy(fr.image.data.begin(), fr.image.data.end(),
                      images.data.begin() + static_cast<std::size_t>(t) * img_stride);
            for (std::size_t i = 0; i < lab_stride; ++i)
                labels.data[static_cast<std::size_t>(t) * lab_stride + i] =
                    static_cast<float>(fr.label.v[i]);
        }
        std::vector<NamedTensor> entries;
        entries.push_back({"images", std::move(images)});
        entries.push_back({"labels", std::move(labels)});
        if (!video.true_shot_boundaries.empty()) {
            Tensor bounds = Tensor::zeros({static_cast<int>(video.true_shot_boundaries.size())});
            for (std::size_t i = 0; i < video.true_shot_boundaries.size(); ++i)
                bounds.data[i] = static_cast<float>(video.true_shot_boundaries[i]);
            entries.push_back({"shot_boundaries", std::move(bounds)});
        }
        write_pgvt(dir / video_file_name(static_cast<int>(v)), entries);
    }
}

VideoDataset read_dataset(const std::filesystem::path& dir) {
    auto manifest_path = dir / "manifest.json";
    std::ifstream mf(manifest_path, std::ios::binary);
    if (!mf) fail(ErrorKind::Io, "missing manifest: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, "invalid manifest " + manifest_path.string() + ": " + e.what());
    }

    VideoDataset ds;
    int num_videos = 0;
    try {
        num_videos = manifest.at("num_videos").get<int>();
        ds.num_classes = manifest.at("num_classes").get<int>();
        ds.height = manifest.at("height").get<int>();
        ds.width = manifest.at("width").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, "manifest missing field: " + std::string(e.what()));
    }

    for (int v = 0; v < num_videos; ++v) {
        auto path = dir / video_file_name(v);
        if (!std::filesystem::exists(path))
            fail(ErrorKind::Data, "dataset integrity: manifest lists " + std::to_string(num_videos) +
                                      " videos but " + path.string() + " is missing");
        auto entries = read_pgvt(path);
        const Tensor& images = find_entry(entries, "images", path);
        const Tensor& labels = find_entry(entries, "labels", path);
        if (images.rank() != 4 || images.dim(1) != 3 || labels.rank() != 3 ||
            labels.dim(0) != images.dim(0))
            fail(ErrorKind::Format, "unexpected tensor shapes in " + path.string());
        int frames = images.dim(0);
        Video video;
        std::size_t img_stride = static_cast<std::size_t>(3) * images.dim(2) * images.dim(3);
        std::size_t lab_stride = static_cast<std::size_t>(labels.dim(1)) * labels.dim(2);
        for (int t = 0; t < frames; ++t) {
            Frame fr;
            fr.image = Tensor::zeros({3, images.dim(2), images.dim(3)});
            std::copy_n(images.data.begin() + static_cast<std::size_t>(t) * img_stride, img_stride,
                        fr.image.data.begin());
            fr.label = LabelMap(labels.dim(1), labels.dim(2));
            for (std::size_t i = 0; i < lab_stride; ++i) {
                float f = labels.data[static_cast<std::size_t>(t) * lab_stride + i];
                fr.label.v[i] = static_cast<std::int32_t>(f);
            }
            video.frames.push_back(std::move(fr));
        }
        if (const Tensor* bounds = find_entry_opt(entries, "shot_boundaries")) {
            for (float f : bounds->data)
                video.true_shot_boundaries.push_back(static_cast<int>(f));
        }
        ds.videos.push_back(std::move(video));
    }
    ds.validate();
    return ds;
}

bool datasets_equal(const VideoDataset& a, const VideoDataset& b) {
    if (a.num_classes != b.num_classes || a.height != b.height || a.width != b.width ||
        a.videos.size() != b.videos.size())
        return false;
    for (std::size_t v = 0; v < a.videos.size(); ++v) {
        const Video& va = a.videos[v];
        const Video& vb = b.videos[v];
        if (va.true_shot_boundaries != vb.true_shot_boundaries) return false;
        if (va.frames.size() != vb.frames.size()) return false;
        for (std::size_t t = 0; t < va.frames.size(); ++t) {
            if (!(va.frames[t].image == vb.frames[t].image)) return false;
            if (!(va.frames[t].label == vb.frames[t].label)) return false;
        }
    }
    return true;
}

std::vector<float> gray_histogram(const Tensor& image, int bins) {
    if (bins < 2) fail(ErrorKind::Config, "histogram needs >= 2 bins");
    if (image.rank() != 3 || image.dim(0) != 3)
        fail(ErrorKind::Dimension, "gray_histogram expects a 3xHxW image");
    std::vector<float> hist(static_cast<std::size_t>(bins), 0.0f);
    const int h = image.dim(1), w = image.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const float* r = image.data.data();
    const float* g = r + plane;
    const float* b = g + plane;
    for (std::size_t i = 0; i < plane; ++i) {
        float luma = (r[i] + g[i] + b[i]) / 3.0f;
        int bin = static_cast<int>(luma * bins);
        if (bin >= bins) bin = bins - 1;
        if (bin < 0) bin = 0;
        hist[static_cast<std::size_t>(bin)] += 1.0f;
    }
    for (float& v : hist) v /= static_cast<float>(plane);
    return hist;
}

float l1_hist_distance(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) fail(ErrorKind::Dimension, "histogram size mismatch");
    float d = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::fabs(a[i] - b[i]);
    return d;
}

}  // namespace pgv
