#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pgv/label_map.hpp"
#include "pgv/tensor.hpp"

namespace pgv {

struct Frame {
    Tensor image;    // 3xHxW, values in [0,1]
    LabelMap label;  // HxW, values in [0, C-1]
};

struct Video {
    std::vector<Frame> frames;
    std::vector<int> true_shot_boundaries;  // strictly increasing, each in (0, T)
};

struct SynthConfig {
    int num_videos = 6;
    int frames_per_video = 60;
    int shots_min = 2;
    int shots_max = 3;
    int num_classes = 5;  // background + >= 2 foreground classes
    int resolution = 64;
    int objects_min = 2;
    int objects_max = 3;
    float motion_speed = 1.5f;
    float noise_amp = 0.04f;
    float palette_jitter = 0.12f;
    std::uint64_t seed = 1;

    void validate() const;
    // Fixed object scale: discs use this radius, rectangles match its area.
    int object_radius() const { return resolution >= 32 ? resolution / 8 : 4; }
};

struct VideoDataset {
    std::vector<Video> videos;
    int num_classes = 0;
    int height = 0, width = 0;

    int frames_per_video() const {
        return videos.empty() ? 0 : static_cast<int>(videos.front().frames.size());
    }
    void validate() const;
};

// Deterministic multi-video, multi-shot scene dataset. Within a shot a textured
// background stays fixed while class-colored shapes translate smoothly; across
// a shot boundary the background palette changes abruptly. Labels are exact
// shape masks.
VideoDataset generate_dataset(const SynthConfig& cfg);

// On-disk layout: manifest.json plus one PGVT container per video
// (entries "images" [T,3,H,W], "labels" [T,H,W], "shot_boundaries" [B] when
// B > 0). Round trips are bit-exact.
void write_dataset(const VideoDataset& ds, const std::filesystem::path& dir);
VideoDataset read_dataset(const std::filesystem::path& dir);

bool datasets_equal(const VideoDataset& a, const VideoDataset& b);

// Normalized grayscale histogram (luma = mean of RGB), bins over [0,1].
std::vector<float> gray_histogram(const Tensor& image, int bins);
float l1_hist_distance(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace pgv
