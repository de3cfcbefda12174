#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pgv/label_map.hpp"
#include "pgv/model.hpp"
#include "pgv/rng.hpp"
#include "pgv/sampling.hpp"
#include "pgv/synthdata.hpp"
#include "pgv/tensor.hpp"

namespace pgv {

struct FrameRef {
    int video = -1;
    int frame = -1;
};

enum class FeatureSource { Query, Key };

// L2-unnormalized pixel embeddings, D x H' x W'.
struct FeatureMap {
    Tensor features;
    FeatureSource source = FeatureSource::Query;
    FrameRef ref;
};

// Cosine similarities between selected query pixels (rows) and every key
// pixel (columns); entries in [-1, 1].
struct SimilarityMap {
    Tensor s;
};

// Binary positive/negative selection masks with the same layout as the
// similarity map; mp + mn == 1 elementwise.
struct PairMasks {
    Tensor mp, mn;
};

// ---- shot partitioning ------------------------------------------------------

// Boundary at t iff the L1 distance between the normalized grayscale
// histograms of frames t-1 and t exceeds the threshold.
std::vector<int> detect_shots(const Video& video, int bins, float threshold);

struct ShotTable {
    std::vector<std::vector<int>> shot_of;                    // [video][frame] -> shot index
    std::vector<std::vector<std::pair<int, int>>> ranges;     // [video][shot] -> [begin, end)
};
ShotTable build_shot_table(const std::vector<std::vector<int>>& boundaries_per_video,
                           const VideoDataset& ds);

// ---- augmentation -----------------------------------------------------------

struct Augmented {
    Tensor image;
    LabelMap label;
};

// Square crop with side drawn uniformly in [crop_min, crop_max] x min(H,W) at a
// uniform position, resized back to the frame size (bilinear image, nearest
// label), then a shared horizontal flip with probability 1/2.
// Draw order: side fraction, y offset, x offset, flip coin.
Augmented augment(const Tensor& image, const LabelMap& label, float crop_min, float crop_max,
                  Rng& rng, bool enable_hflip = true);

// ---- key selection ----------------------------------------------------------

struct KeyItem {
    Augmented view;
    FrameRef ref;
};

// Four-level hierarchy: the query image itself, N_c augmented views of it,
// N_a frames from the query's shot, N_v frames from other videos.
struct KeySet {
    std::vector<KeyItem> current_views;
    std::vector<KeyItem> shot_frames;
    std::vector<KeyItem> other_video_frames;
    int total() const {
        return static_cast<int>(current_views.size() + shot_frames.size() +
                                other_video_frames.size());
    }
};

struct KeySelectConfig {
    int n_a = 1;
    int n_v = 4;
    int n_c = 1;
    float crop_min = 0.3f;
    float crop_max = 0.7f;
};

// Keys are drawn from the first num_usable_videos videos of the dataset (the
// training pool). Shot frames come from the query's shot excluding the query
// itself (all of them when the shot is smaller than N_a); other-video frames
// are drawn uniformly without replacement from the union of the remaining
// training videos. Every key carries its (augmented) pseudo label.
// Draw order: N_c view augmentations, shot-frame sample then augmentations,
// other-video sample then augmentations.
KeySet select_keys(FrameRef query, const VideoDataset& ds, const PseudoLabels& pl,
                   const ShotTable& shots, const KeySelectConfig& cfg, int num_usable_videos,
                   Rng& rng);

// ---- similarity / masks / aggregation ---------------------------------------

// Full similarity map: every query pixel against every key pixel.
SimilarityMap similarity_map(const FeatureMap& fq, const FeatureMap& fk);
// Rows restricted to the given query pixels (flat H'*W' indices).
SimilarityMap similarity_map_rows(const FeatureMap& fq, const FeatureMap& fk,
                                  std::span<const int> query_pixels);

// Label maps must already be at feature resolution.
PairMasks build_masks(const LabelMap& yq, const LabelMap& yk);
PairMasks build_masks_rows(const LabelMap& yq, const LabelMap& yk,
                           std::span<const int> query_pixels);

struct KeyPairData {
    SimilarityMap sim;
    PairMasks masks;
    FrameRef ref;
};

// Positive similarities are averaged over the pooled positive pixels of every
// key frame; negative similarities are averaged per frame and summed across
// frames. Frames contributing no negatives for a pixel are skipped. A pixel is
// valid iff it has at least one positive key pixel and at least one frame with
// a negative key pixel.
struct AggregatedSimilarities {
    std::vector<float> sp, sn;                  // per query row
    std::vector<std::uint8_t> valid;
    std::vector<int> pos_count;                 // pooled positives per row
    std::vector<std::vector<int>> neg_count;    // [frame][row]
};

AggregatedSimilarities aggregate(std::span<const KeyPairData> keys);

// L = -(1/k) sum_i log(exp(sp_i) / (exp(sp_i) + exp(sn_i))) over valid pixels,
// evaluated in the stable log1p(exp(.)) form. Throws EmptyBatch when no pixel
// is valid.
struct ContrastLoss {
    double loss = 0.0;
    std::vector<float> d_sp, d_sn;  // per query row; zero on invalid rows
    int valid_count = 0;
};

ContrastLoss contrastive_loss(const AggregatedSimilarities& agg);

// Chain rule through cosine similarity and the aggregation; gradient flows
// only into the query features. Key gradients are returned as explicit zero
// tensors to document the stop-gradient contract.
struct FeatureGrads {
    Tensor d_query;                // D x H' x W'
    std::vector<Tensor> d_keys;    // all zero by construction
};

FeatureGrads backprop_to_features(const ContrastLoss& loss, const AggregatedSimilarities& agg,
                                  std::span<const KeyPairData> keys, const FeatureMap& fq,
                                  std::span<const FeatureMap> fks,
                                  std::span<const int> query_pixels);

// ---- EMA ---------------------------------------------------------------------

// theta_m <- m * theta_m + (1 - m) * theta, elementwise; theta untouched.
void ema_update(std::span<Tensor* const> theta_m, std::span<const Tensor* const> theta, float m);
void ema_update(EncoderPair& pair);

// ---- embedding export ---------------------------------------------------------

// Writes per-frame pixel embeddings of one video plus ground-truth labels at
// feature resolution into a PGVT container.
void export_embeddings(const ContrastEncoder& enc, const VideoDataset& ds, int video_index,
                       const std::filesystem::path& path);

}  // namespace pgv
