#pragma once

#include <filesystem>
#include <vector>

#include "pgv/label_map.hpp"
#include "pgv/model.hpp"
#include "pgv/synthdata.hpp"

namespace pgv {

// Per-video labeled/unlabeled partition; labeled indices are exactly the
// multiples of the interval h that fit in [0, T-1].
struct DatasetSplit {
    int interval = 1;
    std::vector<std::vector<std::uint8_t>> labeled;  // [video][frame]

    bool is_labeled(int video, int frame) const {
        return labeled[static_cast<std::size_t>(video)][static_cast<std::size_t>(frame)] != 0;
    }
    std::size_t labeled_count() const;
    std::size_t total_count() const;
};

DatasetSplit equidistant_split(const VideoDataset& ds, int h);

// Pseudo labels for every frame: ground truth (flagged) on labeled frames,
// per-pixel argmax of the model logits elsewhere.
struct PseudoLabels {
    std::vector<std::vector<LabelMap>> labels;      // [video][frame]
    std::vector<std::vector<std::uint8_t>> is_gt;   // [video][frame]
};

PseudoLabels generate_pseudo_labels(const SegmentationModel& model, const DatasetSplit& split,
                                    const VideoDataset& ds);

// One PGVT container per video: "pseudo_labels" [T,H,W] and "is_gt" [T].
void write_pseudo_labels(const PseudoLabels& pl, const std::filesystem::path& dir);
PseudoLabels read_pseudo_labels(const std::filesystem::path& dir, int num_videos);

}  // namespace pgv
