#include "pgv/sampling.hpp"

#include <cstdio>

#include "pgv/pgvt_io.hpp"

namespace pgv {

std::size_t DatasetSplit::labeled_count() const {
    std::size_t n = 0;
    for (const auto& video : labeled)
        for (auto f : video) n += f ? 1 : 0;
    return n;
}

std::size_t DatasetSplit::total_count() const {
    std::size_t n = 0;
    for (const auto& video : labeled) n += video.size();
    return n;
}

DatasetSplit equidistant_split(const VideoDataset& ds, int h) {
    if (h < 1) fail(ErrorKind::Config, "split interval h must be >= 1");
    DatasetSplit split;
    split.interval = h;
    split.labeled.reserve(ds.videos.size());
    for (const auto& video : ds.videos) {
        std::vector<std::uint8_t> flags(video.frames.size(), 0);
        for (std::size_t t = 0; t < flags.size(); t += static_cast<std::size_t>(h)) flags[t] = 1;
        split.labeled.push_back(std::move(flags));
    }
    return split;
}

PseudoLabels generate_pseudo_labels(const SegmentationModel& model, const DatasetSplit& split,
                                    const VideoDataset& ds) {
    if (split.labeled.size() != ds.videos.size())
        fail(ErrorKind::Config, "split does not cover the dataset");
    PseudoLabels pl;
    pl.labels.resize(ds.videos.size());
    pl.is_gt.resize(ds.videos.size());
    for (std::size_t v = 0; v < ds.videos.size(); ++v) {
        const Video& video = ds.videos[v];
        pl.labels[v].reserve(video.frames.size());
        pl.is_gt[v].reserve(video.frames.size());
        for (std::size_t t = 0; t < video.frames.size(); ++t) {
            const Frame& frame = video.frames[t];
            if (split.labeled[v][t]) {
                pl.labels[v].push_back(frame.label);
                pl.is_gt[v].push_back(1);
            } else {
                Tensor logits = seg_forward(model, frame.image, nullptr);
                if (logits.dim(1) != frame.label.h || logits.dim(2) != frame.label.w)
                    fail(ErrorKind::Config, "model resolution does not match dataset");
                pl.labels[v].push_back(predict_labels(logits));
                pl.is_gt[v].push_back(0);
            }
        }
    }
    return pl;
}

namespace {

std::string pseudo_file_name(int v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "pseudo_video_%03d.pgvt", v);
    return buf;
}

}  // namespace

void write_pseudo_labels(const PseudoLabels& pl, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create directory: " + dir.string());
    for (std::size_t v = 0; v < pl.labels.size(); ++v) {
        const auto& frames = pl.labels[v];
        if (frames.empty()) fail(ErrorKind::Data, "pseudo labels: empty video");
        int t_count = static_cast<int>(frames.size());
        int h = frames.front().h, w = frames.front().w;
        Tensor labels = Tensor::zeros({t_count, h, w});
        Tensor flags = Tensor::zeros({t_count});
        std::size_t stride = static_cast<std::size_t>(h) * w;
        for (int t = 0; t < t_count; ++t) {
            for (std::size_t i = 0; i < stride; ++i)
                labels.data[static_cast<std::size_t>(t) * stride + i] =
                    static_cast<float>(frames[static_cast<std::size_t>(t)].v[i]);
            flags.data[static_cast<std::size_t>(t)] =
                pl.is_gt[v][static_cast<std::size_t>(t)] ? 1.0f : 0.0f;
        }
        write_pgvt(dir / pseudo_file_name(static_cast<int>(v)),
                   {{"pseudo_labels", std::move(labels)}, {"is_gt", std::move(flags)}});
    }
}

PseudoLabels read_pseudo_labels(const std::filesystem::path& dir, int num_videos) {
    PseudoLabels pl;
    pl.labels.resize(static_cast<std::size_t>(num_videos));
    pl.is_gt.resize(static_cast<std::size_t>(num_videos));
    for (int v = 0; v < num_videos; ++v) {
        auto path = dir / pseudo_file_name(v);
        if (!std::filesystem::exists(path))
            fail(ErrorKind::Io, "missing pseudo-label file: " + path.string());
        auto entries = read_pgvt(path);
        const Tensor& labels = find_entry(entries, "pseudo_labels", path);
        const Tensor& flags = find_entry(entries, "is_gt", path);
        if (labels.rank() != 3 || flags.rank() != 1 || flags.dim(0) != labels.dim(0))
            fail(ErrorKind::Format, "unexpected pseudo-label shapes in " + path.string());
        int t_count = labels.dim(0), h = labels.dim(1), w = labels.dim(2);
        std::size_t stride = static_cast<std::size_t>(h) * w;
        for (int t = 0; t < t_count; ++t) {
            LabelMap m(h, w);
            for (std::size_t i = 0; i < stride; ++i)
                m.v[i] = static_cast<std::int32_t>(
                    labels.data[static_cast<std::size_t>(t) * stride + i]);
            pl.labels[static_cast<std::size_t>(v)].push_back(std::move(m));
            pl.is_gt[static_cast<std::size_t>(v)].push_back(
                flags.data[static_cast<std::size_t>(t)] != 0.0f ? 1 : 0);
        }
    }
    return pl;
}

}  // namespace pgv
