#include "pgv/contrast.hpp"

#include <algorithm>
#include <cmath>

#include "pgv/pgvt_io.hpp"

namespace pgv {

std::vector<int> detect_shots(const Video& video, int bins, float threshold) {
    if (bins < 2) fail(ErrorKind::Config, "detect_shots: bins must be >= 2");
    if (!(threshold > 0.0f)) fail(ErrorKind::Config, "detect_shots: threshold must be > 0");
    std::vector<int> boundaries;
    if (video.frames.size() < 2) return boundaries;
    std::vector<float> prev = gray_histogram(video.frames[0].image, bins);
    for (std::size_t t = 1; t < video.frames.size(); ++t) {
        std::vector<float> cur = gray_histogram(video.frames[t].image, bins);
        if (l1_hist_distance(prev, cur) > threshold) boundaries.push_back(static_cast<int>(t));
        prev = std::move(cur);
    }
    return boundaries;
}

ShotTable build_shot_table(const std::vector<std::vector<int>>& boundaries_per_video,
                           const VideoDataset& ds) {
    if (boundaries_per_video.size() != ds.videos.size())
        fail(ErrorKind::Config, "shot table: boundary list does not cover the dataset");
    ShotTable table;
    table.shot_of.resize(ds.videos.size());
    table.ranges.resize(ds.videos.size());
    for (std::size_t v = 0; v < ds.videos.size(); ++v) {
        int frames = static_cast<int>(ds.videos[v].frames.size());
        const auto& bounds = boundaries_per_video[v];
        int begin = 0;
        for (std::size_t s = 0; s <= bounds.size(); ++s) {
            int end = s < bounds.size() ? bounds[s] : frames;
            if (end <= begin || end > frames)
                fail(ErrorKind::Data, "shot table: invalid boundary sequence");
            table.ranges[v].emplace_back(begin, end);
            begin = end;
        }
        table.shot_of[v].assign(static_cast<std::size_t>(frames), 0);
        for (std::size_t s = 0; s < table.ranges[v].size(); ++s)
            for (int t = table.ranges[v][s].first; t < table.ranges[v][s].second; ++t)
                table.shot_of[v][static_cast<std::size_t>(t)] = static_cast<int>(s);
    }
    return table;
}

Augmented augment(const Tensor& image, const LabelMap& label, float crop_min, float crop_max,
                  Rng& rng, bool enable_hflip) {
    if (!(crop_min > 0.0f && crop_min <= crop_max && crop_max <= 1.0f))
        fail(ErrorKind::Config, "augment: need 0 < crop_min <= crop_max <= 1");
    if (image.rank() != 3 || image.dim(1) != label.h || image.dim(2) != label.w)
        fail(ErrorKind::Dimension, "augment: image/label shape mismatch");
    const int h = image.dim(1), w = image.dim(2);
    const int side_max = std::min(h, w);

    float frac = rng.uniform_float(crop_min, crop_max);
    int side = std::clamp(static_cast<int>(std::lround(frac * side_max)), 1, side_max);
    int y0 = rng.uniform_int(h - side + 1);
    int x0 = rng.uniform_int(w - side + 1);
    bool flip = enable_hflip && rng.coin();

    Augmented out;
    if (side == h && side == w) {
        out.image = image;
        out.label = label;
    } else {
        Tensor patch = Tensor::zeros({3, side, side});
        LabelMap lpatch(side, side);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    patch.at(c, y, x) = image.at(c, y0 + y, x0 + x);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) lpatch.at(y, x) = label.at(y0 + y, x0 + x);
        out.image = resize(patch, h, w, ResizeMode::Bilinear);
        out.label = nearest_resize(lpatch, h, w);
    }
    if (flip) {
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w / 2; ++x)
                    std::swap(out.image.at(c, y, x), out.image.at(c, y, w - 1 - x));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w / 2; ++x)
                std::swap(out.label.at(y, x), out.label.at(y, w - 1 - x));
    }
    return out;
}

KeySet select_keys(FrameRef query, const VideoDataset& ds, const PseudoLabels& pl,
                   const ShotTable& shots, const KeySelectConfig& cfg, int num_usable_videos,
                   Rng& rng) {
    if (cfg.n_a < 0 || cfg.n_v < 0 || cfg.n_c < 0)
        fail(ErrorKind::Config, "select_keys: key counts must be >= 0");
    if (num_usable_videos < 1 || num_usable_videos > static_cast<int>(ds.videos.size()))
        fail(ErrorKind::Config, "select_keys: invalid training video count");
    if (query.video < 0 || query.video >= num_usable_videos)
        fail(ErrorKind::Config, "select_keys: query outside the training pool");
    if (cfg.n_v > 0 && num_usable_videos < 2)
        fail(ErrorKind::Config, "select_keys: N_v > 0 requires at least two videos");

    const auto qv = static_cast<std::size_t>(query.video);
    const auto qf = static_cast<std::size_t>(query.frame);
    const Frame& qframe = ds.videos[qv].frames[qf];
    const LabelMap& qlabel = pl.labels[qv][qf];

    KeySet keys;
    for (int i = 0; i < cfg.n_c; ++i) {
        KeyItem item;
        item.view = augment(qframe.image, qlabel, cfg.crop_min, cfg.crop_max, rng);
        item.ref = query;
        keys.current_views.push_back(std::move(item));
    }

    int shot = shots.shot_of[qv][qf];
    auto [begin, end] = shots.ranges[qv][static_cast<std::size_t>(shot)];
    std::vector<int> candidates;
    for (int t = begin; t < end; ++t)
        if (t != query.frame) candidates.push_back(t);
    std::vector<int> chosen;
    if (static_cast<int>(candidates.size()) <= cfg.n_a) {
        chosen = candidates;  // degenerate shot: take all
    } else {
        for (int idx : rng.sample_without_replacement(static_cast<int>(candidates.size()), cfg.n_a))
            chosen.push_back(candidates[static_cast<std::size_t>(idx)]);
    }
    for (int t : chosen) {
        KeyItem item;
        item.ref = {query.video, t};
        item.view = augment(ds.videos[qv].frames[static_cast<std::size_t>(t)].image,
                            pl.labels[qv][static_cast<std::size_t>(t)], cfg.crop_min, cfg.crop_max,
                            rng);
        keys.shot_frames.push_back(std::move(item));
    }

    if (cfg.n_v > 0) {
        std::vector<FrameRef> pool;
        for (int v = 0; v < num_usable_videos; ++v) {
            if (v == query.video) continue;
            for (int t = 0; t < static_cast<int>(ds.videos[static_cast<std::size_t>(v)].frames.size());
                 ++t)
                pool.push_back({v, t});
        }
        int take = std::min<int>(cfg.n_v, static_cast<int>(pool.size()));
        for (int idx : rng.sample_without_replacement(static_cast<int>(pool.size()), take)) {
            FrameRef ref = pool[static_cast<std::size_t>(idx)];
            KeyItem item;
            item.ref = ref;
            item.view = augment(
                ds.videos[static_cast<std::size_t>(ref.video)].frames[static_cast<std::size_t>(ref.frame)]
                    .image,
                pl.labels[static_cast<std::size_t>(ref.video)][static_cast<std::size_t>(ref.frame)],
                cfg.crop_min, cfg.crop_max, rng);
            keys.other_video_frames.push_back(std::move(item));
        }
    }
    return keys;
}

namespace {

struct UnitEmbeddings {
    int n = 0, d = 0;
    std::vector<float> unit;   // n x d, L2-normalized rows
    std::vector<float> norm;   // n
};

UnitEmbeddings flatten_normalize(const FeatureMap& fm, std::span<const int> pixels) {
    const Tensor& f = fm.features;
    if (f.rank() != 3) fail(ErrorKind::Dimension, "feature map must be D x H' x W'");
    const int d = f.dim(0);
    const std::size_t plane = static_cast<std::size_t>(f.dim(1)) * f.dim(2);
    UnitEmbeddings out;
    out.n = static_cast<int>(pixels.size());
    out.d = d;
    out.unit.resize(static_cast<std::size_t>(out.n) * d);
    out.norm.resize(static_cast<std::size_t>(out.n));
    for (int r = 0; r < out.n; ++r) {
        int p = pixels[static_cast<std::size_t>(r)];
        double sq = 0.0;
        for (int k = 0; k < d; ++k) {
            float v = f.data[static_cast<std::size_t>(k) * plane + p];
            out.unit[static_cast<std::size_t>(r) * d + k] = v;
            sq += static_cast<double>(v) * v;
        }
        double nrm = std::sqrt(sq);
        if (nrm <= 1e-8) {
            int y = p / f.dim(2), x = p % f.dim(2);
            fail(ErrorKind::Numeric, std::string("zero-norm embedding at ") +
                                         (fm.source == FeatureSource::Query ? "query" : "key") +
                                         " pixel (" + std::to_string(y) + "," + std::to_string(x) +
                                         ")");
        }
        out.norm[static_cast<std::size_t>(r)] = static_cast<float>(nrm);
        float inv = static_cast<float>(1.0 / nrm);
        for (int k = 0; k < d; ++k) out.unit[static_cast<std::size_t>(r) * d + k] *= inv;
    }
    return out;
}

std::vector<int> all_pixels(const Tensor& f) {
    std::vector<int> pix(static_cast<std::size_t>(f.dim(1)) * f.dim(2));
    for (std::size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<int>(i);
    return pix;
}

}  // namespace

SimilarityMap similarity_map_rows(const FeatureMap& fq, const FeatureMap& fk,
                                  std::span<const int> query_pixels) {
    if (fq.features.rank() != 3 || !fq.features.same_shape(fk.features))
        fail(ErrorKind::Dimension, "similarity_map: feature maps must share D x H' x W'");
    std::vector<int> kp = all_pixels(fk.features);
    UnitEmbeddings q = flatten_normalize(fq, query_pixels);
    UnitEmbeddings k = flatten_normalize(fk, kp);
    SimilarityMap sm;
    sm.s = Tensor::zeros({q.n, k.n});
    const int d = q.d;
    for (int i = 0; i < q.n; ++i) {
        const float* qi = q.unit.data() + static_cast<std::size_t>(i) * d;
        float* row = sm.s.data.data() + static_cast<std::size_t>(i) * k.n;
        for (int j = 0; j < k.n; ++j) {
            const float* kj = k.unit.data() + static_cast<std::size_t>(j) * d;
            float acc = 0.0f;
            for (int t = 0; t < d; ++t) acc += qi[t] * kj[t];
            row[j] = acc;
        }
    }
    return sm;
}

SimilarityMap similarity_map(const FeatureMap& fq, const FeatureMap& fk) {
    std::vector<int> rows = all_pixels(fq.features);
    return similarity_map_rows(fq, fk, rows);
}

PairMasks build_masks_rows(const LabelMap& yq, const LabelMap& yk,
                           std::span<const int> query_pixels) {
    if (yq.h != yk.h || yq.w != yk.w)
        fail(ErrorKind::Dimension, "build_masks: label maps must share H' x W'");
    const int nk = static_cast<int>(yk.size());
    const int nq = static_cast<int>(query_pixels.size());
    PairMasks masks;
    masks.mp = Tensor::zeros({nq, nk});
    masks.mn = Tensor::zeros({nq, nk});
    for (int r = 0; r < nq; ++r) {
        std::int32_t ql = yq.v[static_cast<std::size_t>(query_pixels[static_cast<std::size_t>(r)])];
        float* mp = masks.mp.data.data() + static_cast<std::size_t>(r) * nk;
        float* mn = masks.mn.data.data() + static_cast<std::size_t>(r) * nk;
        for (int j = 0; j < nk; ++j) {
            bool same = yk.v[static_cast<std::size_t>(j)] == ql;
            mp[j] = same ? 1.0f : 0.0f;
            mn[j] = same ? 0.0f : 1.0f;
        }
    }
    return masks;
}

PairMasks build_masks(const LabelMap& yq, const LabelMap& yk) {
    std::vector<int> rows(yq.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return build_masks_rows(yq, yk, rows);
}

AggregatedSimilarities aggregate(std::span<const KeyPairData> keys) {
    if (keys.empty()) fail(ErrorKind::Config, "aggregate: need at least one key frame");
    const int nq = keys.front().sim.s.dim(0);
    for (const auto& k : keys) {
        if (k.sim.s.dim(0) != nq || !k.sim.s.same_shape(k.masks.mp) ||
            !k.sim.s.same_shape(k.masks.mn))
            fail(ErrorKind::Dimension, "aggregate: inconsistent similarity/mask shapes");
    }

    AggregatedSimilarities agg;
    agg.sp.assign(static_cast<std::size_t>(nq), 0.0f);
    agg.sn.assign(static_cast<std::size_t>(nq), 0.0f);
    agg.valid.assign(static_cast<std::size_t>(nq), 0);
    agg.pos_count.assign(static_cast<std::size_t>(nq), 0);
    agg.neg_count.resize(keys.size());

    std::vector<double> pos_sum(static_cast<std::size_t>(nq), 0.0);
    std::vector<double> neg_total(static_cast<std::size_t>(nq), 0.0);
    std::vector<int> neg_frames(static_cast<std::size_t>(nq), 0);

    for (std::size_t f = 0; f < keys.size(); ++f) {
        const Tensor& s = keys[f].sim.s;
        const Tensor& mp = keys[f].masks.mp;
        const int nk = s.dim(1);
        agg.neg_count[f].assign(static_cast<std::size_t>(nq), 0);
        for (int i = 0; i < nq; ++i) {
            const float* srow = s.data.data() + static_cast<std::size_t>(i) * nk;
            const float* mrow = mp.data.data() + static_cast<std::size_t>(i) * nk;
            double psum = 0.0, nsum = 0.0;
            int pc = 0, ncnt = 0;
            for (int j = 0; j < nk; ++j) {
                if (mrow[j] != 0.0f) {
                    psum += srow[j];
                    ++pc;
                } else {
                    nsum += srow[j];
                    ++ncnt;
                }
            }
            pos_sum[static_cast<std::size_t>(i)] += psum;
            agg.pos_count[static_cast<std::size_t>(i)] += pc;
            agg.neg_count[f][static_cast<std::size_t>(i)] = ncnt;
            if (ncnt > 0) {
                neg_total[static_cast<std::size_t>(i)] += nsum / ncnt;
                ++neg_frames[static_cast<std::size_t>(i)];
            }
        }
    }

    for (int i = 0; i < nq; ++i) {
        auto idx = static_cast<std::size_t>(i);
        if (agg.pos_count[idx] > 0)
            agg.sp[idx] = static_cast<float>(pos_sum[idx] / agg.pos_count[idx]);
        agg.sn[idx] = static_cast<float>(neg_total[idx]);
        agg.valid[idx] = agg.pos_count[idx] > 0 && neg_frames[idx] > 0 ? 1 : 0;
    }
    return agg;
}

ContrastLoss contrastive_loss(const AggregatedSimilarities& agg) {
    const std::size_t n = agg.sp.size();
    ContrastLoss out;
    out.d_sp.assign(n, 0.0f);
    out.d_sn.assign(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) out.valid_count += agg.valid[i] ? 1 : 0;
    if (out.valid_count == 0)
        fail(ErrorKind::EmptyBatch, "contrastive_loss: no valid query pixels");

    const double inv_k = 1.0 / out.valid_count;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!agg.valid[i]) continue;
        double d = static_cast<double>(agg.sn[i]) - static_cast<double>(agg.sp[i]);
        // softplus(d) = log(1 + exp(d)), stable on both sides
        double softplus = d > 0.0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d));
        total += softplus;
        double sigma = 1.0 / (1.0 + std::exp(-d));
        out.d_sp[i] = static_cast<float>(-sigma * inv_k);
        out.d_sn[i] = static_cast<float>(sigma * inv_k);
    }
    out.loss = total * inv_k;
    return out;
}

FeatureGrads backprop_to_features(const ContrastLoss& loss, const AggregatedSimilarities& agg,
                                  std::span<const KeyPairData> keys, const FeatureMap& fq,
                                  std::span<const FeatureMap> fks,
                                  std::span<const int> query_pixels) {
    if (keys.size() != fks.size())
        fail(ErrorKind::Dimension, "backprop: key data and key features differ in count");
    const int nq = static_cast<int>(query_pixels.size());
    const Tensor& f = fq.features;
    const int d = f.dim(0);
    const std::size_t plane = static_cast<std::size_t>(f.dim(1)) * f.dim(2);

    UnitEmbeddings q = flatten_normalize(fq, query_pixels);

    // A_i = sum_j g_ij * unit(k_j); b_i = sum_j g_ij * S_ij, with
    // g_ij = d_sp_i * Mp_ij / pos_count_i + d_sn_i * Mn_ij / neg_count_f_i.
    std::vector<double> acc(static_cast<std::size_t>(nq) * d, 0.0);
    std::vector<double> dot_acc(static_cast<std::size_t>(nq), 0.0);

    for (std::size_t fidx = 0; fidx < keys.size(); ++fidx) {
        const Tensor& s = keys[fidx].sim.s;
        const Tensor& mp = keys[fidx].masks.mp;
        const int nk = s.dim(1);
        std::vector<int> kp = all_pixels(fks[fidx].features);
        UnitEmbeddings k = flatten_normalize(fks[fidx], kp);
        for (int i = 0; i < nq; ++i) {
            auto idx = static_cast<std::size_t>(i);
            if (!agg.valid[idx]) continue;
            float alpha =
                agg.pos_count[idx] > 0 ? loss.d_sp[idx] / static_cast<float>(agg.pos_count[idx])
                                       : 0.0f;
            int ncnt = agg.neg_count[fidx][idx];
            float beta = ncnt > 0 ? loss.d_sn[idx] / static_cast<float>(ncnt) : 0.0f;
            const float* srow = s.data.data() + idx * static_cast<std::size_t>(nk);
            const float* mrow = mp.data.data() + idx * static_cast<std::size_t>(nk);
            double* arow = acc.data() + idx * static_cast<std::size_t>(d);
            double dsum = 0.0;
            for (int j = 0; j < nk; ++j) {
                float g = mrow[j] != 0.0f ? alpha : beta;
                if (g == 0.0f) continue;
                const float* kj = k.unit.data() + static_cast<std::size_t>(j) * d;
                for (int t = 0; t < d; ++t) arow[t] += static_cast<double>(g) * kj[t];
                dsum += static_cast<double>(g) * srow[j];
            }
            dot_acc[idx] += dsum;
        }
    }

    FeatureGrads grads;
    grads.d_query = Tensor::zeros(f.shape);
    for (int i = 0; i < nq; ++i) {
        auto idx = static_cast<std::size_t>(i);
        if (!agg.valid[idx]) continue;
        int p = query_pixels[idx];
        float inv_norm = 1.0f / q.norm[idx];
        const double* arow = acc.data() + idx * static_cast<std::size_t>(d);
        const float* qu = q.unit.data() + idx * static_cast<std::size_t>(d);
        for (int t = 0; t < d; ++t) {
            double g = (arow[t] - dot_acc[idx] * qu[t]) * inv_norm;
            grads.d_query.data[static_cast<std::size_t>(t) * plane + p] = static_cast<float>(g);
        }
    }
    grads.d_keys.reserve(fks.size());
    for (const auto& fk : fks) grads.d_keys.push_back(Tensor::zeros(fk.features.shape));
    return grads;
}

void ema_update(std::span<Tensor* const> theta_m, std::span<const Tensor* const> theta, float m) {
    if (m < 0.0f || m > 1.0f) fail(ErrorKind::Config, "ema_update: m must be in [0,1]");
    if (theta_m.size() != theta.size())
        fail(ErrorKind::Dimension, "ema_update: parameter lists differ in length");
    for (std::size_t i = 0; i < theta_m.size(); ++i) {
        require_same_shape(*theta_m[i], *theta[i], "ema_update");
        float* dst = theta_m[i]->data.data();
        const float* src = theta[i]->data.data();
        for (std::size_t k = 0; k < theta_m[i]->data.size(); ++k)
            dst[k] = m * dst[k] + (1.0f - m) * src[k];
    }
}

void ema_update(EncoderPair& pair) {
    auto tm = encoder_params(pair.momentum);
    auto to = encoder_params(static_cast<const ContrastEncoder&>(pair.online));
    ema_update(std::span<Tensor* const>(tm.data(), tm.size()),
               std::span<const Tensor* const>(to.data(), to.size()), pair.m);
}

void export_embeddings(const ContrastEncoder& enc, const VideoDataset& ds, int video_index,
                       const std::filesystem::path& path) {
    if (video_index < 0 || video_index >= static_cast<int>(ds.videos.size()))
        fail(ErrorKind::Config, "export_embeddings: video index out of range");
    const Video& video = ds.videos[static_cast<std::size_t>(video_index)];
    int frames = static_cast<int>(video.frames.size());
    Tensor first = encoder_forward(enc, video.frames[0].image, nullptr);
    const int d = first.dim(0), fh = first.dim(1), fw = first.dim(2);
    Tensor embeddings = Tensor::zeros({frames, d, fh, fw});
    Tensor labels = Tensor::zeros({frames, fh, fw});
    std::size_t emb_stride = static_cast<std::size_t>(d) * fh * fw;
    std::size_t lab_stride = static_cast<std::size_t>(fh) * fw;
    for (int t = 0; t < frames; ++t) {
        Tensor feat = t == 0 ? first : encoder_forward(enc, video.frames[static_cast<std::size_t>(t)].image,
                                                       nullptr);
        std::copy(feat.data.begin(), feat.data.end(),
                  embeddings.data.begin() + static_cast<std::size_t>(t) * emb_stride);
        LabelMap small = nearest_resize(video.frames[static_cast<std::size_t>(t)].label, fh, fw);
        for (std::size_t i = 0; i < lab_stride; ++i)
            labels.data[static_cast<std::size_t>(t) * lab_stride + i] =
                static_cast<float>(small.v[i]);
    }
    Tensor vid = Tensor::zeros({1});
    vid.data[0] = static_cast<float>(video_index);
    write_pgvt(path, {{"embeddings", std::move(embeddings)},
                      {"labels", std::move(labels)},
                      {"video_index", std::move(vid)}});
}

}  // namespace pgv
