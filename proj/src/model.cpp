#include "pgv/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pgv/rng.hpp"

namespace pgv {

namespace {

Tensor unsqueeze0(Tensor t) {
    t.shape.insert(t.shape.begin(), 1);
    return t;
}

Tensor squeeze0(Tensor t) {
    t.shape.erase(t.shape.begin());
    return t;
}

Tensor he_conv_weight(int out_c, int in_c, int k, Rng& rng) {
    Tensor w = Tensor::zeros({out_c, in_c, k, k});
    float scale = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
    for (float& v : w.data) v = scale * rng.normal();
    return w;
}

ConvParam make_conv(int out_c, int in_c, int k, int stride, int pad, Rng& rng) {
    ConvParam p;
    p.w = he_conv_weight(out_c, in_c, k, rng);
    p.b = Tensor::zeros({out_c});
    p.stride = stride;
    p.pad = pad;
    return p;
}

}  // namespace

SegmentationModel build_encoder(int num_classes, std::uint64_t seed) {
    if (num_classes < 2) fail(ErrorKind::Config, "build_encoder: need >= 2 classes");
    Rng rng(seed);
    SegmentationModel m;
    m.num_classes = num_classes;
    m.backbone.c1 = make_conv(16, 3, 3, 2, 1, rng);
    m.backbone.c2 = make_conv(kHiddenChannels, 16, 3, 2, 1, rng);
    m.backbone.c3 = make_conv(kHiddenChannels, kHiddenChannels, 3, 1, 1, rng);
    m.classifier.head = make_conv(num_classes, kHiddenChannels, 1, 1, 0, rng);
    return m;
}

Classifier build_classifier(int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    Classifier c;
    c.head = make_conv(num_classes, kHiddenChannels, 1, 1, 0, rng);
    return c;
}

ProjectionHead build_projection_head(int proj_dim, std::uint64_t seed) {
    if (proj_dim < 2) fail(ErrorKind::Config, "projection head: need proj_dim >= 2");
    Rng rng(seed);
    ProjectionHead p;
    p.p1 = make_conv(kHiddenChannels, kHiddenChannels, 1, 1, 0, rng);
    p.p2 = make_conv(proj_dim, kHiddenChannels, 1, 1, 0, rng);
    return p;
}

EncoderPair make_encoder_pair(const Backbone& warm_start, int proj_dim, float m,
                              std::uint64_t seed) {
    if (m < 0.0f || m > 1.0f) fail(ErrorKind::Config, "EMA coefficient must be in [0,1]");
    EncoderPair pair;
    pair.online.backbone = warm_start;
    pair.online.proj = build_projection_head(proj_dim, seed);
    pair.momentum = pair.online;  // theta^m starts as an exact copy of theta
    pair.m = m;
    return pair;
}

Tensor backbone_forward(const Backbone& bb, const Tensor& image, BackboneTrace* trace) {
    if (image.rank() != 3 || image.dim(0) != 3)
        fail(ErrorKind::Dimension, "backbone expects a 3xHxW image");
    Tensor x = unsqueeze0(image);
    Tensor z1 = conv2d_fwd(x, bb.c1.w, bb.c1.b, bb.c1.stride, bb.c1.pad);
    Tensor a1 = relu_fwd(z1);
    Tensor z2 = conv2d_fwd(a1, bb.c2.w, bb.c2.b, bb.c2.stride, bb.c2.pad);
    Tensor a2 = relu_fwd(z2);
    Tensor z3 = conv2d_fwd(a2, bb.c3.w, bb.c3.b, bb.c3.stride, bb.c3.pad);
    Tensor a3 = relu_fwd(z3);
    if (trace) {
        trace->input = std::move(x);
        trace->z1 = std::move(z1);
        trace->a1 = std::move(a1);
        trace->z2 = std::move(z2);
        trace->a2 = std::move(a2);
        trace->z3 = std::move(z3);
        trace->a3 = a3;
    }
    return squeeze0(std::move(a3));
}

BackboneGrads backbone_backward(const Backbone& bb, const BackboneTrace& trace,
                                const Tensor& grad_features) {
    BackboneGrads g;
    Tensor gout = unsqueeze0(grad_features);
    Tensor g3 = relu_bwd(trace.z3, gout);
    Tensor gin3;
    conv2d_bwd(trace.a2, bb.c3.w, g3, bb.c3.stride, bb.c3.pad, gin3, g.c3.w, g.c3.b);
    Tensor g2 = relu_bwd(trace.z2, gin3);
    Tensor gin2;
    conv2d_bwd(trace.a1, bb.c2.w, g2, bb.c2.stride, bb.c2.pad, gin2, g.c2.w, g.c2.b);
    Tensor g1 = relu_bwd(trace.z1, gin2);
    Tensor gin1;
    conv2d_bwd(trace.input, bb.c1.w, g1, bb.c1.stride, bb.c1.pad, gin1, g.c1.w, g.c1.b);
    return g;
}

Tensor seg_forward(const SegmentationModel& model, const Tensor& image, SegTrace* trace) {
    BackboneTrace bt;
    Tensor feat = backbone_forward(model.backbone, image, trace ? &trace->bt : &bt);
    Tensor feat_n = unsqueeze0(std::move(feat));
    Tensor logits_small = conv2d_fwd(feat_n, model.classifier.head.w, model.classifier.head.b,
                                     model.classifier.head.stride, model.classifier.head.pad);
    Tensor logits = resize(logits_small, image.dim(1), image.dim(2), ResizeMode::Bilinear);
    if (trace) trace->logits_small = std::move(logits_small);
    return squeeze0(std::move(logits));
}

SegGrads seg_backward(const SegmentationModel& model, const SegTrace& trace,
                      const Tensor& grad_logits) {
    SegGrads g;
    Tensor g_small = upsample_bilinear_bwd(unsqueeze0(grad_logits), trace.logits_small.dim(2),
                                           trace.logits_small.dim(3));
    Tensor g_feat;
    conv2d_bwd(trace.bt.a3, model.classifier.head.w, g_small, model.classifier.head.stride,
               model.classifier.head.pad, g_feat, g.head.w, g.head.b);
    g.backbone = backbone_backward(model.backbone, trace.bt, squeeze0(std::move(g_feat)));
    return g;
}

Tensor encoder_forward(const ContrastEncoder& enc, const Tensor& image, EncTrace* trace) {
    BackboneTrace bt;
    Tensor feat = backbone_forward(enc.backbone, image, trace ? &trace->bt : &bt);
    Tensor feat_n = unsqueeze0(std::move(feat));
    Tensor z4 = conv2d_fwd(feat_n, enc.proj.p1.w, enc.proj.p1.b, 1, 0);
    Tensor a4 = relu_fwd(z4);
    Tensor out = conv2d_fwd(a4, enc.proj.p2.w, enc.proj.p2.b, 1, 0);
    if (trace) {
        trace->z4 = std::move(z4);
        trace->a4 = std::move(a4);
    }
    return squeeze0(std::move(out));
}

EncGrads encoder_backward(const ContrastEncoder& enc, const EncTrace& trace,
                          const Tensor& grad_features) {
    EncGrads g;
    Tensor gout = unsqueeze0(grad_features);
    Tensor g_a4;
    conv2d_bwd(trace.a4, enc.proj.p2.w, gout, 1, 0, g_a4, g.proj.p2.w, g.proj.p2.b);
    Tensor g_z4 = relu_bwd(trace.z4, g_a4);
    Tensor g_feat;
    conv2d_bwd(trace.bt.a3, enc.proj.p1.w, g_z4, 1, 0, g_feat, g.proj.p1.w, g.proj.p1.b);
    g.backbone = backbone_backward(enc.backbone, trace.bt, squeeze0(std::move(g_feat)));
    return g;
}

Tensor upsample_bilinear_bwd(const Tensor& grad_out, int in_h, int in_w) {
    if (grad_out.rank() != 4) fail(ErrorKind::Dimension, "upsample backward expects NCHW");
    const int n = grad_out.dim(0), c = grad_out.dim(1);
    const int oh = grad_out.dim(2), ow = grad_out.dim(3);
    Tensor gin = Tensor::zeros({n, c, in_h, in_w});
    std::vector<int> y0(static_cast<std::size_t>(oh)), y1(static_cast<std::size_t>(oh));
    std::vector<int> x0(static_cast<std::size_t>(ow)), x1(static_cast<std::size_t>(ow));
    std::vector<float> fy(static_cast<std::size_t>(oh)), fx(static_cast<std::size_t>(ow));
    for (int y = 0; y < oh; ++y) {
        double src = (static_cast<double>(y) + 0.5) * in_h / oh - 0.5;
        double lo = std::floor(src);
        y0[static_cast<std::size_t>(y)] = std::clamp(static_cast<int>(lo), 0, in_h - 1);
        y1[static_cast<std::size_t>(y)] = std::clamp(static_cast<int>(lo) + 1, 0, in_h - 1);
        fy[static_cast<std::size_t>(y)] = static_cast<float>(src - lo);
    }
    for (int x = 0; x < ow; ++x) {
        double src = (static_cast<double>(x) + 0.5) * in_w / ow - 0.5;
        double lo = std::floor(src);
        x0[static_cast<std::size_t>(x)] = std::clamp(static_cast<int>(lo), 0, in_w - 1);
        x1[static_cast<std::size_t>(x)] = std::clamp(static_cast<int>(lo) + 1, 0, in_w - 1);
        fx[static_cast<std::size_t>(x)] = static_cast<float>(src - lo);
    }
    for (int p = 0; p < n * c; ++p) {
        const float* go = grad_out.data.data() + static_cast<std::size_t>(p) * oh * ow;
        float* gi = gin.data.data() + static_cast<std::size_t>(p) * in_h * in_w;
        for (int y = 0; y < oh; ++y) {
            float wy = fy[static_cast<std::size_t>(y)];
            float* r0 = gi + static_cast<std::size_t>(y0[static_cast<std::size_t>(y)]) * in_w;
            float* r1 = gi + static_cast<std::size_t>(y1[static_cast<std::size_t>(y)]) * in_w;
            for (int x = 0; x < ow; ++x) {
                float g = go[static_cast<std::size_t>(y) * ow + x];
                if (g == 0.0f) continue;
                float wx = fx[static_cast<std::size_t>(x)];
                int a = x0[static_cast<std::size_t>(x)], b = x1[static_cast<std::size_t>(x)];
                r0[a] += g * (1.0f - wy) * (1.0f - wx);
                r0[b] += g * (1.0f - wy) * wx;
                r1[a] += g * wy * (1.0f - wx);
                r1[b] += g * wy * wx;
            }
        }
    }
    return gin;
}

namespace {

struct PixelCe {
    double ce;
    float* probs;  // C values, scratch
};

void check_logits_target(const Tensor& logits, const LabelMap& target) {
    if (logits.rank() != 3) fail(ErrorKind::Dimension, "loss expects CxHxW logits");
    if (logits.dim(1) != target.h || logits.dim(2) != target.w)
        fail(ErrorKind::Dimension, "loss: logits spatial size does not match target");
    const int c = logits.dim(0);
    for (std::int32_t t : target.v)
        if (t < 0 || t >= c) fail(ErrorKind::Data, "loss: target label outside [0, C)");
}

}  // namespace

LossGrad softmax_ce_loss(const Tensor& logits, const LabelMap& target) {
    check_logits_target(logits, target);
    const int c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    const std::size_t npix = static_cast<std::size_t>(h) * w;
    LossGrad out;
    out.grad_logits = Tensor::zeros(logits.shape);
    double total = 0.0;
    std::vector<float> p(static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < npix; ++i) {
        float mx = logits.data[i];
        for (int k = 1; k < c; ++k) mx = std::max(mx, logits.data[k * npix + i]);
        double denom = 0.0;
        for (int k = 0; k < c; ++k) {
            p[static_cast<std::size_t>(k)] = std::exp(logits.data[k * npix + i] - mx);
            denom += p[static_cast<std::size_t>(k)];
        }
        int t = target.v[i];
        total += std::log(denom) - (logits.data[static_cast<std::size_t>(t) * npix + i] - mx);
        float inv = static_cast<float>(1.0 / denom) / static_cast<float>(npix);
        for (int k = 0; k < c; ++k)
            out.grad_logits.data[k * npix + i] = p[static_cast<std::size_t>(k)] * inv;
        out.grad_logits.data[static_cast<std::size_t>(t) * npix + i] -=
            1.0f / static_cast<float>(npix);
    }
    out.loss = total / static_cast<double>(npix);
    return out;
}

LossGrad ohem_loss(const Tensor& logits, const LabelMap& target, float tau, int k_min) {
    check_logits_target(logits, target);
    const int c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    const std::size_t npix = static_cast<std::size_t>(h) * w;
    if (tau < 0.0f) fail(ErrorKind::Config, "ohem_loss: tau must be >= 0");
    if (k_min < 1 || static_cast<std::size_t>(k_min) > npix)
        fail(ErrorKind::Config, "ohem_loss: k_min must be in [1, H*W]");

    std::vector<double> ce(npix);
    std::vector<float> softmax(static_cast<std::size_t>(c) * npix);
    for (std::size_t i = 0; i < npix; ++i) {
        float mx = logits.data[i];
        for (int k = 1; k < c; ++k) mx = std::max(mx, logits.data[k * npix + i]);
        double denom = 0.0;
        for (int k = 0; k < c; ++k) {
            float e = std::exp(logits.data[k * npix + i] - mx);
            softmax[k * npix + i] = e;
            denom += e;
        }
        for (int k = 0; k < c; ++k)
            softmax[k * npix + i] = static_cast<float>(softmax[k * npix + i] / denom);
        int t = target.v[i];
        ce[i] = std::log(denom) - (logits.data[static_cast<std::size_t>(t) * npix + i] - mx);
    }

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < npix; ++i)
        if (ce[i] > static_cast<double>(tau)) kept.push_back(i);
    if (kept.size() < static_cast<std::size_t>(k_min)) {
        std::vector<std::size_t> order(npix);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (ce[a] != ce[b]) return ce[a] > ce[b];
            return a < b;
        });
        kept.assign(order.begin(), order.begin() + k_min);
        std::sort(kept.begin(), kept.end());
    }

    LossGrad out;
    out.grad_logits = Tensor::zeros(logits.shape);
    double total = 0.0;
    float inv = 1.0f / static_cast<float>(kept.size());
    for (std::size_t i : kept) {
        total += ce[i];
        int t = target.v[i];
        for (int k = 0; k < c; ++k) out.grad_logits.data[k * npix + i] = softmax[k * npix + i] * inv;
        out.grad_logits.data[static_cast<std::size_t>(t) * npix + i] -= inv;
    }
    out.loss = total / static_cast<double>(kept.size());
    return out;
}

LabelMap predict_labels(const Tensor& logits) {
    if (logits.rank() != 3) fail(ErrorKind::Dimension, "predict_labels expects CxHxW");
    const int c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    const std::size_t npix = static_cast<std::size_t>(h) * w;
    LabelMap out(h, w);
    for (std::size_t i = 0; i < npix; ++i) {
        int best = 0;
        float bv = logits.data[i];
        for (int k = 1; k < c; ++k) {
            float v = logits.data[k * npix + i];
            if (v > bv) {
                bv = v;
                best = k;
            }
        }
        out.v[i] = best;
    }
    return out;
}

std::vector<Tensor*> backbone_params(Backbone& b) {
    return {&b.c1.w, &b.c1.b, &b.c2.w, &b.c2.b, &b.c3.w, &b.c3.b};
}
std::vector<const Tensor*> backbone_params(const Backbone& b) {
    return {&b.c1.w, &b.c1.b, &b.c2.w, &b.c2.b, &b.c3.w, &b.c3.b};
}

std::vector<Tensor*> seg_params(SegmentationModel& m) {
    auto v = backbone_params(m.backbone);
    v.push_back(&m.classifier.head.w);
    v.push_back(&m.classifier.head.b);
    return v;
}
std::vector<const Tensor*> seg_params(const SegmentationModel& m) {
    auto v = backbone_params(m.backbone);
    v.push_back(&m.classifier.head.w);
    v.push_back(&m.classifier.head.b);
    return v;
}

std::vector<std::string> seg_param_names() {
    return {"backbone.conv1.weight", "backbone.conv1.bias", "backbone.conv2.weight",
            "backbone.conv2.bias",   "backbone.conv3.weight", "backbone.conv3.bias",
            "classifier.head.weight", "classifier.head.bias"};
}

std::vector<Tensor*> encoder_params(ContrastEncoder& e) {
    auto v = backbone_params(e.backbone);
    v.push_back(&e.proj.p1.w);
    v.push_back(&e.proj.p1.b);
    v.push_back(&e.proj.p2.w);
    v.push_back(&e.proj.p2.b);
    return v;
}
std::vector<const Tensor*> encoder_params(const ContrastEncoder& e) {
    auto v = backbone_params(e.backbone);
    v.push_back(&e.proj.p1.w);
    v.push_back(&e.proj.p1.b);
    v.push_back(&e.proj.p2.w);
    v.push_back(&e.proj.p2.b);
    return v;
}

std::vector<std::string> encoder_param_names() {
    return {"backbone.conv1.weight", "backbone.conv1.bias", "backbone.conv2.weight",
            "backbone.conv2.bias",   "backbone.conv3.weight", "backbone.conv3.bias",
            "proj.conv1.weight",     "proj.conv1.bias",     "proj.conv2.weight",
            "proj.conv2.bias"};
}

std::vector<Tensor*> seg_grad_tensors(SegGrads& g) {
    return {&g.backbone.c1.w, &g.backbone.c1.b, &g.backbone.c2.w, &g.backbone.c2.b,
            &g.backbone.c3.w, &g.backbone.c3.b, &g.head.w,        &g.head.b};
}
std::vector<Tensor*> enc_grad_tensors(EncGrads& g) {
    return {&g.backbone.c1.w, &g.backbone.c1.b, &g.backbone.c2.w, &g.backbone.c2.b,
            &g.backbone.c3.w, &g.backbone.c3.b, &g.proj.p1.w,     &g.proj.p1.b,
            &g.proj.p2.w,     &g.proj.p2.b};
}

SegGrads zero_seg_grads(const SegmentationModel& m) {
    SegGrads g;
    auto ps = seg_params(m);
    SegGrads* gp = &g;
    auto gs = seg_grad_tensors(*gp);
    for (std::size_t i = 0; i < ps.size(); ++i) *gs[i] = Tensor::zeros(ps[i]->shape);
    return g;
}

EncGrads zero_enc_grads(const ContrastEncoder& e) {
    EncGrads g;
    auto ps = encoder_params(e);
    auto gs = enc_grad_tensors(g);
    for (std::size_t i = 0; i < ps.size(); ++i) *gs[i] = Tensor::zeros(ps[i]->shape);
    return g;
}

void accumulate_grads(std::vector<Tensor*> dst, const std::vector<Tensor*>& src, float scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        require_same_shape(*dst[i], *src[i], "accumulate_grads");
        float* d = dst[i]->data.data();
        const float* s = src[i]->data.data();
        for (std::size_t k = 0; k < dst[i]->data.size(); ++k) d[k] += scale * s[k];
    }
}

}  // namespace pgv
