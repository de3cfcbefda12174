#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgv/label_map.hpp"
#include "pgv/ops.hpp"
#include "pgv/tensor.hpp"

namespace pgv {

struct ConvParam {
    Tensor w;  // OCkk
    Tensor b;  // O
    int stride = 1;
    int pad = 0;
};

// Fixed toy architecture, feature stride 4:
//   conv3x3(3->16, s2) - relu - conv3x3(16->32, s2) - relu - conv3x3(32->32, s1) - relu
struct Backbone {
    ConvParam c1, c2, c3;
};
inline constexpr int kHiddenChannels = 32;
inline constexpr int kFeatureStride = 4;

struct Classifier {
    ConvParam head;  // 1x1, hidden -> C
};

struct SegmentationModel {
    Backbone backbone;
    Classifier classifier;
    int num_classes = 0;
};

struct ProjectionHead {
    ConvParam p1, p2;  // 1x1 hidden->hidden, relu, 1x1 hidden->D
};

struct ContrastEncoder {
    Backbone backbone;
    ProjectionHead proj;
};

struct EncoderPair {
    ContrastEncoder online;    // theta, updated by backprop
    ContrastEncoder momentum;  // theta^m, updated only by EMA
    float m = 0.99f;
};

// He fan-in initialization, deterministic in the seed.
SegmentationModel build_encoder(int num_classes, std::uint64_t seed);
ProjectionHead build_projection_head(int proj_dim, std::uint64_t seed);
Classifier build_classifier(int num_classes, std::uint64_t seed);
EncoderPair make_encoder_pair(const Backbone& warm_start, int proj_dim, float m,
                              std::uint64_t seed);

// ---- forward / backward ----------------------------------------------------

struct BackboneTrace {
    Tensor input;          // 1x3xHxW
    Tensor z1, a1, z2, a2, z3, a3;
};

struct ConvGrads {
    Tensor w, b;
};
struct BackboneGrads {
    ConvGrads c1, c2, c3;
};
struct SegGrads {
    BackboneGrads backbone;
    ConvGrads head;
};
struct ProjGrads {
    ConvGrads p1, p2;
};
struct EncGrads {
    BackboneGrads backbone;
    ProjGrads proj;
};

// image is 3xHxW; returns hidden features (kHiddenChannels x H/4 x W/4).
Tensor backbone_forward(const Backbone& bb, const Tensor& image, BackboneTrace* trace);
BackboneGrads backbone_backward(const Backbone& bb, const BackboneTrace& trace,
                                const Tensor& grad_features);

struct SegTrace {
    BackboneTrace bt;
    Tensor logits_small;  // C x H' x W'
};

// Returns logits CxHxW (bilinear-upsampled from the feature grid).
Tensor seg_forward(const SegmentationModel& model, const Tensor& image, SegTrace* trace);
SegGrads seg_backward(const SegmentationModel& model, const SegTrace& trace,
                      const Tensor& grad_logits);

struct EncTrace {
    BackboneTrace bt;
    Tensor z4, a4;  // projection hidden
};

// Returns pixel embeddings D x H' x W'.
Tensor encoder_forward(const ContrastEncoder& enc, const Tensor& image, EncTrace* trace);
EncGrads encoder_backward(const ContrastEncoder& enc, const EncTrace& trace,
                          const Tensor& grad_features);

// Bilinear upsampling backward (align-corners=false), exact transpose of the
// forward interpolation in pgv::resize.
Tensor upsample_bilinear_bwd(const Tensor& grad_out, int in_h, int in_w);

// ---- losses ----------------------------------------------------------------

struct LossGrad {
    double loss = 0.0;
    Tensor grad_logits;
};

// Mean per-pixel softmax cross-entropy.
LossGrad softmax_ce_loss(const Tensor& logits, const LabelMap& target);

// Online hard example mining: keep pixels with CE > tau, expanded to the k_min
// hardest when fewer qualify; mean CE over the kept set, zero gradient outside.
LossGrad ohem_loss(const Tensor& logits, const LabelMap& target, float tau, int k_min);

// Per-pixel argmax; ties break toward the smaller class id.
LabelMap predict_labels(const Tensor& logits);

// ---- parameter traversal (fixed order, used by SGD/EMA/checkpoints) --------

std::vector<Tensor*> backbone_params(Backbone& b);
std::vector<const Tensor*> backbone_params(const Backbone& b);
std::vector<Tensor*> seg_params(SegmentationModel& m);
std::vector<const Tensor*> seg_params(const SegmentationModel& m);
std::vector<std::string> seg_param_names();
std::vector<Tensor*> encoder_params(ContrastEncoder& e);
std::vector<const Tensor*> encoder_params(const ContrastEncoder& e);
std::vector<std::string> encoder_param_names();
std::vector<Tensor*> seg_grad_tensors(SegGrads& g);
std::vector<Tensor*> enc_grad_tensors(EncGrads& g);

SegGrads zero_seg_grads(const SegmentationModel& m);
EncGrads zero_enc_grads(const ContrastEncoder& e);
void accumulate_grads(std::vector<Tensor*> dst, const std::vector<Tensor*>& src, float scale);

}  // namespace pgv
