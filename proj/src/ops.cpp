#include "pgv/ops.hpp"

#include <algorithm>
#include <cstring>

namespace pgv {

namespace {

struct ConvDims {
    int n, ci, h, w;
    int co, k;
    int oh, ow;
};

ConvDims check_conv(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                    int pad) {
    if (input.rank() != 4)
        fail(ErrorKind::Dimension, "conv2d: input must be NCHW, got " + shape_str(input.shape));
    if (weight.rank() != 4)
        fail(ErrorKind::Dimension, "conv2d: weight must be OCkk, got " + shape_str(weight.shape));
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
        fail(ErrorKind::Dimension, "conv2d: bias must have one entry per output channel");
    if (weight.dim(2) != weight.dim(3))
        fail(ErrorKind::Dimension, "conv2d: kernel must be square");
    if (weight.dim(2) % 2 == 0) fail(ErrorKind::Dimension, "conv2d: kernel size must be odd");
    if (stride < 1 || pad < 0) fail(ErrorKind::Dimension, "conv2d: stride >= 1 and pad >= 0");
    if (input.dim(1) != weight.dim(1))
        fail(ErrorKind::Dimension,
             "conv2d: channel mismatch, input has " + std::to_string(input.dim(1)) +
                 ", weight expects " + std::to_string(weight.dim(1)));
    ConvDims d;
    d.n = input.dim(0);
    d.ci = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.co = weight.dim(0);
    d.k = weight.dim(2);
    d.oh = (d.h + 2 * pad - d.k) / stride + 1;
    d.ow = (d.w + 2 * pad - d.k) / stride + 1;
    if (d.oh < 1 || d.ow < 1)
        fail(ErrorKind::Dimension, "conv2d: kernel larger than padded input");
    return d;
}

// Patch matrix: one row per output pixel, ci*k*k contiguous columns. Keeps the
// reduction contiguous on both sides so the dot products vectorize.
void im2col(const float* in, int ci, int h, int w, int k, int stride, int pad, int oh, int ow,
            float* patches) {
    const int cols = ci * k * k;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            float* row = patches + static_cast<std::size_t>(oy * ow + ox) * cols;
            int iy0 = oy * stride - pad;
            int ix0 = ox * stride - pad;
            for (int c = 0; c < ci; ++c) {
                const float* plane = in + static_cast<std::size_t>(c) * h * w;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = iy0 + ky;
                    float* dst = row + (c * k + ky) * k;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + k, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * w;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ix0 + kx;
                        dst[kx] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* patches, int ci, int h, int w, int k, int stride, int pad, int oh, int ow,
            float* grad_in) {
    const int cols = ci * k * k;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const float* row = patches + static_cast<std::size_t>(oy * ow + ox) * cols;
            int iy0 = oy * stride - pad;
            int ix0 = ox * stride - pad;
            for (int c = 0; c < ci; ++c) {
                float* plane = grad_in + static_cast<std::size_t>(c) * h * w;
                for (int ky = 0; ky < k; ++ky) {
                    int iy = iy0 + ky;
                    if (iy < 0 || iy >= h) continue;
                    const float* src = row + (c * k + ky) * k;
                    float* dst = plane + static_cast<std::size_t>(iy) * w;
                    for (int kx = 0; kx < k; ++kx) {
                        int ix = ix0 + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[kx];
                    }
                }
            }
        }
    }
}

inline float dot(const float* a, const float* b, int n) {
    float s = 0.0f;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void axpy(float a, const float* x, float* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

Tensor conv2d_fwd(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                  int pad) {
    ConvDims d = check_conv(input, weight, bias, stride, pad);
    Tensor out = Tensor::zeros({d.n, d.co, d.oh, d.ow});
    const int cols = d.ci * d.k * d.k;
    const int npix = d.oh * d.ow;
    std::vector<float> patches(static_cast<std::size_t>(npix) * cols);
    for (int n = 0; n < d.n; ++n) {
        const float* in = input.data.data() + static_cast<std::size_t>(n) * d.ci * d.h * d.w;
        im2col(in, d.ci, d.h, d.w, d.k, stride, pad, d.oh, d.ow, patches.data());
        float* ob = out.data.data() + static_cast<std::size_t>(n) * d.co * npix;
        for (int o = 0; o < d.co; ++o) {
            const float* wrow = weight.data.data() + static_cast<std::size_t>(o) * cols;
            float b = bias.data[static_cast<std::size_t>(o)];
            float* oplane = ob + static_cast<std::size_t>(o) * npix;
            for (int p = 0; p < npix; ++p)
                oplane[p] = dot(patches.data() + static_cast<std::size_t>(p) * cols, wrow, cols) + b;
        }
    }
    return out;
}

void conv2d_bwd(const Tensor& input, const Tensor& weight, const Tensor& grad_output, int stride,
                int pad, Tensor& grad_input, Tensor& grad_weight, Tensor& grad_bias) {
    Tensor bias = Tensor::zeros({weight.dim(0)});
    ConvDims d = check_conv(input, weight, bias, stride, pad);
    if (grad_output.rank() != 4 || grad_output.dim(0) != d.n || grad_output.dim(1) != d.co ||
        grad_output.dim(2) != d.oh || grad_output.dim(3) != d.ow)
        fail(ErrorKind::Dimension, "conv2d backward: grad_output shape mismatch");

    grad_input = Tensor::zeros(input.shape);
    grad_weight = Tensor::zeros(weight.shape);
    grad_bias = Tensor::zeros(bias.shape);

    const int cols = d.ci * d.k * d.k;
    const int npix = d.oh * d.ow;
    std::vector<float> patches(static_cast<std::size_t>(npix) * cols);
    std::vector<float> grad_patches(static_cast<std::size_t>(npix) * cols);
    for (int n = 0; n < d.n; ++n) {
        const float* in = input.data.data() + static_cast<std::size_t>(n) * d.ci * d.h * d.w;
        im2col(in, d.ci, d.h, d.w, d.k, stride, pad, d.oh, d.ow, patches.data());
        std::fill(grad_patches.begin(), grad_patches.end(), 0.0f);
        const float* go = grad_output.data.data() + static_cast<std::size_t>(n) * d.co * npix;
        for (int o = 0; o < d.co; ++o) {
            const float* gplane = go + static_cast<std::size_t>(o) * npix;
            const float* wrow = weight.data.data() + static_cast<std::size_t>(o) * cols;
            float* gwrow = grad_weight.data.data() + static_cast<std::size_t>(o) * cols;
            float gb = 0.0f;
            for (int p = 0; p < npix; ++p) {
                float g = gplane[p];
                if (g == 0.0f) continue;
                gb += g;
                const float* prow = patches.data() + static_cast<std::size_t>(p) * cols;
                float* gprow = grad_patches.data() + static_cast<std::size_t>(p) * cols;
                axpy(g, prow, gwrow, cols);
                axpy(g, wrow, gprow, cols);
            }
            grad_bias.data[static_cast<std::size_t>(o)] += gb;
        }
        float* gi = grad_input.data.data() + static_cast<std::size_t>(n) * d.ci * d.h * d.w;
        col2im(grad_patches.data(), d.ci, d.h, d.w, d.k, stride, pad, d.oh, d.ow, gi);
    }
}

OpGrad conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
    OpGrad op;
    op.output = conv2d_fwd(input, weight, bias, stride, pad);
    op.backward = [input, weight, stride, pad](const Tensor& grad_output) {
        Tensor gi, gw, gb;
        conv2d_bwd(input, weight, grad_output, stride, pad, gi, gw, gb);
        return std::vector<Tensor>{std::move(gi), std::move(gw), std::move(gb)};
    };
    return op;
}

Tensor relu_fwd(const Tensor& input) {
    Tensor out = input;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor relu_bwd(const Tensor& input, const Tensor& grad_output) {
    require_same_shape(input, grad_output, "relu backward");
    Tensor g = grad_output;
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (input.data[i] <= 0.0f) g.data[i] = 0.0f;
    return g;
}

OpGrad relu(const Tensor& input) {
    OpGrad op;
    op.output = relu_fwd(input);
    op.backward = [input](const Tensor& grad_output) {
        return std::vector<Tensor>{relu_bwd(input, grad_output)};
    };
    return op;
}

Tensor resize(const Tensor& input, int out_h, int out_w, ResizeMode mode) {
    if (out_h < 1 || out_w < 1) fail(ErrorKind::Dimension, "resize: output size must be >= 1");
    bool chw = input.rank() == 3;
    if (!chw && input.rank() != 4)
        fail(ErrorKind::Dimension, "resize: expected CHW or NCHW, got " + shape_str(input.shape));
    const int n = chw ? 1 : input.dim(0);
    const int c = chw ? input.dim(0) : input.dim(1);
    const int h = chw ? input.dim(1) : input.dim(2);
    const int w = chw ? input.dim(2) : input.dim(3);
    if (out_h == h && out_w == w) return input;

    Tensor out = chw ? Tensor::zeros({c, out_h, out_w}) : Tensor::zeros({n, c, out_h, out_w});
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;

    if (mode == ResizeMode::Nearest) {
        std::vector<int> sy(static_cast<std::size_t>(out_h)), sx(static_cast<std::size_t>(out_w));
        for (int y = 0; y < out_h; ++y)
            sy[static_cast<std::size_t>(y)] =
                std::min(h - 1, static_cast<int>((static_cast<double>(y) + 0.5) * h / out_h));
        for (int x = 0; x < out_w; ++x)
            sx[static_cast<std::size_t>(x)] =
                std::min(w - 1, static_cast<int>((static_cast<double>(x) + 0.5) * w / out_w));
        for (int p = 0; p < n * c; ++p) {
            const float* in = input.data.data() + static_cast<std::size_t>(p) * in_plane;
            float* dst = out.data.data() + static_cast<std::size_t>(p) * out_plane;
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x)
                    dst[static_cast<std::size_t>(y) * out_w + x] =
                        in[static_cast<std::size_t>(sy[static_cast<std::size_t>(y)]) * w +
                           sx[static_cast<std::size_t>(x)]];
        }
        return out;
    }

    // bilinear
    std::vector<int> y0(static_cast<std::size_t>(out_h)), y1(static_cast<std::size_t>(out_h));
    std::vector<int> x0(static_cast<std::size_t>(out_w)), x1(static_cast<std::size_t>(out_w));
    std::vector<float> fy(static_cast<std::size_t>(out_h)), fx(static_cast<std::size_t>(out_w));
    for (int y = 0; y < out_h; ++y) {
        double src = (static_cast<double>(y) + 0.5) * h / out_h - 0.5;
        double lo = std::floor(src);
        double f = src - lo;
        int a = static_cast<int>(lo);
        y0[static_cast<std::size_t>(y)] = std::clamp(a, 0, h - 1);
        y1[static_cast<std::size_t>(y)] = std::clamp(a + 1, 0, h - 1);
        fy[static_cast<std::size_t>(y)] = static_cast<float>(f);
    }
    for (int x = 0; x < out_w; ++x) {
        double src = (static_cast<double>(x) + 0.5) * w / out_w - 0.5;
        double lo = std::floor(src);
        double f = src - lo;
        int a = static_cast<int>(lo);
        x0[static_cast<std::size_t>(x)] = std::clamp(a, 0, w - 1);
        x1[static_cast<std::size_t>(x)] = std::clamp(a + 1, 0, w - 1);
        fx[static_cast<std::size_t>(x)] = static_cast<float>(f);
    }
    for (int p = 0; p < n * c; ++p) {
        const float* in = input.data.data() + static_cast<std::size_t>(p) * in_plane;
        float* dst = out.data.data() + static_cast<std::size_t>(p) * out_plane;
        for (int y = 0; y < out_h; ++y) {
            const float* r0 = in + static_cast<std::size_t>(y0[static_cast<std::size_t>(y)]) * w;
            const float* r1 = in + static_cast<std::size_t>(y1[static_cast<std::size_t>(y)]) * w;
            float wy = fy[static_cast<std::size_t>(y)];
            for (int x = 0; x < out_w; ++x) {
                int a = x0[static_cast<std::size_t>(x)];
                int b = x1[static_cast<std::size_t>(x)];
                float wx = fx[static_cast<std::size_t>(x)];
                float top = r0[a] * (1.0f - wx) + r0[b] * wx;
                float bot = r1[a] * (1.0f - wx) + r1[b] * wx;
                dst[static_cast<std::size_t>(y) * out_w + x] = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return out;
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, float lr, float momentum,
              float weight_decay) {
    require_same_shape(param, grad, "sgd_step");
    require_same_shape(param, velocity, "sgd_step velocity");
    float* p = param.data.data();
    const float* g = grad.data.data();
    float* v = velocity.data.data();
    const std::size_t n = param.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
        p[i] -= lr * v[i];
    }
}

}  // namespace pgv
