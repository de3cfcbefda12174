#pragma once

#include <cstdint>
#include <vector>

#include "pgv/errors.hpp"
#include "pgv/tensor.hpp"

namespace pgv {

// Integer class map. Kept separate from Tensor so class ids are never subject
// to float arithmetic; converted to/from f32 tensors only at container I/O.
struct LabelMap {
    int h = 0, w = 0;
    std::vector<std::int32_t> v;

    LabelMap() = default;
    LabelMap(int height, int width, std::int32_t fill = 0)
        : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {}

    std::int32_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    std::int32_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return v.size(); }

    bool operator==(const LabelMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

// Nearest-neighbor resampling, pixel centers at (i+0.5)/N (align-corners=false).
// Never introduces values absent from the input.
inline LabelMap nearest_resize(const LabelMap& in, int out_h, int out_w) {
    if (out_h == in.h && out_w == in.w) return in;
    LabelMap out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        int sy = static_cast<int>((static_cast<double>(y) + 0.5) * in.h / out_h);
        if (sy > in.h - 1) sy = in.h - 1;
        for (int x = 0; x < out_w; ++x) {
            int sx = static_cast<int>((static_cast<double>(x) + 0.5) * in.w / out_w);
            if (sx > in.w - 1) sx = in.w - 1;
            out.at(y, x) = in.at(sy, sx);
        }
    }
    return out;
}

inline Tensor label_to_tensor(const LabelMap& m) {
    Tensor t = Tensor::zeros({m.h, m.w});
    for (std::size_t i = 0; i < m.v.size(); ++i) t.data[i] = static_cast<float>(m.v[i]);
    return t;
}

inline LabelMap label_from_tensor(const Tensor& t) {
    if (t.rank() != 2) fail(ErrorKind::Dimension, "label map tensor must be rank 2");
    LabelMap m(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        float f = t.data[i];
        auto x = static_cast<std::int32_t>(f);
        if (static_cast<float>(x) != f || x < 0)
            fail(ErrorKind::Data, "label map entry is not a non-negative integer");
        m.v[i] = x;
    }
    return m;
}

}  // namespace pgv
