#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "pgv/errors.hpp"

namespace pgv {

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major f32 array. Carrier for images, feature maps, parameters and
// gradients. Constructors enforce data.size() == product(shape); extents must
// be positive.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> s) {
        check_shape(s);
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(shape_numel(t.shape), 0.0f);
        return t;
    }

    static Tensor full(std::vector<int> s, float value) {
        Tensor t = zeros(std::move(s));
        for (float& v : t.data) v = value;
        return t;
    }

    static Tensor of(std::vector<int> s, std::vector<float> values) {
        check_shape(s);
        if (values.size() != shape_numel(s))
            fail(ErrorKind::Dimension,
                 "tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(s));
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(values);
        return t;
    }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool empty() const { return data.empty(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    float& at(int i) { return data[static_cast<std::size_t>(i)]; }
    float at(int i) const { return data[static_cast<std::size_t>(i)]; }

    float& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    float at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }

    float& at(int n, int c, int y, int x) {
        return data[((static_cast<std::size_t>(n) * dim(1) + c) * dim(2) + y) * dim(3) + x];
    }
    float at(int n, int c, int y, int x) const {
        return data[((static_cast<std::size_t>(n) * dim(1) + c) * dim(2) + y) * dim(3) + x];
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }

private:
    static void check_shape(const std::vector<int>& s) {
        for (int e : s)
            if (e <= 0)
                fail(ErrorKind::Dimension, "non-positive extent in shape " + shape_str(s));
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        fail(ErrorKind::Dimension, std::string(what) + ": shape mismatch " +
                                       shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace pgv
