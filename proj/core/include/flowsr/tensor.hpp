#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowsr {

/// Dense row-major N-d array of doubles. Model blocks use the axis order
/// [channels, depth, height, width]; convolution weights are rank-5
/// [out_ch, in_ch, k, k, k]. All training and test math runs in 64-bit.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // rank-4 [C,D,H,W] addressing
    std::int64_t index4(int c, int d, int h, int w) const {
        return ((static_cast<std::int64_t>(c) * shape_[1] + d) * shape_[2] + h) * shape_[3] + w;
    }
    double& at4(int c, int d, int h, int w) { return data_[static_cast<std::size_t>(index4(c, d, h, w))]; }
    double at4(int c, int d, int h, int w) const { return data_[static_cast<std::size_t>(index4(c, d, h, w))]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

double sum(const Tensor& t);
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Channel-wise concatenation of rank-4 tensors with equal spatial dims.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [c0, c1) of a rank-4 tensor.
Tensor slice_channels(const Tensor& t, int c0, int c1);

void require(bool cond, const std::string& msg);

}  // namespace flowsr
