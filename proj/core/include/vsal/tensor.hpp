#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace vsal {

/// Dense row-major tensor of doubles. Rank is dynamic; the network code uses
/// [C,H,W] for feature maps, [H,W] for masks/maps, [C] for vectors and {1}
/// for scalars.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v);
    static Tensor from(std::vector<int> shape, std::vector<double> values);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Indexed access for the common ranks; no bounds checks in release builds.
    double& at(int c, int y, int x) { return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)]; }
    double at(int c, int y, int x) const { return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)]; }
    double& at(int y, int x) { return data_[static_cast<size_t>(y * shape_[1] + x)]; }
    double at(int y, int x) const { return data_[static_cast<size_t>(y * shape_[1] + x)]; }

    void fill(double v);
    double sum() const;
    double max_abs() const;
    bool all_finite() const;

    std::string shape_str() const;

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);

}  // namespace vsal
