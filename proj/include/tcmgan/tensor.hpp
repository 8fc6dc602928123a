#ifndef TCMGAN_TENSOR_HPP
#define TCMGAN_TENSOR_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tcmgan/errors.hpp"

namespace tcmgan {

// Dense row-major tensor of doubles, up to 4 dims (NCHW for image batches).
// Copies share storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, double fill);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, v); }

    bool defined() const { return data_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::size_t size() const { return data_ ? data_->size() : 0; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    double& operator[](std::size_t i) { return (*data_)[i]; }
    double operator[](std::size_t i) const { return (*data_)[i]; }

    Tensor clone() const;
    Tensor reshaped(std::vector<int> shape) const;  // shares storage

    double min() const;
    double max() const;
    double sum() const;
    double mean() const { return size() ? sum() / static_cast<double>(size()) : 0.0; }
    double abs_max() const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

// FNV-1a over the raw bytes; used for parameter-isolation checks.
std::uint64_t tensor_checksum(const Tensor& t);

bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace tcmgan

#endif
