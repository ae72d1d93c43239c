#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace itl {

/**
 * Dense row-major [d0 x d1 x d2] tensor of doubles.
 *
 * The main use is transition dynamics indexed as (state, action, next_state);
 * a "row" is the distribution over next states for a fixed (state, action)
 * and is exposed as an Eigen map so linear algebra can run on it in place.
 */
class Tensor3 {
public:
    Tensor3() = default;

    Tensor3(int d0, int d1, int d2, double fill = 0.0)
        : d0_(d0), d1_(d1), d2_(d2),
          data_(static_cast<std::size_t>(d0) * d1 * d2, fill) {
        if (d0 <= 0 || d1 <= 0 || d2 <= 0)
            throw std::invalid_argument("Tensor3: dimensions must be positive");
    }

    int dim0() const { return d0_; }
    int dim1() const { return d1_; }
    int dim2() const { return d2_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int i, int j, int k) { return data_[flat(i, j, k)]; }
    double operator()(int i, int j, int k) const { return data_[flat(i, j, k)]; }

    /// Flat offset of (i,j,k); rows of fixed (i,j) are contiguous.
    std::size_t flat(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * d1_ + j) * d2_ + k;
    }
    std::size_t row_offset(int i, int j) const {
        return (static_cast<std::size_t>(i) * d1_ + j) * d2_;
    }

    Eigen::Map<Eigen::VectorXd> row(int i, int j) {
        return {data_.data() + row_offset(i, j), d2_};
    }
    Eigen::Map<const Eigen::VectorXd> row(int i, int j) const {
        return {data_.data() + row_offset(i, j), d2_};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Eigen::Map<Eigen::VectorXd> flattened() {
        return {data_.data(), static_cast<Eigen::Index>(data_.size())};
    }
    Eigen::Map<const Eigen::VectorXd> flattened() const {
        return {data_.data(), static_cast<Eigen::Index>(data_.size())};
    }

    bool same_shape(const Tensor3& o) const {
        return d0_ == o.d0_ && d1_ == o.d1_ && d2_ == o.d2_;
    }

    bool operator==(const Tensor3& o) const {
        return same_shape(o) && data_ == o.data_;
    }

private:
    int d0_ = 0, d1_ = 0, d2_ = 0;
    std::vector<double> data_;
};

} // namespace itl
