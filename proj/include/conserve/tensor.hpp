#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace conserve {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 tensor holds one scalar.
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool is_scalar() const { return shape_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Multi-channel field on a uniform periodic grid over [0,1]^d.
/// Layout is channel-major, row-major within a channel: shape (channels, dims...).
class GridField : public Tensor {
public:
    GridField() = default;
    GridField(std::size_t channels, const Shape& dims, double fill = 0.0);
    GridField(std::size_t channels, const Shape& dims, std::vector<double> data);
    /// Reinterprets a tensor of rank >= 2 as (channels, dims...).
    explicit GridField(Tensor t);

    std::size_t channels() const { return shape().empty() ? 0 : shape()[0]; }
    Shape dims() const;
    std::size_t points() const;
    std::vector<double> spacing() const;

    std::span<double> channel(std::size_t c);
    std::span<const double> channel(std::size_t c) const;
};

/// Complex field stored as separate real and imaginary planes.
struct ComplexField {
    Shape dims;
    std::vector<double> re;
    std::vector<double> im;

    ComplexField() = default;
    explicit ComplexField(const Shape& dims);

    std::size_t points() const { return re.size(); }

    /// Two-channel (Re, Im) grid field.
    GridField to_grid() const;
    static ComplexField from_grid(const GridField& f);
};

/// Cell-centred coordinates of a grid along one axis, x_i = i / n.
std::vector<double> grid_coordinates(std::size_t n);

}  // namespace conserve
