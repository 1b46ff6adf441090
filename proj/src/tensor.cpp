#include "conserve/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "conserve/error.hpp"

namespace conserve {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

Shape field_shape(std::size_t channels, const Shape& dims) {
    if (channels == 0) throw ShapeError("grid field needs at least one channel");
    if (dims.empty()) throw ShapeError("grid field needs at least one spatial dimension");
    Shape s{channels};
    s.insert(s.end(), dims.begin(), dims.end());
    return s;
}

}  // namespace

GridField::GridField(std::size_t channels, const Shape& dims, double fill)
    : Tensor(field_shape(channels, dims), fill) {}

GridField::GridField(std::size_t channels, const Shape& dims, std::vector<double> data)
    : Tensor(field_shape(channels, dims), std::move(data)) {}

GridField::GridField(Tensor t) : Tensor(std::move(t)) {
    if (rank() < 2) throw ShapeError("grid field needs shape (channels, dims...), got " + shape_string(shape()));
}

Shape GridField::dims() const { return Shape(shape().begin() + 1, shape().end()); }

std::size_t GridField::points() const { return channels() == 0 ? 0 : size() / channels(); }

std::vector<double> GridField::spacing() const {
    std::vector<double> h;
    for (std::size_t n : dims()) h.push_back(1.0 / static_cast<double>(n));
    return h;
}

std::span<double> GridField::channel(std::size_t c) { return data().subspan(c * points(), points()); }

std::span<const double> GridField::channel(std::size_t c) const {
    return data().subspan(c * points(), points());
}

ComplexField::ComplexField(const Shape& d) : dims(d), re(shape_size(d), 0.0), im(shape_size(d), 0.0) {}

GridField ComplexField::to_grid() const {
    GridField g(2, dims);
    std::copy(re.begin(), re.end(), g.channel(0).begin());
    std::copy(im.begin(), im.end(), g.channel(1).begin());
    return g;
}

ComplexField ComplexField::from_grid(const GridField& f) {
    if (f.channels() != 2) throw ShapeError("complex field needs exactly 2 channels, got " + shape_string(f.shape()));
    ComplexField c(f.dims());
    auto r = f.channel(0);
    auto i = f.channel(1);
    c.re.assign(r.begin(), r.end());
    c.im.assign(i.begin(), i.end());
    return c;
}

std::vector<double> grid_coordinates(std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i) / static_cast<double>(n);
    return x;
}

}  // namespace conserve
