#include "homog/coeff.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace homog {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void check_law(double lo, double hi) {
    if (!(lo > 0.0) || !std::isfinite(hi)) {
        throw std::invalid_argument("checkerboard: coefficient values must be positive");
    }
    if (!(lo <= hi)) {
        throw std::invalid_argument("checkerboard: require lo <= hi");
    }
}

}  // namespace

std::array<double, 2> Mat2::symmetric_eigenvalues() const {
    const double off = 0.5 * (xy + yx);
    const double mean = 0.5 * (xx + yy);
    const double radius = std::hypot(0.5 * (xx - yy), off);
    return {mean - radius, mean + radius};
}

CheckerboardField::CheckerboardField(int r, std::uint64_t seed, double lo, double hi,
                                     std::vector<double> values)
    : r_(r), seed_(seed), lo_(lo), hi_(hi), values_(std::move(values)) {
    if (r < 1) {
        throw std::invalid_argument("checkerboard: r must be positive");
    }
    check_law(lo, hi);
    if (values_.size() != static_cast<std::size_t>(r) * r) {
        throw std::invalid_argument("checkerboard: expected r*r cell values");
    }
    for (double v : values_) {
        if (v != lo && v != hi) {
            throw std::invalid_argument("checkerboard: cell value " + std::to_string(v) +
                                        " is neither lo nor hi");
        }
    }
}

double CheckerboardField::at(Cell z) const {
    if (z.x < 0 || z.y < 0 || z.x >= r_ || z.y >= r_) {
        throw std::out_of_range("checkerboard: cell (" + std::to_string(z.x) + "," +
                                std::to_string(z.y) + ") outside the domain");
    }
    return values_[static_cast<std::size_t>(z.y) * r_ + z.x];
}

CheckerboardField CheckerboardField::transposed() const {
    std::vector<double> t(values_.size());
    for (int y = 0; y < r_; ++y) {
        for (int x = 0; x < r_; ++x) {
            t[static_cast<std::size_t>(x) * r_ + y] = values_[static_cast<std::size_t>(y) * r_ + x];
        }
    }
    return {r_, seed_, lo_, hi_, std::move(t)};
}

std::uint64_t cell_hash(std::uint64_t seed, Cell z) noexcept {
    const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(z.y)) << 32) |
                              static_cast<std::uint32_t>(z.x);
    return splitmix64(splitmix64(seed) ^ splitmix64(key));
}

CheckerboardField sample_checkerboard(int r, std::uint64_t seed, double lo, double hi) {
    if (r < 1) {
        throw std::invalid_argument("checkerboard: r must be positive");
    }
    check_law(lo, hi);
    std::vector<double> values(static_cast<std::size_t>(r) * r);
    for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
            const bool high = (cell_hash(seed, {x, y}) >> 63) != 0;
            values[static_cast<std::size_t>(y) * r + x] = high ? hi : lo;
        }
    }
    return {r, seed, lo, hi, std::move(values)};
}

double coeff_of_cell(const CheckerboardField& field, Cell z) { return field.at(z); }

std::vector<double> triangle_coefficients(const StructuredMesh& mesh,
                                          const CheckerboardField& field) {
    if (mesh.r() != field.r()) {
        throw std::invalid_argument("mesh has r=" + std::to_string(mesh.r()) +
                                    " but the field has r=" + std::to_string(field.r()));
    }
    std::vector<double> coeff(mesh.num_triangles());
    for (std::size_t t = 0; t < coeff.size(); ++t) {
        coeff[t] = field.at(cell_of_triangle(mesh, t));
    }
    return coeff;
}

HomogenizedMatrix analytic_abar(double lo, double hi) {
    check_law(lo, hi);
    return Mat2::identity(std::sqrt(lo * hi));
}

void write_field(std::ostream& out, const CheckerboardField& field) {
    out.precision(17);
    out << "checkerboard " << field.r() << ' ' << field.seed() << ' ' << field.lo() << ' '
        << field.hi() << '\n';
    for (double v : field.values()) {
        out << v << '\n';
    }
}

CheckerboardField read_field(std::istream& in) {
    std::string tag;
    int r = 0;
    std::uint64_t seed = 0;
    double lo = 0.0;
    double hi = 0.0;
    if (!(in >> tag >> r >> seed >> lo >> hi) || tag != "checkerboard") {
        throw std::runtime_error("read_field: malformed header");
    }
    if (r < 1) {
        throw std::runtime_error("read_field: bad size");
    }
    std::vector<double> values(static_cast<std::size_t>(r) * r);
    for (double& v : values) {
        if (!(in >> v)) {
            throw std::runtime_error("read_field: truncated value list");
        }
    }
    return {r, seed, lo, hi, std::move(values)};
}

}  // namespace homog
