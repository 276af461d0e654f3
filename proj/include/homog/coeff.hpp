#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "homog/mesh.hpp"

namespace homog {

/// Constant 2x2 matrix, row-major.
struct Mat2 {
    double xx = 0.0;
    double xy = 0.0;
    double yx = 0.0;
    double yy = 0.0;

    static Mat2 identity(double c = 1.0) { return {c, 0.0, 0.0, c}; }
    Mat2 transposed() const { return {xx, yx, xy, yy}; }
    bool is_symmetric() const { return xy == yx; }
    /// Eigenvalues of the symmetric part, ascending.
    std::array<double, 2> symmetric_eigenvalues() const;
};

using HomogenizedMatrix = Mat2;

/// Random checkerboard: coefficient b(z) on unit cell z + [0,1)^2, each an
/// independent fair coin between lo and hi.
class CheckerboardField {
public:
    /// Takes explicit cell values (row-major, index y*r + x); every entry
    /// must equal lo or hi.
    CheckerboardField(int r, std::uint64_t seed, double lo, double hi,
                      std::vector<double> values);

    int r() const noexcept { return r_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double at(Cell z) const;
    /// Same law, cells reflected across the diagonal.
    CheckerboardField transposed() const;

private:
    int r_;
    std::uint64_t seed_;
    double lo_;
    double hi_;
    std::vector<double> values_;
};

/// Counter-based hash of (seed, z); the cell is "hi" iff the top bit is set.
std::uint64_t cell_hash(std::uint64_t seed, Cell z) noexcept;

CheckerboardField sample_checkerboard(int r, std::uint64_t seed, double lo = 1.0,
                                      double hi = 9.0);

double coeff_of_cell(const CheckerboardField& field, Cell z);

/// Scalar coefficient on every mesh triangle; mesh and field must share r.
std::vector<double> triangle_coefficients(const StructuredMesh& mesh,
                                          const CheckerboardField& field);

/// sqrt(lo*hi) I, the two-phase value obtained by duality (3I for {1,9}).
HomogenizedMatrix analytic_abar(double lo, double hi);

enum class RveBoundary { dirichlet_affine, periodic };

struct RveOptions {
    RveBoundary bc = RveBoundary::dirichlet_affine;
    int refine = 2;
};

/// Numerical estimate of the homogenized matrix from the cell problems
/// -div a(p + grad phi) = 0 on the field's L x L block.
HomogenizedMatrix rve_estimate_abar(const CheckerboardField& field,
                                    const RveOptions& options = {});

/// Text grid: a header line "checkerboard r seed lo hi", then r*r values,
/// one per line, row-major.
void write_field(std::ostream& out, const CheckerboardField& field);
CheckerboardField read_field(std::istream& in);

}  // namespace homog
