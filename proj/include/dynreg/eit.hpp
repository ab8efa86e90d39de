#pragma once

#include "dynreg/types.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <random>
#include <vector>

namespace dynreg::eit {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Point = Eigen::Vector2d;

// ---------------------------------------------------------------------------
// Mesh
// ---------------------------------------------------------------------------

/// Conforming triangulation of the unit square. Boundary vertices are listed
/// counterclockwise by perimeter arclength starting at the vertex nearest
/// (0,0), which is also the grounded reference index i*.
struct Mesh2D {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;  // ccw orientation
  std::vector<int> boundary_vertices;         // ordered cycle, [0] == reference
  std::vector<int> interior_vertices;
  int reference_boundary_index = -1;  // i*

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_boundary() const { return static_cast<int>(boundary_vertices.size()); }
  int n_active_boundary() const { return n_boundary() - 1; }

  /// Perimeter arclength of a boundary point, ccw from (0,0), in [0, 4).
  static double arclength(const Point& p);
};

enum class MeshKind { Structured, Unstructured };

/// Structured: each grid cell split along one diagonal. Unstructured: finer
/// data-generation flavor with alternating diagonals and deterministically
/// jittered interior vertices (boundary vertices stay exact).
Mesh2D build_mesh(int subdivisions, MeshKind kind);

// ---------------------------------------------------------------------------
// Coefficients
// ---------------------------------------------------------------------------

inline constexpr double kEllipticityFloor = 1e-6;

/// Nodal coefficients of the conductivity in the hat-function basis.
struct ConductivityField {
  Vector nodal;
};

/// 1 + contrast at vertices within `radius` of `center`, 1 elsewhere.
ConductivityField nodal_inclusion(const Mesh2D& mesh, const Point& center,
                                  double radius, double contrast);

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Stiffness split into interior (1) and active-boundary (2) index sets;
/// the reference row/column is already removed. A21 is stored explicitly
/// even though it equals A12^T.
struct StiffnessBlocks {
  SparseMatrix A11, A12, A21, A22;
};

/// Integrates grad(phi_i) . grad(phi_j) weighted by the piecewise-linear
/// interpolant of `gamma` (exact per-triangle quadrature: constant gradients
/// times the triangle mean of gamma).
StiffnessBlocks assemble_stiffness(const Mesh2D& mesh, const ConductivityField& gamma);

/// Full stiffness over all vertices (no grounding); constants lie in its
/// kernel, so row sums vanish.
SparseMatrix assemble_full_stiffness(const Mesh2D& mesh, const ConductivityField& gamma);

/// Boundary mass matrix over the full boundary cycle (tridiagonal-cyclic in
/// boundary order).
Matrix boundary_mass_full(const Mesh2D& mesh);

/// Active boundary mass: reference row/column removed.
Matrix boundary_mass(const Mesh2D& mesh);

/// Neumann-to-Dirichlet matrix G = (A22 - A21 A11^{-1} A12)^{-1} Mb on the
/// active boundary space.
Matrix ntd_operator(const StiffnessBlocks& blocks, const Matrix& Mb);

// ---------------------------------------------------------------------------
// Data-space geometry
// ---------------------------------------------------------------------------

/// Trace inner product tr(G1 G2) of two NtD matrices.
double hilbert_schmidt_inner(const Matrix& G1, const Matrix& G2);

/// Norm induced by hilbert_schmidt_inner on NtD-structured matrices,
/// extended to arbitrary matrices as sqrt(tr(A^T Mb A Mb^{-1})) — the
/// Hilbert–Schmidt norm of the boundary operator A represents. Needed e.g.
/// for scaling noise, which has no NtD structure.
double hs_norm(const Matrix& A, const Matrix& Mb);

// ---------------------------------------------------------------------------
// Forward solver and linearization
// ---------------------------------------------------------------------------

/// Factorized Schur-complement pipeline for one (mesh, gamma) pair: exposes
/// the NtD matrix and, when built at the linearization point, directional
/// derivatives of it.
class NtdSolver {
 public:
  NtdSolver(const Mesh2D& mesh, const ConductivityField& gamma);

  const Matrix& G() const { return G_; }
  const Matrix& Mb() const { return Mb_; }
  int n_active() const { return static_cast<int>(G_.rows()); }

  /// dG in the nodal direction dgamma at the gamma this solver was built
  /// with, via differentiating the Schur complement:
  ///   dT = dA22 - dA21 X - (dA21 X)^T + X^T dA11 X,   X = A11^{-1} A12
  ///   dG = -T^{-1} dT G
  Matrix derivative(const Vector& dgamma) const;

 private:
  const Mesh2D& mesh_;
  Matrix X_;   // A11^{-1} A12, dense
  Matrix G_;
  Matrix Mb_;
  Eigen::LLT<Matrix> T_llt_;
};

/// Dense linearization of the parameter-to-NtD map around gamma == 1:
/// columns are vec(dG/dgamma_v), column-major flattening, one column per
/// mesh vertex.
class LinearizedForward {
 public:
  explicit LinearizedForward(const Mesh2D& mesh);

  const Matrix& matrix() const { return F_; }

  /// Unflattened image of one direction.
  Matrix apply(const Vector& dgamma) const;

  int data_dim() const { return static_cast<int>(F_.rows()); }  // n_b^2

 private:
  int n_active_;
  Matrix F_;
};

// ---------------------------------------------------------------------------
// Scenario / synthetic data
// ---------------------------------------------------------------------------

/// Inclusion center path x(t) = base - orbit_radius*(cos 2 pi t, sin 2 pi t).
struct CirclePath {
  Point base{0.4, 0.5};
  double orbit_radius = 0.2;
};

Point path_center(const CirclePath& path, double t);

struct EITScenario {
  int grid_subdivisions = 25;
  int time_samples = 51;  // grid nodes, N + 1
  double inclusion_radius = 0.08;
  double inclusion_contrast = 2.0;
  CirclePath path;
  double noise_fraction = 0.0;
};

void validate_scenario(const EITScenario& scenario);

enum class DataMode { Linearized, Nonlinear };

/// Boundary-operator interpolation: evaluates the piecewise-linear boundary
/// functions of `from` at the active boundary nodes of `to` (grounded on
/// both sides). Returned shape: to.n_active_boundary() x
/// from.n_active_boundary().
Matrix boundary_interpolation(const Mesh2D& from, const Mesh2D& to);

/// Synthetic measurements on the inversion mesh's active boundary space:
/// per sample time either F'(1) applied to (gamma - 1) or the full
/// difference G(gamma) - G(1), computed on `data_mesh` and restricted to
/// `inversion_mesh` by boundary interpolation. Samples are flattened
/// column-major. Noise (when requested) is white Gaussian per entry,
/// rescaled so each sample's perturbation has Hilbert–Schmidt norm equal to
/// noise_fraction times the sample's.
DataSequence simulate_data(const EITScenario& scenario, DataMode mode,
                           const Mesh2D& inversion_mesh, const Mesh2D& data_mesh,
                           std::mt19937_64& noise_rng);

}  // namespace dynreg::eit
