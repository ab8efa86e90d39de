#include "dynreg/eit.hpp"

#include "dynreg/linalg.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dynreg::eit {

namespace {

// Deterministic jitter source for the unstructured mesh flavor; geometry
// must not depend on any experiment seed.
uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash01(uint64_t a, uint64_t b, uint64_t c) {
  uint64_t h = splitmix64(a * 0x100000001b3ULL + splitmix64(b * 0x1000193ULL + splitmix64(c)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct TriGeom {
  double area;
  Eigen::Matrix<double, 2, 3> grads;  // grad of each hat function, constant
};

TriGeom tri_geom(const Mesh2D& mesh, const std::array<int, 3>& tri) {
  const Point& p0 = mesh.vertices[static_cast<size_t>(tri[0])];
  const Point& p1 = mesh.vertices[static_cast<size_t>(tri[1])];
  const Point& p2 = mesh.vertices[static_cast<size_t>(tri[2])];
  double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p1.y() - p0.y()) * (p2.x() - p0.x());
  if (!(det > 0.0)) {
    raise(ErrorCode::InvalidMeshSpec, "triangle with non-positive orientation");
  }
  TriGeom g;
  g.area = 0.5 * det;
  g.grads.col(0) << (p1.y() - p2.y()) / det, (p2.x() - p1.x()) / det;
  g.grads.col(1) << (p2.y() - p0.y()) / det, (p0.x() - p2.x()) / det;
  g.grads.col(2) << (p0.y() - p1.y()) / det, (p1.x() - p0.x()) / det;
  return g;
}

struct IndexMaps {
  std::vector<int> interior;  // vertex -> interior index or -1
  std::vector<int> active;    // vertex -> active boundary index or -1
  int n_interior = 0;
  int n_active = 0;
};

IndexMaps make_index_maps(const Mesh2D& mesh) {
  IndexMaps maps;
  maps.interior.assign(static_cast<size_t>(mesh.n_vertices()), -1);
  maps.active.assign(static_cast<size_t>(mesh.n_vertices()), -1);
  for (size_t i = 0; i < mesh.interior_vertices.size(); ++i) {
    maps.interior[static_cast<size_t>(mesh.interior_vertices[i])] = static_cast<int>(i);
  }
  int a = 0;
  for (int v : mesh.boundary_vertices) {
    if (v == mesh.reference_boundary_index) continue;
    maps.active[static_cast<size_t>(v)] = a++;
  }
  maps.n_interior = static_cast<int>(mesh.interior_vertices.size());
  maps.n_active = a;
  return maps;
}

struct BlockTriplets {
  std::vector<Eigen::Triplet<double>> a11, a12, a22;
};

// Element-wise assembly classified into interior/active-boundary blocks.
// skip_zero drops triangles whose coefficient mean vanishes (directional
// derivatives have local support).
BlockTriplets block_triplets(const Mesh2D& mesh, const IndexMaps& maps,
                             const Vector& coeff, bool skip_zero) {
  BlockTriplets out;
  for (const auto& tri : mesh.triangles) {
    double mean = (coeff[tri[0]] + coeff[tri[1]] + coeff[tri[2]]) / 3.0;
    if (skip_zero && mean == 0.0) continue;
    TriGeom g = tri_geom(mesh, tri);
    for (int i = 0; i < 3; ++i) {
      int gi = tri[static_cast<size_t>(i)];
      for (int j = 0; j < 3; ++j) {
        int gj = tri[static_cast<size_t>(j)];
        double val = mean * g.area * g.grads.col(i).dot(g.grads.col(j));
        int ii = maps.interior[static_cast<size_t>(gi)];
        int ij = maps.interior[static_cast<size_t>(gj)];
        int ai = maps.active[static_cast<size_t>(gi)];
        int aj = maps.active[static_cast<size_t>(gj)];
        if (ii >= 0 && ij >= 0) {
          out.a11.emplace_back(ii, ij, val);
        } else if (ii >= 0 && aj >= 0) {
          out.a12.emplace_back(ii, aj, val);
        } else if (ai >= 0 && aj >= 0) {
          out.a22.emplace_back(ai, aj, val);
        }
        // rows/columns touching the reference vertex are dropped; the
        // boundary-interior mirror of a12 is implied by symmetry
      }
    }
  }
  return out;
}

void check_ellipticity(const Mesh2D& mesh, const ConductivityField& gamma) {
  if (gamma.nodal.size() != mesh.n_vertices()) {
    raise(ErrorCode::DimensionMismatch, "conductivity nodal vector does not match vertex count");
  }
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!(gamma.nodal[v] >= kEllipticityFloor)) {
      std::ostringstream msg;
      msg << "conductivity at vertex " << v << " is " << gamma.nodal[v]
          << ", below the ellipticity floor " << kEllipticityFloor;
      raise(ErrorCode::EllipticityViolation, msg.str());
    }
  }
}

}  // namespace

double Mesh2D::arclength(const Point& p) {
  const double eps = 1e-12;
  double x = p.x();
  double y = p.y();
  if (std::abs(y) <= eps && x < 1.0 - eps) return x;
  if (std::abs(x - 1.0) <= eps && y < 1.0 - eps) return 1.0 + y;
  if (std::abs(y - 1.0) <= eps && x > eps) return 3.0 - x;
  if (std::abs(x) <= eps && y > eps) return 4.0 - y;
  raise(ErrorCode::InvalidMeshSpec, "point is not on the unit-square boundary");
}

Mesh2D build_mesh(int subdivisions, MeshKind kind) {
  if (subdivisions < 2) {
    raise(ErrorCode::InvalidMeshSpec, "subdivisions must be >= 2");
  }
  const int n = subdivisions;
  Mesh2D mesh;
  mesh.vertices.reserve(static_cast<size_t>((n + 1) * (n + 1)));

  auto vid = [n](int ix, int iy) { return iy * (n + 1) + ix; };
  const double h = 1.0 / n;
  for (int iy = 0; iy <= n; ++iy) {
    for (int ix = 0; ix <= n; ++ix) {
      double x = static_cast<double>(ix) / n;
      double y = static_cast<double>(iy) / n;
      bool boundary = ix == 0 || ix == n || iy == 0 || iy == n;
      if (kind == MeshKind::Unstructured && !boundary) {
        x += (2.0 * hash01(static_cast<uint64_t>(n), static_cast<uint64_t>(ix),
                           static_cast<uint64_t>(2 * iy)) -
              1.0) *
             0.15 * h;
        y += (2.0 * hash01(static_cast<uint64_t>(n), static_cast<uint64_t>(ix),
                           static_cast<uint64_t>(2 * iy + 1)) -
              1.0) *
             0.15 * h;
      }
      mesh.vertices.emplace_back(x, y);
    }
  }

  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      int v00 = vid(ix, iy), v10 = vid(ix + 1, iy);
      int v01 = vid(ix, iy + 1), v11 = vid(ix + 1, iy + 1);
      bool main_diagonal = kind == MeshKind::Structured || ((ix + iy) % 2 == 0);
      if (main_diagonal) {
        mesh.triangles.push_back({v00, v10, v11});
        mesh.triangles.push_back({v00, v11, v01});
      } else {
        mesh.triangles.push_back({v00, v10, v01});
        mesh.triangles.push_back({v10, v11, v01});
      }
    }
  }

  // boundary cycle, counterclockwise from (0,0)
  for (int ix = 0; ix <= n; ++ix) mesh.boundary_vertices.push_back(vid(ix, 0));
  for (int iy = 1; iy <= n; ++iy) mesh.boundary_vertices.push_back(vid(n, iy));
  for (int ix = n - 1; ix >= 0; --ix) mesh.boundary_vertices.push_back(vid(ix, n));
  for (int iy = n - 1; iy >= 1; --iy) mesh.boundary_vertices.push_back(vid(0, iy));
  mesh.reference_boundary_index = mesh.boundary_vertices.front();

  std::vector<bool> is_boundary(static_cast<size_t>(mesh.n_vertices()), false);
  for (int v : mesh.boundary_vertices) is_boundary[static_cast<size_t>(v)] = true;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (!is_boundary[static_cast<size_t>(v)]) mesh.interior_vertices.push_back(v);
  }

  // orientation sanity on the jittered flavor
  for (const auto& tri : mesh.triangles) (void)tri_geom(mesh, tri);
  return mesh;
}

ConductivityField nodal_inclusion(const Mesh2D& mesh, const Point& center,
                                  double radius, double contrast) {
  ConductivityField field;
  field.nodal = Vector::Ones(mesh.n_vertices());
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if ((mesh.vertices[static_cast<size_t>(v)] - center).norm() <= radius) {
      field.nodal[v] = 1.0 + contrast;
    }
  }
  return field;
}

StiffnessBlocks assemble_stiffness(const Mesh2D& mesh, const ConductivityField& gamma) {
  check_ellipticity(mesh, gamma);
  IndexMaps maps = make_index_maps(mesh);
  BlockTriplets t = block_triplets(mesh, maps, gamma.nodal, false);

  StiffnessBlocks blocks;
  blocks.A11.resize(maps.n_interior, maps.n_interior);
  blocks.A12.resize(maps.n_interior, maps.n_active);
  blocks.A22.resize(maps.n_active, maps.n_active);
  blocks.A11.setFromTriplets(t.a11.begin(), t.a11.end());
  blocks.A12.setFromTriplets(t.a12.begin(), t.a12.end());
  blocks.A22.setFromTriplets(t.a22.begin(), t.a22.end());
  blocks.A21 = SparseMatrix(blocks.A12.transpose());
  return blocks;
}

SparseMatrix assemble_full_stiffness(const Mesh2D& mesh, const ConductivityField& gamma) {
  check_ellipticity(mesh, gamma);
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& tri : mesh.triangles) {
    double mean = (gamma.nodal[tri[0]] + gamma.nodal[tri[1]] + gamma.nodal[tri[2]]) / 3.0;
    TriGeom g = tri_geom(mesh, tri);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trip.emplace_back(tri[static_cast<size_t>(i)], tri[static_cast<size_t>(j)],
                          mean * g.area * g.grads.col(i).dot(g.grads.col(j)));
      }
    }
  }
  SparseMatrix A(mesh.n_vertices(), mesh.n_vertices());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

Matrix boundary_mass_full(const Mesh2D& mesh) {
  const int nb = mesh.n_boundary();
  Matrix Mb = Matrix::Zero(nb, nb);
  for (int j = 0; j < nb; ++j) {
    int jn = (j + 1) % nb;
    const Point& a = mesh.vertices[static_cast<size_t>(mesh.boundary_vertices[static_cast<size_t>(j)])];
    const Point& b = mesh.vertices[static_cast<size_t>(mesh.boundary_vertices[static_cast<size_t>(jn)])];
    double len = (b - a).norm();
    Mb(j, j) += len / 3.0;
    Mb(jn, jn) += len / 3.0;
    Mb(j, jn) += len / 6.0;
    Mb(jn, j) += len / 6.0;
  }
  return Mb;
}

Matrix boundary_mass(const Mesh2D& mesh) {
  Matrix full = boundary_mass_full(mesh);
  // the reference vertex sits at position 0 of the cycle
  const int nb = mesh.n_boundary();
  int ref_pos = 0;
  for (int j = 0; j < nb; ++j) {
    if (mesh.boundary_vertices[static_cast<size_t>(j)] == mesh.reference_boundary_index) {
      ref_pos = j;
      break;
    }
  }
  Matrix active(nb - 1, nb - 1);
  int r = 0;
  for (int i = 0; i < nb; ++i) {
    if (i == ref_pos) continue;
    int c = 0;
    for (int j = 0; j < nb; ++j) {
      if (j == ref_pos) continue;
      active(r, c++) = full(i, j);
    }
    ++r;
  }
  return active;
}

Matrix ntd_operator(const StiffnessBlocks& blocks, const Matrix& Mb) {
  const auto n_active = blocks.A22.rows();
  if (Mb.rows() != n_active || Mb.cols() != n_active) {
    raise(ErrorCode::DimensionMismatch, "boundary mass does not match active boundary size");
  }
  Eigen::SimplicialLDLT<SparseMatrix> a11(blocks.A11);
  if (a11.info() != Eigen::Success) {
    raise(ErrorCode::SingularSchurComplement, "interior stiffness block is not factorizable");
  }
  Matrix X = a11.solve(Matrix(blocks.A12));
  Matrix T = linalg::symmetrized(Matrix(Matrix(blocks.A22) - Matrix(blocks.A21) * X));
  Eigen::LLT<Matrix> llt(T);
  if (llt.info() != Eigen::Success) {
    raise(ErrorCode::SingularSchurComplement, "Schur complement lost positive definiteness");
  }
  return llt.solve(Mb);
}

double hilbert_schmidt_inner(const Matrix& G1, const Matrix& G2) {
  if (G1.rows() != G2.rows() || G1.cols() != G2.cols() || G1.rows() != G1.cols()) {
    raise(ErrorCode::DimensionMismatch, "trace inner product needs equal square matrices");
  }
  // pairwise accumulation keeps tr(G1 G2) == tr(G2 G1) bitwise
  const int n = static_cast<int>(G1.rows());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += G1(i, i) * G2(i, i);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      acc += G1(i, j) * G2(j, i) + G1(j, i) * G2(i, j);
    }
  }
  return acc;
}

double hs_norm(const Matrix& A, const Matrix& Mb) {
  if (A.rows() != Mb.rows() || A.cols() != Mb.cols()) {
    raise(ErrorCode::DimensionMismatch, "hs_norm: operator and mass matrix differ in size");
  }
  Eigen::LLT<Matrix> llt(Mb);
  if (llt.info() != Eigen::Success) {
    raise(ErrorCode::SingularSchurComplement, "boundary mass is not positive definite");
  }
  // tr(A^T Mb A Mb^{-1}) with W = Mb^{-1} A^T Mb
  Matrix W = llt.solve(A.transpose() * Mb);
  double sq = (A.array() * W.transpose().array()).sum();
  return std::sqrt(std::max(0.0, sq));
}

NtdSolver::NtdSolver(const Mesh2D& mesh, const ConductivityField& gamma) : mesh_(mesh) {
  check_ellipticity(mesh, gamma);
  StiffnessBlocks blocks = assemble_stiffness(mesh, gamma);
  Eigen::SimplicialLDLT<SparseMatrix> a11(blocks.A11);
  if (a11.info() != Eigen::Success) {
    raise(ErrorCode::SingularSchurComplement, "interior stiffness block is not factorizable");
  }
  X_ = a11.solve(Matrix(blocks.A12));
  Matrix T = linalg::symmetrized(Matrix(Matrix(blocks.A22) - Matrix(blocks.A21) * X_));
  T_llt_.compute(T);
  if (T_llt_.info() != Eigen::Success) {
    raise(ErrorCode::SingularSchurComplement, "Schur complement lost positive definiteness");
  }
  Mb_ = boundary_mass(mesh);
  G_ = T_llt_.solve(Mb_);
}

Matrix NtdSolver::derivative(const Vector& dgamma) const {
  if (dgamma.size() != mesh_.n_vertices()) {
    raise(ErrorCode::DimensionMismatch, "direction vector does not match vertex count");
  }
  IndexMaps maps = make_index_maps(mesh_);
  BlockTriplets t = block_triplets(mesh_, maps, dgamma, true);

  const int nb = maps.n_active;
  Matrix dT = Matrix::Zero(nb, nb);
  for (const auto& e : t.a22) dT(e.row(), e.col()) += e.value();

  Matrix P = Matrix::Zero(nb, nb);  // dA21 X, built row-wise from dA12
  for (const auto& e : t.a12) P.row(e.col()) += e.value() * X_.row(e.row());
  dT -= P + P.transpose();

  for (const auto& e : t.a11) {
    dT.noalias() += e.value() * X_.row(e.row()).transpose() * X_.row(e.col());
  }

  return -T_llt_.solve(dT * G_);
}

LinearizedForward::LinearizedForward(const Mesh2D& mesh) {
  ConductivityField ones{Vector::Ones(mesh.n_vertices())};
  NtdSolver base(mesh, ones);
  n_active_ = base.n_active();
  const int d = n_active_ * n_active_;
  F_.resize(d, mesh.n_vertices());
  Vector dir = Vector::Zero(mesh.n_vertices());
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    dir[v] = 1.0;
    Matrix dG = base.derivative(dir);
    F_.col(v) = Eigen::Map<const Vector>(dG.data(), d);
    dir[v] = 0.0;
  }
}

Matrix LinearizedForward::apply(const Vector& dgamma) const {
  if (dgamma.size() != F_.cols()) {
    raise(ErrorCode::DimensionMismatch, "direction vector does not match vertex count");
  }
  Vector flat = F_ * dgamma;
  return Eigen::Map<const Matrix>(flat.data(), n_active_, n_active_);
}

Point path_center(const CirclePath& path, double t) {
  return path.base - path.orbit_radius * Point(std::cos(2.0 * M_PI * t),
                                               std::sin(2.0 * M_PI * t));
}

void validate_scenario(const EITScenario& scenario) {
  if (scenario.grid_subdivisions < 2) {
    raise(ErrorCode::InvalidScenario, "grid_subdivisions must be >= 2");
  }
  if (scenario.time_samples < 2) {
    raise(ErrorCode::InvalidScenario, "time_samples must be >= 2");
  }
  if (!(scenario.inclusion_radius > 0.0)) {
    raise(ErrorCode::InvalidScenario, "inclusion_radius must be > 0");
  }
  if (scenario.noise_fraction < 0.0 || scenario.noise_fraction >= 1.0) {
    raise(ErrorCode::InvalidScenario, "noise_fraction must lie in [0, 1)");
  }
  if (!std::isfinite(scenario.inclusion_contrast)) {
    raise(ErrorCode::InvalidScenario, "inclusion_contrast must be finite");
  }
}

Matrix boundary_interpolation(const Mesh2D& from, const Mesh2D& to) {
  const int nb_from = from.n_boundary();
  std::vector<double> s_from(static_cast<size_t>(nb_from));
  for (int j = 0; j < nb_from; ++j) {
    s_from[static_cast<size_t>(j)] =
        Mesh2D::arclength(from.vertices[static_cast<size_t>(from.boundary_vertices[static_cast<size_t>(j)])]);
  }

  int ref_pos = 0;
  for (int j = 0; j < nb_from; ++j) {
    if (from.boundary_vertices[static_cast<size_t>(j)] == from.reference_boundary_index) {
      ref_pos = j;
      break;
    }
  }

  Matrix R = Matrix::Zero(to.n_active_boundary(), from.n_active_boundary());
  int row = 0;
  for (int j = 0; j < to.n_boundary(); ++j) {
    int v = to.boundary_vertices[static_cast<size_t>(j)];
    if (v == to.reference_boundary_index) continue;
    double s = Mesh2D::arclength(to.vertices[static_cast<size_t>(v)]);

    // containing arc in the (sorted, cyclic) source nodes
    auto it = std::upper_bound(s_from.begin(), s_from.end(), s);
    int hi = static_cast<int>(it - s_from.begin()) % nb_from;
    int lo = (hi + nb_from - 1) % nb_from;
    double seg = s_from[static_cast<size_t>(hi)] - s_from[static_cast<size_t>(lo)];
    if (seg <= 0.0) seg += 4.0;
    double w = (s - s_from[static_cast<size_t>(lo)]) / seg;

    // weights land on active source columns only (grounded reference drops)
    auto add = [&](int pos, double weight) {
      if (pos == ref_pos) return;
      R(row, pos < ref_pos ? pos : pos - 1) += weight;
    };
    add(lo, 1.0 - w);
    add(hi, w);
    ++row;
  }
  return R;
}

DataSequence simulate_data(const EITScenario& scenario, DataMode mode,
                           const Mesh2D& inversion_mesh, const Mesh2D& data_mesh,
                           std::mt19937_64& noise_rng) {
  validate_scenario(scenario);
  if (data_mesh.n_vertices() <= inversion_mesh.n_vertices()) {
    std::fprintf(stderr,
                 "warning: data mesh (%d vertices) is not finer than the inversion mesh "
                 "(%d vertices); synthetic data may commit an inverse crime\n",
                 data_mesh.n_vertices(), inversion_mesh.n_vertices());
  }

  const int N = scenario.time_samples - 1;
  TimeGrid grid(1.0, N);

  ConductivityField ones{Vector::Ones(data_mesh.n_vertices())};
  NtdSolver base(data_mesh, ones);

  Matrix R = boundary_interpolation(data_mesh, inversion_mesh);
  Matrix E = boundary_interpolation(inversion_mesh, data_mesh);
  Matrix Mb_inv = boundary_mass(inversion_mesh);
  const int nb = inversion_mesh.n_active_boundary();

  DataSequence data;
  data.noise_level = scenario.noise_fraction;
  data.samples.reserve(static_cast<size_t>(N + 1));
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int k = 0; k <= N; ++k) {
    double t = grid.node(k);
    ConductivityField gamma = nodal_inclusion(data_mesh, path_center(scenario.path, t),
                                              scenario.inclusion_radius,
                                              scenario.inclusion_contrast);
    Matrix Yf;
    if (mode == DataMode::Linearized) {
      Yf = base.derivative(gamma.nodal - ones.nodal);
    } else {
      NtdSolver perturbed(data_mesh, gamma);
      Yf = perturbed.G() - base.G();
    }
    Matrix Y = R * Yf * E;

    if (scenario.noise_fraction > 0.0) {
      double ynorm = hs_norm(Y, Mb_inv);
      if (ynorm > 0.0) {
        Matrix noise(nb, nb);
        for (int i = 0; i < nb; ++i)
          for (int j = 0; j < nb; ++j) noise(i, j) = gauss(noise_rng);
        double nnorm = hs_norm(noise, Mb_inv);
        Y += (scenario.noise_fraction * ynorm / nnorm) * noise;
      }
    }

    data.samples.push_back(Eigen::Map<const Vector>(Y.data(), nb * nb));
  }
  return data;
}

}  // namespace dynreg::eit
