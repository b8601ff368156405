#pragma once

#include <cstddef>
#include <vector>

#include "cle/grid.hpp"
#include "cle/model.hpp"
#include "cle/poisson.hpp"

namespace cle {

/// d/dq_axis on a node grid: central differences inside, second-order
/// one-sided differences on the faces. Exact for quadratics.
std::vector<double> partial_derivative(const GridSpec& grid, const std::vector<double>& values,
                                       std::size_t axis);
VectorFieldGrid gradient(const ScalarFieldGrid& f);
ScalarFieldGrid divergence(const VectorFieldGrid& v);
/// Scalar curl d1 v2 - d2 v1 (2D only).
ScalarFieldGrid scalar_curl(const VectorFieldGrid& v);
/// Vector curl (3D only).
VectorFieldGrid vector_curl(const VectorFieldGrid& v);

/// Samples the drift of `system` at every grid point. Throws DomainError if a
/// point lies outside the chart domain.
VectorFieldGrid sample_field(const SDESystem& system, const GridSpec& grid);

/// max_{mu<nu} |d_nu w_mu - d_mu w_nu| per point: the integrability defect.
ScalarFieldGrid jacobian_symmetry_defect(const VectorFieldGrid& field);

struct HodgeOptions {
  PoissonOptions poisson{1e-12, 0, 0.0};
  /// Harmonic-part quality bound: interior RMS of div and curl must stay
  /// below quality_factor * h^2 * RMS(field).
  double quality_factor = 10.0;
};

struct HodgeDiagnostics {
  double neumann_flux = 0.0;     ///< uniform boundary flux used for phi
  double mean_shift = 0.0;       ///< solvability shift reported by the phi solve
  std::size_t phi_iterations = 0;
  std::size_t stream_iterations = 0;  ///< CG iterations of the 3D vector-potential solves
  double harmonic_div_rms = 0.0;
  double harmonic_curl_rms = 0.0;
  double quality_bound = 0.0;
  bool quality_ok = true;
};

/// field = -grad(phi) + div(f) + harmonic + residual. In 2D the antisymmetric
/// f is carried by one stream function psi with div(f) = (d2 psi, -d1 psi);
/// in 3D by a vector potential (three components) with div(f) = curl(psi).
struct HodgeParts {
  ScalarFieldGrid phi;
  std::vector<ScalarFieldGrid> stream;
  VectorFieldGrid harmonic;
  VectorFieldGrid residual;
  HodgeDiagnostics diagnostics;
};

/// Three-stage decomposition on a node grid (2D or 3D):
///  1. lap(phi) = -div(field), du/dn equal to the uniform flux that makes the
///     Neumann problem compatible, phi mean-normalised;
///  2. r = field + grad(phi); lap(psi) = -curl(r) with psi = 0 on the boundary.
///     In 2D lap is the composition curl(d2, -d1) of the derivative operators
///     (direct sparse solve); in 3D the compact Laplacian per component (CG);
///  3. harmonic = r - solenoidal part; residual = the floating-point closure.
/// A failed harmonic div/curl check clears diagnostics.quality_ok.
HodgeParts decompose(const VectorFieldGrid& field, const HodgeOptions& options = {});

/// -grad(phi).
VectorFieldGrid gradient_part(const HodgeParts& parts);
/// (d2 psi, -d1 psi) in 2D, curl(psi) in 3D.
VectorFieldGrid solenoidal_part(const HodgeParts& parts);
/// -grad(phi) + solenoidal + harmonic + residual. Throws GridMismatchError on
/// inconsistent parts.
VectorFieldGrid reconstruct(const HodgeParts& parts);

struct HarmonicConstancy {
  std::vector<double> mean;  ///< a_i: arithmetic grid mean of each component
  double max_deviation = 0.0;
  /// True when the harmonic part is constant to `rel_tol` of its magnitude,
  /// so that it can be folded into an effective potential.
  bool reduction_applicable = true;
};

HarmonicConstancy harmonic_constancy_report(const VectorFieldGrid& harmonic, double rel_tol = 1e-8);

/// Multilinear interpolation of a node-grid vector field, usable as a drift.
/// Points outside the box are clamped to the nearest face.
DriftFn interpolate_field(const VectorFieldGrid& field);

}  // namespace cle
