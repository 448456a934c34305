//! Distortion-tolerant scrambling of unit vectors.
//!
//! Scrambling quantizes the scaled spherical angles of `x ∈ S^n` to the fine
//! lattice, adds the per-frame random coset `ν`, and wraps the result onto a
//! flat torus in `S^{2n-1}` — producing a codeword of the spherical group
//! code. Descrambling projects a (possibly noisy) received vector back to the
//! torus, removes `ν`, applies the reflection correction for coordinates that
//! left their legal half-range, and inverts the angle map. Small channel
//! perturbations of the codeword yield proportionally small errors on the
//! recovered vector (expansion factor `π/(2ξ_min)`).

use crate::lattice::{CosetVector, LatticeError, SphericalGroupCode};
use crate::sphere_maps::{
    inverse_spherical_angles, spherical_angles, torus_map, torus_project, torus_unmap, BoxPoint,
    SphereMapError, UnitVector,
};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScrambleError {
    #[error(transparent)]
    Sphere(#[from] SphereMapError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Scrambles `x ∈ S^n` into a codeword of `code` on `S^{2n-1}`.
///
/// `nu` must be a reduced coset vector of the quotient (the per-frame secret).
pub fn scramble(
    x: &UnitVector,
    code: &SphericalGroupCode,
    nu: &CosetVector,
) -> Result<UnitVector, ScrambleError> {
    let xi = code.xi();
    let u = spherical_angles(x, xi)?.point;
    let chi = code.quotient().quantize(u.coords())?;
    let enc = code.quotient().add(&chi, nu);
    let point = BoxPoint::wrapped(enc.0, xi);
    Ok(torus_map(&point, xi))
}

/// Descrambles a received vector back to `S^n` using the same `code` and `ν`.
pub fn descramble(
    qhat: &UnitVector,
    code: &SphericalGroupCode,
    nu: &CosetVector,
) -> Result<UnitVector, ScrambleError> {
    let xi = code.xi();
    let projected = torus_project(qhat, xi)?;
    let u = torus_unmap(&projected, xi)?;
    let mut chi = code.quotient().sub(&CosetVector(u.coords().to_vec()), nu);
    reflect_into_half_range(&mut chi.0, xi.components());
    let point = BoxPoint::wrapped(chi.0, xi);
    Ok(inverse_spherical_angles(&point, xi)?)
}

/// Reflects coordinates `1..n-1` back into `[0, πξi)`; the last coordinate
/// keeps its full `[0, 2πξn)` range.
pub(crate) fn reflect_into_half_range(chi: &mut [f64], xi: &[f64]) {
    let n = chi.len();
    for i in 0..n - 1 {
        let half = PI * xi[i];
        if chi[i] >= half {
            chi[i] = 2.0 * half - chi[i];
        }
    }
}
