//! Hypersphere ↔ box ↔ flat-torus coordinate machinery.
//!
//! A unit vector `x` on `S^n` is mapped to scaled spherical angles
//! `γ_ξ(x) = [ξ1·φ1, ..., ξn·φn]` inside the box `P_ξ = ∏ [0, 2πξi)`,
//! and a box point is wrapped onto a flat torus on `S^{2n-1}` by
//! `Φ_ξ(u) = [ξ1 cos(u1/ξ1), ξ1 sin(u1/ξ1), ..., ξn cos(un/ξn), ξn sin(un/ξn)]`.
//! Both maps preserve Euclidean distance up to known expansion factors,
//! which is what makes the scrambling layer tolerant to channel noise.

use std::f64::consts::PI;
use thiserror::Error;

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Error, PartialEq)]
pub enum SphereMapError {
    #[error("foliation profile must have positive components (got {0})")]
    NonPositiveComponent(f64),
    #[error("foliation profile must have unit norm (got {0})")]
    NotUnitNorm(f64),
    #[error("vector of dim {dim} is not on the unit sphere (norm {norm})")]
    NotUnit { dim: usize, norm: f64 },
    #[error("box coordinate {index} = {value} outside [0, {limit})")]
    DomainExceeded {
        index: usize,
        value: f64,
        limit: f64,
    },
    #[error("coordinate pair {index} has norm {norm}, expected {expected}")]
    NotOnTorus {
        index: usize,
        norm: f64,
        expected: f64,
    },
    #[error("coordinate pair {0} has near-zero norm, projection undefined")]
    ZeroPair(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// The foliation vector `ξ`: a unit vector with strictly positive components
/// that selects one flat torus of the foliation of `S^{2n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoliationProfile {
    xi: Vec<f64>,
    xi_min: f64,
}

impl FoliationProfile {
    pub fn new(xi: Vec<f64>) -> Result<Self, SphereMapError> {
        if let Some(&bad) = xi.iter().find(|&&v| v <= 0.0) {
            return Err(SphereMapError::NonPositiveComponent(bad));
        }
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(SphereMapError::NotUnitNorm(norm));
        }
        let xi_min = xi.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self { xi, xi_min })
    }

    /// The uniform profile `ξ = [1/√n, ..., 1/√n]`.
    pub fn uniform(n: usize) -> Self {
        let v = 1.0 / (n as f64).sqrt();
        Self {
            xi: vec![v; n],
            xi_min: v,
        }
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.xi
    }

    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    /// Side lengths `2πξi` of the box `P_ξ`.
    pub fn box_sides(&self) -> Vec<f64> {
        self.xi.iter().map(|&x| TAU * x).collect()
    }
}

/// A point on the unit sphere `S^{m-1}` embedded in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    coords: Vec<f64>,
}

impl UnitVector {
    /// Wraps coordinates, checking unit norm within 1e-9.
    pub fn new(coords: Vec<f64>) -> Result<Self, SphereMapError> {
        let norm = coords.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SphereMapError::NotUnit {
                dim: coords.len(),
                norm,
            });
        }
        Ok(Self { coords })
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self, SphereMapError> {
        let norm = coords.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-30 {
            return Err(SphereMapError::NotUnit {
                dim: coords.len(),
                norm,
            });
        }
        for c in coords.iter_mut() {
            *c /= norm;
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn distance(&self, other: &UnitVector) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A point of the box `P_ξ = ∏ [0, 2πξi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPoint {
    coords: Vec<f64>,
}

impl BoxPoint {
    /// Accepts coordinates already inside `P_ξ`.
    pub fn new(coords: Vec<f64>, xi: &FoliationProfile) -> Result<Self, SphereMapError> {
        if coords.len() != xi.dim() {
            return Err(SphereMapError::DimensionMismatch {
                expected: xi.dim(),
                got: coords.len(),
            });
        }
        for (i, (&c, &x)) in coords.iter().zip(xi.components()).enumerate() {
            let limit = TAU * x;
            if !(0.0..limit).contains(&c) {
                return Err(SphereMapError::DomainExceeded {
                    index: i,
                    value: c,
                    limit,
                });
            }
        }
        Ok(Self { coords })
    }

    /// Wraps arbitrary coordinates into `P_ξ` componentwise.
    pub fn wrapped(coords: Vec<f64>, xi: &FoliationProfile) -> Self {
        let coords = coords
            .iter()
            .zip(xi.components())
            .map(|(&c, &x)| wrap(c, TAU * x))
            .collect();
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn distance(&self, other: &BoxPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn wrap(v: f64, period: f64) -> f64 {
    let mut r = v % period;
    if r < 0.0 {
        r += period;
    }
    // the modulo of a tiny negative value can land exactly on the period
    if r >= period {
        r = 0.0;
    }
    r
}

/// Result of extracting spherical angles; `pole_degenerate` is set when some
/// `sin(φi) = 0` makes the remaining angles arbitrary (they are then zeroed).
#[derive(Debug, Clone)]
pub struct SphericalAngles {
    pub point: BoxPoint,
    pub pole_degenerate: bool,
}

/// `γ_ξ(x)`: scaled spherical coordinates of `x ∈ S^n` (n + 1 ambient coords).
///
/// `φ1..φ_{n-1} ∈ [0, π)`, `φn ∈ [0, 2π)`; when a pole is hit all later
/// angles are set to 0 and the degeneracy flag raised.
pub fn spherical_angles(
    x: &UnitVector,
    xi: &FoliationProfile,
) -> Result<SphericalAngles, SphereMapError> {
    let n = xi.dim();
    if x.dim() != n + 1 {
        return Err(SphereMapError::DimensionMismatch {
            expected: n + 1,
            got: x.dim(),
        });
    }
    let c = x.coords();
    let mut angles = vec![0.0f64; n];
    let mut degenerate = false;
    // tail[i] = norm of (c[i+1], ..., c[n])
    for i in 0..n - 1 {
        let tail = c[i + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if tail < 1e-15 {
            degenerate = true;
            // remaining angles stay 0
            angles[i] = if c[i] >= 0.0 { 0.0 } else { PI.next_down() };
            break;
        }
        angles[i] = tail.atan2(c[i]); // in (0, π)
        if angles[i] >= PI {
            angles[i] = PI.next_down();
        }
    }
    if !degenerate {
        let last = wrap(c[n].atan2(c[n - 1]), TAU);
        angles[n - 1] = last;
    }
    let coords: Vec<f64> = angles
        .iter()
        .zip(xi.components())
        .map(|(&a, &x)| a * x)
        .collect();
    Ok(SphericalAngles {
        point: BoxPoint::wrapped(coords, xi),
        pole_degenerate: degenerate,
    })
}

/// `γ_ξ^{-1}(u)`: reconstructs the unit vector on `S^n` from scaled angles.
///
/// Requires `u` in the restricted domain `∏ [0, πξi) × [0, 2πξn)`.
pub fn inverse_spherical_angles(
    u: &BoxPoint,
    xi: &FoliationProfile,
) -> Result<UnitVector, SphereMapError> {
    let n = xi.dim();
    if u.dim() != n {
        return Err(SphereMapError::DimensionMismatch {
            expected: n,
            got: u.dim(),
        });
    }
    for (i, (&c, &x)) in u.coords().iter().zip(xi.components()).enumerate() {
        let limit = TAU * x;
        if !(0.0..limit).contains(&c) {
            return Err(SphereMapError::DomainExceeded {
                index: i,
                value: c,
                limit,
            });
        }
    }
    let angles: Vec<f64> = u
        .coords()
        .iter()
        .zip(xi.components())
        .map(|(&c, &x)| c / x)
        .collect();
    let mut coords = vec![0.0f64; n + 1];
    let mut sin_prod = 1.0;
    for i in 0..n {
        coords[i] = sin_prod * angles[i].cos();
        sin_prod *= angles[i].sin();
    }
    coords[n] = sin_prod;
    UnitVector::normalized(coords)
}

/// `Φ_ξ(u)`: wraps a box point onto the flat torus on `S^{2n-1}`.
pub fn torus_map(u: &BoxPoint, xi: &FoliationProfile) -> UnitVector {
    let mut coords = Vec::with_capacity(2 * xi.dim());
    for (&c, &x) in u.coords().iter().zip(xi.components()) {
        let a = c / x;
        coords.push(x * a.cos());
        coords.push(x * a.sin());
    }
    UnitVector { coords }
}

/// `Φ_ξ^{-1}(p)`: recovers the box point from a vector on the flat torus.
///
/// Each coordinate pair must have norm `ξi` within a 1e-6 relative tolerance.
pub fn torus_unmap(p: &UnitVector, xi: &FoliationProfile) -> Result<BoxPoint, SphereMapError> {
    let n = xi.dim();
    if p.dim() != 2 * n {
        return Err(SphereMapError::DimensionMismatch {
            expected: 2 * n,
            got: p.dim(),
        });
    }
    let c = p.coords();
    let mut coords = Vec::with_capacity(n);
    for (i, &x) in xi.components().iter().enumerate() {
        let (re, im) = (c[2 * i], c[2 * i + 1]);
        let norm = (re * re + im * im).sqrt();
        if (norm - x).abs() > 1e-6 * x.max(1.0) {
            return Err(SphereMapError::NotOnTorus {
                index: i,
                norm,
                expected: x,
            });
        }
        coords.push(x * wrap(im.atan2(re), TAU));
    }
    Ok(BoxPoint::wrapped(coords, xi))
}

/// Projects a noisy received vector onto the flat torus of `ξ` by rescaling
/// each coordinate pair to its circle radius.
pub fn torus_project(
    qhat: &UnitVector,
    xi: &FoliationProfile,
) -> Result<UnitVector, SphereMapError> {
    let n = xi.dim();
    if qhat.dim() != 2 * n {
        return Err(SphereMapError::DimensionMismatch {
            expected: 2 * n,
            got: qhat.dim(),
        });
    }
    let c = qhat.coords();
    let mut coords = Vec::with_capacity(2 * n);
    for (i, &x) in xi.components().iter().enumerate() {
        let (re, im) = (c[2 * i], c[2 * i + 1]);
        let norm = (re * re + im * im).sqrt();
        if norm < 1e-30 {
            return Err(SphereMapError::ZeroPair(i));
        }
        coords.push(x * re / norm);
        coords.push(x * im / norm);
    }
    Ok(UnitVector { coords })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng, dim: usize) -> UnitVector {
        loop {
            let v: Vec<f64> = (0..dim)
                .map(|_| {
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..TAU);
                    (-2.0 * u1.ln()).sqrt() * u2.cos()
                })
                .collect();
            if let Ok(u) = UnitVector::normalized(v) {
                return u;
            }
        }
    }

    fn random_box_restricted(rng: &mut impl Rng, xi: &FoliationProfile) -> BoxPoint {
        // restricted domain of the inverse map
        let n = xi.dim();
        let coords: Vec<f64> = xi
            .components()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == n - 1 {
                    rng.gen_range(0.0..TAU * x)
                } else {
                    rng.gen_range(0.0..PI * x)
                }
            })
            .collect();
        BoxPoint::new(coords, xi).unwrap()
    }

    #[test]
    fn north_pole_maps_to_zero() {
        let xi = FoliationProfile::uniform(8);
        let mut c = vec![0.0; 9];
        c[0] = 1.0;
        let x = UnitVector::new(c).unwrap();
        let out = spherical_angles(&x, &xi).unwrap();
        assert!(out.pole_degenerate);
        assert!(out.point.coords().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn axis_point_has_single_right_angle() {
        let xi = FoliationProfile::uniform(8);
        let mut c = vec![0.0; 9];
        c[1] = 1.0;
        let x = UnitVector::new(c).unwrap();
        let out = spherical_angles(&x, &xi).unwrap();
        let expected = xi.components()[0] * PI / 2.0;
        assert_abs_diff_eq!(out.point.coords()[0], expected, epsilon = 1e-12);
        for &v in &out.point.coords()[1..] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn spherical_angle_round_trip() {
        let xi = FoliationProfile::uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = random_unit(&mut rng, 9);
            let angles = spherical_angles(&x, &xi).unwrap();
            let back = inverse_spherical_angles(&angles.point, &xi).unwrap();
            assert!(x.distance(&back) < 1e-9, "round trip failed");
        }
    }

    #[test]
    fn inverse_output_is_unit() {
        let xi = FoliationProfile::uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let u = random_box_restricted(&mut rng, &xi);
            let x = inverse_spherical_angles(&u, &xi).unwrap();
            let norm: f64 = x.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_contraction_bound() {
        // ‖γ⁻¹(u)−γ⁻¹(v)‖ ≤ ‖u−v‖/ξ_min on the restricted domain
        let xi = FoliationProfile::uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let u = random_box_restricted(&mut rng, &xi);
            let v = random_box_restricted(&mut rng, &xi);
            let xu = inverse_spherical_angles(&u, &xi).unwrap();
            let xv = inverse_spherical_angles(&v, &xi).unwrap();
            assert!(xu.distance(&xv) <= u.distance(&v) / xi.xi_min() + 1e-9);
        }
    }

    #[test]
    fn torus_map_unit_norm_and_sigma() {
        let xi = FoliationProfile::uniform(8);
        let zero = BoxPoint::new(vec![0.0; 8], &xi).unwrap();
        let sigma = torus_map(&zero, &xi);
        for (i, &x) in xi.components().iter().enumerate() {
            assert_abs_diff_eq!(sigma.coords()[2 * i], x, epsilon = 1e-15);
            assert_abs_diff_eq!(sigma.coords()[2 * i + 1], 0.0, epsilon = 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let coords: Vec<f64> = xi
                .components()
                .iter()
                .map(|&x| rng.gen_range(0.0..TAU * x))
                .collect();
            let u = BoxPoint::new(coords, &xi).unwrap();
            let p = torus_map(&u, &xi);
            let norm: f64 = p.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn torus_map_distance_bounds() {
        // (2/π)‖u−v‖ ≤ ‖Φ(u)−Φ(v)‖ ≤ ‖u−v‖ when ‖u−v‖ ≤ ξ_min
        let xi = FoliationProfile::uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tested = 0;
        while tested < 10_000 {
            let base: Vec<f64> = xi
                .components()
                .iter()
                .map(|&x| rng.gen_range(0.0..TAU * x))
                .collect();
            let off: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let other: Vec<f64> = base.iter().zip(&off).map(|(&b, &o)| b + o).collect();
            if other
                .iter()
                .zip(xi.components())
                .any(|(&c, &x)| !(0.0..TAU * x).contains(&c))
            {
                continue;
            }
            let u = BoxPoint::new(base, &xi).unwrap();
            let v = BoxPoint::new(other, &xi).unwrap();
            let duv = u.distance(&v);
            if duv > xi.xi_min() {
                continue;
            }
            let d = torus_map(&u, &xi).distance(&torus_map(&v, &xi));
            assert!(d <= duv + 1e-9);
            assert!(d >= 2.0 / PI * duv - 1e-9);
            tested += 1;
        }
    }

    #[test]
    fn composition_bound() {
        // Eq-style composition: ‖γ⁻¹(u)−γ⁻¹(v)‖ ≤ (π/2ξ_min)·‖Φ(u)−Φ(v)‖
        let xi = FoliationProfile::uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut tested = 0;
        while tested < 10_000 {
            let u = random_box_restricted(&mut rng, &xi);
            let off: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.05..0.05)).collect();
            let other: Vec<f64> = u.coords().iter().zip(&off).map(|(&b, &o)| b + o).collect();
            let n = xi.dim();
            let ok = other.iter().zip(xi.components()).enumerate().all(|(i, (&c, &x))| {
                let lim = if i == n - 1 { TAU * x } else { PI * x };
                (0.0..lim).contains(&c)
            });
            if !ok {
                continue;
            }
            let v = BoxPoint::new(other, &xi).unwrap();
            if u.distance(&v) > xi.xi_min() {
                continue;
            }
            let lhs = inverse_spherical_angles(&u, &xi)
                .unwrap()
                .distance(&inverse_spherical_angles(&v, &xi).unwrap());
            let rhs = torus_map(&u, &xi).distance(&torus_map(&v, &xi));
            assert!(lhs <= PI / (2.0 * xi.xi_min()) * rhs + 1e-9);
            tested += 1;
        }
    }

    #[test]
    fn torus_unmap_round_trip_and_wrap_boundary() {
        let xi = FoliationProfile::uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let coords: Vec<f64> = xi
                .components()
                .iter()
                .map(|&x| rng.gen_range(0.0..TAU * x))
                .collect();
            let u = BoxPoint::new(coords, &xi).unwrap();
            let back = torus_unmap(&torus_map(&u, &xi), &xi).unwrap();
            assert!(u.distance(&back) < 1e-9);
        }
        // boundary probe just below the wrap point
        let x0 = xi.components()[0];
        let mut coords = vec![0.0; 8];
        coords[0] = TAU * x0 - 1e-12;
        let u = BoxPoint::new(coords, &xi).unwrap();
        let back = torus_unmap(&torus_map(&u, &xi), &xi).unwrap();
        let d0 = (back.coords()[0] - u.coords()[0]).abs();
        let wrapped = (back.coords()[0] - (u.coords()[0] - TAU * x0)).abs();
        assert!(d0 < 1e-9 || wrapped < 1e-9);
    }

    #[test]
    fn torus_project_idempotent_and_local() {
        let xi = FoliationProfile::uniform(8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let coords: Vec<f64> = xi
                .components()
                .iter()
                .map(|&x| rng.gen_range(0.0..TAU * x))
                .collect();
            let u = BoxPoint::new(coords, &xi).unwrap();
            let p = torus_map(&u, &xi);
            let proj = torus_project(&p, &xi).unwrap();
            assert!(p.distance(&proj) < 1e-12);

            // small perturbation projects back close to p
            let eps = 1e-3;
            let noisy: Vec<f64> = p
                .coords()
                .iter()
                .map(|&c| c + rng.gen_range(-eps..eps))
                .collect();
            let qhat = UnitVector { coords: noisy };
            let proj = torus_project(&qhat, &xi).unwrap();
            assert!(p.distance(&proj) < 3.0 * eps * (8.0f64).sqrt());
        }
    }

    #[test]
    fn torus_project_wrong_side_flip() {
        // noise exceeding ξ_min across a pair flips the projected angle by ≈ π
        let xi = FoliationProfile::uniform(8);
        let x0 = xi.components()[0];
        let u = BoxPoint::new(vec![0.0; 8], &xi).unwrap();
        let p = torus_map(&u, &xi); // pair 0 at (ξ, 0)
        let mut noisy = p.coords().to_vec();
        // push pair 0 past the circle centre to the opposite side
        noisy[0] = -1.5 * x0;
        let qhat = UnitVector { coords: noisy };
        let proj = torus_project(&qhat, &xi).unwrap();
        let angle = proj.coords()[1].atan2(proj.coords()[0]);
        assert!((angle.abs() - PI).abs() < 1e-9, "angle did not flip: {angle}");
        assert!(p.distance(&proj) > x0);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(FoliationProfile::new(vec![0.5, 0.5]).is_err());
        assert!(FoliationProfile::new(vec![1.0, 0.0]).is_err());
        assert!(FoliationProfile::new(vec![-0.6, 0.8]).is_err());
    }
}
