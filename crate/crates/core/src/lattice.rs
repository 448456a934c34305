//! Nested-lattice quotients and spherical commutative group codes.
//!
//! A pair of full-rank lattices `Λβ ⊂ Λα` with `Λβ` orthogonal induces an
//! integer matrix `H` with `Aβ = Aα·H`. The Smith normal form `H = P·D·Q`
//! reveals the invariant factors of the quotient `Λα/Λβ`, and after the
//! `2π/b` rescaling of both lattices the quotient maps through the torus
//! embedding to a spherical commutative group code on `S^{2n-1}` whose
//! generators are block-diagonal rotations.

use crate::sphere_maps::{BoxPoint, FoliationProfile, UnitVector};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::f64::consts::PI;
use thiserror::Error;

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("generator matrix is singular")]
    SingularMatrix,
    #[error("coarse lattice is not nested in the fine lattice (H entry {0} not integral)")]
    NotNested(f64),
    #[error("coarse basis is not orthogonal (Gram[{0}][{1}] = {2})")]
    NotOrthogonal(usize, usize, f64),
    #[error("codeword index {index} out of range for factor {modulus}")]
    IndexOutOfRange { index: u64, modulus: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A full-rank lattice in `R^n`, either one of the classical root lattices
/// with fast CVP decoders or an explicit generator matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum LatticeKind {
    /// The cubic lattice `Z^n`.
    Zn,
    /// The checkerboard lattice `D_n` (integer points with even coordinate sum).
    Dn,
    /// The Gosset lattice `Γ8 = D8 ∪ (D8 + 1/2)`.
    E8,
    /// An explicit generator matrix (columns are basis vectors).
    Generator(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    kind: LatticeKind,
    scale: f64,
    dim: usize,
}

impl Lattice {
    pub fn zn(dim: usize, scale: f64) -> Self {
        Self {
            kind: LatticeKind::Zn,
            scale,
            dim,
        }
    }

    pub fn dn(dim: usize, scale: f64) -> Self {
        Self {
            kind: LatticeKind::Dn,
            scale,
            dim,
        }
    }

    pub fn e8(scale: f64) -> Self {
        Self {
            kind: LatticeKind::E8,
            scale,
            dim: 8,
        }
    }

    /// Lattice from explicit basis vectors given as matrix columns.
    pub fn from_generator(columns: Vec<Vec<f64>>, scale: f64) -> Result<Self, LatticeError> {
        let dim = columns.len();
        let matrix: Vec<Vec<f64>> = (0..dim)
            .map(|r| columns.iter().map(|c| c[r]).collect())
            .collect();
        if det(&matrix).abs() < 1e-12 {
            return Err(LatticeError::SingularMatrix);
        }
        Ok(Self {
            kind: LatticeKind::Generator(columns),
            scale,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn kind(&self) -> &LatticeKind {
        &self.kind
    }

    /// Same lattice with the scale multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            scale: self.scale * factor,
            dim: self.dim,
        }
    }

    /// Basis vectors in ambient coordinates, as matrix columns (scale applied).
    pub fn basis(&self) -> Vec<Vec<f64>> {
        let s = self.scale;
        let n = self.dim;
        let cols: Vec<Vec<f64>> = match &self.kind {
            LatticeKind::Zn => (0..n)
                .map(|i| {
                    let mut v = vec![0.0; n];
                    v[i] = 1.0;
                    v
                })
                .collect(),
            LatticeKind::Dn => {
                // (-1,-1,0,...), then e_{i-1} - e_i
                let mut cols = Vec::with_capacity(n);
                let mut v0 = vec![0.0; n];
                v0[0] = -1.0;
                v0[1] = -1.0;
                cols.push(v0);
                for i in 1..n {
                    let mut v = vec![0.0; n];
                    v[i - 1] = 1.0;
                    v[i] = -1.0;
                    cols.push(v);
                }
                cols
            }
            LatticeKind::E8 => {
                let mut cols = Vec::with_capacity(8);
                let mut v0 = vec![0.0; 8];
                v0[0] = 2.0;
                cols.push(v0);
                for i in 0..6 {
                    let mut v = vec![0.0; 8];
                    v[i] = -1.0;
                    v[i + 1] = 1.0;
                    cols.push(v);
                }
                cols.push(vec![0.5; 8]);
                cols
            }
            LatticeKind::Generator(cols) => cols.clone(),
        };
        cols.iter()
            .map(|c| c.iter().map(|&v| v * s).collect())
            .collect()
    }

    /// Closest lattice vector to `point` in Euclidean distance.
    ///
    /// Ties are broken toward the lexicographically smaller vector.
    pub fn cvp(&self, point: &[f64]) -> Result<Vec<f64>, LatticeError> {
        if point.len() != self.dim {
            return Err(LatticeError::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        let scaled: Vec<f64> = point.iter().map(|&v| v / self.scale).collect();
        let base = match &self.kind {
            LatticeKind::Zn => decode_zn(&scaled),
            LatticeKind::Dn => decode_dn(&scaled),
            LatticeKind::E8 => decode_e8(&scaled),
            LatticeKind::Generator(cols) => decode_generator(&scaled, cols)?,
        };
        Ok(base.iter().map(|&v| v * self.scale).collect())
    }
}

/// Rounds half-way cases downward, which realizes the lexicographic
/// tie-break for the cubic lattice.
fn round_half_down(v: f64) -> f64 {
    let f = v.floor();
    if v - f > 0.5 {
        f + 1.0
    } else {
        f
    }
}

fn decode_zn(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&v| round_half_down(v)).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn pick_closest(point: &[f64], candidates: impl IntoIterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in candidates {
        let d = dist2(point, &c);
        match &best {
            None => best = Some((d, c)),
            Some((bd, bv)) => {
                if d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && lex_less(&c, bv)) {
                    best = Some((d, c));
                }
            }
        }
    }
    best.expect("non-empty candidate set").1
}

fn decode_dn(p: &[f64]) -> Vec<f64> {
    let w = decode_zn(p);
    let parity: i64 = w.iter().map(|&v| v as i64).sum();
    if parity.rem_euclid(2) == 0 {
        return w;
    }
    // flip one coordinate up or down to restore even parity
    let mut candidates = Vec::with_capacity(2 * p.len());
    for i in 0..p.len() {
        for delta in [-1.0, 1.0] {
            let mut c = w.clone();
            c[i] += delta;
            candidates.push(c);
        }
    }
    pick_closest(p, candidates)
}

fn decode_e8(p: &[f64]) -> Vec<f64> {
    let a = decode_dn(p);
    let shifted: Vec<f64> = p.iter().map(|&v| v - 0.5).collect();
    let b: Vec<f64> = decode_dn(&shifted).iter().map(|&v| v + 0.5).collect();
    pick_closest(p, [a, b])
}

/// Babai rounding plus a small offset search; adequate for the low
/// dimensional test lattices this kind is used for.
fn decode_generator(p: &[f64], cols: &[Vec<f64>]) -> Result<Vec<f64>, LatticeError> {
    let n = cols.len();
    let matrix: Vec<Vec<f64>> = (0..n)
        .map(|r| cols.iter().map(|c| c[r]).collect())
        .collect();
    let inv = invert(&matrix).ok_or(LatticeError::SingularMatrix)?;
    let coeffs = mat_vec(&inv, p);
    let rounded: Vec<f64> = coeffs.iter().map(|&v| round_half_down(v)).collect();
    let span = 2i64;
    let mut candidates = Vec::new();
    let mut offsets = vec![-span; n];
    loop {
        let coeff: Vec<f64> = rounded
            .iter()
            .zip(&offsets)
            .map(|(&r, &o)| r + o as f64)
            .collect();
        candidates.push(mat_vec(&matrix, &coeff));
        let mut k = 0;
        loop {
            offsets[k] += 1;
            if offsets[k] <= span {
                break;
            }
            offsets[k] = -span;
            k += 1;
            if k == n {
                return Ok(pick_closest(p, candidates));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense f64 helpers (small n only)
// ---------------------------------------------------------------------------

pub(crate) fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub(crate) fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub(crate) fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        a[row][j] -= f * a[col][j];
                    }
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

pub(crate) fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut d = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return 0.0;
        }
        if pivot != col {
            a.swap(col, pivot);
            d = -d;
        }
        d *= a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for j in col..n {
                a[row][j] -= f * a[col][j];
            }
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Smith normal form over arbitrary-precision integers
// ---------------------------------------------------------------------------

pub type IntMatrix = Vec<Vec<BigInt>>;

fn identity_big(n: usize) -> IntMatrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigInt::one() } else { BigInt::zero() })
                .collect()
        })
        .collect()
}

pub fn big_mat_mul(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|t| &a[i][t] * &b[t][j]).sum())
                .collect()
        })
        .collect()
}

/// Fraction-free determinant (Bareiss).
pub fn big_det(m: &IntMatrix) -> BigInt {
    let n = m.len();
    let mut a = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            let Some(swap) = (k + 1..n).find(|&i| !a[i][k].is_zero()) else {
                return BigInt::zero();
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    sign * a[n - 1][n - 1].clone()
}

/// Smith normal form `H = P·D·Q` with unimodular `P`, `Q` and positive
/// diagonal `D` whose entries divide successively.
pub fn smith_normal_form(h: &IntMatrix) -> Result<(IntMatrix, IntMatrix, IntMatrix), LatticeError> {
    let n = h.len();
    if big_det(h).is_zero() {
        return Err(LatticeError::SingularMatrix);
    }
    let mut a = h.to_vec();
    let mut p = identity_big(n);
    let mut q = identity_big(n);

    // invariant: h = p * a * q throughout
    let swap_rows = |a: &mut IntMatrix, p: &mut IntMatrix, i: usize, j: usize| {
        a.swap(i, j);
        for row in p.iter_mut() {
            row.swap(i, j);
        }
    };
    let swap_cols = |a: &mut IntMatrix, q: &mut IntMatrix, i: usize, j: usize| {
        for row in a.iter_mut() {
            row.swap(i, j);
        }
        q.swap(i, j);
    };
    // a: row_dst -= k*row_src  =>  p: col_src += k*col_dst
    let add_row = |a: &mut IntMatrix, p: &mut IntMatrix, dst: usize, src: usize, k: &BigInt| {
        for j in 0..n {
            let v = &a[dst][j] - k * &a[src][j];
            a[dst][j] = v;
        }
        for row in p.iter_mut() {
            let v = &row[src] + k * &row[dst];
            row[src] = v;
        }
    };
    // a: col_dst -= k*col_src  =>  q: row_src += k*row_dst
    let add_col = |a: &mut IntMatrix, q: &mut IntMatrix, dst: usize, src: usize, k: &BigInt| {
        for row in a.iter_mut() {
            let v = &row[dst] - k * &row[src];
            row[dst] = v;
        }
        for j in 0..n {
            let v = &q[src][j] + k * &q[dst][j];
            q[src][j] = v;
        }
    };
    let negate_row = |a: &mut IntMatrix, p: &mut IntMatrix, i: usize| {
        for v in a[i].iter_mut() {
            *v = -v.clone();
        }
        for row in p.iter_mut() {
            row[i] = -row[i].clone();
        }
    };

    for t in 0..n {
        'pivot: loop {
            // find the entry of smallest magnitude in the submatrix
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if !a[i][j].is_zero()
                        && best
                            .map(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs())
                            .unwrap_or(true)
                    {
                        best = Some((i, j));
                    }
                }
            }
            let (bi, bj) = best.ok_or(LatticeError::SingularMatrix)?;
            if bi != t {
                swap_rows(&mut a, &mut p, t, bi);
            }
            if bj != t {
                swap_cols(&mut a, &mut q, t, bj);
            }
            // clear the pivot column and row
            let mut dirty = false;
            for i in t + 1..n {
                if !a[i][t].is_zero() {
                    let k = &a[i][t] / &a[t][t];
                    add_row(&mut a, &mut p, i, t, &k);
                    if !a[i][t].is_zero() {
                        dirty = true;
                    }
                }
            }
            for j in t + 1..n {
                if !a[t][j].is_zero() {
                    let k = &a[t][j] / &a[t][t];
                    add_col(&mut a, &mut q, j, t, &k);
                    if !a[t][j].is_zero() {
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue 'pivot;
            }
            // pivot must divide every remaining entry
            for i in t + 1..n {
                for j in t + 1..n {
                    if !(&a[i][j] % &a[t][t]).is_zero() {
                        // fold the offending row into the pivot row
                        let minus_one = -BigInt::one();
                        add_row(&mut a, &mut p, t, i, &minus_one);
                        continue 'pivot;
                    }
                }
            }
            break;
        }
        if a[t][t].is_negative() {
            negate_row(&mut a, &mut p, t);
        }
    }
    Ok((p, a, q))
}

// ---------------------------------------------------------------------------
// Quotient groups and spherical group codes
// ---------------------------------------------------------------------------

/// A coset representative of `Λα/Λβ` after the `2π/b` rescaling, reduced
/// into the fundamental box of the coarse lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CosetVector(pub Vec<f64>);

/// The quotient `Λα/Λβ` of a nested lattice pair with orthogonal `Λβ`.
#[derive(Debug, Clone)]
pub struct QuotientGroup {
    fine: Lattice,
    coarse: Lattice,
    h: IntMatrix,
    p: IntMatrix,
    d: IntMatrix,
    q: IntMatrix,
    invariant_factors: Vec<u64>,
    order: BigInt,
    b: f64,
    xi: FoliationProfile,
    /// Columns `(2π/b)·βi` of the rescaled coarse basis.
    scaled_coarse_basis: Vec<Vec<f64>>,
    /// Columns `(2π/b)·(Aα·P)`, the SNF-adapted fine basis; column `m+i`
    /// generates the `Z_{d_{m+i}}` summand.
    adapted_fine_basis: Vec<Vec<f64>>,
    /// Index of the first nontrivial invariant factor.
    first_nontrivial: usize,
}

impl QuotientGroup {
    /// Builds the quotient from an (unscaled) nested pair; the Corollary-1
    /// rescaling by `2π/b` is applied internally.
    pub fn build(fine: Lattice, coarse: Lattice) -> Result<Self, LatticeError> {
        let n = fine.dim();
        if coarse.dim() != n {
            return Err(LatticeError::DimensionMismatch {
                expected: n,
                got: coarse.dim(),
            });
        }
        let a_alpha_cols = fine.basis();
        let a_beta_cols = coarse.basis();
        // orthogonality of the coarse basis
        for i in 0..n {
            for j in i + 1..n {
                let g: f64 = a_beta_cols[i]
                    .iter()
                    .zip(&a_beta_cols[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let scale: f64 = a_beta_cols[i].iter().map(|v| v * v).sum::<f64>().sqrt()
                    * a_beta_cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
                if g.abs() > 1e-9 * scale {
                    return Err(LatticeError::NotOrthogonal(i, j, g));
                }
            }
        }
        let a_alpha: Vec<Vec<f64>> = (0..n)
            .map(|r| a_alpha_cols.iter().map(|c| c[r]).collect())
            .collect();
        let a_beta: Vec<Vec<f64>> = (0..n)
            .map(|r| a_beta_cols.iter().map(|c| c[r]).collect())
            .collect();
        let inv_alpha = invert(&a_alpha).ok_or(LatticeError::SingularMatrix)?;
        let h_real = mat_mul(&inv_alpha, &a_beta);
        let mut h: IntMatrix = Vec::with_capacity(n);
        for row in &h_real {
            let mut hrow = Vec::with_capacity(n);
            for &v in row {
                let r = v.round();
                if (v - r).abs() > 1e-6 * r.abs().max(1.0) {
                    return Err(LatticeError::NotNested(v));
                }
                hrow.push(BigInt::from(r as i64));
            }
            h.push(hrow);
        }
        let (p, d, q) = smith_normal_form(&h)?;
        let diag: Vec<BigInt> = (0..n).map(|i| d[i][i].clone()).collect();
        let first_nontrivial = diag.iter().position(|v| v > &BigInt::one()).unwrap_or(n);
        let invariant_factors: Vec<u64> = diag[first_nontrivial..]
            .iter()
            .map(|v| {
                v.to_string()
                    .parse::<u64>()
                    .expect("invariant factor fits u64")
            })
            .collect();
        let order: BigInt = diag.iter().product();

        let b_components: Vec<f64> = a_beta_cols
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let b = b_components.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xi = FoliationProfile::new(b_components.iter().map(|&bi| bi / b).collect())
            .expect("coarse basis norms give a valid profile");

        let p_real: Vec<Vec<f64>> = p
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| v.to_string().parse::<f64>().unwrap())
                    .collect()
            })
            .collect();
        let adapted = mat_mul(&a_alpha, &p_real);
        let scale = TAU / b;
        let adapted_fine_basis: Vec<Vec<f64>> = (0..n)
            .map(|c| (0..n).map(|r| adapted[r][c] * scale).collect())
            .collect();
        let scaled_coarse_basis: Vec<Vec<f64>> = a_beta_cols
            .iter()
            .map(|col| col.iter().map(|&v| v * scale).collect())
            .collect();

        Ok(Self {
            fine,
            coarse,
            h,
            p,
            d,
            q,
            invariant_factors,
            order,
            b,
            xi,
            scaled_coarse_basis,
            adapted_fine_basis,
            first_nontrivial,
        })
    }

    pub fn dim(&self) -> usize {
        self.fine.dim()
    }

    /// Nontrivial invariant factors `d_m, ..., d_n`.
    pub fn invariant_factors(&self) -> &[u64] {
        &self.invariant_factors
    }

    /// Group order `M = ∏ d_i`.
    pub fn order(&self) -> &BigInt {
        &self.order
    }

    pub fn xi(&self) -> &FoliationProfile {
        &self.xi
    }

    pub fn h_matrix(&self) -> &IntMatrix {
        &self.h
    }

    pub fn snf(&self) -> (&IntMatrix, &IntMatrix, &IntMatrix) {
        (&self.p, &self.d, &self.q)
    }

    /// The fine lattice after the `2π/b` rescaling; CVP happens here.
    pub fn scaled_fine(&self) -> Lattice {
        self.fine.rescaled(TAU / self.b)
    }

    /// Columns of the rescaled fine basis `(2π/b)·Aα` in the original basis
    /// order (not SNF-adapted).
    pub fn scaled_fine_basis_columns(&self) -> Vec<Vec<f64>> {
        self.scaled_fine().basis()
    }

    pub fn coarse(&self) -> &Lattice {
        &self.coarse
    }

    /// Reduces an ambient vector modulo the rescaled coarse lattice into
    /// the fundamental box (orthogonal reduction along each basis vector).
    pub fn reduce(&self, v: &[f64]) -> CosetVector {
        let mut out = v.to_vec();
        for basis in &self.scaled_coarse_basis {
            let norm2: f64 = basis.iter().map(|v| v * v).sum();
            let c: f64 = out.iter().zip(basis).map(|(a, b)| a * b).sum::<f64>() / norm2;
            let k = c.floor();
            if k != 0.0 {
                for (o, b) in out.iter_mut().zip(basis) {
                    *o -= k * b;
                }
            }
        }
        // a reduced coordinate can still land a hair outside the box
        for (o, basis) in out.iter_mut().zip(&self.scaled_coarse_basis) {
            let side: f64 = basis.iter().map(|v| v * v).sum::<f64>().sqrt();
            if *o < 0.0 {
                *o += side;
            }
            if *o >= side {
                *o -= side;
            }
        }
        CosetVector(out)
    }

    /// Componentwise coset addition with orthogonal modular reduction.
    pub fn add(&self, a: &CosetVector, b: &CosetVector) -> CosetVector {
        let sum: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect();
        self.reduce(&sum)
    }

    /// Additive inverse of a coset representative.
    pub fn neg(&self, a: &CosetVector) -> CosetVector {
        let neg: Vec<f64> = a.0.iter().map(|&x| -x).collect();
        self.reduce(&neg)
    }

    pub fn sub(&self, a: &CosetVector, b: &CosetVector) -> CosetVector {
        self.add(a, &self.neg(b))
    }

    /// Quantizes an ambient point to the closest fine-lattice coset:
    /// CVP in the rescaled fine lattice, then reduction modulo `Λβ`.
    pub fn quantize(&self, v: &[f64]) -> Result<CosetVector, LatticeError> {
        let nearest = self.scaled_fine().cvp(v)?;
        Ok(self.reduce(&nearest))
    }

    /// Coset representative for an index vector over the nontrivial factors.
    pub fn coset_from_indices(&self, w: &[u64]) -> Result<CosetVector, LatticeError> {
        if w.len() != self.invariant_factors.len() {
            return Err(LatticeError::DimensionMismatch {
                expected: self.invariant_factors.len(),
                got: w.len(),
            });
        }
        let n = self.dim();
        let mut v = vec![0.0; n];
        for (i, (&wi, &di)) in w.iter().zip(&self.invariant_factors).enumerate() {
            if wi >= di {
                return Err(LatticeError::IndexOutOfRange {
                    index: wi,
                    modulus: di,
                });
            }
            let col = &self.adapted_fine_basis[self.first_nontrivial + i];
            // reduce the scaled generator every step to keep values small
            let mut term: Vec<f64> = col.iter().map(|&c| c * wi as f64).collect();
            term = self.reduce(&term).0;
            for (vv, t) in v.iter_mut().zip(&term) {
                *vv += t;
            }
        }
        Ok(self.reduce(&v))
    }
}

/// Distance between two points of a periodic box under the minimum-image
/// convention (each coordinate difference reduced modulo its box side).
pub fn min_image_distance(a: &[f64], b: &[f64], sides: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(sides)
        .map(|((&x, &y), &s)| {
            let mut d = (x - y).abs() % s;
            if d > s / 2.0 {
                d = s - d;
            }
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// A spherical commutative group code `C = G·σ` on `S^{2n-1}`.
#[derive(Debug, Clone)]
pub struct SphericalGroupCode {
    quotient: QuotientGroup,
    sigma: UnitVector,
    /// `generator_rotation_angles[i][j]`: rotation angle of generator `i`
    /// acting on coordinate pair `j`.
    generator_rotation_angles: Vec<Vec<f64>>,
}

impl SphericalGroupCode {
    pub fn build(quotient: QuotientGroup) -> Result<Self, LatticeError> {
        let n = quotient.dim();
        let xi = quotient.xi().clone();
        let zero = BoxPoint::new(vec![0.0; n], &xi).expect("origin lies in the box");
        let sigma = crate::sphere_maps::torus_map(&zero, &xi);

        // angle of generator i at pair j is the coset translation along
        // coordinate j divided by ξj
        let k = quotient.invariant_factors().len();
        let mut angles = Vec::with_capacity(k);
        for i in 0..k {
            let col = &quotient.adapted_fine_basis[quotient.first_nontrivial + i];
            let row: Vec<f64> = col
                .iter()
                .zip(xi.components())
                .map(|(&c, &x)| c / x)
                .collect();
            angles.push(row);
        }
        Ok(Self {
            quotient,
            sigma,
            generator_rotation_angles: angles,
        })
    }

    pub fn quotient(&self) -> &QuotientGroup {
        &self.quotient
    }

    pub fn xi(&self) -> &FoliationProfile {
        self.quotient.xi()
    }

    pub fn sigma(&self) -> &UnitVector {
        &self.sigma
    }

    pub fn order(&self) -> &BigInt {
        self.quotient.order()
    }

    pub fn generator_rotation_angles(&self) -> &[Vec<f64>] {
        &self.generator_rotation_angles
    }

    /// Codeword indexed by `w`: product of generator powers applied to `σ`,
    /// realized as per-pair angle accumulation.
    pub fn codeword(&self, w: &[u64]) -> Result<UnitVector, LatticeError> {
        let factors = self.quotient.invariant_factors();
        if w.len() != factors.len() {
            return Err(LatticeError::DimensionMismatch {
                expected: factors.len(),
                got: w.len(),
            });
        }
        for (&wi, &di) in w.iter().zip(factors) {
            if wi >= di {
                return Err(LatticeError::IndexOutOfRange {
                    index: wi,
                    modulus: di,
                });
            }
        }
        let coset = self.quotient.coset_from_indices(w)?;
        let xi = self.xi();
        let point = BoxPoint::wrapped(coset.0, xi);
        Ok(crate::sphere_maps::torus_map(&point, xi))
    }

    /// Applies generator `i` exactly `times` times to an arbitrary point on
    /// the torus (used by order/composition tests).
    pub fn apply_generator(&self, point: &UnitVector, i: usize, times: u64) -> UnitVector {
        let angles = &self.generator_rotation_angles[i];
        let c = point.coords();
        let mut out = Vec::with_capacity(c.len());
        for (j, &theta) in angles.iter().enumerate() {
            let (re, im) = (c[2 * j], c[2 * j + 1]);
            let a = theta * times as f64;
            let (s, co) = a.sin_cos();
            out.push(re * co - im * s);
            out.push(re * s + im * co);
        }
        UnitVector::normalized(out).expect("rotation preserves the norm")
    }
}
