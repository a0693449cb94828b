//! One- and two-qubit density matrices and the state metrics used by the
//! preparation pipeline.
//!
//! Basis conventions: the computational basis is `{|H>, |V>}`, with
//! `|D> = (|H> + |V>)/√2`, `|A> = (|H> - |V>)/√2`,
//! `|R> = (|H> + i|V>)/√2` and `|L> = (|H> - i|V>)/√2`.
//! Poincaré-sphere axis 1 is D/A (`σx`), axis 2 is R/L (`σy`) and axis 3 is
//! H/V (`σz`). Two-qubit matrices order the trigger (Alice) qubit first.
//!
//! Matrices are allowed to be unnormalized; the trace then carries the
//! success probability of whatever filter produced them.

use std::fmt;

use nalgebra::{DMatrix, Matrix2, Matrix4, SMatrix, SVector, Vector2, Vector4};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, RspError};
use crate::optics::LocalFilter;

pub type C64 = Complex64;

/// Tolerance for Hermiticity, positivity and trace checks.
pub const STATE_TOL: f64 = 1e-12;

const BLOCH_TOL: f64 = 1e-9;

pub(crate) const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Pauli matrix by index: 0 = identity, 1 = σx, 2 = σy, 3 = σz.
pub fn pauli(index: usize) -> Matrix2<C64> {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match index {
        0 => Matrix2::new(o, z, z, o),
        1 => Matrix2::new(z, o, o, z),
        2 => Matrix2::new(z, -i, i, z),
        3 => Matrix2::new(o, z, z, -o),
        _ => panic!("Pauli index {index} out of range"),
    }
}

pub fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

pub fn kron_ket(a: &Vector2<C64>, b: &Vector2<C64>) -> Vector4<C64> {
    Vector4::from_fn(|r, _| a[r / 2] * b[r % 2])
}

/// Polarization kets.
pub mod kets {
    use super::{c, Vector2, Vector4, C64};
    use std::f64::consts::FRAC_1_SQRT_2;

    pub fn h() -> Vector2<C64> {
        Vector2::new(c(1.0, 0.0), c(0.0, 0.0))
    }
    pub fn v() -> Vector2<C64> {
        Vector2::new(c(0.0, 0.0), c(1.0, 0.0))
    }
    pub fn d() -> Vector2<C64> {
        Vector2::new(c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0))
    }
    pub fn a() -> Vector2<C64> {
        Vector2::new(c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0))
    }
    pub fn r() -> Vector2<C64> {
        Vector2::new(c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2))
    }
    pub fn l() -> Vector2<C64> {
        Vector2::new(c(FRAC_1_SQRT_2, 0.0), c(0.0, -FRAC_1_SQRT_2))
    }
    /// `(|HH> + |VV>)/√2`, equal to `(|DD> + |AA>)/√2`.
    pub fn phi_plus() -> Vector4<C64> {
        Vector4::new(
            c(FRAC_1_SQRT_2, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(FRAC_1_SQRT_2, 0.0),
        )
    }
}

pub(crate) fn to_dynamic<const N: usize>(m: &SMatrix<C64, N, N>) -> DMatrix<C64> {
    DMatrix::from_iterator(N, N, m.iter().cloned())
}

pub(crate) fn from_dynamic<const N: usize>(m: &DMatrix<C64>) -> SMatrix<C64, N, N> {
    SMatrix::from_iterator(m.iter().cloned())
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending.
pub(crate) fn hermitian_eigen<const N: usize>(
    m: &SMatrix<C64, N, N>,
) -> (Vec<f64>, SMatrix<C64, N, N>) {
    let eig = to_dynamic(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = SMatrix::from_fn(|r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

fn hermitian_deviation<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Density matrix of `log2(N)` qubits. Hermitian and positive semidefinite;
/// the trace may be below one.
#[derive(Clone, PartialEq)]
pub struct DensityMatrix<const N: usize> {
    entries: SMatrix<C64, N, N>,
}

pub type DensityMatrix1Q = DensityMatrix<2>;
pub type DensityMatrix2Q = DensityMatrix<4>;

impl<const N: usize> fmt::Debug for DensityMatrix<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityMatrix{}", self.entries)
    }
}

impl<const N: usize> DensityMatrix<N> {
    /// Validates Hermiticity and positivity. Normalization is not required.
    pub fn new(entries: SMatrix<C64, N, N>) -> Result<Self> {
        let deviation = hermitian_deviation(&entries);
        if !(deviation <= STATE_TOL) {
            return Err(RspError::NotHermitian { deviation });
        }
        let state = Self::from_hermitian(entries);
        let min_eigenvalue = state.eigenvalues()[0];
        if min_eigenvalue < -STATE_TOL {
            return Err(RspError::NotPositive { min_eigenvalue });
        }
        Ok(state)
    }

    /// Symmetrizes away rounding noise; callers guarantee positivity.
    pub(crate) fn from_hermitian(entries: SMatrix<C64, N, N>) -> Self {
        Self {
            entries: (entries + entries.adjoint()) * c(0.5, 0.0),
        }
    }

    /// `|ψ><ψ| / <ψ|ψ>`.
    pub fn from_ket(ket: &SVector<C64, N>) -> Self {
        let unit = ket / c(ket.norm(), 0.0);
        Self::from_hermitian(unit * unit.adjoint())
    }

    pub fn maximally_mixed() -> Self {
        Self {
            entries: SMatrix::identity() * c(1.0 / N as f64, 0.0),
        }
    }

    pub fn matrix(&self) -> &SMatrix<C64, N, N> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn is_normalized(&self) -> bool {
        (self.trace() - 1.0).abs() <= STATE_TOL
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(RspError::NotNormalized {
                trace: self.trace(),
            })
        }
    }

    /// Divides by the trace. Fails when the trace (a success probability)
    /// is below 1e-15.
    pub fn normalized(&self) -> Result<Self> {
        let trace = self.trace();
        if !(trace >= 1e-15) {
            return Err(RspError::NullEvent { probability: trace });
        }
        Ok(Self::from_hermitian(self.entries / c(trace, 0.0)))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.entries).0
    }

    /// Principal square root; eigenvalues below zero are treated as zero.
    pub fn sqrt(&self) -> SMatrix<C64, N, N> {
        let (values, vectors) = hermitian_eigen(&self.entries);
        let roots = SMatrix::<C64, N, N>::from_diagonal(&SVector::from_fn(|i, _| {
            c(values[i].max(0.0).sqrt(), 0.0)
        }));
        vectors * roots * vectors.adjoint()
    }

    /// Convex combination `weight·self + (1-weight)·other`.
    pub fn mix(&self, other: &Self, weight: f64) -> Self {
        Self::from_hermitian(self.entries * c(weight, 0.0) + other.entries * c(1.0 - weight, 0.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_hermitian(self.entries * c(factor, 0.0))
    }

    /// Born probability `Tr(ρ |k><k|)` for a normalized ket.
    pub fn probability(&self, ket: &SVector<C64, N>) -> f64 {
        (ket.adjoint() * self.entries * ket)[(0, 0)].re
    }

    pub fn to_rows(&self) -> Vec<Vec<ComplexEntry>> {
        (0..N)
            .map(|r| {
                (0..N)
                    .map(|col| ComplexEntry::from(self.entries[(r, col)]))
                    .collect()
            })
            .collect()
    }

    pub fn from_rows(rows: &[Vec<ComplexEntry>]) -> Result<Self> {
        if rows.len() != N || rows.iter().any(|row| row.len() != N) {
            return Err(RspError::Invalid(format!(
                "expected a {N}x{N} matrix of {{re, im}} entries"
            )));
        }
        Self::new(SMatrix::from_fn(|r, col| rows[r][col].into()))
    }
}

/// JSON form of a complex entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexEntry {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for ComplexEntry {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ComplexEntry> for C64 {
    fn from(e: ComplexEntry) -> Self {
        c(e.re, e.im)
    }
}

impl<const N: usize> Serialize for DensityMatrix<N> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de, const N: usize> Deserialize<'de> for DensityMatrix<N> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<ComplexEntry>>::deserialize(deserializer)?;
        Self::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Poincaré-sphere coordinates `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl BlochVector {
    pub fn new(s1: f64, s2: f64, s3: f64) -> Result<Self> {
        let v = Self { s1, s2, s3 };
        let length = v.length();
        if !(length <= 1.0 + BLOCH_TOL) {
            return Err(RspError::BlochOutsideBall { length });
        }
        Ok(v)
    }

    pub(crate) fn from_array(s: [f64; 3]) -> Self {
        Self {
            s1: s[0],
            s2: s[1],
            s3: s[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.s1, self.s2, self.s3]
    }

    pub fn length(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.s1 * other.s1 + self.s2 * other.s2 + self.s3 * other.s3
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let d = [self.s1 - other.s1, self.s2 - other.s2, self.s3 - other.s3];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// `|ψ(θ, φ)> = cos θ |D> + e^{iφ} sin θ |A>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureQubit {
    pub theta: f64,
    pub phi: f64,
}

impl PureQubit {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn ket(&self) -> Vector2<C64> {
        let phase = C64::from_polar(1.0, self.phi);
        kets::d() * c(self.theta.cos(), 0.0) + kets::a() * (phase * self.theta.sin())
    }

    /// `|ψ⊥>`, equal to `sin θ |D> - e^{iφ} cos θ |A>` up to a global phase.
    pub fn orthogonal(&self) -> Self {
        Self {
            theta: self.theta + std::f64::consts::FRAC_PI_2,
            phi: self.phi,
        }
    }

    /// `(cos 2θ, -sin 2θ sin φ, sin 2θ cos φ)`.
    pub fn bloch(&self) -> BlochVector {
        let (s2t, c2t) = (2.0 * self.theta).sin_cos();
        BlochVector::from_array([c2t, -s2t * self.phi.sin(), s2t * self.phi.cos()])
    }

    /// Pure state pointing along `direction` (any nonzero length).
    pub fn from_direction(direction: &BlochVector) -> Result<Self> {
        let length = direction.length();
        if !(length > 0.0) {
            return Err(RspError::Invalid(
                "a pure-state direction needs a nonzero Bloch vector".into(),
            ));
        }
        let s1 = (direction.s1 / length).clamp(-1.0, 1.0);
        Ok(Self {
            theta: 0.5 * s1.acos(),
            phi: (-direction.s2).atan2(direction.s3),
        })
    }

    pub fn density(&self) -> DensityMatrix1Q {
        DensityMatrix::from_ket(&self.ket())
    }
}

/// `s_i = Tr(ρ σ_i)`; requires a normalized state.
pub fn bloch_from_state(rho: &DensityMatrix1Q) -> Result<BlochVector> {
    rho.ensure_normalized()?;
    Ok(bloch_unchecked(rho))
}

pub(crate) fn bloch_unchecked(rho: &DensityMatrix1Q) -> BlochVector {
    let m = rho.matrix();
    BlochVector::from_array([
        2.0 * m[(0, 1)].re,
        -2.0 * m[(0, 1)].im,
        (m[(0, 0)] - m[(1, 1)]).re,
    ])
}

/// `(I + s·σ)/2`.
pub fn state_from_bloch(s: &BlochVector) -> DensityMatrix1Q {
    let m = pauli(0)
        + pauli(1) * c(s.s1, 0.0)
        + pauli(2) * c(s.s2, 0.0)
        + pauli(3) * c(s.s3, 0.0);
    DensityMatrix::from_hermitian(m * c(0.5, 0.0))
}

/// Uhlmann fidelity `(Tr √(√ρe ρp √ρe))²`, evaluated as the squared trace
/// norm of `√ρe √ρp`.
pub fn fidelity<const N: usize>(rho_e: &DensityMatrix<N>, rho_p: &DensityMatrix<N>) -> Result<f64> {
    rho_e.ensure_normalized()?;
    rho_p.ensure_normalized()?;
    Ok(fidelity_unchecked(rho_e, rho_p))
}

pub(crate) fn fidelity_unchecked<const N: usize>(
    rho_e: &DensityMatrix<N>,
    rho_p: &DensityMatrix<N>,
) -> f64 {
    let product = rho_e.sqrt() * rho_p.sqrt();
    let trace_norm: f64 = to_dynamic(&product).singular_values().iter().sum();
    (trace_norm * trace_norm).clamp(0.0, 1.0)
}

/// `Tr ρ²`.
pub fn purity<const N: usize>(rho: &DensityMatrix<N>) -> Result<f64> {
    rho.ensure_normalized()?;
    Ok(rho.matrix().iter().map(|z| z.norm_sqr()).sum())
}

/// Bob's reduced state `Tr_A ρ_AB`. The trace is preserved.
pub fn partial_trace_a(rho_ab: &DensityMatrix2Q) -> DensityMatrix1Q {
    let m = rho_ab.matrix();
    DensityMatrix::from_hermitian(Matrix2::from_fn(|b, bp| m[(b, bp)] + m[(2 + b, 2 + bp)]))
}

/// Alice's reduced state `Tr_B ρ_AB`.
pub fn partial_trace_b(rho_ab: &DensityMatrix2Q) -> DensityMatrix1Q {
    let m = rho_ab.matrix();
    DensityMatrix::from_hermitian(Matrix2::from_fn(|a, ap| {
        m[(2 * a, 2 * ap)] + m[(2 * a + 1, 2 * ap + 1)]
    }))
}

/// `(M ⊗ I) ρ (M ⊗ I)†`, left unnormalized: the trace is the filter's
/// success probability.
pub fn apply_alice(rho_ab: &DensityMatrix2Q, filter: &LocalFilter) -> DensityMatrix2Q {
    let lifted = kron2(filter.matrix(), &Matrix2::identity());
    DensityMatrix::from_hermitian(lifted * rho_ab.matrix() * lifted.adjoint())
}

/// Unitary acting on Bob's qubit: `(I ⊗ W) ρ (I ⊗ W)†`.
pub fn apply_bob(rho_ab: &DensityMatrix2Q, unitary: &Matrix2<C64>) -> DensityMatrix2Q {
    let lifted = kron2(&Matrix2::identity(), unitary);
    DensityMatrix::from_hermitian(lifted * rho_ab.matrix() * lifted.adjoint())
}

/// Wootters tangle (squared concurrence) of a normalized two-qubit state.
pub fn tangle(rho: &DensityMatrix2Q) -> Result<f64> {
    rho.ensure_normalized()?;
    let yy = kron2(&pauli(2), &pauli(2));
    let flipped = yy * rho.matrix().conjugate() * yy;
    let root = rho.sqrt();
    let (values, _) = hermitian_eigen(&(root * flipped * root));
    let roots: Vec<f64> = values.iter().rev().map(|v| v.max(0.0).sqrt()).collect();
    let concurrence = (roots[0] - roots[1] - roots[2] - roots[3]).max(0.0);
    Ok(concurrence * concurrence)
}
