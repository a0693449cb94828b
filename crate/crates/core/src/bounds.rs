//! Which single-qubit states a two-qubit resource can prepare remotely when
//! Alice applies one local filter and sends one bit.
//!
//! Bell-diagonal ("tetrahedron") resources `¼(I⊗I + Σ tᵢ σᵢ⊗σᵢ)` have closed
//! forms: Bob's Poincaré vector is confined to the origin-centred ellipsoid
//! with semi-axes `|tᵢ|`. For arbitrary resources the preparable set is
//! estimated by Monte Carlo over single filters `𝒟(a, b)·U`.
//!
//! Unitaries are sampled as `U = cos θ I + i sin θ n̂·σ` with `θ` uniform and
//! `n̂` uniform on the sphere. This is not Haar measure; coverage is what
//! matters for bounding the set, not the exact distribution.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RspError};
use crate::optics::{procrustean, LocalFilter};
use crate::qstate::{
    apply_alice, bloch_unchecked, c, kron2, partial_trace_a, pauli, BlochVector, DensityMatrix,
    DensityMatrix2Q, C64, STATE_TOL,
};

/// Below this magnitude an ellipsoid axis counts as collapsed.
pub const DEGENERATE_AXIS: f64 = 1e-12;
/// Largest coordinate allowed along a collapsed axis, and the tolerance for
/// points outside the ellipsoid.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

const MIN_SUCCESS: f64 = 1e-12;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TetrahedronState {
    t: [f64; 3],
}

impl TetrahedronState {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        let state = Self { t: [t1, t2, t3] };
        for (i, &value) in state.eigenvalues().iter().enumerate() {
            if !(value >= -STATE_TOL) {
                return Err(RspError::OutsideTetrahedron {
                    index: i + 1,
                    value,
                });
            }
        }
        Ok(state)
    }

    pub fn t(&self) -> [f64; 3] {
        self.t
    }

    /// `λ₁ = (1-t₁+t₂+t₃)/4`, `λ₂ = (1+t₁-t₂+t₃)/4`, `λ₃ = (1+t₁+t₂-t₃)/4`,
    /// `λ₄ = (1-t₁-t₂-t₃)/4`.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let [t1, t2, t3] = self.t;
        [
            (1.0 - t1 + t2 + t3) / 4.0,
            (1.0 + t1 - t2 + t3) / 4.0,
            (1.0 + t1 + t2 - t3) / 4.0,
            (1.0 - t1 - t2 - t3) / 4.0,
        ]
    }

    /// Recognizes a Bell-diagonal resource, reading `tᵢ = Tr(ρ σᵢ⊗σᵢ)`.
    pub fn from_density(rho: &DensityMatrix2Q) -> Option<Self> {
        let t = [1, 2, 3].map(|i| (rho.matrix() * kron2(&pauli(i), &pauli(i))).trace().re);
        let candidate = Self::new(t[0], t[1], t[2]).ok()?;
        let residual = (tetra_state(&candidate).matrix() - rho.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        (residual <= 1e-10).then_some(candidate)
    }
}

/// `¼(I⊗I + t₁ σx⊗σx + t₂ σy⊗σy + t₃ σz⊗σz)`.
pub fn tetra_state(t: &TetrahedronState) -> DensityMatrix2Q {
    let m = (1..4).fold(Matrix4::<C64>::identity(), |acc, i| {
        acc + kron2(&pauli(i), &pauli(i)) * c(t.t[i - 1], 0.0)
    });
    DensityMatrix::from_hermitian(m * c(0.25, 0.0))
}

/// Entangled iff some eigenvalue exceeds 1/2, i.e. the point lies outside
/// the octahedron inscribed in the tetrahedron.
pub fn is_entangled(t: &TetrahedronState) -> bool {
    t.eigenvalues().iter().any(|&l| l > 0.5 + STATE_TOL)
}

/// Origin-centred ellipsoid containing every remotely preparable state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreparableEllipsoid {
    pub semi_axes: [f64; 3],
}

impl PreparableEllipsoid {
    /// `sqrt(Σ (sᵢ/aᵢ)²)` over the non-collapsed axes.
    pub fn scaled_radius(&self, p: &BlochVector) -> f64 {
        p.to_array()
            .iter()
            .zip(&self.semi_axes)
            .filter(|(_, &a)| a >= DEGENERATE_AXIS)
            .map(|(s, a)| (s / a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// How far `p` sits outside: the excess scaled radius, or the largest
    /// coordinate along a collapsed axis, whichever is larger. Zero inside.
    pub fn violation(&self, p: &BlochVector) -> f64 {
        let off_axis = p
            .to_array()
            .iter()
            .zip(&self.semi_axes)
            .filter(|(_, &a)| a < DEGENERATE_AXIS)
            .map(|(s, _)| s.abs())
            .fold(0.0, f64::max);
        (self.scaled_radius(p) - 1.0).max(off_axis).max(0.0)
    }

    pub fn contains(&self, p: &BlochVector) -> bool {
        self.violation(p) <= MEMBERSHIP_TOL
    }

    /// Support function `max_{x in ellipsoid} x·u`.
    pub fn support(&self, u: &BlochVector) -> f64 {
        u.to_array()
            .iter()
            .zip(&self.semi_axes)
            .map(|(ui, a)| (ui * a).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn preparable_ellipsoid(t: &TetrahedronState) -> PreparableEllipsoid {
    PreparableEllipsoid {
        semi_axes: t.t.map(f64::abs),
    }
}

/// Axis `n̂ = (sin α cos β, sin α sin β, cos α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationAxis {
    pub alpha: f64,
    pub beta: f64,
}

impl RotationAxis {
    pub fn unit(&self) -> [f64; 3] {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        [sa * cb, sa * sb, ca]
    }

    /// `i n̂·σ`.
    pub fn rotation(&self) -> Matrix2<C64> {
        let n = self.unit();
        (pauli(1) * c(n[0], 0.0) + pauli(2) * c(n[1], 0.0) + pauli(3) * c(n[2], 0.0)) * c(0.0, 1.0)
    }
}

/// Closed-form surface trace `(t₁ sin 2α cos β, t₂ sin 2α sin β, t₃ cos 2α)`.
pub fn surface_point_closed_form(t: &TetrahedronState, axis: &RotationAxis) -> BlochVector {
    let (s2a, c2a) = (2.0 * axis.alpha).sin_cos();
    let [t1, t2, t3] = t.t;
    BlochVector::from_array([t1 * s2a * axis.beta.cos(), t2 * s2a * axis.beta.sin(), t3 * c2a])
}

/// Bob's state when Alice rotates by `i n̂·σ` and projects onto `|0>`.
///
/// Computed both by the closed form and by filtering the resource matrix
/// directly; the two must agree within 1e-10.
pub fn surface_point(t: &TetrahedronState, axis: &RotationAxis) -> Result<BlochVector> {
    let closed = surface_point_closed_form(t, axis);
    let project = Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
    let filter = LocalFilter::from_contraction(project * axis.rotation());
    let bob = partial_trace_a(&apply_alice(&tetra_state(t), &filter)).normalized()?;
    let direct = bloch_unchecked(&bob);
    let difference = closed.distance(&direct);
    if difference > 1e-10 {
        return Err(RspError::Inconsistent { difference });
    }
    Ok(closed)
}

/// `Tr ρ_AB² = ¼(1 + t₁² + t₂² + t₃²)`.
pub fn purity_ab(t: &TetrahedronState) -> f64 {
    0.25 * (1.0 + t.t.iter().map(|x| x * x).sum::<f64>())
}

/// `max P_B = ½(1 + max tᵢ²)`.
pub fn max_purity_b(t: &TetrahedronState) -> f64 {
    0.5 * (1.0 + t.t.iter().map(|x| x * x).fold(0.0, f64::max))
}

/// Rotation axis whose surface point lies on the longest ellipsoid axis,
/// together with that point.
pub fn max_purity_witness(t: &TetrahedronState) -> Result<(RotationAxis, BlochVector)> {
    let longest = (0..3)
        .max_by(|&i, &j| t.t[i].abs().total_cmp(&t.t[j].abs()).then(j.cmp(&i)))
        .expect("three axes");
    let axis = match longest {
        0 => RotationAxis { alpha: FRAC_PI_4, beta: 0.0 },
        1 => RotationAxis { alpha: FRAC_PI_4, beta: FRAC_PI_2 },
        _ => RotationAxis { alpha: 0.0, beta: 0.0 },
    };
    Ok((axis, surface_point(t, &axis)?))
}

/// Best fidelity with the pure state pointing along `direction` over the
/// ellipsoid: `(1 + h(n̂))/2` with `h` the support function.
pub fn max_fidelity_pure_target(t: &TetrahedronState, direction: &BlochVector) -> f64 {
    let length = direction.length();
    let n = BlochVector::from_array(direction.to_array().map(|x| x / length));
    0.5 * (1.0 + preparable_ellipsoid(t).support(&n))
}

/// A single local filter `diag(a, b)·U` with `(a, b)` uniform on `[0, 1]²`.
pub fn sample_filter<R: Rng + ?Sized>(rng: &mut R) -> LocalFilter {
    let a: f64 = rng.random();
    let b: f64 = rng.random();
    let theta = rng.random::<f64>() * PI;
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let azimuth = rng.random::<f64>() * TAU;
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let n = [rho * azimuth.cos(), rho * azimuth.sin(), z];
    let (s, co) = theta.sin_cos();
    let u = pauli(0) * c(co, 0.0)
        + (pauli(1) * c(n[0], 0.0) + pauli(2) * c(n[1], 0.0) + pauli(3) * c(n[2], 0.0))
            * c(0.0, s);
    let d = procrustean(a, b).expect("uniform samples lie in [0, 1]");
    LocalFilter::from_contraction(d.matrix() * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreparableSample {
    pub bloch: BlochVector,
    pub success_probability: f64,
}

/// Ellipsoid check for a sample cloud drawn from a tetrahedron resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullSummary {
    pub tetrahedron: TetrahedronState,
    pub max_violation: f64,
    /// Samples outside the ellipsoid beyond `MEMBERSHIP_TOL`.
    pub violations: usize,
    pub max_scaled_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparableCloud {
    pub samples: Vec<PreparableSample>,
    /// Filters whose success probability fell below 1e-12.
    pub discarded: usize,
    pub max_length: f64,
    pub summary: Option<HullSummary>,
}

impl PreparableCloud {
    pub fn max_purity(&self) -> f64 {
        0.5 * (1.0 + self.max_length * self.max_length)
    }
}

/// Bob's normalized Poincaré vectors for `n_samples` random single filters.
///
/// Sampling runs in chunks of 4096, each with its own ChaCha stream of
/// `seed`, so the cloud does not depend on the thread count.
pub fn monte_carlo_preparable(
    resource: &DensityMatrix2Q,
    n_samples: usize,
    seed: u64,
) -> Result<PreparableCloud> {
    if n_samples == 0 {
        return Err(RspError::Invalid("n_samples must be at least 1".into()));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let per_chunk: Vec<(Vec<PreparableSample>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let count = CHUNK.min(n_samples - k * CHUNK);
            let mut samples = Vec::with_capacity(count);
            let mut discarded = 0;
            for _ in 0..count {
                let filter = sample_filter(&mut rng);
                let bob = partial_trace_a(&apply_alice(resource, &filter));
                let p = bob.trace();
                if p < MIN_SUCCESS {
                    discarded += 1;
                    continue;
                }
                samples.push(PreparableSample {
                    bloch: bloch_unchecked(&bob.scaled(1.0 / p)),
                    success_probability: p,
                });
            }
            (samples, discarded)
        })
        .collect();

    let discarded = per_chunk.iter().map(|(_, d)| d).sum();
    let samples: Vec<PreparableSample> = per_chunk.into_iter().flat_map(|(s, _)| s).collect();
    let max_length = samples.iter().map(|s| s.bloch.length()).fold(0.0, f64::max);
    let summary = TetrahedronState::from_density(resource).map(|tetrahedron| {
        let ellipsoid = preparable_ellipsoid(&tetrahedron);
        let mut summary = HullSummary {
            tetrahedron,
            max_violation: 0.0,
            violations: 0,
            max_scaled_radius: 0.0,
        };
        for s in &samples {
            let v = ellipsoid.violation(&s.bloch);
            summary.max_violation = summary.max_violation.max(v);
            summary.violations += usize::from(v > MEMBERSHIP_TOL);
            summary.max_scaled_radius = summary.max_scaled_radius.max(ellipsoid.scaled_radius(&s.bloch));
        }
        summary
    });
    Ok(PreparableCloud {
        samples,
        discarded,
        max_length,
        summary,
    })
}

/// Fibonacci lattice of `n` unit vectors.
fn sphere_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Fraction of the ellipsoid volume inside the convex hull of the cloud.
///
/// Works in coordinates scaled by the semi-axes (the hull maps to the hull),
/// approximates the hull by its support function on `n_directions` lattice
/// directions, and tests `n_points` uniform points of the unit ball.
/// Requires all semi-axes to be non-degenerate.
pub fn hull_fill_fraction(
    cloud: &PreparableCloud,
    ellipsoid: &PreparableEllipsoid,
    n_directions: usize,
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    if ellipsoid.semi_axes.iter().any(|&a| a < DEGENERATE_AXIS) {
        return Err(RspError::Invalid(
            "hull volume needs a non-degenerate ellipsoid".into(),
        ));
    }
    let scaled: Vec<[f64; 3]> = cloud
        .samples
        .iter()
        .map(|s| {
            let p = s.bloch.to_array();
            [0, 1, 2].map(|i| p[i] / ellipsoid.semi_axes[i])
        })
        .filter(|p| p.iter().map(|x| x * x).sum::<f64>() > 0.8)
        .collect();
    let directions = sphere_directions(n_directions);
    let support: Vec<f64> = directions
        .par_iter()
        .map(|u| {
            scaled
                .iter()
                .map(|p| p[0] * u[0] + p[1] * u[1] + p[2] * u[2])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    let mut tested = 0usize;
    while tested < n_points {
        let q = [0; 3].map(|_| 2.0 * rng.random::<f64>() - 1.0);
        if q.iter().map(|x| x * x).sum::<f64>() > 1.0 {
            continue;
        }
        tested += 1;
        let covered = directions
            .iter()
            .zip(&support)
            .all(|(u, h)| q[0] * u[0] + q[1] * u[1] + q[2] * u[2] <= *h);
        inside += usize::from(covered);
    }
    Ok(inside as f64 / n_points as f64)
}

/// `√p |00> + √(1-p) |11>`.
pub fn partially_entangled(p: f64) -> DensityMatrix2Q {
    let ket = Vector4::new(
        c(p.sqrt(), 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c((1.0 - p).sqrt(), 0.0),
    );
    DensityMatrix::from_ket(&ket)
}

/// Procrustean filter `diag(√((1-p)/p), 1)` that turns
/// `√p |00> + √(1-p) |11>` into a Bell state, with success probability
/// `2(1-p)`.
pub fn distill_pure(p: f64) -> Result<(LocalFilter, f64)> {
    if !(p > 0.5 && p < 1.0) {
        return Err(RspError::OutOfRange {
            name: "p",
            value: p,
            range: "(1/2, 1)",
        });
    }
    let filter = procrustean(((1.0 - p) / p).sqrt(), 1.0)?;
    let success = apply_alice(&partially_entangled(p), &filter).trace();
    Ok((filter, success))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{bloch_from_state, fidelity, kets, purity, DensityMatrix1Q};
    use crate::rsp::{predict_rpq_outcome, PlateRetardances, PrepSettings, TriggerOutcome};
    use proptest::prelude::*;
    use rand::Rng;

    fn tetra(t1: f64, t2: f64, t3: f64) -> TetrahedronState {
        TetrahedronState::new(t1, t2, t3).unwrap()
    }

    /// Uniform point of the tetrahedron: barycentric combination of vertices.
    fn tetra_strategy() -> impl Strategy<Value = TetrahedronState> {
        proptest::array::uniform4(0.0..1.0f64).prop_map(|w| {
            let e: Vec<f64> = w.iter().map(|x| -(1.0 - x).ln()).collect();
            let total: f64 = e.iter().sum();
            let vertices = [[-1.0, -1.0, -1.0], [-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]];
            let t = [0, 1, 2].map(|k| (0..4).map(|v| e[v] / total * vertices[v][k]).sum::<f64>());
            TetrahedronState::new(t[0], t[1], t[2]).unwrap()
        })
    }

    #[test]
    fn tetra_state_examples() {
        let center = tetra_state(&tetra(0.0, 0.0, 0.0));
        let quarter = DensityMatrix2Q::maximally_mixed();
        assert!((center.matrix() - quarter.matrix()).iter().all(|z| z.norm() < 1e-15));

        let vertex = tetra(1.0, 1.0, -1.0);
        assert_eq!(vertex.eigenvalues(), [0.0, 0.0, 1.0, 0.0]);
        assert!((purity(&tetra_state(&vertex)).unwrap() - 1.0).abs() < 1e-12);

        let cc = tetra_state(&tetra(0.0, 0.0, 1.0));
        let mut expected = Matrix4::<C64>::zeros();
        expected[(0, 0)] = c(0.5, 0.0);
        expected[(3, 3)] = c(0.5, 0.0);
        assert!((cc.matrix() - expected).iter().all(|z| z.norm() < 1e-15));

        match TetrahedronState::new(1.0, 1.0, 1.0) {
            Err(RspError::OutsideTetrahedron { index, value }) => {
                assert_eq!(index, 4);
                assert!((value + 0.5).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn phi_plus_is_a_vertex() {
        let phi = DensityMatrix::from_ket(&kets::phi_plus());
        let t = TetrahedronState::from_density(&phi).unwrap();
        assert!(t.t().iter().zip([1.0, -1.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        let noisy = DensityMatrix::from_ket(&kets::h()).scaled(1.0);
        let product = DensityMatrix::from_hermitian(kron2(noisy.matrix(), noisy.matrix()));
        assert!(TetrahedronState::from_density(&product).is_none());
    }

    #[test]
    fn entanglement_verdicts() {
        assert!(is_entangled(&tetra(1.0, 1.0, -1.0)));
        assert!(!is_entangled(&tetra(0.0, 0.0, 1.0)));
        assert!(!is_entangled(&tetra(0.0, 0.0, 0.0)));
        // Werner-like points along (1, -1, 1): entangled beyond 1/3.
        assert!(!is_entangled(&tetra(0.3, -0.3, 0.3)));
        assert!(is_entangled(&tetra(0.34, -0.34, 0.34)));
    }

    #[test]
    fn ellipsoid_examples() {
        let bell = preparable_ellipsoid(&tetra(1.0, -1.0, 1.0));
        assert_eq!(bell.semi_axes, [1.0; 3]);
        assert!(bell.contains(&BlochVector::from_array([0.0, 0.6, 0.8])));

        let cc = preparable_ellipsoid(&tetra(0.0, 0.0, 1.0));
        assert!(cc.contains(&BlochVector::from_array([0.0, 0.0, -1.0])));
        assert!(!cc.contains(&BlochVector::from_array([1e-6, 0.0, 0.0])));

        let point = preparable_ellipsoid(&tetra(0.0, 0.0, 0.0));
        assert!(point.contains(&BlochVector::default()));
        assert!(!point.contains(&BlochVector::from_array([0.0, 0.0, 1e-8])));
    }

    #[test]
    fn surface_point_examples() {
        let t = tetra(0.5, -0.3, 0.4);
        let pole = surface_point(&t, &RotationAxis { alpha: 0.0, beta: 1.3 }).unwrap();
        assert!(pole.distance(&BlochVector::from_array([0.0, 0.0, 0.4])) < 1e-15);
        let x = surface_point(&t, &RotationAxis { alpha: FRAC_PI_4, beta: 0.0 }).unwrap();
        assert!(x.distance(&BlochVector::from_array([0.5, 0.0, 0.0])) < 1e-15);
    }

    #[test]
    fn purity_examples() {
        let center = tetra(0.0, 0.0, 0.0);
        assert_eq!((purity_ab(&center), max_purity_b(&center)), (0.25, 0.5));
        let cc = tetra(0.0, 0.0, 1.0);
        assert_eq!((purity_ab(&cc), max_purity_b(&cc)), (0.5, 1.0));
        let t = tetra(0.6, -0.3, 0.2);
        assert!((purity_ab(&t) - 0.3725).abs() < 1e-15);
        assert!((max_purity_b(&t) - 0.68).abs() < 1e-15);
    }

    #[test]
    fn witness_attains_max_purity() {
        for t in [tetra(0.6, -0.3, 0.2), tetra(0.1, -0.7, 0.2), tetra(0.2, 0.1, -0.5)] {
            let (_, point) = max_purity_witness(&t).unwrap();
            let p = purity(&crate::qstate::state_from_bloch(&point)).unwrap();
            assert!((p - max_purity_b(&t)).abs() < 1e-10);
        }
    }

    #[test]
    fn distillation_examples() {
        for &(p, success) in &[(0.75, 0.5), (0.9, 0.2)] {
            let (filter, q) = distill_pure(p).unwrap();
            assert!((q - success).abs() < 1e-12);
            let out = apply_alice(&partially_entangled(p), &filter).normalized().unwrap();
            let bell = DensityMatrix::from_ket(&kets::phi_plus());
            assert!((fidelity(&out, &bell).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((distill_pure(0.75).unwrap().0.matrix()[(0, 0)].re - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let (filter, q) = distill_pure(0.5 + 1e-9).unwrap();
        assert!((filter.matrix()[(0, 0)].re - 1.0).abs() < 1e-8 && (q - 1.0).abs() < 1e-8);
        assert!(distill_pure(0.5).is_err());
        assert!(distill_pure(1.0).is_err());
    }

    #[test]
    fn monte_carlo_on_bell_state_reaches_the_sphere() {
        let phi = DensityMatrix::from_ket(&kets::phi_plus());
        let cloud = monte_carlo_preparable(&phi, 10_000, 3).unwrap();
        assert!(cloud.samples.iter().all(|s| s.bloch.length() <= 1.0 + 1e-9));
        assert!(cloud.max_length > 0.999);
        assert_eq!(cloud.summary.unwrap().violations, 0);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_chunked() {
        let rho = tetra_state(&tetra(0.5, -0.3, 0.4));
        let a = monte_carlo_preparable(&rho, 5000, 11).unwrap();
        let b = monte_carlo_preparable(&rho, 5000, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len() + a.discarded, 5000);
        let c = monte_carlo_preparable(&rho, 5000, 12).unwrap();
        assert_ne!(a.samples[0], c.samples[0]);
        assert!(monte_carlo_preparable(&rho, 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_stays_in_ellipsoid() {
        let rho = tetra_state(&tetra(0.5, -0.3, 0.4));
        let cloud = monte_carlo_preparable(&rho, 100_000, 5).unwrap();
        let summary = cloud.summary.unwrap();
        assert_eq!(summary.violations, 0, "max violation {}", summary.max_violation);
    }

    #[test]
    fn classical_resource_stays_on_the_axis() {
        let rho = tetra_state(&tetra(0.0, 0.0, 1.0));
        let cloud = monte_carlo_preparable(&rho, 100_000, 9).unwrap();
        assert!(cloud
            .samples
            .iter()
            .all(|s| s.bloch.s1.abs() < 1e-9 && s.bloch.s2.abs() < 1e-9));
        assert!(cloud.max_purity() >= 0.999);
    }

    #[test]
    fn hull_fills_the_ellipsoid() {
        let t = tetra(0.6, -0.5, 0.3);
        let rho = tetra_state(&t);
        let cloud = monte_carlo_preparable(&rho, 1_000_000, 21).unwrap();
        let fill = hull_fill_fraction(&cloud, &preparable_ellipsoid(&t), 2000, 20_000, 4).unwrap();
        assert!(fill >= 0.99, "fill {fill}");
    }

    #[test]
    fn monte_carlo_purity_approaches_bound() {
        let t = tetra(-0.2, -0.3, -0.7);
        let cloud = monte_carlo_preparable(&tetra_state(&t), 100_000, 8).unwrap();
        let bound = max_purity_b(&t);
        assert!(cloud.max_purity() <= bound + 1e-9);
        assert!(cloud.max_purity() >= bound - 1e-3);
    }

    #[test]
    fn dropping_the_final_unitary_leaves_bob_unchanged() {
        let rho = tetra_state(&tetra(0.4, -0.3, 0.6));
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let filter = sample_filter(&mut rng);
            let v = sample_filter(&mut rng);
            let svd = v.matrix().svd(true, true);
            let unitary = svd.u.unwrap() * svd.v_t.unwrap();
            let rotated = LocalFilter::from_contraction(unitary * filter.matrix());
            let a = partial_trace_a(&apply_alice(&rho, &filter));
            let b = partial_trace_a(&apply_alice(&rho, &rotated));
            assert!((a.matrix() - b.matrix()).iter().all(|z| z.norm() < 1e-14));
        }
    }

    #[test]
    fn both_trigger_outcomes_stay_in_ellipsoid() {
        let t = tetra(0.7, -0.5, 0.3);
        let rho = tetra_state(&t);
        let ellipsoid = preparable_ellipsoid(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let settings = PrepSettings::from_controls(
                rng.random::<f64>() * PI,
                rng.random::<f64>() * PI,
                rng.random(),
                rng.random(),
            );
            for outcome in [TriggerOutcome::Transmitted, TriggerOutcome::Rejected] {
                if let Ok((bob, _)) =
                    predict_rpq_outcome(&rho, &settings, &PlateRetardances::ideal(), outcome)
                {
                    assert!(ellipsoid.contains(&bloch_from_state(&bob).unwrap()));
                }
            }
        }
    }

    #[test]
    fn tetra_marginal_is_maximally_mixed() {
        let bob = partial_trace_a(&tetra_state(&tetra(0.2, -0.4, 0.5)));
        let half = DensityMatrix1Q::maximally_mixed();
        assert!((bob.matrix() - half.matrix()).iter().all(|z| z.norm() < 1e-15));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn closed_form_eigenvalues(t in tetra_strategy()) {
            let mut numeric = tetra_state(&t).eigenvalues();
            let mut closed = t.eigenvalues().to_vec();
            closed.sort_by(f64::total_cmp);
            numeric.sort_by(f64::total_cmp);
            for (a, b) in numeric.iter().zip(&closed) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn surface_points_saturate_the_ellipsoid(
            t in tetra_strategy(),
            alpha in 0.0..PI,
            beta in 0.0..TAU,
        ) {
            let p = surface_point(&t, &RotationAxis { alpha, beta }).unwrap();
            let ellipsoid = preparable_ellipsoid(&t);
            prop_assert!((ellipsoid.scaled_radius(&p) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn tetra_marginals_are_unpolarized(t in tetra_strategy()) {
            let bob = partial_trace_a(&tetra_state(&t));
            prop_assert!(bloch_from_state(&bob).unwrap().length() < 1e-12);
        }
    }
}
