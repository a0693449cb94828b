//! Simulated polarization analysis and maximum-likelihood reconstruction.
//!
//! One qubit is analysed with the six projections H, V, D, A, L, R; two
//! qubits with all 36 products of them. Counts are Poisson with mean
//! `N0 · Tr(ρ P)`, optionally scaled by a detector efficiency plus a
//! background rate.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RspError};
use crate::qstate::{
    c, fidelity_unchecked, from_dynamic, hermitian_eigen, kets, kron2, pauli, to_dynamic,
    DensityMatrix, DensityMatrix1Q, DensityMatrix2Q, C64,
};
use crate::rsp::{
    make_resource, optimize_settings, predict_rpq, PlateRetardances, PrepSettings, ResourceSpec,
    TargetState,
};
use crate::simplex::NelderMead;

/// Floor applied to predicted probabilities inside the likelihood.
const PROBABILITY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    L,
    R,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [Self::H, Self::V, Self::D, Self::A, Self::L, Self::R];

    pub fn ket(self) -> nalgebra::Vector2<C64> {
        match self {
            Self::H => kets::h(),
            Self::V => kets::v(),
            Self::D => kets::d(),
            Self::A => kets::a(),
            Self::L => kets::l(),
            Self::R => kets::r(),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Self::H => 'H',
            Self::V => 'V',
            Self::D => 'D',
            Self::A => 'A',
            Self::L => 'L',
            Self::R => 'R',
        }
    }

    /// 0 for H/V, 1 for D/A, 2 for L/R.
    pub fn basis(self) -> usize {
        match self {
            Self::H | Self::V => 0,
            Self::D | Self::A => 1,
            Self::L | Self::R => 2,
        }
    }
}

/// Rank-one projectors with labels and the complete basis each belongs to.
#[derive(Debug, Clone)]
pub struct ProjectorSet<const N: usize> {
    labels: Vec<String>,
    kets: Vec<SVector<C64, N>>,
    blocks: Vec<usize>,
}

pub type ProjectorSet1Q = ProjectorSet<2>;
pub type ProjectorSet2Q = ProjectorSet<4>;

impl ProjectorSet<2> {
    pub fn single_qubit() -> Self {
        Self::standard()
    }
}

impl ProjectorSet<4> {
    pub fn two_qubit() -> Self {
        Self::standard()
    }
}

impl<const N: usize> ProjectorSet<N> {
    /// The six single-qubit projections (`N = 2`) or their 36 products
    /// (`N = 4`, trigger label first).
    pub fn standard() -> Self {
        let mut set = Self {
            labels: Vec::new(),
            kets: Vec::new(),
            blocks: Vec::new(),
        };
        match N {
            2 => {
                for p in Polarization::ALL {
                    set.labels.push(p.symbol().to_string());
                    set.kets.push(SVector::from_iterator(p.ket().iter().cloned()));
                    set.blocks.push(p.basis());
                }
            }
            4 => {
                for a in Polarization::ALL {
                    for b in Polarization::ALL {
                        set.labels.push(format!("{}{}", a.symbol(), b.symbol()));
                        let ket = crate::qstate::kron_ket(&a.ket(), &b.ket());
                        set.kets.push(SVector::from_iterator(ket.iter().cloned()));
                        set.blocks.push(3 * a.basis() + b.basis());
                    }
                }
            }
            _ => panic!("projector sets exist for one or two qubits only"),
        }
        set
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kets(&self) -> &[SVector<C64, N>] {
        &self.kets
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of complete measurement bases (3 or 9).
    pub fn block_count(&self) -> usize {
        self.blocks.iter().max().map_or(0, |b| b + 1)
    }
}

/// Photon counts per projector label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRecord {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    /// Expected counts for a unit-probability projection.
    pub n0: f64,
    pub seed: u64,
}

impl CountRecord {
    /// Counts reordered to match `set`, as floats.
    pub fn aligned<const N: usize>(&self, set: &ProjectorSet<N>) -> Result<Vec<f64>> {
        if self.labels.len() != self.counts.len() {
            return Err(RspError::InvalidCounts(format!(
                "{} labels but {} counts",
                self.labels.len(),
                self.counts.len()
            )));
        }
        if self.labels.len() != set.len() {
            return Err(RspError::InvalidCounts(format!(
                "expected {} projections, found {}",
                set.len(),
                self.labels.len()
            )));
        }
        set.labels
            .iter()
            .map(|wanted| {
                let mut hits = self.labels.iter().zip(&self.counts).filter(|(l, _)| *l == wanted);
                match (hits.next(), hits.next()) {
                    (Some((_, &n)), None) => Ok(n as f64),
                    (None, _) => Err(RspError::InvalidCounts(format!("missing label {wanted}"))),
                    (Some(_), Some(_)) => {
                        Err(RspError::InvalidCounts(format!("duplicate label {wanted}")))
                    }
                }
            })
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Detector efficiency and accidental background, off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Mean background counts added to every setting.
    pub background: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            background: 0.0,
        }
    }
}

fn born_probabilities<const N: usize>(rho: &DensityMatrix<N>, set: &ProjectorSet<N>) -> Vec<f64> {
    set.kets.iter().map(|k| rho.probability(k).max(0.0)).collect()
}

pub fn simulate_counts<const N: usize>(
    rho: &DensityMatrix<N>,
    set: &ProjectorSet<N>,
    n0: f64,
    seed: u64,
) -> Result<CountRecord> {
    simulate_counts_with(rho, set, n0, seed, &DetectorModel::default())
}

/// Poisson counts with mean `efficiency · N0 · Tr(ρ P) + background`.
pub fn simulate_counts_with<const N: usize>(
    rho: &DensityMatrix<N>,
    set: &ProjectorSet<N>,
    n0: f64,
    seed: u64,
    detector: &DetectorModel,
) -> Result<CountRecord> {
    rho.ensure_normalized()?;
    if !(n0 > 0.0) {
        return Err(RspError::OutOfRange {
            name: "n0",
            value: n0,
            range: "(0, ∞)",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = born_probabilities(rho, set)
        .into_iter()
        .map(|p| {
            let mean = detector.efficiency * n0 * p + detector.background;
            if mean <= 0.0 {
                return Ok(0);
            }
            let poisson = Poisson::new(mean)
                .map_err(|e| RspError::Invalid(format!("Poisson mean {mean}: {e}")))?;
            Ok(poisson.sample(&mut rng) as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(CountRecord {
        labels: set.labels.clone(),
        counts,
        n0,
        seed,
    })
}

/// Noiseless record: expectation values rounded to the nearest integer.
pub fn expected_counts<const N: usize>(
    rho: &DensityMatrix<N>,
    set: &ProjectorSet<N>,
    n0: f64,
) -> Result<CountRecord> {
    rho.ensure_normalized()?;
    Ok(CountRecord {
        labels: set.labels.clone(),
        counts: born_probabilities(rho, set)
            .into_iter()
            .map(|p| (n0 * p).round() as u64)
            .collect(),
        n0,
        seed: 0,
    })
}

/// Orthonormal Hermitian operator basis (normalized Pauli products).
fn operator_basis<const N: usize>() -> Vec<SMatrix<C64, N, N>> {
    let scale = c(1.0 / (N as f64).sqrt(), 0.0);
    match N {
        2 => (0..4)
            .map(|i| from_dynamic(&to_dynamic(&pauli(i))) * scale)
            .collect(),
        4 => (0..16)
            .map(|k| from_dynamic(&to_dynamic(&kron2(&pauli(k / 4), &pauli(k % 4)))) * scale)
            .collect(),
        _ => panic!("operator basis exists for one or two qubits only"),
    }
}

/// Relative frequency of each projection within its measurement basis.
fn basis_frequencies<const N: usize>(counts: &[f64], set: &ProjectorSet<N>) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; set.block_count()];
    for (n, &b) in counts.iter().zip(&set.blocks) {
        totals[b] += n;
    }
    if let Some(b) = totals.iter().position(|&t| t <= 0.0) {
        return Err(RspError::InvalidCounts(format!(
            "no counts in measurement basis {b}"
        )));
    }
    Ok(counts
        .iter()
        .zip(&set.blocks)
        .map(|(n, &b)| n / totals[b])
        .collect())
}

/// Least-squares Hermitian matrix reproducing the per-basis relative
/// frequencies. Not necessarily positive.
pub fn linear_inversion<const N: usize>(
    counts: &CountRecord,
    set: &ProjectorSet<N>,
) -> Result<SMatrix<C64, N, N>> {
    let frequencies = basis_frequencies(&counts.aligned(set)?, set)?;
    let basis = operator_basis::<N>();
    let design = DMatrix::from_fn(set.len(), basis.len(), |row, col| {
        let k = &set.kets[row];
        (k.adjoint() * basis[col] * k)[(0, 0)].re
    });
    let coefficients = design
        .svd(true, true)
        .solve(&DVector::from_vec(frequencies), 1e-12)
        .map_err(|e| RspError::Invalid(e.to_string()))?;
    let m = basis
        .iter()
        .zip(coefficients.iter())
        .fold(SMatrix::zeros(), |acc, (b, &r)| acc + b * c(r, 0.0));
    Ok((m + m.adjoint()) * c(0.5, 0.0))
}

/// Physical state nearest in spectrum: negative eigenvalues set to zero,
/// then renormalized.
fn clamp_to_physical<const N: usize>(m: &SMatrix<C64, N, N>) -> DensityMatrix<N> {
    let (values, vectors) = hermitian_eigen(m);
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return DensityMatrix::maximally_mixed();
    }
    let diag = SMatrix::<C64, N, N>::from_diagonal(&SVector::from_fn(|i, _| c(clamped[i] / total, 0.0)));
    DensityMatrix::from_hermitian(vectors * diag * vectors.adjoint())
}

/// Lower-triangular `T` with `ρ = T†T`, packed as the diagonal followed by
/// (re, im) of each sub-diagonal entry.
fn pack_triangular<const N: usize>(rho: &DensityMatrix<N>) -> Vec<f64> {
    // Reverse-order Cholesky: JρJ = LL† gives ρ = (JLJ)(JLJ)†, T = (JLJ)†.
    let regular = rho.mix(&DensityMatrix::maximally_mixed(), 1.0 - 1e-6);
    let flipped = DMatrix::from_fn(N, N, |r, col| regular.matrix()[(N - 1 - r, N - 1 - col)]);
    let lower = flipped
        .cholesky()
        .expect("a full-rank density matrix has a Cholesky factor")
        .l();
    let t = DMatrix::from_fn(N, N, |r, col| lower[(N - 1 - col, N - 1 - r)].conj());
    let mut x: Vec<f64> = (0..N).map(|i| t[(i, i)].re).collect();
    for r in 1..N {
        for col in 0..r {
            x.push(t[(r, col)].re);
            x.push(t[(r, col)].im);
        }
    }
    x
}

fn unpack_triangular<const N: usize>(x: &[f64]) -> SMatrix<C64, N, N> {
    let mut t = SMatrix::<C64, N, N>::zeros();
    for i in 0..N {
        t[(i, i)] = c(x[i], 0.0);
    }
    let mut k = N;
    for r in 1..N {
        for col in 0..r {
            t[(r, col)] = c(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn state_from_params<const N: usize>(x: &[f64]) -> Option<DensityMatrix<N>> {
    let t = unpack_triangular::<N>(x);
    let m = t.adjoint() * t;
    let trace = m.trace().re;
    (trace > 0.0).then(|| DensityMatrix::from_hermitian(m / c(trace, 0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult<const N: usize> {
    #[serde(rename = "matrix")]
    pub rho_hat: DensityMatrix<N>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Maximum-likelihood density matrix, physical by construction.
///
/// Minimizes `Σ (N̂ p - n)² / (2 N̂ p)` over `ρ = T†T / Tr(T†T)`, where `N̂`
/// is the total count divided by the number of measurement bases. Starts
/// from the clamped linear inversion.
pub fn mle_reconstruct<const N: usize>(
    counts: &CountRecord,
    set: &ProjectorSet<N>,
) -> Result<TomographyResult<N>> {
    let observed = counts.aligned(set)?;
    let total: f64 = observed.iter().sum();
    if !(total > 0.0) {
        return Err(RspError::InvalidCounts("no counts recorded".into()));
    }
    let scale = total / set.block_count() as f64;
    let start = clamp_to_physical(&linear_inversion(counts, set)?);

    let objective = |x: &[f64]| -> f64 {
        let Some(rho) = state_from_params::<N>(x) else {
            return f64::INFINITY;
        };
        set.kets
            .iter()
            .zip(&observed)
            .map(|(k, &n)| {
                let expected = scale * rho.probability(k).max(PROBABILITY_FLOOR);
                (expected - n).powi(2) / (2.0 * expected)
            })
            .sum()
    };

    let optimizer = NelderMead {
        initial_step: 0.05,
        ftol: 1e-10,
        xtol: 1e-13,
        max_evaluations: 100_000,
        restarts: 6,
    };
    let best = optimizer.minimize(objective, &pack_triangular(&start));
    if !best.converged {
        return Err(RspError::TomographyNotConverged {
            evaluations: best.evaluations,
            objective: best.value,
        });
    }
    let rho_hat = state_from_params::<N>(&best.x).ok_or(RspError::TomographyNotConverged {
        evaluations: best.evaluations,
        objective: best.value,
    })?;
    Ok(TomographyResult {
        rho_hat,
        log_likelihood: -best.value,
        iterations: best.evaluations,
    })
}

/// SplitMix64 mix of a base seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub resource: ResourceSpec,
    pub retardances: PlateRetardances,
    pub n0: f64,
    pub seed: u64,
    pub detector: DetectorModel,
}

impl ExperimentConfig {
    pub fn new(resource: ResourceSpec, retardances: PlateRetardances, n0: f64, seed: u64) -> Self {
        Self {
            resource,
            retardances,
            n0,
            seed,
            detector: DetectorModel::default(),
        }
    }
}

/// The entangled source as built and as reconstructed from 36 settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceCharacterization {
    pub truth: DensityMatrix2Q,
    pub counts: CountRecord,
    pub tomography: TomographyResult<4>,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRun {
    pub index: usize,
    pub target: TargetState,
    pub settings: PrepSettings,
    /// Prediction from the reconstructed resource and the chosen settings.
    pub expected: DensityMatrix1Q,
    /// Conditional state actually delivered by the true resource.
    pub delivered: DensityMatrix1Q,
    pub counts: CountRecord,
    pub tomography: TomographyResult<2>,
    /// Fidelity between `expected` and the reconstructed state.
    pub fidelity: f64,
    /// Fidelity between the requested target and the reconstructed state.
    pub target_fidelity: f64,
}

/// Simulated preparation experiment: characterize the source once, then
/// choose settings, prepare and tomograph each target.
#[derive(Debug, Clone)]
pub struct RspExperiment {
    config: ExperimentConfig,
    resource: ResourceCharacterization,
}

impl RspExperiment {
    pub fn characterize(config: ExperimentConfig) -> Result<Self> {
        let truth = make_resource(&config.resource)?;
        let set = ProjectorSet2Q::two_qubit();
        let counts = simulate_counts_with(
            &truth,
            &set,
            config.n0,
            derive_seed(config.seed, 0),
            &config.detector,
        )?;
        let tomography = mle_reconstruct(&counts, &set)?;
        let fidelity = fidelity_unchecked(&truth, &tomography.rho_hat);
        Ok(Self {
            config,
            resource: ResourceCharacterization {
                truth,
                counts,
                tomography,
                fidelity,
            },
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn resource(&self) -> &ResourceCharacterization {
        &self.resource
    }

    /// Settings chosen by optimizing against the reconstructed resource.
    pub fn run_target(&self, index: usize, target: &TargetState) -> Result<TargetRun> {
        let settings = optimize_settings(
            &self.resource.tomography.rho_hat,
            &self.config.retardances,
            target,
        )?;
        self.run_with_settings(index, target, settings)
    }

    /// Prepares `target` with fixed trigger settings.
    pub fn run_with_settings(
        &self,
        index: usize,
        target: &TargetState,
        settings: PrepSettings,
    ) -> Result<TargetRun> {
        let model = &self.resource.tomography.rho_hat;
        let plates = &self.config.retardances;
        let (expected, _) = predict_rpq(model, &settings, plates)?;
        let (delivered, _) = predict_rpq(&self.resource.truth, &settings, plates)?;
        let set = ProjectorSet1Q::single_qubit();
        let counts = simulate_counts_with(
            &delivered,
            &set,
            self.config.n0,
            derive_seed(self.config.seed, index as u64 + 1),
            &self.config.detector,
        )?;
        let tomography = mle_reconstruct(&counts, &set)?;
        let fidelity = fidelity_unchecked(&expected, &tomography.rho_hat);
        let target_fidelity = fidelity_unchecked(&target.density(), &tomography.rho_hat);
        Ok(TargetRun {
            index,
            target: *target,
            settings,
            expected,
            delivered,
            counts,
            tomography,
            fidelity,
            target_fidelity,
        })
    }

    /// All targets, concurrently; results are ordered by target index.
    pub fn run_all(&self, targets: &[TargetState]) -> Result<Vec<TargetRun>> {
        targets
            .par_iter()
            .enumerate()
            .map(|(i, t)| self.run_target(i, t))
            .collect()
    }
}

/// One end-to-end run for a single target.
pub fn rsp_experiment(config: &ExperimentConfig, target: &TargetState) -> Result<TargetRun> {
    RspExperiment::characterize(*config)?.run_target(0, target)
}

/// Eighteen targets: six points along each of the H/V, D/A and R/L axes,
/// at signed Poincaré radii ±1, ±0.6 and ±0.2.
pub fn axis_sweep_targets() -> Vec<TargetState> {
    let radii = [1.0, 0.6, 0.2, -0.2, -0.6, -1.0];
    let mut targets = Vec::with_capacity(18);
    for axis in [2usize, 0, 1] {
        for r in radii {
            let mut s = [0.0; 3];
            s[axis] = r;
            targets.push(
                TargetState::from_bloch(&crate::qstate::BlochVector::new(s[0], s[1], s[2]).expect("unit ball"))
                    .expect("unit ball"),
            );
        }
    }
    targets
}
