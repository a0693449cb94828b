//! The remote-preparation protocol: the trigger arm (QWP, HWP, partial
//! polarizer) acting on Alice's half of an entangled pair, settings for a
//! requested target state, and the conditional state delivered to Bob.
//!
//! Conditioning is on transmission through the partial polarizer, whose
//! filter axis is `|D>`. The rejected port is only used for feedforward.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Matrix2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RspError};
use crate::optics::{compose, FilterMixture, JonesElement, LocalFilter, PartialPolarizer, WavePlate};
use crate::qstate::{
    apply_alice, bloch_unchecked, c, fidelity_unchecked, kets, partial_trace_a, pauli,
    BlochVector, DensityMatrix, DensityMatrix1Q, DensityMatrix2Q, PureQubit,
    C64,
};
use crate::simplex::NelderMead;

/// Mixed target `(1-λ)|ψ(θ,φ)><ψ(θ,φ)| + (λ/2) I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub theta: f64,
    pub phi: f64,
    pub lam: f64,
}

impl TargetState {
    pub fn new(theta: f64, phi: f64, lam: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lam) {
            return Err(RspError::OutOfRange {
                name: "lambda",
                value: lam,
                range: "[0, 1]",
            });
        }
        Ok(Self { theta, phi, lam })
    }

    /// Target whose Poincaré-sphere coordinates are `s`. The origin maps to
    /// `θ = φ = 0, λ = 1`.
    pub fn from_bloch(s: &BlochVector) -> Result<Self> {
        let length = s.length();
        if length > 1.0 + 1e-9 {
            return Err(RspError::BlochOutsideBall { length });
        }
        if length < 1e-15 {
            return Ok(Self {
                theta: 0.0,
                phi: 0.0,
                lam: 1.0,
            });
        }
        let pure = PureQubit::from_direction(s)?;
        Ok(Self {
            theta: pure.theta,
            phi: pure.phi,
            lam: (1.0 - length).max(0.0),
        })
    }

    pub fn pure_state(&self) -> PureQubit {
        PureQubit::new(self.theta, self.phi)
    }

    pub fn bloch(&self) -> BlochVector {
        let s = self.pure_state().bloch().to_array();
        let r = 1.0 - self.lam;
        BlochVector::from_array([r * s[0], r * s[1], r * s[2]])
    }

    pub fn density(&self) -> DensityMatrix1Q {
        let pure = self.pure_state().density();
        pure.mix(&DensityMatrix1Q::maximally_mixed(), 1.0 - self.lam)
    }
}

/// Retardances of the trigger-arm plates at the trigger wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateRetardances {
    pub qwp: f64,
    pub hwp: f64,
}

impl PlateRetardances {
    pub fn ideal() -> Self {
        Self {
            qwp: FRAC_PI_2,
            hwp: PI,
        }
    }

    /// Ideal plates cut for `design_nm` used at `operating_nm`.
    pub fn scaled(design_nm: f64, operating_nm: f64) -> Self {
        let factor = design_nm / operating_nm;
        Self {
            qwp: FRAC_PI_2 * factor,
            hwp: PI * factor,
        }
    }
}

impl Default for PlateRetardances {
    fn default() -> Self {
        Self::ideal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepSettings {
    pub qwp_angle: f64,
    pub hwp_angle: f64,
    pub t_d: f64,
    pub t_a: f64,
    pub predicted_fidelity: f64,
    pub success_probability: f64,
}

impl PrepSettings {
    /// Plate angles and transmissions only; the predictions are left at zero.
    pub fn from_controls(qwp_angle: f64, hwp_angle: f64, t_d: f64, t_a: f64) -> Self {
        Self {
            qwp_angle,
            hwp_angle,
            t_d,
            t_a,
            predicted_fidelity: 0.0,
            success_probability: 0.0,
        }
    }
}

/// Which port of the partial polarizer fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerOutcome {
    /// Transmitted through the polarizer (the `D`-like outcome).
    Transmitted,
    /// Rejected by the polarizer (the `A`-like outcome).
    Rejected,
}

/// `cos ε |HH> + e^{iφ} sin ε |VV>` mixed with white noise of weight `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub epsilon: f64,
    pub rel_phase: f64,
    pub white_noise: f64,
}

impl ResourceSpec {
    pub fn ideal() -> Self {
        Self {
            epsilon: FRAC_PI_4,
            rel_phase: 0.0,
            white_noise: 0.0,
        }
    }

    pub fn with_white_noise(white_noise: f64) -> Self {
        Self {
            white_noise,
            ..Self::ideal()
        }
    }
}

pub fn make_resource(spec: &ResourceSpec) -> Result<DensityMatrix2Q> {
    if !(0.0..=1.0).contains(&spec.white_noise) {
        return Err(RspError::OutOfRange {
            name: "white_noise",
            value: spec.white_noise,
            range: "[0, 1]",
        });
    }
    let chi = Vector4::new(
        c(spec.epsilon.cos(), 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        C64::from_polar(spec.epsilon.sin(), spec.rel_phase),
    );
    let pure = DensityMatrix::from_ket(&chi);
    Ok(pure.mix(&DensityMatrix2Q::maximally_mixed(), 1.0 - spec.white_noise))
}

fn polarizer_axis() -> PureQubit {
    PureQubit::new(0.0, 0.0)
}

/// Kraus operator of the whole trigger arm for one polarizer outcome.
pub fn trigger_filter(
    settings: &PrepSettings,
    retardances: &PlateRetardances,
    outcome: TriggerOutcome,
) -> Result<LocalFilter> {
    let qwp = WavePlate::new(settings.qwp_angle, retardances.qwp)?;
    let hwp = WavePlate::new(settings.hwp_angle, retardances.hwp)?;
    let polarizer = PartialPolarizer::new(settings.t_d, settings.t_a)?;
    let port = match outcome {
        TriggerOutcome::Transmitted => polarizer.kraus(&polarizer_axis()),
        TriggerOutcome::Rejected => polarizer.rejected_kraus(&polarizer_axis()),
    };
    compose(&[&qwp, &hwp, &port])
}

/// Bob's normalized state conditioned on a transmitted trigger, and the
/// probability of that event.
pub fn predict_rpq(
    resource: &DensityMatrix2Q,
    settings: &PrepSettings,
    retardances: &PlateRetardances,
) -> Result<(DensityMatrix1Q, f64)> {
    predict_rpq_outcome(resource, settings, retardances, TriggerOutcome::Transmitted)
}

pub fn predict_rpq_outcome(
    resource: &DensityMatrix2Q,
    settings: &PrepSettings,
    retardances: &PlateRetardances,
    outcome: TriggerOutcome,
) -> Result<(DensityMatrix1Q, f64)> {
    let filter = trigger_filter(settings, retardances, outcome)?;
    condition_on(resource, &filter)
}

fn condition_on(resource: &DensityMatrix2Q, filter: &LocalFilter) -> Result<(DensityMatrix1Q, f64)> {
    let bob = partial_trace_a(&apply_alice(resource, filter));
    let probability = bob.trace();
    Ok((bob.normalized()?, probability))
}

/// Transmissions for mixedness `λ` with `t_d = 1`: `(1 - t_a)/(1 + t_a) = 1 - λ`.
pub fn transmissions_for(lam: f64) -> (f64, f64) {
    (1.0, lam / (2.0 - lam))
}

/// Closed-form settings for ideal plates and the `|φ+>` resource.
///
/// On `|φ+>` a trigger projected onto `|χ>` leaves Bob in `|χ*>`, so the
/// plates must rotate `|ψ*>` onto the polarizer axis `|D>`. The QWP is set
/// along the major axis of that ellipse, which makes it linear; the HWP
/// then turns the linear state onto 45°.
pub fn ideal_settings(target: &TargetState) -> PrepSettings {
    let (t_d, t_a) = transmissions_for(target.lam);
    let (qwp_angle, hwp_angle) = if target.lam >= 1.0 {
        (0.0, 0.0)
    } else {
        let chi = target.pure_state().ket().map(|z| z.conj());
        let s = bloch_unchecked(&DensityMatrix::from_ket(&chi));
        let qwp_angle = 0.5 * s.s1.atan2(s.s3);
        let linear = WavePlate::quarter_wave(qwp_angle).jones() * chi;
        let s = bloch_unchecked(&DensityMatrix::from_ket(&linear));
        let hwp_angle = 0.5 * (0.5 * s.s1.atan2(s.s3) + FRAC_PI_4);
        (qwp_angle.rem_euclid(PI), hwp_angle.rem_euclid(PI))
    };
    let mut settings = PrepSettings::from_controls(qwp_angle, hwp_angle, t_d, t_a);
    let resource = DensityMatrix::from_ket(&kets::phi_plus());
    let (bob, probability) = predict_rpq(&resource, &settings, &PlateRetardances::ideal())
        .expect("the ideal trigger arm transmits at least half of the pairs");
    settings.predicted_fidelity = fidelity_unchecked(&target.density(), &bob);
    settings.success_probability = probability;
    settings
}

const RATIO_STARTS: [f64; 3] = [PI / 12.0, PI / 4.0, 5.0 * PI / 12.0];

/// Fidelity-maximizing trigger settings for a measured resource and
/// measured plate retardances.
///
/// Starts from the closed-form ideal settings plus a fixed 5×5×3 grid over
/// (QWP angle, HWP angle, `t_a`) with `t_d = 1`, refines each start with
/// Nelder–Mead and keeps the best result (ties go to the lower start index).
pub fn optimize_settings(
    resource: &DensityMatrix2Q,
    retardances: &PlateRetardances,
    target: &TargetState,
) -> Result<PrepSettings> {
    WavePlate::new(0.0, retardances.qwp)?;
    WavePlate::new(0.0, retardances.hwp)?;
    let wanted = target.density();

    let controls = |x: &[f64]| {
        let t_a = x[2].sin().powi(2);
        PrepSettings::from_controls(x[0], x[1], 1.0, t_a)
    };
    let infidelity = |x: &[f64]| match predict_rpq(resource, &controls(x), retardances) {
        Ok((bob, _)) => 1.0 - fidelity_unchecked(&wanted, &bob),
        Err(_) => 2.0,
    };

    let ideal = ideal_settings(target);
    let mut starts = vec![[ideal.qwp_angle, ideal.hwp_angle, ideal.t_a.sqrt().asin()]];
    for i in 0..5 {
        for j in 0..5 {
            for &u in &RATIO_STARTS {
                starts.push([i as f64 * PI / 5.0, j as f64 * PI / 5.0, u]);
            }
        }
    }

    let optimizer = NelderMead {
        initial_step: 0.2,
        ftol: 1e-10,
        xtol: 1e-10,
        max_evaluations: 20_000,
        restarts: 2,
    };
    let runs: Vec<_> = starts
        .par_iter()
        .map(|start| optimizer.minimize(infidelity, start))
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)))
        .map(|(_, run)| run)
        .expect("at least one start");

    let mut settings = controls(&best.x);
    settings.qwp_angle = settings.qwp_angle.rem_euclid(PI);
    settings.hwp_angle = settings.hwp_angle.rem_euclid(PI);
    let (bob, probability) = predict_rpq(resource, &settings, retardances)?;
    settings.predicted_fidelity = fidelity_unchecked(&wanted, &bob);
    settings.success_probability = probability;
    if !best.converged {
        return Err(RspError::SettingsNotConverged {
            best: Box::new(settings),
        });
    }
    Ok(settings)
}

/// Great circle of the Poincaré sphere, identified by its unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreatCircle {
    normal: BlochVector,
}

impl GreatCircle {
    pub fn new(normal: BlochVector) -> Result<Self> {
        let length = normal.length();
        if !(length > 0.0) {
            return Err(RspError::Invalid("great-circle normal must be nonzero".into()));
        }
        let n = normal.to_array().map(|x| x / length);
        Ok(Self {
            normal: BlochVector::from_array(n),
        })
    }

    /// The circle through D, A, R and L (normal along H/V).
    pub fn equatorial() -> Self {
        Self {
            normal: BlochVector::from_array([0.0, 0.0, 1.0]),
        }
    }

    /// The circle of linear polarizations H, V, D and A (normal along R/L).
    pub fn linear() -> Self {
        Self {
            normal: BlochVector::from_array([0.0, 1.0, 0.0]),
        }
    }

    pub fn normal(&self) -> BlochVector {
        self.normal
    }

    /// `n·σ`: a π rotation about the normal, which sends every point of the
    /// circle to its antipode.
    pub fn correction(&self) -> Matrix2<C64> {
        pauli(1) * c(self.normal.s1, 0.0)
            + pauli(2) * c(self.normal.s2, 0.0)
            + pauli(3) * c(self.normal.s3, 0.0)
    }
}

/// Bob's correction after Alice reports which port fired. Only states whose
/// Bloch vector lies in the plane of `circle` can be corrected.
pub fn feedforward_correct(
    state: &DensityMatrix1Q,
    outcome: TriggerOutcome,
    circle: &GreatCircle,
) -> Result<DensityMatrix1Q> {
    let s = crate::qstate::bloch_from_state(state)?;
    let residual = s.dot(&circle.normal).abs();
    if residual > 1e-9 {
        return Err(RspError::OffCircle { residual });
    }
    Ok(match outcome {
        TriggerOutcome::Transmitted => state.clone(),
        TriggerOutcome::Rejected => {
            let u = circle.correction();
            DensityMatrix::from_hermitian(u * state.matrix() * u.adjoint())
        }
    })
}

/// Bob's state after Alice applies a mixture of local filters, with the
/// total success probability.
pub fn mixture_rsp(
    resource: &DensityMatrix2Q,
    mixture: &FilterMixture,
) -> Result<(DensityMatrix1Q, f64)> {
    let total = mixture
        .terms()
        .iter()
        .map(|(p, m)| partial_trace_a(&apply_alice(resource, m)).scaled(*p))
        .fold(Matrix2::zeros(), |acc, term| acc + term.matrix());
    let bob = DensityMatrix::from_hermitian(total);
    let probability = bob.trace();
    Ok((bob.normalized()?, probability))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{bloch_from_state, fidelity, purity};
    use std::f64::consts::TAU;

    fn phi_plus() -> DensityMatrix2Q {
        DensityMatrix::from_ket(&kets::phi_plus())
    }

    fn max_abs(m: &Matrix2<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn resource_examples() {
        let ideal = make_resource(&ResourceSpec::ideal()).unwrap();
        assert!((fidelity(&ideal, &phi_plus()).unwrap() - 1.0).abs() < 1e-12);

        let noise = make_resource(&ResourceSpec::with_white_noise(1.0)).unwrap();
        let mixed = DensityMatrix2Q::maximally_mixed();
        assert!((noise.matrix() - mixed.matrix()).iter().all(|z| z.norm() < 1e-15));

        let spec = ResourceSpec {
            epsilon: PI / 3.0,
            ..ResourceSpec::ideal()
        };
        let unbalanced = make_resource(&spec).unwrap();
        assert!((unbalanced.matrix()[(0, 0)].re - 0.25).abs() < 1e-15);
        assert!((unbalanced.matrix()[(3, 3)].re - 0.75).abs() < 1e-15);
        let t = crate::qstate::tangle(&unbalanced).unwrap();
        // Pure state tangle 4|ab|² = 4·0.25·0.75.
        assert!((t - 0.75).abs() < 1e-10);

        assert!(make_resource(&ResourceSpec::with_white_noise(1.5)).is_err());
    }

    #[test]
    fn ideal_settings_for_diagonal_target() {
        let target = TargetState::new(0.0, 0.0, 0.0).unwrap();
        let s = ideal_settings(&target);
        assert_eq!((s.t_d, s.t_a), (1.0, 0.0));
        let filter = trigger_filter(&s, &PlateRetardances::ideal(), TriggerOutcome::Transmitted)
            .unwrap();
        // Plates act as the identity up to phase: the filter is |D><D|.
        let d = kets::d();
        let projector = d * d.adjoint();
        let phase = filter.matrix()[(0, 0)] / projector[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(max_abs(&(filter.matrix() - projector * phase)) < 1e-12);

        let (bob, p) = predict_rpq(&phi_plus(), &s, &PlateRetardances::ideal()).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!(max_abs(&(bob.matrix() - DensityMatrix::from_ket(&d).matrix())) < 1e-12);
    }

    #[test]
    fn ideal_settings_fully_mixed_target() {
        let target = TargetState::new(0.9, 2.0, 1.0).unwrap();
        let s = ideal_settings(&target);
        assert_eq!((s.qwp_angle, s.hwp_angle, s.t_d, s.t_a), (0.0, 0.0, 1.0, 1.0));
        let (bob, p) = predict_rpq(&phi_plus(), &s, &PlateRetardances::ideal()).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(bloch_from_state(&bob).unwrap().length() < 1e-12);
    }

    #[test]
    fn ideal_settings_half_mixed_circular_target() {
        let target = TargetState::new(FRAC_PI_4, FRAC_PI_2, 0.5).unwrap();
        let s = ideal_settings(&target);
        let (bob, _) = predict_rpq(&phi_plus(), &s, &PlateRetardances::ideal()).unwrap();
        assert!((bloch_from_state(&bob).unwrap().length() - 0.5).abs() < 1e-12);
        assert!(fidelity(&target.density(), &bob).unwrap() >= 1.0 - 1e-10);
        assert!(s.predicted_fidelity >= 1.0 - 1e-10);
    }

    #[test]
    fn open_polarizer_gives_maximally_mixed_state() {
        let s = PrepSettings::from_controls(0.4, 1.1, 1.0, 1.0);
        let (bob, p) = predict_rpq(&phi_plus(), &s, &PlateRetardances::ideal()).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(bloch_from_state(&bob).unwrap().length() < 1e-12);
    }

    #[test]
    fn partial_polarizer_with_identity_plates() {
        // QWP and HWP with fast axes on D act trivially on D and A up to phase.
        let s = PrepSettings::from_controls(FRAC_PI_4, FRAC_PI_4, 0.75, 0.25);
        let (bob, p) = predict_rpq(&phi_plus(), &s, &PlateRetardances::ideal()).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!((bob.matrix()[(0, 1)].re - 0.25).abs() < 1e-12);
        assert!((bob.matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn null_event_is_an_error() {
        let hh = DensityMatrix::from_ket(&crate::qstate::kron_ket(&kets::a(), &kets::h()));
        let s = PrepSettings::from_controls(FRAC_PI_4, FRAC_PI_4, 1.0, 0.0);
        assert!(matches!(
            predict_rpq(&hh, &s, &PlateRetardances::ideal()),
            Err(RspError::NullEvent { .. })
        ));
    }

    #[test]
    fn target_bloch_round_trip() {
        for &(theta, phi, lam) in &[(0.3, 0.2, 0.1), (1.0, -2.5, 0.7), (0.0, 0.0, 0.0)] {
            let t = TargetState::new(theta, phi, lam).unwrap();
            let direct = bloch_from_state(&t.density()).unwrap();
            assert!(direct.distance(&t.bloch()) < 1e-14);
            let back = TargetState::from_bloch(&t.bloch()).unwrap();
            assert!((fidelity(&back.density(), &t.density()).unwrap() - 1.0).abs() < 1e-12);
            assert!((purity(&t.density()).unwrap() - 0.5 * (1.0 + (1.0 - lam).powi(2))).abs() < 1e-12);
        }
        assert!(TargetState::new(0.0, 0.0, 1.5).is_err());
        let origin = TargetState::from_bloch(&BlochVector::default()).unwrap();
        assert_eq!(origin.lam, 1.0);
    }

    #[test]
    fn optimizer_matches_ideal_settings() {
        let target = TargetState::new(0.4, 1.3, 0.2).unwrap();
        let s = optimize_settings(&phi_plus(), &PlateRetardances::ideal(), &target).unwrap();
        assert!(s.predicted_fidelity >= 1.0 - 1e-9);
        assert!((s.success_probability - ideal_settings(&target).success_probability).abs() < 1e-4);
    }

    #[test]
    fn optimizer_reaches_the_ellipsoid_limit_on_noisy_resources() {
        use crate::bounds::{max_fidelity_pure_target, tetra_state, TetrahedronState};
        for t in [
            TetrahedronState::new(0.9, -0.9, 0.9).unwrap(),
            TetrahedronState::new(0.8, -0.6, 0.5).unwrap(),
        ] {
            let resource = tetra_state(&t);
            for &(theta, phi) in &[(0.0, 0.0), (0.3, 1.1), (FRAC_PI_4, FRAC_PI_2), (1.2, 4.0)] {
                let target = TargetState::new(theta, phi, 0.0).unwrap();
                let s = optimize_settings(&resource, &PlateRetardances::ideal(), &target).unwrap();
                let limit = max_fidelity_pure_target(&t, &target.bloch());
                assert!(
                    (s.predicted_fidelity - limit).abs() < 1e-6,
                    "t={:?} theta={theta} phi={phi}: {} vs {limit}",
                    t.t(),
                    s.predicted_fidelity
                );
            }
        }
    }

    #[test]
    fn optimizer_handles_off_design_plates() {
        let plates = PlateRetardances::scaled(702.0, 670.0);
        for &(theta, phi) in &[(0.0, 0.0), (FRAC_PI_4, FRAC_PI_2), (0.6, 2.2)] {
            let target = TargetState::new(theta, phi, 0.0).unwrap();
            let s = optimize_settings(&phi_plus(), &plates, &target).unwrap();
            assert!(s.predicted_fidelity > 0.99, "{theta} {phi}: {}", s.predicted_fidelity);
        }
    }

    #[test]
    fn optimizer_rejects_bad_retardance() {
        let target = TargetState::new(0.0, 0.0, 0.0).unwrap();
        let plates = PlateRetardances { qwp: -1.0, hwp: PI };
        assert!(optimize_settings(&phi_plus(), &plates, &target).is_err());
    }

    #[test]
    fn feedforward_fixes_rejected_outcomes_on_the_equator() {
        let circle = GreatCircle::equatorial();
        let rho = DensityMatrix::from_ket(&kets::d());
        let same = feedforward_correct(&rho, TriggerOutcome::Transmitted, &circle).unwrap();
        assert_eq!(same, rho);

        // |ψ(θ, π/2)> lies on the D/A–R/L circle.
        let psi = PureQubit::new(PI / 8.0, FRAC_PI_2);
        let fixed = feedforward_correct(&psi.orthogonal().density(), TriggerOutcome::Rejected, &circle)
            .unwrap();
        assert!((fidelity(&fixed, &psi.density()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feedforward_on_linear_circle() {
        let circle = GreatCircle::linear();
        let psi = PureQubit::new(PI / 8.0, 0.0);
        let fixed = feedforward_correct(&psi.orthogonal().density(), TriggerOutcome::Rejected, &circle)
            .unwrap();
        assert!((fidelity(&fixed, &psi.density()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feedforward_refuses_states_off_the_circle() {
        let psi = PureQubit::new(PI / 8.0, 0.3);
        let err = feedforward_correct(&psi.density(), TriggerOutcome::Rejected, &GreatCircle::equatorial());
        assert!(matches!(err, Err(RspError::OffCircle { .. })));
    }

    #[test]
    fn feedforward_sweep_reaches_unit_efficiency() {
        let circle = GreatCircle::equatorial();
        let resource = phi_plus();
        let plates = PlateRetardances::ideal();
        for k in 0..100 {
            let theta = k as f64 * PI / 100.0;
            let target = TargetState::new(theta, FRAC_PI_2, 0.0).unwrap();
            let settings = ideal_settings(&target);
            let mut efficiency = 0.0;
            for outcome in [TriggerOutcome::Transmitted, TriggerOutcome::Rejected] {
                let (bob, p) = predict_rpq_outcome(&resource, &settings, &plates, outcome).unwrap();
                let fixed = feedforward_correct(&bob, outcome, &circle).unwrap();
                assert!(fidelity(&fixed, &target.density()).unwrap() > 1.0 - 1e-10, "θ = {theta}");
                efficiency += p;
            }
            assert!((efficiency - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_of_d_and_a_projections_is_maximally_mixed() {
        let (d, a) = (kets::d(), kets::a());
        let mix = FilterMixture::new(vec![
            (0.5, LocalFilter::new(d * d.adjoint()).unwrap()),
            (0.5, LocalFilter::new(a * a.adjoint()).unwrap()),
        ])
        .unwrap();
        let (bob, p) = mixture_rsp(&phi_plus(), &mix).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!(bloch_from_state(&bob).unwrap().length() < 1e-12);
    }

    #[test]
    fn single_term_mixture_matches_prediction() {
        let target = TargetState::new(0.7, 0.4, 0.3).unwrap();
        let settings = ideal_settings(&target);
        let plates = PlateRetardances::ideal();
        let filter = trigger_filter(&settings, &plates, TriggerOutcome::Transmitted).unwrap();
        let mix = FilterMixture::new(vec![(1.0, filter)]).unwrap();
        let (a, pa) = mixture_rsp(&phi_plus(), &mix).unwrap();
        let (b, pb) = predict_rpq(&phi_plus(), &settings, &plates).unwrap();
        assert!((pa - pb).abs() < 1e-15);
        assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-15);
    }

    #[test]
    fn bloch_length_follows_transmission_ratio() {
        for &(t_d, t_a) in &[(1.0, 0.0), (0.9, 0.3), (0.2, 0.7), (0.5, 0.5)] {
            for &(q, h) in &[(0.0, 0.0), (0.3, 1.2), (FRAC_PI_4, TAU / 3.0)] {
                let s = PrepSettings::from_controls(q, h, t_d, t_a);
                let (bob, _) = predict_rpq(&phi_plus(), &s, &PlateRetardances::ideal()).unwrap();
                let len = bloch_from_state(&bob).unwrap().length();
                assert!((len - ((t_d - t_a) / (t_d + t_a)).abs()).abs() < 1e-12);
            }
        }
    }
}
