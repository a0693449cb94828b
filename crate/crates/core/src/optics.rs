//! Jones-calculus models of the trigger-arm elements: wave plates at
//! arbitrary retardance, the variable-strength partial polarizer, and
//! general local filters with their singular-value decomposition.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RspError};
use crate::qstate::{c, hermitian_eigen, PureQubit, C64, STATE_TOL};

/// Anything with a 2×2 Jones matrix.
pub trait JonesElement {
    fn jones(&self) -> Matrix2<C64>;
}

impl JonesElement for Matrix2<C64> {
    fn jones(&self) -> Matrix2<C64> {
        *self
    }
}

/// Real rotation by `angle`.
fn rotation(angle: f64) -> Matrix2<C64> {
    let (s, co) = angle.sin_cos();
    Matrix2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

/// Zero-order, dispersionless scaling `δ(λ) = δ_design · λ_design / λ`.
pub fn retardance_at(design_retardance: f64, design_wavelength: f64, operating_wavelength: f64) -> f64 {
    design_retardance * design_wavelength / operating_wavelength
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePlate {
    /// Fast-axis angle from horizontal, radians.
    pub fast_axis_angle: f64,
    /// Retardance at the operating wavelength, radians.
    pub retardance: f64,
}

impl WavePlate {
    pub fn new(fast_axis_angle: f64, retardance: f64) -> Result<Self> {
        if !(retardance > 0.0 && retardance < TAU) {
            return Err(RspError::OutOfRange {
                name: "retardance",
                value: retardance,
                range: "(0, 2π)",
            });
        }
        Ok(Self {
            fast_axis_angle,
            retardance,
        })
    }

    pub fn half_wave(fast_axis_angle: f64) -> Self {
        Self {
            fast_axis_angle,
            retardance: PI,
        }
    }

    pub fn quarter_wave(fast_axis_angle: f64) -> Self {
        Self {
            fast_axis_angle,
            retardance: FRAC_PI_2,
        }
    }

    /// Plate designed for `design_wavelength` used at `operating_wavelength`.
    pub fn off_design(
        fast_axis_angle: f64,
        design_retardance: f64,
        design_wavelength: f64,
        operating_wavelength: f64,
    ) -> Result<Self> {
        if !(design_wavelength > 0.0 && operating_wavelength > 0.0) {
            return Err(RspError::Invalid("wavelengths must be positive".into()));
        }
        Self::new(
            fast_axis_angle,
            retardance_at(design_retardance, design_wavelength, operating_wavelength),
        )
    }
}

impl JonesElement for WavePlate {
    /// `R(h) · diag(e^{-iδ/2}, e^{+iδ/2}) · R(-h)`.
    fn jones(&self) -> Matrix2<C64> {
        let half = 0.5 * self.retardance;
        let phases = Matrix2::new(
            C64::from_polar(1.0, -half),
            c(0.0, 0.0),
            c(0.0, 0.0),
            C64::from_polar(1.0, half),
        );
        rotation(self.fast_axis_angle) * phases * rotation(-self.fast_axis_angle)
    }
}

/// Polarizer with independent intensity transmissions for its filter axis
/// (`t_d`) and the orthogonal polarization (`t_a`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialPolarizer {
    pub t_d: f64,
    pub t_a: f64,
}

impl PartialPolarizer {
    pub fn new(t_d: f64, t_a: f64) -> Result<Self> {
        for (name, value) in [("t_d", t_d), ("t_a", t_a)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(RspError::OutOfRange {
                    name,
                    value,
                    range: "[0, 1]",
                });
            }
        }
        if t_d + t_a <= 0.0 {
            return Err(RspError::Invalid(
                "partial polarizer blocks both polarizations".into(),
            ));
        }
        Ok(Self { t_d, t_a })
    }

    /// `N = 1/(t_d + t_a)`.
    pub fn normalization(&self) -> f64 {
        1.0 / (self.t_d + self.t_a)
    }

    /// Transmitted-port Kraus operator `√t_d |ζ><ζ| + √t_a |ζ⊥><ζ⊥|`.
    pub fn kraus(&self, axis: &PureQubit) -> LocalFilter {
        two_port_filter(axis, self.t_d.sqrt(), self.t_a.sqrt())
    }

    /// Rejected-port Kraus operator `√(1-t_d) |ζ><ζ| + √(1-t_a) |ζ⊥><ζ⊥|`.
    pub fn rejected_kraus(&self, axis: &PureQubit) -> LocalFilter {
        two_port_filter(axis, (1.0 - self.t_d).sqrt(), (1.0 - self.t_a).sqrt())
    }
}

fn two_port_filter(axis: &PureQubit, along: f64, across: f64) -> LocalFilter {
    let zeta = axis.ket();
    let perp = axis.orthogonal().ket();
    LocalFilter {
        matrix: zeta * zeta.adjoint() * c(along, 0.0) + perp * perp.adjoint() * c(across, 0.0),
    }
}

/// Partial polarizer transmitting `t_d` of `|D>` and `t_a` of `|A>`.
pub fn partial_polarizer_kraus(pp: &PartialPolarizer, axis: &PureQubit) -> LocalFilter {
    pp.kraus(axis)
}

/// A single-qubit operation acting on the trigger qubit with singular values
/// no larger than one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFilter {
    matrix: Matrix2<C64>,
}

impl LocalFilter {
    pub fn new(matrix: Matrix2<C64>) -> Result<Self> {
        let singular_value = largest_singular_value(&matrix);
        if !(singular_value <= 1.0 + STATE_TOL) {
            return Err(RspError::UnphysicalFilter { singular_value });
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix2::identity(),
        }
    }

    /// Wraps a matrix already known to be a contraction.
    pub(crate) fn from_contraction(matrix: Matrix2<C64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.matrix
    }

    /// `M†M`.
    pub fn effect(&self) -> Matrix2<C64> {
        self.matrix.adjoint() * self.matrix
    }

    pub fn then(&self, next: &LocalFilter) -> LocalFilter {
        LocalFilter {
            matrix: next.matrix * self.matrix,
        }
    }
}

impl JonesElement for LocalFilter {
    fn jones(&self) -> Matrix2<C64> {
        self.matrix
    }
}

/// Largest singular value of a 2×2 matrix, from the eigenvalues of `M†M`.
pub(crate) fn largest_singular_value(m: &Matrix2<C64>) -> f64 {
    let e = m.adjoint() * m;
    let (a, d) = (e[(0, 0)].re, e[(1, 1)].re);
    let off = e[(0, 1)].norm();
    let top = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + off * off).sqrt();
    top.max(0.0).sqrt()
}

/// `M = V† · diag(d) · U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSvd {
    pub v: Matrix2<C64>,
    /// Singular values in descending order.
    pub d: [f64; 2],
    pub u: Matrix2<C64>,
}

impl FilterSvd {
    pub fn diagonal(&self) -> Matrix2<C64> {
        Matrix2::new(c(self.d[0], 0.0), c(0.0, 0.0), c(0.0, 0.0), c(self.d[1], 0.0))
    }

    pub fn reconstruct(&self) -> Matrix2<C64> {
        self.v.adjoint() * self.diagonal() * self.u
    }
}

/// Singular-value decomposition of a local filter as `V† D U`.
pub fn filter_svd(filter: &LocalFilter) -> FilterSvd {
    let svd = filter.matrix.svd(true, true);
    let mut left = svd.u.expect("u requested");
    let mut right = svd.v_t.expect("v_t requested");
    let mut d = [svd.singular_values[0], svd.singular_values[1]];
    if d[0] < d[1] {
        d.swap(0, 1);
        left.swap_columns(0, 1);
        right.swap_rows(0, 1);
    }
    FilterSvd {
        v: left.adjoint(),
        d,
        u: right,
    }
}

/// Diagonal filter `diag(a, b)` in the H/V basis.
pub fn procrustean(a: f64, b: f64) -> Result<LocalFilter> {
    for (name, value) in [("a", a), ("b", b)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(RspError::OutOfRange {
                name,
                value,
                range: "[0, 1]",
            });
        }
    }
    Ok(LocalFilter {
        matrix: Matrix2::new(c(a, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(b, 0.0)),
    })
}

/// Product of elements listed in propagation order (first element is the
/// first one the light meets).
pub fn compose(elements: &[&dyn JonesElement]) -> Result<LocalFilter> {
    if elements.is_empty() {
        return Err(RspError::Invalid("cannot compose an empty element list".into()));
    }
    let product = elements
        .iter()
        .fold(Matrix2::identity(), |acc, element| element.jones() * acc);
    LocalFilter::new(product)
}

/// Weighted collection of at most four local filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMixture {
    terms: Vec<(f64, LocalFilter)>,
}

impl FilterMixture {
    pub fn new(terms: Vec<(f64, LocalFilter)>) -> Result<Self> {
        if terms.is_empty() || terms.len() > 4 {
            return Err(RspError::InvalidMixture(format!(
                "needs between one and four filters, got {}",
                terms.len()
            )));
        }
        if let Some(&(p, _)) = terms.iter().find(|(p, _)| !(*p >= 0.0)) {
            return Err(RspError::InvalidMixture(format!("negative weight {p}")));
        }
        let total = terms
            .iter()
            .fold(Matrix2::zeros(), |acc, (p, m)| acc + m.effect() * c(*p, 0.0));
        let (values, _) = hermitian_eigen(&total);
        if values[1] > 1.0 + STATE_TOL {
            return Err(RspError::InvalidMixture(format!(
                "Σ p_i M_i†M_i exceeds the identity (largest eigenvalue {})",
                values[1]
            )));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[(f64, LocalFilter)] {
        &self.terms
    }
}
