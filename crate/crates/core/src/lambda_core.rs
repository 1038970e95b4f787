//! Λ-system state, parameters, and equations of motion.
//!
//! The model is a three-level atom with ground states |1⟩, |2⟩ and excited
//! state |3⟩. A P field drives |1⟩–|3⟩ and a B field drives |2⟩–|3⟩, both in
//! the rotating frame after the rotating-wave approximation. The atom's
//! static inhomogeneous detuning δ sits on level |3⟩ only, so the spin
//! transition |1⟩–|2⟩ carries no inhomogeneous phase.
//!
//! Rotating-frame Hamiltonian (rad/s, ħ = 1):
//!
//! ```text
//! H = -δ E33 - ½(Ω_P E13 + Ω_P* E31) - ½(Ω_B E23 + Ω_B* E32)
//! ```
//!
//! with E_ij = |i⟩⟨j|. The equation of motion is
//!
//! ```text
//! dρ/dt = -i[H, ρ] + D(ρ)
//! ```
//!
//! where D is a trace-preserving decay model: population leaves |3⟩ with
//! branching rates Γ31, Γ32 (and |2⟩ → |1⟩ with Γ21, normally zero), while
//! γ31, γ32, γ21 are the *total* coherence decay rates applied directly to
//! the off-diagonal elements.
//!
//! Expanded over the six independent elements (nine real equations), with
//! a = -Ω_P/2 and b = -Ω_B/2:
//!
//! ```text
//! dρ11 =  2 Im(a ρ13*)                      + Γ31 ρ33 + Γ21 ρ22
//! dρ22 =  2 Im(b ρ23*)                      + Γ32 ρ33 - Γ21 ρ22
//! dρ33 = -2 Im(a ρ13*) - 2 Im(b ρ23*)       - (Γ31+Γ32) ρ33
//! dρ12 = -i (a ρ23* - b* ρ13)               - γ21 ρ12
//! dρ13 = -i (a (ρ33-ρ11) - b ρ12 + δ ρ13)   - γ31 ρ13
//! dρ23 = -i (b (ρ33-ρ22) - a ρ12* + δ ρ23)  - γ32 ρ23
//! ```
//!
//! A free coherence therefore evolves as ρ13(t) = ρ13(0) e^(-iδt - γ31 t).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

/// Hermitian, dimensionless 3×3 density matrix of a single Λ atom.
///
/// Stores the three real populations and the three independent coherences;
/// the lower triangle is the conjugate of the upper by construction, so
/// Hermiticity is exact at all times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub c12: Complex64,
    pub c13: Complex64,
    pub c23: Complex64,
}

impl DensityMatrix {
    pub const ZERO: Self = Self {
        p1: 0.0,
        p2: 0.0,
        p3: 0.0,
        c12: Complex64::new(0.0, 0.0),
        c13: Complex64::new(0.0, 0.0),
        c23: Complex64::new(0.0, 0.0),
    };

    /// All population in |1⟩, no coherence. The standard initial state.
    pub fn ground() -> Self {
        Self {
            p1: 1.0,
            ..Self::ZERO
        }
    }

    pub fn from_populations(p1: f64, p2: f64, p3: f64) -> Self {
        Self {
            p1,
            p2,
            p3,
            ..Self::ZERO
        }
    }

    pub fn trace(&self) -> f64 {
        self.p1 + self.p2 + self.p3
    }

    /// Element ρ_ij with 1-based level indices.
    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        match (i, j) {
            (1, 1) => Complex64::new(self.p1, 0.0),
            (2, 2) => Complex64::new(self.p2, 0.0),
            (3, 3) => Complex64::new(self.p3, 0.0),
            (1, 2) => self.c12,
            (1, 3) => self.c13,
            (2, 3) => self.c23,
            (2, 1) => self.c12.conj(),
            (3, 1) => self.c13.conj(),
            (3, 2) => self.c23.conj(),
            _ => panic!("density matrix indices must be in 1..=3, got ({i}, {j})"),
        }
    }

    /// Expand into a full complex matrix (row-major, 0-based).
    pub fn to_matrix(&self) -> [[Complex64; 3]; 3] {
        let re = |x: f64| Complex64::new(x, 0.0);
        [
            [re(self.p1), self.c12, self.c13],
            [self.c12.conj(), re(self.p2), self.c23],
            [self.c13.conj(), self.c23.conj(), re(self.p3)],
        ]
    }

    /// Eigenvalues in ascending order, from the closed form for a Hermitian
    /// 3×3 matrix (Cardano / trigonometric method on the shifted matrix).
    /// Near-degenerate spectra are resolved to about √ε ≈ 1e-8; callers
    /// checking positivity thresholds (1e-6 scale) have ample margin.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let off = self.c12.norm_sqr() + self.c13.norm_sqr() + self.c23.norm_sqr();
        if off == 0.0 {
            let mut d = [self.p1, self.p2, self.p3];
            d.sort_by(|a, b| a.partial_cmp(b).expect("populations must be finite"));
            return d;
        }
        let q = self.trace() / 3.0;
        let dp1 = self.p1 - q;
        let dp2 = self.p2 - q;
        let dp3 = self.p3 - q;
        let p2 = dp1 * dp1 + dp2 * dp2 + dp3 * dp3 + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        // det(A - qI) for the Hermitian matrix; imaginary part cancels.
        let a12 = self.c12;
        let a13 = self.c13;
        let a23 = self.c23;
        let det = dp1 * (dp2 * dp3 - a23.norm_sqr())
            - (a12 * (a12.conj() * dp3 - a23 * a13.conj())).re
            + (a13 * (a12.conj() * a23.conj() - Complex64::new(dp2, 0.0) * a13.conj())).re;
        let r = (det / (p * p * p) / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3 * 2.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        let mut eigs = [e1, e2, e3];
        eigs.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues must be finite"));
        eigs
    }

    /// Diagnostic report: trace deviation, diagonal range, most negative
    /// eigenvalue. Pure predicate; thresholds are the caller's business.
    pub fn validate(&self) -> DensityReport {
        let m = self.to_matrix();
        let mut herm = 0.0f64;
        for (i, row) in m.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                herm = herm.max((e - m[j][i].conj()).norm());
            }
        }
        let eigs = self.eigenvalues();
        DensityReport {
            hermiticity_defect: herm,
            trace_deviation: (self.trace() - 1.0).abs(),
            min_population: self.p1.min(self.p2).min(self.p3),
            max_population: self.p1.max(self.p2).max(self.p3),
            min_eigenvalue: eigs[0],
        }
    }
}

/// Result of [`DensityMatrix::validate`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DensityReport {
    pub hermiticity_defect: f64,
    pub trace_deviation: f64,
    pub min_population: f64,
    pub max_population: f64,
    pub min_eigenvalue: f64,
}

impl Add for DensityMatrix {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            p1: self.p1 + rhs.p1,
            p2: self.p2 + rhs.p2,
            p3: self.p3 + rhs.p3,
            c12: self.c12 + rhs.c12,
            c13: self.c13 + rhs.c13,
            c23: self.c23 + rhs.c23,
        }
    }
}

impl Sub for DensityMatrix {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            p1: self.p1 - rhs.p1,
            p2: self.p2 - rhs.p2,
            p3: self.p3 - rhs.p3,
            c12: self.c12 - rhs.c12,
            c13: self.c13 - rhs.c13,
            c23: self.c23 - rhs.c23,
        }
    }
}

impl Mul<f64> for DensityMatrix {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self {
            p1: self.p1 * s,
            p2: self.p2 * s,
            p3: self.p3 * s,
            c12: self.c12 * s,
            c13: self.c13 * s,
            c23: self.c23 * s,
        }
    }
}

/// Decay and broadening parameters. All rates in rad/s.
///
/// `pop_*` are population decay rates Γ_ij (|i⟩ ← source level j is the
/// second index: Γ31 moves population |3⟩ → |1⟩). `coh_*` are the total
/// off-diagonal decay rates γ_ij applied directly to the coherences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub pop_decay_31: f64,
    pub pop_decay_32: f64,
    pub pop_decay_21: f64,
    pub coh_decay_31: f64,
    pub coh_decay_32: f64,
    pub coh_decay_21: f64,
    /// Inhomogeneous full width at half maximum of the |1⟩–|3⟩ detuning
    /// distribution (rad/s).
    pub fwhm_inhom: f64,
    /// True when the rate values originated as Hz in a configuration file
    /// and were multiplied by 2π on load. Provenance only; all stored
    /// values are rad/s either way.
    pub rates_angular_input: bool,
}

impl SystemParams {
    /// Build from rates quoted in Hz. With `angular = true` every value is
    /// multiplied by 2π; with `angular = false` the numbers are used as
    /// plain inverse-seconds rates.
    #[allow(clippy::too_many_arguments)]
    pub fn from_hz(
        pop_31_hz: f64,
        pop_32_hz: f64,
        pop_21_hz: f64,
        coh_31_hz: f64,
        coh_32_hz: f64,
        coh_21_hz: f64,
        fwhm_hz: f64,
        angular: bool,
    ) -> Self {
        let k = if angular { TAU } else { 1.0 };
        Self {
            pop_decay_31: k * pop_31_hz,
            pop_decay_32: k * pop_32_hz,
            pop_decay_21: k * pop_21_hz,
            coh_decay_31: k * coh_31_hz,
            coh_decay_32: k * coh_32_hz,
            coh_decay_21: k * coh_21_hz,
            fwhm_inhom: k * fwhm_hz,
            rates_angular_input: angular,
        }
    }

    /// No decay at all; used for oracle tests and single-atom probes.
    pub fn zero_decay(fwhm_inhom: f64) -> Self {
        Self {
            pop_decay_31: 0.0,
            pop_decay_32: 0.0,
            pop_decay_21: 0.0,
            coh_decay_31: 0.0,
            coh_decay_32: 0.0,
            coh_decay_21: 0.0,
            fwhm_inhom,
            rates_angular_input: true,
        }
    }

    /// Total decay rate out of |3⟩.
    pub fn pop_decay_3(&self) -> f64 {
        self.pop_decay_31 + self.pop_decay_32
    }

    /// Non-fatal consistency warnings. Negative rates are rejected
    /// elsewhere; here we only flag optical coherence rates below the
    /// lifetime-limited minimum (Γ31+Γ32)/2.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let lifetime_limit = self.pop_decay_3() / 2.0;
        if self.coh_decay_31 < lifetime_limit {
            w.push(format!(
                "coh_decay_31 = {:.6e} rad/s is below the lifetime limit (pop_decay_31+pop_decay_32)/2 = {:.6e} rad/s",
                self.coh_decay_31, lifetime_limit
            ));
        }
        if self.coh_decay_32 < lifetime_limit {
            w.push(format!(
                "coh_decay_32 = {:.6e} rad/s is below the lifetime limit (pop_decay_31+pop_decay_32)/2 = {:.6e} rad/s",
                self.coh_decay_32, lifetime_limit
            ));
        }
        w
    }

    pub fn all_rates_nonnegative(&self) -> bool {
        self.pop_decay_31 >= 0.0
            && self.pop_decay_32 >= 0.0
            && self.pop_decay_21 >= 0.0
            && self.coh_decay_31 >= 0.0
            && self.coh_decay_32 >= 0.0
            && self.coh_decay_21 >= 0.0
            && self.fwhm_inhom >= 0.0
    }
}

/// Complex Rabi amplitudes of the two optical drives (rad/s).
/// Zero means free evolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveField {
    /// Drive on |1⟩–|3⟩.
    pub omega_p: Complex64,
    /// Drive on |2⟩–|3⟩.
    pub omega_b: Complex64,
}

impl DriveField {
    pub const OFF: Self = Self {
        omega_p: Complex64::new(0.0, 0.0),
        omega_b: Complex64::new(0.0, 0.0),
    };

    pub fn p(omega: Complex64) -> Self {
        Self {
            omega_p: omega,
            ..Self::OFF
        }
    }

    pub fn b(omega: Complex64) -> Self {
        Self {
            omega_b: omega,
            ..Self::OFF
        }
    }

    pub fn is_off(&self) -> bool {
        self.omega_p == Complex64::new(0.0, 0.0) && self.omega_b == Complex64::new(0.0, 0.0)
    }
}

/// Static inhomogeneous detuning of one atom (rad/s), carried by |3⟩.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Detuning(pub f64);

/// Rotating-frame Hamiltonian as a full Hermitian matrix (rad/s).
pub fn hamiltonian(delta: Detuning, drive: DriveField) -> [[Complex64; 3]; 3] {
    let z = Complex64::new(0.0, 0.0);
    let a = -0.5 * drive.omega_p;
    let b = -0.5 * drive.omega_b;
    [
        [z, z, a],
        [z, z, b],
        [a.conj(), b.conj(), Complex64::new(-delta.0, 0.0)],
    ]
}

/// Right-hand side dρ/dt = -i[H, ρ] + D(ρ).
///
/// The output is Hermitian-shaped by construction and has exactly zero
/// trace (the population derivatives cancel algebraically).
pub fn liouville_rhs(
    rho: &DensityMatrix,
    delta: Detuning,
    drive: DriveField,
    params: &SystemParams,
) -> DensityMatrix {
    let i = Complex64::i();
    let a = -0.5 * drive.omega_p;
    let b = -0.5 * drive.omega_b;
    let d = delta.0;

    let pump_p = 2.0 * (a * rho.c13.conj()).im;
    let pump_b = 2.0 * (b * rho.c23.conj()).im;

    let dp1 = pump_p + params.pop_decay_31 * rho.p3 + params.pop_decay_21 * rho.p2;
    let dp2 = pump_b + params.pop_decay_32 * rho.p3 - params.pop_decay_21 * rho.p2;
    let dp3 = -pump_p - pump_b - params.pop_decay_3() * rho.p3;

    let dc12 = -i * (a * rho.c23.conj() - b.conj() * rho.c13) - params.coh_decay_21 * rho.c12;
    let dc13 =
        -i * (a * (rho.p3 - rho.p1) - b * rho.c12 + d * rho.c13) - params.coh_decay_31 * rho.c13;
    let dc23 = -i * (b * (rho.p3 - rho.p2) - a * rho.c12.conj() + d * rho.c23)
        - params.coh_decay_32 * rho.c23;

    DensityMatrix {
        p1: dp1,
        p2: dp2,
        p3: dp3,
        c12: dc12,
        c13: dc13,
        c23: dc23,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KHZ: f64 = TAU * 1e3;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hamiltonian_is_zero_without_drive_or_detuning() {
        let h = hamiltonian(Detuning(0.0), DriveField::OFF);
        for row in h {
            for e in row {
                assert_eq!(e, c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn hamiltonian_detuning_sits_on_level_three() {
        let h = hamiltonian(Detuning(40.0 * KHZ), DriveField::OFF);
        assert_eq!(h[0][0], c(0.0, 0.0));
        assert_eq!(h[1][1], c(0.0, 0.0));
        assert!((h[2][2] - c(-TAU * 4.0e4, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn hamiltonian_real_p_drive() {
        let h = hamiltonian(Detuning(0.0), DriveField::p(c(TAU * 1e6, 0.0)));
        let expect = -std::f64::consts::PI * 1e6;
        assert!((h[0][2].re - expect).abs() < 1e-3);
        assert_eq!(h[0][2].im, 0.0);
        assert_eq!(h[2][0], h[0][2].conj());
        assert_eq!(h[1][2], c(0.0, 0.0));
        assert_eq!(h[0][1], c(0.0, 0.0));
    }

    #[test]
    fn ground_state_is_stationary() {
        let params = SystemParams::from_hz(20e3, 20e3, 0.0, 30e3, 30e3, 0.0, 680e3, true);
        let d = liouville_rhs(
            &DensityMatrix::ground(),
            Detuning(123.0 * KHZ),
            DriveField::OFF,
            &params,
        );
        assert_eq!(d, DensityMatrix::ZERO);
    }

    #[test]
    fn excited_state_decays_with_branching() {
        let gamma = 2.0 * KHZ;
        let params = SystemParams {
            pop_decay_31: gamma,
            pop_decay_32: gamma,
            ..SystemParams::zero_decay(0.0)
        };
        let rho = DensityMatrix::from_populations(0.0, 0.0, 1.0);
        let d = liouville_rhs(&rho, Detuning(0.0), DriveField::OFF, &params);
        assert!((d.p3 + 2.0 * gamma).abs() < 1e-12 * gamma);
        assert!((d.p1 - gamma).abs() < 1e-12 * gamma);
        assert!((d.p2 - gamma).abs() < 1e-12 * gamma);
    }

    #[test]
    fn rabi_initial_slope_matches_closed_form() {
        // Oracle ρ13(t) = -(i/2) sin(Ωt) for a resonant real drive from the
        // ground state, so dρ13/dt at t = 0 is -(i/2)Ω.
        let omega = TAU * 1e6;
        let params = SystemParams::zero_decay(0.0);
        let d = liouville_rhs(
            &DensityMatrix::ground(),
            Detuning(0.0),
            DriveField::p(c(omega, 0.0)),
            &params,
        );
        assert!((d.c13 - c(0.0, -omega / 2.0)).norm() < 1e-9 * omega);
        assert_eq!(d.p3, 0.0);
    }

    #[test]
    fn rhs_trace_is_exactly_zero() {
        let params = SystemParams::from_hz(20e3, 20e3, 5e3, 30e3, 30e3, 1e3, 680e3, true);
        let rho = DensityMatrix {
            p1: 0.4,
            p2: 0.35,
            p3: 0.25,
            c12: c(0.1, -0.05),
            c13: c(-0.07, 0.02),
            c23: c(0.03, 0.04),
        };
        let drive = DriveField {
            omega_p: c(1e6, 3e5),
            omega_b: c(-2e6, 1e5),
        };
        let d = liouville_rhs(&rho, Detuning(500.0 * KHZ), drive, &params);
        let scale = params.pop_decay_3().max(1.0);
        assert!(d.trace().abs() < 1e-12 * scale);
    }

    #[test]
    fn validate_clean_states() {
        let third = DensityMatrix::from_populations(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        let r = third.validate();
        assert_eq!(r.hermiticity_defect, 0.0);
        assert!(r.trace_deviation < 1e-15);
        assert!((r.min_eigenvalue - 1.0 / 3.0).abs() < 1e-12);

        let ground = DensityMatrix::ground().validate();
        assert_eq!(ground.hermiticity_defect, 0.0);
        assert_eq!(ground.trace_deviation, 0.0);
        assert!(ground.min_eigenvalue.abs() < 1e-12);
    }

    #[test]
    fn validate_reports_constructed_trace_defect() {
        let rho = DensityMatrix {
            p1: 1.5,
            ..DensityMatrix::ZERO
        };
        let r = rho.validate();
        assert!((r.trace_deviation - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_match_known_pure_state() {
        // |ψ⟩ = (|1⟩ + |3⟩)/√2 has eigenvalues {0, 0, 1}.
        let rho = DensityMatrix {
            p1: 0.5,
            p2: 0.0,
            p3: 0.5,
            c13: c(0.5, 0.0),
            ..DensityMatrix::ZERO
        };
        let e = rho.eigenvalues();
        assert!(e[0].abs() < 1e-8);
        assert!(e[1].abs() < 1e-8);
        assert!((e[2] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn params_warn_below_lifetime_limit() {
        let ok = SystemParams::from_hz(20e3, 20e3, 0.0, 30e3, 30e3, 0.0, 680e3, true);
        assert!(ok.warnings().is_empty());
        let bad = SystemParams::from_hz(20e3, 20e3, 0.0, 10e3, 30e3, 0.0, 680e3, true);
        assert_eq!(bad.warnings().len(), 1);
    }

    #[test]
    fn from_hz_respects_angular_flag() {
        let ang = SystemParams::from_hz(20e3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, true);
        assert!((ang.pop_decay_31 - TAU * 20e3).abs() < 1e-9);
        let lin = SystemParams::from_hz(20e3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, false);
        assert!((lin.pop_decay_31 - 20e3).abs() < 1e-12);
    }
}
