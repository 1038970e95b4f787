//! Physics extraction: echo detection, analytic timing laws, comb metrics,
//! single-atom phase trajectories, and weak-field linearity fits.
//!
//! Echo amplitudes are read from the coherence magnitude C(t) = |Σ w ρ13|
//! rather than the absorption Im Σ w ρ13: C is independent of the sign and
//! phase conventions while tracking the radiated echo strength.

use crate::ensemble::{DetuningGrid, Observables};
use crate::propagator::Trajectory;
use crate::sequences::{EchoLaw, Sequence};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::TAU;
use thiserror::Error;

/// Phase below this coherence magnitude is treated as undefined and the
/// last defined value is carried forward.
pub const PHASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("times and signal lengths differ ({times} vs {signal})")]
    MismatchedLengths { times: usize, signal: usize },
    #[error("guard {guard_s} s must be at least twice the longest pulse ({min_s} s)")]
    GuardTooSmall { guard_s: f64, min_s: f64 },
    #[error("inconsistent echo timings: {0}")]
    BadLaw(String),
    #[error("need at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("degenerate fit: abscissa or ordinate carries no variation")]
    DegenerateFit,
    #[error("comb analysis needs a broadened grid (fwhm > 0)")]
    SingleAtomGrid,
}

/// A detected coherence burst outside the excluded pulse intervals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EchoEvent {
    pub t_peak_s: f64,
    /// Peak of C(t).
    pub amplitude: f64,
    /// Full width at half maximum by linear interpolation, when both
    /// half-maximum crossings lie inside the quiet window.
    pub fwhm_s: Option<f64>,
    /// Index of the quiet window (between exclusions) holding the peak.
    pub window: usize,
}

/// Time intervals ignored by the detector: every pulse padded by a guard.
#[derive(Clone, Debug)]
pub struct Exclusions {
    /// Merged, sorted half-open intervals (s).
    intervals: Vec<(f64, f64)>,
}

impl Exclusions {
    /// Pad every pulse by `guard_s` on both sides. The guard must be at
    /// least twice the longest pulse so ringing at the pulse edges never
    /// reaches the detector.
    pub fn from_sequence(sequence: &Sequence, guard_s: f64) -> Result<Self, AnalysisError> {
        let longest = sequence
            .pulses
            .iter()
            .map(|p| p.duration_s())
            .fold(0.0, f64::max);
        if guard_s < 2.0 * longest {
            return Err(AnalysisError::GuardTooSmall {
                guard_s,
                min_s: 2.0 * longest,
            });
        }
        let raw = sequence.pulses.iter().map(|p| {
            (
                p.t_start_ns as f64 * 1e-9 - guard_s,
                p.t_end_ns() as f64 * 1e-9 + guard_s,
            )
        });
        Ok(Self::from_intervals(raw.collect()))
    }

    pub fn from_intervals(mut intervals: Vec<(f64, f64)>) -> Self {
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite interval bounds"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.0 <= last.1 => last.1 = last.1.max(iv.1),
                _ => merged.push(iv),
            }
        }
        Self { intervals: merged }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| t >= a && t <= b)
    }

    /// Index of the quiet window holding `t`: number of exclusion
    /// intervals entirely before it.
    fn window_of(&self, t: f64) -> usize {
        self.intervals.iter().take_while(|&&(_, b)| b < t).count()
    }
}

/// Detector policy. The base threshold is
/// max(median_factor · median of C over quiet samples, abs_floor);
/// `relative_floor` then drops events weaker than that fraction of the
/// strongest detected event.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DetectorConfig {
    pub median_factor: f64,
    pub abs_floor: f64,
    /// Prominence floor: suppresses the harmonic side echoes of the
    /// spectral grating (t_in + 2τ and friends), which sit well over an
    /// order of magnitude under any principal echo.
    pub relative_floor: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            median_factor: 5.0,
            abs_floor: 1e-6,
            relative_floor: None,
        }
    }
}

/// Scan C(t) outside the exclusions and report every qualifying local
/// maximum, left to right.
pub fn detect_echoes(
    obs: &Observables,
    exclusions: &Exclusions,
    config: &DetectorConfig,
) -> Result<Vec<EchoEvent>, AnalysisError> {
    detect_in_series(&obs.times_s(), &obs.coherence_mag, exclusions, config)
}

pub fn detect_in_series(
    times_s: &[f64],
    signal: &[f64],
    exclusions: &Exclusions,
    config: &DetectorConfig,
) -> Result<Vec<EchoEvent>, AnalysisError> {
    if times_s.is_empty() || signal.is_empty() {
        return Err(AnalysisError::EmptySignal);
    }
    if times_s.len() != signal.len() {
        return Err(AnalysisError::MismatchedLengths {
            times: times_s.len(),
            signal: signal.len(),
        });
    }
    let quiet: Vec<usize> = (0..times_s.len())
        .filter(|&k| !exclusions.contains(times_s[k]))
        .collect();
    if quiet.is_empty() {
        return Ok(Vec::new());
    }
    let (median, _) = quiet_stats_indices(signal, &quiet);
    let threshold = (config.median_factor * median).max(config.abs_floor);

    let n = signal.len();
    let mut events = Vec::new();
    for &k in &quiet {
        if k == 0 || k + 1 == n {
            continue;
        }
        if signal[k] < threshold || signal[k] <= signal[k - 1] || signal[k] <= signal[k + 1] {
            continue;
        }
        events.push(EchoEvent {
            t_peak_s: times_s[k],
            amplitude: signal[k],
            fwhm_s: fwhm_at(times_s, signal, k, exclusions),
            window: exclusions.window_of(times_s[k]),
        });
    }
    if let Some(frac) = config.relative_floor {
        let strongest = events.iter().map(|e| e.amplitude).fold(0.0, f64::max);
        events.retain(|e| e.amplitude >= frac * strongest);
    }
    Ok(events)
}

/// (median, max) of the signal over the quiet samples.
pub fn quiet_stats(
    times_s: &[f64],
    signal: &[f64],
    exclusions: &Exclusions,
) -> Result<(f64, f64), AnalysisError> {
    if times_s.is_empty() || signal.is_empty() {
        return Err(AnalysisError::EmptySignal);
    }
    let quiet: Vec<usize> = (0..times_s.len())
        .filter(|&k| !exclusions.contains(times_s[k]))
        .collect();
    if quiet.is_empty() {
        return Ok((0.0, 0.0));
    }
    Ok(quiet_stats_indices(signal, &quiet))
}

fn quiet_stats_indices(signal: &[f64], quiet: &[usize]) -> (f64, f64) {
    let mut values: Vec<f64> = quiet.iter().map(|&k| signal[k]).collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite signal"));
    (values[values.len() / 2], *values.last().expect("non-empty"))
}

fn fwhm_at(times: &[f64], signal: &[f64], peak: usize, excl: &Exclusions) -> Option<f64> {
    let half = signal[peak] / 2.0;
    let crossing = |a: usize, b: usize| -> f64 {
        // linear interpolation of the half-maximum crossing between samples
        let frac = (signal[a] - half) / (signal[a] - signal[b]);
        times[a] + frac * (times[b] - times[a])
    };
    let mut left = None;
    let mut k = peak;
    while k > 0 {
        if excl.contains(times[k - 1]) {
            return None;
        }
        if signal[k - 1] < half {
            left = Some(crossing(k, k - 1));
            break;
        }
        k -= 1;
    }
    let mut right = None;
    let mut k = peak;
    while k + 1 < signal.len() {
        if excl.contains(times[k + 1]) {
            return None;
        }
        if signal[k + 1] < half {
            right = Some(crossing(k, k + 1));
            break;
        }
        k += 1;
    }
    match (left, right) {
        (Some(l), Some(r)) => Some(r - l),
        _ => None,
    }
}

/// Analytic echo time for the given law (s); `None` when the law predicts
/// no echo (control pulse applied after the rephasing point).
pub fn predict_echo_time(law: &EchoLaw) -> Result<Option<f64>, AnalysisError> {
    const NS: f64 = 1e-9;
    match *law {
        EchoLaw::TwoPulse { t1_ns, t2_ns } => {
            if t2_ns <= t1_ns {
                return Err(AnalysisError::BadLaw(format!(
                    "two-pulse echo needs t2 > t1 (got {t1_ns}, {t2_ns} ns)"
                )));
            }
            Ok(Some((2 * t2_ns - t1_ns) as f64 * NS))
        }
        EchoLaw::ThreePulse {
            t1_ns,
            t2_ns,
            t3_ns,
        } => {
            if t2_ns <= t1_ns || t3_ns <= t2_ns {
                return Err(AnalysisError::BadLaw(format!(
                    "three-pulse echo needs t1 < t2 < t3 (got {t1_ns}, {t2_ns}, {t3_ns} ns)"
                )));
            }
            Ok(Some((t3_ns + (t2_ns - t1_ns)) as f64 * NS))
        }
        EchoLaw::Afc { t_input_ns, tau_ns } => {
            if tau_ns == 0 {
                return Err(AnalysisError::BadLaw("AFC echo needs tau > 0".into()));
            }
            Ok(Some((t_input_ns + tau_ns) as f64 * NS))
        }
        EchoLaw::AfcControl {
            t_input_ns,
            dt_b1_ns,
            t_b2_ns,
            tau_ns,
        } => {
            if tau_ns == 0 {
                return Err(AnalysisError::BadLaw(
                    "controlled echo needs tau > 0".into(),
                ));
            }
            if t_b2_ns <= t_input_ns + dt_b1_ns {
                return Err(AnalysisError::BadLaw(format!(
                    "B2 at {t_b2_ns} ns must follow B1 at {} ns",
                    t_input_ns + dt_b1_ns
                )));
            }
            if dt_b1_ns < tau_ns {
                Ok(Some((t_b2_ns + (tau_ns - dt_b1_ns)) as f64 * NS))
            } else {
                // B1 later than the rephasing point: the echo disappears.
                Ok(None)
            }
        }
    }
}

/// Spectral grating metrics over the central FWHM region of the grid.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CombMetrics {
    /// Tooth spacing Δ (rad/s) from the fundamental DFT bin.
    pub spacing: f64,
    /// Spacing of the two neighboring bins; "within one Fourier bin" means
    /// the expected spacing lies in [spacing_lo, spacing_hi].
    pub spacing_lo: f64,
    pub spacing_hi: f64,
    pub fundamental_bin: usize,
    pub n_points: usize,
    /// (peak - valley) / (peak + valley) from averaged local extrema.
    pub contrast: f64,
    /// Amplitude of the fundamental component.
    pub fundamental_magnitude: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CombResult {
    Comb(CombMetrics),
    /// No fundamental stands at least 3x above the spectral noise floor.
    NoComb,
}

impl CombResult {
    pub fn metrics(&self) -> Option<&CombMetrics> {
        match self {
            CombResult::Comb(m) => Some(m),
            CombResult::NoComb => None,
        }
    }
}

/// Measure comb spacing and contrast of a population spectrum ρ_ll(δ).
///
/// The spacing comes from the peak of the DFT magnitude of the
/// mean-subtracted spectrum over |δ| ≤ FWHM/2; Fourier beats peak counting
/// because the Gaussian envelope skews tooth heights, not positions.
pub fn comb_metrics(spectrum: &[f64], grid: &DetuningGrid) -> Result<CombResult, AnalysisError> {
    if grid.fwhm <= 0.0 || grid.step <= 0.0 {
        return Err(AnalysisError::SingleAtomGrid);
    }
    if spectrum.len() != grid.len() {
        return Err(AnalysisError::MismatchedLengths {
            times: grid.len(),
            signal: spectrum.len(),
        });
    }
    let half = grid.fwhm / 2.0;
    let central: Vec<f64> = spectrum
        .iter()
        .zip(&grid.deltas)
        .filter(|(_, &d)| d.abs() <= half)
        .map(|(&s, _)| s)
        .collect();
    let n = central.len();
    if n < 16 {
        return Err(AnalysisError::TooFewPoints { n, min: 16 });
    }
    let mean = central.iter().sum::<f64>() / n as f64;

    let mut mags = Vec::with_capacity(n / 2);
    for m in 1..=n / 2 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &s) in central.iter().enumerate() {
            let angle = -TAU * (k as f64) * (m as f64) / n as f64;
            acc += (s - mean) * Complex64::new(angle.cos(), angle.sin());
        }
        mags.push(acc.norm());
    }
    let (m_star, &peak_mag) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite magnitudes"))
        .expect("non-empty DFT");
    let bin = m_star + 1; // mags[0] is m = 1
    let fundamental = 2.0 * peak_mag / n as f64;

    let mut noise: Vec<f64> = mags
        .iter()
        .enumerate()
        .filter(|(m, _)| {
            let m = m + 1;
            m + 1 < bin || m > bin + 1
        })
        .map(|(_, &v)| v)
        .collect();
    noise.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let floor = 2.0 * noise.get(noise.len() / 2).copied().unwrap_or(0.0) / n as f64;
    if fundamental < 1e-12 || fundamental < 3.0 * floor {
        return Ok(CombResult::NoComb);
    }

    let region_span = n as f64 * grid.step;
    let spacing = region_span / bin as f64;
    let spacing_lo = region_span / (bin + 1) as f64;
    let spacing_hi = if bin > 1 {
        region_span / (bin - 1) as f64
    } else {
        f64::INFINITY
    };

    let mut peaks = Vec::new();
    let mut valleys = Vec::new();
    for k in 1..n - 1 {
        if central[k] > central[k - 1] && central[k] > central[k + 1] {
            peaks.push(central[k]);
        } else if central[k] < central[k - 1] && central[k] < central[k + 1] {
            valleys.push(central[k]);
        }
    }
    if peaks.is_empty() || valleys.is_empty() {
        return Ok(CombResult::NoComb);
    }
    let peak = peaks.iter().sum::<f64>() / peaks.len() as f64;
    let valley = valleys.iter().sum::<f64>() / valleys.len() as f64;
    let contrast = (peak - valley) / (peak + valley);

    Ok(CombResult::Comb(CombMetrics {
        spacing,
        spacing_lo,
        spacing_hi,
        fundamental_bin: bin,
        n_points: n,
        contrast,
        fundamental_magnitude: fundamental,
    }))
}

/// Unwrapped arg(ρ13)(t) and ρ33(t) of a single-atom trajectory.
#[derive(Clone, Debug)]
pub struct PhaseTrajectory {
    pub times_ns: Vec<u64>,
    pub phase: Vec<f64>,
    pub rho33: Vec<f64>,
}

/// Unwrap the coherence phase with ±π jump correction; samples with
/// |ρ13| < [`PHASE_FLOOR`] carry the previous value forward.
pub fn phase_trajectory(traj: &Trajectory) -> PhaseTrajectory {
    let mut phase = Vec::with_capacity(traj.len());
    let mut prev_raw: Option<f64> = None;
    let mut acc = 0.0f64;
    for c in &traj.rho13 {
        if c.norm() < PHASE_FLOOR {
            phase.push(acc);
            continue;
        }
        let raw = c.arg();
        match prev_raw {
            Some(pr) => {
                let mut d = raw - pr;
                d -= TAU * (d / TAU).round();
                acc += d;
            }
            None => acc = raw,
        }
        prev_raw = Some(raw);
        phase.push(acc);
    }
    PhaseTrajectory {
        times_ns: traj.times_ns.clone(),
        phase,
        rho33: traj.populations.iter().map(|p| p[2]).collect(),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares on (x, y) pairs.
pub fn linearity_fit(points: &[(f64, f64)]) -> Result<LinearFit, AnalysisError> {
    let n = points.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints { n, min: 3 });
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let scale = points.iter().map(|p| p.0 * p.0).sum::<f64>();
    if sxx <= f64::EPSILON * scale || syy == 0.0 {
        return Err(AnalysisError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        r_squared: 1.0 - ss_res / syy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::build_grid;
    use crate::sequences::{Channel, Pulse, US};

    fn no_exclusions() -> Exclusions {
        Exclusions::from_intervals(Vec::new())
    }

    #[test]
    fn detects_a_synthetic_gaussian_bump() {
        let times: Vec<f64> = (0..2000).map(|k| k as f64 * 50e-9).collect();
        let signal: Vec<f64> = times
            .iter()
            .map(|&t| 0.01 * (-((t - 25e-6) / 1e-6).powi(2)).exp())
            .collect();
        let events = detect_in_series(
            &times,
            &signal,
            &no_exclusions(),
            &DetectorConfig::default(),
        )
        .unwrap();
        assert_eq!(events.len(), 1);
        assert!((events[0].t_peak_s - 25e-6).abs() < 1e-7);
        assert!((events[0].amplitude - 0.01).abs() < 1e-5);
        // Gaussian exp(-(t/s)^2) has FWHM 2 s sqrt(ln 2)
        let expected = 2.0 * 1e-6 * (2.0_f64.ln()).sqrt();
        assert!((events[0].fwhm_s.unwrap() - expected).abs() < 2.0 * 50e-9);
    }

    #[test]
    fn flat_zero_signal_has_no_events() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 1e-6).collect();
        let signal = vec![0.0; 100];
        let events = detect_in_series(
            &times,
            &signal,
            &no_exclusions(),
            &DetectorConfig::default(),
        )
        .unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn empty_signal_is_an_error() {
        assert!(matches!(
            detect_in_series(&[], &[], &no_exclusions(), &DetectorConfig::default()),
            Err(AnalysisError::EmptySignal)
        ));
    }

    #[test]
    fn exclusions_swallow_pulse_transients() {
        let times: Vec<f64> = (0..1000).map(|k| k as f64 * 50e-9).collect();
        // spike at 10 μs (a pulse transient), bump at 30 μs (an echo)
        let signal: Vec<f64> = times
            .iter()
            .map(|&t| {
                0.5 * (-((t - 10e-6) / 0.2e-6).powi(2)).exp()
                    + 0.01 * (-((t - 30e-6) / 1e-6).powi(2)).exp()
            })
            .collect();
        let mut seq = Sequence::new(50 * US);
        seq.push(Pulse::new(Channel::P, 10 * US, 100, 1.0, 0.0))
            .unwrap();
        let excl = Exclusions::from_sequence(&seq, 1e-6).unwrap();
        let events = detect_in_series(&times, &signal, &excl, &DetectorConfig::default()).unwrap();
        assert_eq!(events.len(), 1);
        assert!((events[0].t_peak_s - 30e-6).abs() < 1e-7);
        assert_eq!(events[0].window, 1);
    }

    #[test]
    fn guard_must_cover_pulse_ringing() {
        let mut seq = Sequence::new(50 * US);
        seq.push(Pulse::new(Channel::P, 10 * US, 100, 1.0, 0.0))
            .unwrap();
        assert!(matches!(
            Exclusions::from_sequence(&seq, 100e-9),
            Err(AnalysisError::GuardTooSmall { .. })
        ));
    }

    #[test]
    fn echo_time_laws() {
        let two = EchoLaw::TwoPulse {
            t1_ns: 5 * US,
            t2_ns: 15 * US,
        };
        assert!((predict_echo_time(&two).unwrap().unwrap() - 25e-6).abs() < 1e-15);

        let three = EchoLaw::ThreePulse {
            t1_ns: 5 * US,
            t2_ns: 15 * US,
            t3_ns: 175 * US,
        };
        assert!((predict_echo_time(&three).unwrap().unwrap() - 185e-6).abs() < 1e-15);

        let afc = EchoLaw::Afc {
            t_input_ns: 175 * US,
            tau_ns: 10 * US,
        };
        assert!((predict_echo_time(&afc).unwrap().unwrap() - 185e-6).abs() < 1e-15);

        let controlled = EchoLaw::AfcControl {
            t_input_ns: 175 * US,
            dt_b1_ns: 2 * US,
            t_b2_ns: 187 * US,
            tau_ns: 5 * US,
        };
        assert!((predict_echo_time(&controlled).unwrap().unwrap() - 190e-6).abs() < 1e-15);

        let too_late = EchoLaw::AfcControl {
            t_input_ns: 175 * US,
            dt_b1_ns: 6 * US,
            t_b2_ns: 191 * US,
            tau_ns: 5 * US,
        };
        assert_eq!(predict_echo_time(&too_late).unwrap(), None);

        let bad = EchoLaw::TwoPulse {
            t1_ns: 15 * US,
            t2_ns: 5 * US,
        };
        assert!(predict_echo_time(&bad).is_err());
    }

    #[test]
    fn comb_spacing_of_synthetic_grating() {
        let grid = build_grid(TAU * 680e3, TAU * 1.5e6, TAU * 2e3).unwrap();
        let tau = 10e-6;
        let spectrum: Vec<f64> = grid
            .deltas
            .iter()
            .map(|&d| 0.5 + 0.5 * (d * tau).cos())
            .collect();
        let metrics = match comb_metrics(&spectrum, &grid).unwrap() {
            CombResult::Comb(m) => m,
            CombResult::NoComb => panic!("expected a comb"),
        };
        let expected = TAU / tau;
        assert!(
            metrics.spacing_lo <= expected && expected <= metrics.spacing_hi,
            "expected {expected:.3e} within [{:.3e}, {:.3e}]",
            metrics.spacing_lo,
            metrics.spacing_hi
        );
        assert!(metrics.contrast > 0.9);
    }

    #[test]
    fn flat_spectrum_has_no_comb() {
        let grid = build_grid(TAU * 680e3, TAU * 1.5e6, TAU * 2e3).unwrap();
        let spectrum = vec![1.0; grid.len()];
        assert!(matches!(
            comb_metrics(&spectrum, &grid).unwrap(),
            CombResult::NoComb
        ));
    }

    #[test]
    fn phase_of_free_evolution_has_slope_minus_delta() {
        let delta = TAU * 40e3;
        let times_ns: Vec<u64> = (0..=1000u64).map(|k| k * 50).collect();
        let rho13: Vec<Complex64> = times_ns
            .iter()
            .map(|&t| Complex64::from_polar(0.3, -delta * t as f64 * 1e-9))
            .collect();
        let traj = Trajectory {
            times_ns: times_ns.clone(),
            populations: vec![[1.0, 0.0, 0.0]; rho13.len()],
            final_state: crate::lambda_core::DensityMatrix::ground(),
            full: None,
            rho13,
        };
        let phase = phase_trajectory(&traj);
        let span = (times_ns[1000] - times_ns[0]) as f64 * 1e-9;
        let slope = (phase.phase[1000] - phase.phase[0]) / span;
        assert!((slope + delta).abs() < 1e-6 * delta);
    }

    #[test]
    fn undefined_phase_is_carried_forward() {
        let traj = Trajectory {
            times_ns: vec![0, 50, 100],
            rho13: vec![Complex64::new(0.0, 0.0); 3],
            populations: vec![[1.0, 0.0, 0.0]; 3],
            full: None,
            final_state: crate::lambda_core::DensityMatrix::ground(),
        };
        let phase = phase_trajectory(&traj);
        assert_eq!(phase.phase, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn exact_line_fits_perfectly() {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 2.0 * k as f64)).collect();
        let fit = linearity_fit(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_abscissa_is_degenerate() {
        let pts = vec![(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)];
        assert!(matches!(
            linearity_fit(&pts),
            Err(AnalysisError::DegenerateFit)
        ));
    }
}
