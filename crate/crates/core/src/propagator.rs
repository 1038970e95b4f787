//! Single-atom time evolution through a pulse sequence.
//!
//! Two regimes: inside pulses the equations are integrated with classical
//! fixed-step RK4 (default substep = pulse duration / 200); across
//! field-free gaps the evolution has a closed form (requires Γ21 = 0):
//!
//! ```text
//! ρ33(dt) = ρ33 e^(-Γ3 dt),              Γ3 = Γ31 + Γ32
//! ρ11(dt) = ρ11 + (Γ31/Γ3) ρ33 (1 - e^(-Γ3 dt))
//! ρ22(dt) = ρ22 + (Γ32/Γ3) ρ33 (1 - e^(-Γ3 dt))
//! ρ13(dt) = ρ13 e^((-iδ - γ31) dt)
//! ρ23(dt) = ρ23 e^((-iδ - γ32) dt)
//! ρ12(dt) = ρ12 e^(-γ21 dt)
//! ```
//!
//! Gaps dominate the timelines simulated here (hundreds of μs against
//! sub-μs of pulse time), so analytic gaps are both exact and far cheaper
//! than stepping through them. An all-numeric mode is kept for
//! cross-checking the closed form and for Γ21 ≠ 0.
//!
//! Time bookkeeping is in integer nanoseconds throughout: recorded sample
//! times are exactly the requested ones, with no float accumulation.

use crate::lambda_core::{liouville_rhs, DensityMatrix, Detuning, DriveField, SystemParams};
use crate::sequences::{Pulse, Sequence, SequenceError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of RK4 substeps per pulse when the plan does not pin a
/// step (0.5 ns for the 100 ns pulses used by the presets).
pub const DEFAULT_PULSE_SUBSTEPS: u32 = 200;

/// Coarsest admissible pulse step, as a fraction of the pulse duration.
pub const MAX_PULSE_STEP_FRACTION: f64 = 1.0 / 50.0;

pub const NS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("free propagation requires pop_decay_21 = 0 (got {0} rad/s); use numeric gap mode")]
    SpinDecayUnsupported(f64),
    #[error("time step must be positive (got {0} s)")]
    NonPositiveStep(f64),
    #[error("pulse step {step} s is coarser than duration/50 = {limit} s")]
    StepTooCoarse { step: f64, limit: f64 },
    #[error("sample times must be strictly increasing and non-empty")]
    BadSampleTimes,
    #[error("plan ends at {plan_end_ns} ns but the sequence runs to {seq_end_ns} ns")]
    PlanTooShort { plan_end_ns: u64, seq_end_ns: u64 },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

/// When and how finely to integrate and record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// RK4 step inside pulses (s). `None` selects duration/200 per pulse.
    pub dt_pulse: Option<f64>,
    /// Output sampling interval used to build `sample_times_ns` (ns).
    pub dt_out_ns: u64,
    /// Strictly increasing record times (ns).
    pub sample_times_ns: Vec<u64>,
}

impl SamplingPlan {
    /// Uniform samples 0, dt_out, 2·dt_out, … up to and including the last
    /// multiple ≤ `t_end_ns`, with `t_end_ns` itself appended if it is not
    /// on the grid.
    pub fn uniform(t_end_ns: u64, dt_out_ns: u64) -> Self {
        assert!(dt_out_ns > 0, "dt_out must be positive");
        let mut sample_times_ns: Vec<u64> =
            (0..=t_end_ns / dt_out_ns).map(|k| k * dt_out_ns).collect();
        if *sample_times_ns.last().expect("at least t=0") != t_end_ns {
            sample_times_ns.push(t_end_ns);
        }
        Self {
            dt_pulse: None,
            dt_out_ns,
            sample_times_ns,
        }
    }

    pub fn with_dt_pulse(mut self, dt_pulse: f64) -> Self {
        self.dt_pulse = Some(dt_pulse);
        self
    }

    /// Insert extra record times (ns), keeping the list strictly increasing.
    pub fn ensure_samples(&mut self, times_ns: &[u64]) {
        for &t in times_ns {
            if let Err(pos) = self.sample_times_ns.binary_search(&t) {
                self.sample_times_ns.insert(pos, t);
            }
        }
    }

    pub fn end_ns(&self) -> u64 {
        *self.sample_times_ns.last().unwrap_or(&0)
    }

    fn check(&self, sequence: &Sequence) -> Result<(), PropagatorError> {
        if self.sample_times_ns.is_empty() || self.sample_times_ns.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(PropagatorError::BadSampleTimes);
        }
        if let Some(dt) = self.dt_pulse {
            if dt <= 0.0 {
                return Err(PropagatorError::NonPositiveStep(dt));
            }
            for p in &sequence.pulses {
                let limit = p.duration_s() * MAX_PULSE_STEP_FRACTION;
                if dt > limit {
                    return Err(PropagatorError::StepTooCoarse { step: dt, limit });
                }
            }
        }
        let seq_end = sequence.last_pulse_end_ns();
        if self.end_ns() < seq_end {
            return Err(PropagatorError::PlanTooShort {
                plan_end_ns: self.end_ns(),
                seq_end_ns: seq_end,
            });
        }
        Ok(())
    }
}

/// How field-free gaps are advanced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GapMode {
    /// Exact closed form (requires Γ21 = 0).
    ClosedForm,
    /// RK4 with the given step (s). Reference mode for cross-checks.
    Numeric { dt: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    pub gap_mode: GapMode,
    /// Keep the full density matrix at every sample time.
    pub record_full: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            gap_mode: GapMode::ClosedForm,
            record_full: false,
        }
    }
}

/// Recorded single-atom history at the plan's sample times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times_ns: Vec<u64>,
    pub rho13: Vec<Complex64>,
    /// (ρ11, ρ22, ρ33) per sample.
    pub populations: Vec<[f64; 3]>,
    pub full: Option<Vec<DensityMatrix>>,
    /// State at the last sample time.
    pub final_state: DensityMatrix,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ns.is_empty()
    }

    pub fn rho33(&self, k: usize) -> f64 {
        self.populations[k][2]
    }

    pub fn times_s(&self) -> Vec<f64> {
        self.times_ns.iter().map(|&t| t as f64 * NS).collect()
    }
}

/// One classical RK4 step of dρ/dt = -i[H,ρ] + D(ρ).
///
/// The compact Hermitian storage keeps the result Hermitian exactly; no
/// trace renormalization is applied (drift is monitored, not hidden).
pub fn rk4_step(
    rho: &DensityMatrix,
    delta: Detuning,
    drive: DriveField,
    params: &SystemParams,
    dt: f64,
) -> DensityMatrix {
    let k1 = liouville_rhs(rho, delta, drive, params);
    let k2 = liouville_rhs(&(*rho + k1 * (dt / 2.0)), delta, drive, params);
    let k3 = liouville_rhs(&(*rho + k2 * (dt / 2.0)), delta, drive, params);
    let k4 = liouville_rhs(&(*rho + k3 * dt), delta, drive, params);
    *rho + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Precomputed closed-form gap factors for a fixed (δ, params, dt).
#[derive(Clone, Copy, Debug)]
struct GapFactors {
    survive3: f64,
    feed1: f64,
    feed2: f64,
    f12: f64,
    f13: Complex64,
    f23: Complex64,
}

impl GapFactors {
    fn new(delta: Detuning, params: &SystemParams, dt: f64) -> Self {
        let g3 = params.pop_decay_3();
        let survive3 = (-g3 * dt).exp();
        // 1 - e^(-x) via exp_m1 for small Γ3·dt; Γ3 = 0 feeds nothing.
        let lost = -(-g3 * dt).exp_m1();
        let (feed1, feed2) = if g3 > 0.0 {
            (
                params.pop_decay_31 / g3 * lost,
                params.pop_decay_32 / g3 * lost,
            )
        } else {
            (0.0, 0.0)
        };
        Self {
            survive3,
            feed1,
            feed2,
            f12: (-params.coh_decay_21 * dt).exp(),
            f13: Complex64::new(-params.coh_decay_31 * dt, -delta.0 * dt).exp(),
            f23: Complex64::new(-params.coh_decay_32 * dt, -delta.0 * dt).exp(),
        }
    }

    fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            p1: rho.p1 + self.feed1 * rho.p3,
            p2: rho.p2 + self.feed2 * rho.p3,
            p3: self.survive3 * rho.p3,
            c12: rho.c12 * self.f12,
            c13: rho.c13 * self.f13,
            c23: rho.c23 * self.f23,
        }
    }
}

/// Exact field-free propagation over `dt`. Rejects Γ21 ≠ 0, whose decay
/// pathway is not covered by the closed form.
pub fn free_propagate(
    rho: &DensityMatrix,
    delta: Detuning,
    params: &SystemParams,
    dt: f64,
) -> Result<DensityMatrix, PropagatorError> {
    if params.pop_decay_21 != 0.0 {
        return Err(PropagatorError::SpinDecayUnsupported(params.pop_decay_21));
    }
    if dt < 0.0 {
        return Err(PropagatorError::NonPositiveStep(dt));
    }
    Ok(GapFactors::new(delta, params, dt).apply(rho))
}

fn rk4_span(
    mut rho: DensityMatrix,
    delta: Detuning,
    drive: DriveField,
    params: &SystemParams,
    span: f64,
    dt_max: f64,
) -> DensityMatrix {
    let n = (span / dt_max).ceil().max(1.0) as u64;
    let h = span / n as f64;
    for _ in 0..n {
        rho = rk4_step(&rho, delta, drive, params, h);
    }
    rho
}

/// Advance one atom through the sequence, recording at every sample time.
///
/// Pulse edges and sample times are merged into one integer-ns boundary
/// list, so no integration segment straddles a pulse edge and samples that
/// fall inside a pulse split the RK4 stepping exactly there.
pub fn evolve_sequence(
    rho0: &DensityMatrix,
    delta: Detuning,
    sequence: &Sequence,
    params: &SystemParams,
    plan: &SamplingPlan,
    options: &EvolveOptions,
) -> Result<Trajectory, PropagatorError> {
    sequence.validate()?;
    plan.check(sequence)?;
    if params.pop_decay_21 != 0.0 && matches!(options.gap_mode, GapMode::ClosedForm) {
        return Err(PropagatorError::SpinDecayUnsupported(params.pop_decay_21));
    }
    if let GapMode::Numeric { dt } = options.gap_mode {
        if dt <= 0.0 {
            return Err(PropagatorError::NonPositiveStep(dt));
        }
    }

    let t_final = plan.end_ns();
    let mut boundaries: Vec<u64> = plan.sample_times_ns.clone();
    for p in &sequence.pulses {
        boundaries.push(p.t_start_ns);
        boundaries.push(p.t_end_ns());
    }
    boundaries.push(0);
    boundaries.retain(|&t| t <= t_final);
    boundaries.sort_unstable();
    boundaries.dedup();

    let n_samples = plan.sample_times_ns.len();
    let mut traj = Trajectory {
        times_ns: Vec::with_capacity(n_samples),
        rho13: Vec::with_capacity(n_samples),
        populations: Vec::with_capacity(n_samples),
        full: options.record_full.then(|| Vec::with_capacity(n_samples)),
        final_state: *rho0,
    };

    let mut rho = *rho0;
    let mut pulse_idx = 0usize;
    // One-entry cache: uniform output sampling makes gap widths repeat.
    let mut gap_cache: Option<(u64, GapFactors)> = None;

    let record = |t: u64, rho: &DensityMatrix, traj: &mut Trajectory| {
        traj.times_ns.push(t);
        traj.rho13.push(rho.c13);
        traj.populations.push([rho.p1, rho.p2, rho.p3]);
        if let Some(full) = traj.full.as_mut() {
            full.push(*rho);
        }
    };

    let mut sample_iter = plan.sample_times_ns.iter().peekable();
    if sample_iter.peek() == Some(&&boundaries[0]) {
        record(boundaries[0], &rho, &mut traj);
        sample_iter.next();
    }

    for w in boundaries.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = (b - a) as f64 * NS;

        // Advance the pulse pointer past pulses that ended at or before a.
        while pulse_idx < sequence.pulses.len() && sequence.pulses[pulse_idx].t_end_ns() <= a {
            pulse_idx += 1;
        }
        let active: Option<&Pulse> = sequence
            .pulses
            .get(pulse_idx)
            .filter(|p| p.t_start_ns <= a && b <= p.t_end_ns());

        match active {
            Some(pulse) => {
                let dt_max = plan
                    .dt_pulse
                    .unwrap_or(pulse.duration_s() / DEFAULT_PULSE_SUBSTEPS as f64);
                rho = rk4_span(rho, delta, pulse.drive(), params, span, dt_max);
            }
            None => match options.gap_mode {
                GapMode::ClosedForm => {
                    let width = b - a;
                    let factors = match gap_cache {
                        Some((w_ns, f)) if w_ns == width => f,
                        _ => {
                            let f = GapFactors::new(delta, params, span);
                            gap_cache = Some((width, f));
                            f
                        }
                    };
                    rho = factors.apply(&rho);
                }
                GapMode::Numeric { dt } => {
                    rho = rk4_span(rho, delta, DriveField::OFF, params, span, dt);
                }
            },
        }

        if sample_iter.peek() == Some(&&b) {
            record(b, &rho, &mut traj);
            sample_iter.next();
        }
    }
    traj.final_state = rho;

    Ok(traj)
}
