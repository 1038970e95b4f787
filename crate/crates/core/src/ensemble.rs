//! Inhomogeneous ensemble: detuning grid, parallel per-atom runs, and the
//! reduction into macroscopic observables.
//!
//! Atoms sit on a uniform, zero-centered detuning grid with normalized
//! Gaussian weights (σ = FWHM/√(8 ln 2)). The macroscopic signal is the
//! weighted coherence sum Σ_k w_k ρ13^(k)(t); its imaginary part is the
//! absorption A(t) and its magnitude C(t) carries the echoes.
//!
//! Atoms are independent work items. They are processed in fixed chunks of
//! [`REDUCTION_CHUNK`] grid indices; chunks run in parallel but each chunk
//! sums its atoms in grid order and the chunk partials are folded in chunk
//! order, so the floating-point summation tree is identical for any worker
//! count and results are bit-reproducible.
//!
//! Known artifact of the uniform grid: the discrete ensemble re-phases
//! spuriously at t = 2π/step (0.5 ms at the default 2π·2 kHz step), outside
//! every preset's window.

use crate::lambda_core::{DensityMatrix, Detuning, SystemParams};
use crate::propagator::{
    evolve_sequence, EvolveOptions, GapMode, PropagatorError, SamplingPlan, Trajectory,
};
use crate::sequences::Sequence;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Atoms per reduction chunk. Fixed so the summation tree does not depend
/// on the thread count.
pub const REDUCTION_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("grid step must be positive (got {0} rad/s)")]
    NonPositiveStep(f64),
    #[error("grid span must be positive (got {0} rad/s)")]
    NonPositiveSpan(f64),
    #[error("grid span {span} rad/s must cover at least the FWHM {fwhm} rad/s")]
    SpanBelowFwhm { span: f64, fwhm: f64 },
    #[error("snapshot at {t_ns} ns is outside the simulated span (ends {end_ns} ns)")]
    SnapshotOutsideSpan { t_ns: u64, end_ns: u64 },
    #[error("snapshot at {t_ns} ns is not a sample time; add it to the plan")]
    SnapshotNotSampled { t_ns: u64 },
    #[error("no snapshot stored at {t_ns} ns for level {level}; available: {available:?} ns")]
    MissingSnapshot {
        level: usize,
        t_ns: u64,
        available: Vec<u64>,
    },
    #[error("population level must be 1, 2 or 3 (got {0})")]
    BadLevel(usize),
    #[error(transparent)]
    Propagation(#[from] PropagatorError),
}

/// Grid geometry, before construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Symmetric uniform grid over ±span with Gaussian weights.
    Gaussian { fwhm: f64, span: f64, step: f64 },
    /// Degenerate single-atom grid (weight 1), for probe runs.
    Single { delta: f64 },
}

impl GridSpec {
    pub fn build(&self) -> Result<DetuningGrid, EnsembleError> {
        match *self {
            GridSpec::Gaussian { fwhm, span, step } => build_grid(fwhm, span, step),
            GridSpec::Single { delta } => Ok(DetuningGrid::single(delta)),
        }
    }
}

/// Uniform symmetric detuning grid with normalized Gaussian weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DetuningGrid {
    /// Detunings in ascending order (rad/s), symmetric about zero.
    pub deltas: Vec<f64>,
    /// Normalized weights, Σ = 1.
    pub weights: Vec<f64>,
    pub fwhm: f64,
    pub span: f64,
    pub step: f64,
}

/// Symmetric grid of 2·round(span/step)+1 atoms, Gaussian-weighted.
pub fn build_grid(fwhm: f64, span: f64, step: f64) -> Result<DetuningGrid, EnsembleError> {
    if step.is_nan() || step <= 0.0 {
        return Err(EnsembleError::NonPositiveStep(step));
    }
    if span.is_nan() || span <= 0.0 {
        return Err(EnsembleError::NonPositiveSpan(span));
    }
    if span < fwhm {
        return Err(EnsembleError::SpanBelowFwhm { span, fwhm });
    }
    let half = (span / step).round() as i64;
    let sigma = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    let mut deltas = Vec::with_capacity((2 * half + 1) as usize);
    let mut weights = Vec::with_capacity(deltas.capacity());
    for k in -half..=half {
        let d = k as f64 * step;
        deltas.push(d);
        weights.push((-d * d / (2.0 * sigma * sigma)).exp());
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(DetuningGrid {
        deltas,
        weights,
        fwhm,
        span,
        step,
    })
}

impl DetuningGrid {
    /// One atom, weight 1. Used for single-atom probe scenarios.
    pub fn single(delta: f64) -> Self {
        Self {
            deltas: vec![delta],
            weights: vec![1.0],
            fwhm: 0.0,
            span: 0.0,
            step: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn nearest_index(&self, delta: f64) -> usize {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (k, d) in self.deltas.iter().enumerate() {
            let dist = (d - delta).abs();
            if dist < best_dist {
                best_dist = dist;
                best = k;
            }
        }
        best
    }
}

/// Population spectrum ρ_ll(δ) of all three levels at one snapshot time,
/// index-aligned with the grid.
#[derive(Clone, Debug)]
pub struct SpectrumSnapshot {
    pub t_ns: u64,
    /// Per grid point: (ρ11, ρ22, ρ33).
    pub populations: Vec<[f64; 3]>,
}

/// Full recorded history of one probe atom.
#[derive(Clone, Debug)]
pub struct ProbeTrajectory {
    pub requested_delta: f64,
    /// Grid detuning actually used (nearest grid point).
    pub delta: f64,
    pub grid_index: usize,
    pub trajectory: Trajectory,
}

/// Macroscopic time series plus per-atom extracts.
#[derive(Clone, Debug)]
pub struct Observables {
    pub times_ns: Vec<u64>,
    /// A(t) = Im Σ_k w_k ρ13^(k)(t).
    pub absorption: Vec<f64>,
    /// C(t) = |Σ_k w_k ρ13^(k)(t)|.
    pub coherence_mag: Vec<f64>,
    /// Complex weighted coherence sum (A and C derive from it).
    pub coherence_sum: Vec<Complex64>,
    pub spectra: Vec<SpectrumSnapshot>,
    pub probes: Vec<ProbeTrajectory>,
    /// Per-atom state at the final sample time, grid-ordered.
    pub final_states: Vec<DensityMatrix>,
}

impl Observables {
    pub fn times_s(&self) -> Vec<f64> {
        self.times_ns.iter().map(|&t| t as f64 * 1e-9).collect()
    }
}

/// Stored population spectrum for one level at one snapshot time.
pub fn population_spectrum(
    obs: &Observables,
    level: usize,
    t_ns: u64,
) -> Result<Vec<f64>, EnsembleError> {
    if !(1..=3).contains(&level) {
        return Err(EnsembleError::BadLevel(level));
    }
    let snap = obs.spectra.iter().find(|s| s.t_ns == t_ns).ok_or_else(|| {
        EnsembleError::MissingSnapshot {
            level,
            t_ns,
            available: obs.spectra.iter().map(|s| s.t_ns).collect(),
        }
    })?;
    Ok(snap.populations.iter().map(|p| p[level - 1]).collect())
}

/// Non-schedule inputs of an ensemble run.
#[derive(Clone, Debug, Default)]
pub struct EnsembleOptions {
    pub snapshot_times_ns: Vec<u64>,
    /// Detunings (rad/s) whose full trajectories should be kept; each is
    /// mapped to the nearest grid point.
    pub probe_deltas: Vec<f64>,
    /// Initial state; default is every atom in the ground state ρ11 = 1.
    pub initial: Option<DensityMatrix>,
    /// Gap propagation; `None` selects the exact closed form.
    pub numeric_gap_dt: Option<f64>,
}

struct ChunkOutput {
    coherence_sum: Vec<Complex64>,
    snapshot_pops: Vec<Vec<[f64; 3]>>,
    final_states: Vec<DensityMatrix>,
    probes: Vec<(usize, Trajectory)>,
}

/// Run every grid atom through the sequence and reduce.
///
/// Deterministic for any rayon pool size: see the module docs.
pub fn run_ensemble(
    sequence: &Sequence,
    grid: &DetuningGrid,
    params: &SystemParams,
    plan: &SamplingPlan,
    options: &EnsembleOptions,
) -> Result<Observables, EnsembleError> {
    let end_ns = plan.end_ns();
    let mut snapshot_indices = Vec::with_capacity(options.snapshot_times_ns.len());
    for &t in &options.snapshot_times_ns {
        if t > end_ns {
            return Err(EnsembleError::SnapshotOutsideSpan { t_ns: t, end_ns });
        }
        match plan.sample_times_ns.binary_search(&t) {
            Ok(idx) => snapshot_indices.push(idx),
            Err(_) => return Err(EnsembleError::SnapshotNotSampled { t_ns: t }),
        }
    }

    let probe_indices: Vec<usize> = options
        .probe_deltas
        .iter()
        .map(|&d| grid.nearest_index(d))
        .collect();

    let initial = options.initial.unwrap_or_else(DensityMatrix::ground);
    let gap_mode = match options.numeric_gap_dt {
        Some(dt) => GapMode::Numeric { dt },
        None => GapMode::ClosedForm,
    };
    let n_samples = plan.sample_times_ns.len();
    let n_atoms = grid.len();
    let n_chunks = n_atoms.div_ceil(REDUCTION_CHUNK);

    let chunk_outputs: Result<Vec<ChunkOutput>, EnsembleError> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * REDUCTION_CHUNK;
            let hi = (lo + REDUCTION_CHUNK).min(n_atoms);
            let mut out = ChunkOutput {
                coherence_sum: vec![Complex64::new(0.0, 0.0); n_samples],
                snapshot_pops: vec![Vec::with_capacity(hi - lo); snapshot_indices.len()],
                final_states: Vec::with_capacity(hi - lo),
                probes: Vec::new(),
            };
            for k in lo..hi {
                let record_full = probe_indices.contains(&k);
                let traj = evolve_sequence(
                    &initial,
                    Detuning(grid.deltas[k]),
                    sequence,
                    params,
                    plan,
                    &EvolveOptions {
                        gap_mode,
                        record_full,
                    },
                )?;
                let w = grid.weights[k];
                for (acc, r) in out.coherence_sum.iter_mut().zip(&traj.rho13) {
                    *acc += w * r;
                }
                for (s, &idx) in snapshot_indices.iter().enumerate() {
                    out.snapshot_pops[s].push(traj.populations[idx]);
                }
                out.final_states.push(traj.final_state);
                if record_full {
                    out.probes.push((k, traj));
                }
            }
            Ok(out)
        })
        .collect();
    let chunk_outputs = chunk_outputs?;

    // Ordered fold: chunk partials in chunk order.
    let mut coherence_sum = vec![Complex64::new(0.0, 0.0); n_samples];
    let mut spectra: Vec<SpectrumSnapshot> = options
        .snapshot_times_ns
        .iter()
        .map(|&t_ns| SpectrumSnapshot {
            t_ns,
            populations: Vec::with_capacity(n_atoms),
        })
        .collect();
    let mut final_states = Vec::with_capacity(n_atoms);
    let mut kept: Vec<(usize, Trajectory)> = Vec::new();
    for out in chunk_outputs {
        for (acc, c) in coherence_sum.iter_mut().zip(&out.coherence_sum) {
            *acc += c;
        }
        for (s, pops) in out.snapshot_pops.into_iter().enumerate() {
            spectra[s].populations.extend(pops);
        }
        final_states.extend(out.final_states);
        kept.extend(out.probes);
    }

    let probes = options
        .probe_deltas
        .iter()
        .zip(&probe_indices)
        .filter_map(|(&requested, &idx)| {
            kept.iter()
                .find(|(k, _)| *k == idx)
                .map(|(_, traj)| ProbeTrajectory {
                    requested_delta: requested,
                    delta: grid.deltas[idx],
                    grid_index: idx,
                    trajectory: traj.clone(),
                })
        })
        .collect();

    Ok(Observables {
        times_ns: plan.sample_times_ns.clone(),
        absorption: coherence_sum.iter().map(|c| c.im).collect(),
        coherence_mag: coherence_sum.iter().map(|c| c.norm()).collect(),
        coherence_sum,
        spectra,
        probes,
        final_states,
    })
}
