//! Pulse and sequence model, plus the named scenario presets.
//!
//! All schedule times are integer nanoseconds, so comparisons are exact and
//! serialization round-trips bit-for-bit. A square pulse is defined by its
//! channel, start, duration, area Φ and phase; the Rabi amplitude is the
//! derived quantity Ω = Φ / duration.

use crate::ensemble::GridSpec;
use crate::lambda_core::{DriveField, SystemParams};
use crate::propagator::SamplingPlan;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

pub const US: u64 = 1_000; // ns per μs
/// Pulse duration used by every preset (ns).
pub const PRESET_PULSE_NS: u64 = 100;
/// Output sampling interval used by every preset (ns).
pub const PRESET_DT_OUT_NS: u64 = 50;

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("invalid sequence: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("pulse [{start} ns, {end} ns] overlaps an existing pulse")]
    Overlap { start: u64, end: u64 },
    #[error("pulse duration must be positive")]
    ZeroDuration,
    #[error("pulse area must be finite and non-negative (got {0})")]
    BadArea(f64),
    #[error(
        "preparation requires tau > pulse duration (tau {tau_ns} ns, duration {duration_ns} ns)"
    )]
    TauTooShort { tau_ns: u64, duration_ns: u64 },
    #[error("preparation requires set period > tau (period {period_ns} ns, tau {tau_ns} ns)")]
    PeriodTooShort { period_ns: u64, tau_ns: u64 },
    #[error("input pulse at {t_ns} ns must start after the last pulse ends ({last_end_ns} ns)")]
    InputTooEarly { t_ns: u64, last_end_ns: u64 },
    #[error("control pulses must be ordered: t_B1 {t_b1_ns} ns < t_B2 {t_b2_ns} ns")]
    ControlOrder { t_b1_ns: u64, t_b2_ns: u64 },
    #[error("t_end {t_end_ns} ns is before the last pulse ends ({last_end_ns} ns)")]
    EndBeforePulses { t_end_ns: u64, last_end_ns: u64 },
    #[error("unknown scenario `{0}` (expected one of fig2a, fig2c_sweep, fig2e, fig3a, fig3b, fig3c, fig3g, fig3i)")]
    UnknownScenario(String),
}

/// Which transition a pulse drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    /// |1⟩–|3⟩ (data / preparation field).
    P,
    /// |2⟩–|3⟩ (deshelling control field).
    B,
}

/// A square drive pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub channel: Channel,
    pub t_start_ns: u64,
    pub duration_ns: u64,
    /// Pulse area Φ (rad).
    pub area: f64,
    /// Carrier phase (rad).
    pub phase: f64,
}

impl Pulse {
    pub fn new(channel: Channel, t_start_ns: u64, duration_ns: u64, area: f64, phase: f64) -> Self {
        Self {
            channel,
            t_start_ns,
            duration_ns,
            area,
            phase,
        }
    }

    pub fn t_end_ns(&self) -> u64 {
        self.t_start_ns + self.duration_ns
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ns as f64 * 1e-9
    }

    /// Derived Rabi amplitude Ω = Φ / duration (rad/s).
    pub fn rabi_frequency(&self) -> f64 {
        rabi_from_area(self.area, self.duration_s())
    }

    pub fn drive(&self) -> DriveField {
        let omega = Complex64::from_polar(self.rabi_frequency(), self.phase);
        match self.channel {
            Channel::P => DriveField::p(omega),
            Channel::B => DriveField::b(omega),
        }
    }
}

/// Ω = Φ / t_p for a square pulse.
pub fn rabi_from_area(area: f64, duration_s: f64) -> f64 {
    assert!(duration_s > 0.0, "pulse duration must be positive");
    area / duration_s
}

/// Metadata attached when a control pair is added; carried through to the
/// run summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInfo {
    pub t_b1_ns: u64,
    pub t_b2_ns: u64,
    pub area_b1: f64,
    pub area_b2: f64,
    /// Φ_B1 + Φ_B2 = 4π within 1e-9. Reported, never enforced.
    pub recovery_satisfied: bool,
}

/// A validated, time-ordered schedule of non-overlapping pulses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub pulses: Vec<Pulse>,
    /// End of the simulated window (ns); grows as pulses are pushed and can
    /// be extended to leave room for echoes after the last pulse.
    pub t_end_ns: u64,
    /// Start of the data (read-out) pulse, when one was appended.
    pub input_t_ns: Option<u64>,
    pub control: Option<ControlInfo>,
}

impl Sequence {
    pub fn new(t_end_ns: u64) -> Self {
        Self {
            pulses: Vec::new(),
            t_end_ns,
            input_t_ns: None,
            control: None,
        }
    }

    pub fn last_pulse_end_ns(&self) -> u64 {
        self.pulses.iter().map(|p| p.t_end_ns()).max().unwrap_or(0)
    }

    /// Insert keeping time order; rejects overlap with any existing pulse
    /// (closed intervals: sharing even an instant counts as overlap).
    pub fn push(&mut self, pulse: Pulse) -> Result<(), SequenceError> {
        if pulse.duration_ns == 0 {
            return Err(SequenceError::ZeroDuration);
        }
        if !pulse.area.is_finite() || pulse.area < 0.0 {
            return Err(SequenceError::BadArea(pulse.area));
        }
        let overlaps = self
            .pulses
            .iter()
            .any(|p| pulse.t_start_ns <= p.t_end_ns() && p.t_start_ns <= pulse.t_end_ns());
        if overlaps {
            return Err(SequenceError::Overlap {
                start: pulse.t_start_ns,
                end: pulse.t_end_ns(),
            });
        }
        let pos = self
            .pulses
            .partition_point(|p| p.t_start_ns < pulse.t_start_ns);
        self.pulses.insert(pos, pulse);
        self.t_end_ns = self.t_end_ns.max(pulse.t_end_ns());
        Ok(())
    }

    /// Extend the observation window past the last pulse.
    pub fn with_t_end(mut self, t_end_ns: u64) -> Result<Self, SequenceError> {
        if t_end_ns < self.last_pulse_end_ns() {
            return Err(SequenceError::EndBeforePulses {
                t_end_ns,
                last_end_ns: self.last_pulse_end_ns(),
            });
        }
        self.t_end_ns = t_end_ns;
        Ok(self)
    }

    /// Append the data (read-out) pulse on channel P.
    pub fn add_input(
        &mut self,
        t_input_ns: u64,
        area: f64,
        duration_ns: u64,
    ) -> Result<(), SequenceError> {
        let last_end = self.last_pulse_end_ns();
        if t_input_ns < last_end {
            return Err(SequenceError::InputTooEarly {
                t_ns: t_input_ns,
                last_end_ns: last_end,
            });
        }
        self.push(Pulse::new(Channel::P, t_input_ns, duration_ns, area, 0.0))?;
        self.input_t_ns = Some(t_input_ns);
        Ok(())
    }

    /// Append the B1/B2 deshelling control pair and record whether the
    /// phase-recovery condition Φ_B1 + Φ_B2 = 4π holds. The condition is
    /// reported, not enforced: runs that violate it are legitimate.
    pub fn add_control_pair(
        &mut self,
        t_b1_ns: u64,
        t_b2_ns: u64,
        area_b1: f64,
        area_b2: f64,
        duration_ns: u64,
    ) -> Result<(), SequenceError> {
        if t_b2_ns <= t_b1_ns {
            return Err(SequenceError::ControlOrder { t_b1_ns, t_b2_ns });
        }
        self.push(Pulse::new(Channel::B, t_b1_ns, duration_ns, area_b1, 0.0))?;
        if let Err(e) = self.push(Pulse::new(Channel::B, t_b2_ns, duration_ns, area_b2, 0.0)) {
            self.pulses.retain(|p| {
                !(p.channel == Channel::B && p.t_start_ns == t_b1_ns && p.area == area_b1)
            });
            return Err(e);
        }
        self.control = Some(ControlInfo {
            t_b1_ns,
            t_b2_ns,
            area_b1,
            area_b2,
            recovery_satisfied: (area_b1 + area_b2 - 4.0 * PI).abs() <= 1e-9,
        });
        Ok(())
    }

    /// Every invariant violation, as human-readable strings.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (k, p) in self.pulses.iter().enumerate() {
            if p.duration_ns == 0 {
                v.push(format!("pulse {k} has zero duration"));
            }
            if !p.area.is_finite() || p.area < 0.0 {
                v.push(format!("pulse {k} has invalid area {}", p.area));
            }
            if !p.phase.is_finite() {
                v.push(format!("pulse {k} has non-finite phase"));
            }
        }
        for w in self.pulses.windows(2) {
            if w[1].t_start_ns < w[0].t_start_ns {
                v.push(format!(
                    "pulses out of order at {} ns / {} ns",
                    w[0].t_start_ns, w[1].t_start_ns
                ));
            }
            if w[1].t_start_ns <= w[0].t_end_ns() {
                v.push(format!(
                    "pulses at {} ns and {} ns overlap",
                    w[0].t_start_ns, w[1].t_start_ns
                ));
            }
        }
        if self.t_end_ns < self.last_pulse_end_ns() {
            v.push(format!(
                "t_end {} ns precedes the last pulse end {} ns",
                self.t_end_ns,
                self.last_pulse_end_ns()
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SequenceError::Invalid(v))
        }
    }
}

/// Preparation pulse train: `n_pairs` pairs on channel P, pair spacing
/// `tau_ns`, one pair per `set_period_ns`.
pub fn make_afc_preparation(
    n_pairs: u32,
    t_first_ns: u64,
    tau_ns: u64,
    set_period_ns: u64,
    area: f64,
    duration_ns: u64,
) -> Result<Sequence, SequenceError> {
    if tau_ns <= duration_ns {
        return Err(SequenceError::TauTooShort {
            tau_ns,
            duration_ns,
        });
    }
    if n_pairs > 1 && set_period_ns <= tau_ns {
        return Err(SequenceError::PeriodTooShort {
            period_ns: set_period_ns,
            tau_ns,
        });
    }
    let mut seq = Sequence::new(0);
    for m in 0..n_pairs as u64 {
        let base = t_first_ns + m * set_period_ns;
        seq.push(Pulse::new(Channel::P, base, duration_ns, area, 0.0))?;
        seq.push(Pulse::new(
            Channel::P,
            base + tau_ns,
            duration_ns,
            area,
            0.0,
        ))?;
    }
    Ok(seq)
}

/// Inputs for the analytic echo-timing laws (see `analysis`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EchoLaw {
    TwoPulse {
        t1_ns: u64,
        t2_ns: u64,
    },
    ThreePulse {
        t1_ns: u64,
        t2_ns: u64,
        t3_ns: u64,
    },
    Afc {
        t_input_ns: u64,
        tau_ns: u64,
    },
    /// Deshelling-controlled echo: B1 applied `dt_b1_ns` after the
    /// dephasing reference `t_input_ns`, B2 at `t_b2_ns`.
    AfcControl {
        t_input_ns: u64,
        dt_b1_ns: u64,
        t_b2_ns: u64,
        tau_ns: u64,
    },
}

/// Named presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Fig2a,
    Fig2cSweep,
    Fig2e,
    Fig3a,
    Fig3b,
    Fig3c,
    Fig3g,
    Fig3i,
}

impl ScenarioName {
    pub fn parse(s: &str) -> Result<Self, SequenceError> {
        match s {
            "fig2a" => Ok(Self::Fig2a),
            "fig2c_sweep" => Ok(Self::Fig2cSweep),
            "fig2e" => Ok(Self::Fig2e),
            "fig3a" => Ok(Self::Fig3a),
            "fig3b" => Ok(Self::Fig3b),
            "fig3c" => Ok(Self::Fig3c),
            "fig3g" => Ok(Self::Fig3g),
            "fig3i" => Ok(Self::Fig3i),
            other => Err(SequenceError::UnknownScenario(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fig2a => "fig2a",
            Self::Fig2cSweep => "fig2c_sweep",
            Self::Fig2e => "fig2e",
            Self::Fig3a => "fig3a",
            Self::Fig3b => "fig3b",
            Self::Fig3c => "fig3c",
            Self::Fig3g => "fig3g",
            Self::Fig3i => "fig3i",
        }
    }

    pub const ALL: [ScenarioName; 8] = [
        Self::Fig2a,
        Self::Fig2cSweep,
        Self::Fig2e,
        Self::Fig3a,
        Self::Fig3b,
        Self::Fig3c,
        Self::Fig3g,
        Self::Fig3i,
    ];
}

/// Optional knobs on top of a preset. `None` keeps the preset default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOverrides {
    /// Pair spacing τ (ns).
    pub tau_ns: Option<u64>,
    /// B1 delay after the dephasing reference (ns).
    pub dt_b1_ns: Option<u64>,
    /// B2 start relative to B1 start (ns).
    pub t_b2_offset_ns: Option<u64>,
    /// Control pulse areas (rad).
    pub control_areas: Option<(f64, f64)>,
    /// Data pulse area (rad).
    pub input_area: Option<f64>,
}

/// What to sweep, when a preset defines a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case")]
pub enum SweepDef {
    InputArea { areas: Vec<f64> },
    DeltaTB1 { offsets_ns: Vec<u64> },
    Tau { taus_ns: Vec<u64> },
    ControlAreas { pairs: Vec<(f64, f64)> },
}

/// A fully parameterized run: schedule, decay rates, sampling, grid,
/// snapshot/probe requests, and the applicable timing oracles.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: ScenarioName,
    pub sequence: Sequence,
    pub params: SystemParams,
    pub plan: SamplingPlan,
    pub grid: GridSpec,
    pub snapshot_times_ns: Vec<u64>,
    /// Detunings (rad/s) whose full trajectories are kept.
    pub probe_deltas: Vec<f64>,
    pub predictions: Vec<EchoLaw>,
    pub sweep: Option<SweepDef>,
    /// Pair spacing relevant to comb analysis (ns).
    pub tau_ns: u64,
}

fn figure_params() -> SystemParams {
    SystemParams::from_hz(20e3, 20e3, 0.0, 30e3, 30e3, 0.0, 680e3, true)
}

fn default_grid() -> GridSpec {
    GridSpec::Gaussian {
        fwhm: TAU * 680e3,
        span: TAU * 1.5e6,
        step: TAU * 2e3,
    }
}

fn plan_for(sequence: &Sequence, snapshots: &[u64]) -> SamplingPlan {
    let mut plan = SamplingPlan::uniform(sequence.t_end_ns, PRESET_DT_OUT_NS);
    plan.ensure_samples(snapshots);
    plan
}

/// Build a preset run specification.
pub fn build_scenario(
    name: ScenarioName,
    overrides: &ScenarioOverrides,
) -> Result<Scenario, SequenceError> {
    let dur = PRESET_PULSE_NS;
    match name {
        ScenarioName::Fig2a | ScenarioName::Fig2cSweep => {
            let tau = overrides.tau_ns.unwrap_or(10 * US);
            let area = overrides.input_area.unwrap_or(PI / 5.0);
            let mut seq = make_afc_preparation(5, 5 * US, tau, 30 * US, PI / 5.0, dur)?;
            seq.add_input(175 * US, area, dur)?;
            let seq = seq.with_t_end(200 * US)?;
            let snapshots = vec![16 * US, 46 * US, 76 * US, 106 * US, 136 * US];
            let plan = plan_for(&seq, &snapshots);
            let predictions = vec![EchoLaw::Afc {
                t_input_ns: 175 * US,
                tau_ns: tau,
            }];
            let sweep = (name == ScenarioName::Fig2cSweep).then(|| SweepDef::InputArea {
                areas: vec![PI / 40.0, PI / 20.0, PI / 10.0, PI / 5.0],
            });
            Ok(Scenario {
                name,
                sequence: seq,
                params: figure_params(),
                plan,
                grid: default_grid(),
                snapshot_times_ns: snapshots,
                probe_deltas: vec![],
                predictions,
                sweep,
                tau_ns: tau,
            })
        }
        ScenarioName::Fig2e => {
            let tau = overrides.tau_ns.unwrap_or(10 * US);
            let area = overrides.input_area.unwrap_or(PI / 2.0);
            let mut seq = make_afc_preparation(1, 5 * US, tau, 30 * US, PI / 2.0, dur)?;
            seq.add_input(175 * US, area, dur)?;
            let seq = seq.with_t_end(200 * US)?;
            let snapshots = vec![16 * US, 136 * US];
            let plan = plan_for(&seq, &snapshots);
            let predictions = vec![
                EchoLaw::TwoPulse {
                    t1_ns: 5 * US,
                    t2_ns: 5 * US + tau,
                },
                EchoLaw::ThreePulse {
                    t1_ns: 5 * US,
                    t2_ns: 5 * US + tau,
                    t3_ns: 175 * US,
                },
            ];
            Ok(Scenario {
                name,
                sequence: seq,
                params: figure_params(),
                plan,
                grid: default_grid(),
                snapshot_times_ns: snapshots,
                probe_deltas: vec![],
                predictions,
                sweep: None,
                tau_ns: tau,
            })
        }
        ScenarioName::Fig3a | ScenarioName::Fig3b | ScenarioName::Fig3c => {
            let tau = overrides.tau_ns.unwrap_or(5 * US);
            let default_dt = if name == ScenarioName::Fig3b {
                6 * US
            } else {
                2 * US
            };
            let dt_b1 = overrides.dt_b1_ns.unwrap_or(default_dt);
            let b2_offset = overrides.t_b2_offset_ns.unwrap_or(10 * US);
            let default_areas = if name == ScenarioName::Fig3c {
                (PI, PI)
            } else {
                (PI, 3.0 * PI)
            };
            let (a1, a2) = overrides.control_areas.unwrap_or(default_areas);
            let input_area = overrides.input_area.unwrap_or(PI / 5.0);

            let t_input = 175 * US;
            let t_b1 = t_input + dt_b1;
            let t_b2 = t_b1 + b2_offset;
            let mut seq = make_afc_preparation(5, 5 * US, tau, 30 * US, PI / 5.0, dur)?;
            seq.add_input(t_input, input_area, dur)?;
            seq.add_control_pair(t_b1, t_b2, a1, a2, dur)?;
            let t_end = (200 * US).max(t_b2 + 12 * US);
            let seq = seq.with_t_end(t_end)?;
            let snapshots = vec![16 * US, 136 * US];
            let plan = plan_for(&seq, &snapshots);
            let predictions = vec![EchoLaw::AfcControl {
                t_input_ns: t_input,
                dt_b1_ns: dt_b1,
                t_b2_ns: t_b2,
                tau_ns: tau,
            }];
            Ok(Scenario {
                name,
                sequence: seq,
                params: figure_params(),
                plan,
                grid: default_grid(),
                snapshot_times_ns: snapshots,
                probe_deltas: vec![],
                predictions,
                sweep: None,
                tau_ns: tau,
            })
        }
        ScenarioName::Fig3g | ScenarioName::Fig3i => {
            let tau = overrides.tau_ns.unwrap_or(10 * US);
            let dt_b1 = overrides.dt_b1_ns.unwrap_or(US);
            let (a1, a2) = overrides.control_areas.unwrap_or((PI, 3.0 * PI));
            let input_area = overrides.input_area.unwrap_or(PI / 2.0);

            let t1 = 5 * US;
            let t2 = t1 + tau;
            let t_b1 = t2 + dt_b1;
            let t_b2 = 175 * US;
            let mut seq = Sequence::new(0);
            seq.push(Pulse::new(Channel::P, t1, dur, PI / 2.0, 0.0))?;
            seq.push(Pulse::new(Channel::P, t2, dur, input_area, 0.0))?;
            seq.add_control_pair(t_b1, t_b2, a1, a2, dur)?;
            let seq = seq.with_t_end(200 * US)?;
            let plan = plan_for(&seq, &[]);
            let predictions = vec![EchoLaw::AfcControl {
                t_input_ns: t2,
                dt_b1_ns: dt_b1,
                t_b2_ns: t_b2,
                tau_ns: tau,
            }];
            let (params, grid, probes) = if name == ScenarioName::Fig3i {
                let delta = TAU * 40e3;
                (
                    SystemParams::zero_decay(TAU * 680e3),
                    GridSpec::Single { delta },
                    vec![delta],
                )
            } else {
                (figure_params(), default_grid(), vec![])
            };
            Ok(Scenario {
                name,
                sequence: seq,
                params,
                plan,
                grid,
                snapshot_times_ns: vec![],
                probe_deltas: probes,
                predictions,
                sweep: None,
                tau_ns: tau,
            })
        }
    }
}
