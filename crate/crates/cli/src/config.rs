//! Run configuration: JSON schema and resolution into a fully specified
//! run. Times are integer nanoseconds, rates are quoted in Hz together
//! with the angular flag, pulse areas are in units of π.

use echo_sim::ensemble::GridSpec;
use echo_sim::propagator::SamplingPlan;
use echo_sim::sequences::{
    build_scenario, Channel, EchoLaw, Pulse, Scenario, ScenarioName, ScenarioOverrides, Sequence,
    SweepDef, PRESET_DT_OUT_NS,
};
use echo_sim::SystemParams;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config must name a scenario or provide an inline sequence")]
    NothingToRun,
    #[error("config cannot have both a scenario and an inline sequence")]
    ScenarioAndSequence,
    #[error("unknown channel `{0}` (expected \"P\" or \"B\")")]
    BadChannel(String),
    #[error("decay rates and the inhomogeneous width must be non-negative")]
    NegativeRate,
    #[error("sweep values are empty")]
    EmptySweep,
    #[error(transparent)]
    Sequence(#[from] echo_sim::sequences::SequenceError),
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Top-level run configuration (JSON file schema).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Preset name: fig2a, fig2c_sweep, fig2e, fig3a, fig3b, fig3c,
    /// fig3g, fig3i.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Inline schedule, instead of a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSpec>,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub grid: GridOverride,
    #[serde(default)]
    pub sampling: SamplingOverride,
    #[serde(default)]
    pub knobs: KnobsSpec,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    pub pulses: Vec<PulseSpec>,
    pub t_end_ns: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times_ns: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probe_deltas_hz: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    /// "P" (|1>-|3>) or "B" (|2>-|3>).
    pub channel: String,
    pub t_start_ns: u64,
    pub duration_ns: u64,
    pub area_pi: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

/// Decay and broadening overrides, quoted in Hz. Defaults are the standard
/// figure rates: Γ31 = Γ32 = 20 kHz, γ31 = γ32 = 30 kHz, Γ21 = γ21 = 0,
/// FWHM = 680 kHz, angular input on (values multiplied by 2π on load).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub pop_decay_31_hz: Option<f64>,
    pub pop_decay_32_hz: Option<f64>,
    pub pop_decay_21_hz: Option<f64>,
    pub coh_decay_31_hz: Option<f64>,
    pub coh_decay_32_hz: Option<f64>,
    pub coh_decay_21_hz: Option<f64>,
    pub fwhm_inhom_hz: Option<f64>,
    pub rates_angular_input: Option<bool>,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverride {
    pub span_hz: Option<f64>,
    pub step_hz: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingOverride {
    pub dt_out_ns: Option<u64>,
    pub dt_pulse_ns: Option<f64>,
}

/// Scenario knobs mirroring the preset parameters.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnobsSpec {
    pub tau_us: Option<f64>,
    pub delta_t_b1_us: Option<f64>,
    pub t_b2_offset_us: Option<f64>,
    pub control_areas_pi: Option<(f64, f64)>,
    pub input_area_pi: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub guard_us: f64,
    pub median_factor: f64,
    pub abs_floor: f64,
    /// Events below this fraction of the strongest detected event are
    /// dropped (prominence floor). Set to null to disable.
    pub relative_floor: Option<f64>,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            guard_us: 0.5,
            median_factor: 5.0,
            abs_floor: 1e-6,
            relative_floor: Some(0.05),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    InputArea { values_pi: Vec<f64> },
    DeltaTB1 { values_us: Vec<f64> },
    Tau { values_us: Vec<f64> },
    ControlAreas { values_pi: Vec<(f64, f64)> },
}

pub fn us_to_ns(us: f64) -> u64 {
    (us * 1e3).round() as u64
}

impl KnobsSpec {
    pub fn to_overrides(&self) -> ScenarioOverrides {
        ScenarioOverrides {
            tau_ns: self.tau_us.map(us_to_ns),
            dt_b1_ns: self.delta_t_b1_us.map(us_to_ns),
            t_b2_offset_ns: self.t_b2_offset_us.map(us_to_ns),
            control_areas: self.control_areas_pi.map(|(a, b)| (a * PI, b * PI)),
            input_area: self.input_area_pi.map(|a| a * PI),
        }
    }
}

/// Everything needed to execute one run, with all defaults applied.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub scenario: Option<ScenarioName>,
    pub sequence: Sequence,
    pub params: SystemParams,
    pub plan: SamplingPlan,
    pub grid_spec: GridSpec,
    pub snapshot_times_ns: Vec<u64>,
    pub probe_deltas: Vec<f64>,
    pub predictions: Vec<EchoLaw>,
    pub detector: DetectorSpec,
    pub tau_ns: u64,
    pub sweep: Option<SweepDef>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self) -> Result<ResolvedRun, ConfigError> {
        let (scenario, base) = match (&self.scenario, &self.sequence) {
            (Some(_), Some(_)) => return Err(ConfigError::ScenarioAndSequence),
            (None, None) => return Err(ConfigError::NothingToRun),
            (Some(name), None) => {
                let name = ScenarioName::parse(name)?;
                let sc = build_scenario(name, &self.knobs.to_overrides())?;
                (Some(name), sc)
            }
            (None, Some(spec)) => (None, self.inline_scenario(spec)?),
        };

        // Rates: scenario defaults, overridden field-wise in Hz space.
        let angular = self
            .params
            .rates_angular_input
            .unwrap_or(base.params.rates_angular_input);
        let base_k = if base.params.rates_angular_input {
            TAU
        } else {
            1.0
        };
        let hz = |stored: f64, over: Option<f64>| over.unwrap_or(stored / base_k);
        let params = SystemParams::from_hz(
            hz(base.params.pop_decay_31, self.params.pop_decay_31_hz),
            hz(base.params.pop_decay_32, self.params.pop_decay_32_hz),
            hz(base.params.pop_decay_21, self.params.pop_decay_21_hz),
            hz(base.params.coh_decay_31, self.params.coh_decay_31_hz),
            hz(base.params.coh_decay_32, self.params.coh_decay_32_hz),
            hz(base.params.coh_decay_21, self.params.coh_decay_21_hz),
            hz(base.params.fwhm_inhom, self.params.fwhm_inhom_hz),
            angular,
        );
        if !params.all_rates_nonnegative() {
            return Err(ConfigError::NegativeRate);
        }

        let grid_spec = match base.grid {
            GridSpec::Single { delta } => GridSpec::Single { delta },
            GridSpec::Gaussian { span, step, .. } => GridSpec::Gaussian {
                fwhm: params.fwhm_inhom,
                span: self.grid.span_hz.map(|v| TAU * v).unwrap_or(span),
                step: self.grid.step_hz.map(|v| TAU * v).unwrap_or(step),
            },
        };

        let mut plan = match self.sampling.dt_out_ns {
            Some(dt_out) => {
                let mut p = SamplingPlan::uniform(base.sequence.t_end_ns, dt_out);
                p.ensure_samples(&base.snapshot_times_ns);
                p
            }
            None => base.plan.clone(),
        };
        if let Some(dt_ns) = self.sampling.dt_pulse_ns {
            plan.dt_pulse = Some(dt_ns * 1e-9);
        }

        let sweep = match &self.sweep {
            None => base.sweep.clone(),
            Some(SweepSpec::InputArea { values_pi }) => {
                if values_pi.is_empty() {
                    return Err(ConfigError::EmptySweep);
                }
                Some(SweepDef::InputArea {
                    areas: values_pi.iter().map(|v| v * PI).collect(),
                })
            }
            Some(SweepSpec::DeltaTB1 { values_us }) => {
                if values_us.is_empty() {
                    return Err(ConfigError::EmptySweep);
                }
                Some(SweepDef::DeltaTB1 {
                    offsets_ns: values_us.iter().map(|&v| us_to_ns(v)).collect(),
                })
            }
            Some(SweepSpec::Tau { values_us }) => {
                if values_us.is_empty() {
                    return Err(ConfigError::EmptySweep);
                }
                Some(SweepDef::Tau {
                    taus_ns: values_us.iter().map(|&v| us_to_ns(v)).collect(),
                })
            }
            Some(SweepSpec::ControlAreas { values_pi }) => {
                if values_pi.is_empty() {
                    return Err(ConfigError::EmptySweep);
                }
                Some(SweepDef::ControlAreas {
                    pairs: values_pi.iter().map(|&(a, b)| (a * PI, b * PI)).collect(),
                })
            }
        };

        Ok(ResolvedRun {
            scenario,
            sequence: base.sequence,
            params,
            plan,
            grid_spec,
            snapshot_times_ns: base.snapshot_times_ns,
            probe_deltas: base.probe_deltas,
            predictions: base.predictions,
            detector: self.detector,
            tau_ns: base.tau_ns,
            sweep,
        })
    }

    fn inline_scenario(&self, spec: &SequenceSpec) -> Result<Scenario, ConfigError> {
        let mut seq = Sequence::new(0);
        for p in &spec.pulses {
            let channel = match p.channel.as_str() {
                "P" | "p" => Channel::P,
                "B" | "b" => Channel::B,
                other => return Err(ConfigError::BadChannel(other.to_string())),
            };
            seq.push(Pulse::new(
                channel,
                p.t_start_ns,
                p.duration_ns,
                p.area_pi * PI,
                p.phase_rad,
            ))?;
        }
        let seq = seq.with_t_end(spec.t_end_ns)?;
        seq.validate()?;
        let dt_out = self.sampling.dt_out_ns.unwrap_or(PRESET_DT_OUT_NS);
        let mut plan = SamplingPlan::uniform(seq.t_end_ns, dt_out);
        plan.ensure_samples(&spec.snapshot_times_ns);
        Ok(Scenario {
            name: ScenarioName::Fig2a, // placeholder, unused for inline runs
            sequence: seq,
            params: SystemParams::from_hz(20e3, 20e3, 0.0, 30e3, 30e3, 0.0, 680e3, true),
            plan,
            grid: GridSpec::Gaussian {
                fwhm: TAU * 680e3,
                span: TAU * 1.5e6,
                step: TAU * 2e3,
            },
            snapshot_times_ns: spec.snapshot_times_ns.clone(),
            probe_deltas: spec.probe_deltas_hz.iter().map(|&f| TAU * f).collect(),
            predictions: Vec::new(),
            sweep: None,
            tau_ns: 0,
        })
    }
}
