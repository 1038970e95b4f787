//! Executes resolved runs: ensemble simulation, echo analysis, artifact
//! files, and parameter sweeps.
//!
//! Every artifact is byte-deterministic: float columns are printed with
//! fixed formatting, JSON field order follows the struct definitions, and
//! the ensemble reduction is worker-count independent. summary.json embeds
//! the fully resolved configuration, enough to reproduce the run exactly.

use crate::config::{ConfigError, DetectorSpec, ResolvedRun, RunConfig};
use echo_sim::analysis::{
    comb_metrics, detect_echoes, linearity_fit, phase_trajectory, predict_echo_time, quiet_stats,
    AnalysisError, CombResult, DetectorConfig, EchoEvent, Exclusions, LinearFit,
};
use echo_sim::ensemble::{
    population_spectrum, run_ensemble, DetuningGrid, EnsembleError, EnsembleOptions, Observables,
};
use echo_sim::propagator::PropagatorError;
use echo_sim::sequences::{EchoLaw, Sequence, SweepDef};
use echo_sim::SystemParams;
use serde::Serialize;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Tolerance for matching a detected echo to its oracle prediction:
/// max(2·dt_out, 0.2 μs).
pub fn match_tolerance_s(dt_out_ns: u64) -> f64 {
    (2.0 * dt_out_ns as f64 * 1e-9).max(0.2e-6)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Propagation(#[from] PropagatorError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("sweeps require a scenario preset, not an inline sequence")]
    SweepNeedsScenario,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 = validation error, 1 = environment/io.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Serialize)]
pub struct GridSummary {
    pub kind: &'static str,
    pub fwhm_rad_s: f64,
    pub span_rad_s: f64,
    pub step_rad_s: f64,
    pub n_atoms: usize,
}

#[derive(Serialize)]
pub struct SamplingSummary {
    pub dt_out_ns: u64,
    pub dt_pulse_s: Option<f64>,
    pub n_samples: usize,
    pub t_end_ns: u64,
}

/// Fully resolved numeric inputs, embedded for provenance.
#[derive(Serialize)]
pub struct ConfigSummary {
    pub sequence: Sequence,
    pub params_rad_s: SystemParams,
    pub grid: GridSummary,
    pub sampling: SamplingSummary,
    pub detector: DetectorSpec,
    pub snapshot_times_ns: Vec<u64>,
    pub probe_deltas_rad_s: Vec<f64>,
}

#[derive(Serialize)]
pub struct EchoSummary {
    pub t_peak_s: f64,
    pub amplitude: f64,
    pub fwhm_s: Option<f64>,
    pub window: usize,
    /// A(t) at the peak sample; its sign carries the echo carrier phase.
    pub absorption_at_peak: f64,
}

#[derive(Serialize)]
pub struct MatchedEcho {
    pub t_peak_s: f64,
    pub amplitude: f64,
    pub deviation_s: f64,
}

#[derive(Serialize)]
pub struct PredictionSummary {
    pub law: EchoLaw,
    /// None when the law predicts no echo.
    pub predicted_s: Option<f64>,
    pub matched: Option<MatchedEcho>,
    /// For no-echo predictions: the largest C(t) after B2 (+ guard).
    pub post_window_max: Option<f64>,
    /// Prediction and detection agree.
    pub ok: bool,
}

#[derive(Serialize)]
pub struct CombSummary {
    pub level: usize,
    pub t_ns: u64,
    pub comb: CombResult,
}

#[derive(Serialize)]
pub struct ProbeSummary {
    pub requested_delta_rad_s: f64,
    pub delta_rad_s: f64,
    pub grid_index: usize,
    pub file: String,
}

#[derive(Serialize)]
pub struct ConservationSummary {
    pub atoms: usize,
    pub max_trace_deviation: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

#[derive(Serialize)]
pub struct CheckItem {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Serialize)]
pub struct DetectorReport {
    pub quiet_median: f64,
    pub quiet_max: f64,
    pub threshold: f64,
}

#[derive(Serialize)]
pub struct Summary {
    pub scenario: Option<&'static str>,
    pub config: ConfigSummary,
    pub warnings: Vec<String>,
    pub detector_report: DetectorReport,
    pub echoes: Vec<EchoSummary>,
    pub predictions: Vec<PredictionSummary>,
    pub recovery_satisfied: Option<bool>,
    pub comb: Vec<CombSummary>,
    pub probes: Vec<ProbeSummary>,
    pub conservation: ConservationSummary,
    pub checks: Vec<CheckItem>,
}

pub struct RunReport {
    pub summary: Summary,
    pub observables: Observables,
    pub grid: DetuningGrid,
    pub events: Vec<EchoEvent>,
}

impl RunReport {
    pub fn checks_pass(&self) -> bool {
        self.summary.checks.iter().all(|c| c.pass)
    }
}

fn detector_config(spec: &DetectorSpec) -> DetectorConfig {
    DetectorConfig {
        median_factor: spec.median_factor,
        abs_floor: spec.abs_floor,
        relative_floor: spec.relative_floor,
    }
}

/// Simulate and analyze one resolved run (no files written).
pub fn execute(run: &ResolvedRun) -> Result<RunReport, RunError> {
    let grid = run.grid_spec.build()?;
    let opts = EnsembleOptions {
        snapshot_times_ns: run.snapshot_times_ns.clone(),
        probe_deltas: run.probe_deltas.clone(),
        ..Default::default()
    };
    let obs = run_ensemble(&run.sequence, &grid, &run.params, &run.plan, &opts)?;

    let guard_s = run.detector.guard_us * 1e-6;
    let exclusions = Exclusions::from_sequence(&run.sequence, guard_s)?;
    let events = if run.sequence.pulses.is_empty() {
        Vec::new()
    } else {
        detect_echoes(&obs, &exclusions, &detector_config(&run.detector))?
    };
    let times_s = obs.times_s();
    let (quiet_median, quiet_max) = quiet_stats(&times_s, &obs.coherence_mag, &exclusions)?;
    let threshold = (run.detector.median_factor * quiet_median).max(run.detector.abs_floor);

    let tol = match_tolerance_s(run.plan.dt_out_ns);
    let echoes: Vec<EchoSummary> = events
        .iter()
        .map(|e| {
            let k = times_s
                .iter()
                .position(|&t| (t - e.t_peak_s).abs() < 1e-15)
                .expect("peak lies on a sample");
            EchoSummary {
                t_peak_s: e.t_peak_s,
                amplitude: e.amplitude,
                fwhm_s: e.fwhm_s,
                window: e.window,
                absorption_at_peak: obs.absorption[k],
            }
        })
        .collect();

    let mut predictions = Vec::with_capacity(run.predictions.len());
    for law in &run.predictions {
        let predicted_s = predict_echo_time(law)?;
        let (matched, post_window_max, ok) = match predicted_s {
            Some(t_pred) => {
                let best = events
                    .iter()
                    .filter(|e| (e.t_peak_s - t_pred).abs() <= tol)
                    .min_by(|a, b| {
                        (a.t_peak_s - t_pred)
                            .abs()
                            .partial_cmp(&(b.t_peak_s - t_pred).abs())
                            .expect("finite times")
                    });
                let matched = best.map(|e| MatchedEcho {
                    t_peak_s: e.t_peak_s,
                    amplitude: e.amplitude,
                    deviation_s: e.t_peak_s - t_pred,
                });
                let ok = matched.is_some();
                (matched, None, ok)
            }
            None => {
                // "the echo disappears": nothing may qualify after B2.
                let window_start = match law {
                    EchoLaw::AfcControl { t_b2_ns, .. } => {
                        let b2_end = run
                            .sequence
                            .pulses
                            .iter()
                            .find(|p| p.t_start_ns == *t_b2_ns)
                            .map(|p| p.t_end_ns())
                            .unwrap_or(*t_b2_ns);
                        b2_end as f64 * 1e-9 + guard_s
                    }
                    _ => 0.0,
                };
                let spurious = events.iter().any(|e| e.t_peak_s > window_start);
                let max_c = times_s
                    .iter()
                    .zip(&obs.coherence_mag)
                    .filter(|(&t, _)| t > window_start)
                    .map(|(_, &c)| c)
                    .fold(0.0, f64::max);
                (None, Some(max_c), !spurious)
            }
        };
        predictions.push(PredictionSummary {
            law: *law,
            predicted_s,
            matched,
            post_window_max,
            ok,
        });
    }

    let mut comb = Vec::new();
    for &t_ns in &run.snapshot_times_ns {
        if grid.fwhm > 0.0 {
            let spectrum = population_spectrum(&obs, 1, t_ns)?;
            comb.push(CombSummary {
                level: 1,
                t_ns,
                comb: comb_metrics(&spectrum, &grid)?,
            });
        }
    }

    let probes: Vec<ProbeSummary> = obs
        .probes
        .iter()
        .enumerate()
        .map(|(k, p)| ProbeSummary {
            requested_delta_rad_s: p.requested_delta,
            delta_rad_s: p.delta,
            grid_index: p.grid_index,
            file: format!("probe_{k}.csv"),
        })
        .collect();

    let mut conservation = ConservationSummary {
        atoms: obs.final_states.len(),
        max_trace_deviation: 0.0,
        max_hermiticity_defect: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for state in &obs.final_states {
        let r = state.validate();
        conservation.max_trace_deviation = conservation.max_trace_deviation.max(r.trace_deviation);
        conservation.max_hermiticity_defect = conservation
            .max_hermiticity_defect
            .max(r.hermiticity_defect);
        conservation.min_eigenvalue = conservation.min_eigenvalue.min(r.min_eigenvalue);
    }

    let checks = vec![
        CheckItem {
            name: "predictions_matched",
            pass: predictions.iter().all(|p| p.ok),
            detail: format!(
                "{}/{} timing oracles agree with detection",
                predictions.iter().filter(|p| p.ok).count(),
                predictions.len()
            ),
        },
        CheckItem {
            name: "conservation",
            pass: conservation.max_trace_deviation < 1e-9
                && conservation.max_hermiticity_defect < 1e-12
                && conservation.min_eigenvalue > -1e-6,
            detail: format!(
                "trace dev {:.3e}, hermiticity {:.3e}, min eigenvalue {:.3e}",
                conservation.max_trace_deviation,
                conservation.max_hermiticity_defect,
                conservation.min_eigenvalue
            ),
        },
    ];

    let summary = Summary {
        scenario: run.scenario.map(|s| s.as_str()),
        config: ConfigSummary {
            sequence: run.sequence.clone(),
            params_rad_s: run.params,
            grid: GridSummary {
                kind: if grid.fwhm > 0.0 {
                    "gaussian"
                } else {
                    "single"
                },
                fwhm_rad_s: grid.fwhm,
                span_rad_s: grid.span,
                step_rad_s: grid.step,
                n_atoms: grid.len(),
            },
            sampling: SamplingSummary {
                dt_out_ns: run.plan.dt_out_ns,
                dt_pulse_s: run.plan.dt_pulse,
                n_samples: run.plan.sample_times_ns.len(),
                t_end_ns: run.plan.end_ns(),
            },
            detector: run.detector,
            snapshot_times_ns: run.snapshot_times_ns.clone(),
            probe_deltas_rad_s: run.probe_deltas.clone(),
        },
        warnings: run.params.warnings(),
        detector_report: DetectorReport {
            quiet_median,
            quiet_max,
            threshold,
        },
        echoes,
        predictions,
        recovery_satisfied: run.sequence.control.map(|c| c.recovery_satisfied),
        comb,
        probes,
        conservation,
        checks,
    };

    Ok(RunReport {
        summary,
        observables: obs,
        grid,
        events,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())
}

/// Write signal.csv, spectrum_*.csv, probe_*.csv, summary.json, plot.gnu.
pub fn write_artifacts(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let obs = &report.observables;

    let mut signal = String::from("t_s,absorption,coherence_magnitude\n");
    for (k, &t_ns) in obs.times_ns.iter().enumerate() {
        signal.push_str(&format!(
            "{:.9},{},{}\n",
            t_ns as f64 * 1e-9,
            fmt(obs.absorption[k]),
            fmt(obs.coherence_mag[k])
        ));
    }
    let path = out_dir.join("signal.csv");
    write_file(&path, &signal)?;
    written.push(path);

    for snap in &obs.spectra {
        for level in 1..=3usize {
            let mut csv = String::from("delta_rad_s,population\n");
            for (k, &d) in report.grid.deltas.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{}\n",
                    fmt(d),
                    fmt(snap.populations[k][level - 1])
                ));
            }
            let path = out_dir.join(format!("spectrum_{level}_{}ns.csv", snap.t_ns));
            write_file(&path, &csv)?;
            written.push(path);
        }
    }

    for (k, probe) in obs.probes.iter().enumerate() {
        let phase = phase_trajectory(&probe.trajectory);
        let mut csv = String::from("t_s,rho13_re,rho13_im,rho33,phase_rad\n");
        for (j, &t_ns) in probe.trajectory.times_ns.iter().enumerate() {
            csv.push_str(&format!(
                "{:.9},{},{},{},{}\n",
                t_ns as f64 * 1e-9,
                fmt(probe.trajectory.rho13[j].re),
                fmt(probe.trajectory.rho13[j].im),
                fmt(probe.trajectory.populations[j][2]),
                fmt(phase.phase[j])
            ));
        }
        let path = out_dir.join(format!("probe_{k}.csv"));
        write_file(&path, &csv)?;
        written.push(path);
    }

    let summary_json = serde_json::to_string_pretty(&report.summary)
        .expect("summary serialization cannot fail")
        + "\n";
    let path = out_dir.join("summary.json");
    write_file(&path, &summary_json)?;
    written.push(path);

    let path = out_dir.join("plot.gnu");
    write_file(&path, &plot_script(report))?;
    written.push(path);

    Ok(written)
}

fn plot_script(report: &RunReport) -> String {
    let mut s = String::new();
    s.push_str("# gnuplot script; run `gnuplot plot.gnu` in this directory\n");
    s.push_str("set terminal pngcairo size 1400,900\n");
    s.push_str("set output 'signal.png'\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set xlabel 't (s)'\n");
    s.push_str("set ylabel 'signal'\n");
    s.push_str(
        "plot 'signal.csv' using 1:2 with lines title 'absorption Im<rho13>', \\\n     'signal.csv' using 1:3 with lines title '|<rho13>|'\n",
    );
    if !report.observables.spectra.is_empty() {
        s.push_str("\nset output 'spectra.png'\n");
        s.push_str("set xlabel 'detuning (rad/s)'\n");
        s.push_str("set ylabel 'population rho11'\n");
        s.push_str("plot ");
        let parts: Vec<String> = report
            .observables
            .spectra
            .iter()
            .map(|snap| {
                format!(
                    "'spectrum_1_{}ns.csv' using 1:2 with lines title 't={} ns'",
                    snap.t_ns, snap.t_ns
                )
            })
            .collect();
        s.push_str(&parts.join(", \\\n     "));
        s.push('\n');
    }
    for (k, _) in report.observables.probes.iter().enumerate() {
        s.push_str(&format!(
            "\nset output 'probe_{k}.png'\nset xlabel 't (s)'\nset ylabel 'phase (rad) / rho33'\nplot 'probe_{k}.csv' using 1:5 with lines title 'unwrapped phase', \\\n     'probe_{k}.csv' using 1:4 with lines title 'rho33'\n"
        ));
    }
    s
}

/// Run one configuration into a directory.
pub fn run_to_dir(config: &RunConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    let resolved = config.resolve()?;
    let report = execute(&resolved)?;
    write_artifacts(&report, out_dir)?;
    Ok(report)
}

#[derive(Serialize)]
pub struct SweepRow {
    pub dir: String,
    pub value: f64,
    pub value2: Option<f64>,
    pub echo_time_s: Option<f64>,
    pub echo_amplitude: Option<f64>,
    pub no_echo: bool,
    /// ΔT_B1 + (t_echo − t_B2) − τ for control sweeps.
    pub residual_s: Option<f64>,
    pub recovery_satisfied: Option<bool>,
}

#[derive(Serialize)]
pub struct SweepSummary {
    pub parameter: &'static str,
    pub rows: Vec<SweepRow>,
    pub linearity: Option<LinearFit>,
    pub max_abs_residual_s: Option<f64>,
}

pub struct SweepReport {
    pub summary: SweepSummary,
    pub runs: Vec<RunReport>,
}

impl SweepReport {
    pub fn checks_pass(&self) -> bool {
        self.runs.iter().all(|r| r.checks_pass())
    }
}

/// Execute the sweep defined by the configuration: one run per value under
/// `runs/NN/`, plus sweep.csv and sweep_summary.json.
pub fn sweep_to_dir(config: &RunConfig, out_dir: &Path) -> Result<SweepReport, RunError> {
    let resolved = config.resolve()?;
    let sweep = resolved.sweep.clone().ok_or(ConfigError::EmptySweep)?;
    if config.scenario.is_none() {
        return Err(RunError::SweepNeedsScenario);
    }

    struct SweepCase {
        value: f64,
        value2: Option<f64>,
        config: RunConfig,
    }

    let (parameter, cases): (&'static str, Vec<SweepCase>) = match &sweep {
        SweepDef::InputArea { areas } => (
            "input_area",
            areas
                .iter()
                .map(|&a| {
                    let mut config = base_config(config);
                    config.knobs.input_area_pi = Some(a / std::f64::consts::PI);
                    SweepCase {
                        value: a,
                        value2: None,
                        config,
                    }
                })
                .collect(),
        ),
        SweepDef::DeltaTB1 { offsets_ns } => (
            "delta_t_b1",
            offsets_ns
                .iter()
                .map(|&ns| {
                    let mut config = base_config(config);
                    config.knobs.delta_t_b1_us = Some(ns as f64 / 1e3);
                    SweepCase {
                        value: ns as f64 * 1e-9,
                        value2: None,
                        config,
                    }
                })
                .collect(),
        ),
        SweepDef::Tau { taus_ns } => (
            "tau",
            taus_ns
                .iter()
                .map(|&ns| {
                    let mut config = base_config(config);
                    config.knobs.tau_us = Some(ns as f64 / 1e3);
                    SweepCase {
                        value: ns as f64 * 1e-9,
                        value2: None,
                        config,
                    }
                })
                .collect(),
        ),
        SweepDef::ControlAreas { pairs } => (
            "control_areas",
            pairs
                .iter()
                .map(|&(a, b)| {
                    let mut config = base_config(config);
                    config.knobs.control_areas_pi =
                        Some((a / std::f64::consts::PI, b / std::f64::consts::PI));
                    SweepCase {
                        value: a,
                        value2: Some(b),
                        config,
                    }
                })
                .collect(),
        ),
    };

    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(cases.len());
    let mut runs = Vec::with_capacity(cases.len());
    for (idx, case) in cases.iter().enumerate() {
        let dir_name = format!("runs/{idx:02}");
        let report = run_to_dir(&case.config, &out_dir.join(&dir_name))?;
        let primary = report.summary.predictions.last();
        let (echo_time_s, echo_amplitude, no_echo, residual_s) = match primary {
            Some(p) => match (&p.matched, p.predicted_s) {
                (Some(m), Some(_)) => {
                    let residual = match p.law {
                        EchoLaw::AfcControl {
                            dt_b1_ns,
                            t_b2_ns,
                            tau_ns,
                            ..
                        } => Some(
                            dt_b1_ns as f64 * 1e-9 + (m.t_peak_s - t_b2_ns as f64 * 1e-9)
                                - tau_ns as f64 * 1e-9,
                        ),
                        EchoLaw::Afc { t_input_ns, tau_ns } => {
                            Some(m.t_peak_s - (t_input_ns + tau_ns) as f64 * 1e-9)
                        }
                        _ => None,
                    };
                    (Some(m.t_peak_s), Some(m.amplitude), false, residual)
                }
                _ => (None, None, true, None),
            },
            None => (None, None, true, None),
        };
        rows.push(SweepRow {
            dir: dir_name,
            value: case.value,
            value2: case.value2,
            echo_time_s,
            echo_amplitude,
            no_echo,
            residual_s,
            recovery_satisfied: report.summary.recovery_satisfied,
        });
        runs.push(report);
    }

    let linearity = if matches!(sweep, SweepDef::InputArea { .. }) {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.echo_amplitude.map(|a| (r.value, a)))
            .collect();
        linearity_fit(&pts).ok()
    } else {
        None
    };
    let max_abs_residual_s = rows
        .iter()
        .filter_map(|r| r.residual_s)
        .map(f64::abs)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        });

    let mut csv = String::from("value,value2,echo_time_s,echo_amplitude,no_echo\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(r.value),
            r.value2.map(fmt).unwrap_or_default(),
            r.echo_time_s.map(fmt).unwrap_or_default(),
            r.echo_amplitude.map(fmt).unwrap_or_default(),
            r.no_echo
        ));
    }
    write_file(&out_dir.join("sweep.csv"), &csv)?;

    let summary = SweepSummary {
        parameter,
        rows,
        linearity,
        max_abs_residual_s,
    };
    let json = serde_json::to_string_pretty(&summary).expect("sweep summary serializes") + "\n";
    write_file(&out_dir.join("sweep_summary.json"), &json)?;

    Ok(SweepReport { summary, runs })
}

fn base_config(config: &RunConfig) -> RunConfig {
    let mut c = config.clone();
    c.sweep = None;
    c
}
