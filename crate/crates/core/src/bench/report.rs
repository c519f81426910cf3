//! Benchmark reports, their on-disk layout and plot-ready exports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{mann_whitney, LegMetrics, Quantiles, SaturationStats};
use crate::error::{Error, Result};
use crate::sim::{Disturbance, FlightLog, Termination};

/// Legs of this length are the long sides of the rectangle.
const LONG_LEG: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub controller: String,
    pub alpha: Option<f64>,
    pub disturbance: Disturbance,
    /// Log path relative to the report directory, set on save.
    pub log_file: Option<String>,
    pub duration: f64,
    pub total_energy: f64,
    pub lap_times: Vec<f64>,
    pub crashed: bool,
    pub termination: Termination,
    pub least_energy: bool,
    pub legs: Vec<LegMetrics>,
    pub saturation: SaturationStats,
    pub peak_command: f64,
}

impl RunRecord {
    pub fn from_log(
        label: &str,
        controller: &str,
        alpha: Option<f64>,
        disturbance: Disturbance,
        log: &FlightLog,
    ) -> Self {
        Self {
            label: label.into(),
            controller: controller.into(),
            alpha,
            disturbance,
            log_file: None,
            duration: log.duration(),
            total_energy: log.total_energy(),
            lap_times: log.lap_times.clone(),
            crashed: !log.completed(),
            termination: log.termination.clone(),
            least_energy: false,
            legs: Vec::new(),
            saturation: SaturationStats::of(log),
            peak_command: log.commands.iter().flat_map(|c| c.0).fold(0.0, f64::max),
        }
    }

    pub fn is_dfbc(&self) -> bool {
        self.alpha.is_some()
    }

    pub fn long_legs(&self) -> impl Iterator<Item = &LegMetrics> {
        self.legs.iter().filter(|l| (l.length() - LONG_LEG).abs() < 1e-6)
    }
}

/// Nominal against adaptive on the long legs under one disturbance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegComparison {
    pub disturbance: Disturbance,
    pub nominal_energy: Option<Quantiles>,
    pub adaptive_energy: Option<Quantiles>,
    pub nominal_arrival: Option<Quantiles>,
    pub adaptive_arrival: Option<Quantiles>,
    pub nominal_overshoot: Option<Quantiles>,
    pub adaptive_overshoot: Option<Quantiles>,
    /// Rank test on the leg energies: (U of nominal, two-sided p).
    pub energy_test: Option<(f64, f64)>,
}

impl LegComparison {
    pub fn between(report: &BenchmarkReport, disturbance: Disturbance) -> Result<Self> {
        let find = |c: &str| {
            report
                .runs
                .iter()
                .find(|r| r.controller == c && r.disturbance == disturbance)
                .ok_or_else(|| Error::InvalidSpec(format!("no {c} run under {disturbance:?}")))
        };
        let (nom, ada) = (find("gcnet-nominal")?, find("gcnet-adaptive")?);
        let col = |r: &RunRecord, f: fn(&LegMetrics) -> f64| r.long_legs().map(f).collect::<Vec<_>>();
        let (en, ea) = (col(nom, |l| l.energy), col(ada, |l| l.energy));
        Ok(Self {
            disturbance,
            nominal_energy: Quantiles::of(&en),
            adaptive_energy: Quantiles::of(&ea),
            nominal_arrival: Quantiles::of(&col(nom, |l| l.arrival)),
            adaptive_arrival: Quantiles::of(&col(ada, |l| l.arrival)),
            nominal_overshoot: Quantiles::of(&col(nom, |l| l.overshoot)),
            adaptive_overshoot: Quantiles::of(&col(ada, |l| l.overshoot)),
            energy_test: mann_whitney(&en, &ea),
        })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub suite: String,
    pub runs: Vec<RunRecord>,
    pub comparisons: Vec<LegComparison>,
    #[serde(skip)]
    pub logs: Vec<FlightLog>,
}

impl BenchmarkReport {
    pub fn new(suite: &str) -> Self {
        Self { suite: suite.into(), ..Self::default() }
    }

    pub fn push(&mut self, run: RunRecord, log: FlightLog) {
        self.runs.push(run);
        self.logs.push(log);
    }

    pub fn run(&self, label: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.label == label)
    }

    pub fn dfbc_runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| r.is_dfbc())
    }

    pub fn gcnet_runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| !r.is_dfbc())
    }

    /// Flags the cheapest tracking run that did not crash.
    pub fn mark_least_energy(&mut self) {
        let best = self
            .runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_dfbc() && !r.crashed)
            .min_by(|a, b| a.1.total_energy.total_cmp(&b.1.total_energy))
            .map(|(i, _)| i);
        for (i, r) in self.runs.iter_mut().enumerate() {
            r.least_energy = Some(i) == best;
        }
    }

    pub fn least_energy_dfbc(&self) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.least_energy)
    }

    pub fn max_completed_alpha(&self) -> Option<f64> {
        self.dfbc_runs().filter(|r| !r.crashed).filter_map(|r| r.alpha).reduce(f64::max)
    }

    pub fn first_crash_alpha(&self) -> Option<f64> {
        self.dfbc_runs().filter(|r| r.crashed).filter_map(|r| r.alpha).reduce(f64::min)
    }

    pub fn total_energy(&self) -> f64 {
        self.runs.iter().map(|r| r.total_energy).sum()
    }

    /// Writes `report.json` and one log per run under `logs/`.
    pub fn save(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let logs = dir.join("logs");
        std::fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
        for (run, log) in self.runs.iter_mut().zip(&self.logs) {
            let rel = format!("logs/{}.csv", run.label);
            log.save(dir.join(&rel))?;
            run.log_file = Some(rel);
        }
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    /// Reads a saved report with its logs and checks it with [`Self::verify`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut report: Self = serde_json::from_str(&text)?;
        report.logs = report
            .runs
            .iter()
            .map(|r| {
                let rel = r.log_file.as_ref().ok_or_else(|| Error::CorruptFile(format!("{} has no log", r.label)))?;
                FlightLog::load(dir.join(rel))
            })
            .collect::<Result<_>>()?;
        report.verify()?;
        Ok(report)
    }

    /// Every run has a log whose totals match the record.
    pub fn verify(&self) -> Result<()> {
        if self.logs.len() != self.runs.len() {
            return Err(Error::CorruptFile(format!("{} runs but {} logs", self.runs.len(), self.logs.len())));
        }
        for (r, log) in self.runs.iter().zip(&self.logs) {
            let e = log.total_energy();
            if (e - r.total_energy).abs() > 1e-9 * e.abs().max(1.0) || (log.duration() - r.duration).abs() > 1e-9 {
                return Err(Error::CorruptFile(format!("{}: totals differ from its log", r.label)));
            }
        }
        Ok(())
    }
}

/// Writes the plot bundles into `dir` and returns their paths:
/// `energy.csv` (E(t) per run), `paths.csv` (top-down x, y per run),
/// `rpm.csv` (rotor speeds per run), `quantiles.csv` (box plots of the
/// leg metrics) and `runs.json` (one summary row per run).
pub fn export_figures(report: &BenchmarkReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    report.verify()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut energy = String::from("run,t,energy\n");
    let mut paths = String::from("run,t,x,y\n");
    let mut rpm = String::from("run,t,w1,w2,w3,w4\n");
    for (r, log) in report.runs.iter().zip(&report.logs) {
        for (i, t) in log.time.iter().enumerate() {
            let s = &log.states[i];
            let _ = writeln!(energy, "{},{t},{}", r.label, log.energy[i]);
            let _ = writeln!(paths, "{},{t},{},{}", r.label, s.position[0], s.position[1]);
            let w = s.rotors.map(|w| w * 30.0 / std::f64::consts::PI);
            let _ = writeln!(rpm, "{},{t},{},{},{},{}", r.label, w[0], w[1], w[2], w[3]);
        }
    }
    let mut quant = String::from("run,metric,n,min,q1,median,q3,max\n");
    for r in &report.runs {
        let metrics: [(&str, Vec<f64>); 3] = [
            ("leg_energy", r.long_legs().map(|l| l.energy).collect()),
            ("leg_time", r.long_legs().map(|l| l.arrival).collect()),
            ("overshoot", r.long_legs().map(|l| l.overshoot).collect()),
        ];
        for (name, v) in metrics {
            if let Some(q) = Quantiles::of(&v) {
                let _ =
                    writeln!(quant, "{},{name},{},{},{},{},{},{}", r.label, q.n, q.min, q.q1, q.median, q.q3, q.max);
            }
        }
    }
    let runs: Vec<serde_json::Value> = report
        .runs
        .iter()
        .map(|r| {
            serde_json::json!({
                "run": r.label,
                "controller": r.controller,
                "alpha": r.alpha,
                "total_energy": r.total_energy,
                "duration": r.duration,
                "lap_times": r.lap_times,
                "crashed": r.crashed,
                "least_energy": r.least_energy,
                "saturation_time": r.saturation.total_time,
            })
        })
        .collect();
    let files = [
        ("energy.csv", energy),
        ("paths.csv", paths),
        ("rpm.csv", rpm),
        ("quantiles.csv", quant),
        ("runs.json", serde_json::to_string_pretty(&runs)?),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        out.push(p);
    }
    Ok(out)
}
