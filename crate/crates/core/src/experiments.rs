//! Seeded Monte Carlo experiments and their CSV result tables.
//!
//! Every trial draws from its own stream keyed by
//! `(seed, experiment tag, grid point, trial)`; trials run on a rayon pool
//! and are reduced in trial order, so tables are byte-identical for any
//! worker count.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corranalysis::{compute_cov_p, monte_carlo_moments};
use crate::crb::crb_trace;
use crate::multicoset::{MultiCosetConfig, PowerEstimator};
use crate::rng::stream;
use crate::spectralcs::{
    energy, miss_radius, missed_frequencies, recover, synthesize_signal, AmplitudeMethod,
    LineSpectrumModel, MeasurementSystem, RecoveryConfig, RootMusicConfig, StopRule,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Table1,
    Crb,
}

impl Experiment {
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Table1 => "table1",
            Experiment::Crb => "crb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelogramSettings {
    pub nyquist_rate: f64,
    pub sigma2: f64,
    pub filter_len: usize,
    pub nyquist_lengths: Vec<usize>,
    /// `(L, q)` pairs.
    pub geometries: Vec<[usize; 2]>,
    /// Monte Carlo trials for the empirical variance column; 0 disables it.
    pub empirical_trials: usize,
}

impl Default for CorrelogramSettings {
    fn default() -> Self {
        Self {
            nyquist_rate: 1000.0,
            sigma2: 4.0,
            filter_len: 4,
            nyquist_lengths: vec![256, 512, 1024, 2048, 4096],
            geometries: vec![[51, 12], [101, 25], [201, 50], [101, 20]],
            empirical_trials: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverySettings {
    pub order: usize,
    pub length: usize,
    pub measurements: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub music_window: usize,
    /// Minimum frequency spacing in units of `π/N`.
    pub spacing_factor: f64,
    pub random_phase: bool,
    /// Noise standard deviation for the iteration study and the
    /// measurement-count sweep.
    pub sigma: f64,
    pub sigma_grid: Vec<f64>,
    pub measurement_grid: Vec<usize>,
    pub table_sigmas: Vec<f64>,
    pub table_iterations: usize,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            order: 20,
            length: 1024,
            measurements: 300,
            lambda: 1.0,
            iterations: 10,
            music_window: RootMusicConfig::DEFAULT_WINDOW,
            spacing_factor: 10.0,
            random_phase: false,
            sigma: 2.0,
            sigma_grid: vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            measurement_grid: vec![150, 200, 250, 300, 350, 400],
            table_sigmas: vec![2.0, 3.0, 4.0],
            table_iterations: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub correlogram: CorrelogramSettings,
    pub recovery: RecoverySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 1000,
            correlogram: CorrelogramSettings::default(),
            recovery: RecoverySettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let c = &self.correlogram;
        if c.nyquist_lengths.is_empty() || c.geometries.is_empty() {
            return Err(Error::Config("correlogram grids must be non-empty".into()));
        }
        if !(c.sigma2 >= 0.0) {
            return Err(Error::Config(format!("invalid sigma2 {}", c.sigma2)));
        }
        for &[l, q] in &c.geometries {
            if l % 2 == 0 || q == 0 || q >= l || 2 * crate::multicoset::pair_count(q) < l {
                return Err(Error::Config(format!("invalid (L, q) = ({l}, {q})")));
            }
        }
        for &nx in &c.nyquist_lengths {
            if let Some(&[l, _]) = c.geometries.iter().find(|g| nx < g[0]) {
                return Err(Error::Config(format!(
                    "Nyquist length {nx} is shorter than L = {l}"
                )));
            }
        }
        let r = &self.recovery;
        if r.sigma_grid.is_empty() || r.measurement_grid.is_empty() || r.table_sigmas.is_empty() {
            return Err(Error::Config("recovery grids must be non-empty".into()));
        }
        if r.iterations == 0 || r.table_iterations == 0 {
            return Err(Error::Config("iteration counts must be positive".into()));
        }
        if r.measurements >= r.length || r.measurement_grid.iter().any(|&m| m == 0 || m >= r.length)
        {
            return Err(Error::Config("measurement counts must lie in 1..N".into()));
        }
        RootMusicConfig::new(r.music_window, r.order)?;
        if r.music_window > r.length {
            return Err(Error::Config(
                "root-MUSIC window exceeds the signal length".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub grid_point: String,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
}

pub const CSV_HEADER: [&str; 8] = [
    "experiment",
    "grid_point",
    "metric",
    "value",
    "trials",
    "stderr",
    "seed",
    "config_hash",
];

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10e}")
    } else {
        String::new()
    }
}

impl ResultTable {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            seed: config.seed,
            config_hash: config.hash(),
            rows: Vec::new(),
        }
    }

    fn push(
        &mut self,
        experiment: Experiment,
        grid_point: String,
        metric: &str,
        value: f64,
        trials: usize,
        stderr: f64,
    ) {
        self.rows.push(ResultRow {
            experiment: experiment.tag().into(),
            grid_point,
            metric: metric.into(),
            value,
            trials,
            stderr,
        });
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.grid_point.clone(),
                r.metric.clone(),
                fmt_value(r.value),
                r.trials.to_string(),
                fmt_value(r.stderr),
                self.seed.to_string(),
                self.config_hash.clone(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV is UTF-8"))
    }

    pub fn find(&self, grid_point: &str, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.grid_point == grid_point && r.metric == metric)
    }
}

/// Runs `f(trial)` for every trial on the current rayon pool, returning
/// results in trial order.
fn run_trials<T: Send>(
    trials: usize,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..trials as u64).into_par_iter().map(f).collect()
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `10 log10(Σe / Σx)` with a delta-method standard error.
fn ratio_db(err: &[f64], sig: &[f64]) -> (f64, f64) {
    let n = err.len() as f64;
    let (me, _) = mean_and_stderr(err);
    let (mx, _) = mean_and_stderr(sig);
    let r = me / mx;
    let value = 10.0 * r.log10();
    if err.len() < 2 {
        return (value, f64::NAN);
    }
    let (mut ve, mut vx, mut cov) = (0.0, 0.0, 0.0);
    for (e, x) in err.iter().zip(sig) {
        ve += (e - me).powi(2);
        vx += (x - mx).powi(2);
        cov += (e - me) * (x - mx);
    }
    let d = n - 1.0;
    let var_r = (ve / d - 2.0 * r * cov / d + r * r * vx / d) / (n * mx * mx);
    (
        value,
        10.0 / std::f64::consts::LN_10 * var_r.max(0.0).sqrt() / r,
    )
}

/// `fig1`: analytical (and optionally empirical) variance of the first
/// power estimate versus Nyquist length for each `(L, q)`.
pub fn run_fig1(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let c = &config.correlogram;
    let mut table = ResultTable::new(config);
    for (gi, &[l, q]) in c.geometries.iter().enumerate() {
        let first_n = c.nyquist_lengths.iter().copied().min().unwrap_or(l) / l;
        let mut rng = stream(config.seed, "fig1-offsets", gi as u64, 0);
        let base =
            MultiCosetConfig::random(c.nyquist_rate, l, q, c.filter_len, first_n.max(1), &mut rng)?;
        for (ni, &nx) in c.nyquist_lengths.iter().enumerate() {
            let mc = base.with_samples_per_channel(nx / l)?;
            let estimator = PowerEstimator::new(mc)?;
            let cov = compute_cov_p(&estimator.config, &estimator.filters, c.sigma2)?;
            let point = format!("L={l};q={q};N_x={nx}");
            table.push(
                Experiment::Fig1,
                point.clone(),
                "analytical_var",
                cov[(0, 0)],
                0,
                0.0,
            );
            if c.empirical_trials >= 2 {
                let tag = format!("fig1-mc-{gi}-{ni}");
                let m = monte_carlo_moments(
                    &estimator,
                    c.sigma2,
                    c.empirical_trials,
                    config.seed,
                    &tag,
                )?;
                let t = c.empirical_trials as f64;
                // stderr of a sample variance for near-Gaussian data
                let se = m.cov_p[(0, 0)] * (2.0 / (t - 1.0)).sqrt();
                table.push(
                    Experiment::Fig1,
                    point,
                    "empirical_var",
                    m.cov_p[(0, 0)],
                    c.empirical_trials,
                    se,
                );
            }
        }
    }
    Ok(table)
}

/// `N_x,L,q,analytical_var,empirical_var` from a `fig1` table.
pub fn variance_table_csv(table: &ResultTable) -> String {
    let mut out = String::from("N_x,L,q,analytical_var,empirical_var\n");
    for r in table.rows.iter().filter(|r| r.metric == "analytical_var") {
        let mut parts = r
            .grid_point
            .split(';')
            .map(|kv| kv.split('=').nth(1).unwrap_or(""));
        let (l, q, nx) = (
            parts.next().unwrap_or(""),
            parts.next().unwrap_or(""),
            parts.next().unwrap_or(""),
        );
        let emp = table
            .find(&r.grid_point, "empirical_var")
            .map(|e| fmt_value(e.value))
            .unwrap_or_default();
        let _ = writeln!(out, "{nx},{l},{q},{},{emp}", fmt_value(r.value));
    }
    out
}

/// One compressive recovery trial shared by both amplitude methods.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub signal_energy: f64,
    pub nested_error: Vec<f64>,
    pub nested_missed: Vec<usize>,
    pub siht_error: Vec<f64>,
    pub crb: Option<f64>,
    pub degenerate_iterations: usize,
}

pub struct TrialSpec<'a> {
    pub settings: &'a RecoverySettings,
    pub sigma: f64,
    pub measurements: usize,
    pub iterations: usize,
    pub with_siht: bool,
    pub with_crb: bool,
}

pub fn recovery_trial(
    spec: &TrialSpec,
    seed: u64,
    tag: &str,
    grid_point: u64,
    trial: u64,
) -> Result<TrialOutcome> {
    let s = spec.settings;
    let mut rng = stream(seed, tag, grid_point, trial);
    let n = s.length;
    let model = LineSpectrumModel::random(
        s.order,
        s.spacing_factor * PI / n as f64,
        s.random_phase,
        &mut rng,
    )?;
    let x = synthesize_signal(&model, n);
    let system = MeasurementSystem::gaussian(spec.measurements, n, spec.sigma, &mut rng)?;
    let y = system.measure(&x, &mut rng);
    let mut cfg = RecoveryConfig {
        lambda: s.lambda,
        music: RootMusicConfig::new(s.music_window, s.order)?,
        stop: StopRule::Iterations(spec.iterations),
        method: AmplitudeMethod::NestedLs,
    };
    let errors = |trace: &crate::spectralcs::RecoveryTrace| -> Vec<f64> {
        trace
            .iterations
            .iter()
            .map(|r| {
                x.iter()
                    .zip(&r.x_hat)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum()
            })
            .collect()
    };
    let nested = recover(&y, &system.phi, &cfg)?;
    let radius = miss_radius(n);
    let nested_missed = nested
        .iterations
        .iter()
        .map(|r| missed_frequencies(model.frequencies(), &r.omega_hat, radius))
        .collect();
    let mut degenerate_iterations = nested
        .iterations
        .iter()
        .filter(|r| r.degenerate.is_some())
        .count();
    let siht_error = if spec.with_siht {
        cfg.method = AmplitudeMethod::Siht;
        let siht = recover(&y, &system.phi, &cfg)?;
        degenerate_iterations += siht
            .iterations
            .iter()
            .filter(|r| r.degenerate.is_some())
            .count();
        errors(&siht)
    } else {
        Vec::new()
    };
    let crb = if spec.with_crb && spec.sigma > 0.0 {
        match crb_trace(&model, &system.phi, spec.sigma * spec.sigma) {
            Ok(r) => Some(r.crb),
            Err(Error::BoundUnavailable(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(TrialOutcome {
        signal_energy: energy(&x),
        nested_error: errors(&nested),
        nested_missed,
        siht_error,
        crb,
        degenerate_iterations,
    })
}

/// Per-iteration NMSE rows for both methods plus the NCRB.
fn summarise(
    table: &mut ResultTable,
    experiment: Experiment,
    point: &str,
    outcomes: &[TrialOutcome],
    per_iteration: bool,
) {
    let trials = outcomes.len();
    let sig: Vec<f64> = outcomes.iter().map(|o| o.signal_energy).collect();
    let iterations = outcomes[0].nested_error.len();
    let range: Vec<usize> = if per_iteration {
        (0..iterations).collect()
    } else {
        vec![iterations - 1]
    };
    for it in range {
        let label = if per_iteration {
            format!("{point};iteration={}", it + 1)
        } else {
            point.to_string()
        };
        let nested: Vec<f64> = outcomes.iter().map(|o| o.nested_error[it]).collect();
        let (v, se) = ratio_db(&nested, &sig);
        table.push(experiment, label.clone(), "nmse_nested_db", v, trials, se);
        if !outcomes[0].siht_error.is_empty() {
            let siht: Vec<f64> = outcomes.iter().map(|o| o.siht_error[it]).collect();
            let (v, se) = ratio_db(&siht, &sig);
            table.push(experiment, label.clone(), "nmse_siht_db", v, trials, se);
        }
        let missed: Vec<f64> = outcomes
            .iter()
            .map(|o| o.nested_missed[it] as f64)
            .collect();
        let (v, se) = mean_and_stderr(&missed);
        table.push(experiment, label.clone(), "missed_nested", v, trials, se);
        let (crb, crb_sig): (Vec<f64>, Vec<f64>) = outcomes
            .iter()
            .filter_map(|o| o.crb.map(|c| (c, o.signal_energy)))
            .unzip();
        if !crb.is_empty() {
            let (v, se) = ratio_db(&crb, &crb_sig);
            table.push(experiment, label, "ncrb_db", v, crb.len(), se);
        }
    }
    let degenerate: usize = outcomes.iter().map(|o| o.degenerate_iterations).sum();
    table.push(
        experiment,
        point.to_string(),
        "degenerate_iterations",
        degenerate as f64,
        trials,
        0.0,
    );
}

/// `fig2` (NMSE per iteration), `fig3` (NMSE versus σ) or `fig4` (NMSE
/// versus M).
pub fn run_fig2_3_4(config: &ExperimentConfig, experiment: Experiment) -> Result<ResultTable> {
    config.validate()?;
    let r = &config.recovery;
    let grid: Vec<(String, f64, usize)> = match experiment {
        Experiment::Fig2 => vec![(
            format!("sigma={};M={}", r.sigma, r.measurements),
            r.sigma,
            r.measurements,
        )],
        Experiment::Fig3 => r
            .sigma_grid
            .iter()
            .map(|&s| (format!("sigma={s};M={}", r.measurements), s, r.measurements))
            .collect(),
        Experiment::Fig4 => r
            .measurement_grid
            .iter()
            .map(|&m| (format!("sigma={};M={m}", r.sigma), r.sigma, m))
            .collect(),
        other => {
            return Err(Error::Config(format!(
                "{} is not a recovery NMSE experiment",
                other.tag()
            )))
        }
    };
    let mut table = ResultTable::new(config);
    for (gi, (point, sigma, m)) in grid.iter().enumerate() {
        let spec = TrialSpec {
            settings: r,
            sigma: *sigma,
            measurements: *m,
            iterations: r.iterations,
            with_siht: true,
            with_crb: true,
        };
        let outcomes = run_trials(config.trials, |t| {
            recovery_trial(&spec, config.seed, experiment.tag(), gi as u64, t)
        })?;
        summarise(
            &mut table,
            experiment,
            point,
            &outcomes,
            experiment == Experiment::Fig2,
        );
    }
    Ok(table)
}

/// `table1`: average missed frequencies per iteration for each σ.
pub fn run_table1(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let r = &config.recovery;
    let mut table = ResultTable::new(config);
    for (gi, &sigma) in r.table_sigmas.iter().enumerate() {
        let spec = TrialSpec {
            settings: r,
            sigma,
            measurements: r.measurements,
            iterations: r.table_iterations,
            with_siht: false,
            with_crb: false,
        };
        let outcomes = run_trials(config.trials, |t| {
            recovery_trial(&spec, config.seed, Experiment::Table1.tag(), gi as u64, t)
        })?;
        for it in 0..r.table_iterations {
            let missed: Vec<f64> = outcomes
                .iter()
                .map(|o| o.nested_missed[it] as f64)
                .collect();
            let (v, se) = mean_and_stderr(&missed);
            table.push(
                Experiment::Table1,
                format!("sigma={sigma};M={};iteration={}", r.measurements, it + 1),
                "missed_nested",
                v,
                outcomes.len(),
                se,
            );
        }
    }
    Ok(table)
}

/// NCRB over the noise grid at the configured measurement count, each
/// trial with its own line spectrum and measurement matrix.
pub fn run_crb(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let r = &config.recovery;
    let mut table = ResultTable::new(config);
    for (gi, &sigma) in r.sigma_grid.iter().enumerate() {
        let outcomes = run_trials(config.trials, |t| {
            let mut rng = stream(config.seed, Experiment::Crb.tag(), gi as u64, t);
            let model = LineSpectrumModel::random(
                r.order,
                r.spacing_factor * PI / r.length as f64,
                r.random_phase,
                &mut rng,
            )?;
            let system = MeasurementSystem::gaussian(r.measurements, r.length, sigma, &mut rng)?;
            match crb_trace(&model, &system.phi, sigma * sigma) {
                Ok(b) => Ok(Some((b.crb, b.signal_energy))),
                Err(Error::BoundUnavailable(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        let point = format!("sigma={sigma};M={}", r.measurements);
        let (crb, sig): (Vec<f64>, Vec<f64>) = outcomes.iter().flatten().copied().unzip();
        if !crb.is_empty() {
            let (v, se) = ratio_db(&crb, &sig);
            table.push(Experiment::Crb, point.clone(), "ncrb_db", v, crb.len(), se);
        }
        let unavailable = outcomes.iter().filter(|o| o.is_none()).count();
        table.push(
            Experiment::Crb,
            point,
            "bound_unavailable",
            unavailable as f64,
            outcomes.len(),
            0.0,
        );
    }
    Ok(table)
}

pub fn run(config: &ExperimentConfig, experiment: Experiment) -> Result<ResultTable> {
    match experiment {
        Experiment::Fig1 => run_fig1(config),
        Experiment::Table1 => run_table1(config),
        Experiment::Crb => run_crb(config),
        other => run_fig2_3_4(config, other),
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Gnuplot script plotting `metric` against the grid-point label order.
pub fn plot_script(table: &ResultTable, csv_name: &str) -> String {
    let mut metrics: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !metrics.contains(&r.metric.as_str()) && r.metric != "degenerate_iterations" {
            metrics.push(&r.metric);
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key outside");
    let _ = writeln!(s, "set xtics rotate by -45");
    let plots: Vec<String> = metrics
        .iter()
        .map(|m| {
            format!("'{csv_name}' using 0:(strcol(3) eq '{m}' ? $4 : 1/0):xtic(2) with linespoints title '{m}'")
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Writes the table as CSV, plus a plot script next to it when asked.
/// `fig1` tables also get the variance table `<stem>_variance.csv`.
pub fn emit_outputs(table: &ResultTable, path: &Path, plot: bool) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| Error::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    fs::write(path, table.to_csv()?).map_err(|e| io(path, e))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    if table.rows.iter().any(|r| r.experiment == "fig1") {
        let vpath = path.with_file_name(format!("{stem}_variance.csv"));
        fs::write(&vpath, variance_table_csv(table)).map_err(|e| io(&vpath, e))?;
    }
    if plot {
        let name = path
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("results.csv");
        let ppath = path.with_extension("gp");
        fs::write(&ppath, plot_script(table, name)).map_err(|e| io(&ppath, e))?;
    }
    Ok(())
}
