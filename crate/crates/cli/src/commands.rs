//! Subcommand implementations. Each resolves its parameters (config file
//! merged under flags, then defaults), runs the library, and writes the
//! result behind the reproducibility header.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use trainsens_core::comsens::{
    build_problem, correlation, design, matio, ComsensSettings, CorrelationEntry, DesignResult,
    TrainingPair,
};
use trainsens_core::fading::{FadingKind, PilotScenario};
use trainsens_core::format::format_g;
use trainsens_core::pilot::{optimize_alpha, run_sweep, sweep_csv, AlphaMode, SweepSpec, SweptParameter};
use trainsens_core::radar::{is_detectable, max_sensing_range, RadarScenario};
use trainsens_core::rate::db_to_linear;
use trainsens_core::specfun::Quadrature;

use crate::config::header;
use crate::{CliError, CommonArgs, Format};

fn g(x: f64) -> String {
    format_g(x, 12)
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Usage(format!("missing required parameter --{flag}")))
}

fn resolved_config(command: &str, common: &CommonArgs, format: Format, params: &impl Serialize) -> Value {
    json!({
        "command": command,
        "format": format,
        "threads": common.threads,
        "params": params,
    })
}

/// Writes `header + body` to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}")))
        }
    }
}

/// `key = value` lines with the keys padded to a common width.
fn pretty_pairs(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    pairs.iter().map(|(k, v)| format!("{k:<width$} = {v}\n")).collect()
}

/// Right-aligned columns for a CSV body.
fn pretty_table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0; cols];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FadingArg {
    Block,
    Continuous,
}

impl From<FadingArg> for FadingKind {
    fn from(f: FadingArg) -> Self {
        match f {
            FadingArg::Block => FadingKind::Block,
            FadingArg::Continuous => FadingKind::Continuous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    /// α ranges over the interval [1/n, 1).
    Continuous,
    /// αn restricted to whole pilot symbols.
    Integer,
}

impl From<ModeArg> for AlphaMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => AlphaMode::ContinuousAlpha,
            ModeArg::Integer => AlphaMode::IntegerPilots,
        }
    }
}

/// Packet/channel parameters shared by `pilot-opt` and `pilot-sweep`.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScenarioArgs {
    /// Packet length in symbols.
    #[arg(long)]
    pub n: Option<u32>,
    /// Average SNR in dB.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Target packet error probability.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub fading: Option<FadingArg>,
    /// Normalized Doppler (continuous fading only).
    #[arg(long)]
    pub f_d: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

impl ScenarioArgs {
    /// Fills defaults for the optional fields. Parameters named in `swept`
    /// become optional too since the grid supplies them.
    fn resolve(&mut self, swept: Option<SweptParameter>) -> Result<(), CliError> {
        let fading = *self.fading.get_or_insert(FadingArg::Block);
        self.mode.get_or_insert(ModeArg::Continuous);
        if fading == FadingArg::Block && self.f_d.is_none() {
            self.f_d = Some(0.0);
        }
        for (p, present, flag) in [
            (SweptParameter::N, self.n.is_some(), "n"),
            (SweptParameter::SnrDb, self.snr_db.is_some(), "snr-db"),
            (SweptParameter::Epsilon, self.epsilon.is_some(), "epsilon"),
            (SweptParameter::FD, self.f_d.is_some(), "f-d"),
        ] {
            if swept == Some(p) {
                continue;
            }
            if !present {
                return Err(CliError::Usage(format!("missing required parameter --{flag}")));
            }
        }
        Ok(())
    }

    /// Scenario with the swept parameter set to a placeholder the grid will
    /// overwrite.
    fn scenario(&self) -> Result<PilotScenario, CliError> {
        let n = self.n.unwrap_or(2);
        Ok(PilotScenario::new(
            n,
            1.0 / f64::from(n.max(1)),
            self.epsilon.unwrap_or(0.5),
            db_to_linear(self.snr_db.unwrap_or(0.0)),
            self.f_d.unwrap_or(0.0),
            required(&self.fading, "fading")?.into(),
        )?)
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PilotOptArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
}

pub fn pilot_opt(mut a: PilotOptArgs, common: &CommonArgs) -> Result<(), CliError> {
    a.scenario.resolve(None)?;
    let format = common.format.unwrap_or(Format::Pretty);
    let s = a.scenario.scenario()?;
    let sol = optimize_alpha(&s, required(&a.scenario.mode, "mode")?.into(), &Quadrature::default())?;
    let b = &sol.breakdown;
    let pairs = [
        ("alpha_opt", g(sol.alpha_opt)),
        ("pilot_symbols", g(sol.alpha_opt * f64::from(s.n))),
        ("rate_opt", g(sol.rate_opt)),
        ("alpha_baseline", g(sol.alpha_baseline)),
        ("rate_at_baseline", g(sol.rate_at_baseline)),
        ("gain_percent", g(sol.gain_percent)),
        ("clamped_flag", u8::from(sol.clamped()).to_string()),
        ("capacity_bits", g(b.capacity_bits)),
        ("dispersion_bits2", g(b.dispersion_bits2)),
        ("penalty_bits", g(b.penalty_bits)),
        ("rho_eff", g(b.rho_eff)),
        ("sigma2", g(b.sigma2)),
    ];
    let body = match format {
        Format::Pretty => pretty_pairs(&pairs),
        Format::Csv => {
            let keys: Vec<&str> = pairs.iter().map(|(k, _)| *k).collect();
            let vals: Vec<&str> = pairs.iter().map(|(_, v)| v.as_str()).collect();
            format!("{}\n{}\n", keys.join(","), vals.join(","))
        }
    };
    let cfg = resolved_config("pilot-opt", common, format, &a);
    emit(common.out.as_deref(), &(header(&cfg, common.seed.unwrap_or(0)) + &body))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ParamArg {
    Epsilon,
    N,
    #[value(name = "snr_db")]
    SnrDb,
    #[value(name = "f_d")]
    #[serde(rename = "f_d")]
    FD,
}

impl From<ParamArg> for SweptParameter {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Epsilon => SweptParameter::Epsilon,
            ParamArg::N => SweptParameter::N,
            ParamArg::SnrDb => SweptParameter::SnrDb,
            ParamArg::FD => SweptParameter::FD,
        }
    }
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PilotSweepArgs {
    /// Swept parameter.
    #[arg(long, value_enum)]
    pub param: Option<ParamArg>,
    /// Explicit grid, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub grid: Option<Vec<f64>>,
    /// First grid value (with --to and --steps, instead of --grid).
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Space the generated grid logarithmically.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub log: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
}

impl PilotSweepArgs {
    /// Materializes the grid so the resolved config records every value.
    fn resolve(&mut self) -> Result<SweptParameter, CliError> {
        let param: SweptParameter = required(&self.param, "param")?.into();
        if self.grid.is_none() {
            let (from, to) = (required(&self.from, "grid or --from")?, required(&self.to, "to")?);
            let steps = required(&self.steps, "steps")?;
            if steps < 2 {
                return Err(CliError::Usage("--steps must be at least 2".into()));
            }
            let log = self.log.unwrap_or(false);
            if log && !(from > 0.0 && to > 0.0) {
                return Err(CliError::Usage("a logarithmic grid needs positive endpoints".into()));
            }
            let grid = (0..steps)
                .map(|i| {
                    let t = i as f64 / (steps - 1) as f64;
                    let v = if log {
                        (from.ln() + t * (to.ln() - from.ln())).exp()
                    } else {
                        from + t * (to - from)
                    };
                    if param == SweptParameter::N { v.round() } else { v }
                })
                .collect();
            self.grid = Some(grid);
        }
        self.scenario.resolve(Some(param))?;
        Ok(param)
    }
}

pub fn pilot_sweep(mut a: PilotSweepArgs, common: &CommonArgs) -> Result<(), CliError> {
    let param = a.resolve()?;
    let format = common.format.unwrap_or(Format::Csv);
    let mut base = a.scenario.clone();
    if param == SweptParameter::FD {
        base.f_d = Some(0.0);
    }
    let spec = SweepSpec {
        swept_parameter: param,
        grid: a.grid.clone().unwrap_or_default(),
        base: base.scenario()?,
        mode: required(&a.scenario.mode, "mode")?.into(),
    };
    let rows = run_sweep(&spec, &Quadrature::default())?;
    let csv = sweep_csv(param, &rows);
    let body = match format {
        Format::Csv => csv,
        Format::Pretty => pretty_table(&csv),
    };
    let cfg = resolved_config("pilot-sweep", common, format, &a);
    emit(common.out.as_deref(), &(header(&cfg, common.seed.unwrap_or(0)) + &body))
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DesignArgs {
    /// Training symbols per antenna.
    #[arg(long)]
    pub b: Option<usize>,
    /// Base-station antennas.
    #[arg(long)]
    pub n_t: Option<usize>,
    /// User antennas.
    #[arg(long)]
    pub n_r: Option<usize>,
    /// Zero-correlation zone, in lags.
    #[arg(long)]
    pub k: Option<usize>,
    /// Transmit correlation magnitude.
    #[arg(long)]
    pub rho_rt: Option<f64>,
    /// Transmit correlation phase, in multiples of π.
    #[arg(long, allow_negative_numbers = true)]
    pub theta_rt_pi: Option<f64>,
    #[arg(long)]
    pub rho_rr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_rr_pi: Option<f64>,
    /// Temporal noise correlation magnitude.
    #[arg(long)]
    pub rho_mt: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_mt_pi: Option<f64>,
    /// Outer stopping threshold on the MSE change.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eps_corr: Option<f64>,
    /// Inner iterations per outer iteration.
    #[arg(long)]
    pub mu: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Independent runs with seeds `seed, seed+1, …`, each in `seed-<s>/`.
    #[arg(long)]
    pub runs: Option<usize>,
}

impl DesignArgs {
    fn resolve(&mut self) -> ComsensSettings {
        use std::f64::consts::PI;
        let d = ComsensSettings::default();
        let s = ComsensSettings {
            b: *self.b.get_or_insert(d.b),
            n_t: *self.n_t.get_or_insert(d.n_t),
            n_r: *self.n_r.get_or_insert(d.n_r),
            k: *self.k.get_or_insert(d.k),
            rho_rt: *self.rho_rt.get_or_insert(d.rho_rt),
            theta_rt: PI * *self.theta_rt_pi.get_or_insert(d.theta_rt / PI),
            rho_rr: *self.rho_rr.get_or_insert(d.rho_rr),
            theta_rr: PI * *self.theta_rr_pi.get_or_insert(d.theta_rr / PI),
            rho_mt: *self.rho_mt.get_or_insert(d.rho_mt),
            theta_mt: PI * *self.theta_mt_pi.get_or_insert(d.theta_mt / PI),
            eps_corr: *self.eps_corr.get_or_insert(d.eps_corr),
            eta: *self.eta.get_or_insert(d.eta),
            mu: *self.mu.get_or_insert(d.mu),
            max_outer: *self.max_outer.get_or_insert(d.max_outer),
        };
        self.runs.get_or_insert(1);
        s
    }
}

fn correlation_csv(entries: &[CorrelationEntry]) -> String {
    let mut out = String::from("lag,pair,magnitude_db\n");
    for e in entries {
        let _ = writeln!(out, "{},{},{}", e.lag, e.pair, g(e.magnitude_db));
    }
    out
}

fn write_design(dir: &Path, head: &str, r: &DesignResult) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut mse = String::from("iteration,mse\n");
    for (i, v) in r.trace.outer_mse.iter().enumerate() {
        let _ = writeln!(mse, "{i},{}", g(*v));
    }
    let files = [
        ("x.txt", matio::write_matrix(&r.pair.x)),
        ("y.txt", matio::write_matrix(&r.pair.y)),
        ("mse.csv", mse),
        ("correlation.csv", correlation_csv(&r.correlation_report)),
    ];
    for (name, body) in files {
        emit(Some(&dir.join(name)), &(head.to_owned() + &body))?;
    }
    Ok(())
}

pub fn comsens_design(mut a: DesignArgs, common: &CommonArgs) -> Result<(), CliError> {
    let settings = a.resolve();
    let format = common.format.unwrap_or(Format::Pretty);
    let runs = a.runs.unwrap_or(1);
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let prob = build_problem(&settings)?;
    let seed = common.seed.unwrap_or(0);
    let seeds: Vec<u64> = (0..runs as u64)
        .map(|i| {
            seed.checked_add(i)
                .ok_or_else(|| CliError::Usage("seed range overflows 64 bits".into()))
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<DesignResult> = seeds
        .par_iter()
        .map(|&s| design(&prob, s))
        .collect::<Result<_, _>>()?;

    let cfg = resolved_config("comsens-design", common, format, &a);
    let out_dir = common.out.clone().unwrap_or_else(|| PathBuf::from("comsens-design"));
    let (cond_r, cond_m) = prob.condition_numbers();
    let mut summary = format!("cond_R,{}\ncond_M,{}\n", g(cond_r), g(cond_m));
    summary.push_str("seed,final_mse,iterations,converged,power_excess,cross_max,auto_max,dir\n");
    for (&s, r) in seeds.iter().zip(&results) {
        let dir = if runs == 1 { out_dir.clone() } else { out_dir.join(format!("seed-{s}")) };
        write_design(&dir, &header(&cfg, s), r)?;
        let res = r.trace.constraint_residuals.last().copied().unwrap_or_default();
        let _ = writeln!(
            summary,
            "{s},{},{},{},{},{},{},{}",
            g(r.final_mse),
            r.trace.iterations,
            u8::from(r.trace.converged),
            g(res.power_excess),
            g(res.cross_max),
            g(res.auto_max),
            dir.display()
        );
    }
    let body = match format {
        Format::Csv => summary,
        Format::Pretty => pretty_table(&summary),
    };
    emit(None, &(header(&cfg, seed) + &body))
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct VerifyArgs {
    /// Downlink sequence file (matrix text format).
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Uplink sequence file.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Zone checked by the summary.
    #[arg(long)]
    pub k: Option<usize>,
}

fn read_sequence(path: &Path) -> Result<trainsens_core::comsens::CMatrix, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(matio::read_matrix(&text)?)
}

/// In-zone correlation extremes: largest cross magnitude over lags `0..=k`,
/// largest autocorrelation over `1..=k`, smallest lag-0 autocorrelation.
fn zone_summary(pair: &TrainingPair, k: usize) -> Result<(f64, f64, f64), CliError> {
    let mut cross: f64 = 0.0;
    let mut auto: f64 = 0.0;
    for m in 0..=k as i64 {
        cross = correlation(&pair.x, &pair.y, m)?.iter().map(|v| v.norm()).fold(cross, f64::max);
        if m > 0 {
            let a = correlation(&pair.x, &pair.x, m)?;
            auto = a.diagonal().iter().map(|v| v.norm()).fold(auto, f64::max);
        }
    }
    let peak = correlation(&pair.x, &pair.x, 0)?
        .diagonal()
        .iter()
        .map(|v| v.norm())
        .fold(f64::INFINITY, f64::min);
    Ok((cross, auto, peak))
}

pub fn comsens_verify(mut a: VerifyArgs, common: &CommonArgs) -> Result<(), CliError> {
    let x_path = required(&a.x, "x")?;
    let y_path = required(&a.y, "y")?;
    let k = *a.k.get_or_insert(ComsensSettings::default().k);
    let format = common.format.unwrap_or(Format::Csv);
    let pair = TrainingPair { x: read_sequence(&x_path)?, y: read_sequence(&y_path)? };
    if pair.x.nrows() != pair.y.nrows() {
        return Err(trainsens_core::Error::Dimension(format!(
            "X has {} rows but Y has {}",
            pair.x.nrows(),
            pair.y.nrows()
        ))
        .into());
    }
    if k >= pair.x.nrows() {
        return Err(CliError::Usage(format!("--k {k} must be below the sequence length {}", pair.x.nrows())));
    }
    let body = match format {
        Format::Csv => correlation_csv(&trainsens_core::comsens::correlation_report(&pair)?),
        Format::Pretty => {
            let (cross, auto, peak) = zone_summary(&pair, k)?;
            let db = |v: f64| 20.0 * v.log10();
            pretty_pairs(&[
                ("cross_max", g(cross)),
                ("auto_max", g(auto)),
                ("lag0_min", g(peak)),
                ("contrast_db", g(db(peak) - db(cross.max(auto)))),
            ])
        }
    };
    let cfg = resolved_config("comsens-verify", common, format, &a);
    emit(common.out.as_deref(), &(header(&cfg, common.seed.unwrap_or(0)) + &body))
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RadarArgs {
    /// Base station to user distance, km.
    #[arg(long)]
    pub d_user_km: Option<f64>,
    /// Symbol period, µs.
    #[arg(long)]
    pub symbol_us: Option<f64>,
    /// User processing time, in symbols.
    #[arg(long)]
    pub tproc_symbols: Option<f64>,
    /// Zero-correlation zone, in lags.
    #[arg(long)]
    pub k: Option<u32>,
    /// Optional object distance to test, km.
    #[arg(long)]
    pub d_object_km: Option<f64>,
    /// Propagation speed, m/s.
    #[arg(long)]
    pub wave_speed: Option<f64>,
}

pub fn radar_range(mut a: RadarArgs, common: &CommonArgs) -> Result<(), CliError> {
    let mut s = RadarScenario::new(
        1e3 * required(&a.d_user_km, "d-user-km")?,
        required(&a.tproc_symbols, "tproc-symbols")?,
        1e-6 * required(&a.symbol_us, "symbol-us")?,
        required(&a.k, "k")?,
    )?;
    s.wave_speed = *a.wave_speed.get_or_insert(s.wave_speed);
    s.validate()?;
    let format = common.format.unwrap_or(Format::Pretty);
    let range_km = max_sensing_range(&s) / 1e3;
    let detectable = a.d_object_km.map(|d| is_detectable(1e3 * d, &s));
    let body = match format {
        Format::Pretty => {
            let mut out = format!("max_sensing_range = {} km\n", g(range_km));
            if let Some(d) = detectable {
                let _ = writeln!(out, "detectable = {d}");
            }
            out
        }
        Format::Csv => format!(
            "max_range_km,detectable\n{},{}\n",
            g(range_km),
            detectable.map_or("", |d| if d { "1" } else { "0" })
        ),
    };
    let cfg = resolved_config("radar-range", common, format, &a);
    emit(common.out.as_deref(), &(header(&cfg, common.seed.unwrap_or(0)) + &body))
}
