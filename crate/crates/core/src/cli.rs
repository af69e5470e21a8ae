//! Command-line front end: configuration, experiment dispatch and run
//! manifests.
//!
//! Configuration files are flat `key = value` lines grouped under
//! `[section]` headers; `#` starts a comment. Every key can also be set with
//! `--set section.key=value`. All SNRs are in dB with
//! `Pt = σ_n²·10^(SNR/10)`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{init_precoder, InitScheme};
use crate::channel::{standard_complex_gaussian, NormalizedPool, SystemConfig};
use crate::error::{Error, Result};
use crate::harness::{
    default_weight_pairs, dof_slopes, esr_sweep, m_sensitivity, rate_region, write_esr_csv, write_hull_csv,
    write_m_sweep_csv, write_region_csv, write_slopes_csv, EsrPoint, HarnessConfig, Scheme,
};
use crate::optimizer::{ao_solve_sample, conservative_solve, AoStatus, AsrResult};
use crate::precoder::{Mode, Precoder};
use crate::qcqp::{check_kkt, QcqpProblem, SolveStatus};
use crate::rate::rate_wmmse_identity_check;
use crate::report::fmt_sig;
use crate::saa::{accumulate_safs, update_equalizers_weights};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimize one channel estimate and write the AO traces.
    SolveOne,
    /// Ergodic sum rate of every scheme over an SNR grid.
    EsrSweep,
    /// High-SNR slopes of the optimized schemes.
    Dof,
    /// Validated ESR as a function of the training sample size.
    MSweep,
    /// Two-user ergodic rate region over a weight grid.
    Region,
    /// Invariant checks on small random instances.
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveOne => "solve-one",
            Command::EsrSweep => "esr-sweep",
            Command::Dof => "dof",
            Command::MSweep => "m-sweep",
            Command::Region => "region",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ratesplit", version, about = "Rate-splitting precoder optimization under partial CSIT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (`[section]` headers, `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override one key, e.g. `--set system.alpha=0.6` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (overrides `harness.jobs`).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

/// One invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub overrides: Vec<String>,
    pub jobs: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub harness: HarnessConfig,
    /// SNR of `solve-one`.
    pub solve_snr_db: f64,
    /// Channel index of `solve-one`.
    pub solve_channel: usize,
    pub esr_snr_db: Vec<f64>,
    pub esr_schemes: Vec<Scheme>,
    pub dof_snr_db: Vec<f64>,
    pub dof_window_db: f64,
    pub dof_schemes: Vec<Scheme>,
    pub m_snr_db: f64,
    pub m_list: Vec<usize>,
    pub m_schemes: Vec<Scheme>,
    pub region_snr_db: f64,
    pub region_weights: Vec<(f64, f64)>,
    pub selftest_instances: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            harness: HarnessConfig::default(),
            solve_snr_db: 20.0,
            solve_channel: 0,
            esr_snr_db: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            esr_schemes: Scheme::ALL.to_vec(),
            dof_snr_db: vec![20.0, 25.0, 30.0, 35.0, 40.0],
            dof_window_db: 15.0,
            dof_schemes: vec![Scheme::RsOpt, Scheme::NoRsOpt],
            m_snr_db: 35.0,
            m_list: vec![1, 10, 100, 1000],
            m_schemes: vec![Scheme::RsOpt],
            region_snr_db: 30.0,
            region_weights: default_weight_pairs(),
            selftest_instances: 20,
        }
    }
}

fn list<T>(v: &str, f: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn join<T>(v: &[T], f: impl Fn(&T) -> String) -> String {
    v.iter().map(f).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Every key with its current value, in manifest order. Floats use the
    /// shortest text that parses back to the same value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.harness.system;
        let h = &self.harness;
        let schemes = |v: &[Scheme]| join(v, |s| s.label().to_string());
        vec![
            ("system.k", s.k.to_string()),
            ("system.nt", s.nt.to_string()),
            ("system.sigma_n2", s.sigma_n2.to_string()),
            ("system.alpha", s.alpha.to_string()),
            ("system.beta", s.beta.to_string()),
            ("system.m", s.m.to_string()),
            ("system.eps_r", s.eps_r.to_string()),
            ("system.max_iters", s.max_iters.to_string()),
            ("system.seed", s.seed.to_string()),
            ("harness.n_channels", h.n_channels.to_string()),
            ("harness.m_val", h.m_val.to_string()),
            ("harness.init", h.init.label().to_string()),
            ("harness.multi_start", h.multi_start.to_string()),
            ("harness.jobs", h.jobs.to_string()),
            ("solve.snr_db", self.solve_snr_db.to_string()),
            ("solve.channel", self.solve_channel.to_string()),
            ("esr.snr_db", join(&self.esr_snr_db, |x| x.to_string())),
            ("esr.schemes", schemes(&self.esr_schemes)),
            ("dof.snr_db", join(&self.dof_snr_db, |x| x.to_string())),
            ("dof.window_db", self.dof_window_db.to_string()),
            ("dof.schemes", schemes(&self.dof_schemes)),
            ("m_sweep.snr_db", self.m_snr_db.to_string()),
            ("m_sweep.m_list", join(&self.m_list, |x| x.to_string())),
            ("m_sweep.schemes", schemes(&self.m_schemes)),
            ("region.snr_db", self.region_snr_db.to_string()),
            (
                "region.weights",
                join(&self.region_weights, |(a, b)| format!("{a}:{b}")),
            ),
            ("selftest.instances", self.selftest_instances.to_string()),
        ]
    }

    /// Sets `section.key` from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::InvalidConfig(format!("invalid value '{value}' for key '{key}'"));
        let v = value.trim();
        let f = || v.parse::<f64>().map_err(|_| bad());
        let u = || v.parse::<usize>().map_err(|_| bad());
        let floats = || list(v, |x| x.parse::<f64>().ok()).ok_or_else(bad);
        let schemes = || {
            let s = list(v, |x| x.parse::<Scheme>().ok()).ok_or_else(bad)?;
            if s.is_empty() {
                Err(bad())
            } else {
                Ok(s)
            }
        };
        let s = &mut self.harness.system;
        match key {
            "system.k" => s.k = u()?,
            "system.nt" => s.nt = u()?,
            "system.sigma_n2" => s.sigma_n2 = f()?,
            "system.alpha" => s.alpha = f()?,
            "system.beta" => s.beta = f()?,
            "system.m" => s.m = u()?,
            "system.eps_r" => s.eps_r = f()?,
            "system.max_iters" => s.max_iters = u()?,
            "system.seed" => s.seed = v.parse().map_err(|_| bad())?,
            "harness.n_channels" => self.harness.n_channels = u()?,
            "harness.m_val" => self.harness.m_val = u()?,
            "harness.init" => self.harness.init = v.parse::<InitScheme>().map_err(|_| bad())?,
            "harness.multi_start" => self.harness.multi_start = v.parse().map_err(|_| bad())?,
            "harness.jobs" => self.harness.jobs = u()?,
            "solve.snr_db" => self.solve_snr_db = f()?,
            "solve.channel" => self.solve_channel = u()?,
            "esr.snr_db" => self.esr_snr_db = floats()?,
            "esr.schemes" => self.esr_schemes = schemes()?,
            "dof.snr_db" => self.dof_snr_db = floats()?,
            "dof.window_db" => self.dof_window_db = f()?,
            "dof.schemes" => self.dof_schemes = schemes()?,
            "m_sweep.snr_db" => self.m_snr_db = f()?,
            "m_sweep.m_list" => self.m_list = list(v, |x| x.parse().ok()).ok_or_else(bad)?,
            "m_sweep.schemes" => self.m_schemes = schemes()?,
            "region.snr_db" => self.region_snr_db = f()?,
            "region.weights" => {
                self.region_weights = if v == "default" {
                    default_weight_pairs()
                } else {
                    list(v, |x| {
                        let (a, b) = x.split_once(':')?;
                        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
                    })
                    .ok_or_else(bad)?
                }
            }
            "selftest.instances" => self.selftest_instances = u()?,
            _ => return Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a configuration text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_flat(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override '{kv}' is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn validate(&self) -> Result<()> {
        self.harness.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.esr_snr_db.is_empty() || self.dof_snr_db.is_empty() {
            return bad("SNR grids must not be empty");
        }
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return bad("m_sweep.m_list must hold positive sizes");
        }
        if self.region_weights.iter().any(|(a, b)| !(*a > 0.0 && *b > 0.0)) {
            return bad("region.weights must be positive");
        }
        if self.solve_channel >= self.harness.n_channels {
            return bad("solve.channel must be below harness.n_channels");
        }
        Ok(())
    }

    /// Manifest text: command, version and every resolved key.
    pub fn manifest(&self, command: Command) -> String {
        let mut s = String::new();
        s.push_str(&format!("command = {}\n", command.name()));
        s.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("seed = {}\n", self.harness.system.seed));
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

/// Resolves defaults, the config file, overrides and `--jobs`, in that
/// order.
pub fn resolve(spec: &ExperimentSpec) -> Result<Settings> {
    let mut settings = Settings::default();
    if let Some(path) = &spec.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        settings.apply_text(&text)?;
    }
    for kv in &spec.overrides {
        settings.apply_override(kv)?;
    }
    if let Some(j) = spec.jobs {
        settings.harness.jobs = j;
    }
    settings.validate()?;
    Ok(settings)
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main_with_args<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    run(&ExperimentSpec {
        command: cli.command,
        config: cli.config,
        out: cli.out,
        overrides: cli.overrides,
        jobs: cli.jobs,
    })
}

/// Runs one experiment and returns the exit code.
pub fn run(spec: &ExperimentSpec) -> i32 {
    let settings = match resolve(spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = fs::create_dir_all(&spec.out) {
        eprintln!("error: cannot create {}: {e}", spec.out.display());
        return EXIT_CONFIG;
    }
    if let Err(e) = fs::write(spec.out.join("manifest.txt"), settings.manifest(spec.command)) {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_CONFIG;
    }
    match dispatch(spec.command, &settings, &spec.out) {
        Ok(0) => EXIT_OK,
        Ok(failures) => {
            eprintln!("{failures} numerical failure(s); outputs written to {}", spec.out.display());
            EXIT_NUMERICAL
        }
        Err(e @ (Error::InvalidConfig(_) | Error::Parse(_))) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_NUMERICAL
        }
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(out.join(name))?))
}

/// Runs a command; returns the number of numerical failures.
fn dispatch(command: Command, s: &Settings, out: &Path) -> Result<usize> {
    match command {
        Command::SolveOne => solve_one(s, out),
        Command::EsrSweep => {
            let pts = esr_sweep(&s.harness, &s.esr_snr_db, &s.esr_schemes)?;
            let mut w = create(out, "esr.csv")?;
            write_esr_csv(&pts, &mut w)?;
            w.flush()?;
            print_points(&pts);
            Ok(pts.iter().map(|p| p.failures).sum())
        }
        Command::Dof => {
            let pts = esr_sweep(&s.harness, &s.dof_snr_db, &s.dof_schemes)?;
            let mut w = create(out, "esr.csv")?;
            write_esr_csv(&pts, &mut w)?;
            w.flush()?;
            let mut rows = Vec::new();
            let mut failures: usize = pts.iter().map(|p| p.failures).sum();
            for (scheme, slope) in dof_slopes(&pts, s.dof_window_db) {
                match slope {
                    Ok(v) => {
                        println!("{scheme}: slope {}", fmt_sig(v));
                        rows.push((scheme, s.harness.system.alpha, s.harness.system.k, v));
                    }
                    Err(e) => {
                        eprintln!("{scheme}: {e}");
                        failures += 1;
                    }
                }
            }
            let mut w = create(out, "slopes.csv")?;
            write_slopes_csv(&rows, &mut w)?;
            w.flush()?;
            Ok(failures)
        }
        Command::MSweep => {
            let pts = m_sensitivity(&s.harness, s.m_snr_db, &s.m_list, &s.m_schemes)?;
            let mut w = create(out, "m_sweep.csv")?;
            write_m_sweep_csv(&pts, &mut w)?;
            w.flush()?;
            for p in &pts {
                println!(
                    "{} M={}: validated {} ± {} (training {})",
                    p.scheme,
                    p.m,
                    fmt_sig(p.validated.esr),
                    fmt_sig(p.validated.std_err),
                    fmt_sig(p.training_esr)
                );
            }
            Ok(pts.iter().map(|p| p.validated.failures).sum())
        }
        Command::Region => {
            let report = rate_region(&s.harness, s.region_snr_db, &s.region_weights)?;
            let mut w = create(out, "region.csv")?;
            write_region_csv(&report.points, &mut w)?;
            w.flush()?;
            let mut w = create(out, "region_hull.csv")?;
            write_hull_csv(&report, &mut w)?;
            w.flush()?;
            println!(
                "{} points; smallest RS − NoRS weighted objective {}",
                report.points.len(),
                fmt_sig(report.min_objective_margin)
            );
            Ok(report.points.iter().map(|p| p.failures).sum())
        }
        Command::Selftest => selftest(s, out),
    }
}

fn print_points(pts: &[EsrPoint]) {
    for p in pts {
        println!(
            "{:<16} {:>6} dB  ESR {} ± {}",
            p.scheme.label(),
            fmt_sig(p.snr_db),
            fmt_sig(p.esr),
            fmt_sig(p.std_err)
        );
    }
}

fn solve_one(s: &Settings, out: &Path) -> Result<usize> {
    let h = &s.harness;
    let cfg = h.system.at_snr_db(s.solve_snr_db);
    cfg.validate()?;
    let pool = NormalizedPool::<f64>::generate(cfg.seed, cfg.nt, cfg.k, h.n_channels, cfg.m);
    let (est, sample, _) = pool.scenario(s.solve_channel, cfg.sigma_e2(), cfg.m)?;
    let init = init_precoder(&est, &cfg, h.init)?;
    if init.fallback {
        eprintln!("note: rank-deficient estimate, {} fell back to MRC directions", h.init);
    }
    let runs: Vec<(&str, AsrResult<f64>)> = vec![
        ("rs", ao_solve_sample(&sample, &cfg, &init.precoder, Mode::Rs)?),
        ("nors", ao_solve_sample(&sample, &cfg, &init.precoder.to_nors(cfg.pt), Mode::NoRs)?),
        ("conservative", conservative_solve(&est, &cfg, &init.precoder)?),
    ];
    let mut summary = create(out, "solve.csv")?;
    writeln!(summary, "run,asr,common_rate,iterations,status")?;
    let mut failures = 0;
    for (name, r) in &runs {
        let mut w = create(out, &format!("trace_{name}.csv"))?;
        r.trace.write_csv(&mut w)?;
        w.flush()?;
        writeln!(
            summary,
            "{name},{},{},{},{}",
            fmt_sig(r.asr),
            fmt_sig(r.common_rate),
            r.trace.iterations(),
            r.status.label()
        )?;
        println!(
            "{name:<13} ASR {} (common {}) after {} iterations, {}",
            fmt_sig(r.asr),
            fmt_sig(r.common_rate),
            r.trace.iterations(),
            r.status.label()
        );
        failures += usize::from(r.status == AoStatus::SolverFailure);
    }
    summary.flush()?;
    Ok(failures)
}

/// One self-test check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the invariant suites on `instances` random problems derived from
/// the configured seed and system size.
pub fn selftest_checks(s: &Settings) -> Vec<CheckOutcome> {
    let sys = &s.harness.system;
    let n = s.selftest_instances.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(sys.seed ^ 0x5e1f_7e57);
    let mut out = Vec::new();

    // Rate-WMMSE identity
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..n * 10 {
        let pt = 10f64.powf(rng.random_range(0.0..4.0));
        let h = standard_complex_gaussian::<f64, _>(sys.nt, sys.k, &mut rng);
        let p = crate::optimizer::random_precoder(sys.nt, sys.k, pt, Mode::Rs, &mut rng);
        for k in 0..sys.k {
            match rate_wmmse_identity_check(h.column(k), &p, k, sys.sigma_n2) {
                Ok(_) => {}
                Err(Error::IdentityViolation { deviation, .. }) => {
                    worst = worst.max(deviation);
                    ok = false;
                }
                Err(_) => ok = false,
            }
        }
    }
    out.push(CheckOutcome {
        name: "rate_wmmse_identity",
        passed: ok,
        detail: if ok { "all within tolerance".into() } else { format!("deviation {worst:e}") },
    });

    // AO monotonicity, bookkeeping (checked inside the loop) and dominance
    let mut mono = (true, 0.0f64);
    let mut dom = (true, f64::INFINITY);
    let mut kkt = (true, 0.0f64);
    let runs = n.min(10);
    let pool = NormalizedPool::<f64>::generate(sys.seed, sys.nt, sys.k, runs, sys.m.min(50));
    for c in 0..runs {
        let snr = [10.0, 20.0, 30.0][c % 3];
        let cfg = SystemConfig {
            m: sys.m.min(50),
            ..sys.at_snr_db(snr)
        };
        let mut run = || -> Result<(AsrResult<f64>, AsrResult<f64>)> {
            let (est, sample, _) = pool.scenario(c, cfg.sigma_e2(), cfg.m)?;
            let init = init_precoder(&est, &cfg, InitScheme::MrcSvd)?.precoder;
            let nors = ao_solve_sample(&sample, &cfg, &init.to_nors(cfg.pt), Mode::NoRs)?;
            let lifted = Precoder {
                mode: Mode::Rs,
                ..nors.precoder.clone()
            };
            let rs = ao_solve_sample(&sample, &cfg, &init, Mode::Rs)?;
            let rs = if rs.asr < nors.asr {
                let alt = ao_solve_sample(&sample, &cfg, &lifted, Mode::Rs)?;
                if alt.asr > rs.asr {
                    alt
                } else {
                    rs
                }
            } else {
                rs
            };
            // KKT certificate of one precoder update at the final point
            let eq = update_equalizers_weights(&sample, &rs.precoder, cfg.sigma_n2)?;
            let safs = accumulate_safs(&sample, &eq)?;
            let prob = QcqpProblem::sum_rate(safs, cfg.sigma_n2, cfg.pt, Mode::Rs)?;
            let sol = prob.solve(Some(&rs.precoder))?;
            let r = check_kkt(&prob, &sol).max();
            kkt.1 = kkt.1.max(r);
            kkt.0 &= sol.status == SolveStatus::Certified && r <= 1e-7;
            Ok((rs, nors))
        };
        match run() {
            Ok((rs, nors)) => {
                for r in [&rs, &nors] {
                    let inc = r.trace.max_increase();
                    mono.1 = mono.1.max(inc);
                    mono.0 &= inc <= 1e-8 && r.status != AoStatus::SolverFailure;
                }
                dom.1 = dom.1.min(rs.asr - nors.asr);
                dom.0 &= rs.asr >= nors.asr - cfg.eps_r;
            }
            Err(e) => {
                mono = (false, mono.1);
                out.push(CheckOutcome {
                    name: "ao_run",
                    passed: false,
                    detail: e.to_string(),
                });
            }
        }
    }
    out.push(CheckOutcome {
        name: "ao_monotone_bookkeeping",
        passed: mono.0,
        detail: format!("largest objective increase {:e}", mono.1),
    });
    out.push(CheckOutcome {
        name: "rs_dominates_nors",
        passed: dom.0,
        detail: format!("smallest RS - NoRS margin {:e}", dom.1),
    });
    out.push(CheckOutcome {
        name: "qcqp_kkt",
        passed: kkt.0,
        detail: format!("largest KKT residual {:e}", kkt.1),
    });
    out
}

fn selftest(s: &Settings, out: &Path) -> Result<usize> {
    let checks = selftest_checks(s);
    let mut w = create(out, "selftest.csv")?;
    writeln!(w, "check,passed,detail")?;
    for c in &checks {
        writeln!(w, "{},{},\"{}\"", c.name, c.passed, c.detail)?;
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    w.flush()?;
    Ok(checks.iter().filter(|c| !c.passed).count())
}

/// Parses a text config into a map of fully qualified keys; a repeated key
/// keeps its last value.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        let key = if section.is_empty() || k.contains('.') {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}
