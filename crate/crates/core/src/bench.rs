//! Overhead measurement: runs a program under the four configurations,
//! derives the ratios and fits `r_driver = a + b/ε`.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::driver::{DefaultTrace, DriverError, TracerDriver};
use crate::kernel::{program, solve, Model, NoTracer, UnknownProgram};
use crate::matcher::ActivePatternSet;
use crate::pattern::{load_patterns, PatternError};
use crate::wire::{Frame, Link, NullLink, Request, WireError};

pub const PATTERN_1A: &str =
    "p1a: when port=post and isNamed(cname) do current(port,chrono,cident).";
pub const PATTERN_2A: &str =
    "p2a: when port=reduce and (isNamed(vname) and isNamed(cname)) do current(port,chrono,cident).";
pub const PATTERN_3A: &str = "p3a: when chrono=0 do current(chrono).";
pub const PATTERN_4A: &str =
    "p4a: when depth=50000 or (chrono>=1 and node=9999999) do current(chrono,depth).";
pub const PATTERN_6B: &str = "\
cstr: when port=post do current(chrono,cident,cinternal).
tree: when port in [failure,backTo,choicePoint,solution] do current(chrono,node,port).";
pub const PATTERN_7B: &str = "\
newvar: when port=newVariable do current(chrono, vident, vname).
dom: when port in [choicePoint,backTo,solution] do current(chrono,node,port,named_vars,full_dom).";
pub const PATTERN_8B: &str = "propag1: when port=reduce do current(chrono).";
pub const PATTERN_9B: &str = "propag2: when port=awake do current(chrono).";

/// Programs used when none are named, spread over an order of magnitude
/// of time per event.
pub const DEFAULT_PROGRAMS: &[&str] = &[
    "propag(200000)",
    "queens(8)",
    "golomb(6)",
    "golomb(7)",
    "subsetsum(16)",
    "subsetsum(18)",
    "sendmory",
];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    UnknownProgram(#[from] UnknownProgram),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("unknown pattern set `{0}` (use 1a..5a, 6b..9b or a combination like 6|8b)")]
    UnknownPatternSet(String),
    #[error("need at least 3 points to fit, got {0}")]
    FitUnderdetermined(usize),
    #[error("at least 3 repetitions are needed, got {0}")]
    TooFewReps(usize),
}

/// Source text of a named pattern set. `5a` is 1a to 4a together;
/// `6|8|9b` unions b-sets.
pub fn pattern_set(name: &str) -> Result<String, BenchError> {
    let name = name.trim();
    let one = |n: &str| -> Option<&'static str> {
        Some(match n {
            "1a" => PATTERN_1A,
            "2a" => PATTERN_2A,
            "3a" => PATTERN_3A,
            "4a" => PATTERN_4A,
            "6b" | "6" => PATTERN_6B,
            "7b" | "7" => PATTERN_7B,
            "8b" | "8" => PATTERN_8B,
            "9b" | "9" => PATTERN_9B,
            _ => return None,
        })
    };
    if name == "5a" {
        return Ok([PATTERN_1A, PATTERN_2A, PATTERN_3A, PATTERN_4A].join("\n"));
    }
    if let Some(s) = one(name) {
        return Ok(s.to_string());
    }
    if let Some(body) = name.strip_suffix('b') {
        if body.contains('|') {
            let parts: Option<Vec<&str>> = body.split('|').map(|p| one(p.trim())).collect();
            if let Some(parts) = parts {
                return Ok(parts.join("\n"));
            }
        }
    }
    Err(BenchError::UnknownPatternSet(name.to_string()))
}

/// Expands `1a..5a` / `6b..9b` ranges and comma lists into set names.
pub fn expand_sets(spec: &str) -> Result<Vec<String>, BenchError> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let bad = || BenchError::UnknownPatternSet(part.to_string());
            let (l, ls) = lo.split_at(lo.len().saturating_sub(1));
            let (h, hs) = hi.split_at(hi.len().saturating_sub(1));
            if ls != hs {
                return Err(bad());
            }
            let (l, h): (u32, u32) = (l.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?);
            for i in l..=h {
                let n = format!("{i}{ls}");
                pattern_set(&n)?;
                out.push(n);
            }
        } else {
            pattern_set(part)?;
            out.push(part.to_string());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Config {
    /// Hooks disabled.
    Prog,
    /// Hooks on, no pattern.
    Tracer,
    /// Patterns active; messages are built and dropped unencoded.
    Driver,
    /// Patterns active; messages are encoded and consumed by a null sink.
    Gcom,
}

impl Config {
    pub const ALL: [Config; 4] = [Config::Prog, Config::Tracer, Config::Driver, Config::Gcom];

    pub fn name(self) -> &'static str {
        match self {
            Config::Prog => "prog",
            Config::Tracer => "tracer",
            Config::Driver => "driver",
            Config::Gcom => "gcom",
        }
    }
}

/// Swallows frames without encoding them and answers `go`.
#[derive(Debug, Default)]
struct DropLink;

impl Link for DropLink {
    fn send(&mut self, _: Frame) -> Result<(), WireError> {
        Ok(())
    }
    fn recv(&mut self) -> Result<Request, WireError> {
        Ok(Request::Go)
    }
}

/// What one run produced, besides its time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounts {
    pub events: u64,
    pub messages: u64,
    pub bytes: u64,
}

/// Parses and activates a pattern source.
pub fn pattern_set_of(src: &str) -> Result<ActivePatternSet, BenchError> {
    let mut set = ActivePatternSet::new();
    set.add_patterns(load_patterns(src)?)
        .map_err(DriverError::from)?;
    Ok(set)
}

/// One execution of `model` under `config`.
pub fn run_once(model: &Model, patterns: &str, config: Config) -> Result<RunCounts, BenchError> {
    Ok(run_with(model, &pattern_set_of(patterns)?, config))
}

/// One execution with an already compiled pattern set (cloned per run, so
/// parsing stays out of the timings).
pub fn run_with(model: &Model, set: &ActivePatternSet, config: Config) -> RunCounts {
    match config {
        Config::Prog => RunCounts {
            events: solve(model, NoTracer).events,
            ..Default::default()
        },
        Config::Tracer => {
            let mut d = TracerDriver::new(DropLink);
            let events = solve(model, &mut d).events;
            RunCounts {
                events,
                ..Default::default()
            }
        }
        Config::Driver => {
            let mut d = TracerDriver::with_set(DropLink, set.clone());
            let events = solve(model, &mut d).events;
            RunCounts {
                events,
                messages: d.stats().messages,
                bytes: 0,
            }
        }
        Config::Gcom => {
            let mut d = TracerDriver::with_set(NullLink::new(), set.clone());
            let events = solve(model, &mut d).events;
            RunCounts {
                events,
                messages: d.stats().messages,
                bytes: d.link().bytes_sent(),
            }
        }
    }
}

/// Encoded size of the untargeted default trace.
pub fn default_trace_bytes(model: &Model) -> RunCounts {
    let mut t = DefaultTrace::new(NullLink::new());
    let events = solve(model, &mut t).events;
    RunCounts {
        events,
        messages: t.messages,
        bytes: t.into_link().bytes_sent(),
    }
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub reps: usize,
    /// Each sample repeats the run until at least this much time passed.
    pub min_batch: Duration,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            reps: 11,
            min_batch: Duration::from_millis(20),
        }
    }
}

/// A job whose per-run time is sampled.
pub struct Job<'a> {
    pub name: String,
    pub run: Box<dyn FnMut() -> RunCounts + 'a>,
}

/// Median per-run milliseconds of every job, with the jobs interleaved
/// inside each repetition so drift hits them alike. The first (warm-up)
/// run of each job also sizes its batch.
pub fn measure(
    jobs: &mut [Job<'_>],
    opts: &BenchOptions,
) -> Result<Vec<(f64, RunCounts)>, BenchError> {
    if opts.reps < 3 {
        return Err(BenchError::TooFewReps(opts.reps));
    }
    let mut batch = Vec::with_capacity(jobs.len());
    let mut counts = Vec::with_capacity(jobs.len());
    for j in jobs.iter_mut() {
        let t0 = Instant::now();
        counts.push((j.run)());
        let once = t0.elapsed().max(Duration::from_micros(1));
        let k = (opts.min_batch.as_secs_f64() / once.as_secs_f64())
            .ceil()
            .max(1.0) as u32;
        batch.push(k);
    }
    let mut samples = vec![Vec::with_capacity(opts.reps); jobs.len()];
    for _ in 0..opts.reps {
        for (i, j) in jobs.iter_mut().enumerate() {
            let t0 = Instant::now();
            for _ in 0..batch[i] {
                std::hint::black_box((j.run)());
            }
            samples[i].push(t0.elapsed().as_secs_f64() * 1e3 / batch[i] as f64);
        }
    }
    Ok(samples
        .iter_mut()
        .zip(counts)
        .map(|(s, c)| (median(s), c))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ratios {
    pub r_tracer: f64,
    pub r_driver: f64,
    pub r_gcom: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub program: String,
    pub driver_set: String,
    pub gcom_set: String,
    pub events: u64,
    pub t_prog: f64,
    pub t_tracer: f64,
    pub t_driver: f64,
    pub t_gcom: f64,
    /// Nanoseconds per event of the plain run.
    pub epsilon: f64,
    pub ratios: Ratios,
    pub messages: u64,
    pub trace_bytes: u64,
}

impl TimingReport {
    pub fn times(&self) -> [f64; 4] {
        [self.t_prog, self.t_tracer, self.t_driver, self.t_gcom]
    }

    /// `t_prog ≤ t_tracer ≤ t_driver ≤ t_gcom`, each step allowed `slack`
    /// relative noise.
    pub fn ordered(&self, slack: f64) -> bool {
        self.times()
            .windows(2)
            .all(|w| w[0] <= w[1] * (1.0 + slack))
    }
}

pub fn ratio(t: f64, t_prog: f64) -> f64 {
    t / t_prog
}

pub fn compute_ratios(t_prog: f64, t_tracer: f64, t_driver: f64, t_gcom: f64) -> Ratios {
    Ratios {
        r_tracer: ratio(t_tracer, t_prog),
        r_driver: ratio(t_driver, t_prog),
        r_gcom: ratio(t_gcom, t_prog),
    }
}

/// Times one program under all four configurations. `driver_src` should
/// match nothing; `gcom_src` is what gets generated and sent.
pub fn run_program(
    program_id: &str,
    driver_set: &str,
    gcom_set: &str,
    opts: &BenchOptions,
) -> Result<TimingReport, BenchError> {
    let prog = program(program_id)?;
    let dset = pattern_set_of(&pattern_set(driver_set)?)?;
    let gset = pattern_set_of(&pattern_set(gcom_set)?)?;
    let model = &prog.model;
    let mk = |c: Config, set: ActivePatternSet| Job {
        name: c.name().to_string(),
        run: Box::new(move || run_with(model, &set, c)),
    };
    let mut jobs = vec![
        mk(Config::Prog, ActivePatternSet::new()),
        mk(Config::Tracer, ActivePatternSet::new()),
        mk(Config::Driver, dset),
        mk(Config::Gcom, gset),
    ];
    let m = measure(&mut jobs, opts)?;
    let events = m[0].1.events;
    debug_assert!(m.iter().all(|(_, c)| c.events == events));
    let (t_prog, t_tracer, t_driver, t_gcom) = (m[0].0, m[1].0, m[2].0, m[3].0);
    Ok(TimingReport {
        program: prog.id,
        driver_set: driver_set.to_string(),
        gcom_set: gcom_set.to_string(),
        events,
        t_prog,
        t_tracer,
        t_driver,
        t_gcom,
        epsilon: t_prog * 1e6 / events as f64,
        ratios: compute_ratios(t_prog, t_tracer, t_driver, t_gcom),
        messages: m[3].1.messages,
        trace_bytes: m[3].1.bytes,
    })
}

/// (events, t_prog, [(set, t_driver)])
type SetTimes = (u64, f64, Vec<(String, f64)>);

/// Plain-run time and driver time of each named pattern set on one
/// program, measured side by side.
fn time_sets(program_id: &str, sets: &[&str], opts: &BenchOptions) -> Result<SetTimes, BenchError> {
    let prog = program(program_id)?;
    let model = &prog.model;
    let mut jobs = vec![Job {
        name: "prog".into(),
        run: Box::new(move || run_with(model, &ActivePatternSet::new(), Config::Prog)),
    }];
    for s in sets {
        let set = pattern_set_of(&pattern_set(s)?)?;
        jobs.push(Job {
            name: s.to_string(),
            run: Box::new(move || run_with(model, &set, Config::Driver)),
        });
    }
    let m = measure(&mut jobs, opts)?;
    let times = jobs
        .iter()
        .zip(&m)
        .skip(1)
        .map(|(j, (t, _))| (j.name.clone(), *t))
        .collect();
    Ok((m[0].1.events, m[0].0, times))
}

/// Driver ratio of each named pattern set on one program.
pub fn driver_ratios(
    program_id: &str,
    sets: &[&str],
    opts: &BenchOptions,
) -> Result<Vec<(String, f64)>, BenchError> {
    let (_, t_prog, times) = time_sets(program_id, sets, opts)?;
    Ok(times
        .into_iter()
        .map(|(n, t)| (n, ratio(t, t_prog)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
}

/// Least squares of `r = a + b/ε` over `(ε, r)` points.
pub fn fit_model(points: &[(f64, f64)]) -> Result<ModelFit, BenchError> {
    if points.len() < 3 {
        return Err(BenchError::FitUnderdetermined(points.len()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(e, _)| 1.0 / e).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| *r).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(BenchError::FitUnderdetermined(1));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - a - b * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(ModelFit { a, b, r2 })
}

pub const SIGMA_TOLERANCE: f64 = 0.10;

/// Filtering several patterns together costs no more than filtering them
/// one by one: `r_combined ≤ (Σ r_i − (n−1)) × (1 + tol)`.
pub fn sigma_check(singles: &[f64], combined: f64, tol: f64) -> bool {
    let n = singles.len() as f64;
    let sigma = singles.iter().sum::<f64>() - (n - 1.0);
    combined <= sigma * (1.0 + tol)
}

/// Fitted driver ratio at `epsilon` ns per event.
pub fn predict(fit: &ModelFit, epsilon: f64) -> f64 {
    fit.a + fit.b / epsilon
}

/// Per-event driver cost (ns) of each pattern, measured on a calibration
/// program.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternLibrary {
    pub calibration: String,
    pub delta_ns: Vec<(String, f64)>,
}

impl PatternLibrary {
    pub fn calibrate(
        program_id: &str,
        sets: &[&str],
        opts: &BenchOptions,
    ) -> Result<Self, BenchError> {
        let (events, t_prog, times) = time_sets(program_id, sets, opts)?;
        let delta_ns = times
            .into_iter()
            .map(|(n, t)| (n, ((t - t_prog) * 1e6 / events as f64).max(0.0)))
            .collect();
        Ok(PatternLibrary {
            calibration: program(program_id)?.id,
            delta_ns,
        })
    }

    pub fn delta(&self, set: &str) -> Option<f64> {
        self.delta_ns
            .iter()
            .find(|(n, _)| n == set)
            .map(|(_, d)| *d)
    }
}

/// Predicted `r_driver` of running under patterns costing `delta` ns per
/// event a program whose events take `epsilon` ns.
pub fn predict_ratio(delta: f64, epsilon: f64) -> f64 {
    1.0 + delta / epsilon
}

/// Table 1 / Table 2 style report.
pub fn render_report(reports: &[TimingReport], fit: Option<&ModelFit>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9} {:>7} {:>7} {:>7} {:>9} {:>12}",
        "program",
        "events",
        "t_prog",
        "t_tracer",
        "t_driver",
        "t_gcom",
        "eps(ns)",
        "R_tr",
        "R_dr",
        "R_gc",
        "msgs",
        "bytes"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<16} {:>10} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>9.1} {:>7.2} {:>7.2} {:>7.2} {:>9} {:>12}",
            r.program,
            r.events,
            r.t_prog,
            r.t_tracer,
            r.t_driver,
            r.t_gcom,
            r.epsilon,
            r.ratios.r_tracer,
            r.ratios.r_driver,
            r.ratios.r_gcom,
            r.messages,
            r.trace_bytes
        );
    }
    if let Some(f) = fit {
        let _ = writeln!(
            s,
            "fit r_driver = a + b/eps: a={:.3} b={:.1}ns r2={:.3}",
            f.a, f.b, f.r2
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios() {
        assert!((compute_ratios(1730.0, 1730.0, 1780.0, 1780.0).r_driver - 1.03).abs() < 0.005);
        assert_eq!(ratio(5.0, 5.0), 1.0);
        assert!((ratio(4880.0, 3813.0) - 1.28).abs() < 0.005);
    }

    #[test]
    fn exact_fit() {
        let pts: Vec<(f64, f64)> = [10.0, 50.0, 200.0, 1000.0]
            .iter()
            .map(|&e| (e, 1.0 + 100.0 / e))
            .collect();
        let f = fit_model(&pts).unwrap();
        assert!(
            (f.a - 1.0).abs() < 1e-9 && (f.b - 100.0).abs() < 1e-6 && (f.r2 - 1.0).abs() < 1e-9
        );
        assert!(matches!(
            fit_model(&pts[..2]),
            Err(BenchError::FitUnderdetermined(2))
        ));
    }

    #[test]
    fn sigma() {
        assert!(sigma_check(&[1.2], 1.2, SIGMA_TOLERANCE));
        assert!(sigma_check(&[1.1, 1.2, 1.05, 1.3], 1.6, SIGMA_TOLERANCE));
        assert!(!sigma_check(&[1.1, 1.1], 1.5, SIGMA_TOLERANCE));
    }

    #[test]
    fn sets() {
        assert_eq!(
            expand_sets("1a..5a").unwrap(),
            ["1a", "2a", "3a", "4a", "5a"]
        );
        assert_eq!(expand_sets("6b..9b,6|8b").unwrap().len(), 5);
        for s in ["5a", "6|8|9b", "7b"] {
            load_patterns(&pattern_set(s).unwrap()).unwrap();
        }
        assert!(pattern_set("10a").is_err());
    }
}
