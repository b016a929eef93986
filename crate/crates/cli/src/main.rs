use std::cell::RefCell;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::rc::Rc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tracerforge::bench::{
    self, expand_sets, fit_model, pattern_set, predict_ratio, render_report, run_program,
    sigma_check, BenchOptions, PatternLibrary, TimingReport, SIGMA_TOLERANCE,
};
use tracerforge::driver::{TextTrace, TracerDriver};
use tracerforge::kernel::{program, solve, NoTracer, Program, SolveOutcome};
use tracerforge::matcher::ActivePatternSet;
use tracerforge::mediator::{
    accept_ui, register_builtins, serve_in_process, Analysis, CommandSource, Console, LineSource,
    Mediator, MediatorStats, STEP_PATTERN,
};
use tracerforge::pattern::{format_patterns, load_patterns};
use tracerforge::wire::{
    channel, Endpoint, Frame, NullLink, Reply, Request, StreamEndpoint, StreamLink,
};

#[derive(Parser)]
#[command(
    name = "tracerforge",
    version,
    about = "Pattern-driven tracing of a finite-domain solver"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a catalog program (figtrace, queens(n), propag(n), sendmory, golomb(n), subsetsum(n), random(seed)).
    Run {
        program: String,
        /// Pattern file; without it the full text trace is printed.
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Where trace messages go: stdio, tcp:PORT (or tcp:HOST:PORT) or null.
        #[arg(long)]
        mediator: Option<String>,
        /// Serve the trace with the built-in mediator and a console on stdin.
        #[arg(long)]
        interactive: bool,
        /// Accept a debugger UI on this port before starting (with --interactive).
        #[arg(long)]
        ui_port: Option<u16>,
    },
    /// Measure tracing overhead over catalog programs.
    Bench {
        /// Comma-separated program ids.
        #[arg(long)]
        programs: Option<String>,
        /// Pattern sets, e.g. `1a..5a` or `6b..9b,6|8b`.
        #[arg(long, default_value = "1a..5a")]
        patterns_set: String,
        #[arg(long, default_value_t = 11)]
        reps: usize,
        /// Minimum duration of each timed batch, in milliseconds.
        #[arg(long, default_value_t = 20)]
        batch_ms: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a pattern file and print its canonical form.
    Parse { file: PathBuf },
    /// Print the automata and port index of a pattern file.
    DumpAutomata { file: PathBuf },
    /// Predict the driver overhead of a pattern set on a program.
    Predict {
        program: String,
        #[arg(long, default_value = "5a")]
        patterns_set: String,
        /// Program the per-pattern costs are measured on.
        #[arg(long, default_value = "queens(8)")]
        calibrate: String,
        /// Warn above this predicted ratio.
        #[arg(long, default_value_t = 1.5)]
        threshold: f64,
    },
    /// Run the analyzer mediator.
    Mediator {
        #[command(subcommand)]
        mode: MediatorMode,
    },
    /// Read frames on stdin, answer `go` to synchronous ones, print counts.
    Sink,
}

#[derive(Subcommand)]
enum MediatorMode {
    /// Wait for one driver on a TCP port.
    Listen {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        interactive: bool,
        #[arg(long)]
        ui_port: Option<u16>,
    },
    /// Start `tracerforge run PROGRAM --mediator stdio` as a child and serve it.
    Spawn {
        program: String,
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        interactive: bool,
        #[arg(long)]
        ui_port: Option<u16>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = real_main(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run {
            program,
            patterns,
            mediator,
            interactive,
            ui_port,
        } => cmd_run(
            &program,
            patterns.as_deref(),
            mediator.as_deref(),
            interactive,
            ui_port,
        ),
        Cmd::Bench {
            programs,
            patterns_set,
            reps,
            batch_ms,
            report,
        } => cmd_bench(
            programs.as_deref(),
            &patterns_set,
            reps,
            batch_ms,
            report.as_deref(),
        ),
        Cmd::Parse { file } => {
            let ps = load_patterns(&read(&file)?)?;
            print!("{}", format_patterns(&ps));
            Ok(())
        }
        Cmd::DumpAutomata { file } => {
            let mut set = ActivePatternSet::new();
            set.add_patterns(load_patterns(&read(&file)?)?)?;
            print!("{}", set.dump());
            Ok(())
        }
        Cmd::Predict {
            program: prog,
            patterns_set,
            calibrate,
            threshold,
        } => cmd_predict(&prog, &patterns_set, &calibrate, threshold),
        Cmd::Mediator { mode } => cmd_mediator(mode),
        Cmd::Sink => cmd_sink(),
    }
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn print_outcome(prog: &Program, out: &SolveOutcome, w: &mut dyn Write) -> io::Result<()> {
    let names: Vec<&str> = prog.model.vars.iter().map(|v| v.name.as_str()).collect();
    for s in &out.solutions {
        let parts: Vec<String> = names
            .iter()
            .zip(s)
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        writeln!(w, "solution {}", parts.join(" "))?;
    }
    writeln!(
        w,
        "{} solution(s), {} failure(s), {} events{}",
        out.solutions.len(),
        out.failures,
        out.events,
        if out.aborted { ", aborted" } else { "" }
    )
}

/// Mediator with the built-in analyzers. With `console`, the toplevel reads
/// commands from stdin, or from a UI accepted on the given port.
fn make_mediator(console: Option<Option<u16>>) -> Result<(Mediator, Rc<RefCell<Analysis>>)> {
    let mut m = Mediator::new();
    let a = Rc::new(RefCell::new(Analysis::default()));
    register_builtins(&mut m, &a)?;
    if let Some(ui_port) = console {
        let src = console_source(ui_port, &mut m)?;
        Console::new(src, Box::new(io::stderr()))
            .with_prompt()
            .register(&mut m, Rc::clone(&a))?;
    } else {
        // a stop without a console resumes at once
        m.register_handler("tracer_toplevel", |c| {
            eprintln!("[{}] {}", c.chrono, c.label);
            Ok(())
        })?;
    }
    Ok((m, a))
}

fn console_source(ui_port: Option<u16>, m: &mut Mediator) -> Result<Box<dyn CommandSource>> {
    match ui_port {
        None => Ok(Box::new(LineSource(BufReader::new(io::stdin())))),
        Some(p) => {
            let l = TcpListener::bind(("127.0.0.1", p))
                .with_context(|| format!("binding ui port {p}"))?;
            eprintln!("waiting for the ui on {}", l.local_addr()?);
            let b = accept_ui(&l)?;
            m.set_mirror(Box::new(b.mirror));
            Ok(Box::new(b.commands))
        }
    }
}

fn report_mediator(stats: &MediatorStats, a: &Analysis) {
    eprintln!(
        "mediator: {} messages ({} synchronous), {} requests, {} handler calls",
        stats.messages, stats.sync_messages, stats.requests, stats.handler_calls
    );
    if a.tree.node_count() > 0 || !a.tree.leaves.is_empty() {
        eprintln!(
            "search tree: {} nodes, {} solutions, {} failures",
            a.tree.node_count(),
            a.tree.solutions(),
            a.tree.failures()
        );
    }
    if !a.constraints.is_empty() {
        eprintln!("constraint table: {} rows", a.constraints.len());
    }
    for e in &a.errors {
        eprintln!("analysis error: {e}");
    }
}

fn cmd_run(
    id: &str,
    patterns: Option<&Path>,
    mediator: Option<&str>,
    interactive: bool,
    ui_port: Option<u16>,
) -> Result<()> {
    let prog = program(id)?;
    let src = match patterns {
        Some(p) => read(p)?,
        None if interactive => STEP_PATTERN.to_string(),
        None => String::new(),
    };
    // validate before anything is connected
    load_patterns(&src)?;

    if interactive {
        let (mut m, a) = make_mediator(Some(ui_port))?;
        let (link, ep) = channel(1024);
        let d = TracerDriver::with_patterns(link, &src)?;
        let (out, stats) = serve_in_process(&mut m, &prog.id, prog.model.clone(), d, ep)?;
        report_mediator(&stats, &a.borrow());
        return print_outcome(&prog, &out, &mut io::stdout()).map_err(Into::into);
    }

    match mediator {
        None if patterns.is_none() => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            let out = solve(&prog.model, TextTrace::new(&mut w));
            print_outcome(&prog, &out, &mut w)?;
        }
        None => {
            let (mut m, a) = make_mediator(None)?;
            let (link, ep) = channel(1024);
            let d = TracerDriver::with_patterns(link, &src)?;
            let (out, stats) = serve_in_process(&mut m, &prog.id, prog.model.clone(), d, ep)?;
            report_mediator(&stats, &a.borrow());
            print_outcome(&prog, &out, &mut io::stdout())?;
        }
        Some("null") => {
            let mut d = TracerDriver::with_patterns(NullLink::new(), &src)?;
            let out = solve(&prog.model, &mut d);
            let st = d.stats();
            eprintln!(
                "{} messages ({} synchronous), {} bytes",
                st.messages,
                st.sync_messages,
                d.link().bytes
            );
            print_outcome(&prog, &out, &mut io::stdout())?;
        }
        Some("stdio") => {
            let link = StreamLink::new(BufReader::new(io::stdin()), BufWriter::new(io::stdout()));
            let out = drive(&prog, link, &src)?;
            print_outcome(&prog, &out, &mut io::stderr())?;
        }
        Some(t) if t.starts_with("tcp:") => {
            let addr = &t[4..];
            let addr = if addr.contains(':') {
                addr.to_string()
            } else {
                format!("127.0.0.1:{addr}")
            };
            let s = TcpStream::connect(&addr).with_context(|| format!("connecting to {addr}"))?;
            s.set_nodelay(true)?;
            let link = StreamLink::new(BufReader::new(s.try_clone()?), BufWriter::new(s));
            let out = drive(&prog, link, &src)?;
            print_outcome(&prog, &out, &mut io::stdout())?;
        }
        Some(other) => bail!("unknown mediator `{other}` (stdio, tcp:PORT or null)"),
    }
    Ok(())
}

fn drive<L: tracerforge::wire::Link>(prog: &Program, link: L, src: &str) -> Result<SolveOutcome> {
    let mut d = TracerDriver::with_patterns(link, src)?;
    d.hello(&prog.id)?;
    let out = solve(&prog.model, &mut d);
    let (link, st) = d.finish(out.events);
    log::info!(
        "{} messages, {} synchronous, {} bytes",
        st.messages,
        st.sync_messages,
        link.bytes_sent()
    );
    Ok(out)
}

fn cmd_mediator(mode: MediatorMode) -> Result<()> {
    match mode {
        MediatorMode::Listen {
            port,
            interactive,
            ui_port,
        } => {
            let l = TcpListener::bind(("127.0.0.1", port))
                .with_context(|| format!("binding port {port}"))?;
            eprintln!("waiting for a driver on {}", l.local_addr()?);
            let (s, _) = l.accept()?;
            s.set_nodelay(true)?;
            let mut ep = StreamEndpoint::new(BufReader::new(s.try_clone()?), BufWriter::new(s));
            serve(&mut ep, interactive, ui_port)
        }
        MediatorMode::Spawn {
            program: id,
            patterns,
            interactive,
            ui_port,
        } => {
            program(&id)?;
            let mut cmd = Command::new(std::env::current_exe()?);
            cmd.args(["run", &id, "--mediator", "stdio"]);
            match (&patterns, interactive) {
                (Some(p), _) => {
                    cmd.arg("--patterns").arg(p);
                }
                (None, true) => {
                    let tmp = std::env::temp_dir()
                        .join(format!("tracerforge-step-{}.pat", std::process::id()));
                    std::fs::write(&tmp, STEP_PATTERN)?;
                    cmd.arg("--patterns").arg(tmp);
                }
                (None, false) => {}
            }
            let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
            let mut ep = StreamEndpoint::new(
                BufReader::new(child.stdout.take().unwrap()),
                child.stdin.take().unwrap(),
            );
            let r = serve(&mut ep, interactive, ui_port);
            drop(ep);
            let status = child.wait()?;
            r?;
            if !status.success() {
                bail!("traced process exited with {status}");
            }
            Ok(())
        }
    }
}

fn serve(ep: &mut dyn Endpoint, interactive: bool, ui_port: Option<u16>) -> Result<()> {
    let (mut m, a) = make_mediator(interactive.then_some(ui_port))?;
    let stats = m.run(ep)?;
    if let Some(p) = &stats.program {
        eprintln!("program {p}: {} events", stats.events.unwrap_or(0));
    }
    report_mediator(&stats, &a.borrow());
    Ok(())
}

fn cmd_sink() -> Result<()> {
    let mut ep = StreamEndpoint::new(BufReader::new(io::stdin()), BufWriter::new(io::stdout()));
    let (mut events, mut sync) = (0u64, 0u64);
    while let Some(f) = ep.recv()? {
        match f {
            Frame::Event(m) => {
                events += 1;
                if m.sync {
                    sync += 1;
                    ep.send(Request::Go)?;
                }
            }
            Frame::Bye { .. } => break,
            Frame::Reply(Reply::Error { reason }) => log::warn!("driver error: {reason}"),
            _ => {}
        }
    }
    eprintln!("sink: {events} messages, {sync} synchronous");
    Ok(())
}

fn cmd_bench(
    programs: Option<&str>,
    sets: &str,
    reps: usize,
    batch_ms: u64,
    report: Option<&Path>,
) -> Result<()> {
    let opts = BenchOptions {
        reps,
        min_batch: Duration::from_millis(batch_ms),
    };
    let progs: Vec<String> = match programs {
        Some(p) => p.split(';').flat_map(split_programs).collect(),
        None => bench::DEFAULT_PROGRAMS
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let sets = expand_sets(sets)?;
    let mut text = String::new();
    for set in &sets {
        // a-sets match nothing: the driver column is the set itself and the
        // gcom column adds the b-set 8b so something is sent
        let gcom = if set.ends_with('a') {
            "8b".to_string()
        } else {
            set.clone()
        };
        let driver = if set.ends_with('a') {
            set.clone()
        } else {
            "5a".to_string()
        };
        let mut reports: Vec<TimingReport> = Vec::new();
        for p in &progs {
            eprintln!("{p} / {set}");
            reports.push(run_program(p, &driver, &gcom, &opts)?);
        }
        let pts: Vec<(f64, f64)> = reports
            .iter()
            .map(|r| (r.epsilon, r.ratios.r_driver))
            .collect();
        let fit = fit_model(&pts).ok();
        text.push_str(&format!(
            "pattern set {set} (driver: {driver}, gcom: {gcom})\n"
        ));
        text.push_str(&render_report(&reports, fit.as_ref()));
        text.push('\n');
    }
    if sets.iter().any(|s| s == "5a")
        && ["1a", "2a", "3a", "4a"]
            .iter()
            .all(|s| sets.iter().any(|x| x == s))
    {
        for p in &progs {
            let rs = bench::driver_ratios(p, &["1a", "2a", "3a", "4a", "5a"], &opts)?;
            let singles: Vec<f64> = rs[..4].iter().map(|(_, r)| *r).collect();
            let ok = sigma_check(&singles, rs[4].1, SIGMA_TOLERANCE);
            text.push_str(&format!(
                "sigma {p}: R1a+R2a+R3a+R4a-3 = {:.3}, R5a = {:.3} -> {}\n",
                singles.iter().sum::<f64>() - 3.0,
                rs[4].1,
                if ok { "ok" } else { "exceeded" }
            ));
        }
    }
    print!("{text}");
    if let Some(path) = report {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Splits `queens(8),propag(100),sendmory` at commas outside parentheses.
fn split_programs(s: &str) -> Vec<String> {
    let (mut out, mut cur, mut depth) = (Vec::new(), String::new(), 0);
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn cmd_predict(id: &str, set: &str, calibrate: &str, threshold: f64) -> Result<()> {
    let prog = program(id)?;
    pattern_set(set)?;
    let opts = BenchOptions::default();
    let lib = PatternLibrary::calibrate(calibrate, &[set], &opts)?;
    let delta = lib.delta(set).unwrap_or(0.0);
    let mut jobs = vec![bench::Job {
        name: "prog".into(),
        run: Box::new(|| bench::RunCounts {
            events: solve(&prog.model, NoTracer).events,
            ..Default::default()
        }),
    }];
    let m = bench::measure(&mut jobs, &opts)?;
    let (t, counts) = m[0];
    let eps = t * 1e6 / counts.events as f64;
    let r = predict_ratio(delta, eps);
    println!(
        "{}: {} events, eps = {:.1} ns; pattern set {set}: delta = {:.1} ns/event (on {}); predicted R_driver = {:.3}",
        prog.id, counts.events, eps, delta, lib.calibration, r
    );
    if r > threshold {
        println!("warning: events are cheap relative to the filtering cost; expect a slowdown of {r:.2}x");
    }
    Ok(())
}
