use std::cell::RefCell;
use std::io::{self, Write};
use std::rc::Rc;

use tracerforge::driver::TracerDriver;
use tracerforge::kernel::{program, SolveOutcome};
use tracerforge::mediator::{
    register_builtins, serve_in_process, Analysis, Console, ConstraintRow, Mediator, MediatorError,
    MediatorStats, ScriptSource, VISUALIZATION_PATTERNS,
};
use tracerforge::trace::Port;
use tracerforge::wire::channel;

fn serve(m: &mut Mediator, id: &str, patterns: &str) -> (SolveOutcome, MediatorStats) {
    let p = program(id).unwrap();
    let (link, ep) = channel(64);
    let d = TracerDriver::with_patterns(link, patterns).unwrap();
    serve_in_process(m, &p.id, p.model, d, ep).unwrap()
}

fn with_builtins() -> (Mediator, Rc<RefCell<Analysis>>) {
    let mut m = Mediator::new();
    let a = Rc::new(RefCell::new(Analysis::default()));
    register_builtins(&mut m, &a).unwrap();
    (m, a)
}

#[derive(Clone, Default)]
struct Buf(Rc<RefCell<Vec<u8>>>);

impl Write for Buf {
    fn write(&mut self, b: &[u8]) -> io::Result<usize> {
        self.0.borrow_mut().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Buf {
    fn text(&self) -> String {
        String::from_utf8(self.0.borrow().clone()).unwrap()
    }
}

/// Serves `id` with a scripted console behind `tracer_toplevel`; returns
/// the chronos the console stopped at and what it printed.
fn console_session(id: &str, patterns: &str, script: &str) -> (Vec<u64>, String) {
    let (mut m, a) = with_builtins();
    let out = Buf::default();
    let console = Console::new(Box::new(ScriptSource::new(script)), Box::new(out.clone()))
        .register(&mut m, a)
        .unwrap();
    serve(&mut m, id, patterns);
    let stops = console.borrow().stops.clone();
    (stops, out.text())
}

#[test]
fn duplicate_name() {
    let mut m = Mediator::new();
    m.register_handler("f", |_| Ok(())).unwrap();
    assert!(
        matches!(m.register_handler("f", |_| Ok(())), Err(MediatorError::DuplicateName(n)) if n == "f")
    );
    let (mut m, a) = with_builtins();
    assert!(matches!(
        register_builtins(&mut m, &a),
        Err(MediatorError::DuplicateName(_))
    ));
}

#[test]
fn unresolved_target_is_still_released() {
    let mut m = Mediator::new();
    let (_, stats) = serve(
        &mut m,
        "figtrace",
        "x: when port = reject do_synchro call(nobody)",
    );
    assert_eq!(stats.unresolved, 1);
    assert_eq!(stats.sync_messages, 1);
    assert_eq!(stats.gos, 1);
    assert_eq!(stats.events, Some(22));
}

#[test]
fn visualization_set_on_queens4() {
    let (mut m, a) = with_builtins();
    let (out, stats) = serve(&mut m, "queens(4)", VISUALIZATION_PATTERNS);
    let a = a.borrow();
    let leaves = out.solutions.len() + out.failures as usize;
    assert_eq!(a.tree.solutions(), 2);
    assert_eq!(a.tree.solutions() + a.tree.failures(), leaves);
    assert_eq!(a.leaf_notes.len(), leaves);
    assert!(a.errors.is_empty(), "{:?}", a.errors);
    a.tree.check().unwrap();
    // one go per synchronous message, whatever the number of handlers
    assert_eq!(stats.gos, stats.sync_messages);
    assert_eq!(stats.sync_messages as usize, leaves);
    assert_eq!(stats.per_label["leaf"] as usize, leaves);
    assert_eq!(stats.requests, 0);
}

#[test]
fn sync_message_runs_both_handlers_then_one_go() {
    let (mut m, a) = with_builtins();
    let (_, stats) = serve(&mut m, "figtrace", VISUALIZATION_PATTERNS);
    let a = a.borrow();
    // figtrace: one failure (13) and one solution (21)
    let notes: Vec<(Port, u64, u32)> = a.leaf_notes.clone();
    assert_eq!(notes, [(Port::Failure, 0, 0), (Port::Solution, 0, 0)]);
    assert_eq!(a.tree.failures(), 1);
    assert_eq!(a.tree.solutions(), 1);
    assert_eq!(stats.gos, 2);
}

#[test]
fn constraint_table_from_figtrace() {
    let (mut m, a) = with_builtins();
    let src = "decl: when port in [newConstraint, post]
  do current(cstr=C and cstrRep=Rep and varC(cstr)=VarC),
     call new_cstr(C, Rep, VarC)";
    serve(&mut m, "figtrace", src);
    let a = a.borrow();
    let rows: Vec<&ConstraintRow> = a.constraints.values().collect();
    assert_eq!(
        rows[0],
        &ConstraintRow {
            cident: 1,
            rep: "fd_element([v1,[2,5,7],v2])".into(),
            vars: vec![1, 2]
        }
    );
    assert_eq!(
        rows[1],
        &ConstraintRow {
            cident: 2,
            rep: "x_eq_y([v2,v1])".into(),
            vars: vec![2, 1]
        }
    );
}

#[test]
fn spy_propag_counts_events_4_and_5() {
    let (mut m, a) = with_builtins();
    serve(
        &mut m,
        "figtrace",
        "sp: when chrono in [4, 5] do current(cstr=C and var=V), call spy_propag(C,V)",
    );
    let a = a.borrow();
    let got: Vec<((i64, String), u64)> =
        a.propagation.iter().map(|(k, v)| (k.clone(), *v)).collect();
    assert_eq!(
        got,
        [((1, "v1".to_string()), 1), ((1, "v2".to_string()), 1)]
    );
}

#[test]
fn visu_prop_skips_assign_and_unbounded_deltas() {
    let (mut m, a) = with_builtins();
    serve(&mut m, "figtrace", VISUALIZATION_PATTERNS);
    // 4, 5 carry maxInt in their delta; 8, 9, 16 and 19 do not
    let a = a.borrow();
    let total: u64 = a.propagation.values().sum();
    assert_eq!(total, 4);
}

#[test]
fn step_twice_from_event_4() {
    let (stops, _) = console_session(
        "figtrace",
        "at4: when chrono = 4 do_synchro call(tracer_toplevel)",
        "step\nstep\nreset\ngo",
    );
    assert_eq!(stops, [4, 5, 6]);
}

#[test]
fn skip_reductions_from_awake() {
    let (stops, text) = console_session(
        "figtrace",
        "aw: when port = awake do_synchro call(tracer_toplevel)",
        "skipred\ngo",
    );
    assert_eq!(stops[..2], [11, 12]);
    assert!(text.contains("[12] sr"), "{text}");
}

#[test]
fn skip_reductions_elsewhere_is_step() {
    let (stops, _) = console_session(
        "figtrace",
        "su: when chrono = 6 do_synchro call(tracer_toplevel)",
        "skipred\nreset\ngo",
    );
    assert_eq!(stops, [6, 7]);
}

#[test]
fn step_at_the_last_event_reaches_end_of_trace() {
    let (stops, text) = console_session(
        "figtrace",
        "sol: when port = solution do_synchro call(tracer_toplevel)",
        "step\ncurrent port chrono\ngo",
    );
    assert_eq!(stops, [21, 22]);
    assert!(text.contains("port = endOfTrace"), "{text}");
}

#[test]
fn console_commands() {
    let (stops, text) = console_session(
        "figtrace",
        "at4: when chrono = 4 do_synchro call(tracer_toplevel)",
        "current port, delta\ncurrent frob\nadd bad: when port\nremove nope\nadd later: when chrono = 9 do_synchro call(tracer_toplevel)\nstats\nhelp\ngo\nreset\ngo",
    );
    assert_eq!(stops, [4, 9]);
    assert!(text.contains("port = reduce"), "{text}");
    assert!(text.contains("delta = [0,4-268435455]"), "{text}");
    assert!(text.contains("error: unknown attribute `frob`"), "{text}");
    assert!(text.matches("error:").count() >= 3, "{text}");
    assert!(text.contains("commands:"), "{text}");
}

#[test]
fn console_detaches_at_end_of_input() {
    let (stops, _) = console_session(
        "queens(4)",
        "every: when true do_synchro call(tracer_toplevel)",
        "step",
    );
    // the second stop finds no input: patterns are reset and the run finishes
    assert_eq!(stops, [1, 2]);
}
