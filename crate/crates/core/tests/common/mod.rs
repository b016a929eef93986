#![allow(dead_code)]

use tracerforge::kernel::{program, solve};
use tracerforge::record::{RecordedTrace, RecordingTracer};

/// Full recording of a catalog program.
pub fn record(id: &str) -> RecordedTrace {
    let p = program(id).unwrap();
    let mut rec = RecordingTracer::new();
    solve(&p.model, &mut rec);
    rec.into_trace()
}

pub fn fig6() -> RecordedTrace {
    record("figtrace")
}

/// Index of the record with the given chrono.
pub fn at(t: &RecordedTrace, chrono: u64) -> usize {
    t.events.iter().position(|e| e.chrono == chrono).unwrap()
}
