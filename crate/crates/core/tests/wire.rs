use std::io::Cursor;

use proptest::prelude::*;

use tracerforge::driver::TracerDriver;
use tracerforge::intset::IntSet;
use tracerforge::kernel::{program, solve};
use tracerforge::trace::{AttrKey, AttrValue, Port, ValueKind};
use tracerforge::wire::Endpoint;
use tracerforge::wire::{
    decode_frame, decode_request, encode_frame, encode_request, CallTarget, Frame, Reply, Request,
    StreamEndpoint, StreamLink, TraceMessage, WireError,
};

#[test]
fn fig6_event4_message_bytes() {
    let p = program("figtrace").unwrap();
    let (link, mut ep) = tracerforge::wire::channel(64);
    let mut d =
        TracerDriver::with_patterns(link, "r: when port=reduce do current(chrono,delta)").unwrap();
    solve(&p.model, &mut d);
    drop(d);
    let first = match ep.recv().unwrap() {
        Some(f @ Frame::Event(_)) => f,
        other => panic!("{other:?}"),
    };
    assert_eq!(
        encode_frame(&first),
        r#"{"kind":"event","chrono":4,"sync":false,"labels":["r"],"data":{"chrono":4,"delta":"0,4-268435455"},"calls":[]}"#
    );
}

#[test]
fn request_examples() {
    assert_eq!(
        encode_request(&Request::Go),
        r#"{"kind":"request","op":"go"}"#
    );
    let cur = Request::Current(vec![AttrKey::Port, AttrKey::Chrono]);
    let line = encode_request(&cur);
    assert!(
        line.contains(r#""op":"current""#) && line.contains(r#"["port","chrono"]"#),
        "{line}"
    );
    assert_eq!(decode_request(&line).unwrap(), cur);
    assert!(matches!(
        decode_frame(r#"{"kind":"event","chrono":4"#),
        Err(WireError::Malformed(_))
    ));
}

#[test]
fn bad_add_over_a_stream_leaves_the_set_unchanged() {
    // the mediator side is scripted as raw lines
    let script = [
        encode_request(&Request::Add("bad: when port do current(port)".into())),
        encode_request(&Request::Current(vec![AttrKey::Chrono])),
        encode_request(&Request::Go),
    ]
    .join("\n")
        + "\n";
    let mut out = Vec::new();
    let p = program("figtrace").unwrap();
    {
        let link = StreamLink::new(Cursor::new(script.into_bytes()), &mut out);
        let mut d =
            TracerDriver::with_patterns(link, "stop: when chrono = 3 do_synchro current(chrono)")
                .unwrap();
        solve(&p.model, &mut d);
        assert_eq!(d.patterns().len(), 1);
        d.finish(22);
    }
    let text = String::from_utf8(out).unwrap();
    let frames: Vec<Frame> = text.lines().map(|l| decode_frame(l).unwrap()).collect();
    assert!(matches!(&frames[0], Frame::Event(m) if m.chrono == 3 && m.sync));
    assert!(matches!(&frames[1], Frame::Reply(Reply::Error { .. })));
    assert!(text.lines().nth(1).unwrap().contains(r#""status":"error""#));
    assert_eq!(
        frames[2],
        Frame::Reply(Reply::Ok {
            data: vec![(AttrKey::Chrono, AttrValue::Int(3))],
            unavailable: vec![]
        })
    );
    assert_eq!(frames[3], Frame::Bye { events: 22 });
    assert_eq!(frames.len(), 4);

    // and the same bytes read back through a stream endpoint
    let mut ep = StreamEndpoint::new(Cursor::new(text.into_bytes()), Vec::new());
    let mut n = 0;
    while ep.recv().unwrap().is_some() {
        n += 1;
    }
    assert_eq!(n, 4);
}

fn arb_intset() -> impl Strategy<Value = IntSet> {
    prop::collection::vec((0..1000i64, 0..50i64), 0..5)
        .prop_map(|ivs| IntSet::from_intervals(ivs.into_iter().map(|(lo, w)| (lo, lo + w))))
}

fn arb_value(kind: ValueKind) -> BoxedStrategy<AttrValue> {
    match kind {
        ValueKind::Int => any::<i64>().prop_map(AttrValue::Int).boxed(),
        ValueKind::Text => ".{0,12}".prop_map(AttrValue::Text).boxed(),
        ValueKind::Port => (0..Port::ALL.len())
            .prop_map(|i| AttrValue::Port(Port::ALL[i]))
            .boxed(),
        ValueKind::IntSet => arb_intset().prop_map(AttrValue::IntSet).boxed(),
        ValueKind::Assoc => prop::collection::vec(
            (
                "[a-z][a-z0-9]{0,4}",
                prop_oneof![
                    any::<i64>().prop_map(AttrValue::Int),
                    arb_intset().prop_map(AttrValue::IntSet)
                ],
            ),
            0..4,
        )
        .prop_map(AttrValue::Assoc)
        .boxed(),
    }
}

fn arb_data() -> impl Strategy<Value = Vec<(AttrKey, AttrValue)>> {
    prop::sample::subsequence(AttrKey::ALL.to_vec(), 0..AttrKey::ALL.len())
        .prop_shuffle()
        .prop_flat_map(|keys| {
            let vals: Vec<BoxedStrategy<(AttrKey, AttrValue)>> = keys
                .into_iter()
                .map(|k| arb_value(k.kind()).prop_map(move |v| (k, v)).boxed())
                .collect();
            vals
        })
}

fn arb_keys() -> impl Strategy<Value = Vec<AttrKey>> {
    prop::collection::vec((0..AttrKey::ALL.len()).prop_map(|i| AttrKey::ALL[i]), 0..5)
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    let msg = (
        any::<u64>(),
        any::<bool>(),
        prop::collection::vec("[a-z_]{1,8}", 0..3),
        arb_data(),
        prop::collection::vec(("[a-z]{1,5}", "[a-z_]{1,8}", arb_keys()), 0..3),
    )
        .prop_map(|(chrono, sync, labels, data, calls)| {
            Frame::Event(TraceMessage {
                chrono,
                sync,
                labels,
                data,
                calls: calls
                    .into_iter()
                    .map(|(label, proc_name, keys)| CallTarget {
                        label,
                        proc_name,
                        keys,
                    })
                    .collect(),
            })
        });
    let req = prop_oneof![
        Just(Request::Go),
        Just(Request::Reset),
        arb_keys().prop_map(Request::Current),
        ".{0,40}".prop_map(Request::Add),
        prop::collection::vec("[a-z]{1,5}", 0..3).prop_map(Request::Remove),
    ];
    prop_oneof![
        ".{0,12}".prop_map(|program| Frame::Hello { program }),
        msg,
        req.prop_map(Frame::Request),
        (arb_data(), arb_keys())
            .prop_map(|(data, unavailable)| Frame::Reply(Reply::Ok { data, unavailable })),
        ".{0,30}".prop_map(|reason| Frame::Reply(Reply::Error { reason })),
        any::<u64>().prop_map(|events| Frame::Bye { events }),
    ]
}

proptest! {
    #[test]
    fn frames_round_trip(f in arb_frame()) {
        let line = encode_frame(&f);
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(decode_frame(&line).unwrap(), f);
    }
}
