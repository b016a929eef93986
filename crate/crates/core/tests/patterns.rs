use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tracerforge::bench::{
    PATTERN_1A, PATTERN_2A, PATTERN_3A, PATTERN_4A, PATTERN_6B, PATTERN_7B, PATTERN_8B, PATTERN_9B,
};
use tracerforge::mediator::{SKIPRED_TEMPLATE, STEP_PATTERN, VISUALIZATION_PATTERNS};
use tracerforge::pattern::{
    format_condition, format_pattern, format_patterns, load_patterns, parse_condition,
    parse_patterns, random_condition, typecheck, Action, Cond, CurrentItem, Op, Pattern,
    PatternError, Value,
};
use tracerforge::trace::{AttrKey, Port};

const TRACING_COMMANDS: &str = "\
step:when true dosynchro call(tracer_toplevel)

sr:when cstr = CId and port in [suspend,reject,entail]
    dosynchro call(tracer_toplevel)

step:when true do_synchro call(tracer_toplevel)
";

const OVERHEAD_A: &str = "\
when port=post and isNamed(cname)
     do current(port,chrono,cident).

when port=reduce and
           (isNamed(vname) and isNamed(cname))
     do current(port,chrono,cident).

when chrono=0 do current(chrono).

when depth=50000 or (chrono>=1 and node=9999999)
     do current(chrono,depth).
";

const OVERHEAD_B: &str = "\
cstr: when port=post do
current(chrono,cident,cinternal).
tree: when port in [failure,backTo,
choicePoint,solution] do current(chrono,node,port).

newvar: when port=newVariable do current(chrono, vident, vname).
dom: when port in [choicePoint,backTo,solution]
            do current(chrono,node,port,named_vars,full_dom).

propag1: when port=reduce do current(chrono).

propag2: when port=awake do current(chrono).
";

fn round_trips(ps: &[Pattern]) {
    for p in ps {
        let text = format_pattern(p);
        let back = parse_patterns(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert_eq!(back.len(), 1, "{text}");
        assert_eq!(&back[0], p, "{text}");
        assert_eq!(format_pattern(&back[0]), text);
    }
    let all = format_patterns(ps);
    assert_eq!(parse_patterns(&all).unwrap(), ps);
}

#[test]
fn every_published_pattern_parses_typechecks_and_round_trips() {
    for (src, n) in [
        (VISUALIZATION_PATTERNS, 5),
        (OVERHEAD_A, 4),
        (OVERHEAD_B, 6),
        (STEP_PATTERN, 1),
        (SKIPRED_TEMPLATE, 1),
        (PATTERN_1A, 1),
        (PATTERN_2A, 1),
        (PATTERN_3A, 1),
        (PATTERN_4A, 1),
        (PATTERN_6B, 2),
        (PATTERN_7B, 2),
        (PATTERN_8B, 1),
        (PATTERN_9B, 1),
    ] {
        let ps = load_patterns(src).unwrap_or_else(|e| panic!("{src}: {e}"));
        assert_eq!(ps.len(), n, "{src}");
        round_trips(&ps);
    }
    // the three command patterns share labels, so they are parsed, not loaded
    let cmds = parse_patterns(TRACING_COMMANDS).unwrap();
    assert_eq!(cmds.len(), 3);
    assert!(cmds.iter().all(|p| p.sync && typecheck(&p.cond).is_ok()));
    assert_eq!(cmds[0], cmds[2]);
    round_trips(&cmds);
}

#[test]
fn visu_tree_shape() {
    let ps = load_patterns(VISUALIZATION_PATTERNS).unwrap();
    let t = &ps[0];
    assert_eq!(t.label, "visu_tree");
    assert!(!t.sync);
    assert_eq!(
        t.cond,
        Cond::leaf(
            AttrKey::Port,
            Op::In,
            Value::List(vec![
                Value::Port(Port::NewChild),
                Value::Port(Port::JumpTo),
                Value::Port(Port::Solution),
                Value::Port(Port::Failure)
            ])
        )
    );
    assert_eq!(
        t.current_keys(),
        vec![
            AttrKey::Port,
            AttrKey::Node,
            AttrKey::Depth,
            AttrKey::Usertime
        ]
    );
    assert_eq!(t.calls().collect::<Vec<_>>(), vec!["search_tree"]);
    let labels: Vec<&str> = ps.iter().map(|p| p.label.as_str()).collect();
    assert_eq!(
        labels,
        ["visu_tree", "visu_cstr", "visu_prop", "leaf", "symbolic"]
    );
    let sync: Vec<bool> = ps.iter().map(|p| p.sync).collect();
    assert_eq!(sync, [false, false, false, true, true]);
    assert_eq!(
        ps[1].current_keys(),
        vec![AttrKey::Cstr, AttrKey::CstrRep, AttrKey::VarC]
    );
}

#[test]
fn parse_examples() {
    let p = &parse_patterns("p3: when chrono=0 do current(chrono)").unwrap()[0];
    assert!(!p.sync);
    assert_eq!(p.cond, Cond::leaf(AttrKey::Chrono, Op::Eq, Value::Int(0)));
    assert!(matches!(
        parse_patterns("x: when port do current(port)"),
        Err(PatternError::Syntax { .. })
    ));
    let visu_prop = parse_condition("delta notcontains [maxInt]").unwrap();
    assert!(typecheck(&visu_prop).is_ok());
    assert!(typecheck(&parse_condition("isNamed(var)").unwrap()).is_ok());
    let bad = Cond::leaf(AttrKey::Port, Op::Contains, Value::Int(1));
    assert!(typecheck(&bad).is_err());
    assert!(matches!(
        load_patterns("b: when port contains 3 do current(port)"),
        Err(PatternError::Type(_))
    ));
}

#[test]
fn true_condition_formats_as_true() {
    let p = Pattern {
        label: "t".into(),
        cond: Cond::True,
        sync: false,
        actions: vec![Action::Current(vec![CurrentItem {
            key: AttrKey::Chrono,
            binder: None,
        }])],
    };
    let text = format_pattern(&p);
    assert!(text.contains("when true do "), "{text}");
    assert_eq!(parse_patterns(&text).unwrap()[0], p);
}

#[test]
fn fourth_overhead_pattern_is_a_fixed_point() {
    let c = parse_condition("depth=50000 or (chrono>=1 and node=9999999)").unwrap();
    let once = format_condition(&c);
    assert_eq!(parse_condition(&once).unwrap(), c);
    assert_eq!(format_condition(&parse_condition(&once).unwrap()), once);
}

#[test]
fn precedence_not_and_or() {
    let c = parse_condition("not port = reduce and chrono = 1 or depth = 2").unwrap();
    let want = Cond::or(
        Cond::and(
            Cond::not(Cond::leaf(AttrKey::Port, Op::Eq, Value::Port(Port::Reduce))),
            Cond::leaf(AttrKey::Chrono, Op::Eq, Value::Int(1)),
        ),
        Cond::leaf(AttrKey::Depth, Op::Eq, Value::Int(2)),
    );
    assert_eq!(c, want);
    let c = parse_condition("chrono = 1 and (depth = 2 or node = 3)").unwrap();
    assert!(matches!(c, Cond::And(_, ref b) if matches!(**b, Cond::Or(..))));
}

fn arb_cond() -> impl Strategy<Value = Cond> {
    (any::<u64>(), 0..5u32)
        .prop_map(|(seed, depth)| random_condition(&mut ChaCha8Rng::seed_from_u64(seed), depth))
}

fn arb_action() -> impl Strategy<Value = Action> {
    let item = (
        0..AttrKey::ALL.len(),
        prop::option::of("[A-Z][a-z0-9]{0,3}"),
    )
        .prop_map(|(k, binder)| CurrentItem {
            key: AttrKey::ALL[k],
            binder,
        });
    prop_oneof![
        prop::collection::vec(item, 1..4).prop_map(Action::Current),
        (
            "[a-z][a-z_0-9]{0,8}",
            prop::collection::vec("[A-Z][a-z]{0,3}", 0..3)
        )
            .prop_filter("not a keyword", |(n, _)| {
                ![
                    "when",
                    "do",
                    "and",
                    "or",
                    "not",
                    "true",
                    "in",
                    "notin",
                    "contains",
                    "notcontains",
                    "current",
                    "call",
                ]
                .contains(&n.as_str())
            })
            .prop_map(|(name, args)| Action::Call { name, args }),
    ]
}

proptest! {
    #[test]
    fn random_patterns_round_trip(
        label in "[a-z][a-z0-9_]{0,6}",
        cond in arb_cond(),
        sync in any::<bool>(),
        actions in prop::collection::vec(arb_action(), 1..4),
    ) {
        prop_assume!(!["when", "do", "and", "or", "not", "true", "in", "notin", "contains", "notcontains", "current", "call"].contains(&label.as_str()));
        prop_assert!(typecheck(&cond).is_ok());
        let p = Pattern { label, cond, sync, actions };
        let text = format_pattern(&p);
        let back = parse_patterns(&text);
        prop_assert!(back.is_ok(), "{}: {:?}", text, back);
        prop_assert_eq!(&back.unwrap()[0], &p, "{}", text);
    }

    #[test]
    fn random_conditions_round_trip(cond in arb_cond()) {
        let text = format_condition(&cond);
        prop_assert_eq!(parse_condition(&text).unwrap(), cond, "{}", text);
    }
}
