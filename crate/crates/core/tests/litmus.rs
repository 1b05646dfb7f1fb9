//! Hand-checked outcomes on the small litmus programs of the corpus.

mod common;

use common::corpus;
use tsobound_core::explore::{reach_k, ReachOptions};
use tsobound_core::fence::{insert_fences, DelayPair};
use tsobound_core::program::{LocalId, Program};
use tsobound_core::symbolic::{sc_interpret, Interpretation, LabelRegistry, SymLabelId};

fn base(p: &Program, name: &str) -> SymLabelId {
    LabelRegistry::base(p.label_by_name(name).unwrap())
}

#[test]
fn reordered_stale_locals_trace_interprets_to_the_tso_state() {
    let p = corpus("stale_locals");
    let reg = LabelRegistry::new(&p);
    let (p1, p2) = (p.proc_by_name("P1").unwrap(), p.proc_by_name("P2").unwrap());
    let l = LocalId(0);
    let trace = vec![
        base(&p, "a"),
        reg.snapshot(&p, p1, l, 1),
        base(&p, "c"),
        base(&p, "d"),
        reg.snapshot(&p, p2, l, 1),
        base(&p, "f"),
        reg.rewritten(&p, p.label_by_name("b").unwrap(), vec![1]),
        reg.rewritten(&p, p.label_by_name("e").unwrap(), vec![1]),
    ];
    let got = sc_interpret(&p, &reg, 1, &trace).unwrap();
    // x, y then l, m.
    assert_eq!(
        got,
        Interpretation::Defined {
            globals: vec![5, 3],
            locals: vec![vec![0], vec![0]],
        }
    );
}

#[test]
fn stale_locals_in_program_order_uses_the_overwritten_locals() {
    let p = corpus("stale_locals");
    let reg = LabelRegistry::new(&p);
    let trace: Vec<SymLabelId> = ["a", "b", "c", "d", "e", "f"].iter().map(|n| base(&p, n)).collect();
    let Interpretation::Defined { globals, locals } = sc_interpret(&p, &reg, 1, &trace).unwrap() else {
        panic!("feasible");
    };
    assert_eq!(globals, vec![5, 3]);
    assert_eq!(locals, vec![vec![0], vec![3]]);
}

#[test]
fn peterson_needs_no_buffer_for_mutual_exclusion_under_sc() {
    let p = corpus("peterson");
    assert!(reach_k(&p, 0, &ReachOptions::default()).unwrap().is_safe());
    assert!(!reach_k(&p, 1, &ReachOptions::default()).unwrap().is_safe());
}

#[test]
fn fences_after_the_flag_writes_follow_the_delayed_pairs() {
    let p = corpus("peterson");
    let pair = |proc: &str, w: &str, r: &str| DelayPair {
        proc: p.proc_by_name(proc).unwrap(),
        write: p.label_by_name(w).unwrap(),
        read: p.label_by_name(r).unwrap(),
    };
    let (q, placed) = insert_fences(&p, &[pair("P1", "L1", "L3"), pair("P2", "L6", "L8")]);
    let placed: Vec<String> = placed.iter().map(|f| f.to_string()).collect();
    assert_eq!(placed, ["fence: P1 after L1", "fence: P2 after L6"]);
    assert_eq!(q.labels.len(), p.labels.len() + 2);
    assert!(q.label(q.label_by_name("L1.fence").unwrap()).ins.is_fence());
    // The first-write fences alone leave the `t` race open.
    assert!(!reach_k(&q, 1, &ReachOptions::default()).unwrap().is_safe());
}
