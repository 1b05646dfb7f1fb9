//! Counterexample-guided fence synthesis via critical cycles.
//!
//! A TSO counterexample is turned into memory events ordered by when they
//! become visible: reads at their step, writes at their flush. Competing
//! pairs (`Cmpt`) follow that order, program order (`po`) follows the steps.
//! A critical cycle in `Cmpt ∪ po` needs a write→read `po` edge, and placing
//! a fence on one such edge per cycle rules the trace out.

use std::collections::VecDeque;
use std::fmt;

use rustc_hash::FxHashMap;

use crate::program::{
    Instruction, Label, LabelId, ProcId, Program, SharedId, StateId, Transition,
};
use crate::tso::{initial_state, successors_into, Diagnostics, Event, Rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemoryEvent {
    /// Index of the step in the trace.
    pub idx: usize,
    /// Position at which the access takes effect on memory. Writes still
    /// buffered at the end of the trace come after every trace position.
    pub visible: usize,
    pub tid: ProcId,
    pub label: LabelId,
    /// How many earlier steps of the same label the process took.
    pub occurrence: usize,
    pub kind: AccessKind,
    pub loc: SharedId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Relations {
    pub events: Vec<MemoryEvent>,
    pub cmpt: Vec<(usize, usize)>,
    pub po: Vec<(usize, usize)>,
    pub ppo: Vec<(usize, usize)>,
    /// Trace indices of executed fences, per process.
    pub fence_steps: Vec<Vec<usize>>,
}

impl Relations {
    /// A write→read `po` pair not separated by an executed fence.
    fn is_write_read(&self, a: usize, b: usize) -> bool {
        let (ea, eb) = (&self.events[a], &self.events[b]);
        ea.kind == AccessKind::Write
            && eb.kind == AccessKind::Read
            && !self.fence_steps[ea.tid.0]
                .iter()
                .any(|&f| ea.idx < f && f < eb.idx)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FenceError {
    #[error("trace does not replay: event {index} not enabled")]
    Replay { index: usize },
    #[error("trace has no critical cycle; it is explainable under SC")]
    NoCriticalCycle,
    #[error("critical cycle {cycle:?} has no write-read program order edge")]
    Unfixable { cycle: Vec<usize> },
    #[error("fences are already in place for every delay pair")]
    NoProgress,
}

/// Extracts memory events and the `Cmpt`, `po` and `ppo` relations of a trace.
/// Reads served from the process's own buffer do not access memory and are
/// left out.
pub fn build_relations(p: &Program, k: usize, trace: &[Event]) -> Result<Relations, FenceError> {
    let mut s = initial_state(p);
    let mut succ = Vec::new();
    let mut diag = Diagnostics::default();
    let mut events: Vec<MemoryEvent> = Vec::new();
    let mut pending: Vec<VecDeque<usize>> = vec![VecDeque::new(); p.processes.len()];
    let mut occurrences: FxHashMap<LabelId, usize> = FxHashMap::default();
    let mut fence_steps = vec![Vec::new(); p.processes.len()];
    for (index, e) in trace.iter().enumerate() {
        succ.clear();
        successors_into(p, &s, k, &mut diag, &mut succ);
        let Some(x) = succ.drain(..).find(|x| x.event == *e) else {
            return Err(FenceError::Replay { index });
        };
        match *e {
            Event::Step { proc, label } => {
                let n = occurrences.entry(label).or_insert(0);
                let occurrence = *n;
                *n += 1;
                let (kind, loc) = match (&p.label(label).ins, x.rule) {
                    (Instruction::SharedWrite { var, .. }, _) => (AccessKind::Write, *var),
                    (Instruction::SharedRead { var, .. }, Rule::MRead) => (AccessKind::Read, *var),
                    (Instruction::Fence, _) => {
                        fence_steps[proc.0].push(index);
                        s = x.state;
                        continue;
                    }
                    _ => {
                        s = x.state;
                        continue;
                    }
                };
                let visible = if kind == AccessKind::Write && x.rule == Rule::BWrite {
                    pending[proc.0].push_back(events.len());
                    usize::MAX
                } else {
                    index
                };
                events.push(MemoryEvent {
                    idx: index,
                    visible,
                    tid: proc,
                    label,
                    occurrence,
                    kind,
                    loc,
                });
            }
            Event::Flush { proc, .. } => {
                let w = pending[proc.0]
                    .pop_front()
                    .expect("flush of a recorded write");
                events[w].visible = index;
            }
        }
        s = x.state;
    }
    // Unflushed writes, in issue order, after the end of the trace.
    let unflushed = events.iter_mut().filter(|e| e.visible == usize::MAX);
    for (e, pos) in unflushed.zip(trace.len()..) {
        e.visible = pos;
    }

    let mut r = Relations {
        events,
        fence_steps,
        ..Relations::default()
    };
    let n = r.events.len();
    for a in 0..n {
        for b in 0..n {
            let (ea, eb) = (&r.events[a], &r.events[b]);
            if ea.tid == eb.tid {
                if ea.idx < eb.idx {
                    r.po.push((a, b));
                }
            } else if ea.loc == eb.loc
                && (ea.kind == AccessKind::Write || eb.kind == AccessKind::Write)
                && ea.visible < eb.visible
            {
                r.cmpt.push((a, b));
            }
        }
    }
    r.ppo = r
        .po
        .iter()
        .copied()
        .filter(|&(a, b)| !r.is_write_read(a, b))
        .collect();
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CriticalCycle {
    /// Event indices into [`Relations::events`], rotated to start at the
    /// smallest. Consecutive events of one process are joined by `po`,
    /// the others by `Cmpt`.
    pub events: Vec<usize>,
}

impl CriticalCycle {
    /// The `po` edges of the cycle.
    pub fn po_edges<'a>(&'a self, r: &'a Relations) -> impl Iterator<Item = (usize, usize)> + 'a {
        let n = self.events.len();
        (0..n)
            .map(move |i| (self.events[i], self.events[(i + 1) % n]))
            .filter(move |&(a, b)| r.events[a].tid == r.events[b].tid)
    }

    pub fn render(&self, p: &Program, r: &Relations) -> String {
        let parts: Vec<String> = self
            .events
            .iter()
            .map(|&i| {
                let e = &r.events[i];
                let kind = match e.kind {
                    AccessKind::Read => 'R',
                    AccessKind::Write => 'W',
                };
                format!(
                    "{}:{}{}@{}",
                    p.process(e.tid).name,
                    kind,
                    p.shared[e.loc.0].name,
                    p.label(e.label).name
                )
            })
            .collect();
        parts.join(" -> ")
    }
}

/// Enumerates critical cycles of at most `max_len` events.
///
/// Each process contributes one event, or two events on different locations
/// joined by `po`; consecutive processes are joined by `Cmpt`. Every variable
/// is accessed at most three times. Cycles must become acyclic once their
/// write→read `po` edges are dropped.
pub fn find_critical_cycles(r: &Relations, max_len: usize) -> Vec<CriticalCycle> {
    let mut cmpt_out: Vec<Vec<usize>> = vec![Vec::new(); r.events.len()];
    for &(a, b) in &r.cmpt {
        cmpt_out[a].push(b);
    }
    let mut po_out: Vec<Vec<usize>> = vec![Vec::new(); r.events.len()];
    for &(a, b) in &r.po {
        if r.events[a].loc != r.events[b].loc {
            po_out[a].push(b);
        }
    }
    let mut found = Vec::new();
    let mut path = Vec::new();
    for start in 0..r.events.len() {
        extend(r, &cmpt_out, &po_out, start, start, max_len, &mut path, &mut found);
    }
    let mut cycles: Vec<CriticalCycle> = found
        .into_iter()
        .filter(|c: &Vec<usize>| is_critical(r, c))
        .map(|mut c| {
            let m = (0..c.len()).min_by_key(|&i| c[i]).unwrap_or(0);
            c.rotate_left(m);
            CriticalCycle { events: c }
        })
        .collect();
    cycles.sort();
    cycles.dedup();
    cycles
}

/// Adds the segment entered at `entry` to `path`, then follows `Cmpt` edges.
/// The process of `start` is the smallest in the cycle, which fixes the
/// rotation up to the choice of its entry event.
#[allow(clippy::too_many_arguments)]
fn extend(
    r: &Relations,
    cmpt_out: &[Vec<usize>],
    po_out: &[Vec<usize>],
    start: usize,
    entry: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    found: &mut Vec<Vec<usize>>,
) {
    let exits = std::iter::once(entry).chain(po_out[entry].iter().copied());
    for exit in exits {
        let seg = if exit == entry { 1 } else { 2 };
        if path.len() + seg > max_len {
            continue;
        }
        path.push(entry);
        if exit != entry {
            path.push(exit);
        }
        if loc_limits_ok(r, path) {
            for &next in &cmpt_out[exit] {
                let tid = r.events[next].tid;
                if next == start && path.len() >= 2 {
                    found.push(path.clone());
                } else if tid > r.events[start].tid
                    && !path.iter().any(|&e| r.events[e].tid == tid)
                {
                    extend(r, cmpt_out, po_out, start, next, max_len, path, found);
                }
            }
        }
        path.truncate(path.len() - seg);
    }
}

fn loc_limits_ok(r: &Relations, path: &[usize]) -> bool {
    let mut counts: FxHashMap<SharedId, usize> = FxHashMap::default();
    path.iter().all(|&e| {
        let c = counts.entry(r.events[e].loc).or_insert(0);
        *c += 1;
        *c <= 3
    })
}

/// Acyclic under `Cmpt ∪ ppo` restricted to the cycle's events, while the
/// cycle itself is closed by `Cmpt ∪ po`.
fn is_critical(r: &Relations, cycle: &[usize]) -> bool {
    let idx: FxHashMap<usize, usize> = cycle.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let n = cycle.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in r.cmpt.iter().chain(&r.ppo) {
        if let (Some(&i), Some(&j)) = (idx.get(&a), idx.get(&b)) {
            adj[i].push(j);
        }
    }
    // Kahn's algorithm.
    let mut indeg = vec![0usize; n];
    for v in adj.iter().flatten() {
        indeg[*v] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &w in &adj[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push(w);
            }
        }
    }
    seen == n
}

/// A write→read program-order pair, identified by labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DelayPair {
    pub proc: ProcId,
    pub write: LabelId,
    pub read: LabelId,
}

/// Candidate sets above this size are covered greedily.
pub const EXACT_HITTING_SET_LIMIT: usize = 20;

/// A minimum-cardinality set of write→read pairs hitting every cycle.
///
/// A fence after the write of a chosen pair executes between the events of
/// every write→read edge of the same process that spans it in the trace, so
/// a pair hits each cycle containing such a spanning edge, not only the
/// cycles containing the pair itself.
pub fn choose_delay_set(
    r: &Relations,
    cycles: &[CriticalCycle],
) -> Result<Vec<DelayPair>, FenceError> {
    if cycles.is_empty() {
        return Err(FenceError::NoCriticalCycle);
    }
    let mut edges: Vec<Vec<(usize, usize)>> = Vec::with_capacity(cycles.len());
    for c in cycles {
        let e: Vec<(usize, usize)> = c
            .po_edges(r)
            .filter(|&(a, b)| r.is_write_read(a, b))
            .collect();
        if e.is_empty() {
            return Err(FenceError::Unfixable {
                cycle: c.events.clone(),
            });
        }
        edges.push(e);
    }
    let pair = |(a, b): (usize, usize)| DelayPair {
        proc: r.events[a].tid,
        write: r.events[a].label,
        read: r.events[b].label,
    };
    let mut candidates: Vec<DelayPair> = edges.iter().flatten().map(|&e| pair(e)).collect();
    candidates.sort();
    candidates.dedup();
    // sets[i]: candidates hitting cycle i.
    let sets: Vec<Vec<usize>> = edges
        .iter()
        .map(|cycle_edges| {
            (0..candidates.len())
                .filter(|&ci| {
                    let cand = candidates[ci];
                    edges.iter().flatten().any(|&(c, d)| {
                        pair((c, d)) == cand
                            && cycle_edges.iter().any(|&(a, b)| {
                                let (ea, eb, ec) = (&r.events[a], &r.events[b], &r.events[c]);
                                ea.tid == ec.tid && ea.idx <= ec.idx && ec.idx < eb.idx
                            })
                    })
                })
                .collect()
        })
        .collect();
    let hits = |chosen: &[usize]| {
        sets.iter()
            .all(|s| s.iter().any(|d| chosen.binary_search(d).is_ok()))
    };
    let n = candidates.len();
    if n <= EXACT_HITTING_SET_LIMIT {
        for size in 1..=n {
            let mut comb: Vec<usize> = (0..size).collect();
            loop {
                if hits(&comb) {
                    return Ok(comb.iter().map(|&i| candidates[i]).collect());
                }
                if !next_combination(&mut comb, n) {
                    break;
                }
            }
        }
        unreachable!("the full candidate set hits every cycle");
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut open: Vec<&Vec<usize>> = sets.iter().collect();
    while !open.is_empty() {
        // Ties go to the lexicographically smaller pair.
        let best = (0..n)
            .rev()
            .max_by_key(|c| open.iter().filter(|s| s.contains(c)).count())
            .expect("open cycles have candidates");
        open.retain(|s| !s.contains(&best));
        chosen.push(best);
    }
    chosen.sort();
    Ok(chosen.into_iter().map(|i| candidates[i]).collect())
}

fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    for i in (0..k).rev() {
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct FencePlacement {
    pub process: String,
    pub after_label: String,
}

impl fmt::Display for FencePlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fence: {} after {}", self.process, self.after_label)
    }
}

fn fence_follows(p: &Program, proc: ProcId, q: StateId) -> bool {
    let process = p.process(proc);
    let mut out = process.outgoing(q).peekable();
    out.peek().is_some() && out.all(|t| p.label(t.label).ins.is_fence())
}

/// Inserts a fence right after the write of every delay pair by splitting
/// the write's target state. Writes already followed by a fence are skipped.
pub fn insert_fences(p: &Program, dlay: &[DelayPair]) -> (Program, Vec<FencePlacement>) {
    let mut writes: Vec<LabelId> = dlay.iter().map(|d| d.write).collect();
    writes.sort();
    writes.dedup();
    let mut processes = p.processes.clone();
    let mut labels: Vec<Label> = p.labels.clone();
    let mut placed = Vec::new();
    for w in writes {
        let Some((proc, tr)) = p.transition_of(w) else {
            continue;
        };
        if fence_follows(p, proc, tr.to) {
            continue;
        }
        let target = tr.to;
        let process = &mut processes[proc.0];
        let mid = StateId(process.states.len());
        let mut counter = 0;
        let name = crate::program::transform::fresh_state(&process.states, &mut counter);
        process.states.push(name);
        let wname = p.label(w).name.clone();
        let mut fname = format!("{wname}.fence");
        while labels.iter().any(|l| l.name == fname) {
            fname.push('\'');
        }
        let fid = LabelId(labels.len());
        labels.push(Label {
            name: fname,
            proc,
            ins: Instruction::Fence,
        });
        for t in process.transitions.iter_mut().filter(|t| t.label == w) {
            t.to = mid;
        }
        process.transitions.push(Transition {
            from: mid,
            label: fid,
            to: target,
        });
        placed.push(FencePlacement {
            process: p.process(proc).name.clone(),
            after_label: wname,
        });
    }
    if placed.is_empty() {
        return (p.clone(), placed);
    }
    (p.with_automata(processes, labels), placed)
}

/// Everything derived from one counterexample.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub relations: Relations,
    pub cycles: Vec<CriticalCycle>,
    pub dlay: Vec<DelayPair>,
    pub program: Program,
    pub placements: Vec<FencePlacement>,
}

/// Cycle length bound used by [`synthesize`]: two events per process.
pub fn default_cycle_bound(p: &Program) -> usize {
    2 * p.processes.len()
}

pub fn synthesize(
    p: &Program,
    k: usize,
    trace: &[Event],
    max_cycle_len: usize,
) -> Result<Synthesis, FenceError> {
    let relations = build_relations(p, k, trace)?;
    let cycles = find_critical_cycles(&relations, max_cycle_len);
    let dlay = choose_delay_set(&relations, &cycles)?;
    let (program, placements) = insert_fences(p, &dlay);
    if placements.is_empty() {
        return Err(FenceError::NoProgress);
    }
    Ok(Synthesis {
        relations,
        cycles,
        dlay,
        program,
        placements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::{reach_k, replay, ReachOptions};
    use crate::program::parse_program;

    const SB: &str = "shared x in {0..1} = 0; shared y in {0..1} = 0;
        process P1 { local l1 in {0..1} = 1; label a: x := 1; label b: l1 := y; }
        process P2 { local l2 in {0..1} = 1; label c: y := 1; label d: l2 := x; }
        assert @terminal (P1.l1 = 1 || P2.l2 = 1);";

    fn ev(p: &Program, s: &str) -> Event {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let proc = p.proc_by_name(parts[1]).unwrap();
        if parts[0] == "step" {
            Event::Step {
                proc,
                label: p.label_by_name(parts[2]).unwrap(),
            }
        } else {
            let (var, value) = parts[2].split_once('=').unwrap();
            Event::Flush {
                proc,
                var: p.shared_by_name(var).unwrap(),
                value: value.parse().unwrap(),
            }
        }
    }

    fn sb_trace(p: &Program) -> Vec<Event> {
        [
            "step P1 a",
            "step P1 b",
            "step P2 c",
            "step P2 d",
            "flush P1 x=1",
            "flush P2 y=1",
        ]
        .iter()
        .map(|s| ev(p, s))
        .collect()
    }

    #[test]
    fn sb_relations() {
        let p = parse_program(SB).unwrap();
        let r = build_relations(&p, 1, &sb_trace(&p)).unwrap();
        let names: Vec<&str> = r.events.iter().map(|e| p.label(e.label).name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c", "d"]);
        // b reads y before c's write is flushed; d reads x before a's.
        assert_eq!(r.cmpt, vec![(1, 2), (3, 0)]);
        assert_eq!(r.po, vec![(0, 1), (2, 3)]);
        assert!(r.ppo.is_empty());
    }

    #[test]
    fn sb_single_critical_cycle() {
        let p = parse_program(SB).unwrap();
        let r = build_relations(&p, 1, &sb_trace(&p)).unwrap();
        let cycles = find_critical_cycles(&r, 4);
        assert_eq!(cycles, vec![CriticalCycle { events: vec![0, 1, 2, 3] }]);
        assert_eq!(cycles[0].render(&p, &r), "P1:Wx@a -> P1:Ry@b -> P2:Wy@c -> P2:Rx@d");
        let dlay = choose_delay_set(&r, &cycles).unwrap();
        assert_eq!(dlay.len(), 1);
    }

    #[test]
    fn sc_trace_has_no_critical_cycle() {
        let p = parse_program(SB).unwrap();
        let t: Vec<Event> = ["step P1 a", "step P1 b", "step P2 c", "step P2 d"]
            .iter()
            .map(|s| ev(&p, s))
            .collect();
        let r = build_relations(&p, 0, &t).unwrap();
        assert!(find_critical_cycles(&r, 4).is_empty());
        assert_eq!(choose_delay_set(&r, &[]), Err(FenceError::NoCriticalCycle));
    }

    #[test]
    fn reads_only_do_not_compete() {
        let p = parse_program(
            "shared x in {0..1} = 0;
             process P { local a in {0..1}; a := x; }
             process Q { local b in {0..1}; b := x; }",
        )
        .unwrap();
        let t = vec![ev(&p, "step P P.1"), ev(&p, "step Q Q.1")];
        let r = build_relations(&p, 1, &t).unwrap();
        assert_eq!(r.events.len(), 2);
        assert!(r.cmpt.is_empty());
    }

    #[test]
    fn buffer_forwarded_reads_are_not_events() {
        let p = parse_program(
            "shared x in {0..1} = 0; process P { local a in {0..1}; x := 1; a := x; }",
        )
        .unwrap();
        let t = vec![ev(&p, "step P P.1"), ev(&p, "step P P.2")];
        let r = build_relations(&p, 1, &t).unwrap();
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.events[0].visible, 2);
    }

    #[test]
    fn fence_blocks_counterexample_and_is_idempotent() {
        let p = parse_program(SB).unwrap();
        let t = sb_trace(&p);
        let s = synthesize(&p, 1, &t, 4).unwrap();
        assert_eq!(s.placements.len(), 1);
        assert!(replay(&s.program, 1, &t).is_err());
        let (again, placed) = insert_fences(&s.program, &s.dlay);
        assert!(placed.is_empty());
        assert_eq!(again, s.program);
        assert_eq!(insert_fences(&p, &[]).0, p);
    }

    #[test]
    fn fencing_both_writes_restores_sb() {
        let p = parse_program(SB).unwrap();
        let dlay = [
            DelayPair {
                proc: ProcId(0),
                write: p.label_by_name("a").unwrap(),
                read: p.label_by_name("b").unwrap(),
            },
            DelayPair {
                proc: ProcId(1),
                write: p.label_by_name("c").unwrap(),
                read: p.label_by_name("d").unwrap(),
            },
        ];
        let (q, placed) = insert_fences(&p, &dlay);
        assert_eq!(placed[0].to_string(), "fence: P1 after a");
        for k in 0..3 {
            assert!(reach_k(&q, k, &ReachOptions::default()).unwrap().is_safe());
        }
    }

    #[test]
    fn combinations_enumerate_in_order() {
        let mut comb = vec![0, 1];
        let mut all = vec![comb.clone()];
        while next_combination(&mut comb, 4) {
            all.push(comb.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all.last().unwrap(), &vec![2, 3]);
    }
}
