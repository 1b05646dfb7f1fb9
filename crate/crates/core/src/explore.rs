//! Breadth-first reachability over TSO_k, counterexample extraction, and the
//! incremental search for a buffer bound whose projected reachable set is
//! stable.

use std::collections::VecDeque;
use std::time::Instant;

use crate::keyset::KeySet;
use crate::program::Program;
use crate::tso::{
    codec, initial_state, spec_is_terminal_only, successors_into, violates, Diagnostics, Event,
    State, Successor,
};

pub const DEFAULT_BUDGET_STATES: usize = 10_000_000;

#[derive(Clone, Debug)]
pub struct ReachOptions {
    /// Maximum number of distinct states before giving up.
    pub budget_states: usize,
    /// Return at the first violation instead of exhausting the state space.
    pub stop_at_violation: bool,
    /// Keep the encoded full states (see [`codec::decode_state`]).
    pub collect_states: bool,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions {
            budget_states: DEFAULT_BUDGET_STATES,
            stop_at_violation: true,
            collect_states: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub k: usize,
    pub events: Vec<Event>,
    pub final_state: State,
}

impl Trace {
    pub fn render(&self, p: &Program) -> Vec<String> {
        self.events.iter().map(|e| e.render(p)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReachVerdict {
    Safe,
    Unsafe(Trace),
}

#[derive(Clone, Debug)]
pub struct ReachResult {
    pub k: usize,
    pub verdict: ReachVerdict,
    /// Distinct full states discovered.
    pub visited: usize,
    /// Canonical encodings of the projected states discovered.
    pub projected: KeySet,
    /// Present when [`ReachOptions::collect_states`] was set.
    pub states: Option<KeySet>,
    pub diagnostics: Diagnostics,
}

impl ReachResult {
    pub fn is_safe(&self) -> bool {
        matches!(self.verdict, ReachVerdict::Safe)
    }

    pub fn trace(&self) -> Option<&Trace> {
        match &self.verdict {
            ReachVerdict::Unsafe(t) => Some(t),
            ReachVerdict::Safe => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("state budget of {limit} exceeded at k={k} after {visited} states")]
    Budget {
        k: usize,
        visited: usize,
        limit: usize,
        /// Statistics of the bounds completed before the budget ran out.
        completed: Vec<KStats>,
    },
}

struct Node {
    parent: u32,
    event: Option<Event>,
}

fn trace_to(nodes: &[Node], mut id: u32, k: usize, final_state: State) -> Trace {
    let mut events = Vec::new();
    while let Some(e) = nodes[id as usize].event {
        events.push(e);
        id = nodes[id as usize].parent;
    }
    events.reverse();
    Trace {
        k,
        events,
        final_state,
    }
}

/// Explores TSO_k breadth-first with deduplication on full states.
pub fn reach_k(p: &Program, k: usize, opts: &ReachOptions) -> Result<ReachResult, ExploreError> {
    let terminal_only = spec_is_terminal_only(p);
    let nshared = p.shared.len();
    let mut visited = KeySet::new();
    let mut projected = KeySet::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut queue: VecDeque<(u32, State)> = VecDeque::new();
    let mut diagnostics = Diagnostics::default();
    let mut first_violation: Option<Trace> = None;
    let mut key = Vec::new();
    let mut succ: Vec<Successor> = Vec::new();

    let init = initial_state(p);
    codec::state_key(&init, &mut key);
    visited.insert(&key);
    codec::projection_key(&init, nshared, &mut key);
    projected.insert(&key);
    nodes.push(Node {
        parent: 0,
        event: None,
    });
    if !terminal_only && violates(p, &init, false) {
        first_violation = Some(trace_to(&nodes, 0, k, init.clone()));
    }

    let finish = |verdict: Option<Trace>,
                  visited: KeySet,
                  projected: KeySet,
                  diagnostics: Diagnostics| ReachResult {
        k,
        verdict: verdict.map_or(ReachVerdict::Safe, ReachVerdict::Unsafe),
        visited: visited.len(),
        projected,
        states: opts.collect_states.then_some(visited),
        diagnostics,
    };

    if first_violation.is_some() && opts.stop_at_violation {
        return Ok(finish(first_violation, visited, projected, diagnostics));
    }
    queue.push_back((0, init));

    while let Some((id, s)) = queue.pop_front() {
        succ.clear();
        successors_into(p, &s, k, &mut diagnostics, &mut succ);
        if succ.is_empty() && terminal_only && first_violation.is_none() && violates(p, &s, true)
        {
            first_violation = Some(trace_to(&nodes, id, k, s));
            if opts.stop_at_violation {
                break;
            }
            continue;
        }
        for Successor { event, state, .. } in succ.drain(..) {
            codec::state_key(&state, &mut key);
            let (nid, fresh) = visited.insert(&key);
            if !fresh {
                continue;
            }
            debug_assert_eq!(nid, nodes.len());
            nodes.push(Node {
                parent: id,
                event: Some(event),
            });
            codec::projection_key(&state, nshared, &mut key);
            projected.insert(&key);
            if visited.len() > opts.budget_states {
                return Err(ExploreError::Budget {
                    k,
                    visited: visited.len(),
                    limit: opts.budget_states,
                    completed: Vec::new(),
                });
            }
            if !terminal_only && first_violation.is_none() && violates(p, &state, false) {
                first_violation = Some(trace_to(&nodes, nid as u32, k, state.clone()));
                if opts.stop_at_violation {
                    return Ok(finish(first_violation, visited, projected, diagnostics));
                }
            }
            queue.push_back((nid as u32, state));
        }
    }
    Ok(finish(first_violation, visited, projected, diagnostics))
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct KStats {
    pub k: usize,
    pub states: usize,
    pub projected: usize,
    pub millis: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Projections at `k0` and `k0 + 1` coincide and no violation was found.
    SafeAtFixedPoint { k0: usize },
    UnsafeSc { trace: Trace },
    UnsafeTso { k: usize, trace: Trace },
    BoundExhausted { k_max: usize },
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub k_max: usize,
    /// First bound to explore. Bounds below `start_k - 1` are skipped, which
    /// is only sound if they are already known to be safe.
    pub start_k: usize,
    pub budget_states: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            k_max: 16,
            start_k: 0,
            budget_states: DEFAULT_BUDGET_STATES,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub verdict: Verdict,
    pub per_k: Vec<KStats>,
    pub diagnostics: Diagnostics,
}

/// Raises k from `start_k` until a violation is found, two consecutive
/// projected reachable sets coincide, or `k_max` is passed.
pub fn fixed_point_search(p: &Program, opts: &SearchOptions) -> Result<SearchOutcome, ExploreError> {
    let reach_opts = ReachOptions {
        budget_states: opts.budget_states,
        stop_at_violation: true,
        collect_states: false,
    };
    let mut per_k = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut prev: Option<KeySet> = None;
    let first = opts.start_k.saturating_sub(1);
    for k in first..=opts.k_max {
        let start = Instant::now();
        let r = match reach_k(p, k, &reach_opts) {
            Ok(r) => r,
            Err(ExploreError::Budget {
                k,
                visited,
                limit,
                ..
            }) => {
                return Err(ExploreError::Budget {
                    k,
                    visited,
                    limit,
                    completed: per_k,
                })
            }
        };
        per_k.push(KStats {
            k,
            states: r.visited,
            projected: r.projected.len(),
            millis: start.elapsed().as_millis() as u64,
        });
        diagnostics.merge(r.diagnostics);
        if let ReachVerdict::Unsafe(trace) = r.verdict {
            let verdict = if k == 0 {
                Verdict::UnsafeSc { trace }
            } else {
                Verdict::UnsafeTso { k, trace }
            };
            return Ok(SearchOutcome {
                verdict,
                per_k,
                diagnostics,
            });
        }
        if prev.as_ref().is_some_and(|prev| *prev == r.projected) {
            return Ok(SearchOutcome {
                verdict: Verdict::SafeAtFixedPoint { k0: k - 1 },
                per_k,
                diagnostics,
            });
        }
        prev = Some(r.projected);
    }
    Ok(SearchOutcome {
        verdict: Verdict::BoundExhausted { k_max: opts.k_max },
        per_k,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("event {index} not enabled: {event}")]
pub struct ReplayError {
    pub index: usize,
    pub event: String,
}

/// Applies `events` one by one from the initial state.
pub fn replay(p: &Program, k: usize, events: &[Event]) -> Result<State, ReplayError> {
    let mut s = initial_state(p);
    let mut succ = Vec::new();
    let mut diag = Diagnostics::default();
    for (index, e) in events.iter().enumerate() {
        succ.clear();
        successors_into(p, &s, k, &mut diag, &mut succ);
        match succ.drain(..).find(|x| x.event == *e) {
            Some(x) => s = x.state,
            None => {
                return Err(ReplayError {
                    index,
                    event: e.render(p),
                })
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{parse_program, parse_spec_clause};
    use crate::tso::project;

    const SB: &str = "shared x in {0..1} = 0; shared y in {0..1} = 0;
        process P1 { local l1 in {0..1} = 0; label a: x := 1; label b: l1 := y; }
        process P2 { local l2 in {0..1} = 0; label c: y := 1; label d: l2 := x; }
        assert @terminal (!(P1.l1 = 0 && P2.l2 = 0));";

    #[test]
    fn sb_unsafe_only_with_buffers() {
        let p = parse_program(SB).unwrap();
        let r0 = reach_k(&p, 0, &ReachOptions::default()).unwrap();
        assert!(r0.is_safe());
        let r1 = reach_k(&p, 1, &ReachOptions::default()).unwrap();
        let t = r1.trace().expect("unsafe at k=1");
        let s = replay(&p, 1, &t.events).unwrap();
        assert_eq!(s, t.final_state);
        assert_eq!(s.locals, vec![vec![0], vec![0]]);
    }

    #[test]
    fn sb_search_reports_tso_violation_at_one() {
        let p = parse_program(SB).unwrap();
        let out = fixed_point_search(&p, &SearchOptions::default()).unwrap();
        assert!(matches!(out.verdict, Verdict::UnsafeTso { k: 1, .. }));
    }

    #[test]
    fn straight_line_writes_stabilize() {
        let p = parse_program(
            "shared x in {0..3} = 0;
             process P { label a: x := 1; label b: x := 2; label c: x := 3; }",
        )
        .unwrap();
        let out = fixed_point_search(&p, &SearchOptions::default()).unwrap();
        match out.verdict {
            Verdict::SafeAtFixedPoint { k0 } => assert!(k0 <= 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn replay_rejects_flush_on_empty_buffer() {
        let p = parse_program(SB).unwrap();
        let err = replay(
            &p,
            1,
            &[Event::Flush {
                proc: crate::program::ProcId(0),
                var: crate::program::SharedId(0),
                value: 1,
            }],
        )
        .unwrap_err();
        assert_eq!(err.index, 0);
        assert_eq!(err.to_string(), "event 0 not enabled: flush P1 x=1");
    }

    #[test]
    fn budget_is_reported() {
        let p = parse_program(SB).unwrap();
        let opts = ReachOptions {
            budget_states: 3,
            ..ReachOptions::default()
        };
        assert!(matches!(
            reach_k(&p, 1, &opts),
            Err(ExploreError::Budget { limit: 3, .. })
        ));
    }

    #[test]
    fn projection_merges_older_buffer_entries() {
        let p = parse_program(
            "shared x in {0..3} = 0; shared y in {0..1} = 0;
             process P {
                 local l in {0..1} = 0;
                 l := y;
                 if (l = 0) { x := 1; } else { x := 2; }
                 l := 0;
                 x := 3;
             }
             process Q { y := 1; }",
        )
        .unwrap();
        let opts = ReachOptions {
            collect_states: true,
            stop_at_violation: false,
            ..ReachOptions::default()
        };
        let r = reach_k(&p, 3, &opts).unwrap();
        let states: Vec<State> = r
            .states
            .unwrap()
            .iter()
            .map(|k| codec::decode_state(&p, k))
            .collect();
        let mut found = false;
        for a in &states {
            for b in &states {
                if a != b && project(a, &p) == project(b, &p) {
                    found = true;
                }
            }
        }
        assert!(found);
        assert!(r.projected.len() < states.len());
    }

    #[test]
    fn spec_override_clause() {
        let p = parse_program(SB).unwrap();
        let spec = parse_spec_clause(&p, "error: P1@b && P2@d;").unwrap();
        let p = p.with_spec(spec);
        assert!(!reach_k(&p, 0, &ReachOptions::default()).unwrap().is_safe());
    }
}
