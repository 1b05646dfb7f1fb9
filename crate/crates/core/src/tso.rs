//! The k-bounded TSO transition relation and the state projection used by
//! the buffer-bound fixed-point test.
//!
//! Each process owns a FIFO store buffer of at most `k` pending
//! `(variable, value)` writes. Reads consult the newest own buffered write to
//! the variable before falling back to memory; a flush moves the oldest entry
//! of one buffer to memory. With `k = 0` every write goes straight to memory,
//! which is sequential consistency.

use std::fmt::{self, Write as _};

use crate::program::{
    expr::truthy, EvalError, Expr, Instruction, LabelId, ProcId, Program, SafetySpec, SharedId,
    StateId, Value, Var,
};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct State {
    pub cs: Vec<StateId>,
    /// `locals[t][l]`
    pub locals: Vec<Vec<Value>>,
    pub globals: Vec<Value>,
    /// Oldest entry first.
    pub buffers: Vec<Vec<(SharedId, Value)>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Step { proc: ProcId, label: LabelId },
    Flush {
        proc: ProcId,
        var: SharedId,
        value: Value,
    },
}

impl Event {
    pub fn proc(&self) -> ProcId {
        match self {
            Event::Step { proc, .. } | Event::Flush { proc, .. } => *proc,
        }
    }

    pub fn render(&self, p: &Program) -> String {
        match self {
            Event::Step { proc, label } => {
                format!("step {} {}", p.process(*proc).name, p.label(*label).name)
            }
            Event::Flush { proc, var, value } => format!(
                "flush {} {}={}",
                p.process(*proc).name,
                p.shared[var.0].name,
                value
            ),
        }
    }
}

/// Which rule produced a successor, in the canonical successor order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    BWrite,
    /// `k = 0`: the write is enqueued and flushed in one step.
    WriteThrough,
    BRead,
    MRead,
    LWrite,
    Assume,
    Fence,
    Flush,
}

impl Rule {
    fn rank(self) -> u8 {
        match self {
            Rule::BWrite | Rule::WriteThrough => 0,
            Rule::BRead => 1,
            Rule::MRead => 2,
            Rule::LWrite => 3,
            Rule::Assume => 4,
            Rule::Fence => 5,
            Rule::Flush => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Successor {
    pub event: Event,
    pub rule: Rule,
    pub state: State,
}

/// Counters for transitions suppressed by evaluation problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// A computed value fell outside the target variable's domain.
    pub domain_violations: u64,
    /// Division by zero or overflow.
    pub eval_errors: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: Diagnostics) {
        self.domain_violations += other.domain_violations;
        self.eval_errors += other.eval_errors;
    }
}

pub fn initial_state(p: &Program) -> State {
    State {
        cs: p.processes.iter().map(|q| q.initial).collect(),
        locals: p
            .processes
            .iter()
            .map(|q| q.locals.iter().map(|d| d.init).collect())
            .collect(),
        globals: p.shared.iter().map(|d| d.init).collect(),
        buffers: vec![Vec::new(); p.processes.len()],
    }
}

/// Evaluates an instruction expression over one process's local store.
pub fn eval_expr(e: &Expr<Var>, local_store: &[Value]) -> Result<Value, EvalError> {
    e.eval(&mut |v: &Var| match v {
        Var::Local(_, l) => local_store[l.0],
        Var::Shared(_) => unreachable!("validated instructions mention no shared variable"),
    })
}

/// Evaluates an expression over the whole state (shared memory and all locals).
pub fn eval_in_state(e: &Expr<Var>, s: &State) -> Result<Value, EvalError> {
    e.eval(&mut |v: &Var| match v {
        Var::Local(t, l) => s.locals[t.0][l.0],
        Var::Shared(x) => s.globals[x.0],
    })
}

/// All enabled transitions of `s`, in canonical order.
pub fn successors(p: &Program, s: &State, k: usize) -> Vec<(Event, State)> {
    let mut out = Vec::new();
    successors_into(p, s, k, &mut Diagnostics::default(), &mut out);
    out.into_iter().map(|x| (x.event, x.state)).collect()
}

/// Appends the successors of `s` to `out`, ordered by process, then rule,
/// then transition declaration order.
pub fn successors_into(
    p: &Program,
    s: &State,
    k: usize,
    diag: &mut Diagnostics,
    out: &mut Vec<Successor>,
) {
    for (ti, proc) in p.processes.iter().enumerate() {
        let t = ProcId(ti);
        let start = out.len();
        for tr in proc.outgoing(s.cs[ti]) {
            let label = p.label(tr.label);
            let locals = &s.locals[ti];
            let buffer = &s.buffers[ti];
            let make = |rule: Rule, f: &dyn Fn(&mut State)| {
                let mut next = s.clone();
                next.cs[ti] = tr.to;
                f(&mut next);
                Successor {
                    event: Event::Step { proc: t, label: tr.label },
                    rule,
                    state: next,
                }
            };
            match &label.ins {
                Instruction::SharedWrite { var, expr } => {
                    let v = match eval_expr(expr, locals) {
                        Ok(v) => v,
                        Err(_) => {
                            diag.eval_errors += 1;
                            continue;
                        }
                    };
                    if !p.shared[var.0].domain.contains(v) {
                        diag.domain_violations += 1;
                        continue;
                    }
                    if k == 0 {
                        out.push(make(Rule::WriteThrough, &|n| n.globals[var.0] = v));
                    } else if buffer.len() < k {
                        out.push(make(Rule::BWrite, &|n| n.buffers[ti].push((*var, v))));
                    }
                }
                Instruction::SharedRead { local, var } => {
                    let (rule, v) = match buffer.iter().rev().find(|(x, _)| x == var) {
                        Some(&(_, v)) => (Rule::BRead, v),
                        None => (Rule::MRead, s.globals[var.0]),
                    };
                    if !proc.locals[local.0].domain.contains(v) {
                        diag.domain_violations += 1;
                        continue;
                    }
                    out.push(make(rule, &|n| n.locals[ti][local.0] = v));
                }
                Instruction::LocalAssign { local, expr } => {
                    let v = match eval_expr(expr, locals) {
                        Ok(v) => v,
                        Err(_) => {
                            diag.eval_errors += 1;
                            continue;
                        }
                    };
                    if !proc.locals[local.0].domain.contains(v) {
                        diag.domain_violations += 1;
                        continue;
                    }
                    out.push(make(Rule::LWrite, &|n| n.locals[ti][local.0] = v));
                }
                Instruction::Assume(e) => match eval_expr(e, locals) {
                    Ok(v) if truthy(v) => out.push(make(Rule::Assume, &|_| {})),
                    Ok(_) => {}
                    Err(_) => diag.eval_errors += 1,
                },
                Instruction::Fence => {
                    if buffer.is_empty() {
                        out.push(make(Rule::Fence, &|_| {}));
                    }
                }
            }
        }
        out[start..].sort_by_key(|x| x.rule.rank());
        if let Some(&(var, value)) = s.buffers[ti].first() {
            let mut next = s.clone();
            next.buffers[ti].remove(0);
            next.globals[var.0] = value;
            out.push(Successor {
                event: Event::Flush { proc: t, var, value },
                rule: Rule::Flush,
                state: next,
            });
        }
    }
}

/// Applies one event if it is enabled.
pub fn apply_event(p: &Program, s: &State, k: usize, event: &Event) -> Option<State> {
    let mut out = Vec::new();
    successors_into(p, s, k, &mut Diagnostics::default(), &mut out);
    out.into_iter().find(|x| x.event == *event).map(|x| x.state)
}

/// Control states, memories and the newest buffered value per
/// `(process, variable)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProjectedState {
    pub cs: Vec<StateId>,
    pub globals: Vec<Value>,
    pub locals: Vec<Vec<Value>>,
    /// `last[t][x]`
    pub last: Vec<Vec<Option<Value>>>,
}

pub fn project(s: &State, p: &Program) -> ProjectedState {
    let last = s
        .buffers
        .iter()
        .map(|b| {
            let mut row = vec![None; p.shared.len()];
            for &(x, v) in b {
                row[x.0] = Some(v);
            }
            row
        })
        .collect();
    ProjectedState {
        cs: s.cs.clone(),
        globals: s.globals.clone(),
        locals: s.locals.clone(),
        last,
    }
}

impl ProjectedState {
    /// Canonical byte encoding, identical to [`codec::projection_key`].
    pub fn key(&self) -> Box<[u8]> {
        let mut out = Vec::new();
        codec::put_common(&mut out, &self.cs, &self.locals, &self.globals);
        for row in &self.last {
            for v in row {
                codec::put_opt(&mut out, *v);
            }
        }
        out.into_boxed_slice()
    }
}

impl State {
    pub fn render(&self, p: &Program) -> String {
        let mut out = String::new();
        let mut names: Vec<(String, Value)> = Vec::new();
        for (ti, proc) in p.processes.iter().enumerate() {
            for (li, d) in proc.locals.iter().enumerate() {
                let clash = p
                    .processes
                    .iter()
                    .enumerate()
                    .any(|(tj, o)| tj != ti && o.locals.iter().any(|e| e.name == d.name))
                    || p.shared.iter().any(|x| x.name == d.name);
                let name = if clash {
                    format!("{}.{}", proc.name, d.name)
                } else {
                    d.name.clone()
                };
                names.push((name, self.locals[ti][li]));
            }
        }
        for (xi, d) in p.shared.iter().enumerate() {
            names.push((d.name.clone(), self.globals[xi]));
        }
        let mem: Vec<String> = names.iter().map(|(n, v)| format!("{n}={v}")).collect();
        let _ = writeln!(out, "memory: {}", mem.join(" "));
        let cs: Vec<String> = p
            .processes
            .iter()
            .zip(&self.cs)
            .map(|(q, s)| format!("{}@{}", q.name, q.states[s.0]))
            .collect();
        let _ = writeln!(out, "control: {}", cs.join(" "));
        let bufs: Vec<String> = p
            .processes
            .iter()
            .zip(&self.buffers)
            .map(|(q, b)| {
                let entries: Vec<String> = b
                    .iter()
                    .map(|(x, v)| format!("{}={}", p.shared[x.0].name, v))
                    .collect();
                format!("{}=[{}]", q.name, entries.join(", "))
            })
            .collect();
        let _ = write!(out, "buffers: {}", bufs.join(" "));
        out
    }
}

/// Outcome of checking the safety specification on one state.
pub fn violates(p: &Program, s: &State, terminal: bool) -> bool {
    match &p.spec {
        SafetySpec::None => false,
        SafetySpec::ErrorStates(tuples) => tuples.iter().any(|t| {
            t.iter()
                .zip(&s.cs)
                .all(|(want, have)| want.is_none_or(|w| w == *have))
        }),
        SafetySpec::StateAssert {
            expr,
            terminal_only,
        } => {
            if *terminal_only && !terminal {
                return false;
            }
            !matches!(eval_in_state(expr, s), Ok(v) if truthy(v))
        }
    }
}

/// Whether the specification must be evaluated on terminal states only.
pub fn spec_is_terminal_only(p: &Program) -> bool {
    matches!(
        p.spec,
        SafetySpec::StateAssert {
            terminal_only: true,
            ..
        }
    )
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Compact canonical encodings used as hash keys.
pub mod codec {
    use super::*;

    pub(crate) fn put(out: &mut Vec<u8>, v: i64) {
        let mut z = ((v << 1) ^ (v >> 63)) as u64;
        loop {
            let b = (z & 0x7f) as u8;
            z >>= 7;
            if z == 0 {
                out.push(b);
                return;
            }
            out.push(b | 0x80);
        }
    }

    fn get(bytes: &[u8], i: &mut usize) -> i64 {
        let mut z = 0u64;
        let mut shift = 0;
        loop {
            let b = bytes[*i];
            *i += 1;
            z |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                break;
            }
            shift += 7;
        }
        ((z >> 1) as i64) ^ -((z & 1) as i64)
    }

    pub(super) fn put_opt(out: &mut Vec<u8>, v: Option<Value>) {
        match v {
            None => out.push(0),
            Some(v) => {
                out.push(1);
                put(out, v);
            }
        }
    }

    pub(super) fn put_common(
        out: &mut Vec<u8>,
        cs: &[StateId],
        locals: &[Vec<Value>],
        globals: &[Value],
    ) {
        for q in cs {
            put(out, q.0 as i64);
        }
        for row in locals {
            for v in row {
                put(out, *v);
            }
        }
        for v in globals {
            put(out, *v);
        }
    }

    /// Full state encoding (buffers in FIFO order).
    pub fn state_key(s: &State, out: &mut Vec<u8>) {
        out.clear();
        put_common(out, &s.cs, &s.locals, &s.globals);
        for b in &s.buffers {
            put(out, b.len() as i64);
            for (x, v) in b {
                put(out, x.0 as i64);
                put(out, *v);
            }
        }
    }

    /// Inverse of [`state_key`]; the program fixes the shape.
    pub fn decode_state(p: &Program, bytes: &[u8]) -> State {
        let mut i = 0;
        let cs = p
            .processes
            .iter()
            .map(|_| StateId(get(bytes, &mut i) as usize))
            .collect();
        let locals = p
            .processes
            .iter()
            .map(|q| q.locals.iter().map(|_| get(bytes, &mut i)).collect())
            .collect();
        let globals = p.shared.iter().map(|_| get(bytes, &mut i)).collect();
        let buffers = p
            .processes
            .iter()
            .map(|_| {
                let n = get(bytes, &mut i) as usize;
                (0..n)
                    .map(|_| {
                        let x = SharedId(get(bytes, &mut i) as usize);
                        (x, get(bytes, &mut i))
                    })
                    .collect()
            })
            .collect();
        State {
            cs,
            locals,
            globals,
            buffers,
        }
    }

    /// Encoding of `project(s)` without materializing it.
    pub fn projection_key(s: &State, nshared: usize, out: &mut Vec<u8>) {
        out.clear();
        put_common(out, &s.cs, &s.locals, &s.globals);
        let mut row = vec![None; nshared];
        for b in &s.buffers {
            row.iter_mut().for_each(|v| *v = None);
            for &(x, v) in b {
                row[x.0] = Some(v);
            }
            for v in &row {
                put_opt(out, *v);
            }
        }
    }

    /// Encoding of the `(Gm, Lm)` part only.
    pub fn memory_key(locals: &[Vec<Value>], globals: &[Value]) -> Box<[u8]> {
        let mut out = Vec::new();
        for row in locals {
            for v in row {
                put(&mut out, *v);
            }
        }
        for v in globals {
            put(&mut out, *v);
        }
        out.into_boxed_slice()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;

    pub(crate) const SB: &str = "shared x in {0..1} = 0; shared y in {0..1} = 0;
        process P1 { local l1 in {0..1} = 0; label a: x := 1; label b: l1 := y; }
        process P2 { local l2 in {0..1} = 0; label c: y := 1; label d: l2 := x; }";

    fn step(p: &Program, name: &str) -> Event {
        let label = p.label_by_name(name).unwrap();
        Event::Step {
            proc: p.label(label).proc,
            label,
        }
    }

    #[test]
    fn store_buffering_outcome() {
        let p = parse_program(SB).unwrap();
        let mut s = initial_state(&p);
        for l in ["a", "c", "b", "d"] {
            s = apply_event(&p, &s, 1, &step(&p, l)).unwrap();
        }
        assert_eq!(s.buffers[0], vec![(SharedId(0), 1)]);
        assert_eq!(s.buffers[1], vec![(SharedId(1), 1)]);
        assert_eq!(s.locals, vec![vec![0], vec![0]]);
    }

    #[test]
    fn full_buffer_disables_write_but_not_flush() {
        let p = parse_program(
            "shared x in {0..2} = 0; process P { label a: x := 1; label b: x := 2; }",
        )
        .unwrap();
        let s = apply_event(&p, &initial_state(&p), 1, &step(&p, "a")).unwrap();
        let succ = successors(&p, &s, 1);
        assert_eq!(succ.len(), 1);
        assert!(matches!(succ[0].0, Event::Flush { value: 1, .. }));
    }

    #[test]
    fn k_zero_writes_through() {
        let p = parse_program("shared x in {0..2} = 0; process P { label a: x := 2; }").unwrap();
        let mut out = Vec::new();
        successors_into(&p, &initial_state(&p), 0, &mut Diagnostics::default(), &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].rule, Rule::WriteThrough);
        assert_eq!(out[0].state.globals, vec![2]);
        assert!(out[0].state.buffers[0].is_empty());
    }

    #[test]
    fn buffered_read_sees_newest_entry() {
        let p = parse_program(
            "shared x in {0..2} = 0;
             process P { local l in {0..2}; label a: x := 1; label b: x := 2; label r: l := x; }",
        )
        .unwrap();
        let mut s = initial_state(&p);
        for l in ["a", "b"] {
            s = apply_event(&p, &s, 2, &step(&p, l)).unwrap();
        }
        let mut out = Vec::new();
        successors_into(&p, &s, 2, &mut Diagnostics::default(), &mut out);
        assert_eq!(out[0].rule, Rule::BRead);
        assert_eq!(out[0].state.locals[0][0], 2);
        let proj = project(&s, &p);
        assert_eq!(proj.last[0][0], Some(2));
    }

    #[test]
    fn domain_violation_disables_transition() {
        let p = parse_program(
            "shared x in {0..1} = 0; process P { local l in {0..3} = 3; label a: x := l; }",
        )
        .unwrap();
        let mut diag = Diagnostics::default();
        let mut out = Vec::new();
        successors_into(&p, &initial_state(&p), 1, &mut diag, &mut out);
        assert!(out.is_empty());
        assert_eq!(diag.domain_violations, 1);
    }

    #[test]
    fn division_by_zero_is_stuck() {
        let p = parse_program("process P { local l in {0..3} = 0; l := 1 / l; }").unwrap();
        let mut diag = Diagnostics::default();
        let mut out = Vec::new();
        successors_into(&p, &initial_state(&p), 1, &mut diag, &mut out);
        assert!(out.is_empty());
        assert_eq!(diag.eval_errors, 1);
    }

    #[test]
    fn codec_round_trips() {
        let p = parse_program(SB).unwrap();
        let mut s = initial_state(&p);
        s.buffers[1].push((SharedId(1), 1));
        s.locals[0][0] = 1;
        let mut key = Vec::new();
        codec::state_key(&s, &mut key);
        assert_eq!(codec::decode_state(&p, &key), s);
        let mut pk = Vec::new();
        codec::projection_key(&s, p.shared.len(), &mut pk);
        assert_eq!(&*project(&s, &p).key(), pk.as_slice());
    }
}
