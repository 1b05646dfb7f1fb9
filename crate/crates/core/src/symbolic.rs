//! Symbolic TSO_k: generation of SC-interpretable traces.
//!
//! Instead of values, buffers hold write labels. A buffered write `x := e`
//! first snapshots each free local `l` of `e` into an instance variable
//! `l_i` (`i = Li(t, l)`, cycling through `1..=k+1`) and enqueues a rewritten
//! label `x := e[l_i / l]`. Executing the emitted label sequence sequentially
//! (see [`sc_interpret`]) reproduces the memories of a TSO_k execution.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::sync::Mutex;

use rustc_hash::FxHashMap;

use crate::keyset::KeySet;
use crate::program::{
    expr::truthy, Expr, Instruction, LabelId, LocalId, ProcId, Program, SharedId, StateId, Value,
    Var,
};
use crate::tso::codec;

/// A variable of the extended (instance-carrying) variable set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymVar {
    Shared(SharedId),
    Local(ProcId, LocalId),
    /// Instance `idx` (1-based) of a local, reserved for snapshots.
    Instance(ProcId, LocalId, u8),
}

impl From<Var> for SymVar {
    fn from(v: Var) -> Self {
        match v {
            Var::Shared(x) => SymVar::Shared(x),
            Var::Local(t, l) => SymVar::Local(t, l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SymInstruction {
    Write { var: SharedId, expr: Expr<SymVar> },
    Read { local: LocalId, var: SharedId },
    Assign { target: SymVar, expr: Expr<SymVar> },
    Assume(Expr<SymVar>),
    Fence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymLabelId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SymLabelKind {
    Base(LabelId),
    /// `l_idx := l`
    Snapshot { local: LocalId, idx: u8 },
    /// A write whose free locals were replaced by the listed instances.
    RewrittenWrite { base: LabelId, instances: Vec<u8> },
    /// `l := e` for a read served by the buffered write `write`.
    InlinedRead { read: LabelId, write: SymLabelId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymLabel {
    pub name: String,
    pub proc: ProcId,
    pub kind: SymLabelKind,
    pub ins: SymInstruction,
}

#[derive(Default)]
struct RegistryInner {
    labels: Vec<SymLabel>,
    index: FxHashMap<(ProcId, SymLabelKind), SymLabelId>,
}

/// Program labels plus memoized synthesized labels. Synthesis is atomic and
/// idempotent, so a registry may be shared between threads.
pub struct LabelRegistry {
    inner: Mutex<RegistryInner>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SymbolicError {
    #[error("label #{0} is not registered")]
    UnknownLabel(u32),
}

fn lift(e: &Expr<Var>) -> Expr<SymVar> {
    e.map_vars(&mut |v: &Var| Expr::Var(SymVar::from(*v)))
}

impl LabelRegistry {
    /// A registry whose first labels are the program's, with equal indices.
    pub fn new(p: &Program) -> Self {
        let mut inner = RegistryInner::default();
        for (i, l) in p.labels.iter().enumerate() {
            let ins = match &l.ins {
                Instruction::SharedWrite { var, expr } => SymInstruction::Write {
                    var: *var,
                    expr: lift(expr),
                },
                Instruction::SharedRead { local, var } => SymInstruction::Read {
                    local: *local,
                    var: *var,
                },
                Instruction::LocalAssign { local, expr } => SymInstruction::Assign {
                    target: SymVar::Local(l.proc, *local),
                    expr: lift(expr),
                },
                Instruction::Assume(e) => SymInstruction::Assume(lift(e)),
                Instruction::Fence => SymInstruction::Fence,
            };
            let kind = SymLabelKind::Base(LabelId(i));
            inner
                .index
                .insert((l.proc, kind.clone()), SymLabelId(i as u32));
            inner.labels.push(SymLabel {
                name: l.name.clone(),
                proc: l.proc,
                kind,
                ins,
            });
        }
        LabelRegistry {
            inner: Mutex::new(inner),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: SymLabelId) -> Option<SymLabel> {
        self.inner.lock().unwrap().labels.get(id.0 as usize).cloned()
    }

    pub fn base(id: LabelId) -> SymLabelId {
        SymLabelId(id.0 as u32)
    }

    fn intern(
        &self,
        proc: ProcId,
        kind: SymLabelKind,
        make: impl FnOnce(&RegistryInner) -> (String, SymInstruction),
    ) -> SymLabelId {
        let mut inner = self.inner.lock().unwrap();
        if let Some(id) = inner.index.get(&(proc, kind.clone())) {
            return *id;
        }
        let (name, ins) = make(&inner);
        let id = SymLabelId(inner.labels.len() as u32);
        inner.labels.push(SymLabel {
            name,
            proc,
            kind: kind.clone(),
            ins,
        });
        inner.index.insert((proc, kind), id);
        id
    }

    pub fn snapshot(&self, p: &Program, proc: ProcId, local: LocalId, idx: u8) -> SymLabelId {
        self.intern(proc, SymLabelKind::Snapshot { local, idx }, |_| {
            let name = format!(
                "{}.{}_{}",
                p.process(proc).name,
                p.local_decl(proc, local).name,
                idx
            );
            let ins = SymInstruction::Assign {
                target: SymVar::Instance(proc, local, idx),
                expr: Expr::Var(SymVar::Local(proc, local)),
            };
            (name, ins)
        })
    }

    /// `base` rewritten with `instances[i]` for the i-th free local of its
    /// expression (in declaration order).
    pub fn rewritten(&self, p: &Program, base: LabelId, instances: Vec<u8>) -> SymLabelId {
        let label = p.label(base);
        let proc = label.proc;
        self.intern(
            proc,
            SymLabelKind::RewrittenWrite {
                base,
                instances: instances.clone(),
            },
            |_| {
                let Instruction::SharedWrite { var, expr } = &label.ins else {
                    panic!("rewritten label must be a write");
                };
                let fv = free_locals_in_decl_order(expr);
                let e = expr.map_vars(&mut |v: &Var| match v {
                    Var::Local(t, l) => {
                        let i = fv.iter().position(|w| w == l).expect("free local");
                        Expr::Var(SymVar::Instance(*t, *l, instances[i]))
                    }
                    Var::Shared(x) => Expr::Var(SymVar::Shared(*x)),
                });
                let suffix: Vec<String> = fv
                    .iter()
                    .zip(&instances)
                    .map(|(l, i)| format!("{}_{}", p.local_decl(proc, *l).name, i))
                    .collect();
                (
                    format!("{}[{}]", label.name, suffix.join(",")),
                    SymInstruction::Write { var: *var, expr: e },
                )
            },
        )
    }

    pub fn inlined(&self, p: &Program, read: LabelId, write: SymLabelId) -> SymLabelId {
        let label = p.label(read);
        let proc = label.proc;
        self.intern(proc, SymLabelKind::InlinedRead { read, write }, |inner| {
            let Instruction::SharedRead { local, .. } = &label.ins else {
                panic!("inlined label must be a read");
            };
            let w = &inner.labels[write.0 as usize];
            let SymInstruction::Write { expr, .. } = &w.ins else {
                panic!("buffered label must be a write");
            };
            (
                format!("{}<{}", label.name, w.name),
                SymInstruction::Assign {
                    target: SymVar::Local(proc, *local),
                    expr: expr.clone(),
                },
            )
        })
    }

    pub fn render_instruction(&self, p: &Program, id: SymLabelId) -> String {
        let l = self.get(id).expect("registered label");
        let name = |v: &SymVar| sym_var_name(p, v);
        match &l.ins {
            SymInstruction::Write { var, expr } => {
                format!("{} := {}", p.shared[var.0].name, expr.render(&name))
            }
            SymInstruction::Read { local, var } => format!(
                "{} := {}",
                p.local_decl(l.proc, *local).name,
                p.shared[var.0].name
            ),
            SymInstruction::Assign { target, expr } => {
                format!("{} := {}", name(target), expr.render(&name))
            }
            SymInstruction::Assume(e) => format!("assume({})", e.render(&name)),
            SymInstruction::Fence => "fence".to_string(),
        }
    }
}

fn sym_var_name(p: &Program, v: &SymVar) -> String {
    match v {
        SymVar::Shared(x) => p.shared[x.0].name.clone(),
        SymVar::Local(t, l) => p.local_decl(*t, *l).name.clone(),
        SymVar::Instance(t, l, i) => format!("{}_{}", p.local_decl(*t, *l).name, i),
    }
}

/// Free locals of a write expression, sorted by declaration order.
fn free_locals_in_decl_order(e: &Expr<Var>) -> Vec<LocalId> {
    let mut out: Vec<LocalId> = e
        .free_vars()
        .into_iter()
        .filter_map(|v| match v {
            Var::Local(_, l) => Some(l),
            Var::Shared(_) => None,
        })
        .collect();
    out.sort();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymState {
    pub cs: Vec<StateId>,
    /// `li[t][l]`, in `1..=k+1`.
    pub li: Vec<Vec<u8>>,
    pub buffers: Vec<Vec<(SharedId, SymLabelId)>>,
}

pub fn initial_sym_state(p: &Program) -> SymState {
    SymState {
        cs: p.processes.iter().map(|q| q.initial).collect(),
        li: p.processes.iter().map(|q| vec![1; q.locals.len()]).collect(),
        buffers: vec![Vec::new(); p.processes.len()],
    }
}

/// Successors of `s` paired with the labels they emit, ordered like the
/// operational successors.
pub fn symbolic_successors(
    p: &Program,
    s: &SymState,
    k: usize,
    reg: &LabelRegistry,
) -> Vec<(Vec<SymLabelId>, SymState)> {
    assert!(k < u8::MAX as usize, "buffer bound too large for instance indices");
    let mut out = Vec::new();
    for (ti, proc) in p.processes.iter().enumerate() {
        let t = ProcId(ti);
        let buffer = &s.buffers[ti];
        for tr in proc.outgoing(s.cs[ti]) {
            let label = p.label(tr.label);
            let mut next = s.clone();
            next.cs[ti] = tr.to;
            let base = LabelRegistry::base(tr.label);
            match &label.ins {
                Instruction::SharedWrite { var, expr } => {
                    if k == 0 {
                        out.push((vec![base], next));
                        continue;
                    }
                    if buffer.len() >= k {
                        continue;
                    }
                    let fv = free_locals_in_decl_order(expr);
                    let mut emitted = Vec::with_capacity(fv.len());
                    let mut instances = Vec::with_capacity(fv.len());
                    for l in &fv {
                        let i = s.li[ti][l.0];
                        emitted.push(reg.snapshot(p, t, *l, i));
                        instances.push(i);
                        next.li[ti][l.0] = i % (k as u8 + 1) + 1;
                    }
                    let written = if fv.is_empty() {
                        base
                    } else {
                        reg.rewritten(p, tr.label, instances)
                    };
                    next.buffers[ti].push((*var, written));
                    out.push((emitted, next));
                }
                Instruction::SharedRead { var, .. } => {
                    match buffer.iter().rev().find(|(x, _)| x == var) {
                        Some(&(_, w)) => out.push((vec![reg.inlined(p, tr.label, w)], next)),
                        None => out.push((vec![base], next)),
                    }
                }
                Instruction::LocalAssign { .. } | Instruction::Assume(_) => {
                    out.push((vec![base], next))
                }
                Instruction::Fence => {
                    if buffer.is_empty() {
                        next.li[ti].iter_mut().for_each(|i| *i = 1);
                        out.push((Vec::new(), next));
                    }
                }
            }
        }
        if let Some(&(_, w)) = buffer.first() {
            let mut next = s.clone();
            next.buffers[ti].remove(0);
            out.push((vec![w], next));
        }
    }
    out
}

/// Sequential store over the extended variable set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScStore {
    pub globals: Vec<Value>,
    pub locals: Vec<Vec<Value>>,
    /// `instances[t][l][i - 1]`
    pub instances: Vec<Vec<Vec<Value>>>,
}

impl ScStore {
    pub fn initial(p: &Program, k: usize) -> Self {
        ScStore {
            globals: p.shared.iter().map(|d| d.init).collect(),
            locals: p
                .processes
                .iter()
                .map(|q| q.locals.iter().map(|d| d.init).collect())
                .collect(),
            instances: p
                .processes
                .iter()
                .map(|q| q.locals.iter().map(|d| vec![d.init; k + 1]).collect())
                .collect(),
        }
    }

    fn read(&self, v: &SymVar) -> Value {
        match v {
            SymVar::Shared(x) => self.globals[x.0],
            SymVar::Local(t, l) => self.locals[t.0][l.0],
            SymVar::Instance(t, l, i) => self.instances[t.0][l.0][*i as usize - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Interpretation {
    Defined { globals: Vec<Value>, locals: Vec<Vec<Value>> },
    Undef,
}

/// Executes one label on `store`; `false` means the trace became infeasible
/// (failed assume, evaluation error, or a value outside the target domain).
pub fn sc_step(
    p: &Program,
    reg: &LabelRegistry,
    store: &mut ScStore,
    id: SymLabelId,
) -> Result<bool, SymbolicError> {
    let l = reg.get(id).ok_or(SymbolicError::UnknownLabel(id.0))?;
    let eval = |e: &Expr<SymVar>, store: &ScStore| e.eval(&mut |v: &SymVar| store.read(v)).ok();
    Ok(match &l.ins {
        SymInstruction::Write { var, expr } => match eval(expr, store) {
            Some(v) if p.shared[var.0].domain.contains(v) => {
                store.globals[var.0] = v;
                true
            }
            _ => false,
        },
        SymInstruction::Read { local, var } => {
            let v = store.globals[var.0];
            if p.local_decl(l.proc, *local).domain.contains(v) {
                store.locals[l.proc.0][local.0] = v;
                true
            } else {
                false
            }
        }
        SymInstruction::Assign { target, expr } => match (eval(expr, store), target) {
            (Some(v), SymVar::Local(t, lv)) => {
                if p.local_decl(*t, *lv).domain.contains(v) {
                    store.locals[t.0][lv.0] = v;
                    true
                } else {
                    false
                }
            }
            (Some(v), SymVar::Instance(t, lv, i)) => {
                store.instances[t.0][lv.0][*i as usize - 1] = v;
                true
            }
            (Some(v), SymVar::Shared(x)) => {
                store.globals[x.0] = v;
                true
            }
            (None, _) => false,
        },
        SymInstruction::Assume(e) => matches!(eval(e, store), Some(v) if truthy(v)),
        SymInstruction::Fence => true,
    })
}

/// Sequential interpretation of a label sequence from the initial values.
pub fn sc_interpret(
    p: &Program,
    reg: &LabelRegistry,
    k: usize,
    trace: &[SymLabelId],
) -> Result<Interpretation, SymbolicError> {
    let mut store = ScStore::initial(p, k);
    let mut defined = true;
    for id in trace {
        // Keep checking registration after infeasibility.
        if defined {
            defined = sc_step(p, reg, &mut store, *id)?;
        } else {
            reg.get(*id).ok_or(SymbolicError::UnknownLabel(id.0))?;
        }
    }
    Ok(if defined {
        Interpretation::Defined {
            globals: store.globals,
            locals: store.locals,
        }
    } else {
        Interpretation::Undef
    })
}

#[derive(Debug)]
pub struct SymbolicReach {
    /// Encoded `(Lm, Gm)` outcomes, see [`codec::memory_key`].
    pub outcomes: KeySet,
    /// Distinct symbolic states (without stores).
    pub sym_states: usize,
    /// Distinct (symbolic state, store) pairs.
    pub visited: usize,
    /// Symbolic states at which some buffered write mentions the instance
    /// that the next snapshot would overwrite.
    pub wraparound_violations: usize,
    /// False if the depth budget cut the exploration short.
    pub complete: bool,
}

fn sym_key(s: &SymState, store: &ScStore, out: &mut Vec<u8>) {
    use codec::put;
    out.clear();
    for q in &s.cs {
        put(out, q.0 as i64);
    }
    for row in &s.li {
        for i in row {
            put(out, i64::from(*i));
        }
    }
    for b in &s.buffers {
        put(out, b.len() as i64);
        for (x, l) in b {
            put(out, x.0 as i64);
            put(out, i64::from(l.0));
        }
    }
    for v in &store.globals {
        put(out, *v);
    }
    for row in &store.locals {
        for v in row {
            put(out, *v);
        }
    }
    for row in &store.instances {
        for inst in row {
            for v in inst {
                put(out, *v);
            }
        }
    }
}

fn sym_state_key(s: &SymState, out: &mut Vec<u8>) {
    use codec::put;
    out.clear();
    for q in &s.cs {
        put(out, q.0 as i64);
    }
    for row in &s.li {
        for i in row {
            put(out, i64::from(*i));
        }
    }
    for b in &s.buffers {
        put(out, b.len() as i64);
        for (x, l) in b {
            put(out, x.0 as i64);
            put(out, i64::from(l.0));
        }
    }
}

/// No buffered write of process `t` mentions `l_{Li(t,l)}`.
pub fn wraparound_invariant_holds(s: &SymState, reg: &LabelRegistry) -> bool {
    s.buffers.iter().enumerate().all(|(ti, buf)| {
        buf.iter().all(|(_, w)| {
            let label = reg.get(*w).expect("registered");
            let SymInstruction::Write { expr, .. } = &label.ins else {
                return false;
            };
            let mut ok = true;
            expr.visit_vars(&mut |v| {
                if let SymVar::Instance(t, l, i) = v {
                    if t.0 == ti && s.li[ti][l.0] == *i {
                        ok = false;
                    }
                }
            });
            ok
        })
    })
}

/// Explores symbolic states together with the sequential store of the trace
/// that reached them, collecting the `(Gm, Lm)` of every feasible trace.
pub fn symbolic_reach(
    p: &Program,
    k: usize,
    depth_budget: usize,
    reg: &LabelRegistry,
) -> Result<SymbolicReach, SymbolicError> {
    let mut visited = KeySet::new();
    let mut sym_states = KeySet::new();
    let mut outcomes = KeySet::new();
    let mut wraparound_violations = 0;
    let mut complete = true;
    let mut key = Vec::new();
    let mut queue: VecDeque<(SymState, ScStore, usize)> = VecDeque::new();

    let mut admit = |s: &SymState,
                     store: &ScStore,
                     visited: &mut KeySet,
                     outcomes: &mut KeySet,
                     key: &mut Vec<u8>|
     -> bool {
        sym_key(s, store, key);
        if !visited.insert(key).1 {
            return false;
        }
        sym_state_key(s, key);
        if sym_states.insert(key).1 && !wraparound_invariant_holds(s, reg) {
            wraparound_violations += 1;
        }
        outcomes.insert(&codec::memory_key(&store.locals, &store.globals));
        true
    };

    let s0 = initial_sym_state(p);
    let st0 = ScStore::initial(p, k);
    admit(&s0, &st0, &mut visited, &mut outcomes, &mut key);
    queue.push_back((s0, st0, 0));

    while let Some((s, store, depth)) = queue.pop_front() {
        if depth >= depth_budget {
            complete = false;
            continue;
        }
        for (emitted, next) in symbolic_successors(p, &s, k, reg) {
            let mut st = store.clone();
            let mut feasible = true;
            for id in &emitted {
                if !sc_step(p, reg, &mut st, *id)? {
                    feasible = false;
                    break;
                }
            }
            if feasible && admit(&next, &st, &mut visited, &mut outcomes, &mut key) {
                queue.push_back((next, st, depth + 1));
            }
        }
    }
    Ok(SymbolicReach {
        outcomes,
        sym_states: sym_states.len(),
        visited: visited.len(),
        wraparound_violations,
        complete,
    })
}

/// Textual trace automaton over symbolic states:
///
/// ```text
/// init s0
/// s0 -> s1 : a
/// s1 -> s2 : P1.l_1
/// label a : x := 1
/// ```
///
/// Transitions emitting several labels list them space-separated; fences
/// emit `-`. Label lines give the instruction of every label used.
pub fn export_trace_automaton(
    p: &Program,
    k: usize,
    reg: &LabelRegistry,
    state_budget: usize,
) -> Result<String, ExportError> {
    let mut ids = KeySet::new();
    let mut key = Vec::new();
    let s0 = initial_sym_state(p);
    sym_state_key(&s0, &mut key);
    ids.insert(&key);
    let mut queue = VecDeque::from([(0usize, s0)]);
    let mut out = String::from("init s0\n");
    let mut used = Vec::new();
    while let Some((id, s)) = queue.pop_front() {
        for (emitted, next) in symbolic_successors(p, &s, k, reg) {
            sym_state_key(&next, &mut key);
            let (nid, fresh) = ids.insert(&key);
            if fresh {
                if ids.len() > state_budget {
                    return Err(ExportError::Budget(state_budget));
                }
                queue.push_back((nid, next));
            }
            let names: Vec<String> = emitted
                .iter()
                .map(|l| reg.get(*l).expect("registered").name)
                .collect();
            used.extend(emitted);
            let text = if names.is_empty() {
                "-".to_string()
            } else {
                names.join(" ")
            };
            let _ = writeln!(out, "s{id} -> s{nid} : {text}");
        }
    }
    used.sort();
    used.dedup();
    for l in used {
        let label = reg.get(l).expect("registered");
        let _ = writeln!(
            out,
            "label {} : {}",
            label.name,
            reg.render_instruction(p, l)
        );
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExportError {
    #[error("trace automaton exceeds {0} states")]
    Budget(usize),
}

impl fmt::Display for SymLabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;

    pub(crate) const STALE_LOCALS: &str = "shared x in {0..5} = 0; shared y in {0..5} = 0;
        process P1 { local l in {0..5} = 0;
            label a: l := 2; label b: y := l + 1; label c: l := x; }
        process P2 { local m in {0..5} = 0;
            label d: m := 3; label e: x := m + 2; label f: m := y; }";

    fn lbl(p: &Program, n: &str) -> LabelId {
        p.label_by_name(n).unwrap()
    }

    #[test]
    fn snapshot_and_rewrite_are_memoized() {
        let p = parse_program(STALE_LOCALS).unwrap();
        let reg = LabelRegistry::new(&p);
        let n = reg.len();
        let a = reg.snapshot(&p, ProcId(0), LocalId(0), 1);
        let b = reg.snapshot(&p, ProcId(0), LocalId(0), 1);
        assert_eq!(a, b);
        let w1 = reg.rewritten(&p, lbl(&p, "b"), vec![1]);
        let w2 = reg.rewritten(&p, lbl(&p, "b"), vec![1]);
        assert_eq!(w1, w2);
        assert_eq!(reg.len(), n + 2);
        assert_eq!(reg.render_instruction(&p, w1), "y := l_1 + 1");
        assert_eq!(reg.render_instruction(&p, a), "l_1 := l");
    }

    #[test]
    fn sci_example_from_definition() {
        let p = parse_program(
            "shared x in {0..5} = 0; shared y in {0..5} = 0;
             process P { local l in {0..5} = 0;
                 label a: l := 3; label b: x := l + 2; label c: y := 2; }",
        )
        .unwrap();
        let reg = LabelRegistry::new(&p);
        let trace: Vec<SymLabelId> = ["a", "b", "c"]
            .iter()
            .map(|n| LabelRegistry::base(lbl(&p, n)))
            .collect();
        match sc_interpret(&p, &reg, 1, &trace).unwrap() {
            Interpretation::Defined { globals, locals } => {
                assert_eq!(globals, vec![5, 2]);
                assert_eq!(locals, vec![vec![3]]);
            }
            Interpretation::Undef => panic!("defined trace"),
        }
    }

    #[test]
    fn false_assume_is_undef_and_unknown_label_is_error() {
        let p = parse_program("process P { assume(false); }").unwrap();
        let reg = LabelRegistry::new(&p);
        assert_eq!(
            sc_interpret(&p, &reg, 1, &[SymLabelId(0)]).unwrap(),
            Interpretation::Undef
        );
        assert_eq!(
            sc_interpret(&p, &reg, 1, &[SymLabelId(7)]),
            Err(SymbolicError::UnknownLabel(7))
        );
    }

    #[test]
    fn constant_write_emits_nothing_and_buffers_base_label() {
        let p = parse_program("shared x in {0..5} = 0; process P { label a: x := 5; }").unwrap();
        let reg = LabelRegistry::new(&p);
        let succ = symbolic_successors(&p, &initial_sym_state(&p), 1, &reg);
        assert_eq!(succ.len(), 1);
        assert!(succ[0].0.is_empty());
        assert_eq!(succ[0].1.buffers[0], vec![(SharedId(0), SymLabelId(0))]);
    }

    #[test]
    fn instance_index_wraps() {
        let p = parse_program(
            "shared x in {0..5} = 0; process P { local l in {0..5}; label a: x := l; }",
        )
        .unwrap();
        let reg = LabelRegistry::new(&p);
        let k = 2;
        let mut s = initial_sym_state(&p);
        s.li[0][0] = (k + 1) as u8;
        let succ = symbolic_successors(&p, &s, k, &reg);
        assert_eq!(succ[0].1.li[0][0], 1);
    }

    #[test]
    fn fence_resets_instances() {
        let p = parse_program(
            "shared x in {0..5} = 0;
             process P { local l in {0..5}; label a: x := l; label f: fence; }",
        )
        .unwrap();
        let reg = LabelRegistry::new(&p);
        let mut s = initial_sym_state(&p);
        let (_, s1) = symbolic_successors(&p, &s, 1, &reg).remove(0);
        assert_eq!(s1.li[0][0], 2);
        s = s1;
        // Flush, then fence.
        let flushed = symbolic_successors(&p, &s, 1, &reg)
            .into_iter()
            .find(|(e, _)| e.len() == 1)
            .unwrap()
            .1;
        let (emitted, fenced) = symbolic_successors(&p, &flushed, 1, &reg).remove(0);
        assert!(emitted.is_empty());
        assert_eq!(fenced.li[0][0], 1);
    }

    #[test]
    fn export_lists_transitions_and_labels() {
        let p = parse_program(STALE_LOCALS).unwrap();
        let reg = LabelRegistry::new(&p);
        let text = export_trace_automaton(&p, 1, &reg, 10_000).unwrap();
        assert!(text.starts_with("init s0\n"));
        assert!(text.contains("label b[l_1] : y := l_1 + 1"), "{text}");
    }
}
