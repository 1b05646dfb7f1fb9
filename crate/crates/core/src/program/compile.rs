//! Lowering of the parsed syntax tree to process automata.

use rustc_hash::{FxHashMap, FxHashSet};

use super::lexer::Pos;
use super::parser::{
    BodyAst, DeclAst, ExprAst, LabelAst, NameRef, ParseError, ProcessAst, ProgramAst, SimpleAst,
    SpecAst, Stmt,
};
use super::{
    validate, Expr, Instruction, Label, LabelId, LocalId, ProcId, Process, Program, SafetySpec,
    SharedId, StateId, Transition, Var, VarDecl,
};

pub(crate) fn compile(ast: ProgramAst) -> Result<Program, ParseError> {
    let shared: Vec<VarDecl> = ast.shared.iter().map(decl).collect();
    let shared_names: FxHashMap<&str, SharedId> = ast
        .shared
        .iter()
        .enumerate()
        .rev()
        .map(|(i, d)| (d.name.as_str(), SharedId(i)))
        .collect();

    let mut explicit: FxHashSet<String> = FxHashSet::default();
    for p in &ast.processes {
        collect_explicit_labels(p, &mut explicit);
    }

    let mut processes = Vec::new();
    let mut labels = Vec::new();
    for (pi, pa) in ast.processes.iter().enumerate() {
        let scope = Scope {
            proc: ProcId(pi),
            shared: &shared_names,
            locals: pa
                .locals
                .iter()
                .enumerate()
                .rev()
                .map(|(i, d)| (d.name.as_str(), LocalId(i)))
                .collect(),
        };
        let built = match &pa.body {
            BodyAst::Structured(stmts) => build_structured(&scope, stmts)?,
            BodyAst::Automaton { states, edges } => {
                let mut b = Built::default();
                let mut index: FxHashMap<&str, usize> = FxHashMap::default();
                for (i, (name, _)) in states.iter().enumerate() {
                    index.entry(name.as_str()).or_insert(i);
                    b.state_names.push(Some(name.clone()));
                }
                for e in edges {
                    let lookup = |(n, pos): &(String, Pos)| {
                        index
                            .get(n.as_str())
                            .copied()
                            .ok_or_else(|| ParseError::at(*pos, format!("undeclared state `{n}`")))
                    };
                    let from = lookup(&e.from)?;
                    let to = lookup(&e.to)?;
                    let ins = scope.simple(&e.body)?;
                    b.edges.push((from, label_name(&e.label), ins, to));
                }
                b
            }
        };
        let (process, proc_labels) =
            finish_process(pa, ProcId(pi), labels.len(), built, &mut explicit);
        processes.push(process);
        labels.extend(proc_labels);
    }

    let mut program = Program {
        shared,
        processes,
        labels,
        spec: SafetySpec::None,
    };
    let mut specs = ast.specs.iter();
    if let Some(first) = specs.next() {
        if let Some(second) = specs.next() {
            let pos = match second {
                SpecAst::Error(_, pos) | SpecAst::Assert { pos, .. } => *pos,
            };
            return Err(ParseError::at(pos, "only one specification clause is allowed"));
        }
        program.spec = resolve_spec(&program, first)?;
    }
    validate(&program)?;
    Ok(program)
}

fn decl(d: &DeclAst) -> VarDecl {
    VarDecl {
        name: d.name.clone(),
        domain: d.domain.clone(),
        init: d.init.unwrap_or(0),
    }
}

fn label_name(l: &Option<LabelAst>) -> Option<String> {
    l.as_ref().map(|l| l.name.clone())
}

fn collect_explicit_labels(p: &ProcessAst, out: &mut FxHashSet<String>) {
    fn walk(stmts: &[Stmt], out: &mut FxHashSet<String>) {
        for s in stmts {
            match s {
                Stmt::Simple { label, .. } => {
                    if let Some(l) = label {
                        out.insert(l.name.clone());
                    }
                }
                Stmt::While { body, .. } => walk(body, out),
                Stmt::If { then, els, .. } => {
                    walk(then, out);
                    walk(els, out);
                }
            }
        }
    }
    match &p.body {
        BodyAst::Structured(stmts) => walk(stmts, out),
        BodyAst::Automaton { edges, .. } => {
            for e in edges {
                if let Some(l) = &e.label {
                    out.insert(l.name.clone());
                }
            }
        }
    }
}

struct Scope<'a> {
    proc: ProcId,
    shared: &'a FxHashMap<&'a str, SharedId>,
    locals: FxHashMap<&'a str, LocalId>,
}

impl Scope<'_> {
    fn resolve(&self, n: &NameRef) -> Result<Var, ParseError> {
        if n.parts.len() != 1 {
            return Err(ParseError::at(
                n.pos,
                format!("qualified name `{}` is only allowed in assertions", n.parts.join(".")),
            ));
        }
        let name = n.parts[0].as_str();
        if let Some(l) = self.locals.get(name) {
            return Ok(Var::Local(self.proc, *l));
        }
        if let Some(x) = self.shared.get(name) {
            return Ok(Var::Shared(*x));
        }
        Err(ParseError::at(n.pos, format!("undeclared variable `{name}`")))
    }

    fn expr(&self, e: &ExprAst) -> Result<Expr<Var>, ParseError> {
        let mut err = None;
        let out = e.map_vars(&mut |n: &NameRef| match self.resolve(n) {
            Ok(v) => Expr::Var(v),
            Err(e) => {
                err.get_or_insert(e);
                Expr::Const(0)
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    fn simple(&self, s: &SimpleAst) -> Result<Instruction, ParseError> {
        Ok(match s {
            SimpleAst::Fence => Instruction::Fence,
            SimpleAst::Skip => Instruction::Assume(Expr::Const(1)),
            SimpleAst::Assume(e) => Instruction::Assume(self.expr(e)?),
            SimpleAst::Assign { target, pos, expr } => {
                let target_ref = NameRef {
                    parts: vec![target.clone()],
                    pos: *pos,
                };
                let rhs = self.expr(expr)?;
                match self.resolve(&target_ref)? {
                    Var::Shared(var) => Instruction::SharedWrite { var, expr: rhs },
                    Var::Local(_, local) => match rhs {
                        Expr::Var(Var::Shared(var)) => Instruction::SharedRead { local, var },
                        expr => Instruction::LocalAssign { local, expr },
                    },
                }
            }
        })
    }
}

#[derive(Default)]
struct Built {
    /// `None` for compiler-generated states.
    state_names: Vec<Option<String>>,
    edges: Vec<(usize, Option<String>, Instruction, usize)>,
}

struct Lowering<'s, 'a> {
    scope: &'s Scope<'a>,
    parent: Vec<usize>,
    edges: Vec<(usize, Option<String>, Instruction, usize)>,
}

impl Lowering<'_, '_> {
    fn fresh(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&self, mut s: usize) -> usize {
        while self.parent[s] != s {
            s = self.parent[s];
        }
        s
    }

    /// Identifies `from` with `into`; `from` must not have outgoing edges yet.
    fn merge(&mut self, from: usize, into: usize) {
        let (a, b) = (self.find(from), self.find(into));
        if a != b {
            self.parent[a] = b;
        }
    }

    fn edge(&mut self, from: usize, label: Option<String>, ins: Instruction) -> usize {
        let to = self.fresh();
        self.edges.push((from, label, ins, to));
        to
    }

    fn stmts(&mut self, stmts: &[Stmt], mut cur: usize) -> Result<usize, ParseError> {
        for s in stmts {
            cur = self.stmt(s, cur)?;
        }
        Ok(cur)
    }

    fn stmt(&mut self, s: &Stmt, cur: usize) -> Result<usize, ParseError> {
        match s {
            Stmt::Simple { label, body } => {
                let ins = self.scope.simple(body)?;
                Ok(self.edge(cur, label_name(label), ins))
            }
            Stmt::While { cond, body } => {
                let c = self.scope.expr(cond)?;
                if matches!(c, Expr::Const(v) if v != 0) {
                    let end = self.stmts(body, cur)?;
                    self.merge(end, cur);
                    return Ok(self.fresh());
                }
                let b0 = self.edge(cur, None, Instruction::Assume(c.clone()));
                let end = self.stmts(body, b0)?;
                self.merge(end, cur);
                Ok(self.edge(cur, None, Instruction::Assume(Expr::logical_not(c))))
            }
            Stmt::If { cond, then, els } => {
                let c = self.scope.expr(cond)?;
                let a0 = self.edge(cur, None, Instruction::Assume(c.clone()));
                let a_end = self.stmts(then, a0)?;
                let b0 = self.edge(cur, None, Instruction::Assume(Expr::logical_not(c)));
                let b_end = self.stmts(els, b0)?;
                self.merge(b_end, a_end);
                Ok(self.find(a_end))
            }
        }
    }
}

fn build_structured(scope: &Scope<'_>, stmts: &[Stmt]) -> Result<Built, ParseError> {
    let mut lw = Lowering {
        scope,
        parent: Vec::new(),
        edges: Vec::new(),
    };
    let init = lw.fresh();
    lw.stmts(stmts, init)?;

    let mut used = vec![false; lw.parent.len()];
    used[lw.find(init)] = true;
    for (from, _, _, to) in &lw.edges {
        used[lw.find(*from)] = true;
        used[lw.find(*to)] = true;
    }
    // Renumber surviving roots in creation order; the initial state stays first.
    let mut remap = vec![usize::MAX; lw.parent.len()];
    let mut n = 0;
    for s in 0..lw.parent.len() {
        if lw.find(s) == s && used[s] {
            remap[s] = n;
            n += 1;
        }
    }
    let edges = lw
        .edges
        .iter()
        .map(|(f, l, i, t)| (remap[lw.find(*f)], l.clone(), i.clone(), remap[lw.find(*t)]))
        .collect();
    Ok(Built {
        state_names: vec![None; n],
        edges,
    })
}

fn finish_process(
    pa: &ProcessAst,
    proc: ProcId,
    label_offset: usize,
    built: Built,
    taken: &mut FxHashSet<String>,
) -> (Process, Vec<Label>) {
    let mut labels = Vec::with_capacity(built.edges.len());
    let mut transitions = Vec::with_capacity(built.edges.len());
    let mut counter = 0usize;
    for (i, (from, name, ins, to)) in built.edges.into_iter().enumerate() {
        let name = name.unwrap_or_else(|| loop {
            counter += 1;
            let candidate = format!("{}.{}", pa.name, counter);
            if taken.insert(candidate.clone()) {
                break candidate;
            }
        });
        labels.push(Label { name, proc, ins });
        transitions.push(Transition {
            from: StateId(from),
            label: LabelId(label_offset + i),
            to: StateId(to),
        });
    }
    let label_names: FxHashSet<&str> = labels.iter().map(|l| l.name.as_str()).collect();
    let mut next = 0usize;
    let states = built
        .state_names
        .into_iter()
        .map(|n| {
            n.unwrap_or_else(|| loop {
                let candidate = format!("q{next}");
                next += 1;
                if !label_names.contains(candidate.as_str()) {
                    break candidate;
                }
            })
        })
        .collect();
    let locals = pa.locals.iter().map(decl).collect();
    (
        Process::new(pa.name.clone(), locals, states, StateId(0), transitions),
        labels,
    )
}

pub(crate) fn resolve_spec(p: &Program, spec: &SpecAst) -> Result<SafetySpec, ParseError> {
    match spec {
        SpecAst::Error(disjuncts, _) => {
            let mut tuples = Vec::new();
            for conj in disjuncts {
                let mut tuple = vec![None; p.processes.len()];
                for r in conj {
                    let proc = p.proc_by_name(&r.process).ok_or_else(|| {
                        ParseError::at(r.pos, format!("unknown process `{}`", r.process))
                    })?;
                    let q = resolve_location(p, proc, &r.target).ok_or_else(|| {
                        ParseError::at(
                            r.pos,
                            format!("`{}` is not a state or label of `{}`", r.target, r.process),
                        )
                    })?;
                    match tuple[proc.0] {
                        Some(prev) if prev != q => {
                            return Err(ParseError::at(
                                r.pos,
                                format!("conflicting locations for `{}`", r.process),
                            ))
                        }
                        _ => tuple[proc.0] = Some(q),
                    }
                }
                tuples.push(tuple);
            }
            Ok(SafetySpec::ErrorStates(tuples))
        }
        SpecAst::Assert { expr, terminal, .. } => {
            let mut err = None;
            let e = expr.map_vars(&mut |n: &NameRef| match resolve_global_name(p, n) {
                Ok(v) => Expr::Var(v),
                Err(e) => {
                    err.get_or_insert(e);
                    Expr::Const(0)
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok(SafetySpec::StateAssert {
                expr: e,
                terminal_only: *terminal,
            })
        }
    }
}

/// A state name, or the source state of a label belonging to `proc`.
fn resolve_location(p: &Program, proc: ProcId, target: &str) -> Option<StateId> {
    let process = p.process(proc);
    if let Some(q) = process.state_by_name(target) {
        return Some(q);
    }
    let label = p.label_by_name(target)?;
    if p.label(label).proc != proc {
        return None;
    }
    p.transition_of(label).map(|(_, t)| t.from)
}

fn resolve_global_name(p: &Program, n: &NameRef) -> Result<Var, ParseError> {
    match n.parts.as_slice() {
        [x] => p
            .shared_by_name(x)
            .map(Var::Shared)
            .ok_or_else(|| ParseError::at(n.pos, format!("undeclared shared variable `{x}`"))),
        [proc, local] => {
            let pid = p
                .proc_by_name(proc)
                .ok_or_else(|| ParseError::at(n.pos, format!("unknown process `{proc}`")))?;
            let lid = p.process(pid).local_by_name(local).ok_or_else(|| {
                ParseError::at(n.pos, format!("`{proc}` has no local `{local}`"))
            })?;
            Ok(Var::Local(pid, lid))
        }
        _ => Err(ParseError::at(
            n.pos,
            format!("malformed variable `{}`", n.parts.join(".")),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_program, Instruction};

    #[test]
    fn sb_program_in_program_order() {
        let p = parse_program(
            "shared x in {0..1} = 0; shared y in {0..1} = 0;
             process P1 { local l1 in {0..1} = 0; label a: x := 1; label b: l1 := y; }
             process P2 { local l2 in {0..1} = 0; label c: y := 1; label d: l2 := x; }",
        )
        .unwrap();
        let names: Vec<&str> = p.labels.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c", "d"]);
        assert!(p.labels[0].ins.is_write());
        assert!(p.labels[1].ins.is_read());
        assert_eq!(p.processes[0].states.len(), 3);
        assert_eq!(p.processes[0].transitions[1].from, p.processes[0].transitions[0].to);
    }

    #[test]
    fn empty_process_has_single_state() {
        let p = parse_program("process P { }").unwrap();
        assert_eq!(p.processes[0].states.len(), 1);
        assert!(p.processes[0].transitions.is_empty());
    }

    #[test]
    fn busy_wait_is_a_self_loop() {
        let p = parse_program(
            "process P { local f in {0..1} = 1; while (f = 1) { label r: f := 0; } label cs: skip; }",
        )
        .unwrap();
        let proc = &p.processes[0];
        // head -assume(f=1)-> b0 -r-> head ; head -assume(!(f=1))-> exit -cs-> end
        assert_eq!(proc.transitions.len(), 4);
        let r = p.label_by_name("r").unwrap();
        let (_, t) = p.transition_of(r).unwrap();
        assert_eq!(t.to, proc.initial);
        assert!(matches!(
            p.label(proc.transitions[0].label).ins,
            Instruction::Assume(_)
        ));
    }

    #[test]
    fn error_refs_resolve_labels_to_source_states() {
        let p = parse_program(
            "process P1 { label a: skip; label cs: skip; }
             process P2 { label b: skip; }
             error: P1@cs && P2@b;",
        )
        .unwrap();
        match &p.spec {
            super::SafetySpec::ErrorStates(t) => {
                assert_eq!(t.len(), 1);
                assert_eq!(t[0][0], Some(super::StateId(1)));
                assert_eq!(t[0][1], Some(super::StateId(0)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_variable_is_reported() {
        let err = parse_program("process P { local l in {0..1}; l := z; }").unwrap_err();
        assert!(err.to_string().contains("undeclared variable `z`"), "{err}");
    }
}
