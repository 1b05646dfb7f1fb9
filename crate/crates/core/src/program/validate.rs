//! Well-formedness checks. Every violated invariant yields one diagnostic.

use std::fmt;

use rustc_hash::FxHashSet;

use super::{Expr, Instruction, ProcId, Program, SafetySpec, Value, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    DuplicateName { kind: &'static str, name: String },
    InitOutOfDomain { var: String, init: Value },
    ConstantOutOfDomain { label: String, var: String, value: Value },
    SharedInExpression { label: String },
    ForeignLocal { label: String },
    DuplicateLabel { name: String },
    LabelUseCount { label: String, count: usize },
    LabelWrongProcess { label: String, process: String },
    BadState { process: String, index: usize },
    BadSharedVar { label: String },
    SpecArity { expected: usize, found: usize },
    SpecState { process: String, index: usize },
    SpecVariable { detail: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateName { kind, name } => write!(f, "duplicate {kind} `{name}`"),
            Diagnostic::InitOutOfDomain { var, init } => {
                write!(f, "initial value {init} of `{var}` is outside its domain")
            }
            Diagnostic::ConstantOutOfDomain { label, var, value } => write!(
                f,
                "label `{label}` assigns {value} to `{var}`, outside its domain"
            ),
            Diagnostic::SharedInExpression { label } => write!(
                f,
                "label `{label}`: expression mentions a shared variable"
            ),
            Diagnostic::ForeignLocal { label } => {
                write!(f, "label `{label}` uses a local variable of another process")
            }
            Diagnostic::DuplicateLabel { name } => write!(f, "duplicate label `{name}`"),
            Diagnostic::LabelUseCount { label, count } => write!(
                f,
                "label `{label}` is carried by {count} transitions, expected exactly one"
            ),
            Diagnostic::LabelWrongProcess { label, process } => {
                write!(f, "label `{label}` used by process `{process}` it does not belong to")
            }
            Diagnostic::BadState { process, index } => {
                write!(f, "process `{process}` refers to undeclared state #{index}")
            }
            Diagnostic::BadSharedVar { label } => {
                write!(f, "label `{label}` refers to an undeclared shared variable")
            }
            Diagnostic::SpecArity { expected, found } => write!(
                f,
                "error tuple has {found} entries, program has {expected} processes"
            ),
            Diagnostic::SpecState { process, index } => {
                write!(f, "error tuple refers to undeclared state #{index} of `{process}`")
            }
            Diagnostic::SpecVariable { detail } => write!(f, "assertion: {detail}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid program: {}", render(.diagnostics))]
pub struct ValidationError {
    pub diagnostics: Vec<Diagnostic>,
}

fn render(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

fn check_unique<'a>(
    kind: &'static str,
    names: impl IntoIterator<Item = &'a str>,
    out: &mut Vec<Diagnostic>,
) {
    let mut seen = FxHashSet::default();
    let mut reported = FxHashSet::default();
    for n in names {
        if !seen.insert(n) && reported.insert(n) {
            out.push(Diagnostic::DuplicateName {
                kind,
                name: n.to_string(),
            });
        }
    }
}

pub fn validate(p: &Program) -> Result<(), ValidationError> {
    let mut ds = Vec::new();

    check_unique("shared variable", p.shared.iter().map(|d| d.name.as_str()), &mut ds);
    check_unique("process", p.processes.iter().map(|d| d.name.as_str()), &mut ds);
    for d in &p.shared {
        if !d.domain.contains(d.init) {
            ds.push(Diagnostic::InitOutOfDomain {
                var: d.name.clone(),
                init: d.init,
            });
        }
    }
    for proc in &p.processes {
        check_unique("local variable", proc.locals.iter().map(|d| d.name.as_str()), &mut ds);
        check_unique("state", proc.states.iter().map(|s| s.as_str()), &mut ds);
        for d in &proc.locals {
            if !d.domain.contains(d.init) {
                ds.push(Diagnostic::InitOutOfDomain {
                    var: format!("{}.{}", proc.name, d.name),
                    init: d.init,
                });
            }
        }
    }

    let mut seen_names = FxHashSet::default();
    for l in &p.labels {
        if !seen_names.insert(l.name.as_str()) {
            ds.push(Diagnostic::DuplicateLabel {
                name: l.name.clone(),
            });
        }
    }

    let mut uses = vec![0usize; p.labels.len()];
    for (pi, proc) in p.processes.iter().enumerate() {
        let nstates = proc.states.len();
        if proc.initial.0 >= nstates {
            ds.push(Diagnostic::BadState {
                process: proc.name.clone(),
                index: proc.initial.0,
            });
        }
        for t in &proc.transitions {
            for q in [t.from, t.to] {
                if q.0 >= nstates {
                    ds.push(Diagnostic::BadState {
                        process: proc.name.clone(),
                        index: q.0,
                    });
                }
            }
            match p.labels.get(t.label.0) {
                Some(l) if l.proc.0 == pi => uses[t.label.0] += 1,
                Some(l) => {
                    uses[t.label.0] += 1;
                    ds.push(Diagnostic::LabelWrongProcess {
                        label: l.name.clone(),
                        process: proc.name.clone(),
                    });
                }
                None => ds.push(Diagnostic::LabelUseCount {
                    label: format!("#{}", t.label.0),
                    count: 0,
                }),
            }
        }
    }
    for (i, l) in p.labels.iter().enumerate() {
        if uses[i] != 1 {
            ds.push(Diagnostic::LabelUseCount {
                label: l.name.clone(),
                count: uses[i],
            });
        }
        check_instruction(p, l.proc, &l.name, &l.ins, &mut ds);
    }

    match &p.spec {
        SafetySpec::None => {}
        SafetySpec::ErrorStates(tuples) => {
            for t in tuples {
                if t.len() != p.processes.len() {
                    ds.push(Diagnostic::SpecArity {
                        expected: p.processes.len(),
                        found: t.len(),
                    });
                    continue;
                }
                for (proc, q) in p.processes.iter().zip(t) {
                    if let Some(q) = q {
                        if q.0 >= proc.states.len() {
                            ds.push(Diagnostic::SpecState {
                                process: proc.name.clone(),
                                index: q.0,
                            });
                        }
                    }
                }
            }
        }
        SafetySpec::StateAssert { expr, .. } => {
            expr.visit_vars(&mut |v| {
                if !var_exists(p, v) {
                    ds.push(Diagnostic::SpecVariable {
                        detail: format!("undeclared variable {v:?}"),
                    });
                }
            });
        }
    }

    if ds.is_empty() {
        Ok(())
    } else {
        Err(ValidationError { diagnostics: ds })
    }
}

fn var_exists(p: &Program, v: &Var) -> bool {
    match v {
        Var::Shared(x) => x.0 < p.shared.len(),
        Var::Local(pr, l) => p.processes.get(pr.0).is_some_and(|q| l.0 < q.locals.len()),
    }
}

fn check_instruction(
    p: &Program,
    proc: ProcId,
    name: &str,
    ins: &Instruction,
    ds: &mut Vec<Diagnostic>,
) {
    let Some(process) = p.processes.get(proc.0) else {
        ds.push(Diagnostic::LabelWrongProcess {
            label: name.to_string(),
            process: format!("#{}", proc.0),
        });
        return;
    };
    let local_ok = |l: super::LocalId| l.0 < process.locals.len();
    let check_expr = |e: &Expr<Var>, ds: &mut Vec<Diagnostic>| {
        let mut shared = false;
        let mut foreign = false;
        e.visit_vars(&mut |v| match v {
            Var::Shared(_) => shared = true,
            Var::Local(q, l) => {
                if *q != proc || !local_ok(*l) {
                    foreign = true
                }
            }
        });
        if shared {
            ds.push(Diagnostic::SharedInExpression {
                label: name.to_string(),
            });
        }
        if foreign {
            ds.push(Diagnostic::ForeignLocal {
                label: name.to_string(),
            });
        }
    };
    let shared_ok = |x: super::SharedId, ds: &mut Vec<Diagnostic>| {
        let ok = x.0 < p.shared.len();
        if !ok {
            ds.push(Diagnostic::BadSharedVar {
                label: name.to_string(),
            });
        }
        ok
    };
    match ins {
        Instruction::SharedWrite { var, expr } => {
            check_expr(expr, ds);
            if shared_ok(*var, ds) {
                if let Expr::Const(c) = expr {
                    let d = &p.shared[var.0];
                    if !d.domain.contains(*c) {
                        ds.push(Diagnostic::ConstantOutOfDomain {
                            label: name.to_string(),
                            var: d.name.clone(),
                            value: *c,
                        });
                    }
                }
            }
        }
        Instruction::SharedRead { local, var } => {
            shared_ok(*var, ds);
            if !local_ok(*local) {
                ds.push(Diagnostic::ForeignLocal {
                    label: name.to_string(),
                });
            }
        }
        Instruction::LocalAssign { local, expr } => {
            check_expr(expr, ds);
            if !local_ok(*local) {
                ds.push(Diagnostic::ForeignLocal {
                    label: name.to_string(),
                });
            } else if let Expr::Const(c) = expr {
                let d = &process.locals[local.0];
                if !d.domain.contains(*c) {
                    ds.push(Diagnostic::ConstantOutOfDomain {
                        label: name.to_string(),
                        var: format!("{}.{}", process.name, d.name),
                        value: *c,
                    });
                }
            }
        }
        Instruction::Assume(e) => check_expr(e, ds),
        Instruction::Fence => {}
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_program, ParseError};
    use super::*;

    fn diagnostics(src: &str) -> Vec<Diagnostic> {
        match parse_program(src) {
            Err(ParseError::Invalid(v)) => v.diagnostics,
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn assume_over_shared_is_rejected() {
        let ds = diagnostics("shared x in {0..1} = 0; process P { assume(x = 1); }");
        assert_eq!(
            ds,
            vec![Diagnostic::SharedInExpression {
                label: "P.1".into()
            }]
        );
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let ds = diagnostics(
            "shared x in {0..1} = 0;
             process P { label a: x := 1; }
             process Q { label a: x := 0; }",
        );
        assert!(ds.contains(&Diagnostic::DuplicateLabel { name: "a".into() }));
    }

    #[test]
    fn all_violations_are_reported() {
        let ds = diagnostics(
            "shared x in {0..1} = 5;
             process P { local l in {0..1} = 0; x := l + x; l := 7; }",
        );
        assert_eq!(ds.len(), 3, "{ds:?}");
    }

    #[test]
    fn label_on_two_transitions_is_rejected() {
        let mut p = parse_program(
            "shared x in {0..1} = 0; process P { label a: x := 1; label b: x := 0; }",
        )
        .unwrap();
        let t = p.processes[0].transitions[0];
        p.processes[0].transitions[1].label = t.label;
        let err = validate(&p).unwrap_err();
        assert!(err
            .diagnostics
            .iter()
            .any(|d| matches!(d, Diagnostic::LabelUseCount { count: 2, .. })));
    }
}
