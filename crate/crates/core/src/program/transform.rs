//! Rewriting shared writes so that every written expression is a literal.

use super::{Expr, Instruction, Label, LabelId, Program, StateId, Transition, Value, Var};

pub const DEFAULT_BRANCH_LIMIT: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("write `{label}` would expand into {branches} branches (limit {limit})")]
    TooManyBranches {
        label: String,
        branches: usize,
        limit: usize,
    },
}

/// Replaces each `x := e` with non-constant `e` by a guarded case split over
/// the valuations of the free locals of `e`:
/// `q -assume(l1=v1 && ..)-> q_v -x:=e[v]-> q'`.
///
/// Valuations for which `e` fails to evaluate or leaves the domain of `x` get
/// no branch, matching the operational semantics where such a write never
/// fires. Original states keep their ids; new states are appended.
pub fn constant_write_transform(p: &Program, branch_limit: usize) -> Result<Program, TransformError> {
    let mut processes = p.processes.clone();
    let mut labels: Vec<Label> = Vec::new();
    for proc in processes.iter_mut() {
        let mut transitions = Vec::new();
        let mut states = proc.states.clone();
        let mut fresh = 0usize;
        for t in &proc.transitions {
            let label = p.label(t.label);
            let (var, expr) = match &label.ins {
                Instruction::SharedWrite { var, expr } if !expr.is_const() => (*var, expr),
                _ => {
                    transitions.push(Transition {
                        label: LabelId(labels.len()),
                        ..*t
                    });
                    labels.push(label.clone());
                    continue;
                }
            };
            let fv = expr.free_vars();
            let domains: Vec<&[Value]> = fv
                .iter()
                .map(|v| match v {
                    Var::Local(q, l) => p.local_decl(*q, *l).domain.values(),
                    Var::Shared(x) => p.shared[x.0].domain.values(),
                })
                .collect();
            let branches = domains
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(d.len()))
                .unwrap_or(usize::MAX);
            if branches > branch_limit {
                return Err(TransformError::TooManyBranches {
                    label: label.name.clone(),
                    branches,
                    limit: branch_limit,
                });
            }
            let target = &p.shared[var.0].domain;
            let mut idx = vec![0usize; fv.len()];
            for n in 1..=branches {
                let vals: Vec<Value> = idx.iter().zip(&domains).map(|(&i, d)| d[i]).collect();
                let value = expr.eval(&mut |v: &Var| {
                    let pos = fv.iter().position(|w| w == v).expect("free var");
                    vals[pos]
                });
                if let Some(value) = value.ok().filter(|v| target.contains(*v)) {
                    let guard = fv
                        .iter()
                        .zip(&vals)
                        .map(|(v, c)| Expr::eq(Expr::Var(*v), Expr::Const(*c)))
                        .reduce(Expr::and)
                        .expect("non-constant write has free variables");
                    let mid = StateId(states.len());
                    let name = fresh_state(&states, &mut fresh);
                    states.push(name);
                    transitions.push(Transition {
                        from: t.from,
                        label: LabelId(labels.len()),
                        to: mid,
                    });
                    labels.push(Label {
                        name: format!("{}.g{n}", label.name),
                        proc: label.proc,
                        ins: Instruction::Assume(guard),
                    });
                    transitions.push(Transition {
                        from: mid,
                        label: LabelId(labels.len()),
                        to: t.to,
                    });
                    labels.push(Label {
                        name: format!("{}.w{n}", label.name),
                        proc: label.proc,
                        ins: Instruction::SharedWrite {
                            var,
                            expr: Expr::Const(value),
                        },
                    });
                }
                for (i, d) in idx.iter_mut().zip(&domains).rev() {
                    *i += 1;
                    if *i < d.len() {
                        break;
                    }
                    *i = 0;
                }
            }
        }
        proc.states = states;
        proc.transitions = transitions;
    }
    Ok(p.with_automata(processes, labels))
}

pub(crate) fn fresh_state(existing: &[String], counter: &mut usize) -> String {
    loop {
        let name = format!("s{counter}");
        *counter += 1;
        if !existing.contains(&name) {
            return name;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    #[test]
    fn splits_write_over_read_value() {
        let p = parse_program(
            "shared x in {1, 2} = 1; shared y in {0..5} = 0;
             process P { local l in {1, 2} = 1; label r: l := x; label w: y := l + 3; }",
        )
        .unwrap();
        let q = constant_write_transform(&p, DEFAULT_BRANCH_LIMIT).unwrap();
        let writes: Vec<String> = q
            .labels
            .iter()
            .filter(|l| l.ins.is_write())
            .map(|l| q.render_instruction(&l.ins, l.proc))
            .collect();
        assert_eq!(writes, ["y := 4", "y := 5"]);
        let guards: Vec<String> = q
            .labels
            .iter()
            .filter(|l| l.name.contains(".g"))
            .map(|l| q.render_instruction(&l.ins, l.proc))
            .collect();
        assert_eq!(guards, ["assume(l = 1)", "assume(l = 2)"]);
        assert_eq!(q.processes[0].states.len(), p.processes[0].states.len() + 2);
    }

    #[test]
    fn constant_writes_are_untouched() {
        let p = parse_program("shared x in {0..1} = 0; process P { label a: x := 1; }").unwrap();
        assert_eq!(constant_write_transform(&p, DEFAULT_BRANCH_LIMIT).unwrap(), p);
    }

    #[test]
    fn branch_limit_is_enforced() {
        let p = parse_program(
            "shared y in {0..20} = 0;
             process P { local a in {0..9}; local b in {0..9}; y := a + b; }",
        )
        .unwrap();
        let err = constant_write_transform(&p, DEFAULT_BRANCH_LIMIT).unwrap_err();
        assert_eq!(
            err,
            TransformError::TooManyBranches {
                label: "P.1".into(),
                branches: 100,
                limit: 64
            }
        );
    }
}
