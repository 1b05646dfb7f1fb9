//! Pretty-printer emitting the explicit automaton form of the DSL.

use std::fmt::Write;

use super::{Program, SafetySpec};

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.shared {
        let _ = writeln!(out, "shared {} in {} = {};", d.name, d.domain, d.init);
    }
    for (pi, proc) in p.processes.iter().enumerate() {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "process {} {{", proc.name);
        for d in &proc.locals {
            let _ = writeln!(out, "    local {} in {} = {};", d.name, d.domain, d.init);
        }
        // The initial state is listed first.
        let mut order: Vec<usize> = vec![proc.initial.0];
        order.extend((0..proc.states.len()).filter(|&i| i != proc.initial.0));
        let names: Vec<&str> = order.iter().map(|&i| proc.states[i].as_str()).collect();
        let _ = writeln!(out, "    states {};", names.join(", "));
        for t in &proc.transitions {
            let l = p.label(t.label);
            let _ = writeln!(
                out,
                "    {} -> {} label {}: {};",
                proc.states[t.from.0],
                proc.states[t.to.0],
                l.name,
                p.render_instruction(&l.ins, super::ProcId(pi))
            );
        }
        out.push_str("}\n");
    }
    match &p.spec {
        SafetySpec::None => {}
        SafetySpec::ErrorStates(tuples) => {
            let disjuncts: Vec<String> = tuples
                .iter()
                .map(|t| {
                    let atoms: Vec<String> = t
                        .iter()
                        .enumerate()
                        .filter_map(|(pi, q)| {
                            q.map(|q| {
                                let proc = &p.processes[pi];
                                format!("{}@{}", proc.name, proc.states[q.0])
                            })
                        })
                        .collect();
                    format!("({})", atoms.join(" && "))
                })
                .collect();
            let _ = writeln!(out, "\nerror: {};", disjuncts.join(" || "));
        }
        SafetySpec::StateAssert {
            expr,
            terminal_only,
        } => {
            let modifier = if *terminal_only { "@terminal " } else { "" };
            let _ = writeln!(
                out,
                "\nassert {modifier}({});",
                expr.render(&|v| p.var_name(v))
            );
        }
    }
    out
}
