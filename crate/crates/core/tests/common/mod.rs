//! Helpers shared by the integration tests: corpus loading, a seeded
//! generator of small straight-line programs and an SC interleaving oracle
//! written directly against the program model.

#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsobound_core::program::{expr::truthy, parse_program, Expr, Instruction, Program, Value, Var};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus(name: &str) -> Program {
    let path = corpus_dir().join(format!("{name}.tso"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_program(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub const CORPUS: &[&str] = &[
    "abp",
    "clh",
    "dekker",
    "dijkstra",
    "lamport",
    "peterson",
    "pgsql",
    "qrcu",
    "rwlock",
    "sb",
    "simple_dekker",
    "stale_locals",
    "szymanski",
];

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_procs: usize,
    pub max_labels: usize,
    /// Permit writes such as `x := l + 1` whose value may leave the domain.
    pub domain_unsafe: bool,
    pub fences: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_procs: 2,
            max_labels: 4,
            domain_unsafe: false,
            fences: true,
        }
    }
}

/// Source text of a random program: one or two shared variables, two or
/// three processes with at most `max_labels` labelled instructions each.
pub fn random_program_text(seed: u64, cfg: GenConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: i64 = rng.gen_range(2..=3);
    let shared: Vec<&str> = ["x", "y"][..rng.gen_range(1..=2)].to_vec();
    let nprocs = rng.gen_range(2..=cfg.max_procs.max(2));
    let mut out = String::new();
    for x in &shared {
        out.push_str(&format!("shared {x} in {{0..{}}} = 0;\n", d - 1));
    }
    for t in 0..nprocs {
        let locals: Vec<String> = (0..rng.gen_range(1..=2)).map(|i| format!("r{i}")).collect();
        out.push_str(&format!("process P{t} {{\n"));
        for l in &locals {
            out.push_str(&format!("    local {l} in {{0..{}}} = 0;\n", d - 1));
        }
        let n = rng.gen_range(1..=cfg.max_labels);
        for i in 0..n {
            let x = shared[rng.gen_range(0..shared.len())];
            let l = &locals[rng.gen_range(0..locals.len())];
            let c = rng.gen_range(0..d);
            let body = match rng.gen_range(0..10) {
                0..=3 => match rng.gen_range(0..4) {
                    0 => format!("{x} := {c}"),
                    1 => format!("{x} := {l}"),
                    2 if cfg.domain_unsafe => format!("{x} := {l} + 1"),
                    _ => format!("{x} := ({l} + 1) % {d}"),
                },
                4..=6 => format!("{l} := {x}"),
                7 => {
                    if rng.gen_bool(0.5) {
                        format!("{l} := {c}")
                    } else {
                        format!("{l} := ({l} + 1) % {d}")
                    }
                }
                8 => format!("assume({l} != {c})"),
                _ if cfg.fences => "fence".to_string(),
                _ => format!("{l} := {x}"),
            };
            out.push_str(&format!("    label {}{i}: {body};\n", (b'A' + t as u8) as char));
        }
        out.push_str("}\n");
    }
    out
}

pub fn random_program(seed: u64, cfg: GenConfig) -> Program {
    let text = random_program_text(seed, cfg);
    parse_program(&text).unwrap_or_else(|e| panic!("generated program does not parse: {e}\n{text}"))
}

/// `(cs, locals, globals)` with control states as raw indices.
pub type Config = (Vec<usize>, Vec<Vec<Value>>, Vec<Value>);

/// Every configuration reachable by interleaving whole instructions, each
/// write immediately visible.
pub fn sc_oracle(p: &Program) -> HashSet<Config> {
    let init: Config = (
        p.processes.iter().map(|q| q.initial.0).collect(),
        p.processes
            .iter()
            .map(|q| q.locals.iter().map(|d| d.init).collect())
            .collect(),
        p.shared.iter().map(|d| d.init).collect(),
    );
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(init.clone());
    queue.push_back(init);
    while let Some((cs, locals, globals)) = queue.pop_front() {
        for (t, proc) in p.processes.iter().enumerate() {
            for tr in proc.transitions.iter().filter(|tr| tr.from.0 == cs[t]) {
                let label = p.label(tr.label);
                let mine = &locals[t];
                let eval = |e: &Expr<Var>| {
                    e.eval(&mut |v| match v {
                        Var::Local(_, l) => mine[l.0],
                        Var::Shared(x) => globals[x.0],
                    })
                    .ok()
                };
                let mut next_locals = locals.clone();
                let mut next_globals = globals.clone();
                let ok = match &label.ins {
                    Instruction::SharedWrite { var, expr } => match eval(expr) {
                        Some(v) if p.shared[var.0].domain.contains(v) => {
                            next_globals[var.0] = v;
                            true
                        }
                        _ => false,
                    },
                    Instruction::SharedRead { local, var } => {
                        let v = globals[var.0];
                        if proc.locals[local.0].domain.contains(v) {
                            next_locals[t][local.0] = v;
                            true
                        } else {
                            false
                        }
                    }
                    Instruction::LocalAssign { local, expr } => match eval(expr) {
                        Some(v) if proc.locals[local.0].domain.contains(v) => {
                            next_locals[t][local.0] = v;
                            true
                        }
                        _ => false,
                    },
                    Instruction::Assume(e) => matches!(eval(e), Some(v) if truthy(v)),
                    Instruction::Fence => true,
                };
                if ok {
                    let mut next_cs = cs.clone();
                    next_cs[t] = tr.to.0;
                    let c = (next_cs, next_locals, next_globals);
                    if seen.insert(c.clone()) {
                        queue.push_back(c);
                    }
                }
            }
        }
    }
    seen
}
