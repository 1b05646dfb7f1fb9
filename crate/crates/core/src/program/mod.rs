//! Program representation: processes as labeled automata over a finite data
//! domain, plus variable declarations and a safety specification.
//!
//! A [`Program`] is immutable once built. Structured source text is compiled
//! into this form by [`parse_program`]; transformations such as
//! [`constant_write_transform`] and fence insertion produce new programs.

mod compile;
pub mod expr;
mod lexer;
mod parser;
mod print;
pub(crate) mod transform;
mod validate;

use std::fmt;

pub use expr::{BinOp, EvalError, Expr, UnOp};
pub use parser::{parse_program, parse_spec_clause, ParseError};
pub use print::print_program;
pub use transform::{constant_write_transform, TransformError, DEFAULT_BRANCH_LIMIT};
pub use validate::{validate, Diagnostic, ValidationError};

pub type Value = i64;

macro_rules! index_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

index_newtype!(
    /// Process identifier, the position of the process in declaration order.
    ProcId
);
index_newtype!(
    /// Shared variable, by declaration order.
    SharedId
);
index_newtype!(
    /// Local variable, indexed within its owning process.
    LocalId
);
index_newtype!(
    /// Control state, indexed within its owning process.
    StateId
);
index_newtype!(
    /// Program-wide transition label.
    LabelId
);

/// Finite, non-empty, sorted set of admissible values.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Domain {
    values: Vec<Value>,
}

impl Domain {
    pub fn range(lo: Value, hi: Value) -> Option<Self> {
        (lo <= hi).then(|| Domain {
            values: (lo..=hi).collect(),
        })
    }

    pub fn from_values(mut values: Vec<Value>) -> Option<Self> {
        values.sort_unstable();
        values.dedup();
        (!values.is_empty()).then_some(Domain { values })
    }

    pub fn contains(&self, v: Value) -> bool {
        self.values.binary_search(&v).is_ok()
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn is_contiguous(&self) -> bool {
        self.values.windows(2).all(|w| w[1] == w[0] + 1)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let first = self.values[0];
        let last = *self.values.last().unwrap();
        if self.values.len() > 1 && self.is_contiguous() {
            write!(f, "{{{first}..{last}}}")
        } else {
            let parts: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
            write!(f, "{{{}}}", parts.join(", "))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarDecl {
    pub name: String,
    pub domain: Domain,
    pub init: Value,
}

/// A variable reference inside an expression.
///
/// Instruction expressions may only mention locals of the executing process;
/// state assertions may mention anything. [`validate`] enforces the former.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Shared(SharedId),
    Local(ProcId, LocalId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// `x := e`
    SharedWrite { var: SharedId, expr: Expr<Var> },
    /// `l := x`
    SharedRead { local: LocalId, var: SharedId },
    /// `l := e`
    LocalAssign { local: LocalId, expr: Expr<Var> },
    /// `assume(e)`
    Assume(Expr<Var>),
    Fence,
}

impl Instruction {
    pub fn is_write(&self) -> bool {
        matches!(self, Instruction::SharedWrite { .. })
    }

    pub fn is_read(&self) -> bool {
        matches!(self, Instruction::SharedRead { .. })
    }

    pub fn is_fence(&self) -> bool {
        matches!(self, Instruction::Fence)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    pub name: String,
    pub proc: ProcId,
    pub ins: Instruction,
}

impl Label {
    /// The shared variable touched by the instruction, if any.
    pub fn loc(&self) -> Option<SharedId> {
        match &self.ins {
            Instruction::SharedWrite { var, .. } | Instruction::SharedRead { var, .. } => {
                Some(*var)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: StateId,
    pub label: LabelId,
    pub to: StateId,
}

#[derive(Clone, Debug)]
pub struct Process {
    pub name: String,
    pub locals: Vec<VarDecl>,
    pub states: Vec<String>,
    pub initial: StateId,
    pub transitions: Vec<Transition>,
    outgoing: Vec<Vec<usize>>,
}

impl PartialEq for Process {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.locals == other.locals
            && self.states == other.states
            && self.initial == other.initial
            && self.transitions == other.transitions
    }
}

impl Eq for Process {}

impl Process {
    pub fn new(
        name: impl Into<String>,
        locals: Vec<VarDecl>,
        states: Vec<String>,
        initial: StateId,
        transitions: Vec<Transition>,
    ) -> Self {
        let mut p = Process {
            name: name.into(),
            locals,
            states,
            initial,
            transitions,
            outgoing: Vec::new(),
        };
        p.reindex();
        p
    }

    fn reindex(&mut self) {
        let mut outgoing = vec![Vec::new(); self.states.len()];
        for (i, t) in self.transitions.iter().enumerate() {
            if let Some(slot) = outgoing.get_mut(t.from.0) {
                slot.push(i);
            }
        }
        self.outgoing = outgoing;
    }

    /// Transitions leaving `q`, in declaration order.
    pub fn outgoing(&self, q: StateId) -> impl Iterator<Item = &Transition> + '_ {
        self.outgoing
            .get(q.0)
            .into_iter()
            .flatten()
            .map(move |&i| &self.transitions[i])
    }

    pub fn is_final(&self, q: StateId) -> bool {
        self.outgoing.get(q.0).is_none_or(|v| v.is_empty())
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn local_by_name(&self, name: &str) -> Option<LocalId> {
        self.locals.iter().position(|s| s.name == name).map(LocalId)
    }
}

/// Control location reference for error specifications: `None` is a wildcard.
pub type ErrorTuple = Vec<Option<StateId>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SafetySpec {
    /// No property; every program is safe.
    None,
    /// Reaching any listed tuple of control states is an error.
    ErrorStates(Vec<ErrorTuple>),
    /// A predicate over shared and local memory that must hold.
    StateAssert {
        expr: Expr<Var>,
        /// Only checked in states with no successors.
        terminal_only: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub shared: Vec<VarDecl>,
    pub processes: Vec<Process>,
    pub labels: Vec<Label>,
    pub spec: SafetySpec,
}

impl Program {
    pub fn label(&self, id: LabelId) -> &Label {
        &self.labels[id.0]
    }

    pub fn process(&self, id: ProcId) -> &Process {
        &self.processes[id.0]
    }

    pub fn proc_ids(&self) -> impl Iterator<Item = ProcId> {
        (0..self.processes.len()).map(ProcId)
    }

    pub fn label_by_name(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l.name == name).map(LabelId)
    }

    pub fn proc_by_name(&self, name: &str) -> Option<ProcId> {
        self.processes.iter().position(|p| p.name == name).map(ProcId)
    }

    pub fn shared_by_name(&self, name: &str) -> Option<SharedId> {
        self.shared.iter().position(|s| s.name == name).map(SharedId)
    }

    /// The transition carrying `label` (labels are unique per transition).
    pub fn transition_of(&self, label: LabelId) -> Option<(ProcId, &Transition)> {
        let proc = self.labels.get(label.0)?.proc;
        self.processes
            .get(proc.0)?
            .transitions
            .iter()
            .find(|t| t.label == label)
            .map(|t| (proc, t))
    }

    pub fn local_decl(&self, proc: ProcId, local: LocalId) -> &VarDecl {
        &self.processes[proc.0].locals[local.0]
    }

    pub fn var_name(&self, v: &Var) -> String {
        match v {
            Var::Shared(x) => self.shared[x.0].name.clone(),
            Var::Local(p, l) => format!(
                "{}.{}",
                self.processes[p.0].name, self.processes[p.0].locals[l.0].name
            ),
        }
    }

    /// Renders an instruction expression with bare local names.
    pub fn render_local_expr(&self, e: &Expr<Var>) -> String {
        e.render(&|v: &Var| match v {
            Var::Shared(x) => self.shared[x.0].name.clone(),
            Var::Local(p, l) => self.processes[p.0].locals[l.0].name.clone(),
        })
    }

    pub fn render_instruction(&self, ins: &Instruction, proc: ProcId) -> String {
        let p = &self.processes[proc.0];
        match ins {
            Instruction::SharedWrite { var, expr } => {
                format!("{} := {}", self.shared[var.0].name, self.render_local_expr(expr))
            }
            Instruction::SharedRead { local, var } => {
                format!("{} := {}", p.locals[local.0].name, self.shared[var.0].name)
            }
            Instruction::LocalAssign { local, expr } => {
                format!("{} := {}", p.locals[local.0].name, self.render_local_expr(expr))
            }
            Instruction::Assume(e) => format!("assume({})", self.render_local_expr(e)),
            Instruction::Fence => "fence".to_string(),
        }
    }

    /// Replaces processes and labels, rebuilding the transition indexes.
    pub(crate) fn with_automata(&self, processes: Vec<Process>, labels: Vec<Label>) -> Program {
        let processes = processes
            .into_iter()
            .map(|mut p| {
                p.reindex();
                p
            })
            .collect();
        Program {
            shared: self.shared.clone(),
            processes,
            labels,
            spec: self.spec.clone(),
        }
    }

    pub fn with_spec(&self, spec: SafetySpec) -> Program {
        Program {
            spec,
            ..self.clone()
        }
    }
}
