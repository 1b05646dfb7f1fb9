//! Recursive-descent parser for the program DSL.
//!
//! ```text
//! program   := item*
//! item      := shared | process | spec
//! shared    := "shared" IDENT "in" domain ("=" INT)? ";"
//! domain    := "{" INT ".." INT "}" | "{" INT ("," INT)* "}"
//! process   := "process" IDENT "{" local* (automaton | stmt*) "}"
//! local     := "local" IDENT "in" domain ("=" INT)? ";"
//! automaton := "states" IDENT ("," IDENT)* ";" edge*
//! edge      := IDENT "->" IDENT ("label" NAME ":")? simple ";"
//! stmt      := ("label" NAME ":")? simple ";"
//!            | "while" "(" expr ")" (block | ";")
//!            | "if" "(" expr ")" block ("else" (block | if))?
//! simple    := IDENT ":=" expr | "assume" "(" expr ")" | "fence" | "skip"
//! spec      := "error" ":" disj ";" | "assert" "@terminal"? "(" expr ")" ";"
//! disj      := conj ("||" conj)*      conj := atom ("&&" atom)*
//! atom      := IDENT "@" NAME | "(" disj ")"
//! NAME      := (IDENT | INT) ("." (IDENT | INT))*
//! ```
//!
//! Expressions use the usual precedence (`||` < `&&` < comparisons <
//! `+ -` < `* / %` < unary `- !`); `=`/`==`, `&`/`&&` and `|`/`||` are
//! synonyms. `true` and `false` denote `1` and `0`.

use super::compile::{compile, resolve_spec};
use super::lexer::{tokenize, Pos, Spanned, Tok};
use super::{BinOp, Domain, Expr, Program, SafetySpec, UnOp, ValidationError, Value};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl ParseError {
    pub(crate) fn at(pos: Pos, msg: impl Into<String>) -> Self {
        ParseError::Syntax {
            line: pos.line,
            col: pos.col,
            msg: msg.into(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "shared", "local", "process", "in", "label", "assume", "fence", "skip", "while", "if",
    "else", "error", "assert", "states", "true", "false",
];

/// A possibly dotted name occurring in an expression (`x`, `P1.l`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct NameRef {
    pub parts: Vec<String>,
    pub pos: Pos,
}

pub(crate) type ExprAst = Expr<NameRef>;

#[derive(Debug)]
pub(crate) struct DeclAst {
    pub name: String,
    pub domain: Domain,
    pub init: Option<Value>,
}

#[derive(Debug)]
pub(crate) enum SimpleAst {
    Assign {
        target: String,
        pos: Pos,
        expr: ExprAst,
    },
    Assume(ExprAst),
    Fence,
    Skip,
}

#[derive(Debug)]
pub(crate) struct LabelAst {
    pub name: String,
}

#[derive(Debug)]
pub(crate) enum Stmt {
    Simple {
        label: Option<LabelAst>,
        body: SimpleAst,
    },
    While {
        cond: ExprAst,
        body: Vec<Stmt>,
    },
    If {
        cond: ExprAst,
        then: Vec<Stmt>,
        els: Vec<Stmt>,
    },
}

#[derive(Debug)]
pub(crate) struct EdgeAst {
    pub from: (String, Pos),
    pub to: (String, Pos),
    pub label: Option<LabelAst>,
    pub body: SimpleAst,
}

#[derive(Debug)]
pub(crate) enum BodyAst {
    Structured(Vec<Stmt>),
    Automaton {
        states: Vec<(String, Pos)>,
        edges: Vec<EdgeAst>,
    },
}

#[derive(Debug)]
pub(crate) struct ProcessAst {
    pub name: String,
    pub locals: Vec<DeclAst>,
    pub body: BodyAst,
}

#[derive(Debug)]
pub(crate) struct LocRef {
    pub process: String,
    pub target: String,
    pub pos: Pos,
}

#[derive(Debug)]
pub(crate) enum SpecAst {
    /// Disjunction of conjunctions.
    Error(Vec<Vec<LocRef>>, Pos),
    Assert {
        expr: ExprAst,
        terminal: bool,
        pos: Pos,
    },
}

#[derive(Debug, Default)]
pub(crate) struct ProgramAst {
    pub shared: Vec<DeclAst>,
    pub processes: Vec<ProcessAst>,
    pub specs: Vec<SpecAst>,
}

/// Parses, compiles and validates a program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut parser = Parser::new(text)?;
    let ast = parser.program()?;
    compile(ast)
}

/// Parses a standalone `error: ...;` or `assert ...;` clause against `p`.
pub fn parse_spec_clause(p: &Program, text: &str) -> Result<SafetySpec, ParseError> {
    let mut parser = Parser::new(text)?;
    let spec = parser.spec()?;
    parser.expect(&Tok::Eof)?;
    resolve_spec(p, &spec)
}

struct Parser {
    toks: Vec<Spanned>,
    i: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ParseError> {
        let toks = tokenize(text).map_err(|(pos, msg)| ParseError::at(pos, msg))?;
        Ok(Parser { toks, i: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let j = (self.i + n).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn unexpected<T>(&self, what: &str) -> Result<T, ParseError> {
        Err(ParseError::at(
            self.pos(),
            format!("expected {what}, found {}", self.peek().describe()),
        ))
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            let what = match t {
                Tok::Eof => "end of input".to_string(),
                other => other.describe(),
            };
            self.unexpected(&what)
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok((s, pos))
            }
            _ => self.unexpected("identifier"),
        }
    }

    /// Dotted label name; segments may be identifiers or integers.
    fn name(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        let mut out = self.name_segment()?;
        while self.peek() == &Tok::Dot {
            self.advance();
            out.push('.');
            out.push_str(&self.name_segment()?);
        }
        Ok((out, pos))
    }

    fn name_segment(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            Tok::Int(v) => {
                self.advance();
                Ok(v.to_string())
            }
            _ => self.unexpected("name"),
        }
    }

    fn int(&mut self) -> Result<Value, ParseError> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(if neg { -v } else { v })
            }
            _ => self.unexpected("integer"),
        }
    }

    fn program(&mut self) -> Result<ProgramAst, ParseError> {
        let mut ast = ProgramAst::default();
        loop {
            if self.peek() == &Tok::Eof {
                return Ok(ast);
            }
            if self.eat_kw("shared") {
                ast.shared.push(self.decl_rest()?);
            } else if self.is_kw("process") {
                ast.processes.push(self.process()?);
            } else if self.is_kw("error") || self.is_kw("assert") {
                ast.specs.push(self.spec()?);
            } else {
                return self.unexpected("`shared`, `process`, `error` or `assert`");
            }
        }
    }

    fn decl_rest(&mut self) -> Result<DeclAst, ParseError> {
        let (name, _) = self.ident()?;
        self.expect_kw("in")?;
        let domain = self.domain()?;
        let init = if self.eat(&Tok::Eq) {
            Some(self.int()?)
        } else {
            None
        };
        self.expect(&Tok::Semi)?;
        Ok(DeclAst {
            name,
            domain,
            init,
        })
    }

    fn domain(&mut self) -> Result<Domain, ParseError> {
        let pos = self.pos();
        self.expect(&Tok::LBrace)?;
        let first = self.int()?;
        if self.eat(&Tok::DotDot) {
            let last = self.int()?;
            self.expect(&Tok::RBrace)?;
            return Domain::range(first, last)
                .ok_or_else(|| ParseError::at(pos, format!("empty domain {{{first}..{last}}}")));
        }
        let mut values = vec![first];
        while self.eat(&Tok::Comma) {
            values.push(self.int()?);
        }
        self.expect(&Tok::RBrace)?;
        Ok(Domain::from_values(values).expect("non-empty"))
    }

    fn process(&mut self) -> Result<ProcessAst, ParseError> {
        self.expect_kw("process")?;
        let (name, _) = self.ident()?;
        self.expect(&Tok::LBrace)?;
        let mut locals = Vec::new();
        while self.eat_kw("local") {
            locals.push(self.decl_rest()?);
        }
        let body = if self.eat_kw("states") {
            let mut states = vec![self.ident()?];
            while self.eat(&Tok::Comma) {
                states.push(self.ident()?);
            }
            self.expect(&Tok::Semi)?;
            let mut edges = Vec::new();
            while self.peek() != &Tok::RBrace {
                edges.push(self.edge()?);
            }
            BodyAst::Automaton { states, edges }
        } else {
            BodyAst::Structured(self.stmts_until_rbrace()?)
        };
        self.expect(&Tok::RBrace)?;
        Ok(ProcessAst {
            name,
            locals,
            body,
        })
    }

    fn edge(&mut self) -> Result<EdgeAst, ParseError> {
        let from = self.ident()?;
        self.expect(&Tok::Arrow)?;
        let to = self.ident()?;
        let label = self.opt_label()?;
        let body = self.simple()?;
        self.expect(&Tok::Semi)?;
        Ok(EdgeAst {
            from,
            to,
            label,
            body,
        })
    }

    fn opt_label(&mut self) -> Result<Option<LabelAst>, ParseError> {
        if !self.eat_kw("label") {
            return Ok(None);
        }
        let (name, _) = self.name()?;
        self.expect(&Tok::Colon)?;
        Ok(Some(LabelAst { name }))
    }

    fn stmts_until_rbrace(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while self.peek() != &Tok::RBrace {
            if self.peek() == &Tok::Eof {
                return self.unexpected("`}`");
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(&Tok::LBrace)?;
        let body = self.stmts_until_rbrace()?;
        self.expect(&Tok::RBrace)?;
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        if self.eat_kw("while") {
            let cond = self.paren_expr()?;
            let body = if self.eat(&Tok::Semi) {
                Vec::new()
            } else {
                self.block()?
            };
            return Ok(Stmt::While { cond, body });
        }
        if self.is_kw("if") {
            return self.if_stmt();
        }
        let label = self.opt_label()?;
        let body = self.simple()?;
        self.expect(&Tok::Semi)?;
        Ok(Stmt::Simple { label, body })
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        self.expect_kw("if")?;
        let cond = self.paren_expr()?;
        let then = self.block()?;
        let els = if self.eat_kw("else") {
            if self.is_kw("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If { cond, then, els })
    }

    fn simple(&mut self) -> Result<SimpleAst, ParseError> {
        if self.eat_kw("assume") {
            return Ok(SimpleAst::Assume(self.paren_expr()?));
        }
        if self.eat_kw("fence") {
            return Ok(SimpleAst::Fence);
        }
        if self.eat_kw("skip") {
            return Ok(SimpleAst::Skip);
        }
        if !matches!(self.peek(), Tok::Ident(_)) || self.peek_at(1) != &Tok::Assign {
            return self.unexpected("statement");
        }
        let (target, pos) = self.ident()?;
        self.expect(&Tok::Assign)?;
        let expr = self.expr()?;
        Ok(SimpleAst::Assign { target, pos, expr })
    }

    fn paren_expr(&mut self) -> Result<ExprAst, ParseError> {
        self.expect(&Tok::LParen)?;
        let e = self.expr()?;
        self.expect(&Tok::RParen)?;
        Ok(e)
    }

    fn spec(&mut self) -> Result<SpecAst, ParseError> {
        let pos = self.pos();
        if self.eat_kw("error") {
            self.expect(&Tok::Colon)?;
            let d = self.loc_disj()?;
            self.expect(&Tok::Semi)?;
            return Ok(SpecAst::Error(d, pos));
        }
        if self.eat_kw("assert") {
            let terminal = if self.eat(&Tok::At) {
                let (kw, kpos) = self.name()?;
                if kw != "terminal" {
                    return Err(ParseError::at(kpos, format!("unknown modifier `@{kw}`")));
                }
                true
            } else {
                false
            };
            let expr = self.paren_expr()?;
            self.expect(&Tok::Semi)?;
            return Ok(SpecAst::Assert {
                expr,
                terminal,
                pos,
            });
        }
        self.unexpected("`error` or `assert`")
    }

    fn loc_disj(&mut self) -> Result<Vec<Vec<LocRef>>, ParseError> {
        let mut out = self.loc_conj()?;
        while self.eat(&Tok::Or) {
            let rhs = self.loc_conj()?;
            out.extend(rhs);
        }
        Ok(out)
    }

    fn loc_conj(&mut self) -> Result<Vec<Vec<LocRef>>, ParseError> {
        let mut acc = self.loc_atom()?;
        while self.eat(&Tok::And) {
            let rhs = self.loc_atom()?;
            let mut next = Vec::new();
            for a in &acc {
                for b in &rhs {
                    let mut c: Vec<LocRef> = a.iter().map(clone_loc).collect();
                    c.extend(b.iter().map(clone_loc));
                    next.push(c);
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    fn loc_atom(&mut self) -> Result<Vec<Vec<LocRef>>, ParseError> {
        if self.eat(&Tok::LParen) {
            let d = self.loc_disj()?;
            self.expect(&Tok::RParen)?;
            return Ok(d);
        }
        let (process, pos) = self.ident()?;
        self.expect(&Tok::At)?;
        let (target, _) = self.name()?;
        Ok(vec![vec![LocRef {
            process,
            target,
            pos,
        }]])
    }

    fn expr(&mut self) -> Result<ExprAst, ParseError> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> Result<ExprAst, ParseError> {
        const LEVELS: &[&[(Tok, BinOp)]] = &[
            &[(Tok::Or, BinOp::Or)],
            &[(Tok::And, BinOp::And)],
            &[
                (Tok::Eq, BinOp::Eq),
                (Tok::Ne, BinOp::Ne),
                (Tok::Le, BinOp::Le),
                (Tok::Ge, BinOp::Ge),
                (Tok::Lt, BinOp::Lt),
                (Tok::Gt, BinOp::Gt),
            ],
            &[(Tok::Plus, BinOp::Add), (Tok::Minus, BinOp::Sub)],
            &[
                (Tok::Star, BinOp::Mul),
                (Tok::Slash, BinOp::Div),
                (Tok::Percent, BinOp::Mod),
            ],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        loop {
            let op = LEVELS[level]
                .iter()
                .find(|(t, _)| t == self.peek())
                .map(|(_, op)| *op);
            let Some(op) = op else { return Ok(lhs) };
            self.advance();
            let rhs = self.binary_level(level + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
            // Comparisons do not chain.
            if level == 2 {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<ExprAst, ParseError> {
        if self.eat(&Tok::Minus) {
            if let Tok::Int(v) = *self.peek() {
                self.advance();
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::unary(UnOp::Neg, self.unary()?));
        }
        if self.eat(&Tok::Bang) {
            return Ok(Expr::unary(UnOp::Not, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<ExprAst, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(Expr::Const(v))
            }
            Tok::LParen => self.paren_expr(),
            Tok::Ident(s) if s == "true" => {
                self.advance();
                Ok(Expr::Const(1))
            }
            Tok::Ident(s) if s == "false" => {
                self.advance();
                Ok(Expr::Const(0))
            }
            Tok::Ident(_) => {
                let (first, _) = self.ident()?;
                let mut parts = vec![first];
                while self.peek() == &Tok::Dot {
                    self.advance();
                    parts.push(self.ident()?.0);
                }
                Ok(Expr::Var(NameRef { parts, pos }))
            }
            _ => self.unexpected("expression"),
        }
    }
}

fn clone_loc(l: &LocRef) -> LocRef {
    LocRef {
        process: l.process.clone(),
        target: l.target.clone(),
        pos: l.pos,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_expr(s: &str) -> ExprAst {
        let mut p = Parser::new(s).unwrap();
        let e = p.expr().unwrap();
        p.expect(&Tok::Eof).unwrap();
        e
    }

    fn show(e: &ExprAst) -> String {
        e.render(&|n: &NameRef| n.parts.join("."))
    }

    #[test]
    fn precedence() {
        assert_eq!(show(&parse_expr("a + b * c")), "a + (b * c)");
        assert_eq!(show(&parse_expr("a = 1 & b = 2 | c")), "((a = 1) && (b = 2)) || c");
        assert_eq!(show(&parse_expr("-3 - -x")), "-3 - -x");
        assert_eq!(show(&parse_expr("P1.l + 1")), "P1.l + 1");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_program("shared x in {0..1} = 0;\nprocess P { x := ; }").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 18)),
            other => panic!("unexpected {other}"),
        }
    }
}
