//! End-to-end verification: bound search, the fence loop, run reports and
//! the benchmark harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::explore::{
    fixed_point_search, replay, ExploreError, KStats, SearchOptions, Verdict,
    DEFAULT_BUDGET_STATES,
};
use crate::fence::{self, DelayPair, FencePlacement};
use crate::program::{parse_program, parse_spec_clause, ParseError, Program};
use crate::tso::{successors, violates, Event};

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub k_max: usize,
    pub budget_states: usize,
    /// Synthesize fences on TSO counterexamples and re-verify.
    pub fence: bool,
    /// Upper bound on fence rounds.
    pub max_rounds: usize,
    /// Critical cycle length bound; defaults to two events per process.
    pub max_cycle_len: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            k_max: 16,
            budget_states: DEFAULT_BUDGET_STATES,
            fence: false,
            max_rounds: 32,
            max_cycle_len: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Safe,
    UnsafeSc,
    UnsafeTso,
    BoundExhausted,
    BudgetExhausted,
}

impl VerdictKind {
    pub fn exit_code(self) -> i32 {
        match self {
            VerdictKind::Safe => 0,
            VerdictKind::UnsafeSc => 1,
            VerdictKind::UnsafeTso => 2,
            VerdictKind::BoundExhausted | VerdictKind::BudgetExhausted => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Safe => "safe",
            VerdictKind::UnsafeSc => "unsafe-sc",
            VerdictKind::UnsafeTso => "unsafe-tso",
            VerdictKind::BoundExhausted => "bound-exhausted",
            VerdictKind::BudgetExhausted => "budget-exhausted",
        }
    }
}

/// Exit code for unreadable or invalid input.
pub const EXIT_INPUT: i32 = 4;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub per_k: Vec<KStats>,
}

/// One application of fence synthesis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FenceRound {
    pub k: usize,
    pub fences: Vec<FencePlacement>,
    pub cycles: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub program: String,
    pub verdict: VerdictKind,
    /// Bound of the verdict: the counterexample's, or the last bound explored.
    pub k: Option<usize>,
    pub k0: Option<usize>,
    pub fences: Vec<FencePlacement>,
    pub counterexample: Vec<String>,
    pub stats: Stats,
    #[serde(default)]
    pub rounds: Vec<FenceRound>,
    /// Why fence synthesis stopped, if it did so on an unsafe verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("program: {}\nverdict: {}\n", self.program, self.verdict.as_str());
        if let Some(k) = self.k {
            out += &format!("k: {k}\n");
        }
        if let Some(k0) = self.k0 {
            out += &format!("k0: {k0}\n");
        }
        for r in &self.rounds {
            for f in &r.fences {
                out += &format!("{f}\n");
            }
            for c in &r.cycles {
                out += &format!("  cycle (k={}): {c}\n", r.k);
            }
        }
        if let Some(n) = &self.note {
            out += &format!("note: {n}\n");
        }
        if !self.counterexample.is_empty() {
            out += "counterexample:\n";
            for e in &self.counterexample {
                out += &format!("  {e}\n");
            }
        }
        out += "stats:\n";
        for s in &self.stats.per_k {
            out += &format!(
                "  k={} states={} projected={} millis={}\n",
                s.k, s.states, s.projected, s.millis
            );
        }
        out
    }
}

/// Result of [`verify`]: the report plus the program it finally refers to.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub program: Program,
    /// The raw final counterexample, if any.
    pub trace: Option<Vec<Event>>,
}

/// Runs the bound search and, if requested, the fence loop. After fences are
/// inserted, the search restarts at the bound of the counterexample.
pub fn verify(name: &str, p: &Program, opts: &VerifyOptions) -> RunOutcome {
    let mut program = p.clone();
    let mut fences = Vec::new();
    let mut rounds = Vec::new();
    let mut start_k = 0;
    let max_cycle = opts.max_cycle_len.unwrap_or_else(|| fence::default_cycle_bound(p));
    loop {
        let search = SearchOptions {
            k_max: opts.k_max,
            start_k,
            budget_states: opts.budget_states,
        };
        let mut report = RunReport {
            program: name.to_string(),
            verdict: VerdictKind::Safe,
            k: None,
            k0: None,
            fences: fences.clone(),
            counterexample: Vec::new(),
            stats: Stats::default(),
            rounds: rounds.clone(),
            note: None,
        };
        let outcome = match fixed_point_search(&program, &search) {
            Ok(o) => o,
            Err(ExploreError::Budget { k, completed, .. }) => {
                report.verdict = VerdictKind::BudgetExhausted;
                report.k = Some(k);
                report.stats.per_k = completed;
                return RunOutcome {
                    report,
                    program,
                    trace: None,
                };
            }
        };
        report.stats.per_k = outcome.per_k;
        let (k, trace) = match outcome.verdict {
            Verdict::SafeAtFixedPoint { k0 } => {
                report.k = Some(k0 + 1);
                report.k0 = Some(k0);
                return RunOutcome {
                    report,
                    program,
                    trace: None,
                };
            }
            Verdict::BoundExhausted { k_max } => {
                report.verdict = VerdictKind::BoundExhausted;
                report.k = Some(k_max);
                return RunOutcome {
                    report,
                    program,
                    trace: None,
                };
            }
            Verdict::UnsafeSc { trace } => {
                report.verdict = VerdictKind::UnsafeSc;
                report.k = Some(0);
                report.counterexample = trace.render(&program);
                return RunOutcome {
                    report,
                    program,
                    trace: Some(trace.events),
                };
            }
            Verdict::UnsafeTso { k, trace } => (k, trace),
        };
        report.verdict = VerdictKind::UnsafeTso;
        report.k = Some(k);
        report.counterexample = trace.render(&program);
        if !opts.fence {
            return RunOutcome {
                report,
                program,
                trace: Some(trace.events),
            };
        }
        if rounds.len() >= opts.max_rounds {
            report.note = Some(format!("stopped after {} fence rounds", opts.max_rounds));
            return RunOutcome {
                report,
                program,
                trace: Some(trace.events),
            };
        }
        match fence::synthesize(&program, k, &trace.events, max_cycle) {
            Ok(s) => {
                rounds.push(FenceRound {
                    k,
                    fences: s.placements.clone(),
                    cycles: s
                        .cycles
                        .iter()
                        .map(|c| c.render(&program, &s.relations))
                        .collect(),
                });
                fences.extend(s.placements);
                program = s.program;
                start_k = k;
            }
            Err(e) => {
                report.note = Some(e.to_string());
                return RunOutcome {
                    report,
                    program,
                    trace: Some(trace.events),
                };
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct EventParseError {
    pub line: usize,
    pub msg: String,
}

/// Parses one event per line: `step <process> <label>` or
/// `flush <process> <var>=<value>`. Blank lines and `#` comments are skipped.
pub fn parse_events(p: &Program, text: &str) -> Result<Vec<Event>, EventParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| EventParseError { line: i + 1, msg };
        out.push(parse_event(p, line).map_err(err)?);
    }
    Ok(out)
}

pub fn parse_event(p: &Program, line: &str) -> Result<Event, String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let [kind, proc, arg] = parts[..] else {
        return Err(format!("expected `step P L` or `flush P x=v`, got `{line}`"));
    };
    let proc = p
        .proc_by_name(proc)
        .ok_or_else(|| format!("unknown process `{proc}`"))?;
    match kind {
        "step" => {
            let label = p
                .label_by_name(arg)
                .filter(|l| p.label(*l).proc == proc)
                .ok_or_else(|| format!("unknown label `{arg}` of {}", p.process(proc).name))?;
            Ok(Event::Step { proc, label })
        }
        "flush" => {
            let (var, value) = arg
                .split_once('=')
                .ok_or_else(|| format!("expected `x=v`, got `{arg}`"))?;
            let var = p
                .shared_by_name(var)
                .ok_or_else(|| format!("unknown shared variable `{var}`"))?;
            let value = value
                .parse()
                .map_err(|_| format!("bad value `{value}`"))?;
            Ok(Event::Flush { proc, var, value })
        }
        other => Err(format!("unknown event kind `{other}`")),
    }
}

/// Re-applies reported fences to the original program.
pub fn apply_placements(p: &Program, fences: &[FencePlacement]) -> Result<Program, String> {
    let mut q = p.clone();
    for f in fences {
        let proc = q
            .proc_by_name(&f.process)
            .ok_or_else(|| format!("unknown process `{}`", f.process))?;
        let write = q
            .label_by_name(&f.after_label)
            .filter(|l| q.label(*l).proc == proc && q.label(*l).ins.is_write())
            .ok_or_else(|| format!("`{}` is not a write of {}", f.after_label, f.process))?;
        let pair = DelayPair {
            proc,
            write,
            read: write,
        };
        q = fence::insert_fences(&q, &[pair]).0;
    }
    Ok(q)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("{0}")]
    Fences(String),
    #[error("counterexample line {0}")]
    Event(#[from] EventParseError),
    #[error("counterexample does not replay: {0}")]
    Replay(String),
    #[error("counterexample ends in a state that satisfies the specification")]
    NotViolating,
    #[error("unsafe verdict without a bound")]
    MissingBound,
}

/// Checks an unsafe report against the original program: its counterexample
/// must replay on the fenced program and end in a violating state.
pub fn validate_report(p: &Program, report: &RunReport) -> Result<(), ReportError> {
    if !matches!(report.verdict, VerdictKind::UnsafeSc | VerdictKind::UnsafeTso) {
        return Ok(());
    }
    let k = report.k.ok_or(ReportError::MissingBound)?;
    let q = apply_placements(p, &report.fences).map_err(ReportError::Fences)?;
    let events = parse_events(&q, &report.counterexample.join("\n"))?;
    let s = replay(&q, k, &events).map_err(|e| ReportError::Replay(e.to_string()))?;
    let terminal = successors(&q, &s, k).is_empty();
    if violates(&q, &s, false) || (terminal && violates(&q, &s, true)) {
        Ok(())
    } else {
        Err(ReportError::NotViolating)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
}

/// Reads and parses a program file, optionally replacing its specification.
pub fn load_program(path: &Path, spec: Option<&str>) -> Result<Program, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |source| LoadError::Parse {
        path: path.to_path_buf(),
        source,
    };
    let p = parse_program(&text).map_err(parse_err)?;
    match spec {
        Some(s) => parse_spec_clause(&p, s).map(|spec| p.with_spec(spec)).map_err(parse_err),
        None => Ok(p),
    }
}

/// Reads `// expect-fences: N` from a corpus file.
pub fn expected_fences(text: &str) -> Option<usize> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix("//"))
        .filter_map(|l| l.trim().strip_prefix("expect-fences:"))
        .find_map(|n| n.trim().parse().ok())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub program: String,
    /// Verdict, or `ERROR` for files that could not be loaded.
    pub verdict: String,
    pub k: Option<usize>,
    pub k0: Option<usize>,
    pub fences: Option<usize>,
    pub expected_fences: Option<usize>,
    pub states: usize,
    pub millis: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BenchRow {
    pub fn matches_expectation(&self) -> bool {
        self.verdict == VerdictKind::Safe.as_str()
            && self
                .expected_fences
                .is_none_or(|e| self.fences == Some(e))
    }
}

/// Lists `*.tso` files of a directory in name order.
pub fn corpus_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tso"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn bench_file(path: &Path, opts: &VerifyOptions) -> BenchRow {
    let program = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let start = Instant::now();
    let text = fs::read_to_string(path);
    let expected = text.as_deref().ok().and_then(expected_fences);
    let loaded = load_program(path, None);
    let p = match loaded {
        Ok(p) => p,
        Err(e) => {
            return BenchRow {
                program,
                verdict: "ERROR".into(),
                k: None,
                k0: None,
                fences: None,
                expected_fences: expected,
                states: 0,
                millis: start.elapsed().as_millis() as u64,
                error: Some(e.to_string()),
            }
        }
    };
    let out = verify(&program, &p, opts);
    let r = out.report;
    BenchRow {
        program,
        verdict: r.verdict.as_str().to_string(),
        k: r.k,
        k0: r.k0,
        fences: Some(r.fences.len()),
        expected_fences: expected,
        states: r.stats.per_k.iter().map(|s| s.states).sum(),
        millis: start.elapsed().as_millis() as u64,
        error: r.note,
    }
}

/// Verifies every corpus file with fence synthesis enabled.
pub fn bench(dir: &Path, opts: &VerifyOptions) -> std::io::Result<Vec<BenchRow>> {
    use rayon::prelude::*;
    let files = corpus_files(dir)?;
    let opts = VerifyOptions {
        fence: true,
        ..opts.clone()
    };
    Ok(files.par_iter().map(|f| bench_file(f, &opts)).collect())
}

pub fn render_bench_table(rows: &[BenchRow]) -> String {
    let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
    let mut out = format!(
        "{:<16} {:<16} {:>3} {:>3} {:>6} {:>8} {:>10} {:>9}\n",
        "program", "verdict", "k", "k0", "fences", "expected", "states", "millis"
    );
    for r in rows {
        out += &format!(
            "{:<16} {:<16} {:>3} {:>3} {:>6} {:>8} {:>10} {:>9}\n",
            r.program,
            r.verdict,
            opt(r.k),
            opt(r.k0),
            opt(r.fences),
            opt(r.expected_fences),
            r.states,
            r.millis
        );
        if let Some(e) = &r.error {
            out += &format!("  {e}\n");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SB: &str = "shared x in {0..1} = 0; shared y in {0..1} = 0;
        process P1 { local l1 in {0..1} = 1; label a: x := 1; label b: l1 := y; }
        process P2 { local l2 in {0..1} = 1; label c: y := 1; label d: l2 := x; }
        assert @terminal (P1.l1 = 1 || P2.l2 = 1);";

    #[test]
    fn sb_unsafe_then_fenced() {
        let p = parse_program(SB).unwrap();
        let out = verify("sb", &p, &VerifyOptions::default());
        assert_eq!(out.report.verdict, VerdictKind::UnsafeTso);
        assert_eq!(out.report.k, Some(1));
        validate_report(&p, &out.report).unwrap();

        let fenced = verify(
            "sb",
            &p,
            &VerifyOptions {
                fence: true,
                ..VerifyOptions::default()
            },
        );
        assert_eq!(fenced.report.verdict, VerdictKind::Safe);
        assert_eq!(fenced.report.fences.len(), 2);
        assert_eq!(fenced.report.exit_code(), 0);
    }

    #[test]
    fn report_round_trips() {
        let p = parse_program(SB).unwrap();
        let out = verify("sb", &p, &VerifyOptions::default());
        let back = RunReport::from_json(&out.report.to_json()).unwrap();
        assert_eq!(back, out.report);
        validate_report(&p, &back).unwrap();
    }

    #[test]
    fn tampered_report_is_rejected() {
        let p = parse_program(SB).unwrap();
        let mut r = verify("sb", &p, &VerifyOptions::default()).report;
        r.counterexample.truncate(1);
        assert_eq!(validate_report(&p, &r), Err(ReportError::NotViolating));
        r.counterexample = vec!["flush P1 x=1".into()];
        assert!(matches!(validate_report(&p, &r), Err(ReportError::Replay(_))));
    }

    #[test]
    fn event_lines() {
        let p = parse_program(SB).unwrap();
        let ev = parse_events(&p, "# comment\nstep P1 a\n\nflush P1 x=1\n").unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[1].render(&p), "flush P1 x=1");
        let err = parse_events(&p, "step P1 c").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(parse_events(&p, "jump P1 a").is_err());
    }

    #[test]
    fn exit_codes_are_distinct_per_verdict() {
        use VerdictKind::*;
        let codes: Vec<i32> = [Safe, UnsafeSc, UnsafeTso, BoundExhausted]
            .iter()
            .map(|v| v.exit_code())
            .collect();
        assert_eq!(codes, [0, 1, 2, 3]);
        assert_eq!(BudgetExhausted.exit_code(), 3);
    }

    #[test]
    fn expect_fences_header() {
        assert_eq!(expected_fences("// a\n// expect-fences: 3\nshared"), Some(3));
        assert_eq!(expected_fences("shared x in {0..1};"), None);
    }
}
