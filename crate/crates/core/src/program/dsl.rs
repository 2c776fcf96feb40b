//! Line-oriented program syntax.
//!
//! ```text
//! # two writers
//! txn T1
//!   read x
//!   branch {          # taken when the last read returned a written value
//!     write x
//!   } or {
//!     tryA
//!   }
//!   supr x 3           # or `inf`
//! txn T2 process 1
//!   write x
//!   tryC
//! ```
//!
//! `branch zero {` takes its first alternative when the last read
//! returned the initial value instead.

use std::fmt::Write as _;

use super::{BranchCond, Node, ProgramSpec, Supremum, TxnProgram};
use crate::history::{TxnId, VarId};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct DslError {
    pub line: usize,
    pub message: String,
}

struct Open {
    cond: BranchCond,
    alts: Vec<Vec<Node>>,
    line: usize,
}

pub fn parse(text: &str) -> Result<ProgramSpec, DslError> {
    let mut spec = ProgramSpec::new();
    let mut current: Option<(TxnId, TxnProgram)> = None;
    let mut seqs: Vec<Vec<Node>> = Vec::new();
    let mut open: Vec<Open> = Vec::new();

    let finish = |spec: &mut ProgramSpec, cur: Option<(TxnId, TxnProgram)>, seqs: &mut Vec<Vec<Node>>, open: &[Open], line| {
        if let Some(o) = open.last() {
            return Err(DslError { line, message: format!("branch opened on line {} is not closed", o.line) });
        }
        if let Some((t, mut p)) = cur {
            p.body = seqs.pop().unwrap_or_default();
            if spec.txns.insert(t, p).is_some() {
                return Err(DslError { line, message: format!("{t} defined twice") });
            }
        }
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| DslError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        if words[0] == "txn" {
            finish(&mut spec, current.take(), &mut seqs, &open, line)?;
            let t: TxnId = words.get(1).ok_or_else(|| err("missing transaction id".into()))?.parse().map_err(err)?;
            let mut prog = TxnProgram::default();
            match &words[2..] {
                [] => {}
                ["process", p] => prog.process = Some(p.parse().map_err(|_| err(format!("bad process `{p}`")))?),
                _ => return Err(err(format!("unexpected `{}`", words[2..].join(" ")))),
            }
            current = Some((t, prog));
            seqs = vec![Vec::new()];
            continue;
        }
        let Some((_, prog)) = current.as_mut() else {
            return Err(err("operation outside of a `txn` block".into()));
        };
        let seq = seqs.last_mut().expect("txn block has a sequence");
        match words.as_slice() {
            ["read", x] => seq.push(Node::Read(VarId::new(x))),
            ["write", x] => seq.push(Node::Write(VarId::new(x))),
            ["tryC"] => seq.push(Node::TryCommit),
            ["tryA"] => seq.push(Node::TryAbort),
            ["supr", x, n] => {
                let s = if *n == "inf" {
                    Supremum::Infinite
                } else {
                    Supremum::Finite(n.parse().map_err(|_| err(format!("bad supremum `{n}`")))?)
                };
                prog.supr.insert(VarId::new(x), s);
            }
            ["branch", "{"] | ["branch", "nonzero", "{"] => {
                open.push(Open { cond: BranchCond::Nonzero, alts: Vec::new(), line });
                seqs.push(Vec::new());
            }
            ["branch", "zero", "{"] => {
                open.push(Open { cond: BranchCond::Zero, alts: Vec::new(), line });
                seqs.push(Vec::new());
            }
            ["}", "or", "{"] => {
                let o = open.last_mut().ok_or_else(|| err("`} or {` without a branch".into()))?;
                o.alts.push(seqs.pop().expect("branch sequence"));
                seqs.push(Vec::new());
            }
            ["}"] => {
                let mut o = open.pop().ok_or_else(|| err("`}` without a branch".into()))?;
                o.alts.push(seqs.pop().expect("branch sequence"));
                seqs.last_mut().expect("enclosing sequence").push(Node::Branch { cond: o.cond, alts: o.alts });
            }
            _ => return Err(err(format!("unknown statement `{content}`"))),
        }
    }
    let end = text.lines().count() + 1;
    finish(&mut spec, current, &mut seqs, &open, end)?;
    spec.validate().map_err(|e| DslError { line: end, message: e.to_string() })?;
    Ok(spec)
}

pub fn to_dsl(spec: &ProgramSpec) -> String {
    let mut out = String::new();
    for (t, p) in &spec.txns {
        match p.process {
            Some(n) => writeln!(out, "txn {t} process {n}").unwrap(),
            None => writeln!(out, "txn {t}").unwrap(),
        }
        write_seq(&mut out, &p.body, 1);
        for (x, s) in &p.supr {
            writeln!(out, "  supr {x} {s}").unwrap();
        }
    }
    out
}

fn write_seq(out: &mut String, seq: &[Node], depth: usize) {
    let pad = "  ".repeat(depth);
    for node in seq {
        match node {
            Node::Read(x) => writeln!(out, "{pad}read {x}").unwrap(),
            Node::Write(x) => writeln!(out, "{pad}write {x}").unwrap(),
            Node::TryCommit => writeln!(out, "{pad}tryC").unwrap(),
            Node::TryAbort => writeln!(out, "{pad}tryA").unwrap(),
            Node::Branch { cond, alts } => {
                let head = match cond {
                    BranchCond::Nonzero => "branch {",
                    BranchCond::Zero => "branch zero {",
                };
                writeln!(out, "{pad}{head}").unwrap();
                for (i, alt) in alts.iter().enumerate() {
                    if i > 0 {
                        writeln!(out, "{pad}}} or {{").unwrap();
                    }
                    write_seq(out, alt, depth + 1);
                }
                writeln!(out, "{pad}}}").unwrap();
            }
        }
    }
}
