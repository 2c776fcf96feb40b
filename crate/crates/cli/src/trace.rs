//! Trace files: one event per line, with optional header lines.
//!
//! ```text
//! # H1
//! txn T1 program h1.prog
//! txn T2 program h1.prog
//! last T1 3
//! process T1 1
//! 1 inv T1 init
//! 2 res T1 ok
//! 3 inv T1 write x T1.1
//! 4 res T1 ok
//! 5 inv T2 read x
//! 6 res T2 val T1.1
//! ```
//!
//! `last <txn> <seq>` marks the write invoked at event `seq` as a last
//! write, for checking without a program. `process` lines are optional;
//! transactions without one run on a process of their own.

use std::collections::BTreeMap;
use std::fmt;

use lopacity_core::history::{Event, EventKind, History, Invocation, Response, TxnId, Value, VarId};
use lopacity_core::program::LastAnnotations;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceFile {
    /// Program file named for each transaction.
    pub programs: BTreeMap<TxnId, String>,
    pub last: LastAnnotations,
    pub history: History,
}

impl TraceFile {
    pub fn new(history: History) -> Self {
        TraceFile { history, ..Default::default() }
    }

    pub fn has_annotations(&self) -> bool {
        !self.last.writes.is_empty()
    }
}

fn parse_txn(s: &str) -> Result<TxnId, String> {
    s.parse().map_err(|_| format!("bad transaction id `{s}`"))
}

fn parse_value(s: &str) -> Result<Value, String> {
    if let Some((t, k)) = s.split_once('.') {
        let seq = k.parse().map_err(|_| format!("bad write number in `{s}`"))?;
        if seq == 0 {
            return Err(format!("write numbers start at 1 in `{s}`"));
        }
        return Ok(Value::written(parse_txn(t)?, seq));
    }
    match s.parse::<u64>() {
        Ok(0) => Ok(Value::Initial),
        Ok(n) => Ok(Value::Int(n)),
        Err(_) => Err(format!("bad value `{s}`")),
    }
}

fn parse_var(s: Option<&str>) -> Result<VarId, String> {
    match s {
        Some(x) if x.chars().all(|c| c.is_alphanumeric() || c == '_') => Ok(VarId::new(x)),
        Some(x) => Err(format!("bad variable name `{x}`")),
        None => Err("missing variable".into()),
    }
}

fn parse_event(words: &[&str]) -> Result<Event, String> {
    let seq: u64 = words[0].parse().map_err(|_| format!("bad sequence number `{}`", words[0]))?;
    let (Some(&dir), Some(t)) = (words.get(1), words.get(2)) else {
        return Err("expected `<seq> inv|res <txn> ...`".into());
    };
    let txn = parse_txn(t)?;
    let rest = &words[3..];
    let arity = |n: usize| {
        if rest.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {} argument(s)", rest.first().copied().unwrap_or(""), n - 1))
        }
    };
    let kind = match (dir, rest.first().copied()) {
        ("inv", Some("init")) => arity(1).map(|_| EventKind::Inv(Invocation::Init))?,
        ("inv", Some("read")) => arity(2).and_then(|_| Ok(EventKind::Inv(Invocation::Read(parse_var(rest.get(1).copied())?))))?,
        ("inv", Some("write")) => arity(3).and_then(|_| {
            let x = parse_var(rest.get(1).copied())?;
            Ok(EventKind::Inv(Invocation::Write(x, parse_value(rest[2])?)))
        })?,
        ("inv", Some("tryC")) => arity(1).map(|_| EventKind::Inv(Invocation::TryCommit))?,
        ("inv", Some("tryA")) => arity(1).map(|_| EventKind::Inv(Invocation::TryAbort))?,
        ("res", Some("ok")) => arity(1).map(|_| EventKind::Res(Response::Ok))?,
        ("res", Some("val")) => arity(2).and_then(|_| Ok(EventKind::Res(Response::Value(parse_value(rest[1])?))))?,
        ("res", Some("commit")) => arity(1).map(|_| EventKind::Res(Response::Committed))?,
        ("res", Some("abort")) => arity(1).map(|_| EventKind::Res(Response::Aborted))?,
        ("inv" | "res", Some(k)) => return Err(format!("unknown {dir} kind `{k}`")),
        ("inv" | "res", None) => return Err(format!("missing {dir} kind")),
        (d, _) => return Err(format!("expected `inv` or `res`, found `{d}`")),
    };
    Ok(Event { seq, txn, kind })
}

/// Parses a trace. Events must have strictly increasing sequence numbers;
/// well-formedness is left to the caller.
pub fn parse_trace(text: &str) -> Result<TraceFile, TraceError> {
    let mut out = TraceFile::default();
    let mut last_seq: Option<(u64, usize)> = None;
    let mut annotations: Vec<(TxnId, u64, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| TraceError { line, message };
        let body = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = body.split_whitespace().collect();
        let Some(&first) = words.first() else { continue };
        match first {
            "txn" => {
                let [_, t, "program", name] = words[..] else {
                    return Err(err("expected `txn <id> program <name>`".into()));
                };
                let t = parse_txn(t).map_err(err)?;
                if out.programs.insert(t, name.to_string()).is_some() {
                    return Err(err(format!("{t} bound twice")));
                }
            }
            "last" => {
                let [_, t, seq] = words[..] else {
                    return Err(err("expected `last <txn> <event-seq>`".into()));
                };
                let t = parse_txn(t).map_err(err)?;
                let seq = seq.parse().map_err(|_| err(format!("bad sequence number `{seq}`")))?;
                annotations.push((t, seq, line));
            }
            "process" => {
                let [_, t, p] = words[..] else {
                    return Err(err("expected `process <txn> <n>`".into()));
                };
                let t = parse_txn(t).map_err(err)?;
                let p = p.parse().map_err(|_| err(format!("bad process number `{p}`")))?;
                out.history.processes.insert(t, p);
            }
            _ => {
                let e = parse_event(&words).map_err(err)?;
                if let Some((prev, prev_line)) = last_seq {
                    if e.seq <= prev {
                        return Err(err(format!("sequence number {} does not follow {prev} (line {prev_line})", e.seq)));
                    }
                }
                last_seq = Some((e.seq, line));
                out.history.events.push(e);
            }
        }
    }
    for (t, seq, line) in annotations {
        let ok = out
            .history
            .events
            .iter()
            .any(|e| e.seq == seq && e.txn == t && matches!(e.kind, EventKind::Inv(Invocation::Write(..))));
        if !ok {
            return Err(TraceError { line, message: format!("event {seq} is not a write invocation of {t}") });
        }
        out.last.writes.insert((t, seq));
    }
    Ok(out)
}

impl fmt::Display for TraceFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, name) in &self.programs {
            writeln!(f, "txn {t} program {name}")?;
        }
        for (t, p) in &self.history.processes {
            writeln!(f, "process {t} {p}")?;
        }
        for (t, seq) in &self.last.writes {
            writeln!(f, "last {t} {seq}")?;
        }
        write!(f, "{}", self.history)
    }
}
