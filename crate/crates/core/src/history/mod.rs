//! Events, operation executions and histories.
//!
//! A [`History`] is a totally ordered list of invocation and response
//! events. Everything else in this module (projections, completions,
//! sequential extensions, legality) is a pure function over it.

mod access;
mod completion;
mod sequential;
mod wellformed;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

pub use access::{op_locality, reads_from, unique_writes, Locality};
pub use completion::{completions, Completions};
pub use sequential::{
    equivalent, is_legal_sequential, is_sequential, sequential_extensions, sequential_from_order,
    transaction_legal, vis, LegalityError, RealTimeOrder,
};
pub use wellformed::{validate_well_formed, Condition, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TxnId(pub u32);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

impl std::str::FromStr for TxnId {
    type Err = String;

    /// Parses `T<n>` with `n > 0`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix('T').map(str::parse::<u32>) {
            Some(Ok(n)) if n > 0 => Ok(TxnId(n)),
            _ => Err(format!("bad transaction id `{s}` (expected T<n>, n > 0)")),
        }
    }
}

/// Shared variable name. The derived `Ord` is the lock order used by SVA.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(Arc<str>);

impl VarId {
    pub fn new(name: &str) -> Self {
        VarId(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId::new(s)
    }
}

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for VarId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

/// A value stored in a variable.
///
/// `Written` values carry their origin, so distinct writes never collide.
/// `Int` exists only for hand-written integer traces; `Int(0)` is never
/// constructed by the parsers, which map `0` to `Initial`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Value {
    Initial,
    Written { txn: TxnId, seq: u32 },
    Int(u64),
}

impl Value {
    pub fn written(txn: TxnId, seq: u32) -> Self {
        Value::Written { txn, seq }
    }

    pub fn is_initial(&self) -> bool {
        matches!(self, Value::Initial | Value::Int(0))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Initial => f.write_str("0"),
            Value::Written { txn, seq } => write!(f, "{txn}.{seq}"),
            Value::Int(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Invocation {
    Init,
    Read(VarId),
    Write(VarId, Value),
    TryCommit,
    TryAbort,
}

impl Invocation {
    pub fn var(&self) -> Option<&VarId> {
        match self {
            Invocation::Read(x) | Invocation::Write(x, _) => Some(x),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Response {
    Ok,
    Value(Value),
    Committed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    Inv(Invocation),
    Res(Response),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Event {
    pub seq: u64,
    pub txn: TxnId,
    pub kind: EventKind,
}

impl Event {
    pub fn inv(seq: u64, txn: TxnId, inv: Invocation) -> Self {
        Event { seq, txn, kind: EventKind::Inv(inv) }
    }

    pub fn res(seq: u64, txn: TxnId, res: Response) -> Self {
        Event { seq, txn, kind: EventKind::Res(res) }
    }

    pub fn invocation(&self) -> Option<&Invocation> {
        match &self.kind {
            EventKind::Inv(i) => Some(i),
            EventKind::Res(_) => None,
        }
    }

    pub fn response(&self) -> Option<Response> {
        match &self.kind {
            EventKind::Res(r) => Some(*r),
            EventKind::Inv(_) => None,
        }
    }
}

/// An invocation paired with its response, if any.
///
/// Positions index into the history the execution was taken from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationExecution {
    pub inv: Event,
    pub res: Option<Event>,
    pub inv_pos: usize,
    pub res_pos: Option<usize>,
}

impl OperationExecution {
    pub fn invocation(&self) -> &Invocation {
        self.inv.invocation().expect("operation starts with an invocation")
    }

    pub fn response(&self) -> Option<Response> {
        self.res.as_ref().and_then(Event::response)
    }

    pub fn is_complete(&self) -> bool {
        self.res.is_some()
    }

    pub fn is_aborted(&self) -> bool {
        self.response() == Some(Response::Aborted)
    }

    /// `w(x,v)` that returned `ok`.
    pub fn effective_write(&self) -> Option<(&VarId, Value)> {
        match (self.invocation(), self.response()) {
            (Invocation::Write(x, v), Some(Response::Ok)) => Some((x, *v)),
            _ => None,
        }
    }

    /// `r(x)` that returned a value.
    pub fn effective_read(&self) -> Option<(&VarId, Value)> {
        match (self.invocation(), self.response()) {
            (Invocation::Read(x), Some(Response::Value(v))) => Some((x, v)),
            _ => None,
        }
    }

    /// `op` precedes `other` when its response comes before the other's invocation.
    pub fn precedes(&self, other: &OperationExecution) -> bool {
        matches!(self.res_pos, Some(r) if r < other.inv_pos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum TxnStatus {
    Committed,
    Aborted,
    CommitPending,
    Live,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("transaction {0} does not appear in the history")]
    UnknownTxn(TxnId),
}

pub enum Selector<'a> {
    Txn(TxnId),
    Var(&'a VarId),
}

/// An ordered event sequence plus an optional transaction to process map.
///
/// Transactions absent from `processes` run on a process of their own.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct History {
    pub events: Vec<Event>,
    pub processes: BTreeMap<TxnId, u32>,
}

impl History {
    pub fn new(events: Vec<Event>) -> Self {
        History { events, processes: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Transactions in order of first appearance.
    pub fn txns(&self) -> Vec<TxnId> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for e in &self.events {
            if seen.insert(e.txn) {
                out.push(e.txn);
            }
        }
        out
    }

    pub fn txn_set(&self) -> BTreeSet<TxnId> {
        self.events.iter().map(|e| e.txn).collect()
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.events
            .iter()
            .filter_map(|e| e.invocation().and_then(Invocation::var).cloned())
            .collect()
    }

    pub fn contains(&self, t: TxnId) -> bool {
        self.events.iter().any(|e| e.txn == t)
    }

    /// The first `n` events, keeping the process map.
    pub fn prefix(&self, n: usize) -> History {
        History { events: self.events[..n].to_vec(), processes: self.processes.clone() }
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    pub fn process_of(&self, t: TxnId) -> Option<u32> {
        self.processes.get(&t).copied()
    }

    /// Operation executions of `t` in invocation order.
    pub fn operations(&self, t: TxnId) -> Vec<OperationExecution> {
        let mut ops: Vec<OperationExecution> = Vec::new();
        for (pos, e) in self.events.iter().enumerate() {
            if e.txn != t {
                continue;
            }
            match &e.kind {
                EventKind::Inv(_) => ops.push(OperationExecution {
                    inv: e.clone(),
                    res: None,
                    inv_pos: pos,
                    res_pos: None,
                }),
                EventKind::Res(_) => {
                    if let Some(last) = ops.last_mut() {
                        if last.res.is_none() {
                            last.res = Some(e.clone());
                            last.res_pos = Some(pos);
                        }
                    }
                }
            }
        }
        ops
    }

    /// All operation executions of all transactions, ordered by invocation.
    pub fn all_operations(&self) -> Vec<(TxnId, OperationExecution)> {
        let mut all: Vec<(TxnId, OperationExecution)> = self
            .txns()
            .into_iter()
            .flat_map(|t| self.operations(t).into_iter().map(move |op| (t, op)))
            .collect();
        all.sort_by_key(|(_, op)| op.inv_pos);
        all
    }

    pub fn status(&self, t: TxnId) -> Result<TxnStatus, HistoryError> {
        if !self.contains(t) {
            return Err(HistoryError::UnknownTxn(t));
        }
        Ok(self.status_unchecked(t))
    }

    pub(crate) fn status_unchecked(&self, t: TxnId) -> TxnStatus {
        let mut try_commit = false;
        for e in self.events.iter().filter(|e| e.txn == t) {
            match &e.kind {
                EventKind::Res(Response::Aborted) => return TxnStatus::Aborted,
                EventKind::Res(Response::Committed) => return TxnStatus::Committed,
                EventKind::Inv(Invocation::TryCommit) => try_commit = true,
                _ => {}
            }
        }
        if try_commit {
            TxnStatus::CommitPending
        } else {
            TxnStatus::Live
        }
    }

    pub fn is_committed(&self, t: TxnId) -> bool {
        self.status_unchecked(t) == TxnStatus::Committed
    }

    /// Every transaction is committed or aborted.
    pub fn is_complete(&self) -> bool {
        self.txns()
            .into_iter()
            .all(|t| matches!(self.status_unchecked(t), TxnStatus::Committed | TxnStatus::Aborted))
    }

    pub fn project(&self, sel: Selector<'_>) -> History {
        match sel {
            Selector::Txn(t) => History {
                events: self.events.iter().filter(|e| e.txn == t).cloned().collect(),
                processes: self.processes.clone(),
            },
            Selector::Var(x) => {
                let mut keep = vec![false; self.events.len()];
                for t in self.txns() {
                    for op in self.operations(t) {
                        if op.invocation().var() == Some(x) {
                            if let Some(r) = op.res_pos {
                                keep[op.inv_pos] = true;
                                keep[r] = true;
                            }
                        }
                    }
                }
                History {
                    events: self
                        .events
                        .iter()
                        .zip(keep)
                        .filter(|(_, k)| *k)
                        .map(|(e, _)| e.clone())
                        .collect(),
                    processes: self.processes.clone(),
                }
            }
        }
    }

    pub fn project_txn(&self, t: TxnId) -> History {
        self.project(Selector::Txn(t))
    }

    /// Position of the first and last event of `t`.
    pub fn span(&self, t: TxnId) -> Option<(usize, usize)> {
        let first = self.events.iter().position(|e| e.txn == t)?;
        let last = self.events.iter().rposition(|e| e.txn == t)?;
        Some((first, last))
    }

    /// Last event of `a` precedes the first event of `b`.
    pub fn real_time_precedes(&self, a: TxnId, b: TxnId) -> bool {
        match (self.span(a), self.span(b)) {
            (Some((_, la)), Some((fb, _))) => la < fb,
            _ => false,
        }
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            match &e.kind {
                EventKind::Inv(i) => {
                    write!(f, "{} inv {} ", e.seq, e.txn)?;
                    match i {
                        Invocation::Init => writeln!(f, "init")?,
                        Invocation::Read(x) => writeln!(f, "read {x}")?,
                        Invocation::Write(x, v) => writeln!(f, "write {x} {v}")?,
                        Invocation::TryCommit => writeln!(f, "tryC")?,
                        Invocation::TryAbort => writeln!(f, "tryA")?,
                    }
                }
                EventKind::Res(r) => {
                    write!(f, "{} res {} ", e.seq, e.txn)?;
                    match r {
                        Response::Ok => writeln!(f, "ok")?,
                        Response::Value(v) => writeln!(f, "val {v}")?,
                        Response::Committed => writeln!(f, "commit")?,
                        Response::Aborted => writeln!(f, "abort")?,
                    }
                }
            }
        }
        Ok(())
    }
}

/// Incremental history construction with automatic sequence numbers.
///
/// Fixtures and tests use this; `op` appends an invocation immediately
/// followed by its response.
#[derive(Clone, Debug, Default)]
pub struct HistoryBuilder {
    history: History,
    write_seq: BTreeMap<TxnId, u32>,
}

impl HistoryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn process(mut self, t: TxnId, p: u32) -> Self {
        self.history.processes.insert(t, p);
        self
    }

    pub fn inv(&mut self, t: TxnId, inv: Invocation) -> &mut Self {
        let seq = self.history.next_seq();
        self.history.events.push(Event::inv(seq, t, inv));
        self
    }

    pub fn res(&mut self, t: TxnId, res: Response) -> &mut Self {
        let seq = self.history.next_seq();
        self.history.events.push(Event::res(seq, t, res));
        self
    }

    pub fn init(&mut self, t: TxnId) -> &mut Self {
        self.inv(t, Invocation::Init).res(t, Response::Ok)
    }

    /// Writes the next structural value of `t` and returns it.
    pub fn next_value(&mut self, t: TxnId) -> Value {
        let n = self.write_seq.entry(t).or_insert(0);
        *n += 1;
        Value::written(t, *n)
    }

    pub fn write(&mut self, t: TxnId, x: &str) -> &mut Self {
        let v = self.next_value(t);
        self.inv(t, Invocation::Write(x.into(), v)).res(t, Response::Ok)
    }

    pub fn write_val(&mut self, t: TxnId, x: &str, v: Value) -> &mut Self {
        self.inv(t, Invocation::Write(x.into(), v)).res(t, Response::Ok)
    }

    pub fn read(&mut self, t: TxnId, x: &str, v: Value) -> &mut Self {
        self.inv(t, Invocation::Read(x.into())).res(t, Response::Value(v))
    }

    pub fn commit(&mut self, t: TxnId) -> &mut Self {
        self.inv(t, Invocation::TryCommit).res(t, Response::Committed)
    }

    pub fn try_commit_abort(&mut self, t: TxnId) -> &mut Self {
        self.inv(t, Invocation::TryCommit).res(t, Response::Aborted)
    }

    pub fn abort(&mut self, t: TxnId) -> &mut Self {
        self.inv(t, Invocation::TryAbort).res(t, Response::Aborted)
    }

    pub fn build(&self) -> History {
        self.history.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1: TxnId = TxnId(1);
    const T2: TxnId = TxnId(2);

    fn early_release() -> History {
        let mut b = HistoryBuilder::new();
        b.init(T1).init(T2).write(T1, "x");
        b.read(T2, "x", Value::written(T1, 1)).commit(T1).commit(T2);
        b.build()
    }

    #[test]
    fn status_cases() {
        let h = early_release();
        assert_eq!(h.status(T1), Ok(TxnStatus::Committed));
        let mut b = HistoryBuilder::new();
        b.init(T1);
        assert_eq!(b.build().status(T1), Ok(TxnStatus::Live));
        b.inv(T1, Invocation::TryCommit);
        assert_eq!(b.build().status(T1), Ok(TxnStatus::CommitPending));
        assert_eq!(b.build().status(T2), Err(HistoryError::UnknownTxn(T2)));
    }

    #[test]
    fn txn_projection() {
        let h = early_release();
        let p = h.project_txn(T2);
        let kinds: Vec<_> = p.events.iter().map(|e| e.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::Inv(Invocation::Init),
                EventKind::Res(Response::Ok),
                EventKind::Inv(Invocation::Read("x".into())),
                EventKind::Res(Response::Value(Value::written(T1, 1))),
                EventKind::Inv(Invocation::TryCommit),
                EventKind::Res(Response::Committed),
            ]
        );
    }

    #[test]
    fn var_projection_drops_pending() {
        let mut b = HistoryBuilder::new();
        b.init(T1).write(T1, "x").inv(T1, Invocation::Write("x".into(), Value::written(T1, 9)));
        let h = b.build();
        let px = h.project(Selector::Var(&"x".into()));
        assert_eq!(px.len(), 2);
        assert!(h.project(Selector::Var(&"y".into())).is_empty());
    }

    #[test]
    fn real_time() {
        let h = early_release();
        assert!(!h.real_time_precedes(T1, T2));
        assert!(!h.real_time_precedes(T2, T1));
        assert!(!h.real_time_precedes(T1, T1));
        let mut b = HistoryBuilder::new();
        b.init(T1).commit(T1).init(T2).commit(T2);
        assert!(b.build().real_time_precedes(T1, T2));
    }

    #[test]
    fn operations_pair_responses() {
        let mut b = HistoryBuilder::new();
        b.init(T1).init(T2).inv(T1, Invocation::Read("x".into()));
        b.write(T2, "x").res(T1, Response::Value(Value::written(T2, 1)));
        let h = b.build();
        let ops = h.operations(T1);
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[1].inv_pos, 4);
        assert_eq!(ops[1].res_pos, Some(7));
    }
}
