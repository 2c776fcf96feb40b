use std::collections::{BTreeMap, BTreeSet};

use super::{OpShape, ProgramError, ProgramSpec};
use crate::history::{Event, EventKind, History, Invocation, Response, TxnId, VarId};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum AlignmentError {
    #[error("{0} has no program")]
    UnknownTxn(TxnId),
    #[error("operations of {txn} do not follow any program path: {ops}")]
    NoPath { txn: TxnId, ops: String },
}

/// Shape of one operation invocation of a transaction, with the sequence
/// number of the invocation event. `shape` is `None` for `init`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpView {
    pub shape: Option<OpShape>,
    pub inv_seq: u64,
}

pub fn op_views(h: &History, t: TxnId) -> Vec<OpView> {
    h.events
        .iter()
        .filter(|e| e.txn == t)
        .filter_map(|e| e.invocation().map(|i| (e.seq, i)))
        .map(|(inv_seq, i)| OpView { shape: shape_of(i), inv_seq })
        .collect()
}

fn shape_of(i: &Invocation) -> Option<OpShape> {
    match i {
        Invocation::Init => None,
        Invocation::Read(x) => Some(OpShape::Read(x.clone())),
        Invocation::Write(x, _) => Some(OpShape::Write(x.clone())),
        Invocation::TryCommit => Some(OpShape::TryCommit),
        Invocation::TryAbort => Some(OpShape::TryAbort),
    }
}

/// Source of "last write invocation" facts for a history.
pub trait LastWriteOracle: Sync {
    /// One flag per entry of `ops`: whether that invocation is a last write
    /// on its variable (β-last when `beta`).
    fn last_writes(&self, t: TxnId, ops: &[OpView], beta: bool) -> Result<Vec<bool>, AlignmentError>;
}

/// A program with its root paths enumerated once.
#[derive(Clone, Debug)]
pub struct CompiledProgram {
    paths: BTreeMap<TxnId, Vec<Vec<OpShape>>>,
}

impl CompiledProgram {
    pub fn new(p: &ProgramSpec) -> Result<Self, ProgramError> {
        p.validate()?;
        let mut paths = BTreeMap::new();
        for (&t, prog) in &p.txns {
            let ps = prog.paths()?.into_iter().map(|path| path.into_iter().map(|l| l.op).collect()).collect();
            paths.insert(t, ps);
        }
        Ok(CompiledProgram { paths })
    }

    /// Paths consistent with an observed invocation sequence. A path that
    /// runs out of operations may be followed by an implicit `tryC`.
    pub fn aligned<'a>(&'a self, t: TxnId, shapes: &'a [&OpShape]) -> Result<Vec<&'a [OpShape]>, AlignmentError> {
        let paths = self.paths.get(&t).ok_or(AlignmentError::UnknownTxn(t))?;
        let out: Vec<&[OpShape]> = paths
            .iter()
            .filter(|p| {
                shapes.iter().enumerate().all(|(i, s)| match p.get(i) {
                    Some(q) => q == *s,
                    None => i == p.len() && i + 1 == shapes.len() && **s == OpShape::TryCommit,
                })
            })
            .map(|p| p.as_slice())
            .collect();
        if out.is_empty() {
            let ops = shapes.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ");
            return Err(AlignmentError::NoPath { txn: t, ops });
        }
        Ok(out)
    }
}

impl LastWriteOracle for CompiledProgram {
    fn last_writes(&self, t: TxnId, ops: &[OpView], beta: bool) -> Result<Vec<bool>, AlignmentError> {
        let shapes: Vec<&OpShape> = ops.iter().filter_map(|o| o.shape.as_ref()).collect();
        let aligned = self.aligned(t, &shapes)?;
        let mut k = 0;
        let mut out = Vec::with_capacity(ops.len());
        for o in ops {
            let Some(shape) = &o.shape else {
                out.push(false);
                continue;
            };
            let last = match shape {
                OpShape::Write(x) => aligned.iter().all(|p| {
                    let rest = p.get(k + 1..).unwrap_or(&[]);
                    !rest.iter().any(|q| matches!(q, OpShape::Write(y) if y == x) || (beta && *q == OpShape::TryAbort))
                }),
                _ => false,
            };
            out.push(last);
            k += 1;
        }
        Ok(out)
    }
}

/// Explicit last-write annotations, keyed by the invocation's sequence
/// number. Used for traces without a program; the same set serves the β
/// variant.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LastAnnotations {
    pub writes: BTreeSet<(TxnId, u64)>,
}

impl LastWriteOracle for LastAnnotations {
    fn last_writes(&self, t: TxnId, ops: &[OpView], _beta: bool) -> Result<Vec<bool>, AlignmentError> {
        Ok(ops
            .iter()
            .map(|o| matches!(o.shape, Some(OpShape::Write(_))) && self.writes.contains(&(t, o.inv_seq)))
            .collect())
    }
}

/// Variables `t` is decided on in `h`: those with an effective write whose
/// invocation is a last write.
pub fn decided_vars(
    h: &History,
    oracle: &dyn LastWriteOracle,
    t: TxnId,
    beta: bool,
) -> Result<BTreeSet<VarId>, AlignmentError> {
    let views = op_views(h, t);
    let flags = oracle.last_writes(t, &views, beta)?;
    let ops = h.operations(t);
    Ok(ops
        .iter()
        .zip(flags)
        .filter(|(_, f)| *f)
        .filter_map(|(op, _)| op.effective_write().map(|(x, _)| x.clone()))
        .collect())
}

pub fn decided_on(
    h: &History,
    oracle: &dyn LastWriteOracle,
    t: TxnId,
    x: &VarId,
) -> Result<bool, AlignmentError> {
    Ok(decided_vars(h, oracle, t, false)?.contains(x))
}

/// `init` plus the complete operations of `t` on its decided variables;
/// with `completed`, followed by `tryC -> C`.
pub fn decided_subhistory(
    h: &History,
    oracle: &dyn LastWriteOracle,
    t: TxnId,
    completed: bool,
) -> Result<History, AlignmentError> {
    let decided = decided_vars(h, oracle, t, false)?;
    Ok(restrict_to(h, t, &decided, completed))
}

pub(crate) fn restrict_to(h: &History, t: TxnId, vars: &BTreeSet<VarId>, completed: bool) -> History {
    let mut events = Vec::new();
    for op in h.operations(t) {
        let keep = match op.invocation() {
            Invocation::Init => true,
            // Aborted executions carry no effect; keeping their `A` response
            // would make the appended commit ill-formed.
            Invocation::Read(x) | Invocation::Write(x, _) => {
                vars.contains(x) && op.is_complete() && !op.is_aborted()
            }
            _ => false,
        };
        if keep {
            events.push(op.inv.clone());
            if let Some(r) = op.res {
                events.push(r);
            }
        }
    }
    if completed {
        let seq = h.next_seq();
        events.push(Event { seq, txn: t, kind: EventKind::Inv(Invocation::TryCommit) });
        events.push(Event { seq: seq + 1, txn: t, kind: EventKind::Res(Response::Committed) });
    }
    History { events, processes: h.processes.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{HistoryBuilder, Value};
    use crate::program::{BranchCond, Node, TxnProgram};

    const T1: TxnId = TxnId(1);

    fn spec(body: Vec<Node>) -> CompiledProgram {
        ProgramSpec::new().txn(T1, TxnProgram::new(body)).compile().unwrap()
    }

    #[test]
    fn complete_last_write_decides() {
        let p = spec(vec![Node::Write("x".into()), Node::TryCommit]);
        let mut b = HistoryBuilder::new();
        b.init(T1).inv(T1, Invocation::Write("x".into(), Value::written(T1, 1)));
        assert!(!decided_on(&b.build(), &p, T1, &"x".into()).unwrap());
        b.res(T1, Response::Ok);
        assert!(decided_on(&b.build(), &p, T1, &"x".into()).unwrap());
    }

    #[test]
    fn write_before_alternative_write_is_not_last_until_resolved() {
        let br = Node::Branch { cond: BranchCond::Nonzero, alts: vec![vec![Node::Write("x".into())], vec![]] };
        let p = spec(vec![Node::Write("x".into()), br, Node::Read("y".into())]);
        let mut b = HistoryBuilder::new();
        b.init(T1).write(T1, "x");
        assert!(!decided_on(&b.build(), &p, T1, &"x".into()).unwrap());
        b.read(T1, "y", Value::Initial);
        assert!(decided_on(&b.build(), &p, T1, &"x".into()).unwrap());
    }

    #[test]
    fn misaligned_history() {
        let p = spec(vec![Node::Read("x".into())]);
        let mut b = HistoryBuilder::new();
        b.init(T1).write(T1, "x");
        assert!(matches!(decided_on(&b.build(), &p, T1, &"x".into()), Err(AlignmentError::NoPath { .. })));
        let mut b = HistoryBuilder::new();
        b.init(T1).read(T1, "x", Value::Initial).commit(T1);
        assert!(decided_on(&b.build(), &p, T1, &"x".into()).is_ok());
    }

    #[test]
    fn subhistory_keeps_decided_vars_only() {
        let p = spec(vec![Node::Write("y".into()), Node::Write("x".into()), Node::Write("y".into()), Node::TryAbort]);
        let mut b = HistoryBuilder::new();
        b.init(T1).write(T1, "y").write(T1, "x");
        let h = b.build();
        let s = decided_subhistory(&h, &p, T1, true).unwrap();
        let kinds: Vec<_> = s.events.iter().map(|e| e.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::Inv(Invocation::Init),
                EventKind::Res(Response::Ok),
                EventKind::Inv(Invocation::Write("x".into(), Value::written(T1, 2))),
                EventKind::Res(Response::Ok),
                EventKind::Inv(Invocation::TryCommit),
                EventKind::Res(Response::Committed),
            ]
        );
        let beta = decided_vars(&h, &p, T1, true).unwrap();
        assert!(beta.is_empty());
    }

    #[test]
    fn annotations() {
        let mut b = HistoryBuilder::new();
        b.init(T1).write(T1, "x");
        let h = b.build();
        let mut a = LastAnnotations::default();
        assert!(!decided_on(&h, &a, T1, &"x".into()).unwrap());
        a.writes.insert((T1, 3));
        assert!(decided_on(&h, &a, T1, &"x".into()).unwrap());
    }
}
