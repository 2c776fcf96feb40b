//! Static transactional programs.
//!
//! A program is a finite tree of operations per transaction. Branches are
//! resolved at run time by the harness; every analysis here ranges over
//! all alternatives.

mod cursor;
mod decided;
pub mod dsl;
mod markers;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::history::{TxnId, VarId};

pub use decided::{
    decided_on, decided_subhistory, decided_vars, op_views, AlignmentError, CompiledProgram,
    LastAnnotations, LastWriteOracle, OpView,
};
pub(crate) use decided::restrict_to;
pub use cursor::Cursor;
pub use markers::{mark_last_accesses, LastMarker, NodeFlags};

/// Upper bound on root paths per transaction; analyses enumerate paths.
pub const MAX_PATHS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Supremum {
    Finite(u32),
    Infinite,
}

impl fmt::Display for Supremum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Supremum::Finite(n) => write!(f, "{n}"),
            Supremum::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AccessBound {
    pub var: VarId,
    pub supremum: Supremum,
}

/// Which alternative a branch takes, given the last value the transaction read.
///
/// `Nonzero` takes the first alternative when the last read returned a
/// written value and the second otherwise; `Zero` is the mirror image. A
/// missing second alternative means "skip".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub enum BranchCond {
    #[default]
    Nonzero,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Node {
    Read(VarId),
    Write(VarId),
    TryCommit,
    TryAbort,
    Branch { cond: BranchCond, alts: Vec<Vec<Node>> },
}

/// A leaf operation, without the value a write will store.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum OpShape {
    Read(VarId),
    Write(VarId),
    TryCommit,
    TryAbort,
}

impl OpShape {
    pub fn var(&self) -> Option<&VarId> {
        match self {
            OpShape::Read(x) | OpShape::Write(x) => Some(x),
            _ => None,
        }
    }
}

/// Position of a node: indices into sequences, interleaved with the
/// alternative chosen at each enclosing branch.
pub type NodePath = Vec<usize>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathLeaf {
    pub op: OpShape,
    pub at: NodePath,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TxnProgram {
    pub body: Vec<Node>,
    pub supr: BTreeMap<VarId, Supremum>,
    pub process: Option<u32>,
}

impl TxnProgram {
    pub fn new(body: Vec<Node>) -> Self {
        TxnProgram { body, ..Default::default() }
    }

    pub fn with_supr(mut self, x: &str, s: Supremum) -> Self {
        self.supr.insert(x.into(), s);
        self
    }

    pub fn on_process(mut self, p: u32) -> Self {
        self.process = Some(p);
        self
    }

    /// All root paths, flattened.
    pub fn paths(&self) -> Result<Vec<Vec<PathLeaf>>, ProgramError> {
        expand(&self.body, &mut Vec::new())
    }
}

fn expand(seq: &[Node], at: &mut NodePath) -> Result<Vec<Vec<PathLeaf>>, ProgramError> {
    let mut acc: Vec<Vec<PathLeaf>> = vec![Vec::new()];
    for (i, node) in seq.iter().enumerate() {
        at.push(i);
        let leaf = |op| PathLeaf { op, at: at.clone() };
        match node {
            Node::Read(x) => acc.iter_mut().for_each(|p| p.push(leaf(OpShape::Read(x.clone())))),
            Node::Write(x) => acc.iter_mut().for_each(|p| p.push(leaf(OpShape::Write(x.clone())))),
            Node::TryCommit => acc.iter_mut().for_each(|p| p.push(leaf(OpShape::TryCommit))),
            Node::TryAbort => acc.iter_mut().for_each(|p| p.push(leaf(OpShape::TryAbort))),
            Node::Branch { alts, .. } => {
                if alts.is_empty() {
                    return Err(ProgramError::EmptyBranch);
                }
                let mut next = Vec::new();
                for (a, alt) in alts.iter().enumerate() {
                    at.push(a);
                    let tails = expand(alt, at)?;
                    at.pop();
                    for p in &acc {
                        for t in &tails {
                            let mut joined = p.clone();
                            joined.extend(t.iter().cloned());
                            next.push(joined);
                            if next.len() > MAX_PATHS {
                                return Err(ProgramError::TooManyPaths);
                            }
                        }
                    }
                }
                acc = next;
            }
        }
        at.pop();
    }
    Ok(acc)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("branch without alternatives")]
    EmptyBranch,
    #[error("more than {MAX_PATHS} paths")]
    TooManyPaths,
    #[error("{0}: operation after tryC/tryA on some path")]
    OpAfterTry(TxnId),
    #[error("{0} is not part of the program")]
    UnknownTxn(TxnId),
}

/// A workload: one program per transaction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ProgramSpec {
    pub txns: BTreeMap<TxnId, TxnProgram>,
}

impl ProgramSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn txn(mut self, t: TxnId, p: TxnProgram) -> Self {
        self.txns.insert(t, p);
        self
    }

    pub fn get(&self, t: TxnId) -> Result<&TxnProgram, ProgramError> {
        self.txns.get(&t).ok_or(ProgramError::UnknownTxn(t))
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        for (&t, p) in &self.txns {
            for path in p.paths()? {
                let n = path.len();
                let early = path[..n.saturating_sub(1)]
                    .iter()
                    .any(|l| matches!(l.op, OpShape::TryCommit | OpShape::TryAbort));
                if early {
                    return Err(ProgramError::OpAfterTry(t));
                }
            }
        }
        Ok(())
    }

    pub fn compile(&self) -> Result<CompiledProgram, ProgramError> {
        CompiledProgram::new(self)
    }
}

/// Per-variable access bounds for `t`: the exact maximum over all paths,
/// replaced by any declared override. Zero bounds are dropped.
pub fn supremum_of(p: &ProgramSpec, t: TxnId) -> Result<Vec<AccessBound>, ProgramError> {
    let prog = p.get(t)?;
    let mut max: BTreeMap<VarId, u32> = BTreeMap::new();
    for path in prog.paths()? {
        let mut count: BTreeMap<&VarId, u32> = BTreeMap::new();
        for leaf in &path {
            if let Some(x) = leaf.op.var() {
                *count.entry(x).or_insert(0) += 1;
            }
        }
        for (x, c) in count {
            let m = max.entry(x.clone()).or_insert(0);
            *m = (*m).max(c);
        }
    }
    let mut bounds: BTreeMap<VarId, Supremum> =
        max.into_iter().map(|(x, c)| (x, Supremum::Finite(c))).collect();
    for (x, s) in &prog.supr {
        bounds.insert(x.clone(), *s);
    }
    Ok(bounds
        .into_iter()
        .filter(|(_, s)| *s != Supremum::Finite(0))
        .map(|(var, supremum)| AccessBound { var, supremum })
        .collect())
}
