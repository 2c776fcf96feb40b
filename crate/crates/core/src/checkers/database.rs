//! Recoverability, ACA, strictness and rigorousness.
//!
//! All four are scans over pairs of operation executions. "Commits before"
//! compares response positions, except in recoverability (see
//! [`check_recoverable`]). In strictness and rigorousness an operation
//! follows another unless it completes before the other is invoked, so
//! overlapping conflicting operations always count as a conflict.

use crate::history::{History, Invocation, OperationExecution, Response, TxnId, Value, VarId};

struct Txn {
    id: TxnId,
    ops: Vec<OperationExecution>,
    /// Position of the commit or abort response.
    end: Option<usize>,
    commit: Option<usize>,
    try_commit: Option<usize>,
    aborted: bool,
}

fn txns(h: &History) -> Vec<Txn> {
    h.txns()
        .into_iter()
        .map(|t| {
            let ops = h.operations(t);
            let mut end = None;
            let mut commit = None;
            let mut try_commit = None;
            let mut aborted = false;
            for op in &ops {
                if *op.invocation() == Invocation::TryCommit {
                    try_commit = Some(op.inv_pos);
                }
                match op.response() {
                    Some(Response::Committed) => {
                        commit = op.res_pos;
                        end = op.res_pos;
                    }
                    Some(Response::Aborted) => {
                        aborted = true;
                        end = op.res_pos;
                    }
                    _ => {}
                }
            }
            Txn { id: t, ops, end, commit, try_commit, aborted }
        })
        .collect()
}

fn writes(t: &Txn) -> impl Iterator<Item = (&OperationExecution, &VarId, Value)> {
    t.ops.iter().filter_map(|op| op.effective_write().map(|(x, v)| (op, x, v)))
}

fn reads(t: &Txn) -> impl Iterator<Item = (&OperationExecution, &VarId, Value)> {
    t.ops.iter().filter_map(|op| op.effective_read().map(|(x, v)| (op, x, v)))
}

/// For every committed `Tj` reading from another `Ti`: `Ti` does not abort
/// and its commit attempt starts before `Tj`'s commit completes.
///
/// Commits are not atomic here; a commit-pending writer may still complete
/// as committed, so requiring its `C` response before the reader's would
/// reject histories every completion-based property accepts.
pub fn check_recoverable(h: &History) -> bool {
    let all = txns(h);
    for tj in &all {
        let Some(cj) = tj.commit else { continue };
        for ti in all.iter().filter(|t| t.id != tj.id) {
            let reads_from = reads(tj).any(|(_, x, v)| writes(ti).any(|(_, wx, wv)| wx == x && wv == v));
            if reads_from && (ti.aborted || !ti.try_commit.is_some_and(|p| p < cj)) {
                return false;
            }
        }
    }
    true
}

/// Every read of a value written by another transaction starts after that
/// transaction's commit response.
pub fn check_aca(h: &History) -> bool {
    let all = txns(h);
    for tj in &all {
        for (r, x, v) in reads(tj) {
            for ti in all.iter().filter(|t| t.id != tj.id) {
                if writes(ti).any(|(_, wx, wv)| wx == x && wv == v)
                    && !ti.commit.is_some_and(|c| c < r.inv_pos)
                {
                    return false;
                }
            }
        }
    }
    true
}

fn accesses(t: &Txn) -> impl Iterator<Item = (&OperationExecution, &VarId)> {
    t.ops.iter().filter_map(|op| {
        op.effective_read().map(|(x, _)| (op, x)).or_else(|| op.effective_write().map(|(x, _)| (op, x)))
    })
}

/// Any read or write on `x` that follows a foreign write on `x` starts
/// after the writer commits or aborts.
pub fn check_strict(h: &History) -> bool {
    let all = txns(h);
    for ti in &all {
        for (op, x) in accesses(ti) {
            for tj in all.iter().filter(|t| t.id != ti.id) {
                let conflict = writes(tj).any(|(w, wx, _)| wx == x && !op.precedes(w));
                if conflict && !tj.end.is_some_and(|e| e < op.inv_pos) {
                    return false;
                }
            }
        }
    }
    true
}

/// Strict, and no write on `x` follows a foreign read of `x` until the
/// reader commits or aborts.
pub fn check_rigorous(h: &History) -> bool {
    if !check_strict(h) {
        return false;
    }
    let all = txns(h);
    for ti in &all {
        for (w, x, _) in writes(ti) {
            for tj in all.iter().filter(|t| t.id != ti.id) {
                let conflict = reads(tj).any(|(r, rx, _)| rx == x && !w.precedes(r));
                if conflict && !tj.end.is_some_and(|e| e < w.inv_pos) {
                    return false;
                }
            }
        }
    }
    true
}
