//! Early release, overwriting and aborting early release.

use std::collections::BTreeSet;

use crate::history::{op_locality, History, Invocation, Locality, Response, TxnId, VarId};

/// Position at which `t` stops being live: its first `tryC`/`tryA`
/// invocation or abort response.
fn live_until(h: &History, t: TxnId) -> usize {
    h.events
        .iter()
        .position(|e| {
            e.txn == t
                && matches!(
                    (e.invocation(), e.response()),
                    (Some(Invocation::TryCommit | Invocation::TryAbort), _) | (_, Some(Response::Aborted))
                )
        })
        .unwrap_or(usize::MAX)
}

/// Every `(Ti, x)` such that another transaction completes a non-local read
/// of a value `Ti` wrote to `x`, after that write and while `Ti` is live.
pub fn detect_early_release(h: &History) -> BTreeSet<(TxnId, VarId)> {
    let mut out = BTreeSet::new();
    let txns = h.txns();
    for &ti in &txns {
        let until = live_until(h, ti);
        let writes: Vec<_> = h.operations(ti).into_iter().filter(|op| op.effective_write().is_some()).collect();
        for &tj in txns.iter().filter(|&&t| t != ti) {
            for r in h.operations(tj) {
                let Some((x, v)) = r.effective_read() else { continue };
                if r.res_pos.is_some_and(|p| p > until) || op_locality(h, tj, &r) == Locality::Local {
                    continue;
                }
                let released = writes.iter().any(|w| w.effective_write() == Some((x, v)) && w.precedes(&r));
                if released {
                    out.insert((ti, x.clone()));
                }
            }
        }
    }
    out
}

/// An early-releasing `Ti` writes `x` again after another transaction read
/// the value `Ti` released.
pub fn detect_overwriting(h: &History) -> bool {
    let released = detect_early_release(h);
    let txns = h.txns();
    released.iter().any(|(ti, x)| {
        let ws: Vec<_> = h
            .operations(*ti)
            .into_iter()
            .filter(|op| op.effective_write().is_some_and(|(y, _)| y == x))
            .collect();
        ws.iter().enumerate().any(|(k, first)| {
            let (_, v) = first.effective_write().expect("filtered");
            ws[k + 1..].iter().any(|second| {
                txns.iter().filter(|&&t| t != *ti).any(|&tj| {
                    h.operations(tj)
                        .iter()
                        .any(|r| r.effective_read() == Some((x, v)) && r.precedes(second))
                })
            })
        })
    })
}

/// Some early-releasing transaction receives an abort response.
pub fn detect_aborting_release(h: &History) -> bool {
    let released: BTreeSet<TxnId> = detect_early_release(h).into_iter().map(|(t, _)| t).collect();
    released
        .iter()
        .any(|&t| h.events.iter().any(|e| e.txn == t && e.response() == Some(Response::Aborted)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{HistoryBuilder, Value};

    const T1: TxnId = TxnId(1);
    const T2: TxnId = TxnId(2);

    #[test]
    fn serial_has_no_release() {
        let mut b = HistoryBuilder::new();
        b.init(T1).write(T1, "x").commit(T1).init(T2).read(T2, "x", Value::written(T1, 1)).commit(T2);
        let h = b.build();
        assert!(detect_early_release(&h).is_empty());
        assert!(!detect_overwriting(&h));
        assert!(!detect_aborting_release(&h));
    }

    #[test]
    fn release_then_overwrite_then_abort() {
        let mut b = HistoryBuilder::new();
        b.init(T1).init(T2).write(T1, "x").read(T2, "x", Value::written(T1, 1));
        let h = b.build();
        assert_eq!(detect_early_release(&h), BTreeSet::from([(T1, VarId::new("x"))]));
        assert!(!detect_overwriting(&h));
        b.write(T1, "x");
        assert!(detect_overwriting(&b.build()));
        b.abort(T1);
        assert!(detect_aborting_release(&b.build()));
    }

    #[test]
    fn read_after_writer_tries_commit_is_not_early() {
        let mut b = HistoryBuilder::new();
        b.init(T1).init(T2).write(T1, "x").inv(T1, Invocation::TryCommit);
        b.read(T2, "x", Value::written(T1, 1));
        assert!(detect_early_release(&b.build()).is_empty());
    }
}
