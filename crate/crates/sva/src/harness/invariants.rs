//! Observations about SVA histories, checked on every recorded run.

use std::collections::BTreeMap;

use lopacity_core::history::{unique_writes, validate_well_formed, History, Response, TxnId, Value, VarId};

use crate::engine::coop::Sva;

/// Position of a transaction's C or A response.
fn terminal_pos(h: &History, t: TxnId) -> Option<usize> {
    h.events
        .iter()
        .position(|e| e.txn == t && matches!(e.response(), Some(Response::Committed | Response::Aborted)))
}

fn aborted(h: &History, t: TxnId) -> bool {
    h.events.iter().any(|e| e.txn == t && e.response() == Some(Response::Aborted))
}

/// Response positions of `t`'s completed, non-aborted accesses to `x`.
fn accesses(h: &History, t: TxnId, x: &VarId) -> Vec<usize> {
    h.operations(t)
        .into_iter()
        .filter(|op| op.invocation().var() == Some(x) && op.is_complete() && !op.is_aborted())
        .filter_map(|op| op.res_pos)
        .collect()
}

/// Violated observations, as messages; empty when all hold.
pub fn check_invariants(sva: &Sva, h: &History) -> Vec<String> {
    let mut out = Vec::new();
    if let Err(v) = validate_well_formed(h) {
        out.extend(v.iter().map(|v| format!("ill-formed: {v}")));
    }
    if !unique_writes(h) {
        out.push("writes are not unique".into());
    }
    let versions = sva.versions();
    let mut by_var: BTreeMap<VarId, Vec<(u64, TxnId)>> = BTreeMap::new();
    for ((t, x), pv) in &versions {
        if *pv > 0 {
            by_var.entry(x.clone()).or_default().push((*pv, *t));
        }
        if let Some(v) = sva.var(x) {
            if !v.counters_consistent() {
                out.push(format!("{x}: inconsistent counters"));
            }
        }
    }
    // The first response of a transaction answers its init.
    let mut started: Vec<TxnId> = Vec::new();
    for e in h.events.iter().filter(|e| e.response().is_some()) {
        if !started.contains(&e.txn) {
            started.push(e.txn);
        }
    }
    for (x, vs) in &mut by_var {
        vs.sort();
        let want: Vec<u64> = (1..=vs.len() as u64).collect();
        if vs.iter().map(|(pv, _)| *pv).collect::<Vec<_>>() != want {
            out.push(format!("{x}: versions are not 1..n"));
        }
        let in_start_order: Vec<TxnId> = started.iter().copied().filter(|t| vs.iter().any(|(_, u)| u == t)).collect();
        if in_start_order != vs.iter().map(|(_, t)| *t).collect::<Vec<_>>() {
            out.push(format!("{x}: versions do not follow start order"));
        }
        for (a, &(_, ti)) in vs.iter().enumerate() {
            for &(_, tj) in &vs[a + 1..] {
                let (ai, aj) = (accesses(h, ti, x), accesses(h, tj, x));
                if let (Some(last_i), Some(first_j)) = (ai.last(), aj.first()) {
                    if last_i > first_j {
                        out.push(format!("{x}: {tj} accessed before {ti} was done with it"));
                    }
                }
                if let (Some(pi), Some(pj)) = (terminal_pos(h, ti), terminal_pos(h, tj)) {
                    if pi > pj {
                        out.push(format!("{x}: {tj} finished before its predecessor {ti}"));
                    }
                }
                if terminal_pos(h, tj).is_some() && terminal_pos(h, ti).is_none() {
                    out.push(format!("{x}: {tj} finished while its predecessor {ti} is live"));
                }
            }
        }
    }
    for (t, op) in h.all_operations() {
        let Some((x, v)) = op.effective_read() else { continue };
        let Value::Written { txn: w, .. } = v else { continue };
        if w == t {
            continue;
        }
        if let Some(p) = terminal_pos(h, w) {
            if aborted(h, w) && p < op.res_pos.expect("effective reads are complete") {
                out.push(format!("{t} read {x} from {w}, aborted before the read"));
            }
        }
        if aborted(h, w) && terminal_pos(h, t).is_some() && !aborted(h, t) {
            out.push(format!("{t} read {x} from aborted {w} and did not abort"));
        }
    }
    out
}
