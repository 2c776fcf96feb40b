//! History-level views: LUVis candidates and witness replay.
//!
//! These work on [`History`] values through the history-core primitives
//! and are slow. The indexed search never calls them; they serve as the
//! reference the search is tested against.

use std::collections::{BTreeMap, BTreeSet};

use crate::history::{
    completions, is_legal_sequential, sequential_from_order, transaction_legal, Event, History,
    RealTimeOrder, TxnId, VarId,
};
use crate::program::{decided_vars, restrict_to, AlignmentError, LastWriteOracle};

use super::{Criterion, Witness};

/// Transactions before `t` in sequential `s` that may optionally join its
/// view: not committed in `s`, decided on something, and not preceding `t`
/// in `rt`.
pub fn luvis_optional(
    s: &History,
    t: TxnId,
    decided: &BTreeMap<TxnId, BTreeSet<VarId>>,
    rt: &RealTimeOrder,
) -> Vec<TxnId> {
    let order = s.txns();
    let pos = order.iter().position(|&u| u == t).unwrap_or(order.len());
    order[..pos]
        .iter()
        .copied()
        .filter(|&j| !s.is_committed(j))
        .filter(|j| decided.get(j).is_some_and(|d| !d.is_empty()))
        .filter(|&j| !rt.precedes(j, t))
        .collect()
}

/// The view of `t` in `s` that adds the decided subhistory completion of
/// every transaction in `include`. Events are renumbered from 1.
pub fn luvis_with(
    s: &History,
    t: TxnId,
    decided: &BTreeMap<TxnId, BTreeSet<VarId>>,
    include: &[TxnId],
) -> History {
    let order = s.txns();
    let pos = order.iter().position(|&u| u == t).unwrap_or(order.len());
    let mut events: Vec<Event> = Vec::new();
    for &u in &order[..pos] {
        if s.is_committed(u) {
            events.extend(s.events.iter().filter(|e| e.txn == u).cloned());
        } else if include.contains(&u) {
            let empty = BTreeSet::new();
            let vars = decided.get(&u).unwrap_or(&empty);
            events.extend(restrict_to(s, u, vars, true).events);
        }
    }
    events.extend(s.events.iter().filter(|e| e.txn == t).cloned());
    for (i, e) in events.iter_mut().enumerate() {
        e.seq = i as u64 + 1;
    }
    History { events, processes: s.processes.clone() }
}

/// Every LUVis variant of `t`, in ascending inclusion-bitmask order; bit
/// `k` stands for the `k`-th optional transaction in `s` order.
pub fn luvis_candidates(
    s: &History,
    t: TxnId,
    decided: &BTreeMap<TxnId, BTreeSet<VarId>>,
    rt: &RealTimeOrder,
) -> Vec<History> {
    let opts = luvis_optional(s, t, decided, rt);
    (0..1u64 << opts.len())
        .map(|mask| {
            let inc: Vec<TxnId> =
                opts.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &j)| j).collect();
            luvis_with(s, t, decided, &inc)
        })
        .collect()
}

pub fn decided_map(
    h: &History,
    oracle: &dyn LastWriteOracle,
    beta: bool,
) -> Result<BTreeMap<TxnId, BTreeSet<VarId>>, AlignmentError> {
    h.txns().into_iter().map(|t| Ok((t, decided_vars(h, oracle, t, beta)?))).collect()
}

/// Re-derives a witness with history-level primitives only.
pub(crate) fn replay_witness(
    h: &History,
    w: &Witness,
    criterion: Criterion,
    decided: &BTreeMap<TxnId, BTreeSet<VarId>>,
) -> bool {
    let comps = completions(h);
    if w.completion >= comps.total() {
        return false;
    }
    let c = comps.get(w.completion);
    let mut sorted = w.order.clone();
    sorted.sort();
    let mut all = c.txns();
    all.sort();
    if sorted != all {
        return false;
    }
    let s = sequential_from_order(&c, &w.order);
    // Every completion has the same real-time order: its added events come last.
    let rt = RealTimeOrder::of(&c);
    if criterion != Criterion::Serializable {
        let pos = |t: TxnId| w.order.iter().position(|&u| u == t);
        if rt.pairs().any(|(a, b)| pos(a) > pos(b)) {
            return false;
        }
    }
    for &t in &w.order {
        let ok = if c.is_committed(t) || criterion == Criterion::Opacity {
            transaction_legal(&s, t) == Ok(true)
        } else if criterion == Criterion::Serializable {
            true
        } else {
            let inc = w.inclusions.get(&t).cloned().unwrap_or_default();
            let allowed = luvis_optional(&s, t, decided, &rt);
            inc.iter().all(|j| allowed.contains(j))
                && is_legal_sequential(&luvis_with(&s, t, decided, &inc)) == Ok(true)
        };
        if !ok {
            return false;
        }
    }
    true
}
