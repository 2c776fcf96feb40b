use std::collections::{BTreeMap, BTreeSet};

use super::{EventKind, History, TxnId, Value, VarId};

/// The real-time partial order of a history, materialized as pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RealTimeOrder {
    pairs: BTreeSet<(TxnId, TxnId)>,
}

impl RealTimeOrder {
    pub fn of(h: &History) -> Self {
        let txns = h.txns();
        let mut pairs = BTreeSet::new();
        for &a in &txns {
            for &b in &txns {
                if h.real_time_precedes(a, b) {
                    pairs.insert((a, b));
                }
            }
        }
        RealTimeOrder { pairs }
    }

    pub fn precedes(&self, a: TxnId, b: TxnId) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (TxnId, TxnId)> + '_ {
        self.pairs.iter().copied()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LegalityError {
    #[error("history is not sequential: {0} is interleaved with another transaction")]
    NotSequential(TxnId),
    #[error("{0} is aborted but is not the last transaction")]
    AbortedBeforeLast(TxnId),
}

/// Every transaction's events are contiguous.
pub fn is_sequential(s: &History) -> bool {
    first_interleaved(s).is_none()
}

fn first_interleaved(s: &History) -> Option<TxnId> {
    let mut closed = BTreeSet::new();
    let mut current: Option<TxnId> = None;
    for e in &s.events {
        if current != Some(e.txn) {
            if closed.contains(&e.txn) {
                return Some(e.txn);
            }
            if let Some(c) = current {
                closed.insert(c);
            }
            current = Some(e.txn);
        }
    }
    None
}

/// Concatenates `h|t` for each `t` in `order`, renumbering events from 1.
pub fn sequential_from_order(h: &History, order: &[TxnId]) -> History {
    let mut out = History { events: Vec::with_capacity(h.len()), processes: h.processes.clone() };
    for &t in order {
        out.events.extend(h.events.iter().filter(|e| e.txn == t).cloned());
    }
    for (i, e) in out.events.iter_mut().enumerate() {
        e.seq = i as u64 + 1;
    }
    out
}

/// Sequential histories equivalent to `hc` that preserve its real-time
/// order, in lexicographic order of the transaction sequence.
pub fn sequential_extensions(hc: &History) -> Vec<History> {
    let txns = {
        let mut t = hc.txns();
        t.sort();
        t
    };
    let rt = RealTimeOrder::of(hc);
    let mut out = Vec::new();
    let mut order = Vec::with_capacity(txns.len());
    let mut used = vec![false; txns.len()];
    extend(&txns, &rt, &mut order, &mut used, &mut |order| {
        out.push(sequential_from_order(hc, order));
    });
    out
}

fn extend(
    txns: &[TxnId],
    rt: &RealTimeOrder,
    order: &mut Vec<TxnId>,
    used: &mut [bool],
    emit: &mut dyn FnMut(&[TxnId]),
) {
    if order.len() == txns.len() {
        emit(order);
        return;
    }
    for i in 0..txns.len() {
        if used[i] {
            continue;
        }
        let t = txns[i];
        let ready = txns
            .iter()
            .enumerate()
            .all(|(j, &u)| used[j] || u == t || !rt.precedes(u, t));
        if !ready {
            continue;
        }
        used[i] = true;
        order.push(t);
        extend(txns, rt, order, used, emit);
        order.pop();
        used[i] = false;
    }
}

/// Legality of a sequential history: per variable, every read returns the
/// latest preceding effective write, or the initial value.
///
/// Writes answered with an abort have no effect and reads answered with
/// an abort constrain nothing.
pub fn is_legal_sequential(s: &History) -> Result<bool, LegalityError> {
    if let Some(t) = first_interleaved(s) {
        return Err(LegalityError::NotSequential(t));
    }
    let order = s.txns();
    if let Some((_, init)) = order.split_last() {
        if let Some(&t) = init.iter().find(|&&t| s.status_unchecked(t) == super::TxnStatus::Aborted) {
            return Err(LegalityError::AbortedBeforeLast(t));
        }
    }
    Ok(replay_legal(s))
}

pub(crate) fn replay_legal(s: &History) -> bool {
    let mut state: BTreeMap<VarId, Value> = BTreeMap::new();
    for t in s.txns() {
        for op in s.operations(t) {
            if let Some((x, v)) = op.effective_write() {
                state.insert(x.clone(), v);
            } else if let Some((x, v)) = op.effective_read() {
                let cur = state.get(x).copied().unwrap_or(Value::Initial);
                if !same_value(cur, v) {
                    return false;
                }
            }
        }
    }
    true
}

pub(crate) fn same_value(a: Value, b: Value) -> bool {
    a == b || (a.is_initial() && b.is_initial())
}

/// `s|t` plus `s|Tj` for every committed `Tj` before `t` in `s`.
pub fn vis(s: &History, t: TxnId) -> History {
    let Some((first, _)) = s.span(t) else {
        return History { events: Vec::new(), processes: s.processes.clone() };
    };
    let include: BTreeSet<TxnId> = s
        .txns()
        .into_iter()
        .filter(|&u| u == t || (s.span(u).is_some_and(|(_, l)| l < first) && s.is_committed(u)))
        .collect();
    History {
        events: s.events.iter().filter(|e| include.contains(&e.txn)).cloned().collect(),
        processes: s.processes.clone(),
    }
}

pub fn transaction_legal(s: &History, t: TxnId) -> Result<bool, LegalityError> {
    is_legal_sequential(&vis(s, t))
}

/// Equality of per-transaction projections, ignoring sequence numbers.
pub fn equivalent(a: &History, b: &History) -> bool {
    let proj = |h: &History| -> BTreeMap<TxnId, Vec<EventKind>> {
        let mut m: BTreeMap<TxnId, Vec<EventKind>> = BTreeMap::new();
        for e in &h.events {
            m.entry(e.txn).or_default().push(e.kind.clone());
        }
        m
    };
    proj(a) == proj(b)
}
