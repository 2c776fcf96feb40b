//! The supremum versioning algorithm.
//!
//! The per-variable primitives here are pure functions over one
//! variable's counters and one transaction's view of it. [`coop`] drives
//! them from a scheduler one step at a time; [`concurrent`] runs each
//! transaction on its own thread.

pub mod concurrent;
pub mod coop;

use std::collections::BTreeMap;

use lopacity_core::history::{Event, EventKind, History, TxnId, Value, VarId};
use lopacity_core::program::{AccessBound, Supremum};

/// Shared counters and current value of one variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarState {
    pub gv: u64,
    pub lv: u64,
    pub ltv: u64,
    pub cv: u64,
    pub value: Value,
}

impl Default for VarState {
    fn default() -> Self {
        VarState { gv: 0, lv: 0, ltv: 0, cv: 0, value: Value::Initial }
    }
}

impl VarState {
    pub fn counters_consistent(&self) -> bool {
        self.ltv <= self.lv && self.lv <= self.gv && self.cv <= self.gv
    }
}

/// One transaction's counters for one variable of its access set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TxnVar {
    pub pv: u64,
    pub rv: u64,
    pub cc: u32,
    pub supr: Supremum,
    pub st: Option<Value>,
}

impl TxnVar {
    pub fn new(supr: Supremum) -> Self {
        TxnVar { pv: 0, rv: 0, cc: 0, supr, st: None }
    }

    /// Another access would exceed the supremum.
    pub fn exhausted(&self) -> bool {
        matches!(self.supr, Supremum::Finite(n) if self.cc >= n)
    }
}

pub fn access_set(bounds: &[AccessBound]) -> BTreeMap<VarId, TxnVar> {
    bounds.iter().map(|b| (b.var.clone(), TxnVar::new(b.supremum))).collect()
}

/// Start for one variable; callers hold the variable's guard.
pub fn assign_version(v: &mut VarState, tv: &mut TxnVar) {
    v.gv += 1;
    tv.pv = v.gv;
}

pub fn access_ready(v: &VarState, tv: &TxnVar) -> bool {
    v.lv + 1 == tv.pv
}

pub fn terminal_ready(v: &VarState, tv: &TxnVar) -> bool {
    v.ltv + 1 == tv.pv
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AccessOp {
    Read,
    Write(Value),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessOutcome {
    /// The value read (for reads) and whether the variable was released.
    Done { read: Option<Value>, released: bool },
    /// The version seen first is no longer current; the transaction must abort.
    RolledBack,
}

/// The body of `access` after its wait: checkpoint, version check, the
/// operation itself, and early release once the supremum is reached.
pub fn access(v: &mut VarState, tv: &mut TxnVar, op: &AccessOp) -> AccessOutcome {
    debug_assert!(access_ready(v, tv));
    if tv.cc == 0 {
        tv.st = Some(v.value);
        tv.rv = v.cv;
    }
    if tv.rv != v.cv {
        return AccessOutcome::RolledBack;
    }
    let read = match op {
        AccessOp::Read => Some(v.value),
        AccessOp::Write(x) => {
            v.value = *x;
            None
        }
    };
    tv.cc += 1;
    let released = tv.supr == Supremum::Finite(tv.cc);
    if released {
        v.cv = tv.pv;
        v.lv = tv.pv;
    }
    AccessOutcome::Done { read, released }
}

/// How `dismiss` treats a variable that was accessed but never released.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DismissRule {
    /// Only the two statements of the pseudocode.
    Literal,
    /// Also publishes the transaction's version (`cv <- pv`) when it
    /// accessed the variable without reaching its supremum and nobody
    /// rolled the variable back. Without this, a transaction that stops
    /// short of its supremum and then aborts finds `rv = cv` in `restore`
    /// and leaves its writes in place.
    #[default]
    Versioned,
}

pub fn dismiss(v: &mut VarState, tv: &TxnVar, rule: DismissRule) {
    if tv.cc == 0 && tv.rv == v.cv {
        v.cv = tv.pv;
    }
    if access_ready(v, tv) {
        if rule == DismissRule::Versioned && tv.cc > 0 && tv.rv == v.cv {
            v.cv = tv.pv;
        }
        v.lv = tv.pv;
    }
}

pub fn restore(v: &mut VarState, tv: &TxnVar) {
    if tv.cc != 0 && tv.rv < v.cv {
        v.value = tv.st.expect("checkpoint precedes any access");
        v.cv = tv.rv;
    }
}

/// Commit decision: some variable was rolled back below the version the
/// transaction first saw.
pub fn must_abort(v: &VarState, tv: &TxnVar) -> bool {
    tv.rv > v.cv
}

/// Last step of commit and abort for one variable.
pub fn finish(v: &mut VarState, tv: &mut TxnVar) {
    tv.st = None;
    v.ltv = tv.pv;
}

/// Assigns consecutive sequence numbers to emitted events.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Recorder {
    events: Vec<Event>,
}

impl Recorder {
    pub fn emit(&mut self, txn: TxnId, kind: EventKind) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(Event { seq, txn, kind });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn history(&self) -> History {
        History::new(self.events.clone())
    }
}
