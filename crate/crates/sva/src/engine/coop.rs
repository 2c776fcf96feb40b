//! Cooperative mode: one logical thread advances transactions one step at
//! a time. Every wait is a point where [`Sva::step`] reports `Blocked`
//! instead of waiting.

use std::collections::BTreeMap;

use lopacity_core::history::{EventKind, History, Invocation, Response, TxnId, Value, VarId};
use lopacity_core::program::AccessBound;

use super::{
    access, access_ready, access_set, assign_version, dismiss, finish, must_abort, restore, terminal_ready,
    AccessOp, AccessOutcome, DismissRule, Recorder, TxnVar, VarState,
};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Request {
    Start,
    Read(VarId),
    Write(VarId, Value),
    Commit,
    Abort,
}

impl Request {
    fn invocation(&self) -> Invocation {
        match self {
            Request::Start => Invocation::Init,
            Request::Read(x) => Invocation::Read(x.clone()),
            Request::Write(x, v) => Invocation::Write(x.clone(), *v),
            Request::Commit => Invocation::TryCommit,
            Request::Abort => Invocation::TryAbort,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Committed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Phase {
    Registered,
    Idle,
    Starting,
    Accessing(VarId, AccessOp),
    Committing(usize),
    Deciding,
    Aborting(usize),
    Finishing,
    Finished(Outcome),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Txn {
    vars: BTreeMap<VarId, TxnVar>,
    phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Progress,
    Blocked,
    Responded(Response),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("{0} is not registered")]
    Unknown(TxnId),
    #[error("{0} is already registered")]
    Registered(TxnId),
    #[error("{0} cannot accept {1:?} now")]
    Busy(TxnId, Request),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Sva {
    vars: BTreeMap<VarId, VarState>,
    txns: BTreeMap<TxnId, Txn>,
    recorder: Recorder,
    rule: DismissRule,
}

impl Sva {
    pub fn new(rule: DismissRule) -> Self {
        Sva { rule, ..Default::default() }
    }

    pub fn register(&mut self, t: TxnId, bounds: &[AccessBound]) -> Result<(), EngineError> {
        if self.txns.contains_key(&t) {
            return Err(EngineError::Registered(t));
        }
        for b in bounds {
            self.vars.entry(b.var.clone()).or_default();
        }
        self.txns.insert(t, Txn { vars: access_set(bounds), phase: Phase::Registered });
        Ok(())
    }

    /// Emits the invocation of `req`.
    pub fn invoke(&mut self, t: TxnId, req: Request) -> Result<(), EngineError> {
        let txn = self.txns.get_mut(&t).ok_or(EngineError::Unknown(t))?;
        let phase = match (&txn.phase, &req) {
            (Phase::Registered, Request::Start) => Phase::Starting,
            (Phase::Idle, Request::Read(x)) => Phase::Accessing(x.clone(), AccessOp::Read),
            (Phase::Idle, Request::Write(x, v)) => Phase::Accessing(x.clone(), AccessOp::Write(*v)),
            (Phase::Idle, Request::Commit) => Phase::Committing(0),
            (Phase::Idle, Request::Abort) => Phase::Aborting(0),
            _ => return Err(EngineError::Busy(t, req)),
        };
        txn.phase = phase;
        self.recorder.emit(t, EventKind::Inv(req.invocation()));
        Ok(())
    }

    /// Whether `t` has an operation in flight that can make progress.
    pub fn ready(&self, t: TxnId) -> bool {
        let Some(txn) = self.txns.get(&t) else { return false };
        match &txn.phase {
            Phase::Registered | Phase::Idle | Phase::Finished(_) => false,
            Phase::Accessing(x, _) => match txn.vars.get(x) {
                Some(tv) if !tv.exhausted() => access_ready(&self.vars[x], tv),
                _ => true,
            },
            Phase::Committing(i) | Phase::Aborting(i) => match txn.vars.iter().nth(*i) {
                Some((x, tv)) => terminal_ready(&self.vars[x], tv),
                None => true,
            },
            Phase::Starting | Phase::Deciding | Phase::Finishing => true,
        }
    }

    pub fn in_flight(&self, t: TxnId) -> bool {
        self.txns.get(&t).is_some_and(|x| {
            !matches!(x.phase, Phase::Registered | Phase::Idle | Phase::Finished(_))
        })
    }

    pub fn outcome(&self, t: TxnId) -> Option<Outcome> {
        match self.txns.get(&t)?.phase {
            Phase::Finished(o) => Some(o),
            _ => None,
        }
    }

    pub fn step(&mut self, t: TxnId) -> Step {
        if !self.ready(t) {
            return Step::Blocked;
        }
        let rule = self.rule;
        let Sva { vars, txns, recorder, .. } = self;
        let txn = txns.get_mut(&t).expect("ready implies registered");
        let (next, response) = match std::mem::replace(&mut txn.phase, Phase::Idle) {
            Phase::Starting => {
                // Cooperative steps are atomic, so the guards of the
                // pseudocode are implicit.
                for (x, tv) in txn.vars.iter_mut() {
                    assign_version(vars.get_mut(x).expect("registered"), tv);
                }
                (Phase::Idle, Some(Response::Ok))
            }
            Phase::Accessing(x, op) => match txn.vars.get_mut(&x) {
                Some(tv) if !tv.exhausted() => {
                    let v = vars.get_mut(&x).expect("registered");
                    match access(v, tv, &op) {
                        AccessOutcome::Done { read, .. } => {
                            (Phase::Idle, Some(read.map_or(Response::Ok, Response::Value)))
                        }
                        AccessOutcome::RolledBack => (Phase::Aborting(0), None),
                    }
                }
                _ => (Phase::Aborting(0), None),
            },
            Phase::Committing(i) => match txn.vars.iter().nth(i) {
                Some((x, tv)) => {
                    dismiss(vars.get_mut(x).expect("registered"), tv, rule);
                    (Phase::Committing(i + 1), None)
                }
                None => (Phase::Deciding, None),
            },
            Phase::Deciding => {
                if txn.vars.iter().any(|(x, tv)| must_abort(&vars[x], tv)) {
                    (Phase::Aborting(0), None)
                } else {
                    recorder.emit(t, EventKind::Res(Response::Committed));
                    for (x, tv) in txn.vars.iter_mut() {
                        finish(vars.get_mut(x).expect("registered"), tv);
                    }
                    txn.phase = Phase::Finished(Outcome::Committed);
                    return Step::Responded(Response::Committed);
                }
            }
            Phase::Aborting(i) => match txn.vars.iter().nth(i) {
                Some((x, tv)) => {
                    let v = vars.get_mut(x).expect("registered");
                    dismiss(v, tv, rule);
                    restore(v, tv);
                    (Phase::Aborting(i + 1), None)
                }
                None => (Phase::Finishing, None),
            },
            Phase::Finishing => {
                recorder.emit(t, EventKind::Res(Response::Aborted));
                for (x, tv) in txn.vars.iter_mut() {
                    finish(vars.get_mut(x).expect("registered"), tv);
                }
                txn.phase = Phase::Finished(Outcome::Aborted);
                return Step::Responded(Response::Aborted);
            }
            p @ (Phase::Registered | Phase::Idle | Phase::Finished(_)) => unreachable!("not ready in {p:?}"),
        };
        txn.phase = next;
        debug_assert!(vars.values().all(VarState::counters_consistent));
        match response {
            Some(r) => {
                recorder.emit(t, EventKind::Res(r));
                Step::Responded(r)
            }
            None => Step::Progress,
        }
    }

    pub fn var(&self, x: &VarId) -> Option<&VarState> {
        self.vars.get(x)
    }

    pub fn txn_var(&self, t: TxnId, x: &VarId) -> Option<&TxnVar> {
        self.txns.get(&t)?.vars.get(x)
    }

    /// Private versions assigned at start.
    pub fn versions(&self) -> BTreeMap<(TxnId, VarId), u64> {
        self.txns
            .iter()
            .flat_map(|(&t, txn)| txn.vars.iter().map(move |(x, tv)| ((t, x.clone()), tv.pv)))
            .collect()
    }

    pub fn values(&self) -> BTreeMap<VarId, Value> {
        self.vars.iter().map(|(x, v)| (x.clone(), v.value)).collect()
    }

    pub fn history(&self) -> History {
        self.recorder.history()
    }

    pub fn event_count(&self) -> usize {
        self.recorder.events().len()
    }

    /// Human-readable counters, for diagnostics.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (x, v) in &self.vars {
            out += &format!("{x}: gv={} lv={} ltv={} cv={} value={}\n", v.gv, v.lv, v.ltv, v.cv, v.value);
        }
        for (t, txn) in &self.txns {
            out += &format!("{t}: {:?}\n", txn.phase);
            for (x, tv) in &txn.vars {
                out += &format!("  {x}: pv={} rv={} cc={} supr={}\n", tv.pv, tv.rv, tv.cc, tv.supr);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lopacity_core::program::Supremum;

    const T1: TxnId = TxnId(1);
    const T2: TxnId = TxnId(2);

    fn bounds(x: &str, n: u32) -> Vec<AccessBound> {
        vec![AccessBound { var: x.into(), supremum: Supremum::Finite(n) }]
    }

    fn run(sva: &mut Sva, t: TxnId, req: Request) -> Option<Response> {
        sva.invoke(t, req).unwrap();
        loop {
            match sva.step(t) {
                Step::Responded(r) => return Some(r),
                Step::Blocked => return None,
                Step::Progress => {}
            }
        }
    }

    #[test]
    fn reader_waits_for_release() {
        let mut sva = Sva::new(DismissRule::Versioned);
        sva.register(T1, &bounds("x", 2)).unwrap();
        sva.register(T2, &bounds("x", 1)).unwrap();
        run(&mut sva, T1, Request::Start);
        run(&mut sva, T2, Request::Start);
        assert_eq!(run(&mut sva, T2, Request::Read("x".into())), None);
        run(&mut sva, T1, Request::Read("x".into()));
        assert!(!sva.ready(T2));
        let v = Value::written(T1, 1);
        run(&mut sva, T1, Request::Write("x".into(), v));
        assert!(sva.ready(T2));
        assert_eq!(sva.step(T2), Step::Responded(Response::Value(v)));
    }

    #[test]
    fn supremum_violation_aborts() {
        let mut sva = Sva::new(DismissRule::Versioned);
        sva.register(T1, &bounds("x", 1)).unwrap();
        run(&mut sva, T1, Request::Start);
        run(&mut sva, T1, Request::Read("x".into()));
        assert_eq!(run(&mut sva, T1, Request::Read("x".into())), Some(Response::Aborted));
        assert_eq!(sva.outcome(T1), Some(Outcome::Aborted));
        assert_eq!(sva.invoke(T1, Request::Commit), Err(EngineError::Busy(T1, Request::Commit)));
    }

    #[test]
    fn access_outside_access_set_aborts() {
        let mut sva = Sva::new(DismissRule::Versioned);
        sva.register(T1, &bounds("x", 1)).unwrap();
        run(&mut sva, T1, Request::Start);
        assert_eq!(run(&mut sva, T1, Request::Read("y".into())), Some(Response::Aborted));
    }
}
