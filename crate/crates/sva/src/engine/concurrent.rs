//! Threaded mode: each transaction runs on its own thread; every variable's
//! counters sit behind a mutex with a condition variable that is notified
//! on each counter change.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};

use lopacity_core::history::{EventKind, History, Invocation, Response, TxnId, Value, VarId};
use lopacity_core::program::{supremum_of, Cursor, OpShape, ProgramError, ProgramSpec};

use super::{
    access, access_ready, access_set, assign_version, dismiss, finish, must_abort, restore, terminal_ready,
    AccessOp, AccessOutcome, DismissRule, Recorder, TxnVar, VarState,
};
use super::coop::Outcome;

struct Slot {
    state: Mutex<VarState>,
    changed: Condvar,
}

pub struct Shared {
    vars: BTreeMap<VarId, Slot>,
    recorder: Mutex<Recorder>,
    rule: DismissRule,
    waits: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("transaction aborted")]
pub struct Aborted;

impl Shared {
    pub fn new<'a>(vars: impl IntoIterator<Item = &'a VarId>, rule: DismissRule) -> Self {
        let vars = vars
            .into_iter()
            .map(|x| (x.clone(), Slot { state: Mutex::new(VarState::default()), changed: Condvar::new() }))
            .collect();
        Shared { vars, recorder: Mutex::new(Recorder::default()), rule, waits: AtomicUsize::new(0) }
    }

    fn emit(&self, t: TxnId, kind: EventKind) {
        self.recorder.lock().expect("recorder poisoned").emit(t, kind);
    }

    fn lock(&self, x: &VarId) -> MutexGuard<'_, VarState> {
        self.vars[x].state.lock().expect("variable poisoned")
    }

    /// Blocks until `cond` holds for `x` and returns the guard.
    fn wait_for(&self, x: &VarId, cond: impl Fn(&VarState) -> bool) -> MutexGuard<'_, VarState> {
        let slot = &self.vars[x];
        let mut g = slot.state.lock().expect("variable poisoned");
        while !cond(&g) {
            self.waits.fetch_add(1, Ordering::Relaxed);
            g = slot.changed.wait(g).expect("variable poisoned");
        }
        g
    }

    fn notify(&self, x: &VarId) {
        self.vars[x].changed.notify_all();
    }

    /// Number of times any transaction went to sleep on a condition.
    pub fn waits(&self) -> usize {
        self.waits.load(Ordering::Relaxed)
    }

    pub fn history(&self) -> History {
        self.recorder.lock().expect("recorder poisoned").history()
    }
}

/// One transaction, owned by the thread that runs it.
pub struct TxnHandle<'a> {
    shared: &'a Shared,
    t: TxnId,
    vars: BTreeMap<VarId, TxnVar>,
    writes: u32,
}

impl<'a> TxnHandle<'a> {
    pub fn new(shared: &'a Shared, t: TxnId, vars: BTreeMap<VarId, TxnVar>) -> Self {
        TxnHandle { shared, t, vars, writes: 0 }
    }

    pub fn start(&mut self) {
        self.shared.emit(self.t, EventKind::Inv(Invocation::Init));
        let mut guards: Vec<_> = self.vars.keys().map(|x| self.shared.lock(x)).collect();
        for (g, tv) in guards.iter_mut().zip(self.vars.values_mut()) {
            assign_version(g, tv);
        }
        // Vec drops its elements front to back: unlock in lock order.
        drop(guards);
        self.shared.emit(self.t, EventKind::Res(Response::Ok));
    }

    pub fn read(&mut self, x: &VarId) -> Result<Value, Aborted> {
        self.shared.emit(self.t, EventKind::Inv(Invocation::Read(x.clone())));
        self.access(x, AccessOp::Read).map(|v| v.expect("reads return a value"))
    }

    /// Writes the next value of this transaction and returns it.
    pub fn write(&mut self, x: &VarId) -> Result<Value, Aborted> {
        self.writes += 1;
        let v = Value::written(self.t, self.writes);
        self.shared.emit(self.t, EventKind::Inv(Invocation::Write(x.clone(), v)));
        self.access(x, AccessOp::Write(v)).map(|_| v)
    }

    fn access(&mut self, x: &VarId, op: AccessOp) -> Result<Option<Value>, Aborted> {
        let t = self.t;
        let Some(tv) = self.vars.get_mut(x).filter(|tv| !tv.exhausted()) else {
            self.abort_procedure();
            return Err(Aborted);
        };
        let mut g = self.shared.wait_for(x, |v| access_ready(v, tv));
        match access(&mut g, tv, &op) {
            AccessOutcome::Done { read, released } => {
                self.shared.emit(t, EventKind::Res(read.map_or(Response::Ok, Response::Value)));
                drop(g);
                if released {
                    self.shared.notify(x);
                }
                Ok(read)
            }
            AccessOutcome::RolledBack => {
                drop(g);
                self.abort_procedure();
                Err(Aborted)
            }
        }
    }

    pub fn commit(mut self) -> Outcome {
        self.shared.emit(self.t, EventKind::Inv(Invocation::TryCommit));
        for (x, tv) in &self.vars {
            let mut g = self.shared.wait_for(x, |v| terminal_ready(v, tv));
            dismiss(&mut g, tv, self.shared.rule);
            drop(g);
            self.shared.notify(x);
        }
        let mut guards: Vec<_> = self.vars.keys().map(|x| self.shared.lock(x)).collect();
        if guards.iter().zip(self.vars.values()).any(|(g, tv)| must_abort(g, tv)) {
            drop(guards);
            self.abort_procedure();
            return Outcome::Aborted;
        }
        self.shared.emit(self.t, EventKind::Res(Response::Committed));
        for (g, tv) in guards.iter_mut().zip(self.vars.values_mut()) {
            finish(g, tv);
        }
        drop(guards);
        self.vars.keys().for_each(|x| self.shared.notify(x));
        Outcome::Committed
    }

    pub fn abort(mut self) {
        self.shared.emit(self.t, EventKind::Inv(Invocation::TryAbort));
        self.abort_procedure();
    }

    fn abort_procedure(&mut self) {
        for (x, tv) in &self.vars {
            let mut g = self.shared.wait_for(x, |v| terminal_ready(v, tv));
            dismiss(&mut g, tv, self.shared.rule);
            restore(&mut g, tv);
            drop(g);
            self.shared.notify(x);
        }
        let mut guards: Vec<_> = self.vars.keys().map(|x| self.shared.lock(x)).collect();
        self.shared.emit(self.t, EventKind::Res(Response::Aborted));
        for (g, tv) in guards.iter_mut().zip(self.vars.values_mut()) {
            finish(g, tv);
        }
        drop(guards);
        self.vars.keys().for_each(|x| self.shared.notify(x));
    }
}

/// Result of a threaded run.
pub struct ThreadedRun {
    pub history: History,
    pub waits: usize,
}

/// Runs every transaction of `spec` on its own thread. Transactions start
/// in id order (each thread starts once the previous one has), so versions
/// follow ids; everything after start interleaves freely.
pub fn run_threads(spec: &ProgramSpec, rule: DismissRule) -> Result<ThreadedRun, ProgramError> {
    spec.validate()?;
    let mut bounds = BTreeMap::new();
    for &t in spec.txns.keys() {
        bounds.insert(t, supremum_of(spec, t)?);
    }
    let vars: Vec<VarId> = bounds.values().flatten().map(|b| b.var.clone()).collect();
    let shared = Shared::new(&vars, rule);
    let started = (Mutex::new(0usize), Condvar::new());
    std::thread::scope(|s| {
        for (k, (&t, prog)) in spec.txns.iter().enumerate() {
            let shared = &shared;
            let started = &started;
            let set = access_set(&bounds[&t]);
            s.spawn(move || {
                let mut h = TxnHandle::new(shared, t, set);
                {
                    let mut n = started.0.lock().expect("start gate");
                    while *n != k {
                        n = started.1.wait(n).expect("start gate");
                    }
                    h.start();
                    *n += 1;
                    started.1.notify_all();
                }
                drive(h, &prog.body);
            });
        }
    });
    Ok(ThreadedRun { history: shared.history(), waits: shared.waits() })
}

fn drive(mut h: TxnHandle<'_>, body: &[lopacity_core::program::Node]) {
    let mut cursor = Cursor::new(body);
    let mut last = None;
    loop {
        let r = match cursor.next_op(last) {
            Some(OpShape::Read(x)) => h.read(&x).map(|v| last = Some(v)),
            Some(OpShape::Write(x)) => h.write(&x).map(|_| ()),
            Some(OpShape::TryAbort) => return h.abort(),
            Some(OpShape::TryCommit) | None => {
                h.commit();
                return;
            }
        };
        if r.is_err() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lopacity_core::checkers::{check_lu_opacity, Mode};
    use lopacity_core::history::validate_well_formed;
    use lopacity_core::program::dsl;

    #[test]
    fn threaded_runs_are_last_use_opaque() {
        let spec = dsl::parse(
            "txn T1\n read x\n write x\n read y\n write y\ntxn T2\n read x\n write x\ntxn T3\n read y\n write y\n tryA\n",
        )
        .unwrap();
        let p = spec.compile().unwrap();
        for _ in 0..50 {
            let run = run_threads(&spec, DismissRule::Versioned).unwrap();
            assert_eq!(validate_well_formed(&run.history), Ok(()));
            assert!(check_lu_opacity(&run.history, &p, Mode::Full, false).unwrap().holds, "{}", run.history);
        }
    }
}
