//! Runs workloads through the cooperative engine.
//!
//! A run is a sequence of decisions, each naming the transaction that
//! takes the next step. At [`Granularity::Event`] a step is one invocation
//! or one engine step (a wait check, a per-variable commit/abort step, or
//! an access with its response). At [`Granularity::Operation`] a step runs
//! the chosen transaction until it gets a response or blocks.

mod explore;
mod invariants;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use lopacity_core::history::{History, Invocation, Response, TxnId, Value, VarId};
use lopacity_core::program::{supremum_of, Cursor, OpShape, ProgramError, ProgramSpec};

use crate::engine::coop::{EngineError, Request, Step, Sva};
use crate::engine::DismissRule;

pub use explore::{explore, histories, Counterexample, ExploreConfig, ExploreMode, ExplorationResult, PropertySet, Tally};
pub use invariants::check_invariants;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Granularity {
    Event,
    #[default]
    Operation,
}

/// Decisions in order. Text form: transaction ids separated by
/// whitespace or commas, `T1*3` repeating one, `#` starting a comment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Schedule {
    pub decisions: Vec<TxnId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("schedule token {index}: {message}")]
pub struct ScheduleError {
    pub index: usize,
    pub message: String,
}

impl FromStr for Schedule {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut decisions = Vec::new();
        let tokens = s
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
            .filter(|t| !t.is_empty());
        for (index, tok) in tokens.enumerate() {
            let err = |m: &str| ScheduleError { index: index + 1, message: format!("{tok:?}: {m}") };
            let (id, n) = match tok.split_once('*') {
                Some((id, n)) => (id, n.parse::<usize>().map_err(|_| err("bad repeat count"))?),
                None => (tok, 1),
            };
            let t: TxnId = id.parse().map_err(|_| err("expected a transaction id"))?;
            decisions.extend(std::iter::repeat_n(t, n));
        }
        Ok(Schedule { decisions })
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut i = 0;
        while i < self.decisions.len() {
            let t = self.decisions[i];
            let n = self.decisions[i..].iter().take_while(|&&u| u == t).count();
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            if n > 1 {
                write!(f, "{t}*{n}")?;
            } else {
                write!(f, "{t}")?;
            }
            i += n;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("decision {index} names {txn}, which cannot step\n{dump}")]
    NotRunnable { index: usize, txn: TxnId, dump: String },
    #[error("every unfinished transaction is blocked\n{0}")]
    Deadlock(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Phase {
    NotStarted,
    Idle,
    InFlight,
    Done,
}

#[derive(Clone, Debug)]
struct Worker<'a> {
    cursor: Cursor<'a>,
    last_read: Option<Value>,
    writes: u32,
    phase: Phase,
    process: Option<u32>,
}

/// State of one run, cheap to clone for exploration.
#[derive(Clone, Debug)]
pub struct Machine<'a> {
    sva: Sva,
    workers: BTreeMap<TxnId, Worker<'a>>,
    granularity: Granularity,
    waited: BTreeSet<TxnId>,
}

/// Everything that determines the future of a run; the cursors follow
/// from the recorded history.
#[derive(Clone, PartialEq, Eq, Hash)]
pub(crate) struct StateKey {
    sva: Sva,
    phases: Vec<Phase>,
}

impl<'a> Machine<'a> {
    pub fn new(spec: &'a ProgramSpec, granularity: Granularity, rule: DismissRule) -> Result<Self, RunError> {
        spec.validate()?;
        let mut sva = Sva::new(rule);
        let mut workers = BTreeMap::new();
        for (&t, prog) in &spec.txns {
            sva.register(t, &supremum_of(spec, t)?)?;
            workers.insert(
                t,
                Worker {
                    cursor: Cursor::new(&prog.body),
                    last_read: None,
                    writes: 0,
                    phase: Phase::NotStarted,
                    process: prog.process,
                },
            );
        }
        Ok(Machine { sva, workers, granularity, waited: BTreeSet::new() })
    }

    pub fn done(&self) -> bool {
        self.workers.values().all(|w| w.phase == Phase::Done)
    }

    fn process_free(&self, t: TxnId) -> bool {
        let Some(p) = self.workers[&t].process else { return true };
        self.workers.range(..t).all(|(_, w)| w.process != Some(p) || w.phase == Phase::Done)
    }

    pub fn runnable(&self, t: TxnId) -> bool {
        match self.workers.get(&t).map(|w| w.phase) {
            Some(Phase::NotStarted) => self.process_free(t),
            Some(Phase::Idle) => true,
            Some(Phase::InFlight) => self.sva.ready(t),
            Some(Phase::Done) | None => false,
        }
    }

    pub fn runnable_txns(&self) -> Vec<TxnId> {
        self.workers.keys().copied().filter(|&t| self.runnable(t)).collect()
    }

    /// Transactions with an operation in flight that cannot progress.
    pub fn blocked_txns(&self) -> Vec<TxnId> {
        self.workers
            .iter()
            .filter(|(&t, w)| w.phase == Phase::InFlight && !self.sva.ready(t))
            .map(|(&t, _)| t)
            .collect()
    }

    /// Transactions that were seen blocked at some point of the run.
    pub fn waited(&self) -> &BTreeSet<TxnId> {
        &self.waited
    }

    fn invoke_next(&mut self, t: TxnId) -> Result<(), RunError> {
        let w = self.workers.get_mut(&t).expect("known transaction");
        let req = if w.phase == Phase::NotStarted {
            Request::Start
        } else {
            match w.cursor.next_op(w.last_read) {
                Some(OpShape::Read(x)) => Request::Read(x),
                Some(OpShape::Write(x)) => {
                    w.writes += 1;
                    Request::Write(x, Value::written(t, w.writes))
                }
                Some(OpShape::TryAbort) => Request::Abort,
                Some(OpShape::TryCommit) | None => Request::Commit,
            }
        };
        w.phase = Phase::InFlight;
        self.sva.invoke(t, req)?;
        Ok(())
    }

    fn engine_step(&mut self, t: TxnId) -> Step {
        let s = self.sva.step(t);
        if let Step::Responded(r) = s {
            let w = self.workers.get_mut(&t).expect("known transaction");
            w.phase = match r {
                Response::Committed | Response::Aborted => Phase::Done,
                _ => Phase::Idle,
            };
            if let Response::Value(v) = r {
                w.last_read = Some(v);
            }
        }
        s
    }

    /// One decision for `t`; the caller checks [`Self::runnable`].
    pub fn step(&mut self, t: TxnId) -> Result<(), RunError> {
        debug_assert!(self.runnable(t));
        match self.granularity {
            Granularity::Event => {
                if matches!(self.workers[&t].phase, Phase::NotStarted | Phase::Idle) {
                    self.invoke_next(t)?;
                } else {
                    self.engine_step(t);
                }
            }
            Granularity::Operation => {
                if matches!(self.workers[&t].phase, Phase::NotStarted | Phase::Idle) {
                    self.invoke_next(t)?;
                }
                while let Step::Progress = self.engine_step(t) {}
            }
        }
        self.waited.extend(self.blocked_txns());
        Ok(())
    }

    pub fn history(&self) -> History {
        let mut h = self.sva.history();
        h.processes = self.workers.iter().filter_map(|(&t, w)| w.process.map(|p| (t, p))).collect();
        h
    }

    pub fn sva(&self) -> &Sva {
        &self.sva
    }

    pub fn dump(&self) -> String {
        let mut out = self.sva.dump();
        for (t, w) in &self.workers {
            out += &format!("{t}: harness {:?}\n", w.phase);
        }
        out
    }

    pub(crate) fn key(&self) -> StateKey {
        StateKey { sva: self.sva.clone(), phases: self.workers.values().map(|w| w.phase).collect() }
    }
}

/// A finished run.
#[derive(Clone, Debug)]
pub struct Run {
    pub history: History,
    /// The decisions actually taken, including the defaulted ones.
    pub schedule: Schedule,
    /// Transactions that were blocked at some decision point.
    pub waited: BTreeSet<TxnId>,
    /// Variable values after the run.
    pub values: BTreeMap<VarId, Value>,
}

/// Runs `spec` following `schedule`; once the schedule is used up, the
/// lowest runnable transaction steps.
pub fn run(spec: &ProgramSpec, schedule: &Schedule, granularity: Granularity) -> Result<Run, RunError> {
    run_with(spec, schedule, granularity, DismissRule::default())
}

pub fn run_with(
    spec: &ProgramSpec,
    schedule: &Schedule,
    granularity: Granularity,
    rule: DismissRule,
) -> Result<Run, RunError> {
    let mut m = Machine::new(spec, granularity, rule)?;
    let mut taken = Vec::new();
    let mut given = schedule.decisions.iter();
    while !m.done() {
        let t = match given.next() {
            Some(&t) => {
                if !m.runnable(t) {
                    return Err(RunError::NotRunnable { index: taken.len() + 1, txn: t, dump: m.dump() });
                }
                t
            }
            None => match m.runnable_txns().first() {
                Some(&t) => t,
                None => return Err(RunError::Deadlock(m.dump())),
            },
        };
        m.step(t)?;
        taken.push(t);
    }
    Ok(Run {
        history: m.history(),
        schedule: Schedule { decisions: taken },
        waited: m.waited.clone(),
        values: m.sva.values(),
    })
}

/// Invocation of the operation `t` has in flight, if any.
pub fn pending_invocation(h: &History, t: TxnId) -> Option<Invocation> {
    h.operations(t).into_iter().rev().find(|op| !op.is_complete()).map(|op| op.invocation().clone())
}
