//! Seeded generator of small programs and histories they can produce.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::{History, HistoryBuilder, Invocation, Response, TxnId, TxnStatus, Value, VarId};
use crate::program::{BranchCond, Cursor, Node, OpShape, ProgramSpec, TxnProgram};

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub txns: RangeInclusive<usize>,
    /// Shared-variable operations per transaction, before branching.
    pub ops: RangeInclusive<usize>,
    pub vars: Vec<VarId>,
    pub p_try_abort: f64,
    pub p_branch: f64,
    /// Chance that a response is replaced by an abort.
    pub p_forced_abort: f64,
    /// Chance that a read ignores writes of live transactions.
    pub p_committed_read: f64,
    /// Chance that the history is cut at a random length.
    pub p_truncate: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            txns: 2..=4,
            ops: 1..=3,
            vars: vec![VarId::new("x"), VarId::new("y")],
            p_try_abort: 0.2,
            p_branch: 0.2,
            p_forced_abort: 0.05,
            p_committed_read: 0.3,
            p_truncate: 0.3,
        }
    }
}

fn access<R: Rng>(rng: &mut R, vars: &[VarId]) -> Node {
    let x = vars.choose(rng).expect("at least one variable").clone();
    if rng.gen_bool(0.5) {
        Node::Read(x)
    } else {
        Node::Write(x)
    }
}

pub fn random_program<R: Rng>(rng: &mut R, cfg: &GenConfig) -> ProgramSpec {
    let mut spec = ProgramSpec::new();
    for i in 1..=rng.gen_range(cfg.txns.clone()) {
        let mut body: Vec<Node> = (0..rng.gen_range(cfg.ops.clone())).map(|_| access(rng, &cfg.vars)).collect();
        if rng.gen_bool(cfg.p_branch) {
            let at = rng.gen_range(0..=body.len());
            let cond = if rng.gen_bool(0.5) { BranchCond::Nonzero } else { BranchCond::Zero };
            let mut alts = vec![vec![access(rng, &cfg.vars)]];
            alts.push(if rng.gen_bool(0.5) { vec![access(rng, &cfg.vars)] } else { vec![] });
            body.insert(at, Node::Branch { cond, alts });
        }
        if rng.gen_bool(cfg.p_try_abort) {
            body.push(Node::TryAbort);
        } else if rng.gen_bool(0.5) {
            body.push(Node::TryCommit);
        }
        spec = spec.txn(TxnId(i as u32), TxnProgram::new(body));
    }
    spec
}

struct Run<'a> {
    t: TxnId,
    cursor: Cursor<'a>,
    started: bool,
    pending: Option<Invocation>,
    last_read: Option<Value>,
    done: bool,
}

/// Latest effective write on `x` whose writer passes `visible`.
fn latest_write(h: &History, x: &VarId, visible: impl Fn(TxnId) -> bool) -> Option<(usize, Value)> {
    h.txns()
        .into_iter()
        .filter(|&t| visible(t))
        .flat_map(|t| h.operations(t))
        .filter_map(|op| match op.effective_write() {
            Some((y, v)) if y == x => Some((op.res_pos.expect("effective writes are complete"), v)),
            _ => None,
        })
        .max_by_key(|(pos, _)| *pos)
}

fn read_value<R: Rng>(rng: &mut R, h: &History, t: TxnId, x: &VarId, cfg: &GenConfig) -> Value {
    let found = if rng.gen_bool(cfg.p_committed_read) {
        latest_write(h, x, |u| u == t).or_else(|| latest_write(h, x, |u| h.is_committed(u)))
    } else {
        latest_write(h, x, |u| h.status(u) != Ok(TxnStatus::Aborted))
    };
    found.map_or(Value::Initial, |(_, v)| v)
}

/// Runs `spec` under a random interleaving of invocations and responses.
pub fn random_history<R: Rng>(rng: &mut R, spec: &ProgramSpec, cfg: &GenConfig) -> History {
    let mut runs: Vec<Run> = spec
        .txns
        .iter()
        .map(|(&t, p)| Run {
            t,
            cursor: Cursor::new(&p.body),
            started: false,
            pending: None,
            last_read: None,
            done: false,
        })
        .collect();
    let mut b = HistoryBuilder::new();
    loop {
        let live: Vec<usize> = (0..runs.len()).filter(|&i| !runs[i].done).collect();
        let Some(&i) = live.choose(rng) else { break };
        let r = &mut runs[i];
        let t = r.t;
        if let Some(inv) = r.pending.take() {
            let forced = rng.gen_bool(cfg.p_forced_abort);
            let res = match &inv {
                Invocation::Init => Response::Ok,
                Invocation::TryAbort => Response::Aborted,
                _ if forced => Response::Aborted,
                Invocation::Read(x) => {
                    let v = read_value(rng, &b.build(), t, x, cfg);
                    r.last_read = Some(v);
                    Response::Value(v)
                }
                Invocation::Write(..) => Response::Ok,
                Invocation::TryCommit => Response::Committed,
            };
            r.done = matches!(res, Response::Aborted | Response::Committed);
            b.res(t, res);
        } else if !r.started {
            r.started = true;
            r.pending = Some(Invocation::Init);
            b.inv(t, Invocation::Init);
        } else {
            let shape = r.cursor.next_op(r.last_read).unwrap_or(OpShape::TryCommit);
            let inv = match shape {
                OpShape::Read(x) => Invocation::Read(x),
                OpShape::Write(x) => Invocation::Write(x, b.next_value(t)),
                OpShape::TryCommit => Invocation::TryCommit,
                OpShape::TryAbort => Invocation::TryAbort,
            };
            r.pending = Some(inv.clone());
            b.inv(t, inv);
        }
    }
    let h = b.build();
    if rng.gen_bool(cfg.p_truncate) {
        let n = rng.gen_range(0..=h.len());
        h.prefix(n)
    } else {
        h
    }
}

/// A program and one of its histories, fixed by `seed`.
pub fn random_case(seed: u64, cfg: &GenConfig) -> (ProgramSpec, History) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_program(&mut rng, cfg);
    let h = random_history(&mut rng, &spec, cfg);
    (spec, h)
}
