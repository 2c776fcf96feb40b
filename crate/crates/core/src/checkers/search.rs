//! Indexed search for serializability, opacity and last-use opacity.
//!
//! A history prefix is flattened into a [`Frame`]: transactions sorted by
//! id, their effective read/write operations with interned variables, the
//! real-time relation and the decided-on sets. The search walks
//! completions, then linear extensions depth first, checking each newly
//! placed transaction right away. That is sound because Vis and every
//! LUVis candidate of a transaction only draw on its predecessors.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::history::{completions, History, TxnId, TxnStatus, Value, VarId};
use crate::program::{op_views, AlignmentError, LastWriteOracle};

use super::Witness;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Criterion {
    Serializable,
    Opacity,
    LastUse,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Read(u16, Value),
    Write(u16, Value),
}

#[derive(Clone, Debug)]
struct TxnInfo {
    id: TxnId,
    status: TxnStatus,
    ops: Vec<Op>,
    decided: u64,
}

pub(crate) struct Frame {
    txns: Vec<TxnInfo>,
    rt: Vec<Vec<bool>>,
    /// Indices of commit-pending transactions, in completion-bit order.
    pending: Vec<usize>,
    nvars: usize,
}

impl Frame {
    pub(crate) fn build(
        h: &History,
        decisions: Option<(&dyn LastWriteOracle, bool)>,
    ) -> Result<Frame, AlignmentError> {
        let mut ids = h.txns();
        ids.sort();
        let mut vars: BTreeMap<VarId, u16> = BTreeMap::new();
        for x in h.vars() {
            let n = vars.len() as u16;
            vars.insert(x, n);
        }
        assert!(vars.len() <= 64, "checkers support at most 64 variables");
        let mut txns = Vec::with_capacity(ids.len());
        for &t in &ids {
            let ops_exec = h.operations(t);
            let mut ops = Vec::new();
            for op in &ops_exec {
                if let Some((x, v)) = op.effective_write() {
                    ops.push(Op::Write(vars[x], v));
                } else if let Some((x, v)) = op.effective_read() {
                    ops.push(Op::Read(vars[x], v));
                }
            }
            let mut decided = 0u64;
            if let Some((oracle, beta)) = decisions {
                let flags = oracle.last_writes(t, &op_views(h, t), beta)?;
                for (op, f) in ops_exec.iter().zip(flags) {
                    if f {
                        if let Some((x, _)) = op.effective_write() {
                            decided |= 1 << vars[x];
                        }
                    }
                }
            }
            txns.push(TxnInfo { id: t, status: h.status_unchecked(t), ops, decided });
        }
        let spans: Vec<(usize, usize)> = ids.iter().map(|&t| h.span(t).expect("present")).collect();
        // Real-time order of the completion: a transaction that is live or
        // commit-pending in `h` ends after everything else there.
        let rt = spans
            .iter()
            .zip(&txns)
            .map(|(&(_, la), ti)| {
                let done = matches!(ti.status, TxnStatus::Committed | TxnStatus::Aborted);
                spans.iter().map(|&(fb, _)| done && la < fb).collect()
            })
            .collect();
        let pending = completions(h)
            .commit_pending()
            .iter()
            .map(|t| ids.binary_search(t).expect("present"))
            .collect();
        Ok(Frame { txns, rt, pending, nvars: vars.len() })
    }

    fn committed_under(&self, completion: u64) -> Vec<bool> {
        let mut c: Vec<bool> = self.txns.iter().map(|t| t.status == TxnStatus::Committed).collect();
        for (k, &i) in self.pending.iter().enumerate() {
            c[i] = completion >> k & 1 == 0;
        }
        c
    }

    /// First witness in (completion, order, inclusion mask) order.
    pub(crate) fn search(&self, criterion: Criterion) -> Option<Witness> {
        let n = self.txns.len();
        for completion in 0..(1u64 << self.pending.len()) {
            let committed = self.committed_under(completion);
            let mut st = Dfs {
                frame: self,
                criterion,
                committed: &committed,
                order: Vec::with_capacity(n),
                masks: Vec::with_capacity(n),
                used: vec![false; n],
                state: vec![Value::Initial; self.nvars],
            };
            if st.place() {
                let mut inclusions = BTreeMap::new();
                for (pos, &i) in st.order.iter().enumerate() {
                    let opts = st.optional(&st.order[..pos], i);
                    let inc: Vec<TxnId> = opts
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| st.masks[pos] >> b & 1 == 1)
                        .map(|(_, &j)| self.txns[j].id)
                        .collect();
                    if !inc.is_empty() {
                        inclusions.insert(self.txns[i].id, inc);
                    }
                }
                let aborted_pending =
                    self.pending.iter().filter(|&&i| !committed[i]).map(|&i| self.txns[i].id).collect();
                return Some(Witness {
                    completion,
                    aborted_pending,
                    order: st.order.iter().map(|&i| self.txns[i].id).collect(),
                    inclusions,
                });
            }
        }
        None
    }
}

struct Dfs<'a> {
    frame: &'a Frame,
    criterion: Criterion,
    committed: &'a [bool],
    order: Vec<usize>,
    masks: Vec<u64>,
    used: Vec<bool>,
    state: Vec<Value>,
}

impl Dfs<'_> {
    fn place(&mut self) -> bool {
        let n = self.frame.txns.len();
        if self.order.len() == n {
            return true;
        }
        for i in 0..n {
            if self.used[i] {
                continue;
            }
            if self.criterion != Criterion::Serializable
                && (0..n).any(|j| !self.used[j] && j != i && self.frame.rt[j][i])
            {
                continue;
            }
            let Some(mask) = self.legal_mask(i) else { continue };
            self.used[i] = true;
            self.order.push(i);
            self.masks.push(mask);
            if self.place() {
                return true;
            }
            self.masks.pop();
            self.order.pop();
            self.used[i] = false;
        }
        false
    }

    /// Non-committed decided predecessors that may join the view of `i`.
    fn optional(&self, placed: &[usize], i: usize) -> Vec<usize> {
        placed
            .iter()
            .copied()
            .filter(|&j| !self.committed[j] && self.frame.txns[j].decided != 0 && !self.frame.rt[j][i])
            .collect()
    }

    fn legal_mask(&mut self, i: usize) -> Option<u64> {
        let needs_vis = self.committed[i] || self.criterion == Criterion::Opacity;
        if needs_vis {
            return self.replay(i, &[], 0).then_some(0);
        }
        match self.criterion {
            Criterion::Serializable => Some(0),
            Criterion::LastUse => {
                let opts = self.optional(&self.order, i);
                (0..1u64 << opts.len()).find(|&m| self.replay(i, &opts, m))
            }
            Criterion::Opacity => unreachable!(),
        }
    }

    fn replay(&mut self, i: usize, opts: &[usize], mask: u64) -> bool {
        self.state.iter_mut().for_each(|v| *v = Value::Initial);
        let txns = &self.frame.txns;
        for &j in &self.order {
            let filter = if self.committed[j] {
                u64::MAX
            } else {
                match opts.iter().position(|&o| o == j) {
                    Some(b) if mask >> b & 1 == 1 => txns[j].decided,
                    _ => continue,
                }
            };
            if !apply(&mut self.state, &txns[j].ops, filter) {
                return false;
            }
        }
        apply(&mut self.state, &txns[i].ops, u64::MAX)
    }
}

fn apply(state: &mut [Value], ops: &[Op], vars: u64) -> bool {
    for op in ops {
        match *op {
            Op::Write(x, v) if vars >> x & 1 == 1 => state[x as usize] = v,
            Op::Read(x, v) if vars >> x & 1 == 1 => {
                let cur = state[x as usize];
                if !(cur == v || (cur.is_initial() && v.is_initial())) {
                    return false;
                }
            }
            _ => {}
        }
    }
    true
}

/// Which prefixes full mode examines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum PrefixGranularity {
    /// After every event: the literal definition.
    #[default]
    Event,
    /// Only after response events (plus the empty and the full history).
    /// Cheaper and an approximation.
    Response,
}

pub(crate) fn prefix_lengths(h: &History, g: PrefixGranularity) -> Vec<usize> {
    let n = h.len();
    (0..=n)
        .filter(|&k| match g {
            PrefixGranularity::Event => true,
            PrefixGranularity::Response => k == 0 || k == n || h.events[k - 1].response().is_some(),
        })
        .collect()
}
