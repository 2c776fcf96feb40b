use std::collections::BTreeMap;

use serde::Serialize;

use super::{History, Invocation, OperationExecution, TxnId, Value, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Locality {
    Local,
    NonLocal,
}

/// No two effective writes on the same variable store equal values, and
/// none stores the initial value.
pub fn unique_writes(h: &History) -> bool {
    let mut seen: BTreeMap<(VarId, Value), ()> = BTreeMap::new();
    for t in h.txns() {
        for op in h.operations(t) {
            if let Some((x, v)) = op.effective_write() {
                if v.is_initial() || seen.insert((x.clone(), v), ()).is_some() {
                    return false;
                }
            }
        }
    }
    true
}

/// Some complete read of `reader` returns a value written by a complete
/// write of `writer`.
pub fn reads_from(h: &History, reader: TxnId, writer: TxnId) -> bool {
    let writes: Vec<(VarId, Value)> = h
        .operations(writer)
        .iter()
        .filter_map(|op| op.effective_write().map(|(x, v)| (x.clone(), v)))
        .collect();
    h.operations(reader).iter().any(|op| {
        op.effective_read()
            .is_some_and(|(x, v)| !v.is_initial() && writes.iter().any(|(wx, wv)| wx == x && *wv == v))
    })
}

/// A read is local when an earlier write in `h|t` touches the same variable;
/// a write is local when a later write invocation on that variable follows.
pub fn op_locality(h: &History, t: TxnId, op: &OperationExecution) -> Locality {
    let ops = h.operations(t);
    let Some(idx) = ops.iter().position(|o| o.inv_pos == op.inv_pos) else {
        return Locality::NonLocal;
    };
    let writes_x = |o: &OperationExecution, x: &VarId| matches!(o.invocation(), Invocation::Write(y, _) if y == x);
    match op.invocation() {
        Invocation::Read(x) => {
            if ops[..idx].iter().any(|o| writes_x(o, x)) {
                Locality::Local
            } else {
                Locality::NonLocal
            }
        }
        Invocation::Write(x, _) => {
            if ops[idx + 1..].iter().any(|o| writes_x(o, x)) {
                Locality::Local
            } else {
                Locality::NonLocal
            }
        }
        _ => Locality::NonLocal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::HistoryBuilder;

    const T1: TxnId = TxnId(1);
    const T2: TxnId = TxnId(2);

    #[test]
    fn uniqueness() {
        let mut b = HistoryBuilder::new();
        b.init(T1).init(T2).write(T1, "x").write(T2, "x");
        assert!(unique_writes(&b.build()));
        b.write_val(T1, "y", Value::Initial);
        assert!(!unique_writes(&b.build()));
        let mut b = HistoryBuilder::new();
        b.init(T1).write_val(T1, "x", Value::Int(3)).write_val(T1, "x", Value::Int(3));
        assert!(!unique_writes(&b.build()));
    }

    #[test]
    fn reads_from_cases() {
        let mut b = HistoryBuilder::new();
        b.init(T1).init(T2).write(T1, "x").read(T2, "x", Value::written(T1, 1));
        b.read(T1, "x", Value::written(T1, 1)).read(T2, "y", Value::Initial);
        let h = b.build();
        assert!(reads_from(&h, T2, T1));
        assert!(reads_from(&h, T1, T1));
        assert!(!reads_from(&h, T1, T2));
    }

    #[test]
    fn locality() {
        let mut b = HistoryBuilder::new();
        b.init(T1).write(T1, "x").read(T1, "x", Value::written(T1, 1)).write(T1, "x");
        let h = b.build();
        let ops = h.operations(T1);
        assert_eq!(op_locality(&h, T1, &ops[1]), Locality::Local);
        assert_eq!(op_locality(&h, T1, &ops[2]), Locality::Local);
        assert_eq!(op_locality(&h, T1, &ops[3]), Locality::NonLocal);
        let mut b = HistoryBuilder::new();
        b.init(T2).read(T2, "x", Value::Initial);
        let h = b.build();
        assert_eq!(op_locality(&h, T2, &h.operations(T2)[1]), Locality::NonLocal);
    }
}
