//! Worked histories with the programs that produce them.
//!
//! Transaction `T1` plays the writer, `T2` the reader and `T3` a third
//! participant. Every operation is an instant: its response directly
//! follows its invocation.

use crate::history::{History, HistoryBuilder, Invocation, Response, TxnId, Value};
use crate::program::{dsl, ProgramSpec};

const T1: TxnId = TxnId(1);
const T2: TxnId = TxnId(2);
const T3: TxnId = TxnId(3);

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub description: &'static str,
    pub history: History,
    pub program: ProgramSpec,
}

fn program(text: &str) -> ProgramSpec {
    dsl::parse(text).expect("fixture program parses")
}

const WRITE_COMMIT_READ_COMMIT: &str = "txn T1\n write x\n tryC\ntxn T2\n read x\n tryC\n";
const WRITE_ABORT_READ_COMMIT: &str = "txn T1\n write x\n tryA\ntxn T2\n read x\n tryC\n";
const WRITE_COMMIT_READ_ABORT: &str = "txn T1\n write x\n tryC\ntxn T2\n read x\n tryA\n";

/// `T1` writes `x` and `T2` reads it before `T1` finishes, followed by the
/// given terminal operations.
fn release(last: &[(TxnId, Invocation, Response)]) -> History {
    let mut b = HistoryBuilder::new();
    b.init(T1).init(T2).write(T1, "x").read(T2, "x", Value::written(T1, 1));
    for (t, i, r) in last {
        b.inv(*t, i.clone()).res(*t, *r);
    }
    b.build()
}

fn h(name: &'static str) -> Option<Fixture> {
    use Invocation::{TryAbort as A, TryCommit as C};
    use Response::{Aborted as Ab, Committed as Co};
    let (description, history, prog) = match name {
        "h1" => ("early release, writer commits first", release(&[(T1, C, Co), (T2, C, Co)]), WRITE_COMMIT_READ_COMMIT.to_string()),
        "h2" => ("early release, reader commits first", release(&[(T2, C, Co), (T1, C, Co)]), WRITE_COMMIT_READ_COMMIT.to_string()),
        "h3" => ("early release, both abort", release(&[(T1, A, Ab), (T2, C, Ab)]), WRITE_ABORT_READ_COMMIT.to_string()),
        "h4" => ("early release, writer aborts, reader commits", release(&[(T1, A, Ab), (T2, C, Co)]), WRITE_ABORT_READ_COMMIT.to_string()),
        "h5" => (
            "early release before the last write",
            release(&[(T1, C, Co), (T2, C, Co)]),
            "txn T1\n write x\n branch {\n  write x\n } or {\n }\n tryC\ntxn T2\n read x\n tryC\n".to_string(),
        ),
        "h6" => {
            let mut b = HistoryBuilder::new();
            b.init(T1).init(T2).write(T1, "x").read(T2, "x", Value::written(T1, 1)).write(T1, "x");
            b.abort(T2).commit(T1);
            ("early release with overwriting", b.build(), "txn T1\n write x\n write x\n tryC\ntxn T2\n read x\n tryA\n".to_string())
        }
        "h7" => ("early release, reader aborts", release(&[(T1, C, Co), (T2, A, Ab)]), WRITE_COMMIT_READ_ABORT.to_string()),
        "h8" => {
            let mut b = HistoryBuilder::new();
            b.init(T1).init(T2).write(T1, "x").read(T2, "x", Value::written(T1, 1));
            b.write(T2, "y").read(T1, "y", Value::written(T2, 1));
            (
                "dependency cycle between live transactions",
                b.build(),
                "txn T1\n write x\n read y\n tryC\ntxn T2\n read x\n write y\n tryC\n".to_string(),
            )
        }
        "h9" => {
            let mut b = HistoryBuilder::new();
            b.init(T1).init(T2).write(T1, "x").read(T2, "x", Value::written(T1, 1)).abort(T1);
            b.init(T3).write(T2, "x").read(T3, "x", Value::Initial);
            (
                "freedom to read from or ignore an aborted transaction",
                b.build(),
                "txn T1\n write x\n tryA\ntxn T2\n read x\n write x\n tryC\ntxn T3\n read x\n tryC\n".to_string(),
            )
        }
        "overwriting" => {
            let mut b = HistoryBuilder::new();
            b.init(T1).write(T1, "x").init(T2).read(T2, "x", Value::written(T1, 1)).write(T1, "x");
            b.inv(T2, Invocation::Write("x".into(), Value::written(T2, 1))).res(T2, Ab);
            b.commit(T1);
            b.init(T3).read(T3, "x", Value::written(T1, 2)).write(T3, "x").commit(T3);
            (
                "early release and overwriting",
                b.build(),
                "txn T1\n write x\n write x\n tryC\ntxn T2\n read x\n write x\n tryC\ntxn T3\n read x\n write x\n tryC\n".to_string(),
            )
        }
        "cascade" => {
            let mut b = HistoryBuilder::new();
            b.init(T1).write(T1, "x").init(T2).read(T2, "x", Value::written(T1, 1)).abort(T1);
            b.inv(T2, Invocation::Write("x".into(), Value::written(T2, 1))).res(T2, Ab);
            b.init(T3).read(T3, "x", Value::Initial).write(T3, "x").commit(T3);
            (
                "early release and cascading abort",
                b.build(),
                "txn T1\n write x\n tryA\ntxn T2\n read x\n write x\n tryC\ntxn T3\n read x\n write x\n tryC\n".to_string(),
            )
        }
        "aca" => {
            let mut b = HistoryBuilder::new();
            b.init(T1).write(T1, "x").commit(T1).init(T3).read(T3, "x", Value::written(T1, 1));
            b.init(T2).write(T2, "x").write(T2, "y").commit(T2);
            b.read(T3, "y", Value::written(T2, 2)).try_commit_abort(T3);
            (
                "avoids cascading aborts without being last-use opaque",
                b.build(),
                "txn T1\n write x\n tryC\ntxn T2\n write x\n write y\n tryC\ntxn T3\n read x\n read y\n tryC\n".to_string(),
            )
        }
        "inconsistent-view" => {
            let mut b = HistoryBuilder::new();
            b.init(T1).read(T1, "y", Value::Initial).write(T1, "x").init(T2);
            b.read(T1, "x", Value::written(T1, 1)).read(T2, "x", Value::written(T1, 1)).abort(T1);
            (
                "reader observes a value its writer later abandons",
                b.build(),
                "txn T1\n read y\n write x\n read x\n tryA\ntxn T2\n read x\n tryC\n".to_string(),
            )
        }
        _ => return None,
    };
    Some(Fixture { name, description, history, program: program(&prog) })
}

pub const NAMES: [&str; 13] = [
    "h1", "h2", "h3", "h4", "h5", "h6", "h7", "h8", "h9", "overwriting", "cascade", "aca", "inconsistent-view",
];

pub fn get(name: &str) -> Option<Fixture> {
    NAMES.iter().find(|&&n| n == name).and_then(|&n| h(n))
}

pub fn all() -> Vec<Fixture> {
    NAMES.iter().filter_map(|&n| h(n)).collect()
}
