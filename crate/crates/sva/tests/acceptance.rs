//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p lopacity-sva --test acceptance -- --nocapture`.
//! Criterion 1 is a known red: see `KNOWN_RED`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use lopacity_core::checkers::{
    check_lu_opacity, classify, decided_map, luvis_candidates, Mode, Property,
};
use lopacity_core::fixtures;
use lopacity_core::history::{
    completions, sequential_extensions, Event, EventKind, History, Invocation, RealTimeOrder, Response, TxnId,
    Value, VarId,
};
use lopacity_core::program::{dsl, Node, ProgramSpec};
use lopacity_core::random::{random_case, GenConfig};
use lopacity_sva::engine::DismissRule;
use lopacity_sva::harness::{explore, run, ExploreConfig, Granularity, Machine};

const MIN_WORKLOADS: usize = 6;
const MAX_OPS: usize = 4;
const TIME_LIMIT: Duration = Duration::from_secs(300);
const LATTICE_SAMPLES: u64 = 10_000;
const PREFIX_SAMPLES: usize = 1_000;
const ORACLE_SAMPLES: u64 = 300;
const MAX_ORACLE_TXNS: usize = 6;

/// Criteria allowed to fail, each with the only workloads allowed to
/// produce failing histories. Anything else failing fails the test.
const KNOWN_RED: &[(u32, &[&str])] = &[(1, &["voluntary-abort.wl"])];

struct Outcome {
    pass: bool,
    detail: String,
    /// Names of the items that failed, for matching against `KNOWN_RED`.
    failing: Vec<String>,
}

impl Outcome {
    fn new(failing: Vec<String>, detail: String) -> Self {
        Outcome { pass: failing.is_empty(), detail, failing }
    }
}

fn workloads_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workloads")
}

fn shared_ops(nodes: &[Node]) -> usize {
    nodes
        .iter()
        .map(|n| match n {
            Node::Read(_) | Node::Write(_) => 1,
            Node::Branch { alts, .. } => alts.iter().map(|a| shared_ops(a)).max().unwrap_or(0),
            _ => 0,
        })
        .sum()
}

fn has(nodes: &[Node], pred: &dyn Fn(&Node) -> bool) -> bool {
    nodes.iter().any(|n| {
        pred(n)
            || match n {
                Node::Branch { alts, .. } => alts.iter().any(|a| has(a, pred)),
                _ => false,
            }
    })
}

fn sva_soundness() -> Outcome {
    let start = Instant::now();
    let mut paths: Vec<_> = std::fs::read_dir(workloads_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "wl"))
        .collect();
    paths.sort();
    let (mut failing, mut notes) = (Vec::new(), Vec::new());
    let (mut with_abort, mut with_branch, mut total) = (false, false, 0);
    for path in &paths {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let spec = dsl::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
        let n = spec.txns.len();
        let max_ops = spec.txns.values().map(|p| shared_ops(&p.body)).max().unwrap_or(0);
        if !(2..=3).contains(&n) || max_ops > MAX_OPS {
            failing.push(format!("{name}: outside the workload bounds"));
            continue;
        }
        with_abort |= spec.txns.values().any(|p| has(&p.body, &|n| matches!(n, Node::TryAbort)));
        with_branch |= spec.txns.values().any(|p| has(&p.body, &|n| matches!(n, Node::Branch { .. })));
        // Three transactions at event granularity take too long; operation
        // granularity still interleaves every access.
        let granularity = if n == 2 { Granularity::Event } else { Granularity::Operation };
        let r = explore(&spec, &ExploreConfig { granularity, ..Default::default() }).unwrap();
        total += r.distinct;
        let bad = r.failures(Property::LuOpaque) + r.deadlocks + r.invariant_violations + usize::from(r.partial);
        if bad > 0 {
            failing.push(name.clone());
            notes.push(format!("{name}: {} of {} not lopaque", r.failures(Property::LuOpaque), r.distinct));
        }
    }
    if paths.len() < MIN_WORKLOADS || !with_abort || !with_branch {
        failing.push("workload corpus".into());
    }
    let elapsed = start.elapsed();
    if elapsed > TIME_LIMIT {
        failing.push("time limit".into());
    }
    let detail = format!(
        "{} workloads, {} distinct histories in {:.1}s{}{}",
        paths.len(),
        total,
        elapsed.as_secs_f64(),
        if notes.is_empty() { "" } else { "; " },
        notes.join(", ")
    );
    Outcome::new(failing, detail)
}

fn report(name: &str) -> lopacity_core::checkers::PropertyReport {
    let f = fixtures::get(name).unwrap();
    let p = f.program.compile().unwrap();
    classify(&f.history, Some(&p)).unwrap()
}

fn verdict_table() -> Outcome {
    let expected = [
        ("h1", true, None),
        ("h2", false, None),
        ("h3", true, None),
        ("h4", false, None),
        ("h5", false, Some(true)),
        ("h6", false, None),
        ("h7", true, None),
        ("h8", false, None),
        ("h9", true, None),
    ];
    let mut failing = Vec::new();
    for (name, lu, fs) in expected {
        let r = report(name);
        if r.get(Property::LuOpaque) != Some(lu) || fs.is_some_and(|fs| r.get(Property::FsLuOpaque) != Some(fs)) {
            failing.push(name.to_string());
        }
    }
    let detail = format!("{} of 9 match", 9 - failing.len());
    Outcome::new(failing, detail)
}

fn release_fixtures() -> Outcome {
    let mut failing = Vec::new();
    let ow = report("overwriting");
    if ow.get(Property::Serializable) != Some(true) || ow.get(Property::LuOpaque) != Some(false) {
        failing.push("overwriting".into());
    }
    if report("cascade").get(Property::Serializable) != Some(true) {
        failing.push("cascade".into());
    }
    let er = report("h1");
    if er.get(Property::Opaque) != Some(false) || er.early_release.is_empty() {
        failing.push("early release".into());
    }
    Outcome::new(failing, "overwriting, cascading abort, early release".into())
}

fn lattice() -> Outcome {
    let cfg = GenConfig::default();
    let mut failing = Vec::new();
    let mut check = |label: String, h: &History, spec: &ProgramSpec| {
        let p = spec.compile().unwrap();
        let r = classify(h, Some(&p)).unwrap();
        let mut v = r.lattice_violations();
        if r.rigor_gap() {
            v.push("rigorous but not lopaque".into());
        }
        if !v.is_empty() {
            failing.push(format!("{label}: {}", v.join(", ")));
        }
    };
    for seed in 0..LATTICE_SAMPLES {
        let (spec, h) = random_case(seed, &cfg);
        check(format!("seed {seed}"), &h, &spec);
    }
    let fx = fixtures::all();
    for f in &fx {
        check(f.name.to_string(), &f.history, &f.program);
    }
    let detail = format!("{} random + {} fixtures, {} violations", LATTICE_SAMPLES, fx.len(), failing.len());
    Outcome::new(failing, detail)
}

fn prefix_closure() -> Outcome {
    let cfg = GenConfig::default();
    let mut cases: Vec<(String, ProgramSpec, History)> =
        fixtures::all().into_iter().map(|f| (f.name.to_string(), f.program, f.history)).collect();
    let n_fixtures = cases.len();
    let mut found = 0;
    let mut seed = 0u64;
    while found < PREFIX_SAMPLES {
        let (spec, h) = random_case(seed, &cfg);
        let p = spec.compile().unwrap();
        if check_lu_opacity(&h, &p, Mode::Full, false).unwrap().holds {
            cases.push((format!("seed {seed}"), spec, h));
            found += 1;
        }
        seed += 1;
    }
    let mut failing = Vec::new();
    let mut checked = 0;
    for (label, spec, h) in &cases {
        let p = spec.compile().unwrap();
        if !check_lu_opacity(h, &p, Mode::Full, false).unwrap().holds {
            // Fixtures that are not last-use opaque say nothing here.
            continue;
        }
        checked += 1;
        for k in 0..=h.len() {
            let holds = check_lu_opacity(&h.prefix(k), &p, Mode::Full, false).unwrap().holds
                && check_lu_opacity(&h.prefix(k), &p, Mode::FinalState, false).unwrap().holds;
            if !holds {
                failing.push(format!("{label} at {k}"));
                break;
            }
        }
    }
    let detail = format!("{checked} lopaque histories ({} fixtures considered), every prefix", n_fixtures);
    Outcome::new(failing, detail)
}

fn figures() -> Outcome {
    let mut failing = Vec::new();
    let t1 = TxnId(1);
    let t2 = TxnId(2);
    let pos = |h: &History, t: TxnId, r: Response| h.events.iter().position(|e| e.txn == t && e.response() == Some(r));
    let go = |program: &str, schedule: &str| {
        let spec = dsl::parse(program).unwrap();
        run(&spec, &schedule.parse().unwrap(), Granularity::Operation).unwrap()
    };

    let r = go("txn T1\n read x\n write x\n write y\n tryC\ntxn T2\n read x\n write x\n tryC\n", "T1 T2 T1 T2 T1 T2 T1 T2 T2 T1 T2");
    let read = pos(&r.history, t2, Response::Value(Value::written(t1, 1)));
    if !(read.is_some() && read < pos(&r.history, t1, Response::Committed)) {
        failing.push("early release".into());
    }

    let r = go("txn T1\n write x\n read y\n write y\n tryC\ntxn T2\n read x\n write x\n tryC\n", "T1 T1 T2 T2 T2 T2 T1 T1 T1 T2");
    let try_j = r.history.events.iter().position(|e| e.txn == t2 && e.invocation() == Some(&Invocation::TryCommit));
    let (ci, cj) = (pos(&r.history, t1, Response::Committed), pos(&r.history, t2, Response::Committed));
    if !(try_j.is_some() && try_j < ci && ci.is_some() && ci < cj) {
        failing.push("wait on commit".into());
    }

    let r = go("txn T1\n write x\n read y\n write y\n tryA\ntxn T2\n read x\n write x\n tryC\n", "T1 T1 T2 T2 T2 T2 T1 T1 T1 T2");
    let (ai, aj) = (pos(&r.history, t1, Response::Aborted), pos(&r.history, t2, Response::Aborted));
    if !(ai.is_some() && ai < aj && r.values[&VarId::new("x")] == Value::Initial) {
        failing.push("cascading abort".into());
    }

    let spec = dsl::parse("txn T1\n read x\n write x\n tryC\ntxn T2\n read y\n write y\n tryC\n").unwrap();
    let mut stack = vec![Machine::new(&spec, Granularity::Event, DismissRule::default()).unwrap()];
    let mut blocked = false;
    while let Some(m) = stack.pop() {
        blocked |= !m.blocked_txns().is_empty();
        for t in m.runnable_txns() {
            let mut n = m.clone();
            n.step(t).unwrap();
            stack.push(n);
        }
    }
    if blocked {
        failing.push("parallel execution".into());
    }
    Outcome::new(failing, "early release, wait on commit, cascading abort, parallel execution".into())
}

fn permutations(items: &[TxnId]) -> Vec<Vec<TxnId>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let first = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, first);
            out.push(p);
        }
    }
    out
}

fn renumber(mut events: Vec<Event>) -> Vec<Event> {
    for (i, e) in events.iter_mut().enumerate() {
        e.seq = i as u64 + 1;
    }
    events
}

fn txn_events(h: &History, t: TxnId) -> Vec<Event> {
    h.events.iter().filter(|e| e.txn == t).cloned().collect()
}

/// Positions of first and last events, straight from the event list.
fn naive_precedes(h: &History, a: TxnId, b: TxnId) -> bool {
    let last_a = h.events.iter().rposition(|e| e.txn == a);
    let first_b = h.events.iter().position(|e| e.txn == b);
    matches!((last_a, first_b), (Some(la), Some(fb)) if la < fb)
}

fn naive_extensions(hc: &History) -> Vec<Vec<Event>> {
    let mut txns = hc.txns();
    txns.sort();
    permutations(&txns)
        .into_iter()
        .filter(|order| {
            (0..order.len()).all(|i| (i + 1..order.len()).all(|j| !naive_precedes(hc, order[j], order[i])))
        })
        .map(|order| renumber(order.iter().flat_map(|&t| txn_events(hc, t)).collect()))
        .collect()
}

fn committed_in(events: &[Event], t: TxnId) -> bool {
    events.iter().any(|e| e.txn == t && matches!(e.kind, EventKind::Res(Response::Committed)))
}

/// Init plus complete, non-aborted operations on `vars`, then tryC and C.
fn naive_decided(events: &[Event], t: TxnId, vars: &BTreeSet<VarId>) -> Vec<Event> {
    let mine = txn_events(&History::new(events.to_vec()), t);
    let mut out = Vec::new();
    for (i, e) in mine.iter().enumerate() {
        let EventKind::Inv(inv) = &e.kind else { continue };
        let Some(res) = mine.get(i + 1).filter(|r| matches!(r.kind, EventKind::Res(_))) else { continue };
        let keep = match inv {
            Invocation::Init => true,
            Invocation::Read(x) | Invocation::Write(x, _) => {
                vars.contains(x) && res.response() != Some(Response::Aborted)
            }
            _ => false,
        };
        if keep {
            out.push(e.clone());
            out.push(res.clone());
        }
    }
    out.push(Event::inv(0, t, Invocation::TryCommit));
    out.push(Event::res(0, t, Response::Committed));
    out
}

fn naive_luvis(
    s: &[Event],
    t: TxnId,
    decided: &BTreeMap<TxnId, BTreeSet<VarId>>,
    hc: &History,
) -> HashSet<Vec<Event>> {
    let mut order: Vec<TxnId> = Vec::new();
    for e in s {
        if !order.contains(&e.txn) {
            order.push(e.txn);
        }
    }
    let before: Vec<TxnId> = order.iter().copied().take_while(|&u| u != t).collect();
    let mut out = HashSet::new();
    for mask in 0..1u64 << before.len() {
        let chosen: Vec<TxnId> = (0..before.len()).filter(|b| mask >> b & 1 == 1).map(|b| before[b]).collect();
        let allowed = chosen.iter().all(|&j| {
            !committed_in(s, j) && decided.get(&j).is_some_and(|d| !d.is_empty()) && !naive_precedes(hc, j, t)
        });
        if !allowed {
            continue;
        }
        let mut view = Vec::new();
        for &u in &before {
            if committed_in(s, u) {
                view.extend(s.iter().filter(|e| e.txn == u).cloned());
            } else if chosen.contains(&u) {
                view.extend(naive_decided(s, u, &decided[&u]));
            }
        }
        view.extend(s.iter().filter(|e| e.txn == t).cloned());
        out.insert(renumber(view));
    }
    out
}

fn oracles() -> Outcome {
    let cfg = GenConfig { txns: 1..=MAX_ORACLE_TXNS, ops: 1..=2, ..Default::default() };
    let mut failing = Vec::new();
    let (mut extensions, mut views) = (0usize, 0usize);
    for seed in 0..ORACLE_SAMPLES {
        let (spec, h) = random_case(seed, &cfg);
        let p = spec.compile().unwrap();
        let decided = decided_map(&h, &p, false).unwrap();
        let comps = completions(&h);
        for c in (0..comps.total().min(4)).map(|i| comps.get(i)) {
            let got: Vec<Vec<Event>> = sequential_extensions(&c).into_iter().map(|s| s.events).collect();
            let want = naive_extensions(&c);
            if got != want {
                failing.push(format!("seed {seed}: sequential extensions"));
                continue;
            }
            extensions += got.len();
            let rt = RealTimeOrder::of(&c);
            // Views are costly; a few extensions per completion suffice.
            for s in got.iter().step_by(1 + got.len() / 3) {
                let sh = History::new(s.clone());
                for t in sh.txns() {
                    let got: Vec<Vec<Event>> =
                        luvis_candidates(&sh, t, &decided, &rt).into_iter().map(|v| v.events).collect();
                    let set: HashSet<Vec<Event>> = got.iter().cloned().collect();
                    if set.len() != got.len() || set != naive_luvis(s, t, &decided, &c) {
                        failing.push(format!("seed {seed}: luvis of {t}"));
                    }
                    views += got.len();
                }
            }
        }
    }
    let detail = format!("{ORACLE_SAMPLES} cases up to {MAX_ORACLE_TXNS} txns: {extensions} extensions, {views} views");
    Outcome::new(failing, detail)
}

#[test]
fn acceptance() {
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        (1, "SVA histories are last-use opaque", sva_soundness),
        (2, "worked history verdicts", verdict_table),
        (3, "early release fixtures", release_fixtures),
        (4, "lattice implications", lattice),
        (5, "prefix closure", prefix_closure),
        (6, "SVA example executions", figures),
        (7, "naive oracle equivalence", oracles),
    ];
    let mut unexpected = Vec::new();
    for (id, title, f) in criteria {
        let o = f();
        println!("criterion {id} {}: {title} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if o.pass {
            continue;
        }
        let allowed = KNOWN_RED.iter().find(|(k, _)| *k == id).map_or(&[][..], |(_, a)| *a);
        let stray: Vec<&String> = o.failing.iter().filter(|n| !allowed.contains(&n.as_str())).collect();
        if !stray.is_empty() {
            unexpected.push(format!("criterion {id}: {stray:?}"));
        }
    }
    assert!(unexpected.is_empty(), "unexpected failures: {unexpected:?}");
}
