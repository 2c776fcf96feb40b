//! Exhaustive and random exploration of schedules.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Mutex;

use lopacity_core::checkers::{classify, fs_lu_opaque, Property, PropertyReport};
use lopacity_core::history::{History, TxnId};
use lopacity_core::par::Exec;
use lopacity_core::program::{CompiledProgram, ProgramSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_invariants, Granularity, Machine, RunError, Schedule, StateKey};
use crate::engine::DismissRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExploreMode {
    /// Depth-first over every choice, merging identical states.
    Exhaustive,
    /// `runs` runs, the i-th seeded with `seed + i`.
    Random { runs: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PropertySet {
    /// Last-use opacity only.
    #[default]
    LuOpacity,
    All,
}

#[derive(Clone, Copy, Debug)]
pub struct ExploreConfig {
    pub mode: ExploreMode,
    pub granularity: Granularity,
    /// Maximum number of decisions with more than one runnable transaction
    /// per run. Beyond it the lowest runnable transaction steps and the
    /// result is flagged partial.
    pub bound: usize,
    pub properties: PropertySet,
    pub exec: Exec,
    pub rule: DismissRule,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            mode: ExploreMode::Exhaustive,
            granularity: Granularity::Operation,
            bound: 64,
            properties: PropertySet::LuOpacity,
            exec: Exec::default(),
            rule: DismissRule::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub unknown: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub schedule: Schedule,
    pub history: History,
    pub report: PropertyReport,
    pub reasons: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExplorationResult {
    /// Completed runs, counting runs that repeat a history.
    pub explored: usize,
    pub distinct: usize,
    pub deadlocks: usize,
    pub partial: bool,
    pub verdicts: BTreeMap<Property, Tally>,
    /// First history, in discovery order, that is not last-use opaque or
    /// breaks a runtime observation.
    pub counterexample: Option<Counterexample>,
    /// Distinct histories breaking a runtime observation.
    pub invariant_violations: usize,
    /// Distinct histories whose run had a transaction blocked.
    pub blocked_runs: usize,
}

impl ExplorationResult {
    pub fn failures(&self, p: Property) -> usize {
        self.verdicts.get(&p).map_or(0, |t| t.fail)
    }
}

impl fmt::Display for ExplorationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "explored {} runs, {} distinct histories", self.explored, self.distinct)?;
        if self.partial {
            writeln!(f, "partial: the bound cut off some schedules")?;
        }
        writeln!(f, "deadlocks {}, runtime observation failures {}", self.deadlocks, self.invariant_violations)?;
        for (p, t) in &self.verdicts {
            write!(f, "{:<16} pass {:>6}  fail {:>6}", p.name(), t.pass, t.fail)?;
            if t.unknown > 0 {
                write!(f, "  unknown {}", t.unknown)?;
            }
            writeln!(f)?;
        }
        match &self.counterexample {
            None => writeln!(f, "no counterexample"),
            Some(c) => {
                writeln!(f, "counterexample ({})", c.reasons.join("; "))?;
                writeln!(f, "schedule: {}", c.schedule)?;
                write!(f, "{}", c.history)?;
                if let Some(k) = c.report.failing_prefix {
                    writeln!(f, "shortest failing prefix: {k} events")?;
                }
                Ok(())
            }
        }
    }
}

struct Leaf {
    history: History,
    schedule: Schedule,
    violations: Vec<String>,
    waited: bool,
}

#[derive(Default)]
struct Collector {
    leaves: Vec<Leaf>,
    seen: HashSet<History>,
    explored: usize,
    deadlocks: usize,
    partial: bool,
}

impl Collector {
    fn leaf(&mut self, m: &Machine<'_>, path: &[TxnId]) {
        self.explored += 1;
        let history = m.history();
        if self.seen.insert(history.clone()) {
            let violations = check_invariants(m.sva(), &history);
            let schedule = Schedule { decisions: path.to_vec() };
            self.leaves.push(Leaf { history, schedule, violations, waited: !m.waited().is_empty() });
        }
    }
}

fn dfs(
    m: Machine<'_>,
    path: &mut Vec<TxnId>,
    branching: usize,
    bound: usize,
    visited: &mut HashSet<StateKey>,
    out: &mut Collector,
) -> Result<(), RunError> {
    if m.done() {
        out.leaf(&m, path);
        return Ok(());
    }
    if !visited.insert(m.key()) {
        return Ok(());
    }
    let runnable = m.runnable_txns();
    if runnable.is_empty() {
        out.deadlocks += 1;
        return Ok(());
    }
    let branching = branching + usize::from(runnable.len() > 1);
    let choices = if runnable.len() > 1 && branching > bound {
        out.partial = true;
        &runnable[..1]
    } else {
        &runnable[..]
    };
    for &t in choices {
        let mut next = m.clone();
        next.step(t)?;
        path.push(t);
        dfs(next, path, branching, bound, visited, out)?;
        path.pop();
    }
    Ok(())
}

enum RandomRun<'a> {
    Done(Machine<'a>, Vec<TxnId>, bool),
    Deadlock,
}

fn random_run<'a>(start: &Machine<'a>, seed: u64, bound: usize) -> Result<RandomRun<'a>, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = start.clone();
    let mut path = Vec::new();
    let (mut branching, mut partial) = (0, false);
    while !m.done() {
        let runnable = m.runnable_txns();
        if runnable.is_empty() {
            return Ok(RandomRun::Deadlock);
        }
        let t = if runnable.len() > 1 {
            branching += 1;
            if branching > bound {
                partial = true;
                runnable[0]
            } else {
                *runnable.choose(&mut rng).expect("nonempty")
            }
        } else {
            runnable[0]
        };
        m.step(t)?;
        path.push(t);
    }
    Ok(RandomRun::Done(m, path, partial))
}

/// Last-use opacity through every prefix, sharing prefix results between
/// histories of the same workload.
struct PrefixCache<'p> {
    program: &'p CompiledProgram,
    known: Mutex<HashMap<History, bool>>,
}

impl PrefixCache<'_> {
    fn lu_opaque(&self, h: &History) -> Option<bool> {
        for k in 0..=h.len() {
            let p = h.prefix(k);
            let cached = self.known.lock().expect("cache poisoned").get(&p).copied();
            let ok = match cached {
                Some(ok) => ok,
                None => {
                    let ok = fs_lu_opaque(&p, self.program, false).ok()?;
                    self.known.lock().expect("cache poisoned").insert(p, ok);
                    ok
                }
            };
            if !ok {
                return Some(false);
            }
        }
        Some(true)
    }
}

fn collect(spec: &ProgramSpec, cfg: &ExploreConfig) -> Result<Collector, RunError> {
    let start = Machine::new(spec, cfg.granularity, cfg.rule)?;
    let mut out = Collector::default();
    match cfg.mode {
        ExploreMode::Exhaustive => {
            dfs(start, &mut Vec::new(), 0, cfg.bound, &mut HashSet::new(), &mut out)?;
        }
        ExploreMode::Random { runs, seed } => {
            let results = cfg.exec.map_range(runs, |i| random_run(&start, seed.wrapping_add(i), cfg.bound));
            for r in results {
                match r? {
                    RandomRun::Done(m, path, partial) => {
                        out.partial |= partial;
                        out.leaf(&m, &path);
                    }
                    RandomRun::Deadlock => out.deadlocks += 1,
                }
            }
        }
    }
    Ok(out)
}

/// Distinct histories in discovery order, each with a schedule producing it.
pub fn histories(spec: &ProgramSpec, cfg: &ExploreConfig) -> Result<Vec<(History, Schedule)>, RunError> {
    Ok(collect(spec, cfg)?.leaves.into_iter().map(|l| (l.history, l.schedule)).collect())
}

pub fn explore(spec: &ProgramSpec, cfg: &ExploreConfig) -> Result<ExplorationResult, RunError> {
    let program = spec.compile()?;
    let out = collect(spec, cfg)?;
    let cache = PrefixCache { program: &program, known: Mutex::new(HashMap::new()) };
    let reports: Vec<PropertyReport> = cfg.exec.map(&out.leaves, |leaf| match cfg.properties {
        PropertySet::All => classify(&leaf.history, Some(&program)).unwrap_or_else(|e| PropertyReport {
            notes: vec![e.to_string()],
            ..Default::default()
        }),
        PropertySet::LuOpacity => {
            let mut r = PropertyReport::default();
            r.verdicts.insert(Property::LuOpaque, cache.lu_opaque(&leaf.history));
            r
        }
    });

    let mut res = ExplorationResult {
        explored: out.explored,
        distinct: out.leaves.len(),
        deadlocks: out.deadlocks,
        partial: out.partial,
        ..Default::default()
    };
    for (leaf, report) in out.leaves.into_iter().zip(reports) {
        for (&p, v) in &report.verdicts {
            let t = res.verdicts.entry(p).or_default();
            match v {
                Some(true) => t.pass += 1,
                Some(false) => t.fail += 1,
                None => t.unknown += 1,
            }
        }
        if !leaf.violations.is_empty() {
            res.invariant_violations += 1;
        }
        res.blocked_runs += usize::from(leaf.waited);
        let lu = report.get(Property::LuOpaque);
        if res.counterexample.is_none() && (lu != Some(true) || !leaf.violations.is_empty()) {
            let mut reasons = leaf.violations;
            if lu != Some(true) {
                reasons.insert(0, format!("lopaque is {lu:?}"));
            }
            let report = classify(&leaf.history, Some(&program)).unwrap_or(report);
            res.counterexample =
                Some(Counterexample { schedule: leaf.schedule, history: leaf.history, report, reasons });
        }
    }
    Ok(res)
}

