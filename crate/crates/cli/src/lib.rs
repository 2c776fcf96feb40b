//! The `lopacity` command line: run and explore workloads under SVA, check
//! and classify trace files, emit the fixture corpus.

pub mod trace;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lopacity_core::checkers::{classify, decided_map, Property, PropertyReport};
use lopacity_core::fixtures;
use lopacity_core::history::{validate_well_formed, EventKind, History, Invocation};
use lopacity_core::par::Exec;
use lopacity_core::program::{dsl, op_views, LastAnnotations, LastWriteOracle, ProgramSpec};
use lopacity_sva::harness::{self, ExploreConfig, ExploreMode, Granularity, PropertySet, Schedule};

use trace::{parse_trace, TraceFile};

#[derive(Parser, Debug)]
#[command(name = "lopacity", version, about = "Last-use opacity checking and SVA exploration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a workload once under SVA and print its trace.
    Run(RunArgs),
    /// Explore the interleavings of a workload and check every history.
    Explore(ExploreArgs),
    /// Check one trace file.
    Check(CheckArgs),
    /// Print the verdict table of every `.trace` file in a directory.
    Classify(ClassifyArgs),
    /// Write the built-in fixture corpus.
    Fixtures(FixturesArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GranularityArg {
    Operation,
    Event,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Operation => Granularity::Operation,
            GranularityArg::Event => Granularity::Event,
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    pub workload: PathBuf,
    /// Schedule file: transaction ids separated by whitespace or commas,
    /// `T1*3` for repeats.
    #[arg(long, conflicts_with = "seed")]
    pub schedule: Option<PathBuf>,
    /// Pick each decision at random.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "operation")]
    pub granularity: GranularityArg,
    /// Write the trace here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ExploreModeArg {
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PropertySetArg {
    Lopacity,
    All,
}

#[derive(Args, Debug)]
pub struct ExploreArgs {
    pub workload: PathBuf,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub mode: ExploreModeArg,
    /// Cap on branching decisions per run.
    #[arg(long, default_value_t = 64)]
    pub bound: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Runs in random mode.
    #[arg(long, default_value_t = 1000)]
    pub runs: u64,
    #[arg(long, value_enum, default_value = "lopacity")]
    pub property: PropertySetArg,
    #[arg(long, value_enum, default_value = "operation")]
    pub granularity: GranularityArg,
    /// Check histories on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Final,
    Full,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    pub trace: PathBuf,
    /// Program for every transaction; overrides the trace header.
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// Property to check, repeatable; `all` or omitted checks everything.
    #[arg(long)]
    pub property: Vec<String>,
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    pub dir: PathBuf,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct FixturesArgs {
    /// Output directory.
    #[arg(long, short, default_value = "fixtures")]
    pub out: PathBuf,
}

/// Input problems; exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

impl InputError {
    fn at(path: &Path, e: impl std::fmt::Display) -> Self {
        InputError(format!("{}: {e}", path.display()))
    }
}

/// Exit status of a successful command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Counterexample,
}

pub fn exit_code(r: &Result<Status, InputError>) -> i32 {
    match r {
        Ok(Status::Pass) => 0,
        Ok(Status::Counterexample) => 1,
        Err(_) => 2,
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError::at(path, e))
}

fn load_workload(path: &Path) -> Result<ProgramSpec, InputError> {
    dsl::parse(&read(path)?).map_err(|e| InputError::at(path, e))
}

pub fn load_trace(path: &Path) -> Result<TraceFile, InputError> {
    let t = parse_trace(&read(path)?).map_err(|e| InputError::at(path, e))?;
    validate_well_formed(&t.history).map_err(|v| {
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        InputError::at(path, format!("not well-formed: {}", msgs.join("; ")))
    })?;
    Ok(t)
}

/// The program of a trace: `--program` for every transaction, otherwise
/// the files named in the header, relative to the trace's directory.
fn resolve_program(trace: &TraceFile, at: &Path, explicit: Option<&Path>) -> Result<Option<ProgramSpec>, InputError> {
    if let Some(p) = explicit {
        return load_workload(p).map(Some);
    }
    if trace.programs.is_empty() {
        return Ok(None);
    }
    let dir = at.parent().unwrap_or(Path::new("."));
    let mut files: BTreeMap<&str, ProgramSpec> = BTreeMap::new();
    let mut spec = ProgramSpec::new();
    for (&t, name) in &trace.programs {
        if !files.contains_key(name.as_str()) {
            files.insert(name, load_workload(&dir.join(name))?);
        }
        let prog = files[name.as_str()].txns.get(&t).ok_or_else(|| InputError::at(at, format!("{name} has no {t}")))?;
        spec.txns.insert(t, prog.clone());
    }
    Ok(Some(spec))
}

fn has_writes(h: &History) -> bool {
    h.events.iter().any(|e| matches!(e.kind, EventKind::Inv(Invocation::Write(..))))
}

/// Which writes the program calls last must match the annotations.
fn compare_annotations(h: &History, oracle: &dyn LastWriteOracle, ann: &LastAnnotations) -> Result<(), String> {
    for t in h.txns() {
        let views = op_views(h, t);
        let by_program = oracle.last_writes(t, &views, false).map_err(|e| e.to_string())?;
        for (v, p) in views.iter().zip(by_program) {
            let a = ann.writes.contains(&(t, v.inv_seq));
            if a != p {
                return Err(format!(
                    "annotation mismatch at event {}: the program says {} a last write",
                    v.inv_seq,
                    if p { "it is" } else { "it is not" }
                ));
            }
        }
    }
    Ok(())
}

/// A trace with its last-write source, ready for checking.
pub struct Loaded {
    pub trace: TraceFile,
    pub program: Option<lopacity_core::program::CompiledProgram>,
}

impl Loaded {
    pub fn load(path: &Path, program: Option<&Path>) -> Result<Self, InputError> {
        let trace = load_trace(path)?;
        let spec = resolve_program(&trace, path, program)?;
        let program = spec.map(|s| s.compile().map_err(|e| InputError::at(path, e))).transpose()?;
        let l = Loaded { trace, program };
        if let Some(o) = l.oracle() {
            decided_map(&l.trace.history, o, false).map_err(|e| InputError::at(path, e))?;
        }
        if let (Some(p), true) = (&l.program, l.trace.has_annotations()) {
            compare_annotations(&l.trace.history, p, &l.trace.last).map_err(|e| InputError::at(path, e))?;
        }
        Ok(l)
    }

    /// Program first, then annotations. A history without writes decides
    /// nothing, so it needs neither.
    pub fn oracle(&self) -> Option<&dyn LastWriteOracle> {
        match &self.program {
            Some(p) => Some(p),
            None if self.trace.has_annotations() || !has_writes(&self.trace.history) => Some(&self.trace.last),
            None => None,
        }
    }

    pub fn classify(&self) -> PropertyReport {
        classify(&self.trace.history, self.oracle()).expect("validated on load")
    }
}

fn property_arg(s: &str, mode: ModeArg) -> Result<Property, InputError> {
    let name = match s {
        "serializability" => "serializable",
        "opacity" => "opaque",
        "beta-lopacity" => "beta-lopaque",
        s => s,
    };
    let p = Property::from_name(name).ok_or_else(|| InputError(format!("unknown property `{s}`")))?;
    Ok(match (mode, p) {
        (ModeArg::Final, Property::Opaque) => Property::FsOpaque,
        (ModeArg::Final, Property::LuOpaque) => Property::FsLuOpaque,
        (ModeArg::Final, Property::BetaLuOpaque) => Property::FsBetaLuOpaque,
        (_, p) => p,
    })
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<Status, InputError> {
    let spec = load_workload(&a.workload)?;
    let g = a.granularity.into();
    let schedule = match (&a.schedule, a.seed) {
        (Some(path), _) => read(path)?.parse::<Schedule>().map_err(|e| InputError::at(path, e))?,
        (None, Some(seed)) => {
            let cfg = ExploreConfig { mode: ExploreMode::Random { runs: 1, seed }, granularity: g, ..Default::default() };
            let found = harness::histories(&spec, &cfg).map_err(|e| InputError::at(&a.workload, e))?;
            found.into_iter().next().map(|(_, s)| s).unwrap_or_default()
        }
        (None, None) => Schedule::default(),
    };
    let r = harness::run(&spec, &schedule, g).map_err(|e| InputError::at(&a.workload, e))?;
    let name = program_name(&a.workload, a.out.as_deref());
    let mut t = TraceFile::new(r.history);
    for &id in spec.txns.keys() {
        t.programs.insert(id, name.clone());
    }
    let text = format!("# schedule: {}\n{t}", r.schedule);
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| InputError::at(p, e))?,
        None => out.write_all(text.as_bytes()).map_err(|e| InputError(e.to_string()))?,
    }
    Ok(Status::Pass)
}

/// The workload as seen from where the trace will live.
fn program_name(workload: &Path, out: Option<&Path>) -> String {
    let same_dir = |o: &Path| {
        let dir = |p: &Path| p.parent().and_then(|d| d.canonicalize().ok());
        o.parent().is_some_and(|_| dir(o).is_some() && dir(o) == dir(workload))
    };
    match out {
        Some(o) if same_dir(o) => workload.file_name().unwrap().to_string_lossy().into_owned(),
        Some(_) => workload.canonicalize().unwrap_or(workload.to_path_buf()).display().to_string(),
        None => workload.display().to_string(),
    }
}

fn cmd_explore(a: &ExploreArgs, out: &mut dyn Write) -> Result<Status, InputError> {
    let spec = load_workload(&a.workload)?;
    let cfg = ExploreConfig {
        mode: match a.mode {
            ExploreModeArg::Exhaustive => ExploreMode::Exhaustive,
            ExploreModeArg::Random => ExploreMode::Random { runs: a.runs, seed: a.seed },
        },
        granularity: a.granularity.into(),
        bound: a.bound,
        properties: match a.property {
            PropertySetArg::Lopacity => PropertySet::LuOpacity,
            PropertySetArg::All => PropertySet::All,
        },
        exec: if a.sequential { Exec::Sequential } else { Exec::default() },
        ..Default::default()
    };
    let r = harness::explore(&spec, &cfg).map_err(|e| InputError::at(&a.workload, e))?;
    write!(out, "{r}").map_err(|e| InputError(e.to_string()))?;
    Ok(if r.counterexample.is_some() || r.deadlocks > 0 { Status::Counterexample } else { Status::Pass })
}

fn verdict(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "unknown",
    }
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<Status, InputError> {
    let l = Loaded::load(&a.trace, a.program.as_deref())?;
    let all = a.property.is_empty() || a.property.iter().any(|p| p == "all");
    let wanted: Vec<Property> = if all {
        Property::ALL.to_vec()
    } else {
        a.property.iter().map(|s| property_arg(s, a.mode)).collect::<Result<_, _>>()?
    };
    if !all && l.oracle().is_none() {
        if let Some(p) = wanted.iter().find(|p| p.needs_program()) {
            return Err(InputError::at(&a.trace, format!("{p} needs a program or `last` annotations")));
        }
    }
    let r = l.classify();
    let failed = wanted.iter().any(|&p| r.get(p) == Some(false));
    let io = |e: std::io::Error| InputError(e.to_string());
    if a.json {
        let text = serde_json::to_string_pretty(&r).map_err(|e| InputError(e.to_string()))?;
        writeln!(out, "{text}").map_err(io)?;
    } else {
        for &p in &wanted {
            writeln!(out, "{:<16} {}", p.name(), verdict(r.verdicts.get(&p).copied().flatten())).map_err(io)?;
        }
        if !r.early_release.is_empty() {
            let er: Vec<String> = r.early_release.iter().map(|(t, x)| format!("{t} on {x}")).collect();
            writeln!(out, "early release: {}", er.join(", ")).map_err(io)?;
        }
        if r.overwriting {
            writeln!(out, "overwriting after early release").map_err(io)?;
        }
        if r.aborting_release {
            writeln!(out, "aborting early release").map_err(io)?;
        }
        if let Some(w) = r.witness.as_ref().filter(|w| !w.order.is_empty()) {
            writeln!(out, "witness: {w}").map_err(io)?;
        }
        if let Some(k) = r.failing_prefix {
            writeln!(out, "shortest failing prefix: {k} events").map_err(io)?;
        }
        for n in &r.notes {
            writeln!(out, "note: {n}").map_err(io)?;
        }
    }
    Ok(if failed { Status::Counterexample } else { Status::Pass })
}

fn cmd_classify(a: &ClassifyArgs, out: &mut dyn Write) -> Result<Status, InputError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.dir)
        .map_err(|e| InputError::at(&a.dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .collect();
    files.sort();
    let exec = if a.sequential { Exec::Sequential } else { Exec::default() };
    let rows = exec.map(&files, |p| Loaded::load(p, None).map(|l| l.classify()));
    let io = |e: std::io::Error| InputError(e.to_string());
    let width = files.iter().map(|p| p.file_stem().unwrap().len()).max().unwrap_or(0).max(5);
    write!(out, "{:<width$}", "trace").map_err(io)?;
    for p in Property::ALL {
        write!(out, " {:>w$}", p.name(), w = p.name().len()).map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    let mut bad = Vec::new();
    for (p, row) in files.iter().zip(rows) {
        write!(out, "{:<width$}", p.file_stem().unwrap().to_string_lossy()).map_err(io)?;
        match row {
            Ok(r) => {
                for q in Property::ALL {
                    let cell = match r.get(q) {
                        Some(true) => "T",
                        Some(false) => "F",
                        None => "?",
                    };
                    write!(out, " {:>w$}", cell, w = q.name().len()).map_err(io)?;
                }
                writeln!(out).map_err(io)?;
            }
            Err(e) => {
                writeln!(out, " error").map_err(io)?;
                bad.push(e.0);
            }
        }
    }
    if bad.is_empty() {
        Ok(Status::Pass)
    } else {
        Err(InputError(bad.join("\n")))
    }
}

/// Trace text of a fixture, bound to `<name>.prog`.
pub fn fixture_trace(f: &fixtures::Fixture) -> TraceFile {
    let mut t = TraceFile::new(f.history.clone());
    for id in f.history.txns() {
        t.programs.insert(id, format!("{}.prog", f.name));
    }
    t
}

fn cmd_fixtures(a: &FixturesArgs, out: &mut dyn Write) -> Result<Status, InputError> {
    std::fs::create_dir_all(&a.out).map_err(|e| InputError::at(&a.out, e))?;
    for f in fixtures::all() {
        let trace = format!("# {}\n{}", f.description, fixture_trace(&f));
        let write = |ext: &str, text: String| {
            let p = a.out.join(format!("{}.{ext}", f.name));
            std::fs::write(&p, text).map_err(|e| InputError::at(&p, e))
        };
        write("trace", trace)?;
        write("prog", dsl::to_dsl(&f.program))?;
        writeln!(out, "{}", f.name).map_err(|e| InputError(e.to_string()))?;
    }
    Ok(Status::Pass)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<Status, InputError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Explore(a) => cmd_explore(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Classify(a) => cmd_classify(a, out),
        Command::Fixtures(a) => cmd_fixtures(a, out),
    }
}
