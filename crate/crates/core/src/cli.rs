//! Command-line front end. [`run`] takes the arguments and output streams so
//! it can be driven from tests.
//!
//! Exit codes: 0 for yes or success, 1 for no or a failed check, 2 for an
//! undecided classification, 3 for bad input.

use crate::castles::{verify_run, verify_stage_invariants, ConstructionConfig, ConstructionState};
use crate::classify::{
    classify_all, conjugate_test, continuous_oe_test, fit_descriptor, implication_violation, isomorphism_test, orbit_equivalence_test,
    ClassificationVerdict, SearchBounds, SupergroupDescriptor,
};
use crate::format::{self, FormatError};
use crate::lattice::{IntegerLattice, RationalLattice};
use crate::matrix;
use crate::odometer::OdometerChain;
use crate::repro::{self, CASES};
use crate::speedup::PiecewiseCocycle;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_YES: i32 = 0;
pub const EXIT_NO: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

/// Nested file references deeper than this are treated as a cycle.
const MAX_NESTING: usize = 16;

#[derive(Parser, Debug)]
#[command(name = "odolab", version, about = "Exact computation with Z^d-odometers and their bounded speedups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lattice operations on literals like `2; 3 1; 0 2` or files holding one.
    Lattice {
        #[command(subcommand)]
        op: LatticeOp,
    },
    /// Stages, value group and freeness of a chain file.
    Odometer {
        #[command(subcommand)]
        op: OdometerOp,
    },
    /// Checks on a cocycle spec file.
    Speedup {
        #[arg(value_enum)]
        op: SpeedupOp,
        spec: PathBuf,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        /// Cone to test the values against, for `cone`.
        #[arg(long)]
        cone: Option<String>,
    },
    /// Decide a relation between two descriptor, chain or cocycle files.
    Classify {
        #[arg(value_enum)]
        relation: RelationArg,
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Run the finite-stage castle construction.
    Construct {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "quadrant")]
        cone: String,
        #[arg(long, default_value_t = 3)]
        stages: usize,
        /// Print every invariant check of every stage.
        #[arg(long)]
        audit: bool,
        /// Write the final speedup table here; `-` for stdout.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run a reproduction case, or `all`.
    Repro {
        case: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        stages: usize,
    },
}

#[derive(Args, Debug)]
struct Bounds {
    /// Stages used to fit a descriptor to a chain.
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    height: u32,
    #[arg(long, default_value_t = 2)]
    denom: u32,
}

#[derive(Subcommand, Debug)]
enum LatticeOp {
    Hnf { l: String },
    Index { l: String },
    Dual { l: String },
    Contains { l: String, v: String },
    Intersect { l: String, m: String },
    Sum { l: String, m: String },
    /// Exit 0 when the first lattice lies in the second.
    Sublattice { l: String, m: String },
    Cosets { l: String },
}

#[derive(Subcommand, Debug)]
enum OdometerOp {
    Stages {
        chain: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    ValueGroup { chain: PathBuf },
    Freeness {
        chain: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long)]
        bound: Option<BigInt>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SpeedupOp {
    Validate,
    Minimal,
    Derive,
    Cone,
    Productform,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RelationArg {
    Conj,
    Iso,
    Coe,
    Oe,
    All,
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_YES };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(Failure(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_INPUT
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Lattice { op } => lattice(op, out),
        Command::Odometer { op } => odometer(op, out),
        Command::Speedup { op, spec, depth, cone } => speedup(op, &spec, depth, cone.as_deref(), out),
        Command::Classify { relation, a, b, bounds } => classify(relation, &a, &b, &bounds, out),
        Command::Construct { source, target, cone, stages, audit, table } => construct(&source, &target, &cone, stages, audit, table.as_deref(), out),
        Command::Repro { case, seed, stages } => run_repro(&case, seed, stages, out),
    }
}

/// A literal, or the contents of the file it names.
fn literal(arg: &str) -> Result<String, Failure> {
    let p = Path::new(arg);
    if !arg.contains(';') && p.is_file() {
        return Ok(std::fs::read_to_string(p).map_err(|e| Failure(format!("{arg}: {e}")))?);
    }
    Ok(arg.to_string())
}

fn int_lattice(arg: &str) -> Result<IntegerLattice, Failure> {
    Ok(format::parse_lattice(&literal(arg)?)?)
}

fn rat_lattice(arg: &str) -> Result<RationalLattice, Failure> {
    Ok(format::parse_rational_lattice(&literal(arg)?)?)
}

fn lattice(op: LatticeOp, out: &mut dyn Write) -> Outcome {
    match op {
        LatticeOp::Hnf { l } => writeln!(out, "{}", int_lattice(&l)?)?,
        LatticeOp::Index { l } => writeln!(out, "{}", int_lattice(&l)?.index())?,
        LatticeOp::Dual { l } => writeln!(out, "{}", rat_lattice(&l)?.dual())?,
        LatticeOp::Contains { l, v } => {
            let inside = rat_lattice(&l)?.contains(&format::parse_qvec(&v)?)?;
            writeln!(out, "{inside}")?;
            return Ok(if inside { EXIT_YES } else { EXIT_NO });
        }
        LatticeOp::Intersect { l, m } => writeln!(out, "{}", rat_lattice(&l)?.intersect(&rat_lattice(&m)?)?)?,
        LatticeOp::Sum { l, m } => writeln!(out, "{}", rat_lattice(&l)?.sum(&rat_lattice(&m)?)?)?,
        LatticeOp::Sublattice { l, m } => {
            let sub = rat_lattice(&l)?.is_sublattice_of(&rat_lattice(&m)?)?;
            writeln!(out, "{sub}")?;
            return Ok(if sub { EXIT_YES } else { EXIT_NO });
        }
        LatticeOp::Cosets { l } => {
            let l = int_lattice(&l)?;
            let cs = l.coset_system();
            writeln!(out, "index {}", cs.index())?;
            for (i, r) in cs.reps()?.enumerate() {
                writeln!(out, "{i} {}", matrix::fmt_ivec(&r))?;
            }
        }
    }
    Ok(EXIT_YES)
}

/// Loads chain and cocycle files, resolving references relative to the
/// directory of the file that makes them.
struct Loader {
    nesting: usize,
}

enum Item {
    Chain(Arc<OdometerChain>),
    Cocycle(Arc<PiecewiseCocycle>),
    Descriptor(SupergroupDescriptor),
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn located(path: &Path, e: FormatError) -> String {
    format!("{}: {e}", path.display())
}

fn relative(base: &Path, reference: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(reference)
}

impl Loader {
    fn new() -> Self {
        Loader { nesting: 0 }
    }

    fn enter(&mut self, path: &Path) -> Result<(), String> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(format!("{}: references nest too deeply (cycle?)", path.display()));
        }
        Ok(())
    }

    fn chain(&mut self, path: &Path) -> Result<Arc<OdometerChain>, String> {
        self.enter(path)?;
        let text = read(path)?;
        let spec = format::parse_chain(&text, &mut |r| self.cocycle(&relative(path, r))).map_err(|e| located(path, e));
        self.nesting -= 1;
        Ok(spec?.chain)
    }

    fn cocycle(&mut self, path: &Path) -> Result<Arc<PiecewiseCocycle>, String> {
        self.enter(path)?;
        let text = read(path)?;
        let spec = format::parse_cocycle(&text, &mut |r| self.chain(&relative(path, r))).map_err(|e| located(path, e));
        self.nesting -= 1;
        Ok(spec?.cocycle)
    }

    /// Decides the file kind from its first meaningful line.
    fn item(&mut self, path: &Path) -> Result<Item, String> {
        let text = read(path)?;
        let head = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#')).unwrap_or("");
        if head.contains("shear=") {
            Ok(Item::Descriptor(format::parse_descriptor(&text).map_err(|e| located(path, e))?))
        } else if head.starts_with("chain=") {
            Ok(Item::Cocycle(self.cocycle(path)?))
        } else {
            Ok(Item::Chain(self.chain(path)?))
        }
    }
}

fn odometer(op: OdometerOp, out: &mut dyn Write) -> Outcome {
    match op {
        OdometerOp::Stages { chain, depth } => {
            let c = Loader::new().chain(&chain)?;
            for j in 1..=depth {
                let g = c.stage(j)?;
                writeln!(out, "stage {j}: {g}")?;
                writeln!(out, "  index {} boundary {}", g.index(), c.boundary_measure(j)?)?;
                writeln!(out, "  dual {}", c.cohomology_stage(j)?)?;
            }
        }
        OdometerOp::ValueGroup { chain } => {
            let c = Loader::new().chain(&chain)?;
            let g = c.clopen_value_group()?;
            writeln!(out, "{g}{}", if g.exact { "" } else { " (from the computed stages only)" })?;
        }
        OdometerOp::Freeness { chain, depth, bound } => {
            let c = Loader::new().chain(&chain)?;
            let f = c.freeness_evidence(depth, bound.as_ref())?;
            writeln!(out, "intersection to depth {}: {}", f.depth, f.intersection)?;
            writeln!(out, "shortest vector {}", matrix::fmt_ivec(&f.shortest))?;
            if let Some(b) = f.exceeds_bound {
                writeln!(out, "exceeds bound: {b}")?;
            }
            let verdict = if f.certified_free {
                "free"
            } else if f.certified_not_free {
                "not free"
            } else {
                "undecided"
            };
            writeln!(out, "{verdict}")?;
            return Ok(if f.certified_free {
                EXIT_YES
            } else if f.certified_not_free {
                EXIT_NO
            } else {
                EXIT_UNDECIDED
            });
        }
    }
    Ok(EXIT_YES)
}

fn yes_no(b: bool) -> i32 {
    if b {
        EXIT_YES
    } else {
        EXIT_NO
    }
}

fn speedup(op: SpeedupOp, spec: &Path, depth: usize, cone: Option<&str>, out: &mut dyn Write) -> Outcome {
    let c = Loader::new().cocycle(spec)?;
    match op {
        SpeedupOp::Validate => match c.validate() {
            Ok(()) => {
                writeln!(out, "valid")?;
                Ok(EXIT_YES)
            }
            Err(e) => {
                writeln!(out, "invalid: {e}")?;
                Ok(EXIT_NO)
            }
        },
        SpeedupOp::Minimal => {
            let m = c.minimality_to_depth(depth)?;
            for (j, ok) in m.iter().enumerate() {
                writeln!(out, "depth {}: {}", j + 1, if *ok { "transitive" } else { "not transitive" })?;
            }
            Ok(yes_no(m.iter().all(|&b| b)))
        }
        SpeedupOp::Derive => {
            let (report, chain) = c.derived_chain(depth)?;
            for (j, g) in report.stabilizers.iter().enumerate() {
                writeln!(out, "stage {}: {g} orbit {}", j + 1, report.orbit_sizes[j])?;
            }
            match fit_descriptor(&chain, depth)? {
                Ok(fit) => writeln!(out, "descriptor {}{}", fit.descriptor, if fit.exact { "" } else { " (fitted to the computed stages)" })?,
                Err(e) => writeln!(out, "{e}")?,
            }
            Ok(EXIT_YES)
        }
        SpeedupOp::Cone => {
            let hull = c.cone_hull();
            match &hull {
                Ok(h) => writeln!(out, "hull {}", format::emit_cone(h))?,
                Err(e) => writeln!(out, "hull: {e}")?,
            }
            let Some(spec) = cone else { return Ok(yes_no(hull.is_ok())) };
            let check = c.cone_check(&format::parse_cone(spec)?);
            for (i, rep, v) in &check.witnesses {
                writeln!(out, "gen {i} rep {} value {} outside", matrix::fmt_ivec(rep), matrix::fmt_ivec(v))?;
            }
            writeln!(out, "{}", if check.holds { "inside" } else { "outside" })?;
            Ok(yes_no(check.holds))
        }
        SpeedupOp::Productform => {
            let p = c.product_form_check()?;
            writeln!(out, "{}", if p { "product form" } else { "not product form" })?;
            Ok(yes_no(p))
        }
    }
}

fn descriptor_of(item: &Item, depth: usize) -> Result<SupergroupDescriptor, Failure> {
    let chain = match item {
        Item::Descriptor(d) => return Ok(d.clone()),
        Item::Chain(c) => Arc::clone(c),
        Item::Cocycle(c) => Arc::new(OdometerChain::derived(Arc::clone(c))),
    };
    match fit_descriptor(&chain, depth)? {
        Ok(fit) => Ok(fit.descriptor),
        Err(e) => Err(Failure(e.to_string())),
    }
}

fn chain_of(item: &Item, name: &Path) -> Result<Arc<OdometerChain>, Failure> {
    match item {
        Item::Chain(c) => Ok(Arc::clone(c)),
        Item::Cocycle(c) => Ok(Arc::new(OdometerChain::derived(Arc::clone(c)))),
        Item::Descriptor(_) => Err(Failure(format!("{}: orbit equivalence needs a chain or cocycle file, not a descriptor", name.display()))),
    }
}

fn classify(relation: RelationArg, a: &Path, b: &Path, bounds: &Bounds, out: &mut dyn Write) -> Outcome {
    let mut loader = Loader::new();
    let (ia, ib) = (loader.item(a)?, loader.item(b)?);
    let verdict = |v: ClassificationVerdict, out: &mut dyn Write| -> Outcome {
        writeln!(out, "{v}")?;
        Ok(v.exit_code())
    };
    match relation {
        RelationArg::Conj => verdict(conjugate_test(&descriptor_of(&ia, bounds.depth)?, &descriptor_of(&ib, bounds.depth)?)?, out),
        RelationArg::Iso => {
            verdict(isomorphism_test(&descriptor_of(&ia, bounds.depth)?, &descriptor_of(&ib, bounds.depth)?, bounds.height)?, out)
        }
        RelationArg::Coe => verdict(
            continuous_oe_test(&descriptor_of(&ia, bounds.depth)?, &descriptor_of(&ib, bounds.depth)?, bounds.height, bounds.denom)?,
            out,
        ),
        RelationArg::Oe => verdict(orbit_equivalence_test(&*chain_of(&ia, a)?, &*chain_of(&ib, b)?)?, out),
        RelationArg::All => {
            let (da, db) = (descriptor_of(&ia, bounds.depth)?, descriptor_of(&ib, bounds.depth)?);
            let (ca, cb) = (chain_of(&ia, a)?, chain_of(&ib, b)?);
            let vs = classify_all((&da, &ca), (&db, &cb), SearchBounds { height: bounds.height, denom: bounds.denom })?;
            for v in &vs {
                writeln!(out, "{v}")?;
            }
            match implication_violation(&vs) {
                Some((s, w)) => {
                    writeln!(out, "implication violated: {s} holds but {w} fails")?;
                    Ok(EXIT_NO)
                }
                None => Ok(EXIT_YES),
            }
        }
    }
}

fn construct(source: &Path, target: &Path, cone: &str, stages: usize, audit: bool, table: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let mut loader = Loader::new();
    let (s, t) = (loader.chain(source)?, loader.chain(target)?);
    let config = ConstructionConfig::new(format::parse_cone(cone)?);
    let mut state = ConstructionState::new(s, t, config)?;
    writeln!(out, "u = {}, cylinder offset {}", matrix::fmt_ivec(&state.u), state.cylinder_offset)?;
    let mut ok = true;
    for k in 0..stages {
        let rec = state.next_stage()?;
        writeln!(
            out,
            "stage {k}: n = {}, eps = {}, height {}, depth {}, {} towers, |F| = {}, |R| = {}",
            rec.n,
            rec.epsilon,
            rec.height,
            rec.depth,
            rec.source.towers.len(),
            rec.f.len(),
            rec.r.len()
        )?;
        let report = verify_stage_invariants(&state, k);
        ok &= report.passed();
        if audit {
            write!(out, "{report}")?;
        } else {
            for e in report.failures() {
                writeln!(out, "stage {k} ({}) {}: FAIL {}", e.family, e.name, e.detail)?;
            }
        }
        writeln!(out, "stage {k} audit: {}", if report.passed() { "pass" } else { "FAIL" })?;
    }
    let run = verify_run(&state)?;
    writeln!(out, "stabilization: {} atoms, {} violations, at most {} redefinitions", run.atoms, run.violations, run.max_changes)?;
    ok &= run.stable();
    if let (Some(path), Some(last)) = (table, state.stages.last()) {
        let text = format!("depth={} atoms={}\n{}", last.speedup.depth(), last.speedup.domain().count(), last.speedup.table());
        if path == Path::new("-") {
            out.write_all(text.as_bytes())?;
        } else {
            std::fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            writeln!(out, "table written to {}", path.display())?;
        }
    }
    Ok(yes_no(ok))
}

fn run_repro(case: &str, seed: u64, stages: usize, out: &mut dyn Write) -> Outcome {
    let names: Vec<&str> = if case == "all" { CASES.to_vec() } else { vec![case] };
    let mut ok = true;
    for name in names {
        let r = repro::run_repro_with(name, seed, stages)?;
        write!(out, "{r}")?;
        ok &= r.passed();
    }
    Ok(yes_no(ok))
}
