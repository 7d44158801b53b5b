//! Command-line front end: argument parsing, JSON documents, SVG and CSV
//! emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wronski_core::combinat::{catalan, count_nets_multiplicity, kostka, CombinatError, ContentVector};
use wronski_core::electro::{energy, residual_norm, solve_equilibrium, ElectroError};
use wronski_core::fuchs::{bethe_residual, bethe_solve, polynomial_solutions, exponent_check, residues, FuchsError};
use wronski_core::nets::{net_from_ballot, trace_net, Net, NetError, TraceOptions};
use wronski_core::poly::{span_equivalent, Real};
use wronski_core::tracker::{relative_residual, solve_all, PairClass, TrackError, TrackOptions};

#[derive(Parser, Debug)]
#[command(name = "wronski", about = "Rational functions with prescribed real critical points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Comma-separated real points.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub points: Vec<Real>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Comma-separated multiplicities.
    #[arg(long, global = true, value_delimiter = ',')]
    pub content: Vec<usize>,
    /// Newton tolerance for the class polish.
    #[arg(long, global = true)]
    pub tol: Option<Real>,
    #[arg(long, global = true, env = "WRONSKI_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Multistart budget for Bethe and equilibrium solving.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub starts: usize,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Also write the JSON document to this file.
    #[arg(long, global = true)]
    pub json: Option<PathBuf>,
    /// Directory for one SVG per traced net.
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
    /// File for arc polylines as CSV.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Number of classes for degree d.
    Count,
    /// Kostka number and net count for a content vector.
    Kostka,
    /// All classes with the given critical points.
    Solve,
    /// Real solutions of the Bethe system at the given points.
    Bethe,
    /// Isolated equilibria of m mobile charges.
    Equilibrium,
    /// Traced nets of all classes.
    Net,
    /// Cross-checks between solver, nets and Bethe dictionary.
    Verify,
}

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical { message: String, diagnostics: serde_json::Value },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical { .. } => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical { message: m, .. } => m,
        }
    }

    pub fn document(&self) -> serde_json::Value {
        match self {
            Failure::Input(m) => serde_json::json!({ "error": m, "kind": "input" }),
            Failure::Numerical { message, diagnostics } => {
                serde_json::json!({ "error": message, "kind": "numerical", "diagnostics": diagnostics })
            }
        }
    }
}

fn numerical(message: impl ToString) -> Failure {
    Failure::Numerical { message: message.to_string(), diagnostics: serde_json::Value::Null }
}

impl From<TrackError> for Failure {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::InvalidPoints(m) => Failure::Input(m),
            TrackError::Combinat(c) => Failure::Input(c.to_string()),
            TrackError::CountMismatch { expected, found, ref logs } => Failure::Numerical {
                message: format!("found {found} of {expected} classes"),
                diagnostics: serde_json::to_value(logs).unwrap_or_default(),
            },
            other => numerical(other),
        }
    }
}

impl From<NetError> for Failure {
    fn from(e: NetError) -> Self {
        numerical(e)
    }
}

impl From<CombinatError> for Failure {
    fn from(e: CombinatError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<FuchsError> for Failure {
    fn from(e: FuchsError) -> Self {
        match e {
            FuchsError::DuplicatePoints => Failure::Input("points must be distinct".into()),
            FuchsError::LengthMismatch { .. } => Failure::Input(e.to_string()),
            other => numerical(other),
        }
    }
}

impl From<ElectroError> for Failure {
    fn from(e: ElectroError) -> Self {
        match e {
            ElectroError::InvalidInput(m) => Failure::Input(m),
            ElectroError::Fuchs(f) => f.into(),
            other => numerical(other),
        }
    }
}

#[derive(Serialize)]
pub struct CountDoc {
    pub d: usize,
    pub u: u64,
}

#[derive(Serialize)]
pub struct KostkaDoc {
    pub content: Vec<usize>,
    pub d: usize,
    pub kostka: u64,
    pub nets: u64,
}

#[derive(Serialize)]
pub struct Diagnostics {
    pub max_imag: Real,
    pub residual: Real,
}

#[derive(Serialize)]
pub struct ClassDoc {
    pub ballot: String,
    pub chart_base: Real,
    pub q1_coeffs: Vec<Real>,
    pub q2_coeffs: Vec<Real>,
    pub wronskian_roots: Vec<Real>,
    pub residues_x: Vec<Real>,
    pub s: i64,
    pub net_matching: Vec<[usize; 2]>,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
pub struct SolveDoc {
    pub points: Vec<Real>,
    pub d: usize,
    pub classes: Vec<ClassDoc>,
}

#[derive(Serialize)]
pub struct BetheDoc {
    pub x: Vec<Real>,
    pub s: i64,
    pub qstar: Real,
    pub degrees: [usize; 2],
}

#[derive(Serialize)]
pub struct BetheListDoc {
    pub points: Vec<Real>,
    pub solutions: Vec<BetheDoc>,
}

#[derive(Serialize)]
pub struct EquilibriumDoc {
    pub z: Vec<[Real; 2]>,
    pub energy: Real,
    pub residual_norm: Real,
}

#[derive(Serialize)]
pub struct EquilibriumListDoc {
    pub points: Vec<Real>,
    pub m: usize,
    pub equilibria: Vec<EquilibriumDoc>,
}

#[derive(Serialize)]
pub struct NetDoc {
    pub ballot: String,
    pub vertices: Vec<Real>,
    pub matching: Vec<[usize; 2]>,
    pub distinguished: usize,
}

#[derive(Serialize)]
pub struct NetListDoc {
    pub points: Vec<Real>,
    pub d: usize,
    pub nets: Vec<NetDoc>,
}

#[derive(Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Serialize)]
pub struct VerifyDoc {
    pub points: Vec<Real>,
    pub d: usize,
    pub ok: bool,
    pub checks: Vec<Check>,
}

/// Degree implied by the point count, checked against `--d` if given.
fn degree_for(points: &[Real], d: Option<usize>) -> Result<usize, Failure> {
    if points.is_empty() {
        return Err(Failure::Input("--points is required".into()));
    }
    if points.len() % 2 != 0 {
        return Err(Failure::Input(format!("need an even number of points, got {}", points.len())));
    }
    let implied = points.len() / 2 + 1;
    match d {
        Some(d) if d != implied => Err(Failure::Input(format!("degree {d} needs {} points", 2 * d - 2))),
        _ => Ok(implied),
    }
}

fn check_points(points: &[Real]) -> Result<Vec<Real>, Failure> {
    if points.is_empty() {
        return Err(Failure::Input("--points is required".into()));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Failure::Input("points must be finite".into()));
    }
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.total_cmp(b));
    if p.windows(2).any(|w| w[0] == w[1]) {
        return Err(Failure::Input("points must be distinct".into()));
    }
    Ok(p)
}

fn track_options(c: &Common) -> TrackOptions {
    let mut opts = TrackOptions { rng_seed: c.seed, ..TrackOptions::default() };
    if let Some(t) = c.tol {
        opts.newton_tol = t;
    }
    opts
}

fn matching_pairs(net: &Net) -> Vec<[usize; 2]> {
    net.matching.arcs().iter().map(|&(i, j)| [i, j]).collect()
}

fn real_coeffs(p: &wronski_core::poly::ComplexPoly) -> Vec<Real> {
    p.coeffs().iter().map(|c| c.re).collect()
}

struct Solved {
    points: Vec<Real>,
    d: usize,
    classes: Vec<PairClass>,
}

fn solve(c: &Common) -> Result<Solved, Failure> {
    let points = check_points(&c.points)?;
    let d = degree_for(&points, c.d)?;
    let sol = solve_all(&points, d, &track_options(c))?;
    let mut classes = sol.classes;
    classes.sort_by_key(|k| k.ballot.as_ref().map(|b| b.to_string()));
    Ok(Solved { points: sol.points, d, classes })
}

fn ballot_name(pc: &PairClass) -> String {
    pc.ballot.as_ref().map(|b| b.to_string()).unwrap_or_default()
}

fn class_doc(pc: &PairClass, points: &[Real], net: &Net) -> Result<ClassDoc, Failure> {
    let x = residues(&pc.pair(), points)?;
    let (_, _, s) = exponent_check(&x, points)?;
    Ok(ClassDoc {
        ballot: ballot_name(pc),
        chart_base: pc.chart.base_point,
        q1_coeffs: real_coeffs(&pc.q1),
        q2_coeffs: real_coeffs(&pc.q2),
        wronskian_roots: pc.critical_points()?,
        residues_x: x,
        s: s.round() as i64,
        net_matching: matching_pairs(net),
        diagnostics: Diagnostics { max_imag: pc.max_imag(), residual: relative_residual(pc, points)? },
    })
}

fn traced(solved: &Solved) -> Result<Vec<Net>, Failure> {
    let opts = TraceOptions::default();
    solved.classes.iter().map(|pc| trace_net(pc, &opts).map_err(Failure::from)).collect()
}

/// Horizontal and vertical extent of a set of nets.
fn extent(nets: &[(String, Net)]) -> (Real, Real, Real) {
    let mut lo = Real::INFINITY;
    let mut hi = Real::NEG_INFINITY;
    let mut top: Real = 0.0;
    for (_, net) in nets {
        for v in &net.vertices {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        for p in net.arcs.iter().flat_map(|a| &a.points) {
            lo = lo.min(p[0]);
            hi = hi.max(p[0]);
            top = top.max(p[1].abs());
        }
    }
    (lo, hi, top)
}

/// Writes one SVG per net: the real axis, the vertices, the upper arcs and
/// their mirror images.
pub fn emit_svg(nets: &[(String, Net)], dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    if nets.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir)?;
    let (lo, hi, top) = extent(nets);
    let pad = 0.1 * (hi - lo).max(1e-9);
    let (x0, x1) = (lo - pad, hi + pad);
    let y_top = top.max(pad) * 1.1;
    let (w, h) = (800.0, 800.0 * y_top / (x1 - x0));
    let h = h.clamp(200.0, 800.0);
    let sx = |x: Real| (x - x0) / (x1 - x0) * w;
    let sy = |y: Real| h / 2.0 - y / y_top * (h / 2.0);
    let mut out = Vec::new();
    for (k, (name, net)) in nets.iter().enumerate() {
        let mut svg = String::new();
        let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
        let _ = writeln!(svg, r#"<line x1="0" y1="{0:.3}" x2="{w:.0}" y2="{0:.3}" stroke="gray"/>"#, sy(0.0));
        for arc in &net.arcs {
            for sign in [1.0, -1.0] {
                let pts: Vec<String> =
                    arc.points.iter().map(|p| format!("{:.3},{:.3}", sx(p[0]), sy(sign * p[1]))).collect();
                let dash = if sign < 0.0 { r#" stroke-dasharray="4 3""# } else { "" };
                let _ = writeln!(svg, r#"<polyline fill="none" stroke="black"{dash} points="{}"/>"#, pts.join(" "));
            }
        }
        for (j, v) in net.vertices.iter().enumerate() {
            let fill = if j == net.distinguished { "red" } else { "black" };
            let _ = writeln!(svg, r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="{fill}"/>"#, sx(*v), sy(0.0));
        }
        let _ = writeln!(svg, r#"<text x="8" y="16" font-size="14">{name}</text>"#);
        svg.push_str("</svg>\n");
        let path = dir.join(format!("net_{k}_{name}.svg"));
        fs::write(&path, svg)?;
        out.push(path);
    }
    Ok(out)
}

/// Arc polylines, one row per point.
pub fn emit_csv(nets: &[(String, Net)], path: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["net", "ballot", "arc", "from", "to", "point", "x", "y"])?;
    for (k, (name, net)) in nets.iter().enumerate() {
        for (a, arc) in net.arcs.iter().enumerate() {
            for (i, p) in arc.points.iter().enumerate() {
                w.write_record([
                    k.to_string(),
                    name.clone(),
                    a.to_string(),
                    arc.from.to_string(),
                    arc.to.to_string(),
                    i.to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_plots(c: &Common, nets: &[(String, Net)]) -> Result<(), Failure> {
    if let Some(dir) = &c.svg {
        emit_svg(nets, dir).map_err(|e| numerical(format!("writing SVG: {e}")))?;
    }
    if let Some(path) = &c.csv {
        emit_csv(nets, path).map_err(|e| numerical(format!("writing CSV: {e}")))?;
    }
    Ok(())
}

fn to_value<T: Serialize>(doc: &T) -> serde_json::Value {
    serde_json::to_value(doc).expect("documents serialize")
}

fn verify(c: &Common) -> Result<VerifyDoc, Failure> {
    let solved = solve(c)?;
    let mut checks = Vec::new();
    let mut check = |name: &str, pass: bool, detail: String| checks.push(Check { name: name.into(), pass, detail });
    let u = catalan(solved.d)? as usize;
    check("count", solved.classes.len() == u, format!("{} of {u} classes", solved.classes.len()));

    let (mut imag, mut root): (Real, Real) = (0.0, 0.0);
    for pc in &solved.classes {
        imag = imag.max(pc.max_imag());
        for (a, b) in pc.critical_points()?.iter().zip(&solved.points) {
            root = root.max((a - b).abs());
        }
    }
    check("reality", imag <= 1e-8 && root <= 1e-8, format!("imaginary {imag:.2e}, root error {root:.2e}"));

    let mut bethe_ok = 0;
    let mut round_trip = 0;
    for pc in &solved.classes {
        let x = residues(&pc.pair(), &solved.points)?;
        let r = bethe_residual(&x, &solved.points)?.iter().fold(0.0, |m: Real, v| m.max(v.abs()));
        let (sum, _, s) = exponent_check(&x, &solved.points)?;
        if r <= 1e-8 && sum.abs() <= 1e-9 && (s - s.round()).abs() <= 1e-6 {
            bethe_ok += 1;
        }
        if let Ok(b) = polynomial_solutions(&solved.points, &x) {
            if span_equivalent(&b.pair(), &pc.pair(), 1e-6).unwrap_or(false) {
                round_trip += 1;
            }
        }
    }
    let n = solved.classes.len();
    check("bethe", bethe_ok == n, format!("{bethe_ok}/{n} residue vectors solve the Bethe system"));
    check("round trip", round_trip == n, format!("{round_trip}/{n} classes rebuilt from residues"));

    match traced(&solved) {
        Ok(nets) => {
            let agree = solved
                .classes
                .iter()
                .zip(&nets)
                .filter(|(pc, net)| {
                    pc.ballot
                        .as_ref()
                        .and_then(|b| net_from_ballot(b, &net.vertices).ok())
                        .is_some_and(|want| want.same_matching(net))
                })
                .count();
            let mut m: Vec<_> = nets.iter().map(|n| n.matching.clone()).collect();
            m.sort();
            m.dedup();
            check("nets", agree == n && m.len() == n, format!("{agree}/{n} match their ballot, {} distinct", m.len()));
        }
        Err(e) => check("nets", false, e.message().to_string()),
    }
    let ok = checks.iter().all(|c| c.pass);
    Ok(VerifyDoc { points: solved.points, d: solved.d, ok, checks })
}

/// Runs one command and returns its JSON document.
pub fn execute(cli: &Cli) -> Result<serde_json::Value, Failure> {
    let c = &cli.common;
    match cli.command {
        Command::Count => {
            let d = c.d.ok_or_else(|| Failure::Input("--d is required".into()))?;
            Ok(to_value(&CountDoc { d, u: catalan(d)? }))
        }
        Command::Kostka => {
            if c.content.is_empty() {
                return Err(Failure::Input("--content is required".into()));
            }
            let cv = ContentVector::from_entries(c.content.clone())?;
            if let Some(d) = c.d {
                if d != cv.degree() {
                    return Err(Failure::Input(format!("content sums to degree {}, not {d}", cv.degree())));
                }
            }
            Ok(to_value(&KostkaDoc {
                content: c.content.clone(),
                d: cv.degree(),
                kostka: kostka(&cv),
                nets: count_nets_multiplicity(&cv),
            }))
        }
        Command::Solve => {
            let solved = solve(c)?;
            let nets = traced(&solved)?;
            let classes = solved
                .classes
                .iter()
                .zip(&nets)
                .map(|(pc, net)| class_doc(pc, &solved.points, net))
                .collect::<Result<Vec<_>, _>>()?;
            let named: Vec<(String, Net)> = solved.classes.iter().map(ballot_name).zip(nets).collect();
            write_plots(c, &named)?;
            Ok(to_value(&SolveDoc { points: solved.points, d: solved.d, classes }))
        }
        Command::Net => {
            let solved = solve(c)?;
            let nets = traced(&solved)?;
            let named: Vec<(String, Net)> = solved.classes.iter().map(ballot_name).zip(nets).collect();
            write_plots(c, &named)?;
            let docs = named
                .iter()
                .map(|(name, net)| NetDoc {
                    ballot: name.clone(),
                    vertices: net.vertices.clone(),
                    matching: matching_pairs(net),
                    distinguished: net.distinguished,
                })
                .collect();
            Ok(to_value(&NetListDoc { points: solved.points, d: solved.d, nets: docs }))
        }
        Command::Bethe => {
            let points = check_points(&c.points)?;
            let sols = bethe_solve(&points, c.starts, c.seed)?;
            let solutions = sols
                .into_iter()
                .map(|s| BetheDoc { x: s.x, s: s.s, qstar: s.qstar, degrees: [s.degrees.0, s.degrees.1] })
                .collect();
            Ok(to_value(&BetheListDoc { points, solutions }))
        }
        Command::Equilibrium => {
            let points = check_points(&c.points)?;
            let m = c.m.ok_or_else(|| Failure::Input("--m is required".into()))?;
            let eq = solve_equilibrium(&points, m, c.starts, c.seed)?;
            let equilibria = eq
                .iter()
                .map(|cfg| {
                    Ok(EquilibriumDoc {
                        z: cfg.mobile.iter().map(|z| [z.re, z.im]).collect(),
                        energy: energy(cfg)?,
                        residual_norm: residual_norm(cfg)?,
                    })
                })
                .collect::<Result<Vec<_>, ElectroError>>()?;
            Ok(to_value(&EquilibriumListDoc { points, m, equilibria }))
        }
        Command::Verify => {
            let doc = verify(c)?;
            if doc.ok {
                Ok(to_value(&doc))
            } else {
                Err(Failure::Numerical { message: "verification failed".into(), diagnostics: to_value(&doc) })
            }
        }
    }
}

/// Runs the parsed command, printing JSON to stdout; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(jobs) = cli.common.jobs {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let (doc, code) = match execute(cli) {
        Ok(doc) => (doc, 0),
        Err(f) => {
            eprintln!("error: {}", f.message());
            (f.document(), f.exit_code())
        }
    };
    let text = serde_json::to_string(&doc).expect("documents serialize");
    println!("{text}");
    if let Some(path) = &cli.common.json {
        if let Err(e) = fs::write(path, format!("{text}\n")) {
            eprintln!("error: writing {}: {e}", path.display());
            return code.max(1);
        }
    }
    code
}
