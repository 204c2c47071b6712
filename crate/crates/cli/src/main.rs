mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use dmesh::error::DmeshError;
use dmesh::geometry::{Aabb, WeightedPoint};
use dmesh::io::{read_mesh, read_pointcloud, write_atomic, DMeshFile};
use dmesh::mesh::{Frame, TriMesh};
use dmesh::metrics::{evaluate, evaluate_points, recovery, EvalOptions, EvalReport};
use dmesh::optimizer::{self, ExtractedMesh, OptState, PointCloud, StepReport};
use dmesh::oracle::{bench, BenchOptions, BenchRow};
use dmesh::power_diagram::build_power_diagram;
use dmesh::probability::Evaluator;
use dmesh::triangulation::{build_wdt, Simplex};
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dmesh", version, about = "Differentiable meshes on weighted Delaunay triangulations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Rest {
    /// Optional JSON config followed by `--key=value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    args: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a DMesh to a triangle mesh (OBJ) with known connectivity.
    Convert(Rest),
    /// Reconstruct a mesh from a point cloud (XYZ or PLY).
    ReconstructPc(Rest),
    /// Extract the triangle mesh of a DMesh file.
    Extract(Rest),
    /// Print τ and face probabilities for one face of a DMesh file.
    Probe(Rest),
    /// Compare the fast probability kernel with the exact oracle (CSV).
    BenchOracle(Rest),
    /// Compare two OBJ meshes.
    Eval(Rest),
}

impl Cmd {
    fn parts(&self) -> (&'static str, &Rest) {
        match self {
            Cmd::Convert(r) => ("convert", r),
            Cmd::ReconstructPc(r) => ("reconstruct-pc", r),
            Cmd::Extract(r) => ("extract", r),
            Cmd::Probe(r) => ("probe", r),
            Cmd::BenchOracle(r) => ("bench-oracle", r),
            Cmd::Eval(r) => ("eval", r),
        }
    }
}

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn tag(&self) -> String {
        let (kind, msg) = match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Io(m) => ("io", m),
            Failure::Numerical(m) => ("numerical", m),
        };
        format!("error[{kind}]: {}", msg.replace('\n', " "))
    }
}

impl From<DmeshError> for Failure {
    fn from(e: DmeshError) -> Self {
        match e {
            DmeshError::Io(_) | DmeshError::Parse { .. } => Failure::Io(e.to_string()),
            DmeshError::Config(_) | DmeshError::Contract(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            eprintln!("{}", Failure::Usage(first).tag());
            return ExitCode::from(1);
        }
    };
    match run(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.tag());
            ExitCode::from(f.code())
        }
    }
}

fn load_config(mode: &str, rest: &Rest) -> Res<RunConfig> {
    let (path, pairs) = config::split_args(&rest.args).map_err(Failure::Usage)?;
    let text = match &path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut cfg = config::build(text.as_deref(), &pairs).map_err(Failure::Usage)?;
    match cfg.mode.as_deref() {
        Some(m) if m != mode => return Err(Failure::Usage(format!("config is for `{m}`, not `{mode}`"))),
        _ => cfg.mode = Some(mode.to_string()),
    }
    Ok(cfg)
}

fn run(cmd: &Cmd) -> Res<()> {
    let (mode, rest) = cmd.parts();
    let cfg = load_config(mode, rest)?;
    match cmd {
        Cmd::Convert(_) => convert(&cfg),
        Cmd::ReconstructPc(_) => reconstruct(&cfg),
        Cmd::Extract(_) => extract(&cfg),
        Cmd::Probe(_) => probe(&cfg),
        Cmd::BenchOracle(_) => bench_oracle(&cfg),
        Cmd::Eval(_) => eval(&cfg),
    }
}

/// Prefixes errors from reading `p` with the path.
fn reading<T>(p: &Path, r: dmesh::error::Result<T>) -> Res<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", p.display())),
        f => f,
    })
}

fn need<'a>(p: &'a Option<PathBuf>, what: &str) -> Res<&'a Path> {
    p.as_deref().ok_or_else(|| Failure::Usage(format!("missing --{what}")))
}

fn prepare_output(cfg: &RunConfig) -> Res<()> {
    std::fs::create_dir_all(&cfg.output)?;
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_atomic(&cfg.output.join("config.json"), text.as_bytes())?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

/// DMesh file plus a JSON sidecar with counters and, optionally, Adam moments.
fn checkpoint(cfg: &RunConfig, state: &OptState) -> Res<()> {
    let file = DMeshFile { dim: state.dim, points: state.points.clone() };
    file.write(&cfg.output.join("checkpoint.dmesh"))?;
    let mut side = json!({
        "step": state.step,
        "epoch": state.epoch,
        "phase": state.phase,
        "seed": state.seed,
        "chamfer_k": state.chamfer_k,
        "n_points": state.points.len(),
    });
    if cfg.save_moments {
        side["adam"] = serde_json::to_value(&state.adam).expect("moments serialize");
    }
    write_text(&cfg.output.join("checkpoint.json"), &serde_json::to_string_pretty(&side).expect("json"))
}

fn progress(cfg: &RunConfig) -> impl FnMut(&OptState, &StepReport) + '_ {
    let mut failed = None::<String>;
    move |state, r| {
        if r.step % 100 == 0 {
            log::info!("step {} loss {:.6e} points {} faces {}", r.step, r.loss, r.n_points, r.n_faces);
        }
        if cfg.checkpoint_every > 0 && (r.step + 1) % cfg.checkpoint_every == 0 && failed.is_none() {
            if let Err(e) = checkpoint(cfg, state) {
                log::warn!("checkpoint failed: {}", e.tag());
                failed = Some(e.tag());
            }
        }
    }
}

/// Extracted mesh mapped back to the input frame.
fn mesh_in_frame(ex: &ExtractedMesh, frame: &Frame) -> TriMesh {
    TriMesh { vertices: ex.mesh.vertices.iter().map(|&v| frame.inverse(v)).collect(), faces: ex.mesh.faces.clone() }
}

fn frame_for(cfg: &RunConfig, b: &Aabb) -> Frame {
    if cfg.normalize {
        Frame::fit(b, 0.1, 0.9)
    } else {
        Frame::IDENTITY
    }
}

fn convert(cfg: &RunConfig) -> Res<()> {
    let path = need(&cfg.input, "input")?;
    let input = reading(path, read_mesh(path))?;
    if input.faces.is_empty() {
        return Err(Failure::Numerical("input mesh has no faces".into()));
    }
    prepare_output(cfg)?;
    let frame = frame_for(cfg, &input.bbox());
    let gt = TriMesh { vertices: input.vertices.iter().map(|&v| frame.forward(v)).collect(), faces: input.faces.clone() };
    let (state, _) = optimizer::convert(&gt, &cfg.prob, &cfg.opt, cfg.seed, progress(cfg))?;
    let ex = optimizer::extract_mesh(&state, &cfg.prob, cfg.opt.visibility_filter)?;
    let faces = ex.point_faces.iter().filter(|f| f.indices().len() == 3).map(|f| {
        let i = f.indices();
        [i[0], i[1], i[2]]
    });
    let r = recovery(&faces.collect(), &gt.face_set());
    DMeshFile { dim: 3, points: state.points.clone() }.write(&cfg.output.join("dmesh.txt"))?;
    dmesh::io::write_mesh(&cfg.output.join("mesh.obj"), &mesh_in_frame(&ex, &frame))?;
    let report = json!({ "re": r.re, "fp": r.fp, "n_gt": r.n_gt, "n_extracted": r.n_extracted, "steps": state.step, "n_points": state.points.len() });
    write_text(&cfg.output.join("report.json"), &serde_json::to_string_pretty(&report).expect("json"))?;
    let csv = format!("re,fp,n_gt,n_extracted\n{},{},{},{}\n", r.re, r.fp, r.n_gt, r.n_extracted);
    write_text(&cfg.output.join("report.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn reconstruct(cfg: &RunConfig) -> Res<()> {
    let path = need(&cfg.input, "input")?;
    let mut pc = reading(path, read_pointcloud(path))?;
    if pc.points.len() < 4 {
        return Err(Failure::Numerical(format!("{} input points", pc.points.len())));
    }
    let mut loss = cfg.loss;
    if loss.lambda_normal > 0.0 && pc.normals.is_none() {
        log::warn!("point cloud has no normals; lambda_normal set to 0");
        loss.lambda_normal = 0.0;
    }
    let gt = cfg.gt.as_deref().map(|p| reading(p, read_mesh(p))).transpose()?;
    prepare_output(cfg)?;
    let frame = frame_for(cfg, &Aabb::of_points(&pc.points));
    let obs = PointCloud { points: pc.points.iter().map(|&p| frame.forward(p)).collect(), normals: pc.normals.clone() };
    let (state, log) = optimizer::reconstruct(&obs, &loss, &cfg.prob, &cfg.opt, cfg.seed, progress(cfg))?;
    checkpoint(cfg, &state)?;
    let ex = optimizer::extract_mesh(&state, &cfg.prob, cfg.opt.visibility_filter)?;
    let mesh = mesh_in_frame(&ex, &frame);
    dmesh::io::write_mesh(&cfg.output.join("mesh.obj"), &mesh)?;
    DMeshFile { dim: 3, points: state.points.clone() }.write(&cfg.output.join("dmesh.txt"))?;
    let mut trace = String::from("step,loss,recon,weight,real,qual,n_points,n_faces\n");
    for r in &log.steps {
        let _ = writeln!(trace, "{},{:e},{:e},{:e},{:e},{:e},{},{}", r.step, r.loss, r.recon, r.weight, r.real, r.qual, r.n_points, r.n_faces);
    }
    write_text(&cfg.output.join("trace.csv"), &trace)?;
    let opt = EvalOptions { n_samples: cfg.eval_samples, f1_threshold: cfg.f1_threshold, seed: cfg.seed };
    if mesh.faces.is_empty() {
        return Err(Failure::Numerical("extracted mesh is empty".into()));
    }
    let report = match &gt {
        Some(g) => evaluate(&mesh, g, &opt)?,
        None => {
            pc.points.shrink_to_fit();
            evaluate_points(&mesh, &pc.points, pc.normals.as_deref(), &opt)?
        }
    };
    emit_report(cfg, &report)
}

fn emit_report(cfg: &RunConfig, report: &EvalReport) -> Res<()> {
    write_text(&cfg.output.join("eval.json"), &serde_json::to_string_pretty(report).expect("json"))?;
    let csv = format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row());
    write_text(&cfg.output.join("eval.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn load_dmesh(cfg: &RunConfig) -> Res<DMeshFile> {
    let path = need(&cfg.input, "input")?;
    reading(path, DMeshFile::read(path))
}

fn extract(cfg: &RunConfig) -> Res<()> {
    let file = load_dmesh(cfg)?;
    let state = optimizer::init_from_points(file.dim, file.points, cfg.seed);
    let ex = optimizer::extract_mesh(&state, &cfg.prob, cfg.opt.visibility_filter)?;
    std::fs::create_dir_all(&cfg.output)?;
    let mut s = String::new();
    for v in &ex.mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    let local: std::collections::HashMap<u32, usize> = ex.provenance.iter().enumerate().map(|(k, &p)| (p, k + 1)).collect();
    for f in &ex.point_faces {
        let tag = if f.indices().len() == 2 { "l" } else { "f" };
        let ids: Vec<String> = f.indices().iter().map(|i| local[i].to_string()).collect();
        let _ = writeln!(s, "{tag} {}", ids.join(" "));
    }
    write_text(&cfg.output.join("mesh.obj"), &s)?;
    println!("faces,{}", ex.point_faces.len());
    Ok(())
}

fn probe(cfg: &RunConfig) -> Res<()> {
    let file = load_dmesh(cfg)?;
    let k = cfg.face.len();
    if k < 2 || k > file.dim + 1 {
        return Err(Failure::Usage(format!("--face needs 2..={} vertex indices", file.dim + 1)));
    }
    if let Some(&bad) = cfg.face.iter().find(|&&i| i as usize >= file.points.len()) {
        return Err(Failure::Usage(format!("vertex {bad} out of range")));
    }
    let face = Simplex::new(&cfg.face);
    if !face.is_canonical() {
        return Err(Failure::Usage("repeated vertex in --face".into()));
    }
    let pts: Vec<WeightedPoint> = file.points;
    let wdt = build_wdt(&pts, file.dim)?;
    let pd = build_power_diagram(&wdt, &pts, &cfg.prob.clip_box(file.dim))?;
    let e = Evaluator::new(&pts, &wdt, &pd, cfg.prob).evaluate(&face);
    if let Some(err) = &e.error {
        return Err(Failure::Numerical(err.clone()));
    }
    let mut out = format!("face {}\nexists {}\n", face.indices().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "), e.exists);
    for (v, t) in face.indices().iter().zip(&e.tau) {
        let _ = writeln!(out, "tau {v} {t:?}");
    }
    let _ = writeln!(out, "lambda_wdt {:?}\nlambda_real {:?}\nlambda {:?}", e.lambda_wdt, e.lambda_real, e.lambda);
    print!("{out}");
    Ok(())
}

fn bench_oracle(cfg: &RunConfig) -> Res<()> {
    let mut prob = cfg.prob;
    // hull faces have duals far outside the unit box
    prob.clip_margin = prob.clip_margin.max(1e6);
    let opt = BenchOptions { weight_variance: cfg.weight_variance, balanced: cfg.balanced, run_prior: cfg.run_prior, seed: cfg.seed, ..Default::default() };
    let mut out = format!("{}\n", BenchRow::HEADER);
    for &d in &cfg.d {
        if d != 2 && d != 3 {
            return Err(Failure::Usage(format!("dimension {d} is not 2 or 3")));
        }
        let ks: Vec<usize> = if cfg.k.is_empty() { vec![d - 1, d] } else { cfg.k.clone() };
        for &k in &ks {
            if k + 1 < d || k > d {
                return Err(Failure::Usage(format!("k = {k} must be d-1 or d")));
            }
            for &n in &cfg.n {
                for row in bench(d, k, n, &prob, &opt)? {
                    out.push_str(&row.csv());
                    out.push('\n');
                }
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn eval(cfg: &RunConfig) -> Res<()> {
    let path = need(&cfg.input, "input")?;
    let mesh = reading(path, read_mesh(path))?;
    let path = need(&cfg.gt, "gt")?;
    let gt = reading(path, read_mesh(path))?;
    let opt = EvalOptions { n_samples: cfg.eval_samples, f1_threshold: cfg.f1_threshold, seed: cfg.seed };
    let report = evaluate(&mesh, &gt, &opt)?;
    prepare_output(cfg)?;
    emit_report(cfg, &report)
}
