//! `tautpath`: a file pipeline from terrain to verified shortest path.
//!
//! Exit codes: 0 ok, 2 bad input, 3 infeasible, 4 solver failure,
//! 5 extraction failure, 6 verification failure.

mod error;
mod manifest;
mod plan;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tautpath_core::extract::PathFormat;
use tautpath_core::geom::Vec3;
use tautpath_core::heightfield::{Axis, Extent, TerrainKind, TerrainSpec};
use tautpath_core::mesh::Diagonal;
use tautpath_core::relax::{ElementLaw, Scheme, SolverParams};
use tautpath_core::truss::TrussNetwork;

use error::CliError;
use manifest::{sidecar_path, FileDigest, RunManifest, ARTIFACT};
use plan::{
    read_text, ComparePlan, ConvertPlan, ExtractMode, ExtractPlan, GenmeshPlan, MeshKind,
    OraclePlan, Plan, RenderPlan, SolvePlan, TerrainSource,
};

#[derive(Parser)]
#[command(
    name = "tautpath",
    version,
    about = "Terrain shortest paths from a truss model pulled taut"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a terrain mesh from a spec, a heightfield or inline flags.
    Genmesh(GenmeshArgs),
    /// Convert a mesh into a truss network between two anchors.
    Convert(ConvertArgs),
    /// Pull the anchors apart until the network is taut.
    Solve(SolveArgs),
    /// Read a path or a face region off a solve result.
    Extract(ExtractArgs),
    /// Exact Dijkstra answer on a network.
    Oracle(OracleArgs),
    /// Check an extracted path against an oracle answer.
    Compare(CompareArgs),
    /// Top-down SVG of a mesh with strains, paths and regions.
    Render(RenderArgs),
    /// Re-run a manifest and check that every output is byte-identical.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum KindArg {
    Flat,
    GaussianHill,
    Valley,
    Fbm,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MeshArg {
    Quad,
    Tri,
    Unstructured,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DiagonalArg {
    TowardNe,
    TowardNw,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AxisArg {
    X,
    Y,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum LawArg {
    TensionOnly,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SchemeArg {
    Fire,
    Viscous,
    Kinetic,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModeArg {
    Chain,
    Region,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FormatArg {
    Geojson,
    Csv,
    ObjPolyline,
}

#[derive(Args)]
struct GenmeshArgs {
    /// TerrainSpec JSON document.
    #[arg(long, conflicts_with_all = ["heightfield", "kind"])]
    spec: Option<PathBuf>,
    /// ESRI ASCII grid.
    #[arg(long, conflicts_with = "kind")]
    heightfield: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    ncols: Option<usize>,
    #[arg(long)]
    nrows: Option<usize>,
    #[arg(long)]
    cellsize: Option<f64>,
    /// Hill centre as `x,y`.
    #[arg(long, value_parser = parse_pair)]
    center: Option<[f64; 2]>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    axis: Option<AxisArg>,
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    octaves: Option<u32>,
    #[arg(long)]
    roughness: Option<f64>,
    #[arg(long, value_enum)]
    mesh: MeshArg,
    #[arg(long, value_enum, default_value = "toward_ne")]
    diagonal: DiagonalArg,
    /// Target site spacing of unstructured meshes, in meters.
    #[arg(long)]
    spacing: Option<f64>,
    /// Seed of fbm terrain and unstructured site jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Delete faces with any corner below this elevation.
    #[arg(long)]
    flood_level: Option<f64>,
    /// Where to write the flood mask.
    #[arg(long)]
    mask_out: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    mesh: PathBuf,
    /// Insert a free joint at every edge midpoint (the default).
    #[arg(long, overrides_with = "no_split")]
    split: bool,
    #[arg(long, overrides_with = "split")]
    no_split: bool,
    /// Anchor point `x,y,z`, snapped to the nearest vertex.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    anchor_a: Vec3,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    anchor_b: Vec3,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    network: PathBuf,
    /// SolverParams JSON; individual flags override its fields.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    stiffness: Option<f64>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    pull_increment: Option<f64>,
    #[arg(long)]
    taut_strain: Option<f64>,
    #[arg(long)]
    max_total_stretch: Option<f64>,
    #[arg(long)]
    max_phases: Option<usize>,
    #[arg(long, value_enum)]
    law: Option<LawArg>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    result: PathBuf,
    network: PathBuf,
    mesh: PathBuf,
    #[arg(long, value_enum, default_value = "chain")]
    mode: ModeArg,
    /// Taut set: peak strain at least this fraction of the largest.
    #[arg(long, default_value_t = 0.5)]
    rel_threshold: f64,
    /// Alternatives up to this relative excess length are reported.
    #[arg(long, default_value_t = 0.02)]
    alt_window: f64,
    /// On a disconnected taut set, retry at halved thresholds down to this.
    #[arg(long)]
    lower_to: Option<f64>,
    /// Region mode: faces in the top `1 - quantile` fraction.
    #[arg(long, default_value_t = 0.9)]
    quantile: f64,
    #[arg(long, value_enum, default_value = "geojson")]
    format: FormatArg,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    network: PathBuf,
    /// Relative tolerance for counting shortest paths.
    #[arg(long, default_value_t = 1e-9)]
    count_tolerance: f64,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// GeoJSON path from `extract`.
    path: PathBuf,
    /// JSON from `oracle`.
    oracle: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Optional JSON report.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    mesh: PathBuf,
    /// Network and result together color elements by peak strain.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    result: Option<PathBuf>,
    /// GeoJSON path to overlay; repeatable.
    #[arg(long = "path")]
    paths: Vec<PathBuf>,
    /// Region JSON from `extract --mode region`.
    #[arg(long)]
    region: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Where the replayed outputs go; defaults to `<manifest>.replay/`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; N] = parts
        .try_into()
        .map_err(|_| format!("expected {N} comma-separated numbers, got {s:?}"))?;
    if arr.iter().all(|v| v.is_finite()) {
        Ok(arr)
    } else {
        Err(format!("non-finite value in {s:?}"))
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats::<2>(s)
}

fn parse_point(s: &str) -> Result<Vec3, String> {
    parse_floats::<3>(s)
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::input(path.display(), e))
}

fn required<T>(value: Option<T>, flag: &str, kind: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Input(format!("--{flag} is required for {kind}")))
}

fn genmesh_plan(args: GenmeshArgs) -> Result<Plan, CliError> {
    let terrain = if let Some(path) = &args.spec {
        let path = absolute(path)?;
        let spec: TerrainSpec = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| CliError::input(path.display(), e))?;
        TerrainSource::Synthetic {
            spec,
            spec_file: Some(path),
        }
    } else if let Some(path) = &args.heightfield {
        TerrainSource::Heightfield {
            path: absolute(path)?,
        }
    } else {
        let kind_arg = required(args.kind, "kind", "genmesh without --spec or --heightfield")?;
        let kind = match kind_arg {
            KindArg::Flat => TerrainKind::Flat,
            KindArg::GaussianHill => TerrainKind::GaussianHill {
                center: required(args.center, "center", "gaussian_hill")?,
                amplitude: required(args.amplitude, "amplitude", "gaussian_hill")?,
                sigma: required(args.sigma, "sigma", "gaussian_hill")?,
            },
            KindArg::Valley => TerrainKind::Valley {
                axis: match required(args.axis, "axis", "valley")? {
                    AxisArg::X => Axis::X,
                    AxisArg::Y => Axis::Y,
                },
                depth: required(args.depth, "depth", "valley")?,
                width: required(args.width, "width", "valley")?,
            },
            KindArg::Fbm => TerrainKind::Fbm {
                octaves: required(args.octaves, "octaves", "fbm")?,
                roughness: required(args.roughness, "roughness", "fbm")?,
                amplitude: required(args.amplitude, "amplitude", "fbm")?,
            },
        };
        let spec = TerrainSpec {
            kind,
            extent: Extent {
                ncols: required(args.ncols, "ncols", "inline terrain")?,
                nrows: required(args.nrows, "nrows", "inline terrain")?,
                cellsize: required(args.cellsize, "cellsize", "inline terrain")?,
            },
            seed: args.seed,
        };
        spec.validate()?;
        TerrainSource::Synthetic {
            spec,
            spec_file: None,
        }
    };
    let mesh = match args.mesh {
        MeshArg::Quad => MeshKind::Quad,
        MeshArg::Tri => MeshKind::Tri {
            diagonal: match args.diagonal {
                DiagonalArg::TowardNe => Diagonal::TowardNe,
                DiagonalArg::TowardNw => Diagonal::TowardNw,
            },
        },
        MeshArg::Unstructured => MeshKind::Unstructured {
            spacing: required(args.spacing, "spacing", "unstructured meshes")?,
            seed: args.seed,
        },
    };
    Ok(Plan::Genmesh(GenmeshPlan {
        terrain,
        mesh,
        flood_level: args.flood_level,
        output: absolute(&args.output)?,
        mask_output: args.mask_out.as_deref().map(absolute).transpose()?,
    }))
}

fn solve_plan(args: &SolveArgs) -> Result<Plan, CliError> {
    let network = absolute(&args.network)?;
    let mut params = match &args.params {
        Some(path) => serde_json::from_str::<SolverParams>(&read_text(path)?)
            .map_err(|e| CliError::input(path.display(), e))?,
        None => {
            let net = TrussNetwork::from_json(&read_text(&network)?)
                .map_err(|e| CliError::input(network.display(), e))?;
            SolverParams::for_material(
                &net,
                args.stiffness.unwrap_or(1.0),
                args.mass.unwrap_or(1.0),
            )
        }
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field {
                params.$field = v;
            }
        )*};
    }
    set!(
        stiffness,
        mass,
        damping,
        dt,
        residual_tol,
        max_iters,
        pull_increment,
        taut_strain,
        max_total_stretch,
        max_phases
    );
    if let Some(law) = args.law {
        params.law = match law {
            LawArg::TensionOnly => ElementLaw::TensionOnly,
            LawArg::Linear => ElementLaw::Linear,
        };
    }
    if let Some(scheme) = args.scheme {
        params.scheme = match scheme {
            SchemeArg::Fire => Scheme::Fire,
            SchemeArg::Viscous => Scheme::Viscous,
            SchemeArg::Kinetic => Scheme::Kinetic,
        };
    }
    Ok(Plan::Solve(SolvePlan {
        network,
        params,
        output: absolute(&args.output)?,
    }))
}

/// Builds the plan of a pipeline command and the manifest path override.
fn plan_of(command: Command) -> Result<(Plan, Option<PathBuf>), CliError> {
    Ok(match command {
        Command::Genmesh(a) => {
            let manifest = a.manifest.clone();
            (genmesh_plan(a)?, manifest)
        }
        Command::Convert(a) => (
            Plan::Convert(ConvertPlan {
                mesh: absolute(&a.mesh)?,
                split: !a.no_split,
                anchor_a: a.anchor_a,
                anchor_b: a.anchor_b,
                output: absolute(&a.output)?,
            }),
            a.manifest,
        ),
        Command::Solve(a) => (solve_plan(&a)?, a.manifest),
        Command::Extract(a) => (
            Plan::Extract(ExtractPlan {
                result: absolute(&a.result)?,
                network: absolute(&a.network)?,
                mesh: absolute(&a.mesh)?,
                mode: match a.mode {
                    ModeArg::Chain => ExtractMode::Chain {
                        rel_threshold: a.rel_threshold,
                        alt_window: a.alt_window,
                        lower_to: a.lower_to,
                        format: match a.format {
                            FormatArg::Geojson => PathFormat::Geojson,
                            FormatArg::Csv => PathFormat::Csv,
                            FormatArg::ObjPolyline => PathFormat::ObjPolyline,
                        },
                    },
                    ModeArg::Region => ExtractMode::Region {
                        quantile: a.quantile,
                    },
                },
                output: absolute(&a.output)?,
            }),
            a.manifest,
        ),
        Command::Oracle(a) => (
            Plan::Oracle(OraclePlan {
                network: absolute(&a.network)?,
                count_tolerance: a.count_tolerance,
                output: absolute(&a.output)?,
            }),
            a.manifest,
        ),
        Command::Compare(a) => (
            Plan::Compare(ComparePlan {
                path: absolute(&a.path)?,
                oracle: absolute(&a.oracle)?,
                tolerance: a.tolerance,
                output: a.output.as_deref().map(absolute).transpose()?,
            }),
            a.manifest,
        ),
        Command::Render(a) => (
            Plan::Render(RenderPlan {
                mesh: absolute(&a.mesh)?,
                network: a.network.as_deref().map(absolute).transpose()?,
                result: a.result.as_deref().map(absolute).transpose()?,
                paths: a
                    .paths
                    .iter()
                    .map(|p| absolute(p))
                    .collect::<Result<_, _>>()?,
                region: a.region.as_deref().map(absolute).transpose()?,
                output: absolute(&a.output)?,
            }),
            a.manifest,
        ),
        Command::Replay(_) => unreachable!("replay has no plan of its own"),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::input(path.display(), e))
}

fn default_manifest_path(plan: &Plan) -> PathBuf {
    match (plan.outputs().first(), plan) {
        (Some(out), _) => sidecar_path(out),
        (None, Plan::Compare(c)) => {
            let mut name = c.path.file_name().unwrap_or_default().to_os_string();
            name.push(".compare.manifest.json");
            c.path.with_file_name(name)
        }
        (None, _) => PathBuf::from("tautpath.manifest.json"),
    }
}

fn execute(plan: Plan, manifest_path: Option<PathBuf>) -> Result<(), CliError> {
    let inputs = plan
        .inputs()
        .iter()
        .map(|p| FileDigest::of_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = plan.run()?;
    let mut outputs = Vec::new();
    for (path, bytes) in &outcome.files {
        write_file(path, bytes)?;
        outputs.push(FileDigest::of_bytes(path, bytes));
    }
    let manifest_path = match manifest_path {
        Some(p) => absolute(&p)?,
        None => default_manifest_path(&plan),
    };
    let manifest = RunManifest {
        artifact: ARTIFACT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: plan.seed(),
        plan,
        inputs,
        outputs,
    };
    write_file(&manifest_path, manifest.to_json().as_bytes())?;
    for line in &outcome.summary {
        println!("{line}");
    }
    outcome.failure.map_or(Ok(()), Err)
}

fn replay(args: ReplayArgs) -> Result<(), CliError> {
    let manifest = RunManifest::load(&args.manifest)?;
    if manifest.artifact != ARTIFACT {
        return Err(CliError::Input(format!(
            "not a {ARTIFACT} manifest: {}",
            manifest.artifact
        )));
    }
    for recorded in &manifest.inputs {
        let now = FileDigest::of_file(&recorded.path)?;
        if now.sha256 != recorded.sha256 {
            return Err(CliError::Input(format!(
                "input {} changed since the recorded run",
                recorded.path.display()
            )));
        }
    }
    let out_dir = match args.out_dir {
        Some(d) => d,
        None => {
            let mut name = args.manifest.file_name().unwrap_or_default().to_os_string();
            name.push(".replay");
            args.manifest.with_file_name(name)
        }
    };
    fs::create_dir_all(&out_dir).map_err(|e| CliError::input(out_dir.display(), e))?;
    let mut plan = manifest.plan.clone();
    plan.redirect_outputs(&out_dir);
    let outcome = plan.run()?;
    if outcome.files.len() != manifest.outputs.len() {
        return Err(CliError::Verification(format!(
            "replay produced {} files, the manifest records {}",
            outcome.files.len(),
            manifest.outputs.len()
        )));
    }
    let mut mismatches = 0;
    for ((path, bytes), recorded) in outcome.files.iter().zip(&manifest.outputs) {
        write_file(path, bytes)?;
        let same = FileDigest::of_bytes(path, bytes).sha256 == recorded.sha256;
        if !same {
            mismatches += 1;
        }
        println!(
            "{} {} ({})",
            if same { "MATCH" } else { "DIFF" },
            recorded.path.display(),
            path.display()
        );
    }
    if mismatches > 0 {
        return Err(CliError::Verification(format!(
            "{mismatches} output(s) differ from the manifest"
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Replay(a) => replay(a),
        command => plan_of(command).and_then(|(plan, manifest)| execute(plan, manifest)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
