//! Command-line front end. Every subcommand prints a one-line JSON summary on
//! stdout and logs to stderr. Exit codes: 0 success, 1 the operation itself
//! failed, 2 usage, configuration or I/O problems.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{ConfigError, PipelineConfig};
use crate::field::{
    hierarchical_decode, marching_cubes, spurious_components, watertight_convert, Bvh, ConvertMode, FieldError,
    DEFAULT_TRUNCATION,
};
use crate::filters::{curate_corpus, write_report, CurationReport, FilterError};
use crate::mesh::{
    is_watertight, load_mesh, normalize_to_unit_cube, save_obj, subdivide_smooth, MeshError, TriangleMesh,
};
use crate::raster::{self, RasterError};
use crate::render::{load_view_images, render_canonical_views, save_view_set, RenderError};
use crate::sampling::{build_vae_point_set, sdf_supervision_samples, winding_sign, write_points, SamplingError};
use crate::texbake::{bake_pipeline, export_glb, export_obj, uv_unwrap, BakeView, TexbakeError};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "S13D_THREADS";

#[derive(Debug, Parser)]
#[command(name = "s13d", version, about = "3D asset curation, watertight conversion, sampling and texture baking")]
pub struct Cli {
    /// Pipeline configuration (TOML). Flags override it; it overrides defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration and exit without touching any file.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Print the full default configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a manifest of assets and write a JSONL report.
    Curate(CurateArgs),
    /// Convert a mesh into a watertight one.
    Convert(ConvertArgs),
    /// Sample surface points and, optionally, SDF supervision points.
    Sample(SampleArgs),
    /// Bake views into a UV texture and export GLB plus OBJ/MTL/PNG.
    Bake(BakeArgs),
    /// Render the six canonical views of a mesh.
    Render(RenderArgs),
    /// Summarize a curation report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Grid resolution N.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub wn_threshold: Option<f64>,
    /// Occupancy from visibility alone, without the winding-number test.
    #[arg(long)]
    pub baseline_visibility_only: bool,
    /// Re-extract the surface coarse-to-fine, e.g. `coarse=32`.
    #[arg(long, value_parser = parse_hier)]
    pub hier: Option<usize>,
    /// Subdivide and smooth the result.
    #[arg(long)]
    pub subdivide: bool,
    /// Also write the signed field as a grid file.
    #[arg(long)]
    pub dump_grid: Option<PathBuf>,
}

fn parse_hier(s: &str) -> Result<usize, String> {
    let v = s.strip_prefix("coarse=").unwrap_or(s);
    v.parse().map_err(|_| format!("expected coarse=<N>, got '{s}'"))
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub uniform: Option<usize>,
    #[arg(long)]
    pub salient: Option<usize>,
    #[arg(long)]
    pub sdf: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BakeArgs {
    /// Mesh in the same normalized frame the views were rendered in.
    pub mesh: PathBuf,
    #[arg(long)]
    pub views: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub atlas_res: Option<usize>,
    #[arg(long)]
    pub gutter: Option<usize>,
    #[arg(long)]
    pub upsample_to: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub mesh: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Texture overriding the one the mesh's material names.
    #[arg(long)]
    pub texture: Option<PathBuf>,
    /// File-name prefix; defaults to the mesh file stem.
    #[arg(long)]
    pub asset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub report: PathBuf,
}

/// A failed command: exit code plus message.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
    /// Extra fields for the failure summary.
    details: serde_json::Map<String, Value>,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure { code: 2, message: message.to_string(), details: Default::default() }
    }

    fn domain(message: impl ToString) -> Self {
        Failure { code: 1, message: message.to_string(), details: Default::default() }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e)
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Io { .. } | MeshError::Parse { .. } | MeshError::UnsupportedFormat { .. } => Failure::usage(e),
            _ => Failure::domain(e),
        }
    }
}

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Io { .. } => Failure::usage(e),
            _ => Failure::domain(e),
        }
    }
}

impl From<SamplingError> for Failure {
    fn from(e: SamplingError) -> Self {
        match e {
            SamplingError::Io { .. } => Failure::usage(e),
            _ => Failure::domain(e),
        }
    }
}

impl From<RasterError> for Failure {
    fn from(e: RasterError) -> Self {
        Failure::usage(e)
    }
}

impl From<RenderError> for Failure {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Io { .. } | RenderError::Raster(_) => Failure::usage(e),
            _ => Failure::domain(e),
        }
    }
}

impl From<TexbakeError> for Failure {
    fn from(e: TexbakeError) -> Self {
        match e {
            TexbakeError::Io { .. } | TexbakeError::Raster(_) => Failure::usage(e),
            TexbakeError::Render(r) => r.into(),
            _ => Failure::domain(e),
        }
    }
}

impl From<FilterError> for Failure {
    fn from(e: FilterError) -> Self {
        Failure::usage(e)
    }
}

fn emit(summary: Value) {
    println!("{summary}");
}

fn worker_count(cfg: &PipelineConfig) -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let wanted = if cfg.workers == 0 { cores } else { cfg.workers };
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    cap.map_or(wanted, |c| wanted.min(c)).max(1)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.dump_config {
        print!("{}", PipelineConfig::default().to_toml());
        return 0;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return 2;
    };
    let name = command_name(&command);
    let mut cfg = match cli.config.as_deref().map(PipelineConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => return fail(name, Failure::from(e)),
    };
    apply_overrides(&mut cfg, &command);
    if let Err(e) = cfg.validate() {
        return fail(name, e.into());
    }
    if cli.dry_run {
        print!("{}", cfg.to_toml());
        return 0;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(worker_count(&cfg)).build() {
        Ok(p) => p,
        Err(e) => return fail(name, Failure::usage(e)),
    };
    let result = pool.install(|| match &command {
        Command::Curate(a) => cmd_curate(a, &cfg),
        Command::Convert(a) => cmd_convert(a, &cfg),
        Command::Sample(a) => cmd_sample(a, &cfg),
        Command::Bake(a) => cmd_bake(a, &cfg),
        Command::Render(a) => cmd_render(a, &cfg),
        Command::Report(a) => cmd_report(a),
    });
    match result {
        Ok(summary) => {
            emit(summary);
            0
        }
        Err(f) => fail(name, f),
    }
}

fn fail(command: &str, f: Failure) -> i32 {
    eprintln!("error: {}", f.message);
    let mut summary = serde_json::Map::new();
    summary.insert("command".into(), json!(command));
    summary.insert("ok".into(), json!(false));
    summary.insert("error".into(), json!(f.message));
    summary.extend(f.details);
    emit(Value::Object(summary));
    f.code
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Curate(_) => "curate",
        Command::Convert(_) => "convert",
        Command::Sample(_) => "sample",
        Command::Bake(_) => "bake",
        Command::Render(_) => "render",
        Command::Report(_) => "report",
    }
}

fn apply_overrides(cfg: &mut PipelineConfig, command: &Command) {
    match command {
        Command::Curate(a) => {
            if let Some(w) = a.workers {
                cfg.workers = w;
            }
        }
        Command::Convert(a) => {
            if let Some(n) = a.grid {
                cfg.convert.resolution = n;
            }
            if let Some(t) = a.wn_threshold {
                cfg.convert.wn_threshold = t;
            }
            if a.baseline_visibility_only {
                cfg.convert.mode = ConvertMode::VisibilityOnly;
            }
            if let Some(c) = a.hier {
                cfg.decode.hierarchical_coarse = c;
            }
            if a.subdivide {
                cfg.postprocess.subdivide = true;
            }
        }
        Command::Sample(a) => {
            if let Some(n) = a.uniform {
                cfg.sampling.uniform = n;
            }
            if let Some(n) = a.salient {
                cfg.sampling.salient = n;
            }
            if a.sdf {
                cfg.sampling.sdf = true;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
        }
        Command::Bake(a) => {
            if let Some(r) = a.atlas_res {
                cfg.bake.atlas_resolution = r;
            }
            if let Some(g) = a.gutter {
                cfg.bake.gutter = g;
            }
            if let Some(u) = a.upsample_to {
                cfg.bake.upsample_to = u;
            }
        }
        Command::Render(a) => {
            if let Some(r) = a.resolution {
                cfg.render.resolution = r;
            }
        }
        Command::Report(_) => {}
    }
}

fn create_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn load_normalized(path: &Path) -> Result<TriangleMesh, Failure> {
    let loaded = load_mesh(path)?;
    Ok(normalize_to_unit_cube(&loaded.mesh)?.mesh)
}

fn cmd_curate(a: &CurateArgs, cfg: &PipelineConfig) -> Result<Value, Failure> {
    let start = Instant::now();
    let reports = curate_corpus(&a.manifest, &cfg.filters)?;
    create_parent(&a.out)?;
    write_report(&reports, &a.out)?;
    let kept = reports.iter().filter(|r| r.kept).count();
    let failed = reports.iter().filter(|r| !r.passed_filters()).count();
    Ok(json!({
        "command": "curate",
        "ok": true,
        "assets": reports.len(),
        "kept": kept,
        "failed_filters": failed,
        "report": a.out,
        "seconds": start.elapsed().as_secs_f64(),
    }))
}

fn cmd_convert(a: &ConvertArgs, cfg: &PipelineConfig) -> Result<Value, Failure> {
    let start = Instant::now();
    let input = load_normalized(&a.input)?;
    let outcome = watertight_convert(&input, &cfg.convert).map_err(|e| {
        Failure::from(e).with("watertight", json!(false)).with("seconds", json!(start.elapsed().as_secs_f64()))
    })?;
    let mut mesh = outcome.mesh;
    let mut decode = Value::Null;
    let coarse = cfg.decode.hierarchical_coarse;
    if coarse > 0 {
        // TSDF of the converted surface: sign from the converted field,
        // magnitude from the distance to the extracted mesh.
        let bvh = Bvh::build(&mesh);
        let (field, iso) = (&outcome.field, outcome.stats.iso);
        let eval = |p: crate::geom::Vec3| {
            let d = bvh.distance(&p, DEFAULT_TRUNCATION);
            if field.sample_trilinear(&p) < iso {
                -d
            } else {
                d
            }
        };
        let (grid, stats) = hierarchical_decode(&eval, coarse, cfg.convert.resolution, DEFAULT_TRUNCATION)?;
        mesh = marching_cubes(&grid, 0.0)?;
        decode = json!({ "coarse": coarse, "evaluated_fraction": stats.fraction(), "seconds": stats.seconds });
    }
    if cfg.postprocess.subdivide {
        mesh = subdivide_smooth(&mesh, &cfg.postprocess.remesh)?;
    }
    let report = is_watertight(&mesh);
    let (_, components) = crate::mesh::connected_components(&mesh);
    let spurious = spurious_components(&mesh, &Bvh::build(&input), 2.0 * outcome.field.voxel());
    create_parent(&a.out)?;
    save_obj(&mesh, &a.out, None)?;
    if let Some(g) = &a.dump_grid {
        create_parent(g)?;
        outcome.field.save(g)?;
    }
    let summary = json!({
        "command": "convert",
        "ok": report.watertight,
        "watertight": report.watertight,
        "faces": mesh.faces.len(),
        "components": components,
        "spurious_components": spurious,
        "mode": cfg.convert.mode,
        "resolution": cfg.convert.resolution,
        "iso": outcome.stats.iso,
        "shell_fallback": outcome.stats.shell_fallback,
        "hierarchical": decode,
        "out": a.out,
        "seconds": start.elapsed().as_secs_f64(),
    });
    if report.watertight {
        Ok(summary)
    } else {
        let mut f = Failure::domain(format!("output is not watertight: {report:?}"));
        if let Value::Object(m) = summary {
            f.details = m;
        }
        Err(f)
    }
}

fn cmd_sample(a: &SampleArgs, cfg: &PipelineConfig) -> Result<Value, Failure> {
    let start = Instant::now();
    let mesh = load_normalized(&a.input)?;
    let s = &cfg.sampling;
    let points = build_vae_point_set(&mesh, s.uniform, s.salient, s.dihedral_deg, cfg.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::usage(format!("{}: {e}", a.out.display())))?;
    write_points(&a.out.join("surface_points.bin"), &points.positions, &points.normals, None)?;
    let mut summary = json!({
        "command": "sample",
        "ok": true,
        "seed": cfg.seed,
        "points": points.len(),
        "uniform": points.count(crate::sampling::Provenance::Uniform),
        "salient": points.count(crate::sampling::Provenance::Salient),
        "salient_shortfall": points.salient_shortfall,
        "no_salient_edges": points.no_salient_edges,
    });
    if s.sdf {
        let bvh = Bvh::build(&mesh);
        let inside = winding_sign(&mesh, &bvh, cfg.convert.winding);
        let set = sdf_supervision_samples(&mesh, &bvh, &inside, &s.sdf_params, cfg.seed)?;
        for (name, part) in [("volume", &set.volume), ("near", &set.near_surface), ("surface", &set.surface)] {
            write_points(&a.out.join(format!("sdf_{name}.bin")), &part.points, &part.normals, Some(&part.sdf))?;
        }
        summary["sdf"] = json!({
            "volume": set.volume.len(),
            "near_surface": set.near_surface.len(),
            "surface": set.surface.len(),
            "band": set.band,
        });
    }
    summary["seconds"] = json!(start.elapsed().as_secs_f64());
    Ok(summary)
}

fn cmd_bake(a: &BakeArgs, cfg: &PipelineConfig) -> Result<Value, Failure> {
    let start = Instant::now();
    let mesh = load_mesh(&a.mesh)?.mesh;
    let bounds = mesh.aabb();
    let extent = bounds.min.abs().max().max(bounds.max.abs().max());
    if extent > 1.001 {
        return Err(Failure::domain(format!(
            "mesh reaches {extent:.4}; bake expects the normalized frame the views were rendered in"
        )));
    }
    let views: Vec<BakeView> = load_view_images(&a.views)?.into_iter().map(BakeView::from_image).collect();
    let atlas = uv_unwrap(&mesh, cfg.bake.atlas_resolution, cfg.bake.gutter)?;
    let out = bake_pipeline(&mesh, &atlas, &views, &cfg.bake.params())?;
    create_parent(&a.out)?;
    export_glb(&out.mesh, &out.texture, &a.out)?;
    let obj = a.out.with_extension("obj");
    export_obj(&out.mesh, &out.texture, &obj)?;
    Ok(json!({
        "command": "bake",
        "ok": true,
        "glb": a.out,
        "obj": obj,
        "texture": [out.texture.width(), out.texture.height()],
        "charts": out.stats.charts,
        "views": out.stats.views,
        "view_resolution": out.stats.view_resolution,
        "fused_texels": out.stats.fused_texels,
        "inpainted_texels": out.stats.inpainted_texels,
        "seconds": start.elapsed().as_secs_f64(),
    }))
}

fn cmd_render(a: &RenderArgs, cfg: &PipelineConfig) -> Result<Value, Failure> {
    let start = Instant::now();
    let loaded = load_mesh(&a.mesh)?;
    let mesh = normalize_to_unit_cube(&loaded.mesh)?.mesh;
    let texture = match a.texture.as_ref().or(loaded.texture_path.as_ref()) {
        Some(p) => Some(raster::load_png_rgba(p)?),
        None => None,
    };
    if texture.is_some() && mesh.face_uvs.is_none() {
        log::warn!("{} has no UVs; rendering untextured", a.mesh.display());
    }
    let texture = texture.filter(|_| mesh.face_uvs.is_some());
    let views = render_canonical_views(&mesh, cfg.render.resolution, texture.as_ref())?;
    let asset = a
        .asset
        .clone()
        .unwrap_or_else(|| a.mesh.file_stem().and_then(|s| s.to_str()).unwrap_or("asset").to_string());
    let written = save_view_set(&views, &a.out, &asset)?;
    Ok(json!({
        "command": "render",
        "ok": true,
        "views": views.len(),
        "resolution": cfg.render.resolution,
        "textured": texture.is_some(),
        "files": written.len(),
        "out": a.out,
        "seconds": start.elapsed().as_secs_f64(),
    }))
}

fn cmd_report(a: &ReportArgs) -> Result<Value, Failure> {
    let file = fs::File::open(&a.report).map_err(|e| Failure::usage(format!("{}: {e}", a.report.display())))?;
    let mut reports = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::usage(format!("{}: {e}", a.report.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: CurationReport = serde_json::from_str(&line)
            .map_err(|e| Failure::usage(format!("{}:{}: {e}", a.report.display(), i + 1)))?;
        reports.push(r);
    }
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    for r in &reports {
        for v in r.verdicts.iter().filter(|v| !v.passed) {
            *failures.entry(v.filter.as_str().to_string()).or_default() += 1;
        }
    }
    let kept: Vec<&CurationReport> = reports.iter().filter(|r| r.kept).collect();
    let mean_kept = if kept.is_empty() {
        0.0
    } else {
        kept.iter().map(|r| r.perceptual_score).sum::<f64>() / kept.len() as f64
    };
    Ok(json!({
        "command": "report",
        "ok": true,
        "assets": reports.len(),
        "kept": kept.len(),
        "passed_filters": reports.iter().filter(|r| r.passed_filters()).count(),
        "failures_by_filter": failures,
        "mean_kept_score": mean_kept,
    }))
}
