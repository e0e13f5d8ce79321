use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use silpose::experiment::{add_boundary_noise, median, noise_level, Bench};
use silpose::geometry2d::{polygon_area, Alpha};
use silpose::io::{load_bundle, load_mesh, load_silhouette, save_bundle, save_silhouette, write_ablation_csv, write_report, AblationRow};
use silpose::metrics::{pose_error, PoseError};
use silpose::projection::{sample_mesh, silhouette_of, CameraIntrinsics, PointCloud, ProjectionMode, TriangleMesh};
use silpose::refine::{refine_pose, RefineParams, Refinement};
use silpose::rotations::{RigidTransform, Rotation};
use silpose::search::{estimate_pose, SearchParams, SearchResult};
use silpose::signatures::{precompute_fields, DiscGrid, SignatureField};
use silpose::{shapes, Error};

use crate::args::*;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    Other(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Other(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Ground-truth sidecar written next to a rendered silhouette.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pose: RigidTransform,
    pub euler_xyz_deg: [f64; 3],
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    /// Final pose: the refined one when refinement ran.
    pose: RigidTransform,
    search: SearchResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    refinement: Option<Refinement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<PoseError>,
}

pub fn run(cli: Cli) -> Outcome<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Other(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx { seed: cli.seed, verbose: cli.verbose };
    match cli.command {
        Command::Precompute(a) => ctx.precompute(a),
        Command::Render(a) => ctx.render(a),
        Command::Estimate(a) => ctx.estimate(a),
        Command::Benchmark(a) => ctx.benchmark(a),
        Command::Ablate(a) => ctx.ablate(a),
    }
}

struct Ctx {
    seed: u64,
    verbose: bool,
}

fn mesh(spec: &str) -> Outcome<TriangleMesh> {
    match spec.strip_prefix("builtin:") {
        Some(name) => shapes::by_name(name).ok_or_else(|| usage(format!("unknown builtin shape {name:?}"))),
        None => Ok(load_mesh(spec)?),
    }
}

fn camera(c: &CameraArgs) -> Outcome<ProjectionMode> {
    match c.mode {
        Mode::Ortho => Ok(ProjectionMode::Orthographic),
        Mode::Persp => {
            let depth = c.depth.ok_or_else(|| usage("--depth is required with --mode persp"))?;
            let k = CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy).map_err(|e| usage(e.to_string()))?;
            ProjectionMode::perspective(depth, k).map_err(|e| usage(e.to_string()))
        }
    }
}

fn check_points(points: usize) -> Outcome<()> {
    if points < 3 {
        return Err(usage(format!("--points must be at least 3, got {points}")));
    }
    Ok(())
}

fn disc_grid(n: usize) -> Outcome<DiscGrid> {
    DiscGrid::new(n).map_err(|e| usage(e.to_string()))
}

/// Parses `rx,ry,rz,tx,ty,tz` (degrees, then translation).
pub fn parse_pose(text: &str) -> Outcome<(RigidTransform, [f64; 3])> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| usage(format!("--pose {text:?}: {e}")))?;
    if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
        return Err(usage(format!("--pose needs six finite numbers rx,ry,rz,tx,ty,tz, got {text:?}")));
    }
    let r = Rotation::from_euler_xyz(v[0].to_radians(), v[1].to_radians(), v[2].to_radians());
    Ok((RigidTransform::new(r, Vector3::new(v[3], v[4], v[5])), [v[0], v[1], v[2]]))
}

fn search_params(a: &SearchArgs, seed: u64, alpha: Alpha) -> Outcome<SearchParams> {
    let mut p = SearchParams { seed, alpha, ..SearchParams::default() };
    if let Some(v) = a.eps_xy {
        p.eps_xy = v;
    }
    if let Some(v) = a.eps_z {
        p.eps_z = v;
    }
    if let Some(v) = a.eps_e {
        p.eps_e = v;
    }
    if let Some(v) = a.eps_cap {
        p.eps_cap = v;
    }
    if let Some(v) = a.eps_h {
        p.eps_h = v;
    }
    if let Some(v) = a.n_z {
        p.n_z = v;
    }
    if let Some(v) = a.lambda_c {
        p.lambda_c = v;
    }
    if let Some(v) = a.levels {
        p.pyramid.levels = v;
    }
    if let Some(v) = a.depth_tolerance {
        p.depth_tolerance = v;
    }
    p.noise_compensation = !a.no_noise_compensation;
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn write_json(value: &impl Serialize, path: &Path) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.to_string()))?;
    fs::write(path, text).map_err(|e| Failure::Core(e.into()))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".gt.json");
    PathBuf::from(s)
}

/// Template and fields for a trial run: loaded bundles fix the sample count and
/// seed, otherwise both fields are computed here.
struct Setup {
    q: PointCloud,
    pal: SignatureField,
    pearl: SignatureField,
    mode: ProjectionMode,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn fields(&self, q: &PointCloud, grid: DiscGrid, mode: &ProjectionMode) -> Outcome<(SignatureField, SignatureField)> {
        self.log(format!("precomputing {} nodes from {} points", grid.masked_count(), q.len()));
        Ok(precompute_fields(q, &grid, mode, Alpha::default(), self.seed)?)
    }

    fn precompute(&self, a: PrecomputeArgs) -> Outcome<()> {
        let mode = camera(&a.camera)?;
        check_points(a.template.points)?;
        let grid = disc_grid(a.grid)?;
        let m = mesh(&a.template.mesh)?;
        let start = Instant::now();
        let q = sample_mesh(&m, a.template.points, self.seed)?;
        let (pal, pearl) = self.fields(&q, grid, &mode)?;
        save_bundle(&pal, &a.out_pal)?;
        save_bundle(&pearl, &a.out_pearl)?;
        println!("precomputed {} nodes in {:.2} s", pal.grid.masked_count(), start.elapsed().as_secs_f64());
        println!("pal min {:.6} max {:.6}", pal.min(), pal.max());
        println!("pearl min {:.6} max {:.6}", pearl.min(), pearl.max());
        Ok(())
    }

    fn render(&self, a: RenderArgs) -> Outcome<()> {
        let mode = camera(&a.camera)?;
        check_points(a.template.points)?;
        let (pose, euler) = parse_pose(&a.pose)?;
        if !(a.noise_sigma >= 0.0 && a.noise_sigma.is_finite()) {
            return Err(usage(format!("--noise-sigma must be non-negative, got {}", a.noise_sigma)));
        }
        let q = sample_mesh(&mesh(&a.template.mesh)?, a.template.points, self.seed)?;
        let clean = silhouette_of(&q, &pose, &mode, Alpha::default())?;
        let sigma = a.noise_sigma * q.largest_dimension() * mode.image_scale();
        let sil = add_boundary_noise(&clean, sigma, self.seed)?;
        save_silhouette(&sil, &a.out)?;
        let gt = GroundTruth { pose, euler_xyz_deg: euler, noise_sigma: a.noise_sigma, seed: self.seed };
        write_json(&gt, &sidecar_path(&a.out))?;
        println!("{} vertices, area {:.6}", sil.len(), polygon_area(&sil));
        Ok(())
    }

    fn estimate(&self, a: EstimateArgs) -> Outcome<()> {
        let pal = load_bundle(&a.pal)?;
        let pearl = a.pearl.as_ref().map(load_bundle).transpose()?;
        let params = search_params(&a.search, self.seed, pal.meta.alpha)?;
        let gt: Option<GroundTruth> = match &a.gt {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(Error::from)?;
                Some(serde_json::from_str(&text).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?)
            }
            None => None,
        };
        let q = sample_mesh(&mesh(&a.mesh)?, pal.meta.point_count, pal.meta.seed)?;
        let g = load_silhouette(&a.silhouette)?;
        let mode = pal.meta.mode;
        let search = estimate_pose(&q, &pal, pearl.as_ref(), &g, &params, &mode)?;
        self.log(format!(
            "{} candidates, level {}, score {:.6}",
            search.candidates.len(),
            search.pyramid_level_used,
            search.best.score
        ));
        let refinement = if a.refine {
            let p = RefineParams { alpha: pal.meta.alpha, ..RefineParams::default() };
            Some(refine_pose(&q, &g, &search.best.pose(), &p, &mode)?)
        } else {
            None
        };
        let pose = refinement.map_or_else(|| search.best.pose(), |r| r.pose);
        let error = match &gt {
            Some(t) => Some(pose_error(&q, &t.pose, &pose, q.largest_dimension())?),
            None => None,
        };
        if let Some(e) = &error {
            println!("OE {:.4} deg, TE {:.4} %, RMSE {:.4} %", e.oe, e.te_pct, e.rmse_pct);
        }
        write_json(&EstimateOutput { pose, search, refinement, error }, &a.out)
    }

    fn setup(&self, t: &TrialArgs, points: usize) -> Outcome<Setup> {
        if let (Some(pal), Some(pearl)) = (&t.pal, &t.pearl) {
            let pal = load_bundle(pal)?;
            let pearl = load_bundle(pearl)?;
            let q = sample_mesh(&mesh(&t.template.mesh)?, pal.meta.point_count, pal.meta.seed)?;
            let mode = pal.meta.mode;
            return Ok(Setup { q, pal, pearl, mode });
        }
        let mode = camera(&t.camera)?;
        check_points(points)?;
        let grid = disc_grid(t.grid)?;
        let q = sample_mesh(&mesh(&t.template.mesh)?, points, self.seed)?;
        let (pal, pearl) = self.fields(&q, grid, &mode)?;
        Ok(Setup { q, pal, pearl, mode })
    }

    fn bench<'a>(&self, s: &'a Setup, t: &TrialArgs, search: SearchParams, top_k: Option<usize>) -> Outcome<Bench<'a>> {
        if !(t.depth_scale > 0.0 && t.depth_scale.is_finite()) {
            return Err(usage(format!("--depth-scale must be positive, got {}", t.depth_scale)));
        }
        if top_k == Some(0) {
            return Err(usage("--top-k must be at least 1"));
        }
        Ok(Bench {
            q: &s.q,
            pal: &s.pal,
            pearl: Some(&s.pearl),
            mode: s.mode,
            search,
            refine: (!t.no_refine).then(|| RefineParams { alpha: s.pal.meta.alpha, ..RefineParams::default() }),
            noise: noise_level(t.noise.name()).unwrap_or(0.0),
            depth_scale: t.depth_scale,
            top_k,
            symmetry: Vec::new(),
            seed: self.seed,
        })
    }

    fn benchmark(&self, a: BenchmarkArgs) -> Outcome<()> {
        let t = &a.trial;
        let params = search_params(&t.search, self.seed, Alpha::default())?;
        let s = self.setup(t, t.template.points)?;
        let bench = self.bench(&s, t, SearchParams { alpha: s.pal.meta.alpha, ..params }, a.top_k)?;
        let label = format!("{} noise={} trials={}", t.template.mesh, t.noise.name(), t.trials);
        let report = bench.run(&label, t.trials)?;
        write_report(&report, &a.out)?;
        match &report.summary {
            Some(sum) => {
                println!(
                    "OE mean {:.3} sd {:.3} max {:.3} deg; TE mean {:.3} %; RMSE mean {:.3} %",
                    sum.oe.mean, sum.oe.sd, sum.oe.max, sum.te_pct.mean, sum.rmse_pct.mean
                );
                println!("success rate {:.3}", sum.success_rate);
                if let Some(k) = sum.top_k_success_rate {
                    println!("top-{} success rate {:.3}", a.top_k.unwrap_or(1), k);
                }
            }
            None => println!("no trials"),
        }
        Ok(())
    }

    fn ablate(&self, a: AblateArgs) -> Outcome<()> {
        let t = &a.trial;
        if a.param == AblateParam::Points && t.pal.is_some() {
            return Err(usage("a points sweep recomputes the fields; drop --pal/--pearl"));
        }
        if t.trials == 0 {
            return Err(usage("--trials must be at least 1"));
        }
        let base = search_params(&t.search, self.seed, Alpha::default())?;
        let name = match a.param {
            AblateParam::EpsZ => "eps_z",
            AblateParam::EpsCap => "eps_cap",
            AblateParam::Points => "points",
        };
        let mut shared = None;
        let mut rows = Vec::with_capacity(a.values.len());
        for &v in &a.values {
            let mut params = base;
            match a.param {
                AblateParam::EpsZ => params.eps_z = v,
                AblateParam::EpsCap => params.eps_cap = v,
                AblateParam::Points => {
                    if !(v >= 3.0 && v.fract() == 0.0) {
                        return Err(usage(format!("point counts must be whole numbers >= 3, got {v}")));
                    }
                }
            }
            params.validate().map_err(|e| usage(e.to_string()))?;
            let owned;
            let s = if a.param == AblateParam::Points {
                owned = self.setup(t, v as usize)?;
                &owned
            } else {
                if shared.is_none() {
                    shared = Some(self.setup(t, t.template.points)?);
                }
                shared.as_ref().unwrap()
            };
            let bench = self.bench(s, t, SearchParams { alpha: s.pal.meta.alpha, ..params }, None)?;
            let start = Instant::now();
            let outcomes = (0..t.trials).map(|i| bench.trial(i)).collect::<silpose::Result<Vec<_>>>()?;
            let runtime_s = start.elapsed().as_secs_f64() / t.trials as f64;
            let rmse: Vec<f64> = outcomes.iter().map(|o| o.record.error.rmse_pct).collect();
            let oe: Vec<f64> = outcomes.iter().map(|o| o.record.error.oe).collect();
            let row = AblationRow {
                value: v,
                median_rmse_pct: median(&rmse),
                mean_rmse_pct: rmse.iter().sum::<f64>() / rmse.len() as f64,
                median_oe: median(&oe),
                runtime_s,
            };
            self.log(format!("{name} = {v}: median RMSE {:.4} %", row.median_rmse_pct));
            rows.push(row);
        }
        write_ablation_csv(name, &rows, &a.out)?;
        println!("{} rows written to {}", rows.len(), a.out.display());
        Ok(())
    }
}
