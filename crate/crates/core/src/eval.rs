//! Error statistics and the flower-interface experiment harness.
//!
//! Each experiment reinitializes a flower level set on a uniform grid or a
//! quadtree, harvests the interface-adjacent stencils, and scores both the
//! compound numerical method and a trained network against the closest-point
//! curvature oracle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{flower_sample_nodes, generate_flower_samples, DatasetError};
use crate::fields::{flower_signed_distance, FieldError, FlowerSpec};
use crate::grid::{build_quadtree, build_uniform, Grid, GridError, SquareDomain};
use crate::nnet::{MlpModel, NnetError};
use crate::numerics::{CurvatureField, LevelSetField, NumericsError, ReinitParams, Reinitializer};

/// Lipschitz constant of the quadtree refinement criterion.
pub const QUADTREE_LIPSCHITZ: f64 = 1.2;

/// Allowed deviation from the expected sample count on quadtrees.
pub const QUADTREE_COUNT_TOLERANCE: usize = 2;

pub const REPORT_COLUMNS: &str = "experiment,method,iterations,n,mae,max_ae,mse,pearson_r";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions ({predictions}) and targets ({targets}) must have the same nonzero length")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("{experiment}: expected {expected} samples, harvested {got}")]
    SampleCount {
        experiment: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] NnetError),
}

/// Accuracy of a set of predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub max_ae: f64,
    /// Pearson correlation between predictions and targets; `None` when
    /// either side has zero variance.
    pub pearson_r: Option<f64>,
}

/// MAE, MSE, maximum absolute error and Pearson correlation.
///
/// The pairs are sorted before any summation so that the result does not
/// depend on the input order.
pub fn error_stats(predictions: &[f64], targets: &[f64]) -> Result<ErrorStats, EvalError> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    let mut pairs: Vec<(f64, f64)> = targets.iter().copied().zip(predictions.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n = pairs.len() as f64;
    let (mut abs_sum, mut sq_sum, mut max_ae) = (0.0, 0.0, 0.0_f64);
    let (mut t_sum, mut p_sum) = (0.0, 0.0);
    for &(t, p) in &pairs {
        let e = (p - t).abs();
        abs_sum += e;
        sq_sum += e * e;
        max_ae = max_ae.max(e);
        t_sum += t;
        p_sum += p;
    }
    let (t_mean, p_mean) = (t_sum / n, p_sum / n);
    let (mut cov, mut t_var, mut p_var) = (0.0, 0.0, 0.0);
    for &(t, p) in &pairs {
        cov += (t - t_mean) * (p - p_mean);
        t_var += (t - t_mean) * (t - t_mean);
        p_var += (p - p_mean) * (p - p_mean);
    }
    // Rounding in the means can leave a tiny variance for constant data, so
    // constancy is tested on the values themselves.
    let constant = |pick: fn(&(f64, f64)) -> f64| pairs.iter().all(|q| pick(q) == pick(&pairs[0]));
    let defined = !constant(|q| q.0) && !constant(|q| q.1);
    let pearson_r = defined.then(|| (cov / (t_var.sqrt() * p_var.sqrt())).clamp(-1.0, 1.0));
    Ok(ErrorStats {
        n: pairs.len(),
        mae: abs_sum / n,
        mse: sq_sum / n,
        max_ae,
        pearson_r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Smooth,
    Acute,
}

impl Shape {
    pub fn flower(self) -> FlowerSpec {
        match self {
            Self::Smooth => FlowerSpec::smooth(),
            Self::Acute => FlowerSpec::acute(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Smooth => "smooth",
            Self::Acute => "acute",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Uniform { nodes_per_side: usize },
    Quadtree { max_level: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub shape: Shape,
    pub grid: GridKind,
    /// The domain is `[-half_width, half_width]^2`.
    pub half_width: f64,
    pub iterations: Vec<u32>,
    /// Training resolution of the model evaluated on this grid.
    pub rho_tag: usize,
    pub expected_samples: usize,
}

impl ExperimentSpec {
    fn new(shape: Shape, grid: GridKind, resolution: &str, half_width: f64, rho_tag: usize, expected: usize) -> Self {
        let grid_label = match grid {
            GridKind::Uniform { .. } => "uniform",
            GridKind::Quadtree { .. } => "quadtree",
        };
        Self {
            name: format!("{}_{grid_label}_{resolution}", shape.label()),
            shape,
            grid,
            half_width,
            iterations: vec![5, 10, 20],
            rho_tag,
            expected_samples: expected,
        }
    }

    pub fn domain(&self) -> Result<SquareDomain, GridError> {
        SquareDomain::centered(self.half_width)
    }
}

/// The eight flower experiments: three uniform resolutions and one quadtree
/// per shape, each matched to the model trained at the same mesh size.
pub fn experiment_catalog() -> Vec<ExperimentSpec> {
    use GridKind::{Quadtree, Uniform};
    use Shape::{Acute, Smooth};
    let uniform = |n| Uniform { nodes_per_side: n };
    let tree = Quadtree { max_level: 7 };
    vec![
        ExperimentSpec::new(Smooth, uniform(107), "low", 0.207843, 256, 528),
        ExperimentSpec::new(Smooth, uniform(111), "medium", 0.207547, 266, 552),
        ExperimentSpec::new(Smooth, uniform(114), "high", 0.207339, 276, 564),
        ExperimentSpec::new(Acute, uniform(120), "low", 0.232826, 256, 624),
        ExperimentSpec::new(Acute, uniform(124), "medium", 0.232563, 266, 648),
        ExperimentSpec::new(Acute, uniform(129), "high", 0.232258, 276, 672),
        ExperimentSpec::new(Smooth, tree, "l7", 0.246154, 266, 536),
        ExperimentSpec::new(Acute, tree, "l7", 0.244068, 266, 644),
    ]
}

/// Looks up catalog entries by name; `all` selects the whole catalog.
pub fn select_experiments(name: &str) -> Result<Vec<ExperimentSpec>, EvalError> {
    let catalog = experiment_catalog();
    if name == "all" {
        return Ok(catalog);
    }
    catalog
        .into_iter()
        .find(|e| e.name == name)
        .map(|e| vec![e])
        .ok_or_else(|| EvalError::UnknownExperiment(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Neural,
    Numerical,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Self::Neural => "neural",
            Self::Numerical => "numerical",
        }
    }
}

/// One harvested node at one iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRecord {
    pub iterations: u32,
    pub node: usize,
    pub theta_star: f64,
    pub target: f64,
    pub numerical: f64,
    pub neural: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub experiment: String,
    pub method: Method,
    pub iterations: u32,
    pub stats: ErrorStats,
    /// `(target, prediction)` per sample, in node order.
    pub scatter: Vec<(f64, f64)>,
}

impl ErrorReport {
    /// File stem of the scatter artifacts.
    pub fn stem(&self) -> String {
        format!("{}_{}_it{}", self.experiment, self.method.label(), self.iterations)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    /// Mesh size (finest cells on quadtrees).
    pub h: f64,
    /// Numerical and (when a model was supplied) neural report per iteration
    /// count.
    pub reports: Vec<ErrorReport>,
    pub records: Vec<NodeRecord>,
    /// No model matched `rho_tag`, so only the numerical method was scored.
    pub neural_missing: bool,
}

/// Trained networks keyed by training resolution.
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    models: BTreeMap<usize, MlpModel>,
}

impl ModelStore {
    pub fn insert(&mut self, rho: usize, model: MlpModel) {
        self.models.insert(rho, model);
    }

    pub fn get(&self, rho: usize) -> Option<&MlpModel> {
        self.models.get(&rho)
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Loads every `*.json` model in `dir` that carries a `rho_tag`.
    pub fn load_dir(dir: &Path) -> Result<Self, EvalError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_error(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut store = Self::default();
        for path in paths {
            let model = MlpModel::load(&path)?;
            if let Some(rho) = model.rho_tag {
                store.insert(rho, model);
            }
        }
        Ok(store)
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Runs one catalog entry. Without a model for `spec.rho_tag` only the
/// numerical method is scored and `neural_missing` is set.
pub fn run_experiment(
    spec: &ExperimentSpec,
    models: &ModelStore,
    reinit: &ReinitParams,
) -> Result<ExperimentResult, EvalError> {
    let flower = spec.shape.flower();
    let domain = spec.domain()?;
    match spec.grid {
        GridKind::Uniform { nodes_per_side } => {
            let grid = build_uniform(domain, nodes_per_side)?;
            let params = ReinitParams {
                band_only: false,
                ..*reinit
            };
            run_on_grid(spec, &grid, &flower, models, &params)
        }
        GridKind::Quadtree { max_level } => {
            // Refinement assumes a 1-Lipschitz field, so the tree is driven by
            // the exact signed distance rather than the flower's level set.
            let mut failure = None;
            let grid = build_quadtree(
                domain,
                max_level,
                |p| match flower_signed_distance(&flower, p) {
                    Ok(d) => d,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                QUADTREE_LIPSCHITZ,
            )?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            let params = ReinitParams {
                band_only: true,
                ..*reinit
            };
            run_on_grid(spec, &grid, &flower, models, &params)
        }
    }
}

fn run_on_grid<G: Grid>(
    spec: &ExperimentSpec,
    grid: &G,
    flower: &FlowerSpec,
    models: &ModelStore,
    params: &ReinitParams,
) -> Result<ExperimentResult, EvalError> {
    let initial = LevelSetField::from_fn(grid, |p| flower.grid_value(p))?;
    let nodes = flower_sample_nodes(grid, initial.phi());
    let count_ok = match spec.grid {
        GridKind::Uniform { .. } => nodes.len() == spec.expected_samples,
        GridKind::Quadtree { .. } => nodes.len().abs_diff(spec.expected_samples) <= QUADTREE_COUNT_TOLERANCE,
    };
    if !count_ok {
        return Err(EvalError::SampleCount {
            experiment: spec.name.clone(),
            expected: spec.expected_samples,
            got: nodes.len(),
        });
    }

    let model = models.get(spec.rho_tag);
    let mut iterations = spec.iterations.clone();
    iterations.sort_unstable();
    iterations.dedup();
    let mut solver = Reinitializer::new(&initial, params)?;
    let mut reports = Vec::new();
    let mut records = Vec::new();
    for &k in &iterations {
        solver.run(k - solver.steps_taken());
        let field = solver.field();
        let samples = generate_flower_samples(&field, &nodes, flower)?;
        let curvature = CurvatureField::new(&field);
        let numerical = samples
            .iter()
            .map(|s| curvature.compound_hkappa(&field, s.node))
            .collect::<Result<Vec<f64>, _>>()?;
        let neural = model.map(|m| m.predict(&samples.iter().map(|s| s.sample.stencil).collect::<Vec<_>>()));
        let targets: Vec<f64> = samples.iter().map(|s| s.sample.target).collect();

        let mut report = |method, predictions: &[f64]| -> Result<(), EvalError> {
            reports.push(ErrorReport {
                experiment: spec.name.clone(),
                method,
                iterations: k,
                stats: error_stats(predictions, &targets)?,
                scatter: targets.iter().copied().zip(predictions.iter().copied()).collect(),
            });
            Ok(())
        };
        if let Some(neural) = &neural {
            report(Method::Neural, neural)?;
        }
        report(Method::Numerical, &numerical)?;

        records.extend(samples.iter().enumerate().map(|(i, s)| NodeRecord {
            iterations: k,
            node: s.node,
            theta_star: s.theta_star,
            target: s.sample.target,
            numerical: numerical[i],
            neural: neural.as_ref().map(|n| n[i]),
        }));
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        h: grid.h(),
        reports,
        records,
        neural_missing: model.is_none(),
    })
}

/// Runs experiments on up to `jobs` threads; results keep the input order.
pub fn run_experiments(
    specs: &[ExperimentSpec],
    models: &ModelStore,
    reinit: &ReinitParams,
    jobs: usize,
) -> Vec<Result<ExperimentResult, EvalError>> {
    let jobs = jobs.clamp(1, specs.len().max(1));
    if jobs == 1 {
        return specs.iter().map(|s| run_experiment(s, models, reinit)).collect();
    }
    let mut results: Vec<Option<Result<ExperimentResult, EvalError>>> = specs.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|worker| {
                scope.spawn(move || {
                    (worker..specs.len())
                        .step_by(jobs)
                        .map(|i| (i, run_experiment(&specs[i], models, reinit)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for (i, result) in handle.join().expect("experiment worker panicked") {
                results[i] = Some(result);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every experiment ran")).collect()
}

fn format_float(v: f64) -> String {
    format!("{v:.9e}")
}

/// Table rows, one per report, preceded by the header.
pub fn report_table(reports: &[ErrorReport]) -> String {
    let mut out = format!("{REPORT_COLUMNS}\n");
    for r in reports {
        let s = &r.stats;
        let pearson = s.pearson_r.map_or_else(|| "NaN".to_string(), format_float);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.experiment,
            r.method.label(),
            r.iterations,
            s.n,
            format_float(s.mae),
            format_float(s.max_ae),
            format_float(s.mse),
            pearson
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn scatter_csv(report: &ErrorReport) -> String {
    let mut out = String::from("target,prediction\n");
    for &(t, p) in &report.scatter {
        writeln!(out, "{},{}", format_float(t), format_float(p)).expect("writing to a String cannot fail");
    }
    out
}

/// Scatter plot of prediction against target with the identity line.
pub fn scatter_svg(report: &ErrorReport) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 40.0;
    let (lo, hi) = report
        .scatter
        .iter()
        .flat_map(|&(t, p)| [t, p])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (-1.0, 1.0) };
    let span = SIZE - 2.0 * MARGIN;
    let x = |v: f64| MARGIN + (v - lo) / (hi - lo) * span;
    let y = |v: f64| SIZE - MARGIN - (v - lo) / (hi - lo) * span;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    );
    let title = match report.stats.pearson_r {
        Some(r) => format!("{} (r = {r:.6})", report.stem()),
        None => report.stem(),
    };
    let _ = writeln!(svg, "<rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>");
    let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"24\" font-size=\"12\">{title}</text>");
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4\"/>",
        x(lo),
        y(lo),
        x(hi),
        y(hi)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">target hκ [{lo:.3e}, {hi:.3e}]</text>",
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{} estimate</text>",
        SIZE / 2.0,
        SIZE / 2.0,
        report.method.label()
    );
    for &(t, p) in &report.scatter {
        let _ = writeln!(svg, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"steelblue\"/>", x(t), y(p));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `report.csv` plus a scatter CSV and SVG per report into `dir`.
/// Returns the paths written.
pub fn emit_report(reports: &[ErrorReport], dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();
    let mut write = |name: String, contents: String| -> Result<(), EvalError> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(io_error(&path))?;
        written.push(path);
        Ok(())
    };
    write("report.csv".into(), report_table(reports))?;
    for r in reports {
        write(format!("{}.csv", r.stem()), scatter_csv(r))?;
        write(format!("{}.svg", r.stem()), scatter_svg(r))?;
    }
    Ok(written)
}

/// Orders reports by experiment catalog position, method, then iterations.
pub fn sort_reports(reports: &mut [ErrorReport]) {
    let position: BTreeMap<String, usize> = experiment_catalog()
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e.name, i))
        .collect();
    let key = |r: &ErrorReport| position.get(&r.experiment).copied().unwrap_or(usize::MAX);
    reports.sort_by(|a, b| {
        key(a)
            .cmp(&key(b))
            .then_with(|| a.experiment.cmp(&b.experiment))
            .then(a.method.cmp(&b.method))
            .then(a.iterations.cmp(&b.iterations))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions() {
        let t = [0.1, -0.2, 0.3, 0.05];
        let s = error_stats(&t, &t).unwrap();
        assert_eq!((s.mae, s.mse, s.max_ae), (0.0, 0.0, 0.0));
        assert!((s.pearson_r.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_shift() {
        let t = [0.0, 1.0, 2.0, -3.0];
        let p: Vec<f64> = t.iter().map(|v| v + 0.5).collect();
        let s = error_stats(&p, &t).unwrap();
        assert_eq!((s.mae, s.mse, s.max_ae), (0.5, 0.25, 0.5));
    }

    #[test]
    fn constant_targets_leave_correlation_undefined() {
        let s = error_stats(&[0.1, 0.2, 0.3], &[0.2; 3]).unwrap();
        assert!(s.pearson_r.is_none());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(error_stats(&[1.0], &[1.0, 2.0]).is_err());
        assert!(error_stats(&[], &[]).is_err());
    }

    #[test]
    fn stats_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pairs: Vec<(f64, f64)> = (0..1000).map(|_| (rng.random::<f64>(), rng.random::<f64>() * 1e-3)).collect();
        let unzip = |pairs: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { pairs.iter().copied().unzip() };
        let (t, p) = unzip(&pairs);
        let reference = error_stats(&p, &t).unwrap();
        for _ in 0..5 {
            pairs.shuffle(&mut rng);
            let (t, p) = unzip(&pairs);
            assert_eq!(error_stats(&p, &t).unwrap(), reference);
        }
    }

    #[test]
    fn catalog_matches_the_published_setups() {
        let catalog = experiment_catalog();
        assert_eq!(catalog.len(), 8);
        let names: Vec<&str> = catalog.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "smooth_uniform_low",
                "smooth_uniform_medium",
                "smooth_uniform_high",
                "acute_uniform_low",
                "acute_uniform_medium",
                "acute_uniform_high",
                "smooth_quadtree_l7",
                "acute_quadtree_l7",
            ]
        );
        let h = |e: &ExperimentSpec| match e.grid {
            GridKind::Uniform { nodes_per_side } => 2.0 * e.half_width / (nodes_per_side - 1) as f64,
            GridKind::Quadtree { max_level } => 2.0 * e.half_width / 2f64.powi(max_level as i32),
        };
        assert!((h(&catalog[5]) - 3.629032e-3).abs() < 1e-9);
        assert!((h(&catalog[7]) - 3.813559e-3).abs() < 1e-8);
        assert_eq!((catalog[1].grid, catalog[1].rho_tag), (GridKind::Uniform { nodes_per_side: 111 }, 266));
        assert!(select_experiments("smooth_uniform_low").unwrap().len() == 1);
        assert_eq!(select_experiments("all").unwrap().len(), 8);
        assert!(matches!(select_experiments("nope"), Err(EvalError::UnknownExperiment(_))));
    }

    #[test]
    fn numerical_only_run_flags_the_missing_model() {
        let spec = &select_experiments("smooth_uniform_low").unwrap()[0];
        let result = run_experiment(spec, &ModelStore::default(), &ReinitParams::default()).unwrap();
        assert!(result.neural_missing);
        assert_eq!(result.reports.len(), 3);
        assert!(result.reports.iter().all(|r| r.method == Method::Numerical && r.stats.n == 528));
        assert_eq!(result.records.len(), 3 * 528);
    }

    #[test]
    fn sample_count_mismatch_fails_loudly() {
        let mut spec = select_experiments("smooth_uniform_low").unwrap().remove(0);
        spec.expected_samples = 527;
        spec.iterations = vec![5];
        let err = run_experiment(&spec, &ModelStore::default(), &ReinitParams::default()).unwrap_err();
        assert!(matches!(err, EvalError::SampleCount { got: 528, .. }));
    }

    fn report(experiment: &str, method: Method, iterations: u32) -> ErrorReport {
        let scatter = vec![(0.1, 0.11), (0.2, 0.19), (-0.1, -0.12)];
        let (t, p): (Vec<f64>, Vec<f64>) = scatter.iter().copied().unzip();
        ErrorReport {
            experiment: experiment.into(),
            method,
            iterations,
            stats: error_stats(&p, &t).unwrap(),
            scatter,
        }
    }

    #[test]
    fn empty_report_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let written = emit_report(&[], dir.path()).unwrap();
        assert_eq!(written.len(), 1);
        assert_eq!(fs::read_to_string(&written[0]).unwrap(), format!("{REPORT_COLUMNS}\n"));
    }

    #[test]
    fn one_report_writes_table_and_scatter() {
        let dir = tempfile::tempdir().unwrap();
        let r = report("smooth_uniform_low", Method::Numerical, 5);
        let written = emit_report(std::slice::from_ref(&r), dir.path()).unwrap();
        let csvs: Vec<_> = written.iter().filter(|p| p.extension().unwrap() == "csv").collect();
        assert_eq!(csvs.len(), 2);
        assert!(dir.path().join("smooth_uniform_low_numerical_it5.csv").exists());
        assert!(dir.path().join("smooth_uniform_low_numerical_it5.svg").exists());
        let table = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(table.lines().count(), 2);
        assert!(table.lines().nth(1).unwrap().starts_with("smooth_uniform_low,numerical,5,3,"));
    }

    #[test]
    fn reports_sort_by_catalog_order() {
        let mut reports = vec![
            report("acute_quadtree_l7", Method::Numerical, 5),
            report("smooth_uniform_low", Method::Numerical, 10),
            report("smooth_uniform_low", Method::Neural, 20),
            report("smooth_uniform_low", Method::Numerical, 5),
        ];
        sort_reports(&mut reports);
        let keys: Vec<(String, Method, u32)> = reports.iter().map(|r| (r.experiment.clone(), r.method, r.iterations)).collect();
        assert_eq!(
            keys,
            vec![
                ("smooth_uniform_low".into(), Method::Neural, 20),
                ("smooth_uniform_low".into(), Method::Numerical, 5),
                ("smooth_uniform_low".into(), Method::Numerical, 10),
                ("acute_quadtree_l7".into(), Method::Numerical, 5),
            ]
        );
    }
}
