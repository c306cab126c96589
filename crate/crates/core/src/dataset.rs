//! Training and evaluation sample sets.
//!
//! Training samples come from circles on the unit square: a signed-distance
//! circle plus a quadratic circle reinitialized to several iteration counts,
//! each harvested at the interface-adjacent nodes and augmented with its
//! negation. Evaluation samples come from flower interfaces with targets from
//! the closest-point oracle.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fields::{eval_circle, flower_closest_point, CircleForm, CircleSpec, FieldError, FlowerSpec};
use crate::grid::{build_uniform, interface_adjacent_nodes, Grid, GridError, NodeId, Point2, SquareDomain};
use crate::numerics::{LevelSetField, NumericsError, ReinitParams, Reinitializer};

/// Smallest supported training resolution.
pub const MIN_RHO: usize = 64;

/// Bound on `|h kappa|` implied by the smallest radius `1.6 h`.
pub const MAX_CIRCLE_HKAPPA: f64 = 1.0 / 1.6;

/// CSV column names, in stencil order (top row first, west to east), then the
/// target. `m`, `0` and `p` denote offsets -1, 0 and +1 in x then y.
pub const CSV_HEADER: [&str; 10] = [
    "phi_mp", "phi_0p", "phi_pp", "phi_m0", "phi_00", "phi_p0", "phi_mm", "phi_0m", "phi_pm", "hkappa",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("radius range [{min}, {max}] is empty")]
    EmptyRadiusRange { min: f64, max: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("input component {0} has zero standard deviation")]
    ZeroStd(usize),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A 3x3 stencil of level-set values and its `h kappa` target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub stencil: [f64; 9],
    pub target: f64,
}

impl Sample {
    pub fn negated(&self) -> Self {
        Self {
            stencil: self.stencil.map(|v| -v),
            target: -self.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// Nodes per unit length; the grid spacing is `1 / (rho - 1)`.
    pub rho: usize,
    /// Strictly increasing reinitialization checkpoints for the quadratic
    /// circles.
    pub reinit_iterations: Vec<u32>,
    pub repeats_per_radius: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(rho: usize, seed: u64) -> Self {
        Self {
            rho,
            reinit_iterations: vec![5, 10, 15, 20],
            repeats_per_radius: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.rho < MIN_RHO {
            return Err(DatasetError::InvalidSpec(format!(
                "rho must be at least {MIN_RHO}, got {}",
                self.rho
            )));
        }
        if self.repeats_per_radius == 0 {
            return Err(DatasetError::InvalidSpec("repeats_per_radius must be at least 1".into()));
        }
        if self.reinit_iterations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::InvalidSpec(format!(
                "reinit_iterations must be strictly increasing, got {:?}",
                self.reinit_iterations
            )));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.rho - 1) as f64
    }

    /// Uniformly spaced radii over `[1.6 h, 1/2 - 2 h]`.
    pub fn radii(&self) -> Result<Vec<f64>, DatasetError> {
        let h = self.h();
        let (min, max) = (1.6 * h, 0.5 - 2.0 * h);
        if min > max {
            return Err(DatasetError::EmptyRadiusRange { min, max });
        }
        let count = circle_count(self.rho);
        if count == 1 {
            return Ok(vec![min]);
        }
        let step = (max - min) / (count - 1) as f64;
        Ok((0..count).map(|k| min + k as f64 * step).collect())
    }
}

/// Number of distinct radii for a resolution: `ceil((rho - 8.2) / 2) + 1`.
pub fn circle_count(rho: usize) -> usize {
    assert!(rho >= 9, "circle_count needs rho >= 9, got {rho}");
    ((rho as f64 - 8.2) / 2.0).ceil() as usize + 1
}

/// Which field a circle sample was harvested from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircleSource {
    SignedDistance,
    Reinitialized(u32),
}

/// Provenance of a generated circle sample, for callers that need more than
/// the stencil and target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSampleInfo {
    pub circle_index: usize,
    pub radius: f64,
    pub center: Point2,
    pub source: CircleSource,
    pub node: NodeId,
    pub negated: bool,
}

/// Generates the circle dataset, handing each sample to `visit` in canonical
/// order: circle, then source field (signed distance first, then increasing
/// iteration count), then node in row-major order, each sample followed by its
/// negation.
pub fn visit_circle_samples<F>(spec: &DatasetSpec, params: &ReinitParams, mut visit: F) -> Result<(), DatasetError>
where
    F: FnMut(&CircleSampleInfo, &Sample),
{
    spec.validate()?;
    let radii = spec.radii()?;
    let h = spec.h();
    let grid = build_uniform(SquareDomain::unit(), spec.rho)?;

    // Centers are drawn up front so that the sequence does not depend on how
    // the circles are processed.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let circles: Vec<(f64, Point2)> = radii
        .iter()
        .flat_map(|&r| std::iter::repeat_n(r, spec.repeats_per_radius))
        .map(|r| {
            let x = 0.5 - 0.5 * h + h * rng.random::<f64>();
            let y = 0.5 - 0.5 * h + h * rng.random::<f64>();
            (r, Point2::new(x, y))
        })
        .collect();

    for (circle_index, &(radius, center)) in circles.iter().enumerate() {
        let target = h / radius;
        let sdf = CircleSpec::new(center, radius, CircleForm::SignedDistance)?;
        let sdf_field = LevelSetField::from_fn(&grid, |p| eval_circle(&sdf, p))?;
        let nodes: Vec<NodeId> = interface_adjacent_nodes(&grid, sdf_field.phi())
            .into_iter()
            .filter(|&n| grid.stencil9(n).is_some())
            .collect();

        let mut emit = |field: &LevelSetField<'_, _>, source: CircleSource| {
            for &node in &nodes {
                let stencil = field.stencil_values(node).expect("node was filtered for a full stencil");
                let sample = Sample { stencil, target };
                let mut info = CircleSampleInfo {
                    circle_index,
                    radius,
                    center,
                    source,
                    node,
                    negated: false,
                };
                visit(&info, &sample);
                info.negated = true;
                visit(&info, &sample.negated());
            }
        };

        emit(&sdf_field, CircleSource::SignedDistance);
        if spec.reinit_iterations.is_empty() {
            continue;
        }
        let quadratic = sdf.with_form(CircleForm::Quadratic);
        let initial = LevelSetField::from_fn(&grid, |p| eval_circle(&quadratic, p))?;
        let mut solver = Reinitializer::new(&initial, params)?;
        for &iterations in &spec.reinit_iterations {
            solver.run(iterations - solver.steps_taken());
            emit(&solver.field(), CircleSource::Reinitialized(iterations));
        }
    }
    Ok(())
}

/// Collects the full circle dataset in canonical order.
pub fn generate_circle_samples(spec: &DatasetSpec, params: &ReinitParams) -> Result<Vec<Sample>, DatasetError> {
    let mut samples = Vec::new();
    visit_circle_samples(spec, params, |_, s| samples.push(*s))?;
    Ok(samples)
}

/// A flower evaluation sample with its node and oracle data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowerSample {
    pub node: NodeId,
    pub sample: Sample,
    /// Polar angle of the closest interface point.
    pub theta_star: f64,
}

/// Nodes that get an evaluation sample: interface-adjacent in the initial
/// field `phi0` and owning a full uniform stencil.
pub fn flower_sample_nodes<G: Grid + ?Sized>(grid: &G, phi0: &[f64]) -> Vec<NodeId> {
    interface_adjacent_nodes(grid, phi0)
        .into_iter()
        .filter(|&n| grid.stencil9(n).is_some())
        .collect()
}

/// Harvests `field` at `nodes`, with targets `h kappa` at each node's closest
/// point on the flower.
pub fn generate_flower_samples<G: Grid>(
    field: &LevelSetField<'_, G>,
    nodes: &[NodeId],
    flower: &FlowerSpec,
) -> Result<Vec<FlowerSample>, DatasetError> {
    let grid = field.grid();
    let h = grid.h();
    nodes
        .iter()
        .map(|&node| {
            let stencil = field.stencil_values(node).ok_or(NumericsError::MissingStencil(node))?;
            let oracle = flower_closest_point(flower, grid.position(node), h)?;
            Ok(FlowerSample {
                node,
                sample: Sample {
                    stencil,
                    target: oracle.hkappa,
                },
                theta_star: oracle.theta_star,
            })
        })
        .collect()
}

/// Per-component z-score statistics of the network inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: [f64; 9],
    pub std: [f64; 9],
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 9],
            std: [1.0; 9],
        }
    }

    pub fn apply(&self, stencil: &[f64; 9]) -> [f64; 9] {
        std::array::from_fn(|k| (stencil[k] - self.mean[k]) / self.std[k])
    }
}

/// Mean and population standard deviation of every input component.
pub fn fit_normalization(samples: &[Sample]) -> Result<Normalization, DatasetError> {
    if samples.len() < 2 {
        return Err(DatasetError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; 9];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(&s.stencil) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 9];
    for s in samples {
        for k in 0..9 {
            let d = s.stencil[k] - mean[k];
            var[k] += d * d;
        }
    }
    let mut std = [0.0; 9];
    for k in 0..9 {
        std[k] = (var[k] / n).sqrt();
        if !(std[k] > 0.0) {
            return Err(DatasetError::ZeroStd(k));
        }
    }
    Ok(Normalization { mean, std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Sizes of the 70/15/15 partition of `n` samples.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (0.70 * n as f64).round() as usize;
    let validation = ((0.15 * n as f64).round() as usize).min(n - train);
    (train, validation, n - train - validation)
}

/// Seeded shuffle followed by a contiguous 70/15/15 cut.
pub fn split(samples: &[Sample], seed: u64) -> Result<SplitSet, DatasetError> {
    if samples.len() < 10 {
        return Err(DatasetError::TooFewSamples {
            needed: 10,
            got: samples.len(),
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    order.shuffle(&mut rng);
    let (n_train, n_val, _) = split_sizes(samples.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    Ok(SplitSet {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// Seeded subsample of at most `count` samples, preserving input order.
pub fn subsample(samples: &[Sample], count: usize, seed: u64) -> Vec<Sample> {
    if count >= samples.len() {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut picked = rand::seq::index::sample(&mut rng, samples.len(), count).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| samples[i]).collect()
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Forwards writes to `inner` while hashing them.
struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Lowercase hex encoding of a digest.
pub fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes samples as CSV with a header line and 17 significant digits per
/// value. Returns the SHA-256 of the bytes written.
pub fn write_samples_csv(path: &Path, samples: &[Sample]) -> Result<String, DatasetError> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = HashingWriter {
        inner: BufWriter::new(file),
        hasher: Sha256::new(),
    };
    write_samples(&mut out, samples).map_err(io_error(path))?;
    out.flush().map_err(io_error(path))?;
    Ok(hex_digest(&out.hasher.finalize()))
}

fn write_samples<W: Write>(out: &mut W, samples: &[Sample]) -> io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for s in samples {
        for v in &s.stencil {
            write!(out, "{v:.16e},")?;
        }
        writeln!(out, "{:.16e}", s.target)?;
    }
    Ok(())
}

/// Reads a CSV written by [`write_samples_csv`].
pub fn read_samples_csv(path: &Path) -> Result<Vec<Sample>, DatasetError> {
    read_samples_csv_with_digest(path).map(|(samples, _)| samples)
}

/// Reads a CSV and checks its SHA-256 against `expected` (lowercase hex).
pub fn read_samples_csv_verified(path: &Path, expected: &str) -> Result<Vec<Sample>, DatasetError> {
    let (samples, digest) = read_samples_csv_with_digest(path)?;
    if digest != expected {
        return Err(DatasetError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("content digest {digest} does not match the manifest ({expected})"),
        });
    }
    Ok(samples)
}

/// Forwards reads from `inner` while hashing them.
struct HashingReader<R: Read> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

fn read_samples_csv_with_digest(path: &Path) -> Result<(Vec<Sample>, String), DatasetError> {
    let file = File::open(path).map_err(io_error(path))?;
    let parse_error = |line: usize, message: String| DatasetError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut reader = BufReader::new(HashingReader {
        inner: file,
        hasher: Sha256::new(),
    });
    let mut line = String::new();
    let mut line_no = 0;
    let mut samples = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io_error(path))? == 0 {
            break;
        }
        line_no += 1;
        let text = line.trim_end_matches(['\n', '\r']);
        if line_no == 1 {
            if text != CSV_HEADER.join(",") {
                return Err(parse_error(1, format!("unexpected header '{text}'")));
            }
            continue;
        }
        if text.is_empty() {
            continue;
        }
        let mut values = [0.0; 10];
        let mut fields = text.split(',');
        for slot in values.iter_mut() {
            let field = fields
                .next()
                .ok_or_else(|| parse_error(line_no, "expected 10 fields".into()))?;
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| parse_error(line_no, format!("bad number '{field}': {e}")))?;
            if !v.is_finite() {
                return Err(parse_error(line_no, format!("non-finite value '{field}'")));
            }
            *slot = v;
        }
        if fields.next().is_some() {
            return Err(parse_error(line_no, "expected 10 fields".into()));
        }
        samples.push(Sample {
            stencil: std::array::from_fn(|i| values[i]),
            target: values[9],
        });
    }
    if line_no == 0 {
        return Err(parse_error(1, "missing header".into()));
    }
    let digest = hex_digest(&reader.into_inner().hasher.finalize());
    Ok((samples, digest))
}
