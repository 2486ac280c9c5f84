//! Repeated runs of one algorithm, emitting per-batch metric rows and a
//! checkpoint summary.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{GroundTruth, PrecisionTracker};
use super::synthetic::Dataset;
use super::HarnessError;
use crate::bandit::{
    BatchReport, Mode, ModeTransition, Observer, QueryParams, QueryState, StopCondition,
};
use crate::baselines::{run_baseline, BaselineKind};
use crate::index::{build_index, Index};
use crate::plugin::ScorerPlugin;

/// CSV header of metric files.
pub const CSV_HEADER: &str = "run_id,t,elapsed_seconds,stk,precision_at_k,mode,overhead_seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// The histogram bandit with every feature on.
    Ours,
    OursNoFallback,
    OursNoRebinning,
    OursNoSubtraction,
    Baseline(BaselineKind),
}

impl Algorithm {
    pub const OURS_VARIANTS: [Algorithm; 4] = [
        Algorithm::Ours,
        Algorithm::OursNoFallback,
        Algorithm::OursNoRebinning,
        Algorithm::OursNoSubtraction,
    ];

    pub fn all() -> Vec<Algorithm> {
        Self::OURS_VARIANTS
            .into_iter()
            .chain(BaselineKind::ALL.into_iter().map(Algorithm::Baseline))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ours => "OURS",
            Algorithm::OursNoFallback => "OURS_NO_FALLBACK",
            Algorithm::OursNoRebinning => "OURS_NO_REBINNING",
            Algorithm::OursNoSubtraction => "OURS_NO_SUBTRACTION",
            Algorithm::Baseline(b) => b.name(),
        }
    }

    /// Query parameters with this variant's switches applied.
    pub fn configure(self, params: &QueryParams) -> QueryParams {
        let mut p = params.clone();
        match self {
            Algorithm::OursNoFallback => p.fallback = false,
            Algorithm::OursNoRebinning => p.rebinning = false,
            Algorithm::OursNoSubtraction => p.subtraction = false,
            Algorithm::Ours | Algorithm::Baseline(_) => {}
        }
        p
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Algorithm::all()
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::all().into_iter().map(Algorithm::name).collect();
                format!(
                    "unknown algorithm {s}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// `seed` is the base seed; run `r` uses `seed + r`.
    pub params: QueryParams,
    pub repetitions: usize,
    pub max_iterations: Option<usize>,
    pub max_seconds: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, params: QueryParams, repetitions: usize) -> Self {
        ExperimentConfig {
            algorithm,
            params,
            repetitions,
            max_iterations: None,
            max_seconds: None,
        }
    }

    pub fn stop(&self) -> StopCondition {
        StopCondition {
            max_iterations: self.max_iterations,
            max_seconds: self.max_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: usize,
    pub t: usize,
    pub elapsed_seconds: f64,
    pub stk: f64,
    pub precision_at_k: f64,
    pub mode: Mode,
    pub overhead_seconds: f64,
}

/// An index ready for querying, with the time it took to build, if built here.
#[derive(Debug, Clone)]
pub struct PreparedIndex {
    pub index: Index,
    pub build_seconds: Option<f64>,
}

impl PreparedIndex {
    pub fn prebuilt(index: Index) -> Self {
        PreparedIndex {
            index,
            build_seconds: None,
        }
    }

    /// k-means plus average-linkage tree over the dataset's vectors.
    pub fn build(
        dataset: &Dataset,
        leaf_count: usize,
        subsample: Option<usize>,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let started = Instant::now();
        let index = build_index(&dataset.points(), leaf_count, subsample, seed)?;
        Ok(PreparedIndex {
            index,
            build_seconds: Some(started.elapsed().as_secs_f64()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub t: usize,
    /// Runs contributing to this checkpoint.
    pub runs: usize,
    pub stk_mean: f64,
    pub stk_std: f64,
    pub precision_mean: f64,
    pub precision_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: usize,
    pub seed: u64,
    pub final_t: usize,
    pub final_stk: f64,
    pub final_precision: f64,
    pub elapsed_seconds: f64,
    pub overhead_seconds: f64,
    pub exploration_rounds: usize,
    pub transitions: Vec<ModeTransition>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub algorithm: Algorithm,
    pub n: usize,
    pub k: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub optimal_stk: f64,
    pub index_build_seconds: Option<f64>,
    pub checkpoints: Vec<CheckpointStats>,
    pub runs: Vec<RunOutcome>,
}

impl ExperimentSummary {
    pub fn checkpoint(&self, t: usize) -> Option<&CheckpointStats> {
        self.checkpoints.iter().find(|c| c.t == t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Every 1% of `n`, plus `k`, `2k` and `5k` when they fit.
pub fn checkpoint_grid(n: usize, k: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=100).map(|i| (i * n).div_ceil(100)).collect();
    grid.extend([k, 2 * k, 5 * k].into_iter().filter(|&t| t <= n));
    grid.retain(|&t| t > 0);
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct RunRecorder<'a, 's> {
    run_id: usize,
    grid: &'a [usize],
    next: usize,
    values: Vec<Option<(f64, f64)>>,
    last: (f64, f64),
    precision: PrecisionTracker<'a>,
    sink: &'s mut dyn FnMut(&MetricRow) -> Result<(), HarnessError>,
    error: Option<HarnessError>,
    transitions: Vec<ModeTransition>,
}

impl RunRecorder<'_, '_> {
    fn fill_until(&mut self, t: usize, value: (f64, f64), inclusive: bool) {
        while self.next < self.grid.len()
            && (self.grid[self.next] < t || (inclusive && self.grid[self.next] == t))
        {
            self.values[self.next] = Some(value);
            self.next += 1;
        }
    }
}

impl Observer for RunRecorder<'_, '_> {
    fn on_batch(&mut self, report: &BatchReport<'_>) {
        self.precision.update(report.records);
        let current = (report.stk, self.precision.value());
        let last = self.last;
        self.fill_until(report.t, last, false);
        self.fill_until(report.t, current, true);
        self.last = current;
        if self.error.is_some() {
            return;
        }
        let row = MetricRow {
            run_id: self.run_id,
            t: report.t,
            elapsed_seconds: report.elapsed_seconds,
            stk: report.stk,
            precision_at_k: current.1,
            mode: report.mode,
            overhead_seconds: report.overhead_seconds,
        };
        if let Err(e) = (self.sink)(&row) {
            self.error = Some(e);
        }
    }

    fn on_transition(&mut self, transition: &ModeTransition) {
        self.transitions.push(transition.clone());
    }
}

/// Runs `config.repetitions` queries, passing each metric row to `sink`.
///
/// The plugin is shared by all runs, so an external scorer process is
/// started once per experiment.
pub fn run_experiment<P: ScorerPlugin + ?Sized>(
    config: &ExperimentConfig,
    index: &PreparedIndex,
    truth: &GroundTruth,
    plugin: &mut P,
    sink: &mut dyn FnMut(&MetricRow) -> Result<(), HarnessError>,
) -> Result<ExperimentSummary, HarnessError> {
    if config.repetitions == 0 {
        return Err(HarnessError::Config(
            "repetitions must be at least 1".into(),
        ));
    }
    if truth.k != config.params.k {
        return Err(HarnessError::Config(format!(
            "ground truth is for k={}, query asks for k={}",
            truth.k, config.params.k
        )));
    }
    let n = index.index.dataset_size;
    let grid = checkpoint_grid(n, config.params.k);
    let stop = config.stop();
    let mut per_run: Vec<Vec<Option<(f64, f64)>>> = Vec::new();
    let mut runs = Vec::new();
    for run_id in 0..config.repetitions {
        let seed = config.params.seed.wrapping_add(run_id as u64);
        let params = QueryParams {
            seed,
            ..config.algorithm.configure(&config.params)
        };
        let mut recorder = RunRecorder {
            run_id,
            grid: &grid,
            next: 0,
            values: vec![None; grid.len()],
            last: (0.0, 0.0),
            precision: PrecisionTracker::new(&truth.top, config.params.k),
            sink: &mut *sink,
            error: None,
            transitions: Vec::new(),
        };
        let summary = match config.algorithm {
            Algorithm::Baseline(kind) => run_baseline(
                kind,
                &index.index,
                params,
                plugin,
                Some(&truth.table),
                &stop,
                &mut recorder,
            )?,
            _ => QueryState::new(&index.index, params)?.run(plugin, &stop, &mut recorder)?,
        };
        if let Some(e) = recorder.error.take() {
            return Err(e);
        }
        let complete =
            summary.t == n || config.algorithm == Algorithm::Baseline(BaselineKind::SortedScan);
        if complete {
            let last = recorder.last;
            recorder.fill_until(usize::MAX, last, true);
        }
        runs.push(RunOutcome {
            run_id,
            seed,
            final_t: summary.t,
            final_stk: summary.solution.stk(),
            final_precision: truth.precision(&summary.solution),
            elapsed_seconds: summary.elapsed_seconds,
            overhead_seconds: summary.overhead_seconds,
            exploration_rounds: summary.exploration_rounds,
            transitions: summary.transitions,
            complete,
        });
        per_run.push(recorder.values);
    }
    let checkpoints = grid
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| {
            let vals: Vec<(f64, f64)> = per_run.iter().filter_map(|v| v[i]).collect();
            if vals.is_empty() {
                return None;
            }
            let (stk_mean, stk_std) = mean_std(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
            let (precision_mean, precision_std) =
                mean_std(&vals.iter().map(|v| v.1).collect::<Vec<_>>());
            Some(CheckpointStats {
                t,
                runs: vals.len(),
                stk_mean,
                stk_std,
                precision_mean,
                precision_std,
            })
        })
        .collect();
    Ok(ExperimentSummary {
        algorithm: config.algorithm,
        n,
        k: config.params.k,
        repetitions: config.repetitions,
        base_seed: config.params.seed,
        optimal_stk: truth.optimal_stk,
        index_build_seconds: index.build_seconds,
        checkpoints,
        runs,
    })
}

/// Metric rows as CSV with the standard header.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl CsvSink<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Ok(CsvSink::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W) -> Self {
        CsvSink {
            writer: csv::Writer::from_writer(inner),
        }
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<(), HarnessError> {
        self.writer.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, HarnessError> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| HarnessError::Io(e.into_error()))
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[MetricRow]) -> Result<W, HarnessError> {
    let mut sink = CsvSink::new(out);
    for r in rows {
        sink.write(r)?;
    }
    sink.finish()
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<MetricRow>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(HarnessError::Dataset(format!(
            "unexpected CSV header {}",
            header.join(",")
        )));
    }
    Ok(reader
        .deserialize()
        .collect::<Result<Vec<MetricRow>, _>>()?)
}
