//! Grid execution: cell expansion, dataset loading, parallel simulation and
//! ordered, resumable CSV output.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Seek, SeekFrom};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use deahes::data::make_synthetic;
use deahes::rng::derive_seed;
use deahes::{Dataset, Mlp, ModelSpec};
use rayon::prelude::*;

use crate::config::{DatasetSection, ExperimentConfig, GridPoint};
use crate::error::{CliError, Result};
use crate::output::{format_float, MetricsRow, HEADER};

/// One simulation: a grid point and a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub point: GridPoint,
    pub seed: u64,
}

/// Cells in output order; seeds vary fastest.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    config
        .grid_points()
        .into_iter()
        .flat_map(|point| (0..config.repeats as u64).map(move |i| (point, config.base_seed + i)))
        .enumerate()
        .map(|(index, (point, seed))| Cell { index, point, seed })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for grid cells; `None` uses every core.
    pub jobs: Option<usize>,
    /// Keep complete cells already present in the output file.
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub cells: usize,
    pub resumed: usize,
    pub rows_written: usize,
}

pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset<f64>, Dataset<f64>)> {
    match &config.dataset {
        DatasetSection::Synthetic(s) => {
            let train = make_synthetic(s.classes, s.train_per_class, s.dim, s.spread, s.seed)?;
            let test = make_synthetic(
                s.classes,
                s.test_per_class,
                s.dim,
                s.spread,
                derive_seed(s.seed, 1, "test-split"),
            )?;
            Ok((train, test))
        }
        DatasetSection::Idx(s) => {
            let load = |images: &Path, labels: &Path| {
                deahes::data::load_idx::<f64>(images, labels).map_err(|e| match e {
                    deahes::Error::Io(source) => CliError::io(images, source),
                    other => other.into(),
                })
            };
            let mut train = load(&s.train_images, &s.train_labels)?;
            let mut test = load(&s.test_images, &s.test_labels)?;
            if let Some(n) = s.train_limit {
                train = train.truncated(n);
            }
            if let Some(n) = s.test_limit {
                test = test.truncated(n);
            }
            Ok((train, test))
        }
    }
}

/// Model for one seed: `[input, hidden.., classes]`.
pub fn model_for(config: &ExperimentConfig, train: &Dataset<f64>, test: &Dataset<f64>, seed: u64) -> Result<Mlp> {
    let mut sizes = vec![train.dim()];
    sizes.extend(&config.model.hidden);
    sizes.push(train.classes().max(test.classes()));
    let spec = ModelSpec::new(sizes, config.activation(), derive_seed(seed, 0, "model"))?;
    Ok(Mlp::new(spec)?.with_hvp_mode(config.hvp_mode()))
}

/// Runs one cell, passing each finished round to `emit`.
pub fn run_cell(
    config: &ExperimentConfig,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    cell: &Cell,
    mut emit: impl FnMut(MetricsRow),
) -> Result<()> {
    if train.dim() != test.dim() {
        return Err(CliError::Core(deahes::Error::Consistency(format!(
            "training features have dimension {}, test features {}",
            train.dim(),
            test.dim()
        ))));
    }
    let mlp = model_for(config, train, test, cell.seed)?;
    let p = cell.point;
    let mut sim = deahes::sim::build(config.sim_config(&p, cell.seed), &mlp, train, test)?;
    let mut row_error = None;
    sim.run_with(|rec| {
        match MetricsRow::from_record(p.method, p.workers, p.tau, p.overlap, cell.seed, rec) {
            Ok(row) => emit(row),
            Err(e) => {
                row_error = Some(e);
                return Err(deahes::Error::Numeric("row conversion failed".into()));
            }
        }
        Ok(())
    })
    .map_err(|e| row_error.take().unwrap_or(CliError::Core(e)))?;
    Ok(())
}

/// Runs every cell and writes the CSV. The output file is opened (and, on
/// resume, checked against the grid) before any simulation starts.
pub fn run_grid(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport> {
    let all = cells(config);
    let (writer, resumed) = open_output(config, &all, options.resume)?;
    let resolved = config.resolved_path();
    std::fs::write(&resolved, config.to_toml()).map_err(|e| CliError::io(&resolved, e))?;

    let (train, test) = load_datasets(config)?;
    let todo = &all[resumed..];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Numeric(format!("cannot start worker threads: {e}")))?;

    let first_failure = AtomicUsize::new(usize::MAX);
    let (tx, rx) = mpsc::channel();
    let mut sink = OrderedSink::new(writer, &config.output, resumed);
    std::thread::scope(|scope| {
        let (train, test, first_failure) = (&train, &test, &first_failure);
        scope.spawn(move || {
            pool.install(|| {
                todo.par_iter().for_each_with(tx, |tx, cell| {
                    if cell.index > first_failure.load(Ordering::SeqCst) {
                        return;
                    }
                    let result = run_cell(config, train, test, cell, |row| {
                        let _ = tx.send(Message::Row(cell.index, row));
                    });
                    let msg = match result {
                        Ok(()) => Message::Done(cell.index),
                        Err(e) => {
                            first_failure.fetch_min(cell.index, Ordering::SeqCst);
                            Message::Failed(cell.index, e)
                        }
                    };
                    let _ = tx.send(msg);
                });
            });
        });
        for msg in rx {
            sink.accept(msg);
        }
    });
    sink.finish()?;
    Ok(RunReport {
        cells: all.len(),
        resumed,
        rows_written: sink.rows_written,
    })
}

enum Message {
    Row(usize, MetricsRow),
    Done(usize),
    Failed(usize, CliError),
}

#[derive(Default)]
struct Pending {
    rows: Vec<MetricsRow>,
    done: bool,
    error: Option<CliError>,
}

/// Writes rows strictly in cell order, buffering cells that finish early,
/// and flushes after every row.
struct OrderedSink<'p> {
    writer: csv::Writer<File>,
    path: &'p Path,
    next: usize,
    pending: BTreeMap<usize, Pending>,
    error: Option<CliError>,
    rows_written: usize,
}

impl<'p> OrderedSink<'p> {
    fn new(writer: csv::Writer<File>, path: &'p Path, next: usize) -> Self {
        Self {
            writer,
            path,
            next,
            pending: BTreeMap::new(),
            error: None,
            rows_written: 0,
        }
    }

    fn accept(&mut self, msg: Message) {
        if self.error.is_some() {
            return;
        }
        match msg {
            Message::Row(i, row) if i == self.next => self.write(&row),
            Message::Row(i, row) => self.pending.entry(i).or_default().rows.push(row),
            Message::Done(i) => self.pending.entry(i).or_default().done = true,
            Message::Failed(i, e) => self.pending.entry(i).or_default().error = Some(e),
        }
        self.drain();
    }

    fn drain(&mut self) {
        while self.error.is_none() {
            let Some(mut entry) = self.pending.remove(&self.next) else {
                return;
            };
            for row in std::mem::take(&mut entry.rows) {
                self.write(&row);
            }
            if let Some(e) = entry.error.take() {
                self.error.get_or_insert(e);
            } else if entry.done {
                self.next += 1;
            } else {
                self.pending.insert(self.next, entry);
                return;
            }
        }
    }

    fn write(&mut self, row: &MetricsRow) {
        let result = self
            .writer
            .write_record(row.to_fields())
            .map_err(csv_to_io)
            .and_then(|_| self.writer.flush());
        match result {
            Ok(()) => self.rows_written += 1,
            Err(e) => self.error = Some(CliError::io(self.path, e)),
        }
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        // A failure can only be left unreported if an earlier cell never
        // finished, which cannot happen; surface it anyway.
        if let Some(e) = self.pending.values_mut().find_map(|p| p.error.take()) {
            return Err(e);
        }
        self.writer.flush().map_err(|e| CliError::io(self.path, e))
    }
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Opens the CSV for writing. Without `resume` the file is truncated and the
/// header written. With `resume`, complete leading cells are kept, any
/// partial cell after them is cut off, and the count of kept cells is
/// returned.
fn open_output(config: &ExperimentConfig, cells: &[Cell], resume: bool) -> Result<(csv::Writer<File>, usize)> {
    let path = &config.output;
    let io = |e| CliError::io(path, e);
    if resume && path.exists() {
        let (keep_bytes, kept) = complete_prefix(config, cells)?;
        let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(io)?;
        file.set_len(keep_bytes).map_err(io)?;
        file.seek(SeekFrom::End(0)).map_err(io)?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if keep_bytes == 0 {
            writer.write_record(HEADER).map_err(|e| io(csv_to_io(e)))?;
            writer.flush().map_err(io)?;
        }
        return Ok((writer, kept));
    }
    let file = File::create(path).map_err(io)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    writer.write_record(HEADER).map_err(|e| io(csv_to_io(e)))?;
    writer.flush().map_err(io)?;
    Ok((writer, 0))
}

/// Byte length of the header plus every complete cell at the start of an
/// existing output file, and the number of those cells.
fn complete_prefix(config: &ExperimentConfig, cells: &[Cell]) -> Result<(u64, usize)> {
    let path = &config.output;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::io(path, csv_to_io(e)))?;
    let mut record = csv::StringRecord::new();
    let read = |reader: &mut csv::Reader<File>, record: &mut csv::StringRecord| {
        reader
            .read_record(record)
            .map_err(|e| CliError::io(path, csv_to_io(e)))
    };
    if !read(&mut reader, &mut record)? {
        return Ok((0, 0));
    }
    if record.iter().ne(HEADER) {
        return Err(CliError::Format {
            path: path.clone(),
            line: 1,
            message: "header does not match the metrics schema".into(),
        });
    }
    let mut keep = reader.position().byte();
    let mut kept = 0;
    let mut round = 0;
    loop {
        let start = reader.position().clone();
        if !read(&mut reader, &mut record)? {
            break;
        }
        let Some(cell) = cells.get(kept) else {
            return Err(mismatch(path, start.line(), "more rows than the grid has cells"));
        };
        let Ok(row) = MetricsRow::from_fields(&record) else {
            // A torn final line from an interrupted write.
            break;
        };
        let p = cell.point;
        let expected = (p.method, p.workers, p.tau, format_float(p.overlap), cell.seed, round + 1);
        let found = (row.method, row.k, row.tau, record[3].to_string(), row.seed, row.round);
        if found != expected {
            return Err(mismatch(path, start.line(), "row does not match the configured grid"));
        }
        round += 1;
        if round == config.rounds {
            round = 0;
            kept += 1;
            keep = reader.position().byte();
        }
    }
    Ok((keep, kept))
}

fn mismatch(path: &Path, line: u64, what: &str) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        line,
        message: format!("{what}; cannot resume (remove the file or run without --resume)"),
    }
}
