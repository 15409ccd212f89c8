//! Portable on-disk formats: JSON headers with CSV payloads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DerivativeMode, ObservationSet, OperatorSeries, TimeGrid};
use crate::error::{Error, Result};
use crate::henn::{MlpParameters, TimeScale};
use crate::pauli::{CMatrix, HermitianOperator, PauliString};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("not a number: `{field}`")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationHeader {
    pub n_states: usize,
    pub n_observables: usize,
    pub n_times: usize,
    pub grid: TimeGrid,
    pub observed: Vec<usize>,
    pub observables: Vec<String>,
    pub noise_sigma: f64,
    pub derivative_mode: DerivativeMode,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub values_csv: String,
    pub derivatives_csv: String,
}

fn write_array3(path: &Path, data: &Array3<f64>, times: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["state".to_string(), "observable".to_string()];
    header.extend(times.iter().map(|t| format!("t={t}")));
    w.write_record(&header)?;
    let (ns, nk, nt) = data.dim();
    for s in 0..ns {
        for k in 0..nk {
            let mut row = vec![s.to_string(), k.to_string()];
            row.extend((0..nt).map(|j| data[[s, k, j]].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array3(path: &Path, shape: (usize, usize, usize)) -> Result<Array3<f64>> {
    let mut out = Array3::zeros(shape);
    let mut rows = 0;
    for record in csv::Reader::from_path(path)?.records() {
        let record = record?;
        let s: usize = parse_f64(&record[0])? as usize;
        let k: usize = parse_f64(&record[1])? as usize;
        if s >= shape.0 || k >= shape.1 || record.len() != shape.2 + 2 {
            return Err(Error::Size(format!("row ({s}, {k}) does not fit {shape:?}")));
        }
        for j in 0..shape.2 {
            out[[s, k, j]] = parse_f64(&record[j + 2])?;
        }
        rows += 1;
    }
    if rows != shape.0 * shape.1 {
        return Err(Error::Size(format!("{rows} rows, {} expected", shape.0 * shape.1)));
    }
    Ok(out)
}

/// Writes `<path>` as the JSON header plus `<stem>_values.csv` and
/// `<stem>_derivatives.csv`, one row per (state, observable).
pub fn write_observations(
    path: &Path,
    obs: &ObservationSet,
    seed: Option<u64>,
    config_hash: Option<&str>,
) -> Result<()> {
    let values = sibling(path, "_values.csv");
    let derivatives = sibling(path, "_derivatives.csv");
    let header = ObservationHeader {
        n_states: obs.n_states(),
        n_observables: obs.n_observables(),
        n_times: obs.n_times(),
        grid: obs.grid,
        observed: obs.observed.clone(),
        observables: obs.observables.iter().map(PauliString::label).collect(),
        noise_sigma: obs.noise_sigma,
        derivative_mode: obs.derivative_mode,
        seed,
        config_hash: config_hash.map(str::to_owned),
        values_csv: file_name(&values),
        derivatives_csv: file_name(&derivatives),
    };
    let times = obs.grid.times();
    write_array3(&values, &obs.values, &times)?;
    write_array3(&derivatives, &obs.derivatives, &times)?;
    write_json(path, &header)
}

fn file_name(path: &Path) -> String {
    path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned()
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    let header: ObservationHeader = read_json(path)?;
    let shape = (header.n_states, header.n_observables, header.n_times);
    let dir = path.parent().unwrap_or(Path::new("."));
    let observables = header
        .observables
        .iter()
        .map(|l| PauliString::from_label(l))
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationSet {
        grid: header.grid,
        observed: header.observed,
        observables,
        values: read_array3(&dir.join(&header.values_csv), shape)?,
        derivatives: read_array3(&dir.join(&header.derivatives_csv), shape)?,
        noise_sigma: header.noise_sigma,
        derivative_mode: header.derivative_mode,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesHeader {
    pub label: String,
    pub grid: TimeGrid,
    pub dim: usize,
    pub config_hash: Option<String>,
    pub matrices_csv: String,
}

/// One CSV row per time: `t`, then the matrix row-major as re/im pairs.
pub fn write_series(path: &Path, series: &OperatorSeries, config_hash: Option<&str>) -> Result<()> {
    let csv_path = sibling(path, "_matrices.csv");
    let dim = series.matrices.first().map_or(0, HermitianOperator::dim);
    let mut w = csv_writer(&csv_path)?;
    let mut header = vec!["t".to_string()];
    for r in 0..dim {
        for c in 0..dim {
            header.push(format!("re_{r}_{c}"));
            header.push(format!("im_{r}_{c}"));
        }
    }
    w.write_record(&header)?;
    for (t, h) in series.times().iter().zip(&series.matrices) {
        let m = h.matrix();
        let mut row = vec![t.to_string()];
        for r in 0..dim {
            for c in 0..dim {
                row.push(m[(r, c)].re.to_string());
                row.push(m[(r, c)].im.to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    write_json(
        path,
        &SeriesHeader {
            label: series.label.clone(),
            grid: series.grid,
            dim,
            config_hash: config_hash.map(str::to_owned),
            matrices_csv: file_name(&csv_path),
        },
    )
}

pub fn read_series(path: &Path) -> Result<OperatorSeries> {
    let header: SeriesHeader = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let dim = header.dim;
    let mut matrices = Vec::new();
    for record in csv::Reader::from_path(dir.join(&header.matrices_csv))?.records() {
        let record = record?;
        if record.len() != 1 + 2 * dim * dim {
            return Err(Error::Size("matrix row has the wrong width".into()));
        }
        let mut m = CMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                let base = 1 + 2 * (r * dim + c);
                m[(r, c)] = Complex64::new(parse_f64(&record[base])?, parse_f64(&record[base + 1])?);
            }
        }
        matrices.push(HermitianOperator::new(m)?);
    }
    if matrices.len() != header.grid.n_samples {
        return Err(Error::Size("series length does not match its grid".into()));
    }
    Ok(OperatorSeries {
        grid: header.grid,
        label: header.label,
        matrices,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpDocument {
    pub n: usize,
    pub layer_sizes: Vec<usize>,
    /// Row-major `(out, in)` weights per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub time_scale: TimeScale,
    pub seed: u64,
    pub config_hash: Option<String>,
}

impl MlpDocument {
    pub fn from_params(p: &MlpParameters, config_hash: Option<&str>) -> Self {
        Self {
            n: p.n,
            layer_sizes: p.layer_sizes.clone(),
            weights: p.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: p.biases.iter().map(|b| b.to_vec()).collect(),
            time_scale: p.time_scale,
            seed: p.seed,
            config_hash: config_hash.map(str::to_owned),
        }
    }

    pub fn into_params(self) -> Result<MlpParameters> {
        let layers = self.layer_sizes.len().saturating_sub(1);
        if layers == 0 || self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Size("layer count mismatch".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, (w, b)) in self.weights.into_iter().zip(self.biases).enumerate() {
            let (rows, cols) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            weights.push(
                Array2::from_shape_vec((rows, cols), w)
                    .map_err(|e| Error::Size(format!("layer {l} weights: {e}")))?,
            );
            if b.len() != rows {
                return Err(Error::Size(format!("layer {l} bias has length {}", b.len())));
            }
            biases.push(Array1::from(b));
        }
        let p = MlpParameters {
            n: self.n,
            layer_sizes: self.layer_sizes,
            weights,
            biases,
            time_scale: self.time_scale,
            seed: self.seed,
        };
        if p.output_len() != 1 << (2 * p.n) {
            return Err(Error::Size("output layer does not match n".into()));
        }
        if !p.is_finite() {
            return Err(Error::Numeric("non-finite parameters".into()));
        }
        Ok(p)
    }
}

pub fn write_params(path: &Path, params: &MlpParameters, config_hash: Option<&str>) -> Result<()> {
    write_json(path, &MlpDocument::from_params(params, config_hash))
}

pub fn read_params(path: &Path) -> Result<MlpParameters> {
    read_json::<MlpDocument>(path)?.into_params()
}

/// Writes `epoch,loss` rows, preceded by a `# config_hash=` comment line when a hash is given.
pub fn write_loss_history(path: &Path, history: &[f64], config_hash: Option<&str>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut file = fs::File::create(path)?;
    if let Some(hash) = config_hash {
        writeln!(file, "# config_hash={hash}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["epoch", "loss"])?;
    for (epoch, loss) in history.iter().enumerate() {
        w.write_record([epoch.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_history(path: &Path) -> Result<Vec<f64>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?
        .records()
        .map(|r| parse_f64(&r?[1]))
        .collect()
}

/// Writes a CSV with the given header and rows.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
