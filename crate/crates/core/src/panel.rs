//! Multivariate panels on the grid `t_j = j/n`, lag differencing and
//! multi-lag stacking.
//!
//! Row `g` (0-based) of a panel holds the observation at time `(g + 1) / n`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub const MIN_ROWS: usize = 20;
pub const MIN_COLUMNS: usize = 2;

/// Observations `Y[g, i]` for time index `g` and series `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesPanel {
    values: Array2<f64>,
    labels: Vec<String>,
}

impl TimeSeriesPanel {
    pub fn new(values: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, p) = values.dim();
        if n < MIN_ROWS {
            return Err(Error::InvalidPanel(format!(
                "need at least {MIN_ROWS} rows, got {n}"
            )));
        }
        if p < MIN_COLUMNS {
            return Err(Error::InvalidPanel(format!(
                "need at least {MIN_COLUMNS} columns, got {p}"
            )));
        }
        if labels.len() != p {
            return Err(Error::InvalidPanel(format!(
                "{} labels for {p} columns",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidPanel(format!("duplicate label {label:?}")));
            }
        }
        if let Some(((g, i), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidPanel(format!(
                "non-finite value {v} at row {}, column {}",
                g + 1,
                i + 1
            )));
        }
        Ok(Self { values, labels })
    }

    /// Panel with default labels `x1..xp`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let labels = default_labels(values.ncols());
        Self::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.column(i)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Time of row `g`.
    pub fn time(&self, g: usize) -> f64 {
        grid_time(g, self.n())
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<String>) {
        (self.values, self.labels)
    }

    /// Writes the panel as CSV with a header row. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(out, "{}", self.labels.join(","))?;
            for row in self.values.rows() {
                let mut first = true;
                for v in row {
                    if !first {
                        out.write_all(b",")?;
                    }
                    first = false;
                    write!(out, "{v:?}")?;
                }
                out.write_all(b"\n")?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}

pub fn grid_time(g: usize, n: usize) -> f64 {
    (g + 1) as f64 / n as f64
}

pub fn default_labels(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

/// Reads a rectangular numeric CSV. Row order is time order.
pub fn load_csv(path: &Path, has_header: bool) -> Result<TimeSeriesPanel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut labels = if has_header {
        Some(
            reader
                .headers()?
                .iter()
                .map(str::to_owned)
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    let mut data = Vec::new();
    let mut width = labels.as_ref().map(Vec::len);
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based file line, counting the header
        let row = k + 1 + usize::from(has_header);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Ragged {
                path: path.to_owned(),
                row,
                found: record.len(),
                expected,
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_owned(),
                row,
                column: c + 1,
                message: format!("cannot parse {cell:?} as a real number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    row,
                    column: c + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }

    let p = width.unwrap_or(0);
    let values = Array2::from_shape_vec((rows, p), data)
        .map_err(|e| Error::InvalidPanel(e.to_string()))?;
    let labels = labels.take().unwrap_or_else(|| default_labels(p));
    TimeSeriesPanel::new(values, labels)
}

/// Lag-`h` differences `y_j = Y_j - Y_{j-h}` of a parent panel.
///
/// Row `r` of `diffs` belongs to grid index `h + r` of the parent.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferencedPanel {
    lag: usize,
    n: usize,
    diffs: Array2<f64>,
}

impl DifferencedPanel {
    pub fn lag(&self) -> usize {
        self.lag
    }

    /// Row count of the parent panel.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.diffs.ncols()
    }

    pub fn diffs(&self) -> ArrayView2<'_, f64> {
        self.diffs.view()
    }

    pub fn len(&self) -> usize {
        self.diffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.nrows() == 0
    }

    /// Parent grid index of differenced row `r`.
    pub fn grid_index(&self, r: usize) -> usize {
        self.lag + r
    }

    /// Product series `y_{., i} y_{., l}` over the differenced rows.
    pub fn products(&self, i: usize, l: usize) -> Vec<f64> {
        self.diffs
            .rows()
            .into_iter()
            .map(|row| row[i] * row[l])
            .collect()
    }
}

pub fn difference(panel: &TimeSeriesPanel, h: usize) -> Result<DifferencedPanel> {
    let n = panel.n();
    // h < n/4
    if h == 0 || 4 * h >= n {
        return Err(Error::OutOfRange(format!(
            "lag h = {h} must satisfy 1 <= h < n/4 with n = {n}"
        )));
    }
    let values = panel.values();
    let diffs = &values.slice(s![h.., ..]) - &values.slice(s![..n - h, ..]);
    Ok(DifferencedPanel { lag: h, n, diffs })
}

/// Concatenates `K + 1` consecutive rows: row `g` of the result is
/// `(Y_g, Y_{g+1}, ..., Y_{g+K})`. Labels get a `@lag` suffix when `K > 0`.
pub fn stack_lags(panel: &TimeSeriesPanel, k: usize) -> Result<TimeSeriesPanel> {
    let n = panel.n();
    // K < n/10
    if 10 * k >= n {
        return Err(Error::OutOfRange(format!(
            "lag count K = {k} must satisfy K < n/10 with n = {n}"
        )));
    }
    if k == 0 {
        return Ok(panel.clone());
    }
    let p = panel.p();
    let rows = n - k;
    let mut values = Array2::zeros((rows, p * (k + 1)));
    for lag in 0..=k {
        values
            .slice_mut(s![.., lag * p..(lag + 1) * p])
            .assign(&panel.values().slice(s![lag..lag + rows, ..]));
    }
    let labels = (0..=k)
        .flat_map(|lag| panel.labels().iter().map(move |l| format!("{l}@{lag}")))
        .collect();
    TimeSeriesPanel::new(values, labels)
}
