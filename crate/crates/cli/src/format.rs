//! CSV data model: datasets, fitted models, cross-validation reports and
//! plot-ready diagnostics.
//!
//! Datasets are plain CSV with the grid values as column names for the curve
//! block and a final `y` column. Fitted models are a single sectioned file:
//! lines beginning with `#` open a section, each section body is ordinary
//! CSV. All reals are written as shortest round-trip decimals, so
//! write-then-read reproduces every value exactly.
//!
//! Writes go to a temporary file in the destination directory followed by an
//! atomic rename; a failed command never leaves a partial output behind.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use fsir::sir::Dataset;
use fsir::SirFit;

use crate::CliError;

/// Response transform applied at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    None,
    /// `y = log10(u / (1 - u))`, defined for responses in (0, 1).
    Logit10,
}

impl Transform {
    pub fn apply(&self, u: f64, row: usize) -> Result<f64, CliError> {
        match self {
            Transform::None => Ok(u),
            Transform::Logit10 => {
                if u > 0.0 && u < 1.0 {
                    Ok((u / (1.0 - u)).log10())
                } else {
                    Err(CliError::Data(format!(
                        "row {}: response {u} outside (0, 1); logit10 undefined",
                        row + 1
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Logit10 => "logit10",
        }
    }
}

impl FromStr for Transform {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "none" => Ok(Transform::None),
            "logit10" => Ok(Transform::Logit10),
            other => Err(CliError::Usage(format!(
                "unknown transform '{other}' (expected none|logit10)"
            ))),
        }
    }
}

/// Shortest decimal that parses back to exactly the same f64.
pub fn fmt_real(v: f64) -> String {
    format!("{v}")
}

fn parse_real(cell: &str, row: usize, col: usize) -> Result<f64, CliError> {
    cell.trim().parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "row {}, column {}: '{cell}' is not a number",
            row + 1,
            col + 1
        ))
    })
}

/// Write `content` to `path` via a temporary file and atomic rename.
pub fn atomic_write(path: &Path, content: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Data(format!("cannot create temporary file in {dir:?}: {e}")))?;
    std::io::Write::write_all(&mut tmp, content.as_bytes())
        .map_err(|e| CliError::Data(format!("write failed: {e}")))?;
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("cannot write {path:?}: {e}")))?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_line(fields: &[String]) -> String {
    fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",")
}

/// Serialize a dataset: header `t_1,...,t_J,y`, one row per observation.
pub fn dataset_to_csv(d: &Dataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = d
        .grid()
        .iter()
        .map(|g| fmt_real(*g))
        .chain(std::iter::once("y".to_string()))
        .collect();
    let _ = writeln!(out, "{}", header.join(","));
    for i in 0..d.n() {
        let mut row: Vec<String> = (0..d.grid_len()).map(|c| fmt_real(d.x()[(i, c)])).collect();
        row.push(fmt_real(d.y()[i]));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<(), CliError> {
    atomic_write(path, &dataset_to_csv(d))
}

/// Sidecar with the simulated true index values, one column per index.
pub fn write_xi_sidecar(path: &Path, xi: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    let header: Vec<String> = (1..=xi.ncols()).map(|c| format!("xi_{c}")).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for i in 0..xi.nrows() {
        let row: Vec<String> = (0..xi.ncols()).map(|c| fmt_real(xi[(i, c)])).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    atomic_write(path, &out)
}

/// The sidecar path for a dataset path: the extension becomes `xi.csv`.
pub fn sidecar_path(out: &Path) -> std::path::PathBuf {
    out.with_extension("xi.csv")
}

struct RawCsv {
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<RawCsv, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {path:?}: {e}")))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| CliError::Data(format!("row {}: malformed CSV: {e}", i + 1)))?;
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    Ok(RawCsv { rows })
}

fn parse_grid_header(header: &[String]) -> Result<Vec<f64>, CliError> {
    if header.len() < 2 {
        return Err(CliError::Data(
            "header must contain at least one grid column and 'y'".into(),
        ));
    }
    if header.last().map(String::as_str) != Some("y") {
        return Err(CliError::Data(format!(
            "last header column must be 'y', found '{}'",
            header.last().unwrap()
        )));
    }
    let mut grid = Vec::with_capacity(header.len() - 1);
    for (c, cell) in header[..header.len() - 1].iter().enumerate() {
        let v = cell.trim().parse::<f64>().map_err(|_| {
            CliError::Data(format!(
                "header column {}: grid value '{cell}' is not a number",
                c + 1
            ))
        })?;
        grid.push(v);
    }
    for (c, w) in grid.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(CliError::Data(format!(
                "grid column names must be strictly increasing (violated at column {})",
                c + 2
            )));
        }
    }
    Ok(grid)
}

/// Load a dataset, applying the response transform.
pub fn load_dataset(path: &Path, transform: Transform) -> Result<Dataset, CliError> {
    let raw = read_csv(path)?;
    if raw.rows.is_empty() {
        return Err(CliError::Data(format!("{path:?} is empty")));
    }
    let grid = parse_grid_header(&raw.rows[0])?;
    let j = grid.len();
    let n = raw.rows.len() - 1;
    let mut x = DMatrix::zeros(n, j);
    let mut y = Vec::with_capacity(n);
    for (i, row) in raw.rows[1..].iter().enumerate() {
        if row.len() != j + 1 {
            return Err(CliError::Data(format!(
                "row {}: expected {} fields, found {}",
                i + 2,
                j + 1,
                row.len()
            )));
        }
        for c in 0..j {
            x[(i, c)] = parse_real(&row[c], i + 1, c)?;
        }
        let u = parse_real(&row[j], i + 1, j)?;
        y.push(transform.apply(u, i)?);
    }
    Dataset::new(grid, x, y).map_err(CliError::from)
}

/// Curves for prediction: the `y` column may be entirely empty when the
/// truth is unknown.
pub struct PredictionInput {
    pub grid: Vec<f64>,
    pub x: DMatrix<f64>,
    pub y: Option<Vec<f64>>,
}

pub fn load_prediction_input(path: &Path, transform: Transform) -> Result<PredictionInput, CliError> {
    let raw = read_csv(path)?;
    if raw.rows.is_empty() {
        return Err(CliError::Data(format!("{path:?} is empty")));
    }
    let grid = parse_grid_header(&raw.rows[0])?;
    let j = grid.len();
    let n = raw.rows.len() - 1;
    if n == 0 {
        return Err(CliError::Data("no observation rows".into()));
    }
    let mut x = DMatrix::zeros(n, j);
    let mut y = Vec::new();
    let mut empty = 0usize;
    for (i, row) in raw.rows[1..].iter().enumerate() {
        if row.len() != j + 1 {
            return Err(CliError::Data(format!(
                "row {}: expected {} fields, found {}",
                i + 2,
                j + 1,
                row.len()
            )));
        }
        for c in 0..j {
            x[(i, c)] = parse_real(&row[c], i + 1, c)?;
        }
        if row[j].trim().is_empty() {
            empty += 1;
        } else {
            let u = parse_real(&row[j], i + 1, j)?;
            y.push(transform.apply(u, i)?);
        }
    }
    let y = if empty == n {
        None
    } else if empty == 0 {
        Some(y)
    } else {
        return Err(CliError::Data(format!(
            "{empty} of {n} responses are empty; provide all or none"
        )));
    };
    Ok(PredictionInput { grid, x, y })
}

/// Everything a fit file holds; field order matches the on-disk layout so
/// a read-then-write reproduces the file byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct FitFile {
    pub n: usize,
    pub j: usize,
    pub s: usize,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub version: String,
    pub transform: Transform,
    pub sir_eigenvalues: Vec<f64>,
    pub grid: Vec<f64>,
    pub x_mean: Vec<f64>,
    /// `J x p`.
    pub beta: DMatrix<f64>,
    /// `n x p` fitted training indices.
    pub xi: DMatrix<f64>,
    /// Training responses on the transformed scale.
    pub y: Vec<f64>,
    /// `(eigenvalue, cumulative variance explained)` of the sample covariance.
    pub covariance_spectrum: Vec<(f64, f64)>,
    pub residual_trace: Vec<f64>,
    pub eigengap_ratio: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitFile {
    pub fn from_fit(fit: &SirFit, d: &Dataset, seed: u64, transform: Transform) -> FitFile {
        let diag = &fit.diagnostics;
        FitFile {
            n: d.n(),
            j: d.grid_len(),
            s: fit.s,
            k: fit.k,
            p: fit.p,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            transform,
            sir_eigenvalues: fit.sir_eigenvalues.clone(),
            grid: d.grid().to_vec(),
            x_mean: fit.x_mean.clone(),
            beta: fit.beta.clone(),
            xi: fit.xi_hat.clone(),
            y: d.y().to_vec(),
            covariance_spectrum: diag
                .covariance_eigenvalues
                .iter()
                .zip(&diag.variance_explained)
                .map(|(&l, &c)| (l, c))
                .collect(),
            residual_trace: diag.residual_trace_sweep.clone(),
            eigengap_ratio: diag.eigengap_ratio,
            warnings: diag.warnings.iter().map(|w| w.to_string()).collect(),
        }
    }

    /// Rebuild the estimator state needed for prediction.
    pub fn to_sir_fit(&self) -> SirFit {
        SirFit {
            k: self.k,
            s: self.s,
            p: self.p,
            sir_eigenvalues: self.sir_eigenvalues.clone(),
            beta: self.beta.clone(),
            xi_hat: self.xi.clone(),
            x_mean: self.x_mean.clone(),
            diagnostics: Default::default(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#fsir-fit v1");
        let _ = writeln!(out, "#meta");
        let _ = writeln!(out, "key,value");
        for (k, v) in [
            ("n", self.n.to_string()),
            ("j", self.j.to_string()),
            ("s", self.s.to_string()),
            ("k", self.k.to_string()),
            ("p", self.p.to_string()),
            ("seed", self.seed.to_string()),
            ("version", self.version.clone()),
            ("transform", self.transform.name().to_string()),
        ] {
            let _ = writeln!(out, "{}", csv_line(&[k.to_string(), v]));
        }
        let _ = writeln!(out, "#sir_eigenvalues");
        let _ = writeln!(out, "index,value");
        for (i, v) in self.sir_eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, fmt_real(*v));
        }
        let _ = writeln!(out, "#curves");
        let mut header = vec!["t".to_string(), "x_mean".to_string()];
        for c in 1..=self.p {
            header.push(format!("beta_{c}"));
        }
        let _ = writeln!(out, "{}", header.join(","));
        for r in 0..self.j {
            let mut row = vec![fmt_real(self.grid[r]), fmt_real(self.x_mean[r])];
            for c in 0..self.p {
                row.push(fmt_real(self.beta[(r, c)]));
            }
            let _ = writeln!(out, "{}", row.join(","));
        }
        let _ = writeln!(out, "#xi");
        let mut header: Vec<String> = (1..=self.p).map(|c| format!("xi_{c}")).collect();
        header.push("y".to_string());
        let _ = writeln!(out, "{}", header.join(","));
        for r in 0..self.n {
            let mut row: Vec<String> = (0..self.p).map(|c| fmt_real(self.xi[(r, c)])).collect();
            row.push(fmt_real(self.y[r]));
            let _ = writeln!(out, "{}", row.join(","));
        }
        let _ = writeln!(out, "#covariance_spectrum");
        let _ = writeln!(out, "index,eigenvalue,cum_var_explained");
        for (i, (l, c)) in self.covariance_spectrum.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, fmt_real(*l), fmt_real(*c));
        }
        let _ = writeln!(out, "#residual_trace");
        let _ = writeln!(out, "k,value");
        for (i, v) in self.residual_trace.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, fmt_real(*v));
        }
        let _ = writeln!(out, "#diagnostics");
        let _ = writeln!(out, "key,value");
        let _ = writeln!(
            out,
            "eigengap_ratio,{}",
            self.eigengap_ratio.map(fmt_real).unwrap_or_default()
        );
        let _ = writeln!(out, "#warnings");
        let _ = writeln!(out, "message");
        for w in &self.warnings {
            let _ = writeln!(out, "{}", csv_field(w));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        atomic_write(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> Result<FitFile, CliError> {
        let raw = read_csv(path)?;
        let mut sections: Vec<(String, Vec<Vec<String>>)> = Vec::new();
        for row in raw.rows {
            if let Some(name) = row.first().filter(|f| f.starts_with('#')) {
                sections.push((name.clone(), Vec::new()));
            } else if let Some(last) = sections.last_mut() {
                last.1.push(row);
            } else {
                return Err(CliError::Data("fit file must start with '#fsir-fit v1'".into()));
            }
        }
        let find = |name: &str| -> Result<&Vec<Vec<String>>, CliError> {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, rows)| rows)
                .ok_or_else(|| CliError::Data(format!("fit file missing section {name}")))
        };
        if sections.first().map(|(n, _)| n.as_str()) != Some("#fsir-fit v1") {
            return Err(CliError::Data("not a fit file (expected '#fsir-fit v1')".into()));
        }

        let meta = find("#meta")?;
        let get_meta = |key: &str| -> Result<String, CliError> {
            meta.iter()
                .skip(1)
                .find(|r| r.first().map(String::as_str) == Some(key))
                .and_then(|r| r.get(1).cloned())
                .ok_or_else(|| CliError::Data(format!("fit file missing meta key '{key}'")))
        };
        let n: usize = get_meta("n")?.parse().map_err(|_| CliError::Data("bad meta n".into()))?;
        let j: usize = get_meta("j")?.parse().map_err(|_| CliError::Data("bad meta j".into()))?;
        let s: usize = get_meta("s")?.parse().map_err(|_| CliError::Data("bad meta s".into()))?;
        let k: usize = get_meta("k")?.parse().map_err(|_| CliError::Data("bad meta k".into()))?;
        let p: usize = get_meta("p")?.parse().map_err(|_| CliError::Data("bad meta p".into()))?;
        let seed: u64 = get_meta("seed")?
            .parse()
            .map_err(|_| CliError::Data("bad meta seed".into()))?;
        let version = get_meta("version")?;
        let transform: Transform = get_meta("transform")?.parse()?;

        let parse_col = |rows: &Vec<Vec<String>>, col: usize| -> Result<Vec<f64>, CliError> {
            rows.iter()
                .skip(1)
                .enumerate()
                .map(|(i, r)| parse_real(r.get(col).map(String::as_str).unwrap_or(""), i, col))
                .collect()
        };

        let sir_eigenvalues = parse_col(find("#sir_eigenvalues")?, 1)?;

        let curves = find("#curves")?;
        if curves.len() != j + 1 {
            return Err(CliError::Data(format!(
                "#curves has {} rows, expected {}",
                curves.len().saturating_sub(1),
                j
            )));
        }
        let grid = parse_col(curves, 0)?;
        let x_mean = parse_col(curves, 1)?;
        let mut beta = DMatrix::zeros(j, p);
        for c in 0..p {
            let col = parse_col(curves, 2 + c)?;
            for r in 0..j {
                beta[(r, c)] = col[r];
            }
        }

        let xi_rows = find("#xi")?;
        if xi_rows.len() != n + 1 {
            return Err(CliError::Data(format!(
                "#xi has {} rows, expected {}",
                xi_rows.len().saturating_sub(1),
                n
            )));
        }
        let mut xi = DMatrix::zeros(n, p);
        for c in 0..p {
            let col = parse_col(xi_rows, c)?;
            for r in 0..n {
                xi[(r, c)] = col[r];
            }
        }
        let y = parse_col(xi_rows, p)?;

        let spectrum_rows = find("#covariance_spectrum")?;
        let eigs = parse_col(spectrum_rows, 1)?;
        let cums = parse_col(spectrum_rows, 2)?;
        let covariance_spectrum = eigs.into_iter().zip(cums).collect();

        let residual_trace = parse_col(find("#residual_trace")?, 1)?;

        let diag = find("#diagnostics")?;
        let eigengap_ratio = diag
            .iter()
            .skip(1)
            .find(|r| r.first().map(String::as_str) == Some("eigengap_ratio"))
            .and_then(|r| r.get(1))
            .filter(|v| !v.is_empty())
            .map(|v| parse_real(v, 0, 1))
            .transpose()?;

        let warnings = find("#warnings")?
            .iter()
            .skip(1)
            .filter_map(|r| r.first().cloned())
            .collect();

        Ok(FitFile {
            n,
            j,
            s,
            k,
            p,
            seed,
            version,
            transform,
            sir_eigenvalues,
            grid,
            x_mean,
            beta,
            xi,
            y,
            covariance_spectrum,
            residual_trace,
            eigengap_ratio,
            warnings,
        })
    }
}

/// Cross-validation report rows: `k, cv, note, folds_used, folds_skipped`.
pub fn cv_report_to_csv(report: &fsir::CvReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "k,cv,note,folds_used,folds_skipped");
    for e in &report.entries {
        let _ = writeln!(
            out,
            "{}",
            csv_line(&[
                e.k.to_string(),
                e.cv.map(fmt_real).unwrap_or_default(),
                e.note.clone().unwrap_or_default(),
                e.folds_used.to_string(),
                e.folds_skipped.to_string(),
            ])
        );
    }
    out
}

/// Predictions: fitted indices then `y_hat`, one row per input curve.
pub fn predictions_to_csv(xi: &DMatrix<f64>, y_hat: &[f64]) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = (1..=xi.ncols()).map(|c| format!("xi_{c}")).collect();
    header.push("y_hat".to_string());
    let _ = writeln!(out, "{}", header.join(","));
    for r in 0..xi.nrows() {
        let mut row: Vec<String> = (0..xi.ncols()).map(|c| fmt_real(xi[(r, c)])).collect();
        row.push(fmt_real(y_hat[r]));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Plot-ready diagnostic series: `series,x,y` rows.
pub fn series_to_csv(rows: &[(String, f64, f64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "series,x,y");
    for (name, x, y) in rows {
        let _ = writeln!(out, "{}", csv_line(&[name.clone(), fmt_real(*x), fmt_real(*y)]));
    }
    out
}
