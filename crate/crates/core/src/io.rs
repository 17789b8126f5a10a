//! Text formats: angle datasets, mixture model files and density grids.
//!
//! All numbers are written with 17 significant digits and `.` as the decimal
//! separator, so parsing a written file reproduces every value exactly.
//! Files are written to a sibling temporary and renamed into place.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cbmd::CbmdParams;
use crate::circula::{BindingFamily, CirculaParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mixture::{FitMeta, MixtureModel};
use crate::univariate::{MarginalFamily, UnivariateCircular};

pub const MODEL_FORMAT: &str = "circula-model";
pub const MODEL_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

impl AngleUnit {
    pub fn tag(self) -> &'static str {
        match self {
            AngleUnit::Radians => "radians",
            AngleUnit::Degrees => "degrees",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "radians" | "rad" => Some(AngleUnit::Radians),
            "degrees" | "deg" => Some(AngleUnit::Degrees),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadOptions {
    /// Overrides the `#unit=` directive of the file.
    pub unit: Option<AngleUnit>,
    /// Name of the weight column; `weight` is recognized when unset.
    pub weight_column: Option<String>,
}

/// A parsed dataset file with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub data: Dataset,
    pub columns: Vec<String>,
    pub unit: AngleUnit,
}

/// Reads a delimited angle file.
///
/// Lines starting with `#` are comments, except the `#unit=radians` /
/// `#unit=degrees` directive. The first remaining line is a header when any
/// of its fields is not a number. Fields are separated by commas, tabs or
/// runs of spaces.
pub fn load_dataset(path: impl AsRef<Path>, options: &LoadOptions) -> Result<LoadedDataset> {
    parse_dataset(&fs::read_to_string(path)?, options)
}

pub fn parse_dataset(text: &str, options: &LoadOptions) -> Result<LoadedDataset> {
    let mut unit = None;
    let mut header: Option<Vec<String>> = None;
    let mut width = None;
    let mut weight_col = None;
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(u) = rest.trim().strip_prefix("unit=") {
                let parsed = AngleUnit::from_tag(u).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unknown unit `{}`", u.trim()),
                })?;
                unit = Some(parsed);
            }
            continue;
        }
        let fields = split_fields(line);
        if width.is_none() {
            width = Some(fields.len());
            if fields.iter().any(|f| f.parse::<f64>().is_err()) {
                let names: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
                let wanted = options.weight_column.as_deref().unwrap_or("weight");
                weight_col = names.iter().position(|n| n.eq_ignore_ascii_case(wanted));
                if options.weight_column.is_some() && weight_col.is_none() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("no column named `{wanted}`"),
                    });
                }
                header = Some(names);
                continue;
            }
        }
        let expected = width.expect("set above");
        if fields.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("field {} (`{f}`) is not a number", c + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("field {} is not finite", c + 1),
                });
            }
            if Some(c) == weight_col {
                if v < 0.0 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "weights must be non-negative".into(),
                    });
                }
                weights.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let width = width.ok_or_else(|| Error::Parse {
        line: text.lines().count().max(1),
        message: "no data rows".into(),
    })?;
    let dim = width - usize::from(weight_col.is_some());
    if dim == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no angle columns".into(),
        });
    }
    if values.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "no data rows".into(),
        });
    }
    let unit = options.unit.or(unit).unwrap_or_default();
    if unit == AngleUnit::Degrees {
        values.iter_mut().for_each(|v| *v = v.to_radians());
    }
    let mut data = Dataset::from_flat(dim, values)?;
    if weight_col.is_some() {
        data = data.with_weights(weights)?;
    }
    let columns = match header {
        Some(h) => h.into_iter().enumerate().filter(|(i, _)| Some(*i) != weight_col).map(|(_, n)| n).collect(),
        None => (1..=dim).map(|i| format!("theta_{i}")).collect(),
    };
    Ok(LoadedDataset { data, columns, unit })
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Dataset text in radians, with a `weight` column when the data are weighted.
pub fn format_dataset(data: &Dataset) -> String {
    let mut out = String::from("#unit=radians\n");
    let mut names: Vec<String> = (1..=data.dim()).map(|i| format!("theta_{i}")).collect();
    if data.weights().is_some() {
        names.push("weight".into());
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for (i, row) in data.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| num(*v)).collect();
        if data.weights().is_some() {
            fields.push(num(data.weight(i)));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_atomic(path, &format_dataset(data))
}

/// Canonical text of a model file.
///
/// ```text
/// circula-model,1
/// dim,2,components,1
/// weight,marginal_1,mu_1,conc_1,marginal_2,mu_2,conc_2,binding,bconc_1,bconc_2,q_1,q_2
/// 1.0000000000000000e0,vm,...
/// meta,message_length_bits,...
/// ```
pub fn format_model(model: &MixtureModel) -> String {
    let d = model.dim();
    let mut out = format!("{MODEL_FORMAT},{MODEL_VERSION}\ndim,{d},components,{}\n", model.k());
    let mut cols = vec!["weight".to_string()];
    for i in 1..=d {
        cols.extend([format!("marginal_{i}"), format!("mu_{i}"), format!("conc_{i}")]);
    }
    cols.push("binding".into());
    cols.extend((1..=d).map(|i| format!("bconc_{i}")));
    cols.extend((1..=d).map(|i| format!("q_{i}")));
    out.push_str(&cols.join(","));
    out.push('\n');
    for (w, c) in model.weights().iter().zip(model.components()) {
        let mut fields = vec![num(*w)];
        for m in c.marginals() {
            let (mu, conc) = match m {
                UnivariateCircular::Uniform => (0.0, 0.0),
                _ => (m.mu(), m.concentration()),
            };
            fields.extend([m.family().tag().to_string(), num(mu), num(conc)]);
        }
        let circ = c.circula();
        fields.push(circ.family().tag().into());
        for i in 0..d {
            fields.push(num(circ.conc().get(i).copied().unwrap_or(0.0)));
        }
        fields.extend(circ.q().iter().map(|q| q.to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let meta = model.meta();
    let _ = writeln!(out, "meta,message_length_bits,{}", num(meta.message_length_bits));
    let _ = writeln!(out, "meta,model_length_bits,{}", num(meta.model_length_bits));
    let _ = writeln!(out, "meta,data_length_bits,{}", num(meta.data_length_bits));
    let _ = writeln!(out, "meta,k_nz,{}", meta.k_nz);
    let _ = writeln!(out, "meta,converged,{}", meta.converged);
    let seed = meta.seed.map_or("none".to_string(), |s| s.to_string());
    let _ = writeln!(out, "meta,seed,{seed}");
    let _ = writeln!(out, "meta,tool_version,{}", env!("CARGO_PKG_VERSION"));
    out
}

pub fn save_model(path: impl AsRef<Path>, model: &MixtureModel) -> Result<()> {
    write_atomic(path, &format_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MixtureModel> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn parse_model(text: &str) -> Result<MixtureModel> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
        .collect();
    let perr = |line: usize, message: String| Error::Parse { line, message };
    let mut it = lines.iter();

    let (ln, magic) = it.next().ok_or_else(|| perr(1, "empty model file".into()))?;
    if magic.first() != Some(&MODEL_FORMAT) || magic.len() != 2 {
        return Err(perr(*ln, format!("expected `{MODEL_FORMAT},<version>`")));
    }
    if magic[1] != MODEL_VERSION {
        return Err(Error::Version {
            expected: MODEL_VERSION.into(),
            found: magic[1].into(),
        });
    }

    let (ln, shape) = it.next().ok_or_else(|| perr(*ln + 1, "missing shape line".into()))?;
    if shape.len() != 4 || shape[0] != "dim" || shape[2] != "components" {
        return Err(perr(*ln, "expected `dim,<d>,components,<k>`".into()));
    }
    let d: usize = shape[1].parse().map_err(|_| perr(*ln, "dim is not an integer".into()))?;
    let k: usize = shape[3].parse().map_err(|_| perr(*ln, "components is not an integer".into()))?;
    if d == 0 || k == 0 {
        return Err(perr(*ln, "dim and components must be positive".into()));
    }
    let width = 1 + 3 * d + 1 + 2 * d;

    let (ln, header) = it.next().ok_or_else(|| perr(*ln + 1, "missing column header".into()))?;
    if header.len() != width || header[0] != "weight" {
        return Err(perr(*ln, format!("column header must have {width} fields starting with `weight`")));
    }

    let mut weights = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for c in 0..k {
        let (ln, row) = it.next().ok_or_else(|| perr(text.lines().count(), format!("expected {k} component rows")))?;
        let ln = *ln;
        if row.len() != width {
            return Err(perr(ln, format!("expected {width} fields, found {}", row.len())));
        }
        let field = |i: usize| -> Result<f64> {
            let v: f64 = row[i].parse().map_err(|_| perr(ln, format!("`{}` is not a number", header[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(perr(ln, format!("`{}` is not finite", header[i])))
            }
        };
        let located = |e: Error| match e {
            Error::InvalidParameter { name, reason } => perr(ln, format!("component {c}: `{name}` {reason}")),
            other => other,
        };
        weights.push(field(0)?);
        let mut marginals = Vec::with_capacity(d);
        for i in 0..d {
            let base = 1 + 3 * i;
            let fam = MarginalFamily::from_tag(row[base])
                .ok_or_else(|| perr(ln, format!("unknown marginal family `{}`", row[base])))?;
            let (mu, conc) = (field(base + 1)?, field(base + 2)?);
            let m = match fam {
                MarginalFamily::VonMises => UnivariateCircular::von_mises(mu, conc),
                MarginalFamily::WrappedCauchy => UnivariateCircular::wrapped_cauchy(mu, conc),
                MarginalFamily::Uniform => Ok(UnivariateCircular::Uniform),
            }
            .map_err(located)?;
            marginals.push(m);
        }
        let b = 1 + 3 * d;
        let fam = BindingFamily::from_tag(row[b]).ok_or_else(|| perr(ln, format!("unknown binding family `{}`", row[b])))?;
        let conc = (0..d).map(|i| field(b + 1 + i)).collect::<Result<Vec<_>>>()?;
        let q = (0..d)
            .map(|i| match row[b + 1 + d + i] {
                "1" | "+1" => Ok(1i8),
                "-1" => Ok(-1i8),
                other => Err(perr(ln, format!("`{}` must be 1 or -1, got `{other}`", header[b + 1 + d + i]))),
            })
            .collect::<Result<Vec<_>>>()?;
        let circula = match fam {
            BindingFamily::Uniform => CirculaParams::uniform(d),
            _ => CirculaParams::new(fam, conc, q),
        }
        .map_err(located)?;
        components.push(CbmdParams::new(marginals, circula).map_err(located)?);
    }

    let mut meta = FitMeta::default();
    for (ln, row) in it {
        let ln = *ln;
        if row.len() != 3 || row[0] != "meta" {
            return Err(perr(ln, "expected `meta,<key>,<value>`".into()));
        }
        let float = || -> Result<f64> { row[2].parse().map_err(|_| perr(ln, format!("`{}` is not a number", row[1]))) };
        match row[1] {
            "message_length_bits" => meta.message_length_bits = float()?,
            "model_length_bits" => meta.model_length_bits = float()?,
            "data_length_bits" => meta.data_length_bits = float()?,
            "k_nz" => meta.k_nz = row[2].parse().map_err(|_| perr(ln, "`k_nz` is not an integer".into()))?,
            "converged" => meta.converged = row[2].parse().map_err(|_| perr(ln, "`converged` is not a boolean".into()))?,
            "seed" => {
                meta.seed = match row[2] {
                    "none" => None,
                    s => Some(s.parse().map_err(|_| perr(ln, "`seed` is not an integer".into()))?),
                }
            }
            "tool_version" => {}
            other => return Err(perr(ln, format!("unknown metadata key `{other}`"))),
        }
    }
    Ok(MixtureModel::new(weights, components)?.with_meta(meta))
}

/// Density of a mixture on a 2-D coordinate pair, evaluated at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub dims: (usize, usize),
    pub resolution: usize,
    /// Row-major: `values[a * resolution + b]` at `((a + ½)h, (b + ½)h)`.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn cell(&self) -> f64 {
        TAU / self.resolution as f64
    }

    pub fn center(&self, index: usize) -> f64 {
        (index as f64 + 0.5) * self.cell()
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell() * self.cell()
    }

    pub fn to_csv(&self) -> String {
        let (i, j) = self.dims;
        let mut out = format!("theta_{},theta_{},density\n", i + 1, j + 1);
        let m = self.resolution;
        for a in 0..m {
            for b in 0..m {
                let _ = writeln!(out, "{},{},{}", num(self.center(a)), num(self.center(b)), num(self.values[a * m + b]));
            }
        }
        out
    }
}

/// The mixture density of coordinates `dims` (marginalizing the others
/// exactly when `d > 2`) on a `resolution × resolution` grid.
pub fn density_grid(model: &MixtureModel, dims: (usize, usize), resolution: usize) -> Result<DensityGrid> {
    let d = model.dim();
    if d < 2 {
        return Err(Error::param("model", "grid export needs at least two dimensions"));
    }
    for idx in [dims.0, dims.1] {
        if idx >= d {
            return Err(Error::IndexOutOfRange { index: idx, dim: d });
        }
    }
    if dims.0 == dims.1 {
        return Err(Error::param("dims", "the two coordinates must differ"));
    }
    if resolution < 2 {
        return Err(Error::param("resolution", "must be at least 2"));
    }
    let subset = [dims.0, dims.1];
    let parts: Vec<(f64, CbmdParams)> = model
        .weights()
        .iter()
        .zip(model.components())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| Ok((*w, if d == 2 { c.clone() } else { c.marginal(&subset)? })))
        .collect::<Result<_>>()?;
    let h = TAU / resolution as f64;
    let mut values = Vec::with_capacity(resolution * resolution);
    for a in 0..resolution {
        for b in 0..resolution {
            let x = [(a as f64 + 0.5) * h, (b as f64 + 0.5) * h];
            let mut total = 0.0;
            for (w, c) in &parts {
                total += w * c.pdf(&x)?;
            }
            values.push(total);
        }
    }
    Ok(DensityGrid {
        dims,
        resolution,
        values,
    })
}

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| Error::param("path", format!("`{}` has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}
