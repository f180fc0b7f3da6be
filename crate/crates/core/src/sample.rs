//! Seeded synthetic samples and their CSV representation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins::{MarginRef, MarginRegistry, MarginSpec};
use crate::model::{DependenceModel, ModelRegistry, ModelSpec};
use crate::rng::{derive_stream, StreamRng};

/// Everything needed to regenerate a sample bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub model: ModelSpec,
    pub n: usize,
    pub d: usize,
    /// One margin per coordinate, or a single margin applied to all of them.
    #[serde(default)]
    pub margins: Vec<MarginSpec>,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(model: ModelSpec, n: usize, d: usize, seed: u64) -> Self {
        GeneratorSpec {
            model,
            n,
            d,
            margins: Vec::new(),
            seed,
        }
    }

    pub fn with_margins(mut self, margins: Vec<MarginSpec>) -> Self {
        self.margins = margins;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("sample size n must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::config("dimension d must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Generated(GeneratorSpec),
    File(PathBuf),
    Derived(String),
}

/// An `n x d` matrix of finite observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    n: usize,
    d: usize,
    values: Vec<f64>,
    pub provenance: Provenance,
}

impl Sample {
    pub fn from_rows(rows: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::data(format!(
                    "row {} has {} fields, expected {d}",
                    i + 1,
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), d, values, provenance)
    }

    pub fn from_flat(n: usize, d: usize, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::data("a sample needs at least one row and one column"));
        }
        if values.len() != n * d {
            return Err(Error::data(format!(
                "{} values cannot form a {n} x {d} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        Ok(Sample {
            n,
            d,
            values,
            provenance,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draws `n` rows of the model on the copula scale, then pushes each column
/// through its margin.
pub fn draw(model: &dyn DependenceModel, margins: &[MarginRef], n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let d = model.dim();
    let mut values = vec![0.0; n * d];
    for row in values.chunks_exact_mut(d) {
        model.sample_row(rng, row);
        for (v, m) in row.iter_mut().zip(margins) {
            *v = m.quantile(*v);
        }
    }
    values
}

/// Generates the sample described by `spec` with the given registries.
pub fn generate_with(spec: &GeneratorSpec, models: &ModelRegistry, margins: &MarginRegistry) -> Result<Sample> {
    spec.validate()?;
    let model = models.build(&spec.model, spec.d)?;
    let margins = margins.build_all(&spec.margins, spec.d)?;
    let mut rng = derive_stream(spec.seed, 0, "sample");
    let values = draw(model.as_ref(), &margins, spec.n, &mut rng);
    Sample::from_flat(spec.n, spec.d, values, Provenance::Generated(spec.clone()))
}

pub fn generate(spec: &GeneratorSpec) -> Result<Sample> {
    generate_with(spec, &ModelRegistry::builtin(), &MarginRegistry::builtin())
}

fn expect_model(spec: &GeneratorSpec, name: &str) -> Result<()> {
    if spec.model.name != name {
        return Err(Error::config(format!(
            "generator spec names model `{}` but `{name}` was requested",
            spec.model
        )));
    }
    Ok(())
}

/// Mutually independent coordinates, uniform before the margin transform.
pub fn sample_independence(spec: &GeneratorSpec) -> Result<Sample> {
    expect_model(spec, "independence")?;
    generate(spec)
}

/// One uniform per row copied to every coordinate.
pub fn sample_comonotone(spec: &GeneratorSpec) -> Result<Sample> {
    expect_model(spec, "comonotone")?;
    generate(spec)
}

/// Gumbel-copula rows with parameter `theta`; overrides any parameter in the spec.
pub fn sample_logistic(spec: &GeneratorSpec, theta: f64) -> Result<Sample> {
    expect_model(spec, "logistic")?;
    let mut spec = spec.clone();
    spec.model = ModelSpec::logistic(theta);
    generate(&spec)
}

/// Applies one strictly increasing transform per column; within-column
/// ranks are unchanged.
pub fn apply_margins(sample: &Sample, transforms: &[MarginRef]) -> Result<Sample> {
    if transforms.len() != sample.d() {
        return Err(Error::config(format!(
            "{} transforms for a sample with {} columns",
            transforms.len(),
            sample.d()
        )));
    }
    let d = sample.d();
    let values = sample
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| transforms[idx % d].quantile(*v))
        .collect();
    let tags: Vec<String> = transforms.iter().map(|m| m.tag().to_string()).collect();
    Sample::from_flat(
        sample.n(),
        d,
        values,
        Provenance::Derived(format!("margins [{}]", tags.join(", "))),
    )
}

/// Writes one observation per line, comma separated, no header.
pub fn write_csv<W: Write>(sample: &Sample, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let mut line = String::new();
    for row in sample.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            // `{}` on f64 prints the shortest string that parses back exactly
            line.push_str(&format!("{v}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes())
            .map_err(|e| Error::io("<csv output>", e))?;
    }
    out.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_csv_file(sample: &Sample, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(sample, file)
}

/// Reads a sample; a first line whose first field is not numeric is a header.
pub fn read_csv<R: Read>(input: R, provenance: Provenance) -> Result<Sample> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io("<csv input>", e))?;
    let has_header = first
        .split(',')
        .next()
        .map(|tok| tok.trim().parse::<f64>().is_err())
        .unwrap_or(false);
    let body = first.as_bytes().chain(reader);
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(body);
    let mut rows = Vec::new();
    for (idx, record) in csv.records().enumerate() {
        let record = record?;
        let line = idx + 1 + usize::from(has_header);
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| {
                    Error::data(format!("line {line}, field {}: `{field}` is not a number", j + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data("no observations in input"));
    }
    Sample::from_rows(&rows, provenance)
}

pub fn read_csv_file(path: &Path) -> Result<Sample> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, Provenance::File(path.to_path_buf()))
}
