//! CSV ingestion and the truth sidecar written next to simulated data.

use std::path::Path;

use crate::data::{Dataset, SimSpec, Simulation};
use crate::error::{Error, Result};
use crate::family::{ModelFamily, Observation};
use crate::kv::KvDocument;

/// How CSV columns map onto the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub response: String,
    /// Column holding the offset, if any.
    pub offset: Option<String>,
    /// Take the natural log of the offset column on load (exposure → log
    /// exposure).
    pub log_offset: bool,
    /// Covariate columns in order; `None` means every remaining column.
    pub covariates: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn response(name: &str) -> Self {
        Self {
            response: name.to_string(),
            offset: None,
            log_offset: false,
            covariates: None,
        }
    }

    pub fn with_offset(mut self, name: &str, log_transform: bool) -> Self {
        self.offset = Some(name.to_string());
        self.log_offset = log_transform;
        self
    }
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self::response("y")
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Load a headered, comma separated file.
pub fn load_csv(path: &Path, family: ModelFamily, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();

    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let response = column(&schema.response)?;
    let offset = schema.offset.as_deref().map(column).transpose()?;
    let covariates: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| column(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != response && Some(i) != offset)
            .collect(),
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |i: usize| -> Result<f64> {
            let raw = &record[i];
            raw.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column `{}`: `{raw}` is not a number", headers[i]),
            })
        };
        let x = covariates.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?;
        let y = cell(response)?;
        let offset = match offset {
            Some(i) => {
                let v = cell(i)?;
                if schema.log_offset {
                    if v <= 0.0 {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line,
                            message: format!("offset `{v}` must be positive before the log transform"),
                        });
                    }
                    v.ln()
                } else {
                    v
                }
            }
            None => 0.0,
        };
        family.check_response(y).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        rows.push(Observation::with_offset(x, y, offset));
    }
    Dataset::new(family, covariates.len(), rows)
}

/// Write `x1..xp,y[,offset]`. The offset column is written as stored (already
/// on the log scale) and only when some row has a nonzero offset.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let io = |e: csv::Error| csv_error(path, e);
    let mut writer = csv::Writer::from_path(path).map_err(io)?;
    let with_offset = data.iter().any(|o| o.offset != 0.0);
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if with_offset {
        header.push("offset".into());
    }
    writer.write_record(&header).map_err(io)?;
    let mut record = Vec::with_capacity(header.len());
    for obs in data.iter() {
        record.clear();
        record.extend(obs.x.iter().map(|v| v.to_string()));
        record.push(obs.y.to_string());
        if with_offset {
            record.push(obs.offset.to_string());
        }
        writer.write_record(&record).map_err(io)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Ground-truth sidecar: simulation settings, true parameters and the indices of
/// the contaminated rows.
pub fn truth_document(spec: &SimSpec, sim: &Simulation) -> KvDocument {
    let mut doc = KvDocument::new();
    doc.set("family", spec.family);
    doc.set("n", spec.n);
    doc.set("p", spec.p);
    doc.set("epsilon", spec.epsilon);
    doc.set("seed", spec.seed);
    doc.set("beta0", sim.truth.beta0);
    doc.set_list("beta", &sim.truth.beta);
    if let Some(s2) = sim.truth.sigma2 {
        doc.set("sigma2", s2);
    }
    doc.set(
        "contaminated",
        sim.contaminated
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    doc
}
