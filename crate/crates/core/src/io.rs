//! File formats: model JSON, sequence CSV and its sidecar.
//!
//! A sequence is stored as `time,event,state` rows with event and state
//! written as labels, plus a JSON sidecar next to the CSV carrying the
//! window, the initial state and the label sets. When reading, a cell is
//! resolved as a label first and as a 0-based index otherwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dimensions, ExpKernelParams, MarkedSequence, SdHawkesModel, TransitionDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub event_labels: Vec<String>,
    pub state_labels: Vec<String>,
    pub nu: Vec<f64>,
    /// `alpha[e'][x'][e]`.
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    /// `phi[e][x][x']`.
    pub phi: Vec<Vec<Vec<f64>>>,
}

impl From<&SdHawkesModel> for ModelFile {
    fn from(m: &SdHawkesModel) -> Self {
        Self {
            event_labels: m.dims.event_labels().to_vec(),
            state_labels: m.dims.state_labels().to_vec(),
            nu: m.kernel.nu.clone(),
            alpha: m.kernel.nested(&m.kernel.alpha),
            beta: m.kernel.nested(&m.kernel.beta),
            phi: m.phi.to_nested(),
        }
    }
}

impl TryFrom<ModelFile> for SdHawkesModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let dims = Dimensions::new(f.event_labels, f.state_labels)?;
        let kernel = ExpKernelParams::from_nested(f.nu, &f.alpha, &f.beta)?;
        let phi = TransitionDistribution::from_nested(&f.phi)?;
        if kernel.n_events() != dims.n_events() || kernel.n_states() != dims.n_states() {
            return Err(Error::invalid(format!(
                "kernel arrays are {}x{}x{} but labels give {} events and {} states",
                kernel.n_events(),
                kernel.n_states(),
                kernel.n_events(),
                dims.n_events(),
                dims.n_states()
            )));
        }
        SdHawkesModel::new(dims, phi, kernel)
    }
}

pub fn model_to_json(model: &SdHawkesModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from(model))?)
}

pub fn model_from_json(text: &str) -> Result<SdHawkesModel> {
    serde_json::from_str::<ModelFile>(text)?.try_into()
}

pub fn read_model(path: &Path) -> Result<SdHawkesModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, model: &SdHawkesModel) -> Result<()> {
    let mut text = model_to_json(model)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub initial_state: usize,
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
}

/// `seq.csv` -> `seq.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_sequence_csv<W: Write>(writer: W, seq: &MarkedSequence, dims: &Dimensions) -> Result<()> {
    seq.validate(dims)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "event", "state"])?;
    for i in 0..seq.len() {
        w.write_record([
            seq.times[i].to_string().as_str(),
            &dims.event_labels()[seq.events[i]],
            &dims.state_labels()[seq.states[i]],
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a sequence CSV, with event and state cells unresolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSequence {
    pub times: Vec<f64>,
    pub events: Vec<String>,
    pub states: Vec<String>,
}

pub fn read_sequence_csv<R: Read>(reader: R) -> Result<RawSequence> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() != 3 || &headers[0] != "time" || &headers[1] != "event" || &headers[2] != "state" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `time,event,state`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut raw = RawSequence {
        times: Vec::new(),
        events: Vec::new(),
        states: Vec::new(),
    };
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let time = record[0].parse::<f64>().map_err(|e| Error::Parse {
            line,
            message: format!("time `{}`: {e}", &record[0]),
        })?;
        raw.times.push(time);
        raw.events.push(record[1].to_string());
        raw.states.push(record[2].to_string());
    }
    Ok(raw)
}

fn resolve(cell: &str, labels: &[String], what: &str, line: usize) -> Result<usize> {
    if let Some(i) = labels.iter().position(|l| l == cell) {
        return Ok(i);
    }
    match cell.parse::<usize>() {
        Ok(i) if i < labels.len() => Ok(i),
        _ => Err(Error::Parse {
            line,
            message: format!("unknown {what} `{cell}`"),
        }),
    }
}

impl RawSequence {
    /// Dimensions implied by the cells when no labels are known: integer cells
    /// give `0..=max`.
    pub fn numbered_dimensions(&self) -> Result<Dimensions> {
        let max = |cells: &[String], what: &str| -> Result<usize> {
            let mut m = 0;
            for (i, c) in cells.iter().enumerate() {
                let v = c.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 2,
                    message: format!("{what} `{c}` is not an index and no labels are known"),
                })?;
                m = m.max(v);
            }
            Ok(m)
        };
        Dimensions::numbered(max(&self.events, "event")? + 1, max(&self.states, "state")? + 1)
    }

    pub fn resolve(&self, dims: &Dimensions, sidecar: &Sidecar) -> Result<MarkedSequence> {
        let mut events = Vec::with_capacity(self.times.len());
        let mut states = Vec::with_capacity(self.times.len());
        for i in 0..self.times.len() {
            events.push(resolve(&self.events[i], dims.event_labels(), "event", i + 2)?);
            states.push(resolve(&self.states[i], dims.state_labels(), "state", i + 2)?);
        }
        let seq = MarkedSequence::new(
            self.times.clone(),
            events,
            states,
            sidecar.initial_state,
            sidecar.t0,
            sidecar.t_end,
        )?;
        seq.validate(dims)?;
        Ok(seq)
    }
}

pub fn write_sequence(csv_path: &Path, seq: &MarkedSequence, dims: &Dimensions) -> Result<()> {
    let file = BufWriter::new(File::create(csv_path)?);
    write_sequence_csv(file, seq, dims)?;
    let sidecar = Sidecar {
        initial_state: seq.initial_state,
        t0: seq.t0,
        t_end: seq.t_end,
        event_labels: Some(dims.event_labels().to_vec()),
        state_labels: Some(dims.state_labels().to_vec()),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    std::fs::write(sidecar_path(csv_path), text)?;
    Ok(())
}

pub fn read_sidecar(csv_path: &Path) -> Result<Sidecar> {
    let path = sidecar_path(csv_path);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::invalid(format!("cannot read sidecar {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a sequence and its sidecar. Dimensions come from `dims` if given,
/// else from the sidecar labels, else from the integer cells.
pub fn read_sequence(csv_path: &Path, dims: Option<&Dimensions>) -> Result<(MarkedSequence, Dimensions)> {
    let sidecar = read_sidecar(csv_path)?;
    let raw = read_sequence_csv(BufReader::new(File::open(csv_path)?))?;
    let dims = match (dims, &sidecar.event_labels, &sidecar.state_labels) {
        (Some(d), _, _) => d.clone(),
        (None, Some(e), Some(x)) => Dimensions::new(e.clone(), x.clone())?,
        _ => raw.numbered_dimensions()?,
    };
    let seq = raw.resolve(&dims, &sidecar)?;
    Ok((seq, dims))
}
