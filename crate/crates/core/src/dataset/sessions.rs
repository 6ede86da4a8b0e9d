use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact column set of the session CSV.
pub const SESSION_COLUMNS: [&str; 9] = [
    "session_id",
    "content_id",
    "ti",
    "si",
    "fps",
    "segment_bitrates",
    "initial_stall_s",
    "intermediate_stalls",
    "mos",
];

/// One subject-rated streaming session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub content_id: String,
    /// Temporal information score of the content.
    pub ti: f64,
    /// Spatial information score of the content.
    pub si: f64,
    pub fps: f64,
    /// Played bitrate per segment, Mbps.
    pub segment_bitrates: Vec<f64>,
    pub initial_stall_s: f64,
    /// Mid-playback rebuffering durations, seconds.
    pub intermediate_stalls: Vec<f64>,
    /// Mean opinion score on the 0 (worst) to 100 (best) scale.
    pub mos: f64,
}

impl SessionRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = [self.ti, self.si, self.fps, self.initial_stall_s, self.mos];
        if finite.iter().any(|v| !v.is_finite())
            || self.segment_bitrates.iter().chain(&self.intermediate_stalls).any(|v| !v.is_finite())
        {
            return Err("non-finite value".into());
        }
        if !(0.0..=100.0).contains(&self.mos) {
            return Err(format!("mos {} outside [0, 100]", self.mos));
        }
        if self.ti < 0.0 || self.si < 0.0 {
            return Err("ti and si must be non-negative".into());
        }
        if self.fps <= 0.0 {
            return Err(format!("fps {} must be positive", self.fps));
        }
        if self.segment_bitrates.is_empty() {
            return Err("segment_bitrates must hold at least one segment".into());
        }
        if let Some(b) = self.segment_bitrates.iter().find(|b| **b <= 0.0) {
            return Err(format!("bitrate {b} must be positive"));
        }
        if self.initial_stall_s < 0.0 {
            return Err(format!("initial_stall_s {} must be >= 0", self.initial_stall_s));
        }
        if let Some(s) = self.intermediate_stalls.iter().find(|s| **s <= 0.0) {
            return Err(format!("intermediate stall {s} must be positive"));
        }
        Ok(())
    }
}

pub fn load_sessions(path: impl AsRef<Path>) -> Result<Vec<SessionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sessions(file)
}

/// Parses session CSV. Rows are numbered from 1, header excluded.
pub fn read_sessions<R: Read>(reader: R) -> Result<Vec<SessionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let header: Vec<&str> = headers.iter().map(str::trim).collect();
    for col in SESSION_COLUMNS {
        if !header.contains(&col) {
            return Err(Error::Schema(format!("missing column `{col}`")));
        }
    }
    for (i, col) in header.iter().enumerate() {
        if !SESSION_COLUMNS.contains(col) {
            return Err(Error::Schema(format!("unexpected column `{col}`")));
        }
        if header[..i].contains(col) {
            return Err(Error::Schema(format!("duplicate column `{col}`")));
        }
    }
    let pos: Vec<usize> = SESSION_COLUMNS
        .iter()
        .map(|c| header.iter().position(|h| h == c).unwrap())
        .collect();

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |k: usize| rec.get(pos[k]).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64> {
            let raw = cell(k);
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: SESSION_COLUMNS[k].to_string(),
                message: format!("`{raw}` is not a number"),
            })
        };
        let list = |k: usize| -> Result<Vec<f64>> {
            let raw = cell(k);
            if raw.is_empty() {
                return Ok(Vec::new());
            }
            raw.split(';')
                .map(|p| {
                    p.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row,
                        column: SESSION_COLUMNS[k].to_string(),
                        message: format!("`{}` is not a number", p.trim()),
                    })
                })
                .collect()
        };
        let session = SessionRecord {
            session_id: cell(0).to_string(),
            content_id: cell(1).to_string(),
            ti: num(2)?,
            si: num(3)?,
            fps: num(4)?,
            segment_bitrates: list(5)?,
            initial_stall_s: num(6)?,
            intermediate_stalls: list(7)?,
            mos: num(8)?,
        };
        session
            .validate()
            .map_err(|message| Error::Validation { row, message })?;
        out.push(session);
    }
    Ok(out)
}

fn join_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_sessions<W: Write>(writer: W, sessions: &[SessionRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    w.write_record(SESSION_COLUMNS)?;
    for s in sessions {
        w.write_record([
            s.session_id.clone(),
            s.content_id.clone(),
            s.ti.to_string(),
            s.si.to_string(),
            s.fps.to_string(),
            join_list(&s.segment_bitrates),
            s.initial_stall_s.to_string(),
            join_list(&s.intermediate_stalls),
            s.mos.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sessions>", e))?;
    Ok(())
}
