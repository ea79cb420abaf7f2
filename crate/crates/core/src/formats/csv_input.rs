//! CSV inputs for raw recordings.
//!
//! Signals: `timestamp,channel,value`, one sample per row, timestamps in
//! seconds. An empty or `NaN` value marks a missing sample. Labels:
//! `epoch_index,stage`, with stage strings as accepted by
//! [`RawStage`](crate::preprocess::RawStage).

use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result};
use crate::preprocess::RawStage;

/// Samples grouped by channel, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignalTable {
    pub channels: BTreeMap<String, Vec<(f64, Option<f64>)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub epoch_index: usize,
    /// The label as written in the file.
    pub stage: String,
}

fn parse_err(source_name: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { source_name: source_name.to_string(), line, message: message.into() }
}

fn records<R: Read>(
    reader: R,
    source_name: &str,
    expected: &[&str],
) -> Result<impl Iterator<Item = Result<(u64, csv::StringRecord)>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(source_name, 1, e.to_string()))?;
    let got: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    if got != expected {
        return Err(parse_err(source_name, 1, format!("expected header {expected:?}, got {got:?}")));
    }
    let name = source_name.to_string();
    Ok(rdr.into_records().map(move |rec| {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(&name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    }))
}

pub fn parse_signals<R: Read>(reader: R, source_name: &str) -> Result<SignalTable> {
    let mut table = SignalTable::default();
    for row in records(reader, source_name, &["timestamp", "channel", "value"])? {
        let (line, rec) = row?;
        let t: f64 = rec[0]
            .parse()
            .map_err(|_| parse_err(source_name, line, format!("bad timestamp {:?}", &rec[0])))?;
        if !t.is_finite() {
            return Err(parse_err(source_name, line, "timestamp must be finite"));
        }
        let channel = &rec[1];
        if channel.is_empty() {
            return Err(parse_err(source_name, line, "empty channel name"));
        }
        let value = match &rec[2] {
            "" => None,
            v => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| parse_err(source_name, line, format!("bad value {v:?}")))?;
                if x.is_infinite() {
                    return Err(parse_err(source_name, line, "infinite sample value"));
                }
                (!x.is_nan()).then_some(x)
            }
        };
        table.channels.entry(channel.to_string()).or_default().push((t, value));
    }
    Ok(table)
}

/// Rows sorted by epoch index; duplicate indices are rejected.
pub fn parse_labels<R: Read>(reader: R, source_name: &str) -> Result<Vec<LabelRow>> {
    let mut seen = BTreeMap::new();
    for row in records(reader, source_name, &["epoch_index", "stage"])? {
        let (line, rec) = row?;
        let epoch_index: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(source_name, line, format!("bad epoch index {:?}", &rec[0])))?;
        rec[1]
            .parse::<RawStage>()
            .map_err(|e| parse_err(source_name, line, e.to_string()))?;
        if seen.insert(epoch_index, rec[1].to_string()).is_some() {
            return Err(parse_err(source_name, line, format!("duplicate epoch index {epoch_index}")));
        }
    }
    Ok(seen.into_iter().map(|(epoch_index, stage)| LabelRow { epoch_index, stage }).collect())
}
