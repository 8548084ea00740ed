//! CSV ingestion and emission for raw sensor recordings and feature tables.
//!
//! Raw files carry the header `t,<channel names>[,label]` with one row per
//! 20 ms tick. Feature files mirror the feature names of a
//! [`FeatureSequence`](crate::features::FeatureSequence).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::types::{Behaviour, ChannelLayout, Dataset, LabelSet, RawSequence, SensorFrame, MAX_RAW};

fn participant_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a raw sensor CSV file. The participant id is the file stem.
pub fn load_csv(
    path: impl AsRef<Path>,
    layout: &ChannelLayout,
    label_set: Option<&LabelSet>,
) -> Result<RawSequence> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_csv(file, participant_from_path(path), layout, label_set)
}

pub fn read_raw_csv<R: Read>(
    reader: R,
    participant_id: impl Into<String>,
    layout: &ChannelLayout,
    label_set: Option<&LabelSet>,
) -> Result<RawSequence> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let n = layout.len();
    let has_label = header.len() == n + 2 && &header[n + 1] == "label";
    let header_ok = (header.len() == n + 1 || has_label)
        && &header[0] == "t"
        && header.iter().skip(1).take(n).eq(layout.channels.iter().map(String::as_str));
    if !header_ok {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!(
                "header `{}` does not match layout `t,{}[,label]`",
                header.iter().collect::<Vec<_>>().join(","),
                layout.channels.join(",")
            ),
        });
    }
    let width = header.len();

    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::LengthMismatch(format!(
                "line {line}: {} fields, expected {width}",
                record.len()
            )));
        }
        let tick: u64 = record[0].parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("tick `{}` is not a non-negative integer", &record[0]),
        })?;
        let mut channels = Vec::with_capacity(n);
        for (j, name) in layout.channels.iter().enumerate() {
            let field = &record[j + 1];
            let v: i64 = field.parse().map_err(|_| Error::MalformedRow {
                line,
                message: format!("`{field}` in column `{name}` is not an integer"),
            })?;
            if !(0..=MAX_RAW as i64).contains(&v) {
                return Err(Error::OutOfRange {
                    line,
                    column: name.clone(),
                    value: v,
                });
            }
            channels.push(v as u16);
        }
        if has_label {
            let b: Behaviour = record[n + 1].parse()?;
            if let Some(set) = label_set {
                if !set.contains(b) {
                    return Err(Error::UnknownLabel(b.code().to_string()));
                }
            }
            labels.push(b);
        }
        frames.push(SensorFrame { tick, channels });
    }
    RawSequence::new(participant_id, frames, has_label.then_some(labels))
}

/// Writes a raw sequence in the canonical CSV format.
pub fn write_raw_csv<W: Write>(w: W, seq: &RawSequence, layout: &ChannelLayout) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(layout.channels.iter().cloned());
    if seq.labels.is_some() {
        header.push("label".into());
    }
    wtr.write_record(&header)?;
    for (i, f) in seq.frames.iter().enumerate() {
        let mut row = Vec::with_capacity(header.len());
        row.push(f.tick.to_string());
        row.extend(f.channels.iter().map(u16::to_string));
        if let Some(labels) = &seq.labels {
            row.push(labels[i].code().to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

fn csv_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "csv") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads a dataset directory. Each subdirectory holds the runs of one
/// participant named after it; a CSV file at the top level is a participant
/// with a single run named after the file. Participants and runs are sorted
/// by name.
pub fn load_dataset_dir(
    dir: impl AsRef<Path>,
    layout: &ChannelLayout,
    label_set: &LabelSet,
) -> Result<Dataset<RawSequence>> {
    let dir = dir.as_ref();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    let mut sequences = Vec::new();
    for path in entries {
        if path.is_dir() {
            let participant = participant_from_path(&path);
            for file in csv_files(&path)? {
                let mut seq = load_csv(&file, layout, Some(label_set))?;
                seq.participant_id = participant.clone();
                sequences.push(seq);
            }
        } else if path.extension().is_some_and(|x| x == "csv") {
            sequences.push(load_csv(&path, layout, Some(label_set))?);
        }
    }
    if sequences.is_empty() {
        return Err(Error::InvalidArgument(format!("no CSV recordings under {}", dir.display())));
    }
    Dataset::new(label_set.clone(), sequences)
}

/// Writes a feature table: `t,<feature names>[,label]`.
pub fn write_feature_csv<W: Write>(w: W, seq: &FeatureSequence) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(seq.feature_names.iter().cloned());
    if seq.labels.is_some() {
        header.push("label".into());
    }
    wtr.write_record(&header)?;
    for (t, row) in seq.values.iter().enumerate() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(t.to_string());
        rec.extend(row.iter().map(f64::to_string));
        if let Some(labels) = &seq.labels {
            rec.push(labels[t].code().to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(
    reader: R,
    participant_id: impl Into<String>,
) -> Result<FeatureSequence> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || &header[0] != "t" {
        return Err(Error::MalformedRow {
            line: 1,
            message: "feature CSV must start with column `t`".into(),
        });
    }
    let has_label = header.iter().next_back() == Some("label");
    let end = if has_label { header.len() - 1 } else { header.len() };
    let names: Vec<String> = header.iter().skip(1).take(end - 1).map(String::from).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::LengthMismatch(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                header.len()
            )));
        }
        let row = (1..end)
            .map(|j| {
                record[j].parse::<f64>().map_err(|_| Error::MalformedRow {
                    line,
                    message: format!("`{}` is not a number", &record[j]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
        if has_label {
            labels.push(record[end].parse()?);
        }
    }
    FeatureSequence::new(participant_id, names, values, has_label.then_some(labels))
}

pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv(file, participant_from_path(path))
}

/// Writes a single `label` column.
pub fn write_label_csv<W: Write>(w: W, labels: &[Behaviour]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "label"])?;
    for (t, b) in labels.iter().enumerate() {
        wtr.write_record([t.to_string(), b.code().to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Reads the `label` column of any CSV that has one.
pub fn read_label_csv<R: Read>(reader: R) -> Result<Vec<Behaviour>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::MalformedRow {
            line: 1,
            message: "no `label` column".into(),
        })?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(col).ok_or_else(|| {
            Error::LengthMismatch(format!("line {line}: missing label field"))
        })?;
        out.push(field.parse()?);
    }
    Ok(out)
}

pub fn load_label_csv(path: impl AsRef<Path>) -> Result<Vec<Behaviour>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_label_csv(file)
}
