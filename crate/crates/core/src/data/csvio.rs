//! Long-format CSV: `subject,t,x1,...,xd`, one reading per row.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Parsed file contents.
#[derive(Debug, Clone)]
pub struct CsvTable<T = f64> {
    /// One dataset per subject, in order of first appearance.
    pub datasets: Vec<PanelDataset<T>>,
    pub rows: usize,
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn check_header(header: &csv::StringRecord) -> Result<usize> {
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields.len() < 3 || fields[0] != "subject" || fields[1] != "t" {
        return Err(parse_err(1, "header must be `subject,t,x1[,x2,...]`"));
    }
    for (j, f) in fields[2..].iter().enumerate() {
        if *f != format!("x{}", j + 1) {
            return Err(parse_err(1, format!("expected column `x{}`, found `{f}`", j + 1)));
        }
    }
    Ok(fields.len() - 2)
}

/// Reads panel data from any reader. Times are min-max rescaled to `[0, 1]`
/// per subject; rows sharing a subject and time form one block.
pub fn read_csv<T: Real, R: Read>(reader: R) -> Result<CsvTable<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let dim = check_header(&header)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_subject: BTreeMap<String, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 2 {
            return Err(parse_err(line, format!("expected {} fields, found {}", dim + 2, record.len())));
        }
        let subject = record[0].trim().to_owned();
        if subject.is_empty() {
            return Err(parse_err(line, "empty subject"));
        }
        let num = |j: usize| -> Result<f64> {
            let cell = record[j].trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("`{cell}` is not a finite number"))),
            }
        };
        let t = num(1)?;
        let x = (2..dim + 2).map(num).collect::<Result<Vec<_>>>()?;
        if !by_subject.contains_key(&subject) {
            order.push(subject.clone());
        }
        by_subject.entry(subject).or_default().push((t, x));
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(1, "no data rows"));
    }
    let datasets = order
        .into_iter()
        .map(|s| {
            let readings = by_subject.remove(&s).expect("subject recorded");
            build_subject(s, dim, readings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CsvTable { datasets, rows })
}

fn build_subject<T: Real>(subject: String, dim: usize, mut readings: Vec<(f64, Vec<f64>)>) -> Result<PanelDataset<T>> {
    // stable: readings at one time keep file order
    readings.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t_min = readings[0].0;
    let t_max = readings[readings.len() - 1].0;
    if !(t_max > t_min) {
        return Err(Error::invalid(format!("subject `{subject}` has a degenerate time axis (one distinct time)")));
    }
    let mut times: Vec<T> = Vec::new();
    let mut blocks: Vec<Vec<Vec<T>>> = Vec::new();
    let mut last: Option<f64> = None;
    for (t, x) in readings {
        if last != Some(t) {
            times.push(lit((t - t_min) / (t_max - t_min)));
            blocks.push(Vec::new());
            last = Some(t);
        }
        blocks.last_mut().unwrap().push(x.into_iter().map(lit).collect());
    }
    PanelDataset::new(dim, times, blocks, Some(subject))
}

pub fn load_csv<T: Real>(path: impl AsRef<Path>) -> Result<Vec<PanelDataset<T>>> {
    Ok(load_csv_table(path)?.datasets)
}

pub fn load_csv_table<T: Real>(path: impl AsRef<Path>) -> Result<CsvTable<T>> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

/// Writes datasets in the long format; subjects without an id are numbered.
pub fn write_csv_to<T: Real, W: Write>(datasets: &[PanelDataset<T>], writer: W) -> Result<()> {
    let dim = datasets.first().map_or(1, PanelDataset::dim);
    if datasets.iter().any(|d| d.dim() != dim) {
        return Err(Error::invalid("all datasets written to one file must share a dimension"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subject".to_owned(), "t".to_owned()];
    header.extend((1..=dim).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for (i, ds) in datasets.iter().enumerate() {
        let subject = ds.subject().map_or_else(|| format!("s{i}"), str::to_owned);
        for (&t, block) in ds.times().iter().zip(ds.blocks()) {
            for x in block {
                let mut row = vec![subject.clone(), format!("{:?}", to_f64(t))];
                row.extend(x.iter().map(|&v| format!("{:?}", to_f64(v))));
                w.write_record(&row).map_err(csv_io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a weight trajectory as `t,alpha1,...,alphaK`.
pub fn write_weights_to<T: Real, W: Write>(times: &[T], rows: &[Vec<T>], writer: W) -> Result<()> {
    if times.len() != rows.len() {
        return Err(Error::invalid("one weight row per time required"));
    }
    let k = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_owned()];
    header.extend((1..=k).map(|s| format!("alpha{s}")));
    w.write_record(&header).map_err(csv_io)?;
    for (&t, row) in times.iter().zip(rows) {
        let mut rec = vec![format!("{:?}", to_f64(t))];
        rec.extend(row.iter().map(|&v| format!("{:?}", to_f64(v))));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `t,alpha1,...` table back.
pub fn read_weights<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .map(|c| c.trim().parse::<f64>().map_err(|_| parse_err(line, format!("`{c}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() < 2 {
            return Err(parse_err(line, "weight row needs a time and at least one weight"));
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    Ok((times, rows))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Atomic write: a temporary file in the target directory is renamed over
/// the destination.
pub fn write_csv<T: Real>(datasets: &[PanelDataset<T>], path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), |f| write_csv_to(datasets, f))
}

pub(crate) fn atomic_write(path: &Path, fill: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
