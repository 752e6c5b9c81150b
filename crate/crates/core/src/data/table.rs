use std::io::{Read, Write};

use super::Dataset;
use crate::error::{Error, Result};

/// Read a labeled CSV whose header is `label,f1,...,fD`. When `num_classes`
/// is absent it is inferred as `max(label) + 1`.
pub fn parse_labeled_csv<R: Read>(reader: R, num_classes: Option<usize>, source: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(Error::Parse { offset: 0, message: "header must start with `label` followed by feature columns".into() });
    }
    let dim = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        if record.len() != dim + 1 {
            return Err(Error::Parse { offset, message: format!("expected {} fields, found {}", dim + 1, record.len()) });
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse { offset, message: format!("label `{}` is not a class id", &record[0]) })?;
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { offset, message: format!("feature `{field}` is not a number") })?;
            features.push(v);
        }
    }
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
    Dataset::new(features, dim, labels, k, source)
}

pub fn write_labeled_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((1..=ds.dim()).map(|i| format!("f{i}")));
    wtr.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec = vec![ds.label(i).to_string()];
        // `{:?}` prints the shortest representation that parses back exactly.
        rec.extend(ds.row(i).iter().map(|v| format!("{v:?}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
