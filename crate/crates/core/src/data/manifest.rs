//! CSV manifests (`instance_id,domain,partition,<attributes...>`) and feature
//! files (`instance_id,f0..f{D-1}`).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::AttributeSchema;

use super::{FeatureMatrix, LabelMatrix, Partition};

const META_COLUMNS: [&str; 3] = ["instance_id", "domain", "partition"];

pub fn load_manifest(path: impl AsRef<Path>, schema: &AttributeSchema) -> Result<LabelMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(file, schema)
}

/// Attribute columns may appear in any order; they are mapped onto schema order.
pub fn parse_manifest<R: Read>(reader: R, schema: &AttributeSchema) -> Result<LabelMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse("manifest header", e))?
        .clone();
    if header.len() < 3 || header.iter().take(3).ne(META_COLUMNS) {
        return Err(Error::ColumnMismatch(format!(
            "header must start with {}",
            META_COLUMNS.join(",")
        )));
    }

    let a = schema.len();
    // file column (after the 3 metadata columns) -> schema column
    let mut column_map = Vec::with_capacity(header.len() - 3);
    let mut covered = vec![false; a];
    for name in header.iter().skip(3) {
        let j = schema
            .column_index(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))?;
        if covered[j] {
            return Err(Error::ColumnMismatch(format!("attribute `{name}` appears twice")));
        }
        covered[j] = true;
        column_map.push(j);
    }
    if let Some(j) = covered.iter().position(|c| !c) {
        return Err(Error::ColumnMismatch(format!(
            "missing attribute column `{}`",
            schema.attributes()[j].name
        )));
    }

    let mut ids = Vec::new();
    let mut domains = Vec::new();
    let mut partitions = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| Error::parse(format!("manifest line {line}"), e))?;
        if record.len() != header.len() {
            return Err(Error::parse(
                format!("manifest line {line}"),
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        ids.push(record[0].to_string());
        domains.push(record[1].to_string());
        partitions.push(record[2].parse::<Partition>()?);
        let mut row = vec![0u8; a];
        for (k, &j) in column_map.iter().enumerate() {
            let cell = record[k + 3].trim();
            row[j] = match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::NonBinaryLabel {
                        value: other.to_string(),
                        line,
                        column: k + 4,
                    })
                }
            };
        }
        labels.extend(row);
    }
    LabelMatrix::new(ids, domains, partitions, a, labels)
}

pub fn write_manifest<W: Write>(
    writer: W,
    matrix: &LabelMatrix,
    schema: &AttributeSchema,
) -> Result<()> {
    if schema.len() != matrix.n_attributes() {
        return Err(Error::Shape(format!(
            "schema has {} attributes, matrix has {}",
            schema.len(),
            matrix.n_attributes()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = META_COLUMNS.to_vec();
    header.extend(schema.names());
    w.write_record(&header).map_err(|e| Error::parse("manifest write", e))?;
    for i in 0..matrix.len() {
        let mut rec = vec![
            matrix.instance_ids()[i].clone(),
            matrix.domains()[i].clone(),
            matrix.partitions()[i].to_string(),
        ];
        rec.extend(matrix.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::parse("manifest write", e))?;
    }
    w.flush().map_err(|e| Error::parse("manifest write", e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_features(file)
}

pub fn parse_features<R: Read>(reader: R) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse("feature header", e))?
        .clone();
    if header.is_empty() || &header[0] != "instance_id" {
        return Err(Error::ColumnMismatch(
            "feature header must start with instance_id".into(),
        ));
    }
    for (k, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{k}") {
            return Err(Error::ColumnMismatch(format!(
                "feature column {} should be `f{k}`, found `{name}`",
                k + 1
            )));
        }
    }
    let dim = header.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| Error::parse(format!("feature line {line}"), e))?;
        if record.len() != header.len() {
            return Err(Error::parse(
                format!("feature line {line}"),
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        ids.push(record[0].to_string());
        for cell in record.iter().skip(1) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|e| Error::parse(format!("feature line {line}"), e))?;
            values.push(v);
        }
    }
    FeatureMatrix::new(ids, dim, values)
}

/// Values are written with Rust's shortest round-trip float formatting.
pub fn write_features<W: Write>(writer: W, features: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["instance_id".to_string()];
    header.extend((0..features.dim()).map(|k| format!("f{k}")));
    w.write_record(&header).map_err(|e| Error::parse("feature write", e))?;
    for i in 0..features.len() {
        let mut rec = vec![features.instance_ids()[i].clone()];
        rec.extend(features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::parse("feature write", e))?;
    }
    w.flush().map_err(|e| Error::parse("feature write", e))
}
