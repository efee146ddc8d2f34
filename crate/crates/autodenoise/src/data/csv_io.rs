//! CSV ingestion and export.
//!
//! Expected layout: UTF-8, header row, one categorical column per field,
//! and a final `label` (0/1) or `rating` (1-5) column. Ratings above 3
//! binarize to a click.

use std::path::Path;

use crate::data::dataset::FeatureInstance;
use crate::data::schema::FieldSchema;
use crate::error::{Error, Result};

/// Ratings above 3 count as a click.
pub fn binarize_rating(rating: i64) -> Result<u8> {
    if !(1..=5).contains(&rating) {
        return Err(Error::data(format!("rating {rating} outside [1, 5]")));
    }
    Ok(u8::from(rating > 3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelColumn {
    Label,
    Rating,
}

/// Loads a dataset CSV. With `schema = None` the vocabulary is inferred in
/// first-appearance order; with a fixed schema, unseen values are an error.
/// Returned instances carry `global_position` equal to their row order.
pub fn load_csv(
    path: &Path,
    schema: Option<&FieldSchema>,
) -> Result<(Vec<FeatureInstance>, FieldSchema)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::data(
            "CSV needs at least one field column and a label column",
        ));
    }
    let last = headers.len() - 1;
    let label_kind = match &headers[last] {
        "label" => LabelColumn::Label,
        "rating" => LabelColumn::Rating,
        other => {
            return Err(Error::data(format!(
                "final column must be `label` or `rating`, found `{other}`"
            )))
        }
    };
    let field_names: Vec<String> = headers.iter().take(last).map(str::to_string).collect();

    let mut inferred;
    let (fixed, schema_ref): (bool, &mut FieldSchema) = match schema {
        Some(s) => {
            if s.field_names() != field_names.as_slice() {
                return Err(Error::data(format!(
                    "CSV fields {:?} do not match schema fields {:?}",
                    field_names,
                    s.field_names()
                )));
            }
            inferred = s.clone();
            (true, &mut inferred)
        }
        None => {
            inferred = FieldSchema::empty(field_names.clone());
            (false, &mut inferred)
        }
    };

    let mut instances = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::data(format!(
                "row {}: expected {} columns, found {}",
                row_idx + 1,
                headers.len(),
                record.len()
            )));
        }
        let mut field_values = Vec::with_capacity(field_names.len());
        for f in 0..field_names.len() {
            let token = &record[f];
            let value = if fixed {
                schema_ref.value_index(f, token).ok_or_else(|| {
                    Error::data(format!(
                        "row {}: unknown value `{token}` for field `{}` under fixed schema",
                        row_idx + 1,
                        field_names[f]
                    ))
                })?
            } else {
                schema_ref.intern(f, token)
            };
            field_values.push(value);
        }
        let raw = &record[last];
        let label = match label_kind {
            LabelColumn::Label => match raw {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::data(format!(
                        "row {}: label must be 0 or 1, found `{other}`",
                        row_idx + 1
                    )))
                }
            },
            LabelColumn::Rating => {
                let rating: i64 = raw.parse().map_err(|_| {
                    Error::data(format!("row {}: malformed rating `{raw}`", row_idx + 1))
                })?;
                binarize_rating(rating)?
            }
        };
        let mut inst = FeatureInstance::new(field_values, label);
        inst.global_position = row_idx;
        instances.push(inst);
    }
    Ok((instances, inferred))
}

/// Writes instances with a `label` column, reverse-mapping value indices to
/// their schema tokens. Round-trips exactly under the same schema.
pub fn write_csv(path: &Path, instances: &[FeatureInstance], schema: &FieldSchema) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        let mut header: Vec<&str> = schema.field_names().iter().map(String::as_str).collect();
        header.push("label");
        writer.write_record(&header)?;
        for inst in instances {
            inst.validate(schema)?;
            let mut row: Vec<&str> = Vec::with_capacity(header.len());
            for (f, &v) in inst.field_values.iter().enumerate() {
                row.push(schema.token(f, v));
            }
            let label = if inst.label == 1 { "1" } else { "0" };
            row.push(label);
            writer.write_record(&row)?;
        }
        writer.flush()?;
    }
    crate::data::write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn binarize_rating_thresholds() {
        assert_eq!(binarize_rating(4).unwrap(), 1);
        assert_eq!(binarize_rating(3).unwrap(), 0);
        assert_eq!(binarize_rating(5).unwrap(), 1);
        assert_eq!(binarize_rating(1).unwrap(), 0);
        assert!(binarize_rating(0).is_err());
        assert!(binarize_rating(6).is_err());
    }

    #[test]
    fn infers_schema_and_counts_vocab() {
        let f = write_temp("user,item,label\nu1,i1,1\nu2,i1,0\nu1,i2,1\n");
        let (instances, schema) = load_csv(f.path(), None).unwrap();
        assert_eq!(instances.len(), 3);
        assert_eq!(schema.vocab_size(0), 2);
        assert_eq!(schema.vocab_size(1), 2);
        assert_eq!(instances[0].field_values, vec![0, 0]);
        assert_eq!(instances[2].field_values, vec![0, 1]);
        assert_eq!(instances[2].global_position, 2);
    }

    #[test]
    fn rating_column_binarizes() {
        let f = write_temp("user,item,rating\nu1,i1,3\nu1,i2,4\n");
        let (instances, _) = load_csv(f.path(), None).unwrap();
        assert_eq!(instances[0].label, 0);
        assert_eq!(instances[1].label, 1);
    }

    #[test]
    fn unknown_value_under_fixed_schema_errors() {
        let f = write_temp("user,item,label\nu1,i1,1\n");
        let (_, schema) = load_csv(f.path(), None).unwrap();
        let g = write_temp("user,item,label\nu9,i1,1\n");
        assert!(load_csv(g.path(), Some(&schema)).is_err());
    }

    #[test]
    fn missing_label_column_errors() {
        let f = write_temp("user,item,clicks\nu1,i1,1\n");
        assert!(load_csv(f.path(), None).is_err());
    }

    #[test]
    fn malformed_rows_error() {
        let f = write_temp("user,item,label\nu1,i1,2\n");
        assert!(load_csv(f.path(), None).is_err());
        let g = write_temp("user,item,rating\nu1,i1,high\n");
        assert!(load_csv(g.path(), None).is_err());
    }

    #[test]
    fn round_trip_preserves_indices_and_labels() {
        let f = write_temp("user,item,label\nu1,i1,1\nu2,i3,0\nu1,i2,1\nu3,i1,0\n");
        let (instances, schema) = load_csv(f.path(), None).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(out.path(), &instances, &schema).unwrap();
        let (reloaded, schema2) = load_csv(out.path(), Some(&schema)).unwrap();
        assert_eq!(schema2.hash(), schema.hash());
        assert_eq!(reloaded.len(), instances.len());
        for (a, b) in instances.iter().zip(&reloaded) {
            assert_eq!(a.field_values, b.field_values);
            assert_eq!(a.label, b.label);
        }
    }
}
