//! Comma-separated features and newline-separated labels.
//!
//! Row numbers in errors are 1-based line numbers of the input, counting a
//! header line when present; columns are 1-based.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use ndarray::Array2;

use super::{DataError, DatasetBundle};

pub fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<Array2<f64>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(DataError::Csv(e.to_string())),
        }
        let row = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged {
                row,
                expected,
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| DataError::Parse {
                row,
                col: c + 1,
                cell: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    col: c + 1,
                    value,
                });
            }
            values.push(value);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    if rows == 0 {
        return Err(DataError::Empty);
    }
    Ok(Array2::from_shape_vec((rows, width), values).expect("rectangular by construction"))
}

/// Reads a feature matrix; blank lines are skipped.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DatasetBundle, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let features = parse_csv(BufReader::new(file), has_header)?;
    DatasetBundle::new(path.display().to_string(), features, None)
}

pub fn parse_labels<R: BufRead>(reader: R) -> Result<Vec<usize>, DataError> {
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::Csv(e.to_string()))?;
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        labels.push(cell.parse().map_err(|_| DataError::Label {
            line: i + 1,
            cell: cell.to_string(),
        })?);
    }
    Ok(labels)
}

/// One integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_labels(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn two_by_two() {
        let x = parse_csv("1,2\n3,4".as_bytes(), false).unwrap();
        assert_eq!(x, ndarray::array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn header_skipped() {
        let x = parse_csv("a,b\n1,2\n3,4\n".as_bytes(), true).unwrap();
        assert_eq!(x.dim(), (2, 2));
        assert_eq!(x[[0, 0]], 1.0);
    }

    #[test]
    fn bad_cell_reports_position() {
        let err = parse_csv("1,2\n3,4\n5,abc\n".as_bytes(), false).unwrap_err();
        match err {
            DataError::Parse { row, col, cell } => {
                assert_eq!((row, col), (3, 2));
                assert_eq!(cell, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = parse_csv("1\nabc\n".as_bytes(), false)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("row 2") && msg.contains("column 1"), "{msg}");
    }

    #[test]
    fn ragged_and_non_finite() {
        assert!(matches!(
            parse_csv("1,2\n3\n".as_bytes(), false),
            Err(DataError::Ragged {
                row: 2,
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            parse_csv("1,NaN\n".as_bytes(), false),
            Err(DataError::NonFinite { row: 1, col: 2, .. })
        ));
        assert!(matches!(
            parse_csv("inf\n".as_bytes(), false),
            Err(DataError::NonFinite { .. })
        ));
        assert!(matches!(
            parse_csv("".as_bytes(), false),
            Err(DataError::Empty)
        ));
    }

    #[test]
    fn labels_parse() {
        assert_eq!(
            parse_labels("0\n2\n\n1\n".as_bytes()).unwrap(),
            vec![0, 2, 1]
        );
        assert!(matches!(
            parse_labels("0\n-1\n".as_bytes()),
            Err(DataError::Label { line: 2, .. })
        ));
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let feats = dir.path().join("x.csv");
        let labs = dir.path().join("y.txt");
        std::fs::File::create(&feats)
            .unwrap()
            .write_all(b"0.5, 1.5\n-2e3,4\n")
            .unwrap();
        std::fs::write(&labs, "1\n0\n").unwrap();
        let b = load_csv(&feats, false).unwrap();
        let b = b.with_labels(load_labels(&labs).unwrap()).unwrap();
        assert_eq!(b.features[[1, 0]], -2000.0);
        assert_eq!(b.meta.classes, Some(2));
        assert!(matches!(
            load_csv(dir.path().join("missing.csv"), false),
            Err(DataError::Io { .. })
        ));
    }
}
