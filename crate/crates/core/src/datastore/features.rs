//! Per-modality feature files.
//!
//! Binary (`CBF1`, little-endian):
//!
//! ```text
//! "CBF1" | u16 version | u8 modality (0 = rgb, 1 = depth) | u32 dim | u64 count
//!   per record: u64 sample_id | dim × f32
//! u32 CRC32 of all preceding bytes
//! ```
//!
//! CSV: header `id,v0,...,v{dim-1}`, one sample per row.

use std::collections::HashSet;
use std::path::Path;

use crate::codec::{read_file, write_atomic, Reader, Writer};
use crate::error::{Error, Modality, Result};
use crate::model::FeatureVector;

pub const FEATURE_MAGIC: [u8; 4] = *b"CBF1";
pub const FEATURE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Cbf,
    Csv,
}

impl FeatureFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FeatureFormat::Cbf => "cbf",
            FeatureFormat::Csv => "csv",
        }
    }
}

/// All samples of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    modality: Modality,
    dim: usize,
    records: Vec<(u64, FeatureVector)>,
}

impl FeatureFile {
    pub fn new(modality: Modality, dim: usize, records: Vec<(u64, FeatureVector)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidValue("feature dimension must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for (id, v) in &records {
            if !seen.insert(*id) {
                return Err(Error::DuplicateId(*id));
            }
            if v.dim() != dim {
                return Err(Error::SampleDimension {
                    id: *id,
                    modality,
                    expected: dim,
                    found: v.dim(),
                });
            }
        }
        Ok(Self {
            modality,
            dim,
            records,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[(u64, FeatureVector)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<(u64, FeatureVector)> {
        self.records
    }

    pub fn encode_cbf(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(24 + self.records.len() * (8 + 4 * self.dim));
        w.bytes(&FEATURE_MAGIC);
        w.u16(FEATURE_VERSION);
        w.u8(self.modality.tag());
        w.u32(self.dim as u32);
        w.u64(self.records.len() as u64);
        for (id, v) in &self.records {
            w.u64(*id);
            for &x in v.as_slice() {
                w.f32(x);
            }
        }
        w.finish()
    }

    pub fn decode_cbf(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, FEATURE_MAGIC, FEATURE_VERSION)?;
        let tag = r.u8()?;
        let modality = Modality::from_tag(tag).ok_or(Error::UnknownModality(tag))?;
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        if dim == 0 {
            return Err(Error::InvalidValue("feature dimension must be positive".into()));
        }
        let record_len = 8 + 4 * dim;
        let mut records = Vec::with_capacity(count.min(r.remaining() / record_len));
        for _ in 0..count {
            let id = r.u64()?;
            let values = r.f32_vec(dim)?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { id });
            }
            records.push((id, FeatureVector::new(values)?));
        }
        r.finish()?;
        Self::new(modality, dim, records)
    }

    pub fn encode_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = Vec::with_capacity(self.dim + 1);
        header.push("id".to_string());
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        w.write_record(&header).map_err(csv_write_err)?;
        let mut row = Vec::with_capacity(self.dim + 1);
        for (id, v) in &self.records {
            row.clear();
            row.push(id.to_string());
            // `{}` on f32 prints the shortest string that parses back to the
            // same bits.
            row.extend(v.as_slice().iter().map(|x| x.to_string()));
            w.write_record(&row).map_err(csv_write_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidValue(format!("csv: {e}")))
    }

    /// Parses the CSV encoding. CSV carries no modality tag, so the caller
    /// supplies it.
    pub fn decode_csv(data: &[u8], modality: Modality) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(data);
        let header = rdr.headers().map_err(|e| csv_err(e, "header"))?.clone();
        if header.get(0) != Some("id") {
            return Err(Error::Parse {
                location: "header".into(),
                message: "first column must be `id`".into(),
            });
        }
        let dim = header.len() - 1;
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("v{i}") {
                return Err(Error::Parse {
                    location: "header".into(),
                    message: format!("column {} should be `v{i}`, found `{name}`", i + 1),
                });
            }
        }
        let mut records = Vec::new();
        for (row_idx, rec) in rdr.records().enumerate() {
            let row = row_idx + 1;
            let rec = rec.map_err(|e| csv_err(e, &format!("row {row}")))?;
            if rec.len() != dim + 1 {
                return Err(Error::RowDimension {
                    row,
                    expected: dim,
                    found: rec.len().saturating_sub(1),
                });
            }
            let id: u64 = rec[0].trim().parse().map_err(|e| Error::Parse {
                location: format!("row {row}"),
                message: format!("bad id {:?}: {e}", &rec[0]),
            })?;
            let mut values = Vec::with_capacity(dim);
            for field in rec.iter().skip(1) {
                let v: f32 = field.trim().parse().map_err(|e| Error::Parse {
                    location: format!("row {row} (id {id})"),
                    message: format!("bad value {field:?}: {e}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { id });
                }
                values.push(v);
            }
            records.push((id, FeatureVector::new(values)?));
        }
        Self::new(modality, dim, records)
    }
}

fn csv_err(e: csv::Error, location: &str) -> Error {
    Error::Parse {
        location: location.to_owned(),
        message: e.to_string(),
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::InvalidValue(format!("csv: {e}"))
}

/// Reads a feature file, detecting the encoding from its first bytes.
///
/// For binary files the stored modality tag must equal `expected`; CSV
/// files are tagged with `expected`.
pub fn read_features(path: impl AsRef<Path>, expected: Modality) -> Result<FeatureFile> {
    let path = path.as_ref();
    let data = read_file(path)?;
    let file = if data.starts_with(&FEATURE_MAGIC[..3]) {
        FeatureFile::decode_cbf(&data)?
    } else {
        FeatureFile::decode_csv(&data, expected)?
    };
    if file.modality != expected {
        return Err(Error::ModalityMismatch {
            expected,
            found: file.modality,
        });
    }
    Ok(file)
}

pub fn write_features(path: impl AsRef<Path>, file: &FeatureFile, format: FeatureFormat) -> Result<()> {
    let bytes = match format {
        FeatureFormat::Cbf => file.encode_cbf(),
        FeatureFormat::Csv => file.encode_csv()?,
    };
    write_atomic(path.as_ref(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f32]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn sample_file() -> FeatureFile {
        FeatureFile::new(
            Modality::Depth,
            3,
            vec![
                (42, fv(&[0.1, -2.5, 1e-7])),
                (7, fv(&[3.0, 0.0, -0.0])),
                (u64::MAX, fv(&[f32::MAX, f32::MIN_POSITIVE, 1.0 / 3.0])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn cbf_round_trip_and_layout() {
        let f = sample_file();
        let bytes = f.encode_cbf();
        assert_eq!(&bytes[..4], b"CBF1");
        assert_eq!(bytes[6], 1);
        assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[11..19].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 19 + 3 * (8 + 12) + 4);
        assert_eq!(FeatureFile::decode_cbf(&bytes).unwrap(), f);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let f = sample_file();
        let text = f.encode_csv().unwrap();
        let back = FeatureFile::decode_csv(&text, Modality::Depth).unwrap();
        for ((_, a), (_, b)) in f.records().iter().zip(back.records()) {
            let bits = |v: &FeatureVector| v.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert!(String::from_utf8(text).unwrap().starts_with("id,v0,v1,v2\n42,"));
    }

    #[test]
    fn short_csv_row_names_row() {
        let text = b"id,v0,v1,v2,v3\n1,0,0,0,0\n2,1,2,3\n";
        match FeatureFile::decode_csv(text, Modality::Rgb) {
            Err(Error::RowDimension {
                row: 2,
                expected: 4,
                found: 3,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_rejected_with_id() {
        let text = b"id,v0,v1\n5,0,NaN\n";
        assert!(matches!(
            FeatureFile::decode_csv(text, Modality::Rgb),
            Err(Error::NonFinite { id: 5 })
        ));

        let mut bytes = sample_file().encode_cbf();
        // First value of record 7 (second record).
        let off = 19 + 20 + 8;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            FeatureFile::decode_cbf(&bytes),
            Err(Error::NonFinite { id: 7 })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = b"id,v0\n1,0\n1,2\n";
        assert!(matches!(
            FeatureFile::decode_csv(text, Modality::Rgb),
            Err(Error::DuplicateId(1))
        ));
    }

    #[test]
    fn cbf_structural_errors_are_distinct() {
        let bytes = sample_file().encode_cbf();
        let mut bad = bytes.clone();
        bad[3] = b'0';
        assert!(matches!(FeatureFile::decode_cbf(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            FeatureFile::decode_cbf(&bad),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
        assert!(matches!(
            FeatureFile::decode_cbf(&bytes[..bytes.len() - 6]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[30] ^= 0x40;
        assert!(matches!(FeatureFile::decode_cbf(&bad), Err(Error::Checksum { .. })));
        let mut bad = bytes;
        bad[6] = 7;
        assert!(matches!(
            FeatureFile::decode_cbf(&bad),
            Err(Error::UnknownModality(7))
        ));
    }

    #[test]
    fn reader_detects_encoding_and_checks_modality() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample_file();
        let cbf = dir.path().join("d.cbf");
        let csv = dir.path().join("d.csv");
        write_features(&cbf, &f, FeatureFormat::Cbf).unwrap();
        write_features(&csv, &f, FeatureFormat::Csv).unwrap();
        assert_eq!(read_features(&cbf, Modality::Depth).unwrap(), f);
        assert_eq!(read_features(&csv, Modality::Depth).unwrap(), f);
        assert!(matches!(
            read_features(&cbf, Modality::Rgb),
            Err(Error::ModalityMismatch { .. })
        ));
    }
}
