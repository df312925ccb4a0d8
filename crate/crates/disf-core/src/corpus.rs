//! Embedding corpus container and on-disk formats.
//!
//! Binary layout (little-endian): magic `DISF`, u32 version (currently 1),
//! u32 feature dimension d, u64 row count n, then `n*d` IEEE-754 f32 values
//! in row-major order. Ids travel in a `<file>.ids` sidecar holding n
//! newline-terminated UTF-8 lines. A JSONL alternative carries one
//! `{"id": ..., "embedding": [...]}` object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

pub const DISF_MAGIC: [u8; 4] = *b"DISF";
pub const DISF_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Sample ids paired with a dense `n x d` f32 feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCorpus {
    ids: Vec<String>,
    features: Vec<f32>,
    n: usize,
    d: usize,
}

impl EmbeddingCorpus {
    /// Validating constructor: id/feature counts line up, d >= 2, ids are
    /// unique, every entry is finite.
    pub fn new(ids: Vec<String>, features: Vec<f32>, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Validation(format!(
                "feature dimension must be at least 2, got {d}"
            )));
        }
        if features.len() != ids.len() * d {
            return Err(Error::Validation(format!(
                "{} feature values do not match {} ids at dimension {d}",
                features.len(),
                ids.len()
            )));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at flat offset {bad}"
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate id {id:?}")));
            }
        }
        let n = ids.len();
        Ok(EmbeddingCorpus {
            ids,
            features,
            n,
            d,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Widened copy of the selected rows, in the given order.
    pub fn gather_f64(&self, indices: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend(self.row(i).iter().map(|&v| f64::from(v)));
        }
        RowMatrix::from_flat(data, indices.len(), self.d)
            .expect("gathered rows share the corpus dimension")
    }

    /// Widened copy of the full matrix.
    pub fn all_rows_f64(&self) -> RowMatrix {
        let data = self.features.iter().map(|&v| f64::from(v)).collect();
        RowMatrix::from_flat(data, self.n, self.d).expect("corpus buffer is rectangular")
    }
}

/// Sidecar path: the embeddings file name with `.ids` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".ids");
    PathBuf::from(os)
}

/// Write the binary format plus its id sidecar. Rereading reproduces the
/// corpus bit for bit.
pub fn write_embeddings(corpus: &EmbeddingCorpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    emit(&DISF_MAGIC)?;
    emit(&DISF_VERSION.to_le_bytes())?;
    emit(&(corpus.dim() as u32).to_le_bytes())?;
    emit(&(corpus.len() as u64).to_le_bytes())?;
    for v in corpus.features() {
        emit(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let ids_path = sidecar_path(path);
    let file = File::create(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let mut w = BufWriter::new(file);
    for id in corpus.ids() {
        w.write_all(id.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(&ids_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&ids_path, e))?;
    Ok(())
}

/// Read a corpus from the binary format or, failing the magic check, JSONL.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingCorpus> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let got = read_up_to(&mut file, &mut magic).map_err(|e| Error::io(path, e))?;
    if got == 4 && magic == DISF_MAGIC {
        read_binary(path, file)
    } else {
        read_jsonl(path)
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

fn read_binary(path: &Path, mut file: File) -> Result<EmbeddingCorpus> {
    let mut header = [0u8; HEADER_LEN - 4];
    let got = read_up_to(&mut file, &mut header).map_err(|e| Error::io(path, e))?;
    if got < header.len() {
        return Err(Error::Truncated(format!(
            "{}: header ends after {} of {HEADER_LEN} bytes",
            path.display(),
            got + 4
        )));
    }
    let version = u32::from_le_bytes(header[0..4].try_into().unwrap());
    if version != DISF_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;

    let payload_len = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("{}: header overflows payload size", path.display())))?;
    let mut payload = vec![0u8; payload_len];
    let got = read_up_to(&mut file, &mut payload).map_err(|e| Error::io(path, e))?;
    if got < payload_len {
        return Err(Error::Truncated(format!(
            "{}: payload holds {got} of {payload_len} bytes",
            path.display()
        )));
    }
    let features: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let ids_path = sidecar_path(path);
    let ids = read_id_lines(&ids_path)?;
    if ids.len() != n {
        return Err(Error::IdMismatch(format!(
            "{}: {} ids for {n} rows",
            ids_path.display(),
            ids.len()
        )));
    }
    EmbeddingCorpus::new(ids, features, d)
}

/// Newline-terminated UTF-8 ids, one per line.
pub fn read_id_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut ids = Vec::new();
    for line in reader.lines() {
        ids.push(line.map_err(|e| Error::io(path, e))?);
    }
    Ok(ids)
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    embedding: Vec<f64>,
}

fn read_jsonl(path: &Path) -> Result<EmbeddingCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut ids = Vec::new();
    let mut features = Vec::new();
    let mut d = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        match d {
            None => d = Some(record.embedding.len()),
            Some(d) if d != record.embedding.len() => {
                return Err(Error::Validation(format!(
                    "{}:{}: embedding length {} disagrees with earlier {d}",
                    path.display(),
                    lineno + 1,
                    record.embedding.len()
                )));
            }
            _ => {}
        }
        ids.push(record.id);
        features.extend(record.embedding.iter().map(|&v| v as f32));
    }
    let d = d.ok_or_else(|| Error::Format(format!("{}: no records", path.display())))?;
    EmbeddingCorpus::new(ids, features, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_corpus() -> EmbeddingCorpus {
        EmbeddingCorpus::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            2,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.disf");
        let corpus = small_corpus();
        write_embeddings(&corpus, &path).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back, corpus);
    }

    #[test]
    fn file_size_is_header_plus_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.disf");
        write_embeddings(&small_corpus(), &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len as usize, HEADER_LEN + 3 * 2 * 4);
    }

    #[test]
    fn empty_corpus_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.disf");
        let corpus = EmbeddingCorpus::new(vec![], vec![], 2).unwrap();
        write_embeddings(&corpus, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, HEADER_LEN);
        assert_eq!(std::fs::metadata(sidecar_path(&path)).unwrap().len(), 0);
        let back = read_embeddings(&path).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.disf");
        write_embeddings(&small_corpus(), &path).unwrap();
        // Chop one byte off the 24-byte payload.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        match read_embeddings(&path) {
            Err(Error::Truncated(_)) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_version_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ver.disf");
        write_embeddings(&small_corpus(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        match read_embeddings(&path) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn id_count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.disf");
        write_embeddings(&small_corpus(), &path).unwrap();
        std::fs::write(sidecar_path(&path), "a\nb\n").unwrap();
        match read_embeddings(&path) {
            Err(Error::IdMismatch(_)) => {}
            other => panic!("expected id mismatch, got {other:?}"),
        }
    }

    #[test]
    fn nan_payload_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.disf");
        write_embeddings(&small_corpus(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match read_embeddings(&path) {
            Err(Error::Validation(_)) => {}
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_fallback_parses_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"x\",\"embedding\":[1.0,2.0]}\n{\"id\":\"y\",\"embedding\":[3.0,4.0]}\n",
        )
        .unwrap();
        let corpus = read_embeddings(&path).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.dim(), 2);
        assert_eq!(corpus.id(1), "y");
        assert_eq!(corpus.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn jsonl_ragged_dimensions_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"x\",\"embedding\":[1.0,2.0]}\n{\"id\":\"y\",\"embedding\":[3.0]}\n",
        )
        .unwrap();
        assert!(read_embeddings(&path).is_err());
    }

    #[test]
    fn duplicate_ids_fail_validation() {
        let r = EmbeddingCorpus::new(
            vec!["a".into(), "a".into()],
            vec![1.0, 2.0, 3.0, 4.0],
            2,
        );
        assert!(r.is_err());
    }
}
