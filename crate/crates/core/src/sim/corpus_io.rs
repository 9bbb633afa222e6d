//! Corpus files.
//!
//! Binary (little-endian): magic `ORFF`, version `u16`, sample count `u32`,
//! tx count `u16`; then one record per sample: tx id `u16` followed by 512
//! IEEE-754 32-bit floats row-major (I, Q per row). A JSON sidecar at
//! `<path>.manifest.json` carries the generation config, seed, profiles and
//! per-transmitter counts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{Corpus, CorpusManifest, SimError, SAMPLE_LEN};

const MAGIC: &[u8; 4] = b"ORFF";
const VERSION: u16 = 1;

pub(crate) fn manifest_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), SimError> {
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(corpus.samples.len() as u32).to_le_bytes()).map_err(io_err)?;
    let distinct: std::collections::BTreeSet<u16> =
        corpus.samples.iter().map(|(_, id)| *id).collect();
    w.write_all(&(distinct.len() as u16).to_le_bytes()).map_err(io_err)?;
    for (sample, tx_id) in &corpus.samples {
        w.write_all(&tx_id.to_le_bytes()).map_err(io_err)?;
        for row in sample.rows() {
            w.write_all(&row[0].to_le_bytes()).map_err(io_err)?;
            w.write_all(&row[1].to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;

    let json = serde_json::to_string_pretty(&corpus.manifest)
        .map_err(|e| SimError::Io(e.to_string()))?;
    fs::write(manifest_path(path), json).map_err(io_err)?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus, SimError> {
    let file = fs::File::open(path).map_err(io_err)?;
    let mut r = Offset::new(BufReader::new(file));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SimError::CorruptCorpus { offset: 0 });
    }
    let version = r.read_u16()?;
    if version != VERSION {
        return Err(SimError::CorruptCorpus { offset: 4 });
    }
    let sample_count = r.read_u32()? as usize;
    let tx_count = r.read_u16()? as usize;

    let mut samples = Vec::with_capacity(sample_count);
    let mut float_buf = vec![0.0f32; SAMPLE_LEN * 2];
    for _ in 0..sample_count {
        let tx_id = r.read_u16()?;
        for v in float_buf.iter_mut() {
            *v = r.read_f32()?;
        }
        let sample = super::SignalSample::from_flat(&float_buf)
            .map_err(|_| SimError::CorruptCorpus { offset: r.offset })?;
        samples.push((sample, tx_id));
    }
    // trailing bytes mean the header undercounted
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe).map_err(io_err)? != 0 {
        return Err(SimError::CorruptCorpus { offset: r.offset });
    }

    let distinct: std::collections::BTreeSet<u16> = samples.iter().map(|(_, id)| *id).collect();
    if distinct.len() != tx_count {
        return Err(SimError::CorruptCorpus { offset: 10 });
    }

    let manifest_file = manifest_path(path);
    let json = fs::read_to_string(&manifest_file).map_err(|e| {
        SimError::Io(format!("manifest {}: {e}", manifest_file.display()))
    })?;
    let manifest: CorpusManifest =
        serde_json::from_str(&json).map_err(|e| SimError::Io(format!("manifest: {e}")))?;

    let mut counts: BTreeMap<u16, u32> = BTreeMap::new();
    for (_, id) in &samples {
        *counts.entry(*id).or_insert(0) += 1;
    }
    if counts != manifest.per_tx_counts {
        return Err(SimError::ManifestMismatch(
            "per-transmitter counts in manifest do not match corpus file".into(),
        ));
    }

    let corpus = Corpus { samples, manifest };
    corpus.validate()?;
    Ok(corpus)
}

/// Reader that tracks the byte offset for corruption reports.
struct Offset<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Offset<R> {
    fn new(inner: R) -> Self {
        Offset { inner, offset: 0 }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), SimError> {
        self.inner
            .read_exact(buf)
            .map_err(|_| SimError::CorruptCorpus { offset: self.offset })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u16(&mut self) -> Result<u16, SimError> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self) -> Result<u32, SimError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f32(&mut self) -> Result<f32, SimError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }
}

fn io_err(e: std::io::Error) -> SimError {
    SimError::Io(e.to_string())
}
