//! Single-file binary dataset container.
//!
//! Layout (all little-endian, packed):
//!
//! ```text
//! magic "CFPF" | u32 version | u32 aps | u32 users | u32 pilot_len
//! | u64 count | u8 encoding (0 linear, 1 dB) | u64 master_seed
//! ```
//!
//! followed by `count` fixed-width records:
//!
//! ```text
//! users x u32 pilot orders | users*aps x f64 fading (user-major)
//! | users x f64 labels | f64 objective | u64 sample seed
//! ```
//!
//! The writer always emits dB fading (matching the in-memory input layout);
//! the reader accepts both encodings and converts linear fading to dB.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use cfpf_core::dataset::Sample;
use cfpf_core::Mat;

pub const MAGIC: [u8; 4] = *b"CFPF";
pub const VERSION: u32 = 1;

pub const ENCODING_LINEAR: u8 = 0;
pub const ENCODING_DB: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub aps: u32,
    pub users: u32,
    pub pilot_len: u32,
    pub count: u64,
    pub encoding: u8,
    pub master_seed: u64,
}

impl DatasetHeader {
    pub fn record_len(&self) -> usize {
        let users = self.users as usize;
        let aps = self.aps as usize;
        4 * users + 8 * users * aps + 8 * users + 8 + 8
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

/// Writes a complete dataset. Sample inputs must already be in the dB
/// layout produced by `dataset::build_input`.
pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &[Sample]) -> Result<()> {
    if samples.len() as u64 != header.count {
        bail!(
            "header count {} does not match {} samples",
            header.count,
            samples.len()
        );
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    write_u32(&mut w, header.version)?;
    write_u32(&mut w, header.aps)?;
    write_u32(&mut w, header.users)?;
    write_u32(&mut w, header.pilot_len)?;
    write_u64(&mut w, header.count)?;
    w.write_all(&[header.encoding])?;
    write_u64(&mut w, header.master_seed)?;

    let users = header.users as usize;
    let aps = header.aps as usize;
    for sample in samples {
        if sample.input.rows() != users || sample.input.cols() != aps + 1 {
            bail!("sample shape does not match header");
        }
        for k in 0..users {
            write_u32(&mut w, sample.input.at(k, 0) as u32)?;
        }
        for k in 0..users {
            for m in 0..aps {
                let v = sample.input.at(k, m + 1);
                if !v.is_finite() {
                    bail!("non-finite fading value in sample");
                }
                write_f64(&mut w, v)?;
            }
        }
        for &p in &sample.label {
            write_f64(&mut w, p)?;
        }
        write_f64(&mut w, sample.objective)?;
        write_u64(&mut w, sample.seed)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset file back into memory.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Sample>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let magic = read_exact::<4>(&mut r)?;
    if magic != MAGIC {
        bail!("not a dataset file (bad magic)");
    }
    let header = DatasetHeader {
        version: read_u32(&mut r)?,
        aps: read_u32(&mut r)?,
        users: read_u32(&mut r)?,
        pilot_len: read_u32(&mut r)?,
        count: read_u64(&mut r)?,
        encoding: read_exact::<1>(&mut r)?[0],
        master_seed: read_u64(&mut r)?,
    };
    if header.version != VERSION {
        bail!("unsupported dataset version {}", header.version);
    }
    if header.encoding != ENCODING_LINEAR && header.encoding != ENCODING_DB {
        bail!("unknown fading encoding {}", header.encoding);
    }

    let users = header.users as usize;
    let aps = header.aps as usize;
    let mut samples = Vec::with_capacity(header.count as usize);
    for _ in 0..header.count {
        let mut input = Mat::zeros(users, aps + 1);
        for k in 0..users {
            let pov = read_u32(&mut r)?;
            if pov == 0 || pov > header.pilot_len {
                bail!("pilot order {pov} outside 1..={}", header.pilot_len);
            }
            *input.at_mut(k, 0) = pov as f64;
        }
        for k in 0..users {
            for m in 0..aps {
                let raw = read_f64(&mut r)?;
                if !raw.is_finite() {
                    bail!("non-finite fading value in record");
                }
                let db = if header.encoding == ENCODING_DB {
                    raw
                } else {
                    10.0 * raw.log10()
                };
                *input.at_mut(k, m + 1) = db;
            }
        }
        let mut label = Vec::with_capacity(users);
        for _ in 0..users {
            let p = read_f64(&mut r)?;
            if !p.is_finite() {
                bail!("non-finite label value");
            }
            label.push(p);
        }
        let objective = read_f64(&mut r)?;
        let seed = read_u64(&mut r)?;
        samples.push(Sample {
            input,
            label,
            seed,
            objective,
        });
    }
    // Trailing bytes mean the count lied.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        bail!("trailing bytes after {} records", header.count);
    }
    Ok((header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy_samples(n: usize, users: usize, aps: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let mut input = Mat::zeros(users, aps + 1);
                for k in 0..users {
                    *input.at_mut(k, 0) = (k % 2 + 1) as f64;
                    for m in 0..aps {
                        *input.at_mut(k, m + 1) = -80.0 - (i + k + m) as f64 * 0.37;
                    }
                }
                Sample {
                    input,
                    label: (0..users)
                        .map(|k| 0.1 + 0.8 * (k as f64 / users as f64))
                        .collect(),
                    seed: 1000 + i as u64,
                    objective: 3.5 - i as f64 * 0.01,
                }
            })
            .collect()
    }

    fn toy_header(n: usize, users: usize, aps: usize) -> DatasetHeader {
        DatasetHeader {
            version: VERSION,
            aps: aps as u32,
            users: users as u32,
            pilot_len: 2,
            count: n as u64,
            encoding: ENCODING_DB,
            master_seed: 99,
        }
    }

    #[test]
    fn round_trip_preserves_samples_and_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("toy.cfpf");
        let samples = toy_samples(5, 3, 4);
        let header = toy_header(5, 3, 4);
        write_dataset(&path, &header, &samples).unwrap();

        let (read_header, read_samples) = read_dataset(&path).unwrap();
        assert_eq!(read_header, header);
        assert_eq!(read_samples, samples);

        // Re-writing what was read is byte-identical.
        let path2 = dir.path().join("toy2.cfpf");
        write_dataset(&path2, &read_header, &read_samples).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn header_size_matches_record_math() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("toy.cfpf");
        let samples = toy_samples(3, 2, 5);
        let header = toy_header(3, 2, 5);
        write_dataset(&path, &header, &samples).unwrap();
        let expected = 4 + 4 * 4 + 8 + 1 + 8 + 3 * header.record_len();
        assert_eq!(std::fs::read(&path).unwrap().len(), expected);
    }

    #[test]
    fn rejects_corrupt_magic_and_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("toy.cfpf");
        let samples = toy_samples(2, 2, 3);
        write_dataset(&path, &toy_header(2, 2, 3), &samples).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.path().join("bad.cfpf");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(read_dataset(&bad).is_err());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&bad, &bytes).unwrap();
        assert!(read_dataset(&bad).is_err());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&bad, &bytes).unwrap();
        assert!(read_dataset(&bad).is_err());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("toy.cfpf");
        let samples = toy_samples(2, 2, 3);
        let header = toy_header(3, 2, 3);
        assert!(write_dataset(&path, &header, &samples).is_err());
    }
}
