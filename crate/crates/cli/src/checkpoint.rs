//! Self-contained model checkpoint.
//!
//! Layout (little-endian, packed):
//!
//! ```text
//! magic "CFNN" | u32 version | u32 growth | u32 dense_layers | u32 aps
//! | u32 users | u32 pilot_len | u8 inner activation | u8 output activation
//! | aps x f64 feature means | aps x f64 feature stds | f64 pov scale
//! | total x f64 parameters (declaration order)
//! ```
//!
//! The embedded normalization statistics make a checkpoint sufficient for
//! inference on raw realizations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use cfpf_core::dataset::NormalizationStats;
use cfpf_core::rdn::{count_parameters, Activation, OutputActivation, ParameterTensors, RdnConfig};

pub const MAGIC: [u8; 4] = *b"CFNN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParameterTensors,
    pub stats: NormalizationStats,
}

fn activation_flag(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Relu => 1,
    }
}

fn output_flag(a: OutputActivation) -> u8 {
    match a {
        OutputActivation::Sigmoid => 0,
        OutputActivation::TanhRescaled => 1,
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let cfg = &ckpt.params.cfg;
    if ckpt.stats.mean.len() != cfg.aps || ckpt.stats.std.len() != cfg.aps {
        bail!("normalization statistics do not match the model geometry");
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [
        cfg.growth,
        cfg.dense_layers,
        cfg.aps,
        cfg.users,
        cfg.pilot_len,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[
        activation_flag(cfg.inner_activation),
        output_flag(cfg.output_activation),
    ])?;
    for &v in ckpt.stats.mean.iter().chain(&ckpt.stats.std) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ckpt.stats.pov_scale.to_le_bytes())?;
    for &v in ckpt.params.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        bail!("not a checkpoint file (bad magic)");
    }
    let mut u32buf = [0u8; 4];
    let mut next_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = next_u32(&mut r)?;
    if version != VERSION {
        bail!("unsupported checkpoint version {version}");
    }
    let growth = next_u32(&mut r)? as usize;
    let dense_layers = next_u32(&mut r)? as usize;
    let aps = next_u32(&mut r)? as usize;
    let users = next_u32(&mut r)? as usize;
    let pilot_len = next_u32(&mut r)? as usize;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let inner_activation = match flags[0] {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        f => bail!("unknown inner activation flag {f}"),
    };
    let output_activation = match flags[1] {
        0 => OutputActivation::Sigmoid,
        1 => OutputActivation::TanhRescaled,
        f => bail!("unknown output activation flag {f}"),
    };
    let cfg = RdnConfig {
        growth,
        dense_layers,
        aps,
        users,
        pilot_len,
        inner_activation,
        output_activation,
    };

    let mut f64buf = [0u8; 8];
    let mut next_f64 = |r: &mut BufReader<File>| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mean: Vec<f64> = (0..aps).map(|_| next_f64(&mut r)).collect::<Result<_>>()?;
    let std: Vec<f64> = (0..aps).map(|_| next_f64(&mut r)).collect::<Result<_>>()?;
    let pov_scale = next_f64(&mut r)?;
    // NaN or nonpositive both disqualify the statistics.
    if std.iter().any(|&s| s.is_nan() || s <= 0.0) || pov_scale.is_nan() || pov_scale <= 0.0 {
        bail!("corrupt normalization statistics");
    }

    let total = count_parameters(&cfg).total;
    let data: Vec<f64> = (0..total)
        .map(|_| next_f64(&mut r))
        .collect::<Result<_>>()?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        bail!("trailing bytes after parameter tensors");
    }
    let params = ParameterTensors::from_flat(cfg, data)
        .map_err(|e| anyhow::anyhow!("parameter buffer: {e}"))?;
    Ok(Checkpoint {
        params,
        stats: NormalizationStats {
            mean,
            std,
            pov_scale,
        },
    })
}
