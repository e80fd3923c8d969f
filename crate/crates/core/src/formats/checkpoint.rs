//! HSCKPT1 checkpoint: named parameter tensors, optional Adam state, epoch
//! counter, and a training-stage tag. All integers little-endian; layout in
//! docs/FORMATS.md.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"HSCKPT1";
pub const CHECKPOINT_VERSION: u16 = 1;

/// In-memory checkpoint contents.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub stage: String,
    pub epoch: u32,
    pub params: BTreeMap<String, Tensor>,
    pub adam: Option<AdamSnapshot>,
}

#[derive(Debug, Clone)]
pub struct AdamSnapshot {
    pub cfg: AdamConfig,
    pub step_count: u64,
    pub slots: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn from_adam(adam: &Adam) -> AdamSnapshot {
        AdamSnapshot {
            cfg: adam.cfg,
            step_count: adam.step_count,
            slots: adam.slots.clone(),
        }
    }

    pub fn restore_adam(snap: &AdamSnapshot) -> Adam {
        let mut adam = Adam::new(snap.cfg);
        adam.step_count = snap.step_count;
        adam.slots = snap.slots.clone();
        adam
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        write_str(&mut w, &self.stage)?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in &self.params {
            write_str(&mut w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        match &self.adam {
            None => w.write_all(&[0u8])?,
            Some(a) => {
                w.write_all(&[1u8])?;
                for v in [a.cfg.beta1, a.cfg.beta2, a.cfg.eps, a.cfg.weight_decay] {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&a.step_count.to_le_bytes())?;
                w.write_all(&(a.slots.len() as u32).to_le_bytes())?;
                for (name, (m, v)) in &a.slots {
                    write_str(&mut w, name)?;
                    w.write_all(&(m.len() as u32).to_le_bytes())?;
                    for x in m {
                        w.write_all(&x.to_le_bytes())?;
                    }
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("{}: bad checkpoint magic", path.display())));
        }
        let version = read_u16(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let stage = read_str(&mut r)?;
        let epoch = read_u32(&mut r)?;
        let n_params = read_u32(&mut r)? as usize;
        let mut params = BTreeMap::new();
        for _ in 0..n_params {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let data = read_f32s(&mut r, n)?;
            params.insert(name, Tensor::from_vec(&shape, data)?);
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let adam = if flag[0] == 1 {
            let mut cfg = AdamConfig::default();
            cfg.beta1 = read_f32(&mut r)?;
            cfg.beta2 = read_f32(&mut r)?;
            cfg.eps = read_f32(&mut r)?;
            cfg.weight_decay = read_f32(&mut r)?;
            let step_count = read_u64(&mut r)?;
            let n_slots = read_u32(&mut r)? as usize;
            let mut slots = BTreeMap::new();
            for _ in 0..n_slots {
                let name = read_str(&mut r)?;
                let len = read_u32(&mut r)? as usize;
                let m = read_f32s(&mut r, len)?;
                let v = read_f32s(&mut r, len)?;
                slots.insert(name, (m, v));
            }
            Some(AdamSnapshot {
                cfg,
                step_count,
                slots,
            })
        } else {
            None
        };
        Ok(Checkpoint {
            stage,
            epoch,
            params,
            adam,
        })
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("string length {len} implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("invalid utf-8 string".into()))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
