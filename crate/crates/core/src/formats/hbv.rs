//! HBV1 volume file: magic "HBV1", dims u32[3] (S, H, W) little-endian, then
//! S*H*W f32 little-endian voxels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const HBV_MAGIC: &[u8; 4] = b"HBV1";

pub fn write_hbv(path: &Path, slices: usize, height: usize, width: usize, voxels: &[f32]) -> Result<()> {
    if voxels.len() != slices * height * width {
        return Err(Error::Dimension(format!(
            "HBV payload {} does not match {slices}x{height}x{width}",
            voxels.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(HBV_MAGIC)?;
    for d in [slices, height, width] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in voxels {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hbv(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != HBV_MAGIC {
        return Err(Error::Format(format!("{}: bad HBV magic", path.display())));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        *d = u32::from_le_bytes(buf) as usize;
    }
    let n = dims[0] * dims[1] * dims[2];
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload)?;
    let voxels = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dims[0], dims[1], dims[2], voxels))
}
