//! Classifier checkpoints (ISPW) and descriptor files (ISPE).
//!
//! ISPW: `"ISPW" | version u32 | K u32 | c u32 | K*c f32` (row-major).
//!
//! ISPE: `"ISPE" | version u32 | n u32 | parts u32 | c u32`, then `n` records of
//! `image_id u32 | person_id u32 | camera_id u32 | parts u8 visibility |
//! parts*c f32 part features | c f32 foreground | c f32 global`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Descriptor, PartClassifier};
use crate::binio::{
    dim_u32, expect_eof, read_bytes, read_f32s, read_header, read_u32, write_f32s, write_header, write_u32,
};
use crate::error::{validation, Result};

const ISPW_MAGIC: &[u8; 4] = b"ISPW";
const ISPE_MAGIC: &[u8; 4] = b"ISPE";

pub fn write_classifier<W: Write>(out: &mut W, clf: &PartClassifier) -> Result<()> {
    write_header(out, ISPW_MAGIC)?;
    write_u32(out, dim_u32(clf.k(), "K")?)?;
    write_u32(out, dim_u32(clf.c(), "c")?)?;
    write_f32s(out, clf.weights().iter().map(|&w| w as f32))?;
    Ok(())
}

pub fn read_classifier<R: Read>(input: &mut R) -> Result<PartClassifier> {
    read_header(input, ISPW_MAGIC)?;
    let k = read_u32(input, "K")? as usize;
    let c = read_u32(input, "c")? as usize;
    let w = read_f32s(input, k * c, "weights")?;
    expect_eof(input)?;
    PartClassifier::from_weights(k, c, w.into_iter().map(f64::from).collect())
}

pub fn save_classifier(clf: &PartClassifier, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_classifier(&mut out, clf)?;
    out.flush()?;
    Ok(())
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<PartClassifier> {
    read_classifier(&mut BufReader::new(File::open(path)?))
}

pub fn write_descriptors<W: Write>(out: &mut W, descs: &[Descriptor]) -> Result<()> {
    let (parts, c) = descs.first().map_or((0, 0), |d| (d.parts(), d.dim()));
    for d in descs {
        if d.parts() != parts || d.dim() != c || d.visibility.len() != parts {
            return Err(validation!("descriptor {} does not match parts={parts} c={c}", d.image_id));
        }
    }
    write_header(out, ISPE_MAGIC)?;
    write_u32(out, dim_u32(descs.len(), "n")?)?;
    write_u32(out, dim_u32(parts, "parts")?)?;
    write_u32(out, dim_u32(c, "c")?)?;
    for d in descs {
        write_u32(out, d.image_id)?;
        write_u32(out, d.person_id)?;
        write_u32(out, d.camera_id)?;
        out.write_all(&d.visibility.iter().map(|&v| u8::from(v)).collect::<Vec<_>>())?;
        let feats = d.part_feats.iter().flatten().chain(&d.fg_feat).chain(&d.global_feat);
        write_f32s(out, feats.map(|&v| v as f32))?;
    }
    Ok(())
}

pub fn read_descriptors<R: Read>(input: &mut R) -> Result<Vec<Descriptor>> {
    read_header(input, ISPE_MAGIC)?;
    let n = read_u32(input, "n")? as usize;
    let parts = read_u32(input, "parts")? as usize;
    let c = read_u32(input, "c")? as usize;
    let mut descs = Vec::with_capacity(n);
    for i in 0..n {
        let image_id = read_u32(input, "image_id")?;
        let person_id = read_u32(input, "person_id")?;
        let camera_id = read_u32(input, "camera_id")?;
        let vis = read_bytes(input, parts, "visibility")?;
        if let Some(&b) = vis.iter().find(|&&b| b > 1) {
            return Err(validation!("descriptor record {i}: visibility byte {b}"));
        }
        let feats: Vec<f64> = read_f32s(input, (parts + 2) * c, "features")?.into_iter().map(f64::from).collect();
        if feats.iter().any(|v| !v.is_finite()) {
            return Err(validation!("descriptor record {i}: non-finite feature"));
        }
        let mut chunks = feats.chunks_exact(c.max(1)).map(<[f64]>::to_vec);
        let part_feats: Vec<Vec<f64>> = chunks.by_ref().take(parts).collect();
        let fg_feat = chunks.next().unwrap_or_default();
        let global_feat = chunks.next().unwrap_or_default();
        descs.push(Descriptor {
            image_id,
            person_id,
            camera_id,
            part_feats,
            fg_feat,
            global_feat,
            visibility: vis.into_iter().map(|b| b == 1).collect(),
        });
    }
    expect_eof(input)?;
    Ok(descs)
}

pub fn save_descriptors(descs: &[Descriptor], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_descriptors(&mut out, descs)?;
    out.flush()?;
    Ok(())
}

pub fn load_descriptors(path: impl AsRef<Path>) -> Result<Vec<Descriptor>> {
    read_descriptors(&mut BufReader::new(File::open(path)?))
}
