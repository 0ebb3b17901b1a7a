//! ISPF (feature sets) and ISPL (label maps) files.
//!
//! ISPF: `"ISPF" | version u32 | n u32 | c u32 | h u32 | w u32`, then `n` records of
//! `image_id u32 | person_id u32 | camera_id u32 | h*w*c f32`.
//!
//! ISPL: `"ISPL" | version u32 | n u32 | h u32 | w u32 | K u32`, then `n` records of
//! `image_id u32 | person_id u32 | h*w u8`.
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureMap, FeatureMapSet, LabelMap, LabelSet, MapShape};
use crate::binio::{
    dim_u32, expect_eof, read_bytes, read_f32s, read_header, read_u32, write_f32s, write_header, write_u32,
};
use crate::error::{validation, Result};

const ISPF_MAGIC: &[u8; 4] = b"ISPF";
const ISPL_MAGIC: &[u8; 4] = b"ISPL";

pub fn write_feature_set<W: Write>(out: &mut W, set: &FeatureMapSet) -> Result<()> {
    let shape = set.shape();
    write_header(out, ISPF_MAGIC)?;
    write_u32(out, dim_u32(set.len(), "n")?)?;
    write_u32(out, dim_u32(shape.c, "c")?)?;
    write_u32(out, dim_u32(shape.h, "h")?)?;
    write_u32(out, dim_u32(shape.w, "w")?)?;
    for m in set.maps() {
        write_u32(out, m.image_id())?;
        write_u32(out, m.person_id())?;
        write_u32(out, m.camera_id())?;
        write_f32s(out, m.data().iter().copied())?;
    }
    Ok(())
}

pub fn read_feature_set<R: Read>(input: &mut R) -> Result<FeatureMapSet> {
    read_header(input, ISPF_MAGIC)?;
    let n = read_u32(input, "n")? as usize;
    let c = read_u32(input, "c")? as usize;
    let h = read_u32(input, "h")? as usize;
    let w = read_u32(input, "w")? as usize;
    if n == 0 {
        return Err(validation!("feature file declares zero maps"));
    }
    let shape = MapShape::new(c, h, w);
    let mut maps = Vec::with_capacity(n);
    for i in 0..n {
        let image_id = read_u32(input, "image_id")?;
        let person_id = read_u32(input, "person_id")?;
        let camera_id = read_u32(input, "camera_id")?;
        let data = read_f32s(input, shape.len(), &format!("payload of record {i}"))?;
        maps.push(FeatureMap::new(image_id, person_id, camera_id, shape, data)?);
    }
    expect_eof(input)?;
    FeatureMapSet::new(maps)
}

pub fn save_feature_set(set: &FeatureMapSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_feature_set(&mut out, set)?;
    out.flush()?;
    Ok(())
}

pub fn load_feature_set(path: impl AsRef<Path>) -> Result<FeatureMapSet> {
    read_feature_set(&mut BufReader::new(File::open(path)?))
}

pub fn write_label_set<W: Write>(out: &mut W, set: &LabelSet) -> Result<()> {
    let (h, w) = set.maps.first().map_or((0, 0), |m| (m.h, m.w));
    write_header(out, ISPL_MAGIC)?;
    write_u32(out, dim_u32(set.maps.len(), "n")?)?;
    write_u32(out, dim_u32(h, "h")?)?;
    write_u32(out, dim_u32(w, "w")?)?;
    write_u32(out, dim_u32(set.k, "K")?)?;
    for m in &set.maps {
        write_u32(out, m.image_id)?;
        write_u32(out, m.person_id)?;
        out.write_all(&m.labels)?;
    }
    Ok(())
}

pub fn read_label_set<R: Read>(input: &mut R) -> Result<LabelSet> {
    read_header(input, ISPL_MAGIC)?;
    let n = read_u32(input, "n")? as usize;
    let h = read_u32(input, "h")? as usize;
    let w = read_u32(input, "w")? as usize;
    let k = read_u32(input, "K")? as usize;
    let mut maps = Vec::with_capacity(n);
    for i in 0..n {
        let image_id = read_u32(input, "image_id")?;
        let person_id = read_u32(input, "person_id")?;
        let labels = read_bytes(input, h * w, &format!("labels of record {i}"))?;
        maps.push(LabelMap::new(image_id, person_id, h, w, labels)?);
    }
    expect_eof(input)?;
    LabelSet::new(k, maps)
}

pub fn save_label_set(set: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_label_set(&mut out, set)?;
    out.flush()?;
    Ok(())
}

pub fn load_label_set(path: impl AsRef<Path>) -> Result<LabelSet> {
    read_label_set(&mut BufReader::new(File::open(path)?))
}
