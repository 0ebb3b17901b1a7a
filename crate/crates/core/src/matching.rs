//! Visibility-aware aligned distance between descriptors.
//!
//! The distance between a query and a gallery descriptor averages the cosine
//! distances of the global feature, the foreground feature, and of every part
//! that is visible in both images. Parts hidden in either image do not
//! contribute.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{dim_u32, expect_eof, read_f32s, read_header, read_u32, write_f32s, write_header, write_u32};
use crate::error::{validation, Result};
use crate::parsing::{ConfidenceMaps, Descriptor};

const ISPD_MAGIC: &[u8; 4] = b"ISPD";

/// `l_k` for parts `1..K`: part `k` is visible iff it is the argmax of at least one pixel.
pub fn visibility_labels(conf: &ConfidenceMaps) -> Vec<bool> {
    let mut visible = vec![false; conf.k.saturating_sub(1)];
    for p in 0..conf.pixels() {
        let k = conf.argmax(p);
        if k > 0 {
            visible[k - 1] = true;
        }
    }
    visible
}

/// `1 - cos(u, v)` and whether a zero vector forced the orthogonal convention.
pub fn cosine_distance_flagged(u: &[f64], v: &[f64]) -> (f64, bool) {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu2: f64 = u.iter().map(|a| a * a).sum();
    let nv2: f64 = v.iter().map(|b| b * b).sum();
    if nu2 == 0.0 || nv2 == 0.0 {
        return (1.0, true);
    }
    // sqrt of the product keeps d(u, u) exactly 0
    let cos = (dot / (nu2 * nv2).sqrt()).clamp(-1.0, 1.0);
    (1.0 - cos, false)
}

/// Cosine distance; zero vectors are treated as orthogonal to everything (distance 1).
pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    cosine_distance_flagged(u, v).0
}

/// `(sum_k l_k^q l_k^g d_k + d_g + d_f) / (sum_k l_k^q l_k^g + 2)`.
pub fn aligned_distance(q: &Descriptor, g: &Descriptor) -> f64 {
    let mut num = cosine_distance(&q.global_feat, &g.global_feat) + cosine_distance(&q.fg_feat, &g.fg_feat);
    let mut den = 2.0;
    for (k, (fq, fg)) in q.part_feats.iter().zip(&g.part_feats).enumerate() {
        if q.visibility[k] && g.visibility[k] {
            num += cosine_distance(fq, fg);
            den += 1.0;
        }
    }
    num / den
}

/// Identity metadata carried alongside a distance matrix row or column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemMeta {
    pub image_id: u32,
    pub person_id: u32,
    pub camera_id: u32,
}

impl From<&Descriptor> for ItemMeta {
    fn from(d: &Descriptor) -> Self {
        Self { image_id: d.image_id, person_id: d.person_id, camera_id: d.camera_id }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub queries: Vec<ItemMeta>,
    pub gallery: Vec<ItemMeta>,
    /// `q * g`, row-major.
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(queries: Vec<ItemMeta>, gallery: Vec<ItemMeta>, values: Vec<f64>) -> Result<Self> {
        if values.len() != queries.len() * gallery.len() {
            return Err(validation!(
                "distance matrix: {} values for {}x{}",
                values.len(),
                queries.len(),
                gallery.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(validation!("distance matrix: non-finite value"));
        }
        Ok(Self { queries, gallery, values })
    }

    pub fn q(&self) -> usize {
        self.queries.len()
    }

    pub fn g(&self) -> usize {
        self.gallery.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.g() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.g()..(i + 1) * self.g()]
    }

    /// Tab-separated text, one line per query.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.q() {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            s.push_str(&line.join("\t"));
            s.push('\n');
        }
        s
    }

    /// ISPD: `"ISPD" | version u32 | q u32 | g u32 | q*g f32`.
    pub fn write_ispd<W: Write>(&self, out: &mut W) -> Result<()> {
        write_header(out, ISPD_MAGIC)?;
        write_u32(out, dim_u32(self.q(), "q")?)?;
        write_u32(out, dim_u32(self.g(), "g")?)?;
        write_f32s(out, self.values.iter().map(|&v| v as f32))?;
        Ok(())
    }

    pub fn save_ispd(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_ispd(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Reads a binary distance matrix. The file holds no identity metadata, so the
/// caller supplies it; its lengths must match the stored shape.
pub fn read_ispd<R: Read>(input: &mut R, queries: Vec<ItemMeta>, gallery: Vec<ItemMeta>) -> Result<DistanceMatrix> {
    read_header(input, ISPD_MAGIC)?;
    let q = read_u32(input, "q")? as usize;
    let g = read_u32(input, "g")? as usize;
    if (q, g) != (queries.len(), gallery.len()) {
        return Err(validation!("distance file is {q}x{g} but metadata describes {}x{}", queries.len(), gallery.len()));
    }
    let values = read_f32s(input, q * g, "distances")?.into_iter().map(f64::from).collect();
    expect_eof(input)?;
    DistanceMatrix::new(queries, gallery, values)
}

pub fn load_ispd(path: impl AsRef<Path>, queries: Vec<ItemMeta>, gallery: Vec<ItemMeta>) -> Result<DistanceMatrix> {
    read_ispd(&mut BufReader::new(File::open(path)?), queries, gallery)
}

fn check_config(d: &Descriptor, parts: usize, c: usize) -> Result<()> {
    let consistent = d.parts() == parts
        && d.visibility.len() == parts
        && d.global_feat.len() == c
        && d.fg_feat.len() == c
        && d.part_feats.iter().all(|f| f.len() == c);
    if consistent {
        Ok(())
    } else {
        Err(validation!("descriptor {} does not match configuration parts={parts} c={c}", d.image_id))
    }
}

/// All pairwise aligned distances, computed in parallel over query rows.
pub fn distance_matrix(queries: &[Descriptor], gallery: &[Descriptor]) -> Result<DistanceMatrix> {
    let first = queries
        .first()
        .or(gallery.first())
        .ok_or_else(|| validation!("distance matrix needs at least one query and one gallery item"))?;
    if queries.is_empty() || gallery.is_empty() {
        return Err(validation!("distance matrix needs at least one query and one gallery item"));
    }
    let (parts, c) = (first.parts(), first.dim());
    for d in queries.iter().chain(gallery) {
        check_config(d, parts, c)?;
    }
    let values: Vec<f64> =
        queries.par_iter().flat_map_iter(|q| gallery.iter().map(move |g| aligned_distance(q, g))).collect();
    DistanceMatrix::new(
        queries.iter().map(ItemMeta::from).collect(),
        gallery.iter().map(ItemMeta::from).collect(),
        values,
    )
}
