//! Deterministic synthetic feature maps with planted part structure.
//!
//! Every image holds an elliptical silhouette cut into `parts` horizontal bands.
//! A pixel in band `p` carries `fg_gain * s_p + noise`, where `s_p` is the
//! identity's unit signature for that part; every other pixel carries
//! `bg_level * b + noise` for a dataset-wide unit background direction `b`.
//! Signatures are drawn around shared part prototypes,
//! `s_p = normalize(proto_p + identity_spread * u)` with `u` a random unit
//! vector, so a large `identity_spread` gives unrelated signatures per identity.
//! Each (image, part) band is occluded with probability `occlusion_prob`: its
//! pixels become background and its truth label becomes 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{validation, Result};
use crate::rng::derive_seed;
use crate::tensor::{FeatureMap, FeatureMapSet, LabelMap, LabelSet, MapShape};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_id: usize,
    pub imgs_per_id: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    /// Planted foreground parts (labels `1..=parts`).
    pub parts: usize,
    pub occlusion_prob: f64,
    pub noise_sigma: f64,
    pub fg_gain: f64,
    pub bg_level: f64,
    pub identity_spread: f64,
    /// Camera ids are assigned round-robin over each identity's images.
    pub cameras: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_id: 8,
            imgs_per_id: 6,
            c: 16,
            h: 64,
            w: 32,
            parts: 5,
            occlusion_prob: 0.0,
            noise_sigma: 0.5,
            fg_gain: 4.0,
            bg_level: 1.0,
            identity_spread: 0.5,
            cameras: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub features: FeatureMapSet,
    /// Ground-truth labels with `K = parts + 1`.
    pub truth: LabelSet,
    /// `occluded[i][p]` is set when part `p + 1` was hidden in image `i`.
    pub occluded: Vec<Vec<bool>>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_id == 0 || self.imgs_per_id == 0 {
            return Err(validation!("n_id and imgs_per_id must be >= 1"));
        }
        if self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(validation!("c, h, w must be >= 1"));
        }
        if self.parts == 0 || self.parts > 254 {
            return Err(validation!("parts must be in 1..=254, got {}", self.parts));
        }
        if !(0.0..1.0).contains(&self.occlusion_prob) {
            return Err(validation!("occlusion_prob must be in [0, 1), got {}", self.occlusion_prob));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(validation!("noise_sigma must be finite and >= 0"));
        }
        if !(self.fg_gain > 1.0 && self.fg_gain.is_finite()) {
            return Err(validation!("fg_gain must be finite and > 1"));
        }
        if !(self.bg_level >= 0.0 && self.bg_level.is_finite()) {
            return Err(validation!("bg_level must be finite and >= 0"));
        }
        if !(self.identity_spread >= 0.0 && self.identity_spread.is_finite()) {
            return Err(validation!("identity_spread must be finite and >= 0"));
        }
        if self.cameras == 0 {
            return Err(validation!("cameras must be >= 1"));
        }
        // the un-jittered silhouette must span at least one row per band
        let sil = Silhouette::centered(self.h, self.w, 0, 0);
        match sil.row_span() {
            Some((top, bottom)) if bottom - top + 1 >= self.parts => Ok(()),
            _ => Err(validation!("{} part bands cannot fit in a silhouette of height {}", self.parts, self.h)),
        }
    }
}

struct Silhouette {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    h: usize,
    w: usize,
}

impl Silhouette {
    fn centered(h: usize, w: usize, dx: i64, dy: i64) -> Self {
        Self {
            cx: w as f64 / 2.0 + dx as f64,
            cy: h as f64 / 2.0 + dy as f64,
            ax: (0.3 * w as f64).max(0.5),
            ay: (0.42 * h as f64).max(0.5),
            h,
            w,
        }
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        let u = (x as f64 + 0.5 - self.cx) / self.ax;
        let v = (y as f64 + 0.5 - self.cy) / self.ay;
        u * u + v * v <= 1.0
    }

    fn row_span(&self) -> Option<(usize, usize)> {
        let rows: Vec<usize> = (0..self.h).filter(|&y| (0..self.w).any(|x| self.contains(x, y))).collect();
        Some((*rows.first()?, *rows.last()?))
    }
}

fn unit_gaussian<R: Rng>(rng: &mut R, c: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..c).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `count` unit vectors, mutually orthogonal when `count <= c`.
fn prototypes<R: Rng>(rng: &mut R, c: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = unit_gaussian(rng, c);
        if out.len() < c {
            for u in &out {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-6 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= n);
        }
        out.push(v);
    }
    out
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let c = spec.c;
    let mut proto_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0]));
    let mut protos = prototypes(&mut proto_rng, c, spec.parts + 1);
    let background = protos.pop().expect("parts + 1 >= 2 prototypes");

    let signatures: Vec<Vec<Vec<f64>>> = (0..spec.n_id)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1, id as u64]));
            protos
                .iter()
                .map(|p| {
                    let u = unit_gaussian(&mut rng, c);
                    let mut s: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + spec.identity_spread * b).collect();
                    let n = s.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 1e-12 {
                        s.iter_mut().for_each(|x| *x /= n);
                        s
                    } else {
                        u
                    }
                })
                .collect()
        })
        .collect();

    let shape = MapShape::new(c, spec.h, spec.w);
    let jitter_y = (spec.h / 32).max(1) as i64;
    let jitter_x = (spec.w / 32).max(1) as i64;
    let images: Vec<(FeatureMap, LabelMap, Vec<bool>)> = (0..spec.n_id * spec.imgs_per_id)
        .into_par_iter()
        .map(|index| -> Result<_> {
            let (id, k) = (index / spec.imgs_per_id, index % spec.imgs_per_id);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[2, index as u64]));
            let dx = rng.random_range(-jitter_x..=jitter_x);
            let dy = rng.random_range(-jitter_y..=jitter_y);
            let occluded: Vec<bool> = (0..spec.parts).map(|_| rng.random::<f64>() < spec.occlusion_prob).collect();
            let sil = Silhouette::centered(spec.h, spec.w, dx, dy);
            let (top, bottom) = sil.row_span().ok_or_else(|| validation!("silhouette does not intersect the image"))?;
            let band_h = (bottom - top + 1) as f64 / spec.parts as f64;

            let mut data = Vec::with_capacity(shape.len());
            let mut labels = Vec::with_capacity(shape.pixels());
            for y in 0..spec.h {
                for x in 0..spec.w {
                    let part = sil
                        .contains(x, y)
                        .then(|| (((y - top) as f64 / band_h) as usize).min(spec.parts - 1))
                        .filter(|&p| !occluded[p]);
                    let (base, gain, label) = match part {
                        Some(p) => (&signatures[id][p], spec.fg_gain, (p + 1) as u8),
                        None => (&background, spec.bg_level, 0),
                    };
                    for &b in base {
                        let noise: f64 = rng.sample(StandardNormal);
                        data.push((gain * b + spec.noise_sigma * noise) as f32);
                    }
                    labels.push(label);
                }
            }
            let image_id = index as u32;
            let person_id = id as u32;
            let camera_id = (k % spec.cameras) as u32;
            Ok((
                FeatureMap::new(image_id, person_id, camera_id, shape, data)?,
                LabelMap::new(image_id, person_id, spec.h, spec.w, labels)?,
                occluded,
            ))
        })
        .collect::<Result<_>>()?;

    let mut maps = Vec::with_capacity(images.len());
    let mut truth = Vec::with_capacity(images.len());
    let mut occluded = Vec::with_capacity(images.len());
    for (m, l, o) in images {
        maps.push(m);
        truth.push(l);
        occluded.push(o);
    }
    Ok(SyntheticData { features: FeatureMapSet::new(maps)?, truth: LabelSet::new(spec.parts + 1, truth)?, occluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec { n_id: 3, imgs_per_id: 2, c: 8, h: 32, w: 16, parts: 4, ..Default::default() }
    }

    #[test]
    fn no_occlusion_shows_every_part() {
        let data = generate(&small()).unwrap();
        for m in &data.truth.maps {
            assert_eq!(m.present_labels().into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        }
        assert!(data.occluded.iter().flatten().all(|&o| !o));
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec { occlusion_prob: 0.3, ..small() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SyntheticSpec { seed: 1, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().features, generate(&other).unwrap().features);
    }

    #[test]
    fn occluded_parts_are_erased_from_truth() {
        let spec = SyntheticSpec { occlusion_prob: 0.5, ..small() };
        let data = generate(&spec).unwrap();
        let mut any = false;
        for (m, occ) in data.truth.maps.iter().zip(&data.occluded) {
            let present = m.present_labels();
            for (p, &o) in occ.iter().enumerate() {
                assert_eq!(present.contains(&((p + 1) as u8)), !o);
                any |= o;
            }
        }
        assert!(any);
    }

    #[test]
    fn bands_are_ordered_top_down() {
        let data = generate(&small()).unwrap();
        for m in &data.truth.maps {
            let mut means = Vec::new();
            for l in 1..=4u8 {
                let rows: Vec<usize> = (0..m.labels.len()).filter(|&p| m.labels[p] == l).map(|p| p / m.w).collect();
                means.push(rows.iter().sum::<usize>() as f64 / rows.len() as f64);
                let max_prev = rows.iter().max().unwrap();
                if l < 4 {
                    let next_min =
                        (0..m.labels.len()).filter(|&p| m.labels[p] == l + 1).map(|p| p / m.w).min().unwrap();
                    assert!(*max_prev < next_min);
                }
            }
            assert!(means.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn noiseless_signatures_repeat_within_identity() {
        let spec = SyntheticSpec { noise_sigma: 0.0, ..small() };
        let data = generate(&spec).unwrap();
        let (a, b) = (&data.features.maps()[0], &data.features.maps()[1]);
        let (la, lb) = (&data.truth.maps[0], &data.truth.maps[1]);
        for part in 1..=4u8 {
            let pa = la.labels.iter().position(|&l| l == part).unwrap();
            let pb = lb.labels.iter().position(|&l| l == part).unwrap();
            assert_eq!(a.pixel(pa), b.pixel(pb));
        }
    }

    #[test]
    fn cameras_round_robin() {
        let data = generate(&SyntheticSpec { cameras: 2, ..small() }).unwrap();
        let cams: Vec<u32> = data.features.maps().iter().map(|m| m.camera_id()).collect();
        assert_eq!(cams, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn rejects_bands_that_do_not_fit() {
        let spec = SyntheticSpec { h: 4, parts: 6, ..small() };
        assert!(generate(&spec).is_err());
        assert!(generate(&SyntheticSpec { fg_gain: 1.0, ..small() }).is_err());
        assert!(generate(&SyntheticSpec { occlusion_prob: 1.0, ..small() }).is_err());
    }
}
