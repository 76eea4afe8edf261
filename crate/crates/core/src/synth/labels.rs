use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Shape3, Volume3D};

use super::{rng, smooth_noise};

/// Regions smaller than this fraction of the domain are merged away.
const MIN_REGION_FRACTION: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub shape: Shape3,
    pub labels: Vec<u8>,
    pub num_labels: usize,
}

impl LabelMap {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_labels];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }

    /// Number of ids that occur at least once.
    pub fn region_count(&self) -> usize {
        self.counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn mask(&self, label: u8) -> Vec<bool> {
        self.labels.iter().map(|&l| l == label).collect()
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D::new(self.shape, Default::default(), self.labels.iter().map(|&l| l as f32).collect())
            .expect("length matches shape")
    }
}

pub fn sample_label_map(seed: u64, shape: Shape3, num_labels: usize) -> Result<LabelMap> {
    shape.check_positive()?;
    if !(2..=32).contains(&num_labels) {
        return Err(Error::Config(format!("num_labels must lie in [2, 32], got {num_labels}")));
    }
    if shape.len() < num_labels {
        return Err(Error::Geometry(format!("{shape} is too small for {num_labels} labels")));
    }
    let mut r = rng(seed);
    let n = shape.len();
    let scales = [(16, 1.0), (8, 0.5), (4, 0.25)];
    let fields: Vec<Vec<f64>> = (0..num_labels).map(|_| smooth_noise(&mut r, shape, &scales)).collect();
    let mut alive = vec![true; num_labels];
    let assign = |alive: &[bool]| -> Vec<u8> {
        (0..n)
            .map(|i| {
                (0..num_labels)
                    .filter(|&l| alive[l])
                    .max_by(|&a, &b| fields[a][i].total_cmp(&fields[b][i]))
                    .expect("one label stays alive") as u8
            })
            .collect()
    };
    let min = (MIN_REGION_FRACTION * n as f64).ceil() as usize;
    let mut map = LabelMap { shape, labels: assign(&alive), num_labels };
    // drop the smallest undersized region and re-assign until all survivors
    // are large enough
    loop {
        let counts = map.counts();
        let smallest = (0..num_labels)
            .filter(|&l| alive[l] && counts[l] < min)
            .min_by_key(|&l| (counts[l], l));
        match smallest {
            Some(l) if alive.iter().filter(|&&a| a).count() > 2 => {
                alive[l] = false;
                map.labels = assign(&alive);
            }
            _ => break,
        }
    }
    Ok(map)
}
