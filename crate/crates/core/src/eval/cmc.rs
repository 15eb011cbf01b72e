use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::PersonId;

/// Match rate at ranks `1..=G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
}

impl CmcCurve {
    pub fn rank1(&self) -> f64 {
        self.at(1)
    }

    /// Rate at 1-based rank `r`, saturating at the gallery size.
    pub fn at(&self, r: usize) -> f64 {
        match self.rates.len() {
            0 => 0.0,
            n => self.rates[r.clamp(1, n) - 1],
        }
    }

    pub fn mean(curves: &[CmcCurve]) -> Result<CmcCurve> {
        let first = curves.first().ok_or_else(|| Error::InvalidArgument("no curves to average".into()))?;
        let n = first.rates.len();
        if let Some(bad) = curves.iter().find(|c| c.rates.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.rates.len() });
        }
        let k = curves.len() as f64;
        Ok(CmcCurve { rates: (0..n).map(|r| curves.iter().map(|c| c.rates[r]).sum::<f64>() / k).collect() })
    }
}

/// 1-based rank of each probe's true match in a probe-by-gallery distance
/// matrix. Ties go to the lower gallery index.
pub fn match_ranks(dist: &[Vec<f64>], probe_ids: &[PersonId], gallery_ids: &[PersonId]) -> Result<Vec<usize>> {
    if dist.len() != probe_ids.len() {
        return Err(Error::DimensionMismatch { expected: probe_ids.len(), got: dist.len() });
    }
    let mut index = HashMap::with_capacity(gallery_ids.len());
    for (g, id) in gallery_ids.iter().enumerate() {
        if index.insert(id, g).is_some() {
            return Err(Error::InvalidArgument(format!("gallery has more than one entry for {id}")));
        }
    }
    dist.iter()
        .zip(probe_ids)
        .map(|(row, id)| {
            if row.len() != gallery_ids.len() {
                return Err(Error::DimensionMismatch { expected: gallery_ids.len(), got: row.len() });
            }
            let t = *index.get(id).ok_or_else(|| Error::ProbeIdentityMissing(id.to_string()))?;
            let d = row[t];
            let ahead = row.iter().enumerate().filter(|&(g, &v)| v < d || (v == d && g < t)).count();
            Ok(ahead + 1)
        })
        .collect()
}

pub fn cmc(dist: &[Vec<f64>], probe_ids: &[PersonId], gallery_ids: &[PersonId]) -> Result<CmcCurve> {
    let ranks = match_ranks(dist, probe_ids, gallery_ids)?;
    let g = gallery_ids.len();
    let mut hist = vec![0usize; g + 1];
    for r in &ranks {
        hist[*r] += 1;
    }
    let n = ranks.len().max(1) as f64;
    let mut acc = 0;
    let rates = (1..=g)
        .map(|r| {
            acc += hist[r];
            acc as f64 / n
        })
        .collect();
    Ok(CmcCurve { rates })
}

/// CMC from similarities (higher is better).
pub fn cmc_from_scores(scores: &[Vec<f64>], probe_ids: &[PersonId], gallery_ids: &[PersonId]) -> Result<CmcCurve> {
    let dist: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|s| -s).collect()).collect();
    cmc(&dist, probe_ids, gallery_ids)
}
