use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BoxDomain;
use crate::error::{Error, Result};

/// A finite set of distinct points inside a box.
///
/// Points are stored flat (`N * d` coordinates) in the order given; equality
/// ignores that order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Configuration {
    domain: BoxDomain,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn empty(domain: BoxDomain) -> Self {
        Configuration { domain, coords: Vec::new() }
    }

    /// Order-forgetting map from an N-tuple of points to a configuration.
    pub fn sym(domain: BoxDomain, points: &[Vec<f64>]) -> Result<Self> {
        let d = domain.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in points {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(domain, coords)
    }

    /// Build from flat coordinates, validating membership and distinctness.
    pub fn from_flat(domain: BoxDomain, coords: Vec<f64>) -> Result<Self> {
        let d = domain.dim();
        if coords.len() % d != 0 {
            return Err(Error::DimensionMismatch { expected: d, found: coords.len() % d });
        }
        for (i, p) in coords.chunks(d).enumerate() {
            if !domain.contains(p) {
                return Err(Error::OutOfDomain { index: i });
            }
        }
        let c = Configuration { domain, coords };
        if let Some((first, second)) = c.find_duplicate() {
            return Err(Error::DuplicatePoint { first, second });
        }
        Ok(c)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_flat_unchecked(domain: BoxDomain, coords: Vec<f64>) -> Self {
        Configuration { domain, coords }
    }

    fn sorted_indices(&self) -> Vec<usize> {
        let d = self.dim();
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let pa = &self.coords[a * d..(a + 1) * d];
            let pb = &self.coords[b * d..(b + 1) * d];
            pa.partial_cmp(pb).unwrap()
        });
        idx
    }

    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let idx = self.sorted_indices();
        idx.windows(2).find(|w| self.point(w[0]) == self.point(w[1])).map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The stored ordering as a list of points (one representative of the
    /// preimage under `sym`).
    pub fn unsym(&self) -> Vec<Vec<f64>> {
        self.points().map(|p| p.to_vec()).collect()
    }

    /// Coordinates with points in lexicographic order.
    pub fn canonical_coords(&self) -> Vec<f64> {
        self.sorted_indices().into_iter().flat_map(|i| self.point(i).to_vec()).collect()
    }

    /// Union with a disjoint configuration in the same box.
    pub fn union(&self, other: &Configuration) -> Result<Configuration> {
        if self.domain != other.domain {
            return Err(Error::InvalidDomain("union of configurations in different boxes".into()));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Self::from_flat(self.domain.clone(), coords)
    }

    /// ⟨f, γ⟩ = Σ_{x∈γ} f(x).
    pub fn pairing(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points().map(f).sum()
    }

    /// Occupation numbers of the unit cubes `[r − ½, r + ½)`.
    pub fn cube_counts(&self) -> BTreeMap<Vec<i64>, usize> {
        let mut m = BTreeMap::new();
        for p in self.points() {
            let r: Vec<i64> = p.iter().map(|x| (x + 0.5).floor() as i64).collect();
            *m.entry(r).or_insert(0) += 1;
        }
        m
    }

    /// Text record `d L1..Ld N x11..x1d … xN1..xNd`.
    pub fn to_record(&self) -> String {
        let mut parts = vec![self.dim().to_string()];
        parts.extend(self.domain.lengths().iter().map(|l| format!("{l:?}")));
        parts.push(self.len().to_string());
        parts.extend(self.coords.iter().map(|x| format!("{x:?}")));
        parts.join(" ")
    }

    pub fn from_record(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let mut next = |what: &str| it.next().ok_or_else(|| Error::Parse(format!("record ends before {what}")));
        let d: usize = next("dimension")?.parse().map_err(|e| Error::Parse(format!("dimension: {e}")))?;
        let mut lengths = Vec::with_capacity(d);
        for _ in 0..d {
            lengths.push(next("box length")?.parse::<f64>().map_err(|e| Error::Parse(format!("box length: {e}")))?);
        }
        let n: usize = next("point count")?.parse().map_err(|e| Error::Parse(format!("point count: {e}")))?;
        let mut coords = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            coords.push(next("coordinate")?.parse::<f64>().map_err(|e| Error::Parse(format!("coordinate: {e}")))?);
        }
        if it.next().is_some() {
            return Err(Error::Parse("trailing tokens after record".into()));
        }
        Self::from_flat(BoxDomain::new(lengths)?, coords)
    }
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.len() == other.len() && self.canonical_coords() == other.canonical_coords()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_line() -> BoxDomain {
        BoxDomain::new(vec![1.0]).unwrap()
    }

    #[test]
    fn sym_forgets_order() {
        let a = Configuration::sym(unit_line(), &[vec![0.2], vec![0.7]]).unwrap();
        let b = Configuration::sym(unit_line(), &[vec![0.7], vec![0.2]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singleton() {
        let a = Configuration::sym(unit_line(), &[vec![0.3]]).unwrap();
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn duplicates_rejected() {
        let e = Configuration::sym(unit_line(), &[vec![0.3], vec![0.1], vec![0.3]]).unwrap_err();
        assert_eq!(e, Error::DuplicatePoint { first: 0, second: 2 });
    }

    #[test]
    fn outside_rejected() {
        let e = Configuration::sym(unit_line(), &[vec![0.3], vec![1.2]]).unwrap_err();
        assert_eq!(e, Error::OutOfDomain { index: 1 });
    }

    #[test]
    fn cube_convention() {
        let dom = BoxDomain::new(vec![3.0]).unwrap();
        assert!(Configuration::empty(dom.clone()).cube_counts().is_empty());
        let c = Configuration::sym(dom.clone(), &[vec![0.4]]).unwrap();
        assert_eq!(c.cube_counts().get(&vec![0]), Some(&1));
        let c = Configuration::sym(dom, &[vec![0.5], vec![1.49]]).unwrap();
        assert_eq!(c.cube_counts().get(&vec![1]), Some(&2));
    }

    #[test]
    fn record_roundtrip() {
        let dom = BoxDomain::new(vec![2.0, 3.0]).unwrap();
        let c = Configuration::sym(dom, &[vec![0.1, 2.9], vec![1.0 / 3.0, 0.0]]).unwrap();
        let s = c.to_record();
        assert!(s.starts_with("2 2.0 3.0 2 "));
        let back = Configuration::from_record(&s).unwrap();
        assert_eq!(back.coords(), c.coords());
    }

    #[test]
    fn record_errors() {
        assert!(Configuration::from_record("1 2.0 2 0.5").is_err());
        assert!(Configuration::from_record("1 2.0 1 0.5 0.7").is_err());
        assert!(Configuration::from_record("x").is_err());
    }
}
