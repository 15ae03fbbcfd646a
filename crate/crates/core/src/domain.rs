//! Alternatives, queries and the preference dataset.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vec<f64>;

/// The space of alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// Axis-aligned box `lower <= x <= upper`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// An explicit list of alternatives.
    Finite { points: Vec<Point> },
}

impl Domain {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = Domain::Box { lower, upper };
        d.check()?;
        Ok(d)
    }

    pub fn unit_cube(dim: usize) -> Self {
        Domain::Box {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn new_finite(points: Vec<Point>) -> Result<Self> {
        let d = Domain::Finite { points };
        d.check()?;
        Ok(d)
    }

    /// Validates the structural invariants (useful after deserialization).
    pub fn check(&self) -> Result<()> {
        match self {
            Domain::Box { lower, upper } => {
                if lower.is_empty() {
                    return Err(Error::InvalidDomain("box must have dimension >= 1".into()));
                }
                if lower.len() != upper.len() {
                    return Err(Error::Dimension {
                        expected: lower.len(),
                        got: upper.len(),
                    });
                }
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !(l.is_finite() && u.is_finite() && l < u) {
                        return Err(Error::InvalidDomain(format!(
                            "bounds of coordinate {i} must satisfy lower < upper (got {l}, {u})"
                        )));
                    }
                }
                Ok(())
            }
            Domain::Finite { points } => {
                let Some(first) = points.first() else {
                    return Err(Error::InvalidDomain("finite domain is empty".into()));
                };
                let dim = first.len();
                if dim == 0 {
                    return Err(Error::InvalidDomain("points must have dimension >= 1".into()));
                }
                for p in points {
                    if p.len() != dim {
                        return Err(Error::Dimension {
                            expected: dim,
                            got: p.len(),
                        });
                    }
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidDomain("non-finite coordinate".into()));
                    }
                }
                let distinct = points
                    .iter()
                    .map(|p| point_key(p))
                    .collect::<std::collections::HashSet<_>>()
                    .len();
                if distinct < 2 {
                    return Err(Error::InvalidDomain(
                        "finite domain needs at least 2 distinct alternatives".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Finite { points } => points[0].len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Domain::Finite { .. })
    }

    /// Bounding box used for input normalization. Degenerate coordinates of a
    /// finite set get unit width.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Box { lower, upper } => (lower.clone(), upper.clone()),
            Domain::Finite { points } => {
                let d = self.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for p in points {
                    for j in 0..d {
                        lo[j] = lo[j].min(p[j]);
                        hi[j] = hi[j].max(p[j]);
                    }
                }
                for j in 0..d {
                    if hi[j] <= lo[j] {
                        hi[j] = lo[j] + 1.0;
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Checks that `x` is an alternative, reporting the offending coordinate.
    pub fn check_point(&self, index: usize, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match self {
            Domain::Box { lower, upper } => {
                for (j, &v) in x.iter().enumerate() {
                    if !(v >= lower[j] && v <= upper[j]) {
                        return Err(Error::OutOfBounds {
                            point: index,
                            coord: j,
                            value: v,
                            lower: lower[j],
                            upper: upper[j],
                        });
                    }
                }
                Ok(())
            }
            Domain::Finite { points } => {
                if points.iter().any(|p| p.as_slice() == x) {
                    Ok(())
                } else {
                    Err(Error::NotInFiniteSet { point: index })
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.check_point(0, x).is_ok()
    }

    /// One uniform draw from the domain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            Domain::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
            Domain::Finite { points } => points[rng.random_range(0..points.len())].clone(),
        }
    }

    /// Clamps a point into the box (identity for finite domains).
    pub fn clamp(&self, x: &mut [f64]) {
        if let Domain::Box { lower, upper } = self {
            for (j, v) in x.iter_mut().enumerate() {
                *v = v.clamp(lower[j], upper[j]);
            }
        }
    }
}

/// A tuple of `q >= 2` alternatives shown together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Query {
    pub points: Vec<Point>,
}

impl Query {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }
}

/// 0-based index of the preferred alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Response(pub usize);

pub fn validate_query(domain: &Domain, query: &Query) -> Result<()> {
    if query.q() < 2 {
        return Err(Error::QueryTooShort(query.q()));
    }
    for (i, p) in query.points.iter().enumerate() {
        domain.check_point(i, p)?;
    }
    Ok(())
}

fn point_key(p: &[f64]) -> Vec<u64> {
    // -0.0 == 0.0 under float equality, so they must share a key.
    p.iter()
        .map(|&v| if v == 0.0 { 0u64 } else { v.to_bits() })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub query: Query,
    pub response: Response,
}

/// Ordered list of answered queries with an exact-equality index of the
/// distinct alternatives they contain.
#[derive(Debug, Clone)]
pub struct PreferenceDataset {
    q: usize,
    observations: Vec<Observation>,
    points: Vec<Point>,
    obs_index: Vec<Vec<usize>>,
    lookup: HashMap<Vec<u64>, usize>,
}

impl PartialEq for PreferenceDataset {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.observations == other.observations
    }
}

impl PreferenceDataset {
    pub fn new(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::QueryTooShort(q));
        }
        Ok(Self {
            q,
            observations: Vec::new(),
            points: Vec::new(),
            obs_index: Vec::new(),
            lookup: HashMap::new(),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Distinct alternatives in order of first appearance.
    pub fn distinct_points(&self) -> &[Point] {
        &self.points
    }

    /// For observation `i`, the distinct-point index of each query position.
    pub fn observation_indices(&self, i: usize) -> &[usize] {
        &self.obs_index[i]
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.len())
    }

    /// Returns a new dataset with the observation appended.
    pub fn append(&self, query: Query, response: Response) -> Result<Self> {
        let mut next = self.clone();
        next.push(query, response)?;
        Ok(next)
    }

    /// In-place append; the owning-value API is [`PreferenceDataset::append`].
    pub fn push(&mut self, query: Query, response: Response) -> Result<()> {
        if query.q() < 2 {
            return Err(Error::QueryTooShort(query.q()));
        }
        if query.q() != self.q {
            return Err(Error::QueryLength {
                expected: self.q,
                got: query.q(),
            });
        }
        if response.0 >= query.q() {
            return Err(Error::ChoiceOutOfRange {
                choice: response.0,
                q: query.q(),
            });
        }
        let dim = self.dim().unwrap_or(query.points[0].len());
        for p in &query.points {
            if p.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite coordinate in query".into()));
            }
        }
        let idx = query
            .points
            .iter()
            .map(|p| {
                let key = point_key(p);
                *self.lookup.entry(key).or_insert_with(|| {
                    self.points.push(p.clone());
                    self.points.len() - 1
                })
            })
            .collect();
        self.obs_index.push(idx);
        self.observations.push(Observation { query, response });
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(DatasetWire::from(self)).expect("dataset serializes")
    }
}

/// On-disk form: `{"q": int, "observations": [{"points": [[..]], "choice": int}]}`.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetWire {
    q: usize,
    observations: Vec<ObservationWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationWire {
    points: Vec<Point>,
    choice: usize,
}

impl From<&PreferenceDataset> for DatasetWire {
    fn from(ds: &PreferenceDataset) -> Self {
        DatasetWire {
            q: ds.q,
            observations: ds
                .observations
                .iter()
                .map(|o| ObservationWire {
                    points: o.query.points.clone(),
                    choice: o.response.0,
                })
                .collect(),
        }
    }
}

impl TryFrom<DatasetWire> for PreferenceDataset {
    type Error = Error;

    fn try_from(w: DatasetWire) -> Result<Self> {
        let mut ds = PreferenceDataset::new(w.q)?;
        for o in w.observations {
            ds.push(Query::new(o.points), Response(o.choice))?;
        }
        Ok(ds)
    }
}

impl Serialize for PreferenceDataset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatasetWire::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PreferenceDataset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = DatasetWire::deserialize(d)?;
        PreferenceDataset::try_from(w).map_err(serde::de::Error::custom)
    }
}
