use crate::error::{Error, Result};
use crate::grid::GridShape;

/// A fixation at integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fixation {
    pub row: usize,
    pub col: usize,
}

impl Fixation {
    pub fn new(row: usize, col: usize) -> Self {
        Fixation { row, col }
    }
}

/// Ordered fixations of one stimulus. Repeated points count with multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FixationSet {
    pub stimulus_id: String,
    pub points: Vec<Fixation>,
}

impl FixationSet {
    pub fn new(stimulus_id: impl Into<String>, points: Vec<Fixation>) -> Self {
        FixationSet { stimulus_id: stimulus_id.into(), points }
    }

    /// Convenience for literals: `(row, col)` pairs.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        FixationSet::new("", pairs.iter().map(|&(r, c)| Fixation::new(r, c)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fixation> {
        self.points.iter()
    }

    /// Checks the set is nonempty and inside `shape`.
    pub fn validate(&self, shape: GridShape) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyFixations);
        }
        self.check_bounds(shape)
    }

    pub fn check_bounds(&self, shape: GridShape) -> Result<()> {
        match self.points.iter().find(|f| !shape.contains(f.row, f.col)) {
            Some(f) => Err(Error::OutOfBounds { row: f.row, col: f.col, shape }),
            None => Ok(()),
        }
    }

    /// Flat pixel indices of the fixations.
    pub fn indices(&self, shape: GridShape) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(move |f| shape.index(f.row, f.col))
    }

    /// Per-pixel fixation counts.
    pub fn count_grid(&self, shape: GridShape) -> Vec<f64> {
        let mut counts = vec![0.0; shape.len()];
        for i in self.indices(shape) {
            counts[i] += 1.0;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stimulus {
    pub id: String,
    pub shape: GridShape,
}

/// Stimulus index plus one fixation set per stimulus, in index order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FixationDataset {
    stimuli: Vec<Stimulus>,
    fixations: Vec<FixationSet>,
}

impl FixationDataset {
    pub fn new(stimuli: Vec<Stimulus>, fixations: Vec<FixationSet>) -> Result<Self> {
        if stimuli.len() != fixations.len() {
            return Err(Error::InvalidConfig(format!(
                "{} stimuli but {} fixation sets",
                stimuli.len(),
                fixations.len()
            )));
        }
        for (i, s) in stimuli.iter().enumerate() {
            if stimuli[..i].iter().any(|t| t.id == s.id) {
                return Err(Error::InvalidConfig(format!("duplicate stimulus id {:?}", s.id)));
            }
        }
        for (s, f) in stimuli.iter().zip(&fixations) {
            f.check_bounds(s.shape)?;
        }
        let fixations = stimuli
            .iter()
            .zip(fixations)
            .map(|(s, f)| FixationSet::new(s.id.clone(), f.points))
            .collect();
        Ok(FixationDataset { stimuli, fixations })
    }

    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    pub fn stimuli(&self) -> &[Stimulus] {
        &self.stimuli
    }

    pub fn fixations(&self) -> &[FixationSet] {
        &self.fixations
    }

    pub fn total_fixations(&self) -> usize {
        self.fixations.iter().map(FixationSet::len).sum()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.stimuli.iter().position(|s| s.id == id)
    }

    pub fn get(&self, id: &str) -> Option<(&Stimulus, &FixationSet)> {
        self.position(id).map(|i| (&self.stimuli[i], &self.fixations[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Stimulus, &FixationSet)> {
        self.stimuli.iter().zip(&self.fixations)
    }

    /// Leave-one-image-out view: every stimulus except `excluded`.
    pub fn iter_except<'a>(
        &'a self,
        excluded: Option<&'a str>,
    ) -> impl Iterator<Item = (&'a Stimulus, &'a FixationSet)> + 'a {
        self.iter().filter(move |(s, _)| Some(s.id.as_str()) != excluded)
    }
}
