//! Domain types: labels, segments, segmentations, entity sets and score tables.
//!
//! Token positions are 1-based and spans are inclusive on both ends, so a
//! segment `(i, j, l)` covers tokens `i..=j`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Ordered set of label names, optionally with a designated null (`O`) label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    null_id: Option<usize>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        null_id: Option<usize>,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidLabels("label set is empty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, name) in labels.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidLabels(format!("duplicate label `{name}`")));
            }
        }
        if let Some(n) = null_id {
            if n >= labels.len() {
                return Err(Error::InvalidLabels(format!(
                    "null id {n} out of range for {} labels",
                    labels.len()
                )));
            }
        }
        Ok(LabelSet {
            labels,
            null_id,
            index,
        })
    }

    /// Segment label set with `null` at index 0 followed by the entity types.
    pub fn with_null<S: Into<String>>(
        null: &str,
        entity_types: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let labels =
            std::iter::once(null.to_string()).chain(entity_types.into_iter().map(Into::into));
        LabelSet::new(labels, Some(0))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn null_id(&self) -> Option<usize> {
        self.null_id
    }

    pub fn require_null(&self) -> Result<usize> {
        self.null_id.ok_or(Error::MissingNullLabel)
    }

    pub fn is_null(&self, id: usize) -> bool {
        self.null_id == Some(id)
    }
}

/// A labeled span `(start, end, label)`, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

impl Segment {
    pub const fn new(start: usize, end: usize, label: usize) -> Self {
        Segment { start, end, label }
    }

    pub fn width(&self) -> usize {
        self.end + 1 - self.start
    }

    /// True when the two spans share at least one token.
    pub fn overlaps(&self, other: &Segment) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn same_span(&self, other: &Segment) -> bool {
        self.start == other.start && self.end == other.end
    }

    pub(crate) fn check_bounds(&self, len: usize) -> Result<()> {
        if self.start == 0 || self.start > self.end || self.end > len {
            return Err(Error::SpanOutOfRange {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.start, self.end, self.label)
    }
}

/// Ordered list of segments; valid when it covers `1..=L` without gaps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
}

impl Segmentation {
    pub fn new(segments: Vec<Segment>) -> Self {
        Segmentation { segments }
    }

    pub fn is_valid(&self, len: usize) -> bool {
        validate_segmentation(self, len)
    }

    /// Full-cover segmentation whose gaps between entities are unit-width
    /// null segments.
    pub fn from_entities(entities: &EntitySet, len: usize, null_id: usize) -> Self {
        let mut segments = Vec::with_capacity(len);
        let mut next = 1;
        for e in entities.iter() {
            while next < e.start {
                segments.push(Segment::new(next, next, null_id));
                next += 1;
            }
            segments.push(*e);
            next = e.end + 1;
        }
        while next <= len {
            segments.push(Segment::new(next, next, null_id));
            next += 1;
        }
        Segmentation { segments }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Segment> {
        self.segments.iter()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// True iff `seg` covers positions `1..=len` contiguously with
/// positive-length segments.
pub fn validate_segmentation(seg: &Segmentation, len: usize) -> bool {
    if seg.segments.is_empty() || len == 0 {
        return false;
    }
    let mut next = 1;
    for s in &seg.segments {
        if s.start != next || s.end < s.start || s.end > len {
            return false;
        }
        next = s.end + 1;
    }
    next == len + 1
}

/// Non-overlapping set of labeled spans, kept sorted by position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct EntitySet {
    entities: Vec<Segment>,
}

impl EntitySet {
    pub fn new(mut entities: Vec<Segment>) -> Result<Self> {
        entities.sort();
        entities.dedup();
        for w in entities.windows(2) {
            if w[0].overlaps(&w[1]) {
                return Err(Error::Overlap(w[0].start, w[0].end, w[1].start, w[1].end));
            }
        }
        Ok(EntitySet { entities })
    }

    pub fn empty() -> Self {
        EntitySet::default()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Segment> {
        self.entities.iter()
    }

    pub fn as_slice(&self) -> &[Segment] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn contains(&self, s: &Segment) -> bool {
        self.entities.binary_search(s).is_ok()
    }

    /// Entities of width at most `max_width`.
    pub fn within_width(&self, max_width: usize) -> EntitySet {
        EntitySet {
            entities: self
                .entities
                .iter()
                .copied()
                .filter(|e| e.width() <= max_width)
                .collect(),
        }
    }
}

impl<'a> IntoIterator for &'a EntitySet {
    type Item = &'a Segment;
    type IntoIter = std::slice::Iter<'a, Segment>;
    fn into_iter(self) -> Self::IntoIter {
        self.entities.iter()
    }
}

/// Entities (non-null segments) of a segmentation.
pub fn entities_of(seg: &Segmentation, labels: &LabelSet) -> EntitySet {
    EntitySet {
        entities: {
            let mut v: Vec<Segment> = seg
                .segments
                .iter()
                .copied()
                .filter(|s| !labels.is_null(s.label))
                .collect();
            v.sort();
            v
        },
    }
}

/// Dimensions shared by [`ScoreSet`] and [`GradientSet`].
///
/// Segment tables are dense `len × max_width × num_labels` blocks indexed by
/// `(start, width, label)`; slots whose span would run past the sequence end
/// exist but are never read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub len: usize,
    pub num_labels: usize,
    pub max_width: usize,
}

impl Shape {
    pub fn new(len: usize, num_labels: usize, max_width: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        if num_labels == 0 {
            return Err(Error::InvalidLabels("label set is empty".into()));
        }
        if max_width == 0 {
            return Err(Error::Config("max width must be at least 1".into()));
        }
        Ok(Shape {
            len,
            num_labels,
            max_width,
        })
    }

    pub fn emission_len(&self) -> usize {
        self.len * self.num_labels
    }

    pub fn segment_len(&self) -> usize {
        self.len * self.max_width * self.num_labels
    }

    pub fn transition_len(&self) -> usize {
        self.num_labels * self.num_labels
    }

    #[inline]
    pub fn emission_index(&self, i: usize, y: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.len && y < self.num_labels);
        (i - 1) * self.num_labels + y
    }

    #[inline]
    pub fn segment_index(&self, i: usize, j: usize, y: usize) -> usize {
        debug_assert!(i >= 1 && i <= j && j <= self.len, "span ({i}, {j})");
        debug_assert!(j + 1 - i <= self.max_width && y < self.num_labels);
        ((i - 1) * self.max_width + (j - i)) * self.num_labels + y
    }

    #[inline]
    pub fn transition_index(&self, from: usize, to: usize) -> usize {
        from * self.num_labels + to
    }

    /// Every scoreable span `(i, j)` in order of start, then width.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.len).flat_map(move |i| (i..=(i + self.max_width - 1).min(self.len)).map(move |j| (i, j)))
    }

    pub fn check_segment(&self, s: &Segment) -> Result<()> {
        s.check_bounds(self.len)?;
        if s.width() > self.max_width {
            return Err(Error::SpanTooWide {
                start: s.start,
                end: s.end,
                max_width: self.max_width,
            });
        }
        if s.label >= self.num_labels {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                num_labels: self.num_labels,
            });
        }
        Ok(())
    }
}

/// All scores for one sequence.
///
/// * `emissions`: per-token label scores used by the linear-chain CRF.
/// * `seg_local`: segment scores of the local (filtering) classifier.
/// * `seg_global`: segment scores used for path scoring by the semi-Markov
///   CRF and the filtered graph.
/// * `transitions`: `from × to` label transition scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    shape: Shape,
    pub(crate) emissions: Vec<f64>,
    pub(crate) seg_local: Vec<f64>,
    pub(crate) seg_global: Vec<f64>,
    pub(crate) transitions: Vec<f64>,
}

impl ScoreSet {
    pub fn zeros(len: usize, num_labels: usize, max_width: usize) -> Result<Self> {
        let shape = Shape::new(len, num_labels, max_width)?;
        Ok(ScoreSet {
            emissions: vec![0.0; shape.emission_len()],
            seg_local: vec![0.0; shape.segment_len()],
            seg_global: vec![0.0; shape.segment_len()],
            transitions: vec![0.0; shape.transition_len()],
            shape,
        })
    }

    /// Builds a score set from dense arrays, checking every shape and that
    /// all values are finite.
    pub fn from_parts(
        shape: Shape,
        emissions: Vec<f64>,
        seg_local: Vec<f64>,
        seg_global: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        let check = |array: &'static str, v: &[f64], expected: Vec<usize>| -> Result<()> {
            let n: usize = expected.iter().product();
            if v.len() != n {
                return Err(Error::ShapeMismatch {
                    array,
                    expected,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("`{array}` contains non-finite scores")));
            }
            Ok(())
        };
        let (l, k, y) = (shape.len, shape.max_width, shape.num_labels);
        check("emissions", &emissions, vec![l, y])?;
        check("seg_local", &seg_local, vec![l, k, y])?;
        check("seg_global", &seg_global, vec![l, k, y])?;
        check("transitions", &transitions, vec![y, y])?;
        Ok(ScoreSet {
            shape,
            emissions,
            seg_local,
            seg_global,
            transitions,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_labels(&self) -> usize {
        self.shape.num_labels
    }

    pub fn max_width(&self) -> usize {
        self.shape.max_width
    }

    #[inline]
    pub fn emission(&self, i: usize, y: usize) -> f64 {
        self.emissions[self.shape.emission_index(i, y)]
    }

    #[inline]
    pub fn local(&self, i: usize, j: usize, y: usize) -> f64 {
        self.seg_local[self.shape.segment_index(i, j, y)]
    }

    #[inline]
    pub fn global(&self, i: usize, j: usize, y: usize) -> f64 {
        self.seg_global[self.shape.segment_index(i, j, y)]
    }

    #[inline]
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions[self.shape.transition_index(from, to)]
    }

    pub fn set_emission(&mut self, i: usize, y: usize, v: f64) {
        let k = self.shape.emission_index(i, y);
        self.emissions[k] = v;
    }

    pub fn set_local(&mut self, i: usize, j: usize, y: usize, v: f64) {
        let k = self.shape.segment_index(i, j, y);
        self.seg_local[k] = v;
    }

    pub fn set_global(&mut self, i: usize, j: usize, y: usize, v: f64) {
        let k = self.shape.segment_index(i, j, y);
        self.seg_global[k] = v;
    }

    pub fn set_transition(&mut self, from: usize, to: usize, v: f64) {
        let k = self.shape.transition_index(from, to);
        self.transitions[k] = v;
    }

    pub fn emissions(&self) -> &[f64] {
        &self.emissions
    }

    pub fn seg_local(&self) -> &[f64] {
        &self.seg_local
    }

    pub fn seg_global(&self) -> &[f64] {
        &self.seg_global
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn emissions_mut(&mut self) -> &mut [f64] {
        &mut self.emissions
    }

    pub fn seg_local_mut(&mut self) -> &mut [f64] {
        &mut self.seg_local
    }

    pub fn seg_global_mut(&mut self) -> &mut [f64] {
        &mut self.seg_global
    }

    pub fn transitions_mut(&mut self) -> &mut [f64] {
        &mut self.transitions
    }
}

/// Derivatives of a loss with respect to every table of a [`ScoreSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    shape: Shape,
    pub emissions: Vec<f64>,
    pub seg_local: Vec<f64>,
    pub seg_global: Vec<f64>,
    pub transitions: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(shape: Shape) -> Self {
        GradientSet {
            emissions: vec![0.0; shape.emission_len()],
            seg_local: vec![0.0; shape.segment_len()],
            seg_global: vec![0.0; shape.segment_len()],
            transitions: vec![0.0; shape.transition_len()],
            shape,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn emission(&self, i: usize, y: usize) -> f64 {
        self.emissions[self.shape.emission_index(i, y)]
    }

    pub fn local(&self, i: usize, j: usize, y: usize) -> f64 {
        self.seg_local[self.shape.segment_index(i, j, y)]
    }

    pub fn global(&self, i: usize, j: usize, y: usize) -> f64 {
        self.seg_global[self.shape.segment_index(i, j, y)]
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions[self.shape.transition_index(from, to)]
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &GradientSet) {
        assert_eq!(self.shape, other.shape, "gradient shapes differ");
        let pairs = [
            (&mut self.emissions, &other.emissions),
            (&mut self.seg_local, &other.seg_local),
            (&mut self.seg_global, &other.seg_global),
            (&mut self.transitions, &other.transitions),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}
