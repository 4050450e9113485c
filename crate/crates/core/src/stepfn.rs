//! Piecewise-constant functions on [0, 1], uniform grid samples, and the
//! decreasing rearrangement in both representations.
//!
//! A [`StepFunction`] is kept in canonical form: strictly increasing
//! breakpoints from 0 to 1 and no two adjacent cells with equal value. Cell
//! `j` is `[b_j, b_{j+1})`; the last cell also owns the point 1.

use std::cmp::Ordering;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{Extended, Real};

/// One cell of a step function, as exchanged in JSON.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Cell<T> {
    pub left: T,
    pub right: T,
    pub value: Extended<T>,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug)]
struct Neumaier<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Neumaier<T> {
    fn new() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }

    fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry + ((self.sum - t) + x);
        } else {
            self.carry = self.carry + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    fn total(&self) -> T {
        self.sum + self.carry
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction<T> {
    breakpoints: Vec<T>,
    values: Vec<Extended<T>>,
}

impl<T: Real> StepFunction<T> {
    /// Validates and canonicalizes. Adjacent equal values are merged.
    pub fn new(breakpoints: Vec<T>, values: Vec<Extended<T>>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidStepFunction("need at least two breakpoints".into()));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidStepFunction(format!(
                "{} values for {} breakpoints",
                values.len(),
                breakpoints.len()
            )));
        }
        if breakpoints[0] != T::zero() || *breakpoints.last().unwrap() != T::one() {
            return Err(Error::InvalidStepFunction("breakpoints must run from 0 to 1".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidStepFunction("breakpoints must be strictly increasing".into()));
        }
        if values.iter().any(|v| matches!(v, Extended::Finite(x) if !x.is_finite())) {
            return Err(Error::InvalidStepFunction("non-finite IEEE value in a finite cell".into()));
        }
        Ok(Self::canonical(breakpoints, values))
    }

    /// Builds from finite values.
    pub fn from_finite(breakpoints: Vec<T>, values: Vec<T>) -> Result<Self> {
        Self::new(breakpoints, values.into_iter().map(Extended::Finite).collect())
    }

    /// Builds from contiguous JSON-style cells covering [0, 1].
    pub fn from_cells(cells: &[Cell<T>]) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidStepFunction("no cells".into()));
        }
        for w in cells.windows(2) {
            if w[0].right != w[1].left {
                return Err(Error::InvalidStepFunction(format!(
                    "cells not contiguous at {} / {}",
                    w[0].right, w[1].left
                )));
            }
        }
        let mut bps: Vec<T> = cells.iter().map(|c| c.left).collect();
        bps.push(cells.last().unwrap().right);
        Self::new(bps, cells.iter().map(|c| c.value).collect())
    }

    fn canonical(breakpoints: Vec<T>, values: Vec<Extended<T>>) -> Self {
        let mut bps = Vec::with_capacity(breakpoints.len());
        let mut vals: Vec<Extended<T>> = Vec::with_capacity(values.len());
        bps.push(breakpoints[0]);
        for (j, v) in values.into_iter().enumerate() {
            let right = breakpoints[j + 1];
            if !(right > *bps.last().unwrap()) {
                continue;
            }
            if vals.last() == Some(&v) {
                *bps.last_mut().unwrap() = right;
            } else {
                vals.push(v);
                bps.push(right);
            }
        }
        if vals.is_empty() {
            // every cell degenerate; cannot happen for validated input
            return Self::constant(T::zero());
        }
        *bps.last_mut().unwrap() = T::one();
        Self { breakpoints: bps, values: vals }
    }

    /// Builds from `(left, value)` pieces sorted by `left`, the first at 0;
    /// each piece extends to the next left (the last to 1).
    fn from_sorted_pieces(pieces: Vec<(T, Extended<T>)>) -> Self {
        let mut bps: Vec<T> = pieces.iter().map(|p| p.0).collect();
        bps.push(T::one());
        Self::canonical(bps, pieces.into_iter().map(|p| p.1).collect())
    }

    pub fn constant(v: T) -> Self {
        Self::constant_ext(Extended::Finite(v))
    }

    pub fn constant_ext(v: Extended<T>) -> Self {
        Self { breakpoints: vec![T::zero(), T::one()], values: vec![v] }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    /// `value · χ_{[a, b) ∩ [0, 1]}`.
    pub fn scaled_indicator(a: T, b: T, value: T) -> Self {
        let a = a.max(T::zero()).min(T::one());
        let b = b.max(T::zero()).min(T::one());
        if !(b > a) || value == T::zero() {
            return Self::zero();
        }
        let mut pieces = Vec::with_capacity(3);
        if a > T::zero() {
            pieces.push((T::zero(), Extended::zero()));
        }
        pieces.push((a, Extended::Finite(value)));
        if b < T::one() {
            pieces.push((b, Extended::zero()));
        }
        Self::from_sorted_pieces(pieces)
    }

    pub fn indicator(a: T, b: T) -> Self {
        Self::scaled_indicator(a, b, T::one())
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Extended<T>] {
        &self.values
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell<T>> + '_ {
        self.values.iter().enumerate().map(move |(j, &value)| Cell {
            left: self.breakpoints[j],
            right: self.breakpoints[j + 1],
            value,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.finite().is_some())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    fn cell_index(&self, t: T) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        idx.saturating_sub(1).min(self.values.len() - 1)
    }

    /// Right-continuous evaluation; `t` is clamped to [0, 1].
    pub fn eval(&self, t: T) -> Extended<T> {
        self.values[self.cell_index(t)]
    }

    /// Pointwise combination on the merged partition.
    pub fn zip_with<F>(&self, other: &Self, mut op: F) -> Self
    where
        F: FnMut(Extended<T>, Extended<T>) -> Extended<T>,
    {
        let (a, b) = (&self.breakpoints, &other.breakpoints);
        let (mut i, mut j) = (0usize, 0usize);
        let mut pieces = Vec::with_capacity(self.values.len() + other.values.len());
        let mut left = T::zero();
        while i < self.values.len() && j < other.values.len() {
            pieces.push((left, op(self.values[i], other.values[j])));
            let (ra, rb) = (a[i + 1], b[j + 1]);
            match ra.partial_cmp(&rb).unwrap_or(Ordering::Equal) {
                Ordering::Less => {
                    left = ra;
                    i += 1;
                }
                Ordering::Greater => {
                    left = rb;
                    j += 1;
                }
                Ordering::Equal => {
                    left = ra;
                    i += 1;
                    j += 1;
                }
            }
        }
        Self::from_sorted_pieces(pieces)
    }

    pub fn map<F: FnMut(Extended<T>) -> Extended<T>>(&self, mut op: F) -> Self {
        Self::canonical(self.breakpoints.clone(), self.values.iter().map(|&v| op(v)).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, Extended::add)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, Extended::mul)
    }

    pub fn min(&self, other: &Self) -> Self {
        self.zip_with(other, Extended::min)
    }

    pub fn max(&self, other: &Self) -> Self {
        self.zip_with(other, Extended::max)
    }

    pub fn abs(&self) -> Self {
        self.map(Extended::abs)
    }

    /// `α·f`. Infinite cells stay infinite for `α > 0` and vanish for `α = 0`.
    pub fn scale(&self, alpha: T) -> Result<Self> {
        if alpha < T::zero() && !self.is_finite() {
            return Err(Error::InvalidArgument("negative multiple of +inf".into()));
        }
        Ok(self.map(|v| Extended::Finite(alpha).mul(v)))
    }

    /// `Σ values_j · (b_{j+1} − b_j)`, compensated.
    pub fn integrate(&self) -> Result<T> {
        let mut acc = Neumaier::new();
        for c in self.cells() {
            match c.value {
                Extended::Finite(v) => acc.add(v * (c.right - c.left)),
                Extended::PosInf => {
                    return Err(Error::NonIntegrable { left: c.left.as_f64(), right: c.right.as_f64() })
                }
            }
        }
        Ok(acc.total())
    }

    pub fn sup_abs(&self) -> Extended<T> {
        self.values.iter().fold(Extended::zero(), |m, v| m.max(v.abs()))
    }

    /// Classical `L^p` norm, `p ∈ [1, ∞]`.
    pub fn lp_norm(&self, p: Extended<T>) -> Result<Extended<T>> {
        let p = match p {
            Extended::PosInf => return Ok(self.sup_abs()),
            Extended::Finite(p) if p >= T::one() => p,
            Extended::Finite(p) => {
                return Err(Error::InvalidArgument(format!("L^p norm needs p >= 1, got {p}")))
            }
        };
        let scale = match self.sup_abs() {
            Extended::PosInf => return Ok(Extended::PosInf),
            Extended::Finite(s) if s == T::zero() => return Ok(Extended::zero()),
            Extended::Finite(s) => s,
        };
        let mut acc = T::zero();
        for c in self.cells() {
            if let Extended::Finite(v) = c.value {
                acc = acc + (v.abs() / scale).powf(p) * (c.right - c.left);
            }
        }
        Ok(Extended::Finite(scale * acc.powf(p.recip())))
    }

    /// Exact measure of `{t : f(t) > λ}`.
    pub fn level_set_measure(&self, lambda: T) -> T {
        self.cells()
            .filter(|c| c.value > Extended::Finite(lambda))
            .map(|c| c.right - c.left)
            .sum()
    }

    /// Samples at the midpoints of `resolution` uniform cells.
    pub fn sample_midpoints(&self, resolution: usize) -> Result<GridFunction<T>> {
        let mut samples = Vec::with_capacity(resolution);
        let mut cell = 0usize;
        for j in 0..resolution {
            let t = GridFunction::<T>::midpoint_of(j, resolution);
            while cell + 1 < self.values.len() && self.breakpoints[cell + 1] <= t {
                cell += 1;
            }
            match self.values[cell] {
                Extended::Finite(v) => samples.push(v),
                Extended::PosInf => {
                    return Err(Error::InvalidGrid(format!("infinite sample at t = {t}")))
                }
            }
        }
        GridFunction::new(resolution, samples)
    }

    /// Replaces `f` on `[a, b)` by `pieces` (given as `(left, value)` pairs
    /// tiling `[a, b)`, the first starting at `a`), then clips to [0, 1].
    pub fn splice(&self, a: T, b: T, pieces: &[(T, Extended<T>)]) -> Self {
        let mut cells: Vec<(T, T, Extended<T>)> = Vec::new();
        for c in self.cells() {
            if c.left < a {
                cells.push((c.left, c.right.min(a), c.value));
            }
            if c.right > b {
                cells.push((c.left.max(b), c.right, c.value));
            }
        }
        for (k, &(left, value)) in pieces.iter().enumerate() {
            let right = pieces.get(k + 1).map_or(b, |p| p.0);
            let (l, r) = (left.max(T::zero()), right.min(T::one()));
            if r > l {
                cells.push((l, r, value));
            }
        }
        cells.retain(|c| c.1 > c.0);
        cells.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
        Self::from_sorted_pieces(cells.into_iter().map(|(l, _, v)| (l, v)).collect())
    }

    /// Exact decreasing rearrangement together with the measure-preserving
    /// piecewise translation `ω` satisfying `f = f* ∘ ω`.
    ///
    /// Ties are broken by position, so the map is deterministic.
    pub fn decreasing_rearrangement(&self) -> (Self, Rearrangement<T>) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&i, &j| self.values[j].total_cmp(&self.values[i]).then(i.cmp(&j)));
        let mut dst = vec![T::zero(); self.values.len()];
        let mut pieces = Vec::with_capacity(order.len());
        let mut pos = T::zero();
        for &i in &order {
            dst[i] = pos;
            pieces.push((pos, self.values[i]));
            pos = pos + (self.breakpoints[i + 1] - self.breakpoints[i]);
        }
        let segments = (0..self.values.len())
            .map(|i| Segment { src_left: self.breakpoints[i], src_right: self.breakpoints[i + 1], dst_left: dst[i] })
            .collect();
        (Self::from_sorted_pieces(pieces), Rearrangement { segments })
    }
}

impl<T: Real> Serialize for StepFunction<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.cells())
    }
}

impl<'de, T: Real> Deserialize<'de> for StepFunction<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let cells = Vec::<Cell<T>>::deserialize(deserializer)?;
        Self::from_cells(&cells).map_err(serde::de::Error::custom)
    }
}

/// One piece of a measure-preserving piecewise translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Segment<T> {
    pub src_left: T,
    pub src_right: T,
    pub dst_left: T,
}

/// A measure-preserving map of [0, 1] that translates each source segment
/// onto its destination. Segments tile [0, 1] in source order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Rearrangement<T> {
    segments: Vec<Segment<T>>,
}

impl<T: Real> Rearrangement<T> {
    pub fn new(segments: Vec<Segment<T>>) -> Result<Self> {
        if segments.is_empty()
            || segments[0].src_left != T::zero()
            || segments.last().unwrap().src_right != T::one()
            || segments.windows(2).any(|w| w[0].src_right != w[1].src_left)
        {
            return Err(Error::InvalidArgument("rearrangement segments must tile [0, 1]".into()));
        }
        Ok(Self { segments })
    }

    pub fn identity() -> Self {
        Self { segments: vec![Segment { src_left: T::zero(), src_right: T::one(), dst_left: T::zero() }] }
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn segment_index(&self, t: T) -> usize {
        let idx = self.segments.partition_point(|s| s.src_left <= t);
        idx.saturating_sub(1).min(self.segments.len() - 1)
    }

    pub fn apply(&self, t: T) -> T {
        let s = &self.segments[self.segment_index(t)];
        (s.dst_left + (t - s.src_left)).max(T::zero()).min(T::one())
    }

    /// Interior source breakpoints.
    pub fn breakpoints(&self) -> impl Iterator<Item = T> + '_ {
        self.segments.iter().skip(1).map(|s| s.src_left)
    }

    /// Checks that destinations tile [0, 1] (measure preservation) to `tol`.
    pub fn is_measure_preserving(&self, tol: T) -> bool {
        let mut dst: Vec<(T, T)> =
            self.segments.iter().map(|s| (s.dst_left, s.dst_left + (s.src_right - s.src_left))).collect();
        dst.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
        let mut pos = T::zero();
        for (l, r) in dst {
            if (l - pos).abs() > tol {
                return false;
            }
            pos = r;
        }
        (pos - T::one()).abs() <= tol
    }
}

/// Samples on `resolution` uniform cells; sample `j` represents
/// `[j/M, (j+1)/M)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct GridFunction<T> {
    resolution: usize,
    samples: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(resolution: usize, samples: Vec<T>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidGrid("resolution must be positive".into()));
        }
        if samples.len() != resolution {
            return Err(Error::InvalidGrid(format!("{} samples for resolution {resolution}", samples.len())));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        Ok(Self { resolution, samples })
    }

    pub fn from_fn<F: FnMut(T) -> T>(resolution: usize, mut f: F) -> Result<Self> {
        let samples = (0..resolution).map(|j| f(Self::midpoint_of(j, resolution))).collect();
        Self::new(resolution, samples)
    }

    pub fn midpoint_of(j: usize, resolution: usize) -> T {
        (T::lit(j as f64) + T::lit(0.5)) / T::lit(resolution as f64)
    }

    pub fn midpoint(&self, j: usize) -> T {
        Self::midpoint_of(j, self.resolution)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    /// `#{j : samples_j > λ} / M`.
    pub fn level_set_measure(&self, lambda: T) -> T {
        let count = self.samples.iter().filter(|&&s| s > lambda).count();
        T::lit(count as f64) / T::lit(self.resolution as f64)
    }

    pub fn mean(&self) -> T {
        self.samples.iter().copied().sum::<T>() / T::lit(self.resolution as f64)
    }

    pub fn max(&self) -> T {
        self.samples.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Samples sorted nonincreasingly, ties by original index, together with
    /// the permutation `π` satisfying `output[π(j)] = input[j]`.
    pub fn rearrange_decreasing(&self) -> (Self, CellPermutation) {
        let mut order: Vec<usize> = (0..self.resolution).collect();
        order.sort_by(|&i, &j| {
            self.samples[j].partial_cmp(&self.samples[i]).unwrap_or(Ordering::Equal).then(i.cmp(&j))
        });
        let mut map = vec![0usize; self.resolution];
        for (rank, &i) in order.iter().enumerate() {
            map[i] = rank;
        }
        let sorted = order.iter().map(|&i| self.samples[i]).collect();
        (
            Self { resolution: self.resolution, samples: sorted },
            CellPermutation { resolution: self.resolution, map },
        )
    }

    /// The same samples as a step function on uniform cells.
    pub fn to_step_function(&self) -> StepFunction<T> {
        let m = T::lit(self.resolution as f64);
        let bps = (0..=self.resolution).map(|j| T::lit(j as f64) / m).collect();
        StepFunction::canonical(bps, self.samples.iter().map(|&s| Extended::Finite(s)).collect())
    }

    /// `index,value` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (j, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{j},{s}\n"));
        }
        out
    }
}

impl<'de, T: Real> Deserialize<'de> for GridFunction<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(bound = "T: Real")]
        struct Raw<T> {
            resolution: usize,
            samples: Vec<T>,
        }
        let raw = Raw::<T>::deserialize(deserializer)?;
        Self::new(raw.resolution, raw.samples).map_err(serde::de::Error::custom)
    }
}

/// Discrete measure-preserving map: a bijection on `{0, …, M−1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CellPermutation {
    resolution: usize,
    map: Vec<usize>,
}

impl CellPermutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let p = Self { resolution: map.len(), map };
        if p.resolution == 0 || !p.is_bijection() {
            return Err(Error::NotABijection { resolution: p.resolution });
        }
        Ok(p)
    }

    pub fn identity(resolution: usize) -> Self {
        Self { resolution, map: (0..resolution).collect() }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, j: usize) -> usize {
        self.map[j]
    }

    /// Sorts the image and compares with `0..M`.
    pub fn is_bijection(&self) -> bool {
        let mut image = self.map.clone();
        image.sort_unstable();
        image.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0usize; self.resolution];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Self { resolution: self.resolution, map: inv }
    }
}

impl<'de> Deserialize<'de> for CellPermutation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            resolution: usize,
            map: Vec<usize>,
        }
        let raw = Raw::deserialize(deserializer)?;
        if raw.map.len() != raw.resolution {
            return Err(serde::de::Error::custom("map length differs from resolution"));
        }
        Self::new(raw.map).map_err(serde::de::Error::custom)
    }
}
