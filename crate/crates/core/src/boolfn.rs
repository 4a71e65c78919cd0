//! Boolean target functions in the Fourier–Walsh basis.
//!
//! A target is stored as a sparse map from coordinate subsets to real
//! coefficients, `f(x) = Σ_S f̂_S Π_{i∈S} x_i`. Points of the hypercube are
//! sign vectors (`i8` entries in `{-1, +1}`).
//!
//! Public coordinates are 1-indexed. A junta table over an ordered support
//! `(c_1, …, c_k)` is indexed lexicographically with `-1 < +1` and `c_1` as
//! the most significant position, so entry `m` assigns `+1` to `c_i` iff bit
//! `k-1-i` of `m` is set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest support handled by exhaustive table routines.
pub const MAX_TABLE_SUPPORT: usize = 20;

/// A point of `{±1}^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HypercubePoint(Vec<i8>);

impl HypercubePoint {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if let Some(bad) = bits.iter().find(|&&b| b != 1 && b != -1) {
            return Err(invalid!("hypercube entries must be ±1, found {bad}"));
        }
        Ok(Self(bits))
    }

    pub fn ones(dim: usize) -> Self {
        Self(vec![1; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }

    /// Value of 1-indexed coordinate `i`.
    pub fn get(&self, i: usize) -> i8 {
        self.0[i - 1]
    }

    /// Flips 1-indexed coordinate `i`.
    pub fn flip(&mut self, i: usize) {
        self.0[i - 1] = -self.0[i - 1];
    }
}

pub fn hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// A coordinate subset in canonical (sorted, deduplicated) form.
///
/// Stored 0-indexed; constructed from and displayed as 1-indexed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Subset(Vec<usize>);

impl Subset {
    /// Builds a subset from 1-indexed coordinates, checking they lie in `[dim]`.
    pub fn new(dim: usize, coords: &[usize]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &c in coords {
            if c == 0 || c > dim {
                return Err(invalid!("coordinate {c} outside [1, {dim}]"));
            }
            set.insert(c - 1);
        }
        Ok(Self(set.into_iter().collect()))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub(crate) fn from_indices(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        Self(idx)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-indexed coordinates in increasing order.
    pub fn coords(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub(crate) fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, coord: usize) -> bool {
        coord >= 1 && self.0.binary_search(&(coord - 1)).is_ok()
    }

    /// The character `x^S = Π_{i∈S} x_i`.
    pub fn character(&self, x: &[i8]) -> i8 {
        self.0.iter().fold(1i8, |acc, &i| acc * x[i])
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| c.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Real-valued function on `{±1}^d` given by its Fourier–Walsh expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct BooleanFunction {
    dim: usize,
    terms: BTreeMap<Subset, f64>,
    support: Vec<usize>,
}

impl BooleanFunction {
    /// Builds a function from `(subset, coefficient)` pairs; repeated subsets
    /// are summed and zero coefficients dropped.
    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Subset, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid!("dimension must be positive"));
        }
        let mut map: BTreeMap<Subset, f64> = BTreeMap::new();
        for (s, c) in terms {
            if !c.is_finite() {
                return Err(invalid!("coefficient for {s} is not finite"));
            }
            if s.0.last().is_some_and(|&i| i >= dim) {
                return Err(invalid!("subset {s} outside [1, {dim}]"));
            }
            *map.entry(s).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        let support: BTreeSet<usize> = map.keys().flat_map(|s| s.0.iter().copied()).collect();
        Ok(Self {
            dim,
            terms: map,
            support: support.into_iter().collect(),
        })
    }

    /// `f(x) = Π_{i∈S} x_i`.
    pub fn parity(dim: usize, support: &[usize]) -> Result<Self> {
        let s = Subset::new(dim, support)?;
        if s.is_empty() {
            return Err(invalid!("parity support must be nonempty"));
        }
        Self::from_terms(dim, [(s, 1.0)])
    }

    /// `f(x) = f̃(x_S)` from the value table of `f̃` (see module docs for
    /// the ordering). Coefficients are obtained by a fast Walsh–Hadamard
    /// transform over the `2^k` support patterns.
    pub fn junta_from_table(dim: usize, support: &[usize], table: &[f64]) -> Result<Self> {
        let k = support.len();
        if k > MAX_TABLE_SUPPORT {
            return Err(Error::Capacity(format!("support of size {k} exceeds {MAX_TABLE_SUPPORT}")));
        }
        if table.len() != 1usize << k {
            return Err(invalid!("table has {} entries, expected 2^{k} = {}", table.len(), 1usize << k));
        }
        let mut idx = Vec::with_capacity(k);
        for &c in support {
            if c == 0 || c > dim {
                return Err(invalid!("coordinate {c} outside [1, {dim}]"));
            }
            if idx.contains(&(c - 1)) {
                return Err(invalid!("coordinate {c} repeated in support"));
            }
            idx.push(c - 1);
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("table contains non-finite values"));
        }

        let mut coeffs = table.to_vec();
        walsh_hadamard(&mut coeffs);
        let n = coeffs.len() as f64;
        let scale = table.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut terms = Vec::new();
        for (mask, &raw) in coeffs.iter().enumerate() {
            // bit=1 encodes +1, so χ_A(s) = (-1)^{|A|} (-1)^{popcount(A & m)}
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * raw / n;
            if c.abs() > 1e-14 * scale {
                terms.push((Subset::from_indices(mask_to_indices(mask, &idx)), c));
            }
        }
        Self::from_terms(dim, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Subset, f64)> {
        self.terms.iter().map(|(s, &c)| (s, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, s: &Subset) -> f64 {
        self.terms.get(s).copied().unwrap_or(0.0)
    }

    /// Union of the subsets carrying nonzero coefficients, 1-indexed.
    pub fn support(&self) -> Vec<usize> {
        self.support.iter().map(|i| i + 1).collect()
    }

    pub(crate) fn support_indices(&self) -> &[usize] {
        &self.support
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn eval(&self, x: &HypercubePoint) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(invalid!("point has dimension {}, function has {}", x.dim(), self.dim));
        }
        Ok(self.value(x.as_slice()))
    }

    /// Unchecked evaluation on a raw sign slice of length `dim`.
    pub fn value(&self, x: &[i8]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms.iter().map(|(s, &c)| c * s.character(x) as f64).sum()
    }

    /// `Inf_i(f) = Σ_{S∋i} f̂_S²` for 1-indexed `i`.
    pub fn influence(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.dim {
            return Err(invalid!("coordinate {i} outside [1, {}]", self.dim));
        }
        Ok(self.influence_index(i - 1))
    }

    pub(crate) fn influence_index(&self, i: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(s, _)| s.0.binary_search(&i).is_ok())
            .map(|(_, c)| c * c)
            .sum()
    }

    pub fn influence_profile(&self) -> InfluenceProfile {
        let values: Vec<f64> = (0..self.dim).map(|i| self.influence_index(i)).collect();
        let tau = self
            .support
            .iter()
            .map(|&i| values[i])
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
        InfluenceProfile { values, tau }
    }

    /// `τ = min_{i∈S} Inf_i(f)`.
    pub fn min_support_influence(&self) -> Result<f64> {
        self.influence_profile()
            .tau
            .ok_or_else(|| invalid!("function has empty support"))
    }

    /// Returns `f∘(π·)` where `(π·x)_i = x_{π(i)}`; `perm[i-1] = π(i)`.
    pub fn apply_permutation(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dim {
            return Err(invalid!("permutation has length {}, expected {}", perm.len(), self.dim));
        }
        let mut seen = vec![false; self.dim];
        for &p in perm {
            if p == 0 || p > self.dim || seen[p - 1] {
                return Err(invalid!("not a bijection on [1, {}]", self.dim));
            }
            seen[p - 1] = true;
        }
        // x_{π(i)} for i ∈ S is the monomial over π(S)
        let terms = self.terms.iter().map(|(s, &c)| {
            let mapped = s.0.iter().map(|&i| perm[i] - 1).collect();
            (Subset::from_indices(mapped), c)
        });
        Self::from_terms(self.dim, terms)
    }

    /// Value table of `f̃` over the support, in the module's pattern order.
    pub fn support_table(&self) -> Result<Vec<f64>> {
        self.table_over(&self.support)
    }

    /// Value table of `f` restricted to patterns on the given 0-indexed
    /// coordinates (all other coordinates set to +1).
    pub(crate) fn table_over(&self, coords: &[usize]) -> Result<Vec<f64>> {
        let k = coords.len();
        if k > MAX_TABLE_SUPPORT {
            return Err(Error::Capacity(format!("table over {k} coordinates exceeds {MAX_TABLE_SUPPORT}")));
        }
        let mut x = vec![1i8; self.dim];
        Ok((0..1usize << k)
            .map(|m| {
                write_pattern(m, coords, &mut x);
                self.value(&x)
            })
            .collect())
    }

    /// Whether `f` takes only the values ±1 (checked on the support table).
    pub fn is_boolean_valued(&self) -> bool {
        match self.support_table() {
            Ok(t) => t.iter().all(|v| (v.abs() - 1.0).abs() < 1e-9),
            Err(_) => false,
        }
    }

    /// Sum of squared coefficients, `E[f²]` under the uniform law.
    pub fn l2_norm_sq(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum()
    }

    /// `max |f|`, computed exactly over the support patterns.
    pub fn sup_norm(&self) -> Result<f64> {
        Ok(self.support_table()?.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceProfile {
    /// `Inf_i(f)` for `i = 1..=d` (stored at index `i-1`).
    pub values: Vec<f64>,
    /// Minimum influence over the support; `None` for constant functions.
    pub tau: Option<f64>,
}

/// Sign pattern `m` on `k` ordered coordinates: bit `k-1-i` set means `+1`.
pub fn pattern_sign(m: usize, i: usize, k: usize) -> i8 {
    if (m >> (k - 1 - i)) & 1 == 1 {
        1
    } else {
        -1
    }
}

/// Writes pattern `m` over `coords` (0-indexed) into `x`.
pub(crate) fn write_pattern(m: usize, coords: &[usize], x: &mut [i8]) {
    let k = coords.len();
    for (i, &c) in coords.iter().enumerate() {
        x[c] = pattern_sign(m, i, k);
    }
}

/// Pattern index of `x` restricted to `coords` (0-indexed).
#[cfg(test)]
pub(crate) fn read_pattern(x: &[i8], coords: &[usize]) -> usize {
    coords.iter().fold(0usize, |m, &c| (m << 1) | usize::from(x[c] > 0))
}

fn mask_to_indices(mask: usize, coords: &[usize]) -> Vec<usize> {
    let k = coords.len();
    (0..k).filter(|&i| (mask >> (k - 1 - i)) & 1 == 1).map(|i| coords[i]).collect()
}

/// In-place unnormalised fast Walsh–Hadamard transform, `O(n log n)`.
pub fn walsh_hadamard(values: &mut [f64]) {
    let n = values.len();
    assert!(n.is_power_of_two(), "length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (values[i], values[i + h]);
                values[i] = a + b;
                values[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// One Fourier term of a function specification file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub subset: Vec<usize>,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JuntaTable {
    pub support: Vec<usize>,
    pub table: Vec<f64>,
}

/// JSON function specification: `dim` plus exactly one of
/// `parity_support`, `junta` or `fourier`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parity_support: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub junta: Option<JuntaTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier: Option<Vec<FourierTerm>>,
}

impl FunctionSpec {
    pub fn parity(dim: usize, support: Vec<usize>) -> Self {
        Self {
            dim,
            parity_support: Some(support),
            junta: None,
            fourier: None,
        }
    }

    pub fn build(&self) -> Result<BooleanFunction> {
        match (&self.parity_support, &self.junta, &self.fourier) {
            (Some(s), None, None) => BooleanFunction::parity(self.dim, s),
            (None, Some(j), None) => BooleanFunction::junta_from_table(self.dim, &j.support, &j.table),
            (None, None, Some(terms)) => {
                let terms = terms
                    .iter()
                    .map(|t| Ok((Subset::new(self.dim, &t.subset)?, t.coeff)))
                    .collect::<Result<Vec<_>>>()?;
                BooleanFunction::from_terms(self.dim, terms)
            }
            _ => Err(invalid!("function spec needs exactly one of parity_support, junta, fourier")),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<BooleanFunction> {
        Self::from_json(&std::fs::read_to_string(path)?)?.build()
    }
}

impl From<&BooleanFunction> for FunctionSpec {
    fn from(f: &BooleanFunction) -> Self {
        Self {
            dim: f.dim,
            parity_support: None,
            junta: None,
            fourier: Some(
                f.terms()
                    .map(|(s, c)| FourierTerm {
                        subset: s.coords(),
                        coeff: c,
                    })
                    .collect(),
            ),
        }
    }
}

/// The 7-junta `½ x₁⋯x₅ (1 + x₆ + x₇ − x₆x₇)` embedded in dimension `dim`.
pub fn seven_junta(dim: usize) -> Result<BooleanFunction> {
    let support: Vec<usize> = (1..=7).collect();
    let table: Vec<f64> = (0..128usize)
        .map(|m| {
            let x: Vec<f64> = (0..7).map(|i| pattern_sign(m, i, 7) as f64).collect();
            let head: f64 = x[..5].iter().product();
            0.5 * head * (1.0 + x[5] + x[6] - x[5] * x[6])
        })
        .collect();
    BooleanFunction::junta_from_table(dim, &support, &table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force flip-disagreement probability over support patterns.
    fn flip_probability(f: &BooleanFunction, i: usize) -> f64 {
        let mut coords = f.support_indices().to_vec();
        if !coords.contains(&(i - 1)) {
            coords.push(i - 1);
        }
        let k = coords.len();
        let mut x = vec![1i8; f.dim()];
        let mut differ = 0usize;
        for m in 0..1usize << k {
            write_pattern(m, &coords, &mut x);
            let a = f.value(&x);
            x[i - 1] = -x[i - 1];
            let b = f.value(&x);
            if (a - b).abs() > 1e-12 {
                differ += 1;
            }
        }
        differ as f64 / (1usize << k) as f64
    }

    fn point(bits: &[i8]) -> HypercubePoint {
        HypercubePoint::new(bits.to_vec()).unwrap()
    }

    #[test]
    fn parity_examples() {
        let f = BooleanFunction::parity(50, &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(f.num_terms(), 1);
        assert_eq!(f.support(), vec![1, 2, 3, 4, 5]);
        let mut x = HypercubePoint::ones(50);
        x.flip(1);
        assert_eq!(f.eval(&x).unwrap(), -1.0);

        let g = BooleanFunction::parity(3, &[1]).unwrap();
        assert_eq!(g.eval(&point(&[-1, 1, 1])).unwrap(), -1.0);

        let h = BooleanFunction::parity(10, &[1, 2]).unwrap();
        assert_eq!(h.eval(&HypercubePoint::ones(10)).unwrap(), 1.0);

        assert!(BooleanFunction::parity(3, &[4]).is_err());
        assert!(BooleanFunction::parity(3, &[0]).is_err());
        assert!(BooleanFunction::parity(3, &[]).is_err());
    }

    #[test]
    fn seven_junta_has_four_half_terms() {
        let f = seven_junta(50).unwrap();
        assert_eq!(f.num_terms(), 4);
        for (_, c) in f.terms() {
            assert_eq!(c.abs(), 0.5);
        }
        // term-by-term expansion of the product
        let expected = [
            (vec![1, 2, 3, 4, 5], 0.5),
            (vec![1, 2, 3, 4, 5, 6], 0.5),
            (vec![1, 2, 3, 4, 5, 7], 0.5),
            (vec![1, 2, 3, 4, 5, 6, 7], -0.5),
        ];
        for (s, c) in expected {
            assert_eq!(f.coefficient(&Subset::new(50, &s).unwrap()), c);
        }
        let mut x = HypercubePoint::ones(50);
        x.flip(6);
        x.flip(7);
        assert_eq!(f.eval(&x).unwrap(), -1.0);
    }

    #[test]
    fn small_tables() {
        let f = BooleanFunction::junta_from_table(4, &[3], &[1.0, -1.0]).unwrap();
        // pattern 0 is x_3 = -1 → +1, so f = -x_3
        assert_eq!(f.num_terms(), 1);
        assert_eq!(f.coefficient(&Subset::new(4, &[3]).unwrap()), -1.0);

        let c = BooleanFunction::junta_from_table(4, &[1, 2], &[1.0; 4]).unwrap();
        assert_eq!(c.num_terms(), 1);
        assert_eq!(c.coefficient(&Subset::empty()), 1.0);
        assert!(c.support().is_empty());

        assert!(BooleanFunction::junta_from_table(4, &[1, 2], &[1.0; 3]).is_err());
    }

    #[test]
    fn empty_function_is_zero() {
        let f = BooleanFunction::from_terms(5, []).unwrap();
        assert_eq!(f.eval(&HypercubePoint::ones(5)).unwrap(), 0.0);
        assert!(f.eval(&HypercubePoint::ones(4)).is_err());
        assert!(f.min_support_influence().is_err());
    }

    #[test]
    fn influence_examples() {
        let p = BooleanFunction::parity(20, &[2, 5, 9]).unwrap();
        assert_eq!(p.influence(5).unwrap(), 1.0);
        assert_eq!(p.influence(6).unwrap(), 0.0);
        assert_eq!(p.min_support_influence().unwrap(), 1.0);

        let j = seven_junta(50).unwrap();
        assert_eq!(j.influence(6).unwrap(), 0.5);
        assert_eq!(flip_probability(&j, 6), 0.5);
        assert_eq!(j.min_support_influence().unwrap(), 0.5);
        assert_eq!(j.influence(30).unwrap(), 0.0);
        assert!(j.influence(51).is_err());

        let mixed = BooleanFunction::from_terms(
            5,
            [(Subset::new(5, &[1]).unwrap(), 1.0), (Subset::new(5, &[1, 2]).unwrap(), 0.1)],
        )
        .unwrap();
        assert!((mixed.min_support_influence().unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn permutation_examples() {
        let f = BooleanFunction::parity(5, &[1, 2]).unwrap();
        let id: Vec<usize> = (1..=5).collect();
        assert_eq!(f.apply_permutation(&id).unwrap(), f);
        let swap = vec![1, 3, 2, 4, 5];
        let g = f.apply_permutation(&swap).unwrap();
        assert_eq!(g, BooleanFunction::parity(5, &[1, 3]).unwrap());
        assert!(f.apply_permutation(&[1, 1, 2, 3, 4]).is_err());
        assert!(f.apply_permutation(&[1, 2, 3]).is_err());
    }

    #[test]
    fn spec_file_forms() {
        let p = FunctionSpec::from_json(r#"{"dim": 10, "parity_support": [1, 2]}"#).unwrap();
        assert_eq!(p.build().unwrap(), BooleanFunction::parity(10, &[1, 2]).unwrap());
        let j = FunctionSpec::from_json(r#"{"dim": 4, "junta": {"support": [2], "table": [-1, 1]}}"#).unwrap();
        assert_eq!(j.build().unwrap(), BooleanFunction::parity(4, &[2]).unwrap());
        let four = FunctionSpec::from_json(
            r#"{"dim": 4, "fourier": [{"subset": [1, 3], "coeff": 0.5}, {"subset": [], "coeff": 0.25}]}"#,
        )
        .unwrap()
        .build()
        .unwrap();
        assert_eq!(four.num_terms(), 2);
        assert!(FunctionSpec::from_json(r#"{"dim": 4, "parity_support": [1], "extra": 1}"#).is_err());
        assert!(FunctionSpec::from_json(r#"{"dim": 4}"#).unwrap().build().is_err());
    }

    fn junta_strategy() -> impl Strategy<Value = (usize, Vec<usize>, Vec<f64>)> {
        (1usize..=8).prop_flat_map(|k| {
            (
                Just(k),
                proptest::sample::subsequence((1..=16usize).collect::<Vec<_>>(), k),
                proptest::collection::vec(-3.0f64..3.0, 1 << k),
            )
        })
        .prop_map(|(_, s, t)| (16, s, t))
    }

    proptest! {
        #[test]
        fn table_round_trip_and_parseval((dim, support, table) in junta_strategy()) {
            let f = BooleanFunction::junta_from_table(dim, &support, &table).unwrap();
            let coords: Vec<usize> = support.iter().map(|c| c - 1).collect();
            let mut x = vec![1i8; dim];
            let mut mean_sq = 0.0;
            for (m, &t) in table.iter().enumerate() {
                write_pattern(m, &coords, &mut x);
                let v = f.value(&x);
                prop_assert!((v - t).abs() < 1e-12);
                mean_sq += v * v;
            }
            mean_sq /= table.len() as f64;
            prop_assert!((mean_sq - f.l2_norm_sq()).abs() < 1e-12);
        }

        #[test]
        fn boolean_influence_is_flip_probability(
            support in proptest::sample::subsequence((1..=12usize).collect::<Vec<_>>(), 1..=6),
            bits in proptest::collection::vec(any::<bool>(), 64),
        ) {
            let k = support.len();
            let table: Vec<f64> = bits[..1 << k].iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let f = BooleanFunction::junta_from_table(12, &support, &table).unwrap();
            for i in 1..=12 {
                prop_assert!((f.influence(i).unwrap() - flip_probability(&f, i)).abs() < 1e-12);
            }
        }

        #[test]
        fn off_support_flips_do_not_change_value(
            (dim, support, table) in junta_strategy(),
            seed_bits in proptest::collection::vec(any::<bool>(), 16),
            flip in 1usize..=16,
        ) {
            let f = BooleanFunction::junta_from_table(dim, &support, &table).unwrap();
            let mut x: Vec<i8> = seed_bits.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let before = f.value(&x);
            if !f.support().contains(&flip) {
                x[flip - 1] = -x[flip - 1];
                prop_assert_eq!(before, f.value(&x));
            }
        }

        #[test]
        fn permutation_matches_direct_evaluation(
            (dim, support, table) in junta_strategy(),
            perm in Just((1..=16usize).collect::<Vec<_>>()).prop_shuffle(),
            seed_bits in proptest::collection::vec(any::<bool>(), 16),
        ) {
            let f = BooleanFunction::junta_from_table(dim, &support, &table).unwrap();
            let g = f.apply_permutation(&perm).unwrap();
            let x: Vec<i8> = seed_bits.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let permuted: Vec<i8> = (0..dim).map(|i| x[perm[i] - 1]).collect();
            prop_assert!((g.value(&x) - f.value(&permuted)).abs() < 1e-12);
        }
    }
}
