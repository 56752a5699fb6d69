//! Mixed continuous/binary input spaces, unit rescaling, candidate sets and
//! Latin-hypercube designs (plain and sliced).
//!
//! Points are held in unit coordinates: every continuous coordinate lies in
//! `[0, 1]` and binary coordinates are flags. Internally the emulators work on
//! flat rows laid out as `[continuous..., binary as 0.0/1.0...]`.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: VariableKind,
    #[serde(default)]
    pub lower: f64,
    #[serde(default = "one")]
    pub upper: f64,
}

fn one() -> f64 {
    1.0
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        VariableSpec {
            name: name.into(),
            label: None,
            kind: VariableKind::Continuous,
            lower,
            upper,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        VariableSpec {
            name: name.into(),
            label: None,
            kind: VariableKind::Binary,
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Ordered list of variables, continuous ones first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<VariableSpec>", into = "Vec<VariableSpec>")]
pub struct DesignSpace {
    variables: Vec<VariableSpec>,
    n_continuous: usize,
    n_binary: usize,
}

impl TryFrom<Vec<VariableSpec>> for DesignSpace {
    type Error = Error;

    fn try_from(variables: Vec<VariableSpec>) -> Result<Self> {
        DesignSpace::new(variables)
    }
}

impl From<DesignSpace> for Vec<VariableSpec> {
    fn from(space: DesignSpace) -> Self {
        space.variables
    }
}

impl DesignSpace {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::contract("design space needs at least one variable"));
        }
        let mut seen = HashSet::new();
        let mut n_continuous = 0;
        let mut n_binary = 0;
        for v in &variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::contract(format!("duplicate variable name `{}`", v.name)));
            }
            match v.kind {
                VariableKind::Continuous => {
                    if n_binary > 0 {
                        return Err(Error::contract(format!(
                            "continuous variable `{}` listed after a binary variable",
                            v.name
                        )));
                    }
                    if !(v.lower.is_finite() && v.upper.is_finite() && v.lower < v.upper) {
                        return Err(Error::contract(format!(
                            "variable `{}` needs finite lower < upper",
                            v.name
                        )));
                    }
                    n_continuous += 1;
                }
                VariableKind::Binary => n_binary += 1,
            }
        }
        Ok(DesignSpace {
            variables,
            n_continuous,
            n_binary,
        })
    }

    /// The eight retrofit options of the bundled building problem, in native
    /// units: insulation thicknesses (m), window size and overhang/opening
    /// fractions, roof emissivity, and triple glazing as the binary flag.
    pub fn building_retrofit() -> Self {
        DesignSpace::new(vec![
            VariableSpec::continuous("x1", 0.0, 0.5).with_label("Wall insulation thickness (m)"),
            VariableSpec::continuous("x2", 0.0, 0.5).with_label("Roof insulation thickness (m)"),
            VariableSpec::continuous("x3", 0.0, 0.1).with_label("Ground insulation thickness (m)"),
            VariableSpec::continuous("x4", 0.2, 1.0).with_label("Window size (fraction of wall)"),
            VariableSpec::continuous("x5", 0.0, 1.0).with_label("Window overhang (fraction of window height)"),
            VariableSpec::continuous("x6", 0.0, 1.0).with_label("Window opening (fraction of window area)"),
            VariableSpec::continuous("x7", 0.4, 1.0).with_label("Roof emissivity"),
            VariableSpec::binary("x8").with_label("Triple glazing"),
        ])
        .expect("static space is valid")
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn n_continuous(&self) -> usize {
        self.n_continuous
    }

    pub fn n_binary(&self) -> usize {
        self.n_binary
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Number of binary-level combinations.
    pub fn n_slices(&self) -> usize {
        1usize << self.n_binary
    }

    /// Binary levels of slice `s`; bit `j` of `s` is the level of binary `j`.
    pub fn slice_levels(&self, s: usize) -> Vec<bool> {
        (0..self.n_binary).map(|j| (s >> j) & 1 == 1).collect()
    }

    pub fn to_unit(&self, native: &[f64]) -> Result<InputPoint> {
        if native.len() != self.dim() {
            return Err(Error::contract(format!(
                "expected {} values, got {}",
                self.dim(),
                native.len()
            )));
        }
        let mut continuous = Vec::with_capacity(self.n_continuous);
        let mut binary = Vec::with_capacity(self.n_binary);
        for (v, &x) in self.variables.iter().zip(native) {
            let in_range = match v.kind {
                VariableKind::Continuous => x >= v.lower && x <= v.upper,
                VariableKind::Binary => x == 0.0 || x == 1.0,
            };
            if !in_range {
                return Err(Error::Range {
                    name: v.name.clone(),
                    value: x,
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            match v.kind {
                VariableKind::Continuous => continuous.push((x - v.lower) / (v.upper - v.lower)),
                VariableKind::Binary => binary.push(x == 1.0),
            }
        }
        Ok(InputPoint { continuous, binary })
    }

    pub fn to_native(&self, point: &InputPoint) -> Vec<f64> {
        let cont = self.variables[..self.n_continuous]
            .iter()
            .zip(&point.continuous)
            .map(|(v, &u)| v.lower + u * (v.upper - v.lower));
        let bin = point.binary.iter().map(|&b| if b { 1.0 } else { 0.0 });
        cont.chain(bin).collect()
    }

    /// Native values from a flat unit row.
    pub fn row_to_native(&self, row: &[f64]) -> Vec<f64> {
        self.variables
            .iter()
            .zip(row)
            .map(|(v, &u)| match v.kind {
                VariableKind::Continuous => v.lower + u * (v.upper - v.lower),
                VariableKind::Binary => u,
            })
            .collect()
    }

    pub fn check_point(&self, point: &InputPoint) -> Result<()> {
        if point.continuous.len() != self.n_continuous || point.binary.len() != self.n_binary {
            return Err(Error::contract(format!(
                "point has {}+{} coordinates, space has {}+{}",
                point.continuous.len(),
                point.binary.len(),
                self.n_continuous,
                self.n_binary
            )));
        }
        if let Some(i) = point.continuous.iter().position(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::Range {
                name: self.variables[i].name.clone(),
                value: point.continuous[i],
                lower: 0.0,
                upper: 1.0,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPoint {
    pub continuous: Vec<f64>,
    pub binary: Vec<bool>,
}

impl InputPoint {
    pub fn new(continuous: Vec<f64>, binary: Vec<bool>) -> Self {
        InputPoint { continuous, binary }
    }

    pub fn dim(&self) -> usize {
        self.continuous.len() + self.binary.len()
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut row = self.continuous.clone();
        row.extend(self.binary.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        row
    }

    pub fn from_row(row: &[f64], n_continuous: usize) -> Self {
        InputPoint {
            continuous: row[..n_continuous].to_vec(),
            binary: row[n_continuous..].iter().map(|&b| b != 0.0).collect(),
        }
    }
}

/// Exact-equality key for a flat row.
pub(crate) fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|x| x.to_bits()).collect()
}

/// A fixed, indexed set of candidate points stored as flat unit rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    n_continuous: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl CandidateSet {
    /// One random Latin hypercube per binary slice, concatenated. With one
    /// binary variable and `count = 1_000_000` this is two hypercubes of
    /// 500 000 points each. A remainder goes to the leading slices.
    pub fn generate(space: &DesignSpace, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::contract("candidate count must be positive"));
        }
        let slices = space.n_slices();
        let mut rng = rng_from(seed);
        let mut points = Vec::with_capacity(count);
        for s in 0..slices {
            let n = count / slices + usize::from(s < count % slices);
            if n == 0 {
                continue;
            }
            let levels = space.slice_levels(s);
            let cont = lhs_columns(space.n_continuous(), n, &mut rng);
            for i in 0..n {
                let c = cont.iter().map(|col| col[i]).collect();
                points.push(InputPoint::new(c, levels.clone()));
            }
        }
        Ok(Self::from_points(space, &points))
    }

    /// Builds a set, dropping exact duplicates (first occurrence wins).
    pub fn from_points(space: &DesignSpace, points: &[InputPoint]) -> Self {
        let dim = space.dim();
        let mut seen = HashSet::with_capacity(points.len());
        let mut rows = Vec::with_capacity(points.len() * dim);
        for p in points {
            let row = p.to_row();
            if seen.insert(row_key(&row)) {
                rows.extend(row);
            }
        }
        CandidateSet {
            n_continuous: space.n_continuous(),
            dim,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.rows.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> InputPoint {
        InputPoint::from_row(self.row(i), self.n_continuous)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.dim)
    }
}

/// `n_dims` independent stratified columns of length `n`, each a random
/// permutation of the strata with uniform jitter inside each stratum.
fn lhs_columns<R: Rng>(n_dims: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let scale = 1.0 / n as f64;
    (0..n_dims)
        .map(|_| {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(rng);
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.random::<f64>()) * scale)
                .collect()
        })
        .collect()
}

/// Random Latin hypercube over the continuous dimensions. Binary levels are
/// balanced across slices (as evenly as `n` allows) and randomly assigned.
pub fn latin_hypercube(space: &DesignSpace, n: usize, seed: u64) -> Result<Vec<InputPoint>> {
    if n == 0 {
        return Err(Error::contract("latin_hypercube needs n >= 1"));
    }
    let mut rng = rng_from(seed);
    let cont = lhs_columns(space.n_continuous(), n, &mut rng);
    let mut slice_of: Vec<usize> = (0..n).map(|i| i % space.n_slices()).collect();
    slice_of.shuffle(&mut rng);
    Ok((0..n)
        .map(|i| {
            InputPoint::new(
                cont.iter().map(|col| col[i]).collect(),
                space.slice_levels(slice_of[i]),
            )
        })
        .collect())
}

/// Sliced Latin hypercube: `n_per_slice` points for each binary-level
/// combination. Every slice is a Latin hypercube with `n_per_slice` strata
/// and the union is a Latin hypercube with `n_per_slice * slices` strata.
///
/// Construction: per dimension, the fine strata are grouped into
/// `n_per_slice` coarse blocks of `slices` consecutive fine strata; each block
/// hands one fine stratum to every slice through a random permutation, and
/// each slice then shuffles its strata across its own points.
pub fn sliced_latin_hypercube(
    space: &DesignSpace,
    n_per_slice: usize,
    seed: u64,
) -> Result<Vec<InputPoint>> {
    if space.n_binary() == 0 {
        return Err(Error::contract(
            "sliced design needs at least one binary variable; use latin_hypercube",
        ));
    }
    if n_per_slice == 0 {
        return Err(Error::contract("sliced_latin_hypercube needs n_per_slice >= 1"));
    }
    let t = space.n_slices();
    let m = n_per_slice;
    let n = m * t;
    let scale = 1.0 / n as f64;
    let mut rng = rng_from(seed);

    // values[d][s][i]: dimension d, slice s, point i
    let mut values = vec![vec![Vec::with_capacity(m); t]; space.n_continuous()];
    for dim_values in values.iter_mut() {
        let mut per_slice: Vec<Vec<usize>> = vec![Vec::with_capacity(m); t];
        let mut perm: Vec<usize> = (0..t).collect();
        for block in 0..m {
            perm.shuffle(&mut rng);
            for (s, &offset) in perm.iter().enumerate() {
                per_slice[s].push(block * t + offset);
            }
        }
        for (s, strata) in per_slice.iter_mut().enumerate() {
            strata.shuffle(&mut rng);
            dim_values[s] = strata
                .iter()
                .map(|&fine| (fine as f64 + rng.random::<f64>()) * scale)
                .collect();
        }
    }

    let mut points = Vec::with_capacity(n);
    for s in 0..t {
        let levels = space.slice_levels(s);
        for i in 0..m {
            points.push(InputPoint::new(
                values.iter().map(|d| d[s][i]).collect(),
                levels.clone(),
            ));
        }
    }
    Ok(points)
}

/// Every point repeated `k` times, tagged with replicate ids `0..k`.
pub fn replicate_design<T: Clone>(points: &[T], k: usize) -> Result<Vec<(T, usize)>> {
    if k == 0 {
        return Err(Error::contract("replicate count must be >= 1"));
    }
    Ok(points
        .iter()
        .flat_map(|p| (0..k).map(move |r| (p.clone(), r)))
        .collect())
}

/// CSV with header `id,rep,<names>` in native units.
pub fn design_csv<'a, I>(space: &DesignSpace, jobs: I) -> String
where
    I: IntoIterator<Item = (usize, usize, &'a [f64])>,
{
    let mut out = String::from("id,rep");
    for v in space.variables() {
        out.push(',');
        out.push_str(&v.name);
    }
    out.push('\n');
    for (id, rep, row) in jobs {
        let _ = write!(out, "{id},{rep}");
        for x in space.row_to_native(row) {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}
