//! Two-dimensional projections of the candidate statuses, and 1D NROY
//! histograms.

use serde::{Deserialize, Serialize};

use crate::design::{CandidateSet, DesignSpace, VariableKind};
use crate::error::{Error, Result};
use crate::matcher::CandidateStatus;

/// Minimum implausibility is displayed within `[-cap, cap]`.
pub const IMPLAUSIBILITY_CAP: f64 = 3.0;
/// Lowest log10 optical depth reported.
pub const DEPTH_FLOOR: f64 = -10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub count: usize,
    pub nroy: usize,
    /// `None` for empty cells.
    pub min_impl: Option<f64>,
    pub depth_log10: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGrid {
    pub var_i: usize,
    pub var_j: usize,
    pub cells_i: usize,
    pub cells_j: usize,
    /// Row-major in `(cell_i, cell_j)`.
    pub cells: Vec<GridCell>,
}

impl ProjectionGrid {
    pub fn cell(&self, ci: usize, cj: usize) -> &GridCell {
        &self.cells[ci * self.cells_j + cj]
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }
}

fn cells_for(space: &DesignSpace, v: usize, resolution: usize) -> usize {
    match space.variables()[v].kind {
        VariableKind::Binary => 2,
        VariableKind::Continuous => resolution,
    }
}

/// Unit coordinate to cell index; the upper edge belongs to the last cell.
fn cell_of(u: f64, cells: usize) -> usize {
    ((u * cells as f64).floor().max(0.0) as usize).min(cells - 1)
}

/// Per pair of variables, the minimum of the combined implausibility in
/// each cell and the log10 proportion of NROY candidates.
pub fn projection_grids(
    space: &DesignSpace,
    candidates: &CandidateSet,
    statuses: &[CandidateStatus],
    resolution: usize,
) -> Result<Vec<ProjectionGrid>> {
    if candidates.is_empty() {
        return Err(Error::contract("no candidates to project"));
    }
    if statuses.len() != candidates.len() || resolution == 0 {
        return Err(Error::contract("statuses must match candidates and resolution must be positive"));
    }
    let d = space.dim();
    let mut grids = Vec::with_capacity(d * (d - 1) / 2);
    for vi in 0..d {
        for vj in vi + 1..d {
            let (ni, nj) = (cells_for(space, vi, resolution), cells_for(space, vj, resolution));
            let mut count = vec![0usize; ni * nj];
            let mut nroy = vec![0usize; ni * nj];
            let mut min_impl = vec![f64::INFINITY; ni * nj];
            for (row, s) in candidates.rows().zip(statuses) {
                let k = cell_of(row[vi], ni) * nj + cell_of(row[vj], nj);
                count[k] += 1;
                if s.state.is_nroy() {
                    nroy[k] += 1;
                }
                min_impl[k] = min_impl[k].min(s.implausibility);
            }
            let cells = (0..ni * nj)
                .map(|k| {
                    if count[k] == 0 {
                        return GridCell {
                            count: 0,
                            nroy: 0,
                            min_impl: None,
                            depth_log10: None,
                        };
                    }
                    let depth = if nroy[k] == 0 {
                        DEPTH_FLOOR
                    } else {
                        (nroy[k] as f64 / count[k] as f64).log10().max(DEPTH_FLOOR)
                    };
                    GridCell {
                        count: count[k],
                        nroy: nroy[k],
                        min_impl: Some(min_impl[k].clamp(-IMPLAUSIBILITY_CAP, IMPLAUSIBILITY_CAP)),
                        depth_log10: Some(depth),
                    }
                })
                .collect();
            grids.push(ProjectionGrid {
                var_i: vi,
                var_j: vj,
                cells_i: ni,
                cells_j: nj,
                cells,
            });
        }
    }
    Ok(grids)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Long format: `var_i,var_j,cell_i,cell_j,min_impl,depth_log10,count`,
/// with `NA` for empty cells.
pub fn grids_csv(space: &DesignSpace, grids: &[ProjectionGrid]) -> String {
    let names: Vec<&str> = space.variables().iter().map(|v| v.name.as_str()).collect();
    let mut out = String::from("var_i,var_j,cell_i,cell_j,min_impl,depth_log10,count\n");
    for g in grids {
        for ci in 0..g.cells_i {
            for cj in 0..g.cells_j {
                let c = g.cell(ci, cj);
                out.push_str(&format!(
                    "{},{},{ci},{cj},{},{},{}\n",
                    names[g.var_i],
                    names[g.var_j],
                    opt(c.min_impl),
                    opt(c.depth_log10),
                    c.count
                ));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NroyHistogram {
    pub variable: usize,
    /// Bin edges on the unit scale; `bins + 1` values.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub nroy: Vec<usize>,
    /// NROY proportion per bin divided by the largest such proportion.
    pub relative: Vec<f64>,
    /// The largest per-bin NROY proportion: `absolute = relative * scale`.
    pub scale: f64,
}

impl NroyHistogram {
    pub fn absolute(&self) -> Vec<f64> {
        self.relative.iter().map(|r| r * self.scale).collect()
    }
}

pub fn nroy_histograms(
    space: &DesignSpace,
    candidates: &CandidateSet,
    statuses: &[CandidateStatus],
    bins: usize,
) -> Result<Vec<NroyHistogram>> {
    if candidates.is_empty() || bins == 0 || statuses.len() != candidates.len() {
        return Err(Error::contract("histograms need candidates, matching statuses and at least one bin"));
    }
    Ok((0..space.dim())
        .map(|v| {
            let n = cells_for(space, v, bins);
            let mut counts = vec![0usize; n];
            let mut nroy = vec![0usize; n];
            for (row, s) in candidates.rows().zip(statuses) {
                let b = cell_of(row[v], n);
                counts[b] += 1;
                if s.state.is_nroy() {
                    nroy[b] += 1;
                }
            }
            let prop: Vec<f64> = counts
                .iter()
                .zip(&nroy)
                .map(|(&c, &k)| if c == 0 { 0.0 } else { k as f64 / c as f64 })
                .collect();
            let scale = prop.iter().copied().fold(0.0, f64::max);
            NroyHistogram {
                variable: v,
                edges: (0..=n).map(|k| k as f64 / n as f64).collect(),
                relative: prop.iter().map(|p| if scale > 0.0 { p / scale } else { 0.0 }).collect(),
                counts,
                nroy,
                scale,
            }
        })
        .collect())
}

/// `variable,bin,lower,upper,count,nroy,relative,scale`, edges in native
/// units.
pub fn histograms_csv(space: &DesignSpace, hists: &[NroyHistogram]) -> String {
    let mut out = String::from("variable,bin,lower,upper,count,nroy,relative,scale\n");
    for h in hists {
        let spec = &space.variables()[h.variable];
        let native = |u: f64| spec.lower + u * (spec.upper - spec.lower);
        for b in 0..h.counts.len() {
            out.push_str(&format!(
                "{},{b},{},{},{},{},{},{}\n",
                spec.name,
                native(h.edges[b]),
                native(h.edges[b + 1]),
                h.counts[b],
                h.nroy[b],
                h.relative[b],
                h.scale
            ));
        }
    }
    out
}
