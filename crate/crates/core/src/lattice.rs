//! Anatomy-anchored mass-spring-damper lattice.
//!
//! A rows x cols grid is laid over the ROI. Each node gets a tissue label by
//! weighted majority vote over its cell, physical parameters from the label
//! table, and a depth parameterization relative to the ILM/RPE curves that is
//! frozen at initialization. Later frames only move the anchors.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::{LayerCurve, RoiSpec};
use crate::frame::BScanFrame;
use crate::geom::{FrameRotation, Vec2};
use crate::math;

/// Tissue classes ordered from shallow to deep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tissue {
    Vitreous,
    Ilm,
    Retina,
    Rpe,
}

impl Tissue {
    pub const ALL: [Tissue; 4] = [Tissue::Vitreous, Tissue::Ilm, Tissue::Retina, Tissue::Rpe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Vitreous => "vitreous",
            Tissue::Ilm => "ilm",
            Tissue::Retina => "retina",
            Tissue::Rpe => "rpe",
        }
    }
}

impl fmt::Display for Tissue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical parameters for one tissue class (model units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Neighborhood order requested by this class (1 or 2).
    pub order: u8,
    pub k_min: f64,
    pub k_max: f64,
}

impl TissueParams {
    const fn new(mass: f64, stiffness: f64, damping: f64, order: u8) -> Self {
        Self {
            mass,
            stiffness,
            damping,
            order,
            k_min: 0.5 * stiffness,
            k_max: 1.5 * stiffness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamTable {
    pub vitreous: TissueParams,
    pub ilm: TissueParams,
    pub retina: TissueParams,
    pub rpe: TissueParams,
}

impl Default for ParamTable {
    fn default() -> Self {
        Self {
            vitreous: TissueParams::new(1.0, 40.0, 0.8, 1),
            ilm: TissueParams::new(1.0, 900.0, 0.1, 2),
            retina: TissueParams::new(1.0, 400.0, 0.3, 1),
            rpe: TissueParams::new(1.0, 2000.0, 0.05, 2),
        }
    }
}

impl ParamTable {
    pub fn get(&self, t: Tissue) -> &TissueParams {
        match t {
            Tissue::Vitreous => &self.vitreous,
            Tissue::Ilm => &self.ilm,
            Tissue::Retina => &self.retina,
            Tissue::Rpe => &self.rpe,
        }
    }
}

/// Output of the parameter mapping for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub order: u8,
}

/// Maps a tissue label (and optional mean cell intensity) to node parameters.
pub fn map_params(table: &ParamTable, label: Tissue, mean_intensity: Option<f64>) -> NodeParams {
    let p = table.get(label);
    let stiffness = match mean_intensity {
        Some(i) => (p.stiffness * (0.5 + i.clamp(0.0, 1.0))).clamp(p.k_min, p.k_max),
        None => p.stiffness,
    };
    NodeParams {
        mass: p.mass,
        stiffness,
        damping: p.damping,
        order: p.order,
    }
}

/// Which node pairs are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Neighborhood {
    /// Axis-aligned neighbors only.
    First,
    /// Axis-aligned plus diagonal neighbors.
    Second,
    /// Axis-aligned everywhere; a diagonal is added when either endpoint's class asks for order 2.
    PerLabel,
}

/// Relative depth of an anchor, frozen after initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Depth {
    /// Fraction of the ILM-to-RPE span (0 at the ILM, 1 at the RPE).
    Relative(f64),
    /// Signed offset from the ILM; negative above it.
    AboveIlm(f64),
    /// Signed offset from the RPE; positive below it.
    BelowRpe(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorNode {
    pub row: usize,
    pub col: usize,
    pub label: Tissue,
    pub depth: Depth,
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub order: u8,
    /// Rest (anchor) position in the aligned frame.
    pub rest: Vec2,
}

impl AnchorNode {
    /// Anchor law: the node position implied by the current layer curves.
    pub fn anchor_y(&self, ilm: f64, rpe: f64) -> f64 {
        match self.depth {
            Depth::Relative(rho) => ilm + rho * (rpe - ilm),
            Depth::AboveIlm(delta) => ilm + delta,
            Depth::BelowRpe(delta) => rpe + delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub stiffness: f64,
    pub damping: f64,
    pub rest_length: f64,
}

/// Maps model units to physical ones for audio-rate integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    /// A spring of this model stiffness on a unit mass resonates at `ref_freq_hz`.
    pub ref_stiffness: f64,
    pub ref_freq_hz: f64,
    /// Physical damping per model damping unit.
    pub damping_scale: f64,
    /// Anchor spring stiffness as a fraction of the node stiffness.
    pub anchor_coupling: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            ref_stiffness: 400.0,
            ref_freq_hz: 440.0,
            damping_scale: 125.0,
            anchor_coupling: 0.25,
        }
    }
}

impl Calibration {
    pub fn stiffness_scale(&self) -> f64 {
        let w = 2.0 * core::f64::consts::PI * self.ref_freq_hz;
        w * w / self.ref_stiffness
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    pub rows: usize,
    pub cols: usize,
    pub nodes: Vec<AnchorNode>,
    pub springs: Vec<Spring>,
    pub neighborhood: Neighborhood,
    pub calibration: Calibration,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("grid {rows}x{cols} too small (minimum 4x4)")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("rpe above ilm at node column {x:.1}; frame rejected")]
    LayerOrder { x: f64 },
    #[error("non-finite anchor at node {node}")]
    NonFinite { node: usize },
}

/// Per-class pixel counts within one node's support.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SupportStats {
    pub counts: [u32; 4],
    pub intensity_sum: f64,
    pub intensity_n: u32,
}

impl SupportStats {
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn mean_intensity(&self) -> Option<f64> {
        (self.intensity_n > 0).then(|| self.intensity_sum / self.intensity_n as f64)
    }
}

/// Weighted majority vote; thin layers count `thin_weight` per pixel and ties
/// go to the deeper class. `None` when the support is empty.
pub fn vote(counts: &[u32; 4], thin_weight: f64) -> Option<Tissue> {
    let mut best: Option<(Tissue, f64)> = None;
    for t in Tissue::ALL {
        let n = counts[t.index()];
        if n == 0 {
            continue;
        }
        let w = match t {
            Tissue::Ilm | Tissue::Rpe => thin_weight,
            _ => 1.0,
        };
        let score = n as f64 * w;
        // Tissue::ALL runs shallow to deep, so `>=` hands ties to the deeper class.
        if best.is_none_or(|(_, s)| score >= s) {
            best = Some((t, score));
        }
    }
    best.map(|(t, _)| t)
}

/// Pixel classification bands around the thin layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelParams {
    pub thin_weight: f64,
    pub ilm_half_band: f64,
    pub rpe_half_band: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self {
            thin_weight: 3.0,
            ilm_half_band: 3.0,
            rpe_half_band: 4.0,
        }
    }
}

/// Class of the pixel at aligned position `(x, y)` given layer rows at that column.
pub fn classify_pixel(y: f64, ilm: f64, rpe: f64, p: &LabelParams) -> Tissue {
    if (y - ilm).abs() <= p.ilm_half_band {
        Tissue::Ilm
    } else if y < ilm {
        Tissue::Vitreous
    } else if y >= rpe - p.rpe_half_band {
        Tissue::Rpe
    } else {
        Tissue::Retina
    }
}

fn cell_bounds(roi: &RoiSpec, rows: usize, cols: usize, i: usize, j: usize) -> (f64, f64, f64, f64) {
    let cw = roi.width() / cols as f64;
    let ch = roi.height() / rows as f64;
    (
        roi.x_min + j as f64 * cw,
        roi.y_min + i as f64 * ch,
        roi.x_min + (j + 1) as f64 * cw,
        roi.y_min + (i + 1) as f64 * ch,
    )
}

/// Labels every node of a `rows x cols` grid over the ROI.
///
/// Pixels are integer positions of the aligned frame. A cell whose columns all
/// lie outside the curve domains inherits the label of its vertical neighbor.
pub fn assign_labels(
    roi: &RoiSpec,
    rows: usize,
    cols: usize,
    ilm: &LayerCurve,
    rpe: &LayerCurve,
    image: Option<(&BScanFrame, &FrameRotation)>,
    params: &LabelParams,
) -> Result<Vec<(Tissue, SupportStats)>, LatticeError> {
    if rows < 4 || cols < 4 {
        return Err(LatticeError::GridTooSmall { rows, cols });
    }
    let domain = ilm.domain().intersect(rpe.domain());
    let mut out: Vec<(Option<Tissue>, SupportStats)> = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let (x0, y0, x1, y1) = cell_bounds(roi, rows, cols, i, j);
            let mut stats = SupportStats::default();
            let (cx0, cx1) = (math::ceil(x0) as i64, math::ceil(x1) as i64);
            let (cy0, cy1) = (math::ceil(y0) as i64, math::ceil(y1) as i64);
            for x in cx0..cx1 {
                if !domain.contains(x) {
                    continue;
                }
                let (yi, yr) = (ilm.at_column(x).unwrap_or(0.0), rpe.at_column(x).unwrap_or(0.0));
                for y in cy0..cy1 {
                    let t = classify_pixel(y as f64, yi, yr, params);
                    stats.counts[t.index()] += 1;
                    if let Some((img, rot)) = image {
                        if let Some(v) = img.sample(rot.to_image(Vec2::new(x as f64, y as f64))) {
                            stats.intensity_sum += v as f64;
                            stats.intensity_n += 1;
                        }
                    }
                }
            }
            out.push((vote(&stats.counts, params.thin_weight), stats));
        }
    }
    // Fill uncovered cells from vertical neighbors (above first, then below).
    for j in 0..cols {
        let column: Vec<Option<Tissue>> = (0..rows).map(|i| out[i * cols + j].0).collect();
        if column.iter().all(Option::is_none) {
            for i in 0..rows {
                out[i * cols + j].0 = Some(if i < rows / 2 { Tissue::Vitreous } else { Tissue::Retina });
            }
            continue;
        }
        for i in 0..rows {
            if column[i].is_none() {
                let above = (0..i).rev().find_map(|k| column[k]);
                let below = (i + 1..rows).find_map(|k| column[k]);
                out[i * cols + j].0 = above.or(below);
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|(t, s)| (t.unwrap_or(Tissue::Vitreous), s))
        .collect())
}

/// Enumerates the coupled node pairs of a grid (each undirected pair once).
pub fn neighbor_pairs(rows: usize, cols: usize, mut diagonal: impl FnMut(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let idx = |i: usize, j: usize| i * cols + j;
    let mut pairs = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let a = idx(i, j);
            if j + 1 < cols {
                pairs.push((a, idx(i, j + 1)));
            }
            if i + 1 < rows {
                pairs.push((a, idx(i + 1, j)));
                if j + 1 < cols && diagonal(a, idx(i + 1, j + 1)) {
                    pairs.push((a, idx(i + 1, j + 1)));
                }
                if j > 0 && diagonal(a, idx(i + 1, j - 1)) {
                    pairs.push((a, idx(i + 1, j - 1)));
                }
            }
        }
    }
    pairs
}

/// Springs over the chosen neighborhood with endpoint-mean coupling.
pub fn build_springs(nodes: &[AnchorNode], rows: usize, cols: usize, neighborhood: Neighborhood) -> Vec<Spring> {
    let pairs = neighbor_pairs(rows, cols, |a, b| match neighborhood {
        Neighborhood::First => false,
        Neighborhood::Second => true,
        Neighborhood::PerLabel => nodes[a].order.max(nodes[b].order) >= 2,
    });
    pairs
        .into_iter()
        .map(|(a, b)| {
            let (na, nb) = (&nodes[a], &nodes[b]);
            Spring {
                a,
                b,
                stiffness: 0.5 * (na.stiffness + nb.stiffness),
                damping: 0.5 * (na.damping + nb.damping),
                rest_length: (nb.rest - na.rest).norm(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeParams {
    pub rows: usize,
    pub cols: usize,
    pub neighborhood: Neighborhood,
    pub labels: LabelParams,
    pub table: ParamTable,
    pub calibration: Calibration,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            rows: 12,
            cols: 16,
            neighborhood: Neighborhood::PerLabel,
            labels: LabelParams::default(),
            table: ParamTable::default(),
            calibration: Calibration::default(),
        }
    }
}

impl LatticeModel {
    /// Builds the lattice from the initialization frame geometry.
    pub fn build(
        roi: &RoiSpec,
        ilm: &LayerCurve,
        rpe: &LayerCurve,
        image: Option<(&BScanFrame, &FrameRotation)>,
        params: &LatticeParams,
    ) -> Result<Self, LatticeError> {
        let (rows, cols) = (params.rows, params.cols);
        let labels = assign_labels(roi, rows, cols, ilm, rpe, image, &params.labels)?;
        let mut nodes = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let (x0, y0, x1, y1) = cell_bounds(roi, rows, cols, i, j);
                let (x, y) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
                let (label, stats) = labels[i * cols + j];
                let (yi, yr) = (ilm.eval(x), rpe.eval(x));
                if yr < yi {
                    return Err(LatticeError::LayerOrder { x });
                }
                let depth = match label {
                    Tissue::Vitreous => Depth::AboveIlm(y - yi),
                    Tissue::Ilm => Depth::Relative(0.0),
                    Tissue::Retina => {
                        let span = yr - yi;
                        Depth::Relative(if span > 0.0 {
                            ((y - yi) / span).clamp(0.0, 1.0)
                        } else {
                            0.5
                        })
                    }
                    Tissue::Rpe if y > yr + params.labels.rpe_half_band => Depth::BelowRpe(y - yr),
                    Tissue::Rpe => Depth::Relative(1.0),
                };
                let p = map_params(&params.table, label, stats.mean_intensity());
                let mut node = AnchorNode {
                    row: i,
                    col: j,
                    label,
                    depth,
                    mass: p.mass,
                    stiffness: p.stiffness,
                    damping: p.damping,
                    order: p.order,
                    rest: Vec2::new(x, 0.0),
                };
                node.rest.y = node.anchor_y(yi, yr);
                nodes.push(node);
            }
        }
        let springs = build_springs(&nodes, rows, cols, params.neighborhood);
        Ok(Self {
            rows,
            cols,
            nodes,
            springs,
            neighborhood: params.neighborhood,
            calibration: params.calibration,
        })
    }

    /// Moves every anchor to follow the current layer curves, keeping the
    /// relative depths fixed. On rejection nothing changes.
    pub fn update_anchors(&mut self, ilm: &LayerCurve, rpe: &LayerCurve) -> Result<(), LatticeError> {
        let mut ys = vec![0.0; self.nodes.len()];
        for (k, n) in self.nodes.iter().enumerate() {
            let (yi, yr) = (ilm.eval(n.rest.x), rpe.eval(n.rest.x));
            if yr < yi {
                return Err(LatticeError::LayerOrder { x: n.rest.x });
            }
            let y = n.anchor_y(yi, yr);
            if !y.is_finite() {
                return Err(LatticeError::NonFinite { node: k });
            }
            ys[k] = y;
        }
        for (n, y) in self.nodes.iter_mut().zip(ys) {
            n.rest.y = y;
        }
        for s in &mut self.springs {
            s.rest_length = (self.nodes[s.b].rest - self.nodes[s.a].rest).norm();
        }
        Ok(())
    }

    pub fn anchors(&self) -> Vec<Vec2> {
        self.nodes.iter().map(|n| n.rest).collect()
    }

    /// Index of the node whose anchor is closest to `p`.
    pub fn nearest_node(&self, p: Vec2) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.rest - p).norm().total_cmp(&(b.1.rest - p).norm()))
            .map_or(0, |(k, _)| k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::{ColumnRange, RoiProvenance};

    #[test]
    fn vote_examples() {
        let mut c = [0u32; 4];
        c[Tissue::Vitreous.index()] = 30;
        assert_eq!(vote(&c, 3.0), Some(Tissue::Vitreous));
        let mut c = [0u32; 4];
        c[Tissue::Retina.index()] = 6;
        c[Tissue::Ilm.index()] = 3;
        assert_eq!(vote(&c, 3.0), Some(Tissue::Ilm));
        let mut c = [0u32; 4];
        c[Tissue::Retina.index()] = 6;
        c[Tissue::Rpe.index()] = 2;
        assert_eq!(vote(&c, 3.0), Some(Tissue::Rpe));
        assert_eq!(vote(&[0; 4], 3.0), None);
    }

    #[test]
    fn default_table_lookups() {
        let t = ParamTable::default();
        let v = map_params(&t, Tissue::Vitreous, None);
        assert_eq!((v.mass, v.stiffness, v.damping, v.order), (1.0, 40.0, 0.8, 1));
        let r = map_params(&t, Tissue::Rpe, None);
        assert_eq!((r.mass, r.stiffness, r.damping, r.order), (1.0, 2000.0, 0.05, 2));
        assert_eq!(map_params(&t, Tissue::Retina, Some(0.5)).stiffness, 400.0);
        assert_eq!(map_params(&t, Tissue::Retina, Some(1.0)).stiffness, 600.0);
    }

    fn grid_nodes(rows: usize, cols: usize) -> Vec<AnchorNode> {
        (0..rows * cols)
            .map(|k| AnchorNode {
                row: k / cols,
                col: k % cols,
                label: Tissue::Retina,
                depth: Depth::Relative(0.5),
                mass: 1.0,
                stiffness: 2.0 + (k % 3) as f64,
                damping: 0.1 * (k % 5) as f64,
                order: 1,
                rest: Vec2::new((k % cols) as f64 * 10.0, (k / cols) as f64 * 10.0),
            })
            .collect()
    }

    #[test]
    fn spring_counts_on_4x4() {
        let nodes = grid_nodes(4, 4);
        assert_eq!(build_springs(&nodes, 4, 4, Neighborhood::First).len(), 24);
        assert_eq!(build_springs(&nodes, 4, 4, Neighborhood::Second).len(), 42);
    }

    #[test]
    fn coupling_is_endpoint_mean() {
        let mut nodes = grid_nodes(4, 4);
        nodes[0].stiffness = 2.0;
        nodes[1].stiffness = 4.0;
        let s = build_springs(&nodes, 4, 4, Neighborhood::First);
        let s01 = s.iter().find(|s| (s.a, s.b) == (0, 1)).unwrap();
        assert_eq!(s01.stiffness, 3.0);
        assert_eq!(s01.rest_length, 10.0);
    }

    fn flat_roi() -> RoiSpec {
        RoiSpec {
            theta_deg: 0.0,
            x_min: 100.0,
            y_min: 150.0,
            x_max: 356.0,
            y_max: 300.0,
            center: Vec2::new(228.0, 200.0),
            provenance: RoiProvenance::DirectIntersection,
        }
    }

    #[test]
    fn build_and_follow_layers() {
        let d = ColumnRange::new(0, 511);
        let (ilm, rpe) = (LayerCurve::constant(d, 200.0), LayerCurve::constant(d, 300.0));
        let mut m = LatticeModel::build(&flat_roi(), &ilm, &rpe, None, &LatticeParams::default()).unwrap();
        assert_eq!(m.nodes.len(), 192);
        assert!(m.nodes.iter().any(|n| n.label == Tissue::Vitreous));
        assert!(m.nodes.iter().any(|n| n.label == Tissue::Ilm));
        assert!(m.nodes.iter().any(|n| n.label == Tissue::Retina));
        assert!(m.nodes.iter().any(|n| n.label == Tissue::Rpe));
        for n in &m.nodes {
            if n.label == Tissue::Ilm {
                assert_eq!(n.rest.y, 200.0);
            }
        }
        // Raise the ILM by 30 px; RPE fixed.
        let before = m.clone();
        m.update_anchors(&LayerCurve::constant(d, 170.0), &rpe).unwrap();
        for (a, b) in before.nodes.iter().zip(&m.nodes) {
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.rest.x, b.rest.x);
            if let Depth::Relative(rho) = a.depth {
                assert!((a.rest.y - b.rest.y - 30.0 * (1.0 - rho)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejected_update_keeps_anchors() {
        let d = ColumnRange::new(0, 511);
        let (ilm, rpe) = (LayerCurve::constant(d, 200.0), LayerCurve::constant(d, 300.0));
        let mut m = LatticeModel::build(&flat_roi(), &ilm, &rpe, None, &LatticeParams::default()).unwrap();
        let before = m.clone();
        let err = m.update_anchors(&LayerCurve::constant(d, 310.0), &rpe);
        assert!(matches!(err, Err(LatticeError::LayerOrder { .. })));
        assert_eq!(before, m);
    }

    #[test]
    fn small_grid_rejected() {
        let d = ColumnRange::new(0, 511);
        let (ilm, rpe) = (LayerCurve::constant(d, 200.0), LayerCurve::constant(d, 300.0));
        let p = LatticeParams {
            rows: 3,
            ..Default::default()
        };
        assert!(matches!(
            LatticeModel::build(&flat_roi(), &ilm, &rpe, None, &p),
            Err(LatticeError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn uncovered_cells_inherit_vertical_neighbor() {
        let ilm = LayerCurve::constant(ColumnRange::new(0, 200), 200.0);
        let rpe = LayerCurve::constant(ColumnRange::new(0, 200), 300.0);
        let labels = assign_labels(&flat_roi(), 12, 16, &ilm, &rpe, None, &LabelParams::default()).unwrap();
        // Columns right of x = 200 have no coverage at all.
        assert_eq!(labels[15].0, Tissue::Vitreous);
        assert_eq!(labels[11 * 16 + 15].0, Tissue::Retina);
    }
}
