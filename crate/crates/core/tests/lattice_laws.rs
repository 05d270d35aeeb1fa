use ioct_sonify_core::anatomy::{ColumnRange, LayerCurve, RoiProvenance, RoiSpec};
use ioct_sonify_core::lattice::{
    build_springs, neighbor_pairs, vote, AnchorNode, Calibration, Depth, LatticeModel, LatticeParams, Neighborhood,
    Tissue,
};
use ioct_sonify_core::Vec2;
use proptest::prelude::*;

const ROWS: usize = 12;
const COLS: usize = 16;

fn roi() -> RoiSpec {
    RoiSpec {
        theta_deg: 0.0,
        x_min: 128.0,
        y_min: 150.0,
        x_max: 384.0,
        y_max: 330.0,
        center: Vec2::new(256.0, 200.0),
        provenance: RoiProvenance::DirectIntersection,
    }
}

fn domain() -> ColumnRange {
    ColumnRange::new(0, 511)
}

fn flat_model() -> LatticeModel {
    let (ilm, rpe) = (
        LayerCurve::constant(domain(), 200.0),
        LayerCurve::constant(domain(), 290.0),
    );
    LatticeModel::build(&roi(), &ilm, &rpe, None, &LatticeParams::default()).unwrap()
}

/// A model whose every node is a retina node with the given relative depth.
fn relative_model(rhos: &[f64]) -> LatticeModel {
    let nodes = rhos
        .iter()
        .enumerate()
        .map(|(k, &rho)| AnchorNode {
            row: k / COLS,
            col: k % COLS,
            label: Tissue::Retina,
            depth: Depth::Relative(rho),
            mass: 1.0,
            stiffness: 400.0,
            damping: 0.3,
            order: 1,
            rest: Vec2::new(130.0 + 16.0 * (k % COLS) as f64, 0.0),
        })
        .collect::<Vec<_>>();
    let springs = build_springs(&nodes, ROWS, COLS, Neighborhood::First);
    LatticeModel {
        rows: ROWS,
        cols: COLS,
        nodes,
        springs,
        neighborhood: Neighborhood::First,
        calibration: Calibration::default(),
    }
}

proptest! {
    #[test]
    fn anchor_law_places_retina_nodes(
        rhos in prop::collection::vec(0.0f64..=1.0, ROWS * COLS),
        ilm in 0.0f64..400.0,
        gap in 1e-3f64..200.0,
    ) {
        let mut m = relative_model(&rhos);
        let rpe = ilm + gap;
        m.update_anchors(&LayerCurve::constant(domain(), ilm), &LayerCurve::constant(domain(), rpe)).unwrap();
        for (n, rho) in m.nodes.iter().zip(&rhos) {
            prop_assert!((n.rest.y - (ilm + rho * (rpe - ilm))).abs() <= 1e-9);
        }
    }

    #[test]
    fn updates_never_touch_depths(shifts in prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0), 1..50)) {
        let mut m = flat_model();
        let before: Vec<Depth> = m.nodes.iter().map(|n| n.depth).collect();
        let xs: Vec<u64> = m.nodes.iter().map(|n| n.rest.x.to_bits()).collect();
        for (a, b) in shifts {
            let _ = m.update_anchors(&LayerCurve::constant(domain(), 200.0 + a), &LayerCurve::constant(domain(), 290.0 + b));
        }
        for ((n, d), x) in m.nodes.iter().zip(&before).zip(&xs) {
            prop_assert_eq!(&n.depth, d);
            prop_assert_eq!(n.rest.x.to_bits(), *x);
        }
    }

    #[test]
    fn coupling_is_endpoint_mean(
        ks in prop::collection::vec(1.0f64..5000.0, ROWS * COLS),
        cs in prop::collection::vec(0.0f64..2.0, ROWS * COLS),
        orders in prop::collection::vec(1u8..=2, ROWS * COLS),
    ) {
        let mut m = relative_model(&[0.5; ROWS * COLS]);
        for (k, n) in m.nodes.iter_mut().enumerate() {
            n.stiffness = ks[k];
            n.damping = cs[k];
            n.order = orders[k];
        }
        for nb in [Neighborhood::First, Neighborhood::Second, Neighborhood::PerLabel] {
            for s in build_springs(&m.nodes, ROWS, COLS, nb) {
                prop_assert_eq!(s.stiffness, 0.5 * (ks[s.a] + ks[s.b]));
                prop_assert_eq!(s.damping, 0.5 * (cs[s.a] + cs[s.b]));
            }
        }
    }

    #[test]
    fn thin_labels_grow_with_thin_weight(counts in prop::array::uniform4(0u32..200), w in 1.0f64..10.0, dw in 0.0f64..10.0) {
        let thin = |t: Option<Tissue>| matches!(t, Some(Tissue::Ilm | Tissue::Rpe));
        if thin(vote(&counts, w)) {
            prop_assert!(thin(vote(&counts, w + dw)));
        }
    }
}

/// Independent count of grid pairs at Chebyshev distance one.
fn brute_pairs(rows: usize, cols: usize, diagonals: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..rows * cols {
        for b in a + 1..rows * cols {
            let (ra, ca, rb, cb) = (
                (a / cols) as i64,
                (a % cols) as i64,
                (b / cols) as i64,
                (b % cols) as i64,
            );
            let (dr, dc) = ((ra - rb).abs(), (ca - cb).abs());
            if dr.max(dc) == 1 && (diagonals || dr + dc == 1) {
                out.push((a, b));
            }
        }
    }
    out
}

fn normalized(mut v: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    for p in &mut v {
        if p.0 > p.1 {
            *p = (p.1, p.0);
        }
    }
    v.sort_unstable();
    v
}

#[test]
fn edge_sets_match_enumeration() {
    for (rows, cols) in [(4, 4), (12, 16), (5, 9)] {
        let first = normalized(neighbor_pairs(rows, cols, |_, _| false));
        let second = normalized(neighbor_pairs(rows, cols, |_, _| true));
        assert_eq!(first, brute_pairs(rows, cols, false));
        assert_eq!(second, brute_pairs(rows, cols, true));
    }
    // 12x16: 12*15 + 11*16 axis pairs, plus 2*11*15 diagonals.
    assert_eq!(neighbor_pairs(12, 16, |_, _| false).len(), 356);
    assert_eq!(neighbor_pairs(12, 16, |_, _| true).len(), 686);
}

#[test]
fn per_label_adds_diagonals_only_at_order_two() {
    let m = flat_model();
    let diag = |s: &&ioct_sonify_core::lattice::Spring| {
        let (a, b) = (&m.nodes[s.a], &m.nodes[s.b]);
        a.row != b.row && a.col != b.col
    };
    for s in m.springs.iter().filter(diag) {
        assert!(m.nodes[s.a].order.max(m.nodes[s.b].order) >= 2);
    }
    assert!(m.springs.iter().filter(diag).count() > 0);
}

#[test]
fn labels_are_ordered_by_depth_in_every_column() {
    let m = flat_model();
    for j in 0..COLS {
        let col: Vec<Tissue> = (0..ROWS).map(|i| m.nodes[i * COLS + j].label).collect();
        assert!(col.windows(2).all(|w| w[0] <= w[1]), "column {j}: {col:?}");
    }
}

#[test]
fn thousand_update_cycles_keep_depths_bit_identical() {
    let mut m = flat_model();
    let before: Vec<Depth> = m.nodes.iter().map(|n| n.depth).collect();
    for k in 0..1000 {
        let s = (k as f64 * 0.37).sin() * 20.0;
        m.update_anchors(
            &LayerCurve::constant(domain(), 200.0 + s),
            &LayerCurve::constant(domain(), 290.0 - s),
        )
        .unwrap();
    }
    for (n, d) in m.nodes.iter().zip(&before) {
        match (n.depth, *d) {
            (Depth::Relative(a), Depth::Relative(b))
            | (Depth::AboveIlm(a), Depth::AboveIlm(b))
            | (Depth::BelowRpe(a), Depth::BelowRpe(b)) => {
                assert_eq!(a.to_bits(), b.to_bits())
            }
            _ => panic!("depth kind changed"),
        }
    }
}
