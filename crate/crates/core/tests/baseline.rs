use std::f64::consts::PI;

use ioct_sonify_core::anatomy::{ColumnRange, LayerCurve};
use ioct_sonify_core::baseline::{classify_zone, depth_fraction, pulse_rate, BaselineParams, BaselineVoice, Zone};
use ioct_sonify_core::{Vec2, SAMPLE_RATE};
use proptest::prelude::*;

const WIN: usize = 1024;

fn curves() -> (LayerCurve, LayerCurve) {
    let d = ColumnRange::new(0, 511);
    (LayerCurve::constant(d, 200.0), LayerCurve::constant(d, 290.0))
}

/// Energy and dominant bin of a Hann-windowed DFT (bins 1..=64).
fn dominant_bin(x: &[f32]) -> (f64, usize) {
    let energy: f64 = x.iter().map(|v| (*v as f64).powi(2)).sum();
    let bin = (1..=64)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in x.iter().enumerate() {
                let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / WIN as f64).cos();
                let a = -2.0 * PI * (k * n) as f64 / WIN as f64;
                re += w * *v as f64 * a.cos();
                im += w * *v as f64 * a.sin();
            }
            (k, re * re + im * im)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(k, _)| k);
    (energy, bin)
}

proptest! {
    #[test]
    fn pulse_rate_is_strictly_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!(a != b);
        let p = BaselineParams::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(pulse_rate(lo, &p) < pulse_rate(hi, &p));
        let q = BaselineParams { faster_near_rpe: false, ..p };
        prop_assert!(pulse_rate(lo, &q) > pulse_rate(hi, &q));
    }

    #[test]
    fn depth_fraction_is_monotone_in_depth(y1 in 150.0f64..350.0, y2 in 150.0f64..350.0) {
        let (ilm, rpe) = curves();
        let u1 = depth_fraction(Vec2::new(100.0, y1), &ilm, &rpe).unwrap();
        let u2 = depth_fraction(Vec2::new(100.0, y2), &ilm, &rpe).unwrap();
        prop_assert!((0.0..=1.0).contains(&u1));
        if y1 <= y2 {
            prop_assert!(u1 <= u2);
        }
    }
}

#[test]
fn zone_pitch_is_constant_within_each_zone() {
    let p = BaselineParams::default();
    for zone in [Zone::Vitreous, Zone::Intraretinal, Zone::SubRpe] {
        let expected = (p.pitches[zone.index()] * WIN as f64 / SAMPLE_RATE as f64).round() as usize;
        let mut v = BaselineVoice::new(p, SAMPLE_RATE as f64);
        let mut frames = Vec::new();
        for k in 0..160 {
            let u = (k as f64 / 159.0).clamp(0.0, 1.0);
            let mut block = vec![0.0f32; WIN];
            v.render(zone, u, &mut block);
            frames.push(dominant_bin(&block));
        }
        // Windows holding only the clipped edge of a pulse are spectrally smeared.
        let loudest = frames.iter().map(|f| f.0).fold(0.0, f64::max);
        let bins: Vec<usize> = frames.iter().filter(|f| f.0 >= 0.25 * loudest).map(|f| f.1).collect();
        assert!(bins.len() > 20);
        assert!(bins.iter().all(|&b| b == expected), "{zone:?}: {bins:?}");
    }
}

#[test]
fn zone_boundaries_are_exact() {
    let (ilm, rpe) = curves();
    let at = |y: f64| classify_zone(Vec2::new(300.0, y), &ilm, &rpe).unwrap();
    assert_eq!(at(200.0f64.next_down()), Zone::Vitreous);
    assert_eq!(at(200.0), Zone::Intraretinal);
    assert_eq!(at(290.0f64.next_down()), Zone::Intraretinal);
    assert_eq!(at(290.0), Zone::SubRpe);
    assert_eq!(at(400.0), Zone::SubRpe);
}

#[test]
fn pulse_count_follows_rate() {
    let p = BaselineParams::default();
    for (u, rate) in [(0.0, 2.0), (0.5, 7.0), (1.0, 12.0)] {
        let mut v = BaselineVoice::new(p, SAMPLE_RATE as f64);
        let mut x = vec![0.0f32; 4 * SAMPLE_RATE as usize];
        v.render(Zone::Intraretinal, u, &mut x);
        // Count gate onsets: silent-to-sounding transitions over 1 ms hops.
        let hop = SAMPLE_RATE as usize / 1000;
        let active: Vec<bool> = x.chunks(hop).map(|c| c.iter().any(|s| s.abs() > 1e-4)).collect();
        let onsets = 1 + active.windows(2).filter(|w| !w[0] && w[1]).count();
        assert!((onsets as f64 - 4.0 * rate).abs() <= 1.0, "u {u}: {onsets}");
    }
}
