//! Built-in ground-truth models used by the experiments.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::multirec::ProjectionBasis;
use crate::synth::{ChirpComponent, ChirpTrain, ExponentialModel, PointSource};

/// `5 e^{il} + 30 e^{-2il} + 20 e^{-2.005il}`: frequencies `(-1, 2, 2.005)`.
pub fn three_tone() -> ExponentialModel {
    let c = |a: f64| Complex64::new(a, 0.0);
    ExponentialModel::univariate(&[(c(5.0), -1.0), (c(30.0), 2.0), (c(20.0), 2.005)]).expect("valid model")
}

const TWELVE: [(f64, f64); 12] = [
    (-1.2566, 0.6283),
    (-0.7540, 0.3142),
    (-0.2513, 1.2566),
    (-0.2513, 0.6283),
    (-0.2513, 0.0),
    (0.0, -0.6283),
    (0.0, -1.2566),
    (0.2513, 1.2566),
    (0.2513, 0.6283),
    (0.2513, 0.0),
    (0.7540, 0.3142),
    (1.2566, 0.6283),
];

/// Twelve 2D points with amplitude 50.
pub fn twelve_point() -> ExponentialModel {
    let comps = TWELVE
        .iter()
        .map(|&(x, y)| PointSource { amplitude: Complex64::new(50.0, 0.0), freq: vec![x, y] })
        .collect();
    ExponentialModel::new(2, comps).expect("valid model")
}

/// Support bound (max-norm) of [`twelve_point`].
pub const TWELVE_POINT_BOUND: f64 = 1.3;

/// `Delta_1 = (1.38, 4.14)`, `Delta_2 = (-7.56, 5.67)`.
pub fn basis_2d() -> ProjectionBasis {
    ProjectionBasis::new(vec![vec![1.38, 4.14], vec![-7.56, 5.67]]).expect("independent")
}

/// `Delta_1 = (-0.73, -0.16, -0.66)`, `Delta_2 = (0.11, -0.98, 0.11)`,
/// `Delta_3 = (-2.10, 1.20, 3.29)`.
pub fn basis_3d() -> ProjectionBasis {
    ProjectionBasis::new(vec![
        vec![-0.73, -0.16, -0.66],
        vec![0.11, -0.98, 0.11],
        vec![-2.10, 1.20, 3.29],
    ])
    .expect("independent")
}

/// Support bound of [`cloud_29`].
pub const CLOUD_29_BOUND: f64 = 1.0;

/// 29 unit-amplitude points in `[-1, 1]^3`, built with a fixed seed so
/// that, for [`basis_3d`] scaled to the unit box, the first projections sit
/// on an even grid 0.2 rad apart and every pair is at least 0.05 rad apart
/// in each other projection and 0.3 rad apart in the first two jointly.
pub fn cloud_29() -> ExponentialModel {
    const K: usize = 29;
    let basis = basis_3d().fit_to_box(CLOUD_29_BOUND, 0.95).expect("valid scaling");
    let d1 = basis.deltas()[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut order: Vec<usize> = (0..K).collect();
    // Fill the extremes first: their admissible slices are the smallest.
    order.sort_by_key(|&k| std::cmp::Reverse((2 * k as i64 - (K as i64 - 1)).abs()));
    let mut pts: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for &k in &order {
        let target = -2.8 + 5.6 * k as f64 / (K - 1) as f64;
        loop {
            let w2: f64 = rng.random_range(-1.0..1.0);
            let w3: f64 = rng.random_range(-1.0..1.0);
            let w1 = (target - d1[1] * w2 - d1[2] * w3) / d1[0];
            if w1.abs() > 1.0 {
                continue;
            }
            let w = vec![w1, w2, w3];
            let p = basis.project(&w);
            let ok = pts.iter().all(|(_, _, o)| {
                (p[1] - o[1]).abs() >= 0.05
                    && (p[2] - o[2]).abs() >= 0.05
                    && (p[0] - o[0]).hypot(p[1] - o[1]) >= 0.3
            });
            if ok {
                pts.push((k, w, p));
                break;
            }
        }
    }
    pts.sort_by_key(|p| p.0);
    let comps = pts
        .into_iter()
        .map(|(_, freq, _)| PointSource { amplitude: Complex64::new(1.0, 0.0), freq })
        .collect();
    ExponentialModel::new(3, comps).expect("valid model")
}

/// Half-widths, in meters, of a box containing [`jet_cloud`].
pub const JET_EXTENT: [f64; 3] = [8.0, 5.0, 1.8];

/// Unit-amplitude points on a coarse aircraft outline about 16 m long,
/// 10 m wide and 3 m high: a fuselage cylinder, swept wings and tail fins.
pub fn jet_cloud(count: usize, seed: u64) -> Result<ExponentialModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comps = Vec::with_capacity(count);
    for _ in 0..count {
        let part: f64 = rng.random();
        let w = if part < 0.45 {
            // fuselage along x, radius tapering towards the nose
            let x: f64 = rng.random_range(-8.0..8.0);
            let r = if x > 5.0 { 0.9 * (8.0 - x) / 3.0 } else { 0.9 };
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            vec![x, r * a.cos(), 0.3 + r * a.sin()]
        } else if part < 0.85 {
            // wings: leading edge swept back from x = 2 at the root
            let y: f64 = rng.random_range(-5.0..5.0);
            let lead = 2.0 - 0.6 * y.abs();
            let chord = 4.0 - 0.5 * y.abs();
            let x = lead - rng.random_range(0.0..chord);
            vec![x, y, rng.random_range(-0.1..0.1)]
        } else if part < 0.93 {
            // horizontal stabilizer
            let y: f64 = rng.random_range(-2.5..2.5);
            let x = -5.5 - 0.4 * y.abs() - rng.random_range(0.0..1.5);
            vec![x, y, 0.3 + rng.random_range(-0.05..0.05)]
        } else {
            // vertical fin
            let z: f64 = rng.random_range(0.9..3.0);
            let x = -5.0 - 0.5 * z - rng.random_range(0.0..1.5);
            vec![x, rng.random_range(-0.05..0.05), z - 1.2]
        };
        comps.push(PointSource { amplitude: Complex64::new(1.0, 0.0), freq: w });
    }
    ExponentialModel::new(3, comps)
}

/// Every tenth point of `jet_cloud(1000, 5)`.
pub fn jet_100() -> Result<ExponentialModel> {
    let j = jet_cloud(1000, 5)?;
    ExponentialModel::new(3, j.components().iter().step_by(10).cloned().collect())
}

/// Six emitters, twelve pulses, on a 100 microsecond window (rad/s units).
pub fn chirp_example_1() -> ChirpTrain {
    let c = |omega: f64, bandwidth: f64, duration: f64, t0: f64, pri: f64, pulses: usize| ChirpComponent {
        amplitude: 1.0,
        omega,
        bandwidth,
        duration,
        t0,
        pri,
        pulses,
    };
    ChirpTrain::new(
        vec![
            c(1.08e9, 1.5e7, 3.0e-5, 1.0e-5, 5.0e-5, 2),
            c(1.36e9, 5.0e6, 1.0e-5, 1.0e-5, 1.5e-5, 5),
            c(1.54e9, -2.0e7, 3.0e-5, 1.0e-5, 0.0, 1),
            c(1.51e9, 5.0e7, 7.0e-5, 1.5e-5, 0.0, 1),
            c(1.48e9, -1.5e7, 5.0e-5, 3.0e-5, 0.0, 1),
            c(1.04e9, -1.5e7, 3.0e-5, 1.5e-5, 4.0e-5, 2),
        ],
        1e-4,
    )
    .expect("valid train")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(three_tone().len(), 3);
        assert_eq!(twelve_point().len(), 12);
        assert_eq!(chirp_example_1().pulses().len(), 12);
        let j = jet_cloud(500, 1).unwrap();
        assert_eq!(j.len(), 500);
        assert!(j.components().iter().all(|c| c.freq.iter().zip(JET_EXTENT).all(|(v, b)| v.abs() <= b)));
    }

    #[test]
    fn cloud_29_is_deterministic_and_in_box() {
        let a = cloud_29();
        assert_eq!(a, cloud_29());
        assert_eq!(a.len(), 29);
        assert!(a.components().iter().all(|c| c.freq.iter().all(|v| v.abs() <= 1.0)));
    }
}
