//! Shared fixtures for the benchmarks.

use std::collections::BTreeMap;

use psforge_core::loops::LaurentLoop;
use psforge_core::{soliton_angle, AngleField, GridSpec, Mat3};

/// Soliton with a = 1 on the square [-half, half]^2.
pub fn soliton(half: f64, h: f64) -> AngleField {
    let g = GridSpec::from_domain(-half, half, -half, half, h, h).expect("valid grid");
    soliton_angle(1.0, g).expect("soliton")
}

/// Soliton traces along the bottom and left edges of [0, len]^2, with the grid.
pub fn goursat_data(len: f64, h: f64) -> (Vec<f64>, Vec<f64>, GridSpec) {
    let g = GridSpec::from_domain(0.0, len, 0.0, len, h, h).expect("valid grid");
    let exact = soliton_angle(1.0, g).expect("soliton");
    let x = (0..g.nx).map(|i| exact.at(i, 0)).collect();
    let y = (0..g.ny).map(|j| exact.at(0, j)).collect();
    (x, y, g)
}

/// Twisted loop `g_- g_+` with deterministic coefficients of degree `deg` on each side.
pub fn twisted_loop(deg: i32) -> LaurentLoop {
    let mut map = BTreeMap::new();
    map.insert(0, Mat3::identity());
    for p in 1..=deg {
        let s = 0.25 / (deg as f64 * (p as f64 + 1.0));
        let m = if p % 2 == 0 {
            Mat3::new(s, 0.5 * s, 0.0, -0.5 * s, s, 0.0, 0.0, 0.0, s)
        } else {
            Mat3::new(0.0, 0.0, s, 0.0, 0.0, -s, 0.5 * s, s, 0.0)
        };
        map.insert(p, m);
        map.insert(-p, m.transpose());
    }
    LaurentLoop::from_map(&map).with_twisted(true)
}
