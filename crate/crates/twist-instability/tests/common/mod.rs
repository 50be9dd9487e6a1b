//! Shared k = 1 pipeline, computed once per test binary.
#![allow(dead_code)]

use std::sync::OnceLock;

use twist_instability::aubry::{compute_homoclinics, with_energy_window, HomoclinicPair};
use twist_instability::gradflow::kappa2;
use twist_instability::instability::{delta1, delta2, Delta1Options, Delta1Result, InstabilityReport};
use twist_instability::shadowing::instability_report;
use twist_instability::twistmap::{find_minimizing_fixed_point, linearize_eigen, FixedPointData, GeneratingFunction};

pub struct Setup {
    pub gf: GeneratingFunction,
    pub fp: FixedPointData,
    pub pair: HomoclinicPair,
}

pub fn setup(k: f64) -> Setup {
    let gf = GeneratingFunction::standard(k);
    let mut fp = find_minimizing_fixed_point(&gf).unwrap();
    fp.lambda = Some(linearize_eigen(&gf, &fp).unwrap());
    let pair = compute_homoclinics(&gf, &fp, 64, 512).unwrap();
    fp.kappa1 = Some(pair.kappa1);
    Setup { gf, fp, pair }
}

pub fn k1() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup(1.0))
}

pub struct Full {
    pub d1: Delta1Result,
    pub report: InstabilityReport,
    /// The k = 1 pair with E0 computed at e0 = e*.
    pub pair: HomoclinicPair,
}

pub fn k1_full() -> &'static Full {
    static F: OnceLock<Full> = OnceLock::new();
    F.get_or_init(|| {
        let s = k1();
        let d1 = delta1(&s.gf, &s.pair, &s.fp, &Delta1Options::default()).unwrap();
        let d2 = delta2(&s.gf, &s.pair, 16).unwrap();
        let report = instability_report(&s.pair, &d1, d2, kappa2(&s.gf)).unwrap();
        let pair = with_energy_window(&s.gf, &s.fp, &s.pair, report.e_star).unwrap();
        Full { d1, report, pair }
    })
}
