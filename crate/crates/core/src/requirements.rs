//! Rate/fidelity requirements and the repeater-chain model that turns them
//! into a hop bound and a maximum elementary-link length.
//!
//! The chain model assumes Werner states over elementary links, probabilistic
//! Bell-state measurements with 50% success, massive multiplexing with `m`
//! attempts per round, and fiber attenuation as the only photon loss. Under
//! those assumptions a chain of `n` repeaters with links of length `l` has a
//! closed-form end-to-end fidelity and rate, both monotone, so the largest
//! admissible `n` and `l` follow by direct search and bisection.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Hardware constants of the repeater-chain model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareConstants {
    /// Elementary-link fidelity, in (0.25, 1].
    pub f_link: f64,
    /// Multiplexed entanglement-generation attempts per round, >= 1.
    pub m: u32,
    /// Speed of light in fiber, km/s.
    pub c_fiber_km_s: f64,
    /// Fiber attenuation length, km.
    pub l_att_km: f64,
}

impl HardwareConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_link > 0.25 && self.f_link <= 1.0) {
            return Err(Error::Domain(format!(
                "f_link={} must lie in (0.25, 1]",
                self.f_link
            )));
        }
        if self.m < 1 {
            return Err(Error::Domain("m must be >= 1".into()));
        }
        if !(self.c_fiber_km_s > 0.0 && self.c_fiber_km_s.is_finite()) {
            return Err(Error::Domain("c_fiber_km_s must be positive".into()));
        }
        if !(self.l_att_km > 0.0 && self.l_att_km.is_finite()) {
            return Err(Error::Domain("l_att_km must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pair override of the homogeneous requirements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRequirement {
    pub r_min_hz: f64,
    pub f_min: f64,
    pub k: u32,
}

/// End-to-end requirements for every end-node pair, plus hardware constants.
///
/// `per_pair` keys are `"<id>|<id>"` with the two node ids sorted; `per_node`
/// maps a potential repeater location to its capacity. Both maps are optional
/// overrides on top of the homogeneous values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRequirements {
    /// Minimum entanglement rate per pair, Hz.
    pub r_min_hz: f64,
    /// Minimum end-to-end fidelity, in (0.25, 1).
    pub f_min: f64,
    /// Number of node-disjoint paths required per pair.
    pub k: u32,
    /// Maximum simultaneous paths per repeater.
    pub d: u32,
    pub hardware: HardwareConstants,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_pair: BTreeMap<String, PairRequirement>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_node: BTreeMap<String, u32>,
}

impl ChainRequirements {
    pub fn validate(&self) -> Result<()> {
        self.hardware.validate()?;
        if !(self.r_min_hz > 0.0 && self.r_min_hz.is_finite()) {
            return Err(Error::Domain("r_min_hz must be positive".into()));
        }
        if !(self.f_min > 0.25 && self.f_min < 1.0) {
            return Err(Error::Domain(format!(
                "f_min={} must lie in (0.25, 1)",
                self.f_min
            )));
        }
        if self.k < 1 {
            return Err(Error::Domain("k must be >= 1".into()));
        }
        if self.d < 1 {
            return Err(Error::Domain("d must be >= 1".into()));
        }
        for (key, pr) in &self.per_pair {
            if !(pr.r_min_hz > 0.0) || !(pr.f_min > 0.25 && pr.f_min < 1.0) || pr.k < 1 {
                return Err(Error::Domain(format!("per_pair override '{key}' out of domain")));
            }
        }
        for (key, d) in &self.per_node {
            if *d < 1 {
                return Err(Error::Domain(format!("per_node override '{key}' out of domain")));
            }
        }
        Ok(())
    }

    pub fn is_heterogeneous(&self) -> bool {
        !self.per_pair.is_empty() || !self.per_node.is_empty()
    }
}

/// Key used by `ChainRequirements::per_pair`: the two ids joined by `|`,
/// smaller id first.
pub fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

/// Hop and link-length bounds derived from (rate, fidelity) targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedBounds {
    /// Maximum number of repeaters on a path.
    pub n_max: u32,
    /// Maximum elementary-link length, km. Integer-valued unless constructed
    /// from the continuous bound.
    pub l_max_km: f64,
}

/// Options controlling `derive_bounds`.
#[derive(Debug, Clone, Copy)]
pub struct DeriveOptions {
    /// Cap on `n_max` when fidelity imposes no bound (noiseless links).
    pub n_max_ceiling: u32,
    /// Report the continuous bisection value instead of flooring to whole km.
    pub continuous_l_max: bool,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        DeriveOptions {
            n_max_ceiling: 64,
            continuous_l_max: false,
        }
    }
}

/// End-to-end fidelity of a chain with `n` repeaters.
///
/// Werner-parameter composition: each swap multiplies the parameters, so
/// `n + 1` links of parameter `p` compose to `p^(n+1)`.
pub fn chain_fidelity(n: u32, f_link: f64) -> Result<f64> {
    if !(f_link > 0.25 && f_link <= 1.0) {
        return Err(Error::Domain(format!("f_link={f_link} must lie in (0.25, 1]")));
    }
    let p_link = (4.0 * f_link - 1.0) / 3.0;
    Ok(0.25 * (1.0 + 3.0 * p_link.powi(n as i32 + 1)))
}

/// End-to-end entanglement rate (Hz) of a chain with `n` repeaters and
/// elementary links of length `l_km`.
pub fn chain_rate(n: u32, l_km: f64, hw: &HardwareConstants) -> Result<f64> {
    hw.validate()?;
    if !(l_km > 0.0 && l_km.is_finite()) {
        return Err(Error::Domain(format!("link length {l_km} must be positive")));
    }
    let p_attempt = 0.5 * (-l_km / hw.l_att_km).exp();
    let p_link = 1.0 - (1.0 - p_attempt).powi(hw.m as i32);
    let p_chain = 0.5f64.powi(n as i32) * p_link.powi(n as i32 + 1);
    Ok(hw.c_fiber_km_s / l_km * p_chain)
}

/// Largest `n_max` whose chain fidelity strictly exceeds `f_min`, then the
/// largest link length whose rate at `n_max` strictly exceeds `r_min`.
///
/// Both targets are strict inequalities; boundary equality fails. The length
/// is found by bisection on the monotone rate and floored to whole km unless
/// `opts.continuous_l_max` is set.
pub fn derive_bounds(req: &ChainRequirements, opts: &DeriveOptions) -> Result<DerivedBounds> {
    req.validate()?;
    derive_bounds_for(req.r_min_hz, req.f_min, &req.hardware, opts)
}

/// `derive_bounds` for explicit targets; used per pair under heterogeneous
/// requirements.
pub fn derive_bounds_for(
    r_min_hz: f64,
    f_min: f64,
    hw: &HardwareConstants,
    opts: &DeriveOptions,
) -> Result<DerivedBounds> {
    hw.validate()?;
    if chain_fidelity(0, hw.f_link)? <= f_min {
        return Err(Error::FidelityUnreachable {
            f_link: hw.f_link,
            f_min,
        });
    }
    let mut n_max = 0u32;
    while n_max < opts.n_max_ceiling && chain_fidelity(n_max + 1, hw.f_link)? > f_min {
        n_max += 1;
    }

    // Rate explodes as l -> 0+, so a bracket always exists above 0.1 km.
    let lo_floor = 0.1;
    if chain_rate(n_max, lo_floor, hw)? <= r_min_hz {
        return Err(Error::RateBoundBelowOneKm {
            continuous_km: lo_floor,
        });
    }
    let mut hi = 1.0;
    while chain_rate(n_max, hi, hw)? > r_min_hz {
        hi *= 2.0;
        if hi > 1e7 {
            return Err(Error::Domain(
                "rate target holds beyond 1e7 km; check the hardware constants".into(),
            ));
        }
    }
    let mut lo = lo_floor;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if chain_rate(n_max, mid, hw)? > r_min_hz {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let l_max_km = if opts.continuous_l_max {
        lo
    } else {
        let mut whole = lo.floor();
        // Strict inequality must hold at the reported integer length.
        while whole >= 1.0 && chain_rate(n_max, whole, hw)? <= r_min_hz {
            whole -= 1.0;
        }
        if whole < 1.0 {
            return Err(Error::RateBoundBelowOneKm { continuous_km: lo });
        }
        whole
    };
    Ok(DerivedBounds { n_max, l_max_km })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_hw() -> HardwareConstants {
        HardwareConstants {
            f_link: 0.99,
            m: 1000,
            c_fiber_km_s: 200_000.0,
            l_att_km: 22.0,
        }
    }

    fn paper_req() -> ChainRequirements {
        ChainRequirements {
            r_min_hz: 1.0,
            f_min: 0.93,
            k: 2,
            d: 4,
            hardware: paper_hw(),
            per_pair: BTreeMap::new(),
            per_node: BTreeMap::new(),
        }
    }

    #[test]
    fn fidelity_single_link_is_link_fidelity() {
        assert!((chain_fidelity(0, 0.99).unwrap() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn fidelity_noiseless_links_stay_perfect() {
        for n in [0, 1, 5, 40] {
            assert!((chain_fidelity(n, 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_boundary_around_six_repeaters() {
        let f6 = chain_fidelity(6, 0.99).unwrap();
        let f7 = chain_fidelity(7, 0.99).unwrap();
        assert!((f6 - 0.9327).abs() < 5e-4, "f6={f6}");
        assert!(f6 > 0.93);
        assert!((f7 - 0.9236).abs() < 5e-4, "f7={f7}");
        assert!(f7 < 0.93);
    }

    #[test]
    fn fidelity_rejects_out_of_domain_link() {
        assert!(chain_fidelity(1, 0.25).is_err());
        assert!(chain_fidelity(1, 1.01).is_err());
    }

    #[test]
    fn rate_hand_substitution_single_attempt() {
        // n=0, m=1, l = l_att * ln 2: per-attempt success is exactly 1/4.
        let hw = HardwareConstants {
            f_link: 0.99,
            m: 1,
            c_fiber_km_s: 200_000.0,
            l_att_km: 22.0,
        };
        let l = hw.l_att_km * std::f64::consts::LN_2;
        let want = hw.c_fiber_km_s / l * 0.25;
        let got = chain_rate(0, l, &hw).unwrap();
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn rate_boundary_around_136_km() {
        let hw = paper_hw();
        let r136 = chain_rate(6, 136.0, &hw).unwrap();
        let r137 = chain_rate(6, 137.0, &hw).unwrap();
        assert!((r136 - 1.06).abs() < 0.01, "r136={r136}");
        assert!(r136 > 1.0);
        assert!(r137 < 1.0, "r137={r137}");
    }

    #[test]
    fn rate_saturates_with_many_modes() {
        let mut hw = paper_hw();
        hw.m = 1_000_000;
        let n = 3;
        let l = 30.0;
        let want = hw.c_fiber_km_s / l * 0.5f64.powi(n as i32);
        let got = chain_rate(n, l, &hw).unwrap();
        assert!((got - want).abs() < 1e-6 * want);
    }

    #[test]
    fn rate_rejects_nonpositive_length() {
        assert!(chain_rate(0, 0.0, &paper_hw()).is_err());
        assert!(chain_rate(0, -3.0, &paper_hw()).is_err());
    }

    #[test]
    fn bounds_match_worked_example() {
        let b = derive_bounds(&paper_req(), &DeriveOptions::default()).unwrap();
        assert_eq!(b.n_max, 6);
        assert_eq!(b.l_max_km, 136.0);
    }

    #[test]
    fn bounds_tight_fidelity_forces_direct_link() {
        let mut req = paper_req();
        req.f_min = 0.989;
        // One swap already drops fidelity to ~0.9803 < 0.989.
        let b = derive_bounds(&req, &DeriveOptions::default()).unwrap();
        assert_eq!(b.n_max, 0);
    }

    #[test]
    fn bounds_noiseless_links_hit_ceiling() {
        let mut req = paper_req();
        req.hardware.f_link = 1.0;
        req.f_min = 0.99;
        // Every added repeater halves the rate, so the 64-hop ceiling needs
        // a correspondingly tiny rate target to leave any admissible length.
        req.r_min_hz = 1e-14;
        let b = derive_bounds(&req, &DeriveOptions::default()).unwrap();
        assert_eq!(b.n_max, 64);
        let b2 = derive_bounds(
            &req,
            &DeriveOptions {
                n_max_ceiling: 7,
                continuous_l_max: false,
            },
        )
        .unwrap();
        assert_eq!(b2.n_max, 7);
        // at the default ceiling a 1 Hz target leaves no whole-km length
        req.r_min_hz = 1.0;
        assert!(matches!(
            derive_bounds(&req, &DeriveOptions::default()),
            Err(Error::RateBoundBelowOneKm { .. })
        ));
    }

    #[test]
    fn bounds_unreachable_fidelity_is_an_error() {
        let mut req = paper_req();
        req.f_min = 0.995;
        assert!(matches!(
            derive_bounds(&req, &DeriveOptions::default()),
            Err(Error::FidelityUnreachable { .. })
        ));
    }

    #[test]
    fn bounds_consistency_at_integer_granularity() {
        let req = paper_req();
        let b = derive_bounds(&req, &DeriveOptions::default()).unwrap();
        let hw = &req.hardware;
        assert!(chain_fidelity(b.n_max, hw.f_link).unwrap() > req.f_min);
        assert!(chain_fidelity(b.n_max + 1, hw.f_link).unwrap() <= req.f_min);
        assert!(chain_rate(b.n_max, b.l_max_km, hw).unwrap() > req.r_min_hz);
        assert!(chain_rate(b.n_max, b.l_max_km + 1.0, hw).unwrap() <= req.r_min_hz);
    }

    #[test]
    fn fidelity_decreases_in_hops() {
        for f_link in [0.9, 0.95, 0.99, 0.999] {
            let mut prev = chain_fidelity(0, f_link).unwrap();
            for n in 1..20 {
                let cur = chain_fidelity(n, f_link).unwrap();
                assert!(cur < prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn rate_decreases_in_length_and_hops() {
        let hw = paper_hw();
        for n in [0u32, 2, 6] {
            let mut prev = f64::INFINITY;
            for l in [5.0, 20.0, 50.0, 100.0, 150.0, 300.0] {
                let cur = chain_rate(n, l, &hw).unwrap();
                assert!(cur < prev);
                prev = cur;
            }
        }
        for l in [20.0, 60.0, 136.0] {
            let mut prev = f64::INFINITY;
            for n in 0..10 {
                let cur = chain_rate(n, l, &hw).unwrap();
                assert!(cur < prev, "rate must fall with more swaps at l={l}");
                prev = cur;
            }
        }
    }

    #[test]
    fn bisection_matches_exhaustive_integer_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            // draws kept in the regime where the integer-km bound exists
            let hw = HardwareConstants {
                f_link: rng.gen_range(0.95..0.99),
                m: rng.gen_range(100..5000),
                c_fiber_km_s: 200_000.0,
                l_att_km: rng.gen_range(18.0..30.0),
            };
            let r_min = 10f64.powf(rng.gen_range(-2.0..0.0));
            let f_min = rng.gen_range(0.90..(hw.f_link - 0.002));
            let b = derive_bounds_for(r_min, f_min, &hw, &DeriveOptions::default()).unwrap();
            let mut scan = None;
            for l in (1..=2000).rev() {
                if chain_rate(b.n_max, l as f64, &hw).unwrap() > r_min {
                    scan = Some(l as f64);
                    break;
                }
            }
            assert_eq!(Some(b.l_max_km), scan, "hw={hw:?} r_min={r_min}");
        }
    }

    #[test]
    fn continuous_bound_brackets_the_floored_one() {
        let req = paper_req();
        let cont = derive_bounds(
            &req,
            &DeriveOptions {
                continuous_l_max: true,
                ..DeriveOptions::default()
            },
        )
        .unwrap();
        assert!(cont.l_max_km >= 136.0 && cont.l_max_km < 137.0);
    }
}
