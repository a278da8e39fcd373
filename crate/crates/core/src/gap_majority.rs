//! Gap-threshold instance and its majority-of-probes protocol.
//!
//! The inner function maps an n-bit block to 0 when its weight is at
//! most n/2 - sqrt(n), to 1 when at least n/2 + sqrt(n), and is
//! undefined between. The outer relation accepts any answer string
//! within Hamming distance n/2 - sqrt(n) of the block values. Both
//! thresholds are decided with exact integer arithmetic; no square root
//! is ever taken.
//!
//! The protocol probes every block at uniformly random positions (with
//! replacement) an odd number of times and outputs the majority votes.
//! Its per-block advantage has a closed binomial form; the end-to-end
//! error is estimated by a seeded, parallelism-invariant Monte Carlo.

use crate::problems::{Bitstring, GVal};
use crate::rational::{half, Rat};
use crate::rng::Stream;
use crate::{Error, Result};
use num_bigint::BigInt;
use rayon::prelude::*;

/// Threshold comparisons for blocks of `n` bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GapThresholdSpec {
    pub n: u64,
}

impl GapThresholdSpec {
    pub fn new(n: u64) -> Self {
        assert!(n > 0);
        GapThresholdSpec { n }
    }

    /// weight <= n/2 - sqrt(n), decided as n - 2w >= 0 and (n-2w)^2 >= 4n.
    pub fn below_low(&self, weight: u64) -> bool {
        let n = self.n as i128;
        let d = n - 2 * weight as i128;
        d >= 0 && d * d >= 4 * n
    }

    /// weight >= n/2 + sqrt(n), decided as 2w - n >= 0 and (2w-n)^2 >= 4n.
    pub fn above_high(&self, weight: u64) -> bool {
        let n = self.n as i128;
        let d = 2 * weight as i128 - n;
        d >= 0 && d * d >= 4 * n
    }

    pub fn classify_weight(&self, weight: u64) -> GVal {
        debug_assert!(weight <= self.n);
        if self.below_low(weight) {
            GVal::Zero
        } else if self.above_high(weight) {
            GVal::One
        } else {
            GVal::Star
        }
    }

    /// Largest weight classified 0 and smallest classified 1: the
    /// extremal legal inputs.
    pub fn boundary_weights(&self) -> (u64, u64) {
        let mut low = 0;
        for w in (0..=self.n / 2).rev() {
            if self.below_low(w) {
                low = w;
                break;
            }
        }
        let mut high = self.n;
        for w in self.n.div_ceil(2)..=self.n {
            if self.above_high(w) {
                high = w;
                break;
            }
        }
        (low, high)
    }
}

/// The threshold promise function on an explicit bit string.
pub fn g0_eval(x: &Bitstring) -> GVal {
    GapThresholdSpec::new(x.len() as u64).classify_weight(x.weight() as u64)
}

/// Membership in the distance relation: `a` is accepted for `z` when
/// their Hamming distance is at most n/2 - sqrt(n).
pub fn f0_contains(z: &Bitstring, a: &Bitstring) -> Result<bool> {
    if z.len() != a.len() {
        return Err(Error::LengthMismatch {
            expected: z.len(),
            got: a.len(),
        });
    }
    let spec = GapThresholdSpec::new(z.len() as u64);
    Ok(spec.below_low(z.xor(a).weight() as u64))
}

/// Integer square root when `n` is a perfect square.
fn exact_sqrt(n: u64) -> Option<u64> {
    let s = (n as f64).sqrt().round() as u64;
    (s.saturating_sub(1)..=s + 1).find(|c| c * c == n)
}

fn check_regime(n: u64, t: u64) -> Result<u64> {
    let s = exact_sqrt(n)
        .ok_or_else(|| Error::ParameterRange(format!("{n} is not a perfect square")))?;
    if s < 2 {
        // Blocks shorter than 4 bits have no legal inputs at all.
        return Err(Error::ParameterRange(format!("block length {n} below 4")));
    }
    if t.is_multiple_of(2) || t == 0 {
        return Err(Error::ParameterRange(format!("probe count {t} is not odd")));
    }
    if t > s {
        return Err(Error::ParameterRange(format!(
            "probe count {t} exceeds sqrt(n) = {s}"
        )));
    }
    Ok(s)
}

fn binomial(n: u64, k: u64) -> BigInt {
    let mut num = BigInt::from(1);
    for i in 0..k {
        num = num * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    num
}

/// Exact probability that the majority of `t` probes is correct when
/// each probe is independently correct with probability 1/2 + 1/sqrt(n).
/// Errors if the value does not strictly exceed 1/2 + t/(8 sqrt(n)).
pub fn exact_probe_advantage(n: u64, t: u64) -> Result<Rat> {
    let s = check_regime(n, t)?;
    // p = 1/2 + 1/s = (s+2)/(2s); sum the upper binomial tail.
    let p = Rat::new(BigInt::from(s + 2), BigInt::from(2 * s));
    let q = Rat::from_integer(1.into()) - &p;
    let mut total = Rat::from_integer(0.into());
    for k in t.div_ceil(2)..=t {
        let term = Rat::from_integer(binomial(t, k))
            * crate::rational::pow(&p, k as usize)
            * crate::rational::pow(&q, (t - k) as usize);
        total += term;
    }
    let bound = advantage_bound(n, t)?;
    if total <= bound {
        return Err(Error::Internal(format!(
            "majority advantage {total} fails its lower bound {bound}"
        )));
    }
    Ok(total)
}

/// The closed-form lower bound 1/2 + t/(8 sqrt(n)) as an exact rational.
pub fn advantage_bound(n: u64, t: u64) -> Result<Rat> {
    let s = check_regime(n, t)?;
    Ok(half() + Rat::new(BigInt::from(t), BigInt::from(8 * s)))
}

/// Probe schedule: an odd probe count plus the seed of the keyed
/// counter-based randomness. Every probe position is a pure function of
/// `(seed, trial, block, probe)`, so schedules are reproducible and
/// independent of execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbePlan {
    pub t: u64,
    pub seed: u64,
}

impl ProbePlan {
    pub fn new(n: u64, t: u64, seed: u64) -> Result<Self> {
        check_regime(n, t)?;
        Ok(ProbePlan { t, seed })
    }

    /// Uniform position in `[0, n)` for the given probe coordinates.
    pub fn position(&self, trial: u64, block: u64, probe: u64, n: u64) -> u64 {
        Stream::new(&[self.seed, trial, block, probe]).below(n)
    }
}

/// Worst-case input family for the Monte Carlo harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFamily {
    /// Every block at the largest weight still classified 0.
    BoundaryZero,
    /// Every block at the smallest weight classified 1.
    BoundaryOne,
    /// Alternating between the two boundaries.
    MixedBoundary,
    /// Control: all-zero blocks, trivially classified 0.
    AllZeros,
    /// Control: all-one blocks, trivially classified 1.
    AllOnes,
}

impl InputFamily {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "boundary-zero" => InputFamily::BoundaryZero,
            "boundary-one" => InputFamily::BoundaryOne,
            "mixed-boundary" => InputFamily::MixedBoundary,
            "all-zeros" => InputFamily::AllZeros,
            "all-ones" => InputFamily::AllOnes,
            _ => return Err(Error::Parse(format!("unknown input family {s:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputFamily::BoundaryZero => "boundary-zero",
            InputFamily::BoundaryOne => "boundary-one",
            InputFamily::MixedBoundary => "mixed-boundary",
            InputFamily::AllZeros => "all-zeros",
            InputFamily::AllOnes => "all-ones",
        }
    }

    /// Weight of block `i` under this family.
    fn block_weight(&self, spec: &GapThresholdSpec, i: u64) -> u64 {
        let (low, high) = spec.boundary_weights();
        match self {
            InputFamily::BoundaryZero => low,
            InputFamily::BoundaryOne => high,
            InputFamily::MixedBoundary => {
                if i.is_multiple_of(2) {
                    low
                } else {
                    high
                }
            }
            InputFamily::AllZeros => 0,
            InputFamily::AllOnes => spec.n,
        }
    }
}

/// Result of a Monte Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct McOutcome {
    pub n: u64,
    pub t: u64,
    pub trials: u64,
    pub seed: u64,
    pub family: InputFamily,
    pub failures: u64,
    pub estimate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub chernoff_bound: f64,
    /// Total probes over all trials: exactly trials * n * t.
    pub probes: u64,
}

/// Chernoff-form error bound exp(-(1/2) (t/8 - 1)^2).
pub fn chernoff_bound(t: u64) -> f64 {
    let d = t as f64 / 8.0 - 1.0;
    (-0.5 * d * d).exp()
}

/// 95% Wilson score interval for `failures` out of `trials`.
pub fn wilson_interval(failures: u64, trials: u64) -> (f64, f64) {
    let z = 1.96f64;
    let nf = trials as f64;
    let p = failures as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let spread = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - spread).max(0.0), (centre + spread).min(1.0))
}

/// Runs the majority-probe protocol on the family's fixed input and
/// counts the trials whose answer string is not accepted outright (fewer
/// than n/2 + sqrt(n) blocks answered correctly).
///
/// Each probe draws from its own stream keyed by (seed, trial, block,
/// probe), so the outcome is a pure function of the arguments no matter
/// how trials are scheduled over threads.
pub fn monte_carlo_error(
    n: u64,
    t: u64,
    trials: u64,
    seed: u64,
    family: InputFamily,
) -> Result<McOutcome> {
    let plan = ProbePlan::new(n, t, seed)?;
    if trials < 1000 {
        return Err(Error::ParameterRange(format!(
            "{trials} trials; at least 1000 required"
        )));
    }
    let spec = GapThresholdSpec::new(n);
    let weights: Vec<u64> = (0..n).map(|i| family.block_weight(&spec, i)).collect();
    let values: Vec<bool> = weights
        .iter()
        .map(|w| match spec.classify_weight(*w) {
            GVal::One => true,
            GVal::Zero => false,
            GVal::Star => unreachable!("family weights are legal"),
        })
        .collect();

    let failures: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut correct = 0u64;
            for block in 0..n {
                let w = weights[block as usize];
                let mut ones = 0u64;
                for probe in 0..t {
                    let j = plan.position(trial, block, probe, n);
                    // Block layout: the first w positions hold ones.
                    if j < w {
                        ones += 1;
                    }
                }
                let vote = 2 * ones > t;
                if vote == values[block as usize] {
                    correct += 1;
                }
            }
            // The answer is accepted outright when the wrong blocks fit
            // under the low distance threshold.
            u64::from(!spec.below_low(n - correct))
        })
        .sum();

    let estimate = failures as f64 / trials as f64;
    let (wilson_low, wilson_high) = wilson_interval(failures, trials);
    Ok(McOutcome {
        n,
        t,
        trials,
        seed,
        family,
        failures,
        estimate,
        wilson_low,
        wilson_high,
        chernoff_bound: chernoff_bound(t),
        probes: trials * n * t,
    })
}
