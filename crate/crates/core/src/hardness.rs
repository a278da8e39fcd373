//! Brute-force hardness certificates for tiny inner functions.
//!
//! Over an exhaustively enumerated family of small decision trees, the
//! hardness of a balanced input distribution is the smallest cost per
//! squared advantage any tree in the family achieves. A grid search over
//! exactly balanced rational distributions then looks for the hardest
//! one. The certificate is relative to the enumerated family only; it
//! makes no claim about protocols outside it.

use crate::problems::{Bitstring, Distribution, GVal, PromiseFunction};
use crate::rational::{half, Rat};
use crate::restrict::BlockTree;
use crate::{Error, Result};
use num_traits::Signed;

/// Advantage and cost of one tree against a candidate distribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeProfile {
    pub tree: usize,
    /// Accuracy minus one half; may be negative.
    pub advantage: Rat,
    pub expected_queries: Rat,
}

/// Hardest-distribution certificate relative to an enumerated family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardnessCertificate {
    pub mu: Distribution,
    pub family_size: usize,
    /// min over positive-advantage trees of cost / advantage^2.
    pub score: Rat,
}

const FAMILY_CAP: usize = 1_000_000;

/// Exhaustive family of decision trees over `m` bits up to `max_depth`,
/// never re-querying a bit along a path.
pub fn enumerate_trees(m: usize, max_depth: usize) -> Result<Vec<BlockTree>> {
    if max_depth > m {
        return Err(Error::ParameterRange(format!(
            "max depth {max_depth} exceeds the {m} available bits"
        )));
    }
    if expected_family_size(m, max_depth) > FAMILY_CAP as u128 {
        return Err(Error::FamilyTooLarge(FAMILY_CAP));
    }
    let all_bits: Vec<usize> = (0..m).collect();
    Ok(enumerate(&all_bits, max_depth))
}

fn enumerate(available: &[usize], depth: usize) -> Vec<BlockTree> {
    let mut out = vec![BlockTree::leaf(false), BlockTree::leaf(true)];
    if depth == 0 {
        return out;
    }
    for (pos, &bit) in available.iter().enumerate() {
        let rest: Vec<usize> = available
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, b)| *b)
            .collect();
        let subtrees = enumerate(&rest, depth - 1);
        for t0 in &subtrees {
            for t1 in &subtrees {
                out.push(BlockTree::query(bit, t0.clone(), t1.clone()));
            }
        }
    }
    out
}

/// Family size by the recursion `T(v, d) = 2 + v * T(v-1, d-1)^2`.
pub fn expected_family_size(m: usize, max_depth: usize) -> u128 {
    fn t(vars: u128, depth: usize) -> u128 {
        if depth == 0 || vars == 0 {
            return 2;
        }
        let sub = t(vars - 1, depth - 1);
        2 + vars.saturating_mul(sub.saturating_mul(sub))
    }
    t(m as u128, max_depth)
}

/// Profiles every tree in the family against the distribution.
pub fn profile_family(
    family: &[BlockTree],
    g: &PromiseFunction,
    mu: &Distribution,
) -> Vec<TreeProfile> {
    family
        .iter()
        .enumerate()
        .map(|(tree, t)| TreeProfile {
            tree,
            advantage: t.accuracy(g, mu) - half(),
            expected_queries: t.expected_queries(mu),
        })
        .collect()
}

/// Smallest cost per squared advantage over positive-advantage trees.
pub fn hardness_score(
    mu: &Distribution,
    g: &PromiseFunction,
    family: &[BlockTree],
) -> Result<HardnessCertificate> {
    crate::problems::check_inner_distribution(mu, g)?;
    let mut best: Option<Rat> = None;
    for profile in profile_family(family, g, mu) {
        if !profile.advantage.is_positive() {
            continue;
        }
        let score = &profile.expected_queries / (&profile.advantage * &profile.advantage);
        best = Some(match best {
            None => score,
            Some(b) if score < b => score,
            Some(b) => b,
        });
    }
    match best {
        Some(score) => Ok(HardnessCertificate {
            mu: mu.clone(),
            family_size: family.len(),
            score,
        }),
        None => Err(Error::NoPositiveAdvantage),
    }
}

/// All splits of a unit of mass over `points` with weights that are
/// multiples of `1/grid`, every point allowed weight zero except that
/// the split must be a distribution (total one, some positive mass).
fn grid_splits(points: &[Bitstring], grid: u32) -> Vec<Vec<(Bitstring, Rat)>> {
    fn go(
        points: &[Bitstring],
        remaining: u32,
        grid: u32,
        acc: &mut Vec<(Bitstring, Rat)>,
        out: &mut Vec<Vec<(Bitstring, Rat)>>,
    ) {
        if points.len() == 1 {
            let mut split = acc.clone();
            if remaining > 0 {
                split.push((points[0], Rat::new(remaining.into(), grid.into())));
            }
            if !split.is_empty() {
                out.push(split);
            }
            return;
        }
        for take in 0..=remaining {
            if take > 0 {
                acc.push((points[0], Rat::new(take.into(), grid.into())));
            }
            go(&points[1..], remaining - take, grid, acc, out);
            if take > 0 {
                acc.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(points, grid, grid, &mut Vec::new(), &mut out);
    out
}

/// Number of balanced grid candidates for the given support sizes.
pub fn grid_candidate_count(zeros: usize, ones: usize, grid: u32) -> u128 {
    fn compositions(points: u128, grid: u128) -> u128 {
        // Weak compositions of `grid` into `points` parts, minus the
        // all-zero one (which cannot happen since the total is grid > 0).
        let mut num = 1u128;
        let mut den = 1u128;
        for i in 0..(points - 1) {
            num = num.saturating_mul(grid + 1 + i);
            den = den.saturating_mul(i + 1);
        }
        num / den
    }
    compositions(zeros as u128, grid as u128).saturating_mul(compositions(ones as u128, grid as u128))
}

const SWEEP_CAP: u128 = 200_000;

/// Searches balanced rational distributions (denominators dividing
/// `2*grid`) for the hardest one against the family.
///
/// When the grid is small enough the search sweeps it exhaustively;
/// otherwise it hill-climbs from the uniform balanced mixture, moving
/// one grid step of mass at a time, deterministically. Either way the
/// result never scores below the uniform balanced start.
pub fn search_hardest(
    g: &PromiseFunction,
    family: &[BlockTree],
    grid: u32,
) -> Result<HardnessCertificate> {
    if grid == 0 {
        return Err(Error::ParameterRange("grid resolution is zero".to_string()));
    }
    let zeros = g.preimage(GVal::Zero);
    let ones = g.preimage(GVal::One);
    if zeros.is_empty() || ones.is_empty() {
        return Err(Error::ConstantOnSupport);
    }

    let balanced = |side0: &[(Bitstring, Rat)], side1: &[(Bitstring, Rat)]| -> Distribution {
        Distribution::new(
            side0
                .iter()
                .chain(side1.iter())
                .map(|(x, w)| (*x, w * half()))
                .collect(),
        )
        .expect("two half-weighted conditionals form a distribution")
    };

    // The uniform balanced mixture is always a candidate, so the search
    // result can only improve on it.
    let uniform0: Vec<(Bitstring, Rat)> = zeros
        .iter()
        .map(|x| (*x, Rat::new(1.into(), (zeros.len() as u32).into())))
        .collect();
    let uniform1: Vec<(Bitstring, Rat)> = ones
        .iter()
        .map(|x| (*x, Rat::new(1.into(), (ones.len() as u32).into())))
        .collect();
    let mut best_mu = balanced(&uniform0, &uniform1);
    let mut best = hardness_score(&best_mu, g, family)?;

    let consider = |mu: Distribution, best: &mut HardnessCertificate, best_mu: &mut Distribution| {
        if let Ok(cert) = hardness_score(&mu, g, family) {
            // Deterministic tie-breaking: keep the first maximum found.
            if cert.score > best.score {
                *best = cert;
                *best_mu = mu;
            }
        }
    };

    if grid_candidate_count(zeros.len(), ones.len(), grid) <= SWEEP_CAP {
        for side0 in grid_splits(&zeros, grid) {
            for side1 in grid_splits(&ones, grid) {
                consider(balanced(&side0, &side1), &mut best, &mut best_mu);
            }
        }
    } else {
        // Greedy hill-climb: repeatedly move one 1/grid unit of mass
        // between two points on the same side while it helps.
        let step = Rat::new(1.into(), (2 * grid).into());
        let mut current = best_mu.clone();
        loop {
            let mut improved = false;
            let points: Vec<Bitstring> = zeros.iter().chain(ones.iter()).copied().collect();
            let mut candidates = Vec::new();
            for from in &points {
                for to in &points {
                    if from == to || g.eval(from) != g.eval(to) {
                        continue;
                    }
                    let w_from = current.prob(from);
                    if w_from < step {
                        continue;
                    }
                    let mut support: Vec<(Bitstring, Rat)> = current
                        .support()
                        .iter()
                        .filter(|(x, _)| x != from || w_from != step)
                        .map(|(x, w)| {
                            let mut w = w.clone();
                            if x == from {
                                w -= &step;
                            }
                            if x == to {
                                w += &step;
                            }
                            (*x, w)
                        })
                        .collect();
                    if !support.iter().any(|(x, _)| x == to) {
                        support.push((*to, step.clone()));
                    }
                    if let Ok(mu) = Distribution::new(support) {
                        candidates.push(mu);
                    }
                }
            }
            for mu in candidates {
                if let Ok(cert) = hardness_score(&mu, g, family) {
                    if cert.score > best.score {
                        best = cert;
                        best_mu = mu.clone();
                        current = mu;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    debug_assert_eq!(best.mu, best_mu);
    Ok(best)
}

/// Convenience wrapper: enumerate the family, then search.
pub fn search_hardest_with_depth(
    g: &PromiseFunction,
    max_depth: usize,
    grid: u32,
) -> Result<HardnessCertificate> {
    let m = g.input_len();
    let family = enumerate_trees(m, max_depth.min(m))?;
    search_hardest(g, &family, grid)
}
