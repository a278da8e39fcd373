//! Exact evaluation and verification engine.
//!
//! Protocols are evaluated with exact rational arithmetic throughout:
//! error probabilities, expected query counts, per-vertex reach
//! probabilities, per-leaf predictor statistics, and the structural
//! checks (polarity, query locality, block independence) that the
//! transformer's outputs must satisfy.
//!
//! Deterministic trees are evaluated by splitting the input distribution
//! down the tree; randomised trees by a forward state-distribution pass
//! over `(node, memory)` pairs. The tests re-derive both with
//! independent per-input walks and raw path enumeration.

pub mod correspondence;

pub use correspondence::{
    verify_corollary, verify_predictors, verify_structure, CheckOutcome,
};

use crate::problems::{
    block_values, compose_membership, lift_distribution, Bitstring, Distribution, GVal,
    PromiseFunction, Relation,
};
use crate::rational::{half, one, zero, Rat};
use crate::trees::{
    NodeId, PNode, PathStep, PolarisedTree, WState, XNode, XTree,
};
use crate::{Error, Result};
use num_traits::Zero;
use std::collections::BTreeMap;

/// Exact evaluation summary of a protocol against a distribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolReport {
    pub error: Rat,
    pub expected_queries: Rat,
    /// Expected queries into each block (deterministic trees) or to each
    /// outer index (polarised trees).
    pub per_block: Vec<Rat>,
    /// Reach probability per node id.
    pub reach: Vec<Rat>,
}

/// Evaluates a deterministic tree for the composed problem against an
/// input distribution over `{0,1}^{n*m}`.
pub fn evaluate_x_protocol(
    tree: &XTree,
    f: &Relation,
    g: &PromiseFunction,
    mu: &Distribution,
) -> Result<ProtocolReport> {
    let n = f.input_len();
    let m = g.input_len();
    if mu.input_len() != n * m {
        return Err(Error::LengthMismatch {
            expected: n * m,
            got: mu.input_len(),
        });
    }
    tree.check_dimensions(n, m)?;

    let mut report = ProtocolReport {
        error: zero(),
        expected_queries: zero(),
        per_block: vec![zero(); n],
        reach: vec![zero(); tree.len()],
    };
    // Split the (sub-)distribution down the tree, one frame per vertex.
    let mut frames: Vec<(NodeId, Vec<(Bitstring, Rat)>)> =
        vec![(tree.root(), mu.support().to_vec())];
    while let Some((id, entries)) = frames.pop() {
        let mass: Rat = entries.iter().map(|(_, w)| w.clone()).sum();
        if mass.is_zero() {
            continue;
        }
        report.reach[id] += &mass;
        match tree.node(id) {
            XNode::Leaf { answer } => {
                for (x, w) in &entries {
                    if !compose_membership(f, g, x, answer)? {
                        report.error += w;
                    }
                }
            }
            XNode::Query {
                block,
                bit,
                children,
            } => {
                report.expected_queries += &mass;
                report.per_block[*block] += &mass;
                let pos = *block * m + *bit;
                let (ones, zeros): (Vec<_>, Vec<_>) =
                    entries.into_iter().partition(|(x, _)| x.get(pos));
                frames.push((children[0], zeros));
                frames.push((children[1], ones));
            }
        }
    }
    Ok(report)
}

/// Expected number of queries into block `i0`, conditioned on the other
/// blocks agreeing with `x`.
pub fn x_block_cost_conditional(
    tree: &XTree,
    f: &Relation,
    g: &PromiseFunction,
    mu: &Distribution,
    i0: usize,
    x: &Bitstring,
) -> Result<Rat> {
    let n = f.input_len();
    let m = g.input_len();
    let cond = mu.condition(|y| (0..n).all(|i| i == i0 || y.block(i, n, m) == x.block(i, n, m)))?;
    let mut total = zero();
    for (y, w) in cond.support() {
        let walk = tree.walk(y, n, m);
        total += w * Rat::from_integer((walk.per_block[i0] as u64).into());
    }
    Ok(total)
}

/// Distribution of the leaf reached by a deterministic tree.
pub fn x_leaf_law(tree: &XTree, n: usize, m: usize, mu: &Distribution) -> BTreeMap<NodeId, Rat> {
    let mut law = BTreeMap::new();
    for (x, w) in mu.support() {
        let walk = tree.walk(x, n, m);
        *law.entry(walk.leaf).or_insert_with(zero) += w;
    }
    law
}

/// Most-likely-value predictor of one outer index at one leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafPredictor {
    /// The more likely value; ties and unreachable leaves give `false`.
    pub label: bool,
    /// Probability of the label beyond a coin flip, in `[0, 1/2]`.
    pub advantage: Rat,
}

/// Per-leaf predictors of a deterministic tree plus their aggregate.
#[derive(Clone, Debug)]
pub struct XLeafStats {
    /// Per leaf id, one predictor per outer index, computed under the
    /// uniform lift of the inner distribution.
    pub per_leaf: BTreeMap<NodeId, Vec<LeafPredictor>>,
    /// Aggregate advantage per index, with leaves weighted by the
    /// supplied outer distribution's lift.
    pub delta_tree: Vec<Rat>,
    /// Leaf weights used for the aggregate.
    pub leaf_weight: BTreeMap<NodeId, Rat>,
}

/// Computes per-leaf predictors under the uniform lift and aggregates
/// them with leaf weights drawn from `mu_f`'s lift.
pub fn x_leaf_stats(
    tree: &XTree,
    g: &PromiseFunction,
    mu_g: &Distribution,
    mu_f: &Distribution,
) -> Result<XLeafStats> {
    let n = mu_f.input_len();
    let m = g.input_len();
    tree.check_dimensions(n, m)?;
    let uniform_lift = lift_distribution(&Distribution::uniform(n), mu_g, g)?;
    let weight_lift = lift_distribution(mu_f, mu_g, g)?;

    // Joint mass of (leaf, block value) under the uniform lift.
    let mut joint: BTreeMap<NodeId, (Rat, Vec<Rat>)> = BTreeMap::new();
    for (x, w) in uniform_lift.support() {
        let walk = tree.walk(x, n, m);
        let entry = joint
            .entry(walk.leaf)
            .or_insert_with(|| (zero(), vec![zero(); n]));
        entry.0 += w;
        let z = block_values(g, x, n).expect("lift support is promise-respecting");
        for i in 0..n {
            if z.get(i) {
                entry.1[i] += w;
            }
        }
    }

    let mut per_leaf = BTreeMap::new();
    for id in tree.node_ids() {
        if !matches!(tree.node(id), XNode::Leaf { .. }) {
            continue;
        }
        let predictors = match joint.get(&id) {
            Some((total, ones)) if !total.is_zero() => (0..n)
                .map(|i| {
                    let p_one = &ones[i] / total;
                    if p_one > half() {
                        LeafPredictor {
                            label: true,
                            advantage: p_one - half(),
                        }
                    } else {
                        LeafPredictor {
                            label: false,
                            advantage: half() - p_one,
                        }
                    }
                })
                .collect(),
            _ => vec![
                LeafPredictor {
                    label: false,
                    advantage: zero(),
                };
                n
            ],
        };
        per_leaf.insert(id, predictors);
    }

    let leaf_weight = x_leaf_law(tree, n, m, &weight_lift);
    let mut delta_tree = vec![zero(); n];
    for (leaf, w) in &leaf_weight {
        for (i, d) in delta_tree.iter_mut().enumerate() {
            *d += w * &per_leaf[leaf][i].advantage;
        }
    }
    Ok(XLeafStats {
        per_leaf,
        delta_tree,
        leaf_weight,
    })
}

/// Forward state-distribution pass of a polarised tree on one input.
#[derive(Clone, Debug)]
pub struct ZForward {
    /// Reach probability per node id.
    pub reach: Vec<Rat>,
    /// Distribution over memory states on arrival, per node id.
    pub states: Vec<BTreeMap<WState, Rat>>,
    /// Probability that each outer index gets queried during the run.
    pub query_prob: Vec<Rat>,
}

impl ZForward {
    pub fn expected_queries(&self) -> Rat {
        self.query_prob.iter().cloned().sum()
    }

    /// Probability of arriving at `id` with the index already known.
    pub fn known_mass(&self, id: NodeId, index: usize) -> Rat {
        self.states[id]
            .iter()
            .filter(|(w, _)| w.get(index).is_some())
            .map(|(_, p)| p.clone())
            .sum()
    }
}

/// Runs the forward pass for input `z` over the memory width `n`.
pub fn forward_pass(tree: &PolarisedTree, z: &Bitstring, n: usize) -> Result<ZForward> {
    if z.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: z.len(),
        });
    }
    tree.check_index_span(n)?;
    let order = tree.topo_order()?;
    let mut states: Vec<BTreeMap<WState, Rat>> = vec![BTreeMap::new(); tree.len()];
    states[tree.root()].insert(WState::fresh(n), one());
    let mut query_prob = vec![zero(); n];

    for id in order {
        let here = states[id].clone();
        let push = |child: NodeId, w: WState, p: Rat, states: &mut Vec<BTreeMap<WState, Rat>>| {
            if !p.is_zero() {
                *states[child].entry(w).or_insert_with(zero) += p;
            }
        };
        match tree.node(id) {
            PNode::Leaf { .. } => {}
            PNode::Fork { alpha, children } => {
                for (w, p) in &here {
                    push(children[0], w.clone(), p * alpha, &mut states);
                    push(children[1], w.clone(), p * &(one() - alpha), &mut states);
                }
            }
            PNode::ZNode {
                index,
                alpha,
                beta,
                children,
            } => {
                for (w, p) in &here {
                    match w.get(*index) {
                        Some(v) => push(children[v as usize], w.clone(), p.clone(), &mut states),
                        None => {
                            let v = z.get(*index);
                            let queried = p * alpha;
                            query_prob[*index] += &queried;
                            push(children[v as usize], w.set(*index, v), queried, &mut states);
                            let stay = p * &(one() - alpha);
                            push(children[1], w.clone(), &stay * beta, &mut states);
                            push(children[0], w.clone(), stay * (one() - beta), &mut states);
                        }
                    }
                }
            }
            PNode::ZMixer {
                index,
                alpha,
                beta,
                children,
            } => {
                for (w, p) in &here {
                    let bias = if w.get(*index).is_some() { alpha } else { beta };
                    push(children[1], w.clone(), p * bias, &mut states);
                    push(children[0], w.clone(), p * &(one() - bias), &mut states);
                }
            }
        }
    }
    let reach = states
        .iter()
        .map(|dist| dist.values().cloned().sum())
        .collect();
    Ok(ZForward {
        reach,
        states,
        query_prob,
    })
}

/// Forward passes for all inputs of length `n`, in input order.
pub fn forward_all(tree: &PolarisedTree, n: usize) -> Result<Vec<ZForward>> {
    Bitstring::all(n).map(|z| forward_pass(tree, &z, n)).collect()
}

/// Evaluates a polarised tree against an outer input distribution.
pub fn evaluate_polarised(
    tree: &PolarisedTree,
    f: &Relation,
    nu: &Distribution,
) -> Result<ProtocolReport> {
    let n = f.input_len();
    if nu.input_len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: nu.input_len(),
        });
    }
    let mut report = ProtocolReport {
        error: zero(),
        expected_queries: zero(),
        per_block: vec![zero(); n],
        reach: vec![zero(); tree.len()],
    };
    for (z, w) in nu.support() {
        let fwd = forward_pass(tree, z, n)?;
        for id in tree.node_ids() {
            if let PNode::Leaf { answer } = tree.node(id) {
                if answer.is_empty() {
                    return Err(Error::UnlabeledLeaf);
                }
                if !f.accepts(z, answer)? {
                    report.error += w * &fwd.reach[id];
                }
            }
            report.reach[id] += w * &fwd.reach[id];
        }
        for i in 0..n {
            report.per_block[i] += w * &fwd.query_prob[i];
        }
        report.expected_queries += w * fwd.expected_queries();
    }
    Ok(report)
}

/// Distribution of the leaf reached on input `z`.
pub fn z_leaf_law(tree: &PolarisedTree, z: &Bitstring, n: usize) -> Result<BTreeMap<NodeId, Rat>> {
    let fwd = forward_pass(tree, z, n)?;
    Ok(tree
        .leaf_ids()
        .into_iter()
        .map(|id| (id, fwd.reach[id].clone()))
        .collect())
}

/// Query statistics of one index at one leaf of a polarised tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZPredictor {
    /// Static polarity value at the leaf (`false` when never queried).
    pub value: bool,
    /// Probability the index was queried given the leaf, under the
    /// uniform outer input.
    pub query_prob: Rat,
}

/// Per-leaf query statistics of a polarised tree plus their aggregate.
#[derive(Clone, Debug)]
pub struct ZLeafStats {
    pub per_leaf: BTreeMap<NodeId, Vec<ZPredictor>>,
    /// Half the aggregated per-leaf query probability, per index, with
    /// leaves weighted by the supplied outer distribution.
    pub delta_tree: Vec<Rat>,
    pub leaf_weight: BTreeMap<NodeId, Rat>,
}

/// Computes leaf statistics of a polarised tree. The per-leaf values are
/// taken under the uniform outer input; the aggregate weights leaves by
/// `mu_f`. Fails if the tree is not polarised.
pub fn z_leaf_stats(tree: &PolarisedTree, mu_f: &Distribution) -> Result<ZLeafStats> {
    if let PolarityCheck::Violation(w) = check_polarity(tree)? {
        return Err(Error::PolarityViolation { node: w.node });
    }
    let n = mu_f.input_len();
    tree.check_index_span(n)?;
    let all = forward_all(tree, n)?;
    let uniform_w = Rat::new(1.into(), (1u32 << n).into());

    let mut per_leaf = BTreeMap::new();
    for id in tree.leaf_ids() {
        let mut reach_total = zero();
        let mut known = vec![zero(); n];
        let mut value = vec![None; n];
        for fwd in &all {
            for (w, p) in &fwd.states[id] {
                reach_total += &uniform_w * p;
                for i in 0..n {
                    if let Some(v) = w.get(i) {
                        known[i] += &uniform_w * p;
                        // Polarity already checked: all known paths agree.
                        value[i].get_or_insert(v);
                    }
                }
            }
        }
        let predictors: Vec<ZPredictor> = (0..n)
            .map(|i| ZPredictor {
                value: value[i].unwrap_or(false),
                query_prob: if reach_total.is_zero() {
                    zero()
                } else {
                    &known[i] / &reach_total
                },
            })
            .collect();
        per_leaf.insert(id, predictors);
    }

    let mut leaf_weight: BTreeMap<NodeId, Rat> = BTreeMap::new();
    for (z, w) in mu_f.support() {
        let fwd = &all[z.value() as usize];
        for id in tree.leaf_ids() {
            *leaf_weight.entry(id).or_insert_with(zero) += w * &fwd.reach[id];
        }
    }
    let mut delta_tree = vec![zero(); n];
    for (leaf, w) in &leaf_weight {
        for (i, d) in delta_tree.iter_mut().enumerate() {
            *d += w * &per_leaf[leaf][i].query_prob * half();
        }
    }
    Ok(ZLeafStats {
        per_leaf,
        delta_tree,
        leaf_weight,
    })
}

/// Probability that each index is queried when the input follows `nu`.
pub fn query_prob_under(tree: &PolarisedTree, nu: &Distribution) -> Result<Vec<Rat>> {
    let n = nu.input_len();
    let mut out = vec![zero(); n];
    for (z, w) in nu.support() {
        let fwd = forward_pass(tree, z, n)?;
        for (acc, q) in out.iter_mut().zip(&fwd.query_prob) {
            *acc += w * q;
        }
    }
    Ok(out)
}

/// Witness of two computational paths that reach one vertex knowing
/// opposite values of the same index.
#[derive(Clone, Debug)]
pub struct PolarityWitness {
    pub node: NodeId,
    pub index: usize,
    pub path_knowing_zero: Vec<PathStep>,
    pub path_knowing_one: Vec<PathStep>,
}

#[derive(Clone, Debug)]
pub enum PolarityCheck {
    Pass,
    Violation(PolarityWitness),
}

impl PolarityCheck {
    pub fn is_pass(&self) -> bool {
        matches!(self, PolarityCheck::Pass)
    }
}

/// Checks that, for every vertex and index, computational paths knowing
/// the index's value all agree on it. Total over well-formed DAGs.
pub fn check_polarity(tree: &PolarisedTree) -> Result<PolarityCheck> {
    let n = tree.index_span().max(1);
    tree.topo_order()?;
    // Reachable (node, memory) pairs under positive-probability decisions,
    // with back-pointers for witness reconstruction.
    type StateKey = (NodeId, WState);
    let mut seen: BTreeMap<StateKey, Option<(StateKey, PathStep)>> = BTreeMap::new();
    let root_key = (tree.root(), WState::fresh(n));
    seen.insert(root_key.clone(), None);
    let mut frontier = vec![root_key];
    while let Some((id, w)) = frontier.pop() {
        let mut moves: Vec<(NodeId, WState, bool, bool)> = Vec::new(); // child, state, branch, queried
        match tree.node(id) {
            PNode::Leaf { .. } => {}
            PNode::Fork { alpha, children } => {
                if !alpha.is_zero() {
                    moves.push((children[0], w.clone(), false, false));
                }
                if *alpha != one() {
                    moves.push((children[1], w.clone(), true, false));
                }
            }
            PNode::ZNode {
                index,
                alpha,
                beta,
                children,
            } => match w.get(*index) {
                Some(v) => moves.push((children[v as usize], w.clone(), v, false)),
                None => {
                    if !alpha.is_zero() {
                        // The queried value is whatever the input holds;
                        // both are possible over the input space.
                        for v in [false, true] {
                            moves.push((children[v as usize], w.set(*index, v), v, true));
                        }
                    }
                    if *alpha != one() {
                        if !beta.is_zero() {
                            moves.push((children[1], w.clone(), true, false));
                        }
                        if *beta != one() {
                            moves.push((children[0], w.clone(), false, false));
                        }
                    }
                }
            },
            PNode::ZMixer {
                index,
                alpha,
                beta,
                children,
            } => {
                let bias = if w.get(*index).is_some() { alpha } else { beta };
                if *bias != one() {
                    moves.push((children[0], w.clone(), false, false));
                }
                if !bias.is_zero() {
                    moves.push((children[1], w.clone(), true, false));
                }
            }
        }
        for (child, cw, branch, queried) in moves {
            let key = (child, cw);
            if !seen.contains_key(&key) {
                seen.insert(
                    key.clone(),
                    Some((
                        (id, w.clone()),
                        PathStep {
                            node: id,
                            branch,
                            queried,
                        },
                    )),
                );
                frontier.push(key);
            }
        }
    }

    // Group knowledge per (node, index); report the merge point closest
    // to the root when several vertices violate.
    let mut knowledge: BTreeMap<(NodeId, usize), [Option<StateKey>; 2]> = BTreeMap::new();
    for key in seen.keys() {
        let (id, w) = key;
        for i in 0..n {
            if let Some(v) = w.get(i) {
                let slot = knowledge.entry((*id, i)).or_insert([None, None]);
                slot[v as usize].get_or_insert(key.clone());
            }
        }
    }
    let order = tree.topo_order()?;
    let mut position = vec![usize::MAX; tree.len()];
    for (pos, id) in order.iter().enumerate() {
        position[*id] = pos;
    }
    let mut violations: Vec<(NodeId, usize)> = knowledge
        .iter()
        .filter(|(_, slot)| slot[0].is_some() && slot[1].is_some())
        .map(|(k, _)| *k)
        .collect();
    violations.sort_by_key(|(node, index)| (position[*node], *index));
    if let Some((node, index)) = violations.first().copied() {
        let slot = knowledge.remove(&(node, index)).unwrap();
        if let [Some(k0), Some(k1)] = slot {
            let rebuild = |mut key: StateKey| {
                let mut path = Vec::new();
                while let Some(Some((prev, step))) = seen.get(&key) {
                    path.push(step.clone());
                    key = prev.clone();
                }
                path.reverse();
                path
            };
            return Ok(PolarityCheck::Violation(PolarityWitness {
                node,
                index,
                path_knowing_zero: rebuild(k0),
                path_knowing_one: rebuild(k1),
            }));
        }
    }
    Ok(PolarityCheck::Pass)
}


/// Violation of query locality: two inputs agreeing on the index reach
/// the leaf with different conditional query probabilities.
#[derive(Clone, Debug)]
pub struct LocalityViolation {
    pub leaf: NodeId,
    pub index: usize,
    pub input_a: Bitstring,
    pub input_b: Bitstring,
    pub prob_a: Rat,
    pub prob_b: Rat,
}

/// Outcome of the query-locality check at one leaf.
#[derive(Clone, Debug)]
pub struct LocalityOutcome {
    pub violations: Vec<LocalityViolation>,
    /// The common conditional query probability per `(index, value)`
    /// group, for groups reached by at least one input.
    pub values: BTreeMap<(usize, bool), Rat>,
}

impl LocalityOutcome {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that the probability an index has been queried, conditioned on
/// reaching the leaf, depends on the input only through that index.
pub fn check_query_locality(
    tree: &PolarisedTree,
    leaf: NodeId,
    n: usize,
) -> Result<LocalityOutcome> {
    let all = forward_all(tree, n)?;
    let mut outcome = LocalityOutcome {
        violations: Vec::new(),
        values: BTreeMap::new(),
    };
    for i in 0..n {
        let mut rep: [Option<(Bitstring, Rat)>; 2] = [None, None];
        for z in Bitstring::all(n) {
            let fwd = &all[z.value() as usize];
            let reach = &fwd.reach[leaf];
            if reach.is_zero() {
                continue;
            }
            let prob = fwd.known_mass(leaf, i) / reach;
            let slot = &mut rep[z.get(i) as usize];
            match slot {
                None => {
                    outcome.values.insert((i, z.get(i)), prob.clone());
                    *slot = Some((z, prob));
                }
                Some((z0, p0)) => {
                    if *p0 != prob {
                        outcome.violations.push(LocalityViolation {
                            leaf,
                            index: i,
                            input_a: *z0,
                            input_b: z,
                            prob_a: p0.clone(),
                            prob_b: prob,
                        });
                    }
                }
            }
        }
    }
    Ok(outcome)
}

/// Outcome of the conditional block-independence check at one vertex.
#[derive(Clone, Debug)]
pub struct IndependenceOutcome {
    pub pass: bool,
    /// A `(block value, joint, product)` witness when the check fails.
    pub witness: Option<(GVal, Rat, Rat)>,
}

/// Checks that, conditioned on reaching `vertex` and on the value of
/// block `i0` under `g`, block `i0` is independent of the rest.
///
/// Conditioning values of zero probability are skipped. The check is a
/// product-form factorisation with exact rationals, which is equivalent
/// to zero conditional mutual information.
pub fn check_block_independence(
    tree: &XTree,
    vertex: NodeId,
    g: &PromiseFunction,
    mu: &Distribution,
    i0: usize,
    n: usize,
) -> Result<IndependenceOutcome> {
    let m = g.input_len();
    let path = tree
        .path_to(vertex)
        .ok_or(Error::BadNodeId(vertex))?;
    let at_vertex = mu.condition(|x| path.admits(tree, x, m))?;
    for val in [GVal::Zero, GVal::One, GVal::Star] {
        let slice: Vec<(Bitstring, Rat)> = at_vertex
            .support()
            .iter()
            .filter(|(x, _)| g.eval(&x.block(i0, n, m)) == val)
            .cloned()
            .collect();
        let total: Rat = slice.iter().map(|(_, w)| w.clone()).sum();
        if total.is_zero() {
            continue;
        }
        // Marginals of block i0 and of the remaining bits.
        let mut of_block: BTreeMap<u32, Rat> = BTreeMap::new();
        let mut of_rest: BTreeMap<Vec<u32>, Rat> = BTreeMap::new();
        let rest_key = |x: &Bitstring| -> Vec<u32> {
            (0..n)
                .filter(|i| *i != i0)
                .map(|i| x.block(i, n, m).value())
                .collect()
        };
        for (x, w) in &slice {
            *of_block
                .entry(x.block(i0, n, m).value())
                .or_insert_with(zero) += w;
            *of_rest.entry(rest_key(x)).or_insert_with(zero) += w;
        }
        // Product support must match the joint support exactly.
        for (bv, bw) in &of_block {
            for (rk, rw) in &of_rest {
                let joint: Rat = slice
                    .iter()
                    .filter(|(x, _)| x.block(i0, n, m).value() == *bv && rest_key(x) == *rk)
                    .map(|(_, w)| w.clone())
                    .sum();
                let product = bw * rw / &total;
                if joint != product {
                    return Ok(IndependenceOutcome {
                        pass: false,
                        witness: Some((val, joint, product)),
                    });
                }
            }
        }
    }
    Ok(IndependenceOutcome {
        pass: true,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};
    use crate::trees::enumerate_paths;

    fn bits(s: &str) -> Bitstring {
        Bitstring::parse(s).unwrap()
    }

    fn or_gadget() -> PromiseFunction {
        PromiseFunction::from_fn(2, |x| GVal::from_bit(x.get(0) || x.get(1))).unwrap()
    }

    #[test]
    fn constant_leaf_has_half_error() {
        let tree = XTree::leaf("0");
        let f = Relation::identity_1bit();
        let g = PromiseFunction::identity_1bit();
        let report = evaluate_x_protocol(&tree, &f, &g, &Distribution::uniform(1)).unwrap();
        assert_eq!(report.error, half());
        assert_eq!(report.expected_queries, zero());
    }

    #[test]
    fn single_query_answers_exactly() {
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() },
                XNode::Leaf { answer: "1".into() },
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        let f = Relation::identity_1bit();
        let g = PromiseFunction::identity_1bit();
        let report = evaluate_x_protocol(&tree, &f, &g, &Distribution::uniform(1)).unwrap();
        assert_eq!(report.error, zero());
        assert_eq!(report.expected_queries, one());
        assert_eq!(report.per_block, vec![one()]);
    }

    /// Independent oracle: walk the tree for every support point.
    fn oracle_x_report(
        tree: &XTree,
        f: &Relation,
        g: &PromiseFunction,
        mu: &Distribution,
    ) -> ProtocolReport {
        let n = f.input_len();
        let m = g.input_len();
        let mut report = ProtocolReport {
            error: zero(),
            expected_queries: zero(),
            per_block: vec![zero(); n],
            reach: vec![zero(); tree.len()],
        };
        for (x, w) in mu.support() {
            let walk = tree.walk(x, n, m);
            if !compose_membership(f, g, x, &walk.answer).unwrap() {
                report.error += w;
            }
            report.expected_queries +=
                w * Rat::from_integer((walk.total_queries() as u64).into());
            for i in 0..n {
                report.per_block[i] += w * rat_int(walk.per_block[i] as i64);
            }
            for v in walk.vertices {
                report.reach[v] += w;
            }
        }
        report
    }

    #[test]
    fn x_report_matches_walk_oracle() {
        // Depth-3 tree on n=2, m=2 with a skewed product distribution.
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() }, // 0
                XNode::Leaf { answer: "1".into() }, // 1
                XNode::Leaf { answer: "1".into() }, // 2
                XNode::Leaf { answer: "0".into() }, // 3
                XNode::Query {
                    block: 1,
                    bit: 1,
                    children: [0, 1],
                }, // 4
                XNode::Query {
                    block: 1,
                    bit: 0,
                    children: [2, 3],
                }, // 5
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [4, 5],
                }, // 6
            ],
            6,
        )
        .unwrap();
        let g = or_gadget();
        let f = Relation::new(
            2,
            vec!["0".into(), "1".into()],
            vec![
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
                std::collections::BTreeSet::from(["0".to_string(), "1".to_string()]),
            ],
        )
        .unwrap();
        let mu_g = Distribution::new(vec![
            (bits("00"), rat(1, 2)),
            (bits("01"), rat(1, 3)),
            (bits("11"), rat(1, 6)),
        ])
        .unwrap();
        let nu = Distribution::new(vec![
            (bits("00"), rat(1, 5)),
            (bits("01"), rat(2, 5)),
            (bits("11"), rat(2, 5)),
        ])
        .unwrap();
        let mu = lift_distribution(&nu, &mu_g, &g).unwrap();
        let got = evaluate_x_protocol(&tree, &f, &g, &mu).unwrap();
        let want = oracle_x_report(&tree, &f, &g, &mu);
        assert_eq!(got, want);
    }

    #[test]
    fn polarised_identity_znode() {
        let tree = PolarisedTree::new(
            vec![
                PNode::Leaf { answer: "0".into() },
                PNode::Leaf { answer: "1".into() },
                PNode::ZNode {
                    index: 0,
                    alpha: one(),
                    beta: zero(),
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        let f = Relation::identity_1bit();
        let report = evaluate_polarised(&tree, &f, &Distribution::uniform(1)).unwrap();
        assert_eq!(report.error, zero());
        assert_eq!(report.expected_queries, one());

        let leafy = PolarisedTree::leaf("1");
        let report = evaluate_polarised(&leafy, &f, &Distribution::uniform(1)).unwrap();
        assert_eq!(report.error, half());
        assert_eq!(report.expected_queries, zero());
    }

    /// Independent oracle: exhaustive path enumeration per input.
    fn oracle_polarised_report(
        tree: &PolarisedTree,
        f: &Relation,
        nu: &Distribution,
    ) -> ProtocolReport {
        let n = f.input_len();
        let mut report = ProtocolReport {
            error: zero(),
            expected_queries: zero(),
            per_block: vec![zero(); n],
            reach: vec![zero(); tree.len()],
        };
        for (z, w) in nu.support() {
            let mut reach_here = vec![zero(); tree.len()];
            for path in enumerate_paths(tree, z).unwrap() {
                let answer = match tree.node(path.leaf) {
                    PNode::Leaf { answer } => answer.clone(),
                    _ => unreachable!(),
                };
                if !f.accepts(z, &answer).unwrap() {
                    report.error += w * &path.weight;
                }
                report.expected_queries +=
                    w * &path.weight * rat_int(path.query_count() as i64);
                for i in 0..n {
                    if path.queried(i) {
                        report.per_block[i] += w * &path.weight;
                    }
                }
                reach_here[path.leaf] += &path.weight;
                let mut seen = vec![false; tree.len()];
                for step in &path.steps {
                    if !seen[step.node] {
                        seen[step.node] = true;
                        reach_here[step.node] += &path.weight;
                    }
                }
            }
            for (i, r) in reach_here.iter().enumerate() {
                report.reach[i] += w * r;
            }
        }
        report
    }

    #[test]
    fn polarised_report_matches_enumeration_oracle() {
        let tree = PolarisedTree::new(
            vec![
                PNode::Leaf { answer: "0".into() }, // 0
                PNode::Leaf { answer: "1".into() }, // 1
                PNode::ZNode {
                    index: 1,
                    alpha: rat(1, 3),
                    beta: rat(2, 7),
                    children: [0, 1],
                }, // 2
                PNode::ZMixer {
                    index: 0,
                    alpha: rat(1, 2),
                    beta: rat(1, 5),
                    children: [2, 1],
                }, // 3
                PNode::ZNode {
                    index: 0,
                    alpha: rat(3, 4),
                    beta: rat(1, 2),
                    children: [3, 2],
                }, // 4
                PNode::Fork {
                    alpha: rat(2, 3),
                    children: [4, 3],
                }, // 5
            ],
            5,
        )
        .unwrap();
        let f = Relation::new(
            2,
            vec!["0".into(), "1".into()],
            vec![
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
            ],
        )
        .unwrap();
        let nu = Distribution::new(vec![
            (bits("00"), rat(1, 7)),
            (bits("01"), rat(2, 7)),
            (bits("10"), rat(3, 7)),
            (bits("11"), rat(1, 7)),
        ])
        .unwrap();
        let got = evaluate_polarised(&tree, &f, &nu).unwrap();
        let want = oracle_polarised_report(&tree, &f, &nu);
        assert_eq!(got, want);
    }

    #[test]
    fn shared_children_evaluate_like_distinct_paths() {
        // A rooted DAG: both mixers funnel into one shared Z-node.
        let tree = PolarisedTree::new(
            vec![
                PNode::Leaf { answer: "0".into() }, // 0
                PNode::Leaf { answer: "1".into() }, // 1
                PNode::ZNode {
                    index: 1,
                    alpha: rat(1, 2),
                    beta: rat(1, 3),
                    children: [0, 1],
                }, // 2: shared
                PNode::ZMixer {
                    index: 0,
                    alpha: rat(1, 4),
                    beta: rat(3, 4),
                    children: [2, 2],
                }, // 3
                PNode::ZNode {
                    index: 0,
                    alpha: rat(2, 3),
                    beta: rat(1, 5),
                    children: [3, 2],
                }, // 4
            ],
            4,
        )
        .unwrap();
        let f = Relation::new(
            2,
            vec!["0".into(), "1".into()],
            vec![
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
                std::collections::BTreeSet::from(["0".to_string()]),
            ],
        )
        .unwrap();
        let nu = Distribution::uniform(2);
        let got = evaluate_polarised(&tree, &f, &nu).unwrap();
        let want = oracle_polarised_report(&tree, &f, &nu);
        assert_eq!(got, want);
    }

    #[test]
    fn x_leaf_stats_or_gadget() {
        // Query only the first bit of block 0 under the OR gadget: the
        // one-branch pins the value, the zero-branch leaves 1/4 for it.
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() },
                XNode::Leaf { answer: "1".into() },
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        let g = or_gadget();
        let mu_g = Distribution::uniform(2);
        let mu_f = Distribution::uniform(1);
        let stats = x_leaf_stats(&tree, &g, &mu_g, &mu_f).unwrap();
        let after_one = &stats.per_leaf[&1][0];
        assert!(after_one.label);
        assert_eq!(after_one.advantage, half());
        let after_zero = &stats.per_leaf[&0][0];
        assert!(!after_zero.label);
        assert_eq!(after_zero.advantage, rat(1, 4));
    }

    #[test]
    fn x_leaf_stats_untouched_block_has_zero_advantage() {
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() },
                XNode::Leaf { answer: "1".into() },
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        let g = PromiseFunction::identity_1bit();
        let mu_g = Distribution::uniform(1);
        let mu_f = Distribution::uniform(2);
        let stats = x_leaf_stats(&tree, &g, &mu_g, &mu_f).unwrap();
        assert_eq!(stats.delta_tree[1], zero());
        // Block 0 is read exactly, so its aggregate advantage is 1/2.
        assert_eq!(stats.delta_tree[0], half());
    }

    #[test]
    fn z_leaf_stats_examples() {
        let f_len = 1;
        let leaf = PolarisedTree::leaf("0");
        let stats = z_leaf_stats(&leaf, &Distribution::uniform(f_len)).unwrap();
        assert_eq!(stats.delta_tree, vec![zero()]);

        let forced = crate::trees::tests::znode_tree(one(), zero());
        let stats = z_leaf_stats(&forced, &Distribution::uniform(1)).unwrap();
        for id in forced.leaf_ids() {
            assert_eq!(stats.per_leaf[&id][0].query_prob, one());
        }
        assert_eq!(stats.delta_tree, vec![half()]);

        let mixed = crate::trees::tests::znode_tree(half(), half());
        let stats = z_leaf_stats(&mixed, &Distribution::uniform(1)).unwrap();
        for id in mixed.leaf_ids() {
            assert_eq!(stats.per_leaf[&id][0].query_prob, half());
        }
    }

    #[test]
    fn polarity_examples() {
        let mixers = PolarisedTree::new(
            vec![
                PNode::Leaf { answer: "0".into() },
                PNode::Leaf { answer: "1".into() },
                PNode::ZMixer {
                    index: 0,
                    alpha: half(),
                    beta: half(),
                    children: [0, 1],
                },
                PNode::ZMixer {
                    index: 0,
                    alpha: rat(1, 3),
                    beta: rat(2, 3),
                    children: [2, 2],
                },
            ],
            3,
        )
        .unwrap();
        assert!(check_polarity(&mixers).unwrap().is_pass());

        // Both children of a querying node point at one shared vertex:
        // know-0 and know-1 paths merge there.
        let shared = PolarisedTree::new(
            vec![
                PNode::Leaf { answer: "0".into() }, // 0
                PNode::ZMixer {
                    index: 0,
                    alpha: half(),
                    beta: half(),
                    children: [0, 0],
                }, // 1: shared vertex
                PNode::ZNode {
                    index: 0,
                    alpha: one(),
                    beta: zero(),
                    children: [1, 1],
                }, // 2
            ],
            2,
        )
        .unwrap();
        match check_polarity(&shared).unwrap() {
            PolarityCheck::Violation(w) => {
                assert_eq!(w.node, 1);
                assert_eq!(w.index, 0);
                assert!(!w.path_knowing_zero.is_empty());
                assert!(!w.path_knowing_one.is_empty());
                assert!(w.path_knowing_zero.iter().any(|s| s.queried));
            }
            PolarityCheck::Pass => panic!("expected a polarity violation"),
        }
    }

    #[test]
    fn locality_single_znode() {
        let tree = crate::trees::tests::znode_tree(rat(1, 3), rat(2, 5));
        for leaf in tree.leaf_ids() {
            let outcome = check_query_locality(&tree, leaf, 1).unwrap();
            assert!(outcome.is_pass());
        }
    }

    #[test]
    fn locality_two_node_chain_values() {
        // Two Z-nodes for the same index in a chain; on the all-answers-1
        // path the conditional query probability is a fixed function of
        // the input's bit.
        let alpha = rat(1, 2);
        let beta = rat(1, 2);
        let tree = PolarisedTree::new(
            vec![
                PNode::Leaf { answer: "0".into() }, // 0
                PNode::Leaf { answer: "1".into() }, // 1
                PNode::Leaf { answer: "x".into() }, // 2
                PNode::ZNode {
                    index: 0,
                    alpha: alpha.clone(),
                    beta: beta.clone(),
                    children: [0, 1],
                }, // 3
                PNode::ZNode {
                    index: 0,
                    alpha: alpha.clone(),
                    beta: beta.clone(),
                    children: [2, 3],
                }, // 4
            ],
            4,
        )
        .unwrap();
        let outcome = check_query_locality(&tree, 1, 1).unwrap();
        assert!(outcome.is_pass());
        // Direct enumeration for z=1 on the leaf "1": weights
        // query-at-4: 1/2, sim-then-query: 1/4*1/2, sim-sim: 1/16.
        let expect = rat(10, 11);
        assert_eq!(outcome.values[&(0, true)], expect);

        // Per-node hazard on the prefix matches alpha/(alpha+(1-alpha)beta).
        let hazard = &alpha / (&alpha + (one() - &alpha) * &beta);
        assert_eq!(hazard, rat(2, 3));
        let one_node = crate::trees::tests::znode_tree(alpha.clone(), beta.clone());
        let single = check_query_locality(&one_node, 1, 1).unwrap();
        assert_eq!(single.values[&(0, true)], hazard);
        // And on the zero side: alpha/(alpha+(1-alpha)(1-beta)).
        let hazard0 = &alpha / (&alpha + (one() - &alpha) * (one() - &beta));
        let single0 = check_query_locality(&one_node, 0, 1).unwrap();
        assert_eq!(single0.values[&(0, false)], hazard0);
    }

    #[test]
    fn block_independence_product_and_conditioned() {
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() },
                XNode::Leaf { answer: "1".into() },
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 1],
                },
            ],
            2,
        )
        .unwrap();
        let g = PromiseFunction::identity_1bit();
        let mu_g = Distribution::uniform(1);

        // Product outer distribution.
        let product = lift_distribution(&Distribution::uniform(2), &mu_g, &g).unwrap();
        for v in tree.node_ids() {
            for i in 0..2 {
                assert!(check_block_independence(&tree, v, &g, &product, i, 2)
                    .unwrap()
                    .pass);
            }
        }

        // Correlated outer distribution: restored by conditioning.
        let corr = lift_distribution(
            &Distribution::uniform_over(&[bits("00"), bits("11")]).unwrap(),
            &mu_g,
            &g,
        )
        .unwrap();
        for v in tree.node_ids() {
            for i in 0..2 {
                assert!(check_block_independence(&tree, v, &g, &corr, i, 2)
                    .unwrap()
                    .pass);
            }
        }

        // Negative control: bits correlated across blocks beyond what
        // the block value explains.
        let g2 = or_gadget();
        let bad = Distribution::new(vec![
            (bits("0101"), half()),
            (bits("1010"), half()),
        ])
        .unwrap();
        let root_only = XTree::leaf("0");
        let outcome =
            check_block_independence(&root_only, 0, &g2, &bad, 0, 2).unwrap();
        assert!(!outcome.pass);
    }

    #[test]
    fn conditional_block_cost() {
        // Tree queries block 1 only when block 0's bit is 1.
        let tree = XTree::new(
            vec![
                XNode::Leaf { answer: "0".into() }, // 0
                XNode::Leaf { answer: "0".into() }, // 1
                XNode::Leaf { answer: "1".into() }, // 2
                XNode::Query {
                    block: 1,
                    bit: 0,
                    children: [1, 2],
                }, // 3
                XNode::Query {
                    block: 0,
                    bit: 0,
                    children: [0, 3],
                }, // 4
            ],
            4,
        )
        .unwrap();
        let g = PromiseFunction::identity_1bit();
        let f = Relation::new(
            2,
            vec!["0".into(), "1".into()],
            vec![
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["0".to_string()]),
                std::collections::BTreeSet::from(["1".to_string()]),
            ],
        )
        .unwrap();
        let mu = lift_distribution(&Distribution::uniform(2), &Distribution::uniform(1), &g)
            .unwrap();
        // Conditioned on block 0 being 1, block 1 is always read.
        let d = x_block_cost_conditional(&tree, &f, &g, &mu, 1, &bits("10")).unwrap();
        assert_eq!(d, one());
        let d = x_block_cost_conditional(&tree, &f, &g, &mu, 1, &bits("00")).unwrap();
        assert_eq!(d, zero());
        // Conditioning on block 1 leaves block 0 always read once.
        let d = x_block_cost_conditional(&tree, &f, &g, &mu, 0, &bits("01")).unwrap();
        assert_eq!(d, one());
    }
}
