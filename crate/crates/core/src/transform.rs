//! Node-by-node translation of a deterministic bit-query tree for the
//! composed problem into a polarised randomised tree for the outer
//! problem.
//!
//! Every bit-query node becomes a Z-node or a Z-mixer acting on the
//! block index it reads; leaves keep their answers; the result is
//! isomorphic to the input tree. Parameters are chosen so that, with the
//! outer input uniform, the conditional law of the block value entering
//! and leaving each translated node matches the original node's exactly.
//! Because the choice depends only on the inner distribution, the match
//! extends to every outer input distribution; the [`crate::eval`]
//! verifiers and the test suites assert this with exact arithmetic.
//!
//! All quantities are computed under one canonical internal input: the
//! uniform outer distribution lifted through the inner distribution.

use crate::problems::{check_inner_distribution, Bitstring, Distribution, GVal, PromiseFunction};
use crate::rational::{half, one, zero, Rat};
use crate::trees::{NodeId, PNode, PTreeBuilder, PolarisedTree, WState, XNode, XTree};
use crate::{Error, Result};
use num_traits::Zero;
use std::collections::BTreeMap;

/// How a translated node's parameters were derived.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TranslationCase {
    /// The read bit carries no information on the block value; a mixer
    /// reproducing the branch bias suffices.
    Degenerate,
    /// The already-known mass covers the low branch: a mixer diverts
    /// `gamma1` of it to rebalance, no query is needed.
    Mixer { gamma1: Rat },
    /// A query is needed; the node queries with the scaled rate
    /// `gamma3 * alpha_prime` and simulates otherwise.
    Query {
        alpha_prime: Rat,
        gamma2: Rat,
        gamma3: Rat,
    },
    /// Vertex unreachable under the internal input; a fixed placeholder
    /// mixer keeps the shape without affecting any reachable behaviour.
    Unreachable,
}

/// Full quantity ledger for one translated bit-query node.
///
/// The probabilities `p_*` refer to the block value being 1 and are
/// recorded in the original orientation; when `flip` is set the closed
/// forms were applied to the complemented quantities and the emitted
/// parameters mirrored back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeTranslation {
    /// Source node id in the deterministic tree.
    pub source: NodeId,
    /// Image node id in the polarised tree.
    pub image: NodeId,
    /// Block index read by the source node.
    pub block: usize,
    /// Orientation: true when paths arriving with the index known hold
    /// value 0, so the construction ran on the complemented problem.
    pub flip: bool,
    /// Branch value associated with the image's "0" edge.
    pub a0: bool,
    /// P[block value = 1] on arrival.
    pub p_in: Rat,
    /// P[block value = 1] after the `a0` branch (the smaller).
    pub p_lt: Rat,
    /// P[block value = 1] after the other branch (the larger).
    pub p_gt: Rat,
    /// Branch probability of the `a0` edge.
    pub tau_lt: Rat,
    pub tau_gt: Rat,
    /// P[index already known] on arrival at the image.
    pub q_in: Rat,
    /// P[block value = 1 | index unknown] on arrival at the image.
    pub p_star: Rat,
    pub case: TranslationCase,
    /// Emitted node parameters, after any mirroring.
    pub alpha0: Rat,
    pub beta0: Rat,
}

impl NodeTranslation {
    /// Value held by the memory on arriving paths that know the index.
    pub fn polarity_value(&self) -> bool {
        !self.flip
    }
}

/// Node-id bijection between the source tree and its image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsomorphismMap {
    pub to_image: Vec<NodeId>,
    pub to_source: Vec<NodeId>,
}

impl IsomorphismMap {
    /// Checks that the map is a structure-preserving bijection: leaves
    /// map to leaves with equal answers and the image children follow
    /// the recorded edge association.
    pub fn verify(
        &self,
        source: &XTree,
        image: &PolarisedTree,
        ledger: &[NodeTranslation],
    ) -> Result<()> {
        if self.to_image.len() != source.len() || self.to_source.len() != image.len() {
            return Err(Error::Internal("isomorphism size mismatch".to_string()));
        }
        for (x_id, &p_id) in self.to_image.iter().enumerate() {
            if self.to_source[p_id] != x_id {
                return Err(Error::Internal("isomorphism is not a bijection".to_string()));
            }
            match (source.node(x_id), image.node(p_id)) {
                (XNode::Leaf { answer: a }, PNode::Leaf { answer: b }) => {
                    if a != b {
                        return Err(Error::Internal(format!(
                            "leaf labels differ at {x_id}: {a:?} vs {b:?}"
                        )));
                    }
                }
                (XNode::Query { children, .. }, p_node) => {
                    let p_children = p_node
                        .children()
                        .ok_or_else(|| Error::Internal(format!("image of {x_id} is a leaf")))?;
                    let a0 = ledger
                        .iter()
                        .find(|t| t.source == x_id)
                        .map(|t| t.a0)
                        .unwrap_or(false);
                    let want0 = self.to_image[children[a0 as usize]];
                    let want1 = self.to_image[children[!a0 as usize]];
                    if p_children[0] != want0 || p_children[1] != want1 {
                        return Err(Error::Internal(format!(
                            "child association broken at {x_id}"
                        )));
                    }
                }
                _ => {
                    return Err(Error::Internal(format!(
                        "node kind mismatch at {x_id}"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Result of translating a whole protocol.
#[derive(Clone, Debug)]
pub struct TransformOutput {
    pub tree: PolarisedTree,
    pub iso: IsomorphismMap,
    pub ledger: Vec<NodeTranslation>,
}

/// Ancestor action along the image path, as needed to replay memory
/// states (children are irrelevant for the replay).
#[derive(Clone, Debug)]
enum PathAction {
    Node {
        index: usize,
        alpha: Rat,
        beta: Rat,
    },
    Mixer {
        index: usize,
        alpha: Rat,
        beta: Rat,
    },
}

struct Translator<'a> {
    n: usize,
    m: usize,
    g: &'a PromiseFunction,
    builder: PTreeBuilder,
    to_image: Vec<NodeId>,
    ledger: Vec<NodeTranslation>,
}

impl<'a> Translator<'a> {
    /// Memory-state distribution at the end of `path` for input `z`,
    /// following the given edges only.
    fn replay(&self, path: &[(PathAction, bool)], z: &Bitstring) -> BTreeMap<WState, Rat> {
        let mut states: BTreeMap<WState, Rat> = BTreeMap::new();
        states.insert(WState::fresh(self.n), one());
        for (action, edge) in path {
            let mut next: BTreeMap<WState, Rat> = BTreeMap::new();
            let mut add = |w: WState, p: Rat| {
                if !p.is_zero() {
                    *next.entry(w).or_insert_with(zero) += p;
                }
            };
            for (w, p) in &states {
                match action {
                    PathAction::Node { index, alpha, beta } => match w.get(*index) {
                        Some(v) => {
                            if v == *edge {
                                add(w.clone(), p.clone());
                            }
                        }
                        None => {
                            if z.get(*index) == *edge {
                                add(w.set(*index, *edge), p * alpha);
                            }
                            let sim = if *edge { beta.clone() } else { one() - beta };
                            add(w.clone(), p * (one() - alpha) * sim);
                        }
                    },
                    PathAction::Mixer { index, alpha, beta } => {
                        let bias = if w.get(*index).is_some() { alpha } else { beta };
                        let take = if *edge { bias.clone() } else { one() - bias };
                        add(w.clone(), p * take);
                    }
                }
            }
            states = next;
        }
        states
    }

    /// `(q_in, p_star, polarity)` of the current image vertex: the known
    /// mass, the conditional one-probability of the unknown mass (absent
    /// when everything is known), and the unique value known paths hold.
    fn arrival_quantities(
        &self,
        path: &[(PathAction, bool)],
        i0: usize,
    ) -> Result<(Rat, Option<Rat>, Option<bool>)> {
        let mut reach = zero();
        let mut known = zero();
        let mut star = zero();
        let mut star_one = zero();
        let mut seen = [false, false];
        for z in Bitstring::all(self.n) {
            for (w, p) in self.replay(path, &z) {
                reach += &p;
                match w.get(i0) {
                    Some(v) => {
                        known += &p;
                        seen[v as usize] = true;
                    }
                    None => {
                        star += &p;
                        if z.get(i0) {
                            star_one += &p;
                        }
                    }
                }
            }
        }
        if reach.is_zero() {
            return Err(Error::Internal(
                "image vertex unreachable while source is reachable".to_string(),
            ));
        }
        let polarity = match seen {
            [false, false] => None,
            [true, false] => Some(false),
            [false, true] => Some(true),
            [true, true] => {
                return Err(Error::Internal(
                    "construction produced a polarity violation".to_string(),
                ))
            }
        };
        let q_in = &known / &reach;
        let p_star = if star.is_zero() {
            None
        } else {
            Some(&star_one / &star)
        };
        Ok((q_in, p_star, polarity))
    }

    fn translate(
        &mut self,
        tree: &XTree,
        x_id: NodeId,
        cond: Vec<(Bitstring, Rat)>,
        path: &mut Vec<(PathAction, bool)>,
    ) -> Result<NodeId> {
        match tree.node(x_id) {
            XNode::Leaf { answer } => {
                let p_id = self.builder.push(PNode::Leaf {
                    answer: answer.clone(),
                });
                self.to_image[x_id] = p_id;
                Ok(p_id)
            }
            XNode::Query {
                block,
                bit,
                children,
            } => {
                let mass: Rat = cond.iter().map(|(_, w)| w.clone()).sum();
                if mass.is_zero() {
                    return self.translate_unreachable(tree, x_id);
                }
                let i0 = *block;
                let pos = i0 * self.m + *bit;
                let value_one = |x: &Bitstring| self.g.eval(&x.block(i0, self.n, self.m)) == GVal::One;

                let split: [Vec<(Bitstring, Rat)>; 2] = {
                    let (ones, zeros): (Vec<_>, Vec<_>) =
                        cond.iter().cloned().partition(|(x, _)| x.get(pos));
                    [zeros, ones]
                };
                let tau: Vec<Rat> = split
                    .iter()
                    .map(|side| side.iter().map(|(_, w)| w.clone()).sum::<Rat>() / &mass)
                    .collect();
                let p_in = cond
                    .iter()
                    .filter(|(x, _)| value_one(x))
                    .map(|(_, w)| w.clone())
                    .sum::<Rat>()
                    / &mass;
                let p_after = |side: &[(Bitstring, Rat)], tau_side: &Rat| -> Rat {
                    if tau_side.is_zero() {
                        p_in.clone()
                    } else {
                        side.iter()
                            .filter(|(x, _)| value_one(x))
                            .map(|(_, w)| w.clone())
                            .sum::<Rat>()
                            / (&mass * tau_side)
                    }
                };
                let p_edge = [p_after(&split[0], &tau[0]), p_after(&split[1], &tau[1])];

                let (q_in, p_star_orig, polarity) = self.arrival_quantities(path, i0)?;

                let translation;
                let node;
                if p_edge[0] == p_edge[1] {
                    // Degenerate: the bit tells nothing about the value.
                    let a0 = false;
                    let tau_gt = tau[1].clone();
                    node = PNode::ZMixer {
                        index: i0,
                        alpha: tau_gt.clone(),
                        beta: tau_gt.clone(),
                        children: [usize::MAX, usize::MAX],
                    };
                    translation = NodeTranslation {
                        source: x_id,
                        image: usize::MAX,
                        block: i0,
                        flip: false,
                        a0,
                        p_in: p_in.clone(),
                        p_lt: p_in.clone(),
                        p_gt: p_in.clone(),
                        tau_lt: tau[0].clone(),
                        tau_gt: tau_gt.clone(),
                        q_in,
                        // With everything known on arrival the unknown-mass
                        // conditional is moot; record the arrival law.
                        p_star: p_star_orig.unwrap_or_else(|| p_in.clone()),
                        case: TranslationCase::Degenerate,
                        alpha0: tau_gt.clone(),
                        beta0: tau_gt,
                    };
                } else {
                    let a0 = p_edge[1] < p_edge[0];
                    let p_lt = p_edge[a0 as usize].clone();
                    let p_gt = p_edge[!a0 as usize].clone();
                    let tau_lt = tau[a0 as usize].clone();
                    let tau_gt = one() - &tau_lt;
                    let flip = polarity == Some(false);
                    let p_star_orig = p_star_orig.ok_or_else(|| {
                        Error::Internal("no unknown mass at a non-degenerate node".to_string())
                    })?;

                    // Oriented quantities: complement everything when the
                    // known paths hold value 0.
                    let (o_p_lt, o_p_gt, o_tau_lt, o_p_star) = if flip {
                        (
                            one() - &p_gt,
                            one() - &p_lt,
                            tau_gt.clone(),
                            one() - &p_star_orig,
                        )
                    } else {
                        (
                            p_lt.clone(),
                            p_gt.clone(),
                            tau_lt.clone(),
                            p_star_orig.clone(),
                        )
                    };
                    debug_assert!(o_p_lt < o_p_gt);

                    let not_q = one() - &q_in;
                    let (case, t_alpha, t_beta) = if o_p_star <= o_p_lt {
                        // Rebalance with a mixer: shift gamma1 of the
                        // known mass onto the low branch.
                        if q_in.is_zero() || o_tau_lt.is_zero() {
                            return Err(Error::Internal(
                                "mixer case entered with a vanishing guard".to_string(),
                            ));
                        }
                        let gamma1 = &not_q * (&o_p_lt - &o_p_star) / (one() - &o_p_lt);
                        if gamma1 < zero() || gamma1 > q_in {
                            return Err(Error::Internal(format!(
                                "gamma1 {gamma1} outside [0, q_in]"
                            )));
                        }
                        let denom = &not_q + &gamma1;
                        let one_minus_beta = &o_tau_lt / &denom;
                        let beta = one() - &one_minus_beta;
                        let alpha = one() - &one_minus_beta * &gamma1 / &q_in;
                        (TranslationCase::Mixer { gamma1 }, alpha, beta)
                    } else {
                        // Query case.
                        if o_p_star.is_zero() || o_p_lt == one() {
                            return Err(Error::Internal(
                                "query case entered with a vanishing guard".to_string(),
                            ));
                        }
                        let alpha_prime =
                            one() - &o_p_lt * (one() - &o_p_star) / ((one() - &o_p_lt) * &o_p_star);
                        let gamma2 = (one() - &alpha_prime * &o_p_star) * &not_q;
                        if gamma2 <= zero() {
                            return Err(Error::Internal(format!("gamma2 {gamma2} not positive")));
                        }
                        let gamma3 = &o_tau_lt / &gamma2;
                        if gamma3 < zero() || gamma3 > one() {
                            return Err(Error::Internal(format!(
                                "gamma3 {gamma3} outside [0, 1]"
                            )));
                        }
                        let alpha = &gamma3 * &alpha_prime;
                        let beta = if alpha == one() {
                            // 0/0 in the closed form; the simulated branch
                            // is never taken, any value works.
                            zero()
                        } else {
                            (one() - &gamma3) / (one() - &gamma3 * &alpha_prime)
                        };
                        (
                            TranslationCase::Query {
                                alpha_prime,
                                gamma2,
                                gamma3,
                            },
                            alpha,
                            beta,
                        )
                    };

                    // Mirror the emitted parameters back into the original
                    // orientation. The query rate of a Z-node is not an
                    // edge bias and stays as computed.
                    let is_query_node = matches!(case, TranslationCase::Query { .. });
                    let (alpha0, beta0) = if flip {
                        if is_query_node {
                            (t_alpha.clone(), one() - &t_beta)
                        } else {
                            (one() - &t_alpha, one() - &t_beta)
                        }
                    } else {
                        (t_alpha.clone(), t_beta.clone())
                    };
                    for (name, v) in [("alpha0", &alpha0), ("beta0", &beta0)] {
                        if !crate::rational::is_probability(v) {
                            return Err(Error::Internal(format!("{name} {v} outside [0, 1]")));
                        }
                    }

                    node = if is_query_node {
                        PNode::ZNode {
                            index: i0,
                            alpha: alpha0.clone(),
                            beta: beta0.clone(),
                            children: [usize::MAX, usize::MAX],
                        }
                    } else {
                        PNode::ZMixer {
                            index: i0,
                            alpha: alpha0.clone(),
                            beta: beta0.clone(),
                            children: [usize::MAX, usize::MAX],
                        }
                    };
                    translation = NodeTranslation {
                        source: x_id,
                        image: usize::MAX,
                        block: i0,
                        flip,
                        a0,
                        p_in,
                        p_lt,
                        p_gt,
                        tau_lt,
                        tau_gt,
                        q_in,
                        p_star: p_star_orig,
                        case,
                        alpha0,
                        beta0,
                    };
                }

                let p_id = self.builder.push(node.clone());
                self.to_image[x_id] = p_id;
                let ledger_at = self.ledger.len();
                let mut entry = translation;
                entry.image = p_id;
                self.ledger.push(entry);

                let a0 = self.ledger[ledger_at].a0;
                let action = match &node {
                    PNode::ZNode { index, alpha, beta, .. } => PathAction::Node {
                        index: *index,
                        alpha: alpha.clone(),
                        beta: beta.clone(),
                    },
                    PNode::ZMixer { index, alpha, beta, .. } => PathAction::Mixer {
                        index: *index,
                        alpha: alpha.clone(),
                        beta: beta.clone(),
                    },
                    _ => unreachable!(),
                };

                // Image edge "0" follows the a0 branch of the source.
                let mut image_children = [usize::MAX, usize::MAX];
                for edge in [false, true] {
                    let branch_value = if edge { !a0 } else { a0 };
                    let x_child = children[branch_value as usize];
                    let child_cond: Vec<(Bitstring, Rat)> = cond
                        .iter()
                        .filter(|(x, _)| x.get(pos) == branch_value)
                        .cloned()
                        .collect();
                    path.push((action.clone(), edge));
                    let child_id = self.translate(tree, x_child, child_cond, path)?;
                    path.pop();
                    image_children[edge as usize] = child_id;
                }
                if let PNode::ZNode { children, .. } | PNode::ZMixer { children, .. } =
                    self.builder.node_mut(p_id)
                {
                    *children = image_children;
                }
                Ok(p_id)
            }
        }
    }

    /// Shape-preserving placeholder translation below a vertex with zero
    /// reach probability.
    fn translate_unreachable(&mut self, tree: &XTree, x_id: NodeId) -> Result<NodeId> {
        match tree.node(x_id) {
            XNode::Leaf { answer } => {
                let p_id = self.builder.push(PNode::Leaf {
                    answer: answer.clone(),
                });
                self.to_image[x_id] = p_id;
                Ok(p_id)
            }
            XNode::Query { block, children, .. } => {
                let p_id = self.builder.push(PNode::ZMixer {
                    index: 0,
                    alpha: half(),
                    beta: half(),
                    children: [usize::MAX, usize::MAX],
                });
                self.to_image[x_id] = p_id;
                self.ledger.push(NodeTranslation {
                    source: x_id,
                    image: p_id,
                    block: *block,
                    flip: false,
                    a0: false,
                    p_in: zero(),
                    p_lt: zero(),
                    p_gt: zero(),
                    tau_lt: zero(),
                    tau_gt: zero(),
                    q_in: zero(),
                    p_star: zero(),
                    case: TranslationCase::Unreachable,
                    alpha0: half(),
                    beta0: half(),
                });
                let c0 = self.translate_unreachable(tree, children[0])?;
                let c1 = self.translate_unreachable(tree, children[1])?;
                if let PNode::ZMixer { children, .. } = self.builder.node_mut(p_id) {
                    *children = [c0, c1];
                }
                Ok(p_id)
            }
        }
    }
}

/// Translates a deterministic tree for the composed problem into a
/// polarised tree for the outer problem over `n` indices.
pub fn transform_protocol(
    tree: &XTree,
    n: usize,
    g: &PromiseFunction,
    mu_g: &Distribution,
) -> Result<TransformOutput> {
    check_inner_distribution(mu_g, g)?;
    let m = g.input_len();
    tree.check_dimensions(n, m)?;
    let lift = crate::problems::lift_distribution(&Distribution::uniform(n), mu_g, g)?;

    let mut translator = Translator {
        n,
        m,
        g,
        builder: PTreeBuilder::new(),
        to_image: vec![usize::MAX; tree.len()],
        ledger: Vec::new(),
    };
    let mut path = Vec::new();
    let root = translator.translate(tree, tree.root(), lift.support().to_vec(), &mut path)?;
    let ptree = translator.builder.finish(root)?;
    let mut to_source = vec![usize::MAX; ptree.len()];
    for (x_id, &p_id) in translator.to_image.iter().enumerate() {
        to_source[p_id] = x_id;
    }
    Ok(TransformOutput {
        tree: ptree,
        iso: IsomorphismMap {
            to_image: translator.to_image,
            to_source,
        },
        ledger: translator.ledger,
    })
}

/// One verified equation at a translated node.
#[derive(Clone, Debug)]
pub struct EquationCheck {
    pub source: NodeId,
    pub image: NodeId,
    pub name: &'static str,
    pub pass: bool,
    pub got: Rat,
    pub want: Rat,
}

/// Re-derives, on the emitted tree under the uniform outer input, the
/// arrival law, branch bias and post-branch laws of every translated
/// node and compares them with the ledger, exactly.
pub fn verify_node_equations(
    output: &TransformOutput,
    n: usize,
) -> Result<Vec<EquationCheck>> {
    let tree = &output.tree;
    let all = crate::eval::forward_all(tree, n)?;
    let uniform_w = Rat::new(1.into(), (1u32 << n).into());
    let mut checks = Vec::new();

    for t in &output.ledger {
        if t.case == TranslationCase::Unreachable {
            continue;
        }
        let id = t.image;
        let i0 = t.block;
        // Mass reaching the node, split by the block value and by the
        // answer the node's action produces.
        let mut reach = zero();
        let mut reach_one = zero();
        let mut ans = [zero(), zero()];
        let mut ans_one = [zero(), zero()];
        for z in Bitstring::all(n) {
            let fwd = &all[z.value() as usize];
            for (w, p) in &fwd.states[id] {
                let p = &uniform_w * p;
                reach += &p;
                if z.get(i0) {
                    reach_one += &p;
                }
                let p_answer_one = match tree.node(id) {
                    PNode::ZNode { index, alpha, beta, .. } => match w.get(*index) {
                        Some(v) => {
                            if v {
                                one()
                            } else {
                                zero()
                            }
                        }
                        None => {
                            let q = if z.get(*index) { alpha.clone() } else { zero() };
                            q + (one() - alpha) * beta
                        }
                    },
                    PNode::ZMixer { index, alpha, beta, .. } => {
                        if w.get(*index).is_some() {
                            alpha.clone()
                        } else {
                            beta.clone()
                        }
                    }
                    _ => {
                        return Err(Error::Internal(format!(
                            "translated image {id} is not a generic node"
                        )))
                    }
                };
                ans[1] += &p * &p_answer_one;
                ans[0] += &p * (one() - &p_answer_one);
                if z.get(i0) {
                    ans_one[1] += &p * &p_answer_one;
                    ans_one[0] += &p * (one() - &p_answer_one);
                }
            }
        }
        if reach.is_zero() {
            return Err(Error::Internal(format!(
                "translated node {id} is unreachable under the uniform input"
            )));
        }
        let mut push = |name: &'static str, got: Rat, want: &Rat| {
            checks.push(EquationCheck {
                source: t.source,
                image: id,
                name,
                pass: got == *want,
                got,
                want: want.clone(),
            });
        };
        push("arrival_law", &reach_one / &reach, &t.p_in);
        push("branch_bias", &ans[0] / &reach, &t.tau_lt);
        if !ans[0].is_zero() {
            push("law_after_low", &ans_one[0] / &ans[0], &t.p_lt);
        }
        if !ans[1].is_zero() {
            push("law_after_high", &ans_one[1] / &ans[1], &t.p_gt);
        }
    }
    Ok(checks)
}
