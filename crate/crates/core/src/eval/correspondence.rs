//! Verification suites tying a deterministic tree to its translated
//! polarised tree.
//!
//! Every check here is an exact rational comparison. The suites are
//! shared by the `verify` command and the acceptance tests:
//!
//! * [`verify_corollary`] — for one outer distribution, equality of
//!   error, of per-vertex reach probabilities, of conditional
//!   block-value laws, and of per-input leaf laws across the
//!   isomorphism.
//! * [`verify_structure`] — polarity, single-query paths, query
//!   locality at every leaf, and the per-node ledger equations.
//! * [`verify_predictors`] — per-leaf and aggregate agreement of the
//!   two trees' predictor statistics and the query-probability bound.

use crate::problems::{
    block_values, lift_distribution, lift_point, Bitstring, Distribution, PromiseFunction,
    Relation,
};
use crate::rational::{format_ratio, half, rat_int, zero, Rat};
use crate::transform::{verify_node_equations, TransformOutput};
use crate::trees::{enumerate_paths, PNode, XTree};
use crate::Result;
use num_traits::Zero;
use std::collections::BTreeMap;

/// One named check with an optional human-readable witness on failure.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub witness: Option<String>,
}

impl CheckOutcome {
    fn pass(name: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            pass: true,
            witness: None,
        }
    }

    fn fail(name: impl Into<String>, witness: String) -> Self {
        CheckOutcome {
            name: name.into(),
            pass: false,
            witness: Some(witness),
        }
    }
}

pub fn all_pass(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|c| c.pass)
}

/// Reach probability and conditional block-value law at every vertex of
/// a deterministic tree, in one pass over the support.
fn x_vertex_laws(
    tree: &XTree,
    n: usize,
    m: usize,
    g: &PromiseFunction,
    dist: &Distribution,
) -> (Vec<Rat>, Vec<BTreeMap<u32, Rat>>) {
    let mut reach = vec![zero(); tree.len()];
    let mut law: Vec<BTreeMap<u32, Rat>> = vec![BTreeMap::new(); tree.len()];
    for (x, w) in dist.support() {
        let walk = tree.walk(x, n, m);
        let z = block_values(g, x, n).expect("lifted support is promise-respecting");
        for v in walk.vertices {
            reach[v] += w;
            *law[v].entry(z.value()).or_insert_with(zero) += w;
        }
    }
    (reach, law)
}

/// Checks the four corollary guarantees for one outer distribution.
pub fn verify_corollary(
    xtree: &XTree,
    f: &Relation,
    g: &PromiseFunction,
    mu_g: &Distribution,
    out: &TransformOutput,
    nu: &Distribution,
    tag: &str,
) -> Result<Vec<CheckOutcome>> {
    let n = f.input_len();
    let m = g.input_len();
    let lifted = lift_distribution(nu, mu_g, g)?;
    let mut checks = Vec::new();

    // Item: identical error.
    let x_report = super::evaluate_x_protocol(xtree, f, g, &lifted)?;
    let z_report = super::evaluate_polarised(&out.tree, f, nu)?;
    if x_report.error == z_report.error {
        checks.push(CheckOutcome::pass(format!("error_equality[{tag}]")));
    } else {
        checks.push(CheckOutcome::fail(
            format!("error_equality[{tag}]"),
            format!(
                "source error {} vs image error {}",
                format_ratio(&x_report.error),
                format_ratio(&z_report.error)
            ),
        ));
    }

    // Forward passes per input, shared by the remaining items.
    let all = super::forward_all(&out.tree, n)?;

    // Item: identical reach probability at every vertex.
    let (x_reach, x_law) = x_vertex_laws(xtree, n, m, g, &lifted);
    let mut reach_ok = true;
    for v in xtree.node_ids() {
        let image = out.iso.to_image[v];
        let mut z_reach = zero();
        for (z, w) in nu.support() {
            z_reach += w * &all[z.value() as usize].reach[image];
        }
        if x_reach[v] != z_reach {
            checks.push(CheckOutcome::fail(
                format!("reach_equality[{tag}]"),
                format!(
                    "vertex {v}: source {} vs image {}",
                    format_ratio(&x_reach[v]),
                    format_ratio(&z_reach)
                ),
            ));
            reach_ok = false;
            break;
        }
    }
    if reach_ok {
        checks.push(CheckOutcome::pass(format!("reach_equality[{tag}]")));
    }

    // Item: identical conditional law of the block values at every
    // vertex with positive reach.
    let mut law_ok = true;
    'vertices: for v in xtree.node_ids() {
        if x_reach[v].is_zero() {
            continue;
        }
        let image = out.iso.to_image[v];
        let mut z_mass: BTreeMap<u32, Rat> = BTreeMap::new();
        let mut z_total = zero();
        for (z, w) in nu.support() {
            let r = w * &all[z.value() as usize].reach[image];
            if !r.is_zero() {
                z_mass.insert(z.value(), r.clone());
                z_total += r;
            }
        }
        if z_total.is_zero() {
            checks.push(CheckOutcome::fail(
                format!("conditional_law[{tag}]"),
                format!("vertex {v} reachable in the source but not in the image"),
            ));
            law_ok = false;
            break 'vertices;
        }
        for z in Bitstring::all(n) {
            let lhs = x_law[v].get(&z.value()).cloned().unwrap_or_else(zero) / &x_reach[v];
            let rhs = z_mass.get(&z.value()).cloned().unwrap_or_else(zero) / &z_total;
            if lhs != rhs {
                checks.push(CheckOutcome::fail(
                    format!("conditional_law[{tag}]"),
                    format!(
                        "vertex {v}, value {z}: source {} vs image {}",
                        format_ratio(&lhs),
                        format_ratio(&rhs)
                    ),
                ));
                law_ok = false;
                break 'vertices;
            }
        }
    }
    if law_ok {
        checks.push(CheckOutcome::pass(format!("conditional_law[{tag}]")));
    }

    // Item: identical leaf law for every input in the support.
    let mut leaf_ok = true;
    'inputs: for (z0, _) in nu.support() {
        let pointwise = lift_point(z0, mu_g, g)?;
        let x_leaf = super::x_leaf_law(xtree, n, m, &pointwise);
        let fwd = &all[z0.value() as usize];
        for (leaf, w) in &x_leaf {
            let image = out.iso.to_image[*leaf];
            if fwd.reach[image] != *w {
                checks.push(CheckOutcome::fail(
                    format!("leaf_law[{tag}]"),
                    format!(
                        "input {z0}, leaf {leaf}: source {} vs image {}",
                        format_ratio(w),
                        format_ratio(&fwd.reach[image])
                    ),
                ));
                leaf_ok = false;
                break 'inputs;
            }
        }
    }
    if leaf_ok {
        checks.push(CheckOutcome::pass(format!("leaf_law[{tag}]")));
    }

    Ok(checks)
}

/// Structural checks on a translated tree: polarity, one query per index
/// on every computational path, query locality at every leaf, and the
/// ledger equations.
pub fn verify_structure(out: &TransformOutput, n: usize) -> Result<Vec<CheckOutcome>> {
    let mut checks = Vec::new();

    match super::check_polarity(&out.tree)? {
        super::PolarityCheck::Pass => checks.push(CheckOutcome::pass("polarity")),
        super::PolarityCheck::Violation(w) => checks.push(CheckOutcome::fail(
            "polarity",
            format!("node {} splits on index {}", w.node, w.index),
        )),
    }

    let mut single_ok = true;
    'zs: for z in Bitstring::all(n) {
        for path in enumerate_paths(&out.tree, &z)? {
            let mut counts = vec![0usize; n];
            for step in &path.steps {
                if step.queried {
                    if let PNode::ZNode { index, .. } = out.tree.node(step.node) {
                        counts[*index] += 1;
                    }
                }
            }
            if counts.iter().any(|c| *c > 1) {
                checks.push(CheckOutcome::fail(
                    "single_query_per_path",
                    format!("input {z} reaches leaf {} querying twice", path.leaf),
                ));
                single_ok = false;
                break 'zs;
            }
        }
    }
    if single_ok {
        checks.push(CheckOutcome::pass("single_query_per_path"));
    }

    let mut locality_ok = true;
    for leaf in out.tree.leaf_ids() {
        let outcome = super::check_query_locality(&out.tree, leaf, n)?;
        if let Some(v) = outcome.violations.first() {
            checks.push(CheckOutcome::fail(
                "query_locality",
                format!(
                    "leaf {}, index {}: {} for {} vs {} for {}",
                    v.leaf,
                    v.index,
                    format_ratio(&v.prob_a),
                    v.input_a,
                    format_ratio(&v.prob_b),
                    v.input_b
                ),
            ));
            locality_ok = false;
            break;
        }
    }
    if locality_ok {
        checks.push(CheckOutcome::pass("query_locality"));
    }

    let equations = verify_node_equations(out, n)?;
    match equations.iter().find(|c| !c.pass) {
        None => checks.push(CheckOutcome::pass("node_equations")),
        Some(c) => checks.push(CheckOutcome::fail(
            "node_equations",
            format!(
                "{} at image {}: got {}, want {}",
                c.name,
                c.image,
                format_ratio(&c.got),
                format_ratio(&c.want)
            ),
        )),
    }

    Ok(checks)
}

/// Predictor agreement between the two trees and the query bound.
///
/// Checks, for the given outer distribution: per-leaf equality of the
/// prediction advantage with half the conditional query probability,
/// label agreement wherever a query can have happened, equality of the
/// aggregated advantages, and the 4x advantage bound on the overall
/// query probability.
pub fn verify_predictors(
    xtree: &XTree,
    g: &PromiseFunction,
    mu_g: &Distribution,
    out: &TransformOutput,
    mu_f: &Distribution,
    tag: &str,
) -> Result<Vec<CheckOutcome>> {
    let n = mu_f.input_len();
    let x_stats = super::x_leaf_stats(xtree, g, mu_g, mu_f)?;
    let z_stats = super::z_leaf_stats(&out.tree, mu_f)?;
    let mut checks = Vec::new();

    let mut per_leaf_ok = true;
    'leaves: for (leaf, predictors) in &x_stats.per_leaf {
        let image = out.iso.to_image[*leaf];
        let z_pred = &z_stats.per_leaf[&image];
        for i in 0..n {
            let adv = &predictors[i].advantage;
            let q = &z_pred[i].query_prob;
            if *adv != q * half() {
                checks.push(CheckOutcome::fail(
                    format!("leaf_advantage[{tag}]"),
                    format!(
                        "leaf {leaf}, index {i}: advantage {} vs query mass {}",
                        format_ratio(adv),
                        format_ratio(q)
                    ),
                ));
                per_leaf_ok = false;
                break 'leaves;
            }
            if !q.is_zero() && predictors[i].label != z_pred[i].value {
                checks.push(CheckOutcome::fail(
                    format!("leaf_label[{tag}]"),
                    format!("leaf {leaf}, index {i}: labels disagree"),
                ));
                per_leaf_ok = false;
                break 'leaves;
            }
        }
    }
    if per_leaf_ok {
        checks.push(CheckOutcome::pass(format!("leaf_advantage[{tag}]")));
    }

    if x_stats.delta_tree == z_stats.delta_tree {
        checks.push(CheckOutcome::pass(format!("aggregate_advantage[{tag}]")));
    } else {
        checks.push(CheckOutcome::fail(
            format!("aggregate_advantage[{tag}]"),
            format!(
                "source {:?} vs image {:?}",
                x_stats.delta_tree.iter().map(format_ratio).collect::<Vec<_>>(),
                z_stats.delta_tree.iter().map(format_ratio).collect::<Vec<_>>()
            ),
        ));
    }

    let queried = super::query_prob_under(&out.tree, mu_f)?;
    let mut bound_ok = true;
    for (i, q) in queried.iter().enumerate() {
        if *q > rat_int(4) * &z_stats.delta_tree[i] {
            checks.push(CheckOutcome::fail(
                format!("query_bound[{tag}]"),
                format!(
                    "index {i}: query probability {} exceeds 4 * {}",
                    format_ratio(q),
                    format_ratio(&z_stats.delta_tree[i])
                ),
            ));
            bound_ok = false;
            break;
        }
    }
    if bound_ok {
        checks.push(CheckOutcome::pass(format!("query_bound[{tag}]")));
    }

    Ok(checks)
}

/// Conditional block independence at every vertex of the source tree.
pub fn verify_independence(
    xtree: &XTree,
    g: &PromiseFunction,
    mu: &Distribution,
    n: usize,
    tag: &str,
) -> Result<Vec<CheckOutcome>> {
    let m = g.input_len();
    let mut checks = Vec::new();
    let mut ok = true;
    'vertices: for v in xtree.node_ids() {
        let path = match xtree.path_to(v) {
            Some(path) => path,
            None => continue,
        };
        if !mu.support().iter().any(|(x, _)| path.admits(xtree, x, m)) {
            continue;
        }
        for i in 0..n {
            let outcome = super::check_block_independence(xtree, v, g, mu, i, n)?;
            if !outcome.pass {
                let (val, joint, product) = outcome.witness.unwrap();
                checks.push(CheckOutcome::fail(
                    format!("block_independence[{tag}]"),
                    format!(
                        "vertex {v}, block {i}, value {}: joint {} vs product {}",
                        val.symbol(),
                        format_ratio(&joint),
                        format_ratio(&product)
                    ),
                ));
                ok = false;
                break 'vertices;
            }
        }
    }
    if ok {
        checks.push(CheckOutcome::pass(format!("block_independence[{tag}]")));
    }
    Ok(checks)
}

/// The distributions exercised by default: uniform, all point masses,
/// and `extra` random ones.
pub fn outer_distribution_suite(n: usize, extra: Vec<Distribution>) -> Vec<(String, Distribution)> {
    let mut suite = vec![("uniform".to_string(), Distribution::uniform(n))];
    for z in Bitstring::all(n) {
        suite.push((format!("point:{z}"), Distribution::point(z)));
    }
    for (i, nu) in extra.into_iter().enumerate() {
        suite.push((format!("random:{i}"), nu));
    }
    suite
}

/// Full battery for one instance: translate, then run every suite.
#[allow(clippy::too_many_arguments)]
pub fn full_verification(
    xtree: &XTree,
    f: &Relation,
    g: &PromiseFunction,
    mu_g: &Distribution,
    out: &TransformOutput,
    extra_nu: Vec<Distribution>,
    extra_mu_f: Vec<Distribution>,
) -> Result<Vec<CheckOutcome>> {
    let n = f.input_len();
    let mut checks = Vec::new();

    match out.iso.verify(xtree, &out.tree, &out.ledger) {
        Ok(()) => checks.push(CheckOutcome::pass("isomorphism")),
        Err(e) => checks.push(CheckOutcome::fail("isomorphism", e.to_string())),
    }

    checks.extend(verify_structure(out, n)?);

    for (tag, nu) in outer_distribution_suite(n, extra_nu) {
        checks.extend(verify_corollary(xtree, f, g, mu_g, out, &nu, &tag)?);
    }

    let uniform = Distribution::uniform(n);
    let lifted_uniform = lift_distribution(&uniform, mu_g, g)?;
    checks.extend(verify_independence(xtree, g, &lifted_uniform, n, "uniform")?);

    checks.extend(verify_predictors(xtree, g, mu_g, out, &uniform, "uniform")?);
    for (i, mu_f) in extra_mu_f.iter().enumerate() {
        checks.extend(verify_predictors(xtree, g, mu_g, out, mu_f, &format!("random:{i}"))?);
    }

    Ok(checks)
}
