//! Python bindings for the qclab laboratory.
//!
//! Structured values cross the boundary as the same JSON documents the
//! CLI reads and writes; scalars and probabilities come back as
//! `"num/den"` strings so nothing is rounded.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qclab::problems::{Bitstring, Distribution};
use qclab::rational::format_ratio;

fn err(e: qclab::Error) -> PyErr {
    match e {
        qclab::Error::Parse(_) | qclab::Error::Io(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// True when `xi` is a correct answer for the composed problem on `x`.
#[pyfunction]
fn compose_membership(f_json: &str, g_json: &str, x: &str, xi: &str) -> PyResult<bool> {
    let f = qclab::io::relation_from_json(f_json).map_err(err)?;
    let g = qclab::io::promise_from_json(g_json).map_err(err)?;
    let x = Bitstring::parse(x).map_err(err)?;
    qclab::problems::compose_membership(&f, &g, &x, xi).map_err(err)
}

/// Translates a deterministic tree; returns (tree JSON, ledger JSON).
#[pyfunction]
#[pyo3(signature = (tree_json, g_json, mu_g_json, n=None))]
fn transform(
    tree_json: &str,
    g_json: &str,
    mu_g_json: &str,
    n: Option<usize>,
) -> PyResult<(String, String)> {
    let tree = qclab::io::xtree_from_json(tree_json).map_err(err)?;
    let g = qclab::io::promise_from_json(g_json).map_err(err)?;
    let mu_g = qclab::io::distribution_from_json(mu_g_json).map_err(err)?;
    let n = n.unwrap_or_else(|| {
        tree.nodes()
            .iter()
            .filter_map(|node| match node {
                qclab::trees::XNode::Query { block, .. } => Some(*block + 1),
                _ => None,
            })
            .max()
            .unwrap_or(1)
    });
    let out = qclab::transform::transform_protocol(&tree, n, &g, &mu_g).map_err(err)?;
    Ok((
        qclab::io::ptree_to_json(&out.tree),
        qclab::io::ledger_to_json(&out.ledger),
    ))
}

/// Runs the full verification battery; returns (all_pass, checks JSON).
#[pyfunction]
#[pyo3(signature = (tree_json, f_json, g_json, mu_g_json, seed=0))]
fn verify(
    tree_json: &str,
    f_json: &str,
    g_json: &str,
    mu_g_json: &str,
    seed: u64,
) -> PyResult<(bool, String)> {
    let tree = qclab::io::xtree_from_json(tree_json).map_err(err)?;
    let f = qclab::io::relation_from_json(f_json).map_err(err)?;
    let g = qclab::io::promise_from_json(g_json).map_err(err)?;
    let mu_g = qclab::io::distribution_from_json(mu_g_json).map_err(err)?;
    let n = f.input_len();
    let mut extra_nu = Vec::new();
    let mut extra_mu_f = Vec::new();
    for i in 0..3 {
        let mut s = qclab::rng::Stream::new(&[seed, i, 0xa11]);
        extra_nu.push(qclab::gen::random_outer_distribution(&mut s, n));
        extra_mu_f.push(qclab::gen::random_full_support_distribution(&mut s, n));
    }
    let out = qclab::transform::transform_protocol(&tree, n, &g, &mu_g).map_err(err)?;
    let checks = qclab::eval::correspondence::full_verification(
        &tree, &f, &g, &mu_g, &out, extra_nu, extra_mu_f,
    )
    .map_err(err)?;
    Ok((
        qclab::eval::correspondence::all_pass(&checks),
        qclab::io::checks_to_json(&checks),
    ))
}

/// Evaluation report of a deterministic tree, as JSON.
#[pyfunction]
#[pyo3(signature = (tree_json, f_json, g_json, mu_g_json, nu_json=None))]
fn evaluate_x(
    tree_json: &str,
    f_json: &str,
    g_json: &str,
    mu_g_json: &str,
    nu_json: Option<&str>,
) -> PyResult<String> {
    let tree = qclab::io::xtree_from_json(tree_json).map_err(err)?;
    let f = qclab::io::relation_from_json(f_json).map_err(err)?;
    let g = qclab::io::promise_from_json(g_json).map_err(err)?;
    let mu_g = qclab::io::distribution_from_json(mu_g_json).map_err(err)?;
    let nu = match nu_json {
        Some(text) => qclab::io::distribution_from_json(text).map_err(err)?,
        None => Distribution::uniform(f.input_len()),
    };
    let lifted = qclab::problems::lift_distribution(&nu, &mu_g, &g).map_err(err)?;
    let report = qclab::eval::evaluate_x_protocol(&tree, &f, &g, &lifted).map_err(err)?;
    Ok(qclab::io::report_to_json(&report, None))
}

/// Evaluation report of a polarised tree, as JSON.
#[pyfunction]
#[pyo3(signature = (tree_json, f_json, nu_json=None))]
fn evaluate_polarised(tree_json: &str, f_json: &str, nu_json: Option<&str>) -> PyResult<String> {
    let tree = qclab::io::ptree_from_json(tree_json).map_err(err)?;
    let f = qclab::io::relation_from_json(f_json).map_err(err)?;
    let nu = match nu_json {
        Some(text) => qclab::io::distribution_from_json(text).map_err(err)?,
        None => Distribution::uniform(f.input_len()),
    };
    let report = qclab::eval::evaluate_polarised(&tree, &f, &nu).map_err(err)?;
    Ok(qclab::io::report_to_json(&report, None))
}

/// None when polarised; otherwise the id of a violating vertex.
#[pyfunction]
fn polarity_violation(tree_json: &str) -> PyResult<Option<usize>> {
    let tree = qclab::io::ptree_from_json(tree_json).map_err(err)?;
    match qclab::eval::check_polarity(&tree).map_err(err)? {
        qclab::eval::PolarityCheck::Pass => Ok(None),
        qclab::eval::PolarityCheck::Violation(w) => Ok(Some(w.node)),
    }
}

/// Computational paths of a polarised tree on one input, as JSON.
#[pyfunction]
fn enumerate_paths(tree_json: &str, z: &str) -> PyResult<String> {
    let tree = qclab::io::ptree_from_json(tree_json).map_err(err)?;
    let z = Bitstring::parse(z).map_err(err)?;
    qclab::io::paths_to_json(&tree, &z).map_err(err)
}

/// Gap-threshold value of a block: "0", "1" or "*".
#[pyfunction]
fn g0_eval(x: &str) -> PyResult<String> {
    let x = Bitstring::parse(x).map_err(err)?;
    Ok(qclab::gap_majority::g0_eval(&x).symbol().to_string())
}

/// Whether `a` is within the accepted distance of `z`.
#[pyfunction]
fn f0_contains(z: &str, a: &str) -> PyResult<bool> {
    let z = Bitstring::parse(z).map_err(err)?;
    let a = Bitstring::parse(a).map_err(err)?;
    qclab::gap_majority::f0_contains(&z, &a).map_err(err)
}

/// Exact majority-probe success probability as a "num/den" string.
#[pyfunction]
fn exact_probe_advantage(n: u64, t: u64) -> PyResult<String> {
    qclab::gap_majority::exact_probe_advantage(n, t)
        .map(|r| format_ratio(&r))
        .map_err(err)
}

/// Seeded Monte Carlo error estimate:
/// (estimate, wilson_low, wilson_high, chernoff_bound).
#[pyfunction]
#[pyo3(signature = (n, t, trials, seed=0, family="mixed-boundary"))]
fn monte_carlo_error(
    n: u64,
    t: u64,
    trials: u64,
    seed: u64,
    family: &str,
) -> PyResult<(f64, f64, f64, f64)> {
    let family = qclab::gap_majority::InputFamily::parse(family).map_err(err)?;
    let out = qclab::gap_majority::monte_carlo_error(n, t, trials, seed, family).map_err(err)?;
    Ok((
        out.estimate,
        out.wilson_low,
        out.wilson_high,
        out.chernoff_bound,
    ))
}

/// Hardness certificate for a promise function, as JSON.
#[pyfunction]
#[pyo3(signature = (g_json, grid=16, max_depth=None))]
fn search_hardest(g_json: &str, grid: u32, max_depth: Option<usize>) -> PyResult<String> {
    let g = qclab::io::promise_from_json(g_json).map_err(err)?;
    let depth = max_depth.unwrap_or(g.input_len()).min(g.input_len());
    let family = qclab::hardness::enumerate_trees(g.input_len(), depth).map_err(err)?;
    let cert = qclab::hardness::search_hardest(&g, &family, grid).map_err(err)?;
    Ok(qclab::io::certificate_to_json(&cert))
}

/// Seeded random instance: (tree, f, g, mu_g) as JSON documents.
#[pyfunction]
fn random_instance(seed: u64, index: u64) -> PyResult<(String, String, String, String)> {
    let inst = qclab::gen::random_instance(seed, index);
    Ok((
        qclab::io::xtree_to_json(&inst.tree),
        qclab::io::relation_to_json(&inst.f),
        qclab::io::promise_to_json(&inst.g),
        qclab::io::distribution_to_json(&inst.mu_g),
    ))
}

#[pymodule]
fn qclab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(compose_membership, m)?)?;
    m.add_function(wrap_pyfunction!(transform, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_x, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_polarised, m)?)?;
    m.add_function(wrap_pyfunction!(polarity_violation, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_paths, m)?)?;
    m.add_function(wrap_pyfunction!(g0_eval, m)?)?;
    m.add_function(wrap_pyfunction!(f0_contains, m)?)?;
    m.add_function(wrap_pyfunction!(exact_probe_advantage, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_error, m)?)?;
    m.add_function(wrap_pyfunction!(search_hardest, m)?)?;
    m.add_function(wrap_pyfunction!(random_instance, m)?)?;
    Ok(())
}
