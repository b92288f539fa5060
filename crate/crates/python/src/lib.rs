//! Python bindings. Scores and embeddings cross the boundary as lists of floats;
//! reports come back as JSON strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use softrank::fusion::{fuse as fuse_impl, init_params_with, QueryEmbedding, ViewEmbeddings};
use softrank::harness::report::parse_pairs;
use softrank::harness::{grad_check_suite, render_report, Format, SuiteOptions};
use softrank::metrics::evaluate_corpus as evaluate_impl;
use softrank::rank::{self, StrategyConfig, StrategyKind};

fn py_err(e: softrank::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn config(strategy: &str, tau: f64, top_k: usize, sinkhorn_iters: usize) -> PyResult<StrategyConfig> {
    let kind: StrategyKind = strategy.parse().map_err(py_err)?;
    Ok(StrategyConfig { kind, tau, top_k, sinkhorn_iters, ..StrategyConfig::default() })
}

fn rows(m: &softrank::math::Mat64) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Pooling weights for `scores` under a named strategy.
#[pyfunction]
#[pyo3(signature = (scores, strategy = "softsort", tau = 1.0, top_k = 3, sinkhorn_iters = 50))]
fn strategy_weights(
    scores: Vec<f64>,
    strategy: &str,
    tau: f64,
    top_k: usize,
    sinkhorn_iters: usize,
) -> PyResult<Vec<f64>> {
    let cfg = config(strategy, tau, top_k, sinkhorn_iters)?;
    cfg.validate(scores.len()).map_err(py_err)?;
    rank::strategy_weights(&cfg, &scores).map(|w| w.into_vec()).map_err(py_err)
}

/// Gradient of `upstream · weights(scores)` with respect to the scores.
#[pyfunction]
#[pyo3(signature = (scores, upstream, strategy = "softsort", tau = 1.0, top_k = 3, sinkhorn_iters = 50))]
fn strategy_vjp(
    scores: Vec<f64>,
    upstream: Vec<f64>,
    strategy: &str,
    tau: f64,
    top_k: usize,
    sinkhorn_iters: usize,
) -> PyResult<Vec<f64>> {
    let cfg = config(strategy, tau, top_k, sinkhorn_iters)?;
    rank::strategy_vjp(&cfg, &scores, &upstream).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (scores, tau = 1.0))]
fn soft_sort(scores: Vec<f64>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    rank::soft_sort(&scores, tau).map(|p| rows(p.matrix())).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (scores, tau = 1.0, iters = 50))]
fn sinkhorn_sort(scores: Vec<f64>, tau: f64, iters: usize) -> PyResult<Vec<Vec<f64>>> {
    rank::sinkhorn_sort(&scores, tau, iters).map(|p| rows(p.matrix())).map_err(py_err)
}

/// Operation counts as `{category: count}`, including `total`.
#[pyfunction]
#[pyo3(signature = (strategy, n_views, top_k = 3, sinkhorn_iters = 50))]
fn flop_count(strategy: &str, n_views: usize, top_k: usize, sinkhorn_iters: usize) -> PyResult<Vec<(String, u64)>> {
    let f = rank::flop_count(&config(strategy, 1.0, top_k, sinkhorn_iters)?, n_views);
    Ok(vec![
        ("additions".into(), f.additions),
        ("multiplications".into(), f.multiplications),
        ("exponentials".into(), f.exponentials),
        ("comparisons".into(), f.comparisons),
        ("divisions".into(), f.divisions),
        ("total".into(), f.total),
    ])
}

/// One fusion forward pass with freshly initialised weights.
/// Returns `(fused, weights, scores)`.
#[pyfunction]
#[pyo3(signature = (views, query, d_e = 32, seed = 0, strategy = "softsort", tau = 1.0))]
fn fuse(
    views: Vec<Vec<f64>>,
    query: Vec<f64>,
    d_e: usize,
    seed: u64,
    strategy: &str,
    tau: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let views = ViewEmbeddings::new(views).map_err(py_err)?;
    let query = QueryEmbedding::new(query).map_err(py_err)?;
    let cfg = config(strategy, tau, 3.min(views.n_views()), 50)?;
    let params = init_params_with(views.dim(), query.as_slice().len(), d_e, seed, cfg).map_err(py_err)?;
    let out = fuse_impl(&views, &query, &params).map_err(py_err)?;
    Ok((out.fused.into_vec(), out.weights.into_vec(), out.scores))
}

/// Scores JSON-lines `{"id", "hypothesis", "references"}` records; returns the report as JSON.
#[pyfunction]
fn evaluate_jsonl(text: &str) -> PyResult<String> {
    let pairs = parse_pairs(text).map_err(py_err)?;
    let report = evaluate_impl(&pairs).map_err(py_err)?;
    render_report(&report, Format::Json).map_err(py_err)
}

/// Runs the finite-difference suite; returns `(passed, worst relative error)`.
#[pyfunction]
#[pyo3(signature = (seeds = 1, tolerance = 1e-4))]
fn grad_check(seeds: usize, tolerance: f64) -> PyResult<(bool, f64)> {
    let r = grad_check_suite(&SuiteOptions { seeds, tolerance, ..Default::default() }).map_err(py_err)?;
    Ok((r.passed, r.summary.max_rel_error))
}

#[pymodule]
fn softrank_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(strategy_weights, m)?)?;
    m.add_function(wrap_pyfunction!(strategy_vjp, m)?)?;
    m.add_function(wrap_pyfunction!(soft_sort, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn_sort, m)?)?;
    m.add_function(wrap_pyfunction!(flop_count, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    Ok(())
}
