//! Seeded trial loops behind each command of the command-line tool.
//!
//! Trials run in parallel, each on its own [`trial_rng`] stream, and are
//! collected in trial order so reports do not depend on scheduling.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bellman::{
    certify_tree_embedding, mi18_check, mi99_check, neutr_check, DOMAIN_TOL, INEQUALITY_TOL,
};
use crate::bitree::{
    bi_embedding_constant, bitree_bellman_certify, build_bitree, cube_embedding_check, gap_probe,
    one_box_constant, set_test_constant, BiMeasure, BiTreeShape, BoundaryFunction, GapConfig,
    GapOptimizer, GapStep, SetStrategy,
};
use crate::carleson::{
    carleson_ratios, dense_embedding_constant, embedding_pair_check_with,
    normalize_alpha_test, normalize_test_constant, AlphaSequence, DENSE_ORACLE_LIMIT,
};
use crate::eigen::PowerIteration;
use crate::error::Result;
use crate::io::{MeasureFile, RunConfig};
use crate::maximal::{maximal_theorem_check, stopping_decomposition, verify_stopping_invariants};
use crate::sampling::{
    random_bimeasure, random_boundary_function, random_node_function, random_tree_measure,
    trial_rng, AdmissibleSampler, SampleMode, Witness,
};
use crate::tree::{build_tree, hardy_down, potential, NodeValues, NodeVector, SupportMode, TreeMeasure, TreeShape};

/// The first failing trial of a run, with everything needed to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: usize,
    pub reason: String,
    pub data: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessRun<S, R> {
    pub summary: S,
    pub rows: Vec<R>,
    pub counterexample: Option<Counterexample>,
}

impl<S, R> HarnessRun<S, R> {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

struct Trial<R> {
    row: R,
    failure: Option<(String, Value)>,
}

impl<R> Trial<R> {
    fn check(row: R, ok: bool, reason: impl FnOnce() -> String, data: impl FnOnce() -> Value) -> Self {
        let failure = if ok { None } else { Some((reason(), data())) };
        Self { row, failure }
    }
}

fn run_trials<R: Send>(
    trials: usize,
    body: impl Fn(usize) -> Result<Trial<R>> + Sync + Send,
) -> Result<(Vec<R>, Option<Counterexample>)> {
    let results: Vec<Result<Trial<R>>> = (0..trials).into_par_iter().map(body).collect();
    let mut rows = Vec::with_capacity(trials);
    let mut counterexample = None;
    for (t, result) in results.into_iter().enumerate() {
        let trial = result?;
        if counterexample.is_none() {
            if let Some((reason, data)) = trial.failure {
                counterexample = Some(Counterexample { trial: t, reason, data });
            }
        }
        rows.push(trial.row);
    }
    Ok((rows, counterexample))
}

fn power_opts(cfg: &RunConfig) -> PowerIteration {
    PowerIteration {
        tol: cfg.tol,
        ..PowerIteration::default()
    }
}

/// Fixed depth, or 4..=8 cycling with the trial index.
fn cycled_depth(fixed: Option<u32>, trial: usize) -> u32 {
    fixed.unwrap_or(4 + (trial % 5) as u32)
}

fn alternating_mode(trial: usize) -> SupportMode {
    if trial.is_multiple_of(2) {
        SupportMode::AllNodes
    } else {
        SupportMode::BoundaryOnly
    }
}

/// Fixed depths, or every pair in `1..=5` cycling with the trial index.
fn cycled_depths(fixed: Option<(u32, u32)>, trial: usize) -> (u32, u32) {
    fixed.unwrap_or((1 + (trial % 5) as u32, 1 + ((trial / 5) % 5) as u32))
}

fn tree_instance(
    rng: &mut ChaCha8Rng,
    fixed: Option<&TreeMeasure>,
    depth: u32,
    mode: SupportMode,
) -> Result<TreeMeasure> {
    match fixed {
        Some(mu) => Ok(mu.clone()),
        None => Ok(random_tree_measure(rng, build_tree(depth)?, mode)),
    }
}

fn bitree_instance(rng: &mut ChaCha8Rng, fixed: Option<&BiMeasure>, depths: (u32, u32)) -> Result<BiMeasure> {
    match fixed {
        Some(mu) => Ok(mu.clone()),
        None => Ok(random_bimeasure(rng, build_bitree(depths.0, depths.1)?)),
    }
}

fn tree_data(mu: &TreeMeasure, phi: Option<&NodeVector>) -> Value {
    json!({
        "measure": MeasureFile::from_tree(mu),
        "function": phi.map(|p| p.values().to_vec()),
    })
}

fn bitree_data(mu: &BiMeasure, phi: Option<&BoundaryFunction>) -> Value {
    json!({
        "measure": MeasureFile::from_bitree(mu),
        "function": phi.map(|p| p.values().to_vec()),
    })
}

fn fold_min(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

fn fold_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeTestRow {
    pub trial: usize,
    pub depth: u32,
    pub support_mode: SupportMode,
    pub test_constant: f64,
    pub embedding_constant: f64,
    pub ratio: f64,
    pub iterations: usize,
    pub converged: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub trials: usize,
    pub failures: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl RatioSummary {
    fn from_rows<R>(rows: &[R], ratio: impl Fn(&R) -> f64, ok: impl Fn(&R) -> bool) -> Self {
        Self {
            trials: rows.len(),
            failures: rows.iter().filter(|r| !ok(r)).count(),
            min_ratio: fold_min(rows.iter().map(&ratio)),
            max_ratio: fold_max(rows.iter().map(&ratio)),
        }
    }
}

/// `C_test <= C_emb <= 4 C_test` on random tree measures.
pub fn tree_test(cfg: &RunConfig) -> Result<HarnessRun<RatioSummary, TreeTestRow>> {
    let opts = power_opts(cfg);
    let (rows, counterexample) = run_trials(cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, t as u64);
        let depth = cycled_depth(cfg.depth, t);
        let mode = alternating_mode(t);
        let mu = tree_instance(&mut rng, None, depth, mode)?;
        let check = embedding_pair_check_with(&mu, opts);
        let row = TreeTestRow {
            trial: t,
            depth,
            support_mode: mode,
            test_constant: check.report.test_constant,
            embedding_constant: check.report.embedding_constant,
            ratio: check.ratio(),
            iterations: check.report.iterations,
            converged: check.report.converged,
            holds: check.holds(),
        };
        Ok(Trial::check(
            row,
            check.holds(),
            || format!("sandwich failed: C_test = {}, C_emb = {}", check.report.test_constant, check.report.embedding_constant),
            || tree_data(&mu, None),
        ))
    })?;
    let summary = RatioSummary::from_rows(&rows, |r| r.ratio, |r| r.holds);
    Ok(HarnessRun { summary, rows, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub node: usize,
    pub depth: u32,
    pub mass: f64,
    pub subtree_mass: f64,
    pub ratio: f64,
    pub potential: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub depth: u32,
    pub support_mode: SupportMode,
    pub test_constant: f64,
    pub argmax_node: usize,
    pub embedding_constant: f64,
    pub dense_embedding_constant: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub ratio: f64,
    pub holds: bool,
}

/// Per-node ratios and both constants for one tree measure.
pub fn tree_embed(cfg: &RunConfig, fixed: Option<&TreeMeasure>) -> Result<HarnessRun<EmbedSummary, NodeRow>> {
    let mut rng = trial_rng(cfg.seed, 0);
    let mu = tree_instance(&mut rng, fixed, cfg.depth.unwrap_or(6), SupportMode::AllNodes)?;
    let shape = mu.shape();
    let ratios = carleson_ratios(&mu);
    let subtree = hardy_down(&mu);
    let pot = potential(&mu);
    let rows = shape
        .nodes()
        .map(|k| NodeRow {
            node: k,
            depth: TreeShape::node_depth(k),
            mass: mu.at(k),
            subtree_mass: subtree.at(k),
            ratio: ratios.ratios.at(k),
            potential: pot.at(k),
        })
        .collect();
    let check = embedding_pair_check_with(&mu, power_opts(cfg));
    let dense = if mu.support().len() <= DENSE_ORACLE_LIMIT {
        Some(dense_embedding_constant(&mu)?)
    } else {
        None
    };
    let summary = EmbedSummary {
        depth: shape.depth(),
        support_mode: mu.mode(),
        test_constant: check.report.test_constant,
        argmax_node: check.report.argmax_node,
        embedding_constant: check.report.embedding_constant,
        dense_embedding_constant: dense,
        iterations: check.report.iterations,
        converged: check.report.converged,
        ratio: check.ratio(),
        holds: check.holds(),
    };
    let counterexample = (!check.holds()).then(|| Counterexample {
        trial: 0,
        reason: format!(
            "sandwich failed: C_test = {}, C_emb = {}",
            summary.test_constant, summary.embedding_constant
        ),
        data: tree_data(&mu, None),
    });
    Ok(HarnessRun { summary, rows, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellmanSummary {
    pub mode: SampleMode,
    pub samples: usize,
    /// `min-slack` for the main inequalities, `max-value` for the neutral estimate.
    pub statistic: String,
    pub extreme: f64,
    pub extreme_index: Option<usize>,
    pub threshold: f64,
    pub rejected_carleson_bound: u64,
    pub rejected_mixed_bound: u64,
    pub rejected_other: u64,
    pub passes: bool,
}

fn witness_value(w: &Witness) -> Result<f64> {
    match w {
        Witness::Mi99 { left, right, m } => mi99_check(left, right, *m),
        Witness::Mi18(split) => mi18_check(split),
        Witness::Neutr { parent, a, b, c } => neutr_check(parent, *a, *b, *c),
    }
}

/// Samples admissible witnesses and records the worst slack.
pub fn bellman_sample(cfg: &RunConfig, mode: SampleMode) -> Result<HarnessRun<BellmanSummary, BellmanSummary>> {
    let mut sampler = AdmissibleSampler::new(cfg.seed, mode);
    let witnesses: Vec<Witness> = (&mut sampler).take(cfg.trials).collect::<Result<_>>()?;
    let values: Vec<f64> = witnesses
        .par_iter()
        .map(witness_value)
        .collect::<Result<_>>()?;
    let upper = mode == SampleMode::Neutr;
    let mut extreme = if upper { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut extreme_index = None;
    for (i, &v) in values.iter().enumerate() {
        if (upper && v > extreme) || (!upper && v < extreme) {
            extreme = v;
            extreme_index = Some(i);
        }
    }
    let (statistic, threshold, passes) = if upper {
        ("max-value", DOMAIN_TOL, extreme <= DOMAIN_TOL)
    } else {
        ("min-slack", -INEQUALITY_TOL, extreme >= -INEQUALITY_TOL)
    };
    let rejections = sampler.rejections();
    let summary = BellmanSummary {
        mode,
        samples: values.len(),
        statistic: statistic.to_string(),
        extreme,
        extreme_index,
        threshold,
        rejected_carleson_bound: rejections.carleson_bound,
        rejected_mixed_bound: rejections.mixed_bound,
        rejected_other: rejections.other,
        passes,
    };
    let counterexample = match (passes, extreme_index) {
        (false, Some(i)) => Some(Counterexample {
            trial: i,
            reason: format!("{statistic} {extreme:e} beyond {threshold:e}"),
            data: serde_json::to_value(witnesses[i])?,
        }),
        _ => None,
    };
    Ok(HarnessRun {
        rows: vec![summary.clone()],
        summary,
        counterexample,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalRow {
    pub trial: usize,
    pub depth: u32,
    pub support_mode: SupportMode,
    pub generations: usize,
    pub stopping_vertices: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub stopping_bound: f64,
    pub alpha_bound: f64,
    pub invariants_hold: bool,
    pub passes: bool,
}

/// Stopping-time decomposition and the maximal inequality on normalized measures.
///
/// With `signed` the test functions take both signs; rows still report the
/// outcome but no trial counts as a failure.
pub fn maximal_verify(
    cfg: &RunConfig,
    fixed: Option<&TreeMeasure>,
    signed: bool,
) -> Result<HarnessRun<RatioSummary, MaximalRow>> {
    let (rows, counterexample) = run_trials(cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, t as u64);
        let mode = alternating_mode(t);
        let raw = tree_instance(&mut rng, fixed, cycled_depth(cfg.depth, t), mode)?;
        let lambda = normalize_test_constant(&raw);
        let phi = random_node_function(&mut rng, lambda.shape(), !signed);
        let check = maximal_theorem_check(&lambda, &phi)?;
        let dec = stopping_decomposition(&lambda, &phi)?;
        let invariants = verify_stopping_invariants(&dec, &lambda, &phi)?;
        let passes = check.passes && check.passes_stopping_bound && invariants.passes();
        let row = MaximalRow {
            trial: t,
            depth: lambda.shape().depth(),
            support_mode: lambda.mode(),
            generations: dec.generations.len(),
            stopping_vertices: dec.vertices.len(),
            lhs: check.lhs,
            rhs: check.rhs,
            ratio: check.ratio,
            stopping_bound: check.stopping_bound,
            alpha_bound: check.alpha_bound,
            invariants_hold: invariants.passes(),
            passes,
        };
        Ok(Trial::check(
            row,
            passes || signed,
            || format!("maximal check failed: {check:?}; invariants {invariants:?}"),
            || tree_data(&lambda, Some(&phi)),
        ))
    })?;
    let summary = RatioSummary::from_rows(&rows, |r| r.ratio, |r| r.passes);
    Ok(HarnessRun { summary, rows, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyRow {
    pub trial: usize,
    pub depth: u32,
    pub support_mode: SupportMode,
    pub total: f64,
    pub root_value: f64,
    pub bound: f64,
    pub min_slack: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifySummary {
    pub trials: usize,
    pub failures: usize,
    pub min_slack: f64,
    /// Largest `total / bound` seen.
    pub max_fill: f64,
}

/// Telescoping certificate for `alpha = |I|^2` on normalized tree measures.
pub fn certify_tree(cfg: &RunConfig, fixed: Option<&TreeMeasure>) -> Result<HarnessRun<CertifySummary, CertifyRow>> {
    let (rows, counterexample) = run_trials(cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, t as u64);
        let mode = alternating_mode(t);
        let raw = tree_instance(&mut rng, fixed, cfg.depth.unwrap_or(6), mode)?;
        let alpha = AlphaSequence::squared_lengths(raw.shape());
        let lambda = normalize_alpha_test(&raw, &alpha)?;
        let phi = random_node_function(&mut rng, lambda.shape(), false);
        let cert = certify_tree_embedding(&lambda, &phi, &alpha)?;
        let row = CertifyRow {
            trial: t,
            depth: lambda.shape().depth(),
            support_mode: lambda.mode(),
            total: cert.total,
            root_value: cert.root_value,
            bound: cert.bound,
            min_slack: cert.min_slack,
            holds: cert.holds(),
        };
        Ok(Trial::check(
            row,
            cert.holds(),
            || format!("certificate failed: min slack {}, total {} vs bound {}", cert.min_slack, cert.total, cert.bound),
            || tree_data(&lambda, Some(&phi)),
        ))
    })?;
    let summary = CertifySummary {
        trials: rows.len(),
        failures: rows.iter().filter(|r| !r.holds).count(),
        min_slack: fold_min(rows.iter().map(|r| r.min_slack)),
        max_fill: fold_max(rows.iter().map(|r| if r.bound > 0.0 { r.total / r.bound } else { 0.0 })),
    };
    Ok(HarnessRun { summary, rows, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneBoxRow {
    pub trial: usize,
    pub n: u32,
    pub m: u32,
    pub one_box: f64,
    pub argmax_x: usize,
    pub argmax_y: usize,
    pub cube_lhs: f64,
    pub cube_rhs: f64,
    pub cube_ratio: f64,
    pub passes: bool,
}

/// One-box constant, then the `|Q|^3` embedding on the normalized measure.
pub fn bitree_onebox(cfg: &RunConfig, fixed: Option<&BiMeasure>) -> Result<HarnessRun<RatioSummary, OneBoxRow>> {
    let (rows, counterexample) = run_trials(cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, t as u64);
        let mu = bitree_instance(&mut rng, fixed, cycled_depths(cfg.depths, t))?;
        let shape = mu.shape();
        let ob = one_box_constant(&mu);
        let normalized = mu.normalized();
        let phi = random_boundary_function(&mut rng, shape, false);
        let cube = cube_embedding_check(&normalized, &phi)?;
        let (n, m) = shape.depths();
        let row = OneBoxRow {
            trial: t,
            n,
            m,
            one_box: ob.value,
            argmax_x: ob.argmax.x,
            argmax_y: ob.argmax.y,
            cube_lhs: cube.lhs,
            cube_rhs: cube.rhs,
            cube_ratio: cube.ratio,
            passes: cube.passes,
        };
        Ok(Trial::check(
            row,
            cube.passes,
            || format!("cube embedding ratio {} exceeds 4", cube.ratio),
            || bitree_data(&normalized, Some(&phi)),
        ))
    })?;
    let summary = RatioSummary::from_rows(&rows, |r| r.cube_ratio, |r| r.passes);
    Ok(HarnessRun { summary, rows, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetTestRow {
    pub trial: usize,
    pub n: u32,
    pub m: u32,
    pub set_test: f64,
    pub one_box: f64,
    pub embedding: f64,
    pub sets_evaluated: u64,
    pub set_over_one_box: f64,
    pub embedding_over_set: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetTestSummary {
    pub trials: usize,
    pub failures: usize,
    pub max_set_over_one_box: f64,
    pub max_embedding_over_set: f64,
}

/// Set test against the one-box and `|Q|^2` embedding constants.
pub fn bitree_settest(
    cfg: &RunConfig,
    strategy: SetStrategy,
    fixed: Option<&BiMeasure>,
) -> Result<HarnessRun<SetTestSummary, SetTestRow>> {
    let depths = Some(cfg.depths.unwrap_or((2, 2)));
    let opts = power_opts(cfg);
    let (rows, counterexample) = run_trials(cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, t as u64);
        let mu = bitree_instance(&mut rng, fixed, cycled_depths(depths, t))?;
        let set = set_test_constant(&mu, strategy)?;
        let one_box = one_box_constant(&mu).value;
        let embedding = bi_embedding_constant(&mu, opts.tol, opts.max_iter).value;
        let holds = set.value <= embedding + INEQUALITY_TOL * embedding.max(1.0);
        let (n, m) = mu.shape().depths();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let row = SetTestRow {
            trial: t,
            n,
            m,
            set_test: set.value,
            one_box,
            embedding,
            sets_evaluated: set.sets_evaluated,
            set_over_one_box: ratio(set.value, one_box),
            embedding_over_set: ratio(embedding, set.value),
            holds,
        };
        Ok(Trial::check(
            row,
            holds,
            || format!("set test {} exceeds embedding constant {embedding}", set.value),
            || json!({"measure": MeasureFile::from_bitree(&mu), "witness": set.witness}),
        ))
    })?;
    let summary = SetTestSummary {
        trials: rows.len(),
        failures: rows.iter().filter(|r| !r.holds).count(),
        max_set_over_one_box: fold_max(rows.iter().map(|r| r.set_over_one_box)),
        max_embedding_over_set: fold_max(rows.iter().map(|r| r.embedding_over_set)),
    };
    Ok(HarnessRun { summary, rows, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiCertifyRow {
    pub trial: usize,
    pub n: u32,
    pub m: u32,
    pub rectangles: usize,
    pub total: f64,
    pub telescoped: f64,
    pub root_value: f64,
    pub bound: f64,
    pub failing_rectangles: usize,
    pub max_martingale_residual: f64,
    pub min_gain_margin: f64,
    pub min_inequality_margin: f64,
    pub holds: bool,
}

/// Rectangle-by-rectangle certificate on normalized bi-tree measures.
pub fn bitree_certify(cfg: &RunConfig, fixed: Option<&BiMeasure>) -> Result<HarnessRun<RatioSummary, BiCertifyRow>> {
    let (rows, counterexample) = run_trials(cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, t as u64);
        let mu = bitree_instance(&mut rng, fixed, cycled_depths(cfg.depths, t))?.normalized();
        let phi = random_boundary_function(&mut rng, mu.shape(), false);
        let cert = bitree_bellman_certify(&mu, &phi)?;
        let (n, m) = mu.shape().depths();
        let row = BiCertifyRow {
            trial: t,
            n,
            m,
            rectangles: cert.rows.len(),
            total: cert.total,
            telescoped: cert.telescoped,
            root_value: cert.root_value,
            bound: cert.bound,
            failing_rectangles: cert.failing_rows().count(),
            max_martingale_residual: fold_max(cert.rows.iter().map(|r| r.martingale_residual)),
            min_gain_margin: fold_min(cert.rows.iter().map(|r| r.carleson_gain - r.gain_floor)),
            min_inequality_margin: fold_min(cert.rows.iter().map(|r| r.local_drop - r.local_target)),
            holds: cert.holds(),
        };
        Ok(Trial::check(
            row,
            cert.holds(),
            || {
                let first = cert.failing_rows().next().map(|r| r.rect.to_string());
                format!(
                    "certificate failed (bookkeeping {}, global {}, first failing {})",
                    cert.bookkeeping_ok,
                    cert.global_ok,
                    first.unwrap_or_else(|| "none".into())
                )
            },
            || bitree_data(&mu, Some(&phi)),
        ))
    })?;
    let summary = RatioSummary::from_rows(
        &rows,
        |r| if r.bound > 0.0 { r.total / r.bound } else { 0.0 },
        |r| r.holds,
    );
    Ok(HarnessRun { summary, rows, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub n: u32,
    pub m: u32,
    pub optimizer: GapOptimizer,
    pub steps: usize,
    pub best_gap: f64,
    pub best_one_box: f64,
    pub best_embedding: f64,
    pub best_measure: Option<MeasureFile>,
}

/// Exploratory search for a large embedding / one-box ratio; never fails.
pub fn gap_search(cfg: &RunConfig, optimizer: GapOptimizer) -> Result<HarnessRun<GapSummary, GapStep>> {
    let (n, m) = cfg.depths.unwrap_or((3, 3));
    let shape: BiTreeShape = build_bitree(n, m)?;
    let report = gap_probe(&GapConfig {
        shape,
        trials: cfg.trials,
        seed: cfg.seed,
        optimizer,
    });
    let summary = GapSummary {
        n,
        m,
        optimizer,
        steps: report.trajectory.len(),
        best_gap: report.best_gap,
        best_one_box: report.best_one_box,
        best_embedding: report.best_embedding,
        best_measure: report.best_measure.as_ref().map(MeasureFile::from_bitree),
    };
    Ok(HarnessRun {
        summary,
        rows: report.trajectory,
        counterexample: None,
    })
}
