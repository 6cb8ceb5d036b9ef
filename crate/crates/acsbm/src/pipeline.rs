//! The three-stage community recovery pipeline.
//!
//! 1. Embed the adjacency matrix through its d largest-magnitude eigenpairs.
//! 2. Cluster the embedded nodes into K groups separately within each
//!    covariate configuration (labels are arbitrary within each group).
//! 3. Estimate the subcommunity block matrix from the clustered labels,
//!    factor it into latent positions, and align every configuration's
//!    labels to the all-ones reference configuration by minimum-cost
//!    matching of positions.
//!
//! The output is one community label per node, comparable across
//! configurations up to a single global permutation.

use crate::clustering::{
    cluster_by_covariate, partition_by_covariates, ClusterMethod, PerCovariateLabels,
};
use crate::error::{Error, Result};
use crate::linalg::solve_assignment;
use crate::link::LinkFunction;
use crate::model::{canonical_positions, CanonicalPositions, SubcommunityIndex};
use crate::rng::child_seed;
use crate::sampler::{empirical_block_density, Network};
use ndarray::Array2;
use std::collections::BTreeMap;
use std::time::Instant;

/// Options for `fit`.
#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Number of communities to recover.
    pub k: usize,
    /// Embedding dimension; defaults to K * (number of covariate
    /// configurations), capped at the smallest block size minus one.
    pub d: Option<usize>,
    pub method: ClusterMethod,
    pub seed: u64,
}

impl FitOptions {
    pub fn new(k: usize) -> Self {
        FitOptions {
            k,
            d: None,
            method: ClusterMethod::Gmm,
            seed: 0,
        }
    }
}

/// The estimated subcommunity edge-probability matrix together with the
/// index that maps (community, configuration) pairs to its rows.
#[derive(Clone, Debug)]
pub struct BlockEstimate {
    /// Square matrix over subcommunities; entry (r1-1, r2-1) is the
    /// empirical edge density between subcommunities r1 and r2.
    pub matrix: Array2<f64>,
    pub index: SubcommunityIndex,
}

/// Everything `fit` measures about its own run.
#[derive(Clone, Debug, Default)]
pub struct FitDiagnostics {
    /// Wall-clock milliseconds per stage plus "total".
    pub timings_ms: BTreeMap<String, f64>,
    /// Signed adjacency eigenvalues retained by the embedding.
    pub embedding_eigenvalues: Vec<f64>,
    /// (positive, negative) counts for the adjacency spectrum used.
    pub embedding_signature: (usize, usize),
    /// Signature of the estimated block matrix's retained spectrum.
    pub estimate_signature: (usize, usize),
    /// Per configuration: cost gap between the best and second-best label
    /// alignment (only computed for K <= 7).
    pub matching_gaps: BTreeMap<Vec<usize>, f64>,
    /// Embedding dimension actually used.
    pub embedding_dim: usize,
    pub warnings: Vec<String>,
}

/// Result of the full pipeline.
#[derive(Clone, Debug)]
pub struct FitResult {
    /// Estimated community per node, in 1..=K, aligned across covariate
    /// configurations.
    pub theta_hat: Vec<usize>,
    /// Per configuration: entry a-1 is the aligned community assigned to
    /// within-configuration cluster a.
    pub sigma_hat: BTreeMap<Vec<usize>, Vec<usize>>,
    /// Raw within-configuration cluster labels (stage 2 output).
    pub cluster_labels: PerCovariateLabels,
    /// Estimated subcommunity densities in the aligned label system: the
    /// cell for (community, configuration) refers to communities as
    /// `theta_hat` numbers them.
    pub block_estimate: BlockEstimate,
    /// Fraction of nodes mislabeled under the best global permutation,
    /// when the network carries ground truth.
    pub misclassification: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Empirical edge densities between estimated subcommunities: cluster
/// labels and observed configurations combine through the index, and each
/// density divides realized edges by max(1, #pairs).
pub fn estimate_block_matrix(
    net: &Network,
    labels: &PerCovariateLabels,
    idx: &SubcommunityIndex,
) -> Result<BlockEstimate> {
    let n = net.n();
    if labels.labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {} nodes",
            labels.labels.len(),
            n
        )));
    }
    let mut node_sub = Vec::with_capacity(n);
    for i in 0..n {
        node_sub.push(idx.index(labels.labels[i], &net.covariates[i])?);
    }
    let matrix = empirical_block_density(net, &node_sub, idx.total())?;
    Ok(BlockEstimate {
        matrix,
        index: idx.clone(),
    })
}

/// Latent positions of an estimated block matrix (the estimation analogue
/// of the model's canonical positions).
pub fn estimate_positions(est: &BlockEstimate) -> Result<CanonicalPositions> {
    canonical_positions(&est.matrix.view())
}

/// Aligns the clusters of configuration `z` to the all-ones reference
/// configuration: returns `relabel` where relabel[a-1] is the reference
/// community whose latent position matches within-configuration cluster a.
/// Ties are broken deterministically (identity wins on all-equal costs).
pub fn match_to_reference(
    positions: &CanonicalPositions,
    idx: &SubcommunityIndex,
    z: &[usize],
) -> Result<Vec<usize>> {
    let (cost, k) = matching_cost(positions, idx, z)?;
    let assignment = solve_assignment(&cost.view())?;
    // assignment.perm[k0] = cluster matched to reference community k0+1;
    // invert so each cluster maps to its reference community
    let mut relabel = vec![0usize; k];
    for (k0, &a) in assignment.perm.iter().enumerate() {
        relabel[a] = k0 + 1;
    }
    Ok(relabel)
}

/// Cost matrix for aligning configuration z to the reference: entry (a, k)
/// is the squared distance between the position of (cluster a+1, z) and
/// (community k+1, reference).
fn matching_cost(
    positions: &CanonicalPositions,
    idx: &SubcommunityIndex,
    z: &[usize],
) -> Result<(Array2<f64>, usize)> {
    let k = idx.k();
    let reference = vec![1usize; idx.m()];
    let mut cost = Array2::<f64>::zeros((k, k));
    for a in 0..k {
        let row_a = idx.index(a + 1, z)? - 1;
        for k0 in 0..k {
            let row_r = idx.index(k0 + 1, &reference)? - 1;
            cost[[a, k0]] = positions.row_distance_sq(row_a, row_r);
        }
    }
    Ok((cost, k))
}

/// Gap between the best and second-best total matching cost, by brute
/// force; only for small K.
fn matching_gap(cost: &Array2<f64>) -> Option<f64> {
    let k = cost.nrows();
    if k > 7 {
        return None;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    let mut second = f64::INFINITY;
    loop {
        let c: f64 = perm.iter().enumerate().map(|(col, &r)| cost[[r, col]]).sum();
        if c < best {
            second = best;
            best = c;
        } else if c < second {
            second = c;
        }
        // next permutation
        let mut i = k.wrapping_sub(2);
        while i != usize::MAX && perm[i] >= perm[i + 1] {
            i = i.wrapping_sub(1);
        }
        if i == usize::MAX {
            break;
        }
        let mut j = k - 1;
        while perm[j] <= perm[i] {
            j -= 1;
        }
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    if second.is_finite() {
        Some(second - best)
    } else {
        None
    }
}

/// Runs the full pipeline on a network.
pub fn fit(net: &Network, opts: &FitOptions) -> Result<FitResult> {
    let t_total = Instant::now();
    let n = net.n();
    if n == 0 {
        return Err(Error::Domain("cannot fit an empty network".into()));
    }
    if opts.k == 0 {
        return Err(Error::Domain("community count must be at least 1".into()));
    }
    let mut diag = FitDiagnostics::default();

    // observed covariate structure
    let partition = partition_by_covariates(&net.covariates)?;
    let m = net.covariates[0].len();
    let mut levels = vec![1usize; m];
    for z in &net.covariates {
        for (lm, &v) in levels.iter_mut().zip(z) {
            *lm = (*lm).max(v);
        }
    }
    let idx = SubcommunityIndex::new(opts.k, &levels)?;

    let min_block = partition.min_block_size();
    if min_block < opts.k {
        return Err(Error::Model(format!(
            "smallest covariate configuration has {min_block} nodes, fewer than K={}",
            opts.k
        )));
    }

    // embedding dimension: default K * L~, kept below the smallest block
    let cap = (min_block - 1).max(1).min(n);
    let d = match opts.d {
        None => {
            let natural = idx.total().min(n);
            if natural > cap {
                diag.warnings.push(format!(
                    "embedding dimension reduced from {natural} to {cap}: the smallest \
                     covariate configuration has only {min_block} nodes"
                ));
                cap
            } else {
                natural
            }
        }
        Some(d) => {
            if d == 0 || d > n {
                return Err(Error::Dimension(format!(
                    "embedding dimension {d} is outside 1..={n}"
                )));
            }
            if d > cap {
                diag.warnings.push(format!(
                    "embedding dimension {d} exceeds the safe bound {cap} for the smallest \
                     covariate configuration ({min_block} nodes); clustering may be unstable"
                ));
            }
            d
        }
    };
    diag.embedding_dim = d;

    let reference = vec![1usize; m];
    if !partition.blocks().contains_key(&reference) {
        diag.warnings.push(format!(
            "reference configuration {reference:?} has no nodes; cross-configuration \
             alignment has no anchor and labels may be inconsistent"
        ));
    }

    // stage 1: embed
    let t = Instant::now();
    let embedding = crate::linalg::spectral_embedding(net, d)?;
    diag.timings_ms
        .insert("embed".into(), t.elapsed().as_secs_f64() * 1e3);
    diag.embedding_eigenvalues = embedding.eigenvalues.clone();
    diag.embedding_signature = embedding.signature;

    // stage 2: cluster within configurations
    let t = Instant::now();
    let cluster_labels = cluster_by_covariate(
        &embedding.coords.view(),
        &partition,
        opts.k,
        opts.method,
        child_seed(opts.seed, &[0]),
    )?;
    diag.timings_ms
        .insert("cluster".into(), t.elapsed().as_secs_f64() * 1e3);

    // stage 3a: estimate the block matrix
    let t = Instant::now();
    let block_estimate = estimate_block_matrix(net, &cluster_labels, &idx)?;
    diag.timings_ms
        .insert("estimate".into(), t.elapsed().as_secs_f64() * 1e3);

    // stage 3b: positions and per-configuration alignment
    let t = Instant::now();
    let positions = estimate_positions(&block_estimate)?;
    diag.estimate_signature = positions.signature;
    let mut sigma_hat: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for config in partition.blocks().keys() {
        let (cost, _) = matching_cost(&positions, &idx, config)?;
        if let Some(gap) = matching_gap(&cost) {
            diag.matching_gaps.insert(config.clone(), gap);
        }
        let relabel = match_to_reference(&positions, &idx, config)?;
        sigma_hat.insert(config.clone(), relabel);
    }
    diag.timings_ms
        .insert("match".into(), t.elapsed().as_secs_f64() * 1e3);

    // compose final labels
    let mut theta_hat = Vec::with_capacity(n);
    for i in 0..n {
        let relabel = &sigma_hat[&net.covariates[i]];
        theta_hat.push(relabel[cluster_labels.labels[i] - 1]);
    }

    // Re-express the block estimate in the aligned label system. The raw
    // estimate indexes each configuration by its own cluster numbers; once
    // the alignment is known, cell (a, z) holds the density of final
    // community sigma_z(a), so permuting rows and columns makes the matrix
    // coherent with theta_hat (configurations with no nodes keep their
    // identity labels).
    let block_estimate = {
        let total = idx.total();
        let mut cell_map = vec![0usize; total];
        for r in 1..=total {
            let (a, z) = idx.unindex(r)?;
            let community = match sigma_hat.get(&z) {
                Some(relabel) => relabel[a - 1],
                None => a,
            };
            cell_map[r - 1] = idx.index(community, &z)? - 1;
        }
        let mut aligned = Array2::<f64>::zeros((total, total));
        for r1 in 0..total {
            for r2 in 0..total {
                aligned[[cell_map[r1], cell_map[r2]]] = block_estimate.matrix[[r1, r2]];
            }
        }
        BlockEstimate {
            matrix: aligned,
            index: block_estimate.index,
        }
    };

    // score against the truth when we have it
    let misclassification = match &net.truth {
        Some(truth) if truth.iter().all(|&t| t >= 1 && t <= opts.k) => {
            Some(crate::harness::misclassification(&theta_hat, truth, opts.k)?)
        }
        Some(_) => {
            diag.warnings.push(format!(
                "ground-truth labels fall outside 1..={}; skipping scoring",
                opts.k
            ));
            None
        }
        None => None,
    };

    diag.timings_ms
        .insert("total".into(), t_total.elapsed().as_secs_f64() * 1e3);
    Ok(FitResult {
        theta_hat,
        sigma_hat,
        cluster_labels,
        block_estimate,
        misclassification,
        diagnostics: diag,
    })
}

impl FitResult {
    /// JSON document: estimated labels, per-configuration alignments keyed
    /// by comma-joined configuration, the estimated block matrix, the
    /// misclassification rate (null without ground truth), and stage
    /// timings.
    pub fn to_json_string(&self) -> Result<String> {
        use serde_json::{json, Map, Value};
        let mut sigma = Map::new();
        for (config, relabel) in &self.sigma_hat {
            let key = config
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            sigma.insert(key, json!(relabel));
        }
        let b: Vec<Vec<f64>> = (0..self.block_estimate.matrix.nrows())
            .map(|r| self.block_estimate.matrix.row(r).to_vec())
            .collect();
        let mut timings = Map::new();
        for (stage, ms) in &self.diagnostics.timings_ms {
            timings.insert(stage.clone(), json!(ms));
        }
        let doc = json!({
            "theta_hat": self.theta_hat,
            "sigma_hat": Value::Object(sigma),
            "misclassification": self.misclassification,
            "B_tilde_hat": b,
            "timings_ms": Value::Object(timings),
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Model coefficients recovered from an estimated block matrix by least
/// squares on the link scale.
#[derive(Clone, Debug)]
pub struct CoefficientEstimate {
    /// Symmetric K x K base matrix.
    pub b: Array2<f64>,
    /// One homophily coefficient per covariate.
    pub beta: Vec<f64>,
    /// Euclidean norm of the least-squares residual on the link scale.
    pub residual_norm: f64,
    /// Equations actually used (entries at 0 or 1 are dropped for links
    /// that cannot represent them).
    pub equations: usize,
}

/// Inverts the block expansion: finds (B, beta) whose expansion best
/// explains the estimated densities on the link scale. Entries that the
/// link cannot map (0 for log; 0 and 1 for logit/probit) are excluded.
/// Errors when the remaining equations do not identify the coefficients.
/// Assumes the densities are on the dense scale (no sparsity damping).
pub fn recover_coefficients(
    est: &BlockEstimate,
    link: LinkFunction,
) -> Result<CoefficientEstimate> {
    let idx = &est.index;
    let k = idx.k();
    let m = idx.m();
    // unknowns: upper triangle of B (row-major), then beta
    let nb = k * (k + 1) / 2;
    let unknowns = nb + m;
    let b_pos = |k1: usize, k2: usize| -> usize {
        // 0-based (k1 <= k2): row-major upper triangle
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        lo * k - lo * (lo + 1) / 2 + hi
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let total = idx.total();
    for r1 in 1..=total {
        let (k1, z1) = idx.unindex(r1)?;
        for r2 in r1..=total {
            let (k2, z2) = idx.unindex(r2)?;
            let v = est.matrix[[r1 - 1, r2 - 1]];
            let usable = match link {
                LinkFunction::Identity => v.is_finite(),
                LinkFunction::Log => v > 0.0,
                LinkFunction::Logit | LinkFunction::Probit => v > 0.0 && v < 1.0,
            };
            if !usable {
                continue;
            }
            let mut row = vec![0.0f64; unknowns];
            row[b_pos(k1 - 1, k2 - 1)] = 1.0;
            for mm in 0..m {
                if z1[mm] == z2[mm] {
                    row[nb + mm] = 1.0;
                }
            }
            rows.push(row);
            ys.push(link.forward(v));
        }
    }
    if rows.len() < unknowns {
        return Err(Error::Model(format!(
            "only {} usable block densities for {unknowns} coefficients",
            rows.len()
        )));
    }

    // normal equations A^T A x = A^T y, solved spectrally with a rank check
    let q = unknowns;
    let mut ata = Array2::<f64>::zeros((q, q));
    let mut aty = vec![0.0f64; q];
    for (row, &y) in rows.iter().zip(&ys) {
        for a in 0..q {
            if row[a] == 0.0 {
                continue;
            }
            aty[a] += row[a] * y;
            for b in 0..q {
                ata[[a, b]] += row[a] * row[b];
            }
        }
    }
    let eig = crate::linalg::sym_eig(&ata.view())?;
    let max_l = eig.values.first().copied().unwrap_or(0.0);
    let min_l = eig.values.last().copied().unwrap_or(0.0);
    if max_l <= 0.0 || min_l <= 1e-10 * max_l {
        return Err(Error::Model(
            "block densities do not identify the coefficients (rank-deficient design)".into(),
        ));
    }
    let mut x = vec![0.0f64; q];
    for j in 0..q {
        let uj = eig.vectors.column(j);
        let proj: f64 = uj.iter().zip(&aty).map(|(u, y)| u * y).sum();
        let scale = proj / eig.values[j];
        for (xi, u) in x.iter_mut().zip(uj) {
            *xi += scale * u;
        }
    }

    let mut residual_sq = 0.0f64;
    for (row, &y) in rows.iter().zip(&ys) {
        let pred: f64 = row.iter().zip(&x).map(|(r, v)| r * v).sum();
        residual_sq += (y - pred) * (y - pred);
    }

    let mut b = Array2::<f64>::zeros((k, k));
    for k1 in 0..k {
        for k2 in k1..k {
            let v = x[b_pos(k1, k2)];
            b[[k1, k2]] = v;
            b[[k2, k1]] = v;
        }
    }
    Ok(CoefficientEstimate {
        b,
        beta: x[nb..].to_vec(),
        residual_norm: residual_sq.sqrt(),
        equations: rows.len(),
    })
}
