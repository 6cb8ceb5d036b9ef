//! Model definition and its flat stochastic block model form.
//!
//! A model has K communities, M categorical covariates (covariate m taking
//! values in 1..=L_m), a symmetric K x K base matrix B, homophily
//! coefficients beta, and a link g. The probability of an edge between
//! nodes i and j is
//!
//!   g^{-1}( B[theta_i, theta_j] + sum_m beta_m * [z_im == z_jm] )
//!
//! optionally damped by a sparsity factor alpha_n. Grouping nodes by the
//! pair (community, covariate configuration) turns this into an ordinary
//! SBM over K * L1 * ... * LM "subcommunities"; this module builds that
//! expanded matrix, the index bijection behind it, and the canonical latent
//! positions of its indefinite factorization.

use crate::error::{Error, Result};
use crate::linalg;
use crate::link::LinkFunction;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Degree damping alpha_n = n^{-exponent}; exponent 0 means dense.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsitySchedule {
    pub exponent: f64,
}

impl SparsitySchedule {
    pub fn dense() -> Self {
        SparsitySchedule { exponent: 0.0 }
    }

    pub fn new(exponent: f64) -> Result<Self> {
        if !exponent.is_finite() || !(0.0..1.0).contains(&exponent) {
            return Err(Error::Domain(format!(
                "sparsity exponent must lie in [0, 1), got {exponent}"
            )));
        }
        Ok(SparsitySchedule { exponent })
    }

    /// alpha_n for a network of n nodes.
    pub fn alpha(&self, n: usize) -> f64 {
        (n as f64).powf(-self.exponent)
    }
}

impl Default for SparsitySchedule {
    fn default() -> Self {
        SparsitySchedule::dense()
    }
}

/// Bijection between (community, covariate configuration) pairs and the
/// flat subcommunity range 1..=K*L1*...*LM. The configuration varies
/// fastest in the last covariate, so for K=2, L=(2,2):
/// (1,(1,1))->1, (1,(1,2))->2, (1,(2,1))->3, (1,(2,2))->4, (2,(1,1))->5, ...
#[derive(Clone, Debug, PartialEq)]
pub struct SubcommunityIndex {
    k: usize,
    levels: Vec<usize>,
    l_tilde: usize,
}

impl SubcommunityIndex {
    pub fn new(k: usize, levels: &[usize]) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("community count must be at least 1".into()));
        }
        if levels.iter().any(|&l| l == 0) {
            return Err(Error::Domain("every covariate needs at least one level".into()));
        }
        let l_tilde = levels.iter().product::<usize>();
        Ok(SubcommunityIndex {
            k,
            levels: levels.to_vec(),
            l_tilde,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Number of covariates M.
    pub fn m(&self) -> usize {
        self.levels.len()
    }

    /// Number of distinct covariate configurations.
    pub fn l_tilde(&self) -> usize {
        self.l_tilde
    }

    /// Total number of subcommunities K * L~.
    pub fn total(&self) -> usize {
        self.k * self.l_tilde
    }

    /// 0-based offset of a covariate configuration within a community block
    /// (the last covariate has stride 1).
    pub fn config_offset(&self, z: &[usize]) -> Result<usize> {
        if z.len() != self.levels.len() {
            return Err(Error::Dimension(format!(
                "expected {} covariate values, got {}",
                self.levels.len(),
                z.len()
            )));
        }
        let mut offset = 0usize;
        for (m, (&zm, &lm)) in z.iter().zip(&self.levels).enumerate() {
            if zm == 0 || zm > lm {
                return Err(Error::Domain(format!(
                    "covariate {} value {zm} is outside 1..={lm}",
                    m + 1
                )));
            }
            offset = offset * lm + (zm - 1);
        }
        Ok(offset)
    }

    /// Subcommunity label in 1..=total for (community, configuration).
    pub fn index(&self, community: usize, z: &[usize]) -> Result<usize> {
        if community == 0 || community > self.k {
            return Err(Error::Domain(format!(
                "community {community} is outside 1..={}",
                self.k
            )));
        }
        Ok(self.l_tilde * (community - 1) + self.config_offset(z)? + 1)
    }

    /// Inverse of `index`.
    pub fn unindex(&self, r: usize) -> Result<(usize, Vec<usize>)> {
        if r == 0 || r > self.total() {
            return Err(Error::Domain(format!(
                "subcommunity {r} is outside 1..={}",
                self.total()
            )));
        }
        let zero = r - 1;
        let community = zero / self.l_tilde + 1;
        let mut rem = zero % self.l_tilde;
        let mut z = vec![0usize; self.levels.len()];
        for m in (0..self.levels.len()).rev() {
            z[m] = rem % self.levels[m] + 1;
            rem /= self.levels[m];
        }
        Ok((community, z))
    }

    /// All covariate configurations in index order (offset 0, 1, ...).
    pub fn configurations(&self) -> Vec<Vec<usize>> {
        (0..self.l_tilde)
            .map(|off| {
                let mut rem = off;
                let mut z = vec![0usize; self.levels.len()];
                for m in (0..self.levels.len()).rev() {
                    z[m] = rem % self.levels[m] + 1;
                    rem /= self.levels[m];
                }
                z
            })
            .collect()
    }
}

/// Block-structured sum: for square A (d1 x d1) and B (d2 x d2),
/// (A boxplus B)[(i*d2+s, j*d2+t)] = A[i,j] + B[s,t]. Equivalently
/// kron(A, ones(d2)) + kron(ones(d1), B).
pub fn boxplus(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    if ra != ca || rb != cb {
        return Err(Error::Dimension(format!(
            "boxplus needs square operands, got {ra}x{ca} and {rb}x{cb}"
        )));
    }
    let mut out = Array2::<f64>::zeros((ra * rb, ra * rb));
    for i in 0..ra {
        for j in 0..ra {
            let aij = a[[i, j]];
            for s in 0..rb {
                for t in 0..rb {
                    out[[i * rb + s, j * rb + t]] = aij + b[[s, t]];
                }
            }
        }
    }
    Ok(out)
}

/// Per-subcommunity probability mass: either uniform over all cells or an
/// explicit table in subcommunity order.
#[derive(Clone, Debug, PartialEq)]
pub enum CellProbabilities {
    Uniform,
    Table(Vec<f64>),
}

/// Full model specification. Construct through `new` (or JSON) so the
/// shape invariants hold; the expanded matrix itself is validated when it
/// is built, because the sparsity factor depends on n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecDoc", into = "ModelSpecDoc")]
pub struct ModelSpec {
    pub k: usize,
    pub levels: Vec<usize>,
    pub b: Array2<f64>,
    pub beta: Vec<f64>,
    pub link: LinkFunction,
    pub sparsity: SparsitySchedule,
    pub pmf: CellProbabilities,
}

impl ModelSpec {
    pub fn new(
        k: usize,
        levels: Vec<usize>,
        b: Array2<f64>,
        beta: Vec<f64>,
        link: LinkFunction,
        sparsity: SparsitySchedule,
        pmf: CellProbabilities,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("community count must be at least 1".into()));
        }
        if b.dim() != (k, k) {
            return Err(Error::Dimension(format!(
                "B must be {k} x {k}, got {} x {}",
                b.nrows(),
                b.ncols()
            )));
        }
        let mut scale = 0.0f64;
        for &v in b.iter() {
            if !v.is_finite() {
                return Err(Error::Domain("B contains a non-finite entry".into()));
            }
            scale = scale.max(v.abs());
        }
        for i in 0..k {
            for j in (i + 1)..k {
                if (b[[i, j]] - b[[j, i]]).abs() > 1e-12 * (1.0 + scale) {
                    return Err(Error::Domain(format!(
                        "B must be symmetric; entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        if levels.iter().any(|&l| l < 2) {
            return Err(Error::Domain(
                "every covariate must have at least two levels".into(),
            ));
        }
        if beta.len() != levels.len() {
            return Err(Error::Dimension(format!(
                "got {} coefficients for {} covariates",
                beta.len(),
                levels.len()
            )));
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("beta contains a non-finite entry".into()));
        }
        SparsitySchedule::new(sparsity.exponent)?;
        let total = k * levels.iter().product::<usize>();
        if let CellProbabilities::Table(t) = &pmf {
            if t.len() != total {
                return Err(Error::Dimension(format!(
                    "pmf table has {} entries but there are {total} subcommunities",
                    t.len()
                )));
            }
            if t.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::Domain("pmf entries must be nonnegative".into()));
            }
            let sum: f64 = t.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("pmf sums to {sum}, expected 1")));
            }
        }
        Ok(ModelSpec {
            k,
            levels,
            b,
            beta,
            link,
            sparsity,
            pmf,
        })
    }

    pub fn index(&self) -> SubcommunityIndex {
        SubcommunityIndex::new(self.k, &self.levels).expect("validated at construction")
    }

    /// Probability of each subcommunity cell, normalized, in index order.
    pub fn cell_probabilities(&self) -> Vec<f64> {
        let total = self.index().total();
        match &self.pmf {
            CellProbabilities::Uniform => vec![1.0 / total as f64; total],
            CellProbabilities::Table(t) => {
                let sum: f64 = t.iter().sum();
                t.iter().map(|p| p / sum).collect()
            }
        }
    }

    /// The expanded matrix on the link scale:
    /// B boxplus beta_1 I_{L_1} boxplus ... boxplus beta_M I_{L_M}.
    pub fn link_scale_matrix(&self) -> Array2<f64> {
        let mut s = self.b.clone();
        for (&beta, &l) in self.beta.iter().zip(&self.levels) {
            let eye = Array2::<f64>::eye(l) * beta;
            s = boxplus(&s.view(), &eye.view()).expect("square by construction");
        }
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ModelSpecDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc: ModelSpecDoc = self.clone().into();
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Wire format for a model document.
#[derive(Serialize, Deserialize)]
struct ModelSpecDoc {
    #[serde(rename = "K")]
    k: usize,
    levels: Vec<usize>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    beta: Vec<f64>,
    link: LinkFunction,
    #[serde(default)]
    alpha_exponent: f64,
    #[serde(default)]
    pmf: PmfDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PmfDoc {
    Name(String),
    Table(Vec<f64>),
}

impl Default for PmfDoc {
    fn default() -> Self {
        PmfDoc::Name("uniform".into())
    }
}

impl TryFrom<ModelSpecDoc> for ModelSpec {
    type Error = Error;
    fn try_from(doc: ModelSpecDoc) -> Result<Self> {
        let k = doc.k;
        let rows = doc.b.len();
        if rows != k || doc.b.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!("B must be {k} x {k}")));
        }
        let mut b = Array2::<f64>::zeros((k.max(1), k.max(1)));
        for (i, row) in doc.b.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                b[[i, j]] = v;
            }
        }
        let pmf = match doc.pmf {
            PmfDoc::Name(name) if name == "uniform" => CellProbabilities::Uniform,
            PmfDoc::Name(other) => {
                return Err(Error::Config(format!(
                    "unknown pmf '{other}' (expected \"uniform\" or a table)"
                )))
            }
            PmfDoc::Table(t) => CellProbabilities::Table(t),
        };
        ModelSpec::new(
            k,
            doc.levels,
            b,
            doc.beta,
            doc.link,
            SparsitySchedule::new(doc.alpha_exponent)?,
            pmf,
        )
    }
}

impl From<ModelSpec> for ModelSpecDoc {
    fn from(spec: ModelSpec) -> Self {
        let b = (0..spec.k)
            .map(|i| (0..spec.k).map(|j| spec.b[[i, j]]).collect())
            .collect();
        let pmf = match &spec.pmf {
            CellProbabilities::Uniform => PmfDoc::Name("uniform".into()),
            CellProbabilities::Table(t) => PmfDoc::Table(t.clone()),
        };
        ModelSpecDoc {
            k: spec.k,
            levels: spec.levels,
            b,
            beta: spec.beta,
            link: spec.link,
            alpha_exponent: spec.sparsity.exponent,
            pmf,
        }
    }
}

/// Expands the model into the edge-probability matrix of its equivalent
/// flat SBM at size n: entry (r1-1, r2-1) is the probability of an edge
/// between nodes in subcommunities r1 and r2. Errors if any probability
/// leaves [0,1] (beyond a 1e-12 slack, which is clamped).
pub fn build_block_matrix(spec: &ModelSpec, n: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::Domain("network size must be at least 1".into()));
    }
    let idx = spec.index();
    let s = spec.link_scale_matrix();
    let alpha = spec.sparsity.alpha(n);
    let total = idx.total();
    let mut out = Array2::<f64>::zeros((total, total));
    for r1 in 0..total {
        for r2 in 0..total {
            let p = alpha * spec.link.inverse(s[[r1, r2]]);
            if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                let (k1, z1) = idx.unindex(r1 + 1)?;
                let (k2, z2) = idx.unindex(r2 + 1)?;
                return Err(Error::Model(format!(
                    "edge probability {p} for subcommunities {} and {} \
                     (community {k1} config {z1:?} x community {k2} config {z2:?}) is outside [0,1]",
                    r1 + 1,
                    r2 + 1
                )));
            }
            out[[r1, r2]] = p.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Canonical latent positions of a symmetric block probability matrix:
/// rows of X = U |Lambda|^{1/2} over the eigenpairs above the rank
/// tolerance, together with the signature (p, q) of the retained spectrum.
/// X satisfies X I_{pq} X^T = B for the diagonal sign matrix I_{pq}.
pub struct CanonicalPositions {
    /// R x d matrix, d = numerical rank; row r-1 is the position of
    /// subcommunity r.
    pub coords: Array2<f64>,
    /// Retained signed eigenvalues, by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    /// (positive, negative) counts; p + q = d.
    pub signature: (usize, usize),
}

impl CanonicalPositions {
    /// X I_{pq} X^T, which reconstructs the matrix the positions were
    /// computed from.
    pub fn gram(&self) -> Array2<f64> {
        let (n, d) = self.coords.dim();
        let mut out = Array2::<f64>::zeros((n, n));
        for j in 0..d {
            let s = if self.eigenvalues[j] >= 0.0 { 1.0 } else { -1.0 };
            for r in 0..n {
                let xr = self.coords[[r, j]];
                if xr == 0.0 {
                    continue;
                }
                for c in 0..n {
                    out[[r, c]] += s * xr * self.coords[[c, j]];
                }
            }
        }
        out
    }

    /// Squared Euclidean distance between the positions of rows r1 and r2
    /// (both 0-based).
    pub fn row_distance_sq(&self, r1: usize, r2: usize) -> f64 {
        let d = self.coords.ncols();
        (0..d)
            .map(|j| {
                let diff = self.coords[[r1, j]] - self.coords[[r2, j]];
                diff * diff
            })
            .sum()
    }
}

/// Spectral factorization of a symmetric matrix into canonical positions.
pub fn canonical_positions(block_matrix: &ArrayView2<f64>) -> Result<CanonicalPositions> {
    let eig = linalg::sym_eig(block_matrix)?;
    let n = eig.values.len();
    let max_abs = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = linalg::EIG_ZERO_REL_TOL * max_abs;
    let mut order: Vec<usize> = (0..n).filter(|&i| eig.values[i].abs() > tol).collect();
    order.sort_by(|&i, &j| {
        eig.values[j]
            .abs()
            .partial_cmp(&eig.values[i].abs())
            .unwrap()
            .then(eig.values[j].partial_cmp(&eig.values[i]).unwrap())
            .then(i.cmp(&j))
    });
    let d = order.len();
    let mut coords = Array2::<f64>::zeros((n, d));
    let mut eigenvalues = Vec::with_capacity(d);
    for (c, &i) in order.iter().enumerate() {
        let w = eig.values[i].abs().sqrt();
        eigenvalues.push(eig.values[i]);
        for r in 0..n {
            coords[[r, c]] = eig.vectors[[r, i]] * w;
        }
    }
    let signature = linalg::spectrum_signature(&eigenvalues);
    Ok(CanonicalPositions {
        coords,
        eigenvalues,
        signature,
    })
}

/// Structured report from checking a model at a given network size.
#[derive(Debug, Default)]
pub struct ValidationReport {
    /// Expanded probabilities that leave [0,1]: (r1, r2, value), 1-based.
    pub out_of_range: Vec<(usize, usize, f64)>,
    /// For the log link: (numerical rank of elementwise exp(B), K). The
    /// recovery theory wants full rank.
    pub exp_b_rank: Option<(usize, usize)>,
    /// Subcommunities whose probability mass is zero.
    pub zero_cells: Vec<usize>,
    /// Human-readable findings, one per issue.
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Checks a model at size n without failing: collects range violations of
/// the expanded matrix, the rank condition for the log link, and degenerate
/// pmf cells.
pub fn validate_model(spec: &ModelSpec, n: usize) -> Result<ValidationReport> {
    if n == 0 {
        return Err(Error::Domain("network size must be at least 1".into()));
    }
    let mut report = ValidationReport::default();
    let idx = spec.index();
    let s = spec.link_scale_matrix();
    let alpha = spec.sparsity.alpha(n);
    for r1 in 0..idx.total() {
        for r2 in r1..idx.total() {
            let p = alpha * spec.link.inverse(s[[r1, r2]]);
            if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                report.out_of_range.push((r1 + 1, r2 + 1, p));
            }
        }
    }
    if !report.out_of_range.is_empty() {
        let (r1, r2, p) = report.out_of_range[0];
        report.messages.push(format!(
            "{} expanded edge probabilities leave [0,1] at n={n} (first: subcommunities {r1},{r2} -> {p})",
            report.out_of_range.len()
        ));
    }
    if spec.link == LinkFunction::Log {
        let expb = spec.b.mapv(f64::exp);
        let eig = linalg::sym_eig(&expb.view())?;
        let max_abs = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = linalg::EIG_ZERO_REL_TOL * max_abs;
        let rank = eig.values.iter().filter(|v| v.abs() > tol).count();
        report.exp_b_rank = Some((rank, spec.k));
        if rank < spec.k {
            report.messages.push(format!(
                "elementwise exp(B) has rank {rank} < K={}; community matching across \
                 covariate configurations is not identified",
                spec.k
            ));
        }
    }
    let probs = spec.cell_probabilities();
    for (cell, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            report.zero_cells.push(cell + 1);
        }
    }
    if !report.zero_cells.is_empty() {
        report.messages.push(format!(
            "{} subcommunities have zero probability mass and will never be observed",
            report.zero_cells.len()
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn simple_spec(link: LinkFunction) -> ModelSpec {
        let b = match link {
            LinkFunction::Identity => array![
                [0.30, 0.20, 0.20],
                [0.20, 0.30, 0.20],
                [0.20, 0.20, 0.30]
            ],
            _ => array![
                [-1.5, -2.0, -2.0],
                [-2.0, -1.5, -2.0],
                [-2.0, -2.0, -1.5]
            ],
        };
        let beta = match link {
            LinkFunction::Identity => vec![0.05, -0.05],
            _ => vec![-0.7, 0.1],
        };
        ModelSpec::new(
            3,
            vec![2, 2],
            b,
            beta,
            link,
            SparsitySchedule::dense(),
            CellProbabilities::Uniform,
        )
        .unwrap()
    }

    #[test]
    fn index_layout_matches_the_documented_order() {
        let idx = SubcommunityIndex::new(2, &[2, 2]).unwrap();
        assert_eq!(idx.index(1, &[1, 1]).unwrap(), 1);
        assert_eq!(idx.index(1, &[1, 2]).unwrap(), 2);
        assert_eq!(idx.index(1, &[2, 1]).unwrap(), 3);
        assert_eq!(idx.index(1, &[2, 2]).unwrap(), 4);
        assert_eq!(idx.index(2, &[1, 1]).unwrap(), 5);
        assert_eq!(idx.index(2, &[2, 2]).unwrap(), 8);
        assert_eq!(idx.unindex(3).unwrap(), (1, vec![2, 1]));
        assert_eq!(idx.unindex(8).unwrap(), (2, vec![2, 2]));
    }

    #[test]
    fn index_rejects_out_of_range_input() {
        let idx = SubcommunityIndex::new(2, &[3]).unwrap();
        assert!(idx.index(0, &[1]).is_err());
        assert!(idx.index(3, &[1]).is_err());
        assert!(idx.index(1, &[4]).is_err());
        assert!(idx.index(1, &[1, 1]).is_err());
        assert!(idx.unindex(0).is_err());
        assert!(idx.unindex(7).is_err());
    }

    proptest! {
        #[test]
        fn index_is_a_bijection(k in 1usize..5, levels in proptest::collection::vec(1usize..5, 0..4)) {
            let idx = SubcommunityIndex::new(k, &levels).unwrap();
            let mut seen = vec![false; idx.total()];
            for community in 1..=k {
                for z in idx.configurations() {
                    let r = idx.index(community, &z).unwrap();
                    prop_assert!(r >= 1 && r <= idx.total());
                    prop_assert!(!seen[r - 1], "index {r} hit twice");
                    seen[r - 1] = true;
                    let (c2, z2) = idx.unindex(r).unwrap();
                    prop_assert_eq!(c2, community);
                    prop_assert_eq!(z2, z);
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }

        #[test]
        fn boxplus_is_entrywise_addition(d1 in 1usize..4, d2 in 1usize..4, seed in 0u64..500) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from_seed(seed);
            let a = Array2::from_shape_fn((d1, d1), |_| rng.random_range(-2.0..2.0));
            let b = Array2::from_shape_fn((d2, d2), |_| rng.random_range(-2.0..2.0));
            let c = boxplus(&a.view(), &b.view()).unwrap();
            for i in 0..d1 {
                for j in 0..d1 {
                    for s in 0..d2 {
                        for t in 0..d2 {
                            prop_assert_eq!(c[[i * d2 + s, j * d2 + t]], a[[i, j]] + b[[s, t]]);
                        }
                    }
                }
            }
            // cross-check against the Kronecker identity
            let ones1 = Array2::<f64>::ones((d2, d2));
            let ones2 = Array2::<f64>::ones((d1, d1));
            let via_kron = crate::linalg::kron(&a.view(), &ones1.view())
                + crate::linalg::kron(&ones2.view(), &b.view());
            for (x, y) in c.iter().zip(via_kron.iter()) {
                prop_assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn expanded_matrix_agrees_with_per_pair_probabilities() {
        for link in [
            LinkFunction::Identity,
            LinkFunction::Log,
            LinkFunction::Logit,
            LinkFunction::Probit,
        ] {
            let spec = simple_spec(link);
            let idx = spec.index();
            let bm = build_block_matrix(&spec, 1000).unwrap();
            for k1 in 1..=3usize {
                for k2 in 1..=3usize {
                    for z1 in idx.configurations() {
                        for z2 in idx.configurations() {
                            let mut eta = spec.b[[k1 - 1, k2 - 1]];
                            for m in 0..2 {
                                if z1[m] == z2[m] {
                                    eta += spec.beta[m];
                                }
                            }
                            let direct = spec.link.inverse(eta);
                            let r1 = idx.index(k1, &z1).unwrap();
                            let r2 = idx.index(k2, &z2).unwrap();
                            let got = bm[[r1 - 1, r2 - 1]];
                            assert!(
                                (got - direct).abs() <= 1e-12,
                                "{}: ({k1},{z1:?})x({k2},{z2:?}): {got} vs {direct}",
                                link.name()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sparsity_scales_probabilities_multiplicatively() {
        let mut spec = simple_spec(LinkFunction::Log);
        spec.sparsity = SparsitySchedule::new(0.8).unwrap();
        let dense = build_block_matrix(&simple_spec(LinkFunction::Log), 4000).unwrap();
        let damped = build_block_matrix(&spec, 4000).unwrap();
        let alpha = 4000f64.powf(-0.8);
        for (x, y) in damped.iter().zip(dense.iter()) {
            assert!((x - alpha * y).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_probability_names_the_offending_pair() {
        // identity link with a negative off-diagonal probability
        let b = array![[0.2, -0.1], [-0.1, 0.2]];
        let spec = ModelSpec::new(
            2,
            vec![],
            b,
            vec![],
            LinkFunction::Identity,
            SparsitySchedule::dense(),
            CellProbabilities::Uniform,
        )
        .unwrap();
        let err = build_block_matrix(&spec, 100).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("outside [0,1]"), "message: {msg}");
        assert!(msg.contains("subcommunities"), "message: {msg}");
    }

    #[test]
    fn canonical_positions_reconstruct_the_matrix() {
        for link in [LinkFunction::Identity, LinkFunction::Logit] {
            let spec = simple_spec(link);
            let bm = build_block_matrix(&spec, 500).unwrap();
            let pos = canonical_positions(&bm.view()).unwrap();
            let gram = pos.gram();
            for (x, y) in gram.iter().zip(bm.iter()) {
                assert!((x - y).abs() < 1e-10, "{}: {x} vs {y}", link.name());
            }
            let (p, q) = pos.signature;
            assert_eq!(p + q, pos.coords.ncols());
        }
    }

    #[test]
    fn validation_flags_rank_deficient_log_models() {
        // constant B: exp(B) is a rank-one matrix
        let b = Array2::<f64>::from_elem((2, 2), -1.0);
        let spec = ModelSpec::new(
            2,
            vec![2],
            b,
            vec![-0.5],
            LinkFunction::Log,
            SparsitySchedule::dense(),
            CellProbabilities::Uniform,
        )
        .unwrap();
        let report = validate_model(&spec, 1000).unwrap();
        assert_eq!(report.exp_b_rank, Some((1, 2)));
        assert!(!report.is_clean());
    }

    #[test]
    fn validation_flags_out_of_range_cells_without_failing() {
        let b = array![[0.9, 0.9], [0.9, 0.9]];
        let spec = ModelSpec::new(
            2,
            vec![2],
            b,
            vec![0.3],
            LinkFunction::Identity,
            SparsitySchedule::dense(),
            CellProbabilities::Uniform,
        )
        .unwrap();
        let report = validate_model(&spec, 50).unwrap();
        assert!(!report.out_of_range.is_empty());
        // matching-diagonal cells sit at 1.2
        assert!(report.out_of_range.iter().any(|&(_, _, p)| p > 1.1));
    }

    #[test]
    fn json_round_trip_preserves_the_model() {
        let text = r#"{
            "K": 3,
            "levels": [2, 2],
            "B": [[-1.0, -1.5, -1.5], [-1.5, -1.0, -1.5], [-1.5, -1.5, -1.0]],
            "beta": [-0.7, 0.1],
            "link": "logit",
            "alpha_exponent": 0.0,
            "pmf": "uniform"
        }"#;
        let spec = ModelSpec::from_json_str(text).unwrap();
        assert_eq!(spec.k, 3);
        assert_eq!(spec.levels, vec![2, 2]);
        assert_eq!(spec.link, LinkFunction::Logit);
        let round = ModelSpec::from_json_str(&spec.to_json_string().unwrap()).unwrap();
        assert_eq!(round, spec);
    }

    #[test]
    fn json_rejects_malformed_documents() {
        // non-square B
        let text = r#"{"K": 2, "levels": [], "B": [[0.2]], "beta": [], "link": "identity"}"#;
        assert!(ModelSpec::from_json_str(text).is_err());
        // wrong beta arity
        let text = r#"{"K": 1, "levels": [2], "B": [[0.2]], "beta": [], "link": "identity"}"#;
        assert!(ModelSpec::from_json_str(text).is_err());
        // bad link name
        let text = r#"{"K": 1, "levels": [], "B": [[0.2]], "beta": [], "link": "cubic"}"#;
        assert!(ModelSpec::from_json_str(text).is_err());
        // pmf table with the wrong length
        let text = r#"{"K": 1, "levels": [], "B": [[0.2]], "beta": [], "link": "identity", "pmf": [0.5, 0.5]}"#;
        assert!(ModelSpec::from_json_str(text).is_err());
    }

    #[test]
    fn pmf_table_is_normalized_on_use() {
        let spec = ModelSpec::new(
            2,
            vec![],
            array![[0.3, 0.1], [0.1, 0.3]],
            vec![],
            LinkFunction::Identity,
            SparsitySchedule::dense(),
            CellProbabilities::Table(vec![0.75, 0.25]),
        )
        .unwrap();
        let p = spec.cell_probabilities();
        assert!((p[0] - 0.75).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
