//! Sampling node attributes and networks from a model.
//!
//! Edges are drawn block pair by block pair: the number of edges between
//! two subcommunities is Binomial(#pairs, p), and that many distinct pairs
//! are then placed uniformly. This is exactly equivalent to independent
//! Bernoulli draws per pair (exchangeability) but runs in time proportional
//! to the number of edges rather than the number of pairs, which is what
//! makes sparse large-n sampling cheap.

use crate::error::{Error, Result};
use crate::linalg::MatVec;
use crate::model::{build_block_matrix, ModelSpec};
use crate::rng::rng_from_seed;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use std::collections::HashSet;
use std::io::{BufRead, Write};

/// Latent community and observed covariates for each node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeAttributes {
    /// Community label per node, in 1..=K.
    pub communities: Vec<usize>,
    /// n x M covariate matrix; entry (i, m) is in 1..=L_m.
    pub covariates: Vec<Vec<usize>>,
}

impl NodeAttributes {
    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }
}

/// An undirected simple graph with observed covariates and (optionally)
/// the true communities that generated it.
#[derive(Clone, Debug)]
pub struct Network {
    /// Sorted adjacency lists; `neighbors[u]` holds every v with u~v.
    pub neighbors: Vec<Vec<u32>>,
    /// Number of undirected edges.
    pub edge_count: usize,
    /// Observed covariates, one row per node.
    pub covariates: Vec<Vec<usize>>,
    /// Ground-truth communities when the network came from a sampler.
    pub truth: Option<Vec<usize>>,
}

impl Network {
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Mean degree 2E/n.
    pub fn mean_degree(&self) -> f64 {
        if self.neighbors.is_empty() {
            0.0
        } else {
            2.0 * self.edge_count as f64 / self.neighbors.len() as f64
        }
    }

    /// Edges as (u, v) with u < v, in sorted order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (u, nbrs) in self.neighbors.iter().enumerate() {
            for &v in nbrs {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }
}

/// The adjacency matrix as a symmetric operator, so embeddings never
/// densify the graph.
impl MatVec for Network {
    fn dim(&self) -> usize {
        self.neighbors.len()
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (u, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &v in &self.neighbors[u] {
                acc += x[v as usize];
            }
            *o = acc;
        }
    }

    fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::<f64>::zeros((n, n));
        for (u, nbrs) in self.neighbors.iter().enumerate() {
            for &v in nbrs {
                a[[u, v as usize]] = 1.0;
            }
        }
        a
    }
}

/// Draws communities and covariates for n nodes from the model's cell
/// probabilities.
pub fn sample_attributes(spec: &ModelSpec, n: usize, seed: u64) -> Result<NodeAttributes> {
    let idx = spec.index();
    let probs = spec.cell_probabilities();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0f64;
    for &p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = rng_from_seed(seed);
    let mut communities = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        // first cell whose cumulative mass strictly exceeds u; the clamp and
        // walk-back only matter when rounding leaves the final cdf below 1
        let mut cell = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
        while probs[cell] == 0.0 && cell > 0 {
            cell -= 1;
        }
        let (community, z) = idx.unindex(cell + 1)?;
        communities.push(community);
        covariates.push(z);
    }
    Ok(NodeAttributes {
        communities,
        covariates,
    })
}

/// Chooses `count` distinct values from 0..total uniformly; `count` must be
/// at most total/2 for the rejection loop to stay cheap (callers sample the
/// complement otherwise). Returned in draw order.
fn sample_distinct(total: u64, count: u64, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u64> {
    let mut seen = HashSet::with_capacity(count as usize * 2);
    let mut out = Vec::with_capacity(count as usize);
    while (out.len() as u64) < count {
        let x = rng.random_range(0..total);
        if seen.insert(x) {
            out.push(x);
        }
    }
    out
}

/// Maps a flat index in 0..na*(na-1)/2 to an unordered pair (i, j), i < j,
/// enumerated row by row: (0,1), (0,2), ..., (0,na-1), (1,2), ...
fn unrank_within(u: u64, na: u64) -> (u64, u64) {
    // row i starts at offset i*(na-1) - i*(i-1)/2; invert the quadratic and
    // then correct the float rounding exactly
    let row_start = |i: u64| {
        if i == 0 {
            0
        } else {
            i * (na - 1) - i * (i - 1) / 2
        }
    };
    let uf = u as f64;
    let naf = na as f64;
    let disc = (2.0 * naf - 1.0) * (2.0 * naf - 1.0) - 8.0 * uf;
    let mut i = ((2.0 * naf - 1.0 - disc.max(0.0).sqrt()) / 2.0).floor().max(0.0) as u64;
    i = i.min(na.saturating_sub(2));
    loop {
        if u < row_start(i) {
            i -= 1;
            continue;
        }
        if u >= row_start(i + 1) {
            i += 1;
            continue;
        }
        let j = i + 1 + (u - row_start(i));
        return (i, j);
    }
}

/// Samples a network: edges between and within subcommunity groups are
/// binomial in count and uniform in position. Nodes keep their index order.
pub fn sample_network(spec: &ModelSpec, attrs: &NodeAttributes, seed: u64) -> Result<Network> {
    let n = attrs.len();
    if attrs.covariates.len() != n {
        return Err(Error::Dimension(
            "attribute table has mismatched community/covariate lengths".into(),
        ));
    }
    let idx = spec.index();
    let block = build_block_matrix(spec, n)?;
    let total_groups = idx.total();

    // nodes per subcommunity, ascending within each group
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); total_groups];
    for i in 0..n {
        let r = idx.index(attrs.communities[i], &attrs.covariates[i])?;
        groups[r - 1].push(i as u32);
    }

    let mut rng = rng_from_seed(seed);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for a in 0..total_groups {
        for b in a..total_groups {
            let p = block[[a, b]];
            if p <= 0.0 {
                continue;
            }
            let ga = &groups[a];
            let gb = &groups[b];
            let total_pairs: u64 = if a == b {
                let na = ga.len() as u64;
                na * (na - 1) / 2
            } else {
                ga.len() as u64 * gb.len() as u64
            };
            if total_pairs == 0 {
                continue;
            }
            let count = if p >= 1.0 {
                total_pairs
            } else {
                Binomial::new(total_pairs, p)
                    .map_err(|e| Error::Numerical(format!("binomial draw failed: {e}")))?
                    .sample(&mut rng)
            };
            if count == 0 {
                continue;
            }
            // place `count` distinct pairs; when the block is dense, draw the
            // complement instead so rejection stays fast
            let chosen: Vec<u64> = if count <= total_pairs / 2 {
                sample_distinct(total_pairs, count, &mut rng)
            } else {
                let holes: HashSet<u64> =
                    sample_distinct(total_pairs, total_pairs - count, &mut rng)
                        .into_iter()
                        .collect();
                (0..total_pairs).filter(|x| !holes.contains(x)).collect()
            };
            if a == b {
                let na = ga.len() as u64;
                for u in chosen {
                    let (i, j) = unrank_within(u, na);
                    edges.push((ga[i as usize], ga[j as usize]));
                }
            } else {
                let nb = gb.len() as u64;
                for u in chosen {
                    let x = ga[(u / nb) as usize];
                    let y = gb[(u % nb) as usize];
                    edges.push((x.min(y), x.max(y)));
                }
            }
        }
    }

    edges.sort_unstable();
    let edge_count = edges.len();
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, v) in &edges {
        neighbors[u as usize].push(v);
        neighbors[v as usize].push(u);
    }
    for nbrs in neighbors.iter_mut() {
        nbrs.sort_unstable();
    }
    Ok(Network {
        neighbors,
        edge_count,
        covariates: attrs.covariates.clone(),
        truth: Some(attrs.communities.clone()),
    })
}

/// Empirical edge densities between labeled groups: entry (a, b) is the
/// fraction of realized edges among all distinct pairs spanning groups a+1
/// and b+1. `labels[i]` must lie in 1..=num_groups.
pub fn empirical_block_density(
    net: &Network,
    labels: &[usize],
    num_groups: usize,
) -> Result<Array2<f64>> {
    let n = net.n();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {} nodes",
            labels.len(),
            n
        )));
    }
    if num_groups == 0 {
        return Err(Error::Domain("need at least one group".into()));
    }
    let mut sizes = vec![0u64; num_groups];
    for &l in labels {
        if l == 0 || l > num_groups {
            return Err(Error::Domain(format!(
                "label {l} is outside 1..={num_groups}"
            )));
        }
        sizes[l - 1] += 1;
    }
    let mut counts = Array2::<f64>::zeros((num_groups, num_groups));
    for (u, nbrs) in net.neighbors.iter().enumerate() {
        let lu = labels[u] - 1;
        for &v in nbrs {
            if (v as usize) > u {
                let lv = labels[v as usize] - 1;
                counts[[lu, lv]] += 1.0;
                if lu != lv {
                    counts[[lv, lu]] += 1.0;
                }
            }
        }
    }
    let mut out = Array2::<f64>::zeros((num_groups, num_groups));
    for a in 0..num_groups {
        for b in 0..num_groups {
            let pairs = if a == b {
                sizes[a] * sizes[a].saturating_sub(1) / 2
            } else {
                sizes[a] * sizes[b]
            };
            out[[a, b]] = counts[[a, b]] / (pairs.max(1) as f64);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

/// Writes the edge list: one "u v" line per edge, 0-indexed, u < v, sorted.
pub fn write_edge_list<W: Write>(net: &Network, mut w: W) -> Result<()> {
    for (u, v) in net.edges() {
        writeln!(w, "{u} {v}")?;
    }
    Ok(())
}

/// Writes node attributes as TSV with header `node theta z1 ... zM`.
/// Node ids are 0-indexed; community and covariate labels are 1-indexed.
/// When the truth is unknown (a fit result rather than a sample), pass the
/// estimated labels.
pub fn write_attributes<W: Write>(
    communities: &[usize],
    covariates: &[Vec<usize>],
    mut w: W,
) -> Result<()> {
    let m = covariates.first().map_or(0, |z| z.len());
    let mut header = String::from("node\ttheta");
    for i in 1..=m {
        header.push_str(&format!("\tz{i}"));
    }
    writeln!(w, "{header}")?;
    for (i, (theta, z)) in communities.iter().zip(covariates).enumerate() {
        let mut line = format!("{i}\t{theta}");
        for v in z {
            line.push_str(&format!("\t{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads an edge list (`u v` per line, 0-indexed) plus an attribute TSV and
/// assembles a network. The attribute file supplies n, covariates, and the
/// true communities (used for scoring when present).
pub fn read_network<R1: BufRead, R2: BufRead>(edge_reader: R1, attr_reader: R2) -> Result<Network> {
    let (communities, covariates) = read_attributes(attr_reader)?;
    let n = communities.len();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (lineno, line) in edge_reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u32> {
            tok.ok_or_else(|| {
                Error::Parse(format!("edge list line {}: expected 'u v'", lineno + 1))
            })?
            .parse::<u32>()
            .map_err(|e| Error::Parse(format!("edge list line {}: {e}", lineno + 1)))
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::Parse(format!(
                "edge list line {}: expected exactly two fields",
                lineno + 1
            )));
        }
        if u == v {
            return Err(Error::Parse(format!(
                "edge list line {}: self-loop {u}",
                lineno + 1
            )));
        }
        if u as usize >= n || v as usize >= n {
            return Err(Error::Parse(format!(
                "edge list line {}: node id exceeds attribute table ({} nodes)",
                lineno + 1,
                n
            )));
        }
        edges.push((u.min(v), u.max(v)));
    }
    edges.sort_unstable();
    edges.dedup();
    let edge_count = edges.len();
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, v) in &edges {
        neighbors[u as usize].push(v);
        neighbors[v as usize].push(u);
    }
    for nbrs in neighbors.iter_mut() {
        nbrs.sort_unstable();
    }
    Ok(Network {
        neighbors,
        edge_count,
        covariates,
        truth: Some(communities),
    })
}

/// Parses the attribute TSV written by `write_attributes`.
pub fn read_attributes<R: BufRead>(reader: R) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("attribute file is empty".into()))??;
    let cols: Vec<&str> = header.trim().split('\t').collect();
    if cols.len() < 2 || cols[0] != "node" || cols[1] != "theta" {
        return Err(Error::Parse(
            "attribute header must start with 'node\ttheta'".into(),
        ));
    }
    for (m, col) in cols[2..].iter().enumerate() {
        if *col != format!("z{}", m + 1) {
            return Err(Error::Parse(format!(
                "attribute header column {} should be z{}, got '{col}'",
                m + 3,
                m + 1
            )));
        }
    }
    let m = cols.len() - 2;
    let mut communities = Vec::new();
    let mut covariates = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split('\t').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!(
                "attribute line {}: expected {} fields, got {}",
                lineno + 2,
                cols.len(),
                fields.len()
            )));
        }
        let node: usize = fields[0]
            .parse()
            .map_err(|e| Error::Parse(format!("attribute line {}: {e}", lineno + 2)))?;
        if node != communities.len() {
            return Err(Error::Parse(format!(
                "attribute line {}: node ids must be 0,1,2,... in order (got {node})",
                lineno + 2
            )));
        }
        let theta: usize = fields[1]
            .parse()
            .map_err(|e| Error::Parse(format!("attribute line {}: {e}", lineno + 2)))?;
        if theta == 0 {
            return Err(Error::Parse(format!(
                "attribute line {}: community labels are 1-indexed",
                lineno + 2
            )));
        }
        let mut z = Vec::with_capacity(m);
        for f in &fields[2..] {
            let v: usize = f
                .parse()
                .map_err(|e| Error::Parse(format!("attribute line {}: {e}", lineno + 2)))?;
            if v == 0 {
                return Err(Error::Parse(format!(
                    "attribute line {}: covariate levels are 1-indexed",
                    lineno + 2
                )));
            }
            z.push(v);
        }
        communities.push(theta);
        covariates.push(z);
    }
    Ok((communities, covariates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::LinkFunction;
    use crate::model::{CellProbabilities, SparsitySchedule};
    use ndarray::array;

    fn test_spec() -> ModelSpec {
        ModelSpec::new(
            2,
            vec![2],
            array![[0.30, 0.10], [0.10, 0.30]],
            vec![0.1],
            LinkFunction::Identity,
            SparsitySchedule::dense(),
            CellProbabilities::Uniform,
        )
        .unwrap()
    }

    #[test]
    fn attributes_hit_every_cell_roughly_uniformly() {
        let spec = test_spec();
        let attrs = sample_attributes(&spec, 8000, 3).unwrap();
        let idx = spec.index();
        let mut counts = vec![0usize; idx.total()];
        for i in 0..attrs.len() {
            let r = idx.index(attrs.communities[i], &attrs.covariates[i]).unwrap();
            counts[r - 1] += 1;
        }
        // each of the 4 cells expects 2000 +- ~4 sd (sd ~ 39)
        for (cell, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - 2000.0).abs() < 160.0,
                "cell {}: count {c}",
                cell + 1
            );
        }
    }

    #[test]
    fn attribute_sampling_respects_a_table() {
        let spec = ModelSpec::new(
            2,
            vec![],
            array![[0.3, 0.1], [0.1, 0.3]],
            vec![],
            LinkFunction::Identity,
            SparsitySchedule::dense(),
            CellProbabilities::Table(vec![0.9, 0.1]),
        )
        .unwrap();
        let attrs = sample_attributes(&spec, 5000, 11).unwrap();
        let ones = attrs.communities.iter().filter(|&&c| c == 1).count();
        assert!((ones as f64 - 4500.0).abs() < 150.0, "count {ones}");
    }

    #[test]
    fn unrank_within_enumerates_the_triangle() {
        for na in [2u64, 3, 5, 9] {
            let mut expected = Vec::new();
            for i in 0..na {
                for j in (i + 1)..na {
                    expected.push((i, j));
                }
            }
            for (u, &want) in expected.iter().enumerate() {
                assert_eq!(unrank_within(u as u64, na), want, "na={na} u={u}");
            }
        }
    }

    #[test]
    fn network_is_simple_sorted_and_reproducible() {
        let spec = test_spec();
        let attrs = sample_attributes(&spec, 400, 5).unwrap();
        let net1 = sample_network(&spec, &attrs, 17).unwrap();
        let net2 = sample_network(&spec, &attrs, 17).unwrap();
        assert_eq!(net1.edges(), net2.edges());
        for (u, nbrs) in net1.neighbors.iter().enumerate() {
            let mut prev = None;
            for &v in nbrs {
                assert_ne!(v as usize, u, "self-loop at {u}");
                if let Some(p) = prev {
                    assert!(v > p, "unsorted/duplicate neighbor at {u}");
                }
                prev = Some(v);
            }
        }
        let net3 = sample_network(&spec, &attrs, 18).unwrap();
        assert_ne!(net1.edges(), net3.edges());
    }

    #[test]
    fn block_densities_concentrate_near_their_probabilities() {
        // average empirical densities over replicates and compare to the
        // expanded matrix entries
        let spec = test_spec();
        let idx = spec.index();
        let block = build_block_matrix(&spec, 600).unwrap();
        let attrs = sample_attributes(&spec, 600, 41).unwrap();
        let labels: Vec<usize> = (0..attrs.len())
            .map(|i| idx.index(attrs.communities[i], &attrs.covariates[i]).unwrap())
            .collect();
        let reps = 40;
        let mut mean = Array2::<f64>::zeros((idx.total(), idx.total()));
        for rep in 0..reps {
            let net = sample_network(&spec, &attrs, 1000 + rep).unwrap();
            mean += &empirical_block_density(&net, &labels, idx.total()).unwrap();
        }
        mean /= reps as f64;
        for a in 0..idx.total() {
            for b in 0..idx.total() {
                // group sizes ~150: se of a single density ~ sqrt(p/pairs),
                // averaged over 40 reps; 0.01 is > 5 sd everywhere here
                assert!(
                    (mean[[a, b]] - block[[a, b]]).abs() < 0.01,
                    "block ({a},{b}): {} vs {}",
                    mean[[a, b]],
                    block[[a, b]]
                );
            }
        }
    }

    #[test]
    fn dense_blocks_use_the_complement_path() {
        // probability close to 1 exercises complement placement
        let spec = ModelSpec::new(
            1,
            vec![],
            array![[0.95]],
            vec![],
            LinkFunction::Identity,
            SparsitySchedule::dense(),
            CellProbabilities::Uniform,
        )
        .unwrap();
        let attrs = sample_attributes(&spec, 80, 1).unwrap();
        let net = sample_network(&spec, &attrs, 2).unwrap();
        let total_pairs = 80 * 79 / 2;
        let density = net.edge_count as f64 / total_pairs as f64;
        assert!((density - 0.95).abs() < 0.02, "density {density}");
    }

    #[test]
    fn degree_scaling_follows_the_sparsity_schedule() {
        // alpha_n = n^{-0.8}: quadrupling n should multiply the mean degree
        // by about 4^{0.2}
        let spec = ModelSpec::new(
            2,
            vec![2],
            array![[1.5, 0.5], [0.5, 1.5]],
            vec![1.0],
            LinkFunction::Log,
            SparsitySchedule::new(0.8).unwrap(),
            CellProbabilities::Uniform,
        )
        .unwrap();
        let mut degs = Vec::new();
        for &n in &[2000usize, 8000] {
            let mut acc = 0.0;
            for rep in 0..3u64 {
                let attrs = sample_attributes(&spec, n, 100 + rep).unwrap();
                let net = sample_network(&spec, &attrs, 200 + rep).unwrap();
                acc += net.mean_degree();
            }
            degs.push(acc / 3.0);
        }
        let ratio = degs[1] / degs[0];
        let expected = 4.0f64.powf(0.2);
        assert!(
            (ratio / expected - 1.0).abs() < 0.2,
            "degree ratio {ratio} vs {expected}"
        );
    }

    #[test]
    fn file_round_trip_preserves_the_network() {
        let spec = test_spec();
        let attrs = sample_attributes(&spec, 120, 9).unwrap();
        let net = sample_network(&spec, &attrs, 10).unwrap();

        let mut edge_buf = Vec::new();
        write_edge_list(&net, &mut edge_buf).unwrap();
        let mut attr_buf = Vec::new();
        write_attributes(&attrs.communities, &attrs.covariates, &mut attr_buf).unwrap();

        let parsed = read_network(
            std::io::BufReader::new(&edge_buf[..]),
            std::io::BufReader::new(&attr_buf[..]),
        )
        .unwrap();
        assert_eq!(parsed.n(), net.n());
        assert_eq!(parsed.edges(), net.edges());
        assert_eq!(parsed.covariates, net.covariates);
        assert_eq!(parsed.truth.as_deref(), Some(attrs.communities.as_slice()));

        let text = String::from_utf8(attr_buf).unwrap();
        assert!(text.starts_with("node\ttheta\tz1\n"));
    }

    #[test]
    fn malformed_files_are_rejected_with_line_numbers() {
        let attrs = "node\ttheta\tz1\n0\t1\t1\n1\t2\t2\n";
        // self-loop
        let err = read_network(
            std::io::BufReader::new("0 0\n".as_bytes()),
            std::io::BufReader::new(attrs.as_bytes()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 1"));
        // node out of range
        let err = read_network(
            std::io::BufReader::new("0 7\n".as_bytes()),
            std::io::BufReader::new(attrs.as_bytes()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("exceeds"));
        // bad header
        let err = read_attributes(std::io::BufReader::new("id\ttheta\n".as_bytes())).unwrap_err();
        assert!(err.to_string().contains("header"));
        // 0-indexed label
        let err = read_attributes(std::io::BufReader::new(
            "node\ttheta\n0\t0\n".as_bytes(),
        ))
        .unwrap_err();
        assert!(err.to_string().contains("1-indexed"));
    }
}
