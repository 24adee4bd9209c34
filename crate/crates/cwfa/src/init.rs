//! Starting values: hard partitions from k-means or multinomial sampling,
//! eigen-decomposition starts for the factor structure, and the five-level
//! hierarchical initialization over the sixteen-model lattice.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::aecm::{fit, FitConfig, FitResult};
use crate::constraint::ConstraintCode;
use crate::error::{CwfaError, Result};
use crate::exec;
use crate::model::Dataset;

/// Lloyd's k-means on the per-column standardized joint vector `(x', y)'`,
/// best of `restarts` seeded starts by within-cluster sum of squares. Rows
/// with a known label are overridden to that label afterwards.
pub fn kmeans_partition(data: &Dataset, g: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.n();
    let p = data.p();
    if g < 1 || restarts < 1 {
        return Err(CwfaError::InvalidInput("need g >= 1 and restarts >= 1".into()));
    }
    if n < g {
        return Err(CwfaError::InvalidInput(format!("{g} clusters for {n} rows")));
    }
    let d = p + 1;
    let mut joint = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..p {
            joint[(i, j)] = data.x()[(i, j)];
        }
        joint[(i, p)] = data.y()[i];
    }
    // Column z-scores; constant columns are left centered only.
    for j in 0..d {
        let mean: f64 = (0..n).map(|i| joint[(i, j)]).sum::<f64>() / n as f64;
        let var: f64 = (0..n).map(|i| (joint[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            joint[(i, j)] = (joint[(i, j)] - mean) / scale;
        }
    }

    let distinct = {
        let mut seen = std::collections::HashSet::new();
        for i in 0..n {
            let key: Vec<u64> = (0..d).map(|j| joint[(i, j)].to_bits()).collect();
            seen.insert(key);
        }
        seen.len()
    };
    if distinct < g {
        return Err(CwfaError::InvalidInput(format!(
            "{g} clusters requested but only {distinct} distinct rows"
        )));
    }

    let runs: Vec<(f64, Vec<usize>)> = exec::map((0..restarts as u64).collect(), |r| {
        lloyd_run(&joint, g, ChaCha8Rng::seed_from_u64(seed.wrapping_add(r)))
    });
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, (wa, _)), (j, (wb, _))| wa.partial_cmp(wb).unwrap().then(i.cmp(j)))
        .map(|(_, (_, labels))| labels)
        .unwrap();

    let mut labels = best;
    if let Some(known) = data.labels() {
        for (i, lab) in known.iter().enumerate() {
            if let Some(g_known) = lab {
                labels[i] = *g_known;
            }
        }
    }
    Ok(labels)
}

fn lloyd_run(points: &DMatrix<f64>, g: usize, mut rng: ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = points.nrows();
    let d = points.ncols();
    let mut centers = DMatrix::zeros(g, d);
    let mut chosen: Vec<usize> = (0..n).collect();
    chosen.shuffle(&mut rng);
    for (c, &row) in chosen.iter().take(g).enumerate() {
        for j in 0..d {
            centers[(c, j)] = points[(row, j)];
        }
    }

    let mut labels = vec![0usize; n];
    let mut dist = vec![0.0f64; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..g {
                let mut dd = 0.0;
                for j in 0..d {
                    let v = points[(i, j)] - centers[(c, j)];
                    dd += v * v;
                }
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            dist[i] = best_d;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        // Re-seed empty clusters with the worst-fit point.
        for c in 0..g {
            if !labels.contains(&c) {
                let far = (0..n)
                    .max_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap())
                    .unwrap();
                labels[far] = c;
                dist[far] = 0.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        centers.fill(0.0);
        let mut sizes = vec![0usize; g];
        for i in 0..n {
            sizes[labels[i]] += 1;
            for j in 0..d {
                centers[(labels[i], j)] += points[(i, j)];
            }
        }
        for c in 0..g {
            if sizes[c] > 0 {
                for j in 0..d {
                    centers[(c, j)] /= sizes[c] as f64;
                }
            }
        }
    }

    let mut wcss = 0.0;
    for i in 0..n {
        let c = labels[i];
        for j in 0..d {
            let v = points[(i, j)] - centers[(c, j)];
            wcss += v * v;
        }
    }
    (wcss, labels)
}

/// I.i.d. uniform assignment over `g` groups, resampled until every group is
/// nonempty (up to 100 attempts).
pub fn random_partition(n: usize, g: usize, seed: u64) -> Result<Vec<usize>> {
    if g < 1 || n < g {
        return Err(CwfaError::InvalidInput(format!("{g} groups for {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..g)).collect();
        if (0..g).all(|c| labels.contains(&c)) {
            return Ok(labels);
        }
    }
    Err(CwfaError::InvalidInput(format!(
        "could not draw a partition with all {g} groups nonempty in 100 attempts"
    )))
}

/// Loadings from the top-q eigenpairs of a scatter matrix: column j is
/// `sqrt(d_j)` times the j-th eigenvector (eigenvalues descending, deficient
/// ones floored at zero, sign fixed so the largest-magnitude entry is
/// positive), and uniquenesses are `diag(S - Lambda Lambda')` floored.
pub fn eigen_init(scatter: &DMatrix<f64>, q: usize, min_psi: f64) -> (DMatrix<f64>, DVector<f64>) {
    let p = scatter.nrows();
    let eig = scatter.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut loadings = DMatrix::zeros(p, q);
    for (j, &k) in order.iter().take(q).enumerate() {
        let value = eig.eigenvalues[k].max(0.0);
        let column = eig.eigenvectors.column(k);
        let lead = (0..p)
            .max_by(|&a, &b| column[a].abs().partial_cmp(&column[b].abs()).unwrap())
            .unwrap();
        let sign = if column[lead] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * value.sqrt();
        for i in 0..p {
            loadings[(i, j)] = scale * column[i];
        }
    }
    let uniquenesses = DVector::from_fn(p, |i, _| {
        let mut v = scatter[(i, i)];
        for j in 0..q {
            v -= loadings[(i, j)] * loadings[(i, j)];
        }
        v.max(min_psi)
    });
    (loadings, uniquenesses)
}

/// The sixteen-model lattice: level k holds the codes with k relaxed
/// constraints, and each edge relaxes exactly one constraint of its parent.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub levels: [Vec<ConstraintCode>; 5],
    pub edges: Vec<(ConstraintCode, ConstraintCode)>,
}

impl Lattice {
    pub fn new() -> Self {
        let mut levels: [Vec<ConstraintCode>; 5] = Default::default();
        for code in ConstraintCode::all() {
            levels[code.relaxed_count()].push(code);
        }
        let mut edges = Vec::new();
        for level in &levels {
            for &parent in level {
                for child in parent.relaxations() {
                    edges.push((parent, child));
                }
            }
        }
        Lattice { levels, edges }
    }

    pub fn parents(&self, code: ConstraintCode) -> Vec<ConstraintCode> {
        let mut out: Vec<ConstraintCode> = self
            .edges
            .iter()
            .filter(|(_, child)| *child == code)
            .map(|(parent, _)| *parent)
            .collect();
        out.sort();
        out
    }

    pub fn children(&self, code: ConstraintCode) -> Vec<ConstraintCode> {
        let mut out: Vec<ConstraintCode> = self
            .edges
            .iter()
            .filter(|(parent, _)| *parent == code)
            .map(|(_, child)| *child)
            .collect();
        out.sort();
        out
    }
}

impl Default for Lattice {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-code outcome of a family fit.
pub type FamilyOutcome = BTreeMap<ConstraintCode, std::result::Result<FitResult, CwfaError>>;

/// Fit all sixteen models at fixed (G, q), warm-starting each model from the
/// MAP partition of its best-likelihood converged parent per the lattice
/// (ties toward the lexicographically smaller code). Models whose parents all
/// failed fall back to the base partition; only a failure of the root model
/// aborts the family.
pub fn hierarchical_fit_family(
    data: &Dataset,
    g: usize,
    q: usize,
    base_partition: &[usize],
    config: &FitConfig,
) -> Result<FamilyOutcome> {
    let lattice = Lattice::new();
    let mut outcomes: FamilyOutcome = BTreeMap::new();

    let root = lattice.levels[0][0];
    match fit(data, root, g, q, base_partition, config) {
        Ok(result) => {
            outcomes.insert(root, Ok(result));
        }
        Err(err) => return Err(CwfaError::FamilyInit(format!("root model {root} failed: {err}"))),
    }

    for level in 1..5 {
        let jobs: Vec<(ConstraintCode, Vec<usize>)> = lattice.levels[level]
            .iter()
            .map(|&code| {
                let best_parent = lattice
                    .parents(code)
                    .into_iter()
                    .filter_map(|parent| match outcomes.get(&parent) {
                        Some(Ok(result)) => Some((parent, result)),
                        _ => None,
                    })
                    // max_by prefers later elements on ties, so scanning in
                    // descending code order leaves the smaller code winning.
                    .rev()
                    .max_by(|(_, a), (_, b)| a.final_loglik.partial_cmp(&b.final_loglik).unwrap());
                let start = match best_parent {
                    Some((_, parent_result)) => parent_result.map_labels.clone(),
                    None => base_partition.to_vec(),
                };
                (code, start)
            })
            .collect();
        let results = exec::map(jobs, |(code, start)| {
            (code, fit(data, code, g, q, &start, config))
        });
        for (code, result) in results {
            outcomes.insert(code, result);
        }
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dataset;

    fn two_cloud_data() -> Dataset {
        // Five points near the origin, five near (10, 10); y follows x.
        let coords = [
            (0.0, 0.1),
            (0.2, -0.1),
            (-0.1, 0.0),
            (0.1, 0.2),
            (-0.2, -0.2),
            (10.0, 10.1),
            (10.2, 9.9),
            (9.9, 10.0),
            (10.1, 10.2),
            (9.8, 9.8),
        ];
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { coords[i].0 } else { coords[i].1 });
        let y = DVector::from_fn(10, |i, _| coords[i].0 + coords[i].1);
        Dataset::new(x, y, None).unwrap()
    }

    /// Brute-force optimal 2-partition by within-cluster sum of squares over
    /// all 2^10 assignments of the standardized joint rows.
    fn brute_force_best_partition(data: &Dataset) -> Vec<usize> {
        let n = data.n();
        let d = data.p() + 1;
        let mut joint = DMatrix::zeros(n, d);
        for i in 0..n {
            for j in 0..data.p() {
                joint[(i, j)] = data.x()[(i, j)];
            }
            joint[(i, data.p())] = data.y()[i];
        }
        for j in 0..d {
            let mean: f64 = (0..n).map(|i| joint[(i, j)]).sum::<f64>() / n as f64;
            let var: f64 = (0..n).map(|i| (joint[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64;
            let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..n {
                joint[(i, j)] = (joint[(i, j)] - mean) / scale;
            }
        }
        let mut best = (f64::INFINITY, vec![0usize; n]);
        for mask in 1..(1u32 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut wcss = 0.0;
            for c in 0..2 {
                let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if rows.is_empty() {
                    continue;
                }
                for j in 0..d {
                    let mean: f64 =
                        rows.iter().map(|&i| joint[(i, j)]).sum::<f64>() / rows.len() as f64;
                    wcss += rows.iter().map(|&i| (joint[(i, j)] - mean).powi(2)).sum::<f64>();
                }
            }
            if wcss < best.0 {
                best = (wcss, labels);
            }
        }
        best.1
    }

    fn partitions_agree(a: &[usize], b: &[usize]) -> bool {
        let same = a.iter().zip(b).all(|(x, y)| x == y);
        let flipped = a.iter().zip(b).all(|(x, y)| *x == 1 - *y);
        same || flipped
    }

    #[test]
    fn kmeans_finds_the_optimal_two_cloud_partition() {
        let data = two_cloud_data();
        let labels = kmeans_partition(&data, 2, 5, 123).unwrap();
        let oracle = brute_force_best_partition(&data);
        assert!(partitions_agree(&labels, &oracle));
    }

    #[test]
    fn kmeans_single_cluster_and_determinism() {
        let data = two_cloud_data();
        assert_eq!(kmeans_partition(&data, 1, 3, 9).unwrap(), vec![0; 10]);
        let a = kmeans_partition(&data, 2, 7, 42).unwrap();
        let b = kmeans_partition(&data, 2, 7, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kmeans_rejects_more_clusters_than_distinct_rows() {
        let x = DMatrix::from_element(4, 2, 1.0);
        let y = DVector::from_element(4, 0.0);
        let data = Dataset::new(x, y, None).unwrap();
        assert!(kmeans_partition(&data, 2, 3, 1).is_err());
    }

    #[test]
    fn kmeans_respects_known_labels() {
        let mut data = two_cloud_data();
        data = data
            .with_labels(Some(vec![
                Some(1),
                None,
                None,
                None,
                None,
                Some(0),
                None,
                None,
                None,
                None,
            ]))
            .unwrap();
        let labels = kmeans_partition(&data, 2, 5, 5).unwrap();
        assert_eq!(labels[0], 1);
        assert_eq!(labels[5], 0);
    }

    #[test]
    fn random_partition_basics() {
        assert_eq!(random_partition(7, 1, 3).unwrap(), vec![0; 7]);
        let a = random_partition(50, 3, 11).unwrap();
        let b = random_partition(50, 3, 11).unwrap();
        assert_eq!(a, b);
        for c in 0..3 {
            assert!(a.contains(&c));
        }
    }

    #[test]
    fn random_partition_frequencies_concentrate() {
        // Binomial(1000, 1/4) puts [0.2, 0.3] at ~0.9997 per group; over 100
        // seeds and 4 groups a single excursion is still unlikely but allow
        // a couple to keep the check tail-robust.
        let mut excursions = 0;
        for seed in 0..100 {
            let labels = random_partition(1000, 4, seed).unwrap();
            for c in 0..4 {
                let freq = labels.iter().filter(|&&l| l == c).count() as f64 / 1000.0;
                if !(0.2..=0.3).contains(&freq) {
                    excursions += 1;
                }
            }
        }
        assert!(excursions <= 2, "{excursions} frequency excursions");
    }

    #[test]
    fn eigen_init_identity_spectrum() {
        let s = DMatrix::identity(3, 3);
        let (loadings, psi) = eigen_init(&s, 1, 1e-8);
        // One unit column, up to the documented sign and tie rules.
        assert!((loadings.column(0).norm() - 1.0).abs() < 1e-12);
        let mut entries: Vec<f64> = psi.iter().copied().collect();
        entries.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(entries[0] <= 1e-8 + 1e-15);
        assert!((entries[1] - 1.0).abs() < 1e-12 && (entries[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_init_diagonal_case() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let (loadings, psi) = eigen_init(&s, 1, 1e-8);
        assert!((loadings[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(loadings[(1, 0)].abs() < 1e-12);
        assert!(psi[0] <= 1e-8 + 1e-15);
        assert!((psi[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_init_reconstruction_error_is_the_eigenvalue_tail() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..10 {
            let p = rng.gen_range(3..7);
            let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
            let s = &a * a.transpose();
            let q = 2.min(p);
            let (loadings, psi) = eigen_init(&s, q, 1e-8);
            let approx = &loadings * loadings.transpose() + DMatrix::from_diagonal(&psi);
            let mut eigenvalues: Vec<f64> = s.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            eigenvalues.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let tail: f64 = eigenvalues.iter().skip(q).sum();
            let bound = tail + p as f64 * 1e-8;
            assert!((&s - &approx).norm() <= bound + 1e-9);
            // Diagonal is matched exactly up to the floor slack.
            for i in 0..p {
                assert!((approx[(i, i)] - s[(i, i)]).abs() <= 1e-8 + 1e-12);
            }
        }
    }

    #[test]
    fn lattice_structure_matches_the_hierarchy() {
        let lattice = Lattice::new();
        let sizes: Vec<usize> = lattice.levels.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 4, 6, 4, 1]);
        assert_eq!(lattice.edges.len(), 32);
        for (parent, child) in &lattice.edges {
            let ps = parent.to_string();
            let cs = child.to_string();
            let flips: Vec<usize> = ps
                .chars()
                .zip(cs.chars())
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, (a, b))| {
                    assert_eq!(a, 'C');
                    assert_eq!(b, 'U');
                    i
                })
                .collect();
            assert_eq!(flips.len(), 1, "{ps} -> {cs}");
        }
        for code in ConstraintCode::all() {
            if code.relaxed_count() > 0 {
                assert!(!lattice.parents(code).is_empty(), "{code}");
            }
        }
    }

    #[test]
    fn lattice_named_neighbors() {
        let lattice = Lattice::new();
        let ccuu: ConstraintCode = "CCUU".parse().unwrap();
        let parents: Vec<String> = lattice.parents(ccuu).iter().map(|c| c.to_string()).collect();
        assert_eq!(parents, vec!["CCCU", "CCUC"]);
        let cccc: ConstraintCode = "CCCC".parse().unwrap();
        let children: Vec<String> = lattice.children(cccc).iter().map(|c| c.to_string()).collect();
        assert_eq!(children, vec!["CCCU", "CCUC", "CUCC", "UCCC"]);
    }
}
