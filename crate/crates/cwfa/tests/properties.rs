use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use cwfa::model::responsibilities_from_log;
use cwfa::{ari, eigen_init, map_labels, ConstraintCode, Responsibilities};

fn log_density_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-700.0..50.0f64, 2..6),
        1..20,
    )
    .prop_filter("ragged", |rows| {
        let w = rows[0].len();
        rows.iter().all(|r| r.len() == w)
    })
}

proptest! {
    #[test]
    fn responsibility_rows_normalize_and_ignore_log_offsets(
        rows in log_density_rows(),
        offset in -500.0..500.0f64,
    ) {
        let n = rows.len();
        let g = rows[0].len();
        let base = DMatrix::from_fn(n, g, |i, j| rows[i][j]);
        let shifted = base.map(|v| v + offset);
        let resp = responsibilities_from_log(&base);
        let resp_shifted = responsibilities_from_log(&shifted);
        for i in 0..n {
            let sum: f64 = (0..g).map(|j| resp.matrix()[(i, j)]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            for j in 0..g {
                let v = resp.matrix()[(i, j)];
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!((v - resp_shifted.matrix()[(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn map_labels_ignores_rowwise_monotone_transforms(rows in log_density_rows()) {
        let n = rows.len();
        let g = rows[0].len();
        let base = DMatrix::from_fn(n, g, |i, j| rows[i][j]);
        let resp = responsibilities_from_log(&base);
        let labels = map_labels(&resp);
        // Strictly increasing transforms of the probabilities.
        for transform in [|v: f64| v.powi(3), |v: f64| (2.0 * v).exp(), |v: f64| v / (1.0 + v)] {
            let mut warped = resp.matrix().map(transform);
            // Rescale rows so the warped matrix is still a valid responsibility row.
            for i in 0..n {
                let sum: f64 = (0..g).map(|j| warped[(i, j)]).sum();
                for j in 0..g {
                    warped[(i, j)] /= sum;
                }
            }
            let warped_labels = map_labels(&Responsibilities::from_matrix(warped).unwrap());
            prop_assert_eq!(&warped_labels, &labels);
        }
    }

    #[test]
    fn ari_is_symmetric_and_label_permutation_invariant(
        a in prop::collection::vec(0usize..4, 2..40),
        b in prop::collection::vec(0usize..4, 2..40),
        perm_seed in 0usize..24,
    ) {
        let n = a.len().min(b.len());
        let a = &a[..n];
        let b = &b[..n];
        let fwd = ari(a, b).unwrap();
        let rev = ari(b, a).unwrap();
        prop_assert!((fwd - rev).abs() < 1e-12);

        // Relabel `a` by a permutation of {0..3}.
        let mut perm = [0usize, 1, 2, 3];
        let (i, j) = (perm_seed % 4, perm_seed / 4 % 4);
        perm.swap(i, j);
        let relabeled: Vec<usize> = a.iter().map(|&v| perm[v]).collect();
        let relab = ari(&relabeled, b).unwrap();
        prop_assert!((fwd - relab).abs() < 1e-12);
    }

    #[test]
    fn eigen_init_matches_the_scatter_diagonal(
        entries in prop::collection::vec(-2.0..2.0f64, 16),
        q in 1usize..4,
    ) {
        let a = DMatrix::from_fn(4, 4, |i, j| entries[4 * i + j]);
        let s = &a * a.transpose();
        let (loadings, psi) = eigen_init(&s, q, 1e-8);
        let approx = &loadings * loadings.transpose() + DMatrix::from_diagonal(&psi);
        for i in 0..4 {
            prop_assert!((approx[(i, i)] - s[(i, i)]).abs() <= 1e-8 + 1e-9);
        }
        prop_assert!(psi.iter().all(|&v| v >= 1e-8));
    }

    #[test]
    fn constraint_codes_round_trip_and_count_relaxations(bits in 0u8..16) {
        let code = ConstraintCode::new(
            bits & 0b1000 == 0,
            bits & 0b0100 == 0,
            bits & 0b0010 == 0,
            bits & 0b0001 == 0,
        );
        let parsed: ConstraintCode = code.to_string().parse().unwrap();
        prop_assert_eq!(parsed, code);
        prop_assert_eq!(code.relaxations().len(), 4 - code.relaxed_count());
    }
}

#[test]
fn responsibilities_reject_bad_rows() {
    let bad = DMatrix::from_row_slice(1, 2, &[0.7, 0.7]);
    assert!(Responsibilities::from_matrix(bad).is_err());
    let negative = DMatrix::from_row_slice(1, 2, &[-0.1, 1.1]);
    assert!(Responsibilities::from_matrix(negative).is_err());
}

#[test]
fn eigen_init_handles_rank_deficient_scatter() {
    // Rank-1 scatter with q = 2: the deficient eigenvalue floors at zero and
    // the uniquenesses at the configured floor.
    let v = DVector::from_vec(vec![1.0, 2.0, 0.5]);
    let s = &v * v.transpose();
    let (loadings, psi) = eigen_init(&s, 2, 1e-8);
    assert!(loadings.column(1).amax() < 1e-7);
    assert!(psi.iter().all(|&x| x >= 1e-8));
}
