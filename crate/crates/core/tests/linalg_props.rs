use goldilocks::linalg::{numerical_rank, pseudoinverse, svd, Matrix, DEFAULT_RANK_TOL};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.sub(b).max_abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn penrose_conditions(m in matrix_strategy()) {
        let p = pseudoinverse(&m, DEFAULT_RANK_TOL).unwrap();
        let scale = m.max_abs().max(1.0);
        let mp = m.matmul(&p);
        let pm = p.matmul(&m);
        prop_assert!(close(&mp.matmul(&m), &m, 1e-9 * scale));
        prop_assert!(close(&pm.matmul(&p), &p, 1e-9 * p.max_abs().max(1.0)));
        prop_assert!(close(&mp, &mp.transpose(), 1e-9));
        prop_assert!(close(&pm, &pm.transpose(), 1e-9));
    }

    #[test]
    fn singular_values_match_nalgebra(m in matrix_strategy()) {
        let ours = svd(&m).unwrap().singular_values;
        let mut theirs: Vec<f64> = to_na(&m).singular_values().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(ours.len(), theirs.len());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-10 * theirs[0].max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn pseudoinverse_matches_nalgebra(m in matrix_strategy()) {
        let ours = pseudoinverse(&m, DEFAULT_RANK_TOL).unwrap();
        let theirs = to_na(&m).pseudo_inverse(1e-12 * m.max_abs().max(1e-300)).unwrap();
        let cond = {
            let s = svd(&m).unwrap().singular_values;
            s[0] / s[s.len() - 1].max(1e-300)
        };
        prop_assume!(cond < 1e8);
        for i in 0..ours.rows() {
            for j in 0..ours.cols() {
                let d = (ours.get(i, j) - theirs[(i, j)]).abs();
                prop_assert!(d <= 1e-8 * ours.max_abs().max(1.0));
            }
        }
    }

    #[test]
    fn outer_products_have_rank_one(
        u in prop::collection::vec(0.1f64..3.0, 3),
        v in prop::collection::vec(-3.0f64..-0.1, 3),
    ) {
        let m = Matrix::outer(&u, &v);
        prop_assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOL).unwrap(), 1);
        let na_rank = to_na(&m).rank(1e-12 * m.max_abs());
        prop_assert_eq!(na_rank, 1);
    }
}

#[test]
fn rank_of_products_of_full_rank_factors() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
    let b = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
    assert_eq!(numerical_rank(&a.matmul(&b), DEFAULT_RANK_TOL).unwrap(), 2);
    assert_eq!(numerical_rank(&b.matmul(&a), DEFAULT_RANK_TOL).unwrap(), 2);
}
