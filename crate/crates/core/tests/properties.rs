use epfem::constitutive::{
    elastic_block, evaluate, stress_norm, Block, IntegrationState, MaterialField, Voigt,
};
use epfem::linalg::SparseMatrix;
use epfem::reference_elements::local_basis_volume;
use epfem::ElementType;
use proptest::prelude::*;

fn dense_matvec(d: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    d.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn triplets(max_n: usize) -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64)>)> {
    (1..max_n, 1..max_n).prop_flat_map(|(r, c)| {
        let entry = (0..r, 0..c, -10.0..10.0f64);
        (Just(r), Just(c), prop::collection::vec(entry, 0..3 * (r + c)))
    })
}

fn build(r: usize, c: usize, t: &[(usize, usize, f64)]) -> SparseMatrix {
    let rows: Vec<usize> = t.iter().map(|e| e.0).collect();
    let cols: Vec<usize> = t.iter().map(|e| e.1).collect();
    let vals: Vec<f64> = t.iter().map(|e| e.2).collect();
    SparseMatrix::from_triplets(&rows, &cols, &vals, r, c).unwrap()
}

fn dense_of(r: usize, c: usize, t: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; c]; r];
    for &(i, j, v) in t {
        d[i][j] += v;
    }
    d
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

fn voigt(scale: f64) -> impl Strategy<Value = Voigt> {
    prop::array::uniform6(-scale..scale)
}

fn stress_dev(s: &Voigt) -> Voigt {
    let m = (s[0] + s[1] + s[2]) / 3.0;
    [s[0] - m, s[1] - m, s[2] - m, s[3], s[4], s[5]]
}

fn is_symmetric(b: &Block, tol: f64) -> bool {
    (0..6).all(|i| (0..6).all(|j| (b[j * 6 + i] - b[i * 6 + j]).abs() <= tol))
}

proptest! {
    #[test]
    fn triplet_matrix_matches_dense((r, c, t) in triplets(12), x in prop::collection::vec(-1.0..1.0f64, 12)) {
        let a = build(r, c, &t);
        let d = dense_of(r, c, &t);
        let flat: Vec<f64> = a.to_dense().concat();
        prop_assert!(close(&flat, &d.concat(), 1e-13));
        prop_assert!(close(&a.matvec(&x[..c]), &dense_matvec(&d, &x[..c]), 1e-13));
        prop_assert_eq!(a.transpose().transpose(), a.clone());
        let row_ptr = a.row_ptr();
        for i in 0..r {
            let cols = &a.col_idx()[row_ptr[i]..row_ptr[i + 1]];
            prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn product_matches_dense((r, k, t1) in triplets(9), (_, c, t2) in triplets(9)) {
        let t2: Vec<_> = t2.into_iter().filter(|e| e.0 < k).collect();
        let a = build(r, k, &t1);
        let b = build(k, c, &t2);
        let (da, db) = (dense_of(r, k, &t1), dense_of(k, c, &t2));
        let mut want = vec![0.0; r * c];
        for i in 0..r {
            for l in 0..k {
                for j in 0..c {
                    want[i * c + j] += da[i][l] * db[l][j];
                }
            }
        }
        let got = a.matmul(&b).unwrap().to_dense().concat();
        prop_assert!(close(&got, &want, 1e-12));
    }

    #[test]
    fn partition_of_unity(which in 0usize..8, u in prop::array::uniform3(0.0..1.0f64)) {
        let et = ElementType::all()[which];
        let p = if et.is_simplex() {
            let s: f64 = u[..et.dim].iter().sum();
            u.map(|v| v / s.max(1.0))
        } else {
            u.map(|v| 2.0 * v - 1.0)
        };
        let mut p = p;
        p[et.dim..].iter_mut().for_each(|v| *v = 0.0);
        let basis = local_basis_volume(et, &[p]).unwrap();
        let sum: f64 = (0..basis.n_p).map(|i| basis.value(i, 0)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-13);
        for d in 0..et.dim {
            let g: f64 = (0..basis.n_p).map(|i| basis.grad(d, i, 0)).sum();
            prop_assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn elastic_response_is_linear(e in voigt(1.0), f in voigt(1.0), k in 0.5..5.0f64, g in 0.2..3.0f64) {
        let mat = MaterialField::elastic(3, k, g);
        let sum: Voigt = std::array::from_fn(|i| e[i] + 2.0 * f[i]);
        let st = evaluate(&mat, &[e, f, sum], &IntegrationState::new(&mat)).unwrap();
        let combo: Voigt = std::array::from_fn(|i| st.stress[0][i] + 2.0 * st.stress[1][i]);
        prop_assert!(close(&combo, &st.stress[2], 1e-13));
        prop_assert_eq!(st.tangent[0], elastic_block(k, g));
    }

    #[test]
    fn von_mises_stays_admissible(
        e in voigt(1.0), ep in voigt(0.1), b in voigt(0.3), a in 0.0..2.0f64, y in 0.1..1.0f64,
    ) {
        let mat = MaterialField::von_mises(1, 2.0, 1.0, a, y);
        let mut prev = IntegrationState::new(&mat);
        prev.plastic_strain[0] = ep;
        prev.hardening[0] = stress_dev(&b);
        let st = evaluate(&mat, &[e], &prev).unwrap();
        let xi: Voigt = std::array::from_fn(|i| stress_dev(&st.stress[0])[i] - st.hardening[0][i]);
        prop_assert!(stress_norm(&xi) <= y * (1.0 + 1e-12));
        if st.plastic[0] {
            // Radial return: the shifted deviator keeps the trial direction.
            let d = stress_dev(&std::array::from_fn(|i| if i < 3 { e[i] - ep[i] } else { 0.5 * (e[i] - ep[i]) }));
            let trial: Voigt = std::array::from_fn(|i| 2.0 * d[i] - prev.hardening[0][i]);
            let dot: f64 = (0..6).map(|i| xi[i] * trial[i] * if i < 3 { 1.0 } else { 2.0 }).sum();
            prop_assert!(dot / (stress_norm(&xi) * stress_norm(&trial)) >= 1.0 - 1e-10);
        }
        prop_assert!(is_symmetric(&st.tangent[0], 1e-12));
        // Plastic flow is isochoric and the back-stress stays deviatoric.
        let dep: f64 = (0..3).map(|i| st.plastic_strain[0][i] - ep[i]).sum();
        prop_assert!(dep.abs() < 1e-12);
        prop_assert!((st.hardening[0][0] + st.hardening[0][1] + st.hardening[0][2]).abs() < 1e-12);
    }

    #[test]
    fn drucker_prager_stays_admissible(e in voigt(1.0), ep in voigt(0.1), eta in 0.05..0.6f64, c in 0.1..1.0f64) {
        let mat = MaterialField::drucker_prager(1, 2.0, 1.0, eta, c);
        let mut prev = IntegrationState::new(&mat);
        prev.plastic_strain[0] = ep;
        let st = evaluate(&mat, &[e], &prev).unwrap();
        let s = st.stress[0];
        let psi = stress_norm(&stress_dev(&s)) / std::f64::consts::SQRT_2 + eta * (s[0] + s[1] + s[2]) / 3.0 - c;
        prop_assert!(psi <= 1e-12 * c.max(1.0));
        prop_assert!(is_symmetric(&st.tangent[0], 1e-12));
        prop_assert_eq!(st.plastic[0], st.smooth[0] || st.apex[0]);
        prop_assert!(!(st.smooth[0] && st.apex[0]));
    }
}
