use cwfa::*;
use nalgebra::{DMatrix, DVector};

fn permutations3() -> Vec<[usize; 3]> {
    vec![[0,1,2],[0,2,1],[1,0,2],[1,2,0],[2,0,1],[2,1,0]]
}

fn main() {
    let codes = ConstraintCode::all();
    for seed in 0u64..24 {
        let spec = example2_spec(2000 + seed);
        let (data, _) = sample_dataset(&spec).unwrap();
        let config = FitConfig::default().with_seed(seed);
        let (result, fits) = grid_search(&data, &[2, 3, 4], &[1, 2], &codes, &config).unwrap();
        let best = result.best_entry();
        let is_cuuc = best.code.to_string() == "CUUC" && best.g == 3 && best.q == 2;
        if !is_cuuc {
            println!("seed {seed}: best {} G={} q={} -- not target", best.code, best.g, best.q);
            continue;
        }
        let fit = fits[result.best].as_ref().unwrap();
        let est_mu: Vec<DVector<f64>> = fit.params.components.iter().map(|c| c.mean.clone()).collect();
        let true_mu: Vec<DVector<f64>> = spec.groups.iter().map(|g| DVector::from_vec(g.mean.clone())).collect();
        let perm = permutations3().into_iter().min_by(|a, b| {
            let da: f64 = (0..3).map(|g| (&est_mu[a[g]] - &true_mu[g]).norm()).sum();
            let db: f64 = (0..3).map(|g| (&est_mu[b[g]] - &true_mu[g]).norm()).sum();
            da.partial_cmp(&db).unwrap()
        }).unwrap();
        let mu_err: f64 = (0..3).map(|g| (&est_mu[perm[g]] - &true_mu[g]).amax()).fold(0.0, f64::max);
        let sig_err: f64 = (0..3).map(|g| {
            (fit.params.components[perm[g]].noise_var.sqrt() - spec.groups[g].noise_var.sqrt()).abs()
        }).fold(0.0, f64::max);
        let frob: f64 = (0..3).map(|g| {
            let c = &fit.params.components[perm[g]];
            let est: DMatrix<f64> = c.covariance().unwrap();
            let truth = cwfa::simulate::group_covariance(&spec.groups[g]).unwrap();
            (&est - &truth).norm() / truth.norm()
        }).fold(0.0, f64::max);
        let pass = mu_err <= 1.0 && sig_err <= 0.5 && frob <= 0.35;
        println!("seed {seed}: CUUC G3 q2, mu_err {mu_err:.3} sig_err {sig_err:.3} frob {frob:.3} {}", if pass {"PASS"} else {""});
    }
}
