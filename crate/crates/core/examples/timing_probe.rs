use std::time::Instant;
use fsir::rkhs::{gram_matrix, KernelSpec};
use fsir::simgen::{bm_eigenvalue, derive_seed, gen_example1, rng_from_seed, standard_normals};
use fsir::sir::{make_slices, slice_stats, SliceStrategy, Dataset};
use fsir::spectral::SymMatrix;
use nalgebra::DMatrix;

fn main() {
    // Criterion 3: lambda_j(R_J)/J vs 4/((2j-1)^2 pi^2) at J=500.
    let t = Instant::now();
    let grid: Vec<f64> = (1..=500).map(|v| v as f64 / 500.0).collect();
    let gram = gram_matrix(&KernelSpec::Brownian, &grid).unwrap();
    let d = gram.eigendecomp().unwrap();
    for j in 1..=3usize {
        let scaled = d.eigenvalues()[j - 1] / 500.0;
        let theory = bm_eigenvalue(j);
        println!(
            "j={j}: lambda/J = {scaled:.6} theory = {theory:.6} rel err = {:.5}",
            (scaled - theory).abs() / theory
        );
    }
    println!("eigendecomp 500x500 took {:?}", t.elapsed());

    // Criterion 6: Example 1 on J=10, K_hat from 1e5 Monte Carlo samples,
    // min-eig(R_J - K_hat) vs MC SE from batches.
    let t = Instant::now();
    let grid10: Vec<f64> = (1..=10).map(|v| v as f64 / 10.0).collect();
    let r_exact = gram_matrix(&KernelSpec::Brownian, &grid10).unwrap();
    let n = 100_000usize;
    let out = gen_example1(n, 10, 0.3, 99).unwrap();
    let slices = make_slices(out.dataset.y(), 10, &SliceStrategy::EqualFrequency).unwrap();
    // NOT centering: X is zero-mean by construction; slice means of raw X
    let stats = slice_stats(&out.dataset, &slices).unwrap();
    let khat = stats.moment_matrix().unwrap();
    let diff = SymMatrix::new(r_exact.matrix() - khat.matrix()).unwrap();
    let min_eig = diff.eigendecomp().unwrap().eigenvalues()[9];
    // batch SE
    let b = 10;
    let mut batch_mins = Vec::new();
    for bi in 0..b {
        let lo = bi * n / b;
        let hi = (bi + 1) * n / b;
        let rows: Vec<usize> = (lo..hi).collect();
        let db = out.dataset.select_rows(&rows).unwrap();
        let sl = make_slices(db.y(), 10, &SliceStrategy::EqualFrequency).unwrap();
        let st = slice_stats(&db, &sl).unwrap();
        let kb = st.moment_matrix().unwrap();
        let diffb = SymMatrix::new(r_exact.matrix() - kb.matrix()).unwrap();
        batch_mins.push(diffb.eigendecomp().unwrap().eigenvalues()[9]);
    }
    let mean = batch_mins.iter().sum::<f64>() / b as f64;
    let var = batch_mins.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b as f64 - 1.0);
    let se = (var / b as f64).sqrt();
    println!("min-eig(R - K_hat) = {min_eig:.3e}, batch SE = {se:.3e}, -3SE = {:.3e}, time {:?}", -3.0*se, t.elapsed());
    let _ = (derive_seed(0,0), rng_from_seed(0), standard_normals(&mut rng_from_seed(0), 1), DMatrix::<f64>::zeros(1,1), Dataset::new(vec![0.0], DMatrix::zeros(2,1), vec![0.0,1.0]));
}
