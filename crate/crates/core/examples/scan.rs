use rand::seq::SliceRandom;
use rayon::prelude::*;
use splitcheck::dataset::{one_hot, NumericMatrix};
use splitcheck::multiplicity::order_statistic_threshold;
use splitcheck::propensity::*;
use splitcheck::simgen::gen_realworld_pair;
use splitcheck::statfun::{child_seed, seeded_rng, streams};

fn stat(g: &splitcheck::dataset::GroupedSample, seed: u64, all_rows: bool,
        l2: f64, max_iter: usize, tol: f64) -> f64 {
    let pooled = g.pooled();
    let x = one_hot(&pooled);
    let labels: Vec<usize> = g.group_of_rows().iter().map(|&v| v as usize).collect();
    let n = labels.len();
    let mut rng = seeded_rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for gi in 0..2 {
        let mut rows: Vec<usize> = (0..n).filter(|&r| labels[r] == gi).collect();
        let t = (rows.len() as f64 * 0.8).ceil() as usize;
        rows.shuffle(&mut rng);
        for (i, &r) in rows.iter().enumerate() {
            if i < t { train.push(r) } else { test.push(r) }
        }
    }
    let eval_idx: Vec<usize> = if all_rows { let mut a = train.clone(); a.extend(&test); a } else { test.clone() };
    let tx = NumericMatrix::new(train.iter().flat_map(|&r| x.row(r).iter().copied()).collect::<Vec<_>>(), x.n_dims()).unwrap();
    let ty: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
    let ex = NumericMatrix::new(eval_idx.iter().flat_map(|&r| x.row(r).iter().copied()).collect::<Vec<_>>(), x.n_dims()).unwrap();
    let ey: Vec<usize> = eval_idx.iter().map(|&r| labels[r]).collect();
    let model = fit_multinomial_logit(&tx, &ty, l2, max_iter, tol).unwrap();
    let pred = predict_labels(&model, &ex).unwrap();
    let mut counts = [0u64; 4];
    for (p, a) in pred.iter().zip(&ey) { counts[p * 2 + a] += 1; }
    match chi_square_from_counts(&counts, 2, 2) {
        Ok((_, _, p)) => p.value(),
        Err(_) => 1.0,
    }
}

fn power(all_rows: bool, l2: f64, max_iter: usize, tol: f64, reps: usize, b: usize) -> f64 {
    let rej: usize = (0..reps).into_par_iter().map(|r| {
        let master = 606u64;
        let g = gen_realworld_pair(800, child_seed(master, streams::GEN, r as u64)).unwrap();
        let seed = child_seed(master, streams::STAT, r as u64);
        let p0 = stat(&g, child_seed(seed, 3, 0), all_rows, l2, max_iter, tol);
        let sizes = g.group_sizes();
        let resampled: Vec<f64> = (1..=b).map(|bi| {
            let mut rng = seeded_rng(child_seed(seed, 1, bi as u64));
            let gp = splitcheck::dataset::pool_and_split(&g, &sizes, &mut rng).unwrap();
            stat(&gp, child_seed(seed, 2, bi as u64), all_rows, l2, max_iter, tol)
        }).collect();
        let t = order_statistic_threshold(&resampled, 0.05);
        usize::from(p0 < t)
    }).sum();
    rej as f64 / reps as f64
}

fn main() {
    let reps = 40; let b = 99;
    println!("all-rows sharp (3000 it, tol 1e-12, l2 1e-4): {:.2}", power(true, 1e-4, 3000, 1e-12, reps, b));
    println!("all-rows ridge 1e-2:                          {:.2}", power(true, 1e-2, 500, 1e-8, reps, b));
    println!("test-only sharp:                              {:.2}", power(false, 1e-4, 3000, 1e-12, reps, b));
    println!("all-rows ridge 1e-6 sharp:                    {:.2}", power(true, 1e-6, 3000, 1e-12, reps, b));
}
