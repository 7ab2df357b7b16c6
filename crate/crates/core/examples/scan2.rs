use rayon::prelude::*;
use splitcheck::dataset::GroupedSample;
use splitcheck::multiplicity::order_statistic_threshold;
use splitcheck::propensity::chi_square_from_counts;
use splitcheck::simgen::gen_realworld_pair;
use splitcheck::statfun::{child_seed, seeded_rng, streams};
use rand::Rng;
use rand::seq::SliceRandom;
use std::collections::BTreeMap;

fn draw_pvalue(g: &GroupedSample, cols: &[usize], perm: Option<&[usize]>) -> f64 {
    let pooled = g.pooled();
    let template = g.group_of_rows();
    let n = pooled.n_rows();
    let group_of: Vec<u16> = match perm {
        None => template.clone(),
        Some(p) => {
            let mut a = vec![0u16; n];
            for (pos, &row) in p.iter().enumerate() { a[row] = template[pos]; }
            a
        }
    };
    let mut map: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
    let tuples: Vec<Vec<u32>> = (0..n).map(|r| cols.iter().map(|&c| pooled.code(r, c)).collect()).collect();
    for t in &tuples { let l = map.len(); map.entry(t.clone()).or_insert(l); }
    let l = map.len();
    let mut counts = vec![0u64; 2 * l];
    for (r, t) in tuples.iter().enumerate() {
        counts[group_of[r] as usize * l + map[t]] += 1;
    }
    match chi_square_from_counts(&counts, 2, l) {
        Ok((_, _, p)) => p.value(),
        Err(_) => 1.0,
    }
}

fn power(variable_size: bool, c: usize, reps: usize, b: usize) -> f64 {
    let rej: usize = (0..reps).into_par_iter().map(|r| {
        let master = 606u64;
        let g = gen_realworld_pair(800, child_seed(master, streams::GEN, r as u64)).unwrap();
        let seed = child_seed(master, streams::STAT, r as u64);
        let m = 8;
        let mut rng = seeded_rng(child_seed(seed, streams::DRAW, 0));
        let draws: Vec<Vec<usize>> = (0..10).map(|_| {
            let size = if variable_size { rng.gen_range(1..=c) } else { c };
            let mut cols = rand::seq::index::sample(&mut rng, m, size).into_vec();
            cols.sort_unstable();
            cols
        }).collect();
        let p0: Vec<f64> = draws.iter().map(|cols| draw_pvalue(&g, cols, None)).collect();
        let n = g.n_total();
        let minima: Vec<f64> = (1..=b).map(|bi| {
            let mut prng = seeded_rng(child_seed(seed, streams::PERMUTE, bi as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut prng);
            draws.iter().map(|cols| draw_pvalue(&g, cols, Some(&perm))).fold(f64::INFINITY, f64::min)
        }).collect();
        let t = order_statistic_threshold(&minima, 0.05);
        usize::from(p0.iter().any(|&p| p < t))
    }).sum();
    rej as f64 / reps as f64
}

fn main() {
    println!("fixed size 3:    {:.2}", power(false, 3, 50, 99));
    println!("variable 1..=3:  {:.2}", power(true, 3, 50, 99));
    println!("fixed size 2:    {:.2}", power(false, 2, 50, 99));
    println!("fixed size 1:    {:.2}", power(false, 1, 50, 99));
}
