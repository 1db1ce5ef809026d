#![allow(dead_code)]

use cbe_core::transport::euclidean;

/// Minimum over all permutations (Heap's algorithm), each total summed in row order.
pub fn brute_force_w1(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let m = a.len();
    let cost: Vec<Vec<f64>> = a.iter().map(|p| b.iter().map(|q| euclidean(p, q)).collect()).collect();
    let mut perm: Vec<usize> = (0..m).collect();
    let total = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let mut best = total(&perm);
    let mut c = vec![0usize; m];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / m as f64
}
