#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use whittle_pcl::model::{ArmModel, BeliefVector, ModelParts, ObservationMode};
use whittle_pcl::pcl::ActiveSet;
use whittle_pcl::space::TransitionKernels;

pub const EXAMPLE_P: [[f64; 2]; 2] = [[0.8, 0.2], [0.2, 0.8]];
pub const EXAMPLE_R: [[f64; 2]; 2] = [[0.0, 0.0], [0.0, 1.0]];

pub fn rows<const N: usize>(m: [[f64; N]; N]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

/// The two-state example arm: `P = E`, reward only in state 2 when it is
/// observed correctly.
pub fn example(mode: ObservationMode) -> ArmModel {
    let p = rows(EXAMPLE_P);
    ArmModel::new(ModelParts::from_rows(&p, &p, &rows(EXAMPLE_R), None, mode)).unwrap()
}

pub fn example_origin() -> BeliefVector {
    BeliefVector::new(vec![0.6, 0.4]).unwrap()
}

pub fn stochastic_row(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

pub fn stochastic_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| stochastic_row(rng, cols)).collect()
}

pub fn random_model(rng: &mut impl Rng, m: usize, mode: ObservationMode) -> ArmModel {
    let p = stochastic_matrix(rng, m, m);
    let e = stochastic_matrix(rng, m, m);
    let r: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..m).map(|_| 3.0 * rng.random::<f64>()).collect())
        .collect();
    let rho = (mode == ObservationMode::GeneralFeedback).then(|| {
        let l = rng.random_range(2..=4);
        stochastic_matrix(rng, m, l)
    });
    ArmModel::new(ModelParts::from_rows(&p, &e, &r, rho.as_deref(), mode)).unwrap()
}

pub fn random_belief(rng: &mut impl Rng, m: usize) -> BeliefVector {
    BeliefVector::new(stochastic_row(rng, m)).unwrap()
}

/// Kernels with a random passive successor, a random sparse active row and
/// rewards uniform on `[0, 3)`.
pub fn random_kernels(rng: &mut impl Rng, n: usize, beta: f64) -> TransitionKernels {
    let passive = (0..n).map(|_| rng.random_range(0..n)).collect();
    let active = (0..n)
        .map(|_| {
            let cols: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
            let cols = if cols.is_empty() {
                vec![rng.random_range(0..n)]
            } else {
                cols
            };
            let w = stochastic_row(rng, cols.len());
            cols.into_iter().zip(w).collect()
        })
        .collect();
    let rewards = (0..n).map(|_| 3.0 * rng.random::<f64>()).collect();
    TransitionKernels::new(passive, active, rewards, beta).unwrap()
}

/// Dense `(I - β P) v = rhs` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        a.swap(c, pivot);
        b.swap(c, pivot);
        let (top, rest) = a.split_at_mut(c + 1);
        let pivot_row = &top[c];
        for (r, row) in rest.iter_mut().enumerate() {
            let f = row[c] / pivot_row[c];
            for (x, p) in row[c..].iter_mut().zip(&pivot_row[c..]) {
                *x -= f * p;
            }
            b[c + 1 + r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Values of the policy that is active on `active`, paying `rhs` per step.
pub fn policy_values(k: &TransitionKernels, active: &[bool], rhs: &[f64]) -> Vec<f64> {
    let n = k.len();
    let p1 = k.active_dense();
    let p0 = k.passive_dense();
    let a = (0..n)
        .map(|i| {
            let row = if active[i] { &p1[i] } else { &p0[i] };
            (0..n)
                .map(|j| f64::from(u8::from(i == j)) - k.beta() * row[j])
                .collect()
        })
        .collect();
    gauss_solve(a, rhs.to_vec())
}

/// Discounted active time and reward of a priority policy, estimated from
/// simulated trajectories. Returns `(mean_time, se_time, mean_reward, se_reward)`.
pub fn monte_carlo(
    k: &TransitionKernels,
    policy: &ActiveSet,
    start: usize,
    paths: usize,
    horizon: usize,
    seed: u64,
) -> (f64, f64, f64, f64) {
    let p1 = k.active_dense();
    let sums = (0..paths)
        .into_par_iter()
        .fold(
            || [0.0f64; 4],
            |mut acc, path| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(path as u64);
                let (mut s, mut disc, mut time, mut reward) = (start, 1.0, 0.0, 0.0);
                for _ in 0..horizon {
                    if policy.contains(s) {
                        time += disc;
                        reward += disc * k.rewards()[s];
                        let u: f64 = rng.random();
                        let mut c = 0.0;
                        let mut next = s;
                        for (j, &p) in p1[s].iter().enumerate() {
                            c += p;
                            next = j;
                            if u < c && p > 0.0 {
                                break;
                            }
                        }
                        s = next;
                    } else {
                        s = k.passive_target(s);
                    }
                    disc *= k.beta();
                }
                acc[0] += time;
                acc[1] += time * time;
                acc[2] += reward;
                acc[3] += reward * reward;
                acc
            },
        )
        .reduce(
            || [0.0; 4],
            |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]],
        );
    let n = paths as f64;
    let stat = |s: f64, s2: f64| {
        let mean = s / n;
        (mean, ((s2 / n - mean * mean).max(0.0) / n).sqrt())
    };
    let (t, st) = stat(sums[0], sums[1]);
    let (r, sr) = stat(sums[2], sums[3]);
    (t, st, r, sr)
}
