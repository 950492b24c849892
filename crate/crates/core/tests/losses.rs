mod common;

use common::*;
use rand::Rng;
use reid_core::losses::*;
use reid_core::{ClusterAssignment, FeatureMatrix};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

struct Instance {
    vs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    proxies: Vec<Vec<f64>>,
}

impl Instance {
    fn random(seed: u64) -> Self {
        let mut g = rng(seed);
        let c = g.random_range(2..6);
        let b = g.random_range(c + 2..16);
        let d = g.random_range(3..9);
        let mut labels: Vec<usize> = (0..b).map(|i| i % c).collect();
        labels.rotate_left(g.random_range(0..b));
        Self { vs: unit_rows(b, d, seed + 1), labels, proxies: unit_rows(c, d, seed + 2) }
    }

    fn batch(&self) -> Batch {
        Batch::new(self.vs[0].len(), self.vs.concat(), self.labels.clone()).unwrap()
    }

    fn proxy_set(&self) -> ProxySet {
        ProxySet::new(self.vs[0].len(), self.proxies.concat(), (0..self.proxies.len()).collect()).unwrap()
    }
}

fn hyper(lambda: f64) -> LossHyper {
    LossHyper { lambda, ..LossHyper::default() }
}

#[test]
fn proxy_gradient_matches_finite_differences() {
    let h = hyper(0.5);
    for seed in 0..100 {
        let inst = Instance::random(seed);
        let out = proxy_loss(&inst.batch(), &inst.proxy_set(), &h).unwrap();
        let want = proxy_value(&inst.vs, &inst.labels, &inst.proxies, h.tau);
        assert!((out.value - want).abs() <= 1e-9 * want.abs().max(1.0));
        let num = finite_diff(&inst.vs, H, |x| proxy_value(x, &inst.labels, &inst.proxies, h.tau));
        assert!(max_relative_error(&out.grad, &num) <= TOL, "seed {seed}");
    }
}

#[test]
fn hard_gradient_matches_finite_differences() {
    let h = hyper(0.5);
    let mut checked = 0;
    for seed in 0..300 {
        if checked == 100 {
            break;
        }
        let inst = Instance::random(seed);
        if hard_selection_margin(&inst.vs, &inst.labels) < 1e-3 {
            continue;
        }
        let out = hard_loss(&inst.batch(), &h).unwrap();
        let want = hard_value(&inst.vs, &inst.labels, h.tau);
        assert!((out.value - want).abs() <= 1e-9 * want.abs().max(1.0));
        let num = finite_diff(&inst.vs, H, |x| hard_value(x, &inst.labels, h.tau));
        assert!(max_relative_error(&out.grad, &num) <= TOL, "seed {seed}");
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn final_loss_is_linear_in_lambda() {
    for seed in 0..20 {
        let inst = Instance::random(seed);
        let (b, p) = (inst.batch(), inst.proxy_set());
        let proxy = proxy_loss(&b, &p, &hyper(0.0)).unwrap();
        let hard = hard_loss(&b, &hyper(0.0)).unwrap();
        for lambda in [0.0, 0.5, 2.0] {
            let f = final_loss(&b, &p, &hyper(lambda)).unwrap();
            assert!((f.value - (proxy.value + lambda * hard.value)).abs() < 1e-12);
            for ((g, pg), hg) in f.grad.iter().zip(&proxy.grad).zip(&hard.grad) {
                assert!((g - (pg + lambda * hg)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn lambda_zero_skips_ineligible_hard_term() {
    // one label only: no negatives anywhere
    let inst = Instance { vs: unit_rows(4, 3, 1), labels: vec![0; 4], proxies: unit_rows(2, 3, 2) };
    assert!(hard_loss(&inst.batch(), &hyper(0.5)).is_err());
    let f = final_loss(&inst.batch(), &inst.proxy_set(), &hyper(0.0)).unwrap();
    assert_eq!(f, proxy_loss(&inst.batch(), &inst.proxy_set(), &hyper(0.0)).unwrap());
}

fn to_matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    let f: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
    FeatureMatrix::from_rows(&f).unwrap()
}

fn widen(m: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&v| f64::from(v)).collect()).collect()
}

#[test]
fn barlow_twins_matches_triple_loop() {
    for seed in 0..10 {
        let z1 = gaussian_matrix(32, 8, seed);
        let z2 = gaussian_matrix(32, 8, seed + 50);
        let got = barlow_twins_loss(&z1, &z2, DEFAULT_LAMBDA_BT).unwrap();
        let want = barlow_value(&widen(&z1), &widen(&z2), DEFAULT_LAMBDA_BT);
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
    }
}

#[test]
fn barlow_twins_identical_views_only_pay_redundancy() {
    let z = gaussian_matrix(64, 4, 3);
    assert!(barlow_twins_loss(&z, &z, 0.0).unwrap() < 1e-9);
}

#[test]
fn barlow_twins_invariant_to_shared_column_permutation() {
    let mut g = rng(11);
    for seed in 0..10 {
        let (a, b) = (widen(&gaussian_matrix(32, 8, seed)), widen(&gaussian_matrix(32, 8, seed + 9)));
        let mut perm: Vec<usize> = (0..8).collect();
        for i in (1..8).rev() {
            perm.swap(i, g.random_range(0..=i));
        }
        let permute = |z: &[Vec<f64>]| -> Vec<Vec<f64>> { z.iter().map(|r| perm.iter().map(|&c| r[c]).collect()).collect() };
        let base = barlow_twins_loss(&to_matrix(&a), &to_matrix(&b), DEFAULT_LAMBDA_BT).unwrap();
        let moved = barlow_twins_loss(&to_matrix(&permute(&a)), &to_matrix(&permute(&b)), DEFAULT_LAMBDA_BT).unwrap();
        assert!((base - moved).abs() < 1e-9);
    }
}

#[test]
fn ema_contracts_toward_current() {
    let mut g = rng(4);
    for _ in 0..100 {
        let prev: Vec<f64> = (0..6).map(|_| g.random_range(-5.0..5.0)).collect();
        let cur: Vec<f64> = (0..6).map(|_| g.random_range(-5.0..5.0)).collect();
        let beta = g.random_range(0.0..1.0);
        let out = ema_update(&prev, &cur, beta).unwrap();
        for ((o, p), c) in out.iter().zip(&prev).zip(&cur) {
            assert!((o - c).abs() <= beta * (p - c).abs() + 1e-12);
            assert!((o - (beta * p + (1.0 - beta) * c)).abs() < 1e-12);
        }
    }
    assert_eq!(ema_update(&[1.0], &[3.0], 0.0).unwrap(), vec![3.0]);
    assert_eq!(ema_update(&[1.0], &[3.0], 1.0).unwrap(), vec![1.0]);
}

#[test]
fn pk_batches_cover_clusters_without_noise() {
    let mut labels: Vec<i32> = (0..16 * 15).map(|i| i % 16).collect();
    labels.extend([-1; 20]);
    let a = ClusterAssignment::from_labels(labels).unwrap();
    let pk = PkParams::default();
    let batches = pk_sample_batches(&a, pk, 8).unwrap();
    assert_eq!(batches.len(), pk.repeats);
    for b in &batches {
        assert_eq!(b.len(), 192);
        let mut seen = b.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 192);
        assert!(b.iter().all(|&i| a.labels()[i] >= 0));
        for c in 0..16 {
            assert_eq!(b.iter().filter(|&&i| a.labels()[i] == c).count(), 12);
        }
    }
    assert_eq!(batches, pk_sample_batches(&a, pk, 8).unwrap());
    assert_ne!(batches, pk_sample_batches(&a, pk, 9).unwrap());
}

#[test]
fn pk_small_clusters_sample_with_replacement() {
    let a = ClusterAssignment::from_labels(vec![0, 0, 1, 1, 1, -1]).unwrap();
    let pk = PkParams { clusters_per_batch: 2, samples_per_cluster: 4, repeats: 3 };
    for b in pk_sample_batches(&a, pk, 1).unwrap() {
        assert_eq!(b.len(), 8);
        assert!(b.iter().all(|&i| i < 5));
    }
}
