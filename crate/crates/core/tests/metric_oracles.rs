use driftlab::datasets::sample_noise;
use driftlab::metrics::{energy_distance, random_directions, sliced_w1, sliced_w1_with};
use driftlab::{SampleBatch, Stream};

fn brute_energy(a: &SampleBatch, b: &SampleBatch) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let (n, m) = (a.rows(), b.rows());
    let mut ab = 0.0;
    for i in 0..n {
        for j in 0..m {
            ab += d(a.row(i), b.row(j));
        }
    }
    let mut aa = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                aa += d(a.row(i), a.row(j));
            }
        }
    }
    let mut bb = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                bb += d(b.row(i), b.row(j));
            }
        }
    }
    2.0 * ab / (n * m) as f64 - aa / (n * (n - 1)) as f64 - bb / (m * (m - 1)) as f64
}

fn shifted_normal(stream: &mut Stream, n: usize, mu: f64) -> SampleBatch {
    sample_noise(1, n, stream).unwrap().translate(&[mu]).unwrap()
}

#[test]
fn energy_matches_brute_force_at_4096() {
    let mut s = Stream::new(4096);
    let a = shifted_normal(&mut s, 4096, 0.0);
    let b = shifted_normal(&mut s, 4096, 1.0);
    let e = energy_distance(&a, &b).unwrap();
    assert!((e - brute_energy(&a, &b)).abs() <= 1e-12);
    assert!(e > 0.0);
    assert!((e - energy_distance(&b, &a).unwrap()).abs() <= 1e-12);
}

fn brute_sliced(a: &SampleBatch, b: &SampleBatch, dirs: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for dir in dirs {
        let proj = |x: &SampleBatch| {
            let mut v: Vec<f64> = (0..x.rows())
                .map(|i| (0..x.dim()).map(|c| x.row(i)[c] * dir[c]).sum())
                .collect();
            v.sort_by(|p, q| p.partial_cmp(q).unwrap());
            v
        };
        let (pa, pb) = (proj(a), proj(b));
        total += (0..pa.len()).map(|i| (pa[i] - pb[i]).abs()).sum::<f64>() / pa.len() as f64;
    }
    total / dirs.len() as f64
}

#[test]
fn sliced_matches_brute_force_and_is_symmetric() {
    let mut s = Stream::new(64);
    let a = sample_noise(2, 500, &mut s).unwrap();
    let b = sample_noise(2, 500, &mut s).unwrap().translate(&[0.7, -0.2]).unwrap();
    let dirs = random_directions(2, 64, &mut Stream::new(1));
    let w = sliced_w1_with(&a, &b, &dirs).unwrap();
    assert!((w - brute_sliced(&a, &b, &dirs)).abs() <= 1e-12);
    assert!((w - sliced_w1_with(&b, &a, &dirs).unwrap()).abs() <= 1e-12);
    assert_eq!(sliced_w1(&a, &a, 64, &mut Stream::new(2)).unwrap(), 0.0);
}

#[test]
fn metrics_grow_with_separation() {
    let mut s = Stream::new(11);
    let base = shifted_normal(&mut s, 4096, 0.0);
    let mut last = (0.0, 0.0);
    for mu in [0.5, 1.0, 2.0] {
        let other = shifted_normal(&mut s, 4096, mu);
        let e = energy_distance(&base, &other).unwrap();
        let w = sliced_w1(&base, &other, 128, &mut Stream::new(5)).unwrap();
        assert!(e > last.0 && w > last.1, "mu={mu}: {e} {w}");
        last = (e, w);
    }
}

#[test]
fn unequal_counts_use_the_common_prefix() {
    let mut s = Stream::new(3);
    let a = sample_noise(2, 40, &mut s).unwrap();
    let b = sample_noise(2, 25, &mut s).unwrap();
    let dirs = random_directions(2, 8, &mut Stream::new(9));
    assert_eq!(
        sliced_w1_with(&a, &b, &dirs).unwrap(),
        sliced_w1_with(&a.head(25), &b, &dirs).unwrap()
    );
}
