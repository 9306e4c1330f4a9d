//! Finite-difference oracle for the training loss.

use hdreason::kg::KnowledgeGraph;
use hdreason::matrix::Matrix;
use hdreason::model::{backward, loss_and_delta, multi_hot_targets, score_batch, ModelState, QueryBatch};
use rand::Rng;

use super::{fresh_state, random_graph, rng};

pub struct Case {
    pub kg: KnowledgeGraph,
    pub state: ModelState,
    pub q: QueryBatch,
    pub y: Matrix,
}

pub fn case(seed: u64) -> Case {
    let (nv, nr, b) = (20, 3, 4);
    let kg = random_graph(seed, nv, nr, 60);
    let mut state = fresh_state(&kg, 8, 32, seed, 0.5);
    let mut r = rng(seed + 100);
    let subjects: Vec<u32> = (0..b).map(|_| r.random_range(0..nv as u32)).collect();
    let relations: Vec<u32> = (0..b).map(|_| r.random_range(0..nr as u32)).collect();
    let positives: Vec<Vec<u32>> = (0..b)
        .map(|_| (0..r.random_range(1..3)).map(|_| r.random_range(0..nv as u32)).collect())
        .collect();
    let pos: Vec<&[u32]> = positives.iter().map(Vec::as_slice).collect();
    let y = multi_hot_targets(&pos, nv, 0.1).unwrap();
    let q = QueryBatch::new(subjects, relations);
    // centre the logits so the sigmoid is away from saturation
    let s = score_batch(&q, &state).unwrap();
    let mean = s.raw_norms.as_slice().iter().sum::<f64>() / s.raw_norms.as_slice().len() as f64;
    state.bias = -mean;
    Case { kg, state, q, y }
}

pub fn loss(c: &mut Case) -> f64 {
    c.state.invalidate();
    c.state.refresh(&c.kg).unwrap();
    let s = score_batch(&c.q, &c.state).unwrap();
    loss_and_delta(&s, &c.y).unwrap().loss
}

fn table(st: &mut ModelState, which: usize) -> &mut Matrix {
    if which == 0 {
        &mut st.e_v
    } else {
        &mut st.e_r
    }
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-6)
}

/// Central difference at `x`, or `None` when the loss has a kink within
/// `±h` there (one-sided slopes disagree) and the analytic value matches
/// one of the one-sided slopes.
fn check(analytic: f64, up: f64, mid: f64, down: f64, h: f64) -> Result<f64, f64> {
    let central = (up - down) / (2.0 * h);
    let err = rel_err(analytic, central);
    if err < 1e-4 {
        return Ok(err);
    }
    let (fwd, bwd) = ((up - mid) / h, (mid - down) / h);
    let kink = rel_err(fwd, bwd) > 1e-3;
    if kink && rel_err(analytic, fwd).min(rel_err(analytic, bwd)) < 1e-3 {
        Err(err)
    } else {
        Ok(err)
    }
}

pub struct FdReport {
    pub worst: f64,
    pub checked: usize,
    pub kinks: usize,
}

/// Compares reference-mode gradients of `e_v`, `e_r` and the bias with
/// central differences at step `h` on `case(seed)` for every seed.
pub fn compare_with_finite_differences(seeds: std::ops::Range<u64>, h: f64) -> FdReport {
    let mut worst = 0.0f64;
    let (mut checked, mut kinks) = (0usize, 0usize);
    for seed in seeds {
        let mut c = case(seed);
        let mid = loss(&mut c);
        let s = score_batch(&c.q, &c.state).unwrap();
        let out = loss_and_delta(&s, &c.y).unwrap();
        let g = backward(&out.delta, &s, &c.kg, &c.state).unwrap();

        let mut record = |r: Result<f64, f64>| {
            checked += 1;
            match r {
                Ok(e) => worst = worst.max(e),
                Err(_) => kinks += 1,
            }
        };
        for which in 0..2 {
            let (rows, cols) = (table(&mut c.state, which).rows(), table(&mut c.state, which).cols());
            for i in 0..rows {
                for k in 0..cols {
                    let x = table(&mut c.state, which).get(i, k);
                    table(&mut c.state, which).set(i, k, x + h);
                    let up = loss(&mut c);
                    table(&mut c.state, which).set(i, k, x - h);
                    let down = loss(&mut c);
                    table(&mut c.state, which).set(i, k, x);
                    let an = if which == 0 { g.e_v.get(i, k) } else { g.e_r.get(i, k) };
                    record(check(an, up, mid, down, h));
                }
            }
        }
        let b = c.state.bias;
        c.state.bias = b + h;
        let up = loss(&mut c);
        c.state.bias = b - h;
        let down = loss(&mut c);
        c.state.bias = b;
        record(check(g.bias, up, mid, down, h));
    }
    FdReport { worst, checked, kinks }
}
