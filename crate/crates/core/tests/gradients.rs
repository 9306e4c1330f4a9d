mod common;

use common::fd::{case, compare_with_finite_differences};
use common::rng;
use hdreason::hdc::Activation;
use hdreason::kg::{KnowledgeGraph, Triple};
use hdreason::matrix::Matrix;
use hdreason::model::{
    backward, loss_and_delta, multi_hot_targets, score_batch, BackwardMode, ModelConfig, ModelState, QueryBatch,
};
use rand::Rng;

#[test]
fn reference_gradients_match_central_differences() {
    let r = compare_with_finite_differences(0..3, 1e-5);
    assert!(r.worst < 1e-4, "max relative error {:e}", r.worst);
    assert!(r.kinks * 100 <= r.checked, "{} of {} coordinates sit on an L1 kink", r.kinks, r.checked);
}
#[test]
fn zero_delta_gives_zero_gradients() {
    let c = case(5);
    let s = score_batch(&c.q, &c.state).unwrap();
    let g = backward(&Matrix::zeros(4, 20), &s, &c.kg, &c.state).unwrap();
    assert!(g.e_v.as_slice().iter().chain(g.e_r.as_slice()).all(|&x| x == 0.0));
    assert_eq!(g.bias, 0.0);
}

/// Identity activation on a graph of self-loops only: the stored `G` row is
/// then the exact derivative of a vertex's memory, so the hardware-faithful
/// vertex gradient must equal the reference one. Its relation gradient
/// keeps only the query path, checked against a from-scratch loop.
#[test]
fn hardware_mode_under_identity_activation() {
    let (nv, nr, d, dim) = (12, 3, 5, 16);
    let mut r = rng(9);
    let train: Vec<Triple> = (0..nv as u32).map(|i| Triple::new(i, r.random_range(0..nr as u32), i)).collect();
    let kg = KnowledgeGraph::from_ids(nv, nr, train, vec![], vec![]).unwrap();
    let q = QueryBatch::new(vec![0, 3, 7, 3], vec![1, 0, 1, 2]);
    let y = multi_hot_targets(&[&[1], &[4, 5], &[7], &[0]], nv, 0.0).unwrap();

    let mut grads = Vec::new();
    let mut hw_state = None;
    for mode in [BackwardMode::Reference, BackwardMode::HardwareFaithful] {
        let mut cfg = ModelConfig::new(d, dim, 3);
        cfg.activation = Activation::Identity;
        cfg.init_scale = 0.3;
        cfg.mode = mode;
        let mut st = ModelState::init(cfg, nv, nr).unwrap();
        st.refresh(&kg).unwrap();
        let s = score_batch(&q, &st).unwrap();
        let out = loss_and_delta(&s, &y).unwrap();
        grads.push((backward(&out.delta, &s, &kg, &st).unwrap(), out.delta));
        hw_state = Some(st);
    }
    let (reference, hw) = (&grads[0].0, &grads[1].0);
    assert_eq!(reference.e_v, hw.e_v);
    assert_eq!(reference.bias, hw.bias);

    // query-path oracle for the relation gradient
    let st = hw_state.unwrap();
    let delta = &grads[1].1;
    let (m_v, h_r) = (st.m_v().unwrap(), st.h_r().unwrap());
    let mut g_hr = Matrix::zeros(nr, dim);
    for j in 0..q.len() {
        let (s, k) = (q.subjects[j] as usize, q.relations[j] as usize);
        for c in 0..nv {
            for kk in 0..dim {
                let res = m_v.get(s, kk) + h_r.get(k, kk) - m_v.get(c, kk);
                let sg = if res > 0.0 { 1.0 } else if res < 0.0 { -1.0 } else { 0.0 };
                // distance convention: raw = bias - |res|
                g_hr.set(k, kk, g_hr.get(k, kk) - delta.get(j, c) * sg);
            }
        }
    }
    let base = st.base().matrix();
    for rr in 0..nr {
        for a in 0..d {
            let want: f64 = (0..dim).map(|kk| g_hr.get(rr, kk) * base.get(a, kk)).sum();
            let got = hw.e_r.get(rr, a);
            assert!((want - got).abs() <= 1e-12 * want.abs().max(1e-3), "{want} vs {got}");
        }
    }
    assert_ne!(reference.e_r, hw.e_r);
}
