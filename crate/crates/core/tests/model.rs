mod common;

use common::{batch, fresh_state, random_graph, rng};
use hdreason::kg::{KnowledgeGraph, Triple};
use hdreason::matrix::Matrix;
use hdreason::model::{
    backward, chunk_widths, chunked_backward, loss_and_delta, memorize_edge_list, memorize_matrix_form,
    score_batch, BackwardMode, ModelState, OptimizerKind, QueryBatch, TrainOptions, Trainer,
};
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn edge_list_and_matrix_form_agree() {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for g in 0..100u64 {
        let nv = r.random_range(1..=50);
        let nr = r.random_range(1..=5);
        let facts = r.random_range(0..=4 * nv);
        let kg = random_graph(g, nv, nr, facts);
        let kg = if g % 2 == 0 { kg.add_reciprocal().unwrap() } else { kg };
        let st = fresh_state(&kg, 4, 64, g, 0.5);
        let (m, _) = memorize_edge_list(&kg, &st).unwrap();
        worst = worst.max(m.max_abs_diff(&memorize_matrix_form(&kg, &st).unwrap()));
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn six_vertex_case_and_stale_inputs() {
    let kg = random_graph(3, 6, 2, 12);
    let mut st = fresh_state(&kg, 3, 32, 3, 0.5);
    let (m, g) = memorize_edge_list(&kg, &st).unwrap();
    assert!(m.max_abs_diff(&memorize_matrix_form(&kg, &st).unwrap()) <= 1e-10);
    // G is the plain sum of each vertex's edge relation hypervectors
    let h_r = st.h_r().unwrap();
    for i in 0..6 {
        let mut want = vec![0.0; 32];
        for &(_, rel) in kg.neighbors().of(i) {
            want.iter_mut().zip(h_r.row(rel as usize)).for_each(|(w, x)| *w += x);
        }
        assert_eq!(g.row(i), want.as_slice());
    }
    st.invalidate();
    assert!(memorize_edge_list(&kg, &st).is_err());
    assert!(memorize_matrix_form(&kg, &st).is_err());
}

#[test]
fn chunked_backward_is_chunk_size_independent() {
    assert_eq!(chunk_widths(10, 3).unwrap(), vec![3, 3, 3, 1]);
    assert!(chunk_widths(10, 0).is_err());
    for mode in [BackwardMode::Reference, BackwardMode::HardwareFaithful] {
        for seed in 0..4 {
            let nv = 23;
            let c = batch(seed, nv, mode);
            let s = score_batch(&c.q, &c.state).unwrap();
            let delta = loss_and_delta(&s, &c.y).unwrap().delta;
            let whole = backward(&delta, &s, &c.kg, &c.state).unwrap();
            for t in [1, 7, nv] {
                let g = chunked_backward(&delta, t, &s, &c.kg, &c.state).unwrap();
                assert!(g.e_v.max_abs_diff(&whole.e_v) <= 1e-12);
                assert!(g.e_r.max_abs_diff(&whole.e_r) <= 1e-12);
                assert_eq!(g, whole, "T={t} is not bit-identical");
            }
            assert!(chunked_backward(&delta, 0, &s, &c.kg, &c.state).is_err());
        }
    }
}

#[test]
fn forward_caches_match_naive_recomputation() {
    for seed in 0..4 {
        let c = batch(seed, 17, BackwardMode::Reference);
        let s = score_batch(&c.q, &c.state).unwrap();
        let signs = s.signs.as_ref().unwrap();
        let (m_v, h_r) = (c.state.m_v().unwrap(), c.state.h_r().unwrap());
        let factor = c.state.config.score_sign.factor();
        for j in 0..c.q.len() {
            let (sj, k) = (c.q.subjects[j] as usize, c.q.relations[j] as usize);
            let mut subject = vec![0.0; m_v.cols()];
            for cand in 0..m_v.rows() {
                for kk in 0..m_v.cols() {
                    let res = m_v.get(sj, kk) + h_r.get(k, kk) - m_v.get(cand, kk);
                    let sg: i8 = if res > 0.0 { 1 } else if res < 0.0 { -1 } else { 0 };
                    assert_eq!(signs.get(j, cand, kk), sg);
                    subject[kk] += factor * sg as f64;
                }
            }
            assert_eq!(s.subject_grad.row(j), subject.as_slice());
            assert_eq!(s.subject_grad.row(j), s.relation_grad.row(j));
        }
        // G recomputed from scratch
        let g = c.state.grad_cache().unwrap();
        for i in 0..c.kg.num_entities() {
            let mut want = vec![0.0; h_r.cols()];
            for &(_, rel) in c.kg.neighbors().of(i) {
                want.iter_mut().zip(h_r.row(rel as usize)).for_each(|(w, x)| *w += x);
            }
            assert_eq!(g.row(i), want.as_slice());
        }
    }
}

#[test]
fn relabeling_entities_permutes_scores() {
    let nv = 15;
    let kg = random_graph(4, nv, 2, 40);
    let st = fresh_state(&kg, 4, 32, 4, 0.4);
    let mut perm: Vec<u32> = (0..nv as u32).collect();
    perm.shuffle(&mut rng(8));
    let map = |t: &Triple| Triple::new(perm[t.head as usize], t.rel, perm[t.tail as usize]);
    let kg2 = KnowledgeGraph::from_ids(nv, 2, kg.train().iter().map(map).collect(), vec![], vec![]).unwrap();
    let mut e_v2 = Matrix::zeros(nv, 4);
    for i in 0..nv {
        e_v2.row_mut(perm[i] as usize).copy_from_slice(st.e_v.row(i));
    }
    let mut st2 = ModelState::from_embeddings(st.config.clone(), e_v2, st.e_r.clone(), st.bias).unwrap();
    st2.refresh(&kg2).unwrap();

    let q = QueryBatch::new(vec![0, 5, 9], vec![0, 1, 1]);
    let q2 = QueryBatch::new(q.subjects.iter().map(|&s| perm[s as usize]).collect(), q.relations.clone());
    let p = score_batch(&q, &st).unwrap().p;
    let p2 = score_batch(&q2, &st2).unwrap().p;
    for j in 0..3 {
        for c in 0..nv {
            assert!((p.get(j, c) - p2.get(j, perm[c] as usize)).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_embeddings() {
    let kg = random_graph(2, 10, 2, 25).add_reciprocal().unwrap();
    let mut st = fresh_state(&kg, 4, 16, 2, 0.1);
    let (e_v, e_r) = (st.e_v.clone(), st.e_r.clone());
    let opts = TrainOptions { batch_size: 4, optimizer: OptimizerKind::sgd(0.0), ..TrainOptions::default() };
    let mut tr = Trainer::new(&kg, opts, 2).unwrap();
    let stats = tr.run_epoch(&kg, &mut st).unwrap();
    assert!(stats.loss.is_finite() && stats.batches > 0);
    assert_eq!((st.e_v, st.e_r), (e_v, e_r));
    // training needs reciprocal relations
    assert!(Trainer::new(&random_graph(2, 10, 2, 25), TrainOptions::default(), 2).is_err());
}
