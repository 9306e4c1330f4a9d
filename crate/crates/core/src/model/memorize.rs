use super::ModelState;
use crate::error::{shape, Result};
use crate::exec;
use crate::kg::KnowledgeGraph;
use crate::matrix::Matrix;

fn check(kg: &KnowledgeGraph, h_v: &Matrix, h_r: &Matrix) -> Result<()> {
    if h_v.rows() != kg.num_entities() || h_r.rows() != kg.num_relations() || h_v.cols() != h_r.cols() {
        return Err(shape(format!(
            "hypervectors {}x{} / {}x{} do not fit graph |V|={}, |R|={}",
            h_v.rows(),
            h_v.cols(),
            h_r.rows(),
            h_r.cols(),
            kg.num_entities(),
            kg.num_relations()
        )));
    }
    Ok(())
}

/// Edge-list memorization: `M[i] = Σ_{(j,r) ∈ N(i)} H^v[j] ∘ H^r[r]`, with
/// `G[i] = Σ_{(j,r) ∈ N(i)} H^r[r]` accumulated in the same pass.
pub fn memorize_edges(kg: &KnowledgeGraph, h_v: &Matrix, h_r: &Matrix) -> Result<(Matrix, Matrix)> {
    check(kg, h_v, h_r)?;
    let dim = h_v.cols();
    let nv = kg.num_entities();
    // Interleave M and G rows so one pass owns both outputs of a vertex.
    let mut both = vec![0.0; nv * 2 * dim];
    exec::for_each_row(&mut both, 2 * dim, |i, row| {
        let (m, g) = row.split_at_mut(dim);
        for &(j, r) in kg.neighbors().of(i) {
            let hv = h_v.row(j as usize);
            let hr = h_r.row(r as usize);
            for k in 0..dim {
                m[k] += hv[k] * hr[k];
                g[k] += hr[k];
            }
        }
    });
    let mut m = Matrix::zeros(nv, dim);
    let mut g = Matrix::zeros(nv, dim);
    for i in 0..nv {
        let row = &both[i * 2 * dim..(i + 1) * 2 * dim];
        m.row_mut(i).copy_from_slice(&row[..dim]);
        g.row_mut(i).copy_from_slice(&row[dim..]);
    }
    Ok((m, g))
}

/// Matrix form: `M = Σ_r (A^r · H^v) ∘ E^r`, where `E^r` repeats `H^r[r]` on
/// every row.
pub fn memorize_matrix(kg: &KnowledgeGraph, h_v: &Matrix, h_r: &Matrix) -> Result<Matrix> {
    check(kg, h_v, h_r)?;
    let dim = h_v.cols();
    let mut m = Matrix::zeros(kg.num_entities(), dim);
    exec::for_each_row(m.as_mut_slice(), dim, |i, row| {
        let mut agg = vec![0.0; dim];
        for (r, csr) in kg.csrs().iter().enumerate() {
            let cols = csr.row(i);
            if cols.is_empty() {
                continue;
            }
            agg.iter_mut().for_each(|x| *x = 0.0);
            for &j in cols {
                agg.iter_mut().zip(h_v.row(j as usize)).for_each(|(a, h)| *a += h);
            }
            for ((o, a), e) in row.iter_mut().zip(&agg).zip(h_r.row(r)) {
                *o += a * e;
            }
        }
    });
    Ok(m)
}

/// Edge-list memorization from a model's current hypervectors.
pub fn memorize_edge_list(kg: &KnowledgeGraph, state: &ModelState) -> Result<(Matrix, Matrix)> {
    state.check_graph(kg)?;
    memorize_edges(kg, state.h_v()?, state.h_r()?)
}

pub fn memorize_matrix_form(kg: &KnowledgeGraph, state: &ModelState) -> Result<Matrix> {
    state.check_graph(kg)?;
    memorize_matrix(kg, state.h_v()?, state.h_r()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::kg::Triple;
    use crate::model::ModelConfig;

    #[test]
    fn isolated_vertex_and_single_edge() {
        let kg = KnowledgeGraph::from_ids(3, 1, vec![Triple::new(0, 0, 1)], vec![], vec![]).unwrap();
        let h_v = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -0.25], vec![3.0, 3.0]]).unwrap();
        let h_r = Matrix::from_rows(&[vec![-2.0, 4.0]]).unwrap();
        let (m, g) = memorize_edges(&kg, &h_v, &h_r).unwrap();
        assert_eq!(m.row(0), &[-1.0, -1.0]);
        assert_eq!(g.row(0), &[-2.0, 4.0]);
        assert_eq!(m.row(2), &[0.0, 0.0]);
        assert_eq!(g.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn identity_adjacency_with_unit_relation() {
        let t: Vec<Triple> = (0..4).map(|i| Triple::new(i, 0, i)).collect();
        let kg = KnowledgeGraph::from_ids(4, 1, t, vec![], vec![]).unwrap();
        let h_v = Matrix::from_vec(4, 3, (0..12).map(|x| x as f64 * 0.1 - 0.5).collect()).unwrap();
        let h_r = Matrix::from_rows(&[vec![1.0; 3]]).unwrap();
        assert_eq!(memorize_matrix(&kg, &h_v, &h_r).unwrap(), h_v);
    }

    #[test]
    fn empty_graph_gives_zero_memory() {
        let kg = KnowledgeGraph::from_ids(3, 2, vec![], vec![], vec![]).unwrap();
        let h_v = Matrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        let h_r = Matrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(memorize_matrix(&kg, &h_v, &h_r).unwrap(), Matrix::zeros(3, 2));
        assert_eq!(memorize_edges(&kg, &h_v, &h_r).unwrap().0, Matrix::zeros(3, 2));
    }

    #[test]
    fn stale_state_is_rejected() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triple::new(0, 0, 1)], vec![], vec![]).unwrap();
        let state = crate::model::ModelState::init(ModelConfig::new(2, 4, 1), 2, 1).unwrap();
        assert!(matches!(memorize_edge_list(&kg, &state), Err(Error::Stale(_))));
        assert!(matches!(memorize_matrix_form(&kg, &state), Err(Error::Stale(_))));
    }
}
