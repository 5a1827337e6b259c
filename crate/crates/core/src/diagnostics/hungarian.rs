use crate::error::{shape, Result};
use crate::model::{l1_distance, TopicWordMatrix};

/// Minimum-cost perfect assignment for a square cost matrix (Hungarian
/// method with potentials, O(n^3)). Returns `assign[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(shape("cost matrix must be square"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays; index 0 is the virtual column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    Ok(assign)
}

/// Matches estimated topics to true topics by minimum total-variation cost.
/// Returns `perm[estimated] = true`.
pub fn match_topics(est: &TopicWordMatrix, truth: &TopicWordMatrix) -> Result<Vec<usize>> {
    if est.num_topics() != truth.num_topics() || est.num_words() != truth.num_words() {
        return Err(shape(format!(
            "cannot match {}x{} against {}x{}",
            est.num_topics(),
            est.num_words(),
            truth.num_topics(),
            truth.num_words()
        )));
    }
    let cost: Vec<Vec<f64>> = est
        .rows()
        .map(|e| {
            truth
                .rows()
                .map(|t| 0.5 * l1_distance(e, t).expect("equal lengths"))
                .collect()
        })
        .collect();
    min_cost_assignment(&cost)
}
