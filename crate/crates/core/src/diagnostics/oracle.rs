use crate::error::{invalid, shape, Result};
use crate::model::{Document, TopicProportions, TopicWordMatrix};

const MAX_SUPPORT: usize = 4;

/// Reference E-step for small supports: exhaustive simplex grid at spacing
/// `resolution`, then pairwise exact line searches until no pair improves.
/// Shares no code with the production solvers.
pub fn oracle_estep(
    doc: &Document,
    beta: &TopicWordMatrix,
    support: &[usize],
    resolution: f64,
) -> Result<TopicProportions> {
    if support.is_empty() || support.len() > MAX_SUPPORT {
        return Err(invalid(format!(
            "oracle supports 1..={MAX_SUPPORT} topics, got {}",
            support.len()
        )));
    }
    if doc.num_words() != beta.num_words() || support.iter().any(|&i| i >= beta.num_topics()) {
        return Err(shape("document, matrix and support do not agree"));
    }
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(invalid("resolution must lie in (0, 0.5]"));
    }
    let words: Vec<(f64, Vec<f64>)> = doc
        .nonzero()
        .iter()
        .map(|&j| (doc.freqs()[j], support.iter().map(|&i| beta.get(i, j)).collect()))
        .collect();
    let objective = |g: &[f64]| -> f64 {
        let mut total = 0.0;
        for (ft, b) in &words {
            let f: f64 = g.iter().zip(b).map(|(x, y)| x * y).sum();
            if f <= 0.0 {
                return f64::INFINITY;
            }
            total += ft * (ft / f).ln();
        }
        total
    };

    let s = support.len();
    let steps = (1.0 / resolution).round() as usize;
    let mut best = vec![1.0 / s as f64; s];
    let mut best_val = objective(&best);
    let mut counts = vec![0usize; s];
    grid(&mut counts, 0, steps, &mut |c| {
        let g: Vec<f64> = c.iter().map(|&x| x as f64 / steps as f64).collect();
        let v = objective(&g);
        if v < best_val {
            best_val = v;
            best = g;
        }
    });

    let mut g = best;
    for _ in 0..10_000 {
        let before = objective(&g);
        for a in 0..s {
            for b in a + 1..s {
                // Move mass t from b to a, t in [-g[a], g[b]].
                let (lo, hi) = (-g[a], g[b]);
                let along = |t: f64| {
                    let mut x = g.clone();
                    x[a] += t;
                    x[b] -= t;
                    objective(&x)
                };
                let t = golden_section(along, lo, hi);
                if along(t) < along(0.0) {
                    g[a] += t;
                    g[b] -= t;
                }
            }
        }
        if before - objective(&g) <= 1e-16 {
            break;
        }
    }
    let mut full = vec![0.0; beta.num_topics()];
    for (&i, &v) in support.iter().zip(&g) {
        full[i] = v.max(0.0);
    }
    let sum: f64 = full.iter().sum();
    full.iter_mut().for_each(|v| *v /= sum);
    Ok(TopicProportions::from_vec(full))
}

fn grid(counts: &mut Vec<usize>, pos: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        grid(counts, pos + 1, left - c, visit);
    }
}

/// Minimizes a convex function on [lo, hi], checking both endpoints.
fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [lo, hi, mid]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WordCount;

    #[test]
    fn finds_interior_optimum() {
        let beta = TopicWordMatrix::from_rows(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap();
        let doc = Document::new(vec![0.3, 0.5, 0.2], WordCount::Exact, None).unwrap();
        let g = oracle_estep(&doc, &beta, &[0, 1], 0.05).unwrap();
        assert!((g.get(0) - 0.6).abs() < 1e-7, "{:?}", g);
    }

    #[test]
    fn finds_vertex_optimum() {
        let beta = TopicWordMatrix::from_rows(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap();
        let doc = Document::new(vec![0.5, 0.5, 0.0], WordCount::Exact, None).unwrap();
        let g = oracle_estep(&doc, &beta, &[0, 1], 0.1).unwrap();
        assert_eq!(g.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_large_support() {
        let beta = TopicWordMatrix::from_rows(vec![vec![1.0]; 5]).unwrap();
        let doc = Document::new(vec![1.0], WordCount::Exact, None).unwrap();
        assert!(oracle_estep(&doc, &beta, &[0, 1, 2, 3, 4], 0.1).is_err());
    }
}
