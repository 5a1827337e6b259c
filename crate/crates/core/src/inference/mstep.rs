//! Multiplicative M-steps. Sums over documents are split into fixed-size
//! chunks and reduced in chunk order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::error::{shape, Error, Result};
use crate::model::{Document, TopicProportions, TopicWordMatrix};

const CHUNK: usize = 512;

#[derive(Clone, Copy)]
enum Membership {
    /// Each document feeds only its strict-argmax topic.
    Thresholded,
    /// Each document feeds every topic with positive weight.
    All,
}

struct Partial {
    num: Vec<f64>,
    den: Vec<f64>,
}

fn accumulate(
    docs: &[Document],
    gammas: &[TopicProportions],
    beta: &TopicWordMatrix,
    membership: Membership,
) -> Partial {
    let k = beta.num_topics();
    let n = beta.num_words();
    let mut p = Partial {
        num: vec![0.0; k * n],
        den: vec![0.0; k],
    };
    let mut ratio = Vec::new();
    for (doc, gamma) in docs.iter().zip(gammas) {
        let owners: Vec<usize> = match membership {
            Membership::Thresholded => gamma.dominant().into_iter().collect(),
            Membership::All => gamma.support(),
        };
        if owners.is_empty() {
            continue;
        }
        let support = gamma.support();
        ratio.clear();
        for &j in doc.nonzero() {
            let f: f64 = support.iter().map(|&i| gamma.get(i) * beta.get(i, j)).sum();
            ratio.push(if f > 0.0 { doc.freqs()[j] / f } else { 0.0 });
        }
        for i in owners {
            let g = gamma.get(i);
            p.den[i] += g;
            let row = &mut p.num[i * n..(i + 1) * n];
            for (&j, &r) in doc.nonzero().iter().zip(&ratio) {
                row[j] += r * g;
            }
        }
    }
    p
}

fn mstep(
    docs: &[Document],
    gammas: &[TopicProportions],
    beta: &TopicWordMatrix,
    renormalize: bool,
    membership: Membership,
) -> Result<TopicWordMatrix> {
    if docs.len() != gammas.len() {
        return Err(shape(format!("{} documents but {} proportions", docs.len(), gammas.len())));
    }
    let k = beta.num_topics();
    let n = beta.num_words();
    if let Some(d) = docs.iter().position(|d| d.num_words() != n) {
        return Err(shape(format!("document {d} has the wrong vocabulary size")));
    }
    if let Some(d) = gammas.iter().position(|g| g.num_topics() != k) {
        return Err(shape(format!("proportions of document {d} have the wrong length")));
    }
    let partials: Vec<Partial> = docs
        .par_chunks(CHUNK)
        .zip(gammas.par_chunks(CHUNK))
        .map(|(dc, gc)| accumulate(dc, gc, beta, membership))
        .collect();
    let mut num = vec![0.0; k * n];
    let mut den = vec![0.0; k];
    for p in partials {
        num.iter_mut().zip(&p.num).for_each(|(a, b)| *a += b);
        den.iter_mut().zip(&p.den).for_each(|(a, b)| *a += b);
    }
    let mut data = Vec::with_capacity(k * n);
    for i in 0..k {
        if !(den[i] > 0.0) {
            return Err(Error::EmptyTopic { topic: i });
        }
        let row = beta.row(i);
        data.extend((0..n).map(|j| row[j] * num[i * n + j] / den[i]));
    }
    let mut next = TopicWordMatrix::from_flat(k, n, data)?;
    if renormalize {
        next.normalize_rows();
    }
    Ok(next)
}

/// beta_ij <- beta_ij * sum_{d in D_i} (f~_dj / f_dj) gamma_di / sum_{d in D_i} gamma_di,
/// where D_i holds the documents whose strict argmax topic is i.
pub fn mstep_thresholded(
    docs: &[Document],
    gammas: &[TopicProportions],
    beta: &TopicWordMatrix,
    renormalize: bool,
) -> Result<TopicWordMatrix> {
    mstep(docs, gammas, beta, renormalize, Membership::Thresholded)
}

/// The same update summed over every document with gamma_di > 0.
pub fn mstep_vanilla(
    docs: &[Document],
    gammas: &[TopicProportions],
    beta: &TopicWordMatrix,
    renormalize: bool,
) -> Result<TopicWordMatrix> {
    mstep(docs, gammas, beta, renormalize, Membership::All)
}
