//! Per-document E-step: minimize KL(f~ || gamma beta) over proportions
//! supported on an allowed topic set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::model::{Document, TopicProportions, TopicWordMatrix};

/// Coordinates below this with a shrinking multiplicative factor are set to
/// zero; the KKT check afterwards revives any that should be positive.
const SNAP: f64 = 1e-14;
/// Multiplicative warm-up before Newton polishing in [`estep_kl`].
const WARMUP_ITERS: usize = 50;
const WARMUP_TOL: f64 = 1e-3;
const MAX_NEWTON: usize = 100;
/// On-face stationarity reached by Newton polishing.
const FACE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EStepSettings {
    pub max_inner_iters: usize,
    /// Stop multiplicative updates once every active factor is within this of 1.
    pub convergence_tol: f64,
    /// Allowed KKT residual of the returned point.
    pub kkt_tol: f64,
}

impl Default for EStepSettings {
    fn default() -> Self {
        Self {
            max_inner_iters: 10_000,
            convergence_tol: 1e-10,
            kkt_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EStepMode {
    OneStep,
    ToConvergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EStepResult {
    pub gamma: TopicProportions,
    /// KL(f~ || gamma beta) over the words the allowed topics cover.
    pub objective: f64,
    pub inner_iters: usize,
    /// max of |g_i - 1| on positive coordinates and (g_i - 1)+ on zero ones.
    pub kkt_residual: f64,
}

/// Restriction of one document's E-step to its words and allowed topics.
pub(crate) struct Problem {
    topics: Vec<usize>,
    num_topics: usize,
    ft: Vec<f64>,
    /// Row-major |topics| x |words| block of beta.
    b: Vec<f64>,
}

impl Problem {
    pub(crate) fn new(doc: &Document, beta: &TopicWordMatrix, allowed: &[usize]) -> Result<Self> {
        if doc.num_words() != beta.num_words() {
            return Err(shape(format!(
                "document over {} words, matrix over {}",
                doc.num_words(),
                beta.num_words()
            )));
        }
        if allowed.is_empty() {
            return Err(Error::Inference("empty topic support for a document".into()));
        }
        if let Some(&i) = allowed.iter().find(|&&i| i >= beta.num_topics()) {
            return Err(shape(format!("topic {i} out of range")));
        }
        // Words no allowed topic can produce add a constant to the objective
        // and are left out.
        let words: Vec<usize> = doc
            .nonzero()
            .iter()
            .copied()
            .filter(|&j| allowed.iter().any(|&i| beta.get(i, j) > 0.0))
            .collect();
        if words.is_empty() {
            return Err(Error::Inference("no document word is covered by its allowed topics".into()));
        }
        let ft = words.iter().map(|&j| doc.freqs()[j]).collect();
        let mut b = Vec::with_capacity(allowed.len() * words.len());
        for &i in allowed {
            let row = beta.row(i);
            b.extend(words.iter().map(|&j| row[j]));
        }
        Ok(Self {
            topics: allowed.to_vec(),
            num_topics: beta.num_topics(),
            ft,
            b,
        })
    }

    fn a(&self) -> usize {
        self.topics.len()
    }

    fn w(&self) -> usize {
        self.ft.len()
    }

    fn row(&self, a: usize) -> &[f64] {
        &self.b[a * self.w()..(a + 1) * self.w()]
    }

    fn freqs(&self, g: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.w()];
        for (a, &ga) in g.iter().enumerate() {
            if ga > 0.0 {
                for (fj, &bj) in f.iter_mut().zip(self.row(a)) {
                    *fj += ga * bj;
                }
            }
        }
        f
    }

    fn objective_at(&self, f: &[f64]) -> f64 {
        let mut obj = 0.0;
        for (&t, &fj) in self.ft.iter().zip(f) {
            if fj <= 0.0 {
                return f64::INFINITY;
            }
            obj += t * (t / fj).ln();
        }
        obj
    }

    pub(crate) fn objective(&self, g: &[f64]) -> f64 {
        self.objective_at(&self.freqs(g))
    }

    /// g_a = sum_j f~_j b_aj / f_j for every allowed topic.
    fn factors(&self, f: &[f64]) -> Vec<f64> {
        let ratio: Vec<f64> = self
            .ft
            .iter()
            .zip(f)
            .map(|(&t, &fj)| if fj > 0.0 { t / fj } else { 0.0 })
            .collect();
        (0..self.a())
            .map(|a| self.row(a).iter().zip(&ratio).map(|(b, r)| b * r).sum())
            .collect()
    }

    fn kkt_residual(&self, g: &[f64], factors: &[f64]) -> f64 {
        g.iter()
            .zip(factors)
            .map(|(&ga, &fa)| if ga > 0.0 { (fa - 1.0).abs() } else { (fa - 1.0).max(0.0) })
            .fold(0.0, f64::max)
    }

    /// Restricts full proportions to the allowed topics.
    pub(crate) fn restrict(&self, gamma: &TopicProportions) -> Vec<f64> {
        let mut g: Vec<f64> = self.topics.iter().map(|&i| gamma.get(i)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 {
            g.iter_mut().for_each(|v| *v /= sum);
        } else {
            g.iter_mut().for_each(|v| *v = 1.0 / self.a() as f64);
        }
        g
    }

    fn expand(&self, g: &[f64]) -> TopicProportions {
        let mut full = vec![0.0; self.num_topics];
        for (&i, &v) in self.topics.iter().zip(g) {
            full[i] = v;
        }
        TopicProportions::from_vec(full)
    }

    fn result(&self, g: &[f64], inner_iters: usize) -> EStepResult {
        let f = self.freqs(g);
        let factors = self.factors(&f);
        EStepResult {
            gamma: self.expand(g),
            objective: self.objective_at(&f),
            inner_iters,
            kkt_residual: self.kkt_residual(g, &factors),
        }
    }

    /// One multiplicative step. Returns the largest |factor - 1| over the
    /// positive coordinates before the step.
    fn multiplicative_step(&self, g: &mut [f64], snap: bool) -> f64 {
        let f = self.freqs(g);
        let factors = self.factors(&f);
        let mut change = 0.0f64;
        for (ga, &fa) in g.iter_mut().zip(&factors) {
            if *ga > 0.0 {
                change = change.max((fa - 1.0).abs());
                *ga *= fa;
                if snap && *ga < SNAP && fa < 1.0 {
                    *ga = 0.0;
                }
            }
        }
        normalize(g);
        change
    }

    /// Multiplicative updates until the factors settle, then revive zero
    /// coordinates that violate the KKT conditions. Returns the step count.
    fn multiplicative_solve(&self, g: &mut [f64], settings: &EStepSettings, budget: usize, tol: f64) -> usize {
        let mut iters = 0;
        let mut revivals = 0;
        loop {
            while iters < budget {
                iters += 1;
                if self.multiplicative_step(g, true) <= tol {
                    break;
                }
            }
            if iters >= budget || revivals > 2 * self.a() || !self.revive(g, settings.kkt_tol) {
                return iters;
            }
            revivals += 1;
        }
    }

    /// Moves a little mass onto the zero coordinate with the largest KKT
    /// violation. Returns false when there is none.
    fn revive(&self, g: &mut [f64], kkt_tol: f64) -> bool {
        let f = self.freqs(g);
        let factors = self.factors(&f);
        let Some((a, _)) = factors
            .iter()
            .enumerate()
            .filter(|(a, fa)| g[*a] == 0.0 && **fa > 1.0 + kkt_tol)
            .max_by(|x, y| x.1.total_cmp(y.1))
        else {
            return false;
        };
        let base = self.objective_at(&f);
        let mut eta = 1e-2;
        while eta > 1e-12 {
            let mut trial: Vec<f64> = g.iter().map(|v| v * (1.0 - eta)).collect();
            trial[a] = eta;
            if self.objective(&trial) < base {
                g.copy_from_slice(&trial);
                return true;
            }
            eta /= 4.0;
        }
        false
    }

    /// Projected Newton on the face of positive coordinates; coordinates that
    /// hit zero are dropped. Returns the step count.
    fn newton_polish(&self, g: &mut [f64]) -> usize {
        for it in 0..MAX_NEWTON {
            let active: Vec<usize> = (0..self.a()).filter(|&a| g[a] > 0.0).collect();
            let n = active.len();
            let f = self.freqs(g);
            let factors = self.factors(&f);
            let obj = self.objective_at(&f);
            if n <= 1 || active.iter().all(|&a| (factors[a] - 1.0).abs() <= FACE_TOL) {
                return it;
            }
            let w2: Vec<f64> = self.ft.iter().zip(&f).map(|(&t, &fj)| t / (fj * fj)).collect();
            let mut kkt = DMatrix::<f64>::zeros(n + 1, n + 1);
            for (p, &a) in active.iter().enumerate() {
                for (q, &c) in active.iter().enumerate().skip(p) {
                    let h: f64 = self
                        .row(a)
                        .iter()
                        .zip(self.row(c))
                        .zip(&w2)
                        .map(|((x, y), w)| x * y * w)
                        .sum();
                    kkt[(p, q)] = h;
                    kkt[(q, p)] = h;
                }
                kkt[(p, n)] = 1.0;
                kkt[(n, p)] = 1.0;
            }
            let trace: f64 = (0..n).map(|p| kkt[(p, p)]).sum();
            for p in 0..n {
                kkt[(p, p)] += 1e-14 * trace / n as f64;
            }
            let mut rhs = DVector::<f64>::zeros(n + 1);
            for (p, &a) in active.iter().enumerate() {
                rhs[p] = factors[a];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else {
                return it;
            };
            let dir: Vec<f64> = (0..n).map(|p| sol[p]).collect();
            let slope: f64 = -active.iter().zip(&dir).map(|(&a, d)| factors[a] * d).sum::<f64>();
            if !(slope < 0.0) {
                return it;
            }
            let mut s_max = f64::INFINITY;
            let mut blocking = None;
            for (p, &a) in active.iter().enumerate() {
                if dir[p] < 0.0 {
                    let s = g[a] / -dir[p];
                    if s < s_max {
                        s_max = s;
                        blocking = Some(a);
                    }
                }
            }
            let mut s = s_max.min(1.0);
            loop {
                let mut trial = g.to_vec();
                for (p, &a) in active.iter().enumerate() {
                    trial[a] = (g[a] + s * dir[p]).max(0.0);
                }
                if s == s_max {
                    if let Some(b) = blocking {
                        trial[b] = 0.0;
                    }
                }
                normalize(&mut trial);
                let new_obj = self.objective(&trial);
                if new_obj <= obj + 1e-4 * s * slope {
                    g.copy_from_slice(&trial);
                    break;
                }
                s *= 0.5;
                if s < 1e-12 {
                    return it;
                }
            }
        }
        MAX_NEWTON
    }
}

fn normalize(g: &mut [f64]) {
    let sum: f64 = g.iter().sum();
    if sum > 0.0 {
        g.iter_mut().for_each(|v| *v /= sum);
    }
}

fn check_init(beta: &TopicWordMatrix, init: &TopicProportions) -> Result<Vec<usize>> {
    if init.num_topics() != beta.num_topics() {
        return Err(shape(format!(
            "initial proportions over {} topics, matrix has {}",
            init.num_topics(),
            beta.num_topics()
        )));
    }
    Ok(init.support())
}

/// Multiplicative updates gamma_i <- gamma_i sum_j (f~_j / f_j) beta_ij,
/// restricted to the support of `init`.
pub fn estep_multiplicative(
    doc: &Document,
    beta: &TopicWordMatrix,
    init: &TopicProportions,
    settings: &EStepSettings,
    mode: EStepMode,
) -> Result<EStepResult> {
    let allowed = check_init(beta, init)?;
    let problem = Problem::new(doc, beta, &allowed)?;
    let g = problem.restrict(init);
    Ok(multiplicative_on(&problem, g, settings, mode))
}

pub(crate) fn multiplicative_on(
    problem: &Problem,
    mut g: Vec<f64>,
    settings: &EStepSettings,
    mode: EStepMode,
) -> EStepResult {
    match mode {
        EStepMode::OneStep => {
            problem.multiplicative_step(&mut g, false);
            problem.result(&g, 1)
        }
        EStepMode::ToConvergence => {
            let iters =
                problem.multiplicative_solve(&mut g, settings, settings.max_inner_iters, settings.convergence_tol);
            problem.result(&g, iters)
        }
    }
}

/// Solves the convex program min KL(f~ || gamma beta) over proportions
/// supported on the support of `init`, starting from `init`.
pub fn estep_kl(
    doc: &Document,
    beta: &TopicWordMatrix,
    init: &TopicProportions,
    settings: &EStepSettings,
) -> Result<EStepResult> {
    let allowed = check_init(beta, init)?;
    let problem = Problem::new(doc, beta, &allowed)?;
    let g = problem.restrict(init);
    Ok(kl_on(&problem, g, settings))
}

pub(crate) fn kl_on(problem: &Problem, mut g: Vec<f64>, settings: &EStepSettings) -> EStepResult {
    let mut iters = problem.multiplicative_solve(&mut g, settings, WARMUP_ITERS, WARMUP_TOL);
    for _ in 0..=2 * problem.a() {
        iters += problem.newton_polish(&mut g);
        if !problem.revive(&mut g, settings.kkt_tol) {
            break;
        }
    }
    let mut result = problem.result(&g, iters);
    if result.kkt_residual > settings.kkt_tol {
        // Newton stalled; finish with multiplicative steps.
        let budget = settings.max_inner_iters.saturating_sub(iters).max(1);
        iters += problem.multiplicative_solve(&mut g, settings, budget, settings.convergence_tol);
        iters += problem.newton_polish(&mut g);
        result = problem.result(&g, iters);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{predicted_freqs, WordCount};
    use approx::assert_abs_diff_eq;

    fn beta() -> TopicWordMatrix {
        TopicWordMatrix::from_rows(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap()
    }

    #[test]
    fn recovers_generating_proportions() {
        let g = TopicProportions::new(vec![0.5, 0.5]).unwrap();
        let f = predicted_freqs(&g, &beta()).unwrap();
        let doc = Document::new(f, WordCount::Exact, None).unwrap();
        let init = TopicProportions::uniform_on(2, &[]);
        let r = estep_kl(&doc, &beta(), &init, &EStepSettings::default()).unwrap();
        assert_abs_diff_eq!(r.gamma.get(0), 0.5, epsilon = 1e-12);
        assert!(r.objective.abs() < 1e-14);
    }

    #[test]
    fn boundary_optimum_has_exact_zero() {
        // f~ = (0.5, 0.5, 0) is produced by topic 0 alone.
        let doc = Document::new(vec![0.5, 0.5, 0.0], WordCount::Exact, None).unwrap();
        let init = TopicProportions::uniform_on(2, &[]);
        let r = estep_kl(&doc, &beta(), &init, &EStepSettings::default()).unwrap();
        assert_eq!(r.gamma.weights(), &[1.0, 0.0]);
        assert!(r.kkt_residual <= 1e-8);
    }

    #[test]
    fn support_of_init_is_respected() {
        let doc = Document::new(vec![0.25, 0.5, 0.25], WordCount::Exact, None).unwrap();
        let init = TopicProportions::pure(2, 1);
        let r = estep_kl(&doc, &beta(), &init, &EStepSettings::default()).unwrap();
        assert_eq!(r.gamma.weights(), &[0.0, 1.0]);
    }

    #[test]
    fn one_step_from_uniform() {
        // f = (0.25, 0.5, 0.25) equals f~, so one step is a fixed point.
        let doc = Document::new(vec![0.25, 0.5, 0.25], WordCount::Exact, None).unwrap();
        let init = TopicProportions::uniform_on(2, &[]);
        let r = estep_multiplicative(&doc, &beta(), &init, &EStepSettings::default(), EStepMode::OneStep)
            .unwrap();
        assert_eq!(r.inner_iters, 1);
        assert_abs_diff_eq!(r.gamma.get(0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn wrong_shapes_are_errors() {
        let doc = Document::new(vec![0.5, 0.5], WordCount::Exact, None).unwrap();
        let init = TopicProportions::uniform_on(2, &[]);
        assert!(estep_kl(&doc, &beta(), &init, &EStepSettings::default()).is_err());
        let doc = Document::new(vec![0.5, 0.5, 0.0], WordCount::Exact, None).unwrap();
        let init = TopicProportions::uniform_on(3, &[]);
        assert!(estep_kl(&doc, &beta(), &init, &EStepSettings::default()).is_err());
    }
}
