//! Synthetic-control weights and treatment-effect series.
//!
//! Weights minimise `(x0 - X1 w)' V (x0 - X1 w)` over the probability simplex,
//! where `x0` stacks the treated unit's fitting-period outcomes and the columns
//! of `X1` are the donors'. The solver is accelerated projected gradient with
//! adaptive restart, started from uniform weights, followed by an
//! equality-constrained Newton polish on the detected support.

use crate::error::{Error, Result};
use crate::panel::{PanelSeries, TimeSeries};

/// Stop when `||w - P(w - grad f(w))||` falls below this.
pub const PROJECTED_GRADIENT_TOL: f64 = 1e-10;
/// Stop when one iteration improves the objective by less than this fraction of its value.
pub const IMPROVEMENT_TOL: f64 = 1e-14;
const REFINE_STEPS: usize = 8;
pub const MAX_ITERATIONS: usize = 50_000;
/// Outer V search: sweeps and smallest step tried.
pub const V_SEARCH_SWEEPS: usize = 200;
pub const V_SEARCH_MIN_STEP: f64 = 1.0 / 4096.0;

/// Nonnegative donor weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.is_empty() || w.iter().any(|x| x.is_nan() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("{w:?} is not a point of the simplex")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Everything needed to fit one treated unit against a donor pool.
#[derive(Debug, Clone)]
pub struct SynthProblem<'a> {
    panel: &'a PanelSeries,
    treated: String,
    donors: Vec<String>,
    pre_periods: Vec<i64>,
    all_pre_periods: Vec<i64>,
    post_periods: Vec<i64>,
}

impl<'a> SynthProblem<'a> {
    pub fn new(
        panel: &'a PanelSeries,
        treated: &str,
        donors: Vec<String>,
        pre_periods: Vec<i64>,
        all_pre_periods: Vec<i64>,
        post_periods: Vec<i64>,
    ) -> Result<Self> {
        if panel.row(treated).is_none() {
            return Err(Error::Data(format!("treated unit {treated} not in panel")));
        }
        if donors.is_empty() {
            return Err(Error::InsufficientDonors {
                retained: 0,
                required: 1,
            });
        }
        if donors.iter().any(|d| d == treated) {
            return Err(Error::Data(format!("treated unit {treated} is also a donor")));
        }
        if let Some(d) = donors.iter().find(|d| panel.row(d).is_none()) {
            return Err(Error::Data(format!("donor {d} not in panel")));
        }
        if pre_periods.is_empty() {
            return Err(Error::Range("no fitting periods".into()));
        }
        if let Some(t) = pre_periods.iter().find(|t| !all_pre_periods.contains(t)) {
            return Err(Error::Range(format!(
                "fitting period {t} is not a pre-intervention period"
            )));
        }
        if let Some(t) = post_periods.iter().find(|t| all_pre_periods.contains(t)) {
            return Err(Error::Range(format!("period {t} is both pre and post")));
        }
        for t in all_pre_periods.iter().chain(&post_periods) {
            if !panel.range().contains(*t) {
                return Err(Error::Range(format!("period {t} outside the panel")));
            }
        }
        let problem = Self {
            panel,
            treated: treated.to_string(),
            donors,
            pre_periods,
            all_pre_periods,
            post_periods,
        };
        for unit in std::iter::once(&problem.treated).chain(&problem.donors) {
            let row = problem.panel.row(unit).expect("checked above");
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite outcome for {unit}")));
            }
        }
        Ok(problem)
    }

    /// The standard layout: every period before 0 is pre, the rest post.
    pub fn standard(panel: &'a PanelSeries, treated: &str, donors: Vec<String>) -> Result<Self> {
        let pre: Vec<i64> = panel.periods().filter(|t| *t < 0).collect();
        let post: Vec<i64> = panel.periods().filter(|t| *t >= 0).collect();
        Self::new(panel, treated, donors, pre.clone(), pre, post)
    }

    /// Same problem, fitting only on every `stride`-th pre period counted back from the last one.
    pub fn subsampled(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        let mut pre: Vec<i64> = self.all_pre_periods.iter().rev().step_by(stride).copied().collect();
        pre.sort_unstable();
        let mut p = self.clone();
        p.pre_periods = pre;
        Ok(p)
    }

    /// Same layout with a different unit treated and donor pool.
    pub fn with_units(&self, treated: &str, donors: Vec<String>) -> Result<Self> {
        Self::new(
            self.panel,
            treated,
            donors,
            self.pre_periods.clone(),
            self.all_pre_periods.clone(),
            self.post_periods.clone(),
        )
    }

    pub fn panel(&self) -> &PanelSeries {
        self.panel
    }

    pub fn treated(&self) -> &str {
        &self.treated
    }

    pub fn donors(&self) -> &[String] {
        &self.donors
    }

    pub fn pre_periods(&self) -> &[i64] {
        &self.pre_periods
    }

    pub fn all_pre_periods(&self) -> &[i64] {
        &self.all_pre_periods
    }

    pub fn post_periods(&self) -> &[i64] {
        &self.post_periods
    }

    fn value(&self, unit: &str, t: i64) -> f64 {
        self.panel.value(unit, t).expect("validated unit and period")
    }

    /// Treated outcomes and donor matrix (rows = periods) over `periods`.
    fn stacked(&self, periods: &[i64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let x0 = periods.iter().map(|&t| self.value(&self.treated, t)).collect();
        let x1 = periods
            .iter()
            .map(|&t| self.donors.iter().map(|d| self.value(d, t)).collect())
            .collect();
        (x0, x1)
    }

    /// Synthetic outcome for period `t` under `weights`.
    pub fn synthetic(&self, weights: &WeightVector, t: i64) -> f64 {
        self.donors
            .iter()
            .zip(weights.as_slice())
            .map(|(d, w)| w * self.value(d, t))
            .sum()
    }

    /// Mean squared fit residual over `periods`.
    pub fn mspe(&self, weights: &WeightVector, periods: &[i64]) -> f64 {
        let sum: f64 = periods
            .iter()
            .map(|&t| {
                let r = self.value(&self.treated, t) - self.synthetic(weights, t);
                r * r
            })
            .sum();
        sum / periods.len() as f64
    }

    /// Weighted fit objective over the fitting periods.
    pub fn objective(&self, weights: &WeightVector, v_diag: Option<&[f64]>) -> f64 {
        let uniform = 1.0 / self.pre_periods.len() as f64;
        self.pre_periods
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let r = self.value(&self.treated, t) - self.synthetic(weights, t);
                v_diag.map_or(uniform, |v| v[k]) * r * r
            })
            .sum()
    }
}

/// A fitted synthetic control.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFit {
    pub treated: String,
    pub donors: Vec<String>,
    pub weights: WeightVector,
    pub v_diag: Vec<f64>,
    /// Treated minus synthetic, for every panel period.
    pub effects: TimeSeries,
    /// Root mean squared residual over all pre-intervention periods.
    pub rmse_pre: f64,
    pub objective: f64,
}

impl SynthFit {
    /// Donor weights sorted descending (ties keep donor order).
    pub fn ranked_weights(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self
            .donors
            .iter()
            .map(String::as_str)
            .zip(self.weights.as_slice().iter().copied())
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v
    }
}

/// How weights are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorConfig {
    /// Fit on every `stride`-th pre period; 1 uses them all.
    pub stride: usize,
    /// Search for a diagonal V instead of using the identity.
    pub optimize_v: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            optimize_v: false,
        }
    }
}

impl EstimatorConfig {
    pub fn subsampled(stride: usize) -> Self {
        Self {
            stride,
            optimize_v: true,
        }
    }
}

/// Runs the estimator and computes effects and pre-period RMSE.
pub fn estimate(problem: &SynthProblem<'_>, config: EstimatorConfig) -> Result<SynthFit> {
    let problem = if config.stride > 1 {
        problem.subsampled(config.stride)?
    } else {
        problem.clone()
    };
    let (v_diag, weights) = if config.optimize_v {
        optimize_v(&problem)?
    } else {
        let m = problem.pre_periods.len();
        (vec![1.0 / m as f64; m], fit_weights(&problem, None)?)
    };
    let objective = problem.objective(&weights, Some(&v_diag));
    let rmse_pre = problem.mspe(&weights, &problem.all_pre_periods).sqrt();
    let effects = effect_series(&problem, &weights)?;
    Ok(SynthFit {
        treated: problem.treated.clone(),
        donors: problem.donors.clone(),
        weights,
        v_diag,
        effects,
        rmse_pre,
        objective,
    })
}

/// `Y_treated[t] - sum_j w_j Y_j[t]` for every period of the panel.
pub fn effect_series(problem: &SynthProblem<'_>, weights: &WeightVector) -> Result<TimeSeries> {
    if weights.len() != problem.donors.len() {
        return Err(Error::Data(format!(
            "{} weights for {} donors",
            weights.len(),
            problem.donors.len()
        )));
    }
    let panel = problem.panel;
    let values = panel
        .periods()
        .map(|t| problem.value(&problem.treated, t) - problem.synthetic(weights, t))
        .collect();
    Ok(TimeSeries::new(panel.range().first, values))
}

/// Simplex-constrained weights for the problem's fitting periods.
///
/// `v_diag`, when given, holds one nonnegative weight per fitting period and
/// must sum to one; otherwise every period gets `1 / |pre|`.
pub fn fit_weights(problem: &SynthProblem<'_>, v_diag: Option<&[f64]>) -> Result<WeightVector> {
    let m = problem.pre_periods.len();
    let v: Vec<f64> = match v_diag {
        Some(v) => {
            if v.len() != m {
                return Err(Error::Config(format!("{} V entries for {m} periods", v.len())));
            }
            let trace: f64 = v.iter().sum();
            if v.iter().any(|x| x.is_nan() || *x < 0.0) || (trace - 1.0).abs() > 1e-9 {
                return Err(Error::Config("V diagonal must be nonnegative with trace 1".into()));
            }
            v.to_vec()
        }
        None => vec![1.0 / m as f64; m],
    };
    let (x0, x1) = problem.stacked(&problem.pre_periods);
    let qp = SimplexQp::new(&x0, &x1, &v);
    Ok(WeightVector(qp.solve()))
}

/// Searches nonnegative trace-one diagonals V for the one whose induced weights
/// minimise MSPE over all pre-intervention periods.
///
/// Coordinate search from the uniform diagonal: each sweep tries moving one
/// entry up or down by `step / m` and renormalising, keeping the first strict
/// improvement. A sweep without improvement halves the step.
pub fn optimize_v(problem: &SynthProblem<'_>) -> Result<(Vec<f64>, WeightVector)> {
    let m = problem.pre_periods.len();
    let all_pre = problem.all_pre_periods.clone();
    let eval = |v: &[f64]| -> Result<(f64, WeightVector)> {
        let w = fit_weights(problem, Some(v))?;
        Ok((problem.mspe(&w, &all_pre), w))
    };

    let mut v = vec![1.0 / m as f64; m];
    let (mut best, mut best_w) = eval(&v)?;
    if m == 1 {
        return Ok((v, best_w));
    }
    let mut step = 0.5;
    for _ in 0..V_SEARCH_SWEEPS {
        let mut improved = false;
        'sweep: for i in 0..m {
            for dir in [1.0, -1.0] {
                let mut cand = v.clone();
                cand[i] = (cand[i] + dir * step / m as f64).max(0.0);
                let trace: f64 = cand.iter().sum();
                if trace <= 0.0 || cand == v {
                    continue;
                }
                cand.iter_mut().for_each(|x| *x /= trace);
                let (score, w) = eval(&cand)?;
                if score < best - 1e-15 * (1.0 + best) {
                    best = score;
                    best_w = w;
                    v = cand;
                    improved = true;
                    break 'sweep;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < V_SEARCH_MIN_STEP {
                break;
            }
        }
    }
    Ok((v, best_w))
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|yi| (yi - theta).max(0.0)).collect()
}

/// `min_w sum_k v_k (x0_k - (X1 w)_k)^2` over the simplex, in Gram form.
struct SimplexQp<'a> {
    n: usize,
    gram: Vec<f64>,
    lin: Vec<f64>,
    x0: &'a [f64],
    x1: &'a [Vec<f64>],
    v: &'a [f64],
}

impl<'a> SimplexQp<'a> {
    fn new(x0: &'a [f64], x1: &'a [Vec<f64>], v: &'a [f64]) -> Self {
        let n = x1.first().map_or(0, Vec::len);
        let mut gram = vec![0.0; n * n];
        let mut lin = vec![0.0; n];
        for ((row, &y), &vk) in x1.iter().zip(x0).zip(v) {
            for i in 0..n {
                let a = vk * row[i];
                lin[i] += a * y;
                for j in i..n {
                    gram[i * n + j] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[i * n + j] = gram[j * n + i];
            }
        }
        Self {
            n,
            gram,
            lin,
            x0,
            x1,
            v,
        }
    }

    /// Residual-form objective; avoids the cancellation of the Gram form near zero.
    fn value(&self, w: &[f64]) -> f64 {
        self.x1
            .iter()
            .zip(self.x0)
            .zip(self.v)
            .map(|((row, y), vk)| {
                let r = y - row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                vk * r * r
            })
            .sum()
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        for ((o, row), l) in out.iter_mut().zip(self.gram.chunks(self.n)).zip(&self.lin) {
            *o = 2.0 * (row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - l);
        }
    }

    /// Largest eigenvalue of the Gram matrix by power iteration, padded upward.
    fn lipschitz(&self) -> f64 {
        let n = self.n;
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let y: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| self.gram[i * n + j] * x[j]).sum())
                .collect();
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm;
            x = y.into_iter().map(|v| v / norm).collect();
            if (next - lambda).abs() <= 1e-12 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        let trace: f64 = (0..n).map(|i| self.gram[i * n + i]).sum();
        // power iteration underestimates; the trace bounds from above
        2.0 * (lambda * 1.05).min(trace).max(lambda)
    }

    fn stationarity(&self, w: &[f64], grad: &[f64]) -> f64 {
        let step: Vec<f64> = w.iter().zip(grad).map(|(a, g)| a - g).collect();
        let p = project_simplex(&step);
        w.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    fn solve(&self) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![1.0 / n as f64; n];
        if n == 1 {
            return w;
        }
        let lip = self.lipschitz();
        if lip == 0.0 {
            return w;
        }
        let mut y = w.clone();
        let mut t = 1.0_f64;
        let mut fw = self.value(&w);
        let mut grad = vec![0.0; n];
        let mut step = vec![0.0; n];
        for _ in 0..MAX_ITERATIONS {
            self.gradient(&y, &mut grad);
            for i in 0..n {
                step[i] = y[i] - grad[i] / lip;
            }
            let next = project_simplex(&step);
            let f_next = self.value(&next);
            if f_next > fw {
                // momentum overshot: restart from the last accepted point
                if y == w {
                    break;
                }
                y.clone_from(&w);
                t = 1.0;
                continue;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            for i in 0..n {
                y[i] = next[i] + beta * (next[i] - w[i]);
            }
            t = t_next;
            let improvement = fw - f_next;
            w = next;
            fw = f_next;
            self.gradient(&w, &mut grad);
            if self.stationarity(&w, &grad) < PROJECTED_GRADIENT_TOL || improvement <= IMPROVEMENT_TOL * fw {
                break;
            }
        }
        let w = match self.polish(&w) {
            Some(p) if self.value(&p) <= fw => p,
            _ => w,
        };
        self.refine(w)
    }

    /// Damped Newton corrections on the support, with residuals recomputed
    /// directly so that near-exact fits reach working precision.
    fn refine(&self, mut w: Vec<f64>) -> Vec<f64> {
        let mut fw = self.value(&w);
        let scale = self.gram.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if scale == 0.0 {
            return w;
        }
        for _ in 0..REFINE_STEPS {
            if fw == 0.0 {
                break;
            }
            let support: Vec<usize> = (0..self.n).filter(|&i| w[i] > 0.0).collect();
            let k = support.len();
            if k < 2 {
                break;
            }
            let resid: Vec<f64> = self
                .x1
                .iter()
                .zip(self.x0)
                .zip(self.v)
                .map(|((row, y), vk)| vk * (y - row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()))
                .collect();
            let dim = k + 1;
            let mut a = vec![0.0; dim * (dim + 1)];
            let idx = |r: usize, c: usize| r * (dim + 1) + c;
            for (r, &i) in support.iter().enumerate() {
                for (c, &j) in support.iter().enumerate() {
                    a[idx(r, c)] = self.gram[i * self.n + j];
                }
                a[idx(r, r)] += 1e-12 * scale;
                a[idx(r, k)] = 1.0;
                a[idx(k, r)] = 1.0;
                a[idx(r, dim)] = self.x1.iter().zip(&resid).map(|(row, rk)| row[i] * rk).sum();
            }
            let Some(d) = solve_dense(&mut a, dim, 0.0) else { break };
            let mut alpha = 1.0_f64;
            for (r, &i) in support.iter().enumerate() {
                if d[r] < 0.0 {
                    alpha = alpha.min(-w[i] / d[r]);
                }
            }
            let mut cand = w.clone();
            for (r, &i) in support.iter().enumerate() {
                cand[i] = (w[i] + alpha * d[r]).max(0.0);
            }
            let sum: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|x| *x /= sum);
            let fc = self.value(&cand);
            if fc >= fw {
                break;
            }
            w = cand;
            fw = fc;
        }
        w
    }

    /// Solves the equality-constrained problem on the support of `w` exactly.
    fn polish(&self, w: &[f64]) -> Option<Vec<f64>> {
        let support: Vec<usize> = (0..self.n).filter(|&i| w[i] > 1e-9).collect();
        let k = support.len();
        if k == 0 {
            return None;
        }
        // [G_SS 1; 1' 0] [w; mu] = [b_S; 1]
        let dim = k + 1;
        let mut a = vec![0.0; dim * (dim + 1)];
        let idx = |r: usize, c: usize| r * (dim + 1) + c;
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[idx(r, c)] = self.gram[i * self.n + j];
            }
            a[idx(r, k)] = 1.0;
            a[idx(r, dim)] = self.lin[i];
            a[idx(k, r)] = 1.0;
        }
        a[idx(k, dim)] = 1.0;
        let scale = self.gram.iter().fold(1.0_f64, |m, g| m.max(g.abs()));
        let sol = solve_dense(&mut a, dim, 1e-12 * scale)?;
        if sol[..k].iter().any(|x| *x < 0.0) {
            return None;
        }
        let mut out = vec![0.0; self.n];
        for (r, &i) in support.iter().enumerate() {
            out[i] = sol[r];
        }
        let sum: f64 = out.iter().sum();
        out.iter_mut().for_each(|x| *x /= sum);
        Some(out)
    }
}

/// Gaussian elimination with partial pivoting on an augmented `dim x (dim+1)` matrix.
fn solve_dense(a: &mut [f64], dim: usize, tiny: f64) -> Option<Vec<f64>> {
    let w = dim + 1;
    for col in 0..dim {
        let pivot = (col..dim).max_by(|&r, &s| a[r * w + col].abs().total_cmp(&a[s * w + col].abs()))?;
        if a[pivot * w + col].abs() <= tiny {
            return None;
        }
        if pivot != col {
            for c in 0..w {
                a.swap(pivot * w + c, col * w + c);
            }
        }
        for r in col + 1..dim {
            let f = a[r * w + col] / a[col * w + col];
            if f != 0.0 {
                for c in col..w {
                    a[r * w + c] -= f * a[col * w + c];
                }
            }
        }
    }
    let mut x = vec![0.0; dim];
    for r in (0..dim).rev() {
        let s: f64 = (r + 1..dim).map(|c| a[r * w + c] * x[c]).sum();
        x[r] = (a[r * w + dim] - s) / a[r * w + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PeriodRange;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel(rows: &[(&str, Vec<f64>)], first: i64) -> PanelSeries {
        let len = rows[0].1.len() as i64;
        PanelSeries::from_rows(
            "y",
            rows.iter().map(|(c, _)| c.to_string()).collect(),
            PeriodRange::new(first, first + len - 1).unwrap(),
            rows.iter().map(|(_, r)| r.clone()).collect(),
        )
        .unwrap()
    }

    fn donors(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_identical_donor() {
        let p = panel(&[("T", vec![1.0, 2.0, 3.0, 4.0]), ("A", vec![1.0, 2.0, 3.0, 9.0])], -3);
        let prob = SynthProblem::standard(&p, "T", donors(&["A"])).unwrap();
        let w = fit_weights(&prob, None).unwrap();
        assert_eq!(w.as_slice(), [1.0]);
        assert_eq!(prob.objective(&w, None), 0.0);
    }

    #[test]
    fn midpoint_of_two_donors() {
        let p = panel(
            &[
                ("T", vec![2.0, 3.0, 0.0]),
                ("A", vec![1.0, 5.0, 0.0]),
                ("B", vec![3.0, 1.0, 0.0]),
            ],
            -2,
        );
        let prob = SynthProblem::standard(&p, "T", donors(&["A", "B"])).unwrap();
        let w = fit_weights(&prob, None).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-12, "{w:?}");
        assert!((w.as_slice()[1] - 0.5).abs() < 1e-12, "{w:?}");
    }

    #[test]
    fn rejects_bad_problems() {
        let p = panel(&[("T", vec![1.0, f64::NAN]), ("A", vec![1.0, 2.0])], -1);
        assert!(matches!(
            SynthProblem::standard(&p, "T", donors(&["A"])),
            Err(Error::Data(_))
        ));
        let p = panel(&[("T", vec![1.0, 1.0]), ("A", vec![1.0, 2.0])], -1);
        assert!(SynthProblem::standard(&p, "T", donors(&["T"])).is_err());
        assert!(SynthProblem::standard(&p, "T", donors(&["Z"])).is_err());
        assert!(SynthProblem::new(&p, "T", donors(&["A"]), vec![], vec![-1], vec![0]).is_err());
        assert!(SynthProblem::new(&p, "T", donors(&["A"]), vec![0], vec![-1], vec![0]).is_err());
    }

    #[test]
    fn perfect_fit_gives_zero_pre_effects() {
        let p = panel(
            &[
                ("T", vec![2.0, 3.0, 4.0, 7.0]),
                ("A", vec![1.0, 2.0, 3.0, 4.0]),
                ("B", vec![3.0, 4.0, 5.0, 6.0]),
            ],
            -3,
        );
        let prob = SynthProblem::standard(&p, "T", donors(&["A", "B"])).unwrap();
        let fit = estimate(&prob, EstimatorConfig::default()).unwrap();
        for t in -3..0 {
            assert!(fit.effects.get(t).unwrap().abs() < 1e-12);
        }
        assert!((fit.effects.get(0).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit.rmse_pre < 1e-12);
    }

    #[test]
    fn post_shift_moves_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<(&str, Vec<f64>)> = ["T", "A", "B", "C"]
            .into_iter()
            .map(|c| (c, (0..8).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let base = panel(&rows, -5);
        let shifted_rows: Vec<(&str, Vec<f64>)> = rows
            .iter()
            .map(|(c, r)| {
                let r = if *c == "T" {
                    r.clone()
                } else {
                    r.iter()
                        .enumerate()
                        .map(|(i, v)| if i >= 5 { v + 0.7 } else { *v })
                        .collect()
                };
                (*c, r)
            })
            .collect();
        let shifted = panel(&shifted_rows, -5);
        let d = donors(&["A", "B", "C"]);
        let a = estimate(
            &SynthProblem::standard(&base, "T", d.clone()).unwrap(),
            EstimatorConfig::default(),
        )
        .unwrap();
        let b = estimate(
            &SynthProblem::standard(&shifted, "T", d).unwrap(),
            EstimatorConfig::default(),
        )
        .unwrap();
        assert_eq!(a.weights, b.weights);
        for t in 0..3 {
            assert!((a.effects.get(t).unwrap() - 0.7 - b.effects.get(t).unwrap()).abs() < 1e-12);
        }
    }

    fn random_panel(rng: &mut ChaCha8Rng, units: usize, periods: usize) -> PanelSeries {
        let names: Vec<String> = (0..units).map(|i| format!("U{i}")).collect();
        let rows = (0..units)
            .map(|_| (0..periods).map(|_| rng.random::<f64>() * 2.0).collect())
            .collect();
        PanelSeries::from_rows("y", names, PeriodRange::new(-(periods as i64) + 2, 1).unwrap(), rows).unwrap()
    }

    #[test]
    fn effects_match_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_panel(&mut rng, 6, 12);
        let d: Vec<String> = p.countries()[1..].to_vec();
        let prob = SynthProblem::standard(&p, "U0", d.clone()).unwrap();
        let w = fit_weights(&prob, None).unwrap();
        let eff = effect_series(&prob, &w).unwrap();
        for (i, t) in p.periods().enumerate() {
            let mut synth = 0.0;
            for (j, name) in d.iter().enumerate() {
                synth += w.as_slice()[j] * p.row(name).unwrap()[i];
            }
            assert_eq!(eff.get(t).unwrap(), p.row("U0").unwrap()[i] - synth);
        }
    }

    #[test]
    fn optimize_v_degenerate_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_panel(&mut rng, 5, 8);
        let prob = SynthProblem::standard(&p, "U0", p.countries()[1..].to_vec()).unwrap();
        let (v, _) = optimize_v(&prob).unwrap();
        let m = prob.pre_periods().len();
        assert!(v.iter().all(|x| (x - 1.0 / m as f64).abs() < 1e-15), "{v:?}");
    }

    #[test]
    fn optimize_v_never_worse_than_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let p = random_panel(&mut rng, 6, 14);
            let prob = SynthProblem::standard(&p, "U0", p.countries()[1..].to_vec())
                .unwrap()
                .subsampled(3)
                .unwrap();
            let (v, w) = optimize_v(&prob).unwrap();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let uniform = fit_weights(&prob, None).unwrap();
            let all = prob.all_pre_periods().to_vec();
            assert!(prob.mspe(&w, &all) <= prob.mspe(&uniform, &all));
        }
    }

    #[test]
    fn subsample_counts_back_from_last_pre_period() {
        let p = panel(&[("T", vec![0.0; 12]), ("A", vec![0.0; 12])], -10);
        let prob = SynthProblem::standard(&p, "T", donors(&["A"])).unwrap();
        assert_eq!(prob.subsampled(4).unwrap().pre_periods(), [-9, -5, -1]);
    }

    #[test]
    fn simplex_projection_basics() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[5.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weights_on_simplex_and_beat_vertices(seed in any::<u64>(), n in 2usize..9, m in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_panel(&mut rng, n + 1, m + 2);
            let d: Vec<String> = p.countries()[1..].to_vec();
            let prob = SynthProblem::standard(&p, "U0", d.clone()).unwrap();
            let w = fit_weights(&prob, None).unwrap();
            prop_assert!(w.as_slice().iter().all(|x| *x >= 0.0));
            prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let f = prob.objective(&w, None);
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                prop_assert!(f <= prob.objective(&WeightVector(e), None) + 1e-12);
            }
        }

        #[test]
        fn donor_order_does_not_matter(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_panel(&mut rng, 5, 12);
            let d: Vec<String> = p.countries()[1..].to_vec();
            let mut rev = d.clone();
            rev.reverse();
            let a = SynthProblem::standard(&p, "U0", d).unwrap();
            let b = SynthProblem::standard(&p, "U0", rev).unwrap();
            let wa = fit_weights(&a, None).unwrap();
            let wb = fit_weights(&b, None).unwrap();
            prop_assert!((a.objective(&wa, None) - b.objective(&wb, None)).abs() < 1e-12);
            for (x, y) in wa.as_slice().iter().zip(wb.as_slice().iter().rev()) {
                prop_assert!((x - y).abs() < 1e-6, "{:?} vs {:?}", wa, wb);
            }
        }

        #[test]
        fn duplicate_donor_never_hurts(seed in any::<u64>(), dup in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_panel(&mut rng, 5, 8);
            let mut names: Vec<String> = base.countries().to_vec();
            let mut rows: Vec<Vec<f64>> = base.rows().map(|(_, r)| r.to_vec()).collect();
            names.push("DUP".into());
            rows.push(rows[dup].clone());
            let p = PanelSeries::from_rows("y", names, base.range(), rows).unwrap();
            let small = SynthProblem::standard(&p, "U0", p.countries()[1..5].to_vec()).unwrap();
            let big = SynthProblem::standard(&p, "U0", p.countries()[1..].to_vec()).unwrap();
            let fs = small.objective(&fit_weights(&small, None).unwrap(), None);
            let fb = big.objective(&fit_weights(&big, None).unwrap(), None);
            prop_assert!(fb <= fs + 1e-12);
        }

        #[test]
        fn convex_hull_treated_fits_exactly(seed in any::<u64>()) {
            // noise-free factor model: treated is a convex combination of donors
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let periods = 12;
            let lambda: Vec<[f64; 2]> = (0..periods).map(|_| [rng.random(), rng.random()]).collect();
            let delta: Vec<f64> = (0..periods).map(|_| rng.random()).collect();
            let mus: Vec<[f64; 2]> = (0..6).map(|_| [rng.random(), rng.random()]).collect();
            let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let mix: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let mu0 = [0, 1].map(|k| mus.iter().zip(&mix).map(|(m, w)| m[k] * w).sum::<f64>());
            let series = |mu: [f64; 2]| -> Vec<f64> {
                (0..periods).map(|t| delta[t] + lambda[t][0] * mu[0] + lambda[t][1] * mu[1]).collect()
            };
            let mut rows = vec![("T".to_string(), series(mu0))];
            rows.extend(mus.iter().enumerate().map(|(i, m)| (format!("D{i}"), series(*m))));
            let p = PanelSeries::from_rows(
                "y",
                rows.iter().map(|r| r.0.clone()).collect(),
                PeriodRange::new(-10, 1).unwrap(),
                rows.into_iter().map(|r| r.1).collect(),
            ).unwrap();
            let prob = SynthProblem::standard(&p, "T", p.countries()[1..].to_vec()).unwrap();
            let fit = estimate(&prob, EstimatorConfig::default()).unwrap();
            for t in -10..0 {
                prop_assert!(fit.effects.get(t).unwrap().abs() < 1e-8, "t={} {:?}", t, fit.effects);
            }
        }
    }
}
