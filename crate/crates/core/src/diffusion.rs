//! Collective action with endogenous platform joining.
//!
//! Agents draw a protest cost `c` and a platform valuation `w` from a
//! bivariate normal. At price `q` and average participation `x`, an agent
//! joins when `w >= q - v(x)` and protests when it has joined and
//! `v(x) > c`. Symmetric equilibria are fixed points of
//! `phi(x) = P(c <= v(x) | w >= q - v(x))`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Platforms joined with probability at or below this count as empty.
pub const EMPTY_PLATFORM_TOL: f64 = 1e-12;
pub const DEFAULT_GRID: usize = 2001;
pub const BISECTION_TOL: f64 = 1e-10;
pub const THEOREM1_TOL: f64 = 1e-9;
/// `|phi(x) - x|` at or below this on a grid point counts as a fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub mu_c: f64,
    pub mu_w: f64,
    pub sigma_c: f64,
    pub sigma_w: f64,
    pub rho: f64,
}

impl PopulationParams {
    pub fn new(mu_c: f64, mu_w: f64, sigma_c: f64, sigma_w: f64, rho: f64) -> Result<Self> {
        let p = Self {
            mu_c,
            mu_w,
            sigma_c,
            sigma_w,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.mu_c, self.mu_w, self.sigma_c, self.sigma_w, self.rho]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("population parameters must be finite".into()));
        }
        if self.sigma_c <= 0.0 || self.sigma_w <= 0.0 {
            return Err(Error::Config(format!(
                "standard deviations must be positive (sigma_c={}, sigma_w={})",
                self.sigma_c, self.sigma_w
            )));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::Config(format!("correlation {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }

    /// Covariance of cost and valuation.
    pub fn omega_cw(&self) -> f64 {
        self.rho * self.sigma_c * self.sigma_w
    }

    /// `P(w >= a)`.
    pub fn join_prob(&self, a: f64) -> f64 {
        norm_cdf((self.mu_w - a) / self.sigma_w)
    }
}

/// Gauss-Legendre abscissae on (-1, 0) with their weights, 6/12/20 points.
const GL6: [(f64, f64); 3] = [
    (0.1713244923791705, -0.9324695142031522),
    (0.3607615730481384, -0.6612093864662647),
    (0.4679139345726904, -0.238619186083197),
];
const GL12: [(f64, f64); 6] = [
    (0.04717533638651177, -0.9815606342467191),
    (0.1069393259953183, -0.904117256370475),
    (0.1600783285433464, -0.769902674194305),
    (0.2031674267230659, -0.5873179542866171),
    (0.2334925365383547, -0.3678314989981802),
    (0.2491470458134029, -0.1252334085114692),
];
const GL20: [(f64, f64); 10] = [
    (0.01761400713915212, -0.9931285991850949),
    (0.04060142980038694, -0.9639719272779138),
    (0.06267204833410906, -0.912234428251326),
    (0.08327674157670475, -0.8391169718222188),
    (0.1019301198172404, -0.7463319064601508),
    (0.1181945319615184, -0.636053680726515),
    (0.1316886384491766, -0.5108670019508271),
    (0.1420961093183821, -0.3737060887154196),
    (0.1491729864726037, -0.2277858511416451),
    (0.1527533871307259, -0.07652652113349733),
];

/// `P(X > h, Y > k)` for standard bivariate normals with correlation `r`
/// (Drezner-Wesolowsky with Genz's refinements).
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if r >= 1.0 {
        return norm_cdf(-h.max(k));
    }
    if r <= -1.0 {
        return (norm_cdf(-h) - norm_cdf(k)).max(0.0);
    }
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r != 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in quad {
                for s in [-1.0, 1.0] {
                    let sn = (asr * (s * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (4.0 * PI);
        }
        return (bvn + norm_cdf(-h) * norm_cdf(-k)).clamp(0.0, 1.0);
    }
    let k = if r < 0.0 {
        hk = -hk;
        -k
    } else {
        k
    };
    let as_ = (1.0 - r) * (1.0 + r);
    let mut a = as_.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    let e = -(bs / as_ + hk) / 2.0;
    if e > -100.0 {
        bvn = a * e.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
    }
    if hk > -100.0 {
        let b = bs.sqrt();
        bvn -=
            (-hk / 2.0).exp() * (2.0 * PI).sqrt() * norm_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for &(w, x) in quad {
        for s in [-1.0, 1.0] {
            let xs = (a * (s * x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let e = -(bs / xs + hk) / 2.0;
            if e > -100.0 {
                bvn += a
                    * w
                    * e.exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    bvn /= -2.0 * PI;
    let out = if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else if h >= k {
        -bvn
    } else if h < 0.0 {
        norm_cdf(k) - norm_cdf(h) - bvn
    } else {
        norm_cdf(-h) - norm_cdf(-k) - bvn
    };
    out.clamp(0.0, 1.0)
}

/// `P(c <= t, w >= a)`.
pub fn rect_prob(t: f64, a: f64, p: &PopulationParams) -> f64 {
    let zc = (t - p.mu_c) / p.sigma_c;
    let zw = (a - p.mu_w) / p.sigma_w;
    if p.rho == 0.0 {
        return norm_cdf(zc) * norm_cdf(-zw);
    }
    // P(-Zc > -zc, Zw > zw), and corr(-Zc, Zw) = -rho
    bvn_upper(-zc, zw, -p.rho)
}

/// Participation value of protest as a function of the participation rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum ResponseFunction {
    /// `beta * x`.
    Linear { beta: f64 },
    /// `height * (s(k (x - m)) - s(-k m)) / (s(k (1 - m)) - s(-k m))` with the
    /// logistic `s`, so that `v(0) = 0` and `v(1) = height`.
    Logistic { height: f64, steepness: f64, midpoint: f64 },
    /// Piecewise-linear through `(x, v)` knots starting at `(0, 0)` and
    /// ending at `x = 1`.
    Table { knots: Vec<(f64, f64)> },
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ResponseFunction {
    pub fn linear(beta: f64) -> Result<Self> {
        let v = Self::Linear { beta };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Linear { beta } => {
                if !beta.is_finite() || *beta < 0.0 {
                    return Err(Error::Config(format!("linear slope {beta} must be finite and >= 0")));
                }
            }
            Self::Logistic {
                height,
                steepness,
                midpoint,
            } => {
                if !(height.is_finite()
                    && *height > 0.0
                    && steepness.is_finite()
                    && *steepness > 0.0
                    && midpoint.is_finite())
                {
                    return Err(Error::Config(
                        "logistic response needs height > 0, steepness > 0".into(),
                    ));
                }
            }
            Self::Table { knots } => {
                let ok = knots.len() >= 2
                    && knots[0] == (0.0, 0.0)
                    && knots.last().is_some_and(|k| k.0 == 1.0)
                    && knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1)
                    && knots.iter().all(|k| k.1.is_finite());
                if !ok {
                    return Err(Error::Config(
                        "table response needs knots from (0, 0) to x = 1, strictly increasing in both coordinates"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Linear { beta } => beta * x,
            Self::Logistic {
                height,
                steepness,
                midpoint,
            } => {
                let base = logistic(-steepness * midpoint);
                let top = logistic(steepness * (1.0 - midpoint));
                height * (logistic(steepness * (x - midpoint)) - base) / (top - base)
            }
            Self::Table { knots } => {
                let x = x.clamp(0.0, 1.0);
                let i = knots.partition_point(|k| k.0 < x).clamp(1, knots.len() - 1);
                let (x0, v0) = knots[i - 1];
                let (x1, v1) = knots[i];
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

/// `P(c <= v(x) | w >= q - v(x))`.
pub fn phi(x: f64, q: f64, v: &ResponseFunction, p: &PopulationParams) -> Result<f64> {
    let vx = v.eval(x);
    let a = q - vx;
    let join = p.join_prob(a);
    if join <= EMPTY_PLATFORM_TOL {
        return Err(Error::EmptyPlatform { threshold: a });
    }
    if p.rho == 0.0 {
        return Ok(norm_cdf((vx - p.mu_c) / p.sigma_c));
    }
    Ok((rect_prob(vx, a, p) / join).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    /// `phi` crosses the diagonal from above.
    Stable,
    /// `phi` crosses from below.
    Tipping,
    /// `phi` touches or runs along the diagonal.
    Degenerate,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Tipping => "tipping",
            Self::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub x: f64,
    pub stability: Stability,
}

/// Fixed points of `f` on `[0, 1]`, from sign changes of `f(x) - x` on a
/// uniform grid of `grid_n` points refined by bisection. `f` returns `None`
/// where it is undefined; such points are skipped.
pub fn find_fixed_points<F>(f: F, grid_n: usize) -> Vec<FixedPoint>
where
    F: Fn(f64) -> Option<f64>,
{
    assert!(grid_n >= 2, "grid needs at least two points");
    let xs: Vec<f64> = (0..grid_n).map(|i| i as f64 / (grid_n - 1) as f64).collect();
    let g: Vec<Option<f64>> = xs.iter().map(|&x| f(x).map(|y| y - x)).collect();
    let sign = |v: Option<f64>| {
        v.map(|d| {
            if d.abs() <= FIXED_POINT_TOL {
                0
            } else if d > 0.0 {
                1
            } else {
                -1
            }
        })
    };
    let mut out = Vec::new();
    for i in 0..grid_n {
        let Some(s) = sign(g[i]) else { continue };
        let left = if i > 0 { sign(g[i - 1]) } else { None };
        let right = sign(g.get(i + 1).copied().flatten());
        if s == 0 {
            let stability = match (left, right) {
                (Some(1), Some(-1)) | (None, Some(-1)) | (Some(1), None) => Stability::Stable,
                (Some(-1), Some(1)) | (None, Some(1)) | (Some(-1), None) => Stability::Tipping,
                _ => Stability::Degenerate,
            };
            out.push(FixedPoint { x: xs[i], stability });
            continue;
        }
        if let Some(r) = right {
            if r == -s {
                let (mut lo, mut hi) = (xs[i], xs[i + 1]);
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    match f(mid).map(|y| y - mid) {
                        Some(d) if d.abs() <= FIXED_POINT_TOL => {
                            lo = mid;
                            hi = mid;
                        }
                        Some(d) if (d > 0.0) == (s > 0) => lo = mid,
                        Some(_) => hi = mid,
                        None => break,
                    }
                }
                let stability = if s > 0 { Stability::Stable } else { Stability::Tipping };
                out.push(FixedPoint {
                    x: 0.5 * (lo + hi),
                    stability,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSet {
    pub q: f64,
    pub points: Vec<FixedPoint>,
    /// `(x, phi(x))` on the diagnostic grid; `None` where the platform is empty.
    pub grid: Vec<(f64, Option<f64>)>,
}

impl EquilibriumSet {
    pub fn stable(&self) -> impl Iterator<Item = f64> + '_ {
        self.points
            .iter()
            .filter(|p| p.stability == Stability::Stable)
            .map(|p| p.x)
    }

    pub fn tipping(&self) -> impl Iterator<Item = f64> + '_ {
        self.points
            .iter()
            .filter(|p| p.stability == Stability::Tipping)
            .map(|p| p.x)
    }
}

fn check_price(q: f64) -> Result<()> {
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::Config(format!("price {q} must be finite and >= 0")));
    }
    Ok(())
}

pub fn equilibria(q: f64, v: &ResponseFunction, p: &PopulationParams, grid_n: usize) -> Result<EquilibriumSet> {
    check_price(q)?;
    v.validate()?;
    p.validate()?;
    if grid_n < 2 {
        return Err(Error::Config("grid needs at least two points".into()));
    }
    let eval = |x: f64| match phi(x, q, v, p) {
        Ok(y) => Ok(Some(y)),
        Err(Error::EmptyPlatform { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let grid = (0..grid_n)
        .map(|i| {
            let x = i as f64 / (grid_n - 1) as f64;
            eval(x).map(|y| (x, y))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = find_fixed_points(|x| eval(x).ok().flatten(), grid_n);
    Ok(EquilibriumSet { q, points, grid })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    pub q: f64,
    pub q_prime: f64,
    pub omega_cw: f64,
    /// `(x, phi(x, q') - phi(x, q))` where both are defined.
    pub differences: Vec<(f64, f64)>,
    /// Grid points where the ordering fails by more than the tolerance.
    pub violations: Vec<(f64, f64)>,
    pub skipped: usize,
    pub before: EquilibriumSet,
    pub after: EquilibriumSet,
}

impl Theorem1Report {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares `phi` at prices `q < q_prime` on a grid: the difference must be
/// nonnegative when cost and valuation covary negatively, nonpositive when
/// positively, and zero when they are uncorrelated.
pub fn theorem1_check(
    q: f64,
    q_prime: f64,
    v: &ResponseFunction,
    p: &PopulationParams,
    grid_n: usize,
) -> Result<Theorem1Report> {
    if q_prime.partial_cmp(&q) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Config(format!("q' = {q_prime} must exceed q = {q}")));
    }
    let before = equilibria(q, v, p, grid_n)?;
    let after = equilibria(q_prime, v, p, grid_n)?;
    let omega = p.omega_cw();
    let mut differences = Vec::new();
    let mut violations = Vec::new();
    let mut skipped = 0;
    for (&(x, a), &(_, b)) in before.grid.iter().zip(&after.grid) {
        let (Some(a), Some(b)) = (a, b) else {
            skipped += 1;
            continue;
        };
        let d = b - a;
        let bad = if omega < 0.0 {
            d < -THEOREM1_TOL
        } else if omega > 0.0 {
            d > THEOREM1_TOL
        } else {
            d.abs() > THEOREM1_TOL
        };
        if bad {
            violations.push((x, d));
        }
        differences.push((x, d));
    }
    Ok(Theorem1Report {
        q,
        q_prime,
        omega_cw: omega,
        differences,
        violations,
        skipped,
        before,
        after,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationBranch {
    pub start: f64,
    pub x: f64,
    pub rounds: usize,
    pub converged: bool,
    /// Length of the periodic orbit the finite population settled into; 0 for
    /// a fixed point. `x` is then the orbit mean.
    pub cycle: usize,
    /// No agent joined in some round; `x` is then 0.
    pub empty_platform: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationResult {
    pub from_zero: SimulationBranch,
    pub from_one: SimulationBranch,
}

pub const MIN_AGENTS: usize = 1000;
pub const DEFAULT_MAX_ROUNDS: usize = 500;
pub const SIMULATION_TOL: f64 = 1e-6;
const AGENT_CHUNK: usize = 4096;
const CYCLE_WINDOW: usize = 64;

/// Draws `n` agents; chunk `k` uses stream `k` of the seeded generator, so the
/// draws do not depend on the thread count.
pub fn sample_agents(n: usize, p: &PopulationParams, seed: u64) -> Vec<(f64, f64)> {
    let tail = (1.0 - p.rho * p.rho).max(0.0).sqrt();
    (0..n.div_ceil(AGENT_CHUNK))
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let len = AGENT_CHUNK.min(n - chunk * AGENT_CHUNK);
            (0..len)
                .map(|_| {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    (p.mu_c + p.sigma_c * z1, p.mu_w + p.sigma_w * (p.rho * z1 + tail * z2))
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn best_response(agents: &[(f64, f64)], x: f64, q: f64, v: &ResponseFunction) -> Option<f64> {
    let vx = v.eval(x);
    let a = q - vx;
    let (joiners, protesters) = agents
        .par_iter()
        .fold(
            || (0u64, 0u64),
            |(j, pr), &(c, w)| {
                if w >= a {
                    (j + 1, pr + u64::from(vx > c))
                } else {
                    (j, pr)
                }
            },
        )
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (joiners > 0).then(|| protesters as f64 / joiners as f64)
}

fn run_branch(agents: &[(f64, f64)], start: f64, q: f64, v: &ResponseFunction, max_rounds: usize) -> SimulationBranch {
    let mut x = start;
    let mut history = vec![start];
    let mut branch = SimulationBranch {
        start,
        x,
        rounds: max_rounds,
        converged: false,
        cycle: 0,
        empty_platform: false,
    };
    for round in 1..=max_rounds {
        let Some(next) = best_response(agents, x, q, v) else {
            branch.x = 0.0;
            branch.rounds = round;
            branch.empty_platform = true;
            return branch;
        };
        let delta = (next - x).abs();
        x = next;
        if delta < SIMULATION_TOL {
            branch.x = x;
            branch.rounds = round;
            branch.converged = true;
            return branch;
        }
        let recent = history.len().saturating_sub(CYCLE_WINDOW);
        if let Some(i) = history[recent..].iter().rposition(|h| *h == x) {
            let orbit = &history[recent + i..];
            branch.x = orbit.iter().sum::<f64>() / orbit.len() as f64;
            branch.rounds = round;
            branch.converged = true;
            branch.cycle = orbit.len();
            return branch;
        }
        history.push(x);
    }
    branch.x = x;
    branch
}

/// Best-response dynamics in a finite population, started from nobody and
/// from everybody protesting.
pub fn agent_simulation(
    n_agents: usize,
    q: f64,
    v: &ResponseFunction,
    p: &PopulationParams,
    seed: u64,
    max_rounds: usize,
) -> Result<SimulationResult> {
    if n_agents < MIN_AGENTS {
        return Err(Error::Config(format!(
            "{n_agents} agents; at least {MIN_AGENTS} required"
        )));
    }
    check_price(q)?;
    v.validate()?;
    p.validate()?;
    let agents = sample_agents(n_agents, p, seed);
    Ok(SimulationResult {
        from_zero: run_branch(&agents, 0.0, q, v, max_rounds),
        from_one: run_branch(&agents, 1.0, q, v, max_rounds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `P(X > h, Y > k)` as `int_h^inf pdf(x) P(Y > k | x) dx` by composite Simpson.
    fn bvn_upper_quadrature(h: f64, k: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        let f = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt() * norm_cdf((r * x - k) / s);
        let (a, b) = (h.max(-12.0), 12.0);
        if a >= b {
            return 0.0;
        }
        let n = 200_000;
        let step = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            sum += f(a + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * step / 3.0
    }

    #[test]
    fn gauss_legendre_tables_integrate_polynomials() {
        // weights over (-1, 0) plus mirror sum to 2; odd moments vanish; x^2 integrates to 2/3
        for table in [&GL6[..], &GL12[..], &GL20[..]] {
            let w: f64 = table.iter().map(|(w, _)| 2.0 * w).sum();
            let m2: f64 = table.iter().map(|(w, x)| 2.0 * w * x * x).sum();
            let m4: f64 = table.iter().map(|(w, x)| 2.0 * w * x.powi(4)).sum();
            assert!((w - 2.0).abs() < 1e-14);
            assert!((m2 - 2.0 / 3.0).abs() < 1e-14);
            assert!((m4 - 0.4).abs() < 1e-14);
        }
    }

    #[test]
    fn bvn_matches_quadrature() {
        for &r in &[
            -0.999, -0.95, -0.93, -0.8, -0.5, -0.1, 0.0, 0.2, 0.6, 0.9, 0.94, 0.99, 0.9999,
        ] {
            for &(h, k) in &[
                (0.0, 0.0),
                (-1.3, 0.4),
                (0.7, 1.9),
                (2.5, -2.0),
                (-3.0, -0.5),
                (1.0, 1.0),
            ] {
                let got = bvn_upper(h, k, r);
                let want = bvn_upper_quadrature(h, k, r);
                assert!((got - want).abs() < 1e-10, "h={h} k={k} r={r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bvn_known_values() {
        // orthant probability 1/4 + asin(r)/(2 pi)
        for r in [-0.9, -0.3, 0.0, 0.5, 0.95] {
            let want = 0.25 + f64::asin(r) / (2.0 * PI);
            assert!((bvn_upper(0.0, 0.0, r) - want).abs() < 1e-14);
        }
        assert_eq!(bvn_upper(0.3, -0.2, 1.0), norm_cdf(-0.3));
        assert!((bvn_upper(-0.3, -0.2, -1.0) - (norm_cdf(0.2) - norm_cdf(-0.3))).abs() < 1e-15);
        assert_eq!(bvn_upper(0.3, 0.2, -1.0), 0.0);
    }

    fn params(rho: f64) -> PopulationParams {
        PopulationParams::new(1.0, 0.0, 1.0, 1.0, rho).unwrap()
    }

    #[test]
    fn independence_factorizes() {
        let p = params(0.0);
        let got = rect_prob(0.4, -0.7, &p);
        assert_eq!(got, norm_cdf(-0.6) * (1.0 - norm_cdf(-0.7)));
    }

    #[test]
    fn vacuous_valuation_gives_marginal() {
        let p = params(0.6);
        assert!((rect_prob(0.4, -1e3, &p) - norm_cdf(-0.6)).abs() < 1e-15);
    }

    #[test]
    fn phi_at_zero_independent() {
        let v = ResponseFunction::linear(2.0).unwrap();
        let got = phi(0.0, 0.5, &v, &params(0.0)).unwrap();
        assert!((got - 0.158655).abs() < 1e-6);
        assert!((got - norm_cdf(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_platform_is_an_error() {
        let v = ResponseFunction::linear(0.0).unwrap();
        assert!(matches!(
            phi(0.0, 40.0, &v, &params(0.0)),
            Err(Error::EmptyPlatform { .. })
        ));
    }

    #[test]
    fn response_forms() {
        let l = ResponseFunction::Logistic {
            height: 2.0,
            steepness: 12.0,
            midpoint: 0.5,
        };
        l.validate().unwrap();
        assert!(l.eval(0.0).abs() < 1e-15);
        assert!((l.eval(1.0) - 2.0).abs() < 1e-14);
        let t = ResponseFunction::Table {
            knots: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.5)],
        };
        t.validate().unwrap();
        assert_eq!(t.eval(0.25), 0.5);
        assert_eq!(t.eval(0.75), 1.25);
        assert!(ResponseFunction::Table {
            knots: vec![(0.1, 0.0), (1.0, 1.0)]
        }
        .validate()
        .is_err());
        assert!(ResponseFunction::linear(-1.0).is_err());
    }

    #[test]
    fn constant_map_single_stable_point() {
        let pts = find_fixed_points(|_| Some(0.3), DEFAULT_GRID);
        assert_eq!(pts.len(), 1);
        assert!((pts[0].x - 0.3).abs() < 1e-10);
        assert_eq!(pts[0].stability, Stability::Stable);
    }

    #[test]
    fn identity_map_all_degenerate() {
        let pts = find_fixed_points(Some, 101);
        assert_eq!(pts.len(), 101);
        assert!(pts.iter().all(|p| p.stability == Stability::Degenerate));
    }

    #[test]
    fn endpoint_fixed_points() {
        let pts = find_fixed_points(|x| Some(x * x), 11);
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].x, pts[0].stability), (0.0, Stability::Stable));
        assert_eq!((pts[1].x, pts[1].stability), (1.0, Stability::Tipping));
    }

    fn s_shaped() -> (ResponseFunction, PopulationParams) {
        let v = ResponseFunction::Logistic {
            height: 1.0,
            steepness: 10.0,
            midpoint: 0.5,
        };
        (v, PopulationParams::new(0.5, 0.0, 0.15, 1.0, 0.0).unwrap())
    }

    #[test]
    fn s_shape_has_low_tipping_high() {
        let (v, p) = s_shaped();
        let eq = equilibria(0.2, &v, &p, DEFAULT_GRID).unwrap();
        let kinds: Vec<Stability> = eq.points.iter().map(|f| f.stability).collect();
        assert_eq!(kinds, [Stability::Stable, Stability::Tipping, Stability::Stable]);
        // symmetric construction puts the tipping point at one half
        assert!((eq.points[1].x - 0.5).abs() < 1e-9);
        assert!(eq.points[0].x < 0.05 && eq.points[2].x > 0.95);
        // dense-plot oracle: phi - x has exactly three sign changes
        let n = 100_001;
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                phi(x, 0.2, &v, &p).unwrap() - x
            })
            .collect();
        let changes = g.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        assert_eq!(changes, 3);
        for f in &eq.points {
            assert!((phi(f.x, 0.2, &v, &p).unwrap() - f.x).abs() < 1e-8);
        }
    }

    #[test]
    fn theorem1_signs() {
        let v = ResponseFunction::linear(1.5).unwrap();
        for rho in [-0.8, 0.0, 0.8] {
            let r = theorem1_check(0.2, 0.7, &v, &params(rho), 401).unwrap();
            assert!(
                r.passed(),
                "rho={rho}: {:?}",
                &r.violations[..r.violations.len().min(3)]
            );
            if rho == 0.0 {
                assert!(r.differences.iter().all(|(_, d)| d.abs() <= 1e-15));
            } else {
                assert!(r.differences.iter().any(|(_, d)| d.abs() > 1e-3));
            }
        }
        assert!(theorem1_check(0.5, 0.5, &v, &params(0.0), 11).is_err());
    }

    #[test]
    fn two_cycle_reports_orbit_mean() {
        // below x = 0.5 only the two committed agents join; from 0.5 on, three
        // non-protesters join too, pulling the share back down
        let mut agents = vec![(-1.0, 10.0), (2.0, 10.0)];
        agents.extend([(2.0, 0.5); 3]);
        let v = ResponseFunction::linear(1.0).unwrap();
        let b = run_branch(&agents, 0.0, 1.0, &v, 100);
        assert!(b.converged);
        assert_eq!(b.cycle, 2);
        assert!((b.x - 0.35).abs() < 1e-15);
        assert_eq!(b.rounds, 3);
    }

    #[test]
    fn simulation_with_flat_response() {
        let v = ResponseFunction::linear(0.0).unwrap();
        let p = params(0.0);
        let r = agent_simulation(100_000, 0.0, &v, &p, 3, DEFAULT_MAX_ROUNDS).unwrap();
        let want = norm_cdf(-1.0);
        for b in [r.from_zero, r.from_one] {
            assert!(b.converged);
            assert!((b.x - want).abs() < 0.005, "{} vs {want}", b.x);
        }
        assert_eq!(
            r,
            agent_simulation(100_000, 0.0, &v, &p, 3, DEFAULT_MAX_ROUNDS).unwrap()
        );
        assert!(agent_simulation(999, 0.0, &v, &p, 3, 10).is_err());
    }

    #[test]
    fn simulation_finds_both_stable_points() {
        let (v, p) = s_shaped();
        let eq = equilibria(0.2, &v, &p, DEFAULT_GRID).unwrap();
        let stable: Vec<f64> = eq.stable().collect();
        let r = agent_simulation(50_000, 0.2, &v, &p, 11, DEFAULT_MAX_ROUNDS).unwrap();
        assert!((r.from_zero.x - stable[0]).abs() < 0.01);
        assert!((r.from_one.x - stable[1]).abs() < 0.01);
    }

    #[test]
    fn sampling_is_thread_independent() {
        let p = params(-0.4);
        let a = sample_agents(10_000, &p, 5);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_agents(10_000, &p, 5));
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inclusion_exclusion(
            t in -3.0f64..3.0, a in -3.0f64..3.0, mu_c in -1.0f64..1.0, mu_w in -1.0f64..1.0,
            sc in 0.2f64..3.0, sw in 0.2f64..3.0, rho in -1.0f64..=1.0,
        ) {
            let p = PopulationParams::new(mu_c, mu_w, sc, sw, rho).unwrap();
            let upper = rect_prob(t, a, &p);
            // P(c <= t, w < a) = P(-c >= -t, -w > -a) with corr(-c, -w) = rho
            let lower = bvn_upper(-(t - mu_c) / sc, -(a - mu_w) / sw, rho);
            prop_assert!((upper + lower - norm_cdf((t - mu_c) / sc)).abs() < 1e-9);
        }

        #[test]
        fn phi_is_a_probability(x in 0.0f64..=1.0, q in 0.0f64..3.0, rho in -1.0f64..=1.0, beta in 0.0f64..3.0) {
            let v = ResponseFunction::linear(beta).unwrap();
            if let Ok(y) = phi(x, q, &v, &params(rho)) {
                prop_assert!((0.0..=1.0).contains(&y));
            }
        }

        #[test]
        fn phi_monotone_in_x_when_independent(beta in 0.01f64..3.0, q in 0.0f64..2.0, mu_c in -1.0f64..2.0) {
            let v = ResponseFunction::linear(beta).unwrap();
            let p = PopulationParams::new(mu_c, 0.0, 0.7, 1.0, 0.0).unwrap();
            let ys: Vec<f64> = (0..101).map(|i| phi(i as f64 / 100.0, q, &v, &p).unwrap()).collect();
            prop_assert!(ys.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn phi_monotone_in_price(rho in -0.99f64..0.99, q in 0.0f64..1.0, dq in 0.01f64..1.0, x in 0.0f64..=1.0) {
            let v = ResponseFunction::linear(1.0).unwrap();
            let p = params(rho);
            let (a, b) = (phi(x, q, &v, &p).unwrap(), phi(x, q + dq, &v, &p).unwrap());
            if rho < 0.0 {
                prop_assert!(b - a >= -THEOREM1_TOL);
            } else {
                prop_assert!(b - a <= THEOREM1_TOL);
            }
        }
    }
}
