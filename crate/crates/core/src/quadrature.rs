//! Quadrature building blocks: cached Gauss rules, panel partitions,
//! power-weighted Jacobi rules and Chebyshev–Lobatto interpolation.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{GaussJacobi, GaussLaguerre, GaussLegendre};

/// Nodes and weights of a rule on the reference interval [0, 1]
/// (Legendre) or [0, ∞) with weight e^{-x} (Laguerre).
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// ∫_a^b f for a Legendre rule.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let w = b - a;
        let mut acc = 0.0;
        for (x, wt) in self.nodes.iter().zip(&self.weights) {
            acc += wt * f(a + w * x);
        }
        acc * w
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn cache(kind: u8) -> &'static Mutex<BTreeMap<usize, Arc<Rule>>> {
    static LEG: OnceLock<Mutex<BTreeMap<usize, Arc<Rule>>>> = OnceLock::new();
    static LAG: OnceLock<Mutex<BTreeMap<usize, Arc<Rule>>>> = OnceLock::new();
    match kind {
        0 => LEG.get_or_init(|| Mutex::new(BTreeMap::new())),
        _ => LAG.get_or_init(|| Mutex::new(BTreeMap::new())),
    }
}

/// Gauss–Legendre rule with `n` nodes mapped to [0, 1].
pub fn legendre(n: usize) -> Arc<Rule> {
    let n = n.max(2);
    let mut map = cache(0).lock().expect("quadrature cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let gl = GaussLegendre::new(n).expect("legendre degree >= 2");
            let mut pairs: Vec<(f64, f64)> = gl
                .as_node_weight_pairs()
                .iter()
                .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(Rule {
                nodes: pairs.iter().map(|p| p.0).collect(),
                weights: pairs.iter().map(|p| p.1).collect(),
            })
        })
        .clone()
}

/// Gauss–Laguerre rule with `n` nodes for ∫_0^∞ e^{-x} f(x) dx.
pub fn laguerre(n: usize) -> Arc<Rule> {
    let n = n.max(2);
    let mut map = cache(1).lock().expect("quadrature cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let gl = GaussLaguerre::new(n, 0.0).expect("laguerre degree >= 2");
            let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(Rule {
                nodes: pairs.iter().map(|p| p.0).collect(),
                weights: pairs.iter().map(|p| p.1).collect(),
            })
        })
        .clone()
}

/// Split (a, b) with a > 0 into panels whose endpoints grow at most by
/// `ratio` and whose width never exceeds `max_width`. Breakpoints inside
/// the interval are always panel endpoints.
pub fn geometric_panels(a: f64, b: f64, ratio: f64, max_width: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    let mut panels = Vec::new();
    let mut lo = a;
    for &hi in &cuts {
        while lo < hi {
            let step = (lo * (ratio - 1.0)).min(max_width).max(f64::MIN_POSITIVE);
            let next = if lo + step >= hi * (1.0 - 1e-14) { hi } else { lo + step };
            panels.push((lo, next));
            lo = next;
        }
    }
    panels
}

/// Gauss–Jacobi nodes and weights on [0, 1] for the weight s^e, e > -1.
pub fn jacobi(n: usize, e: f64) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<BTreeMap<(usize, u64), Arc<Rule>>>> = OnceLock::new();
    let n = n.max(2);
    let mut map = CACHE.get_or_init(|| Mutex::new(BTreeMap::new())).lock().expect("quadrature cache poisoned");
    map.entry((n, e.to_bits()))
        .or_insert_with(|| {
            let gj = GaussJacobi::new(n, 0.0, e).expect("jacobi exponent > -1");
            let scale = 0.5f64.powf(1.0 + e);
            let mut pairs: Vec<(f64, f64)> =
                gj.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), w * scale)).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(Rule {
                nodes: pairs.iter().map(|p| p.0).collect(),
                weights: pairs.iter().map(|p| p.1).collect(),
            })
        })
        .clone()
}

/// ∫_0^eps s^e F(s) ds for e > -1 and F smooth.
pub fn power_head<F: FnMut(f64) -> f64>(eps: f64, e: f64, n: usize, mut f: F) -> f64 {
    let rule = jacobi(n, e);
    let mut acc = 0.0;
    for (v, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(eps * v);
    }
    acc * eps.powf(1.0 + e)
}

/// Nodes and weights for ∫_0^t s^e F(s) ds with e > -1 and F smooth.
pub fn power_weighted_rule(t: f64, e: f64, n: usize) -> Vec<(f64, f64)> {
    let rule = jacobi(n, e);
    let scale = t.powf(1.0 + e);
    rule.nodes.iter().zip(&rule.weights).map(|(v, w)| (t * v, w * scale)).collect()
}

/// Chebyshev–Lobatto interpolation on an interval with barycentric weights.
#[derive(Debug, Clone)]
pub struct ChebyshevLobatto {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl ChebyshevLobatto {
    /// `count` nodes on [lo, hi]; a degenerate interval collapses to one node.
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        if !(hi > lo) || count < 2 {
            return Self { lo, hi: lo, nodes: vec![lo], bary: vec![1.0] };
        }
        let m = count - 1;
        let nodes = (0..count)
            .map(|l| {
                let c = (std::f64::consts::PI * l as f64 / m as f64).cos();
                0.5 * (lo + hi) - 0.5 * (hi - lo) * c
            })
            .collect();
        let bary = (0..count)
            .map(|l| {
                let s = if l % 2 == 0 { 1.0 } else { -1.0 };
                if l == 0 || l == m { 0.5 * s } else { s }
            })
            .collect();
        Self { lo, hi, nodes, bary }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Values of all Lagrange basis polynomials at `x` (written into `out`).
    pub fn basis_into(&self, x: f64, out: &mut [f64]) {
        let n = self.nodes.len();
        debug_assert_eq!(out.len(), n);
        if n == 1 {
            out[0] = 1.0;
            return;
        }
        for (l, &xl) in self.nodes.iter().enumerate() {
            if (x - xl).abs() <= 1e-14 * (self.hi - self.lo) {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[l] = 1.0;
                return;
            }
        }
        let mut denom = 0.0;
        for l in 0..n {
            let v = self.bary[l] / (x - self.nodes[l]);
            out[l] = v;
            denom += v;
        }
        out.iter_mut().for_each(|o| *o /= denom);
    }

    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        self.basis_into(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = legendre(8);
        let v = r.integrate(0.0, 2.0, |x| x.powi(7));
        assert!((v - 32.0).abs() < 1e-12);
    }

    #[test]
    fn laguerre_integrates_exponential_moments() {
        let r = laguerre(16);
        let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(3)).sum();
        assert!((v - 6.0).abs() < 1e-10);
    }

    #[test]
    fn power_head_matches_analytic() {
        let v = power_head(0.5, -0.5, 12, |_| 1.0);
        assert!((v - 2.0 * 0.5f64.sqrt()).abs() < 1e-13);
        let rule = power_weighted_rule(2.0, -0.3, 10);
        let s: f64 = rule.iter().map(|(x, w)| w * x).sum();
        let exact = 2.0f64.powf(1.7) / 1.7;
        assert!((s - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn panels_cover_interval_with_breaks() {
        let p = geometric_panels(0.1, 10.0, 2.0, 1.5, &[1.0, 3.3]);
        assert!((p[0].0 - 0.1).abs() < 1e-15);
        assert!((p.last().unwrap().1 - 10.0).abs() < 1e-15);
        for w in p.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert!(p.iter().any(|q| q.1 == 1.0));
        assert!(p.iter().all(|q| q.1 - q.0 <= 1.5 + 1e-12));
    }

    #[test]
    fn chebyshev_reproduces_polynomials() {
        let c = ChebyshevLobatto::new(1.0, 1.4, 6);
        let f = |x: f64| 3.0 * x.powi(5) - x + 2.0;
        let vals: Vec<f64> = c.nodes().iter().map(|&x| f(x)).collect();
        for &x in &[1.0, 1.13, 1.377, 1.4] {
            let b = c.basis(x);
            let v: f64 = b.iter().zip(&vals).map(|(a, b)| a * b).sum();
            assert!((v - f(x)).abs() < 1e-12);
        }
    }
}
