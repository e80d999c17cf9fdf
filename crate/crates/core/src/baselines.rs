//! Comparison methods producing pair weights: Pearson correlation with a
//! significance filter, DTW similarity `1/(d+1)`, and visibility graphs
//! compared with a Weisfeiler-Lehman subtree kernel.

use std::collections::{BTreeSet, HashMap};

use crate::data::{canonical_pairs, minmax_normalize, AlignedPanel, Feature};
use crate::error::{Error, Result};
use crate::network::PairWeights;

/// Sample correlation and two-sided p-value from Student's t with `n - 2`
/// degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::shape("pearson", format!("lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!("pearson needs at least 3 points, got {n}")));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson correlation undefined for a constant series"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok((r, correlation_p_value(r, n)))
}

/// Two-sided p-value of sample correlation `r` over `n` points.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t2 = r * r * df / (1.0 - r * r);
    // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    regularized_incomplete_beta(df / (df + t2), df / 2.0, 0.5)
}

/// Two-sided tail probability of Student's t.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` via Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Correlation weights; pairs with `p >= p_threshold` (or a constant
/// series) get `-inf`. A threshold of 1 or more disables the filter.
pub fn pcc_weights(panel: &AlignedPanel, feature: Feature, p_threshold: f64) -> Result<PairWeights> {
    let f = panel.feature_index(feature)?;
    let n = panel.symbols().len();
    let weights = canonical_pairs(n)
        .into_iter()
        .map(|(i, j)| match pearson(panel.row(i, f), panel.row(j, f)) {
            Ok((r, p)) if p < p_threshold || p_threshold >= 1.0 => Ok(r),
            Ok(_) => Ok(f64::NEG_INFINITY),
            Err(Error::Invalid(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    PairWeights::new(panel.symbols().to_vec(), weights)
}

/// Unconstrained DTW with absolute-difference cost.
pub fn dtw_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("dtw of an empty sequence"));
    }
    let m = y.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &a in x {
        cur[0] = f64::INFINITY;
        for (j, &b) in y.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(cur[j]);
            cur[j + 1] = (a - b).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// `1 / (d + 1)` on min-max normalized series.
pub fn dtw_weights(panel: &AlignedPanel, feature: Feature) -> Result<PairWeights> {
    let normalized = minmax_normalize(panel);
    let f = normalized.feature_index(feature)?;
    let weights = canonical_pairs(panel.symbols().len())
        .into_iter()
        .map(|(i, j)| dtw_distance(normalized.row(i, f), normalized.row(j, f)).map(|d| 1.0 / (d + 1.0)))
        .collect::<Result<Vec<_>>>()?;
    PairWeights::new(panel.symbols().to_vec(), weights)
}

/// Undirected labelled graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    pub nodes: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub labels: Vec<u64>,
}

impl SimpleGraph {
    /// Labels every node with its degree.
    pub fn new(nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= nodes || b >= nodes {
                return Err(Error::invalid(format!("invalid edge ({a}, {b}) for {nodes} nodes")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut labels = vec![0u64; nodes];
        for &(a, b) in &set {
            labels[a] += 1;
            labels[b] += 1;
        }
        Ok(Self {
            nodes,
            edges: set,
            labels,
        })
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

/// Natural visibility graph: `a < b` are linked iff every point strictly
/// between them lies strictly below the segment joining them.
pub fn visibility_graph(series: &[f64]) -> Result<SimpleGraph> {
    let n = series.len();
    if n < 2 {
        return Err(Error::invalid("visibility graph needs at least two points"));
    }
    let mut edges = Vec::new();
    for a in 0..n - 1 {
        edges.push((a, a + 1));
        let mut max_slope = series[a + 1] - series[a];
        for b in a + 2..n {
            let slope = (series[b] - series[a]) / (b - a) as f64;
            // near-collinear intermediates block, up to rounding of the slopes
            let tol = 1e-12 * slope.abs().max(max_slope.abs());
            if slope > max_slope + tol {
                edges.push((a, b));
            }
            max_slope = max_slope.max(slope);
        }
    }
    SimpleGraph::new(n, edges)
}

/// Normalized WL subtree kernel over iterations `0..=iterations`.
pub fn wl_similarity(g1: &SimpleGraph, g2: &SimpleGraph, iterations: usize) -> f64 {
    let (f1, f2) = wl_features(&[g1, g2], iterations);
    let dot = |a: &HashMap<(usize, u64), u64>, b: &HashMap<(usize, u64), u64>| -> f64 {
        a.iter().filter_map(|(k, &v)| b.get(k).map(|&w| (v * w) as f64)).sum()
    };
    let (k11, k22, k12) = (dot(&f1, &f1), dot(&f2, &f2), dot(&f1, &f2));
    if k11 == 0.0 || k22 == 0.0 {
        return if k11 == k22 { 1.0 } else { 0.0 };
    }
    (k12 / (k11 * k22).sqrt()).clamp(0.0, 1.0)
}

type Histogram = HashMap<(usize, u64), u64>;

/// Label-count histograms keyed by `(iteration, label)`, with the
/// relabelling dictionary shared across `graphs`.
fn wl_features(graphs: &[&SimpleGraph; 2], iterations: usize) -> (Histogram, Histogram) {
    let adj: Vec<Vec<Vec<usize>>> = graphs.iter().map(|g| g.neighbors()).collect();
    let mut labels: Vec<Vec<u64>> = graphs.iter().map(|g| g.labels.clone()).collect();
    let mut hists: Vec<Histogram> = vec![HashMap::new(), HashMap::new()];
    for it in 0..=iterations {
        for (h, ls) in hists.iter_mut().zip(&labels) {
            for &l in ls {
                *h.entry((it, l)).or_insert(0) += 1;
            }
        }
        if it == iterations {
            break;
        }
        let mut dict: HashMap<(u64, Vec<u64>), u64> = HashMap::new();
        let mut next = Vec::with_capacity(2);
        for (g, ls) in adj.iter().zip(&labels) {
            let relabelled = g
                .iter()
                .enumerate()
                .map(|(v, nb)| {
                    let mut sig: Vec<u64> = nb.iter().map(|&u| ls[u]).collect();
                    sig.sort_unstable();
                    let fresh = dict.len() as u64;
                    *dict.entry((ls[v], sig)).or_insert(fresh)
                })
                .collect::<Vec<_>>();
            next.push(relabelled);
        }
        labels = next;
    }
    let h2 = hists.pop().unwrap_or_default();
    let h1 = hists.pop().unwrap_or_default();
    (h1, h2)
}

/// Pair weight = WL similarity of the two stocks' visibility graphs.
pub fn vwl_weights(panel: &AlignedPanel, feature: Feature, iterations: usize) -> Result<PairWeights> {
    let f = panel.feature_index(feature)?;
    let graphs = (0..panel.symbols().len())
        .map(|s| visibility_graph(panel.row(s, f)))
        .collect::<Result<Vec<_>>>()?;
    let weights = canonical_pairs(graphs.len())
        .into_iter()
        .map(|(i, j)| wl_similarity(&graphs[i], &graphs[j], iterations))
        .collect();
    PairWeights::new(panel.symbols().to_vec(), weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let x = [1.0, 3.5, 2.0, 8.0, -1.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &x).unwrap(), (1.0, 0.0));
        assert_eq!(pearson(&x, &neg).unwrap().0, -1.0);
    }

    #[test]
    fn pearson_errors() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn t_statistic_for_reference_case() {
        let (r, n) = (0.9f64, 10.0f64);
        let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
        assert!((t - 5.840).abs() < 5e-4);
        let p = correlation_p_value(0.9, 10);
        assert!((p - 3.9e-4).abs() < 0.05e-4, "p = {p}");
    }

    #[test]
    fn dtw_examples() {
        let x = [0.3, 1.2, -4.0, 2.2];
        assert_eq!(dtw_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]).unwrap(), 3.0);
        assert_eq!(dtw_distance(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(dtw_distance(&[], &[1.0]).is_err());
    }

    #[test]
    fn visibility_examples() {
        let g = visibility_graph(&[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(g.edges, BTreeSet::from([(0, 1), (1, 2)]));
        let g = visibility_graph(&[5.0, -1.0]).unwrap();
        assert_eq!(g.edges, BTreeSet::from([(0, 1)]));
        let ramp: Vec<f64> = (0..10).map(|t| 0.1 * t as f64 + 3.0).collect();
        assert_eq!(visibility_graph(&ramp).unwrap().edges.len(), 9);
        // a valley sees across
        let g = visibility_graph(&[3.0, 1.0, 3.0]).unwrap();
        assert!(g.edges.contains(&(0, 2)));
        assert!(visibility_graph(&[1.0]).is_err());
    }

    #[test]
    fn wl_path2_vs_path3() {
        let p2 = SimpleGraph::new(2, [(0, 1)]).unwrap();
        let p3 = SimpleGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        // k(p2,p3) = 4, k(p2,p2) = 8, k(p3,p3) = 10
        let expected = 4.0 / 80f64.sqrt();
        assert!((wl_similarity(&p2, &p3, 1) - expected).abs() < 1e-15);
        assert_eq!(wl_similarity(&p3, &p3, 3), 1.0);
    }

    #[test]
    fn wl_disjoint_labels() {
        let edgeless = SimpleGraph::new(3, []).unwrap();
        let matching = SimpleGraph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(wl_similarity(&edgeless, &matching, 0), 0.0);
    }
}
