//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use bart_rdd::data::{strip_side, StripSide};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * (x - mean) * (x - mean) / var
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    // below a few ulps of the panel estimate the error test only sees roundoff
    let floor = 4.0 * f64::EPSILON * (left + right).abs();
    if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
        return left + right + delta / 15.0;
    }
    adaptive_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    adaptive_rec(f, a, fa, b, fb, m, fm, whole, tol, 60)
}

/// Log of `integral prod_i N(r_i; mu, sigma2 / w_i) N(mu; 0, tau) dmu`,
/// computed by quadrature around the integrand's mode.
pub fn log_marginal_by_quadrature(r: &[f64], w: &[f64], sigma2: f64, tau: f64) -> f64 {
    let log_f = |mu: f64| -> f64 {
        r.iter()
            .zip(w)
            .map(|(&ri, &wi)| log_normal_pdf(ri, mu, sigma2 / wi))
            .sum::<f64>()
            + log_normal_pdf(mu, 0.0, tau)
    };
    // the integrand is a Gaussian bump in mu; centre the grid on it
    let prec: f64 = w.iter().sum::<f64>() / sigma2 + 1.0 / tau;
    let centre = r.iter().zip(w).map(|(&ri, &wi)| wi * ri).sum::<f64>() / sigma2 / prec;
    let spread = 1.0 / prec.sqrt();
    let peak = log_f(centre);
    let f = |mu: f64| (log_f(mu) - peak).exp();
    let integral = adaptive_simpson(&f, centre - 40.0 * spread, centre + 40.0 * spread, 1e-15);
    integral.ln() + peak
}

/// Log of `prod_i N(r_i; 0, sigma2 / w_i)`, the factor the closed form drops.
pub fn log_null_density(r: &[f64], w: &[f64], sigma2: f64) -> f64 {
    r.iter()
        .zip(w)
        .map(|(&ri, &wi)| log_normal_pdf(ri, 0.0, sigma2 / wi))
        .sum()
}

/// Pearson chi-square p-value. Bins with expected count below five are pooled.
pub fn chi_square_pvalue(observed: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            bins.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        bins.push(pooled);
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dist = ChiSquared::new((bins.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Two-sided one-sample Kolmogorov-Smirnov p-value (asymptotic).
pub fn ks_pvalue(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

/// One root decision of an enumerable node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootOption {
    Stop,
    Split { feature: usize, threshold: f64 },
}

/// Exact root-level selection probabilities under Grow-From-Root, built
/// from quadrature marginals. The root sits at depth zero, so the depth
/// penalty reduces to `1 / alpha - 1`. Every distinct split position is a candidate.
/// With `strip = Some((cutoff, h, n_omin, alpha))` candidates that leave a
/// cutoff-covering child with fewer than `n_omin` strip points on a side
/// get zero weight, and stopping is ruled out when the strip share of the
/// node is below `alpha`.
pub struct EnumerableNode<'a> {
    pub cols: &'a [Vec<f64>],
    /// Observation weights `w_i` and partial residuals `r_i`.
    pub w: &'a [f64],
    pub r: &'a [f64],
    pub sigma2: f64,
    pub tau: f64,
    pub tree_alpha: f64,
    pub strip: Option<(f64, f64, usize, f64)>,
}

impl EnumerableNode<'_> {
    fn log_m(&self, idx: &[usize]) -> f64 {
        let r: Vec<f64> = idx.iter().map(|&i| self.r[i]).collect();
        let w: Vec<f64> = idx.iter().map(|&i| self.w[i]).collect();
        log_marginal_by_quadrature(&r, &w, self.sigma2, self.tau)
    }

    fn strip_counts(&self, idx: &[usize], c: f64, h: f64) -> (usize, usize) {
        let mut out = (0, 0);
        for &i in idx {
            match strip_side(self.cols[0][i], c, h) {
                StripSide::Left => out.0 += 1,
                StripSide::Right => out.1 += 1,
                StripSide::Outside => {}
            }
        }
        out
    }

    pub fn options(&self) -> (Vec<RootOption>, Vec<f64>) {
        let n = self.r.len();
        let all: Vec<usize> = (0..n).collect();
        let mut opts = Vec::new();
        let mut logw = Vec::new();
        for (j, col) in self.cols.iter().enumerate() {
            let mut vals = col.clone();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for &t in &vals[..vals.len() - 1] {
                let left: Vec<usize> = all.iter().copied().filter(|&i| col[i] <= t).collect();
                let right: Vec<usize> = all.iter().copied().filter(|&i| col[i] > t).collect();
                let mut lw = self.log_m(&left) + self.log_m(&right);
                if let Some((c, h, n_omin, _)) = self.strip {
                    // running-variable splits move the child intervals
                    let (left_covers, right_covers) = if j == 0 {
                        (c <= t, c > t)
                    } else {
                        (true, true)
                    };
                    for (covers, idx) in [(left_covers, &left), (right_covers, &right)] {
                        let (nl, nr) = self.strip_counts(idx, c, h);
                        if covers && nl.min(nr) < n_omin {
                            lw = f64::NEG_INFINITY;
                        }
                    }
                }
                opts.push(RootOption::Split {
                    feature: j,
                    threshold: t,
                });
                logw.push(lw);
            }
        }
        let k = opts.len() as f64;
        let mut stop = k.ln() + (1.0 / self.tree_alpha - 1.0).ln() + self.log_m(&all);
        if let Some((c, h, _, alpha)) = self.strip {
            let (nl, nr) = self.strip_counts(&all, c, h);
            if ((nl + nr) as f64) / (n as f64) < alpha {
                stop = f64::NEG_INFINITY;
            }
        }
        opts.push(RootOption::Stop);
        logw.push(stop);
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            // nothing valid and stopping forbidden: the root stays a leaf
            let mut probs = vec![0.0; logw.len()];
            *probs.last_mut().unwrap() = 1.0;
            return (opts, probs);
        }
        let wsum: f64 = logw.iter().map(|l| (l - max).exp()).sum();
        let probs = logw.iter().map(|l| (l - max).exp() / wsum).collect();
        (opts, probs)
    }
}

/// Root decision of a grown tree.
pub fn root_option(tree: &bart_rdd::forest::TreeNode) -> RootOption {
    match tree {
        bart_rdd::forest::TreeNode::Leaf { .. } => RootOption::Stop,
        bart_rdd::forest::TreeNode::Internal { var, threshold, .. } => RootOption::Split {
            feature: *var,
            threshold: *threshold,
        },
    }
}

/// Compares closed-form and quadrature marginals on one random node and
/// returns the relative discrepancy, measured against `max(|quadrature|, 1)`.
pub fn lml_discrepancy<R: rand::Rng>(rng: &mut R) -> f64 {
    use bart_rdd::forest::{log_marginal_likelihood, SuffStat};
    let n = rng.random_range(1..=12);
    let sigma2 = rng.random_range(0.2..3.0);
    let tau = rng.random_range(0.01..2.0);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut s = SuffStat::default();
    for (&wi, &ri) in w.iter().zip(&r) {
        s.push(wi, wi * ri);
    }
    let closed =
        log_marginal_likelihood(&s, sigma2, tau).unwrap() + log_null_density(&r, &w, sigma2);
    let quad = log_marginal_by_quadrature(&r, &w, sigma2, tau);
    (closed - quad).abs() / quad.abs().max(1.0)
}

/// One enumerable node: a running variable and an optional binary
/// covariate, at most eight points and at most six split candidates.
pub struct EnumerableCase {
    pub cols: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    pub sigma2: f64,
    pub tau: f64,
    pub tree_alpha: f64,
}

pub fn random_enumerable_case<R: rand::Rng>(rng: &mut R) -> EnumerableCase {
    let with_cov = rng.random_bool(0.5);
    // distinct running-variable values, so candidates = (distinct - 1) + covariate
    let distinct = if with_cov {
        rng.random_range(2..=6)
    } else {
        rng.random_range(2..=7)
    };
    let n = rng.random_range(distinct..=8);
    let mut x: Vec<f64> = (0..n).map(|i| (i % distinct) as f64 * 0.1 - 0.25).collect();
    for i in (1..n).rev() {
        x.swap(i, rng.random_range(0..=i));
    }
    let mut cols = vec![x];
    if with_cov {
        let mut cov: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        for i in (1..n).rev() {
            cov.swap(i, rng.random_range(0..=i));
        }
        cols.push(cov);
    }
    EnumerableCase {
        w: (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
        r: cols[0]
            .iter()
            .map(|&v| 2.0 * v + rng.random_range(-0.4..0.4))
            .collect(),
        cols,
        sigma2: rng.random_range(0.05..0.5),
        tau: rng.random_range(0.1..1.0),
        tree_alpha: rng.random_range(0.5..0.97),
    }
}

/// Grows `grows` depth-limited trees on the case and returns the chi-square
/// p-value of the root decisions against the enumerated probabilities,
/// along with the number of options.
pub fn gfr_frequency_pvalue(
    case: &EnumerableCase,
    strip: Option<(f64, f64, usize, f64)>,
    grows: usize,
    seed: u64,
) -> (f64, usize) {
    use bart_rdd::constraint::RddPolicy;
    use bart_rdd::data::ConstraintConfig;
    use bart_rdd::forest::{
        grow_from_root, FeatureMatrix, GrowParams, SplitPolicy, TreeData, Unconstrained,
    };

    let node = EnumerableNode {
        cols: &case.cols,
        w: &case.w,
        r: &case.r,
        sigma2: case.sigma2,
        tau: case.tau,
        tree_alpha: case.tree_alpha,
        strip,
    };
    let (opts, probs) = node.options();
    let fm = FeatureMatrix::new(case.cols.clone());
    let scores: Vec<f64> = case.w.iter().zip(&case.r).map(|(w, r)| w * r).collect();
    let params = GrowParams {
        max_depth: 1,
        min_node_size: 1,
        num_cutpoints: 100,
        tree_alpha: case.tree_alpha,
        tree_beta: 1.25,
        leaf_variance: case.tau,
        sigma2: case.sigma2,
    };
    let n = case.r.len();
    let (policy, tags): (Box<dyn SplitPolicy>, Option<Vec<StripSide>>) = match strip {
        Some((c, h, n_omin, alpha)) => (
            Box::new(RddPolicy::new(ConstraintConfig { h, n_omin, alpha }, c)),
            Some(case.cols[0].iter().map(|&x| strip_side(x, c, h)).collect()),
        ),
        None => (Box::new(Unconstrained), None),
    };
    let mut rng = bart_rdd::rng::rng_from_seed(seed);
    let mut counts = vec![0u64; opts.len()];
    let mut fit = vec![0.0; n];
    for _ in 0..grows {
        let out = grow_from_root(
            TreeData {
                features: &fm,
                weights: &case.w,
                scores: &scores,
                strip: tags.as_deref(),
            },
            &params,
            policy.as_ref(),
            &mut rng,
            &mut fit,
        );
        let root = root_option(&out.tree);
        let k = opts
            .iter()
            .position(|o| *o == root)
            .unwrap_or_else(|| panic!("grower chose {root:?}, which the enumeration lacks"));
        counts[k] += 1;
    }
    // options of zero probability must never be drawn
    for (c, p) in counts.iter().zip(&probs) {
        if *p == 0.0 {
            assert_eq!(*c, 0, "an option with zero weight was selected");
        }
    }
    (chi_square_pvalue(&counts, &probs), opts.len())
}

/// Sharp design with `x ~ U(-1, 1)`, cutoff zero and `p` covariates.
pub fn random_design<R: rand::Rng>(n: usize, p: usize, rng: &mut R) -> bart_rdd::Design {
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..n)
                .map(|_| {
                    if j % 2 == 0 {
                        rng.random_range(-1.0..1.0)
                    } else {
                        f64::from(rng.random_bool(0.5))
                    }
                })
                .collect()
        })
        .collect();
    let names = (0..p).map(|j| format!("w{}", j + 1)).collect();
    bart_rdd::Design::new(x, w, names, 0.0).unwrap()
}

/// Outcome `mu(x, w) + z tau + noise` on a design.
pub fn outcome_on<R: rand::Rng>(
    design: &bart_rdd::Design,
    mu: impl Fn(f64, &[f64]) -> f64,
    tau: f64,
    noise_sd: f64,
    rng: &mut R,
) -> bart_rdd::Dataset {
    let y = (0..design.n())
        .map(|i| {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            mu(design.x()[i], &design.w_row(i)) + tau * f64::from(design.z()[i]) + noise_sd * e
        })
        .collect();
    bart_rdd::Dataset::new(y, design.clone()).unwrap()
}
