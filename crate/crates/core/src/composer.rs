//! Soft-minimum composition of terminal chain values into one relaxed CBF.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hocbf::{norm, BarrierChain};
use crate::smoothfield::{Dual, Scalar, VectorFieldPair};

/// −(1/ρ) ln Σ exp(−ρ zᵢ), evaluated relative to the smallest argument so
/// large ρ·z cannot overflow.
pub fn softmin(rho: f64, values: &[f64]) -> Result<f64> {
    check_rho(rho)?;
    if values.is_empty() {
        return Err(Error::Empty("soft-min argument list"));
    }
    Ok(softmin_generic(rho, values))
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("soft-min sharpness must be > 0, got {rho}")))
    }
}

/// Soft minimum over any scalar type; used to differentiate the composite
/// directly as a cross-check of the weighted Lie derivatives.
pub fn softmin_generic<S: Scalar>(rho: f64, values: &[S]) -> S {
    let lo = argmin(values.iter().map(|v| v.value()));
    let zmin = values[lo].clone();
    let total = values
        .iter()
        .map(|z| (z.clone() - zmin.clone()).scale(-rho).exp())
        .fold(S::from_f64(0.0), |a, b| a + b);
    zmin - total.ln().scale(1.0 / rho)
}

/// β_j = exp ρ(h − z_j), positive and summing to one.
pub fn softmin_weights(rho: f64, values: &[f64]) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if values.is_empty() {
        return Err(Error::Empty("soft-min argument list"));
    }
    let zmin = values[argmin(values.iter().copied())];
    let e: Vec<f64> = values.iter().map(|z| (-rho * (z - zmin)).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / total).collect())
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 || (i == 0 && v.is_nan()) {
            best = (i, v);
        }
    }
    best.0
}

/// Chain levels plus terminal gradients and Lie derivatives for a set of
/// chains sharing one dual-seeded flow series.
#[derive(Clone, Debug)]
pub struct ChainsEval {
    pub levels: Vec<Vec<f64>>,
    pub terminal_lie: Vec<(f64, Vec<f64>)>,
    pub grads: Vec<Vec<f64>>,
}

pub fn evaluate_chains(chains: &[BarrierChain], vf: &VectorFieldPair, x: &[f64]) -> Result<ChainsEval> {
    check_dim("state", vf.n(), x.len())?;
    let n = x.len();
    let order = chains.iter().map(|c| c.degree()).max().unwrap_or(1) - 1;
    let flow = vf.flow(&Dual::seed(x), order);
    let f = vf.f_at(x);
    let g = vf.g_at(x);
    let m = vf.m();
    let mut out = ChainsEval {
        levels: Vec::with_capacity(chains.len()),
        terminal_lie: Vec::with_capacity(chains.len()),
        grads: Vec::with_capacity(chains.len()),
    };
    for chain in chains {
        check_dim("barrier vs. dynamics", vf.n(), chain.h().dim())?;
        let series = chain.series(&flow);
        let vals: Vec<f64> = series.iter().map(|s| s.coeffs[0].value).collect();
        let top = series.last().expect("nonempty chain").coeffs[0].gradient(n);
        let lf: f64 = top.iter().zip(f.iter()).map(|(a, b)| a * b).sum();
        let lg: Vec<f64> = (0..m).map(|j| (0..n).map(|i| top[i] * g[(i, j)]).sum()).collect();
        if vals.iter().chain(&top).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "barrier chain".into(), x: x.to_vec() });
        }
        out.levels.push(vals);
        out.terminal_lie.push((lf, lg));
        out.grads.push(top);
    }
    Ok(out)
}

/// h = softmin_ρ(b_{1,d_1−1}, …, b_{ℓ,d_ℓ−1}).
#[derive(Clone, Debug)]
pub struct CompositeRCBF {
    chains: Vec<BarrierChain>,
    vf: VectorFieldPair,
    rho: f64,
}

/// Everything the filters need from one state, computed in a single pass.
#[derive(Clone, Debug)]
pub struct CompositeEval {
    pub h: f64,
    pub lf_h: f64,
    pub lg_h: Vec<f64>,
    pub grad_h: Vec<f64>,
    pub weights: Vec<f64>,
    /// b_{j,i}(x) for every chain j and level i.
    pub levels: Vec<Vec<f64>>,
    /// (L_f b_{j,d_j−1}, L_g b_{j,d_j−1}) per chain.
    pub terminal_lie: Vec<(f64, Vec<f64>)>,
}

impl CompositeEval {
    pub fn terminals(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().map(|l| *l.last().expect("nonempty chain"))
    }

    /// Minimum of b_{j,i} over all chains and levels.
    pub fn min_level(&self) -> f64 {
        self.levels.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Minimum of b_{j,0} = h_j over all chains.
    pub fn min_base(&self) -> f64 {
        self.levels.iter().map(|l| l[0]).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Membership {
    pub in_h: bool,
    pub in_c: bool,
    pub in_s: bool,
}

impl CompositeRCBF {
    pub fn new(chains: Vec<BarrierChain>, vf: VectorFieldPair, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        if chains.is_empty() {
            return Err(Error::Empty("constraint list"));
        }
        for c in &chains {
            check_dim("barrier vs. dynamics", vf.n(), c.h().dim())?;
        }
        Ok(CompositeRCBF { chains, vf, rho })
    }

    pub fn chains(&self) -> &[BarrierChain] {
        &self.chains
    }

    pub fn vf(&self) -> &VectorFieldPair {
        &self.vf
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn max_degree(&self) -> usize {
        self.chains.iter().map(|c| c.degree()).max().unwrap_or(1)
    }

    /// Values of every chain level, without derivatives.
    pub fn levels(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim("state", self.vf.n(), x.len())?;
        let flow = self.vf.flow(x, self.max_degree() - 1);
        let levels: Vec<Vec<f64>> = self
            .chains
            .iter()
            .map(|c| c.series(&flow).into_iter().map(|j| j.coeffs[0]).collect())
            .collect();
        if levels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "barrier chain".into(), x: x.to_vec() });
        }
        Ok(levels)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<CompositeEval> {
        let ChainsEval { levels, terminal_lie, grads } = evaluate_chains(&self.chains, &self.vf, x)?;
        let (n, m) = (self.vf.n(), self.vf.m());
        let terminals: Vec<f64> = levels.iter().map(|l| *l.last().unwrap()).collect();
        let h = softmin_generic(self.rho, &terminals);
        let weights = softmin_weights(self.rho, &terminals)?;

        let mut lf_h = 0.0;
        let mut lg_h = vec![0.0; m];
        let mut grad_h = vec![0.0; n];
        for (j, beta) in weights.iter().enumerate() {
            lf_h += beta * terminal_lie[j].0;
            for k in 0..m {
                lg_h[k] += beta * terminal_lie[j].1[k];
            }
            for i in 0..n {
                grad_h[i] += beta * grads[j][i];
            }
        }
        let finite = h.is_finite()
            && lf_h.is_finite()
            && lg_h.iter().chain(&grad_h).all(|v| v.is_finite())
            && levels.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite { what: "composite barrier".into(), x: x.to_vec() });
        }
        Ok(CompositeEval { h, lf_h, lg_h, grad_h, weights, levels, terminal_lie })
    }

    pub fn h_value(&self, x: &[f64]) -> Result<f64> {
        let levels = self.levels(x)?;
        let terminals: Vec<f64> = levels.iter().map(|l| *l.last().unwrap()).collect();
        softmin(self.rho, &terminals)
    }

    /// ∇h by differentiating the soft-min of dual-valued terminals; an
    /// independent path from the β-weighted combination in [`evaluate`](Self::evaluate).
    pub fn h_gradient_direct(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.vf.n(), x.len())?;
        let flow = self.vf.flow(&Dual::seed(x), self.max_degree() - 1);
        let terminals: Vec<Dual> = self
            .chains
            .iter()
            .map(|c| c.series(&flow).pop().unwrap().coeffs.swap_remove(0))
            .collect();
        Ok(softmin_generic(self.rho, &terminals).gradient(x.len()))
    }

    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        let levels = self.levels(x)?;
        let terminals: Vec<f64> = levels.iter().map(|l| *l.last().unwrap()).collect();
        softmin_weights(self.rho, &terminals)
    }

    /// (L_f h, L_g h, h).
    pub fn lie_derivatives(&self, x: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        let e = self.evaluate(x)?;
        Ok((e.lf_h, e.lg_h, e.h))
    }

    pub fn membership(&self, x: &[f64]) -> Result<Membership> {
        let levels = self.levels(x)?;
        let terminals: Vec<f64> = levels.iter().map(|l| *l.last().unwrap()).collect();
        let in_h = softmin(self.rho, &terminals)? >= 0.0;
        let in_c = levels.iter().all(|l| l[..l.len() - 1].iter().all(|&b| b >= 0.0));
        Ok(Membership { in_h, in_c, in_s: in_h && in_c })
    }

    pub fn boundary_diagnostic(
        &self,
        region: &BoxRegion,
        n_samples: usize,
        band: f64,
        tol: f64,
        seed: u64,
    ) -> Result<BoundaryReport> {
        region.validate(self.vf.n())?;
        if !(band > 0.0) {
            return Err(Error::InvalidParameter(format!("boundary band must be > 0, got {band}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = BoundaryReport {
            sample_count: n_samples,
            kept_count: 0,
            band,
            tol,
            min_lg_h_norm: None,
            same_sign_count: 0,
            hull_excludes_origin: 0,
            hull_contains_origin: 0,
            hull_undetermined: 0,
            flagged: Vec::new(),
        };
        for _ in 0..n_samples {
            let mut x = region.sample(&mut rng);
            // pull the sample onto the level set h = 0 with a few Newton steps
            for _ in 0..6 {
                let Ok(e) = self.evaluate(&x) else { break };
                let g2: f64 = e.grad_h.iter().map(|v| v * v).sum();
                if e.h.abs() <= 0.1 * band || g2 == 0.0 {
                    break;
                }
                for i in 0..x.len() {
                    x[i] -= e.h * e.grad_h[i] / g2;
                }
            }
            if !region.contains(&x) {
                continue;
            }
            let Ok(e) = self.evaluate(&x) else { continue };
            if e.h.abs() > band || e.lf_h > 0.0 {
                continue;
            }
            report.kept_count += 1;
            let lg_norm = norm(&e.lg_h);
            report.min_lg_h_norm = Some(report.min_lg_h_norm.map_or(lg_norm, |m: f64| m.min(lg_norm)));
            let rows: Vec<&[f64]> = e.terminal_lie.iter().map(|(_, lg)| lg.as_slice()).collect();
            if shares_sign(&rows) {
                report.same_sign_count += 1;
            }
            match hull_excludes_origin(&rows) {
                Some(true) => report.hull_excludes_origin += 1,
                Some(false) => report.hull_contains_origin += 1,
                None => report.hull_undetermined += 1,
            }
            if lg_norm <= tol {
                report.flagged.push(FlaggedState { x, h: e.h, lf_h: e.lf_h, lg_h_norm: lg_norm });
            }
        }
        Ok(report)
    }
}

/// Axis-aligned box.
#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_dim("region lower corner", n, self.lo.len())?;
        check_dim("region upper corner", n, self.hi.len())?;
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(h > l) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidParameter("degenerate sampling region".into()));
        }
        Ok(())
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
    }

    /// The band suggested for boundary sampling: 1e−3 of the diameter.
    pub fn default_band(&self) -> f64 {
        1e-3 * self.diameter()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| rng.gen_range(l..h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| v >= l && v <= h)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlaggedState {
    pub x: Vec<f64>,
    pub h: f64,
    pub lf_h: f64,
    pub lg_h_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    pub sample_count: usize,
    pub kept_count: usize,
    pub band: f64,
    pub tol: f64,
    pub min_lg_h_norm: Option<f64>,
    /// Kept samples where some input channel has a strict common sign across
    /// every L_g L_f^{d_j−1} h_j (sufficient for 0 ∉ conv).
    pub same_sign_count: usize,
    pub hull_excludes_origin: usize,
    pub hull_contains_origin: usize,
    /// Samples where m > 2 and the sign test did not settle the question.
    pub hull_undetermined: usize,
    pub flagged: Vec<FlaggedState>,
}

fn shares_sign(rows: &[&[f64]]) -> bool {
    let m = rows.first().map_or(0, |r| r.len());
    (0..m).any(|k| rows.iter().all(|r| r[k] > 0.0) || rows.iter().all(|r| r[k] < 0.0))
}

/// Whether 0 lies outside the convex hull of `rows`. Exact for m ≤ 2;
/// for m > 2 only the sign test is available.
pub fn hull_excludes_origin(rows: &[&[f64]]) -> Option<bool> {
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.iter().all(|&v| v == 0.0)) {
        return Some(false);
    }
    match m {
        1 => Some(shares_sign(rows)),
        2 => {
            // 0 ∉ conv ⇔ every vector lies in one open half-plane ⇔ some
            // angular gap between consecutive directions exceeds π.
            let mut angles: Vec<f64> = rows.iter().map(|r| r[1].atan2(r[0])).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let tau = std::f64::consts::TAU;
            let mut max_gap = angles[0] + tau - angles[angles.len() - 1];
            for w in angles.windows(2) {
                max_gap = max_gap.max(w[1] - w[0]);
            }
            Some(max_gap > std::f64::consts::PI + 1e-12)
        }
        _ => {
            if shares_sign(rows) {
                Some(true)
            } else {
                None
            }
        }
    }
}
