//! Grid-sampled function-space machinery: Lebesgue, parameter-dependent
//! Sobolev and Slobodeckii norms, Hölder seminorms, traces at t = 0 with
//! their coretraction, and the half-line extension/restriction operators.
//!
//! Conventions: periodic axes are differentiated spectrally, the half-line
//! time axis by Fornberg finite differences; quadrature is the flat rule on
//! periodic axes and trapezoid on bounded axes; grid sups under-approximate
//! the true sup, never over-approximate.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{det_sum, fornberg_weights, unflatten, Axis, AxisKind, GridFunction};
use crate::weights::WeightSystem;

/// Integrability exponent in [1, inf].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Lq {
    Finite(f64),
    Infinity,
}

impl Lq {
    pub fn validate(&self) -> Result<()> {
        match self {
            Lq::Finite(q) if *q >= 1.0 && q.is_finite() => Ok(()),
            Lq::Infinity => Ok(()),
            Lq::Finite(q) => Err(Error::validation(format!("q must lie in [1, inf], got {q}"))),
        }
    }

    pub fn recip(&self) -> f64 {
        match self {
            Lq::Finite(q) => 1.0 / q,
            Lq::Infinity => 0.0,
        }
    }
}

/// Order, integrability, weight system, and spectral-shift parameter of a
/// parameter-dependent norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormSpec {
    pub s: f64,
    pub q: Lq,
    pub weight: WeightSystem,
    pub eta: f64,
}

impl NormSpec {
    pub fn new(s: f64, q: Lq, weight: WeightSystem, eta: f64) -> Result<Self> {
        let spec = NormSpec { s, q, weight, eta };
        spec.validate()?;
        Ok(spec)
    }

    /// nu-admissibility: either s in nu N with 1 < q < inf, or s not an
    /// integer with 1 <= q <= inf.
    pub fn validate(&self) -> Result<()> {
        self.q.validate()?;
        if self.eta <= 0.0 {
            return Err(Error::validation("eta must be positive"));
        }
        if self.s < 0.0 {
            return Err(Error::validation("norm order s must be nonnegative"));
        }
        let nu = self.weight.nu() as f64;
        let s = self.s;
        let in_nu_n = is_near_integer(s / nu);
        let integer = is_near_integer(s);
        match self.q {
            Lq::Finite(q) if q > 1.0 && in_nu_n => Ok(()),
            _ if !integer => Ok(()),
            Lq::Finite(q) => Err(Error::validation(format!(
                "(s, q) = ({s}, {q}) is not nu-admissible: s in nu*N requires 1 < q < inf, \
                 otherwise s must not be an integer"
            ))),
            Lq::Infinity => Err(Error::validation(format!(
                "(s, q) = ({s}, inf) is not nu-admissible: integer s requires a finite q in (1, inf)"
            ))),
        }
    }

    pub fn with_s(&self, s: f64) -> NormSpec {
        NormSpec { s, ..self.clone() }
    }

    pub fn with_eta(&self, eta: f64) -> NormSpec {
        NormSpec { eta, ..self.clone() }
    }
}

pub(crate) fn is_near_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-9
}

/// L_q norm by quadrature (trapezoid on bounded axes); grid max for q = inf.
pub fn lq_norm(u: &GridFunction, q: Lq) -> f64 {
    match q {
        Lq::Infinity => u.max_fiber_norm(),
        Lq::Finite(q) => {
            let fib = u.fiber_dim();
            let vals = u.values();
            let total = det_sum(u.node_count(), |flat| {
                let mut m2 = 0.0;
                for c in 0..fib {
                    m2 += vals[flat * fib + c].norm_sqr();
                }
                u.quad_weight(flat) * m2.sqrt().powf(q)
            });
            total.powf(1.0 / q)
        }
    }
}

/// Mixed derivative d^alpha: spectral on periodic axes, Fornberg finite
/// differences (accuracy 6) on a non-periodic last axis.
pub fn mixed_derivative(u: &GridFunction, alpha: &[u32]) -> Result<GridFunction> {
    if alpha.len() != u.rank() {
        return Err(Error::shape("derivative multiindex rank mismatch"));
    }
    let last = u.rank() - 1;
    let time_order = if !u.axes()[last].is_periodic() { alpha[last] } else { 0 };
    let mut spatial_alpha = alpha.to_vec();
    if time_order > 0 {
        spatial_alpha[last] = 0;
    }
    let mut out = if spatial_alpha.iter().any(|&a| a > 0) {
        u.spectral_derivative(&spatial_alpha)?
    } else {
        u.clone()
    };
    if time_order > 0 {
        out = out.fd_derivative_last_axis(time_order, 6)?;
    }
    Ok(out)
}

/// Parameter-dependent Sobolev norm for s = k in nu N:
/// sum over alpha . omega <= k of eta^{k - alpha . omega} ||d^alpha u||_q.
pub fn sobolev_norm_param(u: &GridFunction, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let nu = spec.weight.nu() as f64;
    if !is_near_integer(spec.s / nu) {
        return Err(Error::validation(format!(
            "sobolev_norm_param needs s in nu*N (nu = {nu}), got s = {}",
            spec.s
        )));
    }
    check_weight_grid(&spec.weight, u)?;
    let k = spec.s.round() as u32;
    let omega = spec.weight.omega();
    let alphas = crate::weights::multi_indices_with_weight(&omega, k);
    let mut total = 0.0;
    for alpha in &alphas {
        let wgt: u32 = alpha.iter().zip(&omega).map(|(&a, &w)| a * w).sum();
        let du = mixed_derivative(u, alpha)?;
        total += spec.eta.powi((k - wgt) as i32) * lq_norm(&du, spec.q);
    }
    Ok(total)
}

fn check_weight_grid(w: &WeightSystem, u: &GridFunction) -> Result<()> {
    if w.total_dim() != u.rank() {
        return Err(Error::shape(format!(
            "weight system covers {} axes, grid has {}",
            w.total_dim(),
            u.rank()
        )));
    }
    Ok(())
}

/// Slobodeckii seminorm over the axes of one weight cluster, L_q-composed
/// over the remaining axes. Diagonal cells are excluded; distances are plain
/// (unwrapped) coordinate distances within the box.
pub fn slobodeckii_seminorm(
    u: &GridFunction,
    theta: f64,
    q: f64,
    cluster_axes: std::ops::Range<usize>,
) -> Result<f64> {
    if !(0.0 < theta && theta < 1.0) {
        return Err(Error::validation(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::validation("slobodeckii seminorm needs finite q >= 1"));
    }
    let (cluster_nodes, rest_nodes, to_flat) = split_axes(u, cluster_axes.clone());
    let m_i = cluster_axes.len() as f64;
    let fib = u.fiber_dim();
    let vals = u.values();
    let power = det_sum(rest_nodes.len(), |ri| {
        let r = &rest_nodes[ri];
        let mut inner = 0.0;
        for (ci, cx) in cluster_nodes.iter().enumerate() {
            for cy in cluster_nodes.iter().skip(ci + 1) {
                let mut dist2 = 0.0;
                for (a, b) in cx.coords.iter().zip(&cy.coords) {
                    dist2 += (a - b) * (a - b);
                }
                let dist = dist2.sqrt();
                let fx = to_flat(cx, r);
                let fy = to_flat(cy, r);
                let mut diff2 = 0.0;
                for c in 0..fib {
                    diff2 += (vals[fx * fib + c] - vals[fy * fib + c]).norm_sqr();
                }
                let diff = diff2.sqrt();
                // Both (x, y) and (y, x) contribute equally.
                inner += 2.0
                    * cx.weight
                    * cy.weight
                    * (diff / dist.powf(theta)).powf(q)
                    / dist.powf(m_i);
            }
        }
        r.weight * inner
    });
    Ok(power.powf(1.0 / q))
}

/// Sup version of the cluster seminorm: sup over pairs within the cluster
/// with 0 < |x - y| < delta of |u(x) - u(y)| / |x - y|^theta.
pub fn holder_seminorm_cluster(
    u: &GridFunction,
    theta: f64,
    delta: f64,
    cluster_axes: std::ops::Range<usize>,
) -> Result<f64> {
    if !(0.0 < theta && theta < 1.0) {
        return Err(Error::validation(format!("theta must lie in (0, 1), got {theta}")));
    }
    let (cluster_nodes, rest_nodes, to_flat) = split_axes(u, cluster_axes);
    let fib = u.fiber_dim();
    let vals = u.values();
    let best = (0..rest_nodes.len())
        .into_par_iter()
        .map(|ri| {
            let r = &rest_nodes[ri];
            let mut local = 0.0_f64;
            for (ci, cx) in cluster_nodes.iter().enumerate() {
                for cy in cluster_nodes.iter().skip(ci + 1) {
                    let mut dist2 = 0.0;
                    for (a, b) in cx.coords.iter().zip(&cy.coords) {
                        dist2 += (a - b) * (a - b);
                    }
                    let dist = dist2.sqrt();
                    if dist <= 0.0 || dist >= delta {
                        continue;
                    }
                    let fx = to_flat(cx, r);
                    let fy = to_flat(cy, r);
                    let mut diff2 = 0.0;
                    for c in 0..fib {
                        diff2 += (vals[fx * fib + c] - vals[fy * fib + c]).norm_sqr();
                    }
                    local = local.max(diff2.sqrt() / dist.powf(theta));
                }
            }
            local
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Isotropic Hölder seminorm over all axes: max over grid pairs with
/// 0 < |x - y| < delta of |u(x) - u(y)| / |x - y|^theta.
pub fn holder_seminorm(u: &GridFunction, theta: f64, delta: f64) -> Result<f64> {
    holder_seminorm_cluster(u, theta, delta, 0..u.rank())
}

/// An enumerated node of a sub-product of axes.
struct SubNode {
    idx: Vec<usize>,
    coords: Vec<f64>,
    weight: f64,
}

type FlatFn<'a> = Box<dyn Fn(&SubNode, &SubNode) -> usize + Sync + 'a>;

/// Enumerates cluster nodes and complement nodes, plus a recombiner into
/// flat grid indices.
fn split_axes(
    u: &GridFunction,
    cluster: std::ops::Range<usize>,
) -> (Vec<SubNode>, Vec<SubNode>, FlatFn<'_>) {
    let shape = u.shape();
    let cluster_axes: Vec<usize> = cluster.clone().collect();
    let rest_axes: Vec<usize> = (0..u.rank()).filter(|k| !cluster.contains(k)).collect();
    let enumerate = |axes_list: &[usize]| -> Vec<SubNode> {
        let dims: Vec<usize> = axes_list.iter().map(|&k| shape[k]).collect();
        let total: usize = dims.iter().product::<usize>().max(1);
        (0..total)
            .map(|flat| {
                let idx = unflatten(flat, &dims);
                let coords: Vec<f64> = idx
                    .iter()
                    .zip(axes_list)
                    .map(|(&i, &k)| u.axes()[k].coord(i))
                    .collect();
                let weight: f64 = idx
                    .iter()
                    .zip(axes_list)
                    .map(|(&i, &k)| u.axes()[k].quad_weight(i))
                    .product();
                SubNode { idx, coords, weight }
            })
            .collect()
    };
    let cluster_nodes = enumerate(&cluster_axes);
    let rest_nodes = enumerate(&rest_axes);
    let rank = u.rank();
    let shape_owned = shape.clone();
    let to_flat: FlatFn<'_> = Box::new(move |c: &SubNode, r: &SubNode| {
        let mut idx = vec![0usize; rank];
        for (pos, &k) in cluster_axes.iter().enumerate() {
            idx[k] = c.idx[pos];
        }
        for (pos, &k) in rest_axes.iter().enumerate() {
            idx[k] = r.idx[pos];
        }
        let mut f = 0;
        for (k, &i) in idx.iter().enumerate() {
            f = f * shape_owned[k] + i;
        }
        f
    });
    (cluster_nodes, rest_nodes, to_flat)
}

/// Gradient tensor of order j over the axes of one cluster, stacked into the
/// fiber with multinomial multiplicities, so the pointwise fiber norm equals
/// |grad^j u|.
pub fn cluster_gradient(
    u: &GridFunction,
    cluster: std::ops::Range<usize>,
    j: u32,
) -> Result<GridFunction> {
    if j == 0 {
        return Ok(u.clone());
    }
    let axes_list: Vec<usize> = cluster.collect();
    let combos = compositions(j, axes_list.len());
    let fib = u.fiber_dim();
    let mut out = GridFunction::zeros(u.axes().to_vec(), fib * combos.len());
    for (ci, beta_local) in combos.iter().enumerate() {
        let mut alpha = vec![0u32; u.rank()];
        for (pos, &k) in axes_list.iter().enumerate() {
            alpha[k] = beta_local[pos];
        }
        let mult = multinomial(j, beta_local).sqrt();
        let du = mixed_derivative(u, &alpha)?;
        let nf = out.fiber_dim();
        for flat in 0..u.node_count() {
            let src = du.fiber_at(flat);
            let dst = out.fiber_at_mut(flat);
            for c in 0..fib {
                dst[ci * fib + c] = src[c] * mult;
            }
        }
        let _ = nf;
    }
    Ok(out)
}

/// Multiindices beta in N^d with |beta| = j.
fn compositions(j: u32, d: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(j: u32, k: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k + 1 == cur.len() {
            cur[k] = j;
            out.push(cur.clone());
            return;
        }
        for a in 0..=j {
            cur[k] = a;
            rec(j - a, k + 1, cur, out);
        }
    }
    if d == 0 {
        return out;
    }
    rec(j, 0, &mut cur, &mut out);
    out
}

fn multinomial(j: u32, beta: &[u32]) -> f64 {
    let mut v = 1.0;
    let mut rem = j;
    for &b in beta {
        for i in 0..b {
            v = v * (rem - i) as f64 / (i + 1) as f64;
        }
        rem -= b;
    }
    v
}

/// The full parameter-dependent anisotropic norm. Integer s in nu N uses the
/// weighted Sobolev sum; fractional s uses per-cluster derivative terms plus
/// the Slobodeckii (or Hölder, q = inf) seminorm of the top cluster gradient.
pub fn anisotropic_norm(u: &GridFunction, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    check_weight_grid(&spec.weight, u)?;
    if spec.s == 0.0 {
        return Ok(lq_norm(u, spec.q));
    }
    let nu = spec.weight.nu() as f64;
    if is_near_integer(spec.s / nu) {
        return sobolev_norm_param(u, spec);
    }
    let ranges = spec.weight.cluster_ranges();
    let mut total = 0.0;
    for (i, range) in ranges.iter().enumerate() {
        let nu_i = spec.weight.cluster_weights()[i] as f64;
        if is_near_integer(spec.s / nu_i) {
            return Err(Error::validation(format!(
                "s = {} lies on a cluster boundary (multiple of nu_{} = {nu_i}); \
                 the strict inequalities k_i < s < k_i + nu_i fail",
                spec.s,
                i + 1
            )));
        }
        let k_over_nu = (spec.s / nu_i).floor() as u32;
        let k_i = k_over_nu as f64 * nu_i;
        let theta = (spec.s - k_i) / nu_i;
        for j in 0..=k_over_nu {
            let g = cluster_gradient(u, range.clone(), j)?;
            total += spec.eta.powf(spec.s - j as f64 * nu_i) * lq_norm(&g, spec.q);
        }
        let top = cluster_gradient(u, range.clone(), k_over_nu)?;
        total += match spec.q {
            Lq::Finite(q) => slobodeckii_seminorm(&top, theta, q, range.clone())?,
            Lq::Infinity => holder_seminorm_cluster(&top, theta, f64::INFINITY, range.clone())?,
        };
    }
    Ok(total)
}

/// Compatibility chain: initial traces u_0, ..., u_k on a common spatial grid.
#[derive(Debug, Clone)]
pub struct CompatibilityChain {
    pub entries: Vec<GridFunction>,
}

impl CompatibilityChain {
    pub fn order(&self) -> usize {
        self.entries.len() - 1
    }
}

/// k-th order trace d_t^k u(0) by one-sided finite differences of accuracy
/// >= 2 (up to 6 when enough samples exist).
pub fn trace(u: &GridFunction, k: u32) -> Result<GridFunction> {
    let axis = u.rank() - 1;
    if u.axes()[axis].is_periodic() {
        return Err(Error::config("trace requires a half-line (or line) last axis"));
    }
    let n = u.axes()[axis].n;
    let needed = k as usize + 2;
    if n < needed {
        return Err(Error::config(format!(
            "trace of order {k} needs at least {needed} time samples, grid has {n}"
        )));
    }
    let dt = u.axes()[axis].spacing();
    let width = (k as usize + 7).min(n);
    let (start, t0) = match u.axes()[axis].kind {
        AxisKind::Line { origin, .. } => (origin, 0.0),
        _ => (0, 0.0),
    };
    let nodes: Vec<f64> = (0..width).map(|j| (start + j) as f64 * dt).collect();
    let w = fornberg_weights(t0 + start as f64 * dt, &nodes, k as usize);
    let fib = u.fiber_dim();
    let mut out = GridFunction::zeros(u.axes()[..axis].to_vec(), fib);
    let lane = u.axes()[axis].n * fib;
    let src = u.values();
    for (qidx, v) in out.values_mut().iter_mut().enumerate() {
        let outer = qidx / fib;
        let c = qidx % fib;
        let mut acc = C64::new(0.0, 0.0);
        for (j, &wj) in w.iter().enumerate() {
            acc += src[outer * lane + (start + j) * fib + c] * wj;
        }
        *v = acc;
    }
    Ok(out)
}

/// Spectral damping coretraction for the trace chain.
///
/// Per spatial mode with damping rate B = Lambda_eta^{nu_ell}(xi), returns
/// u(t) = sum_j (t^j / j!) e^{-t B} c_j where the coefficients c_j solve the
/// triangular system making the traces exact: gamma^k u = u_k.
pub fn trace_coretraction(
    chain: &CompatibilityChain,
    spatial_weight: &WeightSystem,
    eta: f64,
    nu_ell: u32,
    time_axis: Axis,
) -> Result<GridFunction> {
    if chain.entries.is_empty() {
        return Err(Error::validation("empty compatibility chain"));
    }
    let base = &chain.entries[0];
    for e in &chain.entries {
        base.check_same_layout(e)?;
    }
    if !base.is_fully_periodic() {
        return Err(Error::config("chain entries must live on a periodic spatial grid"));
    }
    let k = chain.order();
    // Spectra of the chain entries.
    let mut hats: Vec<GridFunction> = chain
        .entries
        .iter()
        .cloned()
        .map(|mut g| {
            g.fft_forward_all()?;
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let shape = base.shape();
    let fib = base.fiber_dim();
    let nodes = base.node_count();
    // Damping rate per mode.
    let rates: Vec<f64> = (0..nodes)
        .map(|flat| {
            let idx = unflatten(flat, &shape);
            let xi: Vec<f64> = idx.iter().enumerate().map(|(a, &j)| base.frequency(a, j)).collect();
            spatial_weight.quasinorm_eta(&xi, eta).powi(nu_ell as i32)
        })
        .collect();
    // Triangular correction: c_p = u_p - sum_{j<p} C(p, j) (-B)^{p-j} c_j.
    for p in 1..=k {
        for flat in 0..nodes {
            let b = rates[flat];
            for c in 0..fib {
                let mut corr = C64::new(0.0, 0.0);
                for j in 0..p {
                    let coef = binom(p as u32, j as u32) * neg_pow(b, (p - j) as u32);
                    corr += hats[j].fiber_at(flat)[c] * coef;
                }
                hats[p].fiber_at_mut(flat)[c] -= corr;
            }
        }
    }
    let nt = time_axis.n;
    let dt = time_axis.spacing();
    let mut out_axes = base.axes().to_vec();
    out_axes.push(time_axis);
    let mut out = GridFunction::zeros(out_axes, fib);
    {
        let lane = nt * fib;
        let values = out.values_mut();
        values
            .par_chunks_mut(lane)
            .enumerate()
            .for_each(|(flat, chunk)| {
                let b = rates[flat];
                for it in 0..nt {
                    let t = it as f64 * dt;
                    let damp = (-t * b).exp();
                    for c in 0..fib {
                        let mut acc = C64::new(0.0, 0.0);
                        let mut tpow = 1.0;
                        for (j, hat) in hats.iter().enumerate() {
                            if j > 0 {
                                tpow *= t / j as f64;
                            }
                            acc += hat.fiber_at(flat)[c] * (tpow * damp);
                        }
                        chunk[it * fib + c] = acc;
                    }
                }
            });
    }
    // Back to physical space axis-by-axis on the leading spatial axes.
    for a in 0..base.rank() {
        out.fft_axis(a, rustfft::FftDirection::Inverse)?;
    }
    Ok(out)
}

fn binom(n: u32, k: u32) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

fn neg_pow(b: f64, p: u32) -> f64 {
    let v = b.powi(p as i32);
    if p % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Reflection-extension coefficients: c_1..c_NE with
/// sum_j c_j (-j)^p = 1 for p = 0..NE-1.
pub fn seeley_coefficients(ne: usize) -> Result<Vec<f64>> {
    if ne == 0 {
        return Err(Error::validation("extension order NE must be >= 1"));
    }
    let mut m = crate::linalg::CMat::zeros(ne);
    for p in 0..ne {
        for j in 1..=ne {
            m[(p, j - 1)] = C64::new((-(j as f64)).powi(p as i32), 0.0);
        }
    }
    let rhs = vec![C64::new(1.0, 0.0); ne];
    let sol = m.lu()?.solve(&rhs);
    Ok(sol.iter().map(|z| z.re).collect())
}

/// Reflected extension over t < 0: E u(t) = sum_j c_j u(-j t), matching u on
/// t >= 0 exactly and C^{NE-1} at t = 0 on polynomial data.
pub fn extend_seeley(u: &GridFunction, ne: usize) -> Result<GridFunction> {
    let axis = u.rank() - 1;
    let n = match u.axes()[axis].kind {
        AxisKind::HalfLine { .. } => u.axes()[axis].n,
        _ => return Err(Error::config("extend_seeley expects a half-line last axis")),
    };
    let dt = u.axes()[axis].spacing();
    let c = seeley_coefficients(ne)?;
    let n_neg = (n - 1) / ne;
    if n_neg == 0 {
        return Err(Error::Extrapolation(format!(
            "half-line extent of {n} samples cannot supply -{ne} t for any negative sample"
        )));
    }
    let mut axes = u.axes().to_vec();
    axes[axis] = Axis::line(n + n_neg, dt, n_neg);
    let fib = u.fiber_dim();
    let mut out = GridFunction::zeros(axes, fib);
    let src_lane = n * fib;
    let dst_lane = (n + n_neg) * fib;
    let src = u.values();
    let lanes = src.len() / src_lane;
    for lane_idx in 0..lanes {
        for i in 0..n + n_neg {
            let rel = i as i64 - n_neg as i64;
            for ch in 0..fib {
                let v = if rel >= 0 {
                    src[lane_idx * src_lane + rel as usize * fib + ch]
                } else {
                    let p = (-rel) as usize;
                    let mut acc = C64::new(0.0, 0.0);
                    for (jm1, &cj) in c.iter().enumerate() {
                        let jp = (jm1 + 1) * p;
                        acc += src[lane_idx * src_lane + jp * fib + ch] * cj;
                    }
                    acc
                };
                out.values_mut()[lane_idx * dst_lane + i * fib + ch] = v;
            }
        }
    }
    Ok(out)
}

/// Extension by zero over t < 0 (mirror-length negative side).
pub fn extend_zero(u: &GridFunction) -> Result<GridFunction> {
    let axis = u.rank() - 1;
    let n = match u.axes()[axis].kind {
        AxisKind::HalfLine { .. } => u.axes()[axis].n,
        _ => return Err(Error::config("extend_zero expects a half-line last axis")),
    };
    let dt = u.axes()[axis].spacing();
    let n_neg = n - 1;
    let mut axes = u.axes().to_vec();
    axes[axis] = Axis::line(n + n_neg, dt, n_neg);
    let fib = u.fiber_dim();
    let mut out = GridFunction::zeros(axes, fib);
    let src_lane = n * fib;
    let dst_lane = (n + n_neg) * fib;
    let src = u.values();
    for lane_idx in 0..src.len() / src_lane {
        for i in 0..n {
            for ch in 0..fib {
                out.values_mut()[lane_idx * dst_lane + (n_neg + i) * fib + ch] =
                    src[lane_idx * src_lane + i * fib + ch];
            }
        }
    }
    Ok(out)
}

/// Pointwise restriction to t >= 0; commutes with spatial derivatives.
pub fn restrict(u: &GridFunction) -> Result<GridFunction> {
    let axis = u.rank() - 1;
    let (n, dt, origin) = match u.axes()[axis].kind {
        AxisKind::Line { dt, origin } => (u.axes()[axis].n, dt, origin),
        AxisKind::HalfLine { dt } => return u.clone().with_last_axis(Axis::half_line(u.axes()[axis].n, dt)),
        _ => return Err(Error::config("restrict expects a line or half-line last axis")),
    };
    let keep = n - origin;
    let mut axes = u.axes().to_vec();
    axes[axis] = Axis::half_line(keep, dt);
    let fib = u.fiber_dim();
    let mut out = GridFunction::zeros(axes, fib);
    let src_lane = n * fib;
    let dst_lane = keep * fib;
    let src = u.values();
    for lane_idx in 0..src.len() / src_lane {
        for i in 0..keep {
            for ch in 0..fib {
                out.values_mut()[lane_idx * dst_lane + i * fib + ch] =
                    src[lane_idx * src_lane + (origin + i) * fib + ch];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn circle(n: usize) -> Axis {
        Axis::periodic(n, TAU)
    }

    #[test]
    fn lq_norm_of_unit_function() {
        // ||1||_2 over a box of measure 2 pi is sqrt(2 pi).
        let u = GridFunction::from_scalar_fn(vec![circle(32)], |_| C64::new(1.0, 0.0));
        let v = lq_norm(&u, Lq::Finite(2.0));
        assert_relative_eq!(v, TAU.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(v, 2.5066282746310002, epsilon = 1e-12);
    }

    #[test]
    fn lq_norm_zero_and_sup() {
        let z = GridFunction::zeros(vec![circle(8)], 1);
        assert_eq!(lq_norm(&z, Lq::Finite(1.0)), 0.0);
        let mut g = z.clone();
        g.values_mut()[3] = C64::new(5.0, 0.0);
        assert_eq!(lq_norm(&g, Lq::Infinity), 5.0);
    }

    #[test]
    fn sobolev_single_mode_example() {
        // Trivial weights, k = 1, eta = 2, q = 2, u = e^{ix} on [0, 2 pi):
        // eta ||u||_2 + ||u'||_2 = 3 sqrt(2 pi).
        let u = GridFunction::from_scalar_fn(vec![circle(64)], |x| C64::new(0.0, x[0]).exp());
        let spec = NormSpec::new(1.0, Lq::Finite(2.0), WeightSystem::trivial(1), 2.0).unwrap();
        let v = sobolev_norm_param(&u, &spec).unwrap();
        assert_relative_eq!(v, 3.0 * TAU.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn sobolev_eta_one_is_unparametrized_sum() {
        let u = GridFunction::from_scalar_fn(vec![circle(32)], |x| C64::new(0.0, x[0]).exp());
        let spec = NormSpec::new(1.0, Lq::Finite(2.0), WeightSystem::trivial(1), 1.0).unwrap();
        let v = sobolev_norm_param(&u, &spec).unwrap();
        assert_relative_eq!(v, 2.0 * TAU.sqrt(), epsilon = 1e-10);
        let z = GridFunction::zeros(vec![circle(32)], 1);
        assert_eq!(sobolev_norm_param(&z, &spec).unwrap(), 0.0);
    }

    #[test]
    fn admissibility_rules() {
        let w = WeightSystem::trivial(1);
        assert!(NormSpec::new(1.0, Lq::Finite(2.0), w.clone(), 1.0).is_ok());
        assert!(NormSpec::new(1.0, Lq::Infinity, w.clone(), 1.0).is_err());
        assert!(NormSpec::new(1.0, Lq::Finite(1.0), w.clone(), 1.0).is_err());
        assert!(NormSpec::new(0.5, Lq::Infinity, w.clone(), 1.0).is_ok());
        assert!(NormSpec::new(0.5, Lq::Finite(1.0), w.clone(), 1.0).is_ok());
        // Parabolic: s = 1 is not in 2N and is an integer -> rejected.
        let p = WeightSystem::parabolic(1, 2);
        assert!(NormSpec::new(1.0, Lq::Finite(2.0), p.clone(), 1.0).is_err());
        assert!(NormSpec::new(2.0, Lq::Finite(2.0), p, 1.0).is_ok());
    }

    #[test]
    fn slobodeckii_constant_vanishes() {
        let u = GridFunction::from_scalar_fn(vec![circle(16)], |_| C64::new(4.0, 0.0));
        let v = slobodeckii_seminorm(&u, 0.5, 2.0, 0..1).unwrap();
        assert!(v < 1e-13);
    }

    #[test]
    fn slobodeckii_matches_bruteforce_double_loop() {
        // Independent O(n^2) oracle with the same quadrature.
        let n = 64;
        let u = GridFunction::from_scalar_fn(vec![circle(n)], |x| C64::new(0.0, x[0]).exp());
        let theta = 0.5;
        let q = 2.0;
        let v = slobodeckii_seminorm(&u, theta, q, 0..1).unwrap();
        let h = TAU / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (xi, xj) = (i as f64 * h, j as f64 * h);
                let d = (xi - xj).abs();
                let diff = (C64::new(0.0, xi).exp() - C64::new(0.0, xj).exp()).norm();
                acc += h * h * (diff / d.powf(theta)).powf(q) / d;
            }
        }
        let oracle = acc.powf(1.0 / q);
        assert_relative_eq!(v, oracle, epsilon = 1e-12);
    }

    #[test]
    fn slobodeckii_discrete_scaling_law() {
        // u_lambda(x) = u(2x) on the half-length box: the quadrature obeys the
        // exact discrete scaling of the double sum (d = 1):
        // [u_2]_{theta,q}^q on L/2 grid = 2^{theta q - 1} [u]^q terms matched
        // pairwise, because distances halve and weights halve.
        let n = 32;
        let theta = 0.4;
        let q = 2.0;
        let u = GridFunction::from_scalar_fn(vec![Axis::periodic(n, TAU)], |x| {
            C64::new((x[0]).sin(), (2.0 * x[0]).cos())
        });
        let v = GridFunction::from_scalar_fn(vec![Axis::periodic(n, TAU / 2.0)], |x| {
            C64::new((2.0 * x[0]).sin(), (4.0 * x[0]).cos())
        });
        let su = slobodeckii_seminorm(&u, theta, q, 0..1).unwrap();
        let sv = slobodeckii_seminorm(&v, theta, q, 0..1).unwrap();
        // Exact law: sv^q = 2^{theta q} / 2 * su^q ... derived from the sum:
        // each pair (x, y) maps to (x/2, y/2) with |x/2 - y/2| = |x - y| / 2
        // and both weights halved.
        let expect = su * (2.0_f64.powf(theta * q) / 2.0).powf(1.0 / q);
        assert_relative_eq!(sv, expect, epsilon = 1e-10);
    }

    #[test]
    fn holder_seminorm_of_linear_function() {
        // u(x) = x on (-1, 1): sup |x - y|^{1/2} = sqrt(2).
        let n = 65;
        let dt = 2.0 / (n - 1) as f64;
        let axes = vec![Axis::line(n, dt, (n - 1) / 2)];
        let u = GridFunction::from_scalar_fn(axes, |x| C64::new(x[0], 0.0));
        let v = holder_seminorm(&u, 0.5, f64::INFINITY).unwrap();
        assert_relative_eq!(v, 2.0_f64.sqrt(), epsilon = 1e-12);
        // Little-Hölder window: [u]^delta = sqrt(delta) for u = x.
        let d = holder_seminorm(&u, 0.5, 0.25 + 1e-12).unwrap();
        assert_relative_eq!(d, 0.25_f64.sqrt(), epsilon = 1e-9);
        let c = GridFunction::from_scalar_fn(vec![circle(16)], |_| C64::new(7.0, 0.0));
        assert_eq!(holder_seminorm(&c, 0.5, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn anisotropic_norm_s_zero_is_lq() {
        let u = GridFunction::from_scalar_fn(vec![circle(16)], |x| C64::new(x[0].cos(), 0.0));
        let spec = NormSpec::new(0.0, Lq::Finite(2.0), WeightSystem::trivial(1), 3.0).unwrap();
        assert_relative_eq!(
            anisotropic_norm(&u, &spec).unwrap(),
            lq_norm(&u, Lq::Finite(2.0)),
            epsilon = 1e-13
        );
    }

    #[test]
    fn anisotropic_norm_rejects_cluster_boundary() {
        let axes = vec![circle(8), circle(8)];
        let u = GridFunction::from_scalar_fn(axes, |x| C64::new(x[0].cos() * x[1].sin(), 0.0));
        // Parabolic weights (1, 2): s = 3 is a multiple of nu_1 = 1 but not in 2N.
        let spec = NormSpec {
            s: 3.0,
            q: Lq::Finite(2.0),
            weight: WeightSystem::parabolic(1, 2),
            eta: 1.0,
        };
        assert!(anisotropic_norm(&u, &spec).is_err());
    }

    #[test]
    fn eta_scaling_direction_of_anisotropic_norm() {
        // Fixed u: ||u||_{s;10} / ||u||_{s;1} <= 10^s (within quadrature slack).
        let axes = vec![circle(32), circle(32)];
        let u = GridFunction::from_scalar_fn(axes, |x| {
            C64::new(0.0, x[0] + 2.0 * x[1]).exp()
        });
        let w = WeightSystem::parabolic(1, 2);
        let s = 0.5;
        let n1 = anisotropic_norm(&u, &NormSpec::new(s, Lq::Finite(2.0), w.clone(), 1.0).unwrap()).unwrap();
        let n10 = anisotropic_norm(&u, &NormSpec::new(s, Lq::Finite(2.0), w, 10.0).unwrap()).unwrap();
        let ratio = n10 / n1;
        assert!(ratio <= 10.0_f64.powf(s) + 1e-9, "ratio {ratio}");
        assert!(ratio >= 1.0);
    }

    #[test]
    fn trace_of_time_constant_and_linear_data() {
        let nt = 16;
        let dt = 0.05;
        let axes = vec![circle(16), Axis::half_line(nt, dt)];
        let g = |x: f64| C64::new((x).cos(), 0.0);
        let u0 = GridFunction::from_scalar_fn(axes.clone(), |x| g(x[0]));
        let t0 = trace(&u0, 0).unwrap();
        for flat in 0..t0.node_count() {
            let x = t0.node_coords(flat)[0];
            assert!((t0.values()[flat] - g(x)).norm() < 1e-13);
        }
        let u1 = GridFunction::from_scalar_fn(axes, |x| g(x[0]) * x[1]);
        let t1 = trace(&u1, 1).unwrap();
        for flat in 0..t1.node_count() {
            let x = t1.node_coords(flat)[0];
            assert!((t1.values()[flat] - g(x)).norm() < 1e-11);
        }
    }

    #[test]
    fn trace_of_decaying_mode() {
        let nt = 48;
        let dt = 0.02;
        let axes = vec![circle(16), Axis::half_line(nt, dt)];
        let u = GridFunction::from_scalar_fn(axes, |x| {
            C64::new(0.0, x[0]).exp() * C64::new((-x[1]).exp(), 0.0)
        });
        let t1 = trace(&u, 1).unwrap();
        for flat in 0..t1.node_count() {
            let x = t1.node_coords(flat)[0];
            let want = -C64::new(0.0, x).exp();
            assert!((t1.values()[flat] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn trace_rejects_short_grids() {
        let axes = vec![circle(4), Axis::half_line(2, 0.1)];
        let u = GridFunction::zeros(axes, 1);
        assert!(trace(&u, 1).is_err());
    }

    #[test]
    fn coretraction_reproduces_chain_traces() {
        let nx = 32;
        let sp = WeightSystem::trivial(1);
        let spatial = vec![circle(nx)];
        let u0 = GridFunction::from_scalar_fn(spatial.clone(), |x| C64::new(0.0, x[0]).exp());
        let u1 = GridFunction::from_scalar_fn(spatial.clone(), |x| C64::new((2.0 * x[0]).cos(), 0.0));
        let u2 = GridFunction::from_scalar_fn(spatial, |x| C64::new((3.0 * x[0]).sin(), 0.0));
        let chain = CompatibilityChain { entries: vec![u0.clone(), u1.clone(), u2.clone()] };
        let w = trace_coretraction(&chain, &sp, 1.0, 2, Axis::half_line(128, 0.002)).unwrap();
        for (k, want) in [&u0, &u1, &u2].iter().enumerate() {
            let got = trace(&w, k as u32).unwrap();
            let diff = got.sub(want).unwrap();
            let rel = lq_norm(&diff, Lq::Finite(2.0)) / lq_norm(want, Lq::Finite(2.0));
            assert!(rel < 1e-6, "trace order {k}: rel err {rel:.3e}");
        }
    }

    #[test]
    fn coretraction_of_single_mode_is_pure_decay() {
        let nx = 16;
        let sp = WeightSystem::trivial(1);
        let u0 = GridFunction::from_scalar_fn(vec![circle(nx)], |x| C64::new(0.0, x[0]).exp());
        let chain = CompatibilityChain { entries: vec![u0.clone()] };
        let eta = 1.0;
        let w = trace_coretraction(&chain, &sp, eta, 2, Axis::half_line(32, 0.03)).unwrap();
        // Mode k = 1: rate (1 + eta^2) = 2.
        for flat in 0..w.node_count() {
            let c = w.node_coords(flat);
            let want = C64::new(0.0, c[0]).exp() * C64::new((-2.0 * c[1]).exp(), 0.0);
            assert!((w.values()[flat] - want).norm() < 1e-12);
        }
        // Zero chain -> zero function.
        let z = GridFunction::zeros(vec![circle(nx)], 1);
        let zc = trace_coretraction(
            &CompatibilityChain { entries: vec![z] },
            &sp,
            eta,
            2,
            Axis::half_line(8, 0.1),
        )
        .unwrap();
        assert!(zc.l2_raw() == 0.0);
    }

    #[test]
    fn seeley_coefficients_ne2() {
        let c = seeley_coefficients(2).unwrap();
        assert_relative_eq!(c[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(c[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn seeley_extension_on_linear_data() {
        // u(t) = t with NE = 2: Eu(-dt) = 3 u(dt) - 2 u(2 dt) = -dt.
        let nt = 9;
        let dt = 1.0;
        let u = GridFunction::from_scalar_fn(vec![Axis::half_line(nt, dt)], |x| C64::new(x[0], 0.0));
        let e = extend_seeley(&u, 2).unwrap();
        // Negative samples: value at t = -1 must be 3*1 - 2*2 = -1.
        let axis = e.axes()[0];
        let origin = match axis.kind {
            AxisKind::Line { origin, .. } => origin,
            _ => panic!(),
        };
        let at = |i: i64| e.values()[(origin as i64 + i) as usize];
        assert_relative_eq!(at(-1).re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(at(1).re, 1.0, epsilon = 1e-12);
        // Constant data extends to the constant (sum c_j = 1).
        let one = GridFunction::from_scalar_fn(vec![Axis::half_line(nt, dt)], |_| C64::new(1.0, 0.0));
        let eo = extend_seeley(&one, 3).unwrap();
        for v in eo.values() {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn restrict_extension_roundtrips() {
        let nt = 9;
        let u = GridFunction::from_scalar_fn(vec![circle(8), Axis::half_line(nt, 0.1)], |x| {
            C64::new(x[0].cos() * (1.0 + x[1]), 0.5 * x[1])
        });
        let rz = restrict(&extend_zero(&u).unwrap()).unwrap();
        assert_eq!(rz, u);
        let rs = restrict(&extend_seeley(&u, 2).unwrap()).unwrap();
        assert_eq!(rs, u);
        // Zero extension is the unit step on constant data.
        let one = GridFunction::from_scalar_fn(vec![Axis::half_line(5, 1.0)], |_| C64::new(1.0, 0.0));
        let ez = extend_zero(&one).unwrap();
        let origin = match ez.axes()[0].kind {
            AxisKind::Line { origin, .. } => origin,
            _ => panic!(),
        };
        for (i, v) in ez.values().iter().enumerate() {
            let want = if i >= origin { 1.0 } else { 0.0 };
            assert!((v.re - want).abs() < 1e-15);
        }
    }
}
