//! Weight systems, anisotropic dilations, the natural quasinorm, and the
//! sampled homogeneous / parameter-dependent symbol-class norms.
//!
//! A weight system clusters the d coordinate axes into ell groups with
//! positive integer weights nu_i. Everything anisotropic in this crate (norms,
//! dilations, multiplier classes) is driven by one of the two canonical
//! instances: the trivial system [1, d, 1] and the r-parabolic system
//! [2, (m, 1), (1, r)].

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// The triple [ell, dims, weights] with derived quantities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightSystem {
    dims: Vec<usize>,
    weights: Vec<u32>,
}

impl WeightSystem {
    pub fn new(dims: Vec<usize>, weights: Vec<u32>) -> Result<Self> {
        if dims.is_empty() || dims.len() != weights.len() {
            return Err(Error::validation(
                "dims and weights must be nonempty sequences of equal length",
            ));
        }
        if dims.iter().any(|&d| d == 0) || weights.iter().any(|&w| w == 0) {
            return Err(Error::validation("cluster dimensions and weights must be positive"));
        }
        Ok(WeightSystem { dims, weights })
    }

    /// Trivial system: d axes in one cluster of weight 1.
    pub fn trivial(d: usize) -> Self {
        WeightSystem { dims: vec![d], weights: vec![1] }
    }

    /// r-parabolic system [2, (m, 1), (1, r)]: m spatial axes of weight 1 and
    /// one time axis of weight r.
    pub fn parabolic(m: usize, r: u32) -> Self {
        WeightSystem { dims: vec![m, 1], weights: vec![1, r] }
    }

    pub fn cluster_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cluster_weights(&self) -> &[u32] {
        &self.weights
    }

    /// Total number of axes d.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// nu = lcm(nu_1, ..., nu_ell).
    pub fn nu(&self) -> u32 {
        self.weights.iter().copied().fold(1, lcm)
    }

    /// The per-axis weight vector omega (nu_i repeated d_i times).
    pub fn omega(&self) -> Vec<u32> {
        let mut om = Vec::with_capacity(self.total_dim());
        for (d, w) in self.dims.iter().zip(&self.weights) {
            om.extend(std::iter::repeat(*w).take(*d));
        }
        om
    }

    /// |omega| = dims . weights.
    pub fn abs_omega(&self) -> u32 {
        self.dims
            .iter()
            .zip(&self.weights)
            .map(|(&d, &w)| d as u32 * w)
            .sum()
    }

    /// Offsets of each cluster into the flat coordinate vector.
    pub fn cluster_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.dims.len());
        let mut start = 0;
        for &d in &self.dims {
            out.push(start..start + d);
            start += d;
        }
        out
    }

    /// Anisotropic dilation of the augmented point (xi, eta):
    /// (t^{nu_1} xi_1, ..., t^{nu_ell} xi_ell, t^nu eta).
    pub fn dilate(&self, t: f64, z: &AugmentedPoint) -> Result<AugmentedPoint> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("dilation parameter must be positive, got {t}")));
        }
        self.check_point(z)?;
        let mut xi = Vec::with_capacity(z.xi.len());
        for (range, &w) in self.cluster_ranges().iter().zip(&self.weights) {
            let f = t.powi(w as i32);
            xi.extend(z.xi[range.clone()].iter().map(|&x| f * x));
        }
        Ok(AugmentedPoint { xi, eta: t.powi(self.nu() as i32) * z.eta })
    }

    /// The natural quasinorm Lambda(xi, eta) = (sum_i |xi_i|^{2 nu / nu_i} + eta^2)^{1/(2 nu)}.
    pub fn quasinorm(&self, z: &AugmentedPoint) -> f64 {
        let nu = self.nu() as f64;
        let mut acc = z.eta * z.eta;
        for (range, &w) in self.cluster_ranges().iter().zip(&self.weights) {
            let mag: f64 = z.xi[range.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
            acc += mag.powf(2.0 * nu / w as f64);
        }
        acc.powf(1.0 / (2.0 * nu))
    }

    /// Quasinorm of a frequency vector at parameter eta (eta fixed, xi ungrouped).
    pub fn quasinorm_eta(&self, xi: &[f64], eta: f64) -> f64 {
        self.quasinorm(&AugmentedPoint { xi: xi.to_vec(), eta })
    }

    /// Retraction onto the unit level set [Lambda = 1]: dilation by Lambda^{-1}.
    pub fn lambda_retract(&self, z: &AugmentedPoint) -> Result<AugmentedPoint> {
        let lam = self.quasinorm(z);
        if lam == 0.0 {
            return Err(Error::domain("lambda_retract is undefined at the origin"));
        }
        self.dilate(1.0 / lam, z)
    }

    fn check_point(&self, z: &AugmentedPoint) -> Result<()> {
        if z.xi.len() != self.total_dim() {
            return Err(Error::shape(format!(
                "point has {} frequency components, weight system has {}",
                z.xi.len(),
                self.total_dim()
            )));
        }
        Ok(())
    }

    /// Quasi-uniformly samples the level set [Lambda = 1].
    ///
    /// Magnitudes over the clusters and the parameter are taken from a
    /// midpoint angular grid on the nonnegative part of the unit sphere in
    /// R^{ell+1}; directions within each cluster come from per-cluster
    /// spherical product grids ({-1, +1} for one-dimensional clusters).
    /// The budget is distributed evenly over the angular dimensions.
    pub fn sample_unit_level_set(&self, budget: usize) -> Vec<AugmentedPoint> {
        let ell = self.cluster_count();
        // Angular dimensions: ell for the magnitude sphere S^ell, plus
        // (d_i - 1) per cluster direction sphere.
        let dir_angles: usize = self.dims.iter().map(|&d| d.saturating_sub(1)).sum();
        let sign_factor: usize = self.dims.iter().filter(|&&d| d == 1).count();
        let n_angles = ell + dir_angles;
        let budget = budget.max(1);
        let per_axis = if n_angles == 0 {
            1
        } else {
            let raw = (budget as f64 / (1 << sign_factor) as f64)
                .max(1.0)
                .powf(1.0 / n_angles as f64)
                .round() as usize;
            raw.clamp(2, 64)
        };

        let mut points = Vec::new();
        let mut mag_angles = vec![0usize; ell];
        loop {
            // Magnitude vector (rho_1, ..., rho_ell, rho_eta) on S^ell, all >= 0,
            // built from spherical angles in (0, pi/2).
            // Spherical factorization: rho_k = cos(a_k) prod_{j<k} sin(a_j),
            // rho_ell = prod_j sin(a_j).
            let angles: Vec<f64> = mag_angles
                .iter()
                .map(|&j| (j as f64 + 0.5) / per_axis as f64 * std::f64::consts::FRAC_PI_2)
                .collect();
            let mut rho = vec![0.0_f64; ell + 1];
            for k in 0..ell {
                let mut v = angles[k].cos();
                for &a in angles.iter().take(k) {
                    v *= a.sin();
                }
                rho[k] = v;
            }
            let mut last = 1.0;
            for &a in &angles {
                last *= a.sin();
            }
            rho[ell] = last;

            let eta = rho[ell];
            self.expand_directions(&rho[..ell], eta, per_axis, &mut points);

            // Advance the odometer over magnitude angles.
            let mut k = 0;
            loop {
                if k == ell {
                    return points;
                }
                mag_angles[k] += 1;
                if mag_angles[k] < per_axis {
                    break;
                }
                mag_angles[k] = 0;
                k += 1;
            }
            if ell == 0 {
                return points;
            }
        }
    }

    fn expand_directions(
        &self,
        cluster_mags: &[f64],
        eta: f64,
        per_axis: usize,
        out: &mut Vec<AugmentedPoint>,
    ) {
        let nu = self.nu() as f64;
        // |xi_i| = rho_i^{nu_i / nu} keeps Lambda = 1 exactly.
        let radii: Vec<f64> = cluster_mags
            .iter()
            .zip(&self.weights)
            .map(|(&rho, &w)| rho.powf(w as f64 / nu))
            .collect();
        let dir_grids: Vec<Vec<Vec<f64>>> = self
            .dims
            .iter()
            .map(|&d| sphere_directions(d, per_axis))
            .collect();
        let mut idx = vec![0usize; self.dims.len()];
        loop {
            let mut xi = Vec::with_capacity(self.total_dim());
            for (c, grid) in dir_grids.iter().enumerate() {
                let dir = &grid[idx[c]];
                xi.extend(dir.iter().map(|&u| radii[c] * u));
            }
            out.push(AugmentedPoint { xi, eta });
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return;
                }
                idx[k] += 1;
                if idx[k] < dir_grids[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u32, b: u32) -> u32 {
    a / gcd(a, b) * b
}

/// Unit directions on S^{d-1}: {-1, +1} for d = 1, a midpoint angular grid
/// for d = 2, and a Fibonacci lattice for d >= 3.
fn sphere_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        0 => vec![vec![]],
        1 => vec![vec![-1.0], vec![1.0]],
        2 => (0..n)
            .map(|j| {
                let a = (j as f64 + 0.5) / n as f64 * std::f64::consts::TAU;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let count = n * n;
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = std::f64::consts::TAU * (j as f64 / golden).fract();
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            // Product of a 2-sphere lattice with recursively sampled remainder;
            // adequate for the desk-scale dimensions exercised here.
            let lower = sphere_directions(d - 1, n);
            let mut out = Vec::new();
            for j in 0..n {
                let a = (j as f64 + 0.5) / n as f64 * std::f64::consts::PI;
                let (c, s) = (a.cos(), a.sin());
                for dir in &lower {
                    let mut v = vec![c];
                    v.extend(dir.iter().map(|&u| s * u));
                    out.push(v);
                }
            }
            out
        }
    }
}

/// A point (xi, eta) of the nu-augmented phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPoint {
    pub xi: Vec<f64>,
    pub eta: f64,
}

impl AugmentedPoint {
    pub fn new(xi: Vec<f64>, eta: f64) -> Self {
        AugmentedPoint { xi, eta }
    }

    pub fn is_zero(&self) -> bool {
        self.eta == 0.0 && self.xi.iter().all(|&x| x == 0.0)
    }
}

/// Result of a sampled homogeneous symbol-class norm estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolClassReport {
    /// max over alpha . omega <= max_order_checked and over samples of
    /// |(d^alpha a) o r_Lambda|.
    pub h_norm: f64,
    pub z_re: f64,
    pub z_im: f64,
    /// Derivative budget actually checked (2 |omega| unless overridden).
    pub max_order_checked: u32,
    pub sample_count: usize,
    /// Worst relative disagreement between the h and h/2 difference stencils.
    pub fd_check: f64,
}

/// Symbol evaluator: a matrix-valued function of the augmented point.
pub type SymbolFn<'a> = dyn Fn(&AugmentedPoint) -> Result<CMat> + Sync + 'a;

/// Estimates the homogeneous-class norm of a positively z-homogeneous symbol
/// by sampling the unit level set and taking central finite differences of
/// every order alpha with alpha . omega <= 2 |omega|.
pub fn estimate_hz_norm(
    a: &SymbolFn<'_>,
    z: C64,
    w: &WeightSystem,
    samples: usize,
) -> Result<SymbolClassReport> {
    estimate_hz_norm_with_budget(a, z, w, samples, None)
}

/// Same as [`estimate_hz_norm`] with an explicit derivative budget override.
pub fn estimate_hz_norm_with_budget(
    a: &SymbolFn<'_>,
    z: C64,
    w: &WeightSystem,
    samples: usize,
    budget: Option<u32>,
) -> Result<SymbolClassReport> {
    if samples == 0 {
        return Err(Error::validation("sample count must be at least 1"));
    }
    let max_order = budget.unwrap_or(2 * w.abs_omega());
    let omega = w.omega();
    let alphas = multi_indices_with_weight(&omega, max_order);
    let points = w.sample_unit_level_set(samples);

    // Per sample: for every alpha the fine-step magnitude and the absolute
    // h-vs-h/2 disagreement.
    let results: Vec<Result<Vec<(f64, f64)>>> = points
        .par_iter()
        .map(|zeta| {
            let mut cache = StencilCache::new(a, zeta, 1.0);
            alphas
                .iter()
                .map(|alpha| cache.derivative_magnitude(alpha))
                .collect()
        })
        .collect();

    let mut h_norm = 0.0_f64;
    let mut per_alpha_max = vec![0.0_f64; alphas.len()];
    let mut per_alpha_diff = vec![0.0_f64; alphas.len()];
    for r in results {
        for (k, (v, d)) in r?.into_iter().enumerate() {
            h_norm = h_norm.max(v);
            per_alpha_max[k] = per_alpha_max[k].max(v);
            per_alpha_diff[k] = per_alpha_diff[k].max(d);
        }
    }
    // Disagreement is judged at the scale of each order's sampled sup, so a
    // derivative passing through zero does not register as a failure.
    let fd_check = per_alpha_max
        .iter()
        .zip(&per_alpha_diff)
        .map(|(&m, &d)| if m > 0.0 { d / m } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(SymbolClassReport {
        h_norm,
        z_re: z.re,
        z_im: z.im,
        max_order_checked: max_order,
        sample_count: points.len(),
        fd_check,
    })
}

/// Step for an order-n iterated central difference at unit scale.
///
/// A fixed 1e-4 step only balances truncation against roundoff for orders
/// up to two; the (2h)^{-n} denominator of an order-n stencil amplifies
/// machine epsilon by eps/(2h)^n, so the step has to grow with the order.
/// Equating the O(h^2) truncation with the roundoff term gives
/// h ~ eps^{1/(n+2)}.
fn fd_step_for_order(order: u32) -> f64 {
    1e-4_f64.max(f64::EPSILON.powf(1.0 / (order as f64 + 2.0)))
}

/// Central-difference engine with evaluations cached per step lattice around
/// a fixed base point (symbol evaluators are pure, so re-evaluations in norm
/// sweeps are deduplicated here).
struct StencilCache<'a> {
    f: &'a SymbolFn<'a>,
    base: &'a AugmentedPoint,
    scale: f64,
    // Key: (total order class, offsets in half-steps of that class's lattice).
    values: HashMap<(u32, Vec<i64>), CMat>,
}

impl<'a> StencilCache<'a> {
    fn new(f: &'a SymbolFn<'a>, base: &'a AugmentedPoint, scale: f64) -> Self {
        StencilCache { f, base, scale, values: HashMap::new() }
    }

    fn eval(&mut self, order: u32, offset_half_steps: &[i64]) -> Result<CMat> {
        let key = if offset_half_steps.iter().all(|&o| o == 0) {
            (0, vec![0; offset_half_steps.len()])
        } else {
            (order, offset_half_steps.to_vec())
        };
        if let Some(v) = self.values.get(&key) {
            return Ok(v.clone());
        }
        let h = fd_step_for_order(order) * self.scale;
        let mut p = self.base.clone();
        for (k, &o) in offset_half_steps.iter().enumerate() {
            p.xi[k] += o as f64 * h / 2.0;
        }
        let v = (self.f)(&p).map_err(|e| Error::Eval {
            location: p.xi.iter().copied().chain([p.eta]).collect(),
            message: e.to_string(),
        })?;
        self.values.insert(key, v.clone());
        Ok(v)
    }

    /// |d^alpha f| at the base point with a Richardson consistency check:
    /// returns (magnitude at the fine step, absolute disagreement with the
    /// doubled step).
    fn derivative_magnitude(&mut self, alpha: &[u32]) -> Result<(f64, f64)> {
        let coarse = self.difference(alpha, 2)?;
        let fine = self.difference(alpha, 1)?;
        let mf = fine.frobenius_norm();
        let diff = fine.sub(&coarse).frobenius_norm();
        Ok((mf, diff))
    }

    /// Iterated central difference of multi-order alpha with per-axis step
    /// `step_halves * h/2`, h chosen by the total order.
    fn difference(&mut self, alpha: &[u32], step_halves: i64) -> Result<CMat> {
        let d = alpha.len();
        let order: u32 = alpha.iter().sum();
        let h = fd_step_for_order(order) * self.scale;
        let step = h / 2.0 * step_halves as f64;
        let denom = (2.0 * step).powi(order as i32);
        let mut acc: Option<CMat> = None;
        let mut idx = vec![0u32; d];
        loop {
            // Tensor-product stencil weight and offset.
            let mut coeff = 1.0_f64;
            let mut offset = vec![0i64; d];
            for k in 0..d {
                let n = alpha[k];
                let j = idx[k];
                coeff *= binomial(n, j) * if j % 2 == 1 { -1.0 } else { 1.0 };
                offset[k] = (n as i64 - 2 * j as i64) * step_halves;
            }
            let v = self.eval(order, &offset)?;
            let term = v.scale(C64::new(coeff / denom, 0.0));
            acc = Some(match acc {
                None => term,
                Some(m) => m.add(&term),
            });
            // Odometer over 0..=alpha_k.
            let mut k = 0;
            loop {
                if k == d {
                    return Ok(acc.unwrap());
                }
                idx[k] += 1;
                if idx[k] <= alpha[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// All multiindices alpha in N^d with alpha . omega <= budget.
pub fn multi_indices_with_weight(omega: &[u32], budget: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; omega.len()];
    fn rec(omega: &[u32], budget: u32, k: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == omega.len() {
            out.push(current.clone());
            return;
        }
        let mut used: u32 = current[..k]
            .iter()
            .zip(&omega[..k])
            .map(|(&a, &w)| a * w)
            .sum();
        let mut a = 0;
        while used <= budget {
            current[k] = a;
            rec(omega, budget, k + 1, current, out);
            a += 1;
            used += omega[k];
            if omega[k] == 0 {
                break;
            }
        }
        current[k] = 0;
    }
    rec(omega, budget, 0, &mut current, &mut out);
    out
}

/// Symbol values tabulated on a uniform frequency lattice.
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    pub shape: Vec<usize>,
    /// Frequency of node index 0 per axis.
    pub origin: Vec<f64>,
    /// Frequency increment per axis.
    pub spacing: Vec<f64>,
    /// Row-major matrix values, one per node.
    pub values: Vec<CMat>,
}

impl SymbolGrid {
    /// Tabulates an evaluator on the lattice.
    pub fn tabulate(
        shape: &[usize],
        origin: &[f64],
        spacing: &[f64],
        f: &(dyn Fn(&[f64]) -> CMat + Sync),
    ) -> Self {
        let total: usize = shape.iter().product();
        let values: Vec<CMat> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let idx = unflatten(flat, shape);
                let xi: Vec<f64> = idx
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| origin[k] + i as f64 * spacing[k])
                    .collect();
                f(&xi)
            })
            .collect();
        SymbolGrid {
            shape: shape.to_vec(),
            origin: origin.to_vec(),
            spacing: spacing.to_vec(),
            values,
        }
    }

    fn node_freq(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| self.origin[k] + i as f64 * self.spacing[k])
            .collect()
    }

    fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (k, &i) in idx.iter().enumerate() {
            f = f * self.shape[k] + i;
        }
        f
    }
}

fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0usize; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

/// Discrete parameter-dependent multiplier-class norm
/// max_{alpha . omega <= 2 |omega|} max over the lattice of
/// Lambda_eta^{alpha . omega} |d^alpha a|, with grid-step central differences.
pub fn m_eta_norm(a: &SymbolGrid, w: &WeightSystem, eta: f64) -> Result<f64> {
    m_eta_norm_with_budget(a, w, eta, None)
}

pub fn m_eta_norm_with_budget(
    a: &SymbolGrid,
    w: &WeightSystem,
    eta: f64,
    budget: Option<u32>,
) -> Result<f64> {
    if eta <= 0.0 {
        return Err(Error::validation("eta must be positive"));
    }
    let d = w.total_dim();
    if a.shape.len() != d {
        return Err(Error::shape(format!(
            "symbol grid has {} axes, weight system has {d}",
            a.shape.len()
        )));
    }
    let max_order = budget.unwrap_or(2 * w.abs_omega());
    let omega = w.omega();
    let alphas = multi_indices_with_weight(&omega, max_order);
    for alpha in &alphas {
        for (k, &ak) in alpha.iter().enumerate() {
            if a.shape[k] < 2 * ak as usize + 1 {
                return Err(Error::config(format!(
                    "grid axis {k} has {} nodes, too coarse for an order-{ak} central difference",
                    a.shape[k]
                )));
            }
        }
    }

    let best = alphas
        .par_iter()
        .map(|alpha| {
            let weight_order: u32 = alpha.iter().zip(&omega).map(|(&a, &w)| a * w).sum();
            let mut local = 0.0_f64;
            let total: usize = a.shape.iter().product();
            for flat in 0..total {
                let idx = unflatten(flat, &a.shape);
                if idx
                    .iter()
                    .zip(alpha)
                    .zip(&a.shape)
                    .any(|((&i, &ak), &n)| i < ak as usize || i + (ak as usize) >= n)
                {
                    continue;
                }
                let deriv = grid_central_difference(a, &idx, alpha);
                let xi = a.node_freq(&idx);
                let lam = w.quasinorm_eta(&xi, eta);
                local = local.max(lam.powi(weight_order as i32) * deriv.frobenius_norm());
            }
            local
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Iterated central difference on the lattice using the grid spacing as step.
fn grid_central_difference(a: &SymbolGrid, idx: &[usize], alpha: &[u32]) -> CMat {
    let d = alpha.len();
    let order: u32 = alpha.iter().sum();
    if order == 0 {
        return a.values[a.flat(idx)].clone();
    }
    let denom: f64 = alpha
        .iter()
        .enumerate()
        .map(|(k, &ak)| (2.0 * a.spacing[k]).powi(ak as i32))
        .product();
    let mut acc: Option<CMat> = None;
    let mut j = vec![0u32; d];
    loop {
        let mut coeff = 1.0_f64;
        let mut node = idx.to_vec();
        for k in 0..d {
            let n = alpha[k];
            let jk = j[k];
            coeff *= binomial(n, jk) * if jk % 2 == 1 { -1.0 } else { 1.0 };
            let off = n as i64 - 2 * jk as i64;
            node[k] = (node[k] as i64 + off) as usize;
        }
        let term = a.values[a.flat(&node)].scale(C64::new(coeff / denom, 0.0));
        acc = Some(match acc {
            None => term,
            Some(m) => m.add(&term),
        });
        let mut k = 0;
        loop {
            if k == d {
                return acc.unwrap();
            }
            j[k] += 1;
            if j[k] <= alpha[k] {
                break;
            }
            j[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(xi: &[f64], eta: f64) -> AugmentedPoint {
        AugmentedPoint::new(xi.to_vec(), eta)
    }

    #[test]
    fn derived_quantities() {
        let w = WeightSystem::parabolic(1, 2);
        assert_eq!(w.total_dim(), 2);
        assert_eq!(w.nu(), 2);
        assert_eq!(w.omega(), vec![1, 2]);
        assert_eq!(w.abs_omega(), 3);
        let t = WeightSystem::trivial(3);
        assert_eq!(t.omega(), vec![1, 1, 1]);
        assert_eq!(t.nu(), 1);
        assert_eq!(t.abs_omega(), 3);
    }

    #[test]
    fn dilation_identity_and_parabolic_powers() {
        let w = WeightSystem::parabolic(1, 2);
        let z = pt(&[1.0, 1.0], 1.0);
        let same = w.dilate(1.0, &z).unwrap();
        assert_eq!(same, z);
        // t = 2: (2^1 xi, 2^2 tau, 2^2 eta) = (2, 4, 4).
        let d = w.dilate(2.0, &z).unwrap();
        assert_eq!(d.xi, vec![2.0, 4.0]);
        assert_eq!(d.eta, 4.0);
    }

    #[test]
    fn dilation_group_property() {
        let w = WeightSystem::parabolic(2, 4);
        let z = pt(&[0.3, -1.2, 0.7], 2.5);
        let back = w.dilate(2.0, &w.dilate(0.5, &z).unwrap()).unwrap();
        for (a, b) in back.xi.iter().zip(&z.xi) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        assert_relative_eq!(back.eta, z.eta, epsilon = 1e-14);
    }

    #[test]
    fn dilation_rejects_nonpositive_t() {
        let w = WeightSystem::trivial(1);
        assert!(w.dilate(0.0, &pt(&[1.0], 0.0)).is_err());
        assert!(w.dilate(-2.0, &pt(&[1.0], 0.0)).is_err());
    }

    #[test]
    fn quasinorm_examples() {
        let w = WeightSystem::parabolic(1, 2);
        // Single unit time component: Lambda = (1^2)^{1/4} = 1.
        assert_relative_eq!(w.quasinorm(&pt(&[0.0, 1.0], 0.0)), 1.0, epsilon = 1e-14);
        // (xi, tau, eta) = (1, 1, 1): (1^4 + 1 + 1)^{1/4} = 3^{1/4}.
        let lam = w.quasinorm(&pt(&[1.0, 1.0], 1.0));
        assert_relative_eq!(lam, 3.0_f64.powf(0.25), epsilon = 1e-14);
        assert_relative_eq!(lam, 1.3160740129524924, epsilon = 1e-12);
        // Zero iff origin.
        assert_eq!(w.quasinorm(&pt(&[0.0, 0.0], 0.0)), 0.0);
        assert!(w.quasinorm(&pt(&[1e-8, 0.0], 0.0)) > 0.0);
    }

    #[test]
    fn quasinorm_one_homogeneous_under_dilation() {
        let w = WeightSystem::parabolic(1, 2);
        let z = pt(&[1.0, 1.0], 1.0);
        let lam2 = w.quasinorm(&w.dilate(2.0, &z).unwrap());
        assert_relative_eq!(lam2, 2.0 * 3.0_f64.powf(0.25), epsilon = 1e-12);
    }

    #[test]
    fn retraction_lands_on_level_set_and_is_idempotent() {
        let w = WeightSystem::parabolic(2, 2);
        let z = pt(&[2.0, -0.5, 3.0], 1.5);
        let r = w.lambda_retract(&z).unwrap();
        assert!((w.quasinorm(&r) - 1.0).abs() < 1e-12);
        let rr = w.lambda_retract(&r).unwrap();
        for (a, b) in rr.xi.iter().zip(&r.xi) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((rr.eta - r.eta).abs() < 1e-12);
        // Fixed point on the level set; simple axis case.
        let w1 = WeightSystem::parabolic(1, 2);
        let r2 = w1.lambda_retract(&pt(&[2.0, 0.0], 0.0)).unwrap();
        assert_relative_eq!(r2.xi[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn retraction_rejects_origin() {
        let w = WeightSystem::trivial(2);
        assert!(w.lambda_retract(&pt(&[0.0, 0.0], 0.0)).is_err());
    }

    #[test]
    fn level_set_samples_sit_on_the_level_set() {
        for w in [WeightSystem::trivial(2), WeightSystem::parabolic(1, 2), WeightSystem::parabolic(2, 4)] {
            let pts = w.sample_unit_level_set(200);
            assert!(!pts.is_empty());
            for p in &pts {
                assert!(
                    (w.quasinorm(p) - 1.0).abs() < 1e-10,
                    "sample off the level set: {:?}",
                    p
                );
            }
        }
    }

    #[test]
    fn hz_norm_of_constant_symbol_is_one() {
        let w = WeightSystem::trivial(1);
        let f = |_: &AugmentedPoint| Ok(CMat::identity(1));
        let rep = estimate_hz_norm(&f, C64::new(0.0, 0.0), &w, 64).unwrap();
        assert_relative_eq!(rep.h_norm, 1.0, epsilon = 1e-9);
        assert_eq!(rep.max_order_checked, 2);
    }

    #[test]
    fn hz_norm_of_linear_symbol_trivial_weights() {
        // a(xi) = xi_1 with z = 1: only orders 0 and 1 contribute, both with
        // sampled sup 1 on the level set.
        let w = WeightSystem::trivial(1);
        let f = |z: &AugmentedPoint| Ok(CMat::scalar(C64::new(z.xi[0], 0.0)));
        let rep = estimate_hz_norm(&f, C64::new(1.0, 0.0), &w, 64).unwrap();
        assert_relative_eq!(rep.h_norm, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn hz_norm_of_quasinorm_power_is_finite() {
        // Lambda^r is in the class H_r; its sampled norm must be finite and
        // its order-zero trace on the level set equals 1.
        let w = WeightSystem::parabolic(1, 2);
        let wc = w.clone();
        let f = move |z: &AugmentedPoint| {
            Ok(CMat::scalar(C64::new(wc.quasinorm(z).powi(2), 0.0)))
        };
        let rep = estimate_hz_norm(&f, C64::new(2.0, 0.0), &w, 100).unwrap();
        assert!(rep.h_norm.is_finite());
        assert!(rep.h_norm >= 1.0 - 1e-9);
        assert!(rep.fd_check < 1e-2, "fd disagreement {:.3e}", rep.fd_check);
    }

    #[test]
    fn hz_norm_propagates_evaluator_failure_with_location() {
        let w = WeightSystem::trivial(1);
        let f = |_: &AugmentedPoint| -> Result<CMat> { Err(Error::domain("synthetic failure")) };
        let err = estimate_hz_norm(&f, C64::new(0.0, 0.0), &w, 8).unwrap_err();
        match err {
            Error::Eval { location, .. } => assert!(!location.is_empty()),
            other => panic!("expected Eval error, got {other}"),
        }
    }

    #[test]
    fn m_eta_norm_of_constant_symbol() {
        let w = WeightSystem::trivial(1);
        let grid = SymbolGrid::tabulate(
            &[33],
            &[-16.0],
            &[1.0],
            &|_xi| CMat::scalar(C64::new(3.0, 0.0)),
        );
        let v = m_eta_norm(&grid, &w, 1.0).unwrap();
        assert_relative_eq!(v, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn m_eta_norm_uniform_for_normalized_heat_symbol() {
        // a_eta(xi) = (eta^2 + xi^2) / Lambda_eta^2 = 1 for the heat symbol;
        // sampled norms must agree across eta.
        let w = WeightSystem::trivial(1);
        let mut vals = Vec::new();
        for &eta in &[1.0, 10.0, 100.0] {
            let grid = SymbolGrid::tabulate(
                &[65],
                &[-32.0],
                &[1.0],
                &move |xi| {
                    let lam2 = xi[0] * xi[0] + eta * eta;
                    CMat::scalar(C64::new((eta * eta + xi[0] * xi[0]) / lam2, 0.0))
                },
            );
            vals.push(m_eta_norm(&grid, &w, eta).unwrap());
        }
        for v in &vals {
            assert!(*v < 2.0, "eta-uniform bound violated: {v}");
        }
    }

    #[test]
    fn m_eta_norm_flags_unbounded_symbol_growth() {
        // a(xi) = xi on a wide grid: the sampled max grows with the extent.
        let w = WeightSystem::trivial(1);
        let narrow = SymbolGrid::tabulate(&[17], &[-8.0], &[1.0], &|xi| {
            CMat::scalar(C64::new(xi[0], 0.0))
        });
        let wide = SymbolGrid::tabulate(&[65], &[-32.0], &[1.0], &|xi| {
            CMat::scalar(C64::new(xi[0], 0.0))
        });
        let v_narrow = m_eta_norm(&narrow, &w, 1.0).unwrap();
        let v_wide = m_eta_norm(&wide, &w, 1.0).unwrap();
        assert!(v_wide > 2.0 * v_narrow, "narrow {v_narrow}, wide {v_wide}");
    }

    #[test]
    fn m_eta_norm_rejects_coarse_grid() {
        let w = WeightSystem::trivial(1);
        let grid = SymbolGrid::tabulate(&[3], &[-1.0], &[1.0], &|_| CMat::identity(1));
        assert!(matches!(m_eta_norm(&grid, &w, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn multiindex_enumeration_budget() {
        // omega = (1, 2), budget 2: (0,0), (1,0), (2,0), (0,1).
        let list = multi_indices_with_weight(&[1, 2], 2);
        assert_eq!(list.len(), 4);
        assert!(list.contains(&vec![0, 1]));
        assert!(list.contains(&vec![2, 0]));
    }
}
