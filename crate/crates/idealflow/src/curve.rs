//! Closed unit-length curves in curvature coordinates: the closure constraint
//! 𝒞(u) = ∫ exp(i(κs + 𝒫u)) ds, its chart/projection, and reconstruction of
//! the embedded centred representative.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;
use crate::spectral::{PeriodicField, OVERSAMPLE};
use crate::{Error, Result};

/// Default closure tolerance for states labelled "closed".
pub const CLOSURE_TOL: f64 = 1e-10;
/// Newton target on |𝒞| inside the chart.
pub const NEWTON_TOL: f64 = 1e-12;
/// Default chart radius in L²; stand-in for the unquantified chart
/// neighbourhood, conservative for everything generated here.
pub const CHART_RADIUS: f64 = 1.0;
const NEWTON_MAX_ITER: usize = 50;

/// Intrinsic description of a closed unit-length curve: turning number ω,
/// mean-zero curvature fluctuation u = k − 2πω, and phase ϑ.
#[derive(Debug, Clone)]
pub struct CurvatureState<T> {
    pub omega: i32,
    pub u: PeriodicField<T>,
    pub phase: T,
}

impl<T: Scalar> CurvatureState<T> {
    pub fn circle(omega: i32, n_modes: usize) -> Self {
        assert!(omega != 0, "turning number must be nonzero");
        Self {
            omega,
            u: PeriodicField::zero(n_modes),
            phase: T::zero(),
        }
    }

    /// κ = 2πω.
    pub fn kappa(&self) -> T {
        T::two_pi() * T::of(self.omega as f64)
    }

    /// Full curvature k = κ + u.
    pub fn curvature(&self) -> PeriodicField<T> {
        self.u.add_constant(self.kappa())
    }

    /// K_osc on unit length: ∫ u² ds.
    pub fn kosc(&self) -> T {
        self.u.fluctuation_norm_sq()
    }

    /// |a_ω| + |a_{−ω}| of u's spectrum.
    pub fn resonant_mode_norm(&self) -> T {
        let n = self.omega.unsigned_abs() as i64;
        self.u.coefficient(n).norm() + self.u.coefficient(-n).norm()
    }

    pub fn closure_residual(&self) -> Result<Complex<T>> {
        closure_residual(&self.u, self.omega)
    }

    pub fn assert_closed(&self, tol: T) -> Result<()> {
        let residual = self.closure_residual()?.norm();
        if residual > tol {
            Err(Error::NotClosed {
                residual: residual.as_f64(),
                tol: tol.as_f64(),
            })
        } else {
            Ok(())
        }
    }

    /// JSON record {omega, phase, spectrum: [[n, re, im], …]}.
    pub fn to_json(&self) -> serde_json::Value {
        let spectrum: Vec<serde_json::Value> = self
            .u
            .spectrum()
            .iter()
            .enumerate()
            .map(|(n, a)| serde_json::json!([n, a.re.as_f64(), a.im.as_f64()]))
            .collect();
        serde_json::json!({
            "omega": self.omega,
            "phase": self.phase.as_f64(),
            "spectrum": spectrum,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("curve record: {msg}"));
        let omega = value["omega"]
            .as_i64()
            .ok_or_else(|| bad("missing omega"))? as i32;
        if omega == 0 {
            return Err(bad("turning number must be nonzero"));
        }
        let phase = value["phase"].as_f64().ok_or_else(|| bad("missing phase"))?;
        let entries = value["spectrum"]
            .as_array()
            .ok_or_else(|| bad("missing spectrum"))?;
        if entries.is_empty() {
            return Err(bad("empty spectrum"));
        }
        let mut spectrum = vec![Complex::new(T::zero(), T::zero()); entries.len()];
        for entry in entries {
            let row = entry.as_array().filter(|r| r.len() == 3);
            let row = row.ok_or_else(|| bad("spectrum rows are [n, re, im]"))?;
            let n = row[0].as_u64().ok_or_else(|| bad("bad mode index"))? as usize;
            let re = row[1].as_f64().ok_or_else(|| bad("bad coefficient"))?;
            let im = row[2].as_f64().ok_or_else(|| bad("bad coefficient"))?;
            if n >= spectrum.len() {
                return Err(bad("mode index out of range"));
            }
            spectrum[n] = Complex::new(T::of(re), T::of(im));
        }
        Ok(Self {
            omega,
            u: PeriodicField::from_spectrum(spectrum),
            phase: T::of(phase),
        })
    }
}

/// Closure map 𝒞(u) = ∫₀¹ exp(i(κs + 𝒫u(s))) ds by spectral quadrature on
/// the oversampled grid.  The curvature κ + u closes a unit-length curve iff
/// this vanishes.
pub fn closure_residual<T: Scalar>(u: &PeriodicField<T>, omega: i32) -> Result<Complex<T>> {
    assert!(omega != 0, "turning number must be nonzero");
    let p = u.mean_zero_primitive()?;
    let len = OVERSAMPLE * u.grid_len();
    let pv = p.values_on(len);
    let kappa = T::two_pi() * T::of(omega as f64);
    let mut acc = Complex::new(T::zero(), T::zero());
    for (j, &pj) in pv.iter().enumerate() {
        let angle = kappa * T::of(j as f64 / len as f64) + pj;
        acc = acc + Complex::new(angle.cos(), angle.sin());
    }
    Ok(acc.scale(T::of(1.0 / len as f64)))
}

/// Derivative of the closure map: D𝒞(u)[w] = i ∫ T(s) 𝒫w(s) ds with
/// T = exp(i(κs + 𝒫u)).
pub fn closure_jacobian<T: Scalar>(
    u: &PeriodicField<T>,
    omega: i32,
    w: &PeriodicField<T>,
) -> Result<Complex<T>> {
    assert!(omega != 0, "turning number must be nonzero");
    let pu = u.mean_zero_primitive()?;
    let pw = w.mean_zero_primitive()?;
    let len = OVERSAMPLE * u.grid_len();
    let puv = pu.values_on(len);
    let pwv = pw.values_on(len);
    let kappa = T::two_pi() * T::of(omega as f64);
    let mut acc = Complex::new(T::zero(), T::zero());
    for j in 0..len {
        let angle = kappa * T::of(j as f64 / len as f64) + puv[j];
        // i e^{iθ} = (−sin θ, cos θ)
        acc = acc + Complex::new(-angle.sin(), angle.cos()).scale(pwv[j]);
    }
    Ok(acc.scale(T::of(1.0 / len as f64)))
}

/// Closure chart: splitting of mean-zero curvature space into the two
/// resonant Fourier modes E_ω = span{cos 2πωs, sin 2πωs} and their
/// complement X_ω, with the implicit-function graph Φ enforcing 𝒞 = 0.
///
/// By default the chart is centred at the circle (reference fluctuation 0);
/// an arbitrary smooth closed reference can be supplied instead.
#[derive(Debug, Clone)]
pub struct ClosureChart<T> {
    pub omega: i32,
    reference: Option<PeriodicField<T>>,
    pub chart_radius: T,
    pub newton_tol: T,
}

impl<T: Scalar> ClosureChart<T> {
    pub fn new(omega: i32) -> Self {
        assert!(omega != 0, "turning number must be nonzero");
        Self {
            omega,
            reference: None,
            chart_radius: T::of(CHART_RADIUS),
            newton_tol: T::of(NEWTON_TOL),
        }
    }

    pub fn with_reference(omega: i32, reference: PeriodicField<T>) -> Self {
        let mut chart = Self::new(omega);
        chart.reference = Some(reference);
        chart
    }

    fn resonant_index(&self) -> usize {
        self.omega.unsigned_abs() as usize
    }

    /// The E_ω basis on the given band: (cos 2π|ω|s, sin 2π|ω|s).
    pub fn basis(&self, n_modes: usize) -> (PeriodicField<T>, PeriodicField<T>) {
        let n = self.resonant_index();
        (
            PeriodicField::cosine(n, T::one(), n_modes),
            PeriodicField::sine(n, T::one(), n_modes),
        )
    }

    /// L²-orthogonal projection onto X_ω = E_ω^⊥ ∩ L²₀.
    pub fn project_to_x(&self, f: &PeriodicField<T>) -> PeriodicField<T> {
        let mut v = f.without_mean();
        v.set_coefficient(self.resonant_index(), Complex::new(T::zero(), T::zero()));
        v
    }

    /// (α, β) such that the resonant part of `f` is α cos + β sin.
    fn resonant_coefficients(&self, f: &PeriodicField<T>) -> (T, T) {
        let a = f.coefficient(self.resonant_index() as i64);
        (T::of(2.0) * a.re, -T::of(2.0) * a.im)
    }

    /// Solve 𝒞(u_* + v + Φ(v)) = 0 with Φ(v) ∈ E_ω, keeping the
    /// X_ω-component v of the input fixed.  Damped Newton on the 2-real-
    /// dimensional system; the input's own resonant part seeds the iteration,
    /// so already-closed inputs in the chart are returned unchanged.
    pub fn project(&self, u: &PeriodicField<T>) -> Result<PeriodicField<T>> {
        let zeta = match &self.reference {
            Some(reference) => u.sub(reference),
            None => u.clone(),
        };
        let v = self.project_to_x(&zeta);
        let v_norm = v.fluctuation_norm_sq().sqrt();
        if v_norm > self.chart_radius {
            return Err(Error::InvalidInput(format!(
                "input outside the chart: ‖v‖_L² = {} > {}",
                v_norm, self.chart_radius
            )));
        }
        let (e1, e2) = self.basis(u.n_modes());
        let (mut alpha, mut beta) = self.resonant_coefficients(&zeta);

        let assemble = |alpha: T, beta: T| -> PeriodicField<T> {
            let with_phi = v.add_scaled(&e1, alpha).add_scaled(&e2, beta);
            match &self.reference {
                Some(reference) => reference.add(&with_phi),
                None => with_phi,
            }
        };

        let mut current = assemble(alpha, beta);
        let mut residual = closure_residual(&current, self.omega)?;
        for iteration in 0..NEWTON_MAX_ITER {
            if residual.norm() <= self.newton_tol {
                return Ok(current);
            }
            let j1 = closure_jacobian(&current, self.omega, &e1)?;
            let j2 = closure_jacobian(&current, self.omega, &e2)?;
            let det = j1.re * j2.im - j2.re * j1.im;
            if det.abs() < T::of(1e-10) {
                return Err(Error::ChartSingular { det: det.as_f64() });
            }
            // solve J·δ = −residual for δ = (δα, δβ)
            let da = (-residual.re * j2.im + residual.im * j2.re) / det;
            let db = (-residual.im * j1.re + residual.re * j1.im) / det;
            // step halving when the residual fails to decrease
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..30 {
                let trial = assemble(alpha + lambda * da, beta + lambda * db);
                let trial_residual = closure_residual(&trial, self.omega)?;
                if trial_residual.norm() < residual.norm() {
                    alpha = alpha + lambda * da;
                    beta = beta + lambda * db;
                    current = trial;
                    residual = trial_residual;
                    accepted = true;
                    break;
                }
                lambda = lambda / T::of(2.0);
            }
            if !accepted {
                return Err(Error::NewtonDiverged {
                    residual: residual.norm().as_f64(),
                    tol: self.newton_tol.as_f64(),
                    iterations: iteration + 1,
                });
            }
        }
        if residual.norm() <= self.newton_tol {
            Ok(current)
        } else {
            Err(Error::NewtonDiverged {
                residual: residual.norm().as_f64(),
                tol: self.newton_tol.as_f64(),
                iterations: NEWTON_MAX_ITER,
            })
        }
    }

    /// Condition diagnostics of D𝒞 restricted to E_ω at the reference.
    pub fn jacobian_condition(&self, n_modes: usize) -> Result<(T, T)> {
        let base = match &self.reference {
            Some(reference) => reference.clone(),
            None => PeriodicField::zero(n_modes),
        };
        let (e1, e2) = self.basis(n_modes);
        let j1 = closure_jacobian(&base, self.omega, &e1)?;
        let j2 = closure_jacobian(&base, self.omega, &e2)?;
        let det = j1.re * j2.im - j2.re * j1.im;
        // 2-norm condition number of the real 2×2 matrix
        let a = j1.re;
        let c = j1.im;
        let b = j2.re;
        let d = j2.im;
        let t = a * a + b * b + c * c + d * d;
        let disc = ((t * t - T::of(4.0) * det * det).max(T::zero())).sqrt();
        let smax = ((t + disc) / T::of(2.0)).sqrt();
        let smin = ((t - disc).max(T::zero()) / T::of(2.0)).sqrt();
        let cond = if smin > T::zero() {
            smax / smin
        } else {
            T::infinity()
        };
        Ok((det.abs(), cond))
    }
}

/// Sampled embedded centred representative of a closed unit-length curve.
#[derive(Debug, Clone)]
pub struct ReconstructedCurve<T> {
    pub eta_x: PeriodicField<T>,
    pub eta_y: PeriodicField<T>,
    pub tangent_x: PeriodicField<T>,
    pub tangent_y: PeriodicField<T>,
    /// h = η·N, the normal support function.
    pub h: PeriodicField<T>,
    /// q = η·T, the tangential support function.
    pub q: PeriodicField<T>,
    pub curvature: PeriodicField<T>,
    pub length: T,
}

impl<T: Scalar> ReconstructedCurve<T> {
    /// N = 𝖱T, the tangent rotated by +π/2.
    pub fn normal_x(&self) -> PeriodicField<T> {
        self.tangent_y.scale(-T::one())
    }

    pub fn normal_y(&self) -> PeriodicField<T> {
        self.tangent_x.clone()
    }
}

/// Rebuild the embedded centred representative from curvature coordinates:
/// θ = ϑ + κs + 𝒫u, T = e^{iθ}, η = 𝒫T componentwise (valid because
/// ∫T = 0 for closed states).
pub fn reconstruct<T: Scalar>(state: &CurvatureState<T>) -> Result<ReconstructedCurve<T>> {
    reconstruct_with_tol(state, T::of(CLOSURE_TOL))
}

/// Same, at an explicit closure tolerance.  Flow internals use a looser one
/// for ETD stage states; the public contract stays at [`CLOSURE_TOL`].
pub fn reconstruct_with_tol<T: Scalar>(
    state: &CurvatureState<T>,
    closure_tol: T,
) -> Result<ReconstructedCurve<T>> {
    state.assert_closed(closure_tol)?;
    let n_modes = state.u.n_modes();
    let p = state.u.mean_zero_primitive()?;
    let len = OVERSAMPLE * state.u.grid_len();
    let pv = p.values_on(len);
    let kappa = state.kappa();
    let mut tx = Vec::with_capacity(len);
    let mut ty = Vec::with_capacity(len);
    for (j, &pj) in pv.iter().enumerate() {
        let angle = state.phase + kappa * T::of(j as f64 / len as f64) + pj;
        tx.push(angle.cos());
        ty.push(angle.sin());
    }
    let tangent_x = PeriodicField::from_samples(&tx).resample(n_modes);
    let tangent_y = PeriodicField::from_samples(&ty).resample(n_modes);
    // ∫T ds = e^{iϑ}𝒞(u) which is ≤ closure_tol in modulus; remove it so
    // the primitive is defined, closing the curve exactly.
    let eta_x = tangent_x.without_mean().mean_zero_primitive()?;
    let eta_y = tangent_y.without_mean().mean_zero_primitive()?;
    // h = η·N with N = (−T_y, T_x); q = η·T.
    let h = eta_y
        .product(&tangent_x)
        .sub(&eta_x.product(&tangent_y));
    let q = eta_x
        .product(&tangent_x)
        .add(&eta_y.product(&tangent_y));
    Ok(ReconstructedCurve {
        eta_x,
        eta_y,
        tangent_x,
        tangent_y,
        h,
        q,
        curvature: state.curvature(),
        length: T::one(),
    })
}

/// A sampled closed plane curve in an arbitrary (non-arclength) periodic
/// parameter, with spectral arclength-derivative machinery.  Used by the
/// finite-difference variation oracles.
#[derive(Debug, Clone)]
pub struct ParametricCurve<T> {
    pub x: PeriodicField<T>,
    pub y: PeriodicField<T>,
}

impl<T: Scalar> ParametricCurve<T> {
    pub fn new(x: PeriodicField<T>, y: PeriodicField<T>) -> Self {
        assert_eq!(x.n_modes(), y.n_modes());
        Self { x, y }
    }

    pub fn from_reconstructed(curve: &ReconstructedCurve<T>) -> Self {
        Self::new(curve.eta_x.clone(), curve.eta_y.clone())
    }

    pub fn n_modes(&self) -> usize {
        self.x.n_modes()
    }

    /// |γ′| as a field; positivity is the immersion condition.
    pub fn speed(&self) -> PeriodicField<T> {
        let xp = self.x.derivative(1);
        let yp = self.y.derivative(1);
        let sq = xp.product(&xp).add(&yp.product(&yp));
        sq.map_pointwise(|v| v.max(T::zero()).sqrt())
    }

    fn inv_speed(&self) -> PeriodicField<T> {
        let xp = self.x.derivative(1);
        let yp = self.y.derivative(1);
        let sq = xp.product(&xp).add(&yp.product(&yp));
        sq.map_pointwise(|v| T::one() / v.max(T::of(1e-300)).sqrt())
    }

    /// ∂_s f = |γ′|^{-1} ∂_x f.
    pub fn arclength_derivative(&self, f: &PeriodicField<T>) -> PeriodicField<T> {
        f.derivative(1).product(&self.inv_speed())
    }

    pub fn arclength_derivative_n(&self, f: &PeriodicField<T>, order: usize) -> PeriodicField<T> {
        let mut out = f.clone();
        for _ in 0..order {
            out = self.arclength_derivative(&out);
        }
        out
    }

    /// Signed curvature k = (x′y″ − y′x″)/|γ′|³.
    pub fn curvature(&self) -> PeriodicField<T> {
        let xp = self.x.derivative(1);
        let yp = self.y.derivative(1);
        let xpp = self.x.derivative(2);
        let ypp = self.y.derivative(2);
        let cross = xp.product(&ypp).sub(&yp.product(&xpp));
        let inv = self.inv_speed();
        cross.product(&inv).product(&inv).product(&inv)
    }

    /// ∫ f ds = ∫ f |γ′| dx.
    pub fn integrate_ds(&self, f: &PeriodicField<T>) -> T {
        f.product(&self.speed()).integrate()
    }

    pub fn length(&self) -> T {
        self.speed().integrate()
    }

    /// Unit tangent and normal (N = 𝖱T) as fields.
    pub fn unit_tangent(&self) -> (PeriodicField<T>, PeriodicField<T>) {
        let inv = self.inv_speed();
        (
            self.x.derivative(1).product(&inv),
            self.y.derivative(1).product(&inv),
        )
    }

    /// γ + ε φ N, the normal variation used by the FD oracles.
    pub fn perturb_normal(&self, phi: &PeriodicField<T>, eps: T) -> Self {
        let (tx, ty) = self.unit_tangent();
        let nx = ty.scale(-T::one());
        let ny = tx;
        Self::new(
            self.x.add(&phi.product(&nx).scale(eps)),
            self.y.add(&phi.product(&ny).scale(eps)),
        )
    }
}

/// (1/2π)∮ k ds rounded to the nearest integer; errors when the curvature
/// integral is not integer to 1e−6 (under-resolved curve).
pub fn turning_number<T: Scalar>(curve: &ParametricCurve<T>) -> Result<i32> {
    let total = curve.integrate_ds(&curve.curvature()).as_f64() / std::f64::consts::TAU;
    let nearest = total.round();
    if (total - nearest).abs() > 1e-6 {
        return Err(Error::NotInteger {
            value: total,
            tol: 1e-6,
        });
    }
    Ok(nearest as i32)
}

/// Draw a random closed state: Gaussian spectral coefficients with |n|^{−r}
/// decay, projected to the closure manifold and rescaled until K_osc is
/// within 1% of the target.  Deterministic in the seed.
pub fn random_closed_state<T: Scalar>(
    omega: i32,
    target_kosc: T,
    decay_exponent: f64,
    seed: u64,
    n_modes: usize,
) -> Result<CurvatureState<T>> {
    assert!(omega != 0, "turning number must be nonzero");
    assert!(target_kosc >= T::zero());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = T::of(rng.gen_range(0.0..std::f64::consts::TAU));
    if target_kosc == T::zero() {
        return Ok(CurvatureState {
            omega,
            u: PeriodicField::zero(n_modes),
            phase,
        });
    }
    // keep the draw in the lower quarter of the band so degree-5 products
    // stay alias-free
    let n_active = (n_modes / 4).max(2);
    let mut u = PeriodicField::zero(n_modes);
    for n in 1..=n_active {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        if n == omega.unsigned_abs() as usize {
            // the resonant pair is slaved by the closure projection; drawing
            // it would only be undone, destabilising the rescale loop below
            continue;
        }
        let decay = (n as f64).powf(-decay_exponent);
        u.set_coefficient(n, Complex::new(T::of(re * decay), T::of(im * decay)));
    }
    let chart = ClosureChart::new(omega);
    let mut scale = (target_kosc / u.fluctuation_norm_sq()).sqrt();
    for _ in 0..50 {
        // if the draw lands outside the chart, retreat towards the circle,
        // where projection always succeeds
        let closed = match chart.project(&u.scale(scale)) {
            Ok(closed) => closed,
            Err(_) => {
                scale = scale * T::of(0.5);
                continue;
            }
        };
        let kosc = closed.fluctuation_norm_sq();
        if ((kosc - target_kosc) / target_kosc).abs() <= T::of(0.01) {
            return Ok(CurvatureState {
                omega,
                u: closed,
                phase,
            });
        }
        // damp the update: the projected amplitude responds nonlinearly far
        // from the circle
        let factor = (target_kosc / kosc).sqrt();
        scale = scale * factor.max(T::of(0.5)).min(T::of(2.0));
    }
    Err(Error::NotConverged { iterations: 50 })
}
