//! Forced heat equation: domains, forcing families, the closed-form
//! verification solution, and explicit FTCS solvers in one and two
//! space dimensions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Rectangular space-time box; `space` holds per-axis `(min, max)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Domain {
    pub space: Vec<(f64, f64)>,
    pub time: (f64, f64),
}

impl Domain {
    pub fn new_1d(x: (f64, f64), t: (f64, f64)) -> Self {
        Domain {
            space: vec![x],
            time: t,
        }
    }

    pub fn new_2d(x1: (f64, f64), x2: (f64, f64), t: (f64, f64)) -> Self {
        Domain {
            space: vec![x1, x2],
            time: t,
        }
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }
}

/// `n` evenly spaced values with both endpoints included; `n >= 2`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(n >= 2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect()
}

/// Forcing term families; parameters are per-sample draws.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Forcing {
    None,
    /// `(beta + D*alpha)/50 * exp(-2 beta t) * sin(alpha x)`.
    Exp1 { alpha: f64, beta: f64 },
    /// `(3/5) sin(12 x) exp(0.2 x - 0.5 t)`, parameter-free.
    Exp2,
    /// The forcing that makes [`exact_solution_exp3`] solve the heat
    /// equation with unit diffusivity.
    Exp3 { alpha: f64, beta: f64 },
    /// Archimedean spiral band `r = pitch * theta`, `theta in [0, 4pi]`,
    /// constant amplitude inside the band, zero outside, static in time.
    Spiral {
        center: (f64, f64),
        amplitude: f64,
        pitch: f64,
        half_width: f64,
    },
}

/// Evaluate a forcing term at a point. `x` has the spatial dimension of the
/// family; `diffusivity` enters only the `Exp1` coefficient.
pub fn forcing_eval(forcing: &Forcing, diffusivity: f64, x: &[f64], t: f64) -> f64 {
    match forcing {
        Forcing::None => 0.0,
        Forcing::Exp1 { alpha, beta } => {
            (beta + diffusivity * alpha) / 50.0 * math::exp(-2.0 * beta * t) * math::sin(alpha * x[0])
        }
        Forcing::Exp2 => 0.6 * math::sin(12.0 * x[0]) * math::exp(0.2 * x[0] - 0.5 * t),
        Forcing::Exp3 { alpha, beta } => {
            let xx = x[0];
            let e = math::exp(beta * t);
            0.5 * ((xx * xx - 1.0) * (alpha * alpha + beta) - 2.0) * math::sin(alpha * xx) * e
                - 2.0 * alpha * xx * math::cos(alpha * xx) * e
        }
        Forcing::Spiral {
            center,
            amplitude,
            pitch,
            half_width,
        } => {
            let dx = x[0] - center.0;
            let dy = x[1] - center.1;
            let r = math::sqrt(dx * dx + dy * dy);
            let theta_max = 4.0 * core::f64::consts::PI;
            if r > pitch * theta_max + half_width {
                return 0.0;
            }
            let mut phi = math::atan2(dy, dx);
            if phi < 0.0 {
                phi += 2.0 * core::f64::consts::PI;
            }
            // the arm passes a given direction once per turn
            for turn in 0..3 {
                let theta = phi + 2.0 * core::f64::consts::PI * turn as f64;
                if theta > theta_max {
                    break;
                }
                if math::abs(r - pitch * theta) <= *half_width {
                    return *amplitude;
                }
            }
            0.0
        }
    }
}

/// Closed-form solution `0.5 + 0.5 e^{beta t} (x^2 - 1) sin(alpha x)` of the
/// unit-diffusivity heat equation under the `Exp3` forcing.
pub fn exact_solution_exp3(alpha: f64, beta: f64, x: f64, t: f64) -> f64 {
    0.5 + 0.5 * math::exp(beta * t) * (x * x - 1.0) * math::sin(alpha * x)
}

fn check_solver_args(nt: usize, n_space: usize, init_len: usize, diffusivity: f64) -> Result<()> {
    if nt < 2 || n_space < 3 {
        return Err(Error::Config(alloc::format!(
            "solver needs nt >= 2 and nx >= 3, got nt={nt}, nx={n_space}"
        )));
    }
    if init_len != n_space {
        return Err(Error::Dimension {
            op: "solve_heat",
            lhs: vec![init_len],
            rhs: vec![n_space],
        });
    }
    if !(diffusivity >= 0.0) || !diffusivity.is_finite() {
        return Err(Error::Config(alloc::format!(
            "diffusivity must be finite and non-negative, got {diffusivity}"
        )));
    }
    Ok(())
}

/// Internal substep count keeping the stability number at or below 1/2.
fn substeps(diffusivity: f64, dt_out: f64, inv_dx2_sum: f64) -> usize {
    let k = math::ceil(diffusivity * dt_out * inv_dx2_sum / 0.5);
    if k < 1.0 {
        1
    } else {
        k as usize
    }
}

/// Explicit FTCS solve of `u_t = D u_xx + F` on a 1D node grid.
///
/// Output is `nt` frames of `nx` nodes (row-major, frame 0 equals `init`);
/// frame times are uniform over the domain's span. Boundary nodes are held
/// at their initial values, which is zero-Dirichlet whenever `init`
/// vanishes at the ends. The solver substeps internally so the stability
/// number `D dt / dx^2` never exceeds 1/2, then subsamples to `nt` frames.
pub fn solve_heat_1d(
    diffusivity: f64,
    domain: &Domain,
    nx: usize,
    nt: usize,
    init: &[f64],
    forcing: &Forcing,
) -> Result<Vec<f64>> {
    check_solver_args(nt, nx, init.len(), diffusivity)?;
    if domain.dim() != 1 {
        return Err(Error::Config("solve_heat_1d requires a 1D domain".into()));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("initial state contains non-finite values".into()));
    }
    let (x0, x1) = domain.space[0];
    let (t0, t1) = domain.time;
    let xs = linspace(x0, x1, nx);
    let dx = (x1 - x0) / (nx - 1) as f64;
    let dt_out = (t1 - t0) / (nt - 1) as f64;
    let k = substeps(diffusivity, dt_out, 1.0 / (dx * dx));
    let dt = dt_out / k as f64;
    let r = diffusivity * dt / (dx * dx);
    let (left, right) = (init[0], init[nx - 1]);

    let mut out = Vec::with_capacity(nt * nx);
    out.extend_from_slice(init);
    let mut u = init.to_vec();
    let mut next = vec![0.0; nx];
    for frame in 0..nt - 1 {
        for sub in 0..k {
            let t = t0 + ((frame * k + sub) as f64) * dt;
            next[0] = left;
            next[nx - 1] = right;
            for i in 1..nx - 1 {
                let lap = u[i + 1] - 2.0 * u[i] + u[i - 1];
                next[i] = u[i] + r * lap + dt * forcing_eval(forcing, diffusivity, &xs[i..=i], t);
            }
            core::mem::swap(&mut u, &mut next);
        }
        out.extend_from_slice(&u);
    }
    Ok(out)
}

/// Explicit FTCS solve of `u_t = D (u_x1x1 + u_x2x2) + F` on a 2D node grid.
///
/// Output frames are `[nt, n1, n2]` row-major (x2 contiguous); the boundary
/// ring is held at its initial values and the substep count keeps
/// `D dt (1/dx1^2 + 1/dx2^2)` at or below 1/2.
pub fn solve_heat_2d(
    diffusivity: f64,
    domain: &Domain,
    n1: usize,
    n2: usize,
    nt: usize,
    init: &[f64],
    forcing: &Forcing,
) -> Result<Vec<f64>> {
    if nt < 2 || n1 < 3 || n2 < 3 {
        return Err(Error::Config(alloc::format!(
            "solver needs nt >= 2 and n1, n2 >= 3, got nt={nt}, n1={n1}, n2={n2}"
        )));
    }
    if !(diffusivity >= 0.0) || !diffusivity.is_finite() {
        return Err(Error::Config(alloc::format!(
            "diffusivity must be finite and non-negative, got {diffusivity}"
        )));
    }
    if domain.dim() != 2 {
        return Err(Error::Config("solve_heat_2d requires a 2D domain".into()));
    }
    if init.len() != n1 * n2 {
        return Err(Error::Dimension {
            op: "solve_heat_2d",
            lhs: vec![init.len()],
            rhs: vec![n1, n2],
        });
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("initial state contains non-finite values".into()));
    }
    let (a1, b1) = domain.space[0];
    let (a2, b2) = domain.space[1];
    let (t0, t1) = domain.time;
    let g1 = linspace(a1, b1, n1);
    let g2 = linspace(a2, b2, n2);
    let dx1 = (b1 - a1) / (n1 - 1) as f64;
    let dx2 = (b2 - a2) / (n2 - 1) as f64;
    let dt_out = (t1 - t0) / (nt - 1) as f64;
    let k = substeps(diffusivity, dt_out, 1.0 / (dx1 * dx1) + 1.0 / (dx2 * dx2));
    let dt = dt_out / k as f64;
    let r1 = diffusivity * dt / (dx1 * dx1);
    let r2 = diffusivity * dt / (dx2 * dx2);

    let mut out = Vec::with_capacity(nt * n1 * n2);
    out.extend_from_slice(init);
    let mut u = init.to_vec();
    let mut next = init.to_vec();
    for frame in 0..nt - 1 {
        for sub in 0..k {
            let t = t0 + ((frame * k + sub) as f64) * dt;
            for i in 1..n1 - 1 {
                for j in 1..n2 - 1 {
                    let c = u[i * n2 + j];
                    let lap1 = u[(i + 1) * n2 + j] - 2.0 * c + u[(i - 1) * n2 + j];
                    let lap2 = u[i * n2 + j + 1] - 2.0 * c + u[i * n2 + j - 1];
                    let f = forcing_eval(forcing, diffusivity, &[g1[i], g2[j]], t);
                    next[i * n2 + j] = c + r1 * lap1 + r2 * lap2 + dt * f;
                }
            }
            // boundary ring stays at init (next was seeded from init)
            core::mem::swap(&mut u, &mut next);
        }
        out.extend_from_slice(&u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let norm: f64 = b.iter().map(|y| y * y).sum();
        math::sqrt(diff / norm)
    }

    #[test]
    fn forcing_exp1_zero_at_origin() {
        let f = Forcing::Exp1 {
            alpha: 3.0,
            beta: 0.5,
        };
        assert_eq!(forcing_eval(&f, 1e-3, &[0.0], 1.0), 0.0);
    }

    #[test]
    fn forcing_exp3_pinned_value() {
        // Independently evaluated with 30-digit arithmetic.
        let f = Forcing::Exp3 {
            alpha: 2.0,
            beta: -0.5,
        };
        let v = forcing_eval(&f, 1.0, &[0.5], 1.0);
        assert!((v - -1.8356688409917443).abs() < 1e-14, "{v}");
    }

    #[test]
    fn exact_solution_pinned_value() {
        let u = exact_solution_exp3(2.0, -0.5, 0.5, 1.0);
        assert!((u - 0.3086082681707852).abs() < 1e-14, "{u}");
    }

    #[test]
    fn exact_solution_boundary_is_half() {
        for &(a, b, t) in &[(3.0, -0.2, 0.0), (-7.5, -1.0, 1.7), (0.1, -0.9, 2.0)] {
            assert_eq!(exact_solution_exp3(a, b, 1.0, t), 0.5);
            assert_eq!(exact_solution_exp3(a, b, -1.0, t), 0.5);
        }
    }

    #[test]
    fn exact_solution_satisfies_pde_symbolically() {
        // u_t - u_xx - F == 0 with the derivatives written out by hand
        let mut rng = crate::rng::CounterRng::new(17);
        for _ in 0..100 {
            let a = rng.uniform(-8.0, 8.0);
            let b = rng.uniform(-1.0, 0.0);
            let x = rng.uniform(-1.0, 1.0);
            let t = rng.uniform(0.0, 2.0);
            let e = math::exp(b * t);
            let u_t = 0.5 * b * e * (x * x - 1.0) * math::sin(a * x);
            let u_xx = 0.5
                * e
                * (2.0 * math::sin(a * x) + 4.0 * a * x * math::cos(a * x)
                    - a * a * (x * x - 1.0) * math::sin(a * x));
            let f = forcing_eval(&Forcing::Exp3 { alpha: a, beta: b }, 1.0, &[x], t);
            assert!((u_t - u_xx - f).abs() < 1e-10, "residual {}", u_t - u_xx - f);
        }
    }

    #[test]
    fn spiral_zero_beyond_outer_radius() {
        let f = Forcing::Spiral {
            center: (2.0, 2.0),
            amplitude: 1.0,
            pitch: 0.1,
            half_width: 0.08,
        };
        let r_max = 0.1 * 4.0 * core::f64::consts::PI + 0.08;
        let v = forcing_eval(&f, 0.1, &[2.0 + r_max + 0.01, 2.0], 0.3);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn spiral_hits_arm_and_is_static() {
        let f = Forcing::Spiral {
            center: (2.0, 2.0),
            amplitude: 1.3,
            pitch: 0.1,
            half_width: 0.05,
        };
        // theta = 2pi along the +x direction: r = 0.2pi
        let x = [2.0 + 0.1 * 2.0 * core::f64::consts::PI, 2.0];
        assert_eq!(forcing_eval(&f, 0.1, &x, 0.0), 1.3);
        assert_eq!(forcing_eval(&f, 0.1, &x, 0.9), 1.3);
        // halfway between arms (theta = pi offset): r = 0.1*(2pi + pi) off-arm
        let between = [2.0 + 0.25 * core::f64::consts::PI, 2.0];
        assert_eq!(forcing_eval(&f, 0.1, &between, 0.0), 0.0);
    }

    #[test]
    fn zero_init_zero_forcing_stays_zero() {
        let dom = Domain::new_1d((-1.0, 1.0), (0.0, 2.0));
        let u = solve_heat_1d(1e-3, &dom, 16, 40, &vec![0.0; 16], &Forcing::None).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn max_principle_unforced() {
        // nonnegative bump, zero boundary: spatial max never increases
        let dom = Domain::new_1d((0.0, 1.0), (0.0, 0.5));
        let nx = 31;
        let xs = linspace(0.0, 1.0, nx);
        let init: Vec<f64> = xs
            .iter()
            .map(|&x| if (x - 0.5).abs() < 0.2 { 1.0 } else { 0.0 })
            .collect();
        let u = solve_heat_1d(0.1, &dom, nx, 20, &init, &Forcing::None).unwrap();
        let mut prev = f64::INFINITY;
        for frame in u.chunks(nx) {
            let m = frame.iter().cloned().fold(f64::MIN, f64::max);
            assert!(m <= prev + 1e-12);
            assert!(frame.iter().all(|&v| v >= -1e-12));
            prev = m;
        }
    }

    #[test]
    fn solver_matches_exp3_analytic() {
        // coarse-grid solve against the closed form; halving dx divides the
        // error by roughly four
        let dom = Domain::new_1d((-1.0, 1.0), (0.0, 2.0));
        let mut rng = crate::rng::CounterRng::new(5);
        for _ in 0..3 {
            let a = rng.uniform(-8.0, 8.0);
            let b = rng.uniform(-1.0, 0.0);
            let forcing = Forcing::Exp3 { alpha: a, beta: b };
            let mut errs = Vec::new();
            for &nx in &[60usize, 119] {
                let xs = linspace(-1.0, 1.0, nx);
                let nt = 41;
                let init: Vec<f64> = xs.iter().map(|&x| exact_solution_exp3(a, b, x, 0.0)).collect();
                let u = solve_heat_1d(1.0, &dom, nx, nt, &init, &forcing).unwrap();
                let ts = linspace(0.0, 2.0, nt);
                let truth: Vec<f64> = ts
                    .iter()
                    .flat_map(|&t| xs.iter().map(move |&x| exact_solution_exp3(a, b, x, t)))
                    .collect();
                errs.push(rel_l2(&u, &truth));
            }
            assert!(errs[0] < 1e-2, "coarse error {} (a={a}, b={b})", errs[0]);
            let ratio = errs[0] / errs[1];
            assert!(
                (3.0..=5.0).contains(&ratio),
                "refinement ratio {ratio} (a={a}, b={b})"
            );
        }
    }

    #[test]
    fn boundary_held_at_initial_values() {
        // exp3 has u = 0.5 on both ends; the solver keeps it there
        let dom = Domain::new_1d((-1.0, 1.0), (0.0, 2.0));
        let (a, b) = (4.0, -0.5);
        let nx = 40;
        let xs = linspace(-1.0, 1.0, nx);
        let init: Vec<f64> = xs.iter().map(|&x| exact_solution_exp3(a, b, x, 0.0)).collect();
        let forcing = Forcing::Exp3 { alpha: a, beta: b };
        let u = solve_heat_1d(1.0, &dom, nx, 10, &init, &forcing).unwrap();
        for frame in u.chunks(nx) {
            assert_eq!(frame[0], 0.5);
            assert_eq!(frame[nx - 1], 0.5);
        }
    }

    #[test]
    fn solve_2d_zero_stays_zero() {
        let dom = Domain::new_2d((0.0, 4.0), (0.0, 4.0), (0.0, 1.0));
        let u = solve_heat_2d(0.15, &dom, 12, 12, 5, &vec![0.0; 144], &Forcing::None).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solve_2d_mass_non_increasing_interior_bump() {
        let dom = Domain::new_2d((0.0, 4.0), (0.0, 4.0), (0.0, 1.0));
        let n = 21;
        let g = linspace(0.0, 4.0, n);
        let mut init = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dx = g[i] - 2.0;
                let dy = g[j] - 2.0;
                if dx * dx + dy * dy <= 0.6 * 0.6 {
                    init[i * n + j] = 1.0;
                }
            }
        }
        let u = solve_heat_2d(0.15, &dom, n, n, 10, &init, &Forcing::None).unwrap();
        let mut prev = f64::INFINITY;
        for frame in u.chunks(n * n) {
            let mass: f64 = frame.iter().sum();
            assert!(mass <= prev + 1e-9, "mass grew: {mass} > {prev}");
            prev = mass;
        }
    }

    #[test]
    fn solve_2d_rotation_symmetry() {
        // grid-centered disk: solution symmetric under 90-degree rotation
        let dom = Domain::new_2d((0.0, 4.0), (0.0, 4.0), (0.0, 1.0));
        let n = 25;
        let g = linspace(0.0, 4.0, n);
        let mut init = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dx = g[i] - 2.0;
                let dy = g[j] - 2.0;
                if dx * dx + dy * dy <= 0.8 * 0.8 {
                    init[i * n + j] = 1.0;
                }
            }
        }
        let u = solve_heat_2d(0.15, &dom, n, n, 8, &init, &Forcing::None).unwrap();
        let last = &u[(8 - 1) * n * n..];
        for i in 0..n {
            for j in 0..n {
                let rotated = last[j * n + (n - 1 - i)];
                assert!(
                    (last[i * n + j] - rotated).abs() < 1e-10,
                    "asymmetry at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn stability_number_respected() {
        // HR diff2d case needs substeps: D=0.15, 72 nodes on [0,4], 50 frames
        let dt_out = 1.0 / 49.0;
        let dx = 4.0 / 71.0;
        let k = substeps(0.15, dt_out, 2.0 / (dx * dx));
        let r_sum = 0.15 * (dt_out / k as f64) * 2.0 / (dx * dx);
        assert!(r_sum <= 0.5 + 1e-12, "r_sum {r_sum} with k {k}");
        assert!(k > 1);
    }

    #[test]
    fn bad_args_rejected() {
        let dom = Domain::new_1d((0.0, 1.0), (0.0, 1.0));
        assert!(solve_heat_1d(0.1, &dom, 2, 5, &[0.0; 2], &Forcing::None).is_err());
        assert!(solve_heat_1d(0.1, &dom, 8, 5, &[0.0; 7], &Forcing::None).is_err());
        assert!(solve_heat_1d(-0.1, &dom, 8, 5, &[0.0; 8], &Forcing::None).is_err());
        assert!(solve_heat_1d(f64::NAN, &dom, 8, 5, &[0.0; 8], &Forcing::None).is_err());
    }
}
