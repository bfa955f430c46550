//! Scalar functions on `[0, 1]` and their H¹ inner products.
//!
//! Parametric descriptors (polynomials, trigonometric and hyperbolic pairs,
//! sums of these) are integrated exactly by rewriting them as
//! exponential polynomials `Σ c_j x^{p_j} e^{w_j x}` with complex rates.
//! Sampled descriptors fall back to composite Simpson quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A real function on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionDescriptor {
    /// `Σ coefficients[i] · x^i`
    Polynomial { coefficients: Vec<f64> },
    /// `coefficients[0]·cos(frequency·x) + coefficients[1]·sin(frequency·x)`
    Trig { coefficients: [f64; 2], frequency: f64 },
    /// `coefficients[0]·cosh(rate·x) + coefficients[1]·sinh(rate·x)`
    Hyperbolic { coefficients: [f64; 2], rate: f64 },
    Sum { terms: Vec<FunctionDescriptor> },
    /// Values on the uniform grid `x_j = j / (len - 1)`.
    Sampled { values: Vec<f64> },
}

impl FunctionDescriptor {
    pub fn zero() -> Self {
        FunctionDescriptor::Polynomial {
            coefficients: vec![],
        }
    }

    pub fn constant(c: f64) -> Self {
        FunctionDescriptor::Polynomial {
            coefficients: vec![c],
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, 0)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval(x, 1)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.eval(x, 2)
    }

    /// `order`-th derivative at `x` (orders 0..=2 for sampled data).
    pub fn eval(&self, x: f64, order: u32) -> f64 {
        match self {
            FunctionDescriptor::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(order as usize)
                .map(|(i, &c)| {
                    let falling: f64 = (0..order).map(|k| (i as u32 - k) as f64).product();
                    c * falling * x.powi((i as u32 - order) as i32)
                })
                .sum(),
            FunctionDescriptor::Trig {
                coefficients: [a, b],
                frequency: s,
            } => {
                let (sin, cos) = (s * x).sin_cos();
                let v = match order % 4 {
                    0 => a * cos + b * sin,
                    1 => -a * sin + b * cos,
                    2 => -a * cos - b * sin,
                    _ => a * sin - b * cos,
                };
                v * s.powi(order as i32)
            }
            FunctionDescriptor::Hyperbolic {
                coefficients: [a, b],
                rate: k,
            } => {
                let (sh, ch) = ((k * x).sinh(), (k * x).cosh());
                let v = if order % 2 == 0 {
                    a * ch + b * sh
                } else {
                    a * sh + b * ch
                };
                v * k.powi(order as i32)
            }
            FunctionDescriptor::Sum { terms } => terms.iter().map(|t| t.eval(x, order)).sum(),
            FunctionDescriptor::Sampled { values } => sampled_eval(values, x, order),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            FunctionDescriptor::Polynomial { coefficients } => FunctionDescriptor::Polynomial {
                coefficients: coefficients.iter().map(|c| c * factor).collect(),
            },
            FunctionDescriptor::Trig {
                coefficients: [a, b],
                frequency,
            } => FunctionDescriptor::Trig {
                coefficients: [a * factor, b * factor],
                frequency: *frequency,
            },
            FunctionDescriptor::Hyperbolic {
                coefficients: [a, b],
                rate,
            } => FunctionDescriptor::Hyperbolic {
                coefficients: [a * factor, b * factor],
                rate: *rate,
            },
            FunctionDescriptor::Sum { terms } => FunctionDescriptor::Sum {
                terms: terms.iter().map(|t| t.scaled(factor)).collect(),
            },
            FunctionDescriptor::Sampled { values } => FunctionDescriptor::Sampled {
                values: values.iter().map(|v| v * factor).collect(),
            },
        }
    }

    /// Linear combination `Σ weights[i] · funcs[i]`, dropping zero weights.
    pub fn combination<'a>(
        parts: impl IntoIterator<Item = (f64, &'a FunctionDescriptor)>,
    ) -> FunctionDescriptor {
        let terms: Vec<_> = parts
            .into_iter()
            .filter(|(w, _)| *w != 0.0)
            .map(|(w, f)| f.scaled(w))
            .collect();
        match terms.len() {
            0 => FunctionDescriptor::zero(),
            1 => terms.into_iter().next().unwrap(),
            _ => FunctionDescriptor::Sum { terms },
        }
    }

    pub fn is_parametric(&self) -> bool {
        match self {
            FunctionDescriptor::Sampled { .. } => false,
            FunctionDescriptor::Sum { terms } => terms.iter().all(|t| t.is_parametric()),
            _ => true,
        }
    }

    pub(crate) fn to_exp_poly(&self) -> Option<ExpPoly> {
        let half = Complex64::new(0.5, 0.0);
        let mut out = ExpPoly::default();
        match self {
            FunctionDescriptor::Polynomial { coefficients } => {
                for (i, &c) in coefficients.iter().enumerate() {
                    if c != 0.0 {
                        out.push(Complex64::new(c, 0.0), i as u32, Complex64::new(0.0, 0.0));
                    }
                }
            }
            FunctionDescriptor::Trig {
                coefficients: [a, b],
                frequency: s,
            } => {
                if *s == 0.0 {
                    out.push(Complex64::new(*a, 0.0), 0, Complex64::new(0.0, 0.0));
                } else {
                    // a cos + b sin = e^{isx}(a - ib)/2 + e^{-isx}(a + ib)/2
                    let w = Complex64::new(0.0, *s);
                    out.push(Complex64::new(*a, -*b) * half, 0, w);
                    out.push(Complex64::new(*a, *b) * half, 0, -w);
                }
            }
            FunctionDescriptor::Hyperbolic {
                coefficients: [a, b],
                rate: k,
            } => {
                if *k == 0.0 {
                    out.push(Complex64::new(*a, 0.0), 0, Complex64::new(0.0, 0.0));
                } else {
                    let w = Complex64::new(*k, 0.0);
                    out.push(Complex64::new((a + b) * 0.5, 0.0), 0, w);
                    out.push(Complex64::new((a - b) * 0.5, 0.0), 0, -w);
                }
            }
            FunctionDescriptor::Sum { terms } => {
                for t in terms {
                    out.terms.extend(t.to_exp_poly()?.terms);
                }
            }
            FunctionDescriptor::Sampled { .. } => return None,
        }
        Some(out)
    }
}

/// `⟨f, g⟩_{H¹} = ∫ f g + ∫ f' g'` over `[0, 1]`.
///
/// Exact when both operands are parametric, composite Simpson otherwise.
pub fn h1_inner(f: &FunctionDescriptor, g: &FunctionDescriptor) -> f64 {
    match (f.to_exp_poly(), g.to_exp_poly()) {
        (Some(pf), Some(pg)) => {
            let l2 = pf.mul(&pg).integral01();
            let h1 = pf.derivative().mul(&pg.derivative()).integral01();
            (l2 + h1).re
        }
        _ => sampled_h1_inner(f, g),
    }
}

/// `∫_0^1 f g`.
pub fn l2_inner(f: &FunctionDescriptor, g: &FunctionDescriptor) -> f64 {
    match (f.to_exp_poly(), g.to_exp_poly()) {
        (Some(pf), Some(pg)) => pf.mul(&pg).integral01().re,
        _ => {
            let n = quadrature_points(f, g);
            let xs = grid(n);
            let prod: Vec<f64> = xs.iter().map(|&x| f.value(x) * g.value(x)).collect();
            simpson(&prod)
        }
    }
}

fn quadrature_points(f: &FunctionDescriptor, g: &FunctionDescriptor) -> usize {
    let n = sampled_len(f).max(sampled_len(g)).max(2001);
    // Simpson wants an even number of intervals.
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

fn sampled_len(f: &FunctionDescriptor) -> usize {
    match f {
        FunctionDescriptor::Sampled { values } => values.len(),
        FunctionDescriptor::Sum { terms } => terms.iter().map(sampled_len).max().unwrap_or(0),
        _ => 0,
    }
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 / (n - 1) as f64).collect()
}

fn sampled_h1_inner(f: &FunctionDescriptor, g: &FunctionDescriptor) -> f64 {
    let n = quadrature_points(f, g);
    let xs = grid(n);
    let integrand: Vec<f64> = xs
        .iter()
        .map(|&x| f.value(x) * g.value(x) + f.derivative(x) * g.derivative(x))
        .collect();
    simpson(&integrand)
}

/// Composite Simpson on a uniform grid over `[0, 1]`; trapezoid on the last
/// interval when the interval count is odd.
pub(crate) fn simpson(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2, "need at least two samples");
    let h = 1.0 / (n - 1) as f64;
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut acc = 0.0;
    let mut i = 0;
    while i < even {
        acc += values[i] + 4.0 * values[i + 1] + values[i + 2];
        i += 2;
    }
    let mut total = acc * h / 3.0;
    if even < intervals {
        total += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    total
}

fn sampled_eval(values: &[f64], x: f64, order: u32) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return if order == 0 { values[0] } else { 0.0 };
    }
    let h = 1.0 / (n - 1) as f64;
    let pos = (x.clamp(0.0, 1.0) / h).min((n - 1) as f64);
    let j = (pos.floor() as usize).min(n - 2);
    let t = pos - j as f64;
    match order {
        0 => values[j] * (1.0 - t) + values[j + 1] * t,
        1 => {
            let d = |i: usize| node_derivative(values, i, h);
            d(j) * (1.0 - t) + d(j + 1) * t
        }
        2 if n >= 3 => {
            let k = j.clamp(1, n - 2);
            (values[k - 1] - 2.0 * values[k] + values[k + 1]) / (h * h)
        }
        _ => 0.0,
    }
}

/// Second-order finite-difference derivative at node `i` (one-sided at the ends).
fn node_derivative(values: &[f64], i: usize, h: f64) -> f64 {
    let n = values.len();
    if n < 3 {
        return (values[n - 1] - values[0]) / h;
    }
    if i == 0 {
        (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h)
    } else {
        (values[i + 1] - values[i - 1]) / (2.0 * h)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ExpTerm {
    coef: Complex64,
    power: u32,
    rate: Complex64,
}

/// `Σ coef · x^power · e^{rate·x}`
#[derive(Debug, Clone, Default)]
pub(crate) struct ExpPoly {
    terms: Vec<ExpTerm>,
}

impl ExpPoly {
    fn push(&mut self, coef: Complex64, power: u32, rate: Complex64) {
        self.terms.push(ExpTerm { coef, power, rate });
    }

    pub(crate) fn derivative(&self) -> ExpPoly {
        let mut out = ExpPoly::default();
        for t in &self.terms {
            if t.power > 0 {
                out.push(t.coef * t.power as f64, t.power - 1, t.rate);
            }
            if t.rate != Complex64::new(0.0, 0.0) {
                out.push(t.coef * t.rate, t.power, t.rate);
            }
        }
        out
    }

    pub(crate) fn mul(&self, other: &ExpPoly) -> ExpPoly {
        let mut out = ExpPoly::default();
        for a in &self.terms {
            for b in &other.terms {
                out.push(a.coef * b.coef, a.power + b.power, a.rate + b.rate);
            }
        }
        out
    }

    pub(crate) fn integral01(&self) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.coef * exp_moment(t.power, t.rate))
            .sum()
    }
}

/// `∫_0^1 x^p e^{w x} dx`.
fn exp_moment(p: u32, w: Complex64) -> Complex64 {
    let threshold = (p as f64 + 2.0).max(2.0);
    if w.norm() <= threshold {
        // Entire series Σ_k w^k / (k! (p + k + 1)).
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(1.0 / (p as f64 + 1.0), 0.0);
        for k in 1..200 {
            term *= w / k as f64;
            let add = term / (p as f64 + k as f64 + 1.0);
            sum += add;
            if add.norm() <= 1e-18 * sum.norm().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // Upward recursion I_p = (e^w - p I_{p-1}) / w, stable for |w| > p.
        let ew = w.exp();
        let mut acc = (ew - 1.0) / w;
        for q in 1..=p {
            acc = (ew - acc * q as f64) / w;
        }
        acc
    }
}
