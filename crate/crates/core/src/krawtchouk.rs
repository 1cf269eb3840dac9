//! Krawtchouk polynomials and the orthonormal bases built from them.
//!
//! The classical polynomial `K_n(x; p, N-1)` is defined on the support
//! `x = 0..N-1` for orders `n = 0..N-1`. Weighting each polynomial by
//! `sqrt(w(x) / rho(n))` yields an orthonormal family, which is what the
//! moment transforms and the 8x8 convolution filters are built from.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::zigzag::ZIGZAG_8X8;

/// Side length of the separable filters used by the convolution layers.
pub const BLOCK: usize = 8;
/// Number of 2-D basis filters for an 8x8 block.
pub const BANDS: usize = BLOCK * BLOCK;

/// Binomial parameter `p` and support size `N` of a Krawtchouk family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrawtchoukParams {
    p: f64,
    n: usize,
}

impl KrawtchoukParams {
    pub fn new(p: f64, n: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "binomial parameter p must lie in (0, 1), got {p}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "support size N must be at least 2, got {n}"
            )));
        }
        Ok(Self { p, n })
    }

    /// `p = 0.5`, the symmetric family.
    pub fn symmetric(n: usize) -> Result<Self> {
        Self::new(0.5, n)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Support size `N`; indices run over `0..N`.
    pub fn size(&self) -> usize {
        self.n
    }

    /// The polynomial parameter `N - 1`.
    pub fn order_bound(&self) -> usize {
        self.n - 1
    }

    fn check_index(&self, what: &'static str, value: usize) -> Result<()> {
        if value >= self.n {
            return Err(Error::OutOfRange {
                what,
                value,
                max: self.n - 1,
            });
        }
        Ok(())
    }
}

/// Rising factorial `(a)_k = a (a+1) ... (a+k-1)`; `(a)_0 = 1`.
pub fn pochhammer(a: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (a + f64::from(i)))
}

/// Terminating Gauss series `2F1(-n, -x; -nm1; 1/p)`.
///
/// Summed term by term straight from the Pochhammer definition. It is
/// only meant for small supports, where it serves as an oracle for the
/// recurrence in [`krawtchouk_poly`].
pub fn hyp2f1_terminating(n: usize, x: usize, nm1: usize, p: f64) -> Result<f64> {
    if nm1 == 0 {
        return Err(Error::InvalidParameter("nm1 must be positive".into()));
    }
    if n > nm1 {
        return Err(Error::OutOfRange {
            what: "n",
            value: n,
            max: nm1,
        });
    }
    if x > nm1 {
        return Err(Error::OutOfRange {
            what: "x",
            value: x,
            max: nm1,
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "binomial parameter p must lie in (0, 1), got {p}"
        )));
    }
    let z = 1.0 / p;
    let mut sum = 0.0;
    for k in 0..=n.min(x) as u32 {
        let num = pochhammer(-(n as f64), k) * pochhammer(-(x as f64), k);
        let den = pochhammer(-(nm1 as f64), k) * pochhammer(1.0, k);
        sum += num / den * z.powi(k as i32);
    }
    Ok(sum)
}

/// Classical Krawtchouk polynomial `K_n(x; p, N-1)`, evaluated with the
/// three-term recurrence in `n`.
///
/// The recurrence loses digits once the degree passes the point (or its
/// mirror), so other `(n, x)` are first mapped there with the duality
/// `K_n(x; p) = K_x(n; p)` and the reflection
/// `K_n(N-1-x; p) = (-1)^n ((1-p)/p)^n K_n(x; 1-p)`.
pub fn krawtchouk_poly(n: usize, x: usize, params: &KrawtchoukParams) -> Result<f64> {
    params.check_index("n", n)?;
    params.check_index("x", x)?;
    let last = params.order_bound();
    let (mut n, mut x, mut p, mut factor) = (n, x, params.p, 1.0);
    loop {
        if n > x {
            std::mem::swap(&mut n, &mut x);
        } else if n > last - x {
            let ratio = (1.0 - p) / p;
            factor *= if n % 2 == 0 { 1.0 } else { -1.0 } * ratio.powi(n as i32);
            x = last - x;
            p = 1.0 - p;
        } else {
            break;
        }
    }
    Ok(factor * forward_recurrence(n, x, p, last as f64))
}

fn forward_recurrence(n: usize, x: usize, p: f64, big_n: f64) -> f64 {
    let xf = x as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 - xf / (p * big_n);
    for k in 1..n {
        let kf = k as f64;
        let next = ((p * (big_n - kf) + kf * (1.0 - p) - xf) * cur - kf * (1.0 - p) * prev)
            / (p * (big_n - kf));
        prev = cur;
        cur = next;
    }
    cur
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Binomial weight `w(x) = C(N-1, x) p^x (1-p)^(N-1-x)`.
pub fn weight(x: usize, params: &KrawtchoukParams) -> Result<f64> {
    params.check_index("x", x)?;
    let big_n = params.order_bound();
    let p = params.p;
    let ln_w = ln_binomial(big_n, x) + x as f64 * p.ln() + (big_n - x) as f64 * (1.0 - p).ln();
    Ok(ln_w.exp())
}

/// Squared norm `rho(n) = (-1)^n ((1-p)/p)^n n! / (-(N-1))_n`.
///
/// The sign factors cancel, leaving `((1-p)/p)^n / C(N-1, n)`.
pub fn norm_rho(n: usize, params: &KrawtchoukParams) -> Result<f64> {
    params.check_index("n", n)?;
    let p = params.p;
    let ln_rho = n as f64 * ((1.0 - p) / p).ln() - ln_binomial(params.order_bound(), n);
    Ok(ln_rho.exp())
}

/// Orthonormal matrix of weighted Krawtchouk polynomials; row `n`,
/// column `x` holds `K̄_n(x; p, N-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMatrix {
    entries: Array2<f64>,
    params: KrawtchoukParams,
}

impl PolynomialMatrix {
    pub fn new(params: KrawtchoukParams) -> Self {
        polynomial_matrix(&params)
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn params(&self) -> &KrawtchoukParams {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.params.n
    }

    /// Row `n`, i.e. `K̄_n(x)` for every `x`.
    pub fn row(&self, n: usize) -> ndarray::ArrayView1<'_, f64> {
        self.entries.row(n)
    }

    /// Largest absolute deviation of `M Mᵀ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.entries.dot(&self.entries.t());
        gram.indexed_iter()
            .map(|((r, c), v)| (v - if r == c { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the weighted polynomial matrix.
///
/// The recurrence runs on the weighted polynomials, so normalisation is
/// applied exactly once. Forward recurrence in `n` loses accuracy where a
/// column decays towards high orders, so only the region
/// `n <= min(x, N-1-x)` is taken from it. The rest follows from
/// self-duality `K̄_n(x) = K̄_x(n)` and the reflection
/// `K̄_n(x; p) = (-1)^n K̄_n(N-1-x; 1-p)`.
pub fn polynomial_matrix(params: &KrawtchoukParams) -> PolynomialMatrix {
    let size = params.n;
    let direct = weighted_recurrence(params.p, size);
    let mirrored = weighted_recurrence(1.0 - params.p, size);
    let entries = Array2::from_shape_fn((size, size), |(n, x)| {
        let (a, b) = (n.min(x), n.max(x));
        if a + b < size {
            direct[[a, b]]
        } else {
            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
            sign * mirrored[[size - 1 - b, a]]
        }
    });
    PolynomialMatrix {
        entries,
        params: *params,
    }
}

fn weighted_recurrence(p: f64, size: usize) -> Array2<f64> {
    let big_n = (size - 1) as f64;
    let q = 1.0 - p;
    let params = KrawtchoukParams { p, n: size };
    let mut m = Array2::<f64>::zeros((size, size));
    for x in 0..size {
        // Indices are in range by construction.
        m[[0, x]] = weight(x, &params).unwrap().sqrt();
    }
    let rho1 = q / (p * big_n);
    for x in 0..size {
        m[[1, x]] = (1.0 - x as f64 / (p * big_n)) * m[[0, x]] / rho1.sqrt();
    }
    for n in 1..size - 1 {
        let nf = n as f64;
        let a = 1.0 / (p * q * (nf + 1.0) * (big_n - nf)).sqrt();
        let b = (nf * (big_n - nf + 1.0) / ((nf + 1.0) * (big_n - nf))).sqrt();
        for x in 0..size {
            let xf = x as f64;
            m[[n + 1, x]] =
                a * (p * big_n - 2.0 * p * nf + nf - xf) * m[[n, x]] - b * m[[n - 1, x]];
        }
    }
    m
}

/// The 64 separable 8x8 basis filters in zig-zag order.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    filters: Vec<Array2<f64>>,
    order: Vec<(usize, usize)>,
    params: KrawtchoukParams,
}

impl BasisSet {
    pub fn new(params: KrawtchoukParams) -> Result<Self> {
        basis_set(&params)
    }

    /// Basis for `p` with the fixed 8x8 support.
    pub fn with_p(p: f64) -> Result<Self> {
        basis_set(&KrawtchoukParams::new(p, BLOCK)?)
    }

    pub fn filters(&self) -> &[Array2<f64>] {
        &self.filters
    }

    pub fn filter(&self, k: usize) -> &Array2<f64> {
        &self.filters[k]
    }

    /// `(i, j)` row/column polynomial orders of each filter.
    pub fn order(&self) -> &[(usize, usize)] {
        &self.order
    }

    pub fn params(&self) -> &KrawtchoukParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// One row per filter: `index,i,j,v00..v77`, values row-major.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;

        let mut out = String::from("index,i,j");
        for r in 0..BLOCK {
            for c in 0..BLOCK {
                let _ = write!(out, ",v{r}{c}");
            }
        }
        out.push('\n');
        for (k, (filter, &(i, j))) in self.filters.iter().zip(&self.order).enumerate() {
            let _ = write!(out, "{k},{i},{j}");
            for v in filter.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the 64 filters `w_ij = k_iᵀ k_j` for an 8-point family.
pub fn basis_set(params: &KrawtchoukParams) -> Result<BasisSet> {
    if params.n != BLOCK {
        return Err(Error::InvalidParameter(format!(
            "basis filters require N = {BLOCK}, got {}",
            params.n
        )));
    }
    let matrix = polynomial_matrix(params);
    let rows = matrix.entries();
    let filters = ZIGZAG_8X8
        .iter()
        .map(|&(i, j)| Array2::from_shape_fn((BLOCK, BLOCK), |(a, b)| rows[[i, a]] * rows[[j, b]]))
        .collect();
    Ok(BasisSet {
        filters,
        order: ZIGZAG_8X8.to_vec(),
        params: *params,
    })
}
