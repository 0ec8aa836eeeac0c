//! Gauss-Legendre quadrature nodes and weights on [0, 1].

/// Nodes and weights of the `q`-point Gauss-Legendre rule shifted to [0, 1].
///
/// Newton iteration on Legendre polynomials; deterministic and accurate to
/// machine precision for the small orders used here.
pub fn nodes_weights(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1 && q <= 64);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for k in 0..q {
        // initial guess (Chebyshev-like) on [-1, 1]
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(q, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(q, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // shift to [0, 1]; reverse order so nodes ascend
        nodes[q - 1 - k] = 0.5 * (x + 1.0);
        weights[q - 1 - k] = 0.5 * w;
    }
    (nodes, weights)
}

/// Legendre polynomial `P_q` and derivative at `x` by recurrence.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=q {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The scalar rational approximation `r_{p,q}(x) ≈ ln x` built from `p`
/// square-root scalings and the `q`-point rule: useful as a test oracle.
pub fn log_approx(p: u32, q: usize, x: f64) -> f64 {
    let (t, w) = nodes_weights(q);
    let y = x.powf(1.0 / f64::from(1u32 << p));
    let mut acc = 0.0;
    for j in 0..q {
        acc += w[j] * (y - 1.0) / (t[j] * (y - 1.0) + 1.0);
    }
    f64::from(1u32 << p) * acc
}
