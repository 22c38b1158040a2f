use nalgebra::DMatrix;

const DEGREE: usize = 3;

/// 4-point Gauss–Legendre nodes and weights on [-1, 1]; exact to degree 7.
const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Cubic B-splines on [0,1] with a clamped, uniformly spaced knot vector.
///
/// The space contains every cubic spline with the interior breakpoints and
/// imposes no boundary conditions, so a Galerkin discretisation in it leaves
/// the natural boundary conditions of a variational problem to the weak form.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    dim: usize,
    knots: Vec<f64>,
}

impl SplineSpace {
    /// `dim` must be at least 4 (a single cubic polynomial piece).
    pub fn new(dim: usize) -> Self {
        assert!(dim > DEGREE, "cubic spline space needs dim >= 4");
        let spans = dim - DEGREE;
        let mut knots = vec![0.0; DEGREE];
        knots.extend((0..=spans).map(|i| if i == spans { 1.0 } else { i as f64 / spans as f64 }));
        knots.extend([1.0; DEGREE]);
        SplineSpace { dim, knots }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Distinct breakpoints `0 = x₀ < … < x_m = 1`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots[DEGREE..self.knots.len() - DEGREE]
    }

    fn find_span(&self, x: f64) -> usize {
        let spans = self.dim - DEGREE;
        let idx = (x.clamp(0.0, 1.0) * spans as f64).floor() as usize;
        let mut span = DEGREE + idx.min(spans - 1);
        // Guard against the floor landing one interval off near breakpoints.
        while span > DEGREE && x < self.knots[span] {
            span -= 1;
        }
        while span < self.dim - 1 && x >= self.knots[span + 1] {
            span += 1;
        }
        span
    }

    /// Values and first two derivatives of the four basis functions that are
    /// nonzero at `x`. Returns the index of the first of them and
    /// `ders[k][j]` = k-th derivative of basis `first + j`.
    pub fn local_derivatives(&self, x: f64) -> (usize, [[f64; 4]; 3]) {
        let p = DEGREE;
        let span = self.find_span(x);
        let u = &self.knots;
        let mut ndu = [[0.0f64; 4]; 4];
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = [[0.0f64; 4]; 3];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let n = 2usize;
        let mut a = [[0.0f64; 4]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        (span - p, ders)
    }

    /// Matrix of the `deriv`-th derivative of every basis function at `points`
    /// (rows: points, columns: basis functions).
    pub fn eval_matrix(&self, points: &[f64], deriv: usize) -> DMatrix<f64> {
        assert!(deriv <= 2);
        let mut m = DMatrix::zeros(points.len(), self.dim);
        for (i, &x) in points.iter().enumerate() {
            let (first, ders) = self.local_derivatives(x);
            for j in 0..=DEGREE {
                m[(i, first + j)] = ders[deriv][j];
            }
        }
        m
    }

    /// Evaluate the `deriv`-th derivative of `Σ coeffs[j] ψ_j` at `x`.
    pub fn eval(&self, coeffs: &[f64], x: f64, deriv: usize) -> f64 {
        assert!(deriv <= 2);
        debug_assert_eq!(coeffs.len(), self.dim);
        let (first, ders) = self.local_derivatives(x);
        (0..=DEGREE).map(|j| coeffs[first + j] * ders[deriv][j]).sum()
    }

    /// Gram matrix `∫ ψ_i^{(d)} ψ_j^{(d)}`, assembled span by span with a rule
    /// that is exact for the polynomial integrands.
    pub fn derivative_gram(&self, deriv: usize) -> DMatrix<f64> {
        assert!(deriv <= 2);
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for w in self.breakpoints().windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (node, weight) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let x = mid + half * node;
                let (first, ders) = self.local_derivatives(x);
                for i in 0..=DEGREE {
                    for j in 0..=DEGREE {
                        g[(first + i, first + j)] += half * weight * ders[deriv][i] * ders[deriv][j];
                    }
                }
            }
        }
        g
    }
}
